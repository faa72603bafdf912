//! Image datasets: IDX ingestion, train/fitness split, batching and
//! synthetic desk-scale generators.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::network::{Shape3, Tensor};
use crate::rng::stream;
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// `N x H x W x C` images scaled to `[0, 1]` with one label per image.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Tensor<f32>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(images: Tensor<f32>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        let n = match *images.shape() {
            [n, h, w, c] if h > 0 && w > 0 && c > 0 => n,
            ref s => return Err(Error::Shape(format!("images must be NHWC, got {s:?}"))),
        };
        if labels.len() != n {
            return Err(Error::CountMismatch {
                images: n,
                labels: labels.len(),
            });
        }
        if let Some(y) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Format(format!("label {y} outside [0, {num_classes})")));
        }
        if images.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Format("pixel values must lie in [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn images(&self) -> &Tensor<f32> {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn sample_shape(&self) -> Shape3 {
        let s = self.images.shape();
        Shape3::new(s[1], s[2], s[3])
    }

    /// Images and labels at `indices`, in that order.
    pub fn gather(&self, indices: &[usize]) -> (Tensor<f32>, Vec<usize>) {
        let per = self.sample_shape().len();
        let src = self.images.data();
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            data.extend_from_slice(&src[i * per..(i + 1) * per]);
        }
        let s = self.sample_shape();
        let images = Tensor::new(vec![indices.len(), s.height, s.width, s.channels], data)
            .expect("gathered whole samples");
        (images, indices.iter().map(|&i| self.labels[i]).collect())
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let (images, labels) = self.gather(indices);
        Dataset {
            images,
            labels,
            num_classes: self.num_classes,
        }
    }

    /// Samples of `self` followed by samples of `other`.
    pub fn concat(&self, other: &Dataset) -> Result<Dataset> {
        if self.sample_shape() != other.sample_shape() {
            return Err(Error::Shape("datasets have different image shapes".into()));
        }
        let s = self.sample_shape();
        let mut data = self.images.data().to_vec();
        data.extend_from_slice(other.images.data());
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Dataset::new(
            Tensor::new(vec![labels.len(), s.height, s.width, s.channels], data)?,
            labels,
            self.num_classes.max(other.num_classes),
        )
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Format("truncated IDX header".into()))
}

/// Parses an IDX3 image file into `(n, height, width, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let h = be_u32(bytes, 8)? as usize;
    let w = be_u32(bytes, 12)? as usize;
    let body = &bytes[16..];
    if h == 0 || w == 0 || body.len() != n * h * w {
        return Err(Error::Format(format!(
            "image body has {} bytes, header declares {n}x{h}x{w}",
            body.len()
        )));
    }
    Ok((n, h, w, body))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!(
            "label body has {} bytes, header declares {n}",
            body.len()
        )));
    }
    Ok(body)
}

/// Builds a dataset from raw IDX bytes; the class count is one past the
/// largest label.
pub fn dataset_from_idx(images: &[u8], labels: &[u8]) -> Result<Dataset> {
    let (n, h, w, pixels) = parse_idx_images(images)?;
    let labels = parse_idx_labels(labels)?;
    if labels.len() != n {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.len(),
        });
    }
    let data = pixels.iter().map(|&p| p as f32 / 255.0).collect();
    let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
    let classes = labels.iter().max().map_or(1, |m| m + 1);
    Dataset::new(Tensor::new(vec![n, h, w, 1], data)?, labels, classes)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| fs::read(p).map_err(|e| Error::io(p, e));
    let images = read(images_path.as_ref())?;
    let labels = read(labels_path.as_ref())?;
    dataset_from_idx(&images, &labels)
}

/// Encodes single-channel datasets as IDX image and label bytes.
pub fn to_idx(d: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let s = d.sample_shape();
    if s.channels != 1 {
        return Err(Error::Format("IDX export supports one channel only".into()));
    }
    if d.num_classes > 256 {
        return Err(Error::Format("IDX labels are single bytes".into()));
    }
    let mut images = Vec::with_capacity(16 + d.images.len());
    for v in [IDX_IMAGES_MAGIC, d.len() as u32, s.height as u32, s.width as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(d.images.data().iter().map(|&v| (v * 255.0).round() as u8));
    let mut labels = Vec::with_capacity(8 + d.len());
    for v in [IDX_LABELS_MAGIC, d.len() as u32] {
        labels.extend_from_slice(&v.to_be_bytes());
    }
    labels.extend(d.labels.iter().map(|&l| l as u8));
    Ok((images, labels))
}

pub fn write_idx(d: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let (images, labels) = to_idx(d)?;
    let write = |p: &Path, b: &[u8]| fs::write(p, b).map_err(|e| Error::io(p, e));
    write(images_path.as_ref(), &images)?;
    write(labels_path.as_ref(), &labels)
}

/// Disjoint `(train, fitness)` index sets; the fitness set holds
/// `round(fraction * n)` uniformly chosen indices. Both are sorted.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!("split fraction {fraction} not in (0, 1)")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, &[]));
    let k = (fraction * n as f64).round() as usize;
    let mut fitness = order[..k].to_vec();
    let mut train = order[k..].to_vec();
    fitness.sort_unstable();
    train.sort_unstable();
    Ok((train, fitness))
}

pub fn split_train_fitness(d: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, fitness) = split_indices(d.len(), fraction, seed)?;
    Ok((d.subset(&train), d.subset(&fitness)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BatchMode {
    /// Keep the final partial batch.
    Train,
    /// Drop the final partial batch.
    Eval,
}

/// Iterator over `(images, labels)` batches.
pub struct Batches<'a> {
    data: &'a Dataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    mode: BatchMode,
}

impl Iterator for Batches<'_> {
    type Item = (Tensor<f32>, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        let left = self.order.len() - self.pos;
        let take = match self.mode {
            BatchMode::Train if left > 0 => left.min(self.batch_size),
            BatchMode::Eval if left >= self.batch_size => self.batch_size,
            _ => return None,
        };
        let idx = &self.order[self.pos..self.pos + take];
        self.pos += take;
        Some(self.data.gather(idx))
    }
}

/// Batches in storage order, or in a permutation drawn from `shuffle_seed`.
pub fn batch_iter(d: &Dataset, batch_size: usize, mode: BatchMode, shuffle_seed: Option<u64>) -> Batches<'_> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..d.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut stream(seed, &[]));
    }
    Batches {
        data: d,
        order,
        pos: 0,
        batch_size,
        mode,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    /// Two well-separated Gaussian blobs with light pixel noise.
    SeparableBlobs,
    /// Hollow axis-aligned rectangles (label 1) against straight strokes at any angle (label 0).
    RectangleToy,
}

/// Generates a two-class `n x size x size x 1` dataset. Pixels are whole
/// multiples of 1/255, so the dataset survives an IDX round trip exactly.
pub fn make_synthetic(kind: SyntheticKind, n: usize, size: usize, seed: u64) -> Result<Dataset> {
    if n < 2 || size < 4 {
        return Err(Error::Config(format!(
            "synthetic data needs n >= 2 and size >= 4, got n={n} size={size}"
        )));
    }
    let mut rng = stream(seed, &[]);
    let mut labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    labels.shuffle(&mut rng);
    let mut pixels = Vec::with_capacity(n * size * size);
    for &label in &labels {
        let img = match kind {
            SyntheticKind::SeparableBlobs => blob_image(label, size, &mut rng),
            SyntheticKind::RectangleToy if label == 1 => rectangle_image(size, &mut rng),
            SyntheticKind::RectangleToy => segments_image(size, &mut rng),
        };

        pixels.extend(img.into_iter().map(|v| f32::from(v) / 255.0));
    }
    Dataset::new(Tensor::new(vec![n, size, size, 1], pixels)?, labels, 2)
}

const BLOB_NOISE: f64 = 0.05;

fn blob_image<R: Rng>(label: usize, size: usize, rng: &mut R) -> Vec<u8> {
    let s = size as f64;
    let centre = if label == 0 { s * 0.25 } else { s * 0.75 };
    let width = s / 6.0;
    let noise = Normal::new(0.0, BLOB_NOISE).expect("valid");
    let mut img = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let d2 = (y as f64 + 0.5 - centre).powi(2) + (x as f64 + 0.5 - centre).powi(2);
            let v = (-d2 / (2.0 * width * width)).exp() + noise.sample(rng);
            img.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    img
}

fn rectangle_image<R: Rng>(size: usize, rng: &mut R) -> Vec<u8> {
    let mut img = vec![0u8; size * size];
    let h = rng.random_range(3..=size);
    let w = rng.random_range(3..=size);
    let y0 = rng.random_range(0..=size - h);
    let x0 = rng.random_range(0..=size - w);
    let (y1, x1) = (y0 + h - 1, x0 + w - 1);
    for x in x0..=x1 {
        img[y0 * size + x] = 255;
        img[y1 * size + x] = 255;
    }
    for y in y0..=y1 {
        img[y * size + x0] = 255;
        img[y * size + x1] = 255;
    }
    img
}

/// Two or three straight strokes between random endpoints, at any angle.
fn segments_image<R: Rng>(size: usize, rng: &mut R) -> Vec<u8> {
    let mut img = vec![0u8; size * size];
    for _ in 0..rng.random_range(2..=3) {
        let (y0, x0, y1, x1) = loop {
            let p: [i64; 4] = std::array::from_fn(|_| rng.random_range(0..size as i64));
            if (p[0] - p[2]).abs().max((p[1] - p[3]).abs()) >= 2 {
                break (p[0], p[1], p[2], p[3]);
            }
        };
        let steps = (y1 - y0).abs().max((x1 - x0).abs());
        for t in 0..=steps {
            let f = t as f64 / steps as f64;
            let y = (y0 as f64 + f * (y1 - y0) as f64).round() as usize;
            let x = (x0 as f64 + f * (x1 - x0) as f64).round() as usize;
            img[y * size + x] = 255;
        }
    }
    img
}
