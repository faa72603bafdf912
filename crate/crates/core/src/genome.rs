//! Gene encoding, random initialization, parameter counting and decoding.
//!
//! A [`Chromosome`] is a head of convolution/pooling genes that always starts
//! with a convolution, followed by a non-empty tail of fully connected genes.
//! Convolution and fully connected genes carry the mean and standard deviation
//! of the Gaussian their weights are drawn from.
//!
//! # Text record
//!
//! Chromosomes serialize to one gene per line, kind first, then the encoded
//! fields in a fixed order:
//!
//! ```text
//! conv <filter_w> <filter_h> <feature_maps> <stride_w> <stride_h> <SAME|VALID> <std> <mean>
//! pool <kernel_w> <kernel_h> <stride_w> <stride_h> <MAX|AVG>
//! fc <neurons> <std> <mean>
//! ```
//!
//! Reals are written in shortest round-trip form, so parsing a record yields
//! bit-identical genes. Blank lines and lines starting with `#` are ignored.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::fitness::FitnessRecord;
pub use crate::network::spec::{ConvType, Init, LayerSpec, NetworkSpec, PoolType, Shape3};
use crate::{Error, Result};

/// Closed interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Interval<T>(pub T, pub T);

impl<T: PartialOrd + Copy> Interval<T> {
    pub fn lo(&self) -> T {
        self.0
    }

    pub fn hi(&self) -> T {
        self.1
    }

    pub fn contains(&self, v: T) -> bool {
        self.0 <= v && v <= self.1
    }
}

/// Search-space bounds for every encoded field plus the part lengths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneBounds {
    pub filter_size: Interval<usize>,
    pub kernel_size: Interval<usize>,
    pub feature_maps: Interval<usize>,
    pub neurons: Interval<usize>,
    pub mean_range: Interval<f64>,
    pub std_range: Interval<f64>,
    /// Longest allowed convolution/pooling head.
    pub max_conv_pool_layers: usize,
    /// Longest allowed fully connected tail.
    pub max_fc_layers: usize,
}

impl Default for GeneBounds {
    fn default() -> Self {
        Self {
            filter_size: Interval(1, 7),
            kernel_size: Interval(1, 4),
            feature_maps: Interval(1, 64),
            neurons: Interval(1, 512),
            mean_range: Interval(-0.5, 0.5),
            std_range: Interval(0.01, 0.5),
            max_conv_pool_layers: 5,
            max_fc_layers: 5,
        }
    }
}

impl GeneBounds {
    pub fn validate(&self) -> Result<()> {
        let ints = [
            ("filter_size", self.filter_size),
            ("kernel_size", self.kernel_size),
            ("feature_maps", self.feature_maps),
            ("neurons", self.neurons),
        ];
        for (name, r) in ints {
            if r.lo() < 1 || r.lo() > r.hi() {
                return Err(Error::Config(format!(
                    "{name} must satisfy 1 <= lo <= hi, got [{}, {}]",
                    r.lo(),
                    r.hi()
                )));
            }
        }
        let Interval(mlo, mhi) = self.mean_range;
        if !(mlo.is_finite() && mhi.is_finite() && mlo <= mhi) {
            return Err(Error::Config(format!("bad mean_range [{mlo}, {mhi}]")));
        }
        let Interval(slo, shi) = self.std_range;
        if !(slo.is_finite() && shi.is_finite() && slo > 0.0 && slo <= shi) {
            return Err(Error::Config(format!(
                "std_range must satisfy 0 < lo <= hi, got [{slo}, {shi}]"
            )));
        }
        if self.max_conv_pool_layers < 1 || self.max_fc_layers < 1 {
            return Err(Error::Config("part lengths must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGene {
    pub filter_size: usize,
    pub num_feature_maps: usize,
    pub stride: usize,
    pub conv_type: ConvType,
    pub weight_std: f64,
    pub weight_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolGene {
    pub kernel_size: usize,
    pub stride: usize,
    pub pool_type: PoolType,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FcGene {
    pub num_neurons: usize,
    pub weight_std: f64,
    pub weight_mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerGene {
    Conv(ConvGene),
    Pool(PoolGene),
    Fc(FcGene),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneKind {
    Conv,
    Pool,
    Fc,
}

impl LayerGene {
    pub fn kind(&self) -> GeneKind {
        match self {
            LayerGene::Conv(_) => GeneKind::Conv,
            LayerGene::Pool(_) => GeneKind::Pool,
            LayerGene::Fc(_) => GeneKind::Fc,
        }
    }

    /// Checks the gene's fields against `bounds`.
    pub fn check(&self, bounds: &GeneBounds) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidChromosome(what));
        match self {
            LayerGene::Conv(g) => {
                if !bounds.filter_size.contains(g.filter_size) {
                    return bad(format!("filter size {} out of bounds", g.filter_size));
                }
                if !bounds.feature_maps.contains(g.num_feature_maps) {
                    return bad(format!("{} feature maps out of bounds", g.num_feature_maps));
                }
                if g.stride < 1 {
                    return bad("conv stride must be positive".into());
                }
                check_stats(g.weight_mean, g.weight_std, bounds)
            }
            LayerGene::Pool(g) => {
                if !bounds.kernel_size.contains(g.kernel_size) {
                    return bad(format!("kernel size {} out of bounds", g.kernel_size));
                }
                if g.stride != g.kernel_size {
                    return bad("pool stride must equal kernel size".into());
                }
                Ok(())
            }
            LayerGene::Fc(g) => {
                if !bounds.neurons.contains(g.num_neurons) {
                    return bad(format!("{} neurons out of bounds", g.num_neurons));
                }
                check_stats(g.weight_mean, g.weight_std, bounds)
            }
        }
    }
}

fn check_stats(mean: f64, std: f64, bounds: &GeneBounds) -> Result<()> {
    if !(std > 0.0) || !bounds.std_range.contains(std) {
        return Err(Error::InvalidChromosome(format!("weight std {std} out of bounds")));
    }
    if !bounds.mean_range.contains(mean) {
        return Err(Error::InvalidChromosome(format!("weight mean {mean} out of bounds")));
    }
    Ok(())
}

/// Draws a gene of the given kind with every field uniform on its bound range.
///
/// Convolutions are always stride 1 with SAME padding and pooling stride
/// equals the kernel size; those fields are not searched.
pub fn random_gene<R: Rng + ?Sized>(kind: GeneKind, bounds: &GeneBounds, rng: &mut R) -> LayerGene {
    let int = |rng: &mut R, r: Interval<usize>| rng.random_range(r.lo()..=r.hi());
    let real = |rng: &mut R, r: Interval<f64>| {
        if r.lo() == r.hi() {
            r.lo()
        } else {
            rng.random_range(r.lo()..=r.hi())
        }
    };
    match kind {
        GeneKind::Conv => LayerGene::Conv(ConvGene {
            filter_size: int(rng, bounds.filter_size),
            num_feature_maps: int(rng, bounds.feature_maps),
            stride: 1,
            conv_type: ConvType::Same,
            weight_std: real(rng, bounds.std_range),
            weight_mean: real(rng, bounds.mean_range),
        }),
        GeneKind::Pool => {
            let kernel = int(rng, bounds.kernel_size);
            LayerGene::Pool(PoolGene {
                kernel_size: kernel,
                stride: kernel,
                pool_type: if rng.random_bool(0.5) {
                    PoolType::Max
                } else {
                    PoolType::Avg
                },
            })
        }
        GeneKind::Fc => LayerGene::Fc(FcGene {
            num_neurons: int(rng, bounds.neurons),
            weight_std: real(rng, bounds.std_range),
            weight_mean: real(rng, bounds.mean_range),
        }),
    }
}

/// Variable-length encoding of one network.
#[derive(Clone, Debug, PartialEq)]
pub struct Chromosome {
    head: Vec<LayerGene>,
    tail: Vec<FcGene>,
}

impl Chromosome {
    /// Builds a chromosome, checking the head/tail grammar (but not bounds).
    pub fn new(head: Vec<LayerGene>, tail: Vec<FcGene>) -> Result<Self> {
        match head.first() {
            None => return Err(Error::InvalidChromosome("empty head".into())),
            Some(LayerGene::Conv(_)) => {}
            Some(_) => {
                return Err(Error::InvalidChromosome(
                    "head must start with a convolution".into(),
                ))
            }
        }
        if head.iter().any(|g| g.kind() == GeneKind::Fc) {
            return Err(Error::InvalidChromosome(
                "fully connected gene inside the head".into(),
            ));
        }
        if tail.is_empty() {
            return Err(Error::InvalidChromosome("empty tail".into()));
        }
        Ok(Self { head, tail })
    }

    /// Rebuilds a chromosome from a flat gene sequence; every fc gene must
    /// come after every conv/pool gene.
    pub fn from_genes(genes: Vec<LayerGene>) -> Result<Self> {
        let split = genes
            .iter()
            .position(|g| g.kind() == GeneKind::Fc)
            .unwrap_or(genes.len());
        let mut head = genes;
        let tail = head
            .split_off(split)
            .into_iter()
            .map(|g| match g {
                LayerGene::Fc(fc) => Ok(fc),
                _ => Err(Error::InvalidChromosome(
                    "conv/pool gene after a fully connected gene".into(),
                )),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(head, tail)
    }

    pub fn head(&self) -> &[LayerGene] {
        &self.head
    }

    pub fn tail(&self) -> &[FcGene] {
        &self.tail
    }

    pub fn len(&self) -> usize {
        self.head.len() + self.tail.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// All genes in order, the tail wrapped as [`LayerGene::Fc`].
    pub fn genes(&self) -> Vec<LayerGene> {
        self.head
            .iter()
            .cloned()
            .chain(self.tail.iter().cloned().map(LayerGene::Fc))
            .collect()
    }

    pub fn kinds(&self) -> Vec<GeneKind> {
        self.head
            .iter()
            .map(LayerGene::kind)
            .chain(self.tail.iter().map(|_| GeneKind::Fc))
            .collect()
    }

    /// Checks part lengths and every gene against `bounds`.
    pub fn validate(&self, bounds: &GeneBounds) -> Result<()> {
        if self.head.len() > bounds.max_conv_pool_layers {
            return Err(Error::InvalidChromosome(format!(
                "head length {} exceeds {}",
                self.head.len(),
                bounds.max_conv_pool_layers
            )));
        }
        if self.tail.len() > bounds.max_fc_layers {
            return Err(Error::InvalidChromosome(format!(
                "tail length {} exceeds {}",
                self.tail.len(),
                bounds.max_fc_layers
            )));
        }
        self.head.iter().try_for_each(|g| g.check(bounds))?;
        self.tail
            .iter()
            .try_for_each(|g| LayerGene::Fc(g.clone()).check(bounds))
    }

    /// Resolves the chromosome into a concrete network for `input` images.
    ///
    /// Every conv layer and hidden fc layer is followed by a ReLU; a flatten
    /// step precedes the first fc layer and a linear classification layer of
    /// `num_classes` outputs is appended. That implicit layer reuses the
    /// weight statistics of the last fc gene.
    pub fn decode(&self, input: Shape3, num_classes: usize) -> Result<NetworkSpec> {
        if input.is_empty() || num_classes == 0 {
            return Err(Error::Shape(format!(
                "input {input} with {num_classes} classes"
            )));
        }
        let mut layers = Vec::with_capacity(self.len() + 2);
        let mut shape = input;
        for (i, gene) in self.head.iter().enumerate() {
            match gene {
                LayerGene::Conv(g) => {
                    let output = conv_output(shape, g, i)?;
                    layers.push(LayerSpec::Conv {
                        filter: g.filter_size,
                        stride: g.stride,
                        padding: g.conv_type,
                        input: shape,
                        output,
                        init: Init::Gaussian {
                            mean: g.weight_mean,
                            std: g.weight_std,
                        },
                    });
                    shape = output;
                }
                LayerGene::Pool(g) => {
                    let output = pool_output(shape, g, i)?;
                    layers.push(LayerSpec::Pool {
                        kernel: g.kernel_size,
                        stride: g.stride,
                        kind: g.pool_type,
                        input: shape,
                        output,
                    });
                    shape = output;
                }
                LayerGene::Fc(_) => unreachable!("head holds no fc genes"),
            }
        }
        layers.push(LayerSpec::Flatten { input: shape });
        let mut width = shape.len();
        for g in &self.tail {
            layers.push(LayerSpec::Dense {
                inputs: width,
                outputs: g.num_neurons,
                relu: true,
                init: Init::Gaussian {
                    mean: g.weight_mean,
                    std: g.weight_std,
                },
            });
            width = g.num_neurons;
        }
        let last = self.tail.last().expect("tail is non-empty");
        layers.push(LayerSpec::Dense {
            inputs: width,
            outputs: num_classes,
            relu: false,
            init: Init::Gaussian {
                mean: last.weight_mean,
                std: last.weight_std,
            },
        });
        Ok(NetworkSpec {
            input,
            num_classes,
            layers,
        })
    }

    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

fn conv_output(input: Shape3, g: &ConvGene, layer: usize) -> Result<Shape3> {
    let dim = |n: usize| match g.conv_type {
        ConvType::Same => Some(n.div_ceil(g.stride)),
        ConvType::Valid => n.checked_sub(g.filter_size).map(|d| d / g.stride + 1),
    };
    match (dim(input.height), dim(input.width)) {
        (Some(h), Some(w)) if h >= 1 && w >= 1 => Ok(Shape3::new(h, w, g.num_feature_maps)),
        _ => Err(Error::ShapeUnderflow {
            layer,
            height: input.height,
            width: input.width,
            window: g.filter_size,
        }),
    }
}

fn pool_output(input: Shape3, g: &PoolGene, layer: usize) -> Result<Shape3> {
    let dim = |n: usize| n.checked_sub(g.kernel_size).map(|d| d / g.stride + 1);
    match (dim(input.height), dim(input.width)) {
        (Some(h), Some(w)) => Ok(Shape3::new(h, w, input.channels)),
        _ => Err(Error::ShapeUnderflow {
            layer,
            height: input.height,
            width: input.width,
            window: g.kernel_size,
        }),
    }
}

/// Trainable weights plus biases of the decoded network, including the
/// implicit classification layer. Pooling contributes nothing.
pub fn count_parameters(c: &Chromosome, input: Shape3, num_classes: usize) -> Result<u64> {
    let mut shape = input;
    let mut total = 0u64;
    for (i, gene) in c.head.iter().enumerate() {
        match gene {
            LayerGene::Conv(g) => {
                let f = g.filter_size as u64;
                let m = g.num_feature_maps as u64;
                total += f * f * shape.channels as u64 * m + m;
                shape = conv_output(shape, g, i)?;
            }
            LayerGene::Pool(g) => shape = pool_output(shape, g, i)?,
            LayerGene::Fc(_) => unreachable!(),
        }
    }
    let mut width = shape.len() as u64;
    for g in &c.tail {
        let out = g.num_neurons as u64;
        total += width * out + out;
        width = out;
    }
    Ok(total + width * num_classes as u64 + num_classes as u64)
}

/// Draws a chromosome: head length uniform on `[1, max_conv_pool_layers]`
/// starting with a convolution, each later head gene conv or pool by a fair
/// coin; tail length uniform on `[1, max_fc_layers]`.
pub fn random_chromosome<R: Rng + ?Sized>(bounds: &GeneBounds, rng: &mut R) -> Chromosome {
    let head_len = rng.random_range(1..=bounds.max_conv_pool_layers);
    let mut head = vec![random_gene(GeneKind::Conv, bounds, rng)];
    while head.len() < head_len {
        let kind = if rng.random::<f64>() <= 0.5 {
            GeneKind::Conv
        } else {
            GeneKind::Pool
        };
        head.push(random_gene(kind, bounds, rng));
    }
    let tail_len = rng.random_range(1..=bounds.max_fc_layers);
    let tail = (0..tail_len)
        .map(|_| match random_gene(GeneKind::Fc, bounds, rng) {
            LayerGene::Fc(g) => g,
            _ => unreachable!(),
        })
        .collect();
    Chromosome { head, tail }
}

/// A chromosome with identity, its own seed, and (once evaluated) fitness.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub id: u64,
    pub rng_seed: u64,
    pub chromosome: Chromosome,
    pub fitness: Option<FitnessRecord>,
}

impl Individual {
    pub fn new(id: u64, rng_seed: u64, chromosome: Chromosome) -> Self {
        Self {
            id,
            rng_seed,
            chromosome,
            fitness: None,
        }
    }

    pub fn fitness(&self) -> Result<&FitnessRecord> {
        self.fitness
            .as_ref()
            .ok_or(Error::UnevaluatedIndividual(self.id))
    }
}

/// `n` random individuals with ids `0..n`.
pub fn init_population<R: Rng + ?Sized>(n: usize, bounds: &GeneBounds, rng: &mut R) -> Vec<Individual> {
    (0..n as u64)
        .map(|id| {
            let chromosome = random_chromosome(bounds, rng);
            Individual::new(id, rng.random(), chromosome)
        })
        .collect()
}

impl fmt::Display for ConvType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvType::Same => "SAME",
            ConvType::Valid => "VALID",
        })
    }
}

impl fmt::Display for PoolType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolType::Max => "MAX",
            PoolType::Avg => "AVG",
        })
    }
}

impl fmt::Display for LayerGene {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerGene::Conv(g) => write!(
                f,
                "conv {} {} {} {} {} {} {:?} {:?}",
                g.filter_size,
                g.filter_size,
                g.num_feature_maps,
                g.stride,
                g.stride,
                g.conv_type,
                g.weight_std,
                g.weight_mean
            ),
            LayerGene::Pool(g) => write!(
                f,
                "pool {} {} {} {} {}",
                g.kernel_size, g.kernel_size, g.stride, g.stride, g.pool_type
            ),
            LayerGene::Fc(g) => write!(f, "fc {} {:?} {:?}", g.num_neurons, g.weight_std, g.weight_mean),
        }
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in self.genes() {
            writeln!(f, "{g}")?;
        }
        Ok(())
    }
}

impl FromStr for LayerGene {
    type Err = Error;

    fn from_str(line: &str) -> Result<Self> {
        let bad = |why: &str| Error::Format(format!("gene `{line}`: {why}"));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad("expected an integer"));
        let real = |s: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| bad("expected a finite real"))
        };
        let square = |a: &str, b: &str| {
            let (a, b) = (int(a)?, int(b)?);
            if a == b {
                Ok(a)
            } else {
                Err(bad("only square windows are supported"))
            }
        };
        match fields.as_slice() {
            ["conv", fw, fh, maps, sw, sh, ty, std, mean] => Ok(LayerGene::Conv(ConvGene {
                filter_size: square(fw, fh)?,
                num_feature_maps: int(maps)?,
                stride: square(sw, sh)?,
                conv_type: match *ty {
                    "SAME" => ConvType::Same,
                    "VALID" => ConvType::Valid,
                    _ => return Err(bad("conv type must be SAME or VALID")),
                },
                weight_std: real(std)?,
                weight_mean: real(mean)?,
            })),
            ["pool", kw, kh, sw, sh, ty] => Ok(LayerGene::Pool(PoolGene {
                kernel_size: square(kw, kh)?,
                stride: square(sw, sh)?,
                pool_type: match *ty {
                    "MAX" => PoolType::Max,
                    "AVG" => PoolType::Avg,
                    _ => return Err(bad("pool type must be MAX or AVG")),
                },
            })),
            ["fc", n, std, mean] => Ok(LayerGene::Fc(FcGene {
                num_neurons: int(n)?,
                weight_std: real(std)?,
                weight_mean: real(mean)?,
            })),
            _ => Err(bad("unrecognized gene record")),
        }
    }
}

impl FromStr for Chromosome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let genes = s
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(LayerGene::from_str)
            .collect::<Result<Vec<_>>>()?;
        Chromosome::from_genes(genes)
    }
}

impl Serialize for Chromosome {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Chromosome {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}
