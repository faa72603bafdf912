//! Offspring generation.
//!
//! Crossover works on chromosomes of different lengths in three phases:
//! units are collected into per-kind lists ([`UnitLists`]), the lists of the
//! two parents are aligned at the top and paired units recombined field by
//! field with SBX, then every unit is written back to the position it came
//! from. Unpaired units are untouched, so each child keeps its parent's
//! layer-kind sequence.
//!
//! Mutation visits every unit; a selected unit is extended (a new unit is
//! inserted before it), deleted, or modified with polynomial mutation, each
//! with probability 1/3.
//!
//! All encoded information is treated as real numbers by the operators:
//! integer fields are rounded back to the nearest in-range value and the
//! pooling type is carried as 0 (max) / 1 (average) with a 0.5 threshold.
//! Convolution stride and padding type are fixed and never varied.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::genome::{
    random_gene, Chromosome, ConvGene, FcGene, GeneBounds, GeneKind, Individual, Interval,
    LayerGene, PoolGene, PoolType,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VariationConfig {
    pub crossover_prob: f64,
    /// Per-unit probability of a structural mutation point.
    pub mutation_prob: f64,
    pub sbx_eta: f64,
    pub pm_eta: f64,
}

impl Default for VariationConfig {
    fn default() -> Self {
        Self {
            crossover_prob: 0.9,
            mutation_prob: 0.1,
            sbx_eta: 20.0,
            pm_eta: 20.0,
        }
    }
}

impl VariationConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |p: f64| (0.0..=1.0).contains(&p);
        if !unit(self.crossover_prob) || !unit(self.mutation_prob) {
            return Err(Error::Config("operator probabilities must lie in [0, 1]".into()));
        }
        if !(self.sbx_eta > 0.0 && self.pm_eta > 0.0) {
            return Err(Error::Config("distribution indices must be positive".into()));
        }
        Ok(())
    }
}

/// SBX children for a given uniform draw `u`, before clamping.
pub fn sbx_with_u(x1: f64, x2: f64, eta: f64, u: f64) -> (f64, f64) {
    let beta = if u <= 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0))
    } else {
        (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
    };
    // midpoint/half-gap form: equal parents come back bit-exact
    let mid = 0.5 * (x1 + x2);
    let half = 0.5 * (x2 - x1);
    (mid - beta * half, mid + beta * half)
}

/// Simulated binary crossover of two reals, children clamped to `[lower, upper]`.
pub fn sbx<R: Rng + ?Sized>(x1: f64, x2: f64, eta: f64, lower: f64, upper: f64, rng: &mut R) -> (f64, f64) {
    let (c1, c2) = sbx_with_u(x1, x2, eta, rng.random::<f64>());
    (c1.clamp(lower, upper), c2.clamp(lower, upper))
}

/// Polynomial-mutation perturbation in units of the domain width.
pub fn polynomial_delta(u: f64, eta: f64) -> f64 {
    if u < 0.5 {
        (2.0 * u).powf(1.0 / (eta + 1.0)) - 1.0
    } else {
        1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta + 1.0))
    }
}

pub fn polynomial_mutate<R: Rng + ?Sized>(x: f64, eta: f64, lower: f64, upper: f64, rng: &mut R) -> f64 {
    let delta = polynomial_delta(rng.random::<f64>(), eta);
    (x + delta * (upper - lower)).clamp(lower, upper)
}

fn int_domain(r: Interval<usize>) -> (f64, f64) {
    (r.lo() as f64, r.hi() as f64)
}

fn to_int(v: f64, r: Interval<usize>) -> usize {
    (v.round().max(0.0) as usize).clamp(r.lo(), r.hi())
}

fn pool_code(t: PoolType) -> f64 {
    match t {
        PoolType::Max => 0.0,
        PoolType::Avg => 1.0,
    }
}

fn pool_from_code(v: f64) -> PoolType {
    if v >= 0.5 {
        PoolType::Avg
    } else {
        PoolType::Max
    }
}

/// Applies a two-parent real operator to one field with domain `(lo, hi)`.
struct Pairwise<'a, R: ?Sized> {
    eta: f64,
    rng: &'a mut R,
}

impl<R: Rng + ?Sized> Pairwise<'_, R> {
    fn real(&mut self, a: f64, b: f64, (lo, hi): (f64, f64)) -> (f64, f64) {
        sbx(a.clamp(lo, hi), b.clamp(lo, hi), self.eta, lo, hi, self.rng)
    }

    fn int(&mut self, a: usize, b: usize, r: Interval<usize>) -> (usize, usize) {
        let (x, y) = self.real(a as f64, b as f64, int_domain(r));
        (to_int(x, r), to_int(y, r))
    }
}

fn cross_conv<R: Rng + ?Sized>(
    a: &ConvGene,
    b: &ConvGene,
    op: &mut Pairwise<'_, R>,
    bounds: &GeneBounds,
) -> (ConvGene, ConvGene) {
    let (fa, fb) = op.int(a.filter_size, b.filter_size, bounds.filter_size);
    let (ma, mb) = op.int(a.num_feature_maps, b.num_feature_maps, bounds.feature_maps);
    let (sa, sb) = op.real(a.weight_std, b.weight_std, (bounds.std_range.lo(), bounds.std_range.hi()));
    let (ua, ub) = op.real(a.weight_mean, b.weight_mean, (bounds.mean_range.lo(), bounds.mean_range.hi()));
    (
        ConvGene {
            filter_size: fa,
            num_feature_maps: ma,
            weight_std: sa,
            weight_mean: ua,
            ..a.clone()
        },
        ConvGene {
            filter_size: fb,
            num_feature_maps: mb,
            weight_std: sb,
            weight_mean: ub,
            ..b.clone()
        },
    )
}

fn cross_pool<R: Rng + ?Sized>(
    a: &PoolGene,
    b: &PoolGene,
    op: &mut Pairwise<'_, R>,
    bounds: &GeneBounds,
) -> (PoolGene, PoolGene) {
    let (ka, kb) = op.int(a.kernel_size, b.kernel_size, bounds.kernel_size);
    let (ta, tb) = op.real(pool_code(a.pool_type), pool_code(b.pool_type), (0.0, 1.0));
    (
        PoolGene {
            kernel_size: ka,
            stride: ka,
            pool_type: pool_from_code(ta),
        },
        PoolGene {
            kernel_size: kb,
            stride: kb,
            pool_type: pool_from_code(tb),
        },
    )
}

fn cross_fc<R: Rng + ?Sized>(a: &FcGene, b: &FcGene, op: &mut Pairwise<'_, R>, bounds: &GeneBounds) -> (FcGene, FcGene) {
    let (na, nb) = op.int(a.num_neurons, b.num_neurons, bounds.neurons);
    let (sa, sb) = op.real(a.weight_std, b.weight_std, (bounds.std_range.lo(), bounds.std_range.hi()));
    let (ua, ub) = op.real(a.weight_mean, b.weight_mean, (bounds.mean_range.lo(), bounds.mean_range.hi()));
    (
        FcGene {
            num_neurons: na,
            weight_std: sa,
            weight_mean: ua,
        },
        FcGene {
            num_neurons: nb,
            weight_std: sb,
            weight_mean: ub,
        },
    )
}

/// Units of one chromosome grouped by kind, each tagged with its position.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitLists {
    pub conv: Vec<(ConvGene, usize)>,
    pub pool: Vec<(PoolGene, usize)>,
    pub fc: Vec<(FcGene, usize)>,
}

impl UnitLists {
    pub fn collect(c: &Chromosome) -> Self {
        let mut lists = UnitLists {
            conv: Vec::new(),
            pool: Vec::new(),
            fc: Vec::new(),
        };
        for (pos, gene) in c.genes().into_iter().enumerate() {
            match gene {
                LayerGene::Conv(g) => lists.conv.push((g, pos)),
                LayerGene::Pool(g) => lists.pool.push((g, pos)),
                LayerGene::Fc(g) => lists.fc.push((g, pos)),
            }
        }
        lists
    }

    /// Writes every unit back to its original position.
    pub fn restore(self) -> Result<Chromosome> {
        let n = self.conv.len() + self.pool.len() + self.fc.len();
        let mut slots: Vec<Option<LayerGene>> = vec![None; n];
        let place = |slots: &mut Vec<Option<LayerGene>>, pos: usize, g: LayerGene| {
            match slots.get_mut(pos) {
                Some(slot @ None) => {
                    *slot = Some(g);
                    Ok(())
                }
                _ => Err(Error::InvalidChromosome(format!("unit position {pos} is not unique"))),
            }
        };
        for (g, pos) in self.conv {
            place(&mut slots, pos, LayerGene::Conv(g))?;
        }
        for (g, pos) in self.pool {
            place(&mut slots, pos, LayerGene::Pool(g))?;
        }
        for (g, pos) in self.fc {
            place(&mut slots, pos, LayerGene::Fc(g))?;
        }
        Chromosome::from_genes(slots.into_iter().map(|g| g.expect("all slots filled")).collect())
    }
}

/// Unit-aligned crossover of two chromosomes of any lengths.
pub fn crossover<R: Rng + ?Sized>(
    p1: &Chromosome,
    p2: &Chromosome,
    cfg: &VariationConfig,
    bounds: &GeneBounds,
    rng: &mut R,
) -> (Chromosome, Chromosome) {
    let (mut a, mut b) = (UnitLists::collect(p1), UnitLists::collect(p2));
    let mut op = Pairwise {
        eta: cfg.sbx_eta,
        rng,
    };
    for ((x, _), (y, _)) in a.conv.iter_mut().zip(b.conv.iter_mut()) {
        (*x, *y) = cross_conv(x, y, &mut op, bounds);
    }
    for ((x, _), (y, _)) in a.pool.iter_mut().zip(b.pool.iter_mut()) {
        (*x, *y) = cross_pool(x, y, &mut op, bounds);
    }
    for ((x, _), (y, _)) in a.fc.iter_mut().zip(b.fc.iter_mut()) {
        (*x, *y) = cross_fc(x, y, &mut op, bounds);
    }
    (
        a.restore().expect("positions come from a valid chromosome"),
        b.restore().expect("positions come from a valid chromosome"),
    )
}

fn modify_gene<R: Rng + ?Sized>(gene: &mut LayerGene, eta: f64, bounds: &GeneBounds, rng: &mut R) {
    let mut real = |v: f64, (lo, hi): (f64, f64)| polynomial_mutate(v.clamp(lo, hi), eta, lo, hi, rng);
    let stats = (bounds.std_range, bounds.mean_range);
    match gene {
        LayerGene::Conv(g) => {
            g.filter_size = to_int(real(g.filter_size as f64, int_domain(bounds.filter_size)), bounds.filter_size);
            g.num_feature_maps = to_int(
                real(g.num_feature_maps as f64, int_domain(bounds.feature_maps)),
                bounds.feature_maps,
            );
            g.weight_std = real(g.weight_std, (stats.0.lo(), stats.0.hi()));
            g.weight_mean = real(g.weight_mean, (stats.1.lo(), stats.1.hi()));
        }
        LayerGene::Pool(g) => {
            g.kernel_size = to_int(real(g.kernel_size as f64, int_domain(bounds.kernel_size)), bounds.kernel_size);
            g.stride = g.kernel_size;
            g.pool_type = pool_from_code(real(pool_code(g.pool_type), (0.0, 1.0)));
        }
        LayerGene::Fc(g) => {
            g.num_neurons = to_int(real(g.num_neurons as f64, int_domain(bounds.neurons)), bounds.neurons);
            g.weight_std = real(g.weight_std, (stats.0.lo(), stats.0.hi()));
            g.weight_mean = real(g.weight_mean, (stats.1.lo(), stats.1.hi()));
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MutationOp {
    Add,
    Delete,
    Modify,
}

/// What happened at one selected mutation point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MutationEvent {
    /// Index of the unit in the parent chromosome.
    pub unit: usize,
    pub drawn: MutationOp,
    /// `None` when an insertion was rejected for lack of room.
    pub applied: Option<MutationOp>,
}

/// Structural mutation; see [`mutate_traced`].
pub fn mutate<R: Rng + ?Sized>(c: &Chromosome, cfg: &VariationConfig, bounds: &GeneBounds, rng: &mut R) -> Chromosome {
    mutate_traced(c, cfg, bounds, rng).0
}

/// Mutates each unit independently with probability `cfg.mutation_prob`.
///
/// - Add inserts a random conv, pool or fc unit (1/3 each) before the unit.
///   Conv/pool units only go into the head and fc units only into the tail:
///   a mismatched draw is moved to the head's end or the tail's front. A
///   pool never goes ahead of the leading convolution. Insertions beyond the
///   part's maximum length are dropped.
/// - Delete removes the unit, unless that would empty a part or remove the
///   leading convolution; then the unit is modified instead.
/// - Modify polynomially mutates every encoded field of the unit.
pub fn mutate_traced<R: Rng + ?Sized>(
    c: &Chromosome,
    cfg: &VariationConfig,
    bounds: &GeneBounds,
    rng: &mut R,
) -> (Chromosome, Vec<MutationEvent>) {
    let mut genes: Vec<(LayerGene, Option<usize>)> =
        c.genes().into_iter().enumerate().map(|(i, g)| (g, Some(i))).collect();
    let mut head_len = c.head().len();
    let mut events = Vec::new();
    for unit in 0..c.len() {
        if !rng.random_bool(cfg.mutation_prob) {
            continue;
        }
        let pos = genes
            .iter()
            .position(|(_, tag)| *tag == Some(unit))
            .expect("an unvisited unit is never removed");
        let drawn = match rng.random_range(0..3) {
            0 => MutationOp::Add,
            1 => MutationOp::Delete,
            _ => MutationOp::Modify,
        };
        let tail_len = genes.len() - head_len;
        let applied = match drawn {
            MutationOp::Add => {
                let kind = match rng.random_range(0..3) {
                    0 => GeneKind::Conv,
                    1 => GeneKind::Pool,
                    _ => GeneKind::Fc,
                };
                let at = match kind {
                    GeneKind::Fc if tail_len >= bounds.max_fc_layers => None,
                    GeneKind::Fc => Some(pos.max(head_len)),
                    _ if head_len >= bounds.max_conv_pool_layers => None,
                    GeneKind::Pool if pos == 0 => Some(1),
                    _ => Some(pos.min(head_len)),
                };
                at.map(|at| {
                    genes.insert(at, (random_gene(kind, bounds, rng), None));
                    if kind != GeneKind::Fc {
                        head_len += 1;
                    }
                    MutationOp::Add
                })
            }
            MutationOp::Delete => {
                let in_head = pos < head_len;
                let allowed = pos != 0 && if in_head { head_len > 1 } else { tail_len > 1 };
                if allowed {
                    genes.remove(pos);
                    if in_head {
                        head_len -= 1;
                    }
                    Some(MutationOp::Delete)
                } else {
                    modify_gene(&mut genes[pos].0, cfg.pm_eta, bounds, rng);
                    Some(MutationOp::Modify)
                }
            }
            MutationOp::Modify => {
                modify_gene(&mut genes[pos].0, cfg.pm_eta, bounds, rng);
                Some(MutationOp::Modify)
            }
        };
        events.push(MutationEvent { unit, drawn, applied });
    }
    let child = Chromosome::from_genes(genes.into_iter().map(|(g, _)| g).collect())
        .expect("mutation preserves the head/tail grammar");
    (child, events)
}

/// Pairs up the mating pool at random, recombines each pair with
/// probability `crossover_prob` (cloning otherwise) and mutates both
/// children. Children get fresh ids starting at `*next_id`.
pub fn generate_offspring<R: Rng + ?Sized>(
    mut pool: Vec<Individual>,
    cfg: &VariationConfig,
    bounds: &GeneBounds,
    rng: &mut R,
    next_id: &mut u64,
) -> Result<Vec<Individual>> {
    if pool.is_empty() || pool.len() % 2 == 1 {
        return Err(Error::OddPoolSize(pool.len()));
    }
    pool.shuffle(rng);
    let mut offspring = Vec::with_capacity(pool.len());
    for pair in pool.chunks(2) {
        let (a, b) = (&pair[0].chromosome, &pair[1].chromosome);
        let (c1, c2) = if rng.random_bool(cfg.crossover_prob) {
            crossover(a, b, cfg, bounds, rng)
        } else {
            (a.clone(), b.clone())
        };
        for child in [c1, c2] {
            let child = mutate(&child, cfg, bounds, rng);
            offspring.push(Individual::new(*next_id, rng.random(), child));
            *next_id += 1;
        }
    }
    Ok(offspring)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::genome::{random_chromosome, ConvType};
    use crate::rng::stream;

    fn conv(filter: usize) -> LayerGene {
        LayerGene::Conv(ConvGene {
            filter_size: filter,
            num_feature_maps: 4,
            stride: 1,
            conv_type: ConvType::Same,
            weight_std: 0.1,
            weight_mean: 0.0,
        })
    }

    fn pool() -> LayerGene {
        LayerGene::Pool(PoolGene {
            kernel_size: 2,
            stride: 2,
            pool_type: PoolType::Max,
        })
    }

    fn fc(n: usize) -> FcGene {
        FcGene {
            num_neurons: n,
            weight_std: 0.2,
            weight_mean: 0.1,
        }
    }

    #[test]
    fn sbx_of_equal_parents_is_identity() {
        let mut rng = stream(1, &[]);
        for _ in 0..100 {
            assert_eq!(sbx(0.3, 0.3, 20.0, 0.0, 1.0, &mut rng), (0.3, 0.3));
        }
    }

    #[test]
    fn zero_width_mutation() {
        let mut rng = stream(2, &[]);
        assert_eq!(polynomial_mutate(0.4, 20.0, 0.4, 0.4, &mut rng), 0.4);
    }

    #[test]
    fn mutation_stays_in_domain() {
        let mut rng = stream(3, &[]);
        for _ in 0..10_000 {
            let x = rng.random_range(-2.0..=3.0);
            let y = polynomial_mutate(x, 1.0, -2.0, 3.0, &mut rng);
            assert!((-2.0..=3.0).contains(&y));
        }
    }

    #[test]
    fn identical_parents_are_a_fixed_point() {
        let bounds = GeneBounds::default();
        let mut rng = stream(4, &[]);
        for _ in 0..100 {
            let p = random_chromosome(&bounds, &mut rng);
            let (a, b) = crossover(&p, &p, &VariationConfig::default(), &bounds, &mut rng);
            assert_eq!(a, p);
            assert_eq!(b, p);
        }
    }

    #[test]
    fn unpaired_units_are_untouched() {
        let p1 = Chromosome::new(vec![conv(1), conv(2), pool(), conv(3)], vec![fc(5)]).unwrap();
        let p2 = Chromosome::new(vec![conv(7), conv(6)], vec![fc(9), fc(8)]).unwrap();
        let bounds = GeneBounds::default();
        let mut rng = stream(5, &[]);
        let (c1, c2) = crossover(&p1, &p2, &VariationConfig::default(), &bounds, &mut rng);
        assert_eq!(c1.head()[3], p1.head()[3]);
        assert_eq!(c1.head()[2], p1.head()[2]);
        assert_eq!(c2.tail()[1], p2.tail()[1]);
        assert_eq!(c1.kinds(), p1.kinds());
        assert_eq!(c2.kinds(), p2.kinds());
    }

    #[test]
    fn collect_restore_round_trip() {
        let bounds = GeneBounds::default();
        let mut rng = stream(6, &[]);
        for _ in 0..200 {
            let c = random_chromosome(&bounds, &mut rng);
            assert_eq!(UnitLists::collect(&c).restore().unwrap(), c);
        }
    }

    #[test]
    fn no_mutation_when_rate_zero() {
        let bounds = GeneBounds::default();
        let cfg = VariationConfig {
            mutation_prob: 0.0,
            ..Default::default()
        };
        let mut rng = stream(7, &[]);
        for _ in 0..100 {
            let c = random_chromosome(&bounds, &mut rng);
            assert_eq!(mutate(&c, &cfg, &bounds, &mut rng), c);
        }
    }

    #[test]
    fn lone_fc_gene_survives_delete() {
        let bounds = GeneBounds::default();
        let cfg = VariationConfig {
            mutation_prob: 1.0,
            ..Default::default()
        };
        let c = Chromosome::new(vec![conv(3)], vec![fc(4)]).unwrap();
        let mut rng = stream(8, &[]);
        let mut saw_rejected_delete = false;
        for _ in 0..300 {
            let (m, events) = mutate_traced(&c, &cfg, &bounds, &mut rng);
            assert!(!m.tail().is_empty());
            assert_eq!(m.head()[0].kind(), GeneKind::Conv);
            saw_rejected_delete |= events
                .iter()
                .any(|e| e.drawn == MutationOp::Delete && e.applied == Some(MutationOp::Modify));
        }
        assert!(saw_rejected_delete);
    }

    #[test]
    fn full_parts_reject_insertions() {
        let bounds = GeneBounds {
            max_conv_pool_layers: 1,
            max_fc_layers: 1,
            ..Default::default()
        };
        let cfg = VariationConfig {
            mutation_prob: 1.0,
            ..Default::default()
        };
        let c = Chromosome::new(vec![conv(3)], vec![fc(4)]).unwrap();
        let mut rng = stream(9, &[]);
        for _ in 0..300 {
            let (m, events) = mutate_traced(&c, &cfg, &bounds, &mut rng);
            assert_eq!(m.len(), 2);
            for e in events.iter().filter(|e| e.drawn == MutationOp::Add) {
                assert_eq!(e.applied, None);
            }
        }
    }

    #[test]
    fn offspring_counts_and_ids() {
        let bounds = GeneBounds::default();
        let mut rng = stream(10, &[]);
        let pool = crate::genome::init_population(100, &bounds, &mut rng);
        let mut next = 100;
        let kids = generate_offspring(pool, &VariationConfig::default(), &bounds, &mut rng, &mut next).unwrap();
        assert_eq!(kids.len(), 100);
        assert_eq!(next, 200);
        assert!(kids.iter().all(|k| k.fitness.is_none() && k.id >= 100));
        let odd = crate::genome::init_population(3, &bounds, &mut rng);
        assert!(matches!(
            generate_offspring(odd, &VariationConfig::default(), &bounds, &mut rng, &mut next),
            Err(Error::OddPoolSize(3))
        ));
    }

    #[test]
    fn identical_pair_without_mutation_clones() {
        let bounds = GeneBounds::default();
        let mut rng = stream(11, &[]);
        let parent = crate::genome::init_population(1, &bounds, &mut rng).remove(0);
        let cfg = VariationConfig {
            crossover_prob: 1.0,
            mutation_prob: 0.0,
            ..Default::default()
        };
        let kids = generate_offspring(vec![parent.clone(), parent.clone()], &cfg, &bounds, &mut rng, &mut 1).unwrap();
        assert!(kids.iter().all(|k| k.chromosome == parent.chromosome));
    }
}
