use neuroevo::genome::{random_chromosome, Chromosome, GeneBounds, GeneKind, Interval};
use neuroevo::rng::stream;
use neuroevo::variation::{
    crossover, mutate, mutate_traced, polynomial_delta, sbx_with_u, MutationOp, UnitLists, VariationConfig,
};
use proptest::prelude::*;

fn small_bounds() -> GeneBounds {
    GeneBounds {
        max_conv_pool_layers: 3,
        max_fc_layers: 2,
        ..GeneBounds::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn sbx_preserves_the_parent_sum(x1 in -10.0f64..10.0, x2 in -10.0f64..10.0, u in 0.0f64..1.0, eta in 0.5f64..50.0) {
        let (c1, c2) = sbx_with_u(x1, x2, eta, u);
        prop_assert!(((c1 + c2) - (x1 + x2)).abs() <= 1e-12);
    }

    #[test]
    fn sbx_spread_matches_its_closed_form(x1 in -10.0f64..10.0, x2 in -10.0f64..10.0, u in 0.001f64..0.999) {
        // children sit symmetric about the parents' midpoint at beta times their half-gap
        let eta = 20.0;
        let beta = if u <= 0.5 {
            (2.0 * u).powf(1.0 / 21.0)
        } else {
            (0.5 / (1.0 - u)).powf(1.0 / 21.0)
        };
        let (c1, c2) = sbx_with_u(x1, x2, eta, u);
        prop_assert!(((c2 - c1) - beta * (x2 - x1)).abs() <= 1e-9);
    }

    #[test]
    fn polynomial_delta_is_bounded_and_signed(u in 0.0f64..1.0, eta in 0.5f64..50.0) {
        let d = polynomial_delta(u, eta);
        prop_assert!((-1.0..=1.0).contains(&d));
        prop_assert_eq!(d < 0.0, u < 0.5);
    }

    #[test]
    fn unit_collection_then_restore_is_identity(seed in any::<u64>()) {
        let c = random_chromosome(&GeneBounds::default(), &mut stream(seed, &[]));
        prop_assert_eq!(UnitLists::collect(&c).restore().unwrap(), c);
    }

    #[test]
    fn crossover_keeps_lengths_and_kinds(seed in any::<u64>()) {
        let bounds = GeneBounds::default();
        let mut rng = stream(seed, &[]);
        let p1 = random_chromosome(&bounds, &mut rng);
        let p2 = random_chromosome(&bounds, &mut rng);
        let (c1, c2) = crossover(&p1, &p2, &VariationConfig::default(), &bounds, &mut rng);
        prop_assert_eq!(c1.kinds(), p1.kinds());
        prop_assert_eq!(c2.kinds(), p2.kinds());
        c1.validate(&bounds).unwrap();
        c2.validate(&bounds).unwrap();
    }

    #[test]
    fn mutation_respects_the_grammar(seed in any::<u64>(), rate in 0.0f64..1.0) {
        let bounds = small_bounds();
        let cfg = VariationConfig { mutation_prob: rate, ..VariationConfig::default() };
        let mut rng = stream(seed, &[]);
        let mut c = random_chromosome(&bounds, &mut rng);
        for _ in 0..5 {
            c = mutate(&c, &cfg, &bounds, &mut rng);
            c.validate(&bounds).unwrap();
        }
    }
}

#[test]
fn mutation_points_follow_the_rate() {
    let bounds = GeneBounds::default();
    let cfg = VariationConfig::default();
    let mut rng = stream(42, &[]);
    let (mut units, mut events) = (0usize, 0usize);
    let mut ops = [0usize; 3];
    for _ in 0..3000 {
        let c = random_chromosome(&bounds, &mut rng);
        let (_, trace) = mutate_traced(&c, &cfg, &bounds, &mut rng);
        units += c.len();
        events += trace.len();
        for e in trace {
            ops[e.drawn as usize] += 1;
        }
    }
    let rate = events as f64 / units as f64;
    assert!((rate - 0.1).abs() < 0.01, "observed rate {rate}");
    // add, delete, modify drawn with probability 1/3 each
    for count in ops {
        let share = count as f64 / events as f64;
        assert!((share - 1.0 / 3.0).abs() < 0.03, "share {share}");
    }
}

#[test]
fn rejected_insertions_leave_full_parts_alone() {
    let bounds = GeneBounds {
        max_conv_pool_layers: 1,
        max_fc_layers: 1,
        ..GeneBounds::default()
    };
    let cfg = VariationConfig {
        mutation_prob: 1.0,
        ..VariationConfig::default()
    };
    let mut rng = stream(3, &[]);
    for _ in 0..500 {
        let c = random_chromosome(&bounds, &mut rng);
        let (child, trace) = mutate_traced(&c, &cfg, &bounds, &mut rng);
        assert_eq!(child.len(), 2);
        assert_eq!(child.kinds(), vec![GeneKind::Conv, GeneKind::Fc]);
        for e in trace {
            match e.drawn {
                MutationOp::Add => assert_eq!(e.applied, None),
                // deleting the only conv or the only fc is not allowed
                MutationOp::Delete => assert_eq!(e.applied, Some(MutationOp::Modify)),
                MutationOp::Modify => assert_eq!(e.applied, Some(MutationOp::Modify)),
            }
        }
    }
}

#[test]
fn crossover_of_fixed_fields_is_fixed() {
    let bounds = GeneBounds {
        filter_size: Interval(3, 3),
        feature_maps: Interval(4, 4),
        neurons: Interval(7, 7),
        ..GeneBounds::default()
    };
    let p1: Chromosome = "conv 3 3 4 1 1 SAME 0.1 0\nfc 7 0.1 0\n".parse().unwrap();
    let p2: Chromosome = "conv 3 3 4 1 1 SAME 0.3 0.2\nfc 7 0.2 -0.1\n".parse().unwrap();
    let mut rng = stream(1, &[]);
    for _ in 0..100 {
        let (c1, c2) = crossover(&p1, &p2, &VariationConfig::default(), &bounds, &mut rng);
        for c in [c1, c2] {
            let text = c.to_text();
            assert!(text.starts_with("conv 3 3 4 1 1 SAME"), "{text}");
            assert!(text.contains("\nfc 7 "), "{text}");
        }
    }
}
