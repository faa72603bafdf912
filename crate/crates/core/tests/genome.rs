use neuroevo::genome::{
    count_parameters, random_chromosome, random_gene, Chromosome, GeneBounds, GeneKind, Interval, LayerGene,
    Shape3,
};
use neuroevo::network::{init_weights, WeightSet};
use neuroevo::rng::stream;
use proptest::prelude::*;

fn desk_bounds() -> GeneBounds {
    GeneBounds {
        filter_size: Interval(1, 5),
        kernel_size: Interval(1, 3),
        feature_maps: Interval(1, 8),
        neurons: Interval(1, 32),
        ..GeneBounds::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn random_chromosomes_satisfy_the_grammar(seed in any::<u64>()) {
        let bounds = GeneBounds::default();
        let c = random_chromosome(&bounds, &mut stream(seed, &[]));
        c.validate(&bounds).unwrap();
        prop_assert!(matches!(c.head()[0], LayerGene::Conv(_)));
        prop_assert!(!c.tail().is_empty());
        prop_assert!(c.head().len() <= bounds.max_conv_pool_layers);
        prop_assert!(c.tail().len() <= bounds.max_fc_layers);
    }

    #[test]
    fn text_record_round_trips(seed in any::<u64>()) {
        let c = random_chromosome(&GeneBounds::default(), &mut stream(seed, &[]));
        let back: Chromosome = c.to_text().parse().unwrap();
        prop_assert_eq!(back, c);
    }

    #[test]
    fn three_parameter_counts_agree(seed in any::<u64>()) {
        let input = Shape3::new(16, 16, 1);
        let c = random_chromosome(&desk_bounds(), &mut stream(seed, &[]));
        match c.decode(input, 3) {
            Ok(spec) => {
                spec.validate().unwrap();
                let w: WeightSet<f32> = init_weights(&spec, &mut stream(seed, &[1]));
                prop_assert_eq!(count_parameters(&c, input, 3).unwrap(), spec.param_count());
                prop_assert_eq!(w.param_count() as u64, spec.param_count());
            }
            Err(_) => prop_assert!(count_parameters(&c, input, 3).is_err()),
        }
    }

    #[test]
    fn degenerate_intervals_force_values(v in 1usize..20, s in 0.01f64..1.0) {
        let bounds = GeneBounds {
            filter_size: Interval(v, v),
            std_range: Interval(s, s),
            ..GeneBounds::default()
        };
        let LayerGene::Conv(g) = random_gene(GeneKind::Conv, &bounds, &mut stream(v as u64, &[])) else {
            panic!("asked for a conv gene");
        };
        prop_assert_eq!(g.filter_size, v);
        prop_assert_eq!(g.weight_std, s);
    }
}

#[test]
fn text_record_is_line_oriented() {
    let text = "# two convolutions\nconv 3 3 8 1 1 SAME 0.1 0\n\npool 2 2 2 2 MAX\nconv 3 3 8 1 1 SAME 0.2 -0.05\nfc 32 0.1 0\nfc 10 0.1 0\n";
    let c: Chromosome = text.parse().unwrap();
    assert_eq!(c.head().len(), 3);
    assert_eq!(c.tail().len(), 2);
    assert_eq!(c.to_text().lines().count(), 5);
    assert!("fc 10 0.1 0\n".parse::<Chromosome>().is_err());
    assert!("pool 2 2 2 2 MAX\nconv 3 3 8 1 1 SAME 0.1 0\nfc 1 0.1 0\n".parse::<Chromosome>().is_err());
    assert!("conv 3 3 8 1 1 SAME 0.1 0\nfc 4 0.1 0\nconv 3 3 8 1 1 SAME 0.1 0\n".parse::<Chromosome>().is_err());
    assert!("conv 3 3 8 1 1 SAME 0.1 0\n".parse::<Chromosome>().is_err());
    assert!("conv 3 x 8 1 1 SAME 0.1 0\nfc 1 0.1 0\n".parse::<Chromosome>().is_err());
}

#[test]
fn random_gene_fields_cover_their_ranges() {
    let bounds = desk_bounds();
    let mut rng = stream(8, &[]);
    let mut seen = [false; 5];
    for _ in 0..2000 {
        if let LayerGene::Conv(g) = random_gene(GeneKind::Conv, &bounds, &mut rng) {
            seen[g.filter_size - 1] = true;
            assert!(bounds.std_range.contains(g.weight_std));
            assert!(bounds.mean_range.contains(g.weight_mean));
        }
    }
    assert!(seen.iter().all(|&s| s));
}
