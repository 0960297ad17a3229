mod common;

use common::raw_graph;
use proptest::prelude::*;
use thinnet_core::{limit_spectrum, MetricGraph, RegimeTag, ScalingRegime, Spectrum};

fn regime(tag: RegimeTag) -> ScalingRegime {
    let alpha = match tag {
        RegimeTag::Fast => 1.0,
        RegimeTag::Slow => 0.25,
        RegimeTag::Borderline => 0.5,
        RegimeTag::Nondecay => 0.0,
    };
    ScalingRegime::new(tag, alpha, 0.1).unwrap()
}

fn close(a: &Spectrum, b: &Spectrum) -> bool {
    let (x, y) = (a.expanded(), b.expanded());
    x.len() == y.len() && x.iter().zip(&y).all(|(p, q)| (p - q).abs() <= 1e-8 * p.max(1.0))
}

fn tags() -> impl Strategy<Value = RegimeTag> {
    prop_oneof![Just(RegimeTag::Fast), Just(RegimeTag::Slow), Just(RegimeTag::Borderline)]
}

fn with_volumes(g: &MetricGraph, tag: RegimeTag) -> MetricGraph {
    if tag == RegimeTag::Borderline {
        let v: Vec<f64> = (0..g.num_vertices()).map(|k| 0.5 + 0.25 * (k % 3) as f64).collect();
        g.with_vertex_volumes(&v).unwrap()
    } else {
        g.clone()
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn relabeling_does_not_change_the_limit(
        raw in raw_graph(5, 2),
        tag in tags(),
        vseed in any::<u64>(),
        eseed in any::<u64>(),
    ) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut vorder: Vec<usize> = (0..raw.n).collect();
        let mut eorder: Vec<usize> = (0..raw.edges.len()).collect();
        vorder.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(vseed));
        eorder.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(eseed));
        let base = raw.build();
        let perm = raw.build_permuted(&vorder, &eorder);
        // equal volumes keep the borderline graphs comparable under relabeling
        let (a, b) = if tag == RegimeTag::Borderline {
            let v = vec![0.75; raw.n];
            (base.with_vertex_volumes(&v).unwrap(), perm.with_vertex_volumes(&v).unwrap())
        } else {
            (base, perm)
        };
        let sa = limit_spectrum(&a, &regime(tag), None, 120.0).unwrap();
        let sb = limit_spectrum(&b, &regime(tag), None, 120.0).unwrap();
        prop_assert!(close(&sa, &sb), "{:?} vs {:?}", sa.expanded(), sb.expanded());
    }

    #[test]
    fn truncation_equals_smaller_cutoff(raw in raw_graph(4, 2), tag in tags(), frac in 0.1f64..0.9) {
        let g = with_volumes(&raw.build(), tag);
        let big = limit_spectrum(&g, &regime(tag), None, 150.0).unwrap();
        let cut = 150.0 * frac;
        prop_assume!(big.entries.iter().all(|e| (e.lambda - cut).abs() > 1e-6));
        let small = limit_spectrum(&g, &regime(tag), None, cut).unwrap();
        prop_assert!(close(&big.truncated(cut), &small));
        prop_assert!(small.is_well_formed());
    }

    #[test]
    fn slow_limit_starts_with_one_zero_per_vertex(raw in raw_graph(6, 3)) {
        let g = raw.build();
        let s = limit_spectrum(&g, &regime(RegimeTag::Slow), None, 60.0).unwrap();
        prop_assert_eq!(s.entries[0].lambda, 0.0);
        prop_assert_eq!(s.entries[0].multiplicity, g.num_vertices());
        prop_assert!(s.entries[1..].iter().all(|e| e.lambda > 1.0));
    }
}

#[test]
fn borderline_limit_needs_volumes() {
    let g = MetricGraph::interval(1.0).unwrap();
    assert!(limit_spectrum(&g, &regime(RegimeTag::Borderline), None, 50.0).is_err());
}
