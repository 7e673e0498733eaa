use proptest::prelude::*;

use prodmeasure::ingest::{boundary_assignment, points_to_measure, series_to_measure, HypercubeSystem};
use prodmeasure::node::interior_nodes;
use prodmeasure::noise::{apply_noise, NoiseParams};
use prodmeasure::stats::{average_coefficients, norm_distance, variance_degree2, weighted_feature_vector};
use prodmeasure::tree::coefficient_from_masses;
use prodmeasure::viz::{pseudo_welding_curve, WeldCurve};
use prodmeasure::{CoefficientTree, LeafMeasure, NaryCoefficients, NodeId};

fn leaf_measure(max_depth: u32) -> impl Strategy<Value = LeafMeasure> {
    (1..=max_depth)
        .prop_flat_map(|d| {
            prop::collection::vec(prop_oneof![1 => Just(0.0), 4 => 1e-3..1e3f64], 1usize << d)
        })
        .prop_filter("needs positive mass", |m| m.iter().any(|&x| x > 0.0))
        .prop_map(|m| LeafMeasure::from_masses(m).unwrap())
}

fn coefficient_tree(max_depth: u32, bound: f64) -> impl Strategy<Value = CoefficientTree> {
    (1..=max_depth).prop_flat_map(move |d| {
        let n = (1usize << d) - 1;
        prop::collection::vec(prop_oneof![1 => Just(0.0), 3 => -bound..=bound], n).prop_map(move |a| {
            CoefficientTree::new(d, 1.0, interior_nodes(d).zip(a)).unwrap()
        })
    })
}

/// Masses of every node, summed bottom-up from the leaves.
fn bottom_up_masses(leaves: &LeafMeasure) -> Vec<Vec<f64>> {
    let mut levels = vec![leaves.masses().to_vec()];
    while levels[0].len() > 1 {
        let next = levels[0].chunks(2).map(|p| p[0] + p[1]).collect();
        levels.insert(0, next);
    }
    levels
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn round_trip_reproduces_leaves(m in leaf_measure(10)) {
        let tree = CoefficientTree::from_leaves(&m).unwrap();
        let back = tree.reconstruct_leaves(m.depth()).unwrap();
        for (&x, &y) in m.masses().iter().zip(back.masses()) {
            if x == 0.0 {
                prop_assert_eq!(y, 0.0);
            } else {
                prop_assert!(close(x, y, 1e-12), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn node_masses_match_bottom_up_sums(m in leaf_measure(8)) {
        let tree = CoefficientTree::from_leaves(&m).unwrap();
        let levels = bottom_up_masses(&m);
        for (s, level) in levels.iter().enumerate() {
            for (i, &want) in level.iter().enumerate() {
                let got = tree.node_mass(NodeId::new(s as u32, i as u64).unwrap()).unwrap();
                prop_assert!(close(got, want, 1e-12) || (want == 0.0 && got == 0.0));
            }
        }
    }

    #[test]
    fn coefficients_bounded_and_extreme_only_on_empty_child(m in leaf_measure(8)) {
        let tree = CoefficientTree::from_leaves(&m).unwrap();
        let levels = bottom_up_masses(&m);
        for node in interior_nodes(m.depth()) {
            let a = tree.coefficient(node);
            prop_assert!((-1.0..=1.0).contains(&a));
            let child = &levels[node.scale as usize + 1];
            let (l, r) = (child[2 * node.index as usize], child[2 * node.index as usize + 1]);
            let one_empty = (l == 0.0) != (r == 0.0);
            prop_assert_eq!(a.abs() == 1.0, one_empty);
        }
        prop_assert!(tree.validate().is_empty());
    }

    #[test]
    fn reconstructed_total_is_preserved_at_every_depth(m in leaf_measure(9)) {
        let tree = CoefficientTree::from_leaves(&m).unwrap();
        for d in 0..=m.depth() {
            let total: f64 = tree.reconstruct_leaves(d).unwrap().masses().iter().sum();
            prop_assert!(close(total, m.total(), 1e-12));
        }
    }

    #[test]
    fn dirac_matches_indicator(d in 0u32..=12, k in any::<u64>()) {
        let k = k % (1u64 << d);
        let x = k as f64 / (1u64 << d) as f64;
        let mut indicator = vec![0.0; 1 << d];
        indicator[k as usize] = 1.0;
        let brute = CoefficientTree::from_leaves(&LeafMeasure::new(d, indicator).unwrap()).unwrap();
        prop_assert_eq!(CoefficientTree::dirac(x, d).unwrap(), brute);
    }

    #[test]
    fn nary_with_two_children_matches_binary(l in 0.0..1e6f64, r in 0.0..1e6f64) {
        prop_assume!(l + r > 0.0);
        let a = coefficient_from_masses(l, r).unwrap();
        let v = NaryCoefficients::from_masses(&[l, r]).unwrap();
        prop_assert!((v.values()[0] - a).abs() < 1e-15);
        prop_assert!((v.values()[1] + a).abs() < 1e-15);
    }

    #[test]
    fn variance_matches_single_scale_integration(s in 0u32..=6, seed in prop::collection::vec(-1.0..=1.0f64, 64)) {
        let n = 1usize << s;
        let coeffs: Vec<f64> = seed.into_iter().take(n).collect();
        let tree = CoefficientTree::new(
            s + 1,
            1.0,
            coeffs.iter().enumerate().map(|(i, &a)| (NodeId::new(s, i as u64).unwrap(), a)),
        )
        .unwrap();
        let cells = 2 * n;
        let w = 1.0 / cells as f64;
        let f = |c: usize| 1.0 + coeffs[c / 2] * if c.is_multiple_of(2) { 1.0 } else { -1.0 };
        let mean: f64 = (0..cells).map(|c| f(c) * w).sum();
        let exact: f64 = (0..cells).map(|c| (f(c) - mean).powi(2) * w).sum();
        let got = variance_degree2(&tree).value;
        prop_assert!((got - exact).abs() <= 1e-12 * exact.max(1.0), "{} vs {}", got, exact);
    }

    #[test]
    fn distance_is_a_metric(x in coefficient_tree(5, 1.0), seed in any::<u64>()) {
        let d = x.depth();
        let shifted = |k: u64| {
            CoefficientTree::new(
                d,
                1.0,
                interior_nodes(d).map(|n| {
                    let t = ((n.linear_index() + 1).wrapping_mul(seed ^ k) % 2001) as f64;
                    (n, t / 1000.0 - 1.0)
                }),
            )
            .unwrap()
        };
        let (y, z) = (shifted(1), shifted(2));
        let (dxy, dyz, dxz) = (
            norm_distance(&x, &y).unwrap(),
            norm_distance(&y, &z).unwrap(),
            norm_distance(&x, &z).unwrap(),
        );
        prop_assert!(dxy >= 0.0);
        prop_assert_eq!(dxy, norm_distance(&y, &x).unwrap());
        prop_assert_eq!(norm_distance(&x, &x).unwrap(), 0.0);
        prop_assert!(dxz <= (dxy + dyz) * (1.0 + 1e-12));
    }

    #[test]
    fn feature_vector_norm_is_truncated_variance(t in coefficient_tree(7, 1.0), cut in 0u32..7) {
        let max_scale = cut.min(t.depth() - 1);
        let v = weighted_feature_vector(&t, max_scale).unwrap();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let want = variance_degree2(&t).truncated(max_scale).sqrt();
        prop_assert!((norm - want).abs() <= 1e-12 * want.max(1.0));
    }

    #[test]
    fn averaging_positive_measures_stays_valid(ms in prop::collection::vec(
        prop::collection::vec(1e-3..10.0f64, 16), 1..6)) {
        let trees: Vec<CoefficientTree> = ms
            .into_iter()
            .map(|m| CoefficientTree::from_leaves(&LeafMeasure::from_masses(m).unwrap()).unwrap())
            .collect();
        let avg = average_coefficients(&trees).unwrap();
        prop_assert!(avg.validate().is_empty());
        let mean_total = trees.iter().map(|t| t.total_mass()).sum::<f64>() / trees.len() as f64;
        prop_assert!(close(avg.total_mass(), mean_total, 1e-15));
    }

    #[test]
    fn series_placement_preserves_total(values in prop::collection::vec(0.0..100.0f64, 1..200), depth in 0u32..10) {
        let m = series_to_measure(&values, depth).unwrap();
        let sum: f64 = values.iter().sum();
        prop_assert!(close(m.total(), sum, 1e-12) || sum == 0.0);
        if values.len() == 1 << depth {
            prop_assert_eq!(m.masses(), &values[..]);
        }
    }

    #[test]
    fn every_point_lies_in_exactly_one_leaf(
        dim in 1usize..=3,
        depth in 1u32..=9,
        raw in prop::collection::vec(prop_oneof![3 => 0.0..=1.0f64, 1 => (0u32..=8).prop_map(|k| k as f64 / 8.0)], 60),
    ) {
        let system = HypercubeSystem::unit(dim, depth).unwrap();
        for point in raw.chunks_exact(dim).take(12) {
            let containing: Vec<u64> = (0..1u64 << depth)
                .filter(|&i| {
                    let cell = system.cell_bounds(NodeId::new(depth, i).unwrap()).unwrap();
                    boundary_assignment(point, &cell)
                })
                .collect();
            prop_assert_eq!(containing.len(), 1, "point {:?}", point);
            prop_assert_eq!(containing[0], system.leaf_index(point).unwrap());
        }
    }

    #[test]
    fn point_measure_ignores_order_and_respects_size_bound(
        points in prop::collection::vec(prop::collection::vec(-5.0..5.0f64, 2), 1..80)
            .prop_flat_map(|p| Just(p.clone()).prop_shuffle().prop_map(move |q| (p.clone(), q))),
        depth in 1u32..=10,
    ) {
        let (points, shuffled) = points;
        let system = HypercubeSystem::new(vec![(-5.0, 5.0), (-5.0, 5.0)], None, depth).unwrap();
        let m = points_to_measure(&points, &system).unwrap();
        prop_assert_eq!(&m, &points_to_measure(&shuffled, &system).unwrap());
        prop_assert_eq!(m.total(), points.len() as f64);
        let tree = CoefficientTree::from_sparse(&m).unwrap();
        prop_assert!(tree.stored_len() <= depth as usize * points.len());
    }

    #[test]
    fn noise_preserves_validity_total_and_zeros(m in leaf_measure(6), sigma in 0.0..0.8f64, seed in any::<u64>()) {
        let tree = CoefficientTree::from_leaves(&m).unwrap();
        let params = NoiseParams::constant(m.depth(), sigma).unwrap();
        let noisy = apply_noise(&tree, &params, seed).unwrap();
        prop_assert!(noisy.validate().is_empty());
        prop_assert_eq!(noisy.total_mass(), tree.total_mass());
        prop_assert_eq!(&noisy, &apply_noise(&tree, &params, seed).unwrap());
        let leaves = noisy.reconstruct_leaves(m.depth()).unwrap();
        for (&before, &after) in m.masses().iter().zip(leaves.masses()) {
            prop_assert_eq!(before == 0.0, after == 0.0);
        }
    }

    #[test]
    fn curve_geometry(t in coefficient_tree(7, 0.95)) {
        let negated = CoefficientTree::new(t.depth(), 1.0, t.coefficients().map(|(n, a)| (n, -a))).unwrap();
        let mut previous: Option<WeldCurve> = None;
        for s in 0..t.depth() {
            let c = pseudo_welding_curve(&t, s, None).unwrap();
            let m = pseudo_welding_curve(&negated, s, None).unwrap();
            prop_assert_eq!(c.knots.len(), (1usize << (s + 1)) + 1);
            let (first, last) = (c.knots[0], c.knots[c.knots.len() - 1]);
            prop_assert_eq!((first.x, first.y, last.x, last.y), (0.0, 0.0, 1.0, 0.0));
            prop_assert!(c.min_segment_length() > 0.0);
            for (p, q) in c.knots.iter().zip(&m.knots) {
                prop_assert!((p.x - q.x).abs() <= 1e-12 && (p.y + q.y).abs() <= 1e-12);
            }
            if let Some(prev) = previous.take() {
                for i in 0..1usize << s {
                    let node = NodeId::new(s, i as u64).unwrap();
                    if t.coefficient(node) == 0.0 {
                        let k = c.knots[2 * i + 1];
                        let (a, b) = (prev.knots[i], prev.knots[i + 1]);
                        prop_assert!((k.x - 0.5 * (a.x + b.x)).abs() <= 1e-15);
                        prop_assert!((k.y - 0.5 * (a.y + b.y)).abs() <= 1e-15);
                    }
                }
            }
            previous = Some(c);
        }
    }
}
