use persuade::fixtures::{self, SymmetricKind};
use persuade::geometry::{descending_slope, Slope};
use persuade::lp::{slope_lp_generic, slope_lp_offset, solve_lp, solve_slope_lp, LpStatus, SlopeSegment, SlopeUnique};
use persuade::model::rat;
use persuade::prob_oracle::{
    candidate_slopes, enumerate_oracle, p_segment, p_unique, point_segment_prob, point_unique_prob,
    subset_product_mean, subset_product_sum,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn kind(i: u8) -> SymmetricKind {
    [SymmetricKind::Iid, SymmetricKind::ProphetSecretary, SymmetricKind::DRandomOrder][i as usize % 3]
}

fn brute_subset_sum(values: &[f64], r: usize) -> f64 {
    (0u32..1 << values.len())
        .filter(|m| m.count_ones() as usize == r)
        .map(|m| (0..values.len()).filter(|i| m >> i & 1 == 1).map(|i| values[i]).product::<f64>())
        .sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subset_product_sum_matches_enumeration(values in prop::collection::vec(0.0f64..1.0, 0..=15), r in 0usize..16) {
        let r = r.min(values.len());
        let brute = brute_subset_sum(&values, r);
        let fast = subset_product_sum(&values, r).unwrap();
        prop_assert!((fast - brute).abs() <= 1e-12 * brute.max(1.0), "{} vs {}", fast, brute);
        let binom = (0..r).fold(1.0, |acc, i| acc * (values.len() - i) as f64 / (i + 1) as f64);
        let mean = subset_product_mean(&values, r).unwrap();
        prop_assert!((mean * binom - brute).abs() <= 1e-12 * brute.max(1.0));
    }

    #[test]
    fn correspondences_partition_unity(seed: u64, k in 0u8..3, kk in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = fixtures::random_symmetric(&mut rng, kind(k), 6, u128::MAX);
        let kk = kk.min(inst.num_actions());
        let pts = inst.table().points();
        for s in candidate_slopes(&inst, kk).unwrap() {
            let mut total = 0.0;
            for a in 0..pts.len() {
                total += point_unique_prob(&inst, kk, a, &s);
                if let Slope::Finite(sv) = &s {
                    for b in 0..pts.len() {
                        if descending_slope(&pts[a], &pts[b]).as_ref() == Some(sv) {
                            total += point_segment_prob(&inst, kk, a, b);
                        }
                    }
                }
            }
            prop_assert!((total - 1.0).abs() <= 1e-9, "slope {}: total {}", s, total);
        }
    }

    #[test]
    fn id_level_correspondences_partition_unity(seed: u64, k in 0u8..3, kk in 1usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = fixtures::random_symmetric(&mut rng, kind(k), 4, u128::MAX);
        let kk = kk.min(inst.num_actions());
        let table = inst.table();
        for s in candidate_slopes(&inst, kk).unwrap() {
            let mut total = 0.0;
            for a in 0..table.len() {
                total += p_unique(&inst, kk, table.ty(a), &s).unwrap();
                if let Slope::Finite(sv) = &s {
                    for b in 0..table.len() {
                        let (pa, pb) = (&table.points()[table.point_of(a)], &table.points()[table.point_of(b)]);
                        if a != b && pa.0 < pb.0 && descending_slope(pa, pb).as_ref() == Some(sv) {
                            total += p_segment(&inst, kk, table.ty(a), table.ty(b)).unwrap();
                        }
                    }
                }
            }
            prop_assert!((total - 1.0).abs() <= 1e-9, "slope {}: total {}", s, total);
        }
    }

    #[test]
    fn point_oracles_match_enumeration(seed: u64, k in 0u8..3, kk in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = fixtures::random_symmetric(&mut rng, kind(k), 6, 50_000);
        let kk = kk.min(inst.num_actions());
        let oracle = enumerate_oracle(&inst, kk, 1_000_000).unwrap();
        let pts = inst.table().points();
        for s in candidate_slopes(&inst, kk).unwrap() {
            for c in 0..pts.len() {
                let exact = persuade::model::to_f64(&oracle.point_unique(c, &s));
                prop_assert!((point_unique_prob(&inst, kk, c, &s) - exact).abs() <= 1e-9);
            }
        }
        for a in 0..pts.len() {
            for b in 0..pts.len() {
                if descending_slope(&pts[a], &pts[b]).is_some() {
                    let exact = persuade::model::to_f64(&oracle.point_segment(a, b));
                    prop_assert!((point_segment_prob(&inst, kk, a, b) - exact).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn id_oracles_match_enumeration(seed: u64, k in 0u8..3, kk in 1usize..7) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inst = fixtures::random_symmetric(&mut rng, kind(k), 6, 50_000);
        let kk = kk.min(inst.num_actions());
        let oracle = enumerate_oracle(&inst, kk, 1_000_000).unwrap();
        let table = inst.table();
        for s in candidate_slopes(&inst, kk).unwrap() {
            let exact = oracle.unique_table(&s);
            for (c, x) in exact.iter().enumerate() {
                let e = persuade::model::to_f64(x);
                prop_assert!((p_unique(&inst, kk, table.ty(c), &s).unwrap() - e).abs() <= 1e-9);
            }
        }
        for a in 0..table.len() {
            for b in 0..table.len() {
                if a != b {
                    let e = persuade::model::to_f64(&oracle.segment(a, b));
                    prop_assert!((p_segment(&inst, kk, table.ty(a), table.ty(b)).unwrap() - e).abs() <= 1e-9);
                }
            }
        }
    }
}

fn slope_case() -> impl Strategy<Value = (Vec<SlopeSegment>, Vec<SlopeUnique>, f64)> {
    let seg = (0.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, 0.01f64..2.0, 0.0f64..1.0);
    let uni = (0.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0);
    (
        prop::collection::vec(seg, 1..=20),
        prop::collection::vec(uni, 0..=5),
        -1.0f64..1.0,
        (1i64..5, 1i64..5),
    )
        .prop_map(|(segs, unis, rho_e, (n, d))| {
            let slope = -(n as f64) / d as f64;
            let s = Slope::Finite(rat(-n, d));
            let total: f64 = segs.iter().map(|g| g.0).sum::<f64>() + unis.iter().map(|u| u.0).sum::<f64>();
            let segments = segs
                .into_iter()
                .map(|(p, r, x, len, _)| {
                    // `a` has the higher sender value: b = a + len·(1, slope).
                    SlopeSegment { p: p / total, a: (r, x), b: (r + len, x + slope * len), slope: s.clone() }
                })
                .collect();
            let uniques = unis.into_iter().map(|(p, r, x)| SlopeUnique { p: p / total, point: (r, x) }).collect();
            (segments, uniques, rho_e)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn slope_lp_closed_form_matches_simplex((segments, uniques, rho_e) in slope_case()) {
        let s = segments[0].slope.clone();
        let closed = solve_slope_lp(&segments, &uniques, rho_e, &s).unwrap();
        let generic = solve_lp(&slope_lp_generic(&segments, &uniques, rho_e)).unwrap();
        match closed {
            Some(sol) => {
                prop_assert_eq!(generic.status, LpStatus::Optimal);
                let value = generic.objective + slope_lp_offset(&segments, &uniques);
                prop_assert!((sol.objective - value).abs() <= 1e-8, "{} vs {}", sol.objective, value);
                prop_assert!(sol.receiver >= rho_e - 1e-8);
                prop_assert!(sol.alphas.iter().all(|a| (0.0..=1.0).contains(a)));
            }
            None => prop_assert_eq!(generic.status, LpStatus::Infeasible),
        }
    }
}
