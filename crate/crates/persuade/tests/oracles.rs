//! Known values: figures quoted in the source text and values derived by
//! hand or by independent brute force.

use persuade::exact::{optimal_scheme_bruteforce, DEFAULT_STATE_BOUND};
use persuade::fixtures;
use persuade::geometry::{pareto_frontier, point_for_slope, Slope, SlopeCorrespondence};
use persuade::independent::{actions_greedy, check_rho_e_optimality, compute_signal, f_of_s, g_curve};
use persuade::lp::{solve_lp, LinearProgram, LpStatus, Relation};
use persuade::model::{rat, ActionType, Instance};
use persuade::prob_oracle::{p_segment, p_unique, subset_product_sum};
use persuade::symmetric::{imitation_scheme, slope_algorithm};

fn opt(inst: Instance, k: usize) -> f64 {
    optimal_scheme_bruteforce(&inst, k, DEFAULT_STATE_BOUND).unwrap().value
}

fn close(a: f64, b: f64, tol: f64) {
    assert!((a - b).abs() <= tol, "{a} vs {b}");
}

#[test]
fn three_types_sender_utility_is_two_thirds() {
    let inst = fixtures::three_types();
    close(slope_algorithm(&inst, 3).unwrap().expected_sender_utility, 2.0 / 3.0, 1e-9);
    close(opt(Instance::Symmetric(inst), 3), 2.0 / 3.0, 1e-9);
}

#[test]
fn three_types_without_information_is_one_third() {
    let inst = fixtures::three_types();
    assert_eq!(inst.rho_e(), rat(1, 3));
    assert_eq!(inst.xi_e(), rat(1, 3));
}

#[test]
fn three_types_two_signals_keep_two_thirds() {
    // Value confirmed by the brute-force oracle.
    let inst = fixtures::three_types();
    close(slope_algorithm(&inst, 2).unwrap().expected_sender_utility, 2.0 / 3.0, 1e-9);
    close(opt(Instance::Symmetric(inst), 2), 2.0 / 3.0, 1e-9);
}

#[test]
fn three_types_segment_probabilities() {
    let inst = fixtures::three_types();
    let ty = |i: usize| inst.table().ty(i).clone();
    // Both GB and BG in the first k slots of a uniform permutation of 3.
    close(p_segment(&inst, 3, &ty(0), &ty(1)).unwrap(), 1.0, 1e-12);
    close(p_segment(&inst, 2, &ty(0), &ty(1)).unwrap(), 1.0 / 3.0, 1e-12);
    // Slot pair {GB, BB} at k = 2 leaves GB the unique tangent point at slope −1.
    close(p_unique(&inst, 2, &ty(0), &Slope::Finite(rat(-1, 1))).unwrap(), 1.0 / 3.0, 1e-12);
    // BG is the tangent point at −∞ whenever present: 2/3 at k = 2.
    close(p_unique(&inst, 2, &ty(1), &Slope::NegInf).unwrap(), 2.0 / 3.0, 1e-12);
}

#[test]
fn relaxation_collapse_instance() {
    let inst = fixtures::collapse();
    assert!(!check_rho_e_optimality(&inst).holds());
    close(f_of_s(&inst, &[0]).unwrap().objective, 0.0, 1e-12);
    close(opt(Instance::Independent(inst), 2), 0.5, 1e-9);
}

#[test]
fn greedy_tight_instance_is_tight() {
    for k in 2..=6 {
        let inst = fixtures::greedy_tight_iid(k);
        let s = actions_greedy(&inst, k).unwrap();
        close(f_of_s(&inst, &s).unwrap().objective, 1.0, 1e-9);
        let u = compute_signal(&inst, &s).unwrap().expected_sender_utility;
        close(u, 1.0 - (1.0 - 1.0 / k as f64).powi(k as i32), 1e-9);
    }
}

#[test]
fn greedy_factor_for_two_signals() {
    let k = 2.0f64;
    let factor = (1.0 - (1.0 - 1.0 / k).powi(2)) * (1.0 - (1.0 - 1.0 / k).powi(1));
    assert_eq!(factor, 0.375);
}

#[test]
fn tight_random_order_scales_linearly() {
    for n in 2..=5 {
        let inst = Instance::Symmetric(fixtures::tight_random_order(n));
        close(opt(inst.clone(), n), 1.0, 1e-9);
        for k in 2..=n {
            close(opt(inst.clone(), k), k as f64 / n as f64, 1e-9);
        }
    }
}

#[test]
fn ratio_iid_optimum_is_probability_of_a_good_type() {
    // Sender and receiver utilities coincide, so the optimum recommends a
    // good action whenever one of the k observable actions is good.
    for n in 2..=5 {
        let inst = Instance::Symmetric(fixtures::ratio_iid(n));
        for k in 2..=n {
            let expect = 1.0 - (1.0 - 1.0 / n as f64).powi(k as i32);
            close(opt(inst.clone(), k), expect, 1e-9);
        }
    }
}

#[test]
fn imitation_closed_form_on_three_types() {
    // (k/n)·OPT_n + (n−k)/(n−1)·(ξ_E − OPT_n/n) with OPT_3 = 2/3, ξ_E = 1/3.
    let inst = fixtures::three_types();
    let u = imitation_scheme(&inst, 2).unwrap().expected_sender_utility;
    close(u, 2.0 / 3.0 * 2.0 / 3.0 + 0.5 * (1.0 / 3.0 - 2.0 / 9.0), 1e-12);
}

#[test]
fn frontier_of_hand_example() {
    let t = |id: &str, r: i64, x: i64| ActionType::new(id, rat(r, 1), rat(x, 1));
    // (0,3), (1,2), (2,1) collinear; (3,0) on the same line; (1,1) dominated.
    let pts = [t("a", 0, 3), t("b", 1, 2), t("c", 2, 1), t("d", 3, 0), t("e", 1, 1)];
    let f = pareto_frontier(&pts);
    let ids: Vec<&str> = f.vertices.iter().map(|v| v.id.as_str()).collect();
    assert_eq!(ids, ["a", "d"]);
    assert_eq!(f.segments.len(), 1);
    assert_eq!(f.segments[0].slope, rat(-1, 1));
    assert_eq!(
        point_for_slope(&f, &Slope::Finite(rat(-1, 1))),
        SlopeCorrespondence::Segment(pts[0].clone(), pts[3].clone())
    );
    assert_eq!(point_for_slope(&f, &Slope::zero()), SlopeCorrespondence::UniqueVertex(pts[0].clone()));
    assert_eq!(point_for_slope(&f, &Slope::NegInf), SlopeCorrespondence::UniqueVertex(pts[3].clone()));
}

#[test]
fn lp_hand_optimum() {
    // max x + y s.t. x + 2y ≤ 4, 3x + y ≤ 6: vertex (8/5, 6/5), value 14/5.
    let mut lp = LinearProgram::new(2);
    lp.objective = vec![1.0, 1.0];
    lp.add(vec![1.0, 2.0], Relation::Le, 4.0);
    lp.add(vec![3.0, 1.0], Relation::Le, 6.0);
    let s = solve_lp(&lp).unwrap();
    assert_eq!(s.status, LpStatus::Optimal);
    close(s.values[0], 1.6, 1e-10);
    close(s.values[1], 1.2, 1e-10);
    close(s.objective, 2.8, 1e-10);
    // Shadow prices: (2/5, 1/5).
    close(s.duals[0], 0.4, 1e-10);
    close(s.duals[1], 0.2, 1e-10);
}

#[test]
fn lp_equality_and_lower_bound() {
    // min x − y as max −x + y s.t. x + y = 1, x ≥ 1/4: optimum (1/4, 3/4).
    let mut lp = LinearProgram::new(2);
    lp.objective = vec![-1.0, 1.0];
    lp.add(vec![1.0, 1.0], Relation::Eq, 1.0);
    lp.add(vec![1.0, 0.0], Relation::Ge, 0.25);
    let s = solve_lp(&lp).unwrap();
    close(s.values[0], 0.25, 1e-10);
    close(s.values[1], 0.75, 1e-10);
}

#[test]
fn elementary_symmetric_sums() {
    let v = [1.0, 2.0, 3.0, 4.0];
    close(subset_product_sum(&v, 0).unwrap(), 1.0, 1e-12);
    close(subset_product_sum(&v, 1).unwrap(), 10.0, 1e-12);
    close(subset_product_sum(&v, 2).unwrap(), 35.0, 1e-12);
    close(subset_product_sum(&v, 3).unwrap(), 50.0, 1e-12);
    close(subset_product_sum(&v, 4).unwrap(), 24.0, 1e-12);
}

#[test]
fn g_curve_of_greedy_tight_action() {
    // Good (1,1) w.p. 1/k, bad (0,0), ρ_E = 1/k: g(z) = min(z, 1/k).
    let k = 4;
    let inst = fixtures::greedy_tight_iid(k);
    let c = g_curve(&inst, 0, 1.0 / k as f64).unwrap();
    for z in [0.0, 0.1, 0.25, 0.5, 1.0] {
        close(c.eval(z), z.min(0.25), 1e-9);
    }
}
