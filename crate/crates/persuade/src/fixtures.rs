//! Named instances and seeded random generators used by tests, the
//! acceptance suite, benches and the `fixture` command.

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::Rng;

use crate::exact::count_states;
use crate::model::{rat, ActionType, IndependentInstance, Instance, Rational, Scenario, SymmetricInstance};

fn t(id: impl Into<String>, rho: Rational, xi: Rational) -> ActionType {
    ActionType::new(id, rho, xi)
}

fn int(v: i64) -> Rational {
    rat(v, 1)
}

/// Random order over types GB (0,1), BG (1,0), BB (0,0).
pub fn three_types() -> SymmetricInstance {
    SymmetricInstance::new(Scenario::DRandomOrder {
        vectors: vec![vec![t("GB", int(0), int(1)), t("BG", int(1), int(0)), t("BB", int(0), int(0))]],
        vector_probs: vec![int(1)],
    })
    .expect("valid fixture")
}

/// Two independent actions where the relaxation collapses: action 0 is a
/// deterministic (ρ, ξ) = (0, 1), action 1 is (1, 0) or (0, 0) evenly.
pub fn collapse() -> IndependentInstance {
    IndependentInstance::new(vec![
        vec![(t("a11", int(0), int(1)), int(1))],
        vec![(t("a21", int(1), int(0)), rat(1, 2)), (t("a22", int(0), int(0)), rat(1, 2))],
    ])
    .expect("valid fixture")
}

/// k IID actions with good type (1,1) w.p. 1/k and bad (0,0), plus a
/// deterministic action with ρ = 1/k and ξ = 0.
pub fn greedy_tight_iid(k: usize) -> IndependentInstance {
    let k = k as i64;
    let mut actions: Vec<Vec<(ActionType, Rational)>> = (0..k)
        .map(|i| {
            vec![
                (t(format!("good{i}"), int(1), int(1)), rat(1, k)),
                (t(format!("bad{i}"), int(0), int(0)), rat(k - 1, k)),
            ]
        })
        .collect();
    actions.push(vec![(t("safe", rat(1, k), int(0)), int(1))]);
    IndependentInstance::new(actions).expect("valid fixture")
}

/// IID over n actions: (1,1) w.p. 1/n, else (0,0).
pub fn ratio_iid(n: usize) -> SymmetricInstance {
    let ni = n as i64;
    SymmetricInstance::new(Scenario::Iid {
        palette: vec![(t("good", int(1), int(1)), rat(1, ni)), (t("bad", int(0), int(0)), rat(ni - 1, ni))],
        n,
    })
    .expect("valid fixture")
}

/// Random order of one (1,1) type and n − 1 distinct (0,0) types.
pub fn tight_random_order(n: usize) -> SymmetricInstance {
    let mut v = vec![t("top", int(1), int(1))];
    v.extend((1..n).map(|i| t(format!("zero{i}"), int(0), int(0))));
    SymmetricInstance::new(Scenario::DRandomOrder { vectors: vec![v], vector_probs: vec![int(1)] })
        .expect("valid fixture")
}

pub fn named(name: &str, k: usize) -> Option<Instance> {
    Some(match name {
        "three_types" => Instance::Symmetric(three_types()),
        "collapse" => Instance::Independent(collapse()),
        "greedy_tight_iid" => Instance::Independent(greedy_tight_iid(k)),
        "ratio_iid" => Instance::Symmetric(ratio_iid(k)),
        "tight_random_order" => Instance::Symmetric(tight_random_order(k)),
        _ => return None,
    })
}

pub const NAMES: [&str; 5] = ["three_types", "collapse", "greedy_tight_iid", "ratio_iid", "tight_random_order"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymmetricKind {
    Iid,
    ProphetSecretary,
    DRandomOrder,
}

fn random_dist<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Vec<Rational> {
    let w: Vec<i64> = (0..size).map(|_| rng.gen_range(1..=4)).collect();
    let total: i64 = w.iter().sum();
    w.into_iter().map(|x| rat(x, total)).collect()
}

fn random_point<R: Rng + ?Sized>(rng: &mut R, grid: i64) -> (Rational, Rational) {
    (int(rng.gen_range(0..=grid)), int(rng.gen_range(0..=grid)))
}

/// Symmetric instance with n ≤ `max_n` actions, ≤ 4 types per distribution
/// and at most 3 vectors, on a small integer grid so that ties and
/// collinear points are common. Regenerates until at most `max_states`
/// states remain.
pub fn random_symmetric<R: Rng + ?Sized>(
    rng: &mut R,
    kind: SymmetricKind,
    max_n: usize,
    max_states: u128,
) -> SymmetricInstance {
    loop {
        let n = rng.gen_range(2..=max_n);
        let inst = match kind {
            SymmetricKind::Iid => {
                let m = rng.gen_range(1..=4);
                let probs = random_dist(rng, m);
                let palette = probs
                    .into_iter()
                    .enumerate()
                    .map(|(i, q)| {
                        let (r, x) = random_point(rng, 3);
                        (t(format!("t{i}"), r, x), q)
                    })
                    .collect();
                SymmetricInstance::new(Scenario::Iid { palette, n })
            }
            SymmetricKind::ProphetSecretary => {
                let mut id = 0;
                let dists = (0..n)
                    .map(|_| {
                        let m = rng.gen_range(1..=4);
                        random_dist(rng, m)
                            .into_iter()
                            .map(|q| {
                                let (r, x) = random_point(rng, 3);
                                id += 1;
                                (t(format!("t{id}"), r, x), q)
                            })
                            .collect()
                    })
                    .collect();
                SymmetricInstance::new(Scenario::ProphetSecretary { dists })
            }
            SymmetricKind::DRandomOrder => {
                let d = rng.gen_range(1..=3);
                let mut id = 0;
                let vectors = (0..d)
                    .map(|_| {
                        (0..n)
                            .map(|_| {
                                let (r, x) = random_point(rng, 3);
                                id += 1;
                                t(format!("t{id}"), r, x)
                            })
                            .collect()
                    })
                    .collect();
                let vector_probs = random_dist(rng, d);
                SymmetricInstance::new(Scenario::DRandomOrder { vectors, vector_probs })
            }
        }
        .expect("generated instance is valid");
        let count = count_states(&Instance::Symmetric(inst.clone())).to_u128().unwrap_or(u128::MAX);
        if count <= max_states {
            return inst;
        }
    }
}

/// Independent instance with n actions of 1–3 types each, one of which (at
/// a random position) is deterministic with receiver utility ρ_E.
pub fn random_rho_e_optimal<R: Rng + ?Sized>(rng: &mut R, n: usize, max_states: u128) -> IndependentInstance {
    assert!(n >= 2);
    loop {
        let mut id = 0;
        let mut actions: Vec<Vec<(ActionType, Rational)>> = (0..n - 1)
            .map(|_| {
                let m = rng.gen_range(1..=3);
                random_dist(rng, m)
                    .into_iter()
                    .map(|q| {
                        let (r, x) = random_point(rng, 3);
                        id += 1;
                        (t(format!("t{id}"), r, x), q)
                    })
                    .collect()
            })
            .collect();
        let rho_e = actions
            .iter()
            .map(|a| a.iter().map(|(ty, q)| q * &ty.rho).sum::<Rational>())
            .max()
            .expect("at least one action");
        let safe = vec![(t("safe", rho_e, int(rng.gen_range(0..=3))), int(1))];
        let pos = rng.gen_range(0..n);
        actions.insert(pos, safe);
        let inst = IndependentInstance::new(actions).expect("generated instance is valid");
        let count = count_states(&Instance::Independent(inst.clone())).to_u128().unwrap_or(u128::MAX);
        if count <= max_states {
            return inst;
        }
    }
}

/// Prophet-secretary instance with `n` distributions over a shared pool of
/// `points` coordinate points; every distribution uses all points.
pub fn shared_pool_prophet_secretary<R: Rng + ?Sized>(rng: &mut R, n: usize, points: usize) -> SymmetricInstance {
    let mut pool: Vec<(Rational, Rational)> = Vec::with_capacity(points);
    while pool.len() < points {
        let p = (rat(rng.gen_range(0..=100), 100), rat(rng.gen_range(0..=100), 100));
        if !pool.contains(&p) {
            pool.push(p);
        }
    }
    pool.shuffle(rng);
    let dists = (0..n)
        .map(|d| {
            random_dist(rng, points)
                .into_iter()
                .zip(&pool)
                .enumerate()
                .map(|(j, (q, (r, x)))| (t(format!("d{d}p{j}"), r.clone(), x.clone()), q))
                .collect()
        })
        .collect();
    SymmetricInstance::new(Scenario::ProphetSecretary { dists }).expect("generated instance is valid")
}
