//! Schemes for symmetric instances: the Slope-Algorithm and its executor,
//! the Imitation scheme, and the sampled-LP bicriteria scheme.

use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exact::{solve_persuasion, PersuasionProblem, TabularScheme};
use crate::geometry::{frontier_indices, tangent, Point, Slope, Tangent};
use crate::lp::{solve_slope_lp, SlopeSegment, SlopeUnique};
use crate::model::{format_rational, to_f64, truncate, SchemeExecutor, State, SymmetricInstance, TypeTable};
use crate::prob_oracle::{point_segments, point_unique_prob, slopes_with_auxiliaries, PointSegment};

/// Mixing weight of a same-slope segment between utility points `a` (left,
/// higher sender value) and `b`; `alpha` is the weight on `a`.
#[derive(Clone, Debug, PartialEq)]
pub struct AlphaEntry {
    pub a: usize,
    pub b: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct SlopeScheme {
    pub k: usize,
    pub slope: Slope,
    pub alpha: Vec<AlphaEntry>,
    pub expected_sender_utility: f64,
    pub expected_receiver_utility: f64,
}

impl SlopeScheme {
    pub fn to_json(&self, table: &TypeTable) -> Value {
        let id = |p: usize| table.ty(table.rep(p)).id.clone();
        let s_star = match &self.slope {
            Slope::NegInf => json!("-inf"),
            Slope::Finite(v) => json!(format_rational(v)),
        };
        json!({
            "method": "slope",
            "k": self.k,
            "s_star": s_star,
            "alpha": self.alpha.iter().map(|e| json!({"a": id(e.a), "b": id(e.b), "alpha": e.alpha})).collect::<Vec<_>>(),
            "u_sender": self.expected_sender_utility,
            "u_receiver": self.expected_receiver_utility,
        })
    }

    pub fn alpha_for(&self, a: usize, b: usize) -> Option<f64> {
        self.alpha.iter().find(|e| e.a == a && e.b == b).map(|e| e.alpha)
    }
}

fn check_k(inst: &SymmetricInstance, k: usize) -> Result<()> {
    if k == 0 || k > inst.num_actions() {
        return Err(Error::Validation(format!("k = {k} outside 1..={}", inst.num_actions())));
    }
    Ok(())
}

struct SlopeCandidate {
    slope: Slope,
    segments: Vec<PointSegment>,
    alpha: f64,
    sender: f64,
    receiver: f64,
}

/// Optimal k-signal scheme: for each candidate slope, solve the LP over the
/// tangency correspondence of that slope and keep the best feasible one
/// (earliest candidate on ties).
pub fn slope_algorithm(inst: &SymmetricInstance, k: usize) -> Result<SlopeScheme> {
    check_k(inst, k)?;
    let pts = inst.table().points();
    let coords: Vec<(f64, f64)> = pts.iter().map(|(r, x)| (to_f64(r), to_f64(x))).collect();
    let segments = point_segments(inst, k);
    let slopes = slopes_with_auxiliaries(&segments.iter().map(|g| g.slope.clone()).collect::<Vec<_>>());
    let rho_e = to_f64(&inst.rho_e());
    let solved = crate::par::map(&slopes, |s| -> Result<Option<SlopeCandidate>> {
        let group: Vec<PointSegment> = match s {
            Slope::Finite(v) => segments.iter().filter(|g| &g.slope == v).cloned().collect(),
            Slope::NegInf => Vec::new(),
        };
        let lp_segments: Vec<SlopeSegment> = group
            .iter()
            .map(|g| SlopeSegment { p: g.p, a: coords[g.a], b: coords[g.b], slope: s.clone() })
            .collect();
        let uniques: Vec<SlopeUnique> = (0..pts.len())
            .filter_map(|pc| {
                let p = point_unique_prob(inst, k, pc, s);
                (p > 0.0).then_some(SlopeUnique { p, point: coords[pc] })
            })
            .collect();
        Ok(solve_slope_lp(&lp_segments, &uniques, rho_e, s)?.map(|sol| SlopeCandidate {
            slope: s.clone(),
            segments: group,
            alpha: sol.alphas.first().copied().unwrap_or(1.0),
            sender: sol.objective,
            receiver: sol.receiver,
        }))
    });
    let mut best: Option<SlopeCandidate> = None;
    for c in solved {
        if let Some(c) = c? {
            if best.as_ref().is_none_or(|b| c.sender > b.sender + 1e-12) {
                best = Some(c);
            }
        }
    }
    let best = best.ok_or_else(|| Error::Numerical("no candidate slope admits a persuasive scheme".into()))?;
    Ok(SlopeScheme {
        k,
        alpha: best.segments.iter().map(|g| AlphaEntry { a: g.a, b: g.b, alpha: best.alpha }).collect(),
        slope: best.slope,
        expected_sender_utility: best.sender,
        expected_receiver_utility: best.receiver,
    })
}

/// Runs a slope scheme: find the frontier of the first k realized types and
/// recommend an action whose type is tangent to s*, mixing by α on a
/// segment and uniformly among actions sharing a point.
pub struct SlopeExecutor<'a> {
    scheme: &'a SlopeScheme,
    table: &'a TypeTable,
    alpha: HashMap<(usize, usize), f64>,
}

impl<'a> SlopeExecutor<'a> {
    pub fn new(scheme: &'a SlopeScheme, table: &'a TypeTable) -> Self {
        let alpha = scheme.alpha.iter().map(|e| ((e.a, e.b), e.alpha)).collect();
        SlopeExecutor { scheme, table, alpha }
    }
}

impl SchemeExecutor for SlopeExecutor<'_> {
    fn recommendation_distribution(&self, state: &State) -> Result<Vec<(usize, f64)>> {
        let k = self.scheme.k;
        let slots = &state.types[..k];
        let mut seen: Vec<usize> = Vec::new();
        for &t in slots {
            let p = self.table.point_of(t);
            if !seen.contains(&p) {
                seen.push(p);
            }
        }
        let pts = self.table.points();
        let coords: Vec<&Point> = seen.iter().map(|&p| &pts[p]).collect();
        let (verts, _) = frontier_indices(&coords);
        let vcoords: Vec<&Point> = verts.iter().map(|&v| coords[v]).collect();
        let spread = |p: usize, mass: f64, out: &mut Vec<(usize, f64)>| {
            let holders: Vec<usize> = (0..k).filter(|&i| self.table.point_of(slots[i]) == p).collect();
            let each = mass / holders.len() as f64;
            out.extend(holders.into_iter().map(|i| (i, each)));
        };
        let mut out = Vec::new();
        match tangent(&vcoords, &self.scheme.slope) {
            Tangent::Vertex(v) => spread(seen[verts[v]], 1.0, &mut out),
            Tangent::Segment(l, r) => {
                let (a, b) = (seen[verts[l]], seen[verts[r]]);
                let alpha = *self.alpha.get(&(a, b)).ok_or_else(|| Error::Inconsistent {
                    state: state.ids(self.table),
                    reason: "frontier segment without a mixing weight".into(),
                })?;
                if alpha > 0.0 {
                    spread(a, alpha, &mut out);
                }
                if alpha < 1.0 {
                    spread(b, 1.0 - alpha, &mut out);
                }
            }
        }
        Ok(out)
    }
}

/// Imitation: run the optimal n-signal scheme and, whenever it recommends
/// an action outside [k], recommend a uniformly random action of [k].
#[derive(Clone, Debug)]
pub struct ImitationScheme {
    pub k: usize,
    pub n: usize,
    pub inner: SlopeScheme,
    pub expected_sender_utility: f64,
    pub expected_receiver_utility: f64,
}

pub fn imitation_scheme(inst: &SymmetricInstance, k: usize) -> Result<ImitationScheme> {
    check_k(inst, k)?;
    let n = inst.num_actions();
    let inner = slope_algorithm(inst, n)?;
    let (xi_e, rho_e) = (to_f64(&inst.xi_e()), to_f64(&inst.rho_e()));
    let blend = |own: f64, mean: f64| -> f64 {
        if n == 1 || k == n {
            return own;
        }
        let (kf, nf) = (k as f64, n as f64);
        kf / nf * own + (nf - kf) / (nf - 1.0) * (mean - own / nf)
    };
    Ok(ImitationScheme {
        k,
        n,
        expected_sender_utility: blend(inner.expected_sender_utility, xi_e),
        expected_receiver_utility: blend(inner.expected_receiver_utility, rho_e),
        inner,
    })
}

impl ImitationScheme {
    pub fn to_json(&self, table: &TypeTable) -> Value {
        json!({
            "method": "imitation",
            "k": self.k,
            "inner": self.inner.to_json(table),
            "u_sender": self.expected_sender_utility,
            "u_receiver": self.expected_receiver_utility,
        })
    }

    pub fn executor<'a>(&'a self, table: &'a TypeTable) -> ImitationExecutor<'a> {
        ImitationExecutor { inner: SlopeExecutor::new(&self.inner, table), k: self.k }
    }
}

pub struct ImitationExecutor<'a> {
    inner: SlopeExecutor<'a>,
    k: usize,
}

impl SchemeExecutor for ImitationExecutor<'_> {
    fn recommendation_distribution(&self, state: &State) -> Result<Vec<(usize, f64)>> {
        let mut mass = vec![0.0; self.k];
        let mut outside = 0.0;
        for (i, p) in self.inner.recommendation_distribution(state)? {
            if i < self.k {
                mass[i] += p;
            } else {
                outside += p;
            }
        }
        let share = outside / self.k as f64;
        Ok(mass.into_iter().enumerate().map(|(i, p)| (i, p + share)).filter(|(_, p)| *p > 0.0).collect())
    }
}

/// ε-persuasive scheme fitted to sampled states of the k-action truncation.
#[derive(Clone, Debug)]
pub struct BicriteriaScheme {
    pub k: usize,
    pub epsilon: f64,
    pub samples: usize,
    pub scheme: TabularScheme,
    /// Symmetrized empirical distribution the program was fitted to.
    pub training: Vec<(State, f64)>,
    pub empirical_sender: f64,
    pub empirical_receiver: f64,
}

impl BicriteriaScheme {
    pub fn to_json(&self, table: &TypeTable) -> Value {
        json!({
            "method": "bicriteria",
            "k": self.k,
            "epsilon": self.epsilon,
            "samples": self.samples,
            "u_sender": self.empirical_sender,
            "u_receiver": self.empirical_receiver,
            "scheme": self.scheme.to_json(table),
        })
    }
}

impl SchemeExecutor for BicriteriaScheme {
    fn recommendation_distribution(&self, state: &State) -> Result<Vec<(usize, f64)>> {
        self.scheme.recommendation_distribution(&State { types: state.types[..self.k].to_vec() })
    }
}

/// Largest k for which samples are closed under all k! reorderings.
const SYMMETRIZE_MAX_K: usize = 6;

fn permutations(k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    permute(&mut cur, 0, &mut out);
    out
}

fn permute(cur: &mut Vec<usize>, at: usize, out: &mut Vec<Vec<usize>>) {
    if at == cur.len() {
        out.push(cur.clone());
        return;
    }
    for i in at..cur.len() {
        cur.swap(at, i);
        permute(cur, at + 1, out);
        cur.swap(at, i);
    }
}

pub fn bicriteria_scheme<R: Rng + ?Sized>(
    inst: &SymmetricInstance,
    k: usize,
    epsilon: f64,
    samples: usize,
    rng: &mut R,
) -> Result<BicriteriaScheme> {
    check_k(inst, k)?;
    if samples == 0 {
        return Err(Error::Validation("samples must be at least 1".into()));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Validation(format!("epsilon must be finite and non-negative, got {epsilon}")));
    }
    let table = inst.table();
    let bound = crate::model::rat(1, 1);
    if table.types().iter().any(|t| t.rho > bound || -&t.rho > bound || t.xi > bound || -&t.xi > bound) {
        return Err(Error::Validation("bicriteria requires all utilities in [-1, 1]".into()));
    }
    let view = truncate(inst, k)?;
    let mut counts: BTreeMap<State, usize> = BTreeMap::new();
    for _ in 0..samples {
        *counts.entry(view.sample_state(rng)).or_default() += 1;
    }
    let perms = if k <= SYMMETRIZE_MAX_K { permutations(k) } else { vec![(0..k).collect()] };
    let mut weights: BTreeMap<State, f64> = BTreeMap::new();
    for (state, c) in &counts {
        let w = *c as f64 / samples as f64 / perms.len() as f64;
        for pi in &perms {
            let moved = State { types: pi.iter().map(|&j| state.types[j]).collect() };
            *weights.entry(moved).or_default() += w;
        }
    }
    let states: Vec<(State, f64)> = weights.into_iter().collect();
    let signals: Vec<usize> = (0..k).collect();
    let sol = solve_persuasion(&PersuasionProblem { table, states: &states, signals: &signals, slack: epsilon })?
        .ok_or_else(|| Error::Infeasible("sampled persuasion LP is infeasible".into()))?;
    let index: HashMap<&State, usize> = states.iter().enumerate().map(|(i, (s, _))| (s, i)).collect();
    let phi: Vec<Vec<f64>> = states
        .iter()
        .map(|(state, _)| {
            let mut avg = vec![0.0; k];
            for pi in &perms {
                let moved = State { types: pi.iter().map(|&j| state.types[j]).collect() };
                let row = &sol.phi[index[&moved]];
                for (j, &orig) in pi.iter().enumerate() {
                    avg[orig] += row[j] / perms.len() as f64;
                }
            }
            avg
        })
        .collect();
    let mut scheme = TabularScheme::new(table, signals, states.iter().map(|(s, _)| s.clone()).collect(), phi);
    scheme.fallback = true;
    Ok(BicriteriaScheme {
        k,
        epsilon,
        samples,
        scheme,
        training: states,
        empirical_sender: sol.objective,
        empirical_receiver: sol.receiver,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rat, ActionType, Scenario};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn three_types() -> SymmetricInstance {
        let t = |id: &str, r: i64, x: i64| ActionType::new(id, rat(r, 1), rat(x, 1));
        SymmetricInstance::new(Scenario::DRandomOrder {
            vectors: vec![vec![t("GB", 0, 1), t("BG", 1, 0), t("BB", 0, 0)]],
            vector_probs: vec![rat(1, 1)],
        })
        .unwrap()
    }

    #[test]
    fn three_types_slope_schemes() {
        let inst = three_types();
        let three = slope_algorithm(&inst, 3).unwrap();
        assert!((three.expected_sender_utility - 2.0 / 3.0).abs() < 1e-9);
        let two = slope_algorithm(&inst, 2).unwrap();
        assert!((two.expected_sender_utility - 2.0 / 3.0).abs() < 1e-9);
        assert_eq!(two.slope, Slope::Finite(rat(-1, 1)));
        assert_eq!(two.alpha, vec![AlphaEntry { a: 0, b: 1, alpha: 1.0 }]);
    }

    #[test]
    fn executor_follows_alpha() {
        let inst = three_types();
        let scheme = slope_algorithm(&inst, 2).unwrap();
        let ex = SlopeExecutor::new(&scheme, inst.table());
        let d = ex.recommendation_distribution(&State { types: vec![1, 0, 2] }).unwrap();
        assert_eq!(d, vec![(1, 1.0)]);
        let d = ex.recommendation_distribution(&State { types: vec![2, 1, 0] }).unwrap();
        assert_eq!(d, vec![(1, 1.0)]);
    }

    #[test]
    fn imitation_closed_form() {
        let inst = three_types();
        let im = imitation_scheme(&inst, 2).unwrap();
        // (2/3)(2/3) + (1/2)(1/3 − 2/9)
        assert!((im.expected_sender_utility - (4.0 / 9.0 + 1.0 / 18.0)).abs() < 1e-9);
    }

    #[test]
    fn bicriteria_vacuous_epsilon() {
        let inst = three_types();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = bicriteria_scheme(&inst, 3, 2.0, 200, &mut rng).unwrap();
        assert!((b.empirical_sender - 1.0).abs() < 1e-9);
    }
}
