//! Exhaustive ground truth on small instances: prior enumeration, the
//! optimal direct persuasive scheme by linear programming, and an exact
//! persuasiveness check for any executable scheme.
//!
//! The scheme LP has one variable per (state, signal), which is far too
//! many to write down densely. It is solved by column generation over pure
//! schemes (one signal per state): the master problem mixes pure schemes,
//! and pricing decomposes per state. States that agree on every coordinate
//! relevant to the LP are merged first.

use std::collections::{HashMap, HashSet};

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation, TOL};
use crate::model::{
    format_rational, to_f64, Instance, Rational, Scenario, SchemeExecutor, State, SymmetricInstance, TypeTable,
};

pub const DEFAULT_STATE_BOUND: u128 = 1_000_000;

#[derive(Clone, Debug)]
pub struct EnumeratedPrior {
    pub states: Vec<(State, Rational)>,
}

fn falling(n: usize, k: usize) -> BigInt {
    (0..k).fold(BigInt::one(), |acc, i| acc * BigInt::from(n - i))
}

fn support(dist: &[(usize, Rational)]) -> Vec<(usize, Rational)> {
    dist.iter().filter(|(_, q)| !q.is_zero()).cloned().collect()
}

/// Number of states with positive probability.
pub fn count_states(inst: &Instance) -> BigInt {
    match inst {
        Instance::Independent(s) => (0..s.num_actions())
            .map(|i| BigInt::from(support(s.dist(i)).len()))
            .product(),
        Instance::Symmetric(s) => {
            let obs = s.num_actions();
            let n = s.population();
            match s.scenario() {
                Scenario::Iid { .. } => {
                    BigInt::from(support(&s.components()[0].sources[0]).len()).pow(obs as u32)
                }
                Scenario::ProphetSecretary { .. } => {
                    // obs! · e_obs(support sizes)
                    let mut e = vec![BigInt::zero(); obs + 1];
                    e[0] = BigInt::one();
                    for src in &s.components()[0].sources {
                        let m = BigInt::from(support(src).len());
                        for j in (1..=obs).rev() {
                            let add = &e[j - 1] * &m;
                            e[j] += add;
                        }
                    }
                    &e[obs] * falling(obs, obs)
                }
                Scenario::DRandomOrder { .. } => {
                    let live = s.components().iter().filter(|c| !c.weight.is_zero()).count();
                    BigInt::from(live) * falling(n, obs)
                }
            }
        }
    }
}

pub fn enumerate_prior(inst: &Instance, state_bound: u128) -> Result<EnumeratedPrior> {
    let count = count_states(inst);
    let count_u = count.to_u128().unwrap_or(u128::MAX);
    if count_u > state_bound {
        return Err(Error::StateBound { count: count_u, bound: state_bound });
    }
    let mut states = Vec::with_capacity(count_u as usize);
    match inst {
        Instance::Independent(s) => {
            let dists: Vec<Vec<(usize, Rational)>> = (0..s.num_actions()).map(|i| support(s.dist(i))).collect();
            product_states(&dists, &mut states);
        }
        Instance::Symmetric(s) => enumerate_symmetric(s, &mut states),
    }
    Ok(EnumeratedPrior { states })
}

fn product_states(dists: &[Vec<(usize, Rational)>], out: &mut Vec<(State, Rational)>) {
    let mut idx = vec![0usize; dists.len()];
    loop {
        let types: Vec<usize> = idx.iter().zip(dists).map(|(&i, d)| d[i].0).collect();
        let p: Rational = idx.iter().zip(dists).map(|(&i, d)| d[i].1.clone()).product();
        out.push((State { types }, p));
        let mut pos = dists.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < dists[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

fn enumerate_symmetric(s: &SymmetricInstance, out: &mut Vec<(State, Rational)>) {
    let obs = s.num_actions();
    let n = s.population();
    if s.exchangeable() {
        let src = support(&s.components()[0].sources[0]);
        product_states(&vec![src; obs], out);
        return;
    }
    let scale = Rational::new(BigInt::one(), falling(n, obs));
    for comp in s.components() {
        if comp.weight.is_zero() {
            continue;
        }
        let sources: Vec<Vec<(usize, Rational)>> = comp.sources.iter().map(|d| support(d)).collect();
        let mut used = vec![false; n];
        let mut cur = Vec::with_capacity(obs);
        let base = &comp.weight * &scale;
        ordered_selections(&sources, obs, &mut used, &mut cur, base, out);
    }
}

fn ordered_selections(
    sources: &[Vec<(usize, Rational)>],
    obs: usize,
    used: &mut [bool],
    cur: &mut Vec<usize>,
    p: Rational,
    out: &mut Vec<(State, Rational)>,
) {
    if cur.len() == obs {
        out.push((State { types: cur.clone() }, p));
        return;
    }
    for d in 0..sources.len() {
        if used[d] {
            continue;
        }
        used[d] = true;
        for (t, q) in &sources[d] {
            cur.push(*t);
            ordered_selections(sources, obs, used, cur, &p * q, out);
            cur.pop();
        }
        used[d] = false;
    }
}

/// A direct scheme given state by state.
#[derive(Clone, Debug)]
pub struct TabularScheme {
    pub signals: Vec<usize>,
    pub states: Vec<State>,
    /// Per state, probability of each entry of `signals`.
    pub phi: Vec<Vec<f64>>,
    index: HashMap<State, usize>,
    /// Recommend the receiver-best signal (lowest index on ties) in states
    /// absent from the table instead of failing.
    pub fallback: bool,
    rho: Vec<f64>,
}

impl TabularScheme {
    pub fn new(table: &TypeTable, signals: Vec<usize>, states: Vec<State>, phi: Vec<Vec<f64>>) -> Self {
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        let rho = (0..table.len()).map(|t| table.rho_f(t)).collect();
        TabularScheme { signals, states, phi, index, fallback: false, rho }
    }

    pub fn to_json(&self, table: &TypeTable) -> Value {
        let rows: Vec<Value> = self
            .states
            .iter()
            .zip(&self.phi)
            .map(|(s, phi)| {
                let dist: Vec<Value> = self
                    .signals
                    .iter()
                    .zip(phi)
                    .filter(|(_, p)| **p > 1e-12)
                    .map(|(i, p)| json!({"action": i, "p": p}))
                    .collect();
                json!({"state": s.ids(table), "phi": dist})
            })
            .collect();
        json!({"signals": self.signals, "states": rows})
    }
}

impl SchemeExecutor for TabularScheme {
    fn recommendation_distribution(&self, state: &State) -> Result<Vec<(usize, f64)>> {
        match self.index.get(state) {
            Some(&i) => Ok(self.signals.iter().copied().zip(self.phi[i].iter().copied()).filter(|(_, p)| *p > 0.0).collect()),
            None if self.fallback => {
                let mut best = self.signals[0];
                for &i in &self.signals {
                    if self.rho[state.types[i]] > self.rho[state.types[best]] {
                        best = i;
                    }
                }
                Ok(vec![(best, 1.0)])
            }
            None => Err(Error::Inconsistent {
                state: state.types.iter().map(|t| t.to_string()).collect(),
                reason: "state not covered by the tabular scheme".into(),
            }),
        }
    }
}

/// The persuasion LP over a finite weighted state set: maximize expected
/// sender utility over direct schemes with signals `signals`, subject to
/// Σ_θ w_θ φ(θ,i) (ρ_i − ρ_j + slack) ≥ 0 for every signal i and action j.
pub(crate) struct PersuasionProblem<'a> {
    pub table: &'a TypeTable,
    pub states: &'a [(State, f64)],
    pub signals: &'a [usize],
    pub slack: f64,
}

pub(crate) struct PersuasionSolution {
    /// Per input state, probability of each signal.
    pub phi: Vec<Vec<f64>>,
    pub objective: f64,
    pub receiver: f64,
}

struct Merged {
    w: Vec<f64>,
    rho: Vec<Vec<f64>>,
    xi: Vec<Vec<f64>>,
    of_state: Vec<usize>,
}

fn merge(p: &PersuasionProblem) -> Merged {
    let table = p.table;
    let mut rho_class: HashMap<&Rational, u32> = HashMap::new();
    for t in table.types() {
        let next = rho_class.len() as u32;
        rho_class.entry(&t.rho).or_insert(next);
    }
    let n = p.states.first().map_or(0, |s| s.0.types.len());
    let is_signal: Vec<bool> = (0..n).map(|j| p.signals.contains(&j)).collect();
    let mut keys: HashMap<Vec<u32>, usize> = HashMap::new();
    let mut m = Merged { w: Vec::new(), rho: Vec::new(), xi: Vec::new(), of_state: Vec::new() };
    for (state, w) in p.states {
        let key: Vec<u32> = state
            .types
            .iter()
            .enumerate()
            .map(|(j, &t)| if is_signal[j] { table.point_of(t) as u32 } else { rho_class[&table.ty(t).rho] })
            .collect();
        let idx = *keys.entry(key).or_insert_with(|| {
            m.w.push(0.0);
            m.rho.push(state.types.iter().map(|&t| table.rho_f(t)).collect());
            m.xi.push(p.signals.iter().map(|&i| table.xi_f(state.types[i])).collect());
            m.w.len() - 1
        });
        m.w[idx] += w;
        m.of_state.push(idx);
    }
    m
}

const CG_TOL: f64 = 1e-10;
const CG_MAX_ITER: usize = 20_000;

pub(crate) fn solve_persuasion(p: &PersuasionProblem) -> Result<Option<PersuasionSolution>> {
    let m = merge(p);
    let n = m.rho.first().map_or(0, |r| r.len());
    let ks = p.signals.len();
    let devs: Vec<Vec<usize>> = p.signals.iter().map(|&i| (0..n).filter(|&j| j != i).collect()).collect();
    let mut row_of = Vec::with_capacity(ks);
    let mut rows = 0;
    for d in &devs {
        row_of.push(rows);
        rows += d.len();
    }
    let column = |choice: &[u16]| -> (f64, Vec<f64>) {
        let mut cost = 0.0;
        let mut a = vec![0.0; rows];
        for (th, &si) in choice.iter().enumerate() {
            let si = si as usize;
            let w = m.w[th];
            cost += w * m.xi[th][si];
            let ri = m.rho[th][p.signals[si]];
            for (r, &j) in devs[si].iter().enumerate() {
                a[row_of[si] + r] += w * (ri - m.rho[th][j] + p.slack);
            }
        }
        (cost, a)
    };
    let start: Vec<u16> = (0..m.w.len())
        .map(|th| {
            let mut best = 0;
            for si in 1..ks {
                if m.rho[th][p.signals[si]] > m.rho[th][p.signals[best]] {
                    best = si;
                }
            }
            best as u16
        })
        .collect();
    let mut choices: Vec<Vec<u16>> = Vec::new();
    let mut cols: Vec<(f64, Vec<f64>)> = Vec::new();
    let mut seen: HashSet<Vec<u16>> = HashSet::new();
    seen.insert(start.clone());
    cols.push(column(&start));
    choices.push(start);

    let mut phase1 = true;
    for _ in 0..CG_MAX_ITER {
        let nv = cols.len() + usize::from(phase1);
        let mut lp = LinearProgram::new(nv);
        if phase1 {
            lp.objective[nv - 1] = -1.0;
        } else {
            for (c, col) in cols.iter().enumerate() {
                lp.objective[c] = col.0;
            }
        }
        for r in 0..rows {
            let mut coeffs: Vec<f64> = cols.iter().map(|c| c.1[r]).collect();
            if phase1 {
                coeffs.push(1.0);
            }
            lp.add(coeffs, Relation::Ge, 0.0);
        }
        let mut conv = vec![1.0; nv];
        if phase1 {
            conv[nv - 1] = 0.0;
        }
        lp.add(conv, Relation::Eq, 1.0);
        let sol = solve_lp(&lp)?;
        if sol.status != LpStatus::Optimal {
            return Err(Error::Numerical(format!("master problem {:?}", sol.status)));
        }
        if phase1 && sol.objective >= -CG_TOL {
            phase1 = false;
            continue;
        }
        let y = &sol.duals;
        let obj_w = if phase1 { 0.0 } else { 1.0 };
        let ysum: Vec<f64> = (0..ks).map(|si| y[row_of[si]..row_of[si] + devs[si].len()].iter().sum()).collect();
        let mut choice = Vec::with_capacity(m.w.len());
        let mut rc = -y[rows];
        for th in 0..m.w.len() {
            let mut best = (f64::NEG_INFINITY, 0u16);
            for si in 0..ks {
                let ri = m.rho[th][p.signals[si]];
                let mut dev = ysum[si] * (ri + p.slack);
                for (r, &j) in devs[si].iter().enumerate() {
                    dev -= y[row_of[si] + r] * m.rho[th][j];
                }
                let score = m.w[th] * (obj_w * m.xi[th][si] - dev);
                if score > best.0 + 1e-15 {
                    best = (score, si as u16);
                }
            }
            rc += best.0;
            choice.push(best.1);
        }
        if rc <= CG_TOL || seen.contains(&choice) {
            if phase1 {
                return Ok(None);
            }
            let mut phi_m = vec![vec![0.0; ks]; m.w.len()];
            for (c, x) in sol.values.iter().enumerate().take(cols.len()) {
                if *x <= 0.0 {
                    continue;
                }
                for (th, &si) in choices[c].iter().enumerate() {
                    phi_m[th][si as usize] += x;
                }
            }
            for row in &mut phi_m {
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|v| *v /= total);
            }
            let mut objective = 0.0;
            let mut receiver = 0.0;
            for (th, row) in phi_m.iter().enumerate() {
                for (si, &v) in row.iter().enumerate().take(ks) {
                    objective += m.w[th] * v * m.xi[th][si];
                    receiver += m.w[th] * v * m.rho[th][p.signals[si]];
                }
            }
            let phi = m.of_state.iter().map(|&th| phi_m[th].clone()).collect();
            return Ok(Some(PersuasionSolution { phi, objective, receiver }));
        }
        seen.insert(choice.clone());
        cols.push(column(&choice));
        choices.push(choice);
    }
    Err(Error::Numerical("column generation did not converge".into()))
}

#[derive(Clone, Debug)]
pub struct BruteForceResult {
    pub scheme: TabularScheme,
    pub value: f64,
    pub receiver: f64,
}

fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur: Vec<usize> = (0..k).collect();
    loop {
        out.push(cur.clone());
        let mut i = k;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if cur[i] < n - k + i {
                cur[i] += 1;
                for j in i + 1..k {
                    cur[j] = cur[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// OPT_k: the best direct persuasive scheme recommending at most k distinct
/// actions. Symmetric instances use the first k actions; independent
/// instances try every k-subset (lowest subset wins ties).
pub fn optimal_scheme_bruteforce(inst: &Instance, k: usize, state_bound: u128) -> Result<BruteForceResult> {
    let n = inst.num_actions();
    if k == 0 || k > n {
        return Err(Error::Validation(format!("k = {k} outside 1..={n}")));
    }
    let prior = enumerate_prior(inst, state_bound)?;
    let states: Vec<(State, f64)> = prior.states.iter().map(|(s, q)| (s.clone(), to_f64(q))).collect();
    let subsets = match inst {
        Instance::Symmetric(_) => vec![(0..k).collect()],
        Instance::Independent(_) => k_subsets(n, k),
    };
    let table = inst.table();
    let solved = crate::par::map(&subsets, |signals| {
        solve_persuasion(&PersuasionProblem { table, states: &states, signals, slack: 0.0 })
    });
    let mut best: Option<(usize, PersuasionSolution)> = None;
    for (i, sol) in solved.into_iter().enumerate() {
        if let Some(sol) = sol? {
            if best.as_ref().is_none_or(|(_, b)| sol.objective > b.objective + 1e-12) {
                best = Some((i, sol));
            }
        }
    }
    let (i, sol) = best.ok_or_else(|| Error::Infeasible("no persuasive scheme found".into()))?;
    let scheme = TabularScheme::new(
        table,
        subsets[i].clone(),
        prior.states.into_iter().map(|(s, _)| s).collect(),
        sol.phi,
    );
    Ok(BruteForceResult { scheme, value: sol.objective, receiver: sol.receiver })
}

/// Best persuasive direct scheme whose recommendations are restricted to
/// `signals`; `None` when no such scheme is persuasive.
pub fn optimal_scheme_on_signals(
    inst: &Instance,
    signals: &[usize],
    state_bound: u128,
) -> Result<Option<BruteForceResult>> {
    let n = inst.num_actions();
    if signals.is_empty() || signals.iter().any(|&i| i >= n) {
        return Err(Error::Validation(format!("signals {signals:?} must be non-empty actions of 0..{n}")));
    }
    let prior = enumerate_prior(inst, state_bound)?;
    let states: Vec<(State, f64)> = prior.states.iter().map(|(s, q)| (s.clone(), to_f64(q))).collect();
    let table = inst.table();
    let Some(sol) = solve_persuasion(&PersuasionProblem { table, states: &states, signals, slack: 0.0 })? else {
        return Ok(None);
    };
    let scheme = TabularScheme::new(table, signals.to_vec(), prior.states.into_iter().map(|(s, _)| s).collect(), sol.phi);
    Ok(Some(BruteForceResult { scheme, value: sol.objective, receiver: sol.receiver }))
}

#[derive(Clone, Debug)]
pub struct SignalReport {
    pub action: usize,
    pub probability: f64,
    /// Conditional receiver utility of following the signal.
    pub follow: f64,
    /// Best conditional utility of deviating, and the deviation.
    pub best_deviation: f64,
    pub deviation: usize,
    /// Σ_θ q φ (ρ_i − ρ_best), unnormalized.
    pub margin: f64,
}

#[derive(Clone, Debug)]
pub struct ExactEvaluation {
    pub sender: f64,
    pub receiver: f64,
    pub signals: Vec<SignalReport>,
    pub persuasive: bool,
    pub distinct_signals: usize,
}

impl ExactEvaluation {
    pub fn to_json(&self) -> Value {
        json!({
            "u_sender": self.sender,
            "u_receiver": self.receiver,
            "persuasive": self.persuasive,
            "distinct_signals": self.distinct_signals,
            "signals": self.signals.iter().map(|s| json!({
                "action": s.action,
                "probability": s.probability,
                "follow": s.follow,
                "best_deviation": s.best_deviation,
                "deviation": s.deviation,
                "margin": s.margin,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Exact expected utilities and per-signal obedience of a scheme over the
/// enumerated prior. Persuasive iff every unnormalized margin ≥ −1e−8.
pub fn persuasiveness_check(
    scheme: &dyn SchemeExecutor,
    inst: &Instance,
    state_bound: u128,
) -> Result<ExactEvaluation> {
    let prior = enumerate_prior(inst, state_bound)?;
    let table = inst.table();
    let n = inst.num_actions();
    let mut prob = vec![0.0; n];
    let mut gain = vec![vec![0.0; n]; n];
    let (mut sender, mut receiver) = (0.0, 0.0);
    for (state, q) in &prior.states {
        let q = to_f64(q);
        let dist = scheme.recommendation_distribution(state)?;
        let total: f64 = dist.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > 1e-8 || dist.iter().any(|(i, p)| *p < -1e-12 || *i >= n) {
            return Err(Error::Inconsistent {
                state: state.ids(table),
                reason: format!("recommendation distribution sums to {total}"),
            });
        }
        for (i, p) in dist {
            let w = q * p;
            prob[i] += w;
            sender += w * table.xi_f(state.types[i]);
            receiver += w * table.rho_f(state.types[i]);
            for (j, g) in gain[i].iter_mut().enumerate() {
                *g += w * table.rho_f(state.types[j]);
            }
        }
    }
    let mut signals = Vec::new();
    let mut persuasive = true;
    for i in 0..n {
        if prob[i] <= 0.0 {
            continue;
        }
        let mut dev = 0;
        for j in 0..n {
            if gain[i][j] > gain[i][dev] {
                dev = j;
            }
        }
        let margin = gain[i][i] - gain[i][dev];
        if margin < -TOL {
            persuasive = false;
        }
        signals.push(SignalReport {
            action: i,
            probability: prob[i],
            follow: gain[i][i] / prob[i],
            best_deviation: gain[i][dev] / prob[i],
            deviation: dev,
            margin,
        });
    }
    let distinct_signals = signals.iter().filter(|s| s.probability > 1e-12).count();
    Ok(ExactEvaluation { sender, receiver, signals, persuasive, distinct_signals })
}

pub fn rational_json(r: &Rational) -> Value {
    json!(format_rational(r))
}
