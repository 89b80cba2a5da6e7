//! Schemes for independent actions: the relaxation f(S) and its per-action
//! curves g_i, greedy and FPTAS action selection, ActionsReduce, and the
//! coin-flipping executor ComputeSignal.

use std::collections::{HashMap, HashSet};

use num_traits::Zero;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::lp::{solve_lp, LinearProgram, LpStatus, Relation};
use crate::model::{to_f64, IndependentInstance, SchemeExecutor, State};

#[derive(Clone, Debug, PartialEq)]
pub enum RhoEOptimality {
    /// Some action has deterministic receiver utility ρ_E.
    Holds { action: usize },
    Unknown { warning: String },
}

impl RhoEOptimality {
    pub fn holds(&self) -> bool {
        matches!(self, RhoEOptimality::Holds { .. })
    }
}

pub fn check_rho_e_optimality(inst: &IndependentInstance) -> RhoEOptimality {
    let rho_e = inst.rho_e();
    for i in 0..inst.num_actions() {
        let live: Vec<_> = inst.actions()[i].iter().filter(|(_, q)| !q.is_zero()).collect();
        if live.iter().all(|(t, _)| t.rho == rho_e) {
            return RhoEOptimality::Holds { action: i };
        }
    }
    RhoEOptimality::Unknown {
        warning: "no action has deterministic receiver utility rho_E; rho_E-optimality cannot be verified and \
                  persuasiveness of the relaxation-based schemes is not guaranteed"
            .into(),
    }
}

/// (q, ρ, ξ) per support entry of one action.
fn action_entries(inst: &IndependentInstance, i: usize) -> Vec<(f64, f64, f64)> {
    inst.dist(i).iter().map(|(t, q)| (to_f64(q), inst.table().rho_f(*t), inst.table().xi_f(*t))).collect()
}

/// g(z) for one action, with x and the dual of the mass constraint (a
/// supergradient of g at z).
fn g_lp(entries: &[(f64, f64, f64)], rho_e: f64, z: f64) -> Result<(f64, Vec<f64>, f64)> {
    let m = entries.len();
    let mut lp = LinearProgram::new(m);
    for (j, &(q, _, xi)) in entries.iter().enumerate() {
        lp.objective[j] = xi;
        lp.bounds[j] = (0.0, q);
    }
    lp.add(vec![1.0; m], Relation::Le, z);
    lp.add(entries.iter().map(|&(_, rho, _)| rho - rho_e).collect(), Relation::Ge, 0.0);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(format!("g LP ended {:?}", sol.status)));
    }
    Ok((sol.objective, sol.values, sol.duals[0].max(0.0)))
}

/// Piecewise-linear concave g_i on [0, 1] as breakpoints (z, g(z), slope to
/// the right).
#[derive(Clone, Debug)]
pub struct GiCurve {
    pub action: usize,
    pub breakpoints: Vec<(f64, f64, f64)>,
}

impl GiCurve {
    pub fn eval(&self, z: f64) -> f64 {
        let z = z.clamp(0.0, 1.0);
        let mut out = 0.0;
        for &(bz, v, s) in &self.breakpoints {
            if bz <= z {
                out = v + s * (z - bz);
            } else {
                break;
            }
        }
        out
    }
}

const CURVE_TOL: f64 = 1e-10;

/// Builds g_i by the sandwich method: tangent lines from LP duals at the
/// interval ends meet at a candidate breakpoint; if g matches the tangents
/// there the interval is resolved, else it is split.
pub fn g_curve(inst: &IndependentInstance, action: usize, rho_e: f64) -> Result<GiCurve> {
    let entries = action_entries(inst, action);
    let lo = g_lp(&entries, rho_e, 0.0)?;
    let hi = g_lp(&entries, rho_e, 1.0)?;
    let mut pts = vec![(0.0, lo.0.max(0.0)), (1.0, hi.0)];
    let mut stack = vec![((0.0, lo.0.max(0.0), lo.2), (1.0, hi.0, hi.2), 0usize)];
    while let Some(((z1, v1, d1), (z2, v2, d2), depth)) = stack.pop() {
        if d1 - d2 <= CURVE_TOL || z2 - z1 <= 1e-12 || depth > 60 {
            continue;
        }
        let zc = ((v2 - v1 + d1 * z1 - d2 * z2) / (d1 - d2)).clamp(z1, z2);
        let (vc, _, dc) = g_lp(&entries, rho_e, zc)?;
        let tangent = v1 + d1 * (zc - z1);
        pts.push((zc, vc));
        if tangent - vc > CURVE_TOL * (1.0 + vc.abs()) && zc > z1 + 1e-12 && zc < z2 - 1e-12 {
            stack.push(((z1, v1, d1), (zc, vc, dc), depth + 1));
            stack.push(((zc, vc, dc), (z2, v2, d2), depth + 1));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    pts.dedup_by(|b, a| (b.0 - a.0).abs() <= 1e-12);
    // drop interior points on a straight line
    let mut kept: Vec<(f64, f64)> = Vec::new();
    for p in pts {
        while kept.len() >= 2 {
            let (a, b) = (kept[kept.len() - 2], kept[kept.len() - 1]);
            let s1 = (b.1 - a.1) / (b.0 - a.0);
            let s2 = (p.1 - b.1) / (p.0 - b.0);
            if (s1 - s2).abs() <= 1e-9 {
                kept.pop();
            } else {
                break;
            }
        }
        kept.push(p);
    }
    let mut breakpoints = Vec::with_capacity(kept.len());
    for w in 0..kept.len() {
        let slope = if w + 1 < kept.len() {
            ((kept[w + 1].1 - kept[w].1) / (kept[w + 1].0 - kept[w].0)).max(0.0)
        } else {
            0.0
        };
        breakpoints.push((kept[w].0, kept[w].1, slope));
    }
    Ok(GiCurve { action, breakpoints })
}

/// g_i(z) by a direct LP; used to cross-check the curves.
pub fn g_value(inst: &IndependentInstance, action: usize, rho_e: f64, z: f64) -> Result<f64> {
    Ok(g_lp(&action_entries(inst, action), rho_e, z)?.0)
}

#[derive(Clone, Debug)]
pub struct RelaxationSolution {
    /// S ∪ {designated}, ascending.
    pub actions: Vec<usize>,
    /// Per action of the instance (0 outside the set), Σ_j x_ij.
    pub z: Vec<f64>,
    /// Per action, per support entry.
    pub x: Vec<Vec<f64>>,
    /// Per action, Σ_j x_ij ξ_ij.
    pub value: Vec<f64>,
    pub objective: f64,
}

/// f(S) as one LP over {z_i, x_ij}, i ∈ S ∪ {designated}; afterwards
/// z_i := Σ_j x_ij.
pub fn f_of_s(inst: &IndependentInstance, s: &[usize]) -> Result<RelaxationSolution> {
    let n = inst.num_actions();
    let d = inst.designated();
    if s.iter().any(|&i| i == d || i >= n) {
        return Err(Error::Validation("S must contain non-designated actions only".into()));
    }
    let mut actions: Vec<usize> = s.to_vec();
    actions.push(d);
    actions.sort_unstable();
    actions.dedup();
    let rho_e = to_f64(&inst.rho_e());
    let entries: Vec<Vec<(f64, f64, f64)>> = actions.iter().map(|&i| action_entries(inst, i)).collect();
    let mut offset = Vec::with_capacity(actions.len());
    let mut nv = actions.len();
    for e in &entries {
        offset.push(nv);
        nv += e.len();
    }
    let mut lp = LinearProgram::new(nv);
    let mut total = vec![0.0; nv];
    for (a, e) in entries.iter().enumerate() {
        total[a] = 1.0;
        lp.bounds[a] = (0.0, 1.0);
        let mut mass = vec![0.0; nv];
        let mut obey = vec![0.0; nv];
        mass[a] = -1.0;
        for (j, &(q, rho, xi)) in e.iter().enumerate() {
            let v = offset[a] + j;
            lp.objective[v] = xi;
            lp.bounds[v] = (0.0, q);
            mass[v] = 1.0;
            obey[v] = rho - rho_e;
        }
        lp.add(mass, Relation::Le, 0.0);
        lp.add(obey, Relation::Ge, 0.0);
    }
    lp.add(total, Relation::Le, 1.0);
    let sol = solve_lp(&lp)?;
    if sol.status != LpStatus::Optimal {
        return Err(Error::Numerical(format!("relaxation LP ended {:?}", sol.status)));
    }
    let mut z = vec![0.0; n];
    let mut x = vec![Vec::new(); n];
    let mut value = vec![0.0; n];
    for (a, &i) in actions.iter().enumerate() {
        let xs: Vec<f64> = (0..entries[a].len())
            .map(|j| sol.values[offset[a] + j].clamp(0.0, entries[a][j].0))
            .collect();
        z[i] = xs.iter().sum();
        value[i] = xs.iter().zip(&entries[a]).map(|(v, e)| v * e.2).sum();
        x[i] = xs;
    }
    let objective = value.iter().sum();
    Ok(RelaxationSolution { actions, z, x, value, objective })
}

fn check_k(inst: &IndependentInstance, k: usize) -> Result<()> {
    let n = inst.num_actions();
    if k < 2 || k > n {
        return Err(Error::Validation(format!("k = {k} outside 2..={n}")));
    }
    Ok(())
}

fn others(inst: &IndependentInstance) -> Vec<usize> {
    (0..inst.num_actions()).filter(|&i| i != inst.designated()).collect()
}

/// Greedy maximization of f over sets of k − 1 non-designated actions.
pub fn actions_greedy(inst: &IndependentInstance, k: usize) -> Result<Vec<usize>> {
    check_k(inst, k)?;
    let mut s: Vec<usize> = Vec::new();
    for _ in 0..k - 1 {
        let cands: Vec<usize> = others(inst).into_iter().filter(|i| !s.contains(i)).collect();
        let vals = crate::par::map(&cands, |&i| {
            let mut t = s.clone();
            t.push(i);
            f_of_s(inst, &t).map(|r| r.objective)
        });
        let mut best: Option<(usize, f64)> = None;
        for (&i, v) in cands.iter().zip(vals) {
            let v = v?;
            if best.is_none_or(|(_, b)| v > b + 1e-12) {
                best = Some((i, v));
            }
        }
        s.push(best.map(|b| b.0).ok_or_else(|| Error::Validation("not enough actions".into()))?);
    }
    s.sort_unstable();
    Ok(s)
}

/// Keep the k − 1 non-designated actions with largest g_i(z*_i) in f of all
/// non-designated actions.
pub fn actions_reduce(inst: &IndependentInstance, k: usize) -> Result<Vec<usize>> {
    check_k(inst, k)?;
    let all = others(inst);
    let rel = f_of_s(inst, &all)?;
    let mut ranked = all;
    ranked.sort_by(|&a, &b| rel.value[b].total_cmp(&rel.value[a]).then(a.cmp(&b)));
    ranked.truncate(k - 1);
    ranked.sort_unstable();
    Ok(ranked)
}

#[derive(Clone, Debug)]
pub struct KnapsackItem {
    pub action: usize,
    pub wr: f64,
    pub pr: f64,
    pub wo: f64,
    pub po: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnapsackResult {
    /// Packed non-designated actions, ascending.
    pub actions: Vec<usize>,
    pub value: f64,
}

/// Rounded-profit DP over (count, required profit, optional profit) that
/// keeps the minimum required size per entry. `None` if no selection fits.
pub fn knapsack_dp(
    designated: &KnapsackItem,
    items: &[KnapsackItem],
    m: f64,
    k: usize,
    delta: f64,
) -> Result<Option<KnapsackResult>> {
    if designated.wr > 1.0 + 1e-12 {
        return Ok(None);
    }
    let items: Vec<&KnapsackItem> = items.iter().filter(|it| it.wr <= 1.0 + 1e-12).collect();
    let p_max = std::iter::once(designated)
        .chain(items.iter().copied())
        .map(|it| it.pr.max(m.min(it.po)))
        .fold(0.0, f64::max);
    let kappa = delta * p_max / (2.0 * k as f64);
    if kappa <= 0.0 {
        return Ok(Some(KnapsackResult { actions: Vec::new(), value: 0.0 }));
    }
    let limit = ((2.0 * k as f64 / delta).floor() as u64 + 1) * k as u64;
    let round = |p: f64| (p / kappa + 1e-9).floor().max(0.0) as u64;
    let mut table: HashMap<(usize, u64, u64), (f64, Vec<usize>)> = HashMap::new();
    table.insert((0, round(designated.pr), round(designated.po)), (designated.wr, Vec::new()));
    for it in &items {
        let (r, o) = (round(it.pr), round(it.po));
        let snapshot: Vec<_> = table.iter().map(|(k, v)| (*k, v.clone())).collect();
        for ((j, pr, po), (a, set)) in snapshot {
            if j + 1 > k - 1 {
                continue;
            }
            let na = a + it.wr;
            if na > 1.0 + 1e-12 {
                continue;
            }
            let key = (j + 1, pr + r, po + o);
            if key.1 > limit || key.2 > limit {
                return Err(Error::Numerical("knapsack profit exceeds the table bound".into()));
            }
            let mut nset = set.clone();
            nset.push(it.action);
            match table.get(&key) {
                Some((old, _)) if *old <= na => {}
                _ => {
                    table.insert(key, (na, nset));
                }
            }
        }
    }
    let mut best: Option<KnapsackResult> = None;
    let mut entries: Vec<_> = table.into_iter().collect();
    entries.sort_by_key(|a| a.0);
    for ((_, pr, po), (a, set)) in entries {
        if a > 1.0 + 1e-12 {
            continue;
        }
        let v = kappa * pr as f64 + (m - m * a.min(1.0)).min(kappa * po as f64);
        if best.as_ref().is_none_or(|b| v > b.value + 1e-15) {
            let mut actions = set;
            actions.sort_unstable();
            best = Some(KnapsackResult { actions, value: v });
        }
    }
    Ok(best)
}

fn approx_eq(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Pads `s` with the lowest-index unused non-designated actions.
fn pad(inst: &IndependentInstance, mut s: Vec<usize>, size: usize) -> Vec<usize> {
    for i in others(inst) {
        if s.len() >= size {
            break;
        }
        if !s.contains(&i) {
            s.push(i);
        }
    }
    s.sort_unstable();
    s
}

/// Set selection by guessing the last marginal particle profit and solving
/// a rounded knapsack per guess. Each guess yields a candidate set; the
/// candidate with largest f wins (earliest guess on ties).
pub fn fptas_select(inst: &IndependentInstance, k: usize, epsilon: f64) -> Result<Vec<usize>> {
    check_k(inst, k)?;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Validation(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    let delta = epsilon / 2.0;
    let steps = (k as f64 / delta).ceil() as usize;
    let tau = 1.0 / steps as f64;
    let n = inst.num_actions();
    let rho_e = to_f64(&inst.rho_e());
    let curves = crate::par::map_range(n, |i| g_curve(inst, i, rho_e));
    let curves: Vec<GiCurve> = curves.into_iter().collect::<Result<_>>()?;
    let values: Vec<Vec<f64>> =
        curves.iter().map(|c| (0..=steps).map(|l| c.eval(l as f64 * tau)).collect()).collect();
    let marginals: Vec<Vec<f64>> =
        values.iter().map(|v| (1..=steps).map(|l| (v[l] - v[l - 1]).max(0.0)).collect()).collect();
    let mut guesses: Vec<f64> = marginals.iter().flatten().copied().collect();
    guesses.sort_by(|a, b| b.total_cmp(a));
    guesses.dedup_by(|b, a| approx_eq(*a, *b));
    let item = |i: usize, m: f64| -> KnapsackItem {
        let above = marginals[i].iter().take_while(|&&v| v > m && !approx_eq(v, m)).count();
        let at = marginals[i][above..].iter().take_while(|&&v| approx_eq(v, m)).count();
        let wo = tau * at as f64;
        KnapsackItem { action: i, wr: tau * above as f64, pr: values[i][above], wo, po: m * wo }
    };
    let d = inst.designated();
    let sets = crate::par::map(&guesses, |&m| -> Result<Option<Vec<usize>>> {
        let items: Vec<KnapsackItem> = others(inst).into_iter().map(|i| item(i, m)).collect();
        Ok(knapsack_dp(&item(d, m), &items, m, k, delta)?.map(|r| r.actions))
    });
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for s in sets {
        let Some(s) = s? else { continue };
        let s = pad(inst, s, k - 1);
        if !seen.insert(s.clone()) {
            continue;
        }
        let v = f_of_s(inst, &s)?.objective;
        if best.as_ref().is_none_or(|(_, b)| v > b + 1e-12) {
            best = Some((s, v));
        }
    }
    Ok(best.map(|b| b.0).unwrap_or_else(|| pad(inst, Vec::new(), k - 1)))
}

/// ComputeSignal's scheme: coins in ratio order, fallback to the
/// designated action.
#[derive(Clone, Debug)]
pub struct ExPostScheme {
    pub order: Vec<usize>,
    /// Acceptance probability per global type index (0 outside the order).
    pub accept: Vec<f64>,
    pub fallback: usize,
    pub relaxation: RelaxationSolution,
    pub persuasiveness_guaranteed: bool,
    pub expected_sender_utility: f64,
    pub expected_receiver_utility: f64,
}

pub fn compute_signal(inst: &IndependentInstance, s: &[usize]) -> Result<ExPostScheme> {
    let rel = f_of_s(inst, s)?;
    let ratio = |i: usize| if rel.z[i] > 0.0 { rel.value[i] / rel.z[i] } else { 0.0 };
    let mut order = rel.actions.clone();
    order.sort_by(|&a, &b| ratio(b).total_cmp(&ratio(a)).then(a.cmp(&b)));
    let table = inst.table();
    let mut accept = vec![0.0; table.len()];
    for &i in &order {
        for (j, (t, q)) in inst.dist(i).iter().enumerate() {
            let q = to_f64(q);
            accept[*t] = if q > 0.0 { (rel.x[i][j] / q).clamp(0.0, 1.0) } else { 0.0 };
        }
    }
    let fallback = inst.designated();
    // closed form: action i_l is reached with probability Π_{l'<l}(1 − z)
    let (mut us, mut ur) = (0.0, 0.0);
    let mut reach = 1.0;
    for &i in &order {
        us += reach * rel.value[i];
        ur += reach * rel.x[i].iter().zip(inst.dist(i)).map(|(x, (t, _))| x * table.rho_f(*t)).sum::<f64>();
        reach *= 1.0 - rel.z[i];
    }
    let miss: f64 = order.iter().filter(|&&i| i != fallback).map(|&i| 1.0 - rel.z[i]).product();
    for (j, (t, q)) in inst.dist(fallback).iter().enumerate() {
        let rest = to_f64(q) - rel.x[fallback][j];
        us += miss * rest * table.xi_f(*t);
        ur += miss * rest * table.rho_f(*t);
    }
    Ok(ExPostScheme {
        order,
        accept,
        fallback,
        relaxation: rel,
        persuasiveness_guaranteed: check_rho_e_optimality(inst).holds(),
        expected_sender_utility: us,
        expected_receiver_utility: ur,
    })
}

impl SchemeExecutor for ExPostScheme {
    fn recommendation_distribution(&self, state: &State) -> Result<Vec<(usize, f64)>> {
        let mut out: Vec<(usize, f64)> = Vec::new();
        let mut reach = 1.0;
        for &i in &self.order {
            let a = self.accept[state.types[i]];
            if a > 0.0 {
                out.push((i, reach * a));
            }
            reach *= 1.0 - a;
        }
        if reach > 0.0 {
            match out.iter_mut().find(|(i, _)| *i == self.fallback) {
                Some(e) => e.1 += reach,
                None => out.push((self.fallback, reach)),
            }
        }
        Ok(out)
    }
}

impl ExPostScheme {
    pub fn to_json(&self, inst: &IndependentInstance, method: &str, k: usize) -> Value {
        let table = inst.table();
        let mut accept = Map::new();
        for &i in &self.order {
            let mut per = Map::new();
            for (t, _) in inst.dist(i) {
                per.insert(table.ty(*t).id.clone(), json!(self.accept[*t]));
            }
            accept.insert(i.to_string(), Value::Object(per));
        }
        let kf = k as f64;
        json!({
            "method": "independent",
            "selection": method,
            "k": k,
            "order": self.order,
            "accept": accept,
            "fallback": self.fallback,
            "f_of_s": self.relaxation.objective,
            "u_sender": self.expected_sender_utility,
            "u_receiver": self.expected_receiver_utility,
            "u_sender_lb": (1.0 - (1.0 - 1.0 / kf).powi(k as i32)) * self.relaxation.objective,
            "persuasiveness_guaranteed": self.persuasiveness_guaranteed,
        })
    }
}
