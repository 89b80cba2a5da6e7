//! Small dense linear programs: a two-phase tableau simplex with dual
//! values, and the closed form for the single-slope program of the
//! Slope-Algorithm.

use crate::error::{Error, Result};
use crate::geometry::Slope;

/// Feasibility tolerance shared by every verification in the crate.
pub const TOL: f64 = 1e-8;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const STALL_LIMIT: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Clone, Debug)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

/// Maximize `objective · x` subject to the constraints and
/// `bounds[j].0 <= x[j] <= bounds[j].1` (lower bounds must be finite).
#[derive(Clone, Debug)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<(f64, f64)>,
}

impl LinearProgram {
    pub fn new(num_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; num_vars],
            constraints: Vec::new(),
            bounds: vec![(0.0, f64::INFINITY); num_vars],
        }
    }

    pub fn num_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn add(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) {
        self.constraints.push(Constraint { coeffs, relation, rhs });
    }

    /// Largest violation of a constraint or bound by `x`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for c in &self.constraints {
            let lhs: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match c.relation {
                Relation::Le => lhs - c.rhs,
                Relation::Ge => c.rhs - lhs,
                Relation::Eq => (lhs - c.rhs).abs(),
            };
            worst = worst.max(v);
        }
        for (v, (lo, hi)) in x.iter().zip(&self.bounds) {
            worst = worst.max(lo - v).max(v - hi);
        }
        worst
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
}

/// `duals[r]` prices constraint `r`: at an optimum every variable strictly
/// inside its bounds has `objective[j] - Σ_r duals[r]·coeffs[r][j] = 0`.
#[derive(Clone, Debug)]
pub struct LpSolution {
    pub status: LpStatus,
    pub values: Vec<f64>,
    pub objective: f64,
    pub duals: Vec<f64>,
}

impl LpSolution {
    fn empty(status: LpStatus, n: usize, m: usize) -> Self {
        LpSolution { status, values: vec![0.0; n], objective: 0.0, duals: vec![0.0; m] }
    }
}

struct Tableau {
    rows: usize,
    width: usize,
    cells: Vec<f64>,
    basis: Vec<usize>,
    banned: Vec<bool>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.cells[r * self.width + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.cells[r * self.width + self.width - 1]
    }

    fn pivot(&mut self, r: usize, c: usize, reduced: &mut [f64], value: &mut f64) {
        let w = self.width;
        let p = self.cells[r * w + c];
        for v in &mut self.cells[r * w..(r + 1) * w] {
            *v /= p;
        }
        let (before, rest) = self.cells.split_at_mut(r * w);
        let (pivot_row, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (x, y) in row.iter_mut().zip(pivot_row.iter()) {
                    *x -= f * y;
                }
                row[c] = 0.0;
            }
        }
        let f = reduced[c];
        if f != 0.0 {
            for (x, y) in reduced.iter_mut().zip(pivot_row.iter()) {
                *x -= f * y;
            }
            *value += f * pivot_row[w - 1];
            reduced[c] = 0.0;
        }
        self.basis[r] = c;
    }

    fn reduced_costs(&self, cost: &[f64]) -> (Vec<f64>, f64) {
        let w = self.width;
        let mut d: Vec<f64> = cost.to_vec();
        d.push(0.0);
        let mut value = 0.0;
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for (j, dj) in d.iter_mut().enumerate().take(w - 1) {
                    *dj -= cb * self.cells[r * w + j];
                }
                value += cb * self.rhs(r);
            }
        }
        d.truncate(w - 1);
        (d, value)
    }

    /// Primal simplex from the current feasible basis. Returns false when
    /// the objective is unbounded.
    fn optimize(&mut self, cost: &[f64]) -> Result<bool> {
        let (mut d, mut value) = self.reduced_costs(cost);
        let limit = 200 * (self.rows + self.width) + 1000;
        let mut bland = false;
        let mut stalled = 0;
        for _ in 0..limit {
            let mut enter = None;
            let mut best = COST_TOL;
            for (j, &dj) in d.iter().enumerate() {
                if self.banned[j] || dj <= COST_TOL {
                    continue;
                }
                if bland {
                    enter = Some(j);
                    break;
                }
                if dj > best {
                    best = dj;
                    enter = Some(j);
                }
            }
            let Some(c) = enter else { return Ok(true) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, c);
                if a <= PIVOT_TOL {
                    continue;
                }
                let ratio = self.rhs(r).max(0.0) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        if ratio < lratio - 1e-12
                            || (ratio <= lratio + 1e-12 && self.basis[r] < self.basis[lr])
                        {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
            let Some((r, ratio)) = leave else { return Ok(false) };
            if ratio <= 1e-12 {
                stalled += 1;
                if stalled > STALL_LIMIT {
                    bland = true;
                }
            } else {
                stalled = 0;
            }
            self.pivot(r, c, &mut d, &mut value);
        }
        Err(Error::Numerical("simplex iteration limit reached".into()))
    }
}

pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution> {
    let n = lp.num_vars();
    if lp.bounds.len() != n {
        return Err(Error::Validation("bounds and objective differ in length".into()));
    }
    for c in &lp.constraints {
        if c.coeffs.len() != n {
            return Err(Error::Validation("constraint width differs from variable count".into()));
        }
        if !c.rhs.is_finite() || c.coeffs.iter().any(|a| !a.is_finite()) {
            return Err(Error::Validation("non-finite coefficient".into()));
        }
    }
    let user_rows = lp.constraints.len();
    for &(lo, hi) in &lp.bounds {
        if !lo.is_finite() {
            return Err(Error::Validation("lower bounds must be finite".into()));
        }
        if hi < lo {
            return Ok(LpSolution::empty(LpStatus::Infeasible, n, user_rows));
        }
    }

    let mut rows: Vec<(Vec<f64>, Relation, f64)> = lp
        .constraints
        .iter()
        .map(|c| {
            let shift: f64 = c.coeffs.iter().zip(&lp.bounds).map(|(a, (lo, _))| a * lo).sum();
            (c.coeffs.clone(), c.relation, c.rhs - shift)
        })
        .collect();
    for (j, &(lo, hi)) in lp.bounds.iter().enumerate() {
        if hi.is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((a, Relation::Le, hi - lo));
        }
    }
    let m = rows.len();
    let mut sign = vec![1.0; m];
    for (r, row) in rows.iter_mut().enumerate() {
        if row.2 < 0.0 {
            sign[r] = -1.0;
            row.0.iter_mut().for_each(|a| *a = -*a);
            row.2 = -row.2;
            row.1 = match row.1 {
                Relation::Le => Relation::Ge,
                Relation::Ge => Relation::Le,
                Relation::Eq => Relation::Eq,
            };
        }
    }

    let width = n + 2 * m + 1;
    let mut tab = Tableau {
        rows: m,
        width,
        cells: vec![0.0; m * width],
        basis: vec![0; m],
        banned: vec![false; width - 1],
    };
    for (r, (a, rel, b)) in rows.iter().enumerate() {
        let base = r * width;
        tab.cells[base..base + n].copy_from_slice(a);
        tab.cells[base + width - 1] = *b;
        let (slack, art) = (n + r, n + m + r);
        match rel {
            Relation::Le => {
                tab.cells[base + slack] = 1.0;
                tab.basis[r] = slack;
                tab.banned[art] = true;
            }
            Relation::Ge => {
                tab.cells[base + slack] = -1.0;
                tab.cells[base + art] = 1.0;
                tab.basis[r] = art;
            }
            Relation::Eq => {
                tab.cells[base + art] = 1.0;
                tab.basis[r] = art;
                tab.banned[slack] = true;
            }
        }
    }
    let is_art = |j: usize| j >= n + m && j < n + 2 * m;

    if tab.basis.iter().any(|&b| is_art(b)) {
        let mut phase1 = vec![0.0; width - 1];
        phase1[n + m..n + 2 * m].fill(-1.0);
        tab.optimize(&phase1)?;
        let infeas: f64 = (0..m).filter(|&r| is_art(tab.basis[r])).map(|r| tab.rhs(r)).sum();
        let scale = 1.0 + rows.iter().map(|r| r.2.abs()).fold(0.0, f64::max);
        if infeas > 1e-9 * scale {
            return Ok(LpSolution::empty(LpStatus::Infeasible, n, user_rows));
        }
        let mut dummy = vec![0.0; width];
        let mut dv = 0.0;
        for r in 0..m {
            if !is_art(tab.basis[r]) {
                continue;
            }
            let pick = (0..n + m)
                .filter(|&j| !tab.banned[j])
                .max_by(|&a, &b| tab.at(r, a).abs().total_cmp(&tab.at(r, b).abs()));
            if let Some(j) = pick {
                if tab.at(r, j).abs() > 1e-9 {
                    tab.pivot(r, j, &mut dummy, &mut dv);
                }
            }
        }
        for j in n + m..n + 2 * m {
            tab.banned[j] = true;
        }
    }

    let mut cost = vec![0.0; width - 1];
    cost[..n].copy_from_slice(&lp.objective);
    if !tab.optimize(&cost)? {
        return Ok(LpSolution::empty(LpStatus::Unbounded, n, user_rows));
    }

    let mut values: Vec<f64> = lp.bounds.iter().map(|b| b.0).collect();
    for r in 0..m {
        let b = tab.basis[r];
        if b < n {
            values[b] += tab.rhs(r).max(0.0);
        }
    }
    let duals = (0..user_rows)
        .map(|r| {
            let init = if rows[r].1 == Relation::Le { n + r } else { n + m + r };
            let y: f64 = (0..m).map(|i| cost[tab.basis[i]] * tab.at(i, init)).sum();
            sign[r] * y
        })
        .collect();
    let objective = lp.objective.iter().zip(&values).map(|(c, x)| c * x).sum();
    Ok(LpSolution { status: LpStatus::Optimal, values, objective, duals })
}

/// A same-slope frontier segment weighted by its probability; `a` is the
/// endpoint with the higher sender utility. Points are (receiver, sender).
#[derive(Clone, Debug)]
pub struct SlopeSegment {
    pub p: f64,
    pub a: (f64, f64),
    pub b: (f64, f64),
    pub slope: Slope,
}

#[derive(Clone, Debug)]
pub struct SlopeUnique {
    pub p: f64,
    pub point: (f64, f64),
}

#[derive(Clone, Debug)]
pub struct SlopeLpSolution {
    /// Weight on each segment's `a` endpoint.
    pub alphas: Vec<f64>,
    pub objective: f64,
    pub receiver: f64,
}

/// Maximizes expected sender utility over α ∈ [0,1]^segments subject to
/// expected receiver utility ≥ ρ_E. All segments share slope `s`, so every
/// unit of receiver utility costs the same sender utility; the optimum
/// starts at the sender-best corner and shifts all segments uniformly
/// until the receiver constraint is tight. `None` means infeasible.
pub fn solve_slope_lp(
    segments: &[SlopeSegment],
    uniques: &[SlopeUnique],
    rho_e: f64,
    s: &Slope,
) -> Result<Option<SlopeLpSolution>> {
    if segments.iter().any(|g| &g.slope != s) {
        return Err(Error::Validation("segments with mixed slopes passed to the slope LP".into()));
    }
    let base_r: f64 = uniques.iter().map(|u| u.p * u.point.0).sum();
    let base_s: f64 = uniques.iter().map(|u| u.p * u.point.1).sum();
    let r_at = |alpha: f64| base_r + segments.iter().map(|g| g.p * (alpha * g.a.0 + (1.0 - alpha) * g.b.0)).sum::<f64>();
    let s_at = |alpha: f64| base_s + segments.iter().map(|g| g.p * (alpha * g.a.1 + (1.0 - alpha) * g.b.1)).sum::<f64>();
    let slack = 1e-12 * (1.0 + rho_e.abs());
    let (r1, r0) = (r_at(1.0), r_at(0.0));
    let alpha = if r1 >= rho_e - slack {
        1.0
    } else if r0 < rho_e - slack {
        return Ok(None);
    } else {
        ((r0 - rho_e) / (r0 - r1)).clamp(0.0, 1.0)
    };
    Ok(Some(SlopeLpSolution {
        alphas: vec![alpha; segments.len()],
        objective: s_at(alpha),
        receiver: r_at(alpha),
    }))
}

/// The single-slope program in generic form; used to cross-check the
/// closed form.
pub fn slope_lp_generic(segments: &[SlopeSegment], uniques: &[SlopeUnique], rho_e: f64) -> LinearProgram {
    let k = segments.len();
    let mut lp = LinearProgram::new(k);
    let base_r: f64 = uniques.iter().map(|u| u.p * u.point.0).sum();
    let mut row = vec![0.0; k];
    let mut rhs = rho_e - base_r;
    for (j, g) in segments.iter().enumerate() {
        lp.objective[j] = g.p * (g.a.1 - g.b.1);
        row[j] = g.p * (g.a.0 - g.b.0);
        rhs -= g.p * g.b.0;
        lp.bounds[j] = (0.0, 1.0);
    }
    lp.add(row, Relation::Ge, rhs);
    lp
}

/// Constant part of the generic single-slope objective.
pub fn slope_lp_offset(segments: &[SlopeSegment], uniques: &[SlopeUnique]) -> f64 {
    uniques.iter().map(|u| u.p * u.point.1).sum::<f64>() + segments.iter().map(|g| g.p * g.b.1).sum::<f64>()
}
