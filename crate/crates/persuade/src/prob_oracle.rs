//! Probabilities that a given segment or point of the realized frontier of
//! the first k actions is tangent to a slope, for the symmetric scenarios,
//! plus an exhaustive enumeration oracle used to verify them.
//!
//! Types sharing one utility point are told apart by index: among realized
//! types with equal coordinates the lowest index stands for the point. The
//! point-level variants aggregate over all ids of a point and drive the
//! Slope-Algorithm.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::binomial;
use num_rational::BigRational;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::exact::enumerate_prior;
use crate::geometry::{blocks, descending_slope, frontier_indices, segment_admits, tangent, Point, Slope, Tangent};
use crate::model::{to_f64, ActionType, Component, Instance, Rational, Scenario, SymmetricInstance};

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentProb {
    pub a: String,
    pub b: String,
    pub slope: Slope,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct UniquePointProb {
    pub c: String,
    pub slope: Slope,
    pub p: f64,
}

/// Σ over all r-subsets of `values` of the product of the chosen entries.
pub fn subset_product_sum(values: &[f64], r: usize) -> Result<f64> {
    if r > values.len() {
        return Err(Error::Validation(format!("subset size {r} exceeds {} values", values.len())));
    }
    let mut e = vec![0.0; r + 1];
    e[0] = 1.0;
    for (i, &v) in values.iter().enumerate() {
        for j in (1..=r.min(i + 1)).rev() {
            e[j] += v * e[j - 1];
        }
    }
    Ok(e[r])
}

/// Average product over the r-subsets of `values` (the subset product sum
/// divided by the number of subsets), computed without large intermediates.
pub fn subset_product_mean(values: &[f64], r: usize) -> Result<f64> {
    let m = values.len();
    if r > m {
        return Err(Error::Validation(format!("subset size {r} exceeds {m} values")));
    }
    // f[c]: probability mass of having picked c entries so far, each pick
    // weighted by its value, under uniform sampling of an r-subset.
    let mut f = vec![0.0; r + 1];
    f[0] = 1.0;
    for (i, &v) in values.iter().enumerate() {
        let left = (m - i) as f64;
        for c in (0..=r.min(i)).rev() {
            if f[c] == 0.0 {
                continue;
            }
            let pick = (r - c) as f64 / left;
            let mass = f[c];
            f[c] = mass * (1.0 - pick);
            if c < r {
                f[c + 1] += mass * pick * v;
            }
        }
    }
    Ok(f[r])
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    A,
    B,
    Allowed,
    Forbidden,
}

/// Probability that the first k positions hold at least one key of role A,
/// at least one of role B (when `need_b`), and no forbidden key. Keys are
/// type indices, or coordinate points when `by_point`.
fn event_prob<'a>(inst: &'a SymmetricInstance, k: usize, roles: &[Role], need_b: bool, by_point: bool) -> f64 {
    let n = inst.population();
    let sources_of = |comp: &'a Component| if by_point { &comp.point_mass } else { &comp.type_mass };
    if matches!(inst.scenario(), Scenario::DRandomOrder { .. }) {
        let mut total = Rational::zero();
        let denom = binomial(BigInt::from(n), BigInt::from(k));
        for comp in inst.components() {
            let (mut na, mut nb, mut no) = (0usize, 0usize, 0usize);
            for src in sources_of(comp) {
                match roles[src[0].0] {
                    Role::A => na += 1,
                    Role::B => nb += 1,
                    Role::Allowed => no += 1,
                    Role::Forbidden => {}
                }
            }
            let c = |m: usize| -> BigInt {
                if m >= k {
                    binomial(BigInt::from(m), BigInt::from(k))
                } else {
                    BigInt::zero()
                }
            };
            let count = if need_b {
                c(na + nb + no) - c(nb + no) - c(na + no) + c(no)
            } else {
                c(na + nb + no) - c(nb + no)
            };
            total += &comp.weight * BigRational::new(count, denom.clone());
        }
        return to_f64(&total);
    }
    let mut total = 0.0;
    for comp in inst.components() {
        let w = to_f64(&comp.weight);
        let sources = sources_of(comp);
        // f[c][flags]: c sources picked among those seen, flags bit 0 = A seen, bit 1 = B seen.
        let mut f = vec![[0.0f64; 4]; k + 1];
        f[0][0] = 1.0;
        for (i, src) in sources.iter().enumerate() {
            let (mut pa, mut pb, mut po) = (0.0, 0.0, 0.0);
            for &(t, q) in src {
                match roles[t] {
                    Role::A => pa += q,
                    Role::B => pb += q,
                    Role::Allowed => po += q,
                    Role::Forbidden => {}
                }
            }
            let left = (n - i) as f64;
            for c in (0..=k.min(i)).rev() {
                let pick = (k - c) as f64 / left;
                for flags in 0..4 {
                    let mass = f[c][flags];
                    if mass == 0.0 {
                        continue;
                    }
                    f[c][flags] = mass * (1.0 - pick);
                    if c < k {
                        let m = mass * pick;
                        f[c + 1][flags | 1] += m * pa;
                        f[c + 1][flags | 2] += m * pb;
                        f[c + 1][flags] += m * po;
                    }
                }
            }
        }
        let hit = if need_b { f[k][3] } else { f[k][1] + f[k][3] };
        total += w * hit;
    }
    total
}

fn check_k(inst: &SymmetricInstance, k: usize) -> Result<()> {
    if k == 0 || k > inst.num_actions() {
        return Err(Error::Validation(format!("k = {k} outside 1..={}", inst.num_actions())));
    }
    Ok(())
}

fn lookup(inst: &SymmetricInstance, t: &ActionType) -> Result<usize> {
    inst.table()
        .index_of(&t.id)
        .ok_or_else(|| Error::Validation(format!("unknown type id {:?}", t.id)))
}

fn point(inst: &SymmetricInstance, t: usize) -> &Point {
    &inst.table().points()[inst.table().point_of(t)]
}

/// Roles for the event "segment with endpoints `a` (left) and `b` is a
/// maximal segment of the realized frontier, with `a`, `b` the lowest
/// realized ids of their points".
fn segment_roles(inst: &SymmetricInstance, a: usize, b: usize, s: &Rational) -> Vec<Role> {
    let table = inst.table();
    let (pa, pb) = (table.point_of(a), table.point_of(b));
    let (ca, cb) = (point(inst, a), point(inst, b));
    (0..table.len())
        .map(|t| {
            let pt = table.point_of(t);
            if t == a {
                Role::A
            } else if t == b {
                Role::B
            } else if pt == pa {
                if t > a { Role::Allowed } else { Role::Forbidden }
            } else if pt == pb {
                if t > b { Role::Allowed } else { Role::Forbidden }
            } else if segment_admits(ca, cb, s, point(inst, t)) {
                Role::Allowed
            } else {
                Role::Forbidden
            }
        })
        .collect()
}

fn unique_roles(inst: &SymmetricInstance, c: usize, s: &Slope) -> Vec<Role> {
    let table = inst.table();
    let pc = table.point_of(c);
    let cc = point(inst, c);
    (0..table.len())
        .map(|t| {
            let pt = table.point_of(t);
            if t == c {
                Role::A
            } else if pt == pc {
                if t > c { Role::Allowed } else { Role::Forbidden }
            } else if blocks(cc, s, point(inst, t)) {
                Role::Forbidden
            } else {
                Role::Allowed
            }
        })
        .collect()
}

/// Per-distribution allowed mass for the prophet-secretary formulas.
fn allowed_mass(inst: &SymmetricInstance, roles: &[Role], skip: &[usize]) -> Vec<f64> {
    inst.components()[0]
        .type_mass
        .iter()
        .enumerate()
        .filter(|(d, _)| !skip.contains(d))
        .map(|(_, src)| src.iter().filter(|(t, _)| roles[*t] == Role::Allowed).map(|(_, q)| q).sum())
        .collect()
}

fn source_of(inst: &SymmetricInstance, t: usize) -> (usize, f64) {
    for (d, src) in inst.components()[0].sources.iter().enumerate() {
        if let Some((_, q)) = src.iter().find(|(u, _)| *u == t) {
            return (d, to_f64(q));
        }
    }
    (0, 0.0)
}

/// Probability that the segment `a`–`b` is a maximal segment of the
/// frontier of the types realized in the first k actions.
pub fn p_segment(inst: &SymmetricInstance, k: usize, a: &ActionType, b: &ActionType) -> Result<f64> {
    check_k(inst, k)?;
    let (ia, ib) = (lookup(inst, a)?, lookup(inst, b)?);
    if ia == ib {
        return Err(Error::Validation("segment endpoints must differ".into()));
    }
    let (ia, ib) = if point(inst, ia).0 <= point(inst, ib).0 { (ia, ib) } else { (ib, ia) };
    let Some(s) = descending_slope(point(inst, ia), point(inst, ib)) else { return Ok(0.0) };
    if k < 2 {
        return Ok(0.0);
    }
    let roles = segment_roles(inst, ia, ib, &s);
    if let Scenario::ProphetSecretary { .. } = inst.scenario() {
        let n = inst.population();
        let ((da, qa), (db, qb)) = (source_of(inst, ia), source_of(inst, ib));
        if da == db {
            return Ok(0.0);
        }
        let others = allowed_mass(inst, &roles, &[da, db]);
        let mean = subset_product_mean(&others, k - 2)?;
        return Ok((k as f64 / n as f64) * ((k - 1) as f64 / (n - 1) as f64) * qa * qb * mean);
    }
    Ok(event_prob(inst, k, &roles, true, false))
}

/// Probability that `c` is realized in the first k actions and is the unique
/// frontier point tangent to slope `s`.
pub fn p_unique(inst: &SymmetricInstance, k: usize, c: &ActionType, s: &Slope) -> Result<f64> {
    check_k(inst, k)?;
    let ic = lookup(inst, c)?;
    let roles = unique_roles(inst, ic, s);
    if let Scenario::ProphetSecretary { .. } = inst.scenario() {
        let n = inst.population();
        let (dc, qc) = source_of(inst, ic);
        let others = allowed_mass(inst, &roles, &[dc]);
        let mean = subset_product_mean(&others, k - 1)?;
        return Ok((k as f64 / n as f64) * qc * mean);
    }
    Ok(event_prob(inst, k, &roles, false, false))
}

/// Point-level segment probability: some types at points `pa` and `pb`
/// realized, forming a maximal frontier segment.
pub fn point_segment_prob(inst: &SymmetricInstance, k: usize, pa: usize, pb: usize) -> f64 {
    let pts = inst.table().points();
    let Some(s) = descending_slope(&pts[pa], &pts[pb]) else { return 0.0 };
    let roles: Vec<Role> = (0..pts.len())
        .map(|pt| {
            if pt == pa {
                Role::A
            } else if pt == pb {
                Role::B
            } else if segment_admits(&pts[pa], &pts[pb], &s, &pts[pt]) {
                Role::Allowed
            } else {
                Role::Forbidden
            }
        })
        .collect();
    event_prob(inst, k, &roles, true, true)
}

/// Point-level tangency probability of point `pc` at slope `s`.
pub fn point_unique_prob(inst: &SymmetricInstance, k: usize, pc: usize, s: &Slope) -> f64 {
    let pts = inst.table().points();
    let roles: Vec<Role> = (0..pts.len())
        .map(|pt| {
            if pt == pc {
                Role::A
            } else if blocks(&pts[pc], s, &pts[pt]) {
                Role::Forbidden
            } else {
                Role::Allowed
            }
        })
        .collect();
    event_prob(inst, k, &roles, false, true)
}

/// A same-slope candidate: point pair (left, right) and its probability.
#[derive(Clone, Debug)]
pub struct PointSegment {
    pub a: usize,
    pub b: usize,
    pub slope: Rational,
    pub p: f64,
}

/// All point pairs that form a frontier segment with positive probability.
pub fn point_segments(inst: &SymmetricInstance, k: usize) -> Vec<PointSegment> {
    let pts = inst.table().points();
    let mut pairs = Vec::new();
    for a in 0..pts.len() {
        for b in 0..pts.len() {
            if let Some(s) = descending_slope(&pts[a], &pts[b]) {
                pairs.push((a, b, s));
            }
        }
    }
    if k < 2 {
        return Vec::new();
    }
    let probs = crate::par::map(&pairs, |(a, b, _)| point_segment_prob(inst, k, *a, *b));
    pairs
        .into_iter()
        .zip(probs)
        .filter(|(_, p)| *p > 0.0)
        .map(|((a, b, slope), p)| PointSegment { a, b, slope, p })
        .collect()
}

/// Sorted segment slopes interleaved with auxiliary slopes: midpoints
/// between neighbours, one below the smallest (min − 1), one above the
/// largest (max / 2), and the boundary slopes −∞ and 0.
pub fn slopes_with_auxiliaries(segment_slopes: &[Rational]) -> Vec<Slope> {
    let mut s: Vec<Rational> = segment_slopes.to_vec();
    s.sort();
    s.dedup();
    let mut out = vec![Slope::NegInf];
    if let (Some(first), Some(last)) = (s.first(), s.last()) {
        out.push(Slope::Finite(first - Rational::one()));
        for w in 0..s.len() {
            out.push(Slope::Finite(s[w].clone()));
            if w + 1 < s.len() {
                out.push(Slope::Finite((&s[w] + &s[w + 1]) / Rational::from_integer(BigInt::from(2))));
            }
        }
        out.push(Slope::Finite(last / Rational::from_integer(BigInt::from(2))));
    }
    out.push(Slope::zero());
    out
}

pub fn candidate_slopes(inst: &SymmetricInstance, k: usize) -> Result<Vec<Slope>> {
    check_k(inst, k)?;
    let slopes: Vec<Rational> = point_segments(inst, k).into_iter().map(|g| g.slope).collect();
    Ok(slopes_with_auxiliaries(&slopes))
}

/// Exact distribution of the set of types realized in the first k actions.
#[derive(Clone, Debug)]
pub struct OracleTable {
    inst: SymmetricInstance,
    sets: Vec<(Vec<usize>, Rational)>,
}

pub fn enumerate_oracle(inst: &SymmetricInstance, k: usize, state_bound: u128) -> Result<OracleTable> {
    check_k(inst, k)?;
    let view = crate::model::truncate(inst, k)?;
    let prior = enumerate_prior(&Instance::Symmetric(view), state_bound)?;
    let mut sets: BTreeMap<Vec<usize>, Rational> = BTreeMap::new();
    for (state, q) in prior.states {
        let mut set = state.types.clone();
        set.sort_unstable();
        set.dedup();
        *sets.entry(set).or_insert_with(Rational::zero) += q;
    }
    Ok(OracleTable { inst: inst.clone(), sets: sets.into_iter().collect() })
}

enum Query<'a> {
    Segment(usize, usize),
    Unique(usize, &'a Slope),
}

impl OracleTable {
    /// Frontier over the lowest-index representative of each realized point;
    /// returns (vertex type indices, their coordinates).
    fn frontier(&self, set: &[usize]) -> Vec<usize> {
        let table = self.inst.table();
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let mut reps = Vec::new();
        for &t in set {
            seen.entry(table.point_of(t)).or_insert_with(|| {
                reps.push(t);
                t
            });
        }
        let coords: Vec<&Point> = reps.iter().map(|&t| &table.points()[table.point_of(t)]).collect();
        let (verts, _) = frontier_indices(&coords);
        verts.into_iter().map(|v| reps[v]).collect()
    }

    fn hits(&self, verts: &[usize], q: &Query) -> bool {
        let table = self.inst.table();
        match q {
            Query::Segment(a, b) => verts.windows(2).any(|w| w[0] == *a && w[1] == *b),
            Query::Unique(c, s) => {
                let coords: Vec<&Point> = verts.iter().map(|&t| &table.points()[table.point_of(t)]).collect();
                matches!(tangent(&coords, s), Tangent::Vertex(v) if verts[v] == *c)
            }
        }
    }

    fn total(&self, q: Query) -> Rational {
        self.sets
            .iter()
            .filter(|(set, _)| self.hits(&self.frontier(set), &q))
            .map(|(_, p)| p.clone())
            .sum()
    }

    pub fn segment(&self, a: usize, b: usize) -> Rational {
        let pts = self.inst.table();
        let (a, b) = if pts.points()[pts.point_of(a)].0 <= pts.points()[pts.point_of(b)].0 { (a, b) } else { (b, a) };
        self.total(Query::Segment(a, b))
    }

    pub fn unique(&self, c: usize, s: &Slope) -> Rational {
        self.total(Query::Unique(c, s))
    }

    fn point_total(&self, test: impl Fn(&[usize]) -> bool) -> Rational {
        let table = self.inst.table();
        self.sets
            .iter()
            .filter(|(set, _)| {
                let verts: Vec<usize> = self.frontier(set).iter().map(|&t| table.point_of(t)).collect();
                test(&verts)
            })
            .map(|(_, p)| p.clone())
            .sum()
    }

    pub fn point_segment(&self, pa: usize, pb: usize) -> Rational {
        self.point_total(|v| v.windows(2).any(|w| w[0] == pa && w[1] == pb))
    }

    pub fn point_unique(&self, pc: usize, s: &Slope) -> Rational {
        let pts = self.inst.table().points();
        self.point_total(|v| {
            let coords: Vec<&Point> = v.iter().map(|&p| &pts[p]).collect();
            matches!(tangent(&coords, s), Tangent::Vertex(i) if v[i] == pc)
        })
    }

    /// Probability of realized sets whose frontier has a segment of slope `s`.
    pub fn segment_mass(&self, s: &Rational) -> Rational {
        let pts = self.inst.table().points();
        self.point_total(|v| {
            v.windows(2).any(|w| descending_slope(&pts[w[0]], &pts[w[1]]).as_ref() == Some(s))
        })
    }

    pub fn segment_probs(&self) -> Vec<SegmentProb> {
        let table = self.inst.table();
        let mut acc: BTreeMap<(usize, usize), Rational> = BTreeMap::new();
        for (set, p) in &self.sets {
            let verts = self.frontier(set);
            for w in verts.windows(2) {
                *acc.entry((w[0], w[1])).or_insert_with(Rational::zero) += p;
            }
        }
        acc.into_iter()
            .map(|((a, b), p)| {
                let (pa, pb) = (&table.points()[table.point_of(a)], &table.points()[table.point_of(b)]);
                SegmentProb {
                    a: table.ty(a).id.clone(),
                    b: table.ty(b).id.clone(),
                    slope: Slope::Finite(descending_slope(pa, pb).unwrap_or_else(Rational::zero)),
                    p: to_f64(&p),
                }
            })
            .collect()
    }

    /// `unique(c, s)` for every type index c in one pass over the sets.
    pub fn unique_table(&self, s: &Slope) -> Vec<Rational> {
        let table = self.inst.table();
        let mut out = vec![Rational::zero(); table.len()];
        for (set, p) in &self.sets {
            let verts = self.frontier(set);
            let coords: Vec<&Point> = verts.iter().map(|&t| &table.points()[table.point_of(t)]).collect();
            if let Tangent::Vertex(v) = tangent(&coords, s) {
                out[verts[v]] += p;
            }
        }
        out
    }

    pub fn unique_probs(&self, s: &Slope) -> Vec<UniquePointProb> {
        let table = self.inst.table();
        self.unique_table(s)
            .iter()
            .enumerate()
            .map(|(c, p)| UniquePointProb { c: table.ty(c).id.clone(), slope: s.clone(), p: to_f64(p) })
            .filter(|u| u.p > 0.0)
            .collect()
    }

    pub fn is_one(r: &Rational) -> bool {
        r.is_one()
    }
}
