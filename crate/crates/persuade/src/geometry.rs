//! Upper-right frontier of a finite point set in the (receiver, sender)
//! plane, and the slope-tangency queries on it. All comparisons are exact.

use std::cmp::Ordering;
use std::fmt;

use num_traits::{Signed, Zero};

use crate::model::{format_rational, parse_rational_str, to_f64, ActionType, Rational};

/// A non-positive slope; `NegInf` is the vertical direction.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Slope {
    NegInf,
    Finite(Rational),
}

impl Slope {
    pub fn zero() -> Self {
        Slope::Finite(Rational::zero())
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Slope::Finite(s) if s.is_zero())
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Slope::NegInf => f64::NEG_INFINITY,
            Slope::Finite(s) => to_f64(s),
        }
    }

    pub fn parse(s: &str) -> crate::error::Result<Self> {
        if s.trim() == "-inf" {
            Ok(Slope::NegInf)
        } else {
            Ok(Slope::Finite(parse_rational_str(s)?))
        }
    }
}

impl Ord for Slope {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Slope::NegInf, Slope::NegInf) => Ordering::Equal,
            (Slope::NegInf, _) => Ordering::Less,
            (_, Slope::NegInf) => Ordering::Greater,
            (Slope::Finite(a), Slope::Finite(b)) => a.cmp(b),
        }
    }
}

impl PartialOrd for Slope {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Slope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Slope::NegInf => write!(f, "-inf"),
            Slope::Finite(s) => write!(f, "{}", format_rational(s)),
        }
    }
}

pub type Point = (Rational, Rational);

/// Slope of the segment from `a` to `b` when `b` lies strictly right of and
/// strictly below `a`; such pairs are the only ones that can form a
/// frontier segment.
pub fn descending_slope(a: &Point, b: &Point) -> Option<Rational> {
    if a.0 < b.0 && a.1 > b.1 {
        Some((&b.1 - &a.1) / (&b.0 - &a.0))
    } else {
        None
    }
}

/// Position of `d` relative to the line through `c` with slope `s`:
/// `Greater` above, `Equal` on, `Less` below. For the vertical line,
/// "below" means strictly to the left.
pub fn side(c: &Point, s: &Slope, d: &Point) -> Ordering {
    match s {
        Slope::NegInf => d.0.cmp(&c.0),
        Slope::Finite(s) => {
            let line = &c.1 + s * (&d.0 - &c.0);
            d.1.cmp(&line)
        }
    }
}

/// Whether a distinct point `d` prevents `c` from being the unique point of
/// tangency at slope `s`. At the boundary slopes ties are resolved toward
/// the frontier's horizontal start and vertical end.
pub fn blocks(c: &Point, s: &Slope, d: &Point) -> bool {
    match s {
        Slope::NegInf => d.0 > c.0 || (d.0 == c.0 && d.1 > c.1),
        Slope::Finite(v) if v.is_zero() => d.1 > c.1 || (d.1 == c.1 && d.0 > c.0),
        _ => side(c, s, d) != Ordering::Less,
    }
}

/// Whether `p` may co-occur with the maximal frontier segment `a`–`b`
/// (`a` left, `b` right): strictly below the supporting line, or on it
/// within the segment.
pub fn segment_admits(a: &Point, b: &Point, s: &Rational, p: &Point) -> bool {
    match side(a, &Slope::Finite(s.clone()), p) {
        Ordering::Less => true,
        Ordering::Equal => a.0 <= p.0 && p.0 <= b.0,
        Ordering::Greater => false,
    }
}

fn cross(a: &Point, b: &Point, c: &Point) -> Rational {
    (&b.0 - &a.0) * (&c.1 - &a.1) - (&b.1 - &a.1) * (&c.0 - &a.0)
}

/// Frontier of points given by index. Duplicated coordinates keep their
/// first occurrence. Returns `(vertices, on_segment)`: vertex indices by
/// increasing receiver value, and indices of points strictly inside a
/// frontier segment.
pub fn frontier_indices(points: &[&Point]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[j]
            .0
            .cmp(&points[i].0)
            .then(points[j].1.cmp(&points[i].1))
            .then(i.cmp(&j))
    });
    let mut stair: Vec<usize> = Vec::new();
    for i in order {
        if stair.last().is_none_or(|&l| points[i].1 > points[l].1) {
            stair.push(i);
        }
    }
    stair.reverse();
    let mut hull: Vec<usize> = Vec::new();
    for &i in &stair {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            if cross(points[a], points[b], points[i]).is_negative() {
                break;
            }
            hull.pop();
        }
        hull.push(i);
    }
    let mut on_segment = Vec::new();
    for &i in &stair {
        if hull.contains(&i) {
            continue;
        }
        let p = points[i];
        let inside = hull.windows(2).any(|w| {
            let (a, b) = (points[w[0]], points[w[1]]);
            a.0 < p.0 && p.0 < b.0 && cross(a, b, p).is_zero()
        });
        if inside {
            on_segment.push(i);
        }
    }
    (hull, on_segment)
}

/// Which part of a frontier is tangent to a slope, by vertex position.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Tangent {
    Vertex(usize),
    Segment(usize, usize),
}

/// Tangency on a frontier whose vertices (by increasing receiver value) are
/// `verts`.
pub fn tangent(verts: &[&Point], s: &Slope) -> Tangent {
    match s {
        Slope::NegInf => Tangent::Vertex(verts.len() - 1),
        Slope::Finite(s) => {
            let mut steeper = 0;
            for w in 0..verts.len().saturating_sub(1) {
                let seg = descending_slope(verts[w], verts[w + 1]).unwrap_or_else(Rational::zero);
                match seg.cmp(s) {
                    Ordering::Greater => steeper += 1,
                    Ordering::Equal => return Tangent::Segment(w, w + 1),
                    Ordering::Less => break,
                }
            }
            Tangent::Vertex(steeper)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrontierSegment {
    pub left: usize,
    pub right: usize,
    pub slope: Rational,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParetoFrontier {
    pub vertices: Vec<ActionType>,
    pub segments: Vec<FrontierSegment>,
    pub on_segment: Vec<ActionType>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SlopeCorrespondence {
    UniqueVertex(ActionType),
    Segment(ActionType, ActionType),
}

pub fn pareto_frontier(points: &[ActionType]) -> ParetoFrontier {
    let coords: Vec<Point> = points.iter().map(|t| (t.rho.clone(), t.xi.clone())).collect();
    let refs: Vec<&Point> = coords.iter().collect();
    let (verts, inner) = frontier_indices(&refs);
    let segments = verts
        .windows(2)
        .enumerate()
        .map(|(w, pair)| FrontierSegment {
            left: w,
            right: w + 1,
            slope: descending_slope(&coords[pair[0]], &coords[pair[1]]).unwrap_or_else(Rational::zero),
        })
        .collect();
    ParetoFrontier {
        vertices: verts.iter().map(|&i| points[i].clone()).collect(),
        segments,
        on_segment: inner.iter().map(|&i| points[i].clone()).collect(),
    }
}

pub fn point_for_slope(frontier: &ParetoFrontier, s: &Slope) -> SlopeCorrespondence {
    let coords: Vec<Point> = frontier.vertices.iter().map(|t| (t.rho.clone(), t.xi.clone())).collect();
    let refs: Vec<&Point> = coords.iter().collect();
    match tangent(&refs, s) {
        Tangent::Vertex(v) => SlopeCorrespondence::UniqueVertex(frontier.vertices[v].clone()),
        Tangent::Segment(a, b) => {
            SlopeCorrespondence::Segment(frontier.vertices[a].clone(), frontier.vertices[b].clone())
        }
    }
}
