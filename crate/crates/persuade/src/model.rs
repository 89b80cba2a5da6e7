//! Domain types: utilities as exact rationals, symmetric and independent
//! priors, realized states, JSON instance I/O, ρ_E and truncation.

use std::collections::HashMap;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::Rng;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};

pub type Rational = BigRational;

pub fn rat(n: i64, d: i64) -> Rational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn format_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn parse_rational_str(s: &str) -> Result<Rational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational: {s:?}"));
    let (n, d) = match s.split_once('/') {
        Some((n, d)) => (n.trim(), d.trim()),
        None => (s, "1"),
    };
    let n: BigInt = n.parse().map_err(|_| bad())?;
    let d: BigInt = d.parse().map_err(|_| bad())?;
    if d.is_zero() {
        return Err(Error::Parse(format!("zero denominator in {s:?}")));
    }
    Ok(BigRational::new(n, d))
}

pub fn parse_rational(v: &Value) -> Result<Rational> {
    match v {
        Value::String(s) => parse_rational_str(s),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Ok(BigRational::from_integer(BigInt::from(i)))
            } else if let Some(u) = n.as_u64() {
                Ok(BigRational::from_integer(BigInt::from(u)))
            } else {
                Err(Error::Parse(format!(
                    "non-integer number {n}; write rationals as \"p/q\" strings"
                )))
            }
        }
        other => Err(Error::Parse(format!("expected a rational, found {other}"))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ActionType {
    pub id: String,
    pub rho: Rational,
    pub xi: Rational,
}

impl ActionType {
    pub fn new(id: impl Into<String>, rho: Rational, xi: Rational) -> Self {
        ActionType { id: id.into(), rho, xi }
    }
}

/// All types of an instance under global indices, plus the distinct
/// utility points they map to. Set logic downstream is keyed by index.
#[derive(Clone, Debug)]
pub struct TypeTable {
    types: Vec<ActionType>,
    point_of: Vec<usize>,
    points: Vec<(Rational, Rational)>,
    rep: Vec<usize>,
    rho: Vec<f64>,
    xi: Vec<f64>,
    by_id: HashMap<String, usize>,
}

impl TypeTable {
    pub fn new(types: Vec<ActionType>) -> Result<Self> {
        let mut by_id = HashMap::new();
        let mut point_idx: HashMap<(Rational, Rational), usize> = HashMap::new();
        let mut points = Vec::new();
        let mut rep = Vec::new();
        let mut point_of = Vec::with_capacity(types.len());
        for (i, t) in types.iter().enumerate() {
            if by_id.insert(t.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate type id {:?}", t.id)));
            }
            let key = (t.rho.clone(), t.xi.clone());
            let p = *point_idx.entry(key.clone()).or_insert_with(|| {
                points.push(key);
                rep.push(i);
                points.len() - 1
            });
            point_of.push(p);
        }
        let rho = types.iter().map(|t| to_f64(&t.rho)).collect();
        let xi = types.iter().map(|t| to_f64(&t.xi)).collect();
        Ok(TypeTable { types, point_of, points, rep, rho, xi, by_id })
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn ty(&self, i: usize) -> &ActionType {
        &self.types[i]
    }

    pub fn types(&self) -> &[ActionType] {
        &self.types
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn point_of(&self, i: usize) -> usize {
        self.point_of[i]
    }

    pub fn points(&self) -> &[(Rational, Rational)] {
        &self.points
    }

    /// Lowest type index carrying point `p`.
    pub fn rep(&self, p: usize) -> usize {
        self.rep[p]
    }

    pub fn rho_f(&self, i: usize) -> f64 {
        self.rho[i]
    }

    pub fn xi_f(&self, i: usize) -> f64 {
        self.xi[i]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scenario {
    Iid { palette: Vec<(ActionType, Rational)>, n: usize },
    ProphetSecretary { dists: Vec<Vec<(ActionType, Rational)>> },
    DRandomOrder { vectors: Vec<Vec<ActionType>>, vector_probs: Vec<Rational> },
}

/// One branch of the generative process: with probability `weight`, the
/// actions are filled by a uniformly random ordering of `sources`, each
/// source drawing independently from its distribution over type indices.
#[derive(Clone, Debug)]
pub struct Component {
    pub weight: Rational,
    pub sources: Vec<Vec<(usize, Rational)>>,
    /// `sources` in floats, keyed by type index.
    pub(crate) type_mass: Vec<Vec<(usize, f64)>>,
    /// `sources` in floats, keyed by coordinate point with masses merged.
    pub(crate) point_mass: Vec<Vec<(usize, f64)>>,
}

impl Component {
    fn new(weight: Rational, sources: Vec<Vec<(usize, Rational)>>) -> Self {
        Component { weight, sources, type_mass: Vec::new(), point_mass: Vec::new() }
    }

    fn index_masses(&mut self, table: &TypeTable) {
        self.type_mass = self.sources.iter().map(|src| src.iter().map(|(t, q)| (*t, to_f64(q))).collect()).collect();
        self.point_mass = self
            .type_mass
            .iter()
            .map(|src| {
                let mut merged: Vec<(usize, f64)> = Vec::new();
                for &(t, q) in src {
                    let p = table.point_of(t);
                    match merged.iter_mut().find(|(u, _)| *u == p) {
                        Some(e) => e.1 += q,
                        None => merged.push((p, q)),
                    }
                }
                merged
            })
            .collect();
    }
}

#[derive(Clone, Debug)]
pub struct SymmetricInstance {
    scenario: Scenario,
    observed: usize,
    table: TypeTable,
    components: Vec<Component>,
}

fn check_distribution(what: &str, probs: &[&Rational]) -> Result<()> {
    if probs.is_empty() {
        return Err(Error::Validation(format!("{what}: empty support")));
    }
    if probs.iter().any(|q| q.is_negative()) {
        return Err(Error::Validation(format!("{what}: negative probability")));
    }
    let total: Rational = probs.iter().map(|q| (*q).clone()).sum();
    if !total.is_one() {
        return Err(Error::Validation(format!(
            "{what}: probabilities must sum to 1 (sum is {})",
            format_rational(&total)
        )));
    }
    Ok(())
}

impl SymmetricInstance {
    pub fn new(scenario: Scenario) -> Result<Self> {
        let (types, components) = match &scenario {
            Scenario::Iid { palette, n } => {
                if *n == 0 {
                    return Err(Error::Validation("iid: n must be at least 1".into()));
                }
                check_distribution("palette", &palette.iter().map(|(_, q)| q).collect::<Vec<_>>())?;
                let types: Vec<ActionType> = palette.iter().map(|(t, _)| t.clone()).collect();
                let src: Vec<(usize, Rational)> =
                    palette.iter().enumerate().map(|(i, (_, q))| (i, q.clone())).collect();
                (types, vec![Component::new(Rational::one(), vec![src; *n])])
            }
            Scenario::ProphetSecretary { dists } => {
                if dists.is_empty() {
                    return Err(Error::Validation("prophet_secretary: no distributions".into()));
                }
                let mut types = Vec::new();
                let mut sources = Vec::new();
                for (d, dist) in dists.iter().enumerate() {
                    check_distribution(
                        &format!("distribution {d}"),
                        &dist.iter().map(|(_, q)| q).collect::<Vec<_>>(),
                    )?;
                    let mut src = Vec::new();
                    for (t, q) in dist {
                        src.push((types.len(), q.clone()));
                        types.push(t.clone());
                    }
                    sources.push(src);
                }
                (types, vec![Component::new(Rational::one(), sources)])
            }
            Scenario::DRandomOrder { vectors, vector_probs } => {
                if vectors.is_empty() {
                    return Err(Error::Validation("d_random_order: no vectors".into()));
                }
                if vectors.len() != vector_probs.len() {
                    return Err(Error::Validation(
                        "d_random_order: one probability per vector required".into(),
                    ));
                }
                check_distribution("vector_probs", &vector_probs.iter().collect::<Vec<_>>())?;
                let n = vectors[0].len();
                if n == 0 || vectors.iter().any(|v| v.len() != n) {
                    return Err(Error::Validation(
                        "d_random_order: vectors must be non-empty and of equal length".into(),
                    ));
                }
                let mut types = Vec::new();
                let mut components = Vec::new();
                for (v, q) in vectors.iter().zip(vector_probs) {
                    let mut sources = Vec::new();
                    for t in v {
                        sources.push(vec![(types.len(), Rational::one())]);
                        types.push(t.clone());
                    }
                    components.push(Component::new(q.clone(), sources));
                }
                (types, components)
            }
        };
        let table = TypeTable::new(types)?;
        let mut components = components;
        for c in &mut components {
            c.index_masses(&table);
        }
        let observed = components[0].sources.len();
        Ok(SymmetricInstance { scenario, observed, table, components })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn table(&self) -> &TypeTable {
        &self.table
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Number of sources that are permuted (n of the scenario).
    pub fn population(&self) -> usize {
        self.components[0].sources.len()
    }

    /// Number of observable actions; smaller than `population` for a
    /// truncated view.
    pub fn num_actions(&self) -> usize {
        self.observed
    }

    pub fn is_view(&self) -> bool {
        self.observed < self.population()
    }

    /// Sources are identical and independent, so orderings carry no extra
    /// information.
    pub fn exchangeable(&self) -> bool {
        matches!(self.scenario, Scenario::Iid { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self.scenario {
            Scenario::Iid { .. } => "iid",
            Scenario::ProphetSecretary { .. } => "prophet_secretary",
            Scenario::DRandomOrder { .. } => "d_random_order",
        }
    }

    pub fn rho_e(&self) -> Rational {
        let n = Rational::from_integer(BigInt::from(self.population()));
        let mut total = Rational::zero();
        for c in &self.components {
            let mut sum = Rational::zero();
            for src in &c.sources {
                for (t, q) in src {
                    sum += q * &self.table.ty(*t).rho;
                }
            }
            total += &c.weight * sum / &n;
        }
        total
    }

    pub fn xi_e(&self) -> Rational {
        let n = Rational::from_integer(BigInt::from(self.population()));
        let mut total = Rational::zero();
        for c in &self.components {
            let mut sum = Rational::zero();
            for src in &c.sources {
                for (t, q) in src {
                    sum += q * &self.table.ty(*t).xi;
                }
            }
            total += &c.weight * sum / &n;
        }
        total
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let weights: Vec<f64> = self.components.iter().map(|c| to_f64(&c.weight)).collect();
        let comp = &self.components[draw_index(&weights, rng)];
        let n = comp.sources.len();
        let mut types = Vec::with_capacity(self.observed);
        if self.exchangeable() {
            for _ in 0..self.observed {
                types.push(draw_type(&comp.sources[0], rng));
            }
        } else {
            let mut order: Vec<usize> = (0..n).collect();
            for slot in 0..self.observed {
                let j = rng.gen_range(slot..n);
                order.swap(slot, j);
                types.push(draw_type(&comp.sources[order[slot]], rng));
            }
        }
        State { types }
    }
}

fn draw_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let u = rng.gen::<f64>() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

fn draw_type<R: Rng + ?Sized>(dist: &[(usize, Rational)], rng: &mut R) -> usize {
    let weights: Vec<f64> = dist.iter().map(|(_, q)| to_f64(q)).collect();
    dist[draw_index(&weights, rng)].0
}

#[derive(Clone, Debug)]
pub struct IndependentInstance {
    actions: Vec<Vec<(ActionType, Rational)>>,
    designated: usize,
    table: TypeTable,
    dists: Vec<Vec<(usize, Rational)>>,
}

impl IndependentInstance {
    pub fn new(actions: Vec<Vec<(ActionType, Rational)>>) -> Result<Self> {
        if actions.is_empty() {
            return Err(Error::Validation("independent: no actions".into()));
        }
        let mut types = Vec::new();
        let mut dists = Vec::new();
        for (i, a) in actions.iter().enumerate() {
            check_distribution(&format!("action {i}"), &a.iter().map(|(_, q)| q).collect::<Vec<_>>())?;
            let mut d = Vec::new();
            for (t, q) in a {
                d.push((types.len(), q.clone()));
                types.push(t.clone());
            }
            dists.push(d);
        }
        let table = TypeTable::new(types)?;
        let mut inst = IndependentInstance { actions, designated: 0, table, dists };
        let mut best = 0;
        for i in 1..inst.actions.len() {
            let (r, x) = (inst.expected_rho(i), inst.expected_xi(i));
            let (br, bx) = (inst.expected_rho(best), inst.expected_xi(best));
            if r > br || (r == br && x > bx) {
                best = i;
            }
        }
        inst.designated = best;
        Ok(inst)
    }

    pub fn actions(&self) -> &[Vec<(ActionType, Rational)>] {
        &self.actions
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    /// The a-priori receiver-optimal action (ties: sender-best, then lowest index).
    pub fn designated(&self) -> usize {
        self.designated
    }

    pub fn table(&self) -> &TypeTable {
        &self.table
    }

    /// Action `i`'s distribution over global type indices.
    pub fn dist(&self, i: usize) -> &[(usize, Rational)] {
        &self.dists[i]
    }

    pub fn expected_rho(&self, i: usize) -> Rational {
        self.actions[i].iter().map(|(t, q)| q * &t.rho).sum()
    }

    pub fn expected_xi(&self, i: usize) -> Rational {
        self.actions[i].iter().map(|(t, q)| q * &t.xi).sum()
    }

    pub fn rho_e(&self) -> Rational {
        self.expected_rho(self.designated)
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        State { types: self.dists.iter().map(|d| draw_type(d, rng)).collect() }
    }
}

#[derive(Clone, Debug)]
pub enum Instance {
    Symmetric(SymmetricInstance),
    Independent(IndependentInstance),
}

impl Instance {
    pub fn table(&self) -> &TypeTable {
        match self {
            Instance::Symmetric(s) => s.table(),
            Instance::Independent(s) => s.table(),
        }
    }

    pub fn num_actions(&self) -> usize {
        match self {
            Instance::Symmetric(s) => s.num_actions(),
            Instance::Independent(s) => s.num_actions(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Instance::Symmetric(s) => s.kind(),
            Instance::Independent(_) => "independent",
        }
    }

    pub fn sample_state<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        match self {
            Instance::Symmetric(s) => s.sample_state(rng),
            Instance::Independent(s) => s.sample_state(rng),
        }
    }

    pub fn as_symmetric(&self) -> Option<&SymmetricInstance> {
        match self {
            Instance::Symmetric(s) => Some(s),
            Instance::Independent(_) => None,
        }
    }

    pub fn as_independent(&self) -> Option<&IndependentInstance> {
        match self {
            Instance::Independent(s) => Some(s),
            Instance::Symmetric(_) => None,
        }
    }
}

/// Realized types; position `i` holds the global type index of action `i`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct State {
    pub types: Vec<usize>,
}

impl State {
    pub fn ids(&self, table: &TypeTable) -> Vec<String> {
        self.types.iter().map(|&t| table.ty(t).id.clone()).collect()
    }
}

/// A signaling scheme that can be executed on realized states.
pub trait SchemeExecutor: Sync {
    /// Probability of recommending each action in `state`; entries with
    /// zero probability may be omitted.
    fn recommendation_distribution(&self, state: &State) -> Result<Vec<(usize, f64)>>;
}

pub fn draw_recommendation<R: Rng + ?Sized>(dist: &[(usize, f64)], rng: &mut R) -> usize {
    let weights: Vec<f64> = dist.iter().map(|(_, p)| *p).collect();
    dist[draw_index(&weights, rng)].0
}

pub fn rho_e(instance: &Instance) -> Rational {
    match instance {
        Instance::Symmetric(s) => s.rho_e(),
        Instance::Independent(s) => s.rho_e(),
    }
}

pub fn sample_state<R: Rng + ?Sized>(instance: &Instance, rng: &mut R) -> State {
    instance.sample_state(rng)
}

/// The instance restricted to its first `k` actions. IID instances become
/// IID with `n = k`; the other scenarios keep all sources in the random
/// ordering and expose only the first `k` positions.
pub fn truncate(instance: &SymmetricInstance, k: usize) -> Result<SymmetricInstance> {
    if k == 0 || k > instance.num_actions() {
        return Err(Error::Validation(format!(
            "truncation size {k} outside 1..={}",
            instance.num_actions()
        )));
    }
    if let Scenario::Iid { palette, .. } = &instance.scenario {
        return SymmetricInstance::new(Scenario::Iid { palette: palette.clone(), n: k });
    }
    let mut out = instance.clone();
    out.observed = k;
    Ok(out)
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Value> {
    obj.get(key).ok_or_else(|| Error::Parse(format!("missing field {key:?}")))
}

fn parse_type(v: &Value, with_q: bool) -> Result<(ActionType, Option<Rational>)> {
    let obj = v.as_object().ok_or_else(|| Error::Parse("type entry must be an object".into()))?;
    let id = match field(obj, "id")? {
        Value::String(s) => s.clone(),
        Value::Number(n) => n.to_string(),
        other => return Err(Error::Parse(format!("bad type id {other}"))),
    };
    let rho = parse_rational(field(obj, "rho")?)?;
    let xi = parse_rational(field(obj, "xi")?)?;
    let q = if with_q { Some(parse_rational(field(obj, "q")?)?) } else { None };
    Ok((ActionType { id, rho, xi }, q))
}

fn parse_dist(v: &Value) -> Result<Vec<(ActionType, Rational)>> {
    let arr = v.as_array().ok_or_else(|| Error::Parse("distribution must be an array".into()))?;
    arr.iter()
        .map(|t| parse_type(t, true).map(|(t, q)| (t, q.unwrap_or_else(Rational::zero))))
        .collect()
}

fn parse_list<'a>(obj: &'a Map<String, Value>, key: &str) -> Result<&'a Vec<Value>> {
    field(obj, key)?
        .as_array()
        .ok_or_else(|| Error::Parse(format!("field {key:?} must be an array")))
}

pub fn instance_from_json(doc: &Value) -> Result<Instance> {
    let obj = doc.as_object().ok_or_else(|| Error::Parse("instance must be a JSON object".into()))?;
    let kind = field(obj, "kind")?.as_str().ok_or_else(|| Error::Parse("kind must be a string".into()))?;
    let inst = match kind {
        "iid" => {
            let n = field(obj, "n")?
                .as_u64()
                .ok_or_else(|| Error::Parse("n must be a non-negative integer".into()))?;
            let palette = parse_dist(field(obj, "palette")?)?;
            Instance::Symmetric(SymmetricInstance::new(Scenario::Iid { palette, n: n as usize })?)
        }
        "prophet_secretary" => {
            let dists = parse_list(obj, "dists")?.iter().map(parse_dist).collect::<Result<Vec<_>>>()?;
            Instance::Symmetric(SymmetricInstance::new(Scenario::ProphetSecretary { dists })?)
        }
        "d_random_order" => {
            let vectors = parse_list(obj, "vectors")?
                .iter()
                .map(|v| {
                    v.as_array()
                        .ok_or_else(|| Error::Parse("vector must be an array".into()))?
                        .iter()
                        .map(|t| parse_type(t, false).map(|(t, _)| t))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            let vector_probs =
                parse_list(obj, "vector_probs")?.iter().map(parse_rational).collect::<Result<Vec<_>>>()?;
            Instance::Symmetric(SymmetricInstance::new(Scenario::DRandomOrder { vectors, vector_probs })?)
        }
        "independent" => {
            let actions = parse_list(obj, "actions")?.iter().map(parse_dist).collect::<Result<Vec<_>>>()?;
            Instance::Independent(IndependentInstance::new(actions)?)
        }
        other => return Err(Error::Parse(format!("unknown instance kind {other:?}"))),
    };
    if let Some(obs) = obj.get("observed") {
        let k = obs.as_u64().ok_or_else(|| Error::Parse("observed must be an integer".into()))? as usize;
        return match inst {
            Instance::Symmetric(s) => Ok(Instance::Symmetric(truncate(&s, k)?)),
            Instance::Independent(_) => {
                Err(Error::Validation("observed is only defined for symmetric instances".into()))
            }
        };
    }
    Ok(inst)
}

pub fn load_instance(document: &str) -> Result<Instance> {
    let v: Value = serde_json::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
    instance_from_json(&v)
}

fn type_json(t: &ActionType, q: Option<&Rational>) -> Value {
    let mut m = Map::new();
    m.insert("id".into(), json!(t.id));
    m.insert("rho".into(), json!(format_rational(&t.rho)));
    m.insert("xi".into(), json!(format_rational(&t.xi)));
    if let Some(q) = q {
        m.insert("q".into(), json!(format_rational(q)));
    }
    Value::Object(m)
}

fn dist_json(d: &[(ActionType, Rational)]) -> Value {
    Value::Array(d.iter().map(|(t, q)| type_json(t, Some(q))).collect())
}

pub fn instance_to_json(instance: &Instance) -> Value {
    match instance {
        Instance::Symmetric(s) => {
            let mut v = match &s.scenario {
                Scenario::Iid { palette, n } => json!({"kind": "iid", "n": n, "palette": dist_json(palette)}),
                Scenario::ProphetSecretary { dists } => json!({
                    "kind": "prophet_secretary",
                    "dists": dists.iter().map(|d| dist_json(d)).collect::<Vec<_>>(),
                }),
                Scenario::DRandomOrder { vectors, vector_probs } => json!({
                    "kind": "d_random_order",
                    "vectors": vectors
                        .iter()
                        .map(|v| v.iter().map(|t| type_json(t, None)).collect::<Vec<_>>())
                        .collect::<Vec<_>>(),
                    "vector_probs": vector_probs.iter().map(format_rational).collect::<Vec<_>>(),
                }),
            };
            if s.is_view() {
                v["observed"] = json!(s.observed);
            }
            v
        }
        Instance::Independent(s) => json!({
            "kind": "independent",
            "actions": s.actions.iter().map(|a| dist_json(a)).collect::<Vec<_>>(),
        }),
    }
}

pub fn serialize_instance(instance: &Instance) -> String {
    serde_json::to_string_pretty(&instance_to_json(instance)).unwrap_or_default()
}
