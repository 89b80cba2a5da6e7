//! The `persuade` command line: solve, exact, simulate, compare, fixture.

use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::exact::{optimal_scheme_bruteforce, persuasiveness_check, BruteForceResult, DEFAULT_STATE_BOUND};
use crate::independent::{
    actions_greedy, actions_reduce, check_rho_e_optimality, compute_signal, fptas_select, ExPostScheme, RhoEOptimality,
};
use crate::model::{load_instance, serialize_instance, Instance, IndependentInstance, SchemeExecutor, SymmetricInstance};
use crate::simulate::estimate;
use crate::symmetric::{bicriteria_scheme, imitation_scheme, slope_algorithm, BicriteriaScheme, ImitationScheme, SlopeExecutor, SlopeScheme};

#[derive(Parser, Debug)]
#[command(name = "persuade", version, about = "Signaling schemes for Bayesian persuasion with limited signals")]
pub struct Cli {
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "PERSUADE_THREADS", default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Compute a scheme and print it with its expected utilities.
    Solve(SolveArgs),
    /// Brute-force optimal k-signal scheme over the enumerated prior.
    Exact(ExactArgs),
    /// Monte-Carlo evaluation of a scheme.
    Simulate(SimulateArgs),
    /// Run several methods against the exact optimum.
    Compare(CompareArgs),
    /// Write a named fixture instance.
    Fixture(FixtureArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Slope,
    Greedy,
    Fptas,
    Reduce,
    Imitation,
    Bicriteria,
    Exact,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Slope => "slope",
            Method::Greedy => "greedy",
            Method::Fptas => "fptas",
            Method::Reduce => "reduce",
            Method::Imitation => "imitation",
            Method::Bicriteria => "bicriteria",
            Method::Exact => "exact",
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long)]
    pub instance: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long)]
    pub output: Option<String>,
    #[arg(long, default_value_t = DEFAULT_STATE_BOUND)]
    pub state_bound: u128,
}

#[derive(Args, Debug, Clone)]
pub struct SchemeArgs {
    #[arg(long, value_enum, default_value_t = Method::Slope)]
    pub method: Method,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Sample count for the bicriteria method.
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Run independent-instance methods even when rho_E-optimality is not established.
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scheme: SchemeArgs,
}

#[derive(Args, Debug)]
pub struct ExactArgs {
    #[command(flatten)]
    pub common: Common,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Table,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Monte-Carlo sample count.
    #[arg(long, default_value_t = 100_000)]
    pub runs: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub methods: Vec<Method>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Args, Debug)]
pub struct FixtureArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(crate::fixtures::NAMES))]
    pub name: String,
    /// Size parameter of the parametric fixtures.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub output: Option<String>,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Parse(_) | Error::Validation(_) => 1,
        Error::Infeasible(_) | Error::StateBound { .. } | Error::Numerical(_) | Error::Inconsistent { .. } => 2,
        Error::Precondition(_) => 3,
    }
}

/// Floats rounded to 12 significant digits.
fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            if let Some(f) = n.as_f64() {
                let r: f64 = format!("{f:.11e}").parse().unwrap_or(f);
                *v = json!(r);
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_floats),
        Value::Object(o) => o.values_mut().for_each(round_floats),
        _ => {}
    }
}

fn emit(mut v: Value, output: Option<&str>, out: &mut dyn Write) -> Result<()> {
    round_floats(&mut v);
    let text = serde_json::to_string_pretty(&v).map_err(|e| Error::Numerical(e.to_string()))? + "\n";
    write_text(&text, output, out)
}

fn write_text(text: &str, output: Option<&str>, out: &mut dyn Write) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).map_err(|e| Error::Validation(format!("cannot write {path}: {e}"))),
        None => out.write_all(text.as_bytes()).map_err(|e| Error::Validation(e.to_string())),
    }
}

fn read_instance(path: &str) -> Result<Instance> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Validation(format!("cannot read {path}: {e}")))?;
    load_instance(&text)
}

fn symmetric(inst: &Instance, method: Method) -> Result<&SymmetricInstance> {
    inst.as_symmetric()
        .ok_or_else(|| Error::Validation(format!("method {} needs a symmetric instance", method.name())))
}

fn independent(inst: &Instance, method: Method) -> Result<&IndependentInstance> {
    inst.as_independent()
        .ok_or_else(|| Error::Validation(format!("method {} needs an independent instance", method.name())))
}

pub enum Built {
    Slope(SlopeScheme),
    Imitation(ImitationScheme),
    Bicriteria(BicriteriaScheme),
    ExPost(ExPostScheme, Method),
    Exact(BruteForceResult),
}

impl Built {
    pub fn sender(&self) -> f64 {
        match self {
            Built::Slope(s) => s.expected_sender_utility,
            Built::Imitation(s) => s.expected_sender_utility,
            Built::Bicriteria(s) => s.empirical_sender,
            Built::ExPost(s, _) => s.expected_sender_utility,
            Built::Exact(r) => r.value,
        }
    }

    pub fn to_json(&self, inst: &Instance, k: usize) -> Value {
        let table = inst.table();
        match self {
            Built::Slope(s) => s.to_json(table),
            Built::Imitation(s) => s.to_json(table),
            Built::Bicriteria(s) => s.to_json(table),
            Built::ExPost(s, m) => s.to_json(inst.as_independent().expect("independent"), m.name(), k),
            Built::Exact(r) => json!({
                "method": "exact",
                "k": k,
                "opt": r.value,
                "u_sender": r.value,
                "u_receiver": r.receiver,
                "scheme": r.scheme.to_json(table),
            }),
        }
    }

    pub fn with_executor<R>(&self, inst: &Instance, f: impl FnOnce(&dyn SchemeExecutor) -> R) -> R {
        match self {
            Built::Slope(s) => f(&SlopeExecutor::new(s, inst.table())),
            Built::Imitation(s) => f(&s.executor(inst.table())),
            Built::Bicriteria(s) => f(s),
            Built::ExPost(s, _) => f(s),
            Built::Exact(r) => f(&r.scheme),
        }
    }
}

fn require_rho_e_optimality(inst: &IndependentInstance, force: bool, err: &mut dyn Write) -> Result<()> {
    if let RhoEOptimality::Unknown { warning } = check_rho_e_optimality(inst) {
        if !force {
            return Err(Error::Precondition(format!("{warning}; rerun with --force to proceed anyway")));
        }
        let _ = writeln!(err, "warning: {warning}");
    }
    Ok(())
}

pub fn build(
    inst: &Instance,
    k: usize,
    method: Method,
    scheme: &SchemeArgs,
    state_bound: u128,
    err: &mut dyn Write,
) -> Result<Built> {
    if k < 2 {
        return Err(Error::Validation("k must be at least 2".into()));
    }
    Ok(match method {
        Method::Slope => Built::Slope(slope_algorithm(symmetric(inst, method)?, k)?),
        Method::Imitation => Built::Imitation(imitation_scheme(symmetric(inst, method)?, k)?),
        Method::Bicriteria => {
            let mut rng = ChaCha8Rng::seed_from_u64(scheme.seed);
            Built::Bicriteria(bicriteria_scheme(symmetric(inst, method)?, k, scheme.epsilon, scheme.samples, &mut rng)?)
        }
        Method::Greedy | Method::Fptas | Method::Reduce => {
            let ind = independent(inst, method)?;
            require_rho_e_optimality(ind, scheme.force, err)?;
            let s = match method {
                Method::Greedy => actions_greedy(ind, k)?,
                Method::Fptas => fptas_select(ind, k, scheme.epsilon)?,
                _ => actions_reduce(ind, k)?,
            };
            Built::ExPost(compute_signal(ind, &s)?, method)
        }
        Method::Exact => Built::Exact(optimal_scheme_bruteforce(inst, k, state_bound)?),
    })
}

/// Guaranteed lower bound on (method utility) / OPT_k.
pub fn guaranteed_ratio(method: Method, k: usize, n: usize, epsilon: f64) -> f64 {
    let kf = k as f64;
    let signal = 1.0 - (1.0 - 1.0 / kf).powi(k as i32);
    match method {
        Method::Slope | Method::Exact => 1.0,
        Method::Imitation => kf / n as f64,
        Method::Greedy => signal * (1.0 - (1.0 - 1.0 / kf).powi(k as i32 - 1)),
        Method::Fptas => signal * (1.0 - epsilon) * (1.0 - 1.0 / kf),
        Method::Reduce => signal * (1.0 - 1.0 / kf) * kf / n as f64,
        Method::Bicriteria => 0.0,
    }
}

fn run_command(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Solve(a) => {
            let inst = read_instance(&a.common.instance)?;
            let built = build(&inst, a.common.k, a.scheme.method, &a.scheme, a.common.state_bound, err)?;
            emit(built.to_json(&inst, a.common.k), a.common.output.as_deref(), out)
        }
        Command::Exact(a) => {
            let inst = read_instance(&a.common.instance)?;
            if a.common.k < 2 {
                return Err(Error::Validation("k must be at least 2".into()));
            }
            let r = optimal_scheme_bruteforce(&inst, a.common.k, a.common.state_bound)?;
            emit(Built::Exact(r).to_json(&inst, a.common.k), a.common.output.as_deref(), out)
        }
        Command::Simulate(a) => {
            let inst = read_instance(&a.common.instance)?;
            let built = build(&inst, a.common.k, a.scheme.method, &a.scheme, a.common.state_bound, err)?;
            let report = built.with_executor(&inst, |ex| estimate(ex, &inst, a.runs, a.scheme.seed))?;
            match a.format {
                Format::Json => {
                    let mut v = report.to_json();
                    v["method"] = json!(a.scheme.method.name());
                    v["persuasive_3sigma"] = json!(report.persuasive_within(3.0));
                    emit(v, a.common.output.as_deref(), out)
                }
                Format::Table => write_text(&report.to_table(), a.common.output.as_deref(), out),
            }
        }
        Command::Compare(a) => compare(a, out, err),
        Command::Fixture(a) => {
            let inst = crate::fixtures::named(&a.name, a.k)
                .ok_or_else(|| Error::Validation(format!("unknown fixture {:?}", a.name)))?;
            write_text(&(serialize_instance(&inst) + "\n"), a.output.as_deref(), out)
        }
    }
}

fn compare(a: CompareArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let inst = read_instance(&a.common.instance)?;
    let k = a.common.k;
    if k < 2 {
        return Err(Error::Validation("k must be at least 2".into()));
    }
    let methods = if a.methods.is_empty() {
        match inst {
            Instance::Symmetric(_) => vec![Method::Slope, Method::Imitation],
            Instance::Independent(_) => vec![Method::Greedy, Method::Fptas, Method::Reduce],
        }
    } else {
        a.methods.clone()
    };
    let opt = optimal_scheme_bruteforce(&inst, k, a.common.state_bound)?.value;
    let args = SchemeArgs { method: Method::Slope, epsilon: a.epsilon, samples: 5000, seed: 0, force: a.force };
    let mut rows = Vec::new();
    let mut violated = false;
    let mut table = format!("{:<12} {:>16} {:>16} {:>12} {:>12} {:>10}\n", "method", "u_sender", "opt_k", "ratio", "bound", "persuasive");
    for m in methods {
        let built = build(&inst, k, m, &SchemeArgs { method: m, ..args.clone() }, a.common.state_bound, err)?;
        let u = built.sender();
        let ratio = if opt > 1e-12 { u / opt } else { 1.0 };
        let bound = guaranteed_ratio(m, k, inst.num_actions(), a.epsilon);
        let persuasive = built.with_executor(&inst, |ex| persuasiveness_check(ex, &inst, a.common.state_bound))?.persuasive;
        if ratio < bound - 1e-6 || (!persuasive && m != Method::Bicriteria) {
            violated = true;
        }
        table.push_str(&format!(
            "{:<12} {:>16.12} {:>16.12} {:>12.9} {:>12.9} {:>10}\n",
            m.name(),
            u,
            opt,
            ratio,
            bound,
            persuasive
        ));
        rows.push(json!({"method": m.name(), "u_sender": u, "opt_k": opt, "ratio": ratio, "bound": bound, "persuasive": persuasive}));
    }
    let _ = err.write_all(table.as_bytes());
    emit(json!({"k": k, "opt_k": opt, "rows": rows}), a.common.output.as_deref(), out)?;
    if violated {
        return Err(Error::Inconsistent { state: Vec::new(), reason: "a method fell below its guaranteed bound".into() });
    }
    Ok(())
}

/// Runs the command line and returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let threads = cli.threads;
    match crate::par::with_threads(threads, move || run_command_boxed(cli)) {
        (Ok(()), o, e) => {
            let _ = out.write_all(&o);
            let _ = err.write_all(&e);
            0
        }
        (Err(x), o, e) => {
            let _ = out.write_all(&o);
            let _ = err.write_all(&e);
            let _ = writeln!(err, "error: {x}");
            exit_code(&x)
        }
    }
}

fn run_command_boxed(cli: Cli) -> (Result<()>, Vec<u8>, Vec<u8>) {
    let (mut o, mut e) = (Vec::new(), Vec::new());
    let r = run_command(cli, &mut o, &mut e);
    (r, o, e)
}
