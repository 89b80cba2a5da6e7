//! Monte-Carlo evaluation of any executable scheme.
//!
//! Samples are drawn in fixed-size chunks; chunk c uses stream c of a
//! ChaCha8 generator seeded by the user seed, and chunk results are merged
//! in chunk order, so reports do not depend on the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::model::{draw_recommendation, to_f64, Instance, SchemeExecutor};

const CHUNK: usize = 4096;

#[derive(Clone, Debug, Default)]
struct Moments {
    n: u64,
    sum: f64,
    sumsq: f64,
}

impl Moments {
    fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sumsq += v * v;
    }

    fn merge(&mut self, o: &Moments) {
        self.n += o.n;
        self.sum += o.sum;
        self.sumsq += o.sumsq;
    }

    fn mean(&self) -> f64 {
        if self.n == 0 { 0.0 } else { self.sum / self.n as f64 }
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let var = ((self.sumsq - self.sum * self.sum / n) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    }
}

#[derive(Clone, Debug)]
struct Tally {
    sender: Moments,
    receiver: Moments,
    follow: Vec<Moments>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SignalStats {
    pub action: usize,
    pub count: u64,
    pub frequency: f64,
    pub follow_mean: f64,
    pub follow_stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub samples: usize,
    pub seed: u64,
    pub sender_mean: f64,
    pub sender_stderr: f64,
    pub receiver_mean: f64,
    pub receiver_stderr: f64,
    pub rho_e: f64,
    pub signals: Vec<SignalStats>,
}

pub fn estimate(scheme: &dyn SchemeExecutor, inst: &Instance, samples: usize, seed: u64) -> Result<SimReport> {
    if samples == 0 {
        return Err(Error::Validation("samples must be at least 1".into()));
    }
    let n = inst.num_actions();
    let table = inst.table();
    let chunks = samples.div_ceil(CHUNK);
    let tallies = crate::par::map_range(chunks, |c| -> Result<Tally> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(c as u64);
        let mut t = Tally { sender: Moments::default(), receiver: Moments::default(), follow: vec![Moments::default(); n] };
        let len = CHUNK.min(samples - c * CHUNK);
        for _ in 0..len {
            let state = inst.sample_state(&mut rng);
            let dist = scheme.recommendation_distribution(&state).map_err(|e| match e {
                Error::Inconsistent { .. } => e,
                other => Error::Inconsistent { state: state.ids(table), reason: other.to_string() },
            })?;
            if dist.is_empty() {
                return Err(Error::Inconsistent { state: state.ids(table), reason: "empty recommendation".into() });
            }
            let i = draw_recommendation(&dist, &mut rng);
            let ty = state.types[i];
            t.sender.push(table.xi_f(ty));
            t.receiver.push(table.rho_f(ty));
            t.follow[i].push(table.rho_f(ty));
        }
        Ok(t)
    });
    let mut total = Tally { sender: Moments::default(), receiver: Moments::default(), follow: vec![Moments::default(); n] };
    for t in tallies {
        let t = t?;
        total.sender.merge(&t.sender);
        total.receiver.merge(&t.receiver);
        for (a, b) in total.follow.iter_mut().zip(&t.follow) {
            a.merge(b);
        }
    }
    let signals = total
        .follow
        .iter()
        .enumerate()
        .filter(|(_, m)| m.n > 0)
        .map(|(i, m)| SignalStats {
            action: i,
            count: m.n,
            frequency: m.n as f64 / samples as f64,
            follow_mean: m.mean(),
            follow_stderr: m.stderr(),
        })
        .collect();
    Ok(SimReport {
        samples,
        seed,
        sender_mean: total.sender.mean(),
        sender_stderr: total.sender.stderr(),
        receiver_mean: total.receiver.mean(),
        receiver_stderr: total.receiver.stderr(),
        rho_e: to_f64(&crate::model::rho_e(inst)),
        signals,
    })
}

impl SimReport {
    /// Every sent signal's conditional receiver utility is at least ρ_E
    /// minus three standard errors.
    pub fn persuasive_within(&self, sigmas: f64) -> bool {
        self.signals.iter().all(|s| s.follow_mean >= self.rho_e - sigmas * s.follow_stderr - 1e-9)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "samples": self.samples,
            "seed": self.seed,
            "sender": {"mean": self.sender_mean, "stderr": self.sender_stderr},
            "receiver": {"mean": self.receiver_mean, "stderr": self.receiver_stderr},
            "rho_e": self.rho_e,
            "signals": self.signals.iter().map(|s| json!({
                "action": s.action,
                "count": s.count,
                "frequency": s.frequency,
                "receiver_mean": s.follow_mean,
                "receiver_stderr": s.follow_stderr,
            })).collect::<Vec<_>>(),
        })
    }

    pub fn to_table(&self) -> String {
        let mut out = format!(
            "samples {}  seed {}\nsender   {:>15.12} ± {:.12}\nreceiver {:>15.12} ± {:.12}\nrho_E    {:>15.12}\n\n",
            self.samples, self.seed, self.sender_mean, self.sender_stderr, self.receiver_mean, self.receiver_stderr, self.rho_e
        );
        out.push_str(&format!("{:>8} {:>10} {:>16} {:>16}\n", "signal", "frequency", "receiver", "stderr"));
        for s in &self.signals {
            out.push_str(&format!(
                "{:>8} {:>10.6} {:>16.12} {:>16.12}\n",
                s.action, s.frequency, s.follow_mean, s.follow_stderr
            ));
        }
        out
    }
}
