//! Adaptive simulated annealing over `(n, m)`.
//!
//! The chain starts from the best marker at `n = 1`, starts at temperature
//! `T0 = N0`, and proposes Gaussian jumps whose spread scales with the size
//! of the search space (`N0 / c_sigma` for `n`, `|S| / c_sigma` for the
//! marker index). Chain length per temperature and the stop patience both
//! grow with `log(N0 * |S|)`:
//!
//! ```text
//! S_m = ceil(gamma_m * log(N0 * |S|))     proposals per temperature
//! S_s = ceil(gamma_s * log(N0 * |S|))     temperatures without improvement before stopping
//! T   = T0 / (1 + log(1 + t_c))
//! ```

use std::collections::HashMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::{LossBreakdown, RegionEvaluator};
use crate::revis::MarkerType;
use crate::seed;

/// Logarithm used by the step counts and the cooling schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogBase {
    #[default]
    Natural,
    Ten,
}

impl LogBase {
    pub fn log(self, x: f64) -> f64 {
        match self {
            LogBase::Natural => x.ln(),
            LogBase::Ten => x.log10(),
        }
    }
}

/// Redraws allowed when a proposal equals the current state.
pub const MAX_REDRAWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams {
    /// Coefficient of the stop criterion.
    pub gamma_s: f64,
    /// Coefficient of the Markov chain length.
    pub gamma_m: f64,
    /// Neighbourhood divisor for the proposal spread.
    pub c_sigma: f64,
    /// Annealing stops once the temperature falls to this value.
    pub t_min: f64,
    pub seed: u64,
    pub log_base: LogBase,
    /// Overrides `T0 = N0`; only for instrumentation.
    pub initial_temperature: Option<f64>,
    /// Keep one [`TraceRow`] per temperature.
    pub record_trace: bool,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self {
            gamma_s: 1.5,
            gamma_m: 1.5,
            c_sigma: 6.0,
            t_min: 0.1,
            seed: 0,
            log_base: LogBase::Natural,
            initial_temperature: None,
            record_trace: false,
        }
    }
}

impl AnnealParams {
    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gamma_s", self.gamma_s),
            ("gamma_m", self.gamma_m),
            ("c_sigma", self.c_sigma),
            ("t_min", self.t_min),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// `(S_m, S_s)` for a space of `n_max * marker_count` states.
    pub fn step_counts(&self, n_max: usize, marker_count: usize) -> (usize, usize) {
        let l = self.log_base.log((n_max * marker_count) as f64);
        let steps = |gamma: f64| ((gamma * l).ceil() as usize).max(1);
        (steps(self.gamma_m), steps(self.gamma_s))
    }
}

/// State of the chain at the end of one temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t_c: usize,
    pub temperature: f64,
    pub current_loss: f64,
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealResult {
    pub best_n: usize,
    pub best_m: MarkerType,
    pub best_loss: f64,
    pub best: LossBreakdown,
    /// Distinct `(n, m)` states whose loss was computed.
    pub evaluations: usize,
    /// Proposals made (one loss lookup each).
    pub steps: usize,
    pub temperature_steps: usize,
    /// Accepted proposals with a strictly higher loss than the current state.
    pub uphill_accepted: usize,
    pub markov_steps: usize,
    pub stop_steps: usize,
    pub n_max: usize,
    pub trace: Vec<TraceRow>,
}

/// One Gaussian neighbour of `(n, m_index)`. `n` stays in `1..=n_max` and the
/// marker index in `0..marker_count`.
pub fn propose<R: Rng + ?Sized>(
    n: usize,
    m_index: usize,
    n_max: usize,
    marker_count: usize,
    c_sigma: f64,
    rng: &mut R,
) -> (usize, usize) {
    let dn = Normal::new(0.0, n_max as f64 / c_sigma)
        .expect("finite spread")
        .sample(rng);
    let dm = Normal::new(0.0, marker_count as f64 / c_sigma)
        .expect("finite spread")
        .sample(rng);
    // `as i64` truncates toward zero
    let n_raw = (n as f64 + dn) as i64;
    let m_raw = (m_index as f64 + dm) as i64;
    let n_new = (n_raw - 1).rem_euclid(n_max as i64) as usize + 1;
    let m_new = m_raw.rem_euclid(marker_count as i64) as usize;
    (n_new, m_new)
}

struct Memo<'e, 'r> {
    evaluator: &'e mut RegionEvaluator<'r>,
    markers: &'e [MarkerType],
    cache: HashMap<(usize, usize), LossBreakdown>,
}

impl Memo<'_, '_> {
    fn loss(&mut self, n: usize, m: usize) -> Result<LossBreakdown> {
        if let Some(b) = self.cache.get(&(n, m)) {
            return Ok(*b);
        }
        let b = self.evaluator.loss(n, self.markers[m])?;
        self.cache.insert((n, m), b);
        Ok(b)
    }
}

/// Approximates `argmin L(n, m)` over `1 <= n <= N0`, `m in markers`.
pub fn anneal(
    evaluator: &mut RegionEvaluator<'_>,
    markers: &[MarkerType],
    params: &AnnealParams,
) -> Result<AnnealResult> {
    if markers.is_empty() {
        return Err(Error::EmptyMarkerSet);
    }
    params.validate()?;
    let n_max = evaluator.n_max();
    let count = markers.len();
    let (markov_steps, stop_steps) = params.step_counts(n_max, count);
    let t0 = params.initial_temperature.unwrap_or(n_max as f64);
    let mut rng = seed::rng(params.seed);
    let mut memo = Memo {
        evaluator,
        markers,
        cache: HashMap::new(),
    };

    let mut current = (1usize, 0usize);
    let mut current_loss = f64::INFINITY;
    for m in 0..count {
        let l = memo.loss(1, m)?.total;
        if l < current_loss {
            current_loss = l;
            current = (1, m);
        }
    }
    let mut best = current;
    let mut best_loss = current_loss;
    let mut prev_best_loss = best_loss;

    let mut result = AnnealResult {
        best_n: 0,
        best_m: markers[0],
        best_loss: 0.0,
        best: memo.loss(best.0, best.1)?,
        evaluations: 0,
        steps: 0,
        temperature_steps: 0,
        uphill_accepted: 0,
        markov_steps,
        stop_steps,
        n_max,
        trace: Vec::new(),
    };

    // with N0 = 1 initialization already covered the whole space
    let mut temperature = t0;
    let mut stale = 0usize;
    let mut t_c = 0usize;
    while n_max > 1 && temperature > params.t_min && stale < stop_steps {
        for _ in 0..markov_steps {
            let mut cand = propose(current.0, current.1, n_max, count, params.c_sigma, &mut rng);
            let mut redraws = 0;
            while cand == current && redraws < MAX_REDRAWS {
                cand = propose(current.0, current.1, n_max, count, params.c_sigma, &mut rng);
                redraws += 1;
            }
            let cand_loss = memo.loss(cand.0, cand.1)?.total;
            result.steps += 1;
            let p = (-(cand_loss - current_loss) / temperature).exp().min(1.0);
            let r: f64 = rng.random();
            if cand_loss < best_loss {
                best = cand;
                best_loss = cand_loss;
            }
            if cand_loss < current_loss || p > r {
                if cand_loss > current_loss {
                    result.uphill_accepted += 1;
                }
                current = cand;
                current_loss = cand_loss;
            }
        }
        if best_loss < prev_best_loss {
            stale = 0;
        } else {
            stale += 1;
        }
        temperature = t0 / (1.0 + params.log_base.log(1.0 + t_c as f64));
        t_c += 1;
        prev_best_loss = best_loss;
        result.temperature_steps += 1;
        if params.record_trace {
            result.trace.push(TraceRow {
                t_c,
                temperature,
                current_loss,
                best_loss,
            });
        }
    }

    result.best = memo.loss(best.0, best.1)?;
    result.best_n = best.0;
    result.best_m = markers[best.1];
    result.best_loss = best_loss;
    result.evaluations = memo.cache.len();
    Ok(result)
}

/// Exhaustive minimum over the whole `(n, m)` space. Ties keep the smallest
/// `n`, then the earliest marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub best: LossBreakdown,
    pub evaluations: usize,
    pub table: Vec<LossBreakdown>,
}

pub fn exhaustive_search(
    evaluator: &mut RegionEvaluator<'_>,
    markers: &[MarkerType],
) -> Result<ExhaustiveResult> {
    if markers.is_empty() {
        return Err(Error::EmptyMarkerSet);
    }
    let mut table = Vec::with_capacity(evaluator.n_max() * markers.len());
    for n in 1..=evaluator.n_max() {
        for &m in markers {
            table.push(evaluator.loss(n, m)?);
        }
    }
    let best = *table
        .iter()
        .reduce(|a, b| if b.total < a.total { b } else { a })
        .expect("nonempty space");
    Ok(ExhaustiveResult {
        best,
        evaluations: table.len(),
        table,
    })
}
