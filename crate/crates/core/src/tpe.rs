//! Sequential model-based hyperparameter search: Tree-structured Parzen
//! Estimator plus grid and random baselines.

use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use thiserror::Error;

use crate::util::rng_from_seed;

#[derive(Debug, Error)]
pub enum TpeError {
    #[error("invalid search space: {0}")]
    BadSpace(String),
    #[error("invalid params: {0}")]
    BadParams(String),
    #[error("observation {0} lies outside its dimension bounds")]
    OutOfBounds(String),
    #[error("grid would evaluate {size} configs, over the cap of {cap}; raise the cap to proceed")]
    GridTooLarge { size: usize, cap: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Dim {
    Uniform { lo: f64, hi: f64 },
    LogUniform { lo: f64, hi: f64 },
    IntUniform { lo: i64, hi: i64 },
    Categorical { choices: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedDim {
    pub name: String,
    #[serde(flatten)]
    pub dim: Dim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub dims: Vec<NamedDim>,
}

impl SearchSpace {
    pub fn new(dims: Vec<(&str, Dim)>) -> Self {
        SearchSpace {
            dims: dims
                .into_iter()
                .map(|(name, dim)| NamedDim {
                    name: name.to_string(),
                    dim,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), TpeError> {
        for d in &self.dims {
            match &d.dim {
                Dim::Uniform { lo, hi } => {
                    if !(lo < hi) {
                        return Err(TpeError::BadSpace(format!("{}: lo must be < hi", d.name)));
                    }
                }
                Dim::LogUniform { lo, hi } => {
                    if !(0.0 < *lo && lo < hi) {
                        return Err(TpeError::BadSpace(format!(
                            "{}: need 0 < lo < hi for log_uniform",
                            d.name
                        )));
                    }
                }
                Dim::IntUniform { lo, hi } => {
                    if lo >= hi {
                        return Err(TpeError::BadSpace(format!("{}: lo must be < hi", d.name)));
                    }
                }
                Dim::Categorical { choices } => {
                    if choices.is_empty() {
                        return Err(TpeError::BadSpace(format!("{}: empty choices", d.name)));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Cat(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Float(v) => Some(*v),
            ParamValue::Cat(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            ParamValue::Float(v) => Some(v.round() as i64),
            ParamValue::Cat(_) => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            ParamValue::Cat(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub index: usize,
    pub config: Vec<ParamValue>,
    /// Lower is better; failed trials carry +inf.
    pub objective: f64,
    pub wall_time_s: f64,
    pub status: TrialStatus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TpeParams {
    /// Quantile fraction separating good from bad observations.
    pub gamma: f64,
    /// Random warmup trials before the Parzen machinery engages.
    pub n_startup: usize,
    /// Candidates drawn from l(x) per suggestion.
    pub n_candidates: usize,
    pub max_trials: usize,
    pub seed: u64,
}

impl Default for TpeParams {
    fn default() -> Self {
        TpeParams {
            gamma: 0.25,
            n_startup: 10,
            n_candidates: 24,
            max_trials: 30,
            seed: 0,
        }
    }
}

impl TpeParams {
    fn validate(&self) -> Result<(), TpeError> {
        if !(0.0 < self.gamma && self.gamma < 1.0) {
            return Err(TpeError::BadParams("gamma must be in (0,1)".into()));
        }
        if self.n_startup < 2 {
            return Err(TpeError::BadParams("n_startup must be >= 2".into()));
        }
        if self.n_candidates < 1 {
            return Err(TpeError::BadParams("n_candidates must be >= 1".into()));
        }
        if self.max_trials < self.n_startup {
            return Err(TpeError::BadParams("max_trials must be >= n_startup".into()));
        }
        Ok(())
    }
}

/// Sort by (objective, trial index) and put the first max(1, ceil(gamma n))
/// trials in `good`, the remainder in `bad`.
pub fn split_observations(trials: &[Trial], gamma: f64) -> (Vec<&Trial>, Vec<&Trial>) {
    let mut sorted: Vec<&Trial> = trials.iter().collect();
    sorted.sort_by(|a, b| {
        a.objective
            .partial_cmp(&b.objective)
            .unwrap()
            .then(a.index.cmp(&b.index))
    });
    let n_good = ((gamma * sorted.len() as f64).ceil() as usize).max(1);
    let bad = sorted.split_off(n_good.min(sorted.len()));
    (sorted, bad)
}

// ---------------------------------------------------------------------------
// Parzen densities

fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Equal-weight truncated Gaussian mixture: one component per observation
/// plus a prior component at the range midpoint. Per-component bandwidth is
/// max(range/(1+n), spacing to the nearest neighbouring center).
#[derive(Debug, Clone)]
struct TruncatedMixture {
    lo: f64,
    hi: f64,
    centers: Vec<f64>,
    bandwidths: Vec<f64>,
}

impl TruncatedMixture {
    fn fit(values: &[f64], lo: f64, hi: f64) -> Self {
        let range = hi - lo;
        let mut centers: Vec<f64> = values.to_vec();
        centers.push(lo + range / 2.0); // prior component
        let base = range / (1.0 + values.len() as f64);
        let bandwidths: Vec<f64> = centers
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let spacing = centers
                    .iter()
                    .enumerate()
                    .filter(|&(j, _)| j != i)
                    .map(|(_, &o)| (o - c).abs())
                    .fold(f64::INFINITY, f64::min);
                if spacing.is_finite() {
                    base.max(spacing)
                } else {
                    base
                }
            })
            .collect();
        TruncatedMixture {
            lo,
            hi,
            centers,
            bandwidths,
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lo || x > self.hi {
            return 0.0;
        }
        let w = 1.0 / self.centers.len() as f64;
        self.centers
            .iter()
            .zip(&self.bandwidths)
            .map(|(&mu, &sigma)| {
                let z = normal_cdf((self.hi - mu) / sigma) - normal_cdf((self.lo - mu) / sigma);
                w * normal_pdf((x - mu) / sigma) / sigma / z
            })
            .sum()
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let c = rng.gen_range(0..self.centers.len());
        let (mu, sigma) = (self.centers[c], self.bandwidths[c]);
        for _ in 0..1000 {
            // Box-Muller draw, rejected until it lands inside the domain
            let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
            let u2: f64 = rng.gen();
            let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
            let x = mu + sigma * z;
            if x >= self.lo && x <= self.hi {
                return x;
            }
        }
        mu.clamp(self.lo, self.hi)
    }
}

/// Density over one search dimension: truncated Gaussian mixture for numeric
/// dimensions (log space for log_uniform), reweighted discrete distribution
/// with add-one smoothing for categorical ones.
#[derive(Debug, Clone)]
pub struct ParzenDensity {
    dim: Dim,
    kind: DensityKind,
}

#[derive(Debug, Clone)]
enum DensityKind {
    Numeric(TruncatedMixture),
    Discrete(Vec<f64>),
}

impl ParzenDensity {
    pub fn fit(values: &[ParamValue], dim: &Dim) -> Result<Self, TpeError> {
        let kind = match dim {
            Dim::Uniform { lo, hi } => {
                let vs = numeric_values(values, *lo, *hi, false)?;
                DensityKind::Numeric(TruncatedMixture::fit(&vs, *lo, *hi))
            }
            Dim::LogUniform { lo, hi } => {
                let vs = numeric_values(values, *lo, *hi, true)?;
                DensityKind::Numeric(TruncatedMixture::fit(&vs, lo.ln(), hi.ln()))
            }
            Dim::IntUniform { lo, hi } => {
                let vs = numeric_values(values, *lo as f64, *hi as f64, false)?;
                DensityKind::Numeric(TruncatedMixture::fit(&vs, *lo as f64, *hi as f64))
            }
            Dim::Categorical { choices } => {
                let k = choices.len();
                let mut counts = vec![0usize; k];
                for v in values {
                    let s = v
                        .as_str()
                        .ok_or_else(|| TpeError::OutOfBounds(format!("{v:?} is not categorical")))?;
                    let idx = choices
                        .iter()
                        .position(|c| c == s)
                        .ok_or_else(|| TpeError::OutOfBounds(format!("unknown choice '{s}'")))?;
                    counts[idx] += 1;
                }
                let total = values.len() + k;
                DensityKind::Discrete(
                    counts
                        .iter()
                        .map(|&c| (c + 1) as f64 / total as f64)
                        .collect(),
                )
            }
        };
        Ok(ParzenDensity {
            dim: dim.clone(),
            kind,
        })
    }

    /// Density for numeric dimensions (with the log-space Jacobian applied),
    /// probability mass for categorical ones.
    pub fn pdf(&self, value: &ParamValue) -> f64 {
        match (&self.kind, &self.dim) {
            (DensityKind::Numeric(m), Dim::LogUniform { .. }) => {
                let x = value.as_f64().unwrap_or(f64::NAN);
                if x <= 0.0 {
                    0.0
                } else {
                    m.pdf(x.ln()) / x
                }
            }
            (DensityKind::Numeric(m), _) => m.pdf(value.as_f64().unwrap_or(f64::NAN)),
            (DensityKind::Discrete(weights), Dim::Categorical { choices }) => value
                .as_str()
                .and_then(|s| choices.iter().position(|c| c == s))
                .map_or(0.0, |i| weights[i]),
            _ => 0.0,
        }
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> ParamValue {
        match (&self.kind, &self.dim) {
            (DensityKind::Numeric(m), Dim::Uniform { .. }) => ParamValue::Float(m.sample(rng)),
            (DensityKind::Numeric(m), Dim::LogUniform { .. }) => {
                ParamValue::Float(m.sample(rng).exp())
            }
            (DensityKind::Numeric(m), Dim::IntUniform { lo, hi }) => {
                ParamValue::Int((m.sample(rng).round() as i64).clamp(*lo, *hi))
            }
            (DensityKind::Discrete(weights), Dim::Categorical { choices }) => {
                let mut u: f64 = rng.gen::<f64>();
                for (i, w) in weights.iter().enumerate() {
                    if u < *w || i == weights.len() - 1 {
                        return ParamValue::Cat(choices[i].clone());
                    }
                    u -= w;
                }
                unreachable!()
            }
            _ => unreachable!(),
        }
    }
}

fn numeric_values(
    values: &[ParamValue],
    lo: f64,
    hi: f64,
    log_space: bool,
) -> Result<Vec<f64>, TpeError> {
    values
        .iter()
        .map(|v| {
            let x = v
                .as_f64()
                .ok_or_else(|| TpeError::OutOfBounds(format!("{v:?} is not numeric")))?;
            if x < lo || x > hi {
                return Err(TpeError::OutOfBounds(format!("{x} outside [{lo}, {hi}]")));
            }
            Ok(if log_space { x.ln() } else { x })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Suggestion

pub fn sample_uniform(space: &SearchSpace, rng: &mut ChaCha8Rng) -> Vec<ParamValue> {
    space
        .dims
        .iter()
        .map(|d| match &d.dim {
            Dim::Uniform { lo, hi } => ParamValue::Float(rng.gen_range(*lo..*hi)),
            Dim::LogUniform { lo, hi } => {
                ParamValue::Float(rng.gen_range(lo.ln()..hi.ln()).exp())
            }
            Dim::IntUniform { lo, hi } => ParamValue::Int(rng.gen_range(*lo..=*hi)),
            Dim::Categorical { choices } => {
                ParamValue::Cat(choices[rng.gen_range(0..choices.len())].clone())
            }
        })
        .collect()
}

/// One suggestion step with its full candidate set and l/g log scores kept
/// for inspection.
#[derive(Debug, Clone)]
pub struct SuggestionTrace {
    pub candidates: Vec<Vec<ParamValue>>,
    /// sum over dimensions of ln l(x) - ln g(x); +inf where g vanishes.
    pub scores: Vec<f64>,
    pub chosen: usize,
}

/// Draw candidates from l(x) and return the one maximizing l/g (equivalent
/// to maximizing the expected-improvement closed form, which is monotone
/// increasing in l/g). Ties break toward the lower candidate index.
pub fn suggest_trace(
    trials: &[Trial],
    space: &SearchSpace,
    p: &TpeParams,
    rng: &mut ChaCha8Rng,
) -> Result<SuggestionTrace, TpeError> {
    let (good, bad) = split_observations(trials, p.gamma);
    let mut l_densities = Vec::with_capacity(space.dims.len());
    let mut g_densities = Vec::with_capacity(space.dims.len());
    for (d, named) in space.dims.iter().enumerate() {
        let good_vals: Vec<ParamValue> = good.iter().map(|t| t.config[d].clone()).collect();
        let bad_vals: Vec<ParamValue> = bad.iter().map(|t| t.config[d].clone()).collect();
        l_densities.push(ParzenDensity::fit(&good_vals, &named.dim)?);
        g_densities.push(ParzenDensity::fit(&bad_vals, &named.dim)?);
    }
    let candidates: Vec<Vec<ParamValue>> = (0..p.n_candidates)
        .map(|_| l_densities.iter().map(|d| d.sample(rng)).collect())
        .collect();
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| {
            c.iter()
                .enumerate()
                .map(|(d, v)| l_densities[d].pdf(v).ln() - g_densities[d].pdf(v).ln())
                .sum()
        })
        .collect();
    let mut chosen = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[chosen] {
            chosen = i;
        }
    }
    Ok(SuggestionTrace {
        candidates,
        scores,
        chosen,
    })
}

/// Next configuration to evaluate: uniform random during warmup, TPE after.
pub fn suggest(
    trials: &[Trial],
    space: &SearchSpace,
    p: &TpeParams,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ParamValue>, TpeError> {
    if trials.len() < p.n_startup {
        return Ok(sample_uniform(space, rng));
    }
    let trace = suggest_trace(trials, space, p, rng)?;
    Ok(trace.candidates[trace.chosen].clone())
}

// ---------------------------------------------------------------------------
// Drivers

pub type Objective<'a> = dyn FnMut(&[ParamValue]) -> Result<f64, String> + 'a;

fn run_trial(
    objective: &mut Objective,
    index: usize,
    config: Vec<ParamValue>,
) -> Trial {
    let start = Instant::now();
    let (objective_value, status) = match objective(&config) {
        Ok(v) if v.is_finite() => (v, TrialStatus::Ok),
        Ok(_) | Err(_) => (f64::INFINITY, TrialStatus::Failed),
    };
    Trial {
        index,
        config,
        objective: objective_value,
        wall_time_s: start.elapsed().as_secs_f64(),
        status,
    }
}

fn best_of(history: &[Trial]) -> Trial {
    history
        .iter()
        .min_by(|a, b| {
            a.objective
                .partial_cmp(&b.objective)
                .unwrap()
                .then(a.index.cmp(&b.index))
        })
        .expect("non-empty history")
        .clone()
}

/// TPE loop: suggest, evaluate, record, for `max_trials` iterations.
pub fn tune(
    objective: &mut Objective,
    space: &SearchSpace,
    p: &TpeParams,
) -> Result<(Trial, Vec<Trial>), TpeError> {
    space.validate()?;
    p.validate()?;
    let mut rng = rng_from_seed(p.seed);
    let mut history: Vec<Trial> = Vec::with_capacity(p.max_trials);
    for i in 0..p.max_trials {
        let config = suggest(&history, space, p, &mut rng)?;
        history.push(run_trial(objective, i, config));
    }
    Ok((best_of(&history), history))
}

/// Exhaustive scan over the Cartesian product of per-dimension value lists;
/// numeric dimensions take `count` evenly spaced points on (lo, hi],
/// categorical ones take every choice.
pub fn grid_search(
    objective: &mut Objective,
    space: &SearchSpace,
    counts: &[usize],
    cap: usize,
) -> Result<(Trial, Vec<Trial>), TpeError> {
    space.validate()?;
    if counts.len() != space.dims.len() {
        return Err(TpeError::BadParams(format!(
            "expected {} grid counts, got {}",
            space.dims.len(),
            counts.len()
        )));
    }
    let mut axes: Vec<Vec<ParamValue>> = Vec::new();
    for (named, &count) in space.dims.iter().zip(counts) {
        let axis: Vec<ParamValue> = match &named.dim {
            Dim::Uniform { lo, hi } => (1..=count)
                .map(|k| ParamValue::Float(lo + k as f64 * (hi - lo) / count as f64))
                .collect(),
            Dim::LogUniform { lo, hi } => (1..=count)
                .map(|k| {
                    ParamValue::Float(
                        (lo.ln() + k as f64 * (hi.ln() - lo.ln()) / count as f64).exp(),
                    )
                })
                .collect(),
            Dim::IntUniform { lo, hi } => (1..=count)
                .map(|k| {
                    ParamValue::Int(
                        (*lo as f64 + k as f64 * (hi - lo) as f64 / count as f64).round() as i64,
                    )
                })
                .collect(),
            Dim::Categorical { choices } => {
                choices.iter().map(|c| ParamValue::Cat(c.clone())).collect()
            }
        };
        if axis.is_empty() {
            return Err(TpeError::BadParams(format!("{}: zero grid count", named.name)));
        }
        axes.push(axis);
    }
    let size: usize = axes.iter().map(|a| a.len()).product();
    if size > cap {
        return Err(TpeError::GridTooLarge { size, cap });
    }
    let mut history = Vec::with_capacity(size);
    let mut cursor = vec![0usize; axes.len()];
    for index in 0..size {
        let config: Vec<ParamValue> = cursor
            .iter()
            .zip(&axes)
            .map(|(&i, axis)| axis[i].clone())
            .collect();
        history.push(run_trial(objective, index, config));
        for d in (0..axes.len()).rev() {
            cursor[d] += 1;
            if cursor[d] < axes[d].len() {
                break;
            }
            cursor[d] = 0;
        }
    }
    Ok((best_of(&history), history))
}

/// Independent uniform draws per dimension.
pub fn random_search(
    objective: &mut Objective,
    space: &SearchSpace,
    max_trials: usize,
    seed: u64,
) -> Result<(Trial, Vec<Trial>), TpeError> {
    space.validate()?;
    if max_trials < 1 {
        return Err(TpeError::BadParams("max_trials must be >= 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut history = Vec::with_capacity(max_trials);
    for i in 0..max_trials {
        let config = sample_uniform(space, &mut rng);
        history.push(run_trial(objective, i, config));
    }
    Ok((best_of(&history), history))
}

/// One JSON object per line: {index, config, objective, wall_time_s, status}.
pub fn trials_to_jsonl(space: &SearchSpace, trials: &[Trial]) -> String {
    let mut out = String::new();
    for t in trials {
        let config: serde_json::Map<String, serde_json::Value> = space
            .dims
            .iter()
            .zip(&t.config)
            .map(|(d, v)| (d.name.clone(), serde_json::to_value(v).unwrap()))
            .collect();
        let line = serde_json::json!({
            "index": t.index,
            "config": config,
            "objective": if t.objective.is_finite() { serde_json::json!(t.objective) } else { serde_json::json!("inf") },
            "wall_time_s": t.wall_time_s,
            "status": t.status,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn trial(index: usize, objective: f64) -> Trial {
        Trial {
            index,
            config: vec![ParamValue::Float(index as f64 / 100.0)],
            objective,
            wall_time_s: 0.0,
            status: TrialStatus::Ok,
        }
    }

    #[test]
    fn split_counts() {
        let trials: Vec<Trial> = (0..20).map(|i| trial(i, i as f64)).collect();
        let (good, bad) = split_observations(&trials, 0.25);
        assert_eq!((good.len(), bad.len()), (5, 15));
        let trials: Vec<Trial> = (0..2).map(|i| trial(i, i as f64)).collect();
        let (good, bad) = split_observations(&trials, 0.25);
        assert_eq!((good.len(), bad.len()), (1, 1));
    }

    #[test]
    fn split_ties_are_stable_by_index() {
        let trials: Vec<Trial> = (0..8).map(|i| trial(i, 1.0)).collect();
        let (good, bad) = split_observations(&trials, 0.25);
        assert_eq!(good.iter().map(|t| t.index).collect::<Vec<_>>(), vec![0, 1]);
        assert_eq!(bad[0].index, 2);
        // partition is exhaustive and ordered
        assert_eq!(good.len() + bad.len(), 8);
    }

    #[test]
    fn parzen_symmetry_around_single_midpoint_observation() {
        let dim = Dim::Uniform { lo: 0.0, hi: 1.0 };
        let density = ParzenDensity::fit(&[ParamValue::Float(0.5)], &dim).unwrap();
        for t in [0.05, 0.1, 0.2, 0.3, 0.45] {
            let a = density.pdf(&ParamValue::Float(0.5 - t));
            let b = density.pdf(&ParamValue::Float(0.5 + t));
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn categorical_add_one_smoothing() {
        let dim = Dim::Categorical {
            choices: vec!["a".into(), "b".into()],
        };
        let obs = vec![
            ParamValue::Cat("a".into()),
            ParamValue::Cat("a".into()),
            ParamValue::Cat("a".into()),
        ];
        let density = ParzenDensity::fit(&obs, &dim).unwrap();
        assert_abs_diff_eq!(density.pdf(&ParamValue::Cat("a".into())), 4.0 / 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(density.pdf(&ParamValue::Cat("b".into())), 1.0 / 5.0, epsilon = 1e-12);
    }

    fn quadrature(density: &ParzenDensity, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut total = 0.0;
        for i in 0..=n {
            let x = lo + i as f64 * h;
            let w = if i == 0 || i == n { 0.5 } else { 1.0 };
            total += w * density.pdf(&ParamValue::Float(x));
        }
        total * h
    }

    #[test]
    fn parzen_pdf_integrates_to_one() {
        let dim = Dim::Uniform { lo: -2.0, hi: 3.0 };
        let obs: Vec<ParamValue> = [-1.9, 0.3, 0.31, 2.5]
            .iter()
            .map(|&v| ParamValue::Float(v))
            .collect();
        let density = ParzenDensity::fit(&obs, &dim).unwrap();
        let integral = quadrature(&density, -2.0, 3.0, 10_000);
        assert!((0.99..=1.01).contains(&integral), "integral {integral}");
        // log-uniform dimension, integrated in raw space
        let dim = Dim::LogUniform { lo: 0.1, hi: 100.0 };
        let obs: Vec<ParamValue> = [0.5, 3.0, 40.0].iter().map(|&v| ParamValue::Float(v)).collect();
        let density = ParzenDensity::fit(&obs, &dim).unwrap();
        let integral = quadrature(&density, 0.1, 100.0, 100_000);
        assert!((0.99..=1.01).contains(&integral), "log integral {integral}");
    }

    #[test]
    fn parzen_rejects_out_of_bounds() {
        let dim = Dim::Uniform { lo: 0.0, hi: 1.0 };
        assert!(ParzenDensity::fit(&[ParamValue::Float(2.0)], &dim).is_err());
    }

    #[test]
    fn ei_ordering_matches_l_over_g() {
        // argmax of l/g equals argmax of (gamma + (g/l)(1-gamma))^{-1}
        let gamma = 0.25;
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let pairs: Vec<(f64, f64)> = (0..10)
                .map(|_| (rng.gen_range(1e-6..2.0), rng.gen_range(1e-6..2.0)))
                .collect();
            let by_ratio = pairs
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| (a.0 / a.1).partial_cmp(&(b.0 / b.1)).unwrap())
                .map(|(i, _)| i);
            let by_ei = pairs
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| {
                    let ei = |p: &(f64, f64)| 1.0 / (gamma + p.1 / p.0 * (1.0 - gamma));
                    ei(a).partial_cmp(&ei(b)).unwrap()
                })
                .map(|(i, _)| i);
            assert_eq!(by_ratio, by_ei);
        }
    }

    #[test]
    fn suggest_during_warmup_is_uniform_in_bounds() {
        let space = SearchSpace::new(vec![
            ("x", Dim::Uniform { lo: 0.0, hi: 1.0 }),
            ("n", Dim::IntUniform { lo: 1, hi: 10 }),
        ]);
        let p = TpeParams::default();
        let mut rng = rng_from_seed(0);
        let config = suggest(&[], &space, &p, &mut rng).unwrap();
        let x = config[0].as_f64().unwrap();
        let n = config[1].as_i64().unwrap();
        assert!((0.0..1.0).contains(&x));
        assert!((1..=10).contains(&n));
    }

    #[test]
    fn suggest_chooses_max_score_candidate() {
        let space = SearchSpace::new(vec![("x", Dim::Uniform { lo: 0.0, hi: 1.0 })]);
        let p = TpeParams::default();
        let trials: Vec<Trial> = (0..20)
            .map(|i| {
                let x = i as f64 / 20.0;
                Trial {
                    index: i,
                    config: vec![ParamValue::Float(x)],
                    objective: (x - 0.7).powi(2),
                    wall_time_s: 0.0,
                    status: TrialStatus::Ok,
                }
            })
            .collect();
        let mut rng = rng_from_seed(3);
        let trace = suggest_trace(&trials, &space, &p, &mut rng).unwrap();
        let max = trace
            .scores
            .iter()
            .fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        assert_eq!(trace.scores[trace.chosen], max);
    }

    #[test]
    fn tune_finds_quadratic_minimum() {
        let space = SearchSpace::new(vec![("x", Dim::Uniform { lo: 0.0, hi: 1.0 })]);
        let mut gaps: Vec<f64> = (0..5)
            .map(|seed| {
                let p = TpeParams {
                    max_trials: 30,
                    seed,
                    ..Default::default()
                };
                let mut objective =
                    |c: &[ParamValue]| Ok((c[0].as_f64().unwrap() - 0.7).powi(2));
                let (best, history) = tune(&mut objective, &space, &p).unwrap();
                assert_eq!(history.len(), 30);
                (best.config[0].as_f64().unwrap() - 0.7).abs()
            })
            .collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(gaps[2] < 0.1, "median gap {}", gaps[2]);
    }

    #[test]
    fn tune_bookkeeping() {
        let space = SearchSpace::new(vec![("x", Dim::Uniform { lo: 0.0, hi: 1.0 })]);
        let p = TpeParams {
            max_trials: 15,
            ..Default::default()
        };
        let mut constant = |_: &[ParamValue]| Ok(1.0);
        let (best, history) = tune(&mut constant, &space, &p).unwrap();
        assert_eq!(best.index, 0); // constant objective: first trial wins
        let min = history
            .iter()
            .map(|t| t.objective)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(best.objective, min);
    }

    #[test]
    fn failing_objective_is_recorded_and_skipped() {
        let space = SearchSpace::new(vec![("x", Dim::Uniform { lo: 0.0, hi: 1.0 })]);
        let p = TpeParams {
            max_trials: 12,
            ..Default::default()
        };
        let mut count = 0;
        let mut objective = |c: &[ParamValue]| {
            count += 1;
            if count == 3 {
                Err("boom".into())
            } else {
                Ok(c[0].as_f64().unwrap())
            }
        };
        let (best, history) = tune(&mut objective, &space, &p).unwrap();
        assert_eq!(history.len(), 12);
        assert_eq!(
            history.iter().filter(|t| t.status == TrialStatus::Failed).count(),
            1
        );
        assert!(best.objective.is_finite());
    }

    #[test]
    fn grid_product_and_caps() {
        let space = SearchSpace::new(vec![
            ("x", Dim::Uniform { lo: 0.0, hi: 1.0 }),
            ("c", Dim::Categorical { choices: vec!["a".into(), "b".into()] }),
        ]);
        let mut calls = 0;
        let mut objective = |_: &[ParamValue]| {
            calls += 1;
            Ok(0.0)
        };
        let (_, history) = grid_search(&mut objective, &space, &[2, 2], 100).unwrap();
        assert_eq!(history.len(), 4);
        assert_eq!(calls, 4);
        assert!(matches!(
            grid_search(&mut |_| Ok(0.0), &space, &[200, 2], 100),
            Err(TpeError::GridTooLarge { size: 400, cap: 100 })
        ));
    }

    #[test]
    fn random_search_contract() {
        let space = SearchSpace::new(vec![
            ("x", Dim::LogUniform { lo: 0.01, hi: 10.0 }),
            ("n", Dim::IntUniform { lo: 1, hi: 5 }),
        ]);
        let mut objective = |c: &[ParamValue]| Ok(c[0].as_f64().unwrap());
        let (_, h1) = random_search(&mut objective, &space, 30, 9).unwrap();
        let (_, h2) = random_search(&mut objective, &space, 30, 9).unwrap();
        assert_eq!(h1.len(), 30);
        // wall times differ between runs; the sampled content must not
        for (a, b) in h1.iter().zip(&h2) {
            assert_eq!(a.config, b.config);
            assert_eq!(a.objective, b.objective);
        }
        for t in &h1 {
            let x = t.config[0].as_f64().unwrap();
            let n = t.config[1].as_i64().unwrap();
            assert!((0.01..=10.0).contains(&x));
            assert!((1..=5).contains(&n));
        }
    }

    #[test]
    fn tpe_beats_random_on_quadratic_bowl() {
        let space = SearchSpace::new(vec![
            ("x", Dim::Uniform { lo: -1.0, hi: 1.0 }),
            ("y", Dim::Uniform { lo: -1.0, hi: 1.0 }),
        ]);
        let mut wins = 0;
        for seed in 0..20 {
            let bowl = |c: &[ParamValue]| -> Result<f64, String> {
                let x = c[0].as_f64().unwrap();
                let y = c[1].as_f64().unwrap();
                Ok((x - 0.3).powi(2) + (y + 0.4).powi(2))
            };
            let p = TpeParams {
                max_trials: 30,
                seed,
                ..Default::default()
            };
            let (tpe_best, _) = tune(&mut { bowl }, &space, &p).unwrap();
            let (rand_best, _) = random_search(&mut { bowl }, &space, 30, seed).unwrap();
            if tpe_best.objective <= rand_best.objective {
                wins += 1;
            }
        }
        assert!(wins >= 12, "TPE won only {wins}/20");
    }

    #[test]
    fn jsonl_export_shape() {
        let space = SearchSpace::new(vec![("x", Dim::Uniform { lo: 0.0, hi: 1.0 })]);
        let trials = vec![trial(0, 0.25), trial(1, f64::INFINITY)];
        let text = trials_to_jsonl(&space, &trials);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        let v: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
        assert_eq!(v["index"], 0);
        assert!(v["config"]["x"].is_number());
        let v1: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(v1["objective"], "inf");
    }
}
