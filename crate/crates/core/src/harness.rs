//! Monte Carlo driver: trial batteries, phase-diagram sweeps and tail-bound
//! verification.
//!
//! Trial `t` under master seed `m` draws everything from streams derived
//! from `hash(m, t)`, and results are gathered in trial order, so output is
//! identical for any thread count. Set `HCM_THREADS` to size the pool.
//!
//! Accuracy is always measured against the planted set:
//!
//! ```text
//! d_H(xi, xi_hat) = |C_hat △ C*|,   hamming fraction = d_H / K  in [0, 2]
//! ```

use std::io::{BufRead, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cleanup::{clean_up, run_weak, symdiff_sorted, CleanupConfig, DEFAULT_DELTA};
use crate::dists::{DistPair, Measure, PairKind};
use crate::error::{Error, Result};
use crate::estimators::{Estimate, LocalOptions, Method, DEFAULT_BUDGET};
use crate::ldp::{self, LowerBound, TailSide};
use crate::model::{llr_matrix, sample_instance, DiagMode};
use crate::seed::{child_rng, derive};
use crate::stats::{self, Interval, Z95, Z99};
use crate::thresholds::{self, ThresholdReport, Verdict};

/// Environment variable holding the worker count.
pub const THREADS_ENV: &str = "HCM_THREADS";
pub const SWEEP_FORMAT: &str = "hcm-sweep/1";

/// Run `f` on a dedicated pool: `threads` if given, else `HCM_THREADS`,
/// else the rayon default.
pub fn install<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    let threads = match threads {
        Some(t) => Some(t),
        None => match std::env::var(THREADS_ENV) {
            Ok(v) if !v.trim().is_empty() => Some(
                v.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?,
            ),
            _ => None,
        },
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        if t == 0 {
            return Err(Error::Config("thread count must be positive".into()));
        }
        builder = builder.num_threads(t);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Estimation pipeline applied to every trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSpec {
    pub method: Method,
    /// Withheld fraction for `cleanup`.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Weak step for `cleanup`.
    #[serde(default = "default_weak")]
    pub weak: Method,
    #[serde(default = "default_budget")]
    pub budget: u64,
    #[serde(default)]
    pub local: LocalOptions,
}

fn default_delta() -> f64 {
    DEFAULT_DELTA
}
fn default_weak() -> Method {
    Method::Degree
}
fn default_budget() -> u64 {
    DEFAULT_BUDGET
}

impl EstimatorSpec {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            delta: DEFAULT_DELTA,
            weak: Method::Degree,
            budget: DEFAULT_BUDGET,
            local: LocalOptions::default(),
        }
    }

    pub fn cleanup(delta: f64, weak: Method) -> Self {
        Self {
            delta,
            weak,
            ..Self::new(Method::Cleanup)
        }
    }

    /// Apply to an LLR matrix; `seed` feeds randomized steps.
    pub fn estimate(&self, lmat: &crate::model::LlrMatrix, k: usize, seed: u64) -> Result<Estimate> {
        match self.method {
            Method::Cleanup => {
                let cfg = CleanupConfig {
                    delta: self.delta,
                    weak_method: self.weak,
                    partition_seed: seed,
                    budget: self.budget,
                    local: self.local,
                };
                Ok(clean_up(lmat, k, &cfg)?.estimate)
            }
            m => run_weak(lmat, k, m, self.budget, self.local, seed),
        }
    }
}

/// A fully specified parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub pair: DistPair,
    #[serde(default)]
    pub diag_mode: DiagMode,
    pub estimator: EstimatorSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialStats {
    pub trials: u64,
    pub exact_successes: u64,
    pub mean_hamming_frac: f64,
    pub mean_symdiff: f64,
    /// 95% Wilson interval for the exact-recovery rate.
    pub wilson_ci: Interval,
    /// 95% normal interval for the mean Hamming fraction.
    pub hamming_ci: Interval,
}

impl TrialStats {
    pub fn exact_rate(&self) -> f64 {
        self.exact_successes as f64 / self.trials as f64
    }

    /// Aggregate per-trial symmetric differences (in trial order).
    pub fn from_symdiffs(symdiffs: &[usize], k: usize) -> Self {
        let trials = symdiffs.len() as u64;
        let exact = symdiffs.iter().filter(|&&d| d == 0).count() as u64;
        let fracs: Vec<f64> = symdiffs.iter().map(|&d| d as f64 / k as f64).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        let sd: Vec<f64> = symdiffs.iter().map(|&d| d as f64).collect();
        Self {
            trials,
            exact_successes: exact,
            mean_hamming_frac: mean(&fracs),
            mean_symdiff: mean(&sd),
            wilson_ci: stats::wilson(exact, trials, Z95),
            hamming_ci: stats::normal_mean_interval(&fracs, Z95),
        }
    }
}

/// Seed of trial `index` under `master`.
pub fn trial_seed(master: u64, index: u64) -> u64 {
    derive(master, index)
}

/// Independent trials at one point.
pub fn run_trials(point: &Point, trials: u64, master_seed: u64) -> Result<TrialStats> {
    let mut out = run_paired(point, &[point.estimator], trials, master_seed)?;
    Ok(out.remove(0))
}

/// Several estimators on the same sampled instances (common random numbers).
pub fn run_paired(point: &Point, estimators: &[EstimatorSpec], trials: u64, master_seed: u64) -> Result<Vec<TrialStats>> {
    if trials == 0 {
        return Err(Error::Config("trials must be at least 1".into()));
    }
    let per_trial: Vec<Result<Vec<usize>>> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let seed = trial_seed(master_seed, t);
            let wrap = |e: Error| Error::Trial {
                trial: t as usize,
                source: Box::new(e),
            };
            let inst = sample_instance(point.n, point.k, &point.pair, &mut child_rng(seed, 0), point.diag_mode)
                .map_err(wrap)?;
            let lmat = llr_matrix(&inst).map_err(wrap)?;
            estimators
                .iter()
                .enumerate()
                .map(|(e, spec)| {
                    let est = spec.estimate(&lmat, point.k, derive(seed, 1 + e as u64)).map_err(wrap)?;
                    Ok(symdiff_sorted(&est.community, &inst.community))
                })
                .collect()
        })
        .collect();
    let mut columns = vec![Vec::with_capacity(trials as usize); estimators.len()];
    for row in per_trial {
        for (e, d) in row?.into_iter().enumerate() {
            columns[e].push(d);
        }
    }
    Ok(columns.iter().map(|c| TrialStats::from_symdiffs(c, point.k)).collect())
}

/// Swept parameter names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    /// Gaussian mean.
    Mu,
    /// Gaussian `mu^2` as a multiple of the upper exact-recovery root `mu_+^2(n, K)`.
    MuSqScale,
    /// Bernoulli in-community probability.
    P,
    /// Bernoulli background probability.
    Q,
    /// Target weak ratio; sets `mu` (Gaussian) or `p` with `q` fixed (Bernoulli).
    WeakRatio,
    /// Bernoulli `p = a log^s(n) / n`.
    A,
    /// Bernoulli `q = b log^s(n) / n`.
    B,
}

/// Values for one swept parameter: an explicit list or an inclusive linear range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    Values { values: Vec<f64> },
    Range { from: f64, to: f64, steps: usize },
}

impl Grid {
    pub fn points(&self) -> Vec<f64> {
        match self {
            Grid::Values { values } => values.clone(),
            Grid::Range { from, to, steps } => match steps {
                0 => vec![],
                1 => vec![*from],
                s => (0..*s)
                    .map(|i| from + (to - from) * i as f64 / (*s - 1) as f64)
                    .collect(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: Param,
    #[serde(flatten)]
    pub grid: Grid,
}

/// How `K` follows `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KRule {
    Fixed(usize),
    /// `K = round(rho n)`.
    Linear { rho: f64 },
    /// `K = round(rho n / log^{s-1} n)`; also sets the exponent used by `a`, `b`.
    Regime { rho: f64, s: f64 },
}

impl KRule {
    pub fn k_for(&self, n: usize) -> Result<usize> {
        let k = match *self {
            KRule::Fixed(k) => k,
            KRule::Linear { rho } => (rho * n as f64).round() as usize,
            KRule::Regime { rho, s } => (rho * n as f64 / (n as f64).ln().powf(s - 1.0)).round() as usize,
        };
        if k < 2 || k >= n {
            return Err(Error::Domain(format!("K rule gives K={k} for n={n}; need 2 <= K < n")));
        }
        Ok(k)
    }

    fn s(&self) -> f64 {
        match *self {
            KRule::Regime { s, .. } => s,
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Starting pair; swept parameters overwrite its fields.
    pub pair: DistPair,
    /// One or two axes.
    pub sweep: Vec<Axis>,
    pub n: Vec<usize>,
    pub k_rule: KRule,
    pub trials: u64,
    pub estimator: EstimatorSpec,
    #[serde(default)]
    pub diag_mode: DiagMode,
    pub master_seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweep.is_empty() || self.sweep.len() > 2 {
            return Err(Error::Config("sweep needs one or two axes".into()));
        }
        if self.sweep.iter().any(|a| a.grid.points().is_empty()) || self.n.is_empty() {
            return Err(Error::Config("grids must be nonempty".into()));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        Ok(())
    }

    /// Grid points in row order: `n` outermost, then the first axis, then the second.
    pub fn grid(&self) -> Vec<(usize, f64, Option<f64>)> {
        let xs = self.sweep[0].grid.points();
        let ys: Vec<Option<f64>> = match self.sweep.get(1) {
            Some(a) => a.grid.points().into_iter().map(Some).collect(),
            None => vec![None],
        };
        let mut out = Vec::new();
        for &n in &self.n {
            for &x in &xs {
                for &y in &ys {
                    out.push((n, x, y));
                }
            }
        }
        out
    }

    /// The point for grid coordinates `(n, x, y)`.
    pub fn point(&self, n: usize, x: f64, y: Option<f64>) -> Result<Point> {
        let k = self.k_rule.k_for(n)?;
        let mut values: Vec<(Param, f64)> = vec![(self.sweep[0].param, x)];
        if let (Some(axis), Some(y)) = (self.sweep.get(1), y) {
            values.push((axis.param, y));
        }
        // direct parameters first, derived ones after
        values.sort_by_key(|(p, _)| matches!(p, Param::MuSqScale | Param::WeakRatio));
        let mut pair = self.pair.clone();
        let scale = (n as f64).ln().powf(self.k_rule.s()) / n as f64;
        for (param, v) in values {
            pair = match (param, pair.kind().clone()) {
                (Param::Mu, PairKind::Gaussian { .. }) => DistPair::gaussian(v)?,
                (Param::MuSqScale, PairKind::Gaussian { .. }) => {
                    let (plus, _) = thresholds::gauss_mu_critical(n, k)?;
                    DistPair::gaussian((v * plus).sqrt())?
                }
                (Param::WeakRatio, PairKind::Gaussian { .. }) => {
                    DistPair::gaussian(thresholds::gauss_mu_for_weak_ratio(n, k, v)?)?
                }
                (Param::P, PairKind::Bernoulli { q, .. }) => DistPair::bernoulli(v, q)?,
                (Param::Q, PairKind::Bernoulli { p, .. }) => DistPair::bernoulli(p, v)?,
                (Param::A, PairKind::Bernoulli { q, .. }) => DistPair::bernoulli(v * scale, q)?,
                (Param::B, PairKind::Bernoulli { p, .. }) => DistPair::bernoulli(p, v * scale)?,
                (Param::WeakRatio, PairKind::Bernoulli { q, .. }) => {
                    DistPair::bernoulli(thresholds::bern_p_for_weak_ratio(n, k, q, v)?, q)?
                }
                (param, _) => {
                    return Err(Error::Config(format!(
                        "parameter {param:?} does not apply to pair {}",
                        self.pair.descriptor()
                    )))
                }
            };
        }
        Ok(Point {
            n,
            k,
            pair,
            diag_mode: self.diag_mode,
            estimator: self.estimator,
        })
    }
}

/// One row of a sweep table. Column order is stable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub n: usize,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub x1: f64,
    pub x2: Option<f64>,
    pub pair: Option<String>,
    pub weak_ratio: Option<f64>,
    pub exact_ratio: Option<f64>,
    pub weak_verdict: Option<Verdict>,
    pub exact_verdict: Option<Verdict>,
    pub chernoff_index: Option<f64>,
    pub trials: Option<u64>,
    pub exact_successes: Option<u64>,
    pub exact_rate: Option<f64>,
    pub wilson_lo: Option<f64>,
    pub wilson_hi: Option<f64>,
    pub mean_hamming_frac: Option<f64>,
    pub mean_symdiff: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn blank(point: usize, n: usize, x1: f64, x2: Option<f64>) -> Self {
        Self {
            point,
            n,
            k: None,
            x1,
            x2,
            pair: None,
            weak_ratio: None,
            exact_ratio: None,
            weak_verdict: None,
            exact_verdict: None,
            chernoff_index: None,
            trials: None,
            exact_successes: None,
            exact_rate: None,
            wilson_lo: None,
            wilson_hi: None,
            mean_hamming_frac: None,
            mean_symdiff: None,
            error: None,
        }
    }
}

/// Run every grid point. Failures land in the `error` column and the sweep
/// continues. Wall-clock per point goes to `progress`, never into the table.
pub fn phase_diagram(sweep: &SweepConfig, mut progress: impl FnMut(&SweepRow, f64)) -> Result<Vec<SweepRow>> {
    sweep.validate()?;
    let mut rows = Vec::new();
    for (idx, (n, x, y)) in sweep.grid().into_iter().enumerate() {
        let started = Instant::now();
        let mut row = SweepRow::blank(idx, n, x, y);
        let outcome = (|| -> Result<()> {
            let point = sweep.point(n, x, y)?;
            row.k = Some(point.k);
            row.pair = Some(point.pair.descriptor());
            let report = ThresholdReport::evaluate(n, point.k, &point.pair, point.diag_mode)?;
            row.weak_ratio = Some(report.weak_ratio);
            row.exact_ratio = Some(report.exact_ratio);
            row.weak_verdict = Some(report.verdicts.weak);
            row.exact_verdict = Some(report.verdicts.exact);
            row.chernoff_index = Some(report.chernoff_index);
            let st = run_trials(&point, sweep.trials, sweep.master_seed)?;
            row.trials = Some(st.trials);
            row.exact_successes = Some(st.exact_successes);
            row.exact_rate = Some(st.exact_rate());
            row.wilson_lo = Some(st.wilson_ci.lo);
            row.wilson_hi = Some(st.wilson_ci.hi);
            row.mean_hamming_frac = Some(st.mean_hamming_frac);
            row.mean_symdiff = Some(st.mean_symdiff);
            Ok(())
        })();
        if let Err(e) = outcome {
            row.error = Some(e.to_string());
        }
        progress(&row, started.elapsed().as_secs_f64());
        rows.push(row);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepHeader {
    pub format: String,
    pub build: String,
    pub master_seed: u64,
    pub config: SweepConfig,
}

impl SweepHeader {
    pub fn new(config: &SweepConfig) -> Self {
        Self {
            format: SWEEP_FORMAT.into(),
            build: crate::BUILD_TAG.into(),
            master_seed: config.master_seed,
            config: config.clone(),
        }
    }
}

/// `# {header json}` followed by CSV.
pub fn write_sweep_csv<W: Write>(header: &SweepHeader, rows: &[SweepRow], mut w: W) -> Result<()> {
    writeln!(w, "# {}", serde_json::to_string(header)?)?;
    let mut csv = csv::Writer::from_writer(w);
    for row in rows {
        csv.serialize(row)?;
    }
    if rows.is_empty() {
        return Err(Error::Format("sweep produced no rows".into()));
    }
    csv.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: BufRead>(mut r: R) -> Result<(SweepHeader, Vec<SweepRow>)> {
    let mut first = String::new();
    r.read_line(&mut first)?;
    let json = first
        .strip_prefix("# ")
        .ok_or_else(|| Error::Format("missing '# ' header line".into()))?;
    let header: SweepHeader = serde_json::from_str(json.trim_end())?;
    if header.format != SWEEP_FORMAT {
        return Err(Error::Format(format!("unsupported sweep format {:?}", header.format)));
    }
    let mut csv = csv::Reader::from_reader(r);
    let rows = csv.deserialize().collect::<std::result::Result<Vec<SweepRow>, _>>()?;
    Ok((header, rows))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinomCheck {
    pub n: u64,
    pub p: f64,
    pub eta: f64,
    /// `P[X >= (1 + eta) n p]`
    pub upper_exact: f64,
    /// `exp(-eta^2 n p / 3)`
    pub upper_bound: f64,
    /// `P[X <= (1 - eta) n p]`
    pub lower_exact: f64,
    /// `exp(-eta^2 n p / 2)`
    pub lower_bound: f64,
    pub holds: bool,
}

pub fn binom_check(n: u64, p: f64, eta: f64) -> BinomCheck {
    let np = n as f64 * p;
    let upper_exact = stats::binom_upper_tail(n, p, (1.0 + eta) * np);
    let lower_exact = stats::binom_lower_tail(n, p, (1.0 - eta) * np);
    let upper_bound = stats::binom_chernoff_upper(n, p, eta);
    let lower_bound = stats::binom_chernoff_lower(n, p, eta);
    BinomCheck {
        n,
        p,
        eta,
        upper_exact,
        upper_bound,
        lower_exact,
        lower_bound,
        holds: upper_exact <= upper_bound && lower_exact <= lower_bound,
    }
}

/// Default `(n, p, eta)` grid for the binomial checks.
pub fn binom_grid() -> Vec<(u64, f64, f64)> {
    let mut out = Vec::new();
    for n in [10, 50, 100, 500, 2000] {
        for p in [0.05, 0.1, 0.3, 0.5, 0.9] {
            for eta in [0.1, 0.25, 0.5, 0.75, 1.0] {
                out.push((n, p, eta));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub pair: String,
    pub n: u64,
    pub gamma: f64,
    pub delta: f64,
    pub replicates: u64,
    pub seed: u64,
    /// Chernoff upper bound `exp(-n E_Q(gamma))`.
    pub upper: f64,
    pub lower: LowerBound,
    pub hits: u64,
    pub mc_estimate: f64,
    /// 99% Wilson interval for `Q[sum L >= n gamma]`.
    pub mc_ci: Interval,
    /// Exponentially tilted importance-sampling estimate and its 99% interval.
    pub is_lambda: f64,
    pub is_estimate: f64,
    pub is_ci: Interval,
    /// `lower <= ci.hi` and `ci.lo <= upper`.
    pub sandwich: bool,
    /// The interval lies wholly inside `[lower, upper]`.
    pub strict_containment: bool,
    /// The importance-sampling estimate lies inside `[lower, upper]`.
    pub is_within: bool,
    pub binomial: Vec<BinomCheck>,
    pub pass: bool,
}

const MC_CHUNK: u64 = 1024;

/// Monte Carlo check that `Q[sum_{k<=n} L_k >= n gamma]` sits between the
/// non-asymptotic lower bound and the Chernoff upper bound, plus the
/// binomial Chernoff bounds against exact tails.
pub fn verify_bounds(pair: &DistPair, n: u64, gamma: f64, delta: f64, replicates: u64, seed: u64) -> Result<BoundsReport> {
    if replicates == 0 {
        return Err(Error::Config("replicates must be at least 1".into()));
    }
    let upper = ldp::chernoff_tail_upper(pair, n, gamma, TailSide::QUpper)?;
    let lower = ldp::ld_lower_bound(pair, n, gamma, delta)?;
    let target = n as f64 * gamma;
    let rate = ldp::rate_e_q(pair, gamma)?;
    let lambda = rate.lambda_star;
    let log_mgf = n as f64 * pair.psi_q(lambda)?;

    let chunks = replicates.div_ceil(MC_CHUNK);
    let partials: Vec<Result<(u64, Vec<f64>)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(replicates - c * MC_CHUNK);
            let mut plain = child_rng(seed, 2 * c);
            let mut tilted = child_rng(seed, 2 * c + 1);
            let mut hits = 0;
            let mut weights = Vec::with_capacity(len as usize);
            for _ in 0..len {
                let s: f64 = (0..n).map(|_| pair.sample_llr(Measure::UnderQ, &mut plain)).sum();
                hits += u64::from(s >= target);
                let mut st = 0.0;
                for _ in 0..n {
                    st += pair.llr(ldp::sample_tilted(pair, lambda, &mut tilted)?)?;
                }
                weights.push(if st >= target { (log_mgf - lambda * st).exp() } else { 0.0 });
            }
            Ok((hits, weights))
        })
        .collect();
    let mut hits = 0;
    let mut weights = Vec::with_capacity(replicates as usize);
    for part in partials {
        let (h, w) = part?;
        hits += h;
        weights.extend(w);
    }
    let mc_ci = stats::wilson(hits, replicates, Z99);
    let is_estimate = weights.iter().sum::<f64>() / replicates as f64;
    let is_ci = stats::normal_mean_interval(&weights, Z99);
    let sandwich = lower.value <= mc_ci.hi && mc_ci.lo <= upper;
    let strict_containment = lower.value <= mc_ci.lo && mc_ci.hi <= upper;
    let is_within = lower.value <= is_estimate && is_estimate <= upper;
    let binomial: Vec<BinomCheck> = binom_grid().into_iter().map(|(n, p, e)| binom_check(n, p, e)).collect();
    let pass = sandwich && is_within && binomial.iter().all(|b| b.holds);
    Ok(BoundsReport {
        pair: pair.descriptor(),
        n,
        gamma,
        delta,
        replicates,
        seed,
        upper,
        lower,
        hits,
        mc_estimate: hits as f64 / replicates as f64,
        mc_ci,
        is_lambda: lambda,
        is_estimate,
        is_ci,
        sandwich,
        strict_containment,
        is_within,
        binomial,
        pass,
    })
}
