//! Large-deviation machinery for sums of i.i.d. log-likelihood ratios.
//!
//! The rate functions are Legendre transforms of the log-MGFs,
//!
//! ```text
//! E_Q(theta) = sup_{lambda in [0,1]} lambda * theta - psi_Q(lambda)
//! E_P(theta) = E_Q(theta) - theta
//! ```
//!
//! valid for `theta` in `[-D(Q||P), D(P||Q)]`, where the supremum over the
//! whole real line is attained inside `[0, 1]`. They give the Chernoff
//! bounds
//!
//! ```text
//! Q[sum L_k >= n theta] <= exp(-n E_Q(theta))
//! P[sum L_k <= n theta] <= exp(-n E_P(theta))
//! ```
//!
//! and, through a tilting argument, a matching non-asymptotic lower bound.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dists::{sample_index, DistPair, PairKind};
use crate::error::{domain, Result};

/// Relative tolerance of the golden-section search over `lambda`.
pub const LEGENDRE_TOL: f64 = 1e-10;
/// Grid size for suprema of `psi_Q''` and for the exponential-family ratio.
pub const GRID_POINTS: usize = 400;

const INTERVAL_SLACK: f64 = 1e-12;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEval {
    /// Threshold actually evaluated (after clamping).
    pub theta: f64,
    pub e_q: f64,
    pub e_p: f64,
    pub lambda_star: f64,
    /// The requested threshold fell outside `[-D(Q||P), D(P||Q)]` and was clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct RateOptions {
    /// Clamp out-of-range thresholds (and flag them) instead of failing.
    pub clamp: bool,
    /// Use the Gaussian closed form when available.
    pub closed_form: bool,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            clamp: true,
            closed_form: true,
        }
    }
}

/// `[-D(Q||P), D(P||Q)]`.
pub fn valid_interval(pair: &DistPair) -> (f64, f64) {
    (-pair.kl_qp(), pair.kl_pq())
}

/// Maximize a concave function on `[lo, hi]`; the endpoints are always candidates.
pub(crate) fn golden_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > tol * (1.0 + c.abs().max(d.abs())) {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    [(lo, f(lo)), (hi, f(hi)), (mid, f(mid))]
        .into_iter()
        .fold((f64::NAN, f64::NEG_INFINITY), |best, cand| {
            if cand.1 > best.1 {
                cand
            } else {
                best
            }
        })
}

/// `E_Q(theta)` with default options (closed form where available, clamping on).
pub fn rate_e_q(pair: &DistPair, theta: f64) -> Result<RateEval> {
    rate_e_q_with(pair, theta, RateOptions::default())
}

pub fn rate_e_q_with(pair: &DistPair, theta: f64, opts: RateOptions) -> Result<RateEval> {
    if !theta.is_finite() {
        return Err(domain(format!("threshold must be finite, got {theta}")));
    }
    let (lo, hi) = valid_interval(pair);
    let slack = INTERVAL_SLACK * (1.0 + lo.abs().max(hi.abs()));
    let mut clamped = false;
    let mut t = theta;
    if theta < lo - slack || theta > hi + slack {
        if !opts.clamp {
            return Err(domain(format!(
                "threshold {theta} outside [{lo}, {hi}] and clamping is disabled"
            )));
        }
        clamped = true;
    }
    t = t.clamp(lo, hi);

    let (lambda_star, e_q) = match (pair.kind(), opts.closed_form) {
        (PairKind::Gaussian { mu }, true) => {
            let mu2 = mu * mu;
            ((0.5 + t / mu2).clamp(0.0, 1.0), (mu + 2.0 * t / mu).powi(2) / 8.0)
        }
        _ => golden_max(|l| l * t - pair.psi_q_raw(l), 0.0, 1.0, LEGENDRE_TOL),
    };
    let e_q = e_q.max(0.0);
    Ok(RateEval {
        theta: t,
        e_q,
        e_p: (e_q - t).max(0.0),
        lambda_star,
        clamped,
    })
}

/// `E_P(theta) = E_Q(theta) - theta`.
pub fn rate_e_p(pair: &DistPair, theta: f64) -> Result<f64> {
    rate_e_q(pair, theta).map(|r| r.e_p)
}

/// Chernoff index `C(P,Q) = sup_{0<=lambda<=1} -psi_Q(lambda) = E_Q(0)`.
pub fn chernoff_index(pair: &DistPair) -> f64 {
    rate_e_q(pair, 0.0).expect("zero lies in the valid interval").e_q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TailSide {
    /// `Q[sum L >= n theta]`
    QUpper,
    /// `P[sum L <= n theta]`
    PLower,
}

/// Chernoff upper bound on the tail of a sum of `n` LLR samples.
pub fn chernoff_tail_upper(pair: &DistPair, n: u64, theta: f64, side: TailSide) -> Result<f64> {
    if n == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    let r = rate_e_q_with(
        pair,
        theta,
        RateOptions {
            clamp: false,
            ..Default::default()
        },
    )?;
    let exponent = match side {
        TailSide::QUpper => r.e_q,
        TailSide::PLower => r.e_p,
    };
    Ok((-(n as f64) * exponent).exp())
}

/// `sup_{lambda in [lo, hi]} psi_Q''(lambda)` over a uniform grid.
pub fn sup_psi_second(pair: &DistPair, lo: f64, hi: f64, points: usize) -> Result<f64> {
    if let PairKind::Gaussian { mu } = pair.kind() {
        return Ok(mu * mu);
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..points {
        let l = if points == 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (points - 1) as f64
        };
        best = best.max(pair.psi_q_second(l)?);
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    /// The bound; `0.0` when vacuous.
    pub value: f64,
    pub vacuous: bool,
    pub sup_psi2: f64,
    pub denominator: f64,
}

/// Non-asymptotic lower bound on `Q[sum_{k<=n} L_k > n gamma]`:
///
/// ```text
/// exp(-(n E_Q(gamma + delta) + log 2) / (1 - sup_{0<=lambda<=1} psi_Q''(lambda) / (n delta^2)))
/// ```
///
/// Requires `-D(Q||P) <= gamma < gamma + delta <= D(P||Q)`. A non-positive
/// denominator yields a vacuous bound of zero.
pub fn ld_lower_bound(pair: &DistPair, n: u64, gamma: f64, delta: f64) -> Result<LowerBound> {
    if n == 0 {
        return Err(domain("sample count must be at least 1"));
    }
    let (lo, hi) = valid_interval(pair);
    let slack = INTERVAL_SLACK * (1.0 + lo.abs().max(hi.abs()));
    if !(delta > 0.0) || gamma < lo - slack || gamma + delta > hi + slack {
        return Err(domain(format!(
            "need {lo} <= gamma < gamma + delta <= {hi}, got gamma={gamma}, delta={delta}"
        )));
    }
    let sup_psi2 = sup_psi_second(pair, 0.0, 1.0, GRID_POINTS + 1)?;
    let denominator = 1.0 - sup_psi2 / (n as f64 * delta * delta);
    if denominator <= 0.0 {
        return Ok(LowerBound {
            value: 0.0,
            vacuous: true,
            sup_psi2,
            denominator,
        });
    }
    let e = rate_e_q(pair, gamma + delta)?.e_q;
    Ok(LowerBound {
        value: (-(n as f64 * e + std::f64::consts::LN_2) / denominator).exp(),
        vacuous: false,
        sup_psi2,
        denominator,
    })
}

/// Certificate for the regularity condition
/// `psi_Q''(lambda) <= C min{D(P||Q), D(Q||P)}` on `lambda in [-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub sup_psi2: f64,
    pub min_div: f64,
    /// Smallest constant that works on the grid: `sup_psi2 / min_div`.
    pub c_required: f64,
    /// `max |L|`, for bounded-LLR pairs.
    pub llr_bound: Option<f64>,
    /// Bounded-LLR certificate `2 exp(5 B)`.
    pub bounded_llr_certificate: Option<f64>,
    pub grid_points: usize,
}

impl RegularityReport {
    pub fn holds_with(&self, c: f64) -> bool {
        self.sup_psi2 <= c * self.min_div
    }
}

pub fn check_regularity(pair: &DistPair) -> Result<RegularityReport> {
    let sup_psi2 = sup_psi_second(pair, -1.0, 1.0, GRID_POINTS)?;
    let min_div = pair.kl_pq().min(pair.kl_qp());
    let llr_bound = pair.llr_bound();
    Ok(RegularityReport {
        sup_psi2,
        min_div,
        c_required: sup_psi2 / min_div,
        llr_bound,
        bounded_llr_certificate: llr_bound.map(|b| 2.0 * (5.0 * b).exp()),
        grid_points: GRID_POINTS,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DivQuadReport {
    pub holds: bool,
    /// Smallest slack `E(.) - eta^2 D / (2C)` seen on the grid, over both inequalities.
    pub worst_margin: f64,
    pub worst_eta: f64,
}

/// Grid check of the quadratic divergence-growth condition
///
/// ```text
/// E_P((1-eta) D(P||Q))  >= eta^2 / (2C) * D(P||Q)
/// E_Q(-(1-eta) D(Q||P)) >= eta^2 / (2C) * D(Q||P)
/// ```
///
/// for `eta` on a uniform grid over `[0, 1]`.
pub fn check_divquad(pair: &DistPair, c: f64, points: usize) -> Result<DivQuadReport> {
    if points < 2 || !(c > 0.0) {
        return Err(domain("need at least two grid points and C > 0"));
    }
    let (dpq, dqp) = (pair.kl_pq(), pair.kl_qp());
    let tol = 1e-12 * (1.0 + dpq.max(dqp));
    let mut worst = (f64::INFINITY, 0.0);
    for i in 0..points {
        let eta = i as f64 / (points - 1) as f64;
        let need = eta * eta / (2.0 * c);
        let m1 = rate_e_q(pair, (1.0 - eta) * dpq)?.e_p - need * dpq;
        let m2 = rate_e_q(pair, -(1.0 - eta) * dqp)?.e_q - need * dqp;
        let m = m1.min(m2);
        if m < worst.0 {
            worst = (m, eta);
        }
    }
    Ok(DivQuadReport {
        holds: worst.0 >= -tol,
        worst_margin: worst.0,
        worst_eta: worst.1,
    })
}

/// Exponential-family sufficient condition:
///
/// ```text
/// max_{theta in J} A''(theta) / min_{theta in I} A''(theta)
/// ```
///
/// with `I` the interval between `theta0` and `theta1` and `J` the interval
/// `theta0 +/- (theta1 - theta0)`. Returns `f64::INFINITY` when `A''`
/// vanishes somewhere on `I`.
pub fn expfam_condition(a_second: impl Fn(f64) -> f64, theta0: f64, theta1: f64) -> f64 {
    let span = (theta1 - theta0).abs();
    let grid = |lo: f64, hi: f64| {
        (0..GRID_POINTS).map(move |i| lo + (hi - lo) * i as f64 / (GRID_POINTS - 1) as f64)
    };
    let max_j = grid(theta0 - span, theta0 + span)
        .map(&a_second)
        .fold(f64::NEG_INFINITY, f64::max);
    let min_i = grid(theta0.min(theta1), theta0.max(theta1))
        .map(&a_second)
        .fold(f64::INFINITY, f64::min);
    if min_i <= 0.0 {
        f64::INFINITY
    } else {
        max_j / min_i
    }
}

/// One draw from the tilted measure `dQ_lambda = exp(lambda L - psi_Q(lambda)) dQ`.
///
/// `Q_0 = Q` and `Q_1 = P`.
pub fn sample_tilted<R: Rng + ?Sized>(pair: &DistPair, lambda: f64, rng: &mut R) -> Result<f64> {
    match pair.kind() {
        PairKind::Gaussian { mu } => {
            let z: f64 = rng.sample(StandardNormal);
            Ok(lambda * mu + z)
        }
        _ => {
            let psi = pair.psi_q(lambda)?;
            let atoms = pair.atoms().expect("discrete kind");
            let masses: Vec<f64> = atoms
                .iter()
                .map(|a| (a.q.ln() + lambda * a.llr - psi).exp())
                .collect();
            Ok(atoms[sample_index(&masses, rng)].value)
        }
    }
}

/// `psi_Q'(lambda)`, the mean of `L` under `Q_lambda`.
pub fn tilted_mean(pair: &DistPair, lambda: f64) -> Result<f64> {
    match pair.kind() {
        PairKind::Gaussian { mu } => Ok((lambda - 0.5) * mu * mu),
        _ => {
            let psi = pair.psi_q(lambda)?;
            let atoms = pair.atoms().expect("discrete kind");
            Ok(atoms
                .iter()
                .map(|a| a.llr * (a.q.ln() + lambda * a.llr - psi).exp())
                .sum())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dists::bin_kl;
    use crate::error::Error;
    use crate::seed::rng_from;
    use approx::assert_relative_eq;

    fn bern() -> DistPair {
        DistPair::bernoulli(0.5, 0.25).unwrap()
    }

    fn pairs() -> Vec<DistPair> {
        vec![
            DistPair::gaussian(0.7).unwrap(),
            DistPair::gaussian(2.0).unwrap(),
            bern(),
            DistPair::bernoulli(0.6, 0.4).unwrap(),
            DistPair::bernoulli(0.05, 0.3).unwrap(),
            DistPair::finite(vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5]).unwrap(),
        ]
    }

    /// Closed-form Bernoulli oracle: `E_Q(theta) = d(alpha || q)`.
    fn bern_rate_oracle(p: f64, q: f64, theta: f64) -> f64 {
        let alpha =
            (theta + ((1.0 - q) / (1.0 - p)).ln()) / ((p * (1.0 - q)) / (q * (1.0 - p))).ln();
        bin_kl(alpha, q)
    }

    /// Brute-force grid maximization of `-psi_Q` over `[0,1]` at step 1e-6.
    fn chernoff_grid_oracle(pair: &DistPair) -> f64 {
        (0..=1_000_000)
            .map(|i| -pair.psi_q(i as f64 * 1e-6).unwrap())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn gaussian_rate_examples() {
        let g = DistPair::gaussian(2.0).unwrap();
        let r = rate_e_q(&g, 0.0).unwrap();
        assert_relative_eq!(r.e_q, 0.5, epsilon = 1e-15);
        assert_relative_eq!(r.lambda_star, 0.5, epsilon = 1e-15);
        assert_relative_eq!(chernoff_index(&g), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn rate_at_divergence_endpoints() {
        for pair in pairs() {
            let (lo, hi) = valid_interval(&pair);
            let top = rate_e_q(&pair, hi).unwrap();
            assert!((top.e_q - hi).abs() < 1e-9);
            assert!(top.e_p.abs() < 1e-9);
            let bottom = rate_e_q(&pair, lo).unwrap();
            assert!(bottom.e_q.abs() < 1e-9);
            assert!((bottom.e_p - pair.kl_qp()).abs() < 1e-9);
            assert!(!top.clamped && !bottom.clamped);
        }
    }

    #[test]
    fn bernoulli_rate_matches_closed_form() {
        let r = rate_e_q(&bern(), 0.05).unwrap();
        assert_relative_eq!(r.e_q, bern_rate_oracle(0.5, 0.25, 0.05), epsilon = 1e-12);
        for &(p, q) in &[(0.6, 0.4), (0.9, 0.5), (0.2, 0.7)] {
            let pair = DistPair::bernoulli(p, q).unwrap();
            let (lo, hi) = valid_interval(&pair);
            for i in 0..50 {
                let t = lo + (hi - lo) * i as f64 / 49.0;
                let r = rate_e_q(&pair, t).unwrap();
                assert!((r.e_q - bern_rate_oracle(p, q, t)).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn forced_numeric_search_agrees_with_gaussian_closed_form() {
        for mu in [0.5, 1.0, 2.0, 4.0] {
            let pair = DistPair::gaussian(mu).unwrap();
            let (lo, hi) = valid_interval(&pair);
            for i in 0..50 {
                let t = lo + (hi - lo) * i as f64 / 49.0;
                let closed = (mu + 2.0 * t / mu).powi(2) / 8.0;
                let num = rate_e_q_with(
                    &pair,
                    t,
                    RateOptions {
                        closed_form: false,
                        clamp: false,
                    },
                )
                .unwrap();
                let scale = closed.abs().max(1e-300);
                // closed form vanishes at the lower endpoint; compare absolutely there
                assert!(
                    (num.e_q - closed).abs() <= 1e-8 * scale || (num.e_q - closed).abs() < 1e-14,
                    "mu={mu} t={t}: {} vs {closed}",
                    num.e_q
                );
            }
        }
    }

    #[test]
    fn clamping_flags_and_strict_mode() {
        let pair = bern();
        let hi = pair.kl_pq();
        let r = rate_e_q(&pair, hi + 1.0).unwrap();
        assert!(r.clamped);
        assert_eq!(r.theta, hi);
        let strict = RateOptions {
            clamp: false,
            ..Default::default()
        };
        assert!(matches!(rate_e_q_with(&pair, hi + 1.0, strict), Err(Error::Domain(_))));
        assert!(rate_e_q(&pair, f64::NAN).is_err());
    }

    #[test]
    fn rate_is_monotone_and_one_lipschitz() {
        for pair in pairs() {
            let (lo, hi) = valid_interval(&pair);
            let grid: Vec<f64> = (0..200).map(|i| lo + (hi - lo) * i as f64 / 199.0).collect();
            for w in grid.windows(2) {
                let a = rate_e_q(&pair, w[0]).unwrap().e_q;
                let b = rate_e_q(&pair, w[1]).unwrap().e_q;
                let d = w[1] - w[0];
                assert!(b >= a - 1e-12, "not monotone");
                assert!(b <= a + d + 1e-12, "not 1-Lipschitz");
            }
        }
    }

    #[test]
    fn chernoff_index_against_grid_search() {
        let pair = DistPair::bernoulli(0.6, 0.4).unwrap();
        let c = chernoff_index(&pair);
        // symmetric pair: optimum at lambda = 1/2
        assert_relative_eq!(c, -(2.0 * 0.24f64.sqrt()).ln(), epsilon = 1e-12);
        assert_relative_eq!(c, chernoff_grid_oracle(&pair), epsilon = 1e-11);
        let skew = DistPair::bernoulli(0.05, 0.3).unwrap();
        assert_relative_eq!(chernoff_index(&skew), chernoff_grid_oracle(&skew), epsilon = 1e-11);
    }

    #[test]
    fn chernoff_index_below_min_divergence() {
        for pair in pairs() {
            assert!(chernoff_index(&pair) <= pair.kl_pq().min(pair.kl_qp()) + 1e-15);
        }
    }

    #[test]
    fn gaussian_tail_bound_dominates_exact_tail() {
        let g = DistPair::gaussian(2.0).unwrap();
        let b1 = chernoff_tail_upper(&g, 1, 0.0, TailSide::QUpper).unwrap();
        assert_relative_eq!(b1, (-0.5f64).exp(), epsilon = 1e-15);
        // Q[L >= 0] = Q[X >= 1] = 1 - Phi(1)
        let exact = 0.158_655_253_931_457_05;
        assert!(exact <= b1);
        let b10 = chernoff_tail_upper(&g, 10, 0.0, TailSide::QUpper).unwrap();
        assert_relative_eq!(b10, b1.powi(10), max_relative = 1e-12);
        let bp = chernoff_tail_upper(&g, 3, 0.0, TailSide::PLower).unwrap();
        assert_relative_eq!(bp, (-1.5f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn tail_bound_rejects_out_of_range() {
        let g = DistPair::gaussian(2.0).unwrap();
        assert!(chernoff_tail_upper(&g, 5, 2.5, TailSide::QUpper).is_err());
        assert!(chernoff_tail_upper(&g, 0, 0.0, TailSide::QUpper).is_err());
    }

    #[test]
    fn lower_bound_gaussian_example() {
        let g = DistPair::gaussian(2.0).unwrap();
        let lb = ld_lower_bound(&g, 100, 0.0, 0.5).unwrap();
        assert!(!lb.vacuous);
        assert_relative_eq!(lb.denominator, 0.84, epsilon = 1e-15);
        let e = (2.0f64 + 0.5).powi(2) / 8.0;
        let expected = (-(100.0 * e + std::f64::consts::LN_2) / 0.84).exp();
        assert_relative_eq!(lb.value, expected, max_relative = 1e-12);
        assert!(lb.value <= chernoff_tail_upper(&g, 100, 0.0, TailSide::QUpper).unwrap());
    }

    #[test]
    fn lower_bound_vacuous_and_invalid() {
        let g = DistPair::gaussian(2.0).unwrap();
        let lb = ld_lower_bound(&g, 4, 0.0, 0.5).unwrap();
        assert!(lb.vacuous);
        assert_eq!(lb.value, 0.0);
        assert!(ld_lower_bound(&g, 10, 1.8, 0.5).is_err());
        assert!(ld_lower_bound(&g, 10, 0.0, 0.0).is_err());
        assert!(ld_lower_bound(&g, 10, -2.5, 0.5).is_err());
    }

    #[test]
    fn assumption_gaussian_constant_is_two() {
        for mu in [0.1, 0.5, 1.0, 3.7, 40.0] {
            let r = check_regularity(&DistPair::gaussian(mu).unwrap()).unwrap();
            assert_eq!(r.c_required, 2.0);
            assert!(r.bounded_llr_certificate.is_none());
        }
    }

    #[test]
    fn assumption_bernoulli_certificate() {
        let r = check_regularity(&bern()).unwrap();
        let b = r.llr_bound.unwrap();
        assert_relative_eq!(b, std::f64::consts::LN_2, epsilon = 1e-15);
        let cert = r.bounded_llr_certificate.unwrap();
        assert_relative_eq!(cert, 64.0, max_relative = 1e-12);
        assert!(r.c_required <= cert);
        assert!(r.holds_with(cert));
        assert!(r.c_required >= 2.0);
    }

    #[test]
    fn assumption_ratio_stays_bounded_near_identity() {
        let base = [0.2, 0.3, 0.5];
        let ratios: Vec<f64> = [1e-2, 1e-3, 1e-4]
            .iter()
            .map(|eps| {
                let p = vec![base[0] + eps, base[1] - eps, base[2]];
                let pair = DistPair::finite(p, base.to_vec()).unwrap();
                check_regularity(&pair).unwrap().c_required
            })
            .collect();
        for r in &ratios {
            assert!(r.is_finite() && *r >= 2.0 - 1e-6 && *r < 10.0, "{ratios:?}");
        }
        assert!((ratios[1] - ratios[2]).abs() < 0.05, "{ratios:?}");
    }

    #[test]
    fn equivalence_chain_holds() {
        for pair in pairs() {
            let r = check_regularity(&pair).unwrap();
            let c = chernoff_index(&pair);
            let max_div = pair.kl_pq().max(pair.kl_qp());
            assert!(c >= max_div / (2.0 * r.c_required) - 1e-12);
            let dq = check_divquad(&pair, r.c_required, 101).unwrap();
            assert!(dq.holds, "{dq:?}");
        }
    }

    #[test]
    fn divquad_fails_for_too_small_constant() {
        let pair = DistPair::finite(vec![0.7, 0.2, 0.1], vec![0.1, 0.2, 0.7]).unwrap();
        let dq = check_divquad(&pair, 0.1, 101).unwrap();
        assert!(!dq.holds);
    }

    #[test]
    fn expfam_examples() {
        assert_eq!(expfam_condition(|_| 1.0, -0.3, 1.2), 1.0);
        let logit = |x: f64| (x / (1.0 - x)).ln();
        let bern_a2 = |t: f64| t.exp() / (1.0 + t.exp()).powi(2);
        let r = expfam_condition(bern_a2, logit(0.25), logit(0.5));
        // max over J is at theta=0 (1/4), min over I at logit(0.25) (3/16)
        assert_relative_eq!(r, 0.25 / 0.1875, max_relative = 1e-4);
        assert_eq!(expfam_condition(bern_a2, 0.7, 0.7), 1.0);
        assert_eq!(expfam_condition(|t| t * t, 0.0, 1.0), f64::INFINITY);
    }

    #[test]
    fn tilted_sampling_has_tilted_mean() {
        let n = 400_000;
        for pair in [DistPair::gaussian(1.5).unwrap(), bern()] {
            for lambda in [0.0, 0.3, 1.0] {
                let mut rng = rng_from(9);
                let mean = (0..n)
                    .map(|_| pair.llr(sample_tilted(&pair, lambda, &mut rng).unwrap()).unwrap())
                    .sum::<f64>()
                    / n as f64;
                let target = tilted_mean(&pair, lambda).unwrap();
                let sd = pair.psi_q_second(lambda).unwrap().sqrt();
                assert!((mean - target).abs() < 5.0 * sd / (n as f64).sqrt());
            }
        }
        let g = DistPair::gaussian(2.0).unwrap();
        assert_relative_eq!(tilted_mean(&g, 1.0).unwrap(), g.kl_pq(), epsilon = 1e-15);
        assert_relative_eq!(tilted_mean(&bern(), 0.0).unwrap(), -bern().kl_qp(), epsilon = 1e-14);
    }
}
