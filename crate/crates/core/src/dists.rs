//! The distribution pair `(P, Q)`.
//!
//! Entries inside the hidden community are drawn from `P`, all others from
//! `Q`. Everything downstream only touches the pair through the
//! log-likelihood ratio
//!
//! ```text
//! L(x) = log dP/dQ (x)
//! ```
//!
//! and its log moment generating function under `Q`,
//!
//! ```text
//! psi_Q(lambda) = log E_Q[exp(lambda L)],   psi_P(lambda) = psi_Q(lambda + 1).
//! ```
//!
//! Three kinds are supported: Bernoulli, unit-variance Gaussian location
//! shift (`P = N(mu, 1)`, `Q = N(0, 1)`), and a generic finite alphabet.
//! Observations are carried as `f64`; for the finite kind the value is the
//! alphabet index.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Range of `lambda` accepted by the log-MGF evaluators.
pub const PSI_RANGE: (f64, f64) = (-2.0, 2.0);

const MASS_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Measure {
    UnderP,
    UnderQ,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairKind {
    Bernoulli { p: f64, q: f64 },
    Gaussian { mu: f64 },
    Finite { p: Vec<f64>, q: Vec<f64> },
}

/// A validated `(P, Q)` pair. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PairSpec", into = "PairSpec")]
pub struct DistPair {
    kind: PairKind,
}

/// One atom of a discrete pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub value: f64,
    pub p: f64,
    pub q: f64,
    pub llr: f64,
}

/// Wire form of a pair, e.g. `{"kind":"bernoulli","p":0.5,"q":0.25}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PairSpec {
    Bernoulli { p: f64, q: f64 },
    Gaussian { mu: f64 },
    Finite { p: Vec<f64>, q: Vec<f64> },
}

impl TryFrom<PairSpec> for DistPair {
    type Error = Error;

    fn try_from(spec: PairSpec) -> Result<Self> {
        match spec {
            PairSpec::Bernoulli { p, q } => DistPair::bernoulli(p, q),
            PairSpec::Gaussian { mu } => DistPair::gaussian(mu),
            PairSpec::Finite { p, q } => DistPair::finite(p, q),
        }
    }
}

impl From<DistPair> for PairSpec {
    fn from(pair: DistPair) -> Self {
        match pair.kind {
            PairKind::Bernoulli { p, q } => PairSpec::Bernoulli { p, q },
            PairKind::Gaussian { mu } => PairSpec::Gaussian { mu },
            PairKind::Finite { p, q } => PairSpec::Finite { p, q },
        }
    }
}

fn open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// Binary divergence `d(a || b) = a log(a/b) + (1-a) log((1-a)/(1-b))`, with `0 log 0 = 0`.
pub fn bin_kl(a: f64, b: f64) -> f64 {
    let term = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * (x / y).ln() };
    term(a, b) + term(1.0 - a, 1.0 - b)
}

impl DistPair {
    pub fn bernoulli(p: f64, q: f64) -> Result<Self> {
        if !open_unit(p) || !open_unit(q) {
            return Err(Error::InvalidPair(format!(
                "bernoulli parameters must lie in (0,1), got p={p}, q={q}"
            )));
        }
        if p == q {
            return Err(Error::InvalidPair(format!("p and q coincide ({p})")));
        }
        Ok(Self {
            kind: PairKind::Bernoulli { p, q },
        })
    }

    pub fn gaussian(mu: f64) -> Result<Self> {
        if !mu.is_finite() || mu == 0.0 {
            return Err(Error::InvalidPair(format!(
                "gaussian mean shift must be finite and nonzero, got {mu}"
            )));
        }
        Ok(Self {
            kind: PairKind::Gaussian { mu },
        })
    }

    pub fn finite(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() || p.len() < 2 {
            return Err(Error::InvalidPair(format!(
                "finite pair needs two mass vectors of equal length >= 2, got {} and {}",
                p.len(),
                q.len()
            )));
        }
        for (name, masses) in [("p", &p), ("q", &q)] {
            if masses.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
                return Err(Error::InvalidPair(format!(
                    "every atom needs strictly positive mass under both measures ({name})"
                )));
            }
            let total: f64 = masses.iter().sum();
            if (total - 1.0).abs() > MASS_TOL {
                return Err(Error::InvalidPair(format!(
                    "{name} masses sum to {total}, not 1"
                )));
            }
        }
        if p == q {
            return Err(Error::InvalidPair("p and q masses are identical".into()));
        }
        Ok(Self {
            kind: PairKind::Finite { p, q },
        })
    }

    pub fn kind(&self) -> &PairKind {
        &self.kind
    }

    pub fn spec(&self) -> PairSpec {
        self.clone().into()
    }

    /// Compact JSON descriptor, used in CSV outputs.
    pub fn descriptor(&self) -> String {
        serde_json::to_string(&self.spec()).expect("pair serializes")
    }

    /// `log dP/dQ (x)`.
    pub fn llr(&self, x: f64) -> Result<f64> {
        match &self.kind {
            PairKind::Bernoulli { p, q } => {
                if x == 1.0 {
                    Ok((p / q).ln())
                } else if x == 0.0 {
                    Ok(((1.0 - p) / (1.0 - q)).ln())
                } else {
                    Err(domain(format!("bernoulli observation must be 0 or 1, got {x}")))
                }
            }
            PairKind::Gaussian { mu } => {
                if x.is_finite() {
                    Ok(mu * (x - mu / 2.0))
                } else {
                    Err(domain(format!("gaussian observation must be finite, got {x}")))
                }
            }
            PairKind::Finite { p, q } => {
                let idx = Self::finite_index(x, p.len())?;
                Ok((p[idx] / q[idx]).ln())
            }
        }
    }

    fn finite_index(x: f64, len: usize) -> Result<usize> {
        if x >= 0.0 && x.fract() == 0.0 && (x as usize) < len {
            Ok(x as usize)
        } else {
            Err(domain(format!(
                "finite observation must be an alphabet index in 0..{len}, got {x}"
            )))
        }
    }

    /// Atoms of a discrete pair; `None` for the Gaussian kind.
    pub fn atoms(&self) -> Option<Vec<Atom>> {
        match &self.kind {
            PairKind::Bernoulli { p, q } => Some(vec![
                Atom {
                    value: 0.0,
                    p: 1.0 - p,
                    q: 1.0 - q,
                    llr: ((1.0 - p) / (1.0 - q)).ln(),
                },
                Atom {
                    value: 1.0,
                    p: *p,
                    q: *q,
                    llr: (p / q).ln(),
                },
            ]),
            PairKind::Gaussian { .. } => None,
            PairKind::Finite { p, q } => Some(
                p.iter()
                    .zip(q)
                    .enumerate()
                    .map(|(i, (&pm, &qm))| Atom {
                        value: i as f64,
                        p: pm,
                        q: qm,
                        llr: (pm / qm).ln(),
                    })
                    .collect(),
            ),
        }
    }

    /// `max |L|` when the LLR is bounded.
    pub fn llr_bound(&self) -> Option<f64> {
        self.atoms()
            .map(|atoms| atoms.iter().map(|a| a.llr.abs()).fold(0.0, f64::max))
    }

    /// `D(P || Q)`.
    pub fn kl_pq(&self) -> f64 {
        match &self.kind {
            PairKind::Bernoulli { p, q } => bin_kl(*p, *q),
            PairKind::Gaussian { mu } => mu * mu / 2.0,
            PairKind::Finite { p, q } => p.iter().zip(q).map(|(a, b)| a * (a / b).ln()).sum(),
        }
    }

    /// `D(Q || P)`.
    pub fn kl_qp(&self) -> f64 {
        match &self.kind {
            PairKind::Bernoulli { p, q } => bin_kl(*q, *p),
            PairKind::Gaussian { mu } => mu * mu / 2.0,
            PairKind::Finite { p, q } => q.iter().zip(p).map(|(a, b)| a * (a / b).ln()).sum(),
        }
    }

    fn check_lambda(lambda: f64) -> Result<()> {
        if lambda.is_finite() && lambda >= PSI_RANGE.0 && lambda <= PSI_RANGE.1 {
            Ok(())
        } else {
            Err(domain(format!(
                "lambda={lambda} outside [{}, {}]",
                PSI_RANGE.0, PSI_RANGE.1
            )))
        }
    }

    /// `psi_Q` without the range check; used for finite differences at the range edges.
    pub(crate) fn psi_q_raw(&self, lambda: f64) -> f64 {
        match &self.kind {
            PairKind::Gaussian { mu } => (lambda * lambda - lambda) * mu * mu / 2.0,
            PairKind::Bernoulli { .. } | PairKind::Finite { .. } => {
                let atoms = self.atoms().expect("discrete kind");
                log_sum_exp(atoms.iter().map(|a| a.q.ln() + lambda * a.llr))
            }
        }
    }

    /// `psi_Q(lambda) = log E_Q[exp(lambda L)]` for `lambda` in [`PSI_RANGE`].
    pub fn psi_q(&self, lambda: f64) -> Result<f64> {
        Self::check_lambda(lambda)?;
        let v = self.psi_q_raw(lambda);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numeric(format!("psi_Q({lambda}) = {v}")))
        }
    }

    /// `psi_P(lambda) = psi_Q(lambda + 1)`.
    pub fn psi_p(&self, lambda: f64) -> Result<f64> {
        self.psi_q(lambda + 1.0)
    }

    /// `psi_Q''(lambda)`, the variance of `L` under the tilted measure `Q_lambda`.
    ///
    /// Computed as a centred second moment, which stays accurate when `P`
    /// and `Q` are nearly identical.
    pub fn psi_q_second(&self, lambda: f64) -> Result<f64> {
        Self::check_lambda(lambda)?;
        Ok(match &self.kind {
            PairKind::Gaussian { mu } => mu * mu,
            PairKind::Bernoulli { p, q } => {
                let l1 = (p / q).ln();
                let l0 = ((1.0 - p) / (1.0 - q)).ln();
                let w1 = q.ln() + lambda * l1;
                let w0 = (1.0 - q).ln() + lambda * l0;
                // tilted probability of a one
                let r = 1.0 / (1.0 + (w0 - w1).exp());
                r * (1.0 - r) * (l1 - l0).powi(2)
            }
            PairKind::Finite { p, q } => {
                let llr: Vec<f64> = p.iter().zip(q).map(|(a, b)| (a / b).ln()).collect();
                let logw: Vec<f64> = q.iter().zip(&llr).map(|(b, l)| b.ln() + lambda * l).collect();
                let top = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let w: Vec<f64> = logw.iter().map(|v| (v - top).exp()).collect();
                let z: f64 = w.iter().sum();
                let mean: f64 = w.iter().zip(&llr).map(|(a, l)| a * l).sum::<f64>() / z;
                w.iter().zip(&llr).map(|(a, l)| a * (l - mean).powi(2)).sum::<f64>() / z
            }
        })
    }

    /// One draw from `P` or `Q`.
    pub fn sample<R: Rng + ?Sized>(&self, measure: Measure, rng: &mut R) -> f64 {
        match &self.kind {
            PairKind::Bernoulli { p, q } => {
                let prob = match measure {
                    Measure::UnderP => *p,
                    Measure::UnderQ => *q,
                };
                if rng.random::<f64>() < prob {
                    1.0
                } else {
                    0.0
                }
            }
            PairKind::Gaussian { mu } => {
                let z: f64 = rng.sample(StandardNormal);
                match measure {
                    Measure::UnderP => mu + z,
                    Measure::UnderQ => z,
                }
            }
            PairKind::Finite { p, q } => {
                let masses = match measure {
                    Measure::UnderP => p,
                    Measure::UnderQ => q,
                };
                sample_index(masses, rng) as f64
            }
        }
    }

    /// The LLR of one draw from `P` or `Q`.
    pub fn sample_llr<R: Rng + ?Sized>(&self, measure: Measure, rng: &mut R) -> f64 {
        let x = self.sample(measure, rng);
        self.llr(x).expect("sampled value lies in the support")
    }
}

pub(crate) fn sample_index<R: Rng + ?Sized>(masses: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, m) in masses.iter().enumerate() {
        acc += m;
        if u < acc {
            return i;
        }
    }
    masses.len() - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use approx::assert_relative_eq;

    fn bern() -> DistPair {
        DistPair::bernoulli(0.5, 0.25).unwrap()
    }

    fn finite3() -> DistPair {
        DistPair::finite(vec![0.5, 0.3, 0.2], vec![0.2, 0.3, 0.5]).unwrap()
    }

    #[test]
    fn llr_examples() {
        let g = DistPair::gaussian(2.0).unwrap();
        assert_eq!(g.llr(1.0).unwrap(), 0.0);
        assert_relative_eq!(bern().llr(1.0).unwrap(), 0.693_147_180_559_945_3, epsilon = 1e-15);
        assert_relative_eq!(bern().llr(0.0).unwrap(), (0.5f64 / 0.75).ln(), epsilon = 1e-15);
        assert_relative_eq!(finite3().llr(2.0).unwrap(), (0.4f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn llr_rejects_out_of_support() {
        assert!(matches!(bern().llr(0.5), Err(Error::Domain(_))));
        assert!(matches!(finite3().llr(3.0), Err(Error::Domain(_))));
        assert!(matches!(finite3().llr(1.5), Err(Error::Domain(_))));
        assert!(DistPair::gaussian(1.0).unwrap().llr(f64::NAN).is_err());
    }

    #[test]
    fn constructors_reject_degenerate_pairs() {
        assert!(DistPair::bernoulli(0.5, 0.0).is_err());
        assert!(DistPair::bernoulli(0.3, 0.3).is_err());
        assert!(DistPair::bernoulli(1.0, 0.3).is_err());
        assert!(DistPair::gaussian(0.0).is_err());
        assert!(DistPair::finite(vec![0.5, 0.5], vec![0.5, 0.5]).is_err());
        assert!(DistPair::finite(vec![1.0, 0.0], vec![0.5, 0.5]).is_err());
        assert!(DistPair::finite(vec![0.6, 0.5], vec![0.5, 0.5]).is_err());
        assert!(DistPair::finite(vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn divergences() {
        let g = DistPair::gaussian(2.0).unwrap();
        assert_eq!(g.kl_pq(), 2.0);
        assert_eq!(g.kl_qp(), 2.0);
        // frozen from a 30-digit evaluation
        assert_relative_eq!(bern().kl_pq(), 0.143_841_036_225_890_46, epsilon = 1e-15);
        assert_relative_eq!(bern().kl_qp(), 0.130_812_035_941_136_96, epsilon = 1e-15);
    }

    #[test]
    fn divergence_vanishes_continuously() {
        let base = [0.2, 0.3, 0.5];
        let mut prev = f64::INFINITY;
        for eps in [1e-2, 1e-3, 1e-4, 1e-5] {
            let p = vec![base[0] + eps, base[1] - eps, base[2]];
            let pair = DistPair::finite(p, base.to_vec()).unwrap();
            let d = pair.kl_pq();
            assert!(d > 0.0 && d < prev);
            prev = d;
        }
        assert!(prev < 1e-9);
    }

    #[test]
    fn psi_examples() {
        let g = DistPair::gaussian(2.0).unwrap();
        assert_relative_eq!(g.psi_q(0.5).unwrap(), -0.5, epsilon = 1e-15);
        assert_relative_eq!(bern().psi_q(0.5).unwrap(), -0.034_668_232_097_536_955, epsilon = 1e-15);
        for pair in [g, bern(), finite3()] {
            assert!(pair.psi_q(0.0).unwrap().abs() < 1e-12);
            assert!(pair.psi_q(1.0).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn psi_range_is_enforced() {
        assert!(bern().psi_q(2.5).is_err());
        assert!(bern().psi_q(-2.0001).is_err());
        assert!(bern().psi_p(1.5).is_err());
        assert!(bern().psi_q(2.0).is_ok());
    }

    #[test]
    fn psi_p_shift_identity() {
        for pair in [DistPair::gaussian(1.3).unwrap(), bern(), finite3()] {
            for i in 0..100 {
                let lambda = -3.0 + 4.0 * i as f64 / 99.0;
                let lhs = pair.psi_p(lambda).unwrap();
                let rhs = pair.psi_q(lambda + 1.0).unwrap();
                assert!((lhs - rhs).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn finite_psi_matches_direct_integration() {
        let pair = finite3();
        let PairKind::Finite { p, q } = pair.kind().clone() else {
            unreachable!()
        };
        for i in 0..=40 {
            let lambda = -2.0 + 0.1 * i as f64;
            let direct: f64 = p
                .iter()
                .zip(&q)
                .map(|(a, b)| b * (lambda * (a / b).ln()).exp())
                .sum();
            let via_psi = pair.psi_q(lambda).unwrap().exp();
            assert!((direct - via_psi).abs() <= 1e-12 * direct.max(1.0));
        }
    }

    #[test]
    fn second_derivative_closed_forms_match_finite_differences() {
        let h = 1e-4;
        let tri = DistPair::finite(vec![0.2, 0.3, 0.5], vec![0.5, 0.25, 0.25]).unwrap();
        for pair in [bern(), DistPair::bernoulli(0.1, 0.7).unwrap(), tri] {
            for i in 0..=20 {
                let l = -1.5 + 0.15 * i as f64;
                let fd = (pair.psi_q_raw(l + h) - 2.0 * pair.psi_q_raw(l) + pair.psi_q_raw(l - h))
                    / (h * h);
                assert_relative_eq!(pair.psi_q_second(l).unwrap(), fd, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn serde_round_trip_and_validation() {
        let json = r#"{"kind":"bernoulli","p":0.5,"q":0.25}"#;
        let pair: DistPair = serde_json::from_str(json).unwrap();
        assert_eq!(pair, bern());
        assert_eq!(serde_json::to_string(&pair).unwrap(), json);
        let g: DistPair = serde_json::from_str(r#"{"kind":"gaussian","mu":2.0}"#).unwrap();
        assert_eq!(g, DistPair::gaussian(2.0).unwrap());
        let f: DistPair =
            serde_json::from_str(r#"{"kind":"finite","p":[0.5,0.3,0.2],"q":[0.2,0.3,0.5]}"#)
                .unwrap();
        assert_eq!(f, finite3());
        assert!(serde_json::from_str::<DistPair>(r#"{"kind":"gaussian","mu":0.0}"#).is_err());
        assert!(serde_json::from_str::<DistPair>(r#"{"kind":"bernoulli","p":0.5,"q":0}"#).is_err());
    }

    #[test]
    fn sampling_moments() {
        let mut rng = rng_from(11);
        let n = 1_000_000;
        let g = DistPair::gaussian(2.0).unwrap();
        let mean = (0..n).map(|_| g.sample(Measure::UnderP, &mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 2.0).abs() < 0.01, "{mean}");
        let freq = (0..n).map(|_| bern().sample(Measure::UnderP, &mut rng)).sum::<f64>() / n as f64;
        assert!((freq - 0.5).abs() < 0.005, "{freq}");
    }

    fn mean_and_se(xs: &[f64]) -> (f64, f64) {
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
        (m, (v / n).sqrt())
    }

    #[test]
    fn change_of_measure_and_divergence_means() {
        let n = 1_000_000;
        for (k, pair) in [DistPair::gaussian(1.0).unwrap(), bern(), finite3()]
            .into_iter()
            .enumerate()
        {
            let mut rng = rng_from(100 + k as u64);
            let under_q: Vec<f64> = (0..n).map(|_| pair.sample_llr(Measure::UnderQ, &mut rng)).collect();
            let under_p: Vec<f64> = (0..n).map(|_| pair.sample_llr(Measure::UnderP, &mut rng)).collect();

            let lr: Vec<f64> = under_q.iter().map(|l| l.exp()).collect();
            let (m, se) = mean_and_se(&lr);
            assert!((m - 1.0).abs() <= 5.0 * se, "E_Q[dP/dQ]={m} se={se}");

            let (m, se) = mean_and_se(&under_p);
            assert!((m - pair.kl_pq()).abs() <= 5.0 * se, "E_P[L]={m}");

            let (m, se) = mean_and_se(&under_q);
            assert!((m + pair.kl_qp()).abs() <= 5.0 * se, "E_Q[L]={m}");
        }
    }
}
