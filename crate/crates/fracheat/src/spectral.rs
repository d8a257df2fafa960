//! Spatial spectrum families {q_n} for the noise, existence of the solution,
//! and the derived regularity/dimension exponents (alpha, beta).

use crate::error::{Error, Result};
use crate::quad::{self, QuadOpts};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::{Arc, Mutex, OnceLock};

/// Largest k for which the alternating Riesz coefficient r(k) is computed;
/// beyond it the partial sum is frozen (tail is O(cap^{-gamma-1})).
const RIESZ_K_CAP: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpectrumKind {
    White,
    /// Spatial covariance |x-y|^{-gamma}, gamma in (0,1).
    Riesz { gamma: f64 },
    /// Noise white in a fractional Sobolev scale, K in (0,1): q_n = n^{1-2K}.
    FractionalSpace { k: f64 },
    /// Direct prescription q_n = n^{4H-2alpha-1}, alpha in (0,1].
    PowerLaw { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    pub kind: SpectrumKind,
    /// Hurst parameter of the driving fractional Brownian motions.
    pub h: f64,
    /// Coefficient of the constant spatial mode.
    pub q0: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentPair {
    /// Spatial Holder scale.
    pub alpha: f64,
    /// Dimension exponent beta = 1/alpha + (2/alpha v 1/H).
    pub beta: f64,
}

#[derive(Debug, Clone)]
pub struct ExistenceReport {
    pub convergent: bool,
    /// Asymptotic exponent of q_n n^{-4H}; convergent iff < -1.
    pub exponent: f64,
    /// Partial sums of q_n n^{-4H} at n = 2^j, for diagnostics.
    pub partial_sums: Vec<(usize, f64)>,
}

impl SpectrumModel {
    pub fn new(kind: SpectrumKind, h: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidParameter(format!("hurst must be in (0,1), got {h}")));
        }
        match kind {
            SpectrumKind::Riesz { gamma } => {
                if !(gamma > 0.0 && gamma < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "riesz gamma must be in (0,1), got {gamma}"
                    )));
                }
            }
            SpectrumKind::FractionalSpace { k } => {
                if !(k > 0.0 && k < 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "fracspace K must be in (0,1), got {k}"
                    )));
                }
            }
            SpectrumKind::PowerLaw { alpha } => {
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(Error::InvalidParameter(format!(
                        "powerlaw alpha must be in (0,1], got {alpha}"
                    )));
                }
                if (alpha - 2.0 * h).abs() < 1e-12 {
                    return Err(Error::InvalidParameter(
                        "powerlaw alpha = 2H is excluded".into(),
                    ));
                }
            }
            SpectrumKind::White => {}
        }
        // constant mode only contributes to White, where the covariance
        // expansion of the delta has all coefficients equal
        let q0 = match kind {
            SpectrumKind::White => 1.0,
            _ => 0.0,
        };
        Ok(SpectrumModel { kind, h, q0 })
    }

    /// Coefficient q_n of the spatial spectrum, n >= 1.
    pub fn q_coeff(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::InvalidParameter(
                "q_coeff takes n >= 1; the constant mode is the q0 field".into(),
            ));
        }
        let nf = n as f64;
        Ok(match self.kind {
            SpectrumKind::White => 1.0,
            SpectrumKind::PowerLaw { alpha } => nf.powf(4.0 * self.h - 2.0 * alpha - 1.0),
            SpectrumKind::FractionalSpace { k } => nf.powf(1.0 - 2.0 * k),
            SpectrumKind::Riesz { gamma } => nf.powf(gamma - 1.0) * riesz_c(gamma, n)?,
        })
    }

    /// Verdict on the existence series sum q_n n^{-4H}.
    pub fn existence_margin(&self) -> ExistenceReport {
        let exponent = self.tail_exponent() - 4.0 * self.h;
        let convergent = exponent < -1.0;
        let mut partial_sums = Vec::new();
        let mut sum = 0.0;
        let mut next_record = 2usize;
        for n in 1..=4096usize {
            sum += self.q_coeff(n).unwrap_or(0.0) * (n as f64).powf(-4.0 * self.h);
            if n == next_record {
                partial_sums.push((n, sum));
                next_record *= 2;
            }
        }
        ExistenceReport {
            convergent,
            exponent,
            partial_sums,
        }
    }

    /// Asymptotic exponent of q_n itself (equals 4H - 2 alpha - 1).
    pub fn tail_exponent(&self) -> f64 {
        match self.kind {
            SpectrumKind::White => 0.0,
            SpectrumKind::Riesz { gamma } => gamma - 1.0,
            SpectrumKind::FractionalSpace { k } => 1.0 - 2.0 * k,
            SpectrumKind::PowerLaw { alpha } => 4.0 * self.h - 2.0 * alpha - 1.0,
        }
    }

    pub fn exponents(&self) -> Result<ExponentPair> {
        let h = self.h;
        let alpha = match self.kind {
            SpectrumKind::White => 2.0 * h - 0.5,
            SpectrumKind::Riesz { gamma } => 2.0 * h - 0.5 * gamma,
            SpectrumKind::FractionalSpace { k } => 2.0 * h + k - 1.0,
            SpectrumKind::PowerLaw { alpha } => alpha,
        };
        if alpha <= 0.0 {
            return Err(Error::NonExistent(format!(
                "alpha = {alpha:.4} <= 0: no Holder regularity (existence fails)"
            )));
        }
        if alpha > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "alpha = {alpha:.4} > 1 falls outside the admissible scale"
            )));
        }
        if (alpha - 2.0 * h).abs() < 1e-12 {
            return Err(Error::InvalidParameter("alpha = 2H is excluded".into()));
        }
        let beta = 1.0 / alpha + (2.0 / alpha).max(1.0 / h);
        // the per-family closed forms must agree with the general formula
        let closed = match self.kind {
            SpectrumKind::White => Some(6.0 / (4.0 * h - 1.0)),
            SpectrumKind::Riesz { gamma } => Some(6.0 / (4.0 * h - gamma)),
            SpectrumKind::FractionalSpace { k } => Some(3.0 / (2.0 * h + k - 1.0)),
            SpectrumKind::PowerLaw { .. } => None,
        };
        if let Some(c) = closed {
            assert!(
                (beta - c).abs() <= 1e-12 * beta.abs().max(1.0),
                "closed-form beta {c} disagrees with general formula {beta}"
            );
        }
        Ok(ExponentPair { alpha, beta })
    }
}

/// c(n) = sum_{k=0}^{n-1} r(k), the partial sum of the alternating series of
/// Riesz kernel Fourier coefficients; q_n = n^{gamma-1} c(n).
pub fn riesz_c(gamma: f64, n: usize) -> Result<f64> {
    let prefix = riesz_prefix(gamma, n.min(RIESZ_K_CAP))?;
    let idx = n.min(RIESZ_K_CAP).min(prefix.len() - 1);
    Ok(prefix[idx])
}

/// r(k) = 2 gamma (-1)^k int_{k pi}^{(k+1) pi} x^{-gamma-1} |sin x| dx.
pub fn riesz_r(gamma: f64, k: usize) -> Result<f64> {
    let opts = QuadOpts {
        abs_tol: 1e-12,
        rel_tol: 1e-11,
        max_intervals: 400,
    };
    let f = |x: f64| x.powf(-gamma - 1.0) * x.sin().abs();
    let r = if k == 0 {
        // x^{-gamma} |sin x|/x near 0: integrable power singularity
        quad::integrate_power_lower(|x: f64, _| f(x), 0.0, PI, -gamma, opts)
    } else {
        quad::integrate(f, k as f64 * PI, (k + 1) as f64 * PI, opts)
    };
    if !r.converged {
        return Err(Error::QuadNonConvergence {
            value: r.value,
            residual: r.abs_err,
        });
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Ok(2.0 * gamma * sign * r.value)
}

/// Memoized prefix sums of r(k), keyed by gamma. prefix[m] = c(m).
fn riesz_prefix(gamma: f64, min_len: usize) -> Result<Arc<Vec<f64>>> {
    static CACHE: OnceLock<Mutex<HashMap<u64, Arc<Vec<f64>>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let key = gamma.to_bits();
    {
        let guard = cache.lock().unwrap();
        if let Some(v) = guard.get(&key) {
            if v.len() > min_len {
                return Ok(v.clone());
            }
        }
    }
    // grow outside the lock; duplicated work on a race is harmless
    let target = (min_len + 1).next_power_of_two().clamp(1024, RIESZ_K_CAP + 1);
    let mut prefix = Vec::with_capacity(target);
    prefix.push(0.0);
    for k in 0..target - 1 {
        let r = riesz_r(gamma, k)?;
        let last = *prefix.last().unwrap();
        prefix.push(last + r);
    }
    let arc = Arc::new(prefix);
    cache.lock().unwrap().insert(key, arc.clone());
    Ok(arc)
}

impl FromStr for SpectrumKind {
    type Err = Error;

    /// Grammar: `white | riesz:<gamma> | fracspace:<K> | powerlaw:<alpha>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("white") {
            return Ok(SpectrumKind::White);
        }
        let (name, arg) = s.split_once(':').ok_or_else(|| {
            Error::InvalidParameter(format!("unrecognized spectrum spec '{s}'"))
        })?;
        let value: f64 = arg.trim().parse().map_err(|_| {
            Error::InvalidParameter(format!("bad numeric parameter in spectrum spec '{s}'"))
        })?;
        match name.trim().to_ascii_lowercase().as_str() {
            "riesz" => Ok(SpectrumKind::Riesz { gamma: value }),
            "fracspace" => Ok(SpectrumKind::FractionalSpace { k: value }),
            "powerlaw" => Ok(SpectrumKind::PowerLaw { alpha: value }),
            other => Err(Error::InvalidParameter(format!(
                "unrecognized spectrum family '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for SpectrumKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SpectrumKind::White => write!(f, "white"),
            SpectrumKind::Riesz { gamma } => write!(f, "riesz:{gamma}"),
            SpectrumKind::FractionalSpace { k } => write!(f, "fracspace:{k}"),
            SpectrumKind::PowerLaw { alpha } => write!(f, "powerlaw:{alpha}"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::fit_line;
    use approx::assert_relative_eq;

    fn model(kind: SpectrumKind, h: f64) -> SpectrumModel {
        SpectrumModel::new(kind, h).unwrap()
    }

    #[test]
    fn white_coefficients_are_one() {
        let m = model(SpectrumKind::White, 0.5);
        assert_eq!(m.q_coeff(7).unwrap(), 1.0);
        assert_eq!(m.q0, 1.0);
    }

    #[test]
    fn powerlaw_unit_exponent() {
        // 4H - 2 alpha - 1 = 0 at H = alpha = 0.5
        let m = model(SpectrumKind::PowerLaw { alpha: 0.5 }, 0.5);
        assert_relative_eq!(m.q_coeff(2).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn riesz_first_coefficient_matches_defining_integral() {
        // q_1 = c(1) = r(0) = 2 * 0.5 * int_0^pi x^{-3/2} sin x dx
        //     = 2 int_0^pi cos(x) x^{-1/2} dx  (integration by parts)
        let m = model(SpectrumKind::Riesz { gamma: 0.5 }, 0.5);
        let q1 = m.q_coeff(1).unwrap();
        let by_parts = quad::integrate_power_lower(
            |x: f64, _| 2.0 * x.cos() * x.powf(-0.5),
            0.0,
            PI,
            -0.5,
            QuadOpts::default(),
        );
        assert!(by_parts.converged);
        assert_relative_eq!(q1, by_parts.value, max_relative = 1e-8);
    }

    #[test]
    fn riesz_band_is_positive_and_bounded() {
        for &gamma in &[0.25, 0.5, 0.75] {
            let m = model(SpectrumKind::Riesz { gamma }, 0.5);
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for n in 1..=10_000 {
                let c = m.q_coeff(n).unwrap() * (n as f64).powf(1.0 - gamma);
                assert!(c > 0.0, "c({n}) = {c} not positive at gamma {gamma}");
                lo = lo.min(c);
                hi = hi.max(c);
            }
            assert!(lo > 0.0 && hi.is_finite());
            assert!(hi / lo < 10.0, "band [{lo}, {hi}] too wide at gamma {gamma}");
        }
    }

    #[test]
    fn existence_verdicts() {
        assert!(!model(SpectrumKind::White, 0.25).existence_margin().convergent);
        assert!(model(SpectrumKind::White, 0.26).existence_margin().convergent);
        // fracspace with K = H converges iff 3H > 1
        assert!(model(SpectrumKind::FractionalSpace { k: 0.4 }, 0.4)
            .existence_margin()
            .convergent);
        assert!(!model(SpectrumKind::FractionalSpace { k: 0.3 }, 0.3)
            .existence_margin()
            .convergent);
        assert!(model(SpectrumKind::PowerLaw { alpha: 0.5 }, 0.3)
            .existence_margin()
            .convergent);
    }

    #[test]
    fn exponent_closed_forms() {
        let e = model(SpectrumKind::White, 0.5).exponents().unwrap();
        assert_relative_eq!(e.alpha, 0.5);
        assert_relative_eq!(e.beta, 6.0);

        let e = model(SpectrumKind::Riesz { gamma: 0.5 }, 0.5).exponents().unwrap();
        assert_relative_eq!(e.alpha, 0.75);
        assert_relative_eq!(e.beta, 4.0);

        let e = model(SpectrumKind::FractionalSpace { k: 0.5 }, 0.5)
            .exponents()
            .unwrap();
        assert_relative_eq!(e.alpha, 0.5);
        assert_relative_eq!(e.beta, 6.0);
    }

    #[test]
    fn exponents_rejects_nonexistent_models() {
        assert!(model(SpectrumKind::White, 0.25).exponents().is_err());
    }

    #[test]
    fn log_slope_of_q_matches_tail_exponent() {
        for m in [
            model(SpectrumKind::White, 0.5),
            model(SpectrumKind::Riesz { gamma: 0.5 }, 0.6),
            model(SpectrumKind::FractionalSpace { k: 0.3 }, 0.5),
            model(SpectrumKind::PowerLaw { alpha: 0.5 }, 0.4),
        ] {
            let expected = m.tail_exponent();
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            let mut n = 64usize;
            while n <= 4096 {
                xs.push((n as f64).ln());
                ys.push(m.q_coeff(n).unwrap().ln());
                n *= 2;
            }
            let fit = fit_line(&xs, &ys);
            assert!(
                (fit.slope - expected).abs() < 0.02,
                "slope {} vs expected {expected} for {:?}",
                fit.slope,
                m.kind
            );
        }
    }

    #[test]
    fn spectrum_grammar_round_trip() {
        for s in ["white", "riesz:0.5", "fracspace:0.3", "powerlaw:0.75"] {
            let kind: SpectrumKind = s.parse().unwrap();
            assert_eq!(kind.to_string(), s);
        }
        assert!("gauss:1.0".parse::<SpectrumKind>().is_err());
        assert!("riesz".parse::<SpectrumKind>().is_err());
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(SpectrumModel::new(SpectrumKind::White, 0.0).is_err());
        assert!(SpectrumModel::new(SpectrumKind::Riesz { gamma: 1.0 }, 0.5).is_err());
        assert!(SpectrumModel::new(SpectrumKind::PowerLaw { alpha: 1.0 }, 0.5).is_err());
        assert!(SpectrumModel::new(SpectrumKind::PowerLaw { alpha: 0.0 }, 0.5).is_err());
        let m = model(SpectrumKind::White, 0.5);
        assert!(m.q_coeff(0).is_err());
    }
}
