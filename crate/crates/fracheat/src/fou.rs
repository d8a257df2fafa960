//! Unit-rate fractional Ornstein-Uhlenbeck reduction.
//!
//! Every mode of the solution is the stochastic convolution
//! X_n(t) = int_0^t e^{-n^2 (t-r)} dB^H(r), and fBm self-similarity gives
//! E[X_n(t) X_n(s)] = n^{-4H} c(n^2 t, n^2 s) where c is the covariance of
//! the unit-rate process Y(tau) = int_0^tau e^{-(tau-r)} dB^H(r).
//! Writing Y(tau) = Z(tau) - e^{-tau} Z(0) with Z the stationary fOU process
//! reduces all second moments to the single stationary covariance rho(lambda):
//!   v(tau)        = rho0 (1 + e^{-2 tau}) - 2 e^{-tau} rho(tau)
//!   c(t1,t2)      = rho(|t2-t1|) - e^{-t1} rho(t2) - e^{-t2} rho(t1)
//!                   + e^{-(t1+t2)} rho0
//! with rho0 = Gamma(2H+1)/2. rho is tabulated once per H from direct K*
//! quadrature at a large horizon and interpolated; beyond the table the
//! classical power-series asymptotics of the fOU covariance take over.
//! The table stores rho(lambda) - rho0 + lambda^{2H}/2, which is smooth at 0,
//! so the lambda^{2H} cusp is never interpolated across.

use crate::error::{Error, Result};
use crate::fbm::{self, kstar_apply};
use crate::quad::{self, QuadOpts};
use statrs::function::gamma::gamma;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

/// Horizon after which the transient e^{-tau} Z(0) part is below 1e-8.
const HORIZON: f64 = 20.0;
/// Lag where the table switches from the cusp-free remainder r(lambda) to
/// rho(lambda) itself: below, the lambda^{2H} cusp needs removing; above,
/// interpolating the (by then huge) lambda^{2H}/2 compensator would swamp the
/// small rho with interpolation error.
const LAMBDA_SPLIT: f64 = 2.0;
/// Largest tabulated lag; beyond it the three-term asymptotic series is
/// accurate to a few parts in 1e-6 relative.
const LAMBDA_MAX: f64 = 30.0;
const N_LOW: usize = 120;
const N_HIGH: usize = 90;
const LAMBDA_MIN: f64 = 1e-4;

/// Stationary variance rho(0) of the unit-rate fOU process.
pub fn rho0(h: f64) -> f64 {
    0.5 * gamma(2.0 * h + 1.0)
}

fn is_half(h: f64) -> bool {
    (h - 0.5).abs() < 1e-12
}

fn outer_opts() -> QuadOpts {
    QuadOpts {
        abs_tol: 1e-12,
        rel_tol: 1e-8,
        max_intervals: 3000,
    }
}

fn inner_opts() -> QuadOpts {
    QuadOpts {
        abs_tol: 1e-12,
        rel_tol: 1e-9,
        max_intervals: 600,
    }
}

/// v(tau) = E[Y(tau)^2] by direct K* quadrature (no table).
pub fn variance_quad(h: f64, tau: f64) -> Result<f64> {
    if tau <= 0.0 {
        return Ok(0.0);
    }
    if is_half(h) {
        return Ok(0.5 * (1.0 - (-2.0 * tau).exp()));
    }
    if tau > 2.0 * HORIZON {
        // transient terms carry e^{-tau} < 1e-17: stationary to f64 precision
        return Ok(rho0(h));
    }
    fbm::kstar_norm_sq(h, &|r: f64| (-(tau - r)).exp(), tau, outer_opts())
}

/// c(tau1, tau2) = E[Y(tau1) Y(tau2)] by direct K* quadrature (no table).
pub fn cross_quad(h: f64, tau1: f64, tau2: f64) -> Result<f64> {
    let (t1, t2) = if tau1 <= tau2 { (tau1, tau2) } else { (tau2, tau1) };
    if t1 <= 0.0 {
        return Ok(0.0);
    }
    if is_half(h) {
        return Ok((-(t2 - t1)).exp() * 0.5 * (1.0 - (-2.0 * t1).exp()));
    }
    // the shorter integrand is supported on [0, t1], where transferring at
    // horizon t2 or t1 coincide (Volterra property), so integrate to t1 only
    let phi1 = move |r: f64| (-(t1 - r)).exp();
    let phi2 = move |r: f64| (-(t2 - r)).exp();
    let inner = inner_opts();
    let f = |r: f64, _| {
        let a = kstar_apply(h, &phi1, t1, r, inner).unwrap_or(f64::NAN);
        let b = kstar_apply(h, &phi2, t2, r, inner).unwrap_or(f64::NAN);
        a * b
    };
    let pa = -(2.0 * h - 1.0).abs();
    let pb = if t2 - t1 < 1e-12 {
        (2.0 * h - 1.0).min(0.0)
    } else {
        (h - 0.5).min(0.0)
    };
    let r = quad::integrate_endpoint_powers(f, 0.0, t1, pa, pb, outer_opts());
    if !r.value.is_finite() {
        return Err(Error::QuadNonConvergence {
            value: r.value,
            residual: f64::INFINITY,
        });
    }
    Ok(r.value)
}

/// E[(Y(tau2) - Y(tau1))^2] by K* quadrature of the combined integrand
/// chi(r) = e^{-(tau2-r)} - e^{-(tau1-r)} 1_{r <= tau1}. Cancellation-free:
/// the small increment is integrated directly, not formed as a difference of
/// large moments.
pub fn increment_quad(h: f64, tau1: f64, tau2: f64) -> Result<f64> {
    let (t1, t2) = if tau1 <= tau2 { (tau1, tau2) } else { (tau2, tau1) };
    if t2 - t1 == 0.0 {
        return Ok(0.0);
    }
    let delta = t2 - t1;
    if is_half(h) {
        let a = (1.0 - (-delta).exp()).powi(2) * 0.5 * (1.0 - (-2.0 * t1).exp());
        let b = 0.5 * (1.0 - (-2.0 * delta).exp());
        return Ok(a + b);
    }
    // chi(r) = e^{-(t2-r)} - e^{-(t1-r)} 1_{r<=t1}, written via expm1 so the
    // near-equal exponentials never cancel; dchi(u, y=u-r, r) = chi(u)-chi(r)
    // likewise, since the K* integrand would otherwise sit below noise for
    // small delta.
    let em = (-delta).exp_m1();
    let chi = move |r: f64| {
        if r <= t1 {
            em * (-(t1 - r)).exp()
        } else {
            (-(t2 - r)).exp()
        }
    };
    let dchi = move |u: f64, y: f64, r: f64| {
        if u <= t1 {
            em * (-(t1 - r)).exp() * y.exp_m1()
        } else if r <= t1 {
            // pieces have the same sign here (em < 0), no cancellation
            (-(t2 - u)).exp() - em * (-(t1 - r)).exp()
        } else {
            (-(t2 - r)).exp() * y.exp_m1()
        }
    };
    let inner = inner_opts();
    let sq = |r: f64, _: f64| {
        kstar_pw(h, &chi, &dchi, t2, r, t1, inner).map_or(f64::NAN, |v| v * v)
    };
    let pa = -(2.0 * h - 1.0).abs();
    let pk = (2.0 * h - 1.0).min(0.0);
    let opts = outer_opts();
    let left = if t1 > 0.0 {
        quad::integrate_endpoint_powers(sq, 0.0, t1, pa, pk, opts)
    } else {
        quad::integrate(|r| sq(r, 0.0), 0.0, 0.0, opts)
    };
    let right = quad::integrate_endpoint_powers(sq, t1, t2, 0.0, pk, opts);
    let value = left.value + right.value;
    if !value.is_finite() {
        return Err(Error::QuadNonConvergence {
            value,
            residual: f64::INFINITY,
        });
    }
    Ok(value)
}

/// K* transfer of a piecewise-smooth integrand with one breakpoint, splitting
/// the inner integral there so the adaptive rule never straddles the jump.
/// `df(u, y, r)` must return f(u) - f(r) with y = u - r, evaluated in a form
/// free of subtractive cancellation.
fn kstar_pw(
    h: f64,
    f: &dyn Fn(f64) -> f64,
    df: &dyn Fn(f64, f64, f64) -> f64,
    t: f64,
    r: f64,
    brk: f64,
    opts: QuadOpts,
) -> Result<f64> {
    let ch = fbm::c_h(h);
    let dk = move |u: f64, y: f64| ch * (h - 0.5) * y.powf(h - 1.5) * (r / u).powf(0.5 - h);
    let split = brk > r && brk < t;
    if h > 0.5 {
        let mut total = 0.0;
        let seg_end = if split { brk } else { t };
        let g = |u: f64, y: f64| f(u) * dk(u, y);
        total += quad::integrate_power_lower(g, r, seg_end, h - 1.5, opts).value;
        if split {
            // the (u-r)^{h-3/2} near-singularity sits just below brk when r
            // approaches it: log substitution resolves the boundary layer
            total += quad::integrate_power_below(g, r, brk, t, opts).value;
        }
        Ok(total)
    } else {
        let fr = f(r);
        let g = |u: f64, y: f64| df(u, y, r) * dk(u, y);
        let mut total = fbm::kernel_k(h, t, r)? * fr;
        let seg_end = if split { brk } else { t };
        total += quad::integrate_power_lower(g, r, seg_end, h - 0.5, opts).value;
        if split {
            total += quad::integrate_power_below(g, r, brk, t, opts).value;
        }
        Ok(total)
    }
}

/// Stationary fOU covariance for H > 1/2 via the moving-average isometry:
/// rho(lambda) = H(2H-1)/2 int_R e^{-|w|} |w - lambda|^{2H-2} dw.
/// Used purely as an independent cross-check of the K* route.
pub fn rho_isometry(h: f64, lambda: f64) -> Result<f64> {
    if !(h > 0.5) {
        return Err(Error::InvalidParameter(
            "isometry route requires H > 1/2".into(),
        ));
    }
    let p = 2.0 * h - 2.0;
    let opts = QuadOpts::with_tol(1e-11);
    // w < 0 branch: (lambda - w)^p e^{w}
    let neg = quad::integrate(|w: f64| (lambda - w).powf(p) * w.exp(), -60.0, 0.0, opts);
    // 0 < w < lambda: singular at w = lambda
    let mid = quad::integrate_power_upper(
        |w: f64, y: f64| y.powf(p) * (-w).exp(),
        0.0,
        lambda,
        p,
        opts,
    );
    // w > lambda: singular at w = lambda
    let far = quad::integrate_power_lower(
        |w: f64, y: f64| y.powf(p) * (-w).exp(),
        lambda,
        lambda + 80.0,
        p,
        opts,
    );
    Ok(h * (2.0 * h - 1.0) * 0.5 * (neg.value + mid.value + far.value))
}

/// Large-lag asymptotics of rho (classical fOU expansion, three terms).
fn rho_asymptotic(h: f64, lambda: f64) -> f64 {
    let mut sum = 0.0;
    let mut prod = 1.0;
    let mut j = 0.0;
    for k in 1..=3 {
        prod *= (2.0 * h - j) * (2.0 * h - j - 1.0);
        j += 2.0;
        sum += prod * lambda.powf(2.0 * h - 2.0 * k as f64);
    }
    0.5 * sum
}

/// Tabulated stationary structure of the unit-rate mode process for one H.
pub struct FouTable {
    pub h: f64,
    pub rho0: f64,
    /// r(lambda) = rho - rho0 + lambda^{2H}/2 on [0, LAMBDA_SPLIT]
    low: Option<Pchip>,
    /// rho(lambda) itself on [LAMBDA_SPLIT, LAMBDA_MAX]
    high: Option<Pchip>,
}

impl FouTable {
    /// Shared per-H instance; building one runs the quadrature table.
    pub fn get(h: f64) -> Result<Arc<FouTable>> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<FouTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(t) = cache.lock().unwrap().get(&h.to_bits()) {
            return Ok(t.clone());
        }
        let table = Arc::new(FouTable::build(h)?);
        cache.lock().unwrap().insert(h.to_bits(), table.clone());
        Ok(table)
    }

    fn build(h: f64) -> Result<FouTable> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::InvalidParameter(format!("H = {h} outside (0,1)")));
        }
        let r0 = rho0(h);
        if is_half(h) {
            return Ok(FouTable {
                h,
                rho0: r0,
                low: None,
                high: None,
            });
        }
        let geometric = |a: f64, b: f64, n: usize| -> Vec<f64> {
            let ratio = (b / a).powf(1.0 / (n - 1) as f64);
            let mut xs = Vec::with_capacity(n);
            let mut lam = a;
            for _ in 0..n {
                xs.push(lam);
                lam *= ratio;
            }
            *xs.last_mut().unwrap() = b;
            xs
        };
        let mut xs_low = vec![0.0];
        xs_low.extend(geometric(LAMBDA_MIN, LAMBDA_SPLIT, N_LOW));
        let xs_high = geometric(LAMBDA_SPLIT, LAMBDA_MAX, N_HIGH);
        use rayon::prelude::*;
        // one stationary increment moment per node, taken at the horizon
        let inc = |lambda: f64| increment_quad(h, HORIZON, HORIZON + lambda);
        let ys_low: Result<Vec<f64>> = xs_low
            .par_iter()
            .map(|&lambda| {
                if lambda == 0.0 {
                    return Ok(0.0);
                }
                // r = rho - rho0 + lambda^{2H}/2 = (lambda^{2H} - incvar)/2
                Ok(0.5 * (lambda.powf(2.0 * h) - inc(lambda)?))
            })
            .collect();
        let ys_high: Result<Vec<f64>> = xs_high
            .par_iter()
            .map(|&lambda| Ok(r0 - 0.5 * inc(lambda)?))
            .collect();
        Ok(FouTable {
            h,
            rho0: r0,
            low: Some(Pchip::new(xs_low, ys_low?)),
            high: Some(Pchip::new(xs_high, ys_high?)),
        })
    }

    /// Stationary covariance rho(lambda), lambda >= 0.
    pub fn rho(&self, lambda: f64) -> f64 {
        let lambda = lambda.abs();
        if is_half(self.h) {
            return 0.5 * (-lambda).exp();
        }
        if lambda >= LAMBDA_MAX {
            return rho_asymptotic(self.h, lambda);
        }
        if lambda > LAMBDA_SPLIT {
            return self.high.as_ref().unwrap().eval(lambda);
        }
        let r = self.low.as_ref().unwrap().eval(lambda);
        self.rho0 - 0.5 * lambda.powf(2.0 * self.h) + r
    }

    /// g(lambda) = rho0 - rho(lambda), computed without cancellation at 0.
    pub fn g(&self, lambda: f64) -> f64 {
        let lambda = lambda.abs();
        if is_half(self.h) {
            return 0.5 * (1.0 - (-lambda).exp());
        }
        if lambda > LAMBDA_SPLIT {
            return self.rho0 - self.rho(lambda);
        }
        0.5 * lambda.powf(2.0 * self.h) - self.low.as_ref().unwrap().eval(lambda)
    }

    /// v(tau) = E[Y(tau)^2].
    pub fn variance(&self, tau: f64) -> f64 {
        if tau <= 0.0 {
            return 0.0;
        }
        let e = (-tau).exp();
        self.rho0 * (1.0 + e * e) - 2.0 * e * self.rho(tau)
    }

    /// c(tau1, tau2) = E[Y(tau1) Y(tau2)] (symmetric).
    pub fn cross(&self, tau1: f64, tau2: f64) -> f64 {
        if tau1 <= 0.0 || tau2 <= 0.0 {
            return 0.0;
        }
        let e1 = (-tau1).exp();
        let e2 = (-tau2).exp();
        self.rho((tau2 - tau1).abs()) - e1 * self.rho(tau2) - e2 * self.rho(tau1)
            + e1 * e2 * self.rho0
    }

    /// E[(Y(tau2) - Y(tau1))^2], stable for small |tau2 - tau1|.
    pub fn increment(&self, tau1: f64, tau2: f64) -> f64 {
        let (t1, t2) = if tau1 <= tau2 { (tau1, tau2) } else { (tau2, tau1) };
        if t1 < 0.0 {
            return f64::NAN;
        }
        if t1 == 0.0 {
            return self.variance(t2);
        }
        let delta = t2 - t1;
        let e1 = (-t1).exp();
        let e2 = (-t2).exp();
        let de = e1 - e2;
        (2.0 * self.g(delta) + self.rho0 * de * de
            - 2.0 * de * (self.rho(t1) - self.rho(t2)))
        .max(0.0)
    }
}

/// Piecewise cubic Hermite interpolation with Fritsch-Carlson slopes.
struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    fn new(x: Vec<f64>, y: Vec<f64>) -> Pchip {
        let n = x.len();
        assert!(n >= 3);
        let hsteps: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = hsteps
            .iter()
            .enumerate()
            .map(|(i, &hi)| (y[i + 1] - y[i]) / hi)
            .collect();
        let mut d = vec![0.0; n];
        for i in 1..n - 1 {
            let (d0, d1) = (delta[i - 1], delta[i]);
            if d0 * d1 > 0.0 {
                let (h0, h1) = (hsteps[i - 1], hsteps[i]);
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                d[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
        }
        d[0] = edge_slope(hsteps[0], hsteps[1], delta[0], delta[1]);
        d[n - 1] = edge_slope(
            hsteps[n - 2],
            hsteps[n - 3],
            delta[n - 2],
            delta[n - 3],
        );
        Pchip { x, y, d }
    }

    fn eval(&self, xq: f64) -> f64 {
        let n = self.x.len();
        if xq <= self.x[0] {
            return self.y[0];
        }
        if xq >= self.x[n - 1] {
            return self.y[n - 1];
        }
        let i = match self.x.binary_search_by(|v| v.total_cmp(&xq)) {
            Ok(i) => return self.y[i],
            Err(i) => i - 1,
        };
        let h = self.x[i + 1] - self.x[i];
        let t = (xq - self.x[i]) / h;
        let (t2, t3) = (t * t, t * t * t);
        let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        let h10 = t3 - 2.0 * t2 + t;
        let h01 = -2.0 * t3 + 3.0 * t2;
        let h11 = t3 - t2;
        h00 * self.y[i] + h10 * h * self.d[i] + h01 * self.y[i + 1] + h11 * h * self.d[i + 1]
    }
}

fn edge_slope(h0: f64, h1: f64, d0: f64, d1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if d * d0 <= 0.0 {
        0.0
    } else if d0 * d1 < 0.0 && d.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn brownian_closed_forms() {
        let t = FouTable::get(0.5).unwrap();
        assert_relative_eq!(t.rho0, 0.5);
        assert_relative_eq!(t.variance(1.0), 0.5 * (1.0 - (-2.0_f64).exp()));
        assert_relative_eq!(
            t.cross(0.5, 1.0),
            (-0.5_f64).exp() * 0.5 * (1.0 - (-1.0_f64).exp())
        );
        // increment identity v(t1) + v(t2) - 2 c = increment
        let m = t.increment(0.5, 1.0);
        assert_relative_eq!(
            m,
            t.variance(0.5) + t.variance(1.0) - 2.0 * t.cross(0.5, 1.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn stationary_variance_is_gamma_value() {
        // v(tau) -> Gamma(2H+1)/2: check the direct quadrature at tau = 20
        for &h in &[0.3, 0.7] {
            let v = variance_quad(h, 20.0).unwrap();
            assert_relative_eq!(v, rho0(h), max_relative = 1e-5);
        }
    }

    #[test]
    fn table_matches_direct_quadrature() {
        for &h in &[0.3, 0.7] {
            let t = FouTable::get(h).unwrap();
            for &tau in &[0.25, 1.0, 4.0] {
                let direct = variance_quad(h, tau).unwrap();
                assert_relative_eq!(t.variance(tau), direct, max_relative = 2e-5);
            }
            let direct = cross_quad(h, 0.8, 2.5).unwrap();
            assert_relative_eq!(t.cross(0.8, 2.5), direct, max_relative = 2e-4);
        }
    }

    #[test]
    fn rho_checks_against_isometry_route() {
        let h = 0.7;
        let t = FouTable::get(h).unwrap();
        for &lam in &[0.1, 1.0, 5.0, 30.0] {
            let iso = rho_isometry(h, lam).unwrap();
            assert_relative_eq!(t.rho(lam), iso, max_relative = 1e-4);
        }
        // asymptotic branch beyond the table agrees with the isometry integral
        let iso = rho_isometry(h, 80.0).unwrap();
        assert_relative_eq!(t.rho(80.0), iso, max_relative = 1e-6);
    }

    #[test]
    fn increment_quadrature_is_cancellation_free() {
        // tiny increments: table value vs direct combined-integrand quadrature
        for &h in &[0.3, 0.7] {
            let t = FouTable::get(h).unwrap();
            for &delta in &[1e-3, 1e-2, 0.1] {
                let direct = increment_quad(h, 1.0, 1.0 + delta).unwrap();
                let tabled = t.increment(1.0, 1.0 + delta);
                assert_relative_eq!(tabled, direct, max_relative = 2e-3);
                // leading order is delta^{2H}
                assert_relative_eq!(direct, delta.powf(2.0 * h), max_relative = 0.35);
            }
        }
    }

    #[test]
    fn small_lag_increments_scale_like_power_law() {
        let h = 0.3;
        let t = FouTable::get(h).unwrap();
        let r1 = t.increment(1.0, 1.0 + 1e-3) / 1e-3_f64.powf(0.6);
        let r2 = t.increment(1.0, 1.0 + 1e-4) / 1e-4_f64.powf(0.6);
        assert_relative_eq!(r1, r2, max_relative = 0.05);
        assert_relative_eq!(r1, 1.0, max_relative = 0.1);
    }

    #[test]
    fn pchip_reproduces_smooth_function() {
        let xs: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| (x * 0.7).sin()).collect();
        let p = Pchip::new(xs, ys);
        for i in 0..120 {
            let x = 0.02 + i as f64 * 0.04;
            // Fritsch-Carlson flattens slopes at data extrema, costing O(h y'')
            // locally; 2e-3 reflects that, not the quadrature accuracy
            assert!((p.eval(x) - (x * 0.7).sin()).abs() < 2e-3);
        }
    }
}
