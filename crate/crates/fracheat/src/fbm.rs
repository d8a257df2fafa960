//! Fractional Brownian motion machinery: covariance, the Volterra kernel
//! K^H and its t-derivative, the transfer operator K*, and exact-in-law path
//! sampling by circulant embedding with a Cholesky fallback.
//!
//! All kernel formulas are normalized so that B^H(t) = int_0^t K^H(t,s) W(ds)
//! has variance t^{2H}; the constant c_H is fixed numerically from that
//! identity at t = 1.

use crate::error::{Error, Result};
use crate::quad::{self, QuadOpts};
use crate::rng::{substream, StreamId};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Covariance of standard fBm: (t^{2H} + s^{2H} - |t-s|^{2H}) / 2.
pub fn fbm_covariance(h: f64, t: f64, s: f64) -> f64 {
    0.5 * (t.powf(2.0 * h) + s.powf(2.0 * h) - (t - s).abs().powf(2.0 * h))
}

/// Autocovariance of fractional Gaussian noise increments on step `dt`:
/// E[(B(t+dt)-B(t))(B(t+(k+1)dt)-B(t+k dt))].
pub fn fgn_autocov(h: f64, dt: f64, k: usize) -> f64 {
    let k = k as f64;
    let two_h = 2.0 * h;
    0.5 * dt.powf(two_h)
        * ((k + 1.0).powf(two_h) - 2.0 * k.powf(two_h) + (k - 1.0).abs().powf(two_h))
}

fn inner_opts() -> QuadOpts {
    QuadOpts {
        abs_tol: 1e-11,
        rel_tol: 1e-10,
        max_intervals: 600,
    }
}

/// K^H(t,s) with c_H = 1, for 0 < s < t. Two equivalent representations are
/// used depending on the side of 1/2:
///   H > 1/2: (H-1/2) s^{1/2-H} int_s^t (u-s)^{H-3/2} u^{H-1/2} du
///   H < 1/2: (t/s)^{H-1/2} (t-s)^{H-1/2}
///            - (H-1/2) s^{1/2-H} int_s^t u^{H-3/2} (u-s)^{H-1/2} du
/// Both integrate the closed-form kernel derivative, so they are consistent
/// with `kernel_dk` by construction.
fn kernel_k_unit(h: f64, t: f64, s: f64) -> f64 {
    if h == 0.5 {
        return 1.0;
    }
    let opts = inner_opts();
    if h > 0.5 {
        let r = quad::integrate_power_lower(
            |u: f64, y: f64| y.powf(h - 1.5) * u.powf(h - 0.5),
            s,
            t,
            h - 1.5,
            opts,
        );
        (h - 0.5) * s.powf(0.5 - h) * r.value
    } else {
        let r = quad::integrate_power_lower(
            |u: f64, y: f64| u.powf(h - 1.5) * y.powf(h - 0.5),
            s,
            t,
            h - 0.5,
            opts,
        );
        (t / s).powf(h - 0.5) * (t - s).powf(h - 0.5) - (h - 0.5) * s.powf(0.5 - h) * r.value
    }
}

/// Normalization constant c_H, fixed by int_0^1 K^H(1,s)^2 ds = 1 and cached.
pub fn c_h(h: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    if let Some(&v) = cache.lock().unwrap().get(&h.to_bits()) {
        return v;
    }
    let value = if h == 0.5 {
        1.0
    } else {
        let pa = -(2.0 * h - 1.0).abs();
        let pb = (2.0 * h - 1.0).min(0.0);
        let j = quad::integrate_endpoint_powers(
            |s: f64, _| kernel_k_unit(h, 1.0, s).powi(2),
            0.0,
            1.0,
            pa,
            pb,
            QuadOpts {
                abs_tol: 1e-10,
                rel_tol: 1e-9,
                max_intervals: 800,
            },
        );
        1.0 / j.value.sqrt()
    };
    cache.lock().unwrap().insert(h.to_bits(), value);
    value
}

/// The Volterra kernel K^H(t,s), 0 < s < t.
pub fn kernel_k(h: f64, t: f64, s: f64) -> Result<f64> {
    check_st(t, s)?;
    Ok(c_h(h) * kernel_k_unit(h, t, s))
}

/// Closed-form derivative dK^H/dt (t,s) = c_H (H-1/2) (t-s)^{H-3/2} (s/t)^{1/2-H}.
pub fn kernel_dk(h: f64, t: f64, s: f64) -> Result<f64> {
    check_st(t, s)?;
    Ok(c_h(h) * (h - 0.5) * (t - s).powf(h - 1.5) * (s / t).powf(0.5 - h))
}

fn check_st(t: f64, s: f64) -> Result<()> {
    if !(s > 0.0 && s < t) {
        return Err(Error::InvalidParameter(format!(
            "kernel requires 0 < s < t, got s={s}, t={t}"
        )));
    }
    Ok(())
}

/// The transfer operator applied to a deterministic integrand:
///   (K*_t phi)(s) = K^H(t,s) phi(s) + int_s^t (phi(u) - phi(s)) dK/du (u,s) du.
/// For H > 1/2 the equivalent simpler form int_s^t phi(u) dK/du (u,s) du is
/// used (the kernel vanishes on the diagonal there).
pub fn kstar_apply(h: f64, phi: &dyn Fn(f64) -> f64, t: f64, s: f64, opts: QuadOpts) -> Result<f64> {
    check_st(t, s)?;
    if h == 0.5 {
        return Ok(phi(s));
    }
    let ch = c_h(h);
    // y is the exact offset u - s supplied by the quadrature transform
    let dk = move |u: f64, y: f64| ch * (h - 0.5) * y.powf(h - 1.5) * (s / u).powf(0.5 - h);
    if h > 0.5 {
        let r = quad::integrate_power_lower(|u: f64, y: f64| phi(u) * dk(u, y), s, t, h - 1.5, opts);
        if !r.converged {
            return Err(Error::QuadNonConvergence {
                value: r.value,
                residual: r.abs_err,
            });
        }
        Ok(r.value)
    } else {
        let ps = phi(s);
        let r =
            quad::integrate_power_lower(|u: f64, y: f64| (phi(u) - ps) * dk(u, y), s, t, h - 0.5, opts);
        if !r.converged {
            return Err(Error::QuadNonConvergence {
                value: r.value,
                residual: r.abs_err,
            });
        }
        Ok(kernel_k(h, t, s)? * ps + r.value)
    }
}

/// int_0^t (K*_t phi)(s)^2 ds: the second moment of int_0^t phi dB^H for a
/// deterministic Holder integrand phi with phi(0) finite.
pub fn kstar_norm_sq(h: f64, phi: &dyn Fn(f64) -> f64, t: f64, opts: QuadOpts) -> Result<f64> {
    if h == 0.5 {
        let r = quad::integrate(|s: f64| phi(s).powi(2), 0.0, t, opts);
        return Ok(r.value);
    }
    let inner = QuadOpts {
        abs_tol: opts.abs_tol * 0.1,
        ..inner_opts()
    };
    let pa = -(2.0 * h - 1.0).abs();
    let pb = (2.0 * h - 1.0).min(0.0);
    let r = quad::integrate_endpoint_powers(
        |s: f64, _| kstar_apply(h, phi, t, s, inner).map_or(f64::NAN, |v| v * v),
        0.0,
        t,
        pa,
        pb,
        opts,
    );
    if !r.value.is_finite() {
        return Err(Error::QuadNonConvergence {
            value: r.value,
            residual: f64::INFINITY,
        });
    }
    Ok(r.value)
}

/// A single sampled fBm trajectory.
#[derive(Debug, Clone)]
pub struct FbmPath {
    pub h: f64,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub seed: u64,
}

impl FbmPath {
    /// CSV export: `t,value` with a header row.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "t,value")?;
        for (t, v) in self.grid.iter().zip(&self.values) {
            writeln!(w, "{t},{v}")?;
        }
        Ok(())
    }
}

/// Exact-in-distribution fBm sampler on the uniform grid 0, dt, ..., n*dt.
/// Circulant embedding of the increment (fGn) covariance when the embedding
/// is nonnegative and the grid is large; dense Cholesky otherwise.
pub fn sample_fbm(h: f64, dt: f64, n_steps: usize, n_paths: usize, seed: u64) -> Result<Vec<FbmPath>> {
    if !(h > 0.0 && h < 1.0) || dt <= 0.0 || n_steps == 0 {
        return Err(Error::InvalidParameter(
            "sample_fbm needs H in (0,1), dt > 0, n_steps >= 1".into(),
        ));
    }
    let grid: Vec<f64> = (0..=n_steps).map(|i| i as f64 * dt).collect();
    let engine = if n_steps < 64 {
        FgnEngine::cholesky_uniform(h, dt, n_steps)?
    } else {
        match FgnEngine::circulant(h, dt, n_steps) {
            Some(e) => e,
            // embedding produced negative eigenvalues beyond tolerance
            None => FgnEngine::cholesky_uniform(h, dt, n_steps)?,
        }
    };
    let mut paths = Vec::with_capacity(n_paths);
    let mut pair = 0u32;
    while paths.len() < n_paths {
        let rng = substream(
            seed,
            StreamId {
                replica: pair,
                component: 0,
                mode: 0,
                phase: 0,
            },
        );
        let (a, b) = engine.sample_pair(rng);
        for incr in [a, b] {
            if paths.len() == n_paths {
                break;
            }
            let mut values = Vec::with_capacity(n_steps + 1);
            values.push(0.0);
            let mut acc = 0.0;
            for &d in &incr {
                acc += d;
                values.push(acc);
            }
            paths.push(FbmPath {
                h,
                grid: grid.clone(),
                values,
                seed,
            });
        }
        pair += 1;
    }
    Ok(paths)
}

/// Exact sampler on an arbitrary increasing grid (Cholesky of the path
/// covariance itself).
pub fn sample_fbm_on(h: f64, grid: &[f64], n_paths: usize, seed: u64) -> Result<Vec<FbmPath>> {
    if grid.is_empty() || grid[0] != 0.0 || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter(
            "grid must start at 0 and be strictly increasing".into(),
        ));
    }
    let m = grid.len() - 1;
    let cov = DMatrix::from_fn(m, m, |i, j| fbm_covariance(h, grid[i + 1], grid[j + 1]));
    let chol = cholesky_with_jitter(cov)?;
    let mut paths = Vec::with_capacity(n_paths);
    for p in 0..n_paths {
        let mut rng = substream(
            seed,
            StreamId {
                replica: p as u32,
                component: 0,
                mode: 0,
                phase: 1,
            },
        );
        let z = DMatrix::from_fn(m, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
        let v = &chol * z;
        let mut values = Vec::with_capacity(m + 1);
        values.push(0.0);
        values.extend(v.iter().copied());
        paths.push(FbmPath {
            h,
            grid: grid.to_vec(),
            values,
            seed,
        });
    }
    Ok(paths)
}

pub(crate) fn cholesky_with_jitter(mut cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = cov.nrows();
    let scale = (0..n).map(|i| cov[(i, i)]).fold(0.0_f64, f64::max);
    let mut jitter = 0.0;
    for _ in 0..3 {
        if let Some(c) = cov.clone().cholesky() {
            return Ok(c.l());
        }
        let add = if jitter == 0.0 { 1e-14 * scale } else { jitter * 10.0 };
        for i in 0..n {
            cov[(i, i)] += add - jitter;
        }
        jitter = add;
        if jitter > 1e-10 * scale {
            break;
        }
    }
    Err(Error::NotPositiveDefinite(format!(
        "cholesky failed after jitter {jitter:.2e} (matrix {n}x{n})"
    )))
}

/// Stationary fGn sampler over a fixed uniform grid.
pub(crate) enum FgnEngine {
    Circulant {
        /// sqrt(lambda_j / (2M)) factors of the embedding
        scale: Vec<f64>,
        n_steps: usize,
    },
    Cholesky {
        l: DMatrix<f64>,
    },
}

impl FgnEngine {
    pub(crate) fn circulant(h: f64, dt: f64, n_steps: usize) -> Option<FgnEngine> {
        let m = n_steps;
        let len = 2 * m;
        let mut first_row = vec![0.0; len];
        for (k, slot) in first_row.iter_mut().enumerate().take(m + 1) {
            *slot = fgn_autocov(h, dt, k);
        }
        for k in m + 1..len {
            first_row[k] = first_row[len - k];
        }
        let mut buf: Vec<Complex<f64>> = first_row.iter().map(|&x| Complex::new(x, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(len).process(&mut buf);
        let lam_max = buf.iter().map(|c| c.re).fold(0.0_f64, f64::max);
        let mut scale = Vec::with_capacity(len);
        for c in &buf {
            if c.re < -1e-9 * lam_max {
                return None;
            }
            scale.push((c.re.max(0.0) / len as f64).sqrt());
        }
        Some(FgnEngine::Circulant { scale, n_steps })
    }

    pub(crate) fn cholesky_uniform(h: f64, dt: f64, n_steps: usize) -> Result<FgnEngine> {
        let cov = DMatrix::from_fn(n_steps, n_steps, |i, j| {
            fgn_autocov(h, dt, i.abs_diff(j))
        });
        Ok(FgnEngine::Cholesky {
            l: cholesky_with_jitter(cov)?,
        })
    }

    /// Two independent fGn vectors from one RNG stream.
    pub(crate) fn sample_pair(&self, mut rng: impl Rng) -> (Vec<f64>, Vec<f64>) {
        match self {
            FgnEngine::Circulant { scale, n_steps } => {
                let len = scale.len();
                let mut buf: Vec<Complex<f64>> = (0..len)
                    .map(|j| {
                        let u: f64 = rng.sample(StandardNormal);
                        let v: f64 = rng.sample(StandardNormal);
                        Complex::new(u * scale[j], v * scale[j])
                    })
                    .collect();
                FftPlanner::new().plan_fft_forward(len).process(&mut buf);
                let a = buf.iter().take(*n_steps).map(|c| c.re).collect();
                let b = buf.iter().take(*n_steps).map(|c| c.im).collect();
                (a, b)
            }
            FgnEngine::Cholesky { l } => {
                let n = l.nrows();
                let mut draw = || {
                    let z = DMatrix::from_fn(n, 1, |_, _| rng.sample::<f64, _>(StandardNormal));
                    (l * z).iter().copied().collect::<Vec<f64>>()
                };
                let a = draw();
                let b = draw();
                (a, b)
            }
        }
    }
}
