//! Hölder exponent estimation: log-log regressions of the squared canonical
//! metric (exact, via the series engine) or of empirical variograms (from
//! simulated replicas) against the lag, plus a modulus-of-continuity
//! statistic for refinement/sharpness probes.

use crate::cov::MetricEngine;
use crate::error::{Error, Result};
use crate::sim::FieldSample;
use crate::spectral::SpectrumModel;
use crate::stats;
use std::f64::consts::PI;
use std::io::Write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Time,
    Space,
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Axis::Time => write!(f, "time"),
            Axis::Space => write!(f, "space"),
        }
    }
}

pub const DEFAULT_TOL: f64 = 0.05;
/// lags per decade-spanning exact fit
const N_LAGS: usize = 12;

#[derive(Debug, Clone)]
pub struct HolderFit {
    pub axis: Axis,
    pub lags: Vec<f64>,
    /// squared-metric (or variogram) value at each lag
    pub values: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// root-mean-square log-log regression residual
    pub residual: f64,
    pub expected: f64,
    pub tol: f64,
    pub verdict: bool,
}

impl HolderFit {
    /// CSV rows: `axis,lag,value,slope,expected,verdict`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "axis,lag,value,slope,expected,verdict")?;
        for (&lag, &v) in self.lags.iter().zip(&self.values) {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                self.axis, lag, v, self.slope, self.expected, self.verdict
            )?;
        }
        Ok(())
    }
}

/// OLS power-law fit of `values` against `lags` in log-log coordinates.
pub fn fit_power_law(
    axis: Axis,
    lags: &[f64],
    values: &[f64],
    expected: f64,
    tol: f64,
) -> Result<HolderFit> {
    let mut distinct: Vec<f64> = lags.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::InvalidParameter(
            "power-law fit needs at least 3 distinct lags".into(),
        ));
    }
    if lags.iter().any(|&l| l <= 0.0) || values.iter().any(|&v| v <= 0.0) {
        return Err(Error::InvalidParameter(
            "power-law fit needs positive lags and values".into(),
        ));
    }
    let lx: Vec<f64> = lags.iter().map(|l| l.ln()).collect();
    let ly: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let fit = stats::fit_line(&lx, &ly);
    let residual = (lx
        .iter()
        .zip(&ly)
        .map(|(&x, &y)| {
            let e = y - fit.intercept - fit.slope * x;
            e * e
        })
        .sum::<f64>()
        / lx.len() as f64)
        .sqrt();
    if !fit.slope.is_finite() {
        return Err(Error::InvalidParameter("degenerate regression".into()));
    }
    Ok(HolderFit {
        axis,
        lags: lags.to_vec(),
        values: values.to_vec(),
        slope: fit.slope,
        intercept: fit.intercept,
        residual,
        expected,
        tol,
        verdict: (fit.slope - expected).abs() <= tol,
    })
}

fn geometric(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let ratio = (hi / lo).powf(1.0 / (n - 1) as f64);
    (0..n).map(|k| lo * ratio.powi(k as i32)).collect()
}

/// Regresses the exact squared metric against the lag. `fixed` is the base
/// time: for the time axis increments run from `fixed` upward (lags capped at
/// `fixed / 2`), for the space axis it is the common observation time.
pub fn fit_holder_exact(
    model: &SpectrumModel,
    axis: Axis,
    lag_range: (f64, f64),
    fixed: f64,
) -> Result<HolderFit> {
    let (lo, hi) = lag_range;
    if !(lo > 0.0 && hi > lo) || fixed <= 0.0 {
        return Err(Error::InvalidParameter("bad lag range or base time".into()));
    }
    if axis == Axis::Time && hi > fixed / 2.0 {
        return Err(Error::InvalidParameter(format!(
            "time lags must stay within the validity window: {hi} > {}/2",
            fixed
        )));
    }
    let engine = MetricEngine::new(model.clone())?;
    let exps = model.exponents()?;
    let (expected, eval): (f64, Box<dyn Fn(f64) -> Result<f64>>) = match axis {
        Axis::Time => (
            exps.alpha.min(2.0 * model.h),
            Box::new(move |lag| Ok(engine.delta_x_sq(fixed, fixed + lag)?.value)),
        ),
        Axis::Space => (
            2.0 * exps.alpha,
            Box::new(move |lag| Ok(engine.delta_t_sq(fixed, lag)?.value)),
        ),
    };
    let lags = geometric(lo, hi, N_LAGS);
    let values = lags.iter().map(|&l| eval(l)).collect::<Result<Vec<f64>>>()?;
    fit_power_law(axis, &lags, &values, expected, DEFAULT_TOL)
}

/// Same regression on empirical second moments of increments pooled over
/// replicas and base points. Lags come from the sample grid; up to N_LAGS
/// roughly geometrically spaced grid lags inside `lag_range` are used.
pub fn fit_holder_empirical(
    model: &SpectrumModel,
    samples: &[FieldSample],
    axis: Axis,
    lag_range: (f64, f64),
) -> Result<HolderFit> {
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    if samples.len() < 1000 {
        eprintln!(
            "fit_holder_empirical: only {} replicas; estimates will be noisy",
            samples.len()
        );
    }
    let (lo, hi) = lag_range;
    let first = &samples[0];
    let nt = first.t_grid.len();
    let nx = first.n_x;
    let exps = model.exponents()?;
    // candidate grid lags and the index pairs realizing them
    let (expected, lag_of_step, max_step): (f64, Box<dyn Fn(usize) -> f64>, usize) = match axis {
        Axis::Time => {
            let t = first.t_grid.clone();
            if nt < 2 {
                return Err(Error::InvalidParameter("time axis needs >= 2 times".into()));
            }
            let dt = t[1] - t[0];
            for w in t.windows(2) {
                if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
                    return Err(Error::InvalidParameter(
                        "empirical time fit needs a uniform time grid".into(),
                    ));
                }
            }
            (
                exps.alpha.min(2.0 * model.h),
                Box::new(move |k| k as f64 * dt),
                nt - 1,
            )
        }
        Axis::Space => {
            let dx = 2.0 * PI / nx as f64;
            (2.0 * exps.alpha, Box::new(move |k| k as f64 * dx), nx / 2)
        }
    };
    // roughly geometric subset of integer steps inside the range
    let mut steps: Vec<usize> = Vec::new();
    let mut k = 1usize;
    while k <= max_step {
        if lag_of_step(k) >= lo && lag_of_step(k) <= hi {
            steps.push(k);
        }
        k = (k + 1).max((k as f64 * 1.5).ceil() as usize);
    }
    if steps.len() < 3 {
        return Err(Error::InvalidParameter(
            "fewer than 3 grid lags inside the requested range".into(),
        ));
    }
    if steps.len() > N_LAGS {
        // thin to N_LAGS, keeping the endpoints
        let mut thinned = Vec::with_capacity(N_LAGS);
        for i in 0..N_LAGS {
            thinned.push(steps[i * (steps.len() - 1) / (N_LAGS - 1)]);
        }
        thinned.dedup();
        steps = thinned;
    }
    let mut lags = Vec::with_capacity(steps.len());
    let mut values = Vec::with_capacity(steps.len());
    for &k in &steps {
        let mut acc = 0.0;
        let mut cnt = 0usize;
        for s in samples {
            match axis {
                Axis::Time => {
                    for j in 0..nt - k {
                        for xk in 0..nx {
                            let d = s.value(0, j + k, xk) - s.value(0, j, xk);
                            acc += d * d;
                            cnt += 1;
                        }
                    }
                }
                Axis::Space => {
                    let j = nt - 1;
                    for xk in 0..nx {
                        let d = s.value(0, j, (xk + k) % nx) - s.value(0, j, xk);
                        acc += d * d;
                        cnt += 1;
                    }
                }
            }
        }
        lags.push(lag_of_step(k));
        values.push(acc / cnt as f64);
    }
    fit_power_law(axis, &lags, &values, expected, DEFAULT_TOL)
}

/// The two halves of the modulus-of-continuity statistic.
#[derive(Debug, Clone, Copy)]
pub struct ModulusStat {
    /// sup over same-time pairs of |du| / (r^alpha sqrt(log(1 + 1/r)))
    pub space: f64,
    /// sup over same-site pairs of |du| / (tau^{(alpha/2) ^ H} sqrt(log(1 + 1/tau)))
    pub time: f64,
}

impl ModulusStat {
    pub fn total(&self) -> f64 {
        self.space + self.time
    }
}

/// Evaluates the modulus statistic of one replica's first component over all
/// grid pairs with lag at most `window`.
pub fn modulus_statistic(sample: &FieldSample, alpha: f64, h: f64, window: f64) -> ModulusStat {
    let nt = sample.t_grid.len();
    let nx = sample.n_x;
    let dx = 2.0 * PI / nx as f64;
    let weight = |lag: f64, exp: f64| lag.powf(exp) * (1.0 + 1.0 / lag).ln().sqrt();
    let mut space = 0.0_f64;
    let max_off = ((window / dx).floor() as usize).min(nx / 2);
    for off in 1..=max_off {
        let w = weight(off as f64 * dx, alpha);
        for j in 0..nt {
            for k in 0..nx {
                let d = (sample.value(0, j, (k + off) % nx) - sample.value(0, j, k)).abs();
                space = space.max(d / w);
            }
        }
    }
    let texp = (0.5 * alpha).min(h);
    let mut time = 0.0_f64;
    for j1 in 0..nt {
        for j2 in j1 + 1..nt {
            let tau = sample.t_grid[j2] - sample.t_grid[j1];
            if tau <= 0.0 || tau > window {
                continue;
            }
            let w = weight(tau, texp);
            for k in 0..nx {
                let d = (sample.value(0, j2, k) - sample.value(0, j1, k)).abs();
                time = time.max(d / w);
            }
        }
    }
    ModulusStat { space, time }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate, ModeSampler, SimConfig};
    use crate::spectral::{SpectrumKind, SpectrumModel};
    use approx::assert_relative_eq;

    #[test]
    fn synthetic_power_law_recovered_exactly() {
        let lags = geometric(1e-3, 1e-1, 12);
        let values: Vec<f64> = lags.iter().map(|r| r.powf(0.8)).collect();
        let fit = fit_power_law(Axis::Space, &lags, &values, 0.8, 0.05).unwrap();
        assert_relative_eq!(fit.slope, 0.8, epsilon = 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(fit.verdict);
        // degenerate input rejected
        assert!(fit_power_law(Axis::Space, &[1.0, 1.0, 1.0], &[1.0; 3], 1.0, 0.1).is_err());
    }

    #[test]
    fn exact_time_slope_white_low_h() {
        let model = SpectrumModel::new(SpectrumKind::White, 0.4).unwrap();
        let fit = fit_holder_exact(&model, Axis::Time, (1e-3, 1e-1), 1.0).unwrap();
        // alpha = 2H - 1/2 = 0.3 < 2H
        assert!(
            (fit.slope - 0.3).abs() <= 0.05,
            "time slope {} (expected 0.3)",
            fit.slope
        );
        assert!(fit.verdict);
    }

    #[test]
    fn exact_space_slope_riesz() {
        let model = SpectrumModel::new(SpectrumKind::Riesz { gamma: 0.5 }, 0.5).unwrap();
        let fit = fit_holder_exact(&model, Axis::Space, (1e-3, 1e-1), 1.0).unwrap();
        // alpha = 2H - gamma/2 = 0.75, space slope 2 alpha = 1.5
        assert!(
            (fit.slope - 1.5).abs() <= 0.05,
            "space slope {} (expected 1.5)",
            fit.slope
        );
        assert!(fit.verdict);
    }

    #[test]
    fn time_exponent_transition_brackets_min_rule() {
        // alpha < 2H side: White H = 0.7 has alpha = 0.9 < 1.4
        let model = SpectrumModel::new(SpectrumKind::White, 0.7).unwrap();
        let fit = fit_holder_exact(&model, Axis::Time, (1e-3, 1e-1), 1.0).unwrap();
        assert!(
            (fit.slope - 0.9).abs() <= 0.05,
            "alpha<2H side slope {}",
            fit.slope
        );
        // alpha > 2H side: PowerLaw alpha = 1.0 with H = 0.3 caps at 2H = 0.6.
        // The correction term scales like tau^{alpha-2H}, so the asymptotic
        // slope needs both a wide exponent separation and small lags.
        let model =
            SpectrumModel::new(SpectrumKind::PowerLaw { alpha: 1.0 }, 0.3).unwrap();
        assert_eq!(model.exponents().unwrap().alpha, 1.0);
        let fit = fit_holder_exact(&model, Axis::Time, (1e-5, 1e-3), 1.0).unwrap();
        assert!(
            (fit.slope - 0.6).abs() <= 0.05,
            "alpha>2H side slope {} (expected 2H = 0.6)",
            fit.slope
        );
    }

    #[test]
    fn time_window_enforced() {
        let model = SpectrumModel::new(SpectrumKind::White, 0.5).unwrap();
        assert!(fit_holder_exact(&model, Axis::Time, (1e-3, 0.6), 1.0).is_err());
    }

    #[test]
    fn empirical_space_slope_matches_exact() {
        let model = SpectrumModel::new(SpectrumKind::White, 0.5).unwrap();
        let cfg = SimConfig {
            model: model.clone(),
            d: 1,
            n_modes: 128,
            t_grid: vec![1.0],
            n_x: 257,
            seed: 7,
            sampler: ModeSampler::ExactGaussian,
        };
        let samples = simulate(&cfg, 2000).unwrap();
        let range = (0.04, 0.4);
        let emp = fit_holder_empirical(&model, &samples, Axis::Space, range).unwrap();
        assert!(
            (emp.slope - 1.0).abs() <= 0.1,
            "empirical space slope {} (expected ~1)",
            emp.slope
        );
        let exact = fit_holder_exact(&model, Axis::Space, range, 1.0).unwrap();
        assert!(
            (emp.slope - exact.slope).abs() <= 0.05,
            "empirical {} vs exact {}",
            emp.slope,
            exact.slope
        );
    }

    #[test]
    fn empirical_time_slope_matches_exact() {
        let model = SpectrumModel::new(SpectrumKind::White, 0.5).unwrap();
        let nt = 17;
        let t_grid: Vec<f64> = (0..nt).map(|j| 1.0 + j as f64 / 16.0).collect();
        let cfg = SimConfig {
            model: model.clone(),
            d: 1,
            n_modes: 128,
            t_grid,
            n_x: 257,
            seed: 8,
            sampler: ModeSampler::ExactGaussian,
        };
        let samples = simulate(&cfg, 2000).unwrap();
        let range = (0.05, 0.5);
        let emp = fit_holder_empirical(&model, &samples, Axis::Time, range).unwrap();
        assert!(
            (emp.slope - 0.5).abs() <= 0.1,
            "empirical time slope {} (expected ~0.5)",
            emp.slope
        );
        let exact = fit_holder_exact(&model, Axis::Time, range, 1.0).unwrap();
        assert!(
            (emp.slope - exact.slope).abs() <= 0.05,
            "empirical {} vs exact {}",
            emp.slope,
            exact.slope
        );
    }

    #[test]
    fn modulus_zero_on_constant_field() {
        let s = FieldSample {
            d: 1,
            t_grid: vec![0.5, 1.0],
            n_x: 8,
            replica: 0,
            seed: 0,
            values: vec![0.0; 16],
        };
        let m = modulus_statistic(&s, 0.5, 0.5, 1.0);
        assert_eq!(m.total(), 0.0);
    }

    #[test]
    fn modulus_stable_under_refinement_at_true_exponent() {
        let model = SpectrumModel::new(SpectrumKind::White, 0.5).unwrap();
        let alpha = model.exponents().unwrap().alpha;
        let t_grid: Vec<f64> = (1..=8).map(|j| 0.5 + j as f64 / 16.0).collect();
        let cfg = SimConfig {
            model,
            d: 1,
            n_modes: 127,
            t_grid,
            n_x: 256,
            seed: 9,
            sampler: ModeSampler::ExactGaussian,
        };
        let samples = simulate(&cfg, 100).unwrap();
        let mut ratios: Vec<f64> = samples
            .iter()
            .map(|s| {
                let fine = modulus_statistic(s, alpha, 0.5, 0.5).total();
                let coarse = modulus_statistic(&s.subsample(2, 4), alpha, 0.5, 0.5).total();
                fine / coarse
            })
            .collect();
        ratios.sort_by(f64::total_cmp);
        let median = ratios[ratios.len() / 2];
        assert!(
            (0.5..=2.0).contains(&median),
            "refinement ratio median {median}"
        );
    }

    #[test]
    fn modulus_diverges_with_inflated_exponent() {
        // the spatial half of the statistic. A wide scale span is needed: the
        // sqrt-log weight soaks up most of the Gaussian-maximum growth, so a
        // 0.2 inflation only nets ~span^0.2 after the log correction.
        let model = SpectrumModel::new(SpectrumKind::White, 0.5).unwrap();
        let alpha = model.exponents().unwrap().alpha;
        let cfg = SimConfig {
            model,
            d: 1,
            n_modes: 8191,
            t_grid: vec![0.5, 1.0],
            n_x: 16384,
            seed: 10,
            sampler: ModeSampler::ExactGaussian,
        };
        let samples = simulate(&cfg, 50).unwrap();
        let ratio_at = |a: f64| -> f64 {
            let mut ratios: Vec<f64> = samples
                .iter()
                .map(|s| {
                    let fine = modulus_statistic(s, a, 0.5, 0.45).space;
                    let coarse = modulus_statistic(&s.subsample(1, 1024), a, 0.5, 0.45).space;
                    fine / coarse
                })
                .collect();
            ratios.sort_by(f64::total_cmp);
            ratios[ratios.len() / 2]
        };
        let inflated = ratio_at(alpha + 0.2);
        let correct = ratio_at(alpha);
        assert!(
            inflated > 2.0,
            "inflated-exponent median ratio {inflated} (correct-exponent {correct})"
        );
        assert!(correct <= 2.0, "true-exponent median ratio {correct}");
    }

    #[test]
    fn holder_csv_shape() {
        let lags = geometric(1e-2, 1e-1, 5);
        let values: Vec<f64> = lags.iter().map(|r| r.powf(1.0)).collect();
        let fit = fit_power_law(Axis::Time, &lags, &values, 1.0, 0.05).unwrap();
        let mut buf = Vec::new();
        fit.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("axis,lag,value,slope,expected,verdict"));
        assert_eq!(text.lines().count(), 6);
        assert!(text.contains("time,"));
    }
}
