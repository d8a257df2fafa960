//! Monte Carlo hitting probabilities of the simulated field against compact
//! targets, with capacity / cover-sum companions, small-ball exponent fits,
//! range box-counting, and the anisotropic parameter-cell partition.

use crate::error::{Error, Result};
use crate::holder::modulus_statistic;
use crate::potential::{
    capacity, hausdorff_estimate, CoverSet, EnergyKernelSpec, PointCloud, SolverOpts,
};
use crate::sim::{simulate, FieldSample, SimConfig};
use crate::stats;
use std::collections::HashSet;
use std::io::Write;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq)]
pub enum TargetShape {
    Ball { center: Vec<f64>, radius: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

/// A compact target inside [-bound, bound]^d, as a finite union of balls and
/// boxes. No shapes means the empty set.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSet {
    pub dim: usize,
    pub shapes: Vec<TargetShape>,
    pub bound: f64,
}

impl TargetSet {
    pub fn empty(dim: usize) -> Self {
        TargetSet {
            dim,
            shapes: Vec::new(),
            bound: 1.0,
        }
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if radius <= 0.0 || center.is_empty() {
            return Err(Error::InvalidParameter("ball needs radius > 0".into()));
        }
        let bound = center.iter().fold(0.0_f64, |m, c| m.max(c.abs())) + radius;
        Ok(TargetSet {
            dim: center.len(),
            shapes: vec![TargetShape::Ball { center, radius }],
            bound,
        })
    }

    pub fn push(&mut self, shape: TargetShape) -> Result<()> {
        let d = match &shape {
            TargetShape::Ball { center, .. } => center.len(),
            TargetShape::Box { lo, hi } => {
                if lo.len() != hi.len() || lo.iter().zip(hi).any(|(l, h)| l >= h) {
                    return Err(Error::InvalidParameter("degenerate box".into()));
                }
                lo.len()
            }
        };
        if d != self.dim {
            return Err(Error::InvalidParameter("shape dimension mismatch".into()));
        }
        let b = match &shape {
            TargetShape::Ball { center, radius } => {
                center.iter().fold(0.0_f64, |m, c| m.max(c.abs())) + radius
            }
            TargetShape::Box { lo, hi } => lo
                .iter()
                .chain(hi)
                .fold(0.0_f64, |m, c| m.max(c.abs())),
        };
        self.bound = self.bound.max(b);
        self.shapes.push(shape);
        Ok(())
    }

    /// Euclidean distance from a point to the set (infinite when empty).
    pub fn distance(&self, p: &[f64]) -> f64 {
        let mut best = f64::INFINITY;
        for shape in &self.shapes {
            let d = match shape {
                TargetShape::Ball { center, radius } => (dist(p, center) - radius).max(0.0),
                TargetShape::Box { lo, hi } => p
                    .iter()
                    .zip(lo.iter().zip(hi))
                    .map(|(&x, (&l, &h))| (l - x).max(x - h).max(0.0).powi(2))
                    .sum::<f64>()
                    .sqrt(),
            };
            best = best.min(d);
        }
        best
    }

    /// The smallest geometric scale of the set: minimum ball radius or half
    /// box side. Infinite for the empty set.
    pub fn feature_size(&self) -> f64 {
        self.shapes
            .iter()
            .map(|s| match s {
                TargetShape::Ball { radius, .. } => *radius,
                TargetShape::Box { lo, hi } => {
                    0.5 * lo
                        .iter()
                        .zip(hi)
                        .map(|(l, h)| h - l)
                        .fold(f64::INFINITY, f64::min)
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// A lattice discretization with at most ~max_points points, tagged with
    /// the lattice spacing as ball-smearing resolution.
    pub fn discretize(&self, max_points: usize) -> Result<PointCloud> {
        if self.shapes.is_empty() {
            return Err(Error::InvalidParameter("cannot discretize the empty set".into()));
        }
        let d = self.dim;
        // per-axis resolution so the bounding lattice stays within budget
        let per_axis = ((max_points as f64).powf(1.0 / d as f64).floor() as usize).max(2);
        let mut points: Vec<Vec<f64>> = Vec::new();
        let step = 2.0 * self.bound / per_axis as f64;
        let mut idx = vec![0usize; d];
        'outer: loop {
            let p: Vec<f64> = idx
                .iter()
                .map(|&i| -self.bound + step * (i as f64 + 0.5))
                .collect();
            if self.distance(&p) <= 0.5 * step * (d as f64).sqrt() {
                points.push(p);
            }
            for k in 0..d {
                idx[k] += 1;
                if idx[k] < per_axis {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
        if points.is_empty() {
            // fall back to shape anchors so tiny targets still discretize
            for s in &self.shapes {
                points.push(match s {
                    TargetShape::Ball { center, .. } => center.clone(),
                    TargetShape::Box { lo, hi } => {
                        lo.iter().zip(hi).map(|(l, h)| 0.5 * (l + h)).collect()
                    }
                });
            }
            points.dedup();
        }
        PointCloud::new(d, points, 0.5 * step)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Grammar: `ball:<c_1>,...,<c_d>:<radius>` or `box:<l_1>,...:<h_1>,...`;
/// multiple shapes join with `+`.
impl FromStr for TargetSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut set: Option<TargetSet> = None;
        for part in s.split('+') {
            let fields: Vec<&str> = part.trim().split(':').collect();
            let parse_vec = |t: &str| -> Result<Vec<f64>> {
                t.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|e| Error::InvalidParameter(format!("bad number {v:?}: {e}")))
                    })
                    .collect()
            };
            let shape = match fields.as_slice() {
                ["ball", c, r] => TargetShape::Ball {
                    center: parse_vec(c)?,
                    radius: r
                        .trim()
                        .parse()
                        .map_err(|e| Error::InvalidParameter(format!("bad radius: {e}")))?,
                },
                ["box", lo, hi] => TargetShape::Box {
                    lo: parse_vec(lo)?,
                    hi: parse_vec(hi)?,
                },
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "target grammar is ball:<center>:<radius> or box:<lo>:<hi>, got {part:?}"
                    )))
                }
            };
            match &mut set {
                None => {
                    let dim = match &shape {
                        TargetShape::Ball { center, .. } => center.len(),
                        TargetShape::Box { lo, .. } => lo.len(),
                    };
                    let mut t = TargetSet::empty(dim);
                    t.push(shape)?;
                    set = Some(t);
                }
                Some(t) => t.push(shape)?,
            }
        }
        set.ok_or_else(|| Error::InvalidParameter("empty target spec".into()))
    }
}

#[derive(Debug, Clone)]
pub struct HitExperiment {
    pub n_replicas: usize,
    /// undilated (grid-exact) hit fraction: a lower bracket
    pub p_hat_lo: f64,
    /// hit fraction against the slack-dilated target: an upper bracket
    pub p_hat_hi: f64,
    /// Wilson 95% interval: lower end from the undilated count, upper end
    /// from the dilated count
    pub ci: (f64, f64),
    pub beta: f64,
    /// median continuity slack used for the dilation
    pub slack: f64,
    /// false when the slack exceeds half the target feature size, making the
    /// dilated bracket loose
    pub resolution_ok: bool,
    pub cap_value: f64,
    pub hausdorff_value: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct HitOpts {
    /// error out (rather than flag) when the dilation slack is too coarse
    /// for the target's feature size
    pub enforce_resolution: bool,
    /// lattice budget for the capacity discretization of the target
    pub max_cloud_points: usize,
}

impl Default for HitOpts {
    fn default() -> Self {
        HitOpts {
            enforce_resolution: true,
            max_cloud_points: 2048,
        }
    }
}

/// Estimates P{u(I x J) hits the target} by counting replicas whose grid
/// values over I x J enter the target (lower bracket) or its dilation by the
/// modulus-based continuity slack (upper bracket). Also evaluates the
/// capacity and cover-sum companions of the sandwich at index d - beta.
pub fn hit_probability_mc(
    config: &SimConfig,
    i: (f64, f64),
    j: (f64, f64),
    target: &TargetSet,
    n_replicas: usize,
    opts: HitOpts,
) -> Result<HitExperiment> {
    if !target.shapes.is_empty() && target.dim != config.d {
        return Err(Error::InvalidParameter("target dimension != field components".into()));
    }
    let exps = config.model.exponents()?;
    let (alpha, h) = (exps.alpha, config.model.h);
    let x_grid = config.x_grid();
    let t_idx: Vec<usize> = (0..config.t_grid.len())
        .filter(|&k| config.t_grid[k] >= i.0 && config.t_grid[k] <= i.1)
        .collect();
    let x_idx: Vec<usize> = (0..config.n_x)
        .filter(|&k| x_grid[k] >= j.0 && x_grid[k] <= j.1)
        .collect();
    if t_idx.is_empty() || x_idx.is_empty() {
        return Err(Error::InvalidParameter("no grid points inside I x J".into()));
    }
    // largest comparison-metric gap between neighbouring observation points
    let dx = 2.0 * std::f64::consts::PI / config.n_x as f64;
    let max_dt = config
        .t_grid
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0, f64::max);
    let max_delta = dx.powf(2.0 * alpha) + max_dt.powf(alpha.min(2.0 * h));
    let window = 4.0 * dx.max(max_dt);
    let samples = simulate(config, n_replicas)?;
    let mut slacks: Vec<f64> = samples
        .iter()
        .map(|s| modulus_statistic(s, alpha, h, window).total() * max_delta.sqrt())
        .collect();
    let mut sorted = slacks.clone();
    sorted.sort_by(f64::total_cmp);
    let slack_med = sorted[sorted.len() / 2];
    let feature = target.feature_size();
    let resolution_ok = slack_med < 0.5 * feature;
    if opts.enforce_resolution && !resolution_ok && !target.shapes.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "continuity slack {slack_med:.3e} exceeds half the target feature size {feature:.3e}"
        )));
    }
    let mut hits_lo = 0u64;
    let mut hits_hi = 0u64;
    let mut point = vec![0.0; config.d];
    for (s, slack) in samples.iter().zip(slacks.drain(..)) {
        let mut hit_lo = false;
        let mut hit_hi = false;
        'grid: for &tj in &t_idx {
            for &xk in &x_idx {
                for (c, p) in point.iter_mut().enumerate() {
                    *p = s.value(c, tj, xk);
                }
                let d = target.distance(&point);
                if d <= slack {
                    hit_hi = true;
                    if d <= 0.0 {
                        hit_lo = true;
                        break 'grid;
                    }
                }
            }
        }
        hits_lo += hit_lo as u64;
        hits_hi += hit_hi as u64;
    }
    let (ci_lo, _) = stats::wilson_interval(hits_lo, n_replicas as u64, 1.96);
    let (_, ci_hi) = stats::wilson_interval(hits_hi, n_replicas as u64, 1.96);
    // capacity / cover-sum companions at index d - beta
    let cap_index = config.d as f64 - exps.beta;
    let (cap_value, hausdorff_value) = if target.shapes.is_empty() {
        (0.0, 0.0)
    } else if cap_index < 0.0 {
        (1.0, f64::INFINITY)
    } else {
        let cloud = target.discretize(opts.max_cloud_points)?;
        let spec = EnergyKernelSpec {
            beta: cap_index,
            n0: std::f64::consts::E * (2.0 * target.bound).max(1.0),
        };
        let cap = capacity(&cloud, spec, SolverOpts::default())?.cap;
        let eps: Vec<f64> = (0..6).map(|k| feature * 0.7_f64.powi(k)).collect();
        let sums = hausdorff_estimate(&CoverSet::Cloud(cloud), cap_index, &eps)?;
        (cap, *sums.last().unwrap())
    };
    Ok(HitExperiment {
        n_replicas,
        p_hat_lo: hits_lo as f64 / n_replicas as f64,
        p_hat_hi: hits_hi as f64 / n_replicas as f64,
        ci: (ci_lo, ci_hi),
        beta: exps.beta,
        slack: slack_med,
        resolution_ok,
        cap_value,
        hausdorff_value,
    })
}

/// One row per experiment: `target_id,eps,p_hat_lo,p_hat_hi,ci_lo,ci_hi,cap,hausdorff_sum`.
pub fn write_hit_csv<W: Write>(
    mut w: W,
    rows: &[(String, f64, &HitExperiment)],
) -> Result<()> {
    writeln!(w, "target_id,eps,p_hat_lo,p_hat_hi,ci_lo,ci_hi,cap,hausdorff_sum")?;
    for (id, eps, e) in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            id, eps, e.p_hat_lo, e.p_hat_hi, e.ci.0, e.ci.1, e.cap_value, e.hausdorff_value
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct SmallBallFit {
    pub radii: Vec<f64>,
    pub p_hats: Vec<f64>,
    /// true where the radius was dropped from the fit: no hits (censored)
    /// or saturated
    pub excluded: Vec<bool>,
    pub slope: f64,
    pub slope_se: f64,
    pub expected: f64,
}

/// Saturation threshold: radii with hit fraction above this are outside the
/// small-ball regime and excluded from the fit.
const SATURATION: f64 = 0.5;

/// Hit probability of balls B(z, eps) over one parameter cell I x J, with a
/// log-log exponent fit against the component count d. Radii share one
/// simulation (coupled), so p_hat is surely nondecreasing in eps.
pub fn small_ball_curve(
    config: &SimConfig,
    i: (f64, f64),
    j: (f64, f64),
    z: &[f64],
    radii: &[f64],
) -> Result<SmallBallFit> {
    if z.len() != config.d {
        return Err(Error::InvalidParameter("center dimension != components".into()));
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) || radii.is_empty() {
        return Err(Error::InvalidParameter(
            "radii must be strictly decreasing".into(),
        ));
    }
    let x_grid = config.x_grid();
    let t_idx: Vec<usize> = (0..config.t_grid.len())
        .filter(|&k| config.t_grid[k] >= i.0 && config.t_grid[k] <= i.1)
        .collect();
    let x_idx: Vec<usize> = (0..config.n_x)
        .filter(|&k| x_grid[k] >= j.0 && x_grid[k] <= j.1)
        .collect();
    if t_idx.is_empty() || x_idx.is_empty() {
        return Err(Error::InvalidParameter("no grid points inside the cell".into()));
    }
    let samples = simulate(config, config_replicas(config))?;
    let n_rep = samples.len();
    let mut counts = vec![0u64; radii.len()];
    let mut point = vec![0.0; config.d];
    for s in &samples {
        // minimum distance to z over the cell decides every radius at once
        let mut dmin = f64::INFINITY;
        for &tj in &t_idx {
            for &xk in &x_idx {
                for (c, p) in point.iter_mut().enumerate() {
                    *p = s.value(c, tj, xk);
                }
                dmin = dmin.min(dist(&point, z));
            }
        }
        for (m, &r) in radii.iter().enumerate() {
            counts[m] += (dmin <= r) as u64;
        }
    }
    let p_hats: Vec<f64> = counts.iter().map(|&c| c as f64 / n_rep as f64).collect();
    let excluded: Vec<bool> = p_hats
        .iter()
        .map(|&p| p == 0.0 || p > SATURATION)
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = radii
        .iter()
        .zip(&p_hats)
        .zip(&excluded)
        .filter(|(_, &ex)| !ex)
        .map(|((&r, &p), _)| (r.ln(), p.ln()))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "only {} usable radii after censoring/saturation",
            xs.len()
        )));
    }
    let fit = stats::fit_line(&xs, &ys);
    Ok(SmallBallFit {
        radii: radii.to_vec(),
        p_hats,
        excluded,
        slope: fit.slope,
        slope_se: fit.slope_se,
        expected: config.d as f64,
    })
}

/// Replica count carried through SimConfig-scale experiments; kept moderate
/// so smallest-radius bins still see hits at desk scale.
fn config_replicas(_config: &SimConfig) -> usize {
    20_000
}

/// Box-counting dimension of the pooled range points of the samples, over
/// `n_scales` dyadic scales (at least 3).
pub fn range_dimension_estimate(samples: &[FieldSample], n_scales: usize) -> Result<f64> {
    if n_scales < 3 {
        return Err(Error::InvalidParameter("need at least 3 dyadic scales".into()));
    }
    if samples.is_empty() {
        return Err(Error::InvalidParameter("no samples".into()));
    }
    let d = samples[0].d;
    let mut points: Vec<Vec<f64>> = Vec::new();
    for s in samples {
        let nt = s.t_grid.len();
        for j in 0..nt {
            for k in 0..s.n_x {
                points.push((0..d).map(|c| s.value(c, j, k)).collect());
            }
        }
    }
    let mut spread = 0.0_f64;
    for c in 0..d {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &points {
            lo = lo.min(p[c]);
            hi = hi.max(p[c]);
        }
        spread = spread.max(hi - lo);
    }
    if spread == 0.0 {
        return Ok(0.0); // a single point occupies one box at every scale
    }
    let eps0 = spread / 4.0;
    let mut log_counts = Vec::with_capacity(n_scales);
    for k in 0..n_scales {
        let eps = eps0 / (1 << k) as f64;
        let mut boxes: HashSet<Vec<i64>> = HashSet::new();
        for p in &points {
            boxes.insert(p.iter().map(|&x| (x / eps).floor() as i64).collect());
        }
        log_counts.push((boxes.len() as f64).ln());
    }
    let xs: Vec<f64> = (0..n_scales)
        .map(|k| (1.0 / (eps0 / (1 << k) as f64)).ln())
        .collect();
    Ok(stats::fit_line(&xs, &log_counts).slope)
}

/// One anisotropic parameter cell of the dyadic partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub t: (f64, f64),
    pub x: (f64, f64),
}

/// The level-n anisotropic cells intersecting I x J: time step 2^{-n/alpha},
/// space step 2^{-((2n/alpha) v (n/H))}, so the count per unit rectangle is
/// 2^{beta n}.
pub fn cell_partition(i: (f64, f64), j: (f64, f64), n: u32, alpha: f64, h: f64) -> Vec<Cell> {
    if i.1 <= i.0 || j.1 <= j.0 {
        return Vec::new();
    }
    let nf = n as f64;
    let t_step = (-nf / alpha).exp2();
    let x_step = (-(2.0 * nf / alpha).max(nf / h)).exp2();
    let k0 = (i.0 / t_step).floor() as i64;
    let k1 = (i.1 / t_step).ceil() as i64;
    let l0 = (j.0 / x_step).floor() as i64;
    let l1 = (j.1 / x_step).ceil() as i64;
    let mut cells = Vec::with_capacity(((k1 - k0) * (l1 - l0)) as usize);
    for k in k0..k1 {
        for l in l0..l1 {
            cells.push(Cell {
                t: (k as f64 * t_step, (k + 1) as f64 * t_step),
                x: (l as f64 * x_step, (l + 1) as f64 * x_step),
            });
        }
    }
    cells
}
