//! Computational potential theory on finite point clouds: the hitting-kernel
//! family K_beta, discrete-measure energies with ball-smeared diagonals,
//! capacity by Frank-Wolfe minimization of the energy quadratic form, greedy
//! and lattice cover estimates of Hausdorff measure, and the two-dimensional
//! reduction of the comparison integral behind the hitting bounds.

use crate::error::{Error, Result};
use crate::quad::{self, QuadOpts};
use crate::rng::scalar_stream;
use rand::Rng;
use statrs::function::beta::beta_reg;
use std::io::Write;

/// A finite set of distinct points in R^d; `h` is an optional resolution
/// (each point stands for a closed ball of radius h).
#[derive(Debug, Clone)]
pub struct PointCloud {
    pub dim: usize,
    pub points: Vec<Vec<f64>>,
    pub h: f64,
}

impl PointCloud {
    pub fn new(dim: usize, points: Vec<Vec<f64>>, h: f64) -> Result<Self> {
        if dim == 0 || points.iter().any(|p| p.len() != dim) {
            return Err(Error::InvalidParameter("inconsistent point dimensions".into()));
        }
        if h < 0.0 {
            return Err(Error::InvalidParameter("resolution h must be >= 0".into()));
        }
        for i in 0..points.len() {
            for j in i + 1..points.len() {
                if dist(&points[i], &points[j]) == 0.0 {
                    return Err(Error::InvalidParameter("points must be distinct".into()));
                }
            }
        }
        Ok(PointCloud { dim, points, h })
    }

    /// Uniform n-point discretization of [0, len] on the line.
    pub fn segment(n: usize, len: f64, h: f64) -> Self {
        let points = (0..n)
            .map(|i| vec![len * i as f64 / (n - 1).max(1) as f64])
            .collect();
        PointCloud { dim: 1, points, h }
    }

    /// Reads `x_1,...,x_d` rows.
    pub fn read_csv<R: std::io::BufRead>(reader: R, dim: usize, h: f64) -> Result<Self> {
        let mut points = Vec::new();
        for line in reader.lines() {
            let line = line?;
            let t = line.trim();
            if t.is_empty() {
                continue;
            }
            let row: Vec<f64> = t
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidParameter(format!("bad point row {t:?}: {e}")))?;
            points.push(row);
        }
        PointCloud::new(dim, points, h)
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    pub support: PointCloud,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: PointCloud, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != support.points.len() {
            return Err(Error::InvalidParameter("weight count mismatch".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidParameter("weights must be nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "weights must sum to 1, got {total}"
            )));
        }
        Ok(DiscreteMeasure { support, weights })
    }

    pub fn uniform(support: PointCloud) -> Self {
        let n = support.points.len();
        DiscreteMeasure {
            support,
            weights: vec![1.0 / n as f64; n],
        }
    }
}

/// Parameters of the kernel K_beta; `n0` is the constant inside the log
/// kernel at beta = 0 and must exceed the diameter of any admissible set.
#[derive(Debug, Clone, Copy)]
pub struct EnergyKernelSpec {
    pub beta: f64,
    pub n0: f64,
}

/// K_beta(r) = r^{-beta} for beta > 0, log(N_0/r) for beta = 0, 1 for
/// beta < 0. r = 0 with beta >= 0 yields the infinity sentinel.
pub fn k_beta(spec: EnergyKernelSpec, r: f64) -> f64 {
    if spec.beta < 0.0 {
        return 1.0;
    }
    if r == 0.0 {
        return f64::INFINITY;
    }
    if spec.beta == 0.0 {
        (spec.n0 / r).ln()
    } else {
        r.powf(-spec.beta)
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Density of the distance between two independent uniform points in a
/// d-ball of radius h, evaluated at w in [0, 2h]:
///   f(w) = d w^{d-1} / h^d * I_{1 - w^2/(4h^2)}((d+1)/2, 1/2).
fn ball_pair_distance_density(d: usize, h: f64, w: f64) -> f64 {
    let x = (1.0 - w * w / (4.0 * h * h)).clamp(0.0, 1.0);
    d as f64 * w.powi(d as i32 - 1) / h.powi(d as i32)
        * beta_reg((d as f64 + 1.0) / 2.0, 0.5, x)
}

/// Mean kernel between two independent uniform points in a ball of radius h:
/// the regularized diagonal of the energy matrix. Infinite when beta >= d.
fn smeared_self_kernel(spec: EnergyKernelSpec, d: usize, h: f64) -> f64 {
    if spec.beta < 0.0 {
        return 1.0;
    }
    if spec.beta >= d as f64 {
        return f64::INFINITY;
    }
    // integrand ~ w^{d-1-beta} near 0, integrable since beta < d
    let p = (d as f64 - 1.0 - spec.beta).min(0.0);
    let r = quad::integrate_power_lower(
        |w, _| k_beta(spec, w) * ball_pair_distance_density(d, h, w),
        0.0,
        2.0 * h,
        p,
        QuadOpts::with_tol(1e-12),
    );
    r.value
}

/// The kernel matrix of a cloud: plain K_beta at pairwise distances off the
/// diagonal, the ball-smeared self-kernel on it. Entries may be infinite.
fn kernel_matrix(cloud: &PointCloud, spec: EnergyKernelSpec) -> Vec<Vec<f64>> {
    let n = cloud.points.len();
    let diag = if cloud.h > 0.0 {
        smeared_self_kernel(spec, cloud.dim, cloud.h)
    } else {
        k_beta(spec, 0.0)
    };
    let mut k = vec![vec![0.0; n]; n];
    for i in 0..n {
        k[i][i] = diag;
        for j in i + 1..n {
            let v = k_beta(spec, dist(&cloud.points[i], &cloud.points[j]));
            k[i][j] = v;
            k[j][i] = v;
        }
    }
    k
}

/// The beta-dimensional energy of a discrete measure. Infinity is a valid
/// outcome (any positive-weight atom with beta >= 0 and h = 0, or a smeared
/// diagonal with beta >= d).
pub fn energy(mu: &DiscreteMeasure, spec: EnergyKernelSpec) -> f64 {
    let k = kernel_matrix(&mu.support, spec);
    let mut e = 0.0;
    for (i, &wi) in mu.weights.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        for (j, &wj) in mu.weights.iter().enumerate() {
            if wj == 0.0 {
                continue;
            }
            if k[i][j].is_infinite() {
                return f64::INFINITY;
            }
            e += wi * wj * k[i][j];
        }
    }
    e
}

#[derive(Debug, Clone, Copy)]
pub struct SolverOpts {
    /// Frank-Wolfe duality gap at which to stop
    pub gap_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverOpts {
    fn default() -> Self {
        SolverOpts {
            gap_tol: 1e-8,
            max_iters: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CapacityResult {
    pub cap: f64,
    pub energy: f64,
    pub minimizer: DiscreteMeasure,
    pub iterations: usize,
    pub gap: f64,
}

/// Capacity of a finite cloud: 1 / inf energy over probability measures on
/// it, minimized by Frank-Wolfe with away steps and exact line search.
/// Ties in the linear subproblem break to the lowest index, making the
/// iteration deterministic.
pub fn capacity(
    cloud: &PointCloud,
    spec: EnergyKernelSpec,
    opts: SolverOpts,
) -> Result<CapacityResult> {
    let n = cloud.points.len();
    if n == 0 {
        return Err(Error::InvalidParameter("empty cloud".into()));
    }
    if spec.beta < 0.0 {
        // kernel identically 1: every probability measure has energy 1
        return Ok(CapacityResult {
            cap: 1.0,
            energy: 1.0,
            minimizer: DiscreteMeasure::uniform(cloud.clone()),
            iterations: 0,
            gap: 0.0,
        });
    }
    let k = kernel_matrix(cloud, spec);
    if k[0][0].is_infinite() {
        // every measure charges some atom, whose self-energy is infinite
        return Ok(CapacityResult {
            cap: 0.0,
            energy: f64::INFINITY,
            minimizer: DiscreteMeasure::uniform(cloud.clone()),
            iterations: 0,
            gap: 0.0,
        });
    }
    let mut w = vec![1.0 / n as f64; n];
    let kw = |w: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| (0..n).map(|j| k[i][j] * w[j]).sum())
            .collect()
    };
    let mut g = kw(&w); // K w; gradient is 2 K w
    let mut e: f64 = w.iter().zip(&g).map(|(wi, gi)| wi * gi).sum();
    let mut iters = 0usize;
    let mut gap = f64::INFINITY;
    while iters < opts.max_iters {
        // linear minimizer / maximizer of the gradient over the simplex
        let mut s = 0usize;
        let mut a = usize::MAX;
        for i in 0..n {
            if g[i] < g[s] {
                s = i;
            }
            if w[i] > 0.0 && (a == usize::MAX || g[i] > g[a]) {
                a = i;
            }
        }
        let gw: f64 = w.iter().zip(&g).map(|(wi, gi)| wi * gi).sum();
        gap = 2.0 * (gw - g[s]);
        if gap <= opts.gap_tol {
            break;
        }
        // choose the better-aligned of the FW and away directions
        let fw_align = gw - g[s];
        let away_align = g[a] - gw;
        // curvature and step for direction d: either e_s - w (FW) or w - e_a
        // (away, capped so w_a stays nonnegative)
        let (towards, idx, gamma_max, align) = if fw_align >= away_align {
            (true, s, 1.0, fw_align)
        } else {
            (false, a, w[a] / (1.0 - w[a]).max(1e-300), away_align)
        };
        // d^T K d for d = sign (e_idx - w)
        let ks: f64 = (0..n).map(|j| k[idx][j] * w[j]).sum();
        let curv = k[idx][idx] - 2.0 * ks + e;
        let gamma = if curv > 0.0 {
            (align / curv).min(gamma_max)
        } else {
            gamma_max
        };
        // w <- w + gamma * sign (e_idx - w); update e exactly for a quadratic
        let sign = if towards { 1.0 } else { -1.0 };
        e += 2.0 * sign * gamma * (ks - e) + gamma * gamma * curv;
        for wi in w.iter_mut() {
            *wi *= 1.0 - sign * gamma;
        }
        w[idx] += sign * gamma;
        if !towards && w[idx] < 1e-15 {
            w[idx] = 0.0; // drop-step cleanup
        }
        g = kw(&w);
        iters += 1;
    }
    if gap > opts.gap_tol {
        return Err(Error::OptimizerStalled { gap, iters });
    }
    let e_final: f64 = w.iter().zip(&g).map(|(wi, gi)| wi * gi).sum();
    Ok(CapacityResult {
        cap: 1.0 / e_final,
        energy: e_final,
        minimizer: DiscreteMeasure::new(cloud.clone(), normalize(&w))?,
        iterations: iters,
        gap,
    })
}

fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|&x| x / s).collect()
}

impl CapacityResult {
    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        let out = serde_json::json!({
            "cap": self.cap,
            "energy": self.energy,
            "iterations": self.iterations,
            "gap": self.gap,
            "weights": self.minimizer.weights,
        });
        serde_json::to_writer_pretty(&mut w, &out)
            .map_err(|e| Error::Io(std::io::Error::other(e)))?;
        Ok(())
    }
}

/// Sets accepted by the cover estimator: finite clouds or axis-aligned boxes.
#[derive(Debug, Clone)]
pub enum CoverSet {
    Cloud(PointCloud),
    /// (lower corner, upper corner) pairs
    Boxes(Vec<(Vec<f64>, Vec<f64>)>),
}

/// Upper estimates of the beta-dimensional Hausdorff measure: for each
/// epsilon a cover by balls of radius <= epsilon and the sum of (2 r_i)^beta.
/// Clouds use greedy farthest-point centers; boxes a lattice of cells of
/// diagonal 2 epsilon (exact up to boundary effects, hence the preference
/// over farthest-point for continuum boxes).
pub fn hausdorff_estimate(set: &CoverSet, beta: f64, eps_schedule: &[f64]) -> Result<Vec<f64>> {
    if eps_schedule.is_empty() || eps_schedule.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "eps schedule must be strictly decreasing".into(),
        ));
    }
    if beta < 0.0 {
        return Ok(vec![f64::INFINITY; eps_schedule.len()]);
    }
    let count_balls = |eps: f64| -> usize {
        match set {
            CoverSet::Cloud(cloud) => {
                // farthest-point traversal until everything is covered
                let pts = &cloud.points;
                let mut centers: Vec<usize> = vec![0];
                let mut d: Vec<f64> = pts.iter().map(|p| dist(p, &pts[0])).collect();
                loop {
                    let (far, &dmax) = d
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.total_cmp(b.1))
                        .unwrap();
                    if dmax <= eps {
                        return centers.len();
                    }
                    centers.push(far);
                    for (i, p) in pts.iter().enumerate() {
                        d[i] = d[i].min(dist(p, &pts[far]));
                    }
                }
            }
            CoverSet::Boxes(boxes) => boxes
                .iter()
                .map(|(lo, hi)| {
                    let side = 2.0 * eps / (lo.len() as f64).sqrt();
                    lo.iter()
                        .zip(hi)
                        .map(|(&l, &u)| (((u - l) / side).ceil() as usize).max(1))
                        .product::<usize>()
                })
                .sum(),
        }
    };
    Ok(eps_schedule
        .iter()
        .map(|&eps| count_balls(eps) as f64 * (2.0 * eps).powf(beta))
        .collect())
}

/// Brute-force capacity oracle: shrinking random search over the weight
/// simplex around the running best, `samples` energy evaluations total.
/// Slow and crude by design; used to cross-check the Frank-Wolfe solver.
pub fn capacity_oracle(cloud: &PointCloud, spec: EnergyKernelSpec, samples: usize, seed: u64) -> f64 {
    let k = kernel_matrix(cloud, spec);
    let n = cloud.points.len();
    let energy_of = |w: &[f64]| -> f64 {
        let mut e = 0.0;
        for i in 0..n {
            for j in 0..n {
                e += w[i] * w[j] * k[i][j];
            }
        }
        e
    };
    let mut rng = scalar_stream(seed, 0);
    let mut best = vec![1.0 / n as f64; n];
    let mut best_e = energy_of(&best);
    let rounds = 40usize;
    let per_round = samples / rounds;
    for round in 0..rounds {
        let radius = 0.5 * 0.8_f64.powi(round as i32);
        for _ in 0..per_round {
            let mut w: Vec<f64> = best
                .iter()
                .map(|&b| (b + radius * (rng.gen::<f64>() - 0.5) / n as f64).max(0.0))
                .collect();
            let s: f64 = w.iter().sum();
            if s <= 0.0 {
                continue;
            }
            for wi in w.iter_mut() {
                *wi /= s;
            }
            let e = energy_of(&w);
            if e < best_e {
                best_e = e;
                best = w;
            }
        }
    }
    1.0 / best_e
}

/// The two regimes of the comparison-integral reduction.
#[derive(Debug, Clone, Copy)]
pub struct PrelCheck {
    /// the quadruple integral after reduction to the 2-D (u, v) form
    pub lhs: f64,
    /// K_{d - (1/alpha + 2/(alpha ^ 2H))}(a)
    pub rhs_kernel: f64,
    pub ratio: f64,
    /// the raw (u, v) integral divided by its angular constant
    /// B(1/alpha_1, 1/alpha_2); grows like 2 ln(1/a) in the critical case
    pub normalized: f64,
}

/// Evaluates both sides of the bound
///   int_I int_I int_J int_J exp(-a^2/Delta) / Delta^{d/2} <= C K_beta(a)
/// by the exact change of variables to the 2-D integral
///   lhs = 4 |I||J| a^{2/a1 + 2/a2 - d} / (a1 a2)
///         int int u^{1/a1 - 1} v^{1/a2 - 1} (u+v)^{-d/2} e^{-1/(u+v)} du dv
/// with a1 = 2 alpha, a2 = alpha ^ 2H.
pub fn prel_integral_check(
    a: f64,
    i_len: f64,
    j_len: f64,
    alpha: f64,
    h: f64,
    d: usize,
    n0: f64,
) -> Result<PrelCheck> {
    if a <= 0.0 || i_len <= 0.0 || j_len <= 0.0 {
        return Err(Error::InvalidParameter("need a, |I|, |J| > 0".into()));
    }
    let a1 = 2.0 * alpha;
    let a2 = alpha.min(2.0 * h);
    let p1 = 1.0 / a1 - 1.0;
    let p2 = 1.0 / a2 - 1.0;
    let u_max = i_len.powf(a1) / (a * a);
    let v_max = j_len.powf(a2) / (a * a);
    let opts = QuadOpts::with_tol(1e-9);
    let outer = quad::integrate_power_lower(
        |v, _| {
            let inner = quad::integrate_power_lower(
                |u, _| {
                    let s = u + v;
                    u.powf(p1) * s.powf(-0.5 * d as f64) * (-1.0 / s).exp()
                },
                0.0,
                u_max,
                p1.min(0.0),
                opts,
            );
            v.powf(p2) * inner.value
        },
        0.0,
        v_max,
        p2.min(0.0),
        opts,
    );
    if !outer.converged {
        return Err(Error::QuadNonConvergence {
            value: outer.value,
            residual: outer.abs_err,
        });
    }
    let prefactor =
        4.0 * i_len * j_len * (a * a).powf(1.0 / a1 + 1.0 / a2 - 0.5 * d as f64) / (a1 * a2);
    let lhs = prefactor * outer.value;
    let beta = d as f64 - (1.0 / alpha + 2.0 / a2);
    let rhs = k_beta(EnergyKernelSpec { beta, n0 }, a);
    let angular = statrs::function::gamma::gamma(1.0 / a1) * statrs::function::gamma::gamma(1.0 / a2)
        / statrs::function::gamma::gamma(1.0 / a1 + 1.0 / a2);
    Ok(PrelCheck {
        lhs,
        rhs_kernel: rhs,
        ratio: lhs / rhs,
        normalized: outer.value / angular,
    })
}
