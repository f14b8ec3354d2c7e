//! Projected subgradient ascent of the spectral gap over `K` uniform cells.
//!
//! The gap is the minimum of the decay rates `−Re λ` of the leading
//! eigenvalues (and of the accumulation line), so it is nonsmooth exactly
//! where eigenvalues collide. The ascent direction is the minimum-norm point
//! of the convex hull of the active gradients; it vanishes at optima formed by
//! such collisions.

use std::f64::consts::PI;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::par;
use crate::perturbation::CellGradients;
use crate::profile::SigmaProfile;
use crate::spectrum::{spectral_gap, EigenvalueRecord, GapOptions, GapResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientSmall,
    DegenerateLeadingCluster,
    MaxIters,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::GradientSmall => "gradient-small",
            StopReason::DegenerateLeadingCluster => "degenerate-leading-cluster",
            StopReason::MaxIters => "max-iters",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OptStep {
    pub profile: SigmaProfile,
    pub gap: f64,
    /// Number of independent eigenvectors in the leading cluster.
    pub cluster_multiplicity: usize,
    /// Accepted step length (0 for the initial point).
    pub alpha: f64,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub trajectory: Vec<OptStep>,
    pub final_profile: SigmaProfile,
    pub final_gap: f64,
    /// Leading-cluster size at the final point; at least 2 when the run stopped on
    /// a defective (Jordan) leading eigenvalue.
    pub cluster_multiplicity: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub note: Option<String>,
}

impl OptResult {
    /// `iter, gap, cluster_size, sigma_0, …, sigma_{K−1}`.
    pub fn trajectory_csv(&self) -> String {
        let k = self.trajectory.first().map_or(0, |s| s.profile.len());
        let mut out = String::from("iter,gap,cluster_size");
        for i in 0..k {
            write!(out, ",sigma_{i}").expect("write to string");
        }
        out.push('\n');
        for (it, s) in self.trajectory.iter().enumerate() {
            write!(out, "{it},{:.12},{}", s.gap, s.cluster_multiplicity).expect("write to string");
            for v in s.profile.values() {
                write!(out, ",{v:.12}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OptOptions {
    pub gap: GapOptions,
    /// Eigenvalues within this distance of the leading real part contribute gradients.
    pub active_tol: f64,
    /// Stop when `‖d‖∞` of the min-norm direction falls below this.
    pub grad_tol: f64,
    pub armijo: f64,
    pub initial_step: f64,
    /// Halvings of the step before the line search gives up.
    pub max_halvings: usize,
    /// Kernel directions sampled for a real eigenvalue with a two-dimensional eigenspace.
    pub angles: usize,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            gap: GapOptions::default(),
            active_tol: 1e-3,
            grad_tol: 1e-6,
            armijo: 1e-4,
            initial_step: 0.5,
            max_halvings: 20,
            angles: 12,
        }
    }
}

/// Eigenvalues whose real part is within `cluster_tol` of the leading one.
pub fn leading_cluster(profile: &SigmaProfile, cluster_tol: f64) -> Result<Vec<EigenvalueRecord>> {
    let opts = GapOptions {
        cluster_tol,
        ..GapOptions::default()
    };
    Ok(spectral_gap(profile, &opts)?.leading)
}

/// Gradients of `−Re λ` for one eigenvalue; several when its eigenspace is two-dimensional and real.
fn member_gradients(profile: &SigmaProfile, rec: &EigenvalueRecord, k: usize, angles: usize) -> Result<Vec<Vec<f64>>> {
    let g = CellGradients::new(profile, rec.lambda, k)?;
    let neg = |v: Vec<f64>| v.into_iter().map(|x| -x).collect::<Vec<f64>>();
    if !g.degenerate {
        let v = crate::perturbation::leading_vector(profile, rec.lambda);
        return Ok(vec![neg(g.for_vector(&v)?)]);
    }
    if rec.lambda.im != 0.0 {
        return Ok(vec![neg(g.trace_mean()?)]);
    }
    // first-order shifts of a real double eigenvalue range over the Rayleigh
    // quotients of the kernel directions
    (0..angles)
        .map(|i| {
            let th = PI * i as f64 / angles as f64;
            let v = [num_complex::Complex64::new(th.cos(), 0.0), num_complex::Complex64::new(th.sin(), 0.0)];
            g.for_vector(&v).map(neg)
        })
        .collect()
}

// Solves the dense system `a·x = b` by Gaussian elimination with partial pivoting.
fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Minimizes `w·offsets + (τ/2)‖Σ wᵢ pointsᵢ‖²` over the simplex with a primal
/// active-set method; returns the weights and `Σ wᵢ pointsᵢ`.
pub fn hull_qp(points: &[Vec<f64>], offsets: &[f64], tau: f64) -> (Vec<f64>, Vec<f64>) {
    let m = points.len();
    assert!(m > 0 && offsets.len() == m, "hull needs matching points and offsets");
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let gram: Vec<Vec<f64>> = (0..m).map(|i| (0..m).map(|j| tau * dot(&points[i], &points[j])).collect()).collect();
    // affinely dependent generators make the support system singular
    let ridge = 1e-13 * (0..m).map(|i| gram[i][i]).fold(0.0f64, f64::max).max(1e-300);
    let grad = |w: &[f64]| -> Vec<f64> { (0..m).map(|i| offsets[i] + dot(&gram[i], w)).collect() };
    let objective = |i: usize| offsets[i] + 0.5 * gram[i][i];
    let start = (0..m).min_by(|&a, &b| objective(a).total_cmp(&objective(b))).expect("nonempty");
    let mut w = vec![0.0; m];
    w[start] = 1.0;
    let mut support = vec![start];
    let scale = 1.0 + offsets.iter().fold(0.0f64, |s, o| s.max(o.abs())) + gram.iter().flatten().fold(0.0f64, |s, g| s.max(g.abs()));
    for _ in 0..(10 * m + 50) {
        let g = grad(&w);
        let level: f64 = support.iter().map(|&i| w[i] * g[i]).sum();
        let enter = (0..m).min_by(|&a, &b| g[a].total_cmp(&g[b])).expect("nonempty");
        if g[enter] >= level - 1e-14 * scale || support.contains(&enter) {
            break;
        }
        support.push(enter);
        loop {
            // stationary point of the objective on the affine hull of the support
            let k = support.len();
            let mut a = vec![vec![0.0; k + 1]; k + 1];
            let mut rhs = vec![0.0; k + 1];
            for (r, &i) in support.iter().enumerate() {
                for (c, &j) in support.iter().enumerate() {
                    a[r][c] = gram[i][j] + if r == c { ridge } else { 0.0 };
                }
                a[r][k] = 1.0;
                a[k][r] = 1.0;
                rhs[r] = -offsets[i];
            }
            rhs[k] = 1.0;
            let Some(v) = solve_dense(a, rhs) else { break };
            if v[..k].iter().all(|&x| x > 0.0) {
                for (r, &i) in support.iter().enumerate() {
                    w[i] = v[r];
                }
                break;
            }
            // walk toward it until a weight hits zero, then drop that generator
            let t = support
                .iter()
                .enumerate()
                .filter(|(r, _)| v[*r] <= 0.0)
                .map(|(r, &i)| w[i] / (w[i] - v[r]))
                .fold(1.0f64, f64::min);
            for (r, &i) in support.iter().enumerate() {
                w[i] += t * (v[r] - w[i]);
            }
            let before = support.len();
            support.retain(|&i| w[i] > 1e-15);
            for i in 0..m {
                if !support.contains(&i) {
                    w[i] = 0.0;
                }
            }
            if support.len() == before || support.is_empty() {
                break;
            }
        }
        if support.is_empty() {
            break;
        }
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let dim = points[0].len();
    let x = (0..dim).map(|d| (0..m).map(|i| w[i] * points[i][d]).sum()).collect();
    (w, x)
}

/// Minimum-norm point of the convex hull of `points`.
pub fn min_norm_hull(points: &[Vec<f64>]) -> Vec<f64> {
    hull_qp(points, &vec![0.0; points.len()], 1.0).1
}

fn cells_profile(values: Vec<f64>) -> Result<SigmaProfile> {
    SigmaProfile::uniform(values)
}

/// Eigenvalues this far right of the leading one enter the ascent model.
const MODEL_BAND: f64 = 0.1;
/// Trust radius bounds, in units of σ, for the proximal step.
const MAX_RADIUS: f64 = 4.0;
const MIN_RADIUS: f64 = 1e-7;

struct Active {
    gradients: Vec<Vec<f64>>,
    /// Decay rate of each gradient's eigenvalue minus the gap.
    offsets: Vec<f64>,
    /// Independent eigenvectors within `active_tol` of the leading real part (plus the accumulation line).
    members: usize,
}

impl Active {
    fn near(&self, tol: f64) -> Vec<Vec<f64>> {
        self.gradients
            .iter()
            .zip(&self.offsets)
            .filter(|(_, o)| **o <= tol)
            .map(|(g, _)| g.clone())
            .collect()
    }
}

fn active_gradients(profile: &SigmaProfile, g: &GapResult, k: usize, opts: &OptOptions) -> Result<Active> {
    let top = -g.gap;
    let mut a = Active {
        gradients: Vec::new(),
        offsets: Vec::new(),
        members: 0,
    };
    for rec in &g.eigenvalues {
        let off = top - rec.lambda.re;
        if off > MODEL_BAND {
            continue;
        }
        if off <= opts.active_tol {
            a.members += rec.kernel_dim;
        }
        // conjugates share their gradient
        if rec.lambda.im >= 0.0 {
            for grad in member_gradients(profile, rec, k, opts.angles)? {
                a.gradients.push(grad);
                a.offsets.push(off.max(0.0));
            }
        }
    }
    let off = top - g.accumulation_line;
    if off <= MODEL_BAND {
        // ∂(‖σ‖₁/4π)/∂σ_k = (2π/K)/(4π)
        a.gradients.push(vec![1.0 / (2.0 * k as f64); k]);
        a.offsets.push(off.max(0.0));
        if off <= opts.active_tol {
            a.members += 1;
        }
    }
    Ok(a)
}

type Trial = (f64, Vec<f64>, SigmaProfile, GapResult);

/// Backtracking from `initial_step`, evaluated in batches of the pool size.
fn line_search(values: &[f64], d: &[f64], slope: f64, gap: f64, opts: &OptOptions) -> Result<Option<Trial>> {
    let alphas: Vec<f64> = (0..=opts.max_halvings)
        .map(|i| opts.initial_step * 0.5f64.powi(i as i32))
        .collect();
    let batch = par::threads().max(1);
    for chunk in alphas.chunks(batch) {
        let trials = par::map(chunk, |&a| {
            let vals: Vec<f64> = values.iter().zip(d).map(|(v, di)| (v + a * di).max(0.0)).collect();
            let p = cells_profile(vals.clone())?;
            let g = spectral_gap(&p, &opts.gap)?;
            Ok::<_, Error>((a, vals, p, g))
        });
        for t in trials {
            let t = t?;
            if t.3.gap >= gap + opts.armijo * t.0 * slope && t.3.gap > gap {
                return Ok(Some(t));
            }
        }
    }
    Ok(None)
}

/// Projected subgradient ascent from `p0` resampled onto `k` uniform cells.
pub fn optimize_gap(p0: &SigmaProfile, k: usize, max_iters: usize) -> Result<OptResult> {
    optimize_gap_with(p0, k, max_iters, &OptOptions::default())
}

pub fn optimize_gap_with(p0: &SigmaProfile, k: usize, max_iters: usize, opts: &OptOptions) -> Result<OptResult> {
    if k == 0 {
        return Err(Error::Domain("K must be positive".into()));
    }
    let mut values = p0.cell_averages(k);
    let mut profile = cells_profile(values.clone())?;
    let mut current = spectral_gap(&profile, &opts.gap)?;
    let mut trajectory = vec![OptStep {
        profile: profile.clone(),
        gap: current.gap,
        cluster_multiplicity: current.cluster_multiplicity(),
        alpha: 0.0,
    }];
    let finish = |trajectory: Vec<OptStep>, reason: StopReason, converged: bool, note: Option<String>| {
        let last = trajectory.last().expect("initial point").clone();
        OptResult {
            final_profile: last.profile,
            final_gap: last.gap,
            cluster_multiplicity: last.cluster_multiplicity,
            trajectory,
            converged,
            stop_reason: reason,
            note,
        }
    };
    if profile.l1_norm() == 0.0 {
        // σ ≡ 0 has gap 0 and every direction of increase is admissible; start from the accumulation line
        values = vec![1e-3; k];
        profile = cells_profile(values.clone())?;
        current = spectral_gap(&profile, &opts.gap)?;
    }
    let mut iters = 0;
    let mut radius = 1.0;
    let project = |d: &mut Vec<f64>, values: &[f64]| {
        // directions that would push a zero cell negative are cut
        for (di, v) in d.iter_mut().zip(values) {
            if *v <= 0.0 && *di < 0.0 {
                *di = 0.0;
            }
        }
    };
    while iters < max_iters {
        let active = match active_gradients(&profile, &current, k, opts) {
            Ok(a) => a,
            Err(Error::Degenerate(msg)) => {
                // a vanishing c certifies a defective eigenvalue, which is at least double
                let mut r = finish(trajectory, StopReason::DegenerateLeadingCluster, true, Some(msg));
                r.cluster_multiplicity = r.cluster_multiplicity.max(2);
                return Ok(r);
            }
            Err(e) => return Err(e),
        };
        if active.gradients.is_empty() {
            return Err(Error::Inconsistency("no active eigenvalue at the gap".into()));
        }
        let stall_reason = |active: &Active| {
            if current.cluster_multiplicity() >= 2 || active.members >= 2 {
                StopReason::DegenerateLeadingCluster
            } else {
                StopReason::GradientSmall
            }
        };
        // stationarity: the tied gradients admit no common ascent direction
        let mut sub = min_norm_hull(&active.near(opts.active_tol));
        project(&mut sub, &values);
        if sub.iter().fold(0.0f64, |m, x| m.max(x.abs())) < opts.grad_tol {
            return Ok(finish(trajectory, stall_reason(&active), true, None));
        }
        // proximal model: max_d min_m (offset_m + g_m·d) − ‖d‖²/(2τ), solved through its dual
        let gmax = active
            .gradients
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0f64, |m, x| m.max(x.abs()));
        let tau = radius / gmax.max(1e-300);
        let (_, x) = hull_qp(&active.gradients, &active.offsets, tau);
        let mut d: Vec<f64> = x.iter().map(|v| v * tau).collect();
        project(&mut d, &values);
        let predicted = active
            .gradients
            .iter()
            .zip(&active.offsets)
            .map(|(g, o)| o + g.iter().zip(&d).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min);

        let step = if predicted > 0.0 {
            line_search(&values, &d, predicted, current.gap, opts)?
        } else {
            None
        };
        match step {
            Some((a, vals, p, g)) => {
                values = vals;
                profile = p;
                current = g;
                trajectory.push(OptStep {
                    profile: profile.clone(),
                    gap: current.gap,
                    cluster_multiplicity: current.cluster_multiplicity(),
                    alpha: a,
                });
                iters += 1;
                radius = (radius * 2.0).min(MAX_RADIUS);
            }
            None if radius > MIN_RADIUS => {
                // the model is too optimistic this far out
                radius *= 0.1;
            }
            None => {
                let note = format!(
                    "line search stalled at trust radius {radius:e} with {} members within {} of the leading real part",
                    active.members, opts.active_tol
                );
                return Ok(finish(trajectory, stall_reason(&active), true, Some(note)));
            }
        }
    }
    Ok(finish(trajectory, StopReason::MaxIters, false, None))
}

/// Closed-form gap of constant σ: `min(σ/2, σ/2 − √(σ²/4 − 1) for σ > 2, σ)`.
pub fn constant_gap(sigma: f64) -> f64 {
    let slow = if sigma > 2.0 {
        // σ/2 − √(σ²/4 − 1) = 1 / (σ/2 + √(σ²/4 − 1))
        1.0 / (0.5 * sigma + (0.25 * sigma * sigma - 1.0).sqrt())
    } else {
        0.5 * sigma
    };
    slow.min(0.5 * sigma).min(sigma)
}

#[derive(Debug, Clone)]
pub struct GapCurve {
    /// `(σ, closed-form gap)`.
    pub rows: Vec<(f64, f64)>,
    /// `(σ, closed form, spectral_gap)` at the cross-check points.
    pub checks: Vec<(f64, f64, f64)>,
    pub max_check_error: f64,
}

impl GapCurve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("sigma,gap\n");
        for (x, g) in &self.rows {
            writeln!(s, "{x:.12},{g:.12}").expect("write to string");
        }
        s
    }
}

pub const CURVE_CHECKS: usize = 5;

/// Gap of constant σ on an even grid, cross-checked against the spectral solver.
pub fn gap_curve_constant(sigma_min: f64, sigma_max: f64, steps: usize) -> Result<GapCurve> {
    if !(sigma_min >= 0.0 && sigma_max > sigma_min) || steps < 2 {
        return Err(Error::Domain(format!(
            "need 0 ≤ σ_min < σ_max and steps ≥ 2 (got {sigma_min}, {sigma_max}, {steps})"
        )));
    }
    let rows: Vec<(f64, f64)> = (0..steps)
        .map(|i| {
            let s = sigma_min + (sigma_max - sigma_min) * i as f64 / (steps - 1) as f64;
            (s, constant_gap(s))
        })
        .collect();
    let picks: Vec<usize> = (0..CURVE_CHECKS)
        .map(|i| (i * (steps - 1)) / (CURVE_CHECKS - 1).max(1))
        .collect();
    let checks = par::map(&picks, |&i| {
        let (s, closed) = rows[i];
        let g = spectral_gap(&SigmaProfile::constant(s)?, &GapOptions::default())?;
        Ok::<_, Error>((s, closed, g.gap))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let max_check_error = checks.iter().map(|(_, a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(GapCurve {
        rows,
        checks,
        max_check_error,
    })
}

/// L¹ distance between two profiles.
pub fn l1_distance(a: &SigmaProfile, b: &SigmaProfile) -> f64 {
    let mut xs: Vec<f64> = a.breakpoints().iter().chain(b.breakpoints()).copied().collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    xs.windows(2)
        .map(|w| {
            let m = 0.5 * (w[0] + w[1]);
            (a.eval(m) - b.eval(m)).abs() * (w[1] - w[0])
        })
        .sum()
}
