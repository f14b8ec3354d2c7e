//! The periodic Hamiltonian `H_{σ,λ} = −∂ₓ² + λ(λ + σ(x))` for real `λ`.
//!
//! `H_{σ,λ} j = 0` has a periodic solution exactly when `λ` is an eigenvalue of
//! the generator, so a zero crossing of a Hamiltonian eigenvalue `μ(λ)` on the
//! real axis certifies a real eigenvalue.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;
use crate::profile::SigmaProfile;
use crate::transfer::det_m_dlambda;

pub const DEFAULT_GRID: usize = 1024;
pub const MAX_GRID: usize = 8192;

/// Lowest Hamiltonian eigenvalues at one real `λ`.
#[derive(Debug, Clone)]
pub struct HamiltonianSpectrum {
    pub lambda: f64,
    /// Richardson-extrapolated from grids `n_grid` and `n_grid/2`, ascending.
    pub mu: Vec<f64>,
    /// Raw values on the `n_grid` grid.
    pub mu_raw: Vec<f64>,
    /// `|μ(n) − μ(n/2)| / 3` per eigenvalue.
    pub error_estimate: Vec<f64>,
    pub n_grid: usize,
}

// Bunch's tridiagonal pivoting constant (√5 − 1)/2
const PIVOT_ALPHA: f64 = 0.618_033_988_749_895;

/// Negative eigenvalues of `[[p, q], [q, r]]`.
fn inertia2(p: f64, q: f64, r: f64) -> usize {
    let det = p * r - q * q;
    if det < 0.0 {
        1
    } else if det > 0.0 {
        if p < 0.0 { 2 } else { 0 }
    } else {
        usize::from(p + r < 0.0)
    }
}

/// Cyclic tridiagonal symmetric matrix with constant off-diagonal `e`.
struct Cyclic {
    diag: Vec<f64>,
    e: f64,
}

impl Cyclic {
    fn hamiltonian(profile: &SigmaProfile, lambda: f64, n: usize) -> Self {
        let h = TAU / n as f64;
        let diag = profile.cell_averages(n)
            .into_iter()
            .map(|s| 2.0 / (h * h) + lambda * (lambda + s))
            .collect();
        Self {
            diag,
            e: -1.0 / (h * h),
        }
    }

    /// Number of eigenvalues below `mu` (Sylvester inertia of `A − μI`).
    ///
    /// Symmetric elimination of the leading path with the wrap-around column
    /// carried along. Small pivots are paired into 2×2 blocks; otherwise the
    /// fill-in of the last column cancels catastrophically near eigenvalues of
    /// the leading block, which coincide with double eigenvalues of `A`.
    fn count_below(&self, mu: f64) -> usize {
        let n = self.diag.len();
        let e = self.e;
        let a = |i: usize| self.diag[i] - mu;
        // entry (i, n−1) of the original matrix for i < n − 1
        let col = |i: usize| if i == 0 || i == n - 2 { e } else { 0.0 };
        // bounds every diagonal entry, so a 2×2 pivot has |det| ≥ (1 − α)e²
        let big = self.diag.iter().fold(e.abs(), |m, &x| m.max((x - mu).abs()));
        let mut neg = 0;
        let mut schur = a(n - 1);
        let (mut d, mut f) = (a(0), col(0));
        let mut i = 0;
        loop {
            if i == n - 2 {
                neg += inertia2(d, f, schur);
                return neg;
            }
            if d.abs() * big >= PIVOT_ALPHA * e * e {
                if d < 0.0 {
                    neg += 1;
                }
                schur -= f * f / d;
                let nd = a(i + 1) - e * e / d;
                f = col(i + 1) - e * f / d;
                d = nd;
                i += 1;
            } else {
                let (p22, g) = (a(i + 1), col(i + 1));
                let det = d * p22 - e * e;
                neg += inertia2(d, e, p22);
                schur -= (p22 * f * f - 2.0 * e * f * g + d * g * g) / det;
                if i + 1 == n - 2 {
                    // the block consumed the whole leading path
                    return neg + usize::from(schur < 0.0);
                }
                let nd = a(i + 2) - e * e * d / det;
                f = col(i + 2) - e * (d * g - e * f) / det;
                d = nd;
                i += 2;
            }
        }
    }

    fn bounds(&self) -> (f64, f64) {
        let lo = self.diag.iter().fold(f64::INFINITY, |m, &d| m.min(d)) - 2.0 * self.e.abs();
        let hi = self.diag.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d)) + 2.0 * self.e.abs();
        (lo, hi)
    }

    /// The `m`-th smallest eigenvalue (0-based) by bisection.
    fn eigenvalue(&self, m: usize) -> f64 {
        let (mut lo, mut hi) = self.bounds();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > m {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn lowest(&self, k: usize) -> Vec<f64> {
        (0..k).map(|m| self.eigenvalue(m)).collect()
    }
}

fn raw_eigs(profile: &SigmaProfile, lambda: f64, k: usize, n: usize) -> Vec<f64> {
    Cyclic::hamiltonian(profile, lambda, n).lowest(k)
}

/// Lowest `k` eigenvalues of the central-difference discretization on `n_grid` cells.
pub fn hamiltonian_eigs(profile: &SigmaProfile, lambda: f64, k: usize, n_grid: usize) -> Result<HamiltonianSpectrum> {
    if n_grid < 64 {
        return Err(Error::Domain(format!("n_grid = {n_grid} is below 64")));
    }
    if k == 0 || k > n_grid / 2 {
        return Err(Error::Domain(format!(
            "k = {k} must be in 1..={} for n_grid = {n_grid}",
            n_grid / 2
        )));
    }
    if !lambda.is_finite() {
        return Err(Error::Domain("λ must be finite".into()));
    }
    let fine = raw_eigs(profile, lambda, k, n_grid);
    let coarse = raw_eigs(profile, lambda, k, n_grid / 2);
    let mu = fine.iter().zip(&coarse).map(|(f, c)| (4.0 * f - c) / 3.0).collect();
    let error_estimate = fine.iter().zip(&coarse).map(|(f, c)| (f - c).abs() / 3.0).collect();
    Ok(HamiltonianSpectrum {
        lambda,
        mu,
        mu_raw: fine,
        error_estimate,
        n_grid,
    })
}

/// `−l1/(4π) + √((l1/4π)² − 1)`, the larger root of `λ² + (l1/2π)λ + 1`.
pub fn lambda_s(l1: f64) -> Result<f64> {
    let a = l1 / (4.0 * PI);
    if !(a > 1.0) {
        return Err(Error::Domain(format!(
            "‖σ‖₁ = {l1} must exceed 4π for the slow-eigenvalue certificate"
        )));
    }
    // 1 / (a + √(a²−1)) avoids cancellation for large a
    Ok(-1.0 / (a + ((a - 1.0) * (a + 1.0)).sqrt()))
}

/// Shift `φ ∈ [0, π)` with `∫ σ(x) cos(2(x − φ)) dx = 0`.
#[derive(Debug, Clone)]
pub struct PhaseShift {
    pub phi: f64,
    /// `|∫ σ cos(2(x − φ))|`.
    pub residual: f64,
    pub note: Option<String>,
}

fn second_harmonics(profile: &SigmaProfile) -> (f64, f64) {
    profile.cells().fold((0.0, 0.0), |(a, b), (x0, x1, v)| {
        (
            a + v * ((2.0 * x1).sin() - (2.0 * x0).sin()) / 2.0,
            b + v * ((2.0 * x0).cos() - (2.0 * x1).cos()) / 2.0,
        )
    })
}

pub fn phase_shift(profile: &SigmaProfile) -> Result<PhaseShift> {
    let (a, b) = second_harmonics(profile);
    let l1 = profile.l1_norm();
    let vanish = 1e-13 * l1.max(1.0);
    if a.abs() <= vanish && b.abs() <= vanish {
        return Ok(PhaseShift {
            phi: 0.0,
            residual: a.abs(),
            note: Some("second Fourier coefficients of σ vanish; every shift is admissible".into()),
        });
    }
    // A cos 2φ + B sin 2φ = 0  ⇔  2φ = atan2(B, A) ± π/2
    let phi = (0.5 * b.atan2(a) + 0.25 * PI).rem_euclid(PI);
    let residual = (a * (2.0 * phi).cos() + b * (2.0 * phi).sin()).abs();
    if residual > 1e-10 * l1 + 1e-12 {
        return Err(Error::Inconsistency(format!("phase shift residual {residual:e}")));
    }
    Ok(PhaseShift {
        phi,
        residual,
        note: None,
    })
}

/// `(⟨1, H 1⟩, ⟨s, H s⟩)` with `s(x) = sin(x − φ)`, integrated exactly per cell.
pub fn rayleigh_quotients(profile: &SigmaProfile, lambda: f64) -> Result<(f64, f64)> {
    let phi = phase_shift(profile)?.phi;
    let l1 = profile.l1_norm();
    let q1 = TAU * lambda * lambda + lambda * l1;
    // ∫ₐᵇ sin²(x − φ) dx
    let sin2 = |a: f64, b: f64| 0.5 * (b - a) - 0.25 * ((2.0 * (b - phi)).sin() - (2.0 * (a - phi)).sin());
    let potential: f64 = profile.cells().map(|(a, b, v)| v * sin2(a, b)).sum();
    // ∫ cos²(x − φ) over a period is π
    let q2 = PI + lambda * lambda * PI + lambda * potential;
    Ok((q1, q2))
}

/// Certified real eigenvalue in `[λ_s, 0)`.
#[derive(Debug, Clone)]
pub struct SlowEigenvalue {
    pub lambda: f64,
    pub lambda_s: f64,
    /// Extrapolated `μ₂(λ*)`.
    pub mu2: f64,
    /// `|det M(σ, λ*)|`.
    pub det_m: f64,
    pub n_grid: usize,
}

const EPS0: f64 = 1e-6;
const SCAN_POINTS: usize = 256;

fn mu2(profile: &SigmaProfile, lambda: f64, n: usize) -> f64 {
    let fine = raw_eigs(profile, lambda, 2, n)[1];
    let coarse = raw_eigs(profile, lambda, 2, n / 2)[1];
    (4.0 * fine - coarse) / 3.0
}

// a bracket [lo, hi] with μ₂(lo) ≤ 0 < μ₂(hi)
fn bracket(profile: &SigmaProfile, ls: f64, n: usize) -> Option<(f64, f64)> {
    let hi = -EPS0;
    if mu2(profile, hi, n) <= 0.0 {
        return None;
    }
    if mu2(profile, ls, n) <= 0.0 {
        return Some((ls, hi));
    }
    // the two-dimensional test space misses the μ₂ ≤ 0 bound; look for a crossing
    let grid: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| ls + (hi - ls) * i as f64 / SCAN_POINTS as f64)
        .collect();
    let vals = par::map(&grid, |&l| mu2(profile, l, n));
    let i = (0..SCAN_POINTS).rev().find(|&i| vals[i] <= 0.0 && vals[i + 1] > 0.0)?;
    Some((grid[i], grid[i + 1]))
}

/// Bisection for a sign change of `μ₂(λ)` on `[λ_s, −10⁻⁶]`.
pub fn find_slow_eigenvalue(profile: &SigmaProfile, tol: f64) -> Result<SlowEigenvalue> {
    find_slow_eigenvalue_with(profile, tol, DEFAULT_GRID)
}

pub fn find_slow_eigenvalue_with(profile: &SigmaProfile, tol: f64, n_grid: usize) -> Result<SlowEigenvalue> {
    if !(tol > 0.0) {
        return Err(Error::Domain("tolerance must be positive".into()));
    }
    let ls = lambda_s(profile.l1_norm())?;
    let mut n = n_grid.max(64);
    let mut last_issue = String::new();
    while n <= MAX_GRID {
        let Some((mut lo, mut hi)) = bracket(profile, ls, n) else {
            last_issue = format!("no sign change of μ₂ on [{ls}, {}] at n = {n}", -EPS0);
            n *= 2;
            continue;
        };
        let mut lam = 0.5 * (lo + hi);
        let mut m = mu2(profile, lam, n);
        for _ in 0..200 {
            if m <= 0.0 {
                lo = lam;
            } else {
                hi = lam;
            }
            let next = 0.5 * (lo + hi);
            if next == lam || hi - lo < 1e-15 {
                break;
            }
            lam = next;
            m = mu2(profile, lam, n);
        }
        let (f, _, _) = det_m_dlambda(profile, Complex64::new(lam, 0.0));
        if m.abs() < tol && f.norm() < 10.0 * tol {
            return Ok(SlowEigenvalue {
                lambda: lam,
                lambda_s: ls,
                mu2: m,
                det_m: f.norm(),
                n_grid: n,
            });
        }
        last_issue = format!("at n = {n}: |μ₂| = {:e}, |det M| = {:e}", m.abs(), f.norm());
        n *= 2;
    }
    Err(Error::Inconsistency(format!(
        "slow eigenvalue not certified up to n = {MAX_GRID} ({last_issue})"
    )))
}

/// `(λ, μ₁, μ₂)` on an even grid of real `λ`, for plotting the crossing.
pub fn mu_table(profile: &SigmaProfile, lo: f64, hi: f64, steps: usize, n_grid: usize) -> Result<Vec<(f64, f64, f64)>> {
    if steps < 2 || !(hi > lo) {
        return Err(Error::Domain("need steps ≥ 2 and lo < hi".into()));
    }
    let lams: Vec<f64> = (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect();
    let rows = par::map(&lams, |&l| hamiltonian_eigs(profile, l, 2, n_grid).map(|s| (l, s.mu[0], s.mu[1])));
    rows.into_iter().collect()
}
