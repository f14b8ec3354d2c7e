//! First-order eigenvalue response to `σ → σ + εη`.
//!
//! With `(ρ₁, j₁) = S(0 → x)V₁` for a kernel vector `V₁` of `M(σ, λ₀)`,
//! `c = ∫ (j₁² − ρ₁²)` and `d = ∫ j₁² η`, a simple eigenvalue moves as
//! `λ(ε) = λ₀ − (d/c) ε + O(ε²)`.
//!
//! All integrals are bilinear in `V₁` (no conjugation), so they are assembled
//! once for the basis `u = (1, 0)`, `w = (0, 1)` and contracted afterwards.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::par;
use crate::profile::{SigmaDirection, SigmaProfile, BREAKPOINT_TOL};
use crate::spectrum::kernel_vectors;
use crate::transfer::{m_matrix, monodromy, segment_propagator, TransferMatrix};

/// Gauss–Legendre nodes on `[−1, 1]`, order 8.
const GL8_NODES: [f64; 8] = [
    -0.960_289_856_497_536_3,
    -0.796_666_477_413_626_7,
    -0.525_532_409_916_329_0,
    -0.183_434_642_495_649_8,
    0.183_434_642_495_649_8,
    0.525_532_409_916_329_0,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 8] = [
    0.101_228_536_290_376_3,
    0.222_381_034_453_374_5,
    0.313_706_645_877_887_3,
    0.362_683_783_378_362_0,
    0.362_683_783_378_362_0,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Default number of Gauss–Legendre panels per cell.
pub const DEFAULT_PANELS: usize = 4;

/// `|c|` below this means the eigenvalue is not simple.
pub const DEGENERACY_TOL: f64 = 1e-10;

type Mat2 = [[Complex64; 2]; 2];

const ZERO2: Mat2 = [[Complex64::new(0.0, 0.0); 2]; 2];

fn bilinear(m: &Mat2, v: &[Complex64; 2]) -> Complex64 {
    v[0] * (m[0][0] * v[0] + m[0][1] * v[1]) + v[1] * (m[1][0] * v[0] + m[1][1] * v[1])
}

fn add(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] + b[0][0], a[0][1] + b[0][1]],
        [a[1][0] + b[1][0], a[1][1] + b[1][1]],
    ]
}

fn sub(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [a[0][0] - b[0][0], a[0][1] - b[0][1]],
        [a[1][0] - b[1][0], a[1][1] - b[1][1]],
    ]
}

/// Products of the two basis solutions integrated over one interval.
#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    /// `∫ j_p j_q` for basis solutions p, q.
    jj: Mat2,
    /// `∫ ρ_p ρ_q`.
    rr: Mat2,
}

fn union_breaks(lists: &[&[f64]]) -> Vec<f64> {
    let mut all: Vec<f64> = lists.iter().flat_map(|l| l.iter().copied()).collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::with_capacity(all.len());
    for x in all {
        if out.last().is_none_or(|&l| x - l > BREAKPOINT_TOL) {
            out.push(x);
        }
    }
    if let Some(l) = out.last_mut() {
        *l = TAU;
    }
    out
}

fn pieces(profile: &SigmaProfile, lambda: Complex64, breaks: &[f64], n_quad: usize) -> Vec<Piece> {
    // fundamental matrix at every break, then independent quadrature per interval
    let mut starts = Vec::with_capacity(breaks.len());
    let mut s = TransferMatrix::identity();
    for w in breaks.windows(2) {
        starts.push(s);
        let sig = profile.eval(0.5 * (w[0] + w[1]));
        s = segment_propagator(sig, lambda, w[1] - w[0]) * s;
    }
    let intervals: Vec<(f64, f64, TransferMatrix)> = breaks
        .windows(2)
        .zip(starts)
        .map(|(w, s0)| (w[0], w[1], s0))
        .collect();
    par::map(&intervals, |&(a, b, s0)| {
        let sig = profile.eval(0.5 * (a + b));
        let panels = n_quad.max(1);
        let hp = (b - a) / panels as f64;
        let mut jj = ZERO2;
        let mut rr = ZERO2;
        for p in 0..panels {
            let mid = a + (p as f64 + 0.5) * hp;
            for (t, w) in GL8_NODES.iter().zip(GL8_WEIGHTS) {
                let x = mid + 0.5 * hp * t;
                let f = segment_propagator(sig, lambda, x - a) * s0;
                // columns of f are (ρ, j) for the basis u and w
                let rho = [f.m11, f.m12];
                let j = [f.m21, f.m22];
                let wt = 0.5 * hp * w;
                for q in 0..2 {
                    for r in 0..2 {
                        jj[q][r] += j[q] * j[r] * wt;
                        rr[q][r] += rho[q] * rho[r] * wt;
                    }
                }
            }
        }
        Piece { a, b, jj, rr }
    })
}

fn residual_check(profile: &SigmaProfile, lambda: Complex64) -> Result<()> {
    let s = monodromy(profile, lambda);
    let f = (Complex64::new(2.0, 0.0) - s.trace()).norm();
    if !(f <= 1e-6 * s.max_abs().max(1.0)) {
        return Err(Error::Domain(format!(
            "λ₀ = {lambda} is not an eigenvalue (|det M| = {f:e})"
        )));
    }
    Ok(())
}

/// `V₁` for the perturbation formulas: the kernel vector of `M`, or `(1, 0)` when `M` vanishes.
pub fn leading_vector(profile: &SigmaProfile, lambda: Complex64) -> [Complex64; 2] {
    let k = kernel_vectors(profile, lambda);
    k[0]
}

/// The Wronskian constants of one eigenvalue and direction.
#[derive(Debug, Clone, Copy)]
pub struct WronskianConstants {
    pub c: Complex64,
    pub d: Complex64,
    pub v1: [Complex64; 2],
    /// `(−conj(j₀), conj(ρ₀))`, orthogonal to `v1`.
    pub v2: [Complex64; 2],
}

impl WronskianConstants {
    pub fn derivative(&self) -> Complex64 {
        -self.d / self.c
    }
}

fn complement(v: [Complex64; 2]) -> [Complex64; 2] {
    [-v[1].conj(), v[0].conj()]
}

pub fn wronskian_constants(
    profile: &SigmaProfile,
    lambda: Complex64,
    eta: &SigmaDirection,
    n_quad: usize,
) -> Result<WronskianConstants> {
    residual_check(profile, lambda)?;
    let v1 = leading_vector(profile, lambda);
    let breaks = union_breaks(&[profile.breakpoints(), eta.breakpoints()]);
    let ps = pieces(profile, lambda, &breaks, n_quad);
    let mut c = Complex64::new(0.0, 0.0);
    let mut d = Complex64::new(0.0, 0.0);
    for p in &ps {
        let jj = bilinear(&p.jj, &v1);
        c += jj - bilinear(&p.rr, &v1);
        d += jj * eta.eval(0.5 * (p.a + p.b));
    }
    if c.norm() < DEGENERACY_TOL {
        return Err(Error::Degenerate(format!(
            "c = {c:e} at λ₀ = {lambda}: eigenvalue is not simple"
        )));
    }
    Ok(WronskianConstants {
        c,
        d,
        v1,
        v2: complement(v1),
    })
}

/// `dλ/dε` at `ε = 0` along `σ + εη`.
pub fn eigen_derivative(profile: &SigmaProfile, lambda: Complex64, eta: &SigmaDirection) -> Result<Complex64> {
    wronskian_constants(profile, lambda, eta, DEFAULT_PANELS).map(|w| w.derivative())
}

/// Per-cell integrals on the uniform `K`-cell grid, reusable for any `V₁`.
#[derive(Debug, Clone)]
pub struct CellGradients {
    pub lambda: Complex64,
    /// `∫ (j_p j_q − ρ_p ρ_q)` over the period.
    c: Mat2,
    /// `∫_{cell k} j_p j_q`.
    d: Vec<Mat2>,
    /// Whether `ker M(σ, λ)` is two-dimensional.
    pub degenerate: bool,
}

impl CellGradients {
    pub fn new(profile: &SigmaProfile, lambda: Complex64, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Domain("K must be positive".into()));
        }
        residual_check(profile, lambda)?;
        let grid: Vec<f64> = (0..=k).map(|i| TAU * i as f64 / k as f64).collect();
        let breaks = union_breaks(&[profile.breakpoints(), &grid]);
        let ps = pieces(profile, lambda, &breaks, DEFAULT_PANELS);
        let mut c = ZERO2;
        let mut d = vec![ZERO2; k];
        for p in &ps {
            c = add(&c, &sub(&p.jj, &p.rr));
            let cell = ((0.5 * (p.a + p.b) / TAU * k as f64).floor() as usize).min(k - 1);
            d[cell] = add(&d[cell], &p.jj);
        }
        Ok(Self {
            lambda,
            c,
            d,
            degenerate: kernel_vectors(profile, lambda).len() > 1,
        })
    }

    /// `Re(−d_k/c)` for the mode started from `v`.
    pub fn for_vector(&self, v: &[Complex64; 2]) -> Result<Vec<f64>> {
        let c = bilinear(&self.c, v);
        if c.norm() < DEGENERACY_TOL {
            return Err(Error::Degenerate(format!(
                "c = {c:e} at λ₀ = {}: eigenvalue is not simple",
                self.lambda
            )));
        }
        Ok(self.d.iter().map(|dk| (-bilinear(dk, v) / c).re).collect())
    }

    /// Mean first-order shift `Re(−tr(C⁻¹D_k)/2)` of a two-dimensional eigenspace.
    pub fn trace_mean(&self) -> Result<Vec<f64>> {
        let c = &self.c;
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let scale = c.iter().flatten().fold(0.0f64, |m, z| m.max(z.norm()));
        if det.norm() < DEGENERACY_TOL * scale.max(1.0) {
            return Err(Error::Degenerate(format!(
                "singular Wronskian pencil at λ₀ = {}",
                self.lambda
            )));
        }
        let inv = [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]];
        Ok(self
            .d
            .iter()
            .map(|dk| {
                let tr = inv[0][0] * dk[0][0] + inv[0][1] * dk[1][0] + inv[1][0] * dk[0][1] + inv[1][1] * dk[1][1];
                (-tr * 0.5).re
            })
            .collect())
    }
}

/// `∂ Re λ₀ / ∂σ_k` for the indicator of each of `K` uniform cells.
///
/// When `M(σ, λ₀) = 0` (a two-dimensional eigenspace) the mean shift of the pair is returned.
pub fn gap_gradient(profile: &SigmaProfile, lambda: Complex64, k: usize) -> Result<Vec<f64>> {
    let g = CellGradients::new(profile, lambda, k)?;
    if g.degenerate {
        g.trace_mean()
    } else {
        g.for_vector(&leading_vector(profile, lambda))
    }
}

/// `M(σ, λ₀ + δλ)` in the basis `(V₁, V₂)`, at `δλ` and `δλ/2`.
#[derive(Debug, Clone)]
pub struct TildeM {
    pub full: Mat2,
    pub half: Mat2,
    /// `log₂ |entry(δλ)| / |entry(δλ/2)|`; 1 for linear vanishing, 0 for a nonzero limit.
    pub order: [[f64; 2]; 2],
    /// Entry (2,1) vanishes linearly and entry (1,2) does not vanish.
    pub simple: bool,
}

fn in_basis(m: &TransferMatrix, v1: &[Complex64; 2], v2: &[Complex64; 2]) -> Mat2 {
    let basis = [v1, v2];
    let mut out = ZERO2;
    for (a, va) in basis.iter().enumerate() {
        for (b, vb) in basis.iter().enumerate() {
            let mv = m.apply(**vb);
            out[a][b] = va[0].conj() * mv[0] + va[1].conj() * mv[1];
        }
    }
    out
}

pub fn tilde_m_entries(profile: &SigmaProfile, lambda: Complex64, delta: Complex64) -> Result<TildeM> {
    residual_check(profile, lambda)?;
    let v1 = leading_vector(profile, lambda);
    let v2 = complement(v1);
    let full = in_basis(&m_matrix(profile, lambda + delta), &v1, &v2);
    let half = in_basis(&m_matrix(profile, lambda + delta * 0.5), &v1, &v2);
    let mut order = [[0.0; 2]; 2];
    for a in 0..2 {
        for b in 0..2 {
            order[a][b] = (full[a][b].norm() / half[a][b].norm()).log2();
        }
    }
    let simple = (order[1][0] - 1.0).abs() < 0.2 && order[0][1].abs() < 0.2;
    Ok(TildeM {
        full,
        half,
        order,
        simple,
    })
}

/// `ρ₁j₂ − ρ₂j₁` at `x_i = 2π i/n` for the solutions started from `V₁` and `V₂`.
pub fn wronskian_trace(profile: &SigmaProfile, lambda: Complex64, n: usize) -> Vec<Complex64> {
    let v1 = leading_vector(profile, lambda);
    let v2 = complement(v1);
    let grid: Vec<f64> = (0..=n).map(|i| TAU * i as f64 / n as f64).collect();
    let breaks = union_breaks(&[profile.breakpoints(), &grid]);
    let mut s = TransferMatrix::identity();
    let mut out = Vec::with_capacity(n + 1);
    let mut next = 0;
    for (i, &x) in breaks.iter().enumerate() {
        if i > 0 {
            let a = breaks[i - 1];
            s = segment_propagator(profile.eval(0.5 * (a + x)), lambda, x - a) * s;
        }
        if next < grid.len() && (x - grid[next]).abs() <= BREAKPOINT_TOL {
            let p = s.apply(v1);
            let q = s.apply(v2);
            out.push(p[0] * q[1] - q[0] * p[1]);
            next += 1;
        }
    }
    out
}
