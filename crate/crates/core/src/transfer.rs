//! Flow of the first-order eigenvalue ODE
//!
//! ```text
//! d/dx (ρ, j) = −[[0, σ(x) + λ], [λ, 0]] (ρ, j)
//! ```
//!
//! across the torus, the monodromy defect `M(σ, λ) = Id − S(0 → 2π)`, and
//! the large-|Im λ| limit of `M`.
//!
//! On a cell of constant σ the generator `G` satisfies `G² = z·Id` with
//! `z = λ(λ + σ)`, so `exp(L·G) = C(z)·Id + T(z)·G` where `C = cosh(L√z)` and
//! `T = sinh(L√z)/√z`. Both are entire in `z`, which removes the apparent
//! singularities at `λ = 0` and `λ = −σ`.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::profile::SigmaProfile;

/// Cell counts above which matrix products are accumulated in double-double precision.
pub const COMPENSATED_CELLS: usize = 256;

const TAYLOR_SWITCH: f64 = 1e-3;
const TAYLOR_TERMS: usize = 8;
const DERIV_TAYLOR_SWITCH: f64 = 0.5;
const DERIV_TAYLOR_TERMS: usize = 18;

/// 2×2 complex matrix acting on column vectors `(ρ, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransferMatrix {
    pub m11: Complex64,
    pub m12: Complex64,
    pub m21: Complex64,
    pub m22: Complex64,
}

impl TransferMatrix {
    pub const fn new(m11: Complex64, m12: Complex64, m21: Complex64, m22: Complex64) -> Self {
        Self { m11, m12, m21, m22 }
    }

    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Self::new(one, zero, zero, one)
    }

    pub fn zero() -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self::new(zero, zero, zero, zero)
    }

    pub fn det(&self) -> Complex64 {
        self.m11 * self.m22 - self.m12 * self.m21
    }

    pub fn trace(&self) -> Complex64 {
        self.m11 + self.m22
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self::new(self.m11 * s, self.m12 * s, self.m21 * s, self.m22 * s)
    }

    /// Inverse via the adjugate.
    pub fn inverse(&self) -> Self {
        let d = self.det();
        Self::new(self.m22 / d, -self.m12 / d, -self.m21 / d, self.m11 / d)
    }

    pub fn apply(&self, v: [Complex64; 2]) -> [Complex64; 2] {
        [
            self.m11 * v[0] + self.m12 * v[1],
            self.m21 * v[0] + self.m22 * v[1],
        ]
    }

    pub fn max_abs(&self) -> f64 {
        [self.m11, self.m12, self.m21, self.m22]
            .iter()
            .fold(0.0, |m, z| m.max(z.norm()))
    }

    pub fn frobenius(&self) -> f64 {
        (self.m11.norm_sqr() + self.m12.norm_sqr() + self.m21.norm_sqr() + self.m22.norm_sqr())
            .sqrt()
    }

    /// Singular values `(largest, smallest)`.
    pub fn singular_values(&self) -> (f64, f64) {
        let (hi, lo, _) = self.gram_eigen();
        (hi.max(0.0).sqrt(), lo.max(0.0).sqrt())
    }

    /// Operator 2-norm.
    pub fn norm(&self) -> f64 {
        self.singular_values().0
    }

    /// Unit right singular vector for the smallest singular value.
    pub fn smallest_singular_vector(&self) -> [Complex64; 2] {
        self.gram_eigen().2
    }

    // eigen-decomposition of AᴴA = [[p, q], [q̄, r]]
    fn gram_eigen(&self) -> (f64, f64, [Complex64; 2]) {
        let p = self.m11.norm_sqr() + self.m21.norm_sqr();
        let r = self.m12.norm_sqr() + self.m22.norm_sqr();
        let q = self.m11.conj() * self.m12 + self.m21.conj() * self.m22;
        let mean = 0.5 * (p + r);
        let half = 0.5 * (p - r);
        let rad = (half * half + q.norm_sqr()).sqrt();
        let hi = mean + rad;
        // product of eigenvalues = |det A|², stable route for the small one
        let lo = if hi > 0.0 { self.det().norm_sqr() / hi } else { 0.0 };
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let vec = if q.norm() <= 1e-300 {
            if p <= r {
                [one, zero]
            } else {
                [zero, one]
            }
        } else if half >= 0.0 {
            // (q, lo - p) is stable when p ≥ r
            let v = [-q, Complex64::new(p - lo, 0.0)];
            let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            [v[0] / n, v[1] / n]
        } else {
            let v = [Complex64::new(r - lo, 0.0), -q.conj()];
            let n = (v[0].norm_sqr() + v[1].norm_sqr()).sqrt();
            [v[0] / n, v[1] / n]
        };
        (hi, lo, vec)
    }

    /// Whether all entries are real to within `tol` (relative to the largest entry).
    pub fn is_real(&self, tol: f64) -> bool {
        let s = self.max_abs().max(1.0);
        [self.m11, self.m12, self.m21, self.m22]
            .iter()
            .all(|z| z.im.abs() <= tol * s)
    }
}

impl Mul for TransferMatrix {
    type Output = Self;
    fn mul(self, b: Self) -> Self {
        Self::new(
            self.m11 * b.m11 + self.m12 * b.m21,
            self.m11 * b.m12 + self.m12 * b.m22,
            self.m21 * b.m11 + self.m22 * b.m21,
            self.m21 * b.m12 + self.m22 * b.m22,
        )
    }
}

impl Add for TransferMatrix {
    type Output = Self;
    fn add(self, b: Self) -> Self {
        Self::new(
            self.m11 + b.m11,
            self.m12 + b.m12,
            self.m21 + b.m21,
            self.m22 + b.m22,
        )
    }
}

impl Sub for TransferMatrix {
    type Output = Self;
    fn sub(self, b: Self) -> Self {
        Self::new(
            self.m11 - b.m11,
            self.m12 - b.m12,
            self.m21 - b.m21,
            self.m22 - b.m22,
        )
    }
}

/// `(C, T)` with `C = cosh(L√z)` and `T = sinh(L√z)/√z`.
pub fn cosh_sinhc(z: Complex64, len: f64) -> (Complex64, Complex64) {
    let u = z * (len * len);
    if u.norm() < TAYLOR_SWITCH {
        // C = Σ uᵏ/(2k)!, T = L Σ uᵏ/(2k+1)!
        let mut c = Complex64::new(0.0, 0.0);
        let mut t = Complex64::new(0.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut fact_even = 1.0;
        let mut fact_odd = 1.0;
        for k in 0..TAYLOR_TERMS {
            if k > 0 {
                pow *= u;
                fact_even *= ((2 * k - 1) * (2 * k)) as f64;
                fact_odd *= ((2 * k) * (2 * k + 1)) as f64;
            }
            c += pow / fact_even;
            t += pow / fact_odd;
        }
        (c, t * len)
    } else {
        let s = z.sqrt();
        let w = s * len;
        (w.cosh(), w.sinh() / s)
    }
}

// (C, T, dC/dz, dT/dz)
fn cosh_sinhc_dz(z: Complex64, len: f64) -> (Complex64, Complex64, Complex64, Complex64) {
    let (c, t) = cosh_sinhc(z, len);
    let dc = t * (0.5 * len);
    let u = z * (len * len);
    let dt = if u.norm() < DERIV_TAYLOR_SWITCH {
        // dT/dz = L³ Σ_{k≥1} k u^{k-1}/(2k+1)!
        let mut acc = Complex64::new(0.0, 0.0);
        let mut pow = Complex64::new(1.0, 0.0);
        let mut fact = 6.0;
        for k in 1..=DERIV_TAYLOR_TERMS {
            if k > 1 {
                pow *= u;
                fact *= ((2 * k) * (2 * k + 1)) as f64;
            }
            acc += pow * (k as f64 / fact);
        }
        acc * (len * len * len)
    } else {
        (c * len - t) / (z * 2.0)
    };
    (c, t, dc, dt)
}

/// Exact propagator over a cell of length `len` with constant rate `sigma`.
pub fn segment_propagator(sigma: f64, lambda: Complex64, len: f64) -> TransferMatrix {
    let z = lambda * (lambda + sigma);
    let (c, t) = cosh_sinhc(z, len);
    TransferMatrix::new(c, -(lambda + sigma) * t, -lambda * t, c)
}

/// Segment propagator and its λ-derivative.
pub fn segment_propagator_dlambda(
    sigma: f64,
    lambda: Complex64,
    len: f64,
) -> (TransferMatrix, TransferMatrix) {
    let z = lambda * (lambda + sigma);
    let dz = lambda * 2.0 + sigma;
    let (c, t, dc, dt) = cosh_sinhc_dz(z, len);
    let s = TransferMatrix::new(c, -(lambda + sigma) * t, -lambda * t, c);
    let (cp, tp) = (dc * dz, dt * dz);
    let ds = TransferMatrix::new(cp, -t - (lambda + sigma) * tp, -t - lambda * tp, cp);
    (s, ds)
}

// pieces (σ_k, length) of P restricted to [x, y]
fn pieces(profile: &SigmaProfile, x: f64, y: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
    profile.cells().filter_map(move |(a, b, v)| {
        let lo = a.max(x);
        let hi = b.min(y);
        (hi > lo).then_some((v, hi - lo))
    })
}

/// Solution operator `S(x → y)` for `0 ≤ x, y ≤ 2π`.
///
/// For `y < x` the inverse flow `S(y → x)⁻¹` is returned.
pub fn solve_transfer(profile: &SigmaProfile, lambda: Complex64, x: f64, y: f64) -> TransferMatrix {
    if y < x {
        return solve_transfer(profile, lambda, y, x).inverse();
    }
    let segs: Vec<TransferMatrix> = pieces(profile, x, y)
        .map(|(v, len)| segment_propagator(v, lambda, len))
        .collect();
    if segs.len() > COMPENSATED_CELLS {
        compensated::ordered_product(&segs)
    } else {
        segs.iter()
            .fold(TransferMatrix::identity(), |acc, s| *s * acc)
    }
}

/// `S(0 → 2π)`.
pub fn monodromy(profile: &SigmaProfile, lambda: Complex64) -> TransferMatrix {
    solve_transfer(profile, lambda, 0.0, std::f64::consts::TAU)
}

/// `S(0 → 2π)` and `∂S/∂λ`.
pub fn monodromy_dlambda(profile: &SigmaProfile, lambda: Complex64) -> (TransferMatrix, TransferMatrix) {
    let mut s = TransferMatrix::identity();
    let mut ds = TransferMatrix::zero();
    for (v, len) in pieces(profile, 0.0, std::f64::consts::TAU) {
        let (seg, dseg) = segment_propagator_dlambda(v, lambda, len);
        ds = dseg * s + seg * ds;
        s = seg * s;
    }
    (s, ds)
}

/// `M(σ, λ) = Id − S(0 → 2π)`.
pub fn m_matrix(profile: &SigmaProfile, lambda: Complex64) -> TransferMatrix {
    TransferMatrix::identity() - monodromy(profile, lambda)
}

/// `det M(σ, λ)`, evaluated as `2 − tr S` (exact since `det S = 1`), which
/// avoids the cancellation in `(1 − s₁₁)(1 − s₂₂) − s₁₂s₂₁` when `S` is large.
pub fn det_m(profile: &SigmaProfile, lambda: Complex64) -> Complex64 {
    Complex64::new(2.0, 0.0) - monodromy(profile, lambda).trace()
}

/// `det M` together with its λ-derivative and the entry scale of `S`.
pub fn det_m_dlambda(profile: &SigmaProfile, lambda: Complex64) -> (Complex64, Complex64, f64) {
    let (s, ds) = monodromy_dlambda(profile, lambda);
    (Complex64::new(2.0, 0.0) - s.trace(), -ds.trace(), s.max_abs())
}

/// Limit of `M(σ, λ)` as `|Im λ| → ∞` at bounded `Re λ`, for `‖σ‖₁ = l1`.
pub fn asymptotic_m(l1: f64, lambda: Complex64) -> TransferMatrix {
    let w = lambda * std::f64::consts::TAU + 0.5 * l1;
    let one = Complex64::new(1.0, 0.0);
    let (ch, sh) = (w.cosh(), w.sinh());
    TransferMatrix::new(one - ch, sh, sh, one - ch)
}

mod compensated {
    //! Double-double accumulation of long matrix products.

    use super::TransferMatrix;
    use num_complex::Complex64;

    #[derive(Clone, Copy)]
    struct Dd {
        hi: f64,
        lo: f64,
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd {
            hi: s,
            lo: b - (s - a),
        }
    }

    impl Dd {
        const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };

        fn from(x: f64) -> Dd {
            Dd { hi: x, lo: 0.0 }
        }

        fn add(self, b: Dd) -> Dd {
            let (s, e) = two_sum(self.hi, b.hi);
            quick_two_sum(s, e + self.lo + b.lo)
        }

        fn neg(self) -> Dd {
            Dd {
                hi: -self.hi,
                lo: -self.lo,
            }
        }

        fn mul(self, b: Dd) -> Dd {
            let p = self.hi * b.hi;
            let e = self.hi.mul_add(b.hi, -p);
            quick_two_sum(p, e + self.hi * b.lo + self.lo * b.hi)
        }
    }

    #[derive(Clone, Copy)]
    struct Cdd {
        re: Dd,
        im: Dd,
    }

    impl Cdd {
        const ZERO: Cdd = Cdd {
            re: Dd::ZERO,
            im: Dd::ZERO,
        };

        fn from(z: Complex64) -> Cdd {
            Cdd {
                re: Dd::from(z.re),
                im: Dd::from(z.im),
            }
        }

        fn add(self, b: Cdd) -> Cdd {
            Cdd {
                re: self.re.add(b.re),
                im: self.im.add(b.im),
            }
        }

        fn mul(self, b: Cdd) -> Cdd {
            Cdd {
                re: self.re.mul(b.re).add(self.im.mul(b.im).neg()),
                im: self.re.mul(b.im).add(self.im.mul(b.re)),
            }
        }

        fn to_c64(self) -> Complex64 {
            Complex64::new(self.re.hi + self.re.lo, self.im.hi + self.im.lo)
        }
    }

    type M = [[Cdd; 2]; 2];

    fn lift(m: &TransferMatrix) -> M {
        [
            [Cdd::from(m.m11), Cdd::from(m.m12)],
            [Cdd::from(m.m21), Cdd::from(m.m22)],
        ]
    }

    fn mul(a: &M, b: &M) -> M {
        let mut out = [[Cdd::ZERO; 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0].mul(b[0][j]).add(a[i][1].mul(b[1][j]));
            }
        }
        out
    }

    /// `segs[n-1] · … · segs[0]`.
    pub(super) fn ordered_product(segs: &[TransferMatrix]) -> TransferMatrix {
        let mut acc = lift(&TransferMatrix::identity());
        for s in segs {
            acc = mul(&lift(s), &acc);
        }
        TransferMatrix::new(
            acc[0][0].to_c64(),
            acc[0][1].to_c64(),
            acc[1][0].to_c64(),
            acc[1][1].to_c64(),
        )
    }
}
