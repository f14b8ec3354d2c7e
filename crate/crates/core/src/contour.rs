//! Argument-principle machinery on rectangles and circles.

use std::f64::consts::TAU;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Axis-aligned rectangle in the complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Self {
        Self {
            re_min,
            re_max,
            im_min,
            im_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn diameter(&self) -> f64 {
        self.width().hypot(self.height())
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new(
            0.5 * (self.re_min + self.re_max),
            0.5 * (self.im_min + self.im_max),
        )
    }

    pub fn contains(&self, z: Complex64, pad: f64) -> bool {
        z.re >= self.re_min - pad
            && z.re <= self.re_max + pad
            && z.im >= self.im_min - pad
            && z.im <= self.im_max + pad
    }

    pub fn dilate(&self, d: f64) -> Self {
        Self::new(
            self.re_min - d,
            self.re_max + d,
            self.im_min - d,
            self.im_max + d,
        )
    }

    /// Quadrisection at fractional positions `(fx, fy)` of the width and height.
    pub fn split(&self, fx: f64, fy: f64) -> [Rect; 4] {
        let xm = self.re_min + fx * self.width();
        let ym = self.im_min + fy * self.height();
        [
            Rect::new(self.re_min, xm, self.im_min, ym),
            Rect::new(xm, self.re_max, self.im_min, ym),
            Rect::new(self.re_min, xm, ym, self.im_max),
            Rect::new(xm, self.re_max, ym, self.im_max),
        ]
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }
}

/// A function value with the magnitude scale its rounding error is relative to.
#[derive(Debug, Clone, Copy)]
pub struct Sample {
    pub value: Complex64,
    pub scale: f64,
}

const SAMPLES_PER_UNIT: f64 = 24.0;
const MAX_ARG_STEP: f64 = 0.4;
const MAX_DEPTH: u32 = 14;

struct Tracker<'a, F> {
    f: &'a F,
    threshold: f64,
}

impl<F: Fn(Complex64) -> Sample> Tracker<'_, F> {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        let s = (self.f)(z);
        if !s.value.is_finite() || s.value.norm() <= self.threshold * s.scale.max(1.0) {
            return Err(Error::UnresolvableBoundary);
        }
        Ok(s.value)
    }

    // accumulated arg change from a to b, with f(a) = fa and f(b) = fb
    fn segment(
        &self,
        a: Complex64,
        fa: Complex64,
        b: Complex64,
        fb: Complex64,
        depth: u32,
    ) -> Result<f64> {
        let step = (fb / fa).arg();
        let mag_jump = (fb.norm() / fa.norm()).ln().abs();
        if (step.abs() <= MAX_ARG_STEP && mag_jump <= 1.5) || depth >= MAX_DEPTH {
            return Ok(step);
        }
        let m = 0.5 * (a + b);
        let fm = self.eval(m)?;
        Ok(self.segment(a, fa, m, fm, depth + 1)? + self.segment(m, fm, b, fb, depth + 1)?)
    }
}

/// Winding number of `f` around the rectangle boundary.
///
/// Fails with [`Error::UnresolvableBoundary`] if `|f|` falls below
/// `threshold · max(1, scale)` at any sample point.
pub fn winding_rect<F: Fn(Complex64) -> Sample>(f: &F, rect: &Rect, threshold: f64) -> Result<i64> {
    let tracker = Tracker { f, threshold };
    let corners = rect.corners();
    let mut total = 0.0;
    for e in 0..4 {
        let a = corners[e];
        let b = corners[(e + 1) % 4];
        let len = (b - a).norm();
        let n = ((len * SAMPLES_PER_UNIT).ceil() as usize).max(4);
        let mut prev_z = a;
        let mut prev_f = tracker.eval(a)?;
        for i in 1..=n {
            let z = a + (b - a) * (i as f64 / n as f64);
            let fz = tracker.eval(z)?;
            total += tracker.segment(prev_z, prev_f, z, fz, 0)?;
            prev_z = z;
            prev_f = fz;
        }
    }
    let turns = total / TAU;
    let rounded = turns.round();
    if (turns - rounded).abs() > 1e-3 {
        return Err(Error::NonConvergence(format!(
            "winding number {turns} is not near an integer"
        )));
    }
    Ok(rounded as i64)
}

/// Power sums `Σ zₖ^p` (p = 0..=max_power) of the zeros of `f` inside the
/// circle `|z − center| = radius`, by trapezoid quadrature of `zᵖ f′/f`.
/// Powers are taken about `center`.
pub fn circle_moments<F: Fn(Complex64) -> (Complex64, Complex64)>(
    f_df: &F,
    center: Complex64,
    radius: f64,
    nodes: usize,
    max_power: usize,
) -> Vec<Complex64> {
    let mut sums = vec![Complex64::new(0.0, 0.0); max_power + 1];
    for k in 0..nodes {
        let e = Complex64::from_polar(1.0, TAU * k as f64 / nodes as f64);
        let dz = e * radius;
        let (f, df) = f_df(center + dz);
        let w = df / f * dz;
        let mut pow = Complex64::new(1.0, 0.0);
        for s in sums.iter_mut() {
            *s += w * pow;
            pow *= dz;
        }
    }
    for s in sums.iter_mut() {
        *s /= nodes as f64;
    }
    sums
}

/// Roots of the monic polynomial whose roots have power sums `p[1..=m]`
/// (Newton identities followed by Durand–Kerner iteration).
pub fn roots_from_power_sums(p: &[Complex64], m: usize) -> Vec<Complex64> {
    // elementary symmetric polynomials e_0..e_m
    let mut e = vec![Complex64::new(0.0, 0.0); m + 1];
    e[0] = Complex64::new(1.0, 0.0);
    for k in 1..=m {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 1..=k {
            let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
            acc += e[k - i] * p[i] * sign;
        }
        e[k] = acc / k as f64;
    }
    // monic coefficients: z^m − e1 z^{m−1} + e2 z^{m−2} − …
    let coeffs: Vec<Complex64> = (0..=m)
        .map(|k| if k % 2 == 0 { e[k] } else { -e[k] })
        .collect();
    let eval = |z: Complex64| coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
    let bound = 1.0 + coeffs.iter().skip(1).fold(0.0f64, |m, c| m.max(c.norm()));
    let seed = Complex64::from_polar(0.4 * bound.min(1.0) + 0.1, 0.9);
    let mut z: Vec<Complex64> = (0..m).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..500 {
        let mut delta = 0.0f64;
        for i in 0..m {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..m {
                if i != j {
                    denom *= z[i] - z[j];
                }
            }
            let step = eval(z[i]) / denom;
            z[i] -= step;
            delta = delta.max(step.norm());
        }
        if delta < 1e-15 {
            break;
        }
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_sample(roots: Vec<Complex64>) -> impl Fn(Complex64) -> Sample {
        move |z| Sample {
            value: roots.iter().fold(Complex64::new(1.0, 0.0), |acc, r| acc * (z - r)),
            scale: 1.0,
        }
    }

    #[test]
    fn counts_polynomial_roots() {
        let roots = vec![
            Complex64::new(0.1, 0.2),
            Complex64::new(0.1, 0.2),
            Complex64::new(-0.7, 0.4),
            Complex64::new(3.0, 0.0),
        ];
        let f = poly_sample(roots);
        let r = Rect::new(-1.0, 1.0, -1.0, 1.0);
        assert_eq!(winding_rect(&f, &r, 1e-12).unwrap(), 3);
        assert_eq!(winding_rect(&f, &Rect::new(2.0, 4.0, -1.0, 1.0), 1e-12).unwrap(), 1);
        assert_eq!(winding_rect(&f, &Rect::new(-1.0, 0.0, -1.0, 0.0), 1e-12).unwrap(), 0);
        // root on the boundary
        assert_eq!(
            winding_rect(&f, &Rect::new(3.0, 4.0, -1.0, 1.0), 1e-9),
            Err(Error::UnresolvableBoundary)
        );
    }

    #[test]
    fn moments_recover_cluster() {
        let a = Complex64::new(0.3, -0.1);
        let b = Complex64::new(0.31, -0.12);
        let far = Complex64::new(5.0, 1.0);
        let f = move |z: Complex64| {
            let v = (z - a) * (z - b) * (z - far);
            let dv = (z - b) * (z - far) + (z - a) * (z - far) + (z - a) * (z - b);
            (v, dv)
        };
        let c = Complex64::new(0.3, -0.1);
        let m = circle_moments(&f, c, 0.1, 64, 2);
        assert!((m[0] - 2.0).norm() < 1e-12);
        let mut roots = roots_from_power_sums(&m, 2);
        roots.sort_by(|x, y| x.re.total_cmp(&y.re));
        assert!((roots[0] + c - a).norm() < 1e-10);
        assert!((roots[1] + c - b).norm() < 1e-10);
    }
}
