//! Piecewise-constant jump rates on the torus of length 2π.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use rand::Rng;

use crate::error::{Error, Result};

/// Breakpoints closer than this are treated as coincident.
pub const BREAKPOINT_TOL: f64 = 1e-12;

/// Default number of cells when sampling a smooth jump rate.
pub const DEFAULT_CELLS: usize = 64;

fn validate_breakpoints(breakpoints: &mut [f64], n_values: usize) -> Result<()> {
    if n_values == 0 {
        return Err(Error::Format("a profile needs at least one cell".into()));
    }
    if breakpoints.len() != n_values + 1 {
        return Err(Error::Format(format!(
            "{} breakpoints given for {} values (expected {})",
            breakpoints.len(),
            n_values,
            n_values + 1
        )));
    }
    if breakpoints.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format("breakpoints must be finite".into()));
    }
    let last = breakpoints.len() - 1;
    if breakpoints[0].abs() > BREAKPOINT_TOL {
        return Err(Error::Format(format!(
            "first breakpoint must be 0, got {}",
            breakpoints[0]
        )));
    }
    if (breakpoints[last] - TAU).abs() > BREAKPOINT_TOL {
        return Err(Error::Format(format!(
            "last breakpoint must be 2π, got {}",
            breakpoints[last]
        )));
    }
    breakpoints[0] = 0.0;
    breakpoints[last] = TAU;
    if breakpoints.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Format(
            "breakpoints must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Reduces `x` to `[0, 2π)`.
pub fn wrap(x: f64) -> f64 {
    let r = x.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

fn locate(breakpoints: &[f64], x: f64) -> usize {
    let x = wrap(x);
    // index of the cell [x_{k}, x_{k+1}) containing x
    let idx = breakpoints.partition_point(|&b| b <= x);
    idx.saturating_sub(1).min(breakpoints.len() - 2)
}

fn merge_breakpoints(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut all: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    all.sort_by(|x, y| x.total_cmp(y));
    let mut merged: Vec<f64> = Vec::with_capacity(all.len());
    for x in all {
        match merged.last() {
            Some(&prev) if (x - prev).abs() <= BREAKPOINT_TOL => {}
            _ => merged.push(x),
        }
    }
    let n = merged.len();
    merged[0] = 0.0;
    merged[n - 1] = TAU;
    merged
}

fn shifted_cells(breakpoints: &[f64], values: &[f64], offset: f64) -> (Vec<f64>, Vec<f64>) {
    // f(x - offset): cell [a, b) moves to [a + offset, b + offset) mod 2π
    let mut pieces: Vec<(f64, f64, f64)> = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        let a = breakpoints[k] + offset;
        let b = breakpoints[k + 1] + offset;
        let shift = (a / TAU).floor() * TAU;
        let (a, b) = (a - shift, b - shift);
        if b <= TAU + BREAKPOINT_TOL {
            pieces.push((a, b.min(TAU), v));
        } else {
            pieces.push((a, TAU, v));
            pieces.push((0.0, b - TAU, v));
        }
    }
    pieces.retain(|p| p.1 - p.0 > BREAKPOINT_TOL);
    pieces.sort_by(|p, q| p.0.total_cmp(&q.0));
    let mut bps = vec![0.0];
    let mut vals = Vec::with_capacity(pieces.len());
    for (_, b, v) in pieces {
        bps.push(b);
        vals.push(v);
    }
    let n = bps.len();
    bps[n - 1] = TAU;
    (bps, vals)
}

/// Nonnegative piecewise-constant jump rate σ on `[0, 2π)`.
///
/// Cell `k` covers `[breakpoints[k], breakpoints[k + 1])` and carries `values[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaProfile {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl SigmaProfile {
    /// Builds a validated profile from `K + 1` breakpoints and `K` values.
    pub fn new(mut breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_breakpoints(&mut breakpoints, values.len())?;
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Domain(format!(
                "jump rate values must be finite and nonnegative, got {v}"
            )));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0.0, TAU], vec![value])
    }

    /// Profile on `values.len()` equal cells.
    pub fn uniform(values: Vec<f64>) -> Result<Self> {
        let k = values.len();
        if k == 0 {
            return Err(Error::Format("a profile needs at least one cell".into()));
        }
        let breakpoints = (0..=k).map(|i| TAU * i as f64 / k as f64).collect();
        Self::new(breakpoints, values)
    }

    /// Samples a smooth rate at the midpoints of `cells` equal cells.
    pub fn from_fn<F: Fn(f64) -> f64>(f: F, cells: usize) -> Result<Self> {
        let h = TAU / cells as f64;
        Self::uniform((0..cells).map(|i| f((i as f64 + 0.5) * h)).collect())
    }

    /// Random profile with `1..=max_cells` cells at random breakpoints and values in `[0, max_value]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, max_cells: usize, max_value: f64) -> Self {
        let k = rng.gen_range(1..=max_cells.max(1));
        let mut cuts: Vec<f64> = Vec::with_capacity(k + 1);
        while cuts.len() < k - 1 {
            let x = rng.gen_range(0.05..(TAU - 0.05));
            if cuts.iter().all(|c| (c - x).abs() > 0.05) {
                cuts.push(x);
            }
        }
        cuts.sort_by(|a, b| a.total_cmp(b));
        let mut breakpoints = vec![0.0];
        breakpoints.extend(cuts);
        breakpoints.push(TAU);
        let values = (0..k).map(|_| rng.gen_range(0.0..=max_value)).collect();
        Self::new(breakpoints, values).expect("random profile is valid by construction")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of cells.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Iterates `(left, right, value)` over the cells.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (self.breakpoints[k], self.breakpoints[k + 1], v))
    }

    /// Value at `x`, right-continuous and 2π-periodic.
    /// Averages of σ over the `n` uniform cells `[2πi/n, 2π(i+1)/n)`.
    pub fn cell_averages(&self, n: usize) -> Vec<f64> {
        let h = TAU / n as f64;
        let mut out = vec![0.0; n];
        for (a, b, v) in self.cells() {
            let first = (a / h).floor() as usize;
            let last = ((b / h).ceil() as usize).min(n);
            for (i, o) in out.iter_mut().enumerate().take(last).skip(first) {
                let lo = a.max(i as f64 * h);
                let hi = b.min((i + 1) as f64 * h);
                if hi > lo {
                    *o += v * (hi - lo) / h;
                }
            }
        }
        out
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[locate(&self.breakpoints, x)]
    }

    /// ‖σ‖₁ = ∫₀^{2π} σ(x) dx.
    pub fn l1_norm(&self) -> f64 {
        self.cells().map(|(a, b, v)| v * (b - a)).sum()
    }

    /// ‖σ‖_∞.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Whether all cell values coincide.
    pub fn is_constant(&self) -> bool {
        self.values.iter().all(|&v| v == self.values[0])
    }

    /// σ(x − offset).
    pub fn shifted(&self, offset: f64) -> Self {
        let (b, v) = shifted_cells(&self.breakpoints, &self.values, offset);
        Self::new(b, v).expect("shift preserves validity")
    }

    /// Profile of σ + ε·η on the merged breakpoint set.
    ///
    /// Breakpoints contributed only by η are dropped again where the
    /// perturbed values on both sides agree, so `perturb(η, 0.0)` returns `self`.
    pub fn perturb(&self, eta: &SigmaDirection, eps: f64) -> Result<Self> {
        let merged = merge_breakpoints(&self.breakpoints, &eta.breakpoints);
        let mut values: Vec<f64> = merged
            .windows(2)
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                self.eval(mid) + eps * eta.eval(mid)
            })
            .collect();
        let scale = self.sup_norm().max(eps.abs() * eta.sup_abs()).max(1.0);
        for v in values.iter_mut() {
            if *v < 0.0 {
                if *v > -1e-14 * scale {
                    *v = 0.0;
                } else {
                    return Err(Error::Domain(format!(
                        "perturbed jump rate is negative ({v}); not a valid jump rate"
                    )));
                }
            }
        }
        let own = |x: f64| {
            self.breakpoints
                .iter()
                .any(|&b| (b - x).abs() <= BREAKPOINT_TOL)
        };
        let mut bps = vec![merged[0]];
        let mut vals = vec![values[0]];
        for i in 1..values.len() {
            if values[i] == *vals.last().unwrap() && !own(merged[i]) {
                continue;
            }
            bps.push(merged[i]);
            vals.push(values[i]);
        }
        bps.push(TAU);
        Self::new(bps, vals)
    }

    /// Serializes to the plain-text profile format.
    pub fn to_text(&self) -> String {
        let mut out = String::from("# x_break value\n");
        for (a, _, v) in self.cells() {
            writeln!(out, "{a:?} {v:?}").unwrap();
        }
        out.push_str("2π —\n");
        out
    }

    /// Parses the plain-text profile format: one `x_break value` line per cell,
    /// a final `2π —` line, `#` comments and blank lines ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut breakpoints = Vec::new();
        let mut values = Vec::new();
        let mut closed = false;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if closed {
                return Err(Error::Format(format!(
                    "line {}: content after the closing 2π line",
                    lineno + 1
                )));
            }
            let mut tokens = line.split_whitespace();
            let x = parse_position(tokens.next().unwrap()).ok_or_else(|| {
                Error::Format(format!("line {}: bad breakpoint '{raw}'", lineno + 1))
            })?;
            let value_tok = tokens.next();
            if tokens.next().is_some() {
                return Err(Error::Format(format!(
                    "line {}: expected 'x_break value'",
                    lineno + 1
                )));
            }
            match value_tok {
                None | Some("—") | Some("-") | Some("–") => {
                    breakpoints.push(x);
                    closed = true;
                }
                Some(tok) => {
                    let v: f64 = tok.parse().map_err(|_| {
                        Error::Format(format!("line {}: bad value '{tok}'", lineno + 1))
                    })?;
                    breakpoints.push(x);
                    values.push(v);
                }
            }
        }
        if !closed {
            return Err(Error::Format("missing closing '2π —' line".into()));
        }
        Self::new(breakpoints, values)
    }
}

fn parse_position(tok: &str) -> Option<f64> {
    match tok {
        "2π" | "2pi" | "tau" | "τ" => Some(TAU),
        "π" | "pi" => Some(TAU / 2.0),
        _ => tok.parse().ok(),
    }
}

/// Piecewise-constant perturbation direction η (may change sign).
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaDirection {
    breakpoints: Vec<f64>,
    values: Vec<f64>,
}

impl SigmaDirection {
    pub fn new(mut breakpoints: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        validate_breakpoints(&mut breakpoints, values.len())?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("direction values must be finite".into()));
        }
        Ok(Self {
            breakpoints,
            values,
        })
    }

    pub fn constant(value: f64) -> Self {
        Self::new(vec![0.0, TAU], vec![value]).expect("constant direction")
    }

    /// Indicator of `[a, b)` with `0 ≤ a < b ≤ 2π`.
    pub fn indicator(a: f64, b: f64) -> Result<Self> {
        if !(0.0..TAU).contains(&a) || b <= a || b > TAU + BREAKPOINT_TOL {
            return Err(Error::Domain(format!("bad indicator interval [{a}, {b})")));
        }
        let mut bps = vec![0.0];
        let mut vals = Vec::new();
        if a > BREAKPOINT_TOL {
            bps.push(a);
            vals.push(0.0);
        }
        vals.push(1.0);
        if b < TAU - BREAKPOINT_TOL {
            bps.push(b);
            vals.push(0.0);
        }
        bps.push(TAU);
        Self::new(bps, vals)
    }

    /// Indicator of cell `k` of `profile`.
    pub fn cell_indicator(profile: &SigmaProfile, k: usize) -> Self {
        let b = profile.breakpoints();
        Self::indicator(b[k], b[k + 1]).expect("profile cell is a valid interval")
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(k, &v)| (self.breakpoints[k], self.breakpoints[k + 1], v))
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.values[locate(&self.breakpoints, x)]
    }

    /// ∫₀^{2π} η(x) dx.
    pub fn integral(&self) -> f64 {
        self.cells().map(|(a, b, v)| v * (b - a)).sum()
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn shifted(&self, offset: f64) -> Self {
        let (b, v) = shifted_cells(&self.breakpoints, &self.values, offset);
        Self::new(b, v).expect("shift preserves validity")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_profile_norms() {
        let p = SigmaProfile::new(vec![0.0, TAU], vec![2.0]).unwrap();
        assert!((p.l1_norm() - 4.0 * PI).abs() < 1e-14);
        assert_eq!(SigmaProfile::constant(0.0).unwrap().l1_norm(), 0.0);
    }

    #[test]
    fn step_profiles() {
        let half = SigmaProfile::new(vec![0.0, PI, TAU], vec![0.0, 4.0]).unwrap();
        assert!((half.l1_norm() - 4.0 * PI).abs() < 1e-14);
        let two = SigmaProfile::new(vec![0.0, PI, TAU], vec![1.0, 3.0]).unwrap();
        assert!((two.l1_norm() - 4.0 * PI).abs() < 1e-14);
        assert_eq!(two.eval(0.0), 1.0);
        assert_eq!(two.eval(PI), 3.0);
        assert_eq!(two.eval(PI - 1e-9), 1.0);
        assert_eq!(two.eval(TAU), 1.0);
        assert_eq!(two.eval(-0.5), 3.0);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            SigmaProfile::new(vec![0.0, TAU], vec![-1.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            SigmaProfile::new(vec![0.0, 4.0, 3.0, TAU], vec![1.0, 1.0, 1.0]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            SigmaProfile::new(vec![0.0, 1.0, TAU], vec![1.0]),
            Err(Error::Format(_))
        ));
        assert!(matches!(
            SigmaProfile::new(vec![0.1, TAU], vec![1.0]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn perturb_examples() {
        let p = SigmaProfile::constant(2.0).unwrap();
        let q = p.perturb(&SigmaDirection::constant(1.0), 0.5).unwrap();
        assert_eq!(q, SigmaProfile::constant(2.5).unwrap());
        assert!(matches!(
            p.perturb(&SigmaDirection::constant(-1.0), 3.0),
            Err(Error::Domain(_))
        ));
        let one = SigmaProfile::constant(1.0).unwrap();
        let ind = SigmaDirection::indicator(0.0, PI).unwrap();
        let r = one.perturb(&ind, 1.0).unwrap();
        assert_eq!(r.breakpoints(), &[0.0, PI, TAU]);
        assert_eq!(r.values(), &[2.0, 1.0]);
        assert_eq!(one.perturb(&ind, 0.0).unwrap(), one);
    }

    #[test]
    fn text_format() {
        let p = SigmaProfile::new(vec![0.0, 1.0, PI, TAU], vec![0.5, 0.0, 7.25]).unwrap();
        let text = p.to_text();
        assert!(text.ends_with("2π —\n"));
        assert_eq!(SigmaProfile::from_text(&text).unwrap(), p);
        let parsed = SigmaProfile::from_text("# half\n0 0\npi 4 # damped half\n2pi -\n").unwrap();
        assert_eq!(parsed.values(), &[0.0, 4.0]);
        assert!(SigmaProfile::from_text("0 1\n").is_err());
        assert!(SigmaProfile::from_text("0 x\n2π —\n").is_err());
    }

    #[test]
    fn shift_wraps_cells() {
        let p = SigmaProfile::new(vec![0.0, 1.0, TAU], vec![3.0, 1.0]).unwrap();
        let s = p.shifted(TAU - 0.5);
        assert!((s.l1_norm() - p.l1_norm()).abs() < 1e-12);
        for i in 0..50 {
            let x = 0.1 + i as f64 * 0.12;
            assert_eq!(s.eval(x + TAU - 0.5), p.eval(x));
        }
    }

    #[test]
    fn smooth_sampling_uses_midpoints() {
        let p = SigmaProfile::from_fn(|x| 1.0 + x.cos(), DEFAULT_CELLS).unwrap();
        assert_eq!(p.len(), DEFAULT_CELLS);
        let h = TAU / DEFAULT_CELLS as f64;
        assert_eq!(p.values()[3], 1.0 + (3.5 * h).cos());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn profile() -> impl Strategy<Value = SigmaProfile> {
            prop::collection::vec(0.0..10.0f64, 1..12).prop_map(|v| SigmaProfile::uniform(v).unwrap())
        }

        proptest! {
            #[test]
            fn periodic_evaluation(p in profile(), x in 0.0..TAU) {
                prop_assert_eq!(p.eval(x), p.eval(x + TAU));
                prop_assert_eq!(p.eval(x), p.eval(x - TAU));
            }

            #[test]
            fn l1_is_linear_under_perturbation(p in profile(), a in 0.0..3.0f64, len in 0.1..3.0f64, eps in 0.0..2.0f64) {
                let eta = SigmaDirection::indicator(a, a + len).unwrap();
                let q = p.perturb(&eta, eps).unwrap();
                prop_assert!((q.l1_norm() - p.l1_norm() - eps * eta.integral()).abs() < 1e-11);
                prop_assert_eq!(p.perturb(&eta, 0.0).unwrap(), p);
            }

            #[test]
            fn text_round_trip(p in profile()) {
                prop_assert_eq!(SigmaProfile::from_text(&p.to_text()).unwrap(), p);
            }
        }
    }
}
