//! Eigenvalues of the generator as zeros of `det M(σ, λ)`.
//!
//! Zeros are isolated by argument-principle counting on recursively
//! quadrisected rectangles. Boxes holding a single zero are finished by
//! Newton iteration with the exact λ-derivative of the monodromy; boxes that
//! keep several zeros down to the minimum box size are resolved from contour
//! moments, which stay well conditioned at multiple roots.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;

use crate::contour::{circle_moments, roots_from_power_sums, winding_rect, Sample};
pub use crate::contour::Rect;
use crate::error::{Error, Result};
use crate::par;
use crate::profile::SigmaProfile;
use crate::transfer::{asymptotic_m, det_m_dlambda, m_matrix, monodromy, monodromy_dlambda, solve_transfer};

/// A zero of `det M` treated as one eigenvalue of the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenvalueRecord {
    pub lambda: Complex64,
    /// Order of the zero of `det M` (winding count of its isolating contour).
    pub multiplicity: usize,
    /// Dimension of `ker M(σ, λ)`, i.e. the number of independent eigenvectors.
    pub kernel_dim: usize,
    /// `|det M(σ, λ)|`.
    pub residual: f64,
    /// False when Newton failed and the location comes from direct `|det M|` minimization.
    pub converged: bool,
}

/// Tuning of the zero finder.
#[derive(Debug, Clone, Copy)]
pub struct SolverOptions {
    /// Newton stops once `|det M| ≤ tol · max(1, ‖S‖)` or the step stalls.
    pub tol: f64,
    /// Boxes with several zeros are not split below this diameter.
    pub min_box: f64,
    /// `|det M|` below this (relative to `max(1, ‖S‖)`) on a contour is treated as a boundary zero.
    pub boundary_threshold: f64,
    /// Outward dilations of size 1e-6 tried when a contour hits a zero.
    pub max_dilations: usize,
    /// Zeros closer than this are merged into one multiple record.
    pub merge_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            min_box: 1e-3,
            boundary_threshold: 1e-9,
            max_dilations: 5,
            merge_tol: 1e-6,
        }
    }
}

const DILATION: f64 = 1e-6;
const SPLIT_FRACTIONS: [(f64, f64); 4] = [
    (0.5173, 0.4619),
    (0.4431, 0.5387),
    (0.6029, 0.3911),
    (0.3697, 0.6263),
];
const NEWTON_MAX_ITERS: usize = 50;
const MOMENT_NODES: usize = 96;
const CLUSTER_GROWTH_STEPS: usize = 5;

fn sample(profile: &SigmaProfile, lambda: Complex64) -> Sample {
    let s = monodromy(profile, lambda);
    Sample {
        value: Complex64::new(2.0, 0.0) - s.trace(),
        scale: s.max_abs(),
    }
}

fn winding(profile: &SigmaProfile, rect: &Rect, opts: &SolverOptions) -> Result<i64> {
    winding_rect(&|z| sample(profile, z), rect, opts.boundary_threshold)
}

/// Number of zeros of `det M` inside `rect`, counted with multiplicity.
pub fn count_zeros(profile: &SigmaProfile, rect: &Rect) -> Result<usize> {
    count_zeros_with(profile, rect, &SolverOptions::default()).map(|(n, _)| n)
}

/// Like [`count_zeros`], also returning the (possibly dilated) rectangle that was used.
pub fn count_zeros_with(
    profile: &SigmaProfile,
    rect: &Rect,
    opts: &SolverOptions,
) -> Result<(usize, Rect)> {
    let mut r = *rect;
    for _ in 0..=opts.max_dilations {
        match winding(profile, &r, opts) {
            Ok(n) if n >= 0 => return Ok((n as usize, r)),
            Ok(n) => {
                return Err(Error::Inconsistency(format!(
                    "negative winding number {n} for an analytic function"
                )))
            }
            Err(Error::UnresolvableBoundary) => r = r.dilate(DILATION),
            Err(e) => return Err(e),
        }
    }
    Err(Error::UnresolvableBoundary)
}

struct Newton {
    lambda: Complex64,
    converged: bool,
}

fn newton(profile: &SigmaProfile, start: Complex64, order: usize, tol: f64, max_step: f64) -> Newton {
    let mut z = start;
    let mut last = det_m_dlambda(profile, z);
    for _ in 0..NEWTON_MAX_ITERS {
        let (f, df, scale) = last;
        if f.norm() <= tol * scale.max(1.0) * 1e-3 || df.norm() == 0.0 {
            break;
        }
        let mut step = f / df * order as f64;
        if step.norm() > max_step {
            step *= max_step / step.norm();
        }
        z -= step;
        last = det_m_dlambda(profile, z);
        if step.norm() <= 1e-14 * (1.0 + z.norm()) {
            break;
        }
    }
    let (f, _, scale) = last;
    Newton {
        lambda: z,
        converged: f.is_finite() && f.norm() <= tol * scale.max(1.0),
    }
}

// Nelder–Mead style pattern search on |det M| within a rectangle.
fn minimize_abs(profile: &SigmaProfile, rect: &Rect) -> Complex64 {
    let f = |z: Complex64| sample(profile, z).value.norm();
    let mut best = rect.center();
    let mut fb = f(best);
    let mut h = 0.25 * rect.width().max(rect.height());
    let dirs = [
        Complex64::new(1.0, 0.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
        Complex64::new(0.0, -1.0),
    ];
    while h > 1e-15 * (1.0 + best.norm()) {
        let mut improved = false;
        for d in dirs {
            let z = best + d * h;
            let fz = f(z);
            if fz < fb {
                best = z;
                fb = fz;
                improved = true;
            }
        }
        if !improved {
            h *= 0.5;
        }
    }
    best
}

fn kernel_dim(profile: &SigmaProfile, lambda: Complex64) -> usize {
    let s = monodromy(profile, lambda);
    let m = crate::transfer::TransferMatrix::identity() - s;
    if m.norm() <= 1e-6 * s.max_abs().max(1.0) {
        2
    } else {
        1
    }
}

/// Refines a zero where `M` vanishes as a whole.
///
/// There `det M` vanishes to twice the order of the entries of `M`, so its rounding
/// floor hides the zero at `√ε` (or worse at coalescing pairs). Gauss–Newton on the
/// four entries recovers the accuracy; the result is kept only if `‖M‖` drops.
fn polish_full_kernel(profile: &SigmaProfile, start: Complex64) -> Complex64 {
    let entries = |m: &crate::transfer::TransferMatrix| [m.m11, m.m12, m.m21, m.m22];
    let mut z = start;
    let mut best = m_matrix(profile, z).norm();
    for _ in 0..NEWTON_MAX_ITERS {
        let (s, ds) = monodromy_dlambda(profile, z);
        let m = entries(&(crate::transfer::TransferMatrix::identity() - s));
        let dm = entries(&ds).map(|d| -d);
        let den: f64 = dm.iter().map(|d| d.norm_sqr()).sum();
        if den == 0.0 {
            break;
        }
        let num: Complex64 = m.iter().zip(&dm).map(|(a, d)| d.conj() * a).sum();
        // midway between a coalescing pair the full step overshoots
        let mut step = num / den;
        let mut accepted = false;
        for _ in 0..40 {
            let next = z - step;
            let r = m_matrix(profile, next).norm();
            if r < best && (next - start).norm() <= 1e-3 {
                z = next;
                best = r;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    z
}

fn make_record(profile: &SigmaProfile, lambda: Complex64, multiplicity: usize, converged: bool) -> EigenvalueRecord {
    EigenvalueRecord {
        lambda,
        multiplicity,
        kernel_dim: kernel_dim(profile, lambda),
        residual: sample(profile, lambda).value.norm(),
        converged,
    }
}

fn resolve_single(profile: &SigmaProfile, rect: &Rect, opts: &SolverOptions) -> Option<EigenvalueRecord> {
    let diam = rect.diameter();
    let starts = [
        rect.center(),
        Complex64::new(rect.re_min + 0.25 * rect.width(), rect.im_min + 0.25 * rect.height()),
        Complex64::new(rect.re_min + 0.75 * rect.width(), rect.im_min + 0.75 * rect.height()),
    ];
    for s in starts {
        let n = newton(profile, s, 1, opts.tol, 0.5 * diam.max(1e-6));
        if n.converged && rect.contains(n.lambda, 1e-9 * (1.0 + diam)) {
            return Some(make_record(profile, n.lambda, 1, true));
        }
    }
    None
}

fn resolve_cluster(profile: &SigmaProfile, rect: &Rect, count: usize, opts: &SolverOptions) -> Vec<EigenvalueRecord> {
    let center = rect.center();
    let f_df = |z: Complex64| {
        let (f, df, _) = det_m_dlambda(profile, z);
        (f, df)
    };
    let diam = rect.diameter();
    let encloses = |m: &[Complex64]| (m[0].re - count as f64).abs() <= 1e-3 && m[0].im.abs() <= 1e-3;
    // On a small circle a high-order zero leaves |det M| near its rounding floor, so
    // the circle is grown for as long as it encloses nothing but the cluster.
    let mut usable: Option<(f64, Vec<Complex64>)> = None;
    for radius in [0.75 * diam, 0.55 * diam, 1.5 * diam] {
        let m = circle_moments(&f_df, center, radius, MOMENT_NODES, count);
        if encloses(&m) {
            usable = Some((radius, m));
            break;
        }
    }
    if let Some((r0, _)) = usable {
        let mut radius = r0;
        for _ in 0..CLUSTER_GROWTH_STEPS {
            radius *= 4.0;
            let m = circle_moments(&f_df, center, radius, MOMENT_NODES, count);
            match moment_count(&m[0]) {
                MomentCount::Clean(k) if k == count => usable = Some((radius, m)),
                MomentCount::Clean(_) => break,
                MomentCount::Noisy => {}
            }
        }
    }
    if let Some((radius, m)) = usable {
        let k = count as f64;
        let mean = m[1] / k;
        let spread = m[2] / k - mean * mean;
        if spread.norm() <= opts.merge_tol * opts.merge_tol {
            return vec![make_record(profile, center + mean, count, true)];
        }
        let roots = roots_from_power_sums(&m, count);
        let mut out: Vec<EigenvalueRecord> = Vec::new();
        for r in roots {
            let guess = center + r;
            let n = newton(profile, guess, 1, opts.tol, 0.25 * radius);
            let z = if n.converged && (n.lambda - guess).norm() < radius {
                n.lambda
            } else {
                guess
            };
            match out.iter_mut().find(|o| (o.lambda - z).norm() <= opts.merge_tol) {
                Some(o) => o.multiplicity += 1,
                None => out.push(make_record(profile, z, 1, true)),
            }
        }
        return out;
    }
    // contour moments unusable: fall back to |det M| minimization
    vec![make_record(profile, minimize_abs(profile, rect), count, false)]
}

enum MomentCount {
    /// Zero count resolved to quadrature accuracy.
    Clean(usize),
    /// Too noisy to tell: `|det M|` near its rounding floor, or a zero close to the circle.
    Noisy,
}

fn moment_count(m0: &Complex64) -> MomentCount {
    let k = m0.re.round();
    let off = (m0.re - k).abs().max(m0.im.abs());
    if off <= 1e-6 && k >= 0.0 {
        MomentCount::Clean(k as usize)
    } else {
        MomentCount::Noisy
    }
}

/// Pieces closer than this are treated as fragments of one numerical cluster.
const FRAGMENT_RADIUS: f64 = 1e-3;

/// Replaces fragments of a coalesced zero by the centroid of contour moments.
///
/// Rounding splits a zero of order `m` into `m` numerical zeros at distance
/// `~ε^{1/m}`, and boxes may cut through them. The centroid of the power sums on a
/// circle much larger than that stays accurate, so the circle is grown until it
/// would enclose an unrelated eigenvalue.
fn recenter_clusters(profile: &SigmaProfile, records: Vec<EigenvalueRecord>, opts: &SolverOptions) -> Vec<EigenvalueRecord> {
    let f_df = |z: Complex64| {
        let (f, df, _) = det_m_dlambda(profile, z);
        (f, df)
    };
    let suspect = |i: usize| {
        let r = &records[i];
        !r.converged
            || (r.kernel_dim == 2 && r.multiplicity == 1)
            || records
                .iter()
                .enumerate()
                .any(|(j, o)| j != i && (o.lambda - r.lambda).norm() <= FRAGMENT_RADIUS)
    };
    let mut absorbed = vec![false; records.len()];
    let mut out = Vec::with_capacity(records.len());
    for i in 0..records.len() {
        if absorbed[i] {
            continue;
        }
        if !suspect(i) {
            out.push(records[i].clone());
            continue;
        }
        let center = records[i].lambda;
        let group: Vec<usize> = (0..records.len())
            .filter(|&j| !absorbed[j] && (records[j].lambda - center).norm() <= FRAGMENT_RADIUS)
            .collect();
        let count: usize = group.iter().map(|&j| records[j].multiplicity).sum();
        let mut best: Option<Vec<Complex64>> = None;
        let mut radius = 2.0 * FRAGMENT_RADIUS;
        for _ in 0..8 {
            let others = records
                .iter()
                .enumerate()
                .any(|(j, o)| !group.contains(&j) && (o.lambda - center).norm() <= 1.5 * radius);
            if others {
                break;
            }
            let m = circle_moments(&f_df, center, radius, MOMENT_NODES, 2);
            match moment_count(&m[0]) {
                MomentCount::Clean(k) if k == count => best = Some(m),
                // a zero the records do not account for
                MomentCount::Clean(_) => break,
                MomentCount::Noisy => {}
            }
            radius *= 4.0;
        }
        let merged = best.and_then(|m| {
            let k = count as f64;
            let mean = m[1] / k;
            let spread = m[2] / k - mean * mean;
            (spread.norm() <= opts.merge_tol * opts.merge_tol).then_some(center + mean)
        });
        match merged {
            Some(z) => {
                for &j in &group {
                    absorbed[j] = true;
                }
                out.push(make_record(profile, z, count, true));
            }
            None => out.push(records[i].clone()),
        }
    }
    sort_records(&mut out);
    out
}

enum Outcome {
    Found(Vec<EigenvalueRecord>),
    Split(Vec<(Rect, usize)>),
}

fn process(profile: &SigmaProfile, rect: &Rect, count: usize, opts: &SolverOptions) -> Outcome {
    if count == 0 {
        return Outcome::Found(Vec::new());
    }
    if count == 1 {
        if let Some(r) = resolve_single(profile, rect, opts) {
            return Outcome::Found(vec![r]);
        }
    }
    let diam = rect.diameter();
    if count >= 2 && diam <= opts.min_box {
        return Outcome::Found(resolve_cluster(profile, rect, count, opts));
    }
    if diam <= 1e-9 {
        return Outcome::Found(vec![make_record(profile, minimize_abs(profile, rect), count, false)]);
    }
    // aspect-aware split: keep boxes roughly square
    for &(fx, fy) in SPLIT_FRACTIONS.iter() {
        let (fx, fy) = if rect.height() > 3.0 * rect.width() {
            (1.0, fy)
        } else if rect.width() > 3.0 * rect.height() {
            (fx, 1.0)
        } else {
            (fx, fy)
        };
        let children: Vec<Rect> = rect
            .split(fx, fy)
            .into_iter()
            .filter(|c| c.width() > 0.0 && c.height() > 0.0)
            .collect();
        let counts: Result<Vec<i64>> = children.iter().map(|c| winding(profile, c, opts)).collect();
        if let Ok(counts) = counts {
            let total: i64 = counts.iter().sum();
            if total == count as i64 && counts.iter().all(|&n| n >= 0) {
                return Outcome::Split(
                    children
                        .into_iter()
                        .zip(counts)
                        .filter(|(_, n)| *n > 0)
                        .map(|(c, n)| (c, n as usize))
                        .collect(),
                );
            }
        }
    }
    // no clean subdivision: this box is as far as counting can go
    if count == 1 {
        let z = minimize_abs(profile, rect);
        let n = newton(profile, z, 1, opts.tol, diam);
        let ok = n.converged && rect.contains(n.lambda, 1e-6);
        let z = if ok { n.lambda } else { z };
        return Outcome::Found(vec![make_record(profile, z, 1, ok)]);
    }
    Outcome::Found(resolve_cluster(profile, rect, count, opts))
}

fn sort_records(records: &mut [EigenvalueRecord]) {
    records.sort_by(|a, b| {
        b.lambda
            .re
            .total_cmp(&a.lambda.re)
            .then(a.lambda.im.total_cmp(&b.lambda.im))
    });
}

/// All zeros of `det M` in `rect`, including the mass mode at `λ = 0` when enclosed.
pub fn find_eigenvalues(profile: &SigmaProfile, rect: &Rect, tol: f64) -> Result<Vec<EigenvalueRecord>> {
    let opts = SolverOptions {
        tol,
        ..SolverOptions::default()
    };
    find_eigenvalues_with(profile, rect, &opts)
}

pub fn find_eigenvalues_with(
    profile: &SigmaProfile,
    rect: &Rect,
    opts: &SolverOptions,
) -> Result<Vec<EigenvalueRecord>> {
    let (count, rect) = count_zeros_with(profile, rect, opts)?;
    let mut queue = vec![(rect, count)];
    let mut found: Vec<EigenvalueRecord> = Vec::new();
    while !queue.is_empty() {
        let outcomes = par::map(&queue, |(r, n)| process(profile, r, *n, opts));
        queue = Vec::new();
        for o in outcomes {
            match o {
                Outcome::Found(v) => found.extend(v),
                Outcome::Split(children) => queue.extend(children),
            }
        }
    }
    // a full kernel needs a zero of order ≥ 2, so a lone root with one is a piece of
    // an unresolved cluster; merged centroids are already accurate and stay put
    let polished: Vec<bool> = found.iter().map(|r| r.kernel_dim == 2 && r.multiplicity == 1).collect();
    let refined = par::map(&found, |r| {
        if r.kernel_dim == 2 && r.multiplicity == 1 {
            make_record(profile, polish_full_kernel(profile, r.lambda), r.multiplicity, r.converged)
        } else {
            r.clone()
        }
    });
    let mut found: Vec<(EigenvalueRecord, bool)> = refined.into_iter().zip(polished).collect();
    found.sort_by(|a, b| {
        b.0.lambda
            .re
            .total_cmp(&a.0.lambda.re)
            .then(a.0.lambda.im.total_cmp(&b.0.lambda.im))
    });
    let mut merged: Vec<(EigenvalueRecord, bool)> = Vec::new();
    for (r, p) in found {
        let near = |m: &&mut (EigenvalueRecord, bool)| {
            let tol = if p && m.1 { 1e-7 } else { 1e-9 };
            (m.0.lambda - r.lambda).norm() <= tol * (1.0 + r.lambda.norm())
        };
        match merged.iter_mut().find(|m| near(m)) {
            // pieces of one cluster coalesce after polishing
            Some(m) if p && m.1 => m.0.multiplicity += r.multiplicity,
            // Newton from adjacent boxes can land on the same zero
            Some(_) => {}
            None => merged.push((r, p)),
        }
    }
    let merged: Vec<EigenvalueRecord> = merged.into_iter().map(|(r, _)| r).collect();
    let merged = recenter_clusters(profile, merged, opts);
    Ok(merged)
}

/// Zeros in `[re_min, re_max] × [−im_max, im_max]`, searched in the upper half
/// and completed by conjugation (the ODE coefficients are real).
pub fn find_eigenvalues_symmetric(
    profile: &SigmaProfile,
    re_min: f64,
    re_max: f64,
    im_max: f64,
    opts: &SolverOptions,
) -> Result<Vec<EigenvalueRecord>> {
    let below = 0.0437 * (1.0f64).min(im_max);
    let rect = Rect::new(re_min, re_max, -below, im_max);
    let half = find_eigenvalues_with(profile, &rect, opts)?;
    // Roots this close to the axis are snapped to it rather than mirrored: a nearly
    // double real root can come back as two members just below the axis, and every
    // root in the strip is counted once either way.
    let real_tol = 1e-6;
    let mut out = Vec::new();
    for mut r in half {
        if r.lambda.im < -real_tol {
            continue;
        }
        if r.lambda.im.abs() <= real_tol {
            r.lambda.im = 0.0;
            r.residual = sample(profile, r.lambda).value.norm();
            out.push(r);
        } else {
            let mut c = r.clone();
            c.lambda = r.lambda.conj();
            out.push(r);
            out.push(c);
        }
    }
    sort_records(&mut out);
    Ok(out)
}

/// Spectral gap search result.
#[derive(Debug, Clone)]
pub struct GapResult {
    /// Decay rate: `−sup Re` over the nontrivial spectrum.
    pub gap: f64,
    /// Eigenvalues with real part within the cluster tolerance of the maximum.
    pub leading: Vec<EigenvalueRecord>,
    /// `−‖σ‖₁/(4π)`, where high-frequency eigenvalues accumulate.
    pub accumulation_line: f64,
    pub search_box: Rect,
    /// Every nontrivial eigenvalue found in the search box.
    pub eigenvalues: Vec<EigenvalueRecord>,
    /// `‖M(σ, λ) − M_∞(λ)‖` at `λ = accumulation_line + i·im_cutoff`.
    pub asymptotic_discrepancy: f64,
    pub note: Option<String>,
}

impl GapResult {
    /// Total multiplicity (root order) of the leading cluster.
    pub fn cluster_root_count(&self) -> usize {
        self.leading.iter().map(|r| r.multiplicity).sum()
    }

    /// Number of independent eigenvectors in the leading cluster.
    pub fn cluster_multiplicity(&self) -> usize {
        self.leading.iter().map(|r| r.kernel_dim).sum()
    }
}

/// Options of the gap search.
#[derive(Debug, Clone, Copy)]
pub struct GapOptions {
    /// `None` selects `3·max(1, ‖σ‖₁/(4π)) + 10`.
    pub im_cutoff: Option<f64>,
    pub tol: f64,
    /// The box extends this far left of the accumulation line.
    pub left_margin: f64,
    pub cluster_tol: f64,
}

impl Default for GapOptions {
    fn default() -> Self {
        Self {
            im_cutoff: None,
            tol: 1e-10,
            left_margin: 0.05,
            cluster_tol: 1e-6,
        }
    }
}

pub fn default_im_cutoff(l1: f64) -> f64 {
    3.0 * (l1 / (4.0 * PI)).max(1.0) + 10.0
}

/// Whether `ker M(σ, 0)` is the mass direction `(1, 0)` only.
fn zero_is_mass_mode(profile: &SigmaProfile) -> bool {
    let m = m_matrix(profile, Complex64::new(0.0, 0.0));
    let v = m.smallest_singular_vector();
    m.norm() > 1e-12 && v[1].norm() <= 1e-9
}

/// Spectral gap in the mean-zero space.
pub fn spectral_gap(profile: &SigmaProfile, opts: &GapOptions) -> Result<GapResult> {
    let l1 = profile.l1_norm();
    let acc = -l1 / (4.0 * PI);
    let cutoff = opts.im_cutoff.unwrap_or_else(|| default_im_cutoff(l1));
    let right = 0.1;
    let search_box = Rect::new(acc - opts.left_margin, right, -cutoff, cutoff);
    let asym = {
        let z = Complex64::new(acc, cutoff);
        (m_matrix(profile, z) - asymptotic_m(l1, z)).norm()
    };
    if l1 == 0.0 {
        let zero = EigenvalueRecord {
            lambda: Complex64::new(0.0, 0.0),
            multiplicity: 2,
            kernel_dim: 2,
            residual: 0.0,
            converged: true,
        };
        return Ok(GapResult {
            gap: 0.0,
            leading: vec![zero.clone()],
            accumulation_line: 0.0,
            search_box,
            eigenvalues: vec![zero],
            asymptotic_discrepancy: asym,
            note: Some("σ ≡ 0: λ = 0 has the eigenvector (ρ, j) = (0, 1) in the mean-zero space".into()),
        });
    }
    let solver = SolverOptions {
        tol: opts.tol,
        ..SolverOptions::default()
    };
    let mut records = find_eigenvalues_symmetric(profile, search_box.re_min, right, cutoff, &solver)?;
    let mass = zero_is_mass_mode(profile);
    records.retain_mut(|r| {
        if r.lambda.norm() <= 1e-7 && mass {
            r.multiplicity -= 1;
            r.kernel_dim = r.kernel_dim.saturating_sub(1);
            r.multiplicity > 0
        } else {
            true
        }
    });
    let max_re = records.iter().map(|r| r.lambda.re).fold(f64::NEG_INFINITY, f64::max);
    let top = max_re.max(acc);
    let leading: Vec<EigenvalueRecord> = records
        .iter()
        .filter(|r| r.lambda.re >= top - opts.cluster_tol)
        .cloned()
        .collect();
    let note = leading.is_empty().then(|| {
        "no eigenvalue right of the accumulation line within the cutoff; gap set by the accumulation line".to_string()
    });
    Ok(GapResult {
        gap: -top,
        leading,
        accumulation_line: acc,
        search_box,
        eigenvalues: records,
        asymptotic_discrepancy: asym,
        note,
    })
}

/// Closed-form spectrum for constant σ: `−σ/2 ± √(σ²/4 − n²)` for `n = 1..=n_max`, and `−σ`.
///
/// Coincident values (σ = 2n) are listed twice.
pub fn constant_sigma_spectrum(sigma: f64, n_max: usize) -> Vec<Complex64> {
    let l1 = TAU * sigma;
    let a = l1 / (4.0 * PI);
    let mut out = Vec::with_capacity(2 * n_max + 1);
    for n in 1..=n_max {
        let disc = Complex64::new(a * a - (n * n) as f64, 0.0).sqrt();
        out.push(Complex64::new(-a, 0.0) + disc);
        out.push(Complex64::new(-a, 0.0) - disc);
    }
    out.push(Complex64::new(-l1 / TAU, 0.0));
    out
}

/// One sampled eigenfunction `(ρ₁, j₁)(x) = S(0 → x)(ρ₀, j₀)`.
#[derive(Debug, Clone)]
pub struct Mode {
    /// Initial value `(ρ₀, j₀)` with unit Euclidean norm.
    pub initial: [Complex64; 2],
    pub rho: Vec<Complex64>,
    pub j: Vec<Complex64>,
}

/// Eigenfunctions at one eigenvalue sampled on `x_i = 2π i / n`.
#[derive(Debug, Clone)]
pub struct Eigenfunction {
    pub lambda: Complex64,
    pub x: Vec<f64>,
    /// One mode when `ker M` is one-dimensional, two when `M` vanishes.
    pub modes: Vec<Mode>,
    pub degenerate: bool,
    pub mass_mode: bool,
}

/// Unit kernel vectors of `M(σ, λ)`: one, or the standard basis when `M` is numerically zero.
pub fn kernel_vectors(profile: &SigmaProfile, lambda: Complex64) -> Vec<[Complex64; 2]> {
    let s = monodromy(profile, lambda);
    let m = crate::transfer::TransferMatrix::identity() - s;
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    if m.norm() <= 1e-6 * s.max_abs().max(1.0) {
        return vec![[one, zero], [zero, one]];
    }
    let mut v = m.smallest_singular_vector();
    // fix the phase: largest component real and positive
    let big = if v[0].norm() >= v[1].norm() { v[0] } else { v[1] };
    let phase = big.conj() / big.norm();
    v = [v[0] * phase, v[1] * phase];
    vec![v]
}

fn propagate(profile: &SigmaProfile, lambda: Complex64, v0: [Complex64; 2], xs: &[f64]) -> Mode {
    let mut rho = Vec::with_capacity(xs.len());
    let mut j = Vec::with_capacity(xs.len());
    let mut prev_x = 0.0;
    let mut state = v0;
    for &x in xs {
        state = solve_transfer(profile, lambda, prev_x, x).apply(state);
        prev_x = x;
        rho.push(state[0]);
        j.push(state[1]);
    }
    Mode { initial: v0, rho, j }
}

/// Eigenfunctions at `record.lambda` sampled at `n_grid` points.
pub fn eigenvector(profile: &SigmaProfile, record: &EigenvalueRecord, n_grid: usize) -> Result<Eigenfunction> {
    if n_grid == 0 {
        return Err(Error::Domain("n_grid must be positive".into()));
    }
    let lambda = record.lambda;
    let scale = monodromy(profile, lambda).max_abs().max(1.0);
    if record.residual > 1e-6 * scale {
        return Err(Error::Domain(format!(
            "residual {} too large for an eigenvalue",
            record.residual
        )));
    }
    let xs: Vec<f64> = (0..n_grid).map(|i| TAU * i as f64 / n_grid as f64).collect();
    let mass_mode = lambda.norm() <= 1e-12 && zero_is_mass_mode(profile);
    if mass_mode {
        let c = Complex64::new(1.0 / TAU.sqrt(), 0.0);
        let zero = Complex64::new(0.0, 0.0);
        return Ok(Eigenfunction {
            lambda,
            x: xs.clone(),
            modes: vec![Mode {
                initial: [Complex64::new(1.0, 0.0), zero],
                rho: vec![c; n_grid],
                j: vec![zero; n_grid],
            }],
            degenerate: false,
            mass_mode: true,
        });
    }
    let kernel = kernel_vectors(profile, lambda);
    let modes = kernel.iter().map(|&v| propagate(profile, lambda, v, &xs)).collect();
    Ok(Eigenfunction {
        lambda,
        x: xs,
        modes,
        degenerate: kernel.len() > 1,
        mass_mode: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn closed_form_examples() {
        let s2 = constant_sigma_spectrum(2.0, 1);
        assert_eq!(s2, vec![c(-1.0, 0.0), c(-1.0, 0.0), c(-2.0, 0.0)]);
        let s1 = constant_sigma_spectrum(1.0, 2);
        let h = 3f64.sqrt() / 2.0;
        assert!((s1[0] - c(-0.5, h)).norm() < 1e-15);
        assert!((s1[1] - c(-0.5, -h)).norm() < 1e-15);
        assert!((s1[2] - c(-0.5, 15f64.sqrt() / 2.0)).norm() < 1e-15);
        assert!((s1[4] - c(-1.0, 0.0)).norm() < 1e-15);
        let s0 = constant_sigma_spectrum(0.0, 3);
        assert!((s0[4] - c(0.0, 3.0)).norm() < 1e-15);
        assert_eq!(s0[6], c(0.0, 0.0));
    }

    #[test]
    fn count_examples() {
        let one = SigmaProfile::constant(1.0).unwrap();
        // −1/2 ± i√3/2 is a double zero of det M (Fourier modes ±1)
        assert_eq!(count_zeros(&one, &Rect::new(-0.6, -0.4, 0.7, 1.0)).unwrap(), 2);
        let two = SigmaProfile::constant(2.0).unwrap();
        assert_eq!(count_zeros(&two, &Rect::new(-1.1, -0.9, -0.1, 0.1)).unwrap(), 4);
        let p = SigmaProfile::new(vec![0.0, 2.0, TAU], vec![3.0, 0.5]).unwrap();
        assert_eq!(count_zeros(&p, &Rect::new(0.01, 2.0, -8.0, 8.0)).unwrap(), 0);
    }

    #[test]
    fn boundary_zero_is_dilated() {
        let one = SigmaProfile::constant(1.0).unwrap();
        // the mass mode λ = 0 sits on the right edge
        let n = count_zeros(&one, &Rect::new(-0.2, 0.0, -0.3, 0.3)).unwrap();
        assert_eq!(n, 1);
    }

    #[test]
    fn sigma_one_box() {
        let one = SigmaProfile::constant(1.0).unwrap();
        let found = find_eigenvalues(&one, &Rect::new(-1.2, 0.0, -5.5, 5.5), 1e-10).unwrap();
        let expect = constant_sigma_spectrum(1.0, 5);
        for e in expect.iter().filter(|e| e.im.abs() <= 5.5) {
            assert!(
                found.iter().any(|r| (r.lambda - e).norm() < 1e-8),
                "missing {e}"
            );
        }
        assert!(found.iter().any(|r| r.lambda.norm() < 1e-10));
        let total: usize = found.iter().map(|r| r.multiplicity).sum();
        assert_eq!(total, count_zeros(&one, &Rect::new(-1.2, 0.0, -5.5, 5.5)).unwrap());
    }

    #[test]
    fn sigma_four_real_pair() {
        let four = SigmaProfile::constant(4.0).unwrap();
        let found = find_eigenvalues(&four, &Rect::new(-4.3, 0.2, -3.0, 3.0), 1e-10).unwrap();
        let r3 = 3f64.sqrt();
        for e in [-2.0 + r3, -2.0 - r3, -4.0] {
            assert!(found.iter().any(|r| (r.lambda - c(e, 0.0)).norm() < 1e-8), "missing {e}");
        }
    }

    #[test]
    fn gap_examples() {
        let g2 = spectral_gap(&SigmaProfile::constant(2.0).unwrap(), &GapOptions::default()).unwrap();
        assert!((g2.gap - 1.0).abs() < 1e-8);
        // every mode of σ ≡ 2 lies on Re λ = −1; λ = −1 itself is a quadruple zero
        assert!(g2.leading.iter().all(|r| (r.lambda.re + 1.0).abs() < 1e-8));
        let real = g2.leading.iter().find(|r| r.lambda.im == 0.0).unwrap();
        assert_eq!((real.multiplicity, real.kernel_dim), (4, 2));
        let g1 = spectral_gap(&SigmaProfile::constant(1.0).unwrap(), &GapOptions::default()).unwrap();
        assert!((g1.gap - 0.5).abs() < 1e-8);
        let g4 = spectral_gap(&SigmaProfile::constant(4.0).unwrap(), &GapOptions::default()).unwrap();
        assert!((g4.gap - (2.0 - 3f64.sqrt())).abs() < 1e-8);
        let g0 = spectral_gap(&SigmaProfile::constant(0.0).unwrap(), &GapOptions::default()).unwrap();
        assert_eq!(g0.gap, 0.0);
        assert!(g0.note.is_some());
    }

    #[test]
    fn conjugate_closed_and_dissipative() {
        let p = SigmaProfile::new(vec![0.0, 1.0, 3.5, TAU], vec![4.0, 0.0, 1.5]).unwrap();
        let g = spectral_gap(&p, &GapOptions::default()).unwrap();
        for r in &g.eigenvalues {
            assert!(r.lambda.re <= 1e-9 && r.lambda.re >= -p.sup_norm() - 1e-9);
            assert!(g
                .eigenvalues
                .iter()
                .any(|q| (q.lambda - r.lambda.conj()).norm() < 1e-9));
        }
    }

    #[test]
    fn eigenvector_examples() {
        let two = SigmaProfile::constant(2.0).unwrap();
        let rec = make_record(&two, c(-1.0, 0.0), 4, true);
        let ef = eigenvector(&two, &rec, 32).unwrap();
        assert!(ef.degenerate);
        assert_eq!(ef.modes.len(), 2);

        let p = SigmaProfile::new(vec![0.0, 2.0, TAU], vec![3.0, 0.5]).unwrap();
        let rec = make_record(&p, c(0.0, 0.0), 1, true);
        let ef = eigenvector(&p, &rec, 8).unwrap();
        assert!(ef.mass_mode);
        assert!((ef.modes[0].rho[3].re - 1.0 / TAU.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn sigma_one_eigenfunction_is_first_fourier_mode() {
        let one = SigmaProfile::constant(1.0).unwrap();
        let lam = c(-0.5, 3f64.sqrt() / 2.0);
        let rec = make_record(&one, lam, 2, true);
        let n = 256;
        let ef = eigenvector(&one, &rec, n).unwrap();
        let h = TAU / n as f64;
        for mode in &ef.modes {
            // ρ₁ must be a combination of cos x and sin x
            let a: Complex64 = mode.rho.iter().zip(&ef.x).map(|(r, x)| r * x.cos()).sum::<Complex64>() * (h / PI);
            let b: Complex64 = mode.rho.iter().zip(&ef.x).map(|(r, x)| r * x.sin()).sum::<Complex64>() * (h / PI);
            for (i, x) in ef.x.iter().enumerate() {
                let fit = a * x.cos() + b * x.sin();
                assert!((mode.rho[i] - fit).norm() < 1e-10);
            }
            // residual of λρ + ∂ₓj = 0 and ∂ₓρ + (λ + σ) j = 0, spectral derivative check
            for i in 0..n {
                let ip = (i + 1) % n;
                let im = (i + n - 1) % n;
                let dj = (mode.j[ip] - mode.j[im]) / (2.0 * h);
                let drho = (mode.rho[ip] - mode.rho[im]) / (2.0 * h);
                // central differences of a first-harmonic are exact up to sin(h)/h
                let corr = h / h.sin();
                assert!((lam * mode.rho[i] + dj * corr).norm() < 1e-8);
                assert!((drho * corr + (lam + 1.0) * mode.j[i]).norm() < 1e-8);
            }
        }
    }
}
