use std::f64::consts::PI;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use gtspec_core::optimizer::{constant_gap, gap_curve_constant, l1_distance, optimize_gap_with, OptOptions};
use gtspec_core::schroedinger::{find_slow_eigenvalue_with, lambda_s, mu_table, phase_shift, rayleigh_quotients};
use gtspec_core::simulator::{generic_state, run_decay};
use gtspec_core::spectrum::{constant_sigma_spectrum, find_eigenvalues, spectral_gap};
use gtspec_core::{EigenvalueRecord, Error, GapOptions, GapResult, Rect, SigmaProfile};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Command, Init, RunConfig, SigmaSource};
use crate::error::CliError;
use crate::summary::Summary;

/// Slack allowed when the reported gap is compared with the reported bounds.
const BOUND_SLACK: f64 = 1e-6;
const MU_TABLE_STEPS: usize = 41;

pub struct Output {
    pub summary: Summary,
    pub csv: Option<String>,
}

fn read_profile(path: &Path) -> Result<SigmaProfile, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read profile {}: {e}", path.display())))?;
    Ok(SigmaProfile::from_text(&text)?)
}

fn load_sigma(cfg: &RunConfig) -> Result<SigmaProfile, CliError> {
    match &cfg.sigma {
        Some(SigmaSource::Const(v)) => Ok(SigmaProfile::constant(*v)?),
        Some(SigmaSource::File(p)) => read_profile(p),
        None => Err(CliError::Usage(format!(
            "{} needs --sigma-const or --sigma-file",
            cfg.command.name()
        ))),
    }
}

fn gap_options(cfg: &RunConfig) -> GapOptions {
    GapOptions {
        im_cutoff: cfg.im_cutoff,
        tol: cfg.tol,
        cluster_tol: cfg.cluster_tol,
        ..GapOptions::default()
    }
}

fn complex(r: &EigenvalueRecord) -> String {
    format!("{:.9}{:+.9}i", r.lambda.re, r.lambda.im)
}

/// Rows ordered by decreasing real part, then increasing imaginary part.
fn records_csv(records: &[EigenvalueRecord]) -> String {
    let mut sorted: Vec<&EigenvalueRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.lambda.re.total_cmp(&a.lambda.re).then(a.lambda.im.total_cmp(&b.lambda.im)));
    let mut s = String::from("re,im,multiplicity,kernel_dim,residual,converged\n");
    for r in sorted {
        writeln!(
            s,
            "{:.12},{:.12},{},{},{:.3e},{}",
            r.lambda.re, r.lambda.im, r.multiplicity, r.kernel_dim, r.residual, r.converged
        )
        .expect("write to string");
    }
    s
}

/// Members of the leading cluster closest to the real axis (one eigenvalue or a conjugate pair).
fn lowest_members(g: &GapResult) -> Vec<&EigenvalueRecord> {
    let min_im = g.leading.iter().map(|r| r.lambda.im.abs()).fold(f64::INFINITY, f64::min);
    g.leading
        .iter()
        .filter(|r| r.lambda.im.abs() <= min_im + 1e-6)
        .collect()
}

fn describe_profile(s: &mut Summary, p: &SigmaProfile) {
    s.push("cells", p.len());
    s.push("l1_norm", format!("{:.9}", p.l1_norm()));
}

/// Gap, leading cluster and the two upper bounds; fails if the gap exceeds the kinetic bound.
fn describe_gap(s: &mut Summary, p: &SigmaProfile, g: &GapResult, opts: &GapOptions) -> Result<(), CliError> {
    let l1 = p.l1_norm();
    let low = lowest_members(g);
    s.push("gap", format!("{:.9}", g.gap));
    s.push(
        "leading",
        if low.is_empty() {
            "none".to_string()
        } else {
            low.iter().map(|r| complex(r)).collect::<Vec<_>>().join(" ")
        },
    );
    s.push("cluster_multiplicity", low.iter().map(|r| r.kernel_dim).sum::<usize>());
    s.push("cluster_members", g.leading.len());
    s.push("cluster_total_dim", g.cluster_multiplicity());
    s.push("cluster_root_count", g.cluster_root_count());
    s.push("accumulation_line", format!("{:.9}", g.accumulation_line));
    let kinetic = l1 / (4.0 * PI);
    s.push("kinetic_bound", format!("{kinetic:.9}"));
    let diffusive = (l1 > 4.0 * PI).then(|| lambda_s(l1).map(|v| -v)).transpose()?;
    match diffusive {
        Some(d) => {
            s.push("diffusive_bound", format!("{d:.9}"));
            // the slow-eigenvalue certificate behind this bound can fail, so a
            // violation is reported rather than treated as an error
            s.push("diffusive_bound_holds", g.gap <= d + BOUND_SLACK);
        }
        None => s.push("diffusive_bound", "n/a"),
    }
    let cutoff = g.search_box.im_max;
    s.push("tol", format!("{:e}", opts.tol));
    s.push("cluster_tol", format!("{:e}", opts.cluster_tol));
    s.push("im_cutoff", format!("{cutoff}"));
    s.push("left_margin", format!("{}", opts.left_margin));
    s.push("asymptotic_discrepancy", format!("{:.3e}", g.asymptotic_discrepancy));
    if let Some(note) = &g.note {
        s.push("note", note);
    }
    if g.gap > kinetic + BOUND_SLACK {
        return Err(Error::Inconsistency(format!("gap {} exceeds the kinetic bound {kinetic}", g.gap)).into());
    }
    Ok(())
}

fn spectrum(cfg: &RunConfig) -> Result<Output, CliError> {
    let p = load_sigma(cfg)?;
    let opts = gap_options(cfg);
    let g = spectral_gap(&p, &opts)?;
    let mut s = Summary::new(cfg.command);
    describe_profile(&mut s, &p);
    s.push("eigenvalues", g.eigenvalues.len());
    s.push(
        "search_box",
        format!(
            "[{:.6}, {:.6}] x [{:.6}, {:.6}]",
            g.search_box.re_min, g.search_box.re_max, g.search_box.im_min, g.search_box.im_max
        ),
    );
    describe_gap(&mut s, &p, &g, &opts)?;
    Ok(Output {
        summary: s,
        csv: Some(records_csv(&g.eigenvalues)),
    })
}

fn gap(cfg: &RunConfig) -> Result<Output, CliError> {
    let p = load_sigma(cfg)?;
    let opts = gap_options(cfg);
    let g = spectral_gap(&p, &opts)?;
    let mut s = Summary::new(cfg.command);
    describe_profile(&mut s, &p);
    describe_gap(&mut s, &p, &g, &opts)?;
    Ok(Output {
        summary: s,
        csv: Some(records_csv(&g.leading)),
    })
}

fn schrodinger(cfg: &RunConfig) -> Result<Output, CliError> {
    let p = load_sigma(cfg)?;
    let ls = lambda_s(p.l1_norm())?;
    let slow = find_slow_eigenvalue_with(&p, cfg.tol.max(1e-12), cfg.n)?;
    let shift = phase_shift(&p)?;
    let (q1, q2) = rayleigh_quotients(&p, ls)?;
    let rows = mu_table(&p, ls, -1e-6, MU_TABLE_STEPS, cfg.n)?;
    let mut s = Summary::new(cfg.command);
    describe_profile(&mut s, &p);
    s.push("lambda_s", format!("{ls:.9}"));
    s.push("diffusive_bound", format!("{:.9}", -ls));
    s.push("slow_eigenvalue", format!("{:.9}", slow.lambda));
    s.push("mu2_at_slow", format!("{:.3e}", slow.mu2));
    s.push("det_m_at_slow", format!("{:.3e}", slow.det_m));
    s.push("phase_shift", format!("{:.9}", shift.phi));
    s.push("rayleigh_q1", format!("{q1:.9}"));
    s.push("rayleigh_q2", format!("{q2:.9}"));
    s.push("n_grid", slow.n_grid);
    s.push("tol", format!("{:e}", cfg.tol));
    if let Some(note) = shift.note {
        s.push("note", note);
    }
    let mut csv = String::from("lambda,mu1,mu2\n");
    for (l, m1, m2) in rows {
        writeln!(csv, "{l:.12},{m1:.12},{m2:.12}").expect("write to string");
    }
    Ok(Output { summary: s, csv: Some(csv) })
}

fn simulate(cfg: &RunConfig) -> Result<Output, CliError> {
    let p = load_sigma(cfg)?;
    let state = generic_state(cfg.n)?;
    let trace = run_decay(&state, &p, cfg.t_end)?;
    let opts = gap_options(cfg);
    let g = spectral_gap(&p, &opts)?;
    let mut s = Summary::new(cfg.command);
    describe_profile(&mut s, &p);
    s.push("n", cfg.n);
    s.push("t_end", format!("{}", cfg.t_end));
    s.push("rate", format!("{:.9}", trace.rate));
    s.push("rate_stderr", format!("{:.3e}", trace.rate_stderr));
    s.push("mass_drift", format!("{:.3e}", trace.mass_drift));
    s.push("max_norm_increase", format!("{:.3e}", trace.max_norm_increase));
    s.push("truncated", trace.truncated);
    describe_gap(&mut s, &p, &g, &opts)?;
    Ok(Output {
        summary: s,
        csv: Some(trace.to_csv()),
    })
}

fn sweep(cfg: &RunConfig) -> Result<Output, CliError> {
    let (a, b, n) = cfg.const_range;
    let curve = gap_curve_constant(a, b, n)?;
    let mut s = Summary::new(cfg.command);
    s.push("sigma_min", format!("{a}"));
    s.push("sigma_max", format!("{b}"));
    s.push("steps", n);
    let (arg, best) = curve
        .rows
        .iter()
        .copied()
        .fold((f64::NAN, f64::NEG_INFINITY), |acc, (x, g)| if g > acc.1 { (x, g) } else { acc });
    s.push("best_sigma", format!("{arg:.9}"));
    s.push("best_gap", format!("{best:.9}"));
    s.push(
        "checks",
        curve
            .checks
            .iter()
            .map(|(x, closed, solved)| format!("{x:.4}:{closed:.9}/{solved:.9}"))
            .collect::<Vec<_>>()
            .join(" "),
    );
    s.push("max_check_error", format!("{:.3e}", curve.max_check_error));
    if curve.max_check_error > 1e-8 {
        return Err(Error::Inconsistency(format!(
            "closed-form curve disagrees with the solver by {:e}",
            curve.max_check_error
        ))
        .into());
    }
    Ok(Output {
        summary: s,
        csv: Some(curve.to_csv()),
    })
}

fn initial_profile(cfg: &RunConfig) -> Result<SigmaProfile, CliError> {
    match &cfg.init {
        Some(Init::Const(v)) => Ok(SigmaProfile::constant(*v)?),
        Some(Init::Random(max)) => {
            if !(*max > 0.0) {
                return Err(CliError::Usage("random init needs a positive maximum".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            Ok(SigmaProfile::random(&mut rng, cfg.k, *max))
        }
        Some(Init::File(p)) => read_profile(p),
        None if cfg.sigma.is_some() => load_sigma(cfg),
        None => Ok(SigmaProfile::constant(5.0)?),
    }
}

fn optimize(cfg: &RunConfig) -> Result<Output, CliError> {
    let p0 = initial_profile(cfg)?;
    let opts = OptOptions {
        gap: gap_options(cfg),
        ..OptOptions::default()
    };
    let r = optimize_gap_with(&p0, cfg.k, cfg.max_iters, &opts)?;
    let g = spectral_gap(&r.final_profile, &opts.gap)?;
    let two = SigmaProfile::constant(2.0)?;
    let mut s = Summary::new(cfg.command);
    s.push("k", cfg.k);
    s.push("initial_gap", format!("{:.9}", r.trajectory[0].gap));
    s.push("final_gap", format!("{:.9}", r.final_gap));
    s.push("iterations", r.trajectory.len() - 1);
    s.push("stop_reason", r.stop_reason.as_str());
    s.push("converged", r.converged);
    s.push("cluster_size", r.cluster_multiplicity);
    s.push(
        "final_profile",
        r.final_profile
            .values()
            .iter()
            .map(|v| format!("{v:.6}"))
            .collect::<Vec<_>>()
            .join(" "),
    );
    s.push("l1_distance_to_two", format!("{:.9}", l1_distance(&r.final_profile, &two)));
    if let Some(note) = &r.note {
        s.push("optimizer_note", note);
    }
    describe_profile(&mut s, &r.final_profile);
    describe_gap(&mut s, &r.final_profile, &g, &opts.gap)?;
    Ok(Output {
        summary: s,
        csv: Some(r.trajectory_csv()),
    })
}

pub fn run(cfg: &RunConfig) -> Result<Output, CliError> {
    match cfg.command {
        Command::Spectrum => spectrum(cfg),
        Command::Gap => gap(cfg),
        Command::Schrodinger => schrodinger(cfg),
        Command::Simulate => simulate(cfg),
        Command::Sweep => sweep(cfg),
        Command::Optimize => optimize(cfg),
    }
}

/// Constant-σ oracle suite: solver spectra and gaps against the closed form.
pub fn selftest() -> (bool, String) {
    let mut out = String::new();
    let mut all = true;
    for sigma in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let outcome = (|| -> Result<(f64, f64), Error> {
            let p = SigmaProfile::constant(sigma)?;
            let rect = Rect::new(-sigma - 0.5, 0.5, -6.5, 6.5);
            let found = find_eigenvalues(&p, &rect, 1e-12)?;
            let mut oracle = constant_sigma_spectrum(sigma, 7);
            oracle.push(Complex64::new(0.0, 0.0));
            oracle.retain(|z| z.im.abs() <= 6.0);
            let found: Vec<Complex64> = found.iter().map(|r| r.lambda).collect();
            let dist = |set: &[Complex64], z: Complex64| set.iter().map(|w| (w - z).norm()).fold(f64::INFINITY, f64::min);
            let worst = oracle
                .iter()
                .map(|&z| dist(&found, z))
                .chain(found.iter().filter(|z| z.im.abs() <= 6.0).map(|&z| dist(&oracle, z)))
                .fold(0.0, f64::max);
            let g = spectral_gap(&p, &GapOptions::default())?;
            let gap_err = (g.gap - constant_gap(sigma)).abs();
            Ok((worst, gap_err))
        })();
        let (pass, detail) = match outcome {
            Ok((w, e)) => (w <= 1e-8 && e <= 1e-8, format!("spectrum error {w:.2e}, gap error {e:.2e}")),
            Err(e) => (false, e.to_string()),
        };
        all &= pass;
        writeln!(out, "{} constant sigma {sigma}: {detail}", if pass { "PASS" } else { "FAIL" })
            .expect("write to string");
    }
    (all, out)
}
