//! Time stepping of `∂ₜρ + ∂ₓj = 0`, `∂ₜj + ∂ₓρ = −σ j` on the torus.
//!
//! With `dt = Δx` transport is an exact one-cell shift of the characteristic
//! variables `u = (ρ + j)/√2` (right) and `v = (ρ − j)/√2` (left), and the
//! relaxation `∂ₜj = −σj` is solved exactly, so the only error is splitting.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::profile::SigmaProfile;

#[derive(Debug, Clone, PartialEq)]
pub struct KineticState {
    pub rho: Vec<f64>,
    pub j: Vec<f64>,
    pub time: f64,
}

impl KineticState {
    pub fn n(&self) -> usize {
        self.rho.len()
    }

    pub fn dx(&self) -> f64 {
        TAU / self.n() as f64
    }

    /// `Σ ρ Δx`.
    pub fn mass(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.dx()
    }

    /// `(Σ (ρ² + j²) Δx)^{1/2}`.
    pub fn norm(&self) -> f64 {
        let s: f64 = self.rho.iter().zip(&self.j).map(|(r, j)| r * r + j * j).sum();
        (s * self.dx()).sqrt()
    }
}

/// Samples at cell centers, with the mean of ρ removed.
pub fn init_state<F, G>(n: usize, rho_fn: F, j_fn: G) -> Result<KineticState>
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> f64,
{
    if n < 16 {
        return Err(Error::Domain(format!("n = {n} is below 16")));
    }
    let h = TAU / n as f64;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let mut rho: Vec<f64> = xs.iter().map(|&x| rho_fn(x)).collect();
    let mean = rho.iter().sum::<f64>() / n as f64;
    rho.iter_mut().for_each(|r| *r -= mean);
    let j = xs.iter().map(|&x| j_fn(x)).collect();
    Ok(KineticState { rho, j, time: 0.0 })
}

/// A state exciting several Fourier modes of both components.
pub fn generic_state(n: usize) -> Result<KineticState> {
    init_state(
        n,
        |x| x.cos() + 0.4 * (2.0 * x).sin() + 0.2 * (3.0 * x + 0.7).cos(),
        |x| 0.5 * x.sin() - 0.3 * (2.0 * x + 0.3).cos() + 0.25,
    )
}

/// Precomputed half-step relaxation factors for one `(P, n)`.
#[derive(Debug, Clone)]
pub struct Stepper {
    half_decay: Vec<f64>,
    dt: f64,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl Stepper {
    pub fn new(profile: &SigmaProfile, n: usize) -> Self {
        let dt = TAU / n as f64;
        let half_decay = profile.cell_averages(n)
            .into_iter()
            .map(|s| (-0.5 * s * dt).exp())
            .collect();
        Self {
            half_decay,
            dt,
            u: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn advance(&mut self, state: &mut KineticState) {
        let n = state.n();
        debug_assert_eq!(n, self.half_decay.len());
        for (j, f) in state.j.iter_mut().zip(&self.half_decay) {
            *j *= f;
        }
        for i in 0..n {
            let (r, j) = (state.rho[i], state.j[i]);
            // u moves right, v moves left
            self.u[(i + 1) % n] = FRAC_1_SQRT_2 * (r + j);
            self.v[(i + n - 1) % n] = FRAC_1_SQRT_2 * (r - j);
        }
        for i in 0..n {
            state.rho[i] = FRAC_1_SQRT_2 * (self.u[i] + self.v[i]);
            state.j[i] = FRAC_1_SQRT_2 * (self.u[i] - self.v[i]) * self.half_decay[i];
        }
        state.time += self.dt;
    }
}

/// One Strang step; `dt` must equal `2π/n`.
pub fn step(state: &KineticState, profile: &SigmaProfile, dt: f64) -> Result<KineticState> {
    let dx = state.dx();
    if (dt - dx).abs() > 1e-12 * dx {
        return Err(Error::Domain(format!(
            "dt = {dt} must equal Δx = {dx} for exact transport"
        )));
    }
    let mut next = state.clone();
    Stepper::new(profile, state.n()).advance(&mut next);
    Ok(next)
}

/// Norm and mass recorded once per unit time, with the fitted decay rate.
#[derive(Debug, Clone)]
pub struct DecayTrace {
    pub t: Vec<f64>,
    pub norm: Vec<f64>,
    pub mass: Vec<f64>,
    /// `−slope` of the least-squares line through `ln ‖·‖` over the final third.
    pub rate: f64,
    /// Standard error of the slope.
    pub rate_stderr: f64,
    /// Largest per-step increase of the norm (should be at rounding level).
    pub max_norm_increase: f64,
    /// Largest deviation of the mass from its initial value.
    pub mass_drift: f64,
    pub truncated: bool,
}

impl DecayTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,norm,mass\n");
        for i in 0..self.t.len() {
            writeln!(s, "{:.6},{:.12e},{:.12e}", self.t[i], self.norm[i], self.mass[i]).expect("write to string");
        }
        s
    }
}

const UNDERFLOW: f64 = 1e-280;

/// Least-squares slope and its standard error.
pub fn fit_slope(t: &[f64], y: &[f64]) -> (f64, f64) {
    let m = t.len() as f64;
    let tm = t.iter().sum::<f64>() / m;
    let ym = y.iter().sum::<f64>() / m;
    let sxx: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
    let sxy: f64 = t.iter().zip(y).map(|(x, v)| (x - tm) * (v - ym)).sum();
    let slope = sxy / sxx;
    if t.len() < 3 {
        return (slope, f64::NAN);
    }
    let sse: f64 = t
        .iter()
        .zip(y)
        .map(|(x, v)| (v - ym - slope * (x - tm)).powi(2))
        .sum();
    (slope, (sse / (m - 2.0) / sxx).sqrt())
}

/// Integrates to time `t_end` and fits the asymptotic decay rate.
pub fn run_decay(state: &KineticState, profile: &SigmaProfile, t_end: f64) -> Result<DecayTrace> {
    if !(t_end > 0.0) {
        return Err(Error::Domain("T must be positive".into()));
    }
    let mut s = state.clone();
    let mut stepper = Stepper::new(profile, s.n());
    let dt = stepper.dt();
    let steps = (t_end / dt).ceil() as usize;
    let m0 = s.mass();
    let mut trace = DecayTrace {
        t: vec![s.time],
        norm: vec![s.norm()],
        mass: vec![m0],
        rate: f64::NAN,
        rate_stderr: f64::NAN,
        max_norm_increase: 0.0,
        mass_drift: 0.0,
        truncated: false,
    };
    let mut prev_norm = trace.norm[0];
    let mut next_record = 1.0;
    for k in 1..=steps {
        stepper.advance(&mut s);
        let nrm = s.norm();
        trace.max_norm_increase = trace.max_norm_increase.max(nrm - prev_norm);
        prev_norm = nrm;
        let mass = s.mass();
        trace.mass_drift = trace.mass_drift.max((mass - m0).abs());
        if nrm < UNDERFLOW {
            trace.truncated = true;
            break;
        }
        if s.time >= next_record - 1e-12 || k == steps {
            trace.t.push(s.time);
            trace.norm.push(nrm);
            trace.mass.push(mass);
            next_record = s.time.floor() + 1.0;
        }
    }
    let t_last = *trace.t.last().expect("initial sample");
    let from = 2.0 * t_last / 3.0;
    let (tt, yy): (Vec<f64>, Vec<f64>) = trace
        .t
        .iter()
        .zip(&trace.norm)
        .filter(|(t, n)| **t >= from && **n > 0.0)
        .map(|(t, n)| (*t, n.ln()))
        .unzip();
    if tt.len() >= 2 {
        let (slope, se) = fit_slope(&tt, &yy);
        trace.rate = -slope;
        trace.rate_stderr = se;
    }
    Ok(trace)
}
