//! Spectral analysis of the damped kinetic transport generator on the circle.
//!
//! The generator acts on `(ρ, j)` as `(−∂ₓj, −∂ₓρ − σ(x) j)` with a
//! nonnegative, piecewise-constant, 2π-periodic damping `σ`. Eigenvalues are
//! the zeros of `det(I − S(σ, λ))`, where `S` is the monodromy of the
//! eigenvalue ODE over one period.

pub mod contour;
pub mod error;
pub mod optimizer;
pub mod par;
pub mod perturbation;
pub mod profile;
pub mod schroedinger;
pub mod simulator;
pub mod spectrum;
pub mod transfer;

pub use error::{Error, Result};
pub use profile::{SigmaDirection, SigmaProfile};
pub use spectrum::{EigenvalueRecord, GapOptions, GapResult, Rect};
pub use transfer::TransferMatrix;
