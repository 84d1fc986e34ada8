//! Identification of partially observed linear dynamical systems from a
//! single noisy trajectory.
//!
//! The pipeline fits a finite impulse response by least squares
//! ([`estimation`]), denoises it with rank-`d` SVDs of block Hankel
//! matrices of geometrically growing size ([`denoise`]), and optionally
//! realizes `(A, B, C, D)` with Ho-Kalman ([`realization`]). The
//! [`experiments`] and [`conc`] modules run the seeded Monte Carlo studies
//! around it.

pub mod blockmat;
pub mod cli;
pub mod conc;
pub mod config;
pub mod denoise;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod impulse;
pub mod lds;
pub mod linalg;
pub mod matrix_io;
pub mod realization;
pub mod rng;
pub mod spectral;
pub mod svd;

pub use conc::{ConcStat, ConcTrialReport};
pub use denoise::{Base, DenoiseMode, MultiscaleConfig};
pub use error::{Result, SysIdError};
pub use experiments::{run_experiment, ExperimentConfig, ExperimentResult};
pub use impulse::ImpulseResponse;
pub use lds::{random_system, simulate, StateSpaceSystem, Trajectory};
pub use realization::{ho_kalman, Realization};
