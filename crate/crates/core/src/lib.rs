//! Simulation library for inhomogeneous quantum annealing, where the
//! transverse field on each spin is switched off in turn rather than all at
//! once.
//!
//! * [`schedules`]: annealing paths and per-spin field profiles.
//! * [`models`]: p-spin and two-local (SK) target Hamiltonians.
//! * [`meanfield`]: saddle-point equations and mean-field dynamics.
//! * [`exact`]: state-vector dynamics for small systems.
//! * [`spectrum`]: sector-resolved spectra and level-crossing detection.
//! * [`ensemble`]: statistics over random instances, with resumable storage.

pub mod ensemble;
pub mod error;
pub mod exact;
pub mod meanfield;
pub mod models;
pub mod schedules;
pub mod seeding;
pub mod spectrum;

pub use error::{Error, Result};
