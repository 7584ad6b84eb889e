//! Material identification of known-geometry objects from a single
//! non-energy-resolved radiograph.
//!
//! The direct signal through each pixel is modeled with polyenergetic
//! Beer–Lambert attenuation, scatter with a low-order polynomial field, and
//! the top-N material assignments are found exactly by branch and bound over
//! per-object material choices.

pub mod analysis;
pub mod calibrate;
pub mod cli;
pub mod error;
pub mod forward;
pub mod geometry;
mod lstsq;
pub mod manifest;
pub mod materials;
pub mod pfm;
pub mod report;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use forward::{direct, fit_gain_scatter, loss, Assignment, FitResult, Radiograph};
pub use geometry::{PathLengthSet, Scene};
pub use materials::{EnergyGrid, MaterialTable, SpectrumResponse};
pub use solver::{solve_exhaustive, solve_top_n, Problem, SearchConfig, SolveResult};
