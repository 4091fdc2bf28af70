//! Numerical laboratory for Frostman measures, Fourier decay of spherical
//! averages, projections, slices and intersections of fractal point clouds.

// Guards like `!(x > 0.0)` are meant to reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod energy;
pub mod error;
pub mod fourier;
pub mod ifs;
pub mod intersections;
pub mod measure;
pub mod numeric;
pub mod projections;
pub mod report;
pub mod runner;
pub mod sections;
pub mod verify;

pub use error::{LabError, Result};
pub use measure::DiscreteMeasure;
