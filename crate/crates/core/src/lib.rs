//! Fundamental matrix estimation from single-frame motion-blur smears.
//!
//! A blurred frame yields, per pixel, a smear segment whose two endpoints are
//! the projections of one scene point at the start and end of the exposure.
//! The time direction of each smear is unknown, so the endpoints satisfy the
//! epipolar constraint under either `F` or `Fᵀ`. This crate provides the
//! residuals, minimal solver and robust estimator for that setting, plus a
//! synthetic ground-truth generator and evaluation metrics.

pub mod epipolar;
pub mod error;
pub mod eval;
pub mod grid;
pub mod pnm;
pub mod render;
pub mod smear;
pub mod robust;
pub mod solver;
pub mod synth;

mod refine;
pub mod rng;
mod textio;

pub use epipolar::{
    Correspondence, EpipolarLine, FundamentalMatrix, ImagePoint, Side, SmearVector, TimeDirection,
};
pub use error::{Error, Result};
pub use grid::Grid;
