//! Simulator and reconstruction pipeline for a belt-style vision-based
//! tactile scanner.

pub mod error;
pub mod frame;
pub mod gbf;
pub mod grid;
pub mod io;
pub mod simulator;
pub mod nn;
pub mod calibration;
pub mod markers;
pub mod reconstruction;
pub mod evaluation;
pub mod scandir;
pub mod cli;

pub use error::{Error, Result};
pub use frame::{Band, Rect, TactileFrame};
pub use grid::{
    gradient_of, mean_dot_product, normal_from_gradients, GradientField, HeightField, Mask,
    NormalMap, Pose2D,
};
