//! Geometry, attention operators, self-supervised depth losses and the temporal
//! consistency metric for multi-frame monocular depth, with a synthetic-scene
//! oracle for testing all of it.

pub mod attention;
pub mod error;
pub mod fusion;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod numeric;
pub mod sequence;
pub mod synth;
pub mod tcm;

pub use error::{Error, Result};
