//! Closed-loop leg mechanisms, soft-constraint dynamics and a vectorized
//! locomotion environment for a small cable-and-linkage biped.

pub mod bench;
pub mod cli;
pub mod differential;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod five_bar;
pub mod four_bar;
pub mod geometry;
pub mod model;
