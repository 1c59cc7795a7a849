//! Neural network building blocks.

pub mod tape;
pub mod model;
