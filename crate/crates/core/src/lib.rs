//! Vector engineering drawings in, parametric sketch-and-extrude CAD sequences out.
//!
//! The crate covers the whole path: SVG ingestion and tokenization, the CAD
//! command grammar, a small point-membership solid kernel, the encoder /
//! dual-decoder network with its training objective, evaluation metrics, and a
//! synthetic paired-data generator.

pub mod cad;
pub mod checkpoint;
pub mod error;
pub mod geom;
pub mod ingest;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod record;
pub mod seed;
pub mod svg;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
