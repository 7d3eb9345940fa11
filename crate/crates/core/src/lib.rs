//! Runtime for CNN models restricted to a fixed accelerator operator set
//! (3x3 convolution, ReLU, 2x2 max pooling): model validation and execution,
//! grid-cell detection decoding, NMS, classification decoding, VOC-style mAP,
//! image I/O, and a stage-resolved timing harness.

pub mod bench;
pub mod classify;
pub mod detect;
pub mod error;
pub mod eval;
pub mod exec;
pub mod io;
pub mod labels;
pub mod model;
pub mod nn;

pub use error::{Error, Result};
pub use exec::Exec;
