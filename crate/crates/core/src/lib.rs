//! Passivity degradation under sampling and quantization, ultimate
//! boundedness certificates for quantized feedback loops, and execution of
//! approximately bisimilar symbolic controllers.

pub mod abstraction;
pub mod bounds;
pub mod detectability;
pub mod error;
pub mod linalg;
pub mod models;
pub mod passivity;
pub mod sim;
pub mod systems;

pub use error::{Error, Result};
pub use linalg::Matrix;
