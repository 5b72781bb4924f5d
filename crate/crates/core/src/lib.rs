//! APSK constellation design and two-stage detection for a coherent fiber
//! channel impaired by nonlinear phase noise.

pub mod analytic;
pub mod channel;
pub mod constellation;
pub mod detection;
pub mod error;
pub mod labeling;
pub mod metrics;
pub mod numeric;
pub mod optimize;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
