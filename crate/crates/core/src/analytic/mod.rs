//! Special functions and conditional densities of the observation.

pub mod cache;
pub mod exact;
pub mod harmonics;
pub mod model;
pub mod pdf;
pub mod rice;
pub mod special;

pub use cache::{HarmonicsCache, HarmonicsKey};
pub use exact::{ExactHarmonics, SpanKernel};
pub use harmonics::{estimate_harmonics, EstimatorConfig, Harmonics, HarmonicsSet, PhaseHarmonics};
pub use model::{exact_models, wrap_angle, ModelGrid, RingModel};
pub use pdf::{pdf_y, pdf_y_tilde, PdfEval};
pub use rice::rice_pdf;
pub use special::{bessel_i0, marcum_q1};
