pub mod autodiff;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod models;
pub mod pipeline;
pub mod saliency;
pub mod seed;
pub mod training;

pub use error::{Error, Result};
