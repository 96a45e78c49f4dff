//! The CECT network: convolutional encoders, transposed-convolution decoders
//! with ensemble fusion, and the shifted-window transformer classifier.

pub mod ceb;
pub mod checkpoint;
mod config;
mod feature;
mod gradcheck;
mod net;
mod params;
pub mod swin;
pub mod tdb;

pub use config::{Architecture, Branch, CectConfig, EnsembleCoefficients, ScaleTag, TcbConfig};
pub use feature::FeatureMap;
pub use gradcheck::{model_grad_check, ModelGradCheck, ModelGradCheckConfig};
pub use net::{cect_forward, extract_penultimate, forward, Cect, Forward, Inference};
pub use params::{init_params, Bound, ParamStore};
