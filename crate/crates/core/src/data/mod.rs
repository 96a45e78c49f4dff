//! Image ingestion, splitting, preprocessing, augmentation and synthetic
//! data.

pub mod augment;
mod dataset;
pub mod image;
mod manifest;
pub mod preprocess;
mod split;
pub mod synth;

pub use augment::AugmentConfig;
pub use dataset::{AugmentPlan, Dataset, Sample};
pub use manifest::{ClassCounts, Label, Manifest, Record};
pub use preprocess::{preprocess, Normalization};
pub use split::{split, split_counts, SplitMode, SplitSpec, Splits};
pub use synth::{synth_generate, synth_image};
