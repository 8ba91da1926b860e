//! Desk-scale forensics toolkit for generative image models.
//!
//! Three pillars, all exercised against small self-contained differentiable
//! generators and procedural generator families:
//!
//! - disruption: imperceptible input perturbations that wreck a generator's
//!   output ([`attack`]);
//! - provenance: spread-spectrum dataset fingerprints and trigger-backdoor
//!   model watermarks ([`watermark`]);
//! - attribution: classifying which generator family produced an image from
//!   its DCT log-spectrum ([`attribution`]).
//!
//! Everything is seeded and deterministic: a fixed configuration reproduces
//! every artifact byte for byte.

pub mod attack;
pub mod attribution;
pub mod dataset;
pub mod error;
pub mod image;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod report;
pub mod rng;
pub mod spectral;
pub mod synth;
pub mod toynet;
pub mod watermark;

pub use dataset::{split_dataset, Dataset, DatasetItem};
pub use error::{Error, Result};
pub use image::ImageTensor;
pub use io::{load_image, save_image};
pub use rng::SeededRng;
pub use synth::synth_texture_dataset;
