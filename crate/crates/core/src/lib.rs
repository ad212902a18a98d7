//! Volumetric lesion detection from voxel likelihood maps, with the
//! patient- and lesion-level evaluation used to compare detectors.
//!
//! The crate covers NRRD volume I/O ([`voxgrid`]), binary morphology
//! ([`morphology`]), ROI extraction and likelihood post-processing
//! ([`pipeline`]), candidate extraction and matching ([`candidates`]),
//! ROC/FROC analysis and permutation testing ([`metrics`]), a synthetic
//! cohort generator ([`phantom`]) and cohort evaluation ([`evaluate`]).

pub mod candidates;
pub mod cli;
pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod morphology;
pub mod phantom;
pub mod pipeline;
pub mod voxgrid;

pub use error::{Error, Result};
