//! Anatomy-constrained lesion segmentation at desk scale.
//!
//! The crate follows a three-phase pipeline:
//!
//! 1. a lung segmenter is trained on lung phantoms and its output is turned
//!    into a lung+ space constraint per target sample ([`constraint`]);
//! 2. a discriminator scores each constraint and rejected ones fall back to an
//!    all-ones mask ([`discriminator`]);
//! 3. the lesion segmenter is trained with Dice plus an out-of-constraint
//!    penalty ([`losses`], [`segnet`]).
//!
//! [`pipeline`] wires the phases to on-disk datasets and reports.

pub mod constraint;
pub mod discriminator;
pub mod error;
pub mod gradcheck;
pub mod losses;
pub mod mask;
pub mod metrics;
pub mod morphology;
pub mod pipeline;
pub mod rng;
pub mod segnet;
pub mod synth;

pub use error::{Error, Result};
pub use mask::{all_ones, intersection_area, soft_intersection, threshold, BinaryMask, GrayImage, ProbMap};
pub use segnet::{NetworkSpec, Params};
