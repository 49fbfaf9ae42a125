//! Phrase-grounded fact-checking of generated radiology-style reports.
//!
//! The crate covers the whole desk-scale pipeline:
//!
//! * [`ffl`] and [`lexicon`]: structured finding labels and the controlled vocabulary.
//! * [`geometry`] and [`layout`]: normalized boxes, IoU/GIoU and the anatomical region grid.
//! * [`toyworld`]: a procedural image world with exact ground truth.
//! * [`perturb`]: real/fake corpus synthesis by reversal, relocation and substitution.
//! * [`model`]: the contrastive-regression fact-checking network and its training loop.
//! * [`scoring`]: report error quantification (RQ), accuracy/mIoU and concordance.
//! * [`cli`]: the `factcheck` command-line pipeline.

pub mod cli;
pub mod corpus;
pub mod error;
pub mod ffl;
pub mod geometry;
pub mod layout;
pub mod lexicon;
pub mod model;
pub mod perturb;
pub mod rng;
pub mod scoring;
pub mod toyworld;

pub use error::{Error, Result};
pub use ffl::{Ffl, Polarity};
pub use geometry::BBox;
pub use lexicon::Lexicon;
