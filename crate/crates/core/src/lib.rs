//! Training-free post-processing for text-prompted segmentation maps.
//!
//! A case flows through [`pipeline::process_case`]: anchor organs give a
//! control region and jittered ROIs ([`geometry`]), the segmentor is queried
//! under several views and supports ([`fusion`]), connected components of
//! the fused map become candidates ([`candidates`]), each candidate's
//! intensities are tested against the control region ([`stats`]) with
//! Benjamini–Hochberg selection, and three gates ([`gating`]) decide what
//! reaches the final mask.

pub mod bench;
pub mod candidates;
pub mod config;
pub mod error;
pub mod fusion;
pub mod gating;
pub mod geometry;
pub mod grid;
pub mod manifest;
pub mod metrics;
pub mod pipeline;
pub mod plan;
pub mod runner;
pub mod seed;
pub mod segmentor;
pub mod sgrid;
pub mod stats;
pub mod synthetic;

pub use error::{Error, Result};
