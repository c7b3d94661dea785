//! Command-line front end for the two-moon knowledge-expansion
//! laboratory.
//!
//! The heavy lifting (networks, perturbations, training, expansion
//! estimation) lives in `mkelab-core`; this crate adds everything that
//! touches an operating system: the flat key=value configuration format
//! and its canonical hashes, CSV and checkpoint files, SVG plots,
//! resumable sweep execution, output-directory manifests, and the
//! `mkelab` binary itself.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod csvio;
pub mod error;
pub mod manifest;
pub mod plot;
pub mod sweep;
pub mod theory;
