//! Core algorithms for a small multimodal knowledge-expansion laboratory.
//!
//! The experiment this crate supports: train a unimodal teacher on a few
//! labeled samples, let it pseudo-label a larger unlabeled pool where both
//! modalities are observed, then train a multimodal student on those pseudo
//! labels under consistency regularization. Done right, the student beats
//! its own teacher, and the `expansion` module measures the data-geometry
//! quantities that explain why.
//!
//! Modules:
//!
//! * [`net`]: dense MLPs with manual forward/backward passes, the
//!   classification loss, and SGD/Adam steps.
//! * [`perturb`]: stochastic input/hidden perturbations (Gaussian noise,
//!   dropout) and the consistency penalty between clean and perturbed views.
//! * [`synth`]: the two-moon generator, the labeled/unlabeled/test split,
//!   and modality projections.
//! * [`mke`]: the teacher/pseudo-label/student pipeline and its baselines.
//! * [`expansion`]: empirical expansion constants on finite point sets and
//!   the resulting student-error bounds.
//!
//! Everything is deterministic given a seed: random draws come from named
//! counter-mode streams ([`stream`]) so adding a consumer never shifts the
//! draws of another. The crate is `no_std` + `alloc`; the `std` feature
//! (default) only forwards to dependencies.

#![cfg_attr(not(feature = "std"), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod expansion;
pub mod mke;
pub mod net;
pub mod perturb;
pub mod stream;
pub mod synth;

pub use error::{Error, Result};
