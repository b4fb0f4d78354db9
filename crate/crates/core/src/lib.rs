//! Partial information decomposition of multimodal annotation labels.
//!
//! Annotations collected from single modalities and from both modalities are
//! aggregated into weighted `(y1, y2, y)` triples, turned into an empirical
//! joint distribution, and decomposed into redundancy `R`, unique
//! information `U1`, `U2` and synergy `S` (all in bits).

// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agreement;
pub mod dataset;
pub mod error;
pub mod info;
pub mod label_space;
pub mod pid;
pub mod synth;

pub use error::{Error, Result};
pub use info::Joint3;
pub use label_space::{LabelIndex, LabelSpace};
pub use pid::{convert, decompose, PidResult, SolverConfig};
