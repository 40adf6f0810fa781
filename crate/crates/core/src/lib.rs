//! Encoder-grounded recognizability for biometric embeddings.
//!
//! Labels every sample by its angular relation to class centers (CCS, NNCCS,
//! CCAS and the certainty-ratio baseline), trains a small regression head to
//! predict those labels from the embedding alone, uses the predictions to
//! filter and weight samples when building templates, and measures the
//! outcome with verification ROC, error-versus-reject curves and Spearman
//! correlation.
//!
//! The crate is organized by pipeline stage:
//!
//! | module          | stage                                              |
//! |-----------------|----------------------------------------------------|
//! | [`labels`]      | class centers, CCS/NNCCS/CCAS/CR labels            |
//! | [`calibration`] | shared logistic remap for saturated score pools    |
//! | [`predictor`]   | MLP head, AdamW, training loop, prediction         |
//! | [`aggregation`] | score filtering and weighted template pooling      |
//! | [`evaluation`]  | ROC/TAR@FMR, ERC, Spearman, per-condition reports  |
//! | [`synth`]       | seeded synthetic datasets with known geometry      |
//! | [`io`]          | binary/text file formats and run configuration     |
//! | [`pipeline`]    | file-to-file stages driven by the `recog` CLI      |

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aggregation;
pub mod calibration;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod labels;
pub mod linalg;
pub mod pipeline;
pub mod predictor;
pub mod synth;
pub mod types;

pub use error::{Error, Result};
pub use types::{EmbeddingRecord, Role, SampleId, SubjectId, TemplateId};
