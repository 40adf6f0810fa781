//! On-disk formats and run configuration.
//!
//! | artifact            | format                                          |
//! |---------------------|-------------------------------------------------|
//! | embeddings          | `TFRA` binary, or CSV with 17-digit floats       |
//! | labels              | CSV, 9 significant digits                        |
//! | predictions         | CSV                                              |
//! | head checkpoint     | `TFRH` binary                                    |
//! | training history    | CSV                                              |
//! | run configuration   | flat TOML                                        |
//! | metrics report      | JSON (`recog-metrics/1`) plus a text rendering   |
//!
//! The `parse_*` functions take byte slices or strings and never panic on
//! malformed input.

mod checkpoint;
mod config;
mod embeddings;
mod remap;
mod tables;

use std::path::Path;

pub use checkpoint::{
    encode_head, parse_head, read_head, write_head, HeadCheckpoint, HEAD_MAGIC, HEAD_VERSION,
};
pub use config::{CenterChoice, QualityLawName, RunConfig, ScoreOrigin};
pub use embeddings::{
    encode_embeddings, format_embeddings_text, parse_embeddings, parse_embeddings_text,
    parse_header, read_embeddings, write_embeddings, EmbeddingFileHeader, DEFAULT_ROLE,
    EMBEDDING_MAGIC, EMBEDDING_VERSION, FLAG_ROLE, FLAG_TEMPLATE, HEADER_LEN,
};
pub use remap::{format_mapping, remap_text, IdMapping};
pub use tables::{
    format_history, format_labels, format_predictions, format_template_summary, format_truth,
    parse_history, parse_labels, parse_predictions, parse_template_summary, parse_truth,
    TemplateSummary,
};

use crate::error::{Error, Result};

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = read_bytes(path)?;
    String::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| Error::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, bytes).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}
