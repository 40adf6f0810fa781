//! Identity keys and the per-sample embedding record.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u64);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                self.0.fmt(f)
            }
        }

        impl From<u64> for $name {
            fn from(v: u64) -> Self {
                Self(v)
            }
        }
    };
}

id_newtype!(
    /// Identity key.
    SubjectId
);
id_newtype!(
    /// Unique per-sample key within a dataset.
    SampleId
);
id_newtype!(
    /// Grouping key for template aggregation.
    TemplateId
);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Gallery,
    Probe,
    /// Output of template aggregation.
    Template,
}

impl Role {
    pub fn code(self) -> u8 {
        match self {
            Role::Gallery => 0,
            Role::Probe => 1,
            Role::Template => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Role::Gallery),
            1 => Ok(Role::Probe),
            2 => Ok(Role::Template),
            other => Err(Error::InvalidRole(other)),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Gallery => "gallery",
            Role::Probe => "probe",
            Role::Template => "template",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gallery" => Ok(Role::Gallery),
            "probe" => Ok(Role::Probe),
            "template" => Ok(Role::Template),
            other => Err(Error::Config(format!("unknown role {other:?}"))),
        }
    }
}

/// One sample's metadata and its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub subject: SubjectId,
    pub sample: SampleId,
    pub template: TemplateId,
    pub role: Role,
    pub vector: Vec<f64>,
}

impl EmbeddingRecord {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Checks the dataset-level invariants: shared dimension, finite nonzero
/// vectors and unique sample ids. Returns the common dimension.
pub fn validate_records(records: &[EmbeddingRecord]) -> Result<usize> {
    let first = records.first().ok_or(Error::EmptyInput("records"))?;
    let dim = first.dim();
    if dim == 0 {
        return Err(Error::DegenerateVector.at_sample(first.sample));
    }
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if r.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: r.dim(),
            }
            .at_sample(r.sample));
        }
        if !crate::linalg::is_usable(&r.vector) {
            return Err(Error::DegenerateVector.at_sample(r.sample));
        }
        if !seen.insert(r.sample) {
            return Err(Error::DuplicateSampleId(r.sample));
        }
    }
    Ok(dim)
}
