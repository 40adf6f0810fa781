//! Embedding files.
//!
//! Binary layout (little-endian throughout):
//!
//! ```text
//! header  "TFRA" | version u32 = 1 | dim u32 | count u64 | flags u32
//! record  subject u64 | sample u64 | [template u64] | [role u8] | dim x f64
//! ```
//!
//! Flag bit 0 marks template ids as present, bit 1 roles. Records are in
//! strictly ascending sample id. When a field is absent the template id
//! defaults to the sample id and the role to gallery. The writer always
//! emits both fields.
//!
//! The text variant is a CSV table with header
//! `subject_id,sample_id,template_id,role,v0,...,v{d-1}` and floats written
//! with 17 significant digits, which round-trips every `f64` exactly.

use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{EmbeddingRecord, Role, SampleId, SubjectId, TemplateId};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"TFRA";
pub const EMBEDDING_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 24;
pub const FLAG_TEMPLATE: u32 = 1;
pub const FLAG_ROLE: u32 = 1 << 1;

/// Role assumed for records written without role information.
pub const DEFAULT_ROLE: Role = Role::Gallery;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub version: u32,
    pub dim: u32,
    pub count: u64,
    pub flags: u32,
}

impl EmbeddingFileHeader {
    pub fn record_len(&self) -> u64 {
        let mut len = 16 + 8 * self.dim as u64;
        if self.flags & FLAG_TEMPLATE != 0 {
            len += 8;
        }
        if self.flags & FLAG_ROLE != 0 {
            len += 1;
        }
        len
    }
}

pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Cursor { buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take<const N: usize>(&mut self) -> Result<[u8; N]> {
        if self.remaining() < N {
            return Err(Error::Truncated {
                expected: (self.pos + N) as u64,
                actual: self.buf.len() as u64,
            });
        }
        let mut out = [0u8; N];
        out.copy_from_slice(&self.buf[self.pos..self.pos + N]);
        self.pos += N;
        Ok(out)
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take::<1>()?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take()?))
    }
}

/// Checks that `records` can be written: one dimension, unique ids.
/// Returns the records sorted by sample id.
fn sorted_for_write(records: &[EmbeddingRecord]) -> Result<Vec<&EmbeddingRecord>> {
    let dim = records.first().map_or(0, |r| r.dim());
    if let Some(r) = records.iter().find(|r| r.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: r.dim(),
        });
    }
    if u32::try_from(dim).is_err() {
        return Err(Error::Shape(format!(
            "dimension {dim} does not fit in 32 bits"
        )));
    }
    let mut sorted: Vec<&EmbeddingRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sample);
    if let Some(w) = sorted.windows(2).find(|w| w[0].sample == w[1].sample) {
        return Err(Error::DuplicateSampleId(w[0].sample));
    }
    Ok(sorted)
}

pub fn encode_embeddings(records: &[EmbeddingRecord]) -> Result<Vec<u8>> {
    let sorted = sorted_for_write(records)?;
    let dim = records.first().map_or(0, |r| r.dim());
    let header = EmbeddingFileHeader {
        version: EMBEDDING_VERSION,
        dim: dim as u32,
        count: records.len() as u64,
        flags: FLAG_TEMPLATE | FLAG_ROLE,
    };
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * header.record_len() as usize);
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.extend_from_slice(&header.version.to_le_bytes());
    out.extend_from_slice(&header.dim.to_le_bytes());
    out.extend_from_slice(&header.count.to_le_bytes());
    out.extend_from_slice(&header.flags.to_le_bytes());
    for r in sorted {
        out.extend_from_slice(&r.subject.0.to_le_bytes());
        out.extend_from_slice(&r.sample.0.to_le_bytes());
        out.extend_from_slice(&r.template.0.to_le_bytes());
        out.push(r.role.code());
        for x in &r.vector {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn parse_header(bytes: &[u8]) -> Result<EmbeddingFileHeader> {
    let mut c = Cursor::new(bytes);
    let magic = c.take::<4>()?;
    if magic != EMBEDDING_MAGIC {
        return Err(Error::BadMagic {
            expected: EMBEDDING_MAGIC,
            found: magic,
        });
    }
    let version = c.u32()?;
    if version != EMBEDDING_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let dim = c.u32()?;
    let count = c.u64()?;
    let flags = c.u32()?;
    if flags & !(FLAG_TEMPLATE | FLAG_ROLE) != 0 {
        return Err(Error::InvalidFlags(flags));
    }
    Ok(EmbeddingFileHeader {
        version,
        dim,
        count,
        flags,
    })
}

/// Decodes a complete binary embedding file.
pub fn parse_embeddings(bytes: &[u8]) -> Result<Vec<EmbeddingRecord>> {
    let header = parse_header(bytes)?;
    let actual = (bytes.len() - HEADER_LEN) as u64;
    // Sized in u128 so a hostile count cannot overflow the check.
    let expected = header.count as u128 * header.record_len() as u128;
    if (actual as u128) < expected {
        return Err(Error::Truncated {
            expected: expected.min(u64::MAX as u128) as u64,
            actual,
        });
    }
    if actual as u128 > expected {
        return Err(Error::TrailingBytes(actual - expected as u64));
    }
    if header.dim == 0 && header.count > 0 {
        return Err(Error::Shape("records with zero-dimensional vectors".into()));
    }

    let mut c = Cursor::new(&bytes[HEADER_LEN..]);
    let mut records = Vec::with_capacity(header.count as usize);
    let mut last: Option<SampleId> = None;
    for _ in 0..header.count {
        let subject = SubjectId(c.u64()?);
        let sample = SampleId(c.u64()?);
        let template = if header.flags & FLAG_TEMPLATE != 0 {
            TemplateId(c.u64()?)
        } else {
            TemplateId(sample.0)
        };
        let role = if header.flags & FLAG_ROLE != 0 {
            let code = c.u8()?;
            Role::from_code(code)?
        } else {
            DEFAULT_ROLE
        };
        let vector = (0..header.dim)
            .map(|_| c.f64())
            .collect::<Result<Vec<_>>>()?;
        match last {
            Some(prev) if prev == sample => return Err(Error::DuplicateSampleId(sample)),
            Some(prev) if prev > sample => return Err(Error::Unordered(sample)),
            _ => {}
        }
        last = Some(sample);
        records.push(EmbeddingRecord {
            subject,
            sample,
            template,
            role,
            vector,
        });
    }
    Ok(records)
}

pub fn format_embeddings_text(records: &[EmbeddingRecord]) -> Result<String> {
    let sorted = sorted_for_write(records)?;
    let dim = records.first().map_or(0, |r| r.dim());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["subject_id", "sample_id", "template_id", "role"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..dim).map(|i| format!("v{i}")));
    w.write_record(&header).map_err(csv_error)?;
    for r in sorted {
        let mut row = vec![
            r.subject.0.to_string(),
            r.sample.0.to_string(),
            r.template.0.to_string(),
            r.role.as_str().to_string(),
        ];
        row.extend(r.vector.iter().map(|x| format!("{x:.16e}")));
        w.write_record(&row).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub(crate) fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

pub(crate) fn parse_field<T: std::str::FromStr>(field: &str, line: u64, what: &str) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what} {field:?}"),
    })
}

pub fn parse_embeddings_text(text: &str) -> Result<Vec<EmbeddingRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_error)?.clone();
    let fixed = ["subject_id", "sample_id", "template_id", "role"];
    if header.len() < fixed.len() || fixed.iter().zip(header.iter()).any(|(a, b)| *a != b.trim()) {
        return Err(Error::Parse {
            line: 1,
            message: format!("header must start with {}", fixed.join(",")),
        });
    }
    let dim = header.len() - fixed.len();
    for (i, name) in header.iter().skip(fixed.len()).enumerate() {
        if name.trim() != format!("v{i}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column v{i}, found {name:?}"),
            });
        }
    }
    let mut records = Vec::new();
    let mut last: Option<SampleId> = None;
    for row in rdr.records() {
        let row = row.map_err(csv_error)?;
        let line = row.position().map_or(0, |p| p.line());
        let subject = SubjectId(parse_field(&row[0], line, "subject_id")?);
        let sample = SampleId(parse_field(&row[1], line, "sample_id")?);
        let template = TemplateId(parse_field(&row[2], line, "template_id")?);
        let role: Role = row[3].trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("invalid role {:?}", &row[3]),
        })?;
        let vector = (0..dim)
            .map(|i| parse_field::<f64>(&row[4 + i], line, "vector component"))
            .collect::<Result<Vec<_>>>()?;
        match last {
            Some(prev) if prev == sample => return Err(Error::DuplicateSampleId(sample)),
            Some(prev) if prev > sample => return Err(Error::Unordered(sample)),
            _ => {}
        }
        last = Some(sample);
        records.push(EmbeddingRecord {
            subject,
            sample,
            template,
            role,
            vector,
        });
    }
    Ok(records)
}

fn is_text_path(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("csv") | Some("txt") | Some("tsv")
    )
}

/// Reads either encoding; binary files are recognized by their magic bytes.
pub fn read_embeddings(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let bytes = super::read_bytes(path)?;
    if bytes.starts_with(&EMBEDDING_MAGIC) || !is_text_path(path) {
        parse_embeddings(&bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
            line: 0,
            message: e.to_string(),
        })?;
        parse_embeddings_text(text)
    }
}

/// Writes text for `.csv`/`.txt`/`.tsv` paths and binary otherwise.
pub fn write_embeddings(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    let bytes = if is_text_path(path) {
        format_embeddings_text(records)?.into_bytes()
    } else {
        encode_embeddings(records)?
    };
    super::write_bytes(path, &bytes)
}
