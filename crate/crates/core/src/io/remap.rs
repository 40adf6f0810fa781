//! Maps string-keyed embedding tables onto numeric ids.
//!
//! Input is a CSV table whose header starts with `subject,sample`, optionally
//! followed by `template` and/or `role`, then `v0..v{d-1}`. Each kind of key
//! is numbered in lexicographic order of its distinct values, so the mapping
//! does not depend on row order. Without a template column every sample is
//! its own template.

use std::collections::{BTreeMap, BTreeSet};

use super::embeddings::{csv_error, parse_field, DEFAULT_ROLE};
use crate::error::{Error, Result};
use crate::types::{EmbeddingRecord, Role, SampleId, SubjectId, TemplateId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMapping {
    pub kind: &'static str,
    pub name: String,
    pub id: u64,
}

fn numbering(names: BTreeSet<String>) -> BTreeMap<String, u64> {
    names.into_iter().zip(0u64..).collect()
}

pub fn remap_text(text: &str) -> Result<(Vec<EmbeddingRecord>, Vec<IdMapping>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_error)?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.len() < 2 || header[0] != "subject" || header[1] != "sample" {
        return Err(Error::Parse {
            line: 1,
            message: "header must start with subject,sample".into(),
        });
    }
    let mut col = 2;
    let template_col = (header.get(col).map(String::as_str) == Some("template")).then(|| {
        col += 1;
        col - 1
    });
    let role_col = (header.get(col).map(String::as_str) == Some("role")).then(|| {
        col += 1;
        col - 1
    });
    for (i, name) in header[col..].iter().enumerate() {
        if *name != format!("v{i}") {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected column v{i}, found {name:?}"),
            });
        }
    }

    struct Row {
        subject: String,
        sample: String,
        template: Option<String>,
        role: Role,
        vector: Vec<f64>,
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        let role = match role_col {
            Some(i) => rec[i].trim().parse().map_err(|_| Error::Parse {
                line,
                message: format!("invalid role {:?}", &rec[i]),
            })?,
            None => DEFAULT_ROLE,
        };
        rows.push(Row {
            subject: rec[0].trim().to_string(),
            sample: rec[1].trim().to_string(),
            template: template_col.map(|i| rec[i].trim().to_string()),
            role,
            vector: (col..rec.len())
                .map(|i| parse_field::<f64>(&rec[i], line, "vector component"))
                .collect::<Result<_>>()?,
        });
    }

    let subjects = numbering(rows.iter().map(|r| r.subject.clone()).collect());
    let samples = numbering(rows.iter().map(|r| r.sample.clone()).collect());
    if samples.len() != rows.len() {
        let mut seen = BTreeSet::new();
        let dup = rows
            .iter()
            .find(|r| !seen.insert(&r.sample))
            .expect("a duplicate exists");
        return Err(Error::DuplicateSampleId(SampleId(samples[&dup.sample])));
    }
    let templates = numbering(rows.iter().filter_map(|r| r.template.clone()).collect());

    let mut records: Vec<EmbeddingRecord> = rows
        .into_iter()
        .map(|r| {
            let sample = samples[&r.sample];
            EmbeddingRecord {
                subject: SubjectId(subjects[&r.subject]),
                sample: SampleId(sample),
                template: TemplateId(r.template.map_or(sample, |t| templates[&t])),
                role: r.role,
                vector: r.vector,
            }
        })
        .collect();
    records.sort_by_key(|r| r.sample);

    let mut mapping = Vec::new();
    for (kind, table) in [
        ("subject", &subjects),
        ("sample", &samples),
        ("template", &templates),
    ] {
        mapping.extend(table.iter().map(|(name, &id)| IdMapping {
            kind,
            name: name.clone(),
            id,
        }));
    }
    Ok((records, mapping))
}

pub fn format_mapping(mapping: &[IdMapping]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["kind", "name", "id"]).map_err(csv_error)?;
    for m in mapping {
        w.write_record([m.kind, &m.name, &m.id.to_string()])
            .map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
