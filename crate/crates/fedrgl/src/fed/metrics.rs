//! Metrics CSV export.
//!
//! One row per communication round. The header is fixed for a given
//! client count M:
//!
//! ```text
//! round,test_accuracy,
//!   c{m}_train_loss,c{m}_entropy,c{m}_weight,
//!   c{m}_clean,c{m}_noisy,c{m}_pseudo,
//!   c{m}_filter_precision,c{m}_filter_recall     for m in 0..M
//! ```
//!
//! Floats are written with Rust's shortest-round-trip formatting, so two
//! runs that produce identical numbers produce identical bytes. Fields
//! that do not apply (no filtering that round, no ground truth) are empty.

use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

use super::run::RoundRecord;

/// Column names for a run with `m_clients` clients.
pub fn csv_header(m_clients: usize) -> String {
    let mut header = String::from("round,test_accuracy");
    for m in 0..m_clients {
        for field in [
            "train_loss",
            "entropy",
            "weight",
            "clean",
            "noisy",
            "pseudo",
            "filter_precision",
            "filter_recall",
        ] {
            let _ = write!(header, ",c{m}_{field}");
        }
    }
    header
}

fn push_opt_usize(row: &mut String, v: Option<usize>) {
    match v {
        Some(v) => {
            let _ = write!(row, ",{v}");
        }
        None => row.push(','),
    }
}

fn push_opt_f64(row: &mut String, v: Option<f64>) {
    match v {
        Some(v) => {
            let _ = write!(row, ",{v}");
        }
        None => row.push(','),
    }
}

/// One record as a CSV row (no trailing newline).
pub fn csv_row(record: &RoundRecord) -> String {
    let mut row = String::new();
    let _ = write!(row, "{},{}", record.round, record.test_accuracy);
    for c in &record.clients {
        let _ = write!(row, ",{},{},{}", c.train_loss, c.entropy, c.weight);
        push_opt_usize(&mut row, c.clean);
        push_opt_usize(&mut row, c.noisy);
        push_opt_usize(&mut row, c.pseudo);
        push_opt_f64(&mut row, c.filter_precision);
        push_opt_f64(&mut row, c.filter_recall);
    }
    row
}

/// Full CSV document for a metrics stream.
pub fn csv_document(records: &[RoundRecord], m_clients: usize) -> String {
    let mut doc = csv_header(m_clients);
    doc.push('\n');
    for record in records {
        doc.push_str(&csv_row(record));
        doc.push('\n');
    }
    doc
}

pub fn write_metrics_csv(path: &Path, records: &[RoundRecord], m_clients: usize) -> Result<()> {
    std::fs::write(path, csv_document(records, m_clients))
        .map_err(|e| Error::io(path.display().to_string(), e))
}
