//! File formats.
//!
//! Operators are JSON objects `{"dim": d, "symmetric": bool, "q": [[[..]]]}`
//! with zero-based nesting `q[i][j][k]`. Partitions are JSON objects
//! `{"fine_dim": d, "blocks": [[..], ..], "weights": [..]}` with zero-based
//! cells (weights optional, default 1), or inline specs such as `1-3|4,5|6`
//! with one-based cells. Stochastic matrices are CSV files with a header row
//! of column indices and one row per output coordinate `k`.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::chain::StochasticMatrix;
use crate::constructions::Partition;
use crate::error::{QsoError, Result};
use crate::qso::Qso;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OperatorFile {
    dim: usize,
    symmetric: bool,
    q: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    fine_dim: usize,
    blocks: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> QsoError {
    QsoError::Io(format!("{}: {e}", path.display()))
}

fn json_err(e: serde_json::Error) -> QsoError {
    QsoError::Parse(format!("line {}, column {}: {e}", e.line(), e.column()))
}

/// Parses and validates an operator from JSON text.
pub fn operator_from_json(text: &str) -> Result<Qso> {
    let file: OperatorFile = serde_json::from_str(text).map_err(json_err)?;
    let d = file.dim;
    if d == 0 {
        return Err(QsoError::Parse("dim must be >= 1".into()));
    }
    if file.q.len() != d {
        return Err(QsoError::Parse(format!(
            "q has {} planes, expected {d}",
            file.q.len()
        )));
    }
    let mut flat = Vec::with_capacity(d * d * d);
    for (i, plane) in file.q.iter().enumerate() {
        if plane.len() != d {
            return Err(QsoError::Parse(format!(
                "q[{}] has {} rows, expected {d}",
                i + 1,
                plane.len()
            )));
        }
        for (j, row) in plane.iter().enumerate() {
            if row.len() != d {
                return Err(QsoError::Parse(format!(
                    "q[{}][{}] has {} entries, expected {d}",
                    i + 1,
                    j + 1,
                    row.len()
                )));
            }
            flat.extend_from_slice(row);
        }
    }
    Qso::from_flat(d, flat, file.symmetric)
}

pub fn operator_to_json(q: &Qso) -> String {
    let file = OperatorFile {
        dim: q.dim(),
        symmetric: q.is_symmetric(),
        q: q.to_nested(),
    };
    serde_json::to_string_pretty(&file).expect("operator serializes")
}

pub fn read_operator(path: impl AsRef<Path>) -> Result<Qso> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    operator_from_json(&text)
}

pub fn write_operator(path: impl AsRef<Path>, q: &Qso) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, operator_to_json(q) + "\n").map_err(|e| io_err(path, e))
}

pub fn partition_from_json(text: &str) -> Result<Partition> {
    let file: PartitionFile = serde_json::from_str(text).map_err(json_err)?;
    let weights = file.weights.unwrap_or_else(|| vec![1.0; file.fine_dim]);
    Partition::new(file.fine_dim, file.blocks, weights)
}

pub fn partition_to_json(p: &Partition) -> String {
    let file = PartitionFile {
        fine_dim: p.fine_dim(),
        blocks: p.blocks().to_vec(),
        weights: Some(p.weights().to_vec()),
    };
    serde_json::to_string_pretty(&file).expect("partition serializes")
}

/// Parses `1-3|4,5|6` (one-based, `|` between blocks, ranges and comma
/// lists inside a block) into a unit-weight partition of `0..fine_dim`.
pub fn parse_partition_spec(spec: &str, fine_dim: usize) -> Result<Partition> {
    let bad = |msg: String| QsoError::Parse(format!("partition spec '{spec}': {msg}"));
    let mut blocks = Vec::new();
    for part in spec.split('|') {
        let mut block = Vec::new();
        for item in part.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            let parse = |s: &str| -> Result<usize> {
                let v: usize = s
                    .trim()
                    .parse()
                    .map_err(|_| bad(format!("'{s}' is not an index")))?;
                if v == 0 {
                    return Err(bad("indices are one-based".into()));
                }
                Ok(v - 1)
            };
            match item.split_once('-') {
                Some((a, b)) => {
                    let (a, b) = (parse(a)?, parse(b)?);
                    if a > b {
                        return Err(bad(format!("descending range '{item}'")));
                    }
                    block.extend(a..=b);
                }
                None => block.push(parse(item)?),
            }
        }
        blocks.push(block);
    }
    Partition::unit(fine_dim, blocks)
}

/// Reads a partition from a JSON file if `spec` names an existing file,
/// otherwise parses it inline.
pub fn load_partition(spec: &str, fine_dim: usize) -> Result<Partition> {
    let path = Path::new(spec);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let p = partition_from_json(&text)?;
        crate::error::check_dim(fine_dim, p.fine_dim())?;
        Ok(p)
    } else {
        parse_partition_spec(spec, fine_dim)
    }
}

pub fn matrix_from_csv(reader: impl Read) -> Result<StochasticMatrix> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| QsoError::Parse(format!("row {}: {e}", r + 1)))?;
        let row = rec
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| QsoError::Parse(format!("row {}: '{s}' is not a number", r + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    StochasticMatrix::from_rows(&rows)
}

pub fn matrix_to_csv(m: &StochasticMatrix, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| QsoError::Io(e.to_string());
    w.write_record((1..=m.dim()).map(|j| j.to_string()))
        .map_err(err)?;
    for row in m.to_rows() {
        w.write_record(row.iter().map(|x| x.to_string()))
            .map_err(err)?;
    }
    w.flush().map_err(|e| QsoError::Io(e.to_string()))
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<StochasticMatrix> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    matrix_from_csv(file)
}
