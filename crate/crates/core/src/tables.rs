//! CSV table reading shared by the network loaders.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

/// Reads a headed CSV file, skipping `#` comment lines and trimming fields.
pub(crate) fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row = record.map_err(|e| parse_error(path, &e))?;
        rows.push(row);
    }
    Ok(rows)
}

fn parse_error(path: &Path, e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    }
}

/// Collects `key = value` pairs from leading `#` comment lines.
pub(crate) fn header_pairs(path: &Path) -> Result<Vec<(String, String, usize)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut pairs = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let Some(comment) = line.trim_start().strip_prefix('#') else {
            break;
        };
        for part in comment.split([',', ';']) {
            if let Some((k, v)) = part.split_once('=') {
                pairs.push((k.trim().to_string(), v.trim().to_string(), i + 1));
            }
        }
    }
    Ok(pairs)
}
