//! The tabular CSV dialect.
//!
//! UTF-8, comma separated, one header row. The last column must be named
//! `label`; every other column is a numeric feature.
//!
//! Label mapping: if every label cell is a canonical non-negative decimal
//! integer (no sign, no leading zeros) not above [`MAX_INTEGER_LABEL`], the
//! integer is the class id and there are `max + 1` classes. Otherwise labels
//! are strings and receive ids in order of first appearance. Saving writes
//! the class name of each id, so integer-labelled data round-trips exactly.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use hornets_core::{Dataset, Matrix};

use crate::error::{AppError, Result};

pub const LABEL_COLUMN: &str = "label";
pub const MAX_INTEGER_LABEL: u64 = 65_535;

fn parse_error(origin: &str, line: u64, message: impl Into<String>) -> AppError {
    AppError::Parse {
        origin: origin.to_owned(),
        line,
        message: message.into(),
    }
}

fn csv_error(origin: &str, err: csv::Error) -> AppError {
    let line = err.position().map_or(0, |p| p.line());
    let message = match err.kind() {
        csv::ErrorKind::UnequalLengths { expected_len, len, .. } => {
            format!("row has {len} fields, expected {expected_len}")
        }
        _ => err.to_string(),
    };
    parse_error(origin, line, message)
}

fn canonical_integer(s: &str) -> Option<u64> {
    let digits = !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits || (s.len() > 1 && s.starts_with('0')) {
        return None;
    }
    s.parse().ok().filter(|&v| v <= MAX_INTEGER_LABEL)
}

fn map_labels(raw: &[String]) -> (Vec<usize>, Vec<String>) {
    let ints: Option<Vec<u64>> = raw.iter().map(|s| canonical_integer(s)).collect();
    if let Some(ints) = ints {
        let classes = ints.iter().max().map_or(0, |&m| m as usize + 1);
        let names = (0..classes).map(|c| c.to_string()).collect();
        return (ints.into_iter().map(|v| v as usize).collect(), names);
    }
    let mut ids: HashMap<&str, usize> = HashMap::new();
    let mut names = Vec::new();
    let labels = raw
        .iter()
        .map(|s| {
            *ids.entry(s.as_str()).or_insert_with(|| {
                names.push(s.clone());
                names.len() - 1
            })
        })
        .collect();
    (labels, names)
}

/// Reads a dataset; `origin` names the source in error messages.
pub fn read_csv<R: Read>(reader: R, origin: &str) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers().map_err(|e| csv_error(origin, e))?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(parse_error(origin, 1, "missing header row"));
    }
    if header[header.len() - 1].trim() != LABEL_COLUMN {
        return Err(parse_error(
            origin,
            1,
            format!("last column must be named '{LABEL_COLUMN}', found '{}'", &header[header.len() - 1]),
        ));
    }
    let cols = header.len() - 1;
    if cols == 0 {
        return Err(parse_error(origin, 1, "no feature columns"));
    }
    let feature_names: Vec<String> = header.iter().take(cols).map(|h| h.trim().to_owned()).collect();

    let mut data = Vec::new();
    let mut raw_labels = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_error(origin, e))?;
        let line = record.position().map_or(0, |p| p.line());
        for (j, cell) in record.iter().take(cols).enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_error(origin, line, format!("column '{}': '{cell}' is not a number", feature_names[j]))
            })?;
            if !v.is_finite() {
                return Err(parse_error(origin, line, format!("column '{}': non-finite value", feature_names[j])));
            }
            data.push(v);
        }
        let label = record[cols].trim();
        if label.is_empty() {
            return Err(parse_error(origin, line, "empty label"));
        }
        raw_labels.push(label.to_owned());
    }
    if raw_labels.is_empty() {
        return Err(parse_error(origin, 1, "no data rows"));
    }

    let (labels, class_names) = map_labels(&raw_labels);
    let features = Matrix::from_vec(raw_labels.len(), cols, data)?;
    let ds = Dataset {
        features,
        labels,
        feature_names,
        class_names,
        provenance: None,
    };
    ds.validate()?;
    Ok(ds)
}

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| AppError::io(path, e))?;
    read_csv(std::io::BufReader::new(file), &path.display().to_string())
}

/// Writes features with shortest round-trip formatting.
pub fn write_csv<W: Write>(dataset: &Dataset, writer: W) -> Result<()> {
    dataset.validate()?;
    let mut w = csv::Writer::from_writer(writer);
    let to_err = |e: csv::Error| AppError::Format {
        origin: "csv writer".into(),
        message: e.to_string(),
    };
    let mut header: Vec<&str> = dataset.feature_names.iter().map(String::as_str).collect();
    header.push(LABEL_COLUMN);
    w.write_record(&header).map_err(to_err)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for (features, &y) in dataset.features.row_iter().zip(&dataset.labels) {
        row.clear();
        row.extend(features.iter().map(|v| v.to_string()));
        row.push(dataset.class_names[y].clone());
        w.write_record(&row).map_err(to_err)?;
    }
    w.flush().map_err(|e| AppError::Format {
        origin: "csv writer".into(),
        message: e.to_string(),
    })
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| AppError::io(path, e))?;
    write_csv(dataset, std::io::BufWriter::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<Dataset> {
        read_csv(text.as_bytes(), "mem")
    }

    #[test]
    fn three_rows() {
        let ds = read("a,b,label\n0,1,1\n1,1,0\n0.5,-2,1\n").unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.feature_names, ["a", "b"]);
        assert_eq!(ds.labels, [1, 0, 1]);
        assert_eq!(ds.features.get(2, 1), -2.0);
    }

    #[test]
    fn string_labels_in_first_appearance_order() {
        let ds = read("x,label\n1,yes\n2,no\n3,yes\n4,maybe\n").unwrap();
        assert_eq!(ds.labels, [0, 1, 0, 2]);
        assert_eq!(ds.class_names, ["yes", "no", "maybe"]);
    }

    #[test]
    fn padded_or_signed_integers_are_strings() {
        let ds = read("x,label\n1,01\n2,1\n").unwrap();
        assert_eq!(ds.class_names, ["01", "1"]);
        let ds = read("x,label\n1,-1\n2,1\n").unwrap();
        assert_eq!(ds.class_names, ["-1", "1"]);
    }

    #[test]
    fn integer_labels_are_ids() {
        let ds = read("x,label\n1,2\n2,0\n").unwrap();
        assert_eq!(ds.labels, [2, 0]);
        assert_eq!(ds.class_count(), 3);
    }

    #[test]
    fn ragged_row_cites_its_line() {
        let err = read("a,b,label\n0,1,1\n0,1\n1,1,0\n").unwrap_err();
        match err {
            AppError::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_numeric_cell_cites_its_line() {
        let err = read("a,label\n1,0\n2,1\nthree,0\n").unwrap_err();
        assert!(err.to_string().starts_with("mem:4:"), "{err}");
    }

    #[test]
    fn header_checks() {
        assert!(read("a,b\n1,2\n").is_err());
        assert!(read("label\n1\n").is_err());
        assert!(read("").is_err());
        assert!(read("a,label\n").is_err());
        assert!(read("a,label\n1,\n").is_err());
        assert!(read("a,label\nNaN,1\n").is_err());
    }

    #[test]
    fn write_then_read() {
        let ds = read("a,b,label\n0.1,1e-300,1\n3,-0,0\n").unwrap();
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = read_csv(buf.as_slice(), "buf").unwrap();
        assert_eq!(back, ds);
    }
}
