use std::path::Path;

use ndarray::Array2;

use super::Dataset;
use crate::error::{Error, Result};

/// Layout of a CSV dataset: features first, the last `label_count` columns
/// are binary labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvOptions {
    pub label_count: usize,
    /// First record holds column names.
    pub has_header: bool,
}

impl CsvOptions {
    pub fn new(label_count: usize) -> Self {
        Self {
            label_count,
            has_header: false,
        }
    }

    pub fn with_header(mut self, has_header: bool) -> Self {
        self.has_header = has_header;
        self
    }
}

pub fn load_csv(path: impl AsRef<Path>, options: CsvOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };

    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(options.has_header)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            ::csv::ErrorKind::Io(source) => Error::Io {
                path: path.to_path_buf(),
                source,
            },
            other => parse_err(0, 0, format!("{other:?}")),
        })?;

    let header: Option<Vec<String>> = if options.has_header {
        let h = reader
            .headers()
            .map_err(|e| parse_err(1, 0, e.to_string()))?;
        Some(h.iter().map(str::to_string).collect())
    } else {
        None
    };

    let mut width = header.as_ref().map(Vec::len);
    let mut values: Vec<f64> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut n = 0usize;
    let first_row = if options.has_header { 2 } else { 1 };

    for (offset, record) in reader.records().enumerate() {
        let row = first_row + offset;
        let record = record.map_err(|e| parse_err(row, 0, e.to_string()))?;
        let cols = *width.get_or_insert(record.len());
        if record.len() != cols {
            return Err(parse_err(
                row,
                0,
                format!("expected {cols} columns, found {}", record.len()),
            ));
        }
        if options.label_count == 0 || options.label_count >= cols {
            return Err(Error::InvalidArgument(format!(
                "label count {} must be between 1 and {} for {cols} columns",
                options.label_count,
                cols - 1
            )));
        }
        let p = cols - options.label_count;
        for (j, field) in record.iter().enumerate() {
            let column = j + 1;
            if j < p {
                let v: f64 = field.parse().map_err(|_| {
                    parse_err(row, column, format!("cannot parse {field:?} as a number"))
                })?;
                if !v.is_finite() {
                    return Err(parse_err(
                        row,
                        column,
                        format!("non-finite value {field:?}"),
                    ));
                }
                values.push(v);
            } else {
                labels.push(parse_label(field).ok_or_else(|| {
                    parse_err(row, column, format!("label value {field:?} is not 0 or 1"))
                })?);
            }
        }
        n += 1;
    }

    let cols = match width {
        Some(cols) if n > 0 => cols,
        _ => return Err(parse_err(first_row, 0, "file has no data rows".into())),
    };
    let p = cols - options.label_count;
    let m = options.label_count;
    let features =
        Array2::from_shape_vec((n, p), values).map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let labels =
        Array2::from_shape_vec((n, m), labels).map_err(|e| Error::ShapeMismatch(e.to_string()))?;

    let (feature_names, label_names) = match header {
        Some(h) => (h[..p].to_vec(), h[p..].to_vec()),
        None => (
            (0..p).map(|j| format!("f{j}")).collect(),
            (0..m).map(|j| format!("l{j}")).collect(),
        ),
    };
    Dataset::new(features, labels, feature_names, label_names)
}

/// Accepts `0`/`1` in any numeric spelling (`1.0`, `0e0`), nothing else.
pub(super) fn parse_label(field: &str) -> Option<u8> {
    match field.parse::<f64>() {
        Ok(0.0) => Some(0),
        Ok(1.0) => Some(1),
        _ => None,
    }
}
