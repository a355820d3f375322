//! Mulan-style ARFF datasets: an ARFF file holding features and labels, plus
//! an XML file naming the label attributes.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::csv::parse_label;
use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum AttributeKind {
    Numeric,
    /// Nominal with exactly the values {0, 1}.
    Binary,
    Other(String),
}

#[derive(Debug, Clone)]
struct Attribute {
    name: String,
    kind: AttributeKind,
    line: usize,
}

/// Parse the label names out of a Mulan label-spec XML document, in document
/// order. Nested (hierarchical) labels are flattened.
pub fn parse_label_spec(xml: &str) -> std::result::Result<Vec<String>, String> {
    let doc = roxmltree::Document::parse(xml).map_err(|e| e.to_string())?;
    let names: Vec<String> = doc
        .descendants()
        .filter(|n| n.is_element() && n.tag_name().name() == "label")
        .map(|n| {
            n.attribute("name")
                .map(str::to_string)
                .ok_or_else(|| "label element without a name attribute".to_string())
        })
        .collect::<std::result::Result<_, _>>()?;
    if names.is_empty() {
        return Err("label spec lists no labels".into());
    }
    Ok(names)
}

/// Load an ARFF file, turning the attributes named in `label_spec_path` into
/// label columns (in spec order) and every other attribute into a feature
/// (in header order).
pub fn load_arff(
    data_path: impl AsRef<Path>,
    label_spec_path: impl AsRef<Path>,
) -> Result<Dataset> {
    let data_path = data_path.as_ref();
    let spec_path = label_spec_path.as_ref();
    let read = |p: &Path| {
        fs::read_to_string(p).map_err(|source| Error::Io {
            path: p.to_path_buf(),
            source,
        })
    };
    let spec = read(spec_path)?;
    let label_names = parse_label_spec(&spec).map_err(|message| Error::Parse {
        path: spec_path.to_path_buf(),
        row: 0,
        column: 0,
        message,
    })?;
    let text = read(data_path)?;
    parse_arff(&text, &label_names, data_path)
}

fn parse_arff(text: &str, label_names: &[String], path: &Path) -> Result<Dataset> {
    let err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };

    let mut attributes: Vec<Attribute> = Vec::new();
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut in_data = false;
    for (line_no, raw) in lines.by_ref() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        let lower = line.to_ascii_lowercase();
        if lower.starts_with("@relation") {
            continue;
        } else if lower.starts_with("@attribute") {
            let rest = line["@attribute".len()..].trim_start();
            let (name, kind) = parse_attribute(rest).map_err(|m| err(line_no, 0, m))?;
            attributes.push(Attribute {
                name,
                kind,
                line: line_no,
            });
        } else if lower.starts_with("@data") {
            in_data = true;
            break;
        } else {
            return Err(err(line_no, 0, format!("unexpected header line {line:?}")));
        }
    }
    if !in_data {
        return Err(err(0, 0, "missing @data section".into()));
    }
    if attributes.is_empty() {
        return Err(err(0, 0, "no @attribute declarations".into()));
    }

    let index: HashMap<&str, usize> = attributes
        .iter()
        .enumerate()
        .map(|(i, a)| (a.name.as_str(), i))
        .collect();
    let mut label_columns = Vec::with_capacity(label_names.len());
    for name in label_names {
        let &col = index.get(name.as_str()).ok_or_else(|| {
            Error::InvalidDataset(format!(
                "label {name:?} is not an attribute of {}",
                path.display()
            ))
        })?;
        let attr = &attributes[col];
        if let AttributeKind::Other(kind) = &attr.kind {
            return Err(err(
                attr.line,
                0,
                format!("label attribute {:?} has non-binary type {kind}", attr.name),
            ));
        }
        label_columns.push(col);
    }
    let mut is_label = vec![false; attributes.len()];
    for &c in &label_columns {
        is_label[c] = true;
    }
    let feature_columns: Vec<usize> = (0..attributes.len()).filter(|&c| !is_label[c]).collect();
    for &c in &feature_columns {
        let attr = &attributes[c];
        if let AttributeKind::Other(kind) = &attr.kind {
            return Err(err(
                attr.line,
                0,
                format!(
                    "feature attribute {:?} has non-numeric type {kind}",
                    attr.name
                ),
            ));
        }
    }

    let width = attributes.len();
    let mut features: Vec<f64> = Vec::new();
    let mut labels: Vec<u8> = Vec::new();
    let mut n = 0usize;
    let mut row = vec![0.0f64; width];
    for (line_no, raw) in lines {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        parse_data_row(line, &mut row).map_err(|(column, m)| err(line_no, column, m))?;
        for &c in &feature_columns {
            features.push(row[c]);
        }
        for &c in &label_columns {
            let v = row[c];
            let label = if v == 0.0 {
                0
            } else if v == 1.0 {
                1
            } else {
                return Err(err(
                    line_no,
                    c + 1,
                    format!("label value {v} is not 0 or 1"),
                ));
            };
            labels.push(label);
        }
        n += 1;
    }
    if n == 0 {
        return Err(err(0, 0, "no data rows".into()));
    }

    let p = feature_columns.len();
    let m = label_columns.len();
    Dataset::new(
        Array2::from_shape_vec((n, p), features)
            .map_err(|e| Error::ShapeMismatch(e.to_string()))?,
        Array2::from_shape_vec((n, m), labels).map_err(|e| Error::ShapeMismatch(e.to_string()))?,
        feature_columns
            .iter()
            .map(|&c| attributes[c].name.clone())
            .collect(),
        label_names.to_vec(),
    )
}

/// Split off a possibly quoted token; returns (token, remainder).
fn take_token(s: &str) -> std::result::Result<(String, &str), String> {
    let s = s.trim_start();
    let mut chars = s.char_indices();
    match chars.next() {
        None => Err("expected a token".into()),
        Some((_, q @ ('\'' | '"'))) => {
            let mut out = String::new();
            let mut escaped = false;
            for (i, c) in chars {
                if escaped {
                    out.push(c);
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    return Ok((out, &s[i + c.len_utf8()..]));
                } else {
                    out.push(c);
                }
            }
            Err("unterminated quoted name".into())
        }
        Some(_) => {
            let end = s
                .find(|c: char| c.is_whitespace() || c == '{')
                .unwrap_or(s.len());
            Ok((s[..end].to_string(), &s[end..]))
        }
    }
}

fn parse_attribute(rest: &str) -> std::result::Result<(String, AttributeKind), String> {
    let (name, rest) = take_token(rest)?;
    let ty = rest.trim();
    if ty.is_empty() {
        return Err(format!("attribute {name:?} has no type"));
    }
    let kind = if ty.starts_with('{') {
        let inner = ty
            .strip_prefix('{')
            .and_then(|t| t.strip_suffix('}'))
            .ok_or_else(|| format!("malformed nominal type {ty:?}"))?;
        let mut values: Vec<String> = split_fields(inner)
            .into_iter()
            .map(|v| unquote(v.trim()).to_string())
            .collect();
        values.sort();
        if values == ["0", "1"] {
            AttributeKind::Binary
        } else {
            AttributeKind::Other(ty.to_string())
        }
    } else {
        match ty.to_ascii_lowercase().as_str() {
            "numeric" | "real" | "integer" => AttributeKind::Numeric,
            _ => AttributeKind::Other(ty.to_string()),
        }
    };
    Ok((name, kind))
}

fn unquote(s: &str) -> &str {
    let b = s.as_bytes();
    if b.len() >= 2 && (b[0] == b'\'' || b[0] == b'"') && b[b.len() - 1] == b[0] {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

/// Comma split that respects single and double quotes.
fn split_fields(s: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut quote: Option<char> = None;
    for (i, c) in s.char_indices() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '\'' | '"') => quote = Some(c),
            (None, ',') => {
                out.push(&s[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&s[start..]);
    out
}

fn parse_value(field: &str) -> std::result::Result<f64, String> {
    let field = unquote(field.trim());
    if field == "?" {
        return Err("missing values are not supported".into());
    }
    if let Some(label) = parse_label(field) {
        return Ok(f64::from(label));
    }
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("cannot parse {field:?} as a number")),
    }
}

/// Fill `row` from a dense (`v1,v2,...`) or sparse (`{i v, j v}`) data line.
/// Errors carry a 1-based column.
fn parse_data_row(line: &str, row: &mut [f64]) -> std::result::Result<(), (usize, String)> {
    let width = row.len();
    if let Some(inner) = line.strip_prefix('{') {
        let inner = inner
            .strip_suffix('}')
            .ok_or((0, "unterminated sparse row".to_string()))?;
        row.iter_mut().for_each(|v| *v = 0.0);
        if inner.trim().is_empty() {
            return Ok(());
        }
        for entry in split_fields(inner) {
            let entry = entry.trim();
            let (idx, value) = entry
                .split_once(char::is_whitespace)
                .ok_or((0, format!("malformed sparse entry {entry:?}")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| (0, format!("bad sparse index {idx:?}")))?;
            if idx >= width {
                return Err((0, format!("sparse index {idx} beyond {width} attributes")));
            }
            row[idx] = parse_value(value).map_err(|m| (idx + 1, m))?;
        }
        Ok(())
    } else {
        let fields = split_fields(line);
        if fields.len() != width {
            return Err((
                0,
                format!("expected {width} values, found {}", fields.len()),
            ));
        }
        for (j, field) in fields.into_iter().enumerate() {
            row[j] = parse_value(field).map_err(|m| (j + 1, m))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HAND: &str = "% comment\n@relation hand\n\n@attribute zeta numeric\n@attribute 'tag one' {0,1}\n@attribute alpha REAL\n@data\n1.5,1,-2\n0.5,0,3e1\n";

    #[test]
    fn feature_order_follows_header() {
        let ds = parse_arff(HAND, &["tag one".to_string()], Path::new("hand.arff")).unwrap();
        assert_eq!(
            ds.feature_names(),
            &["zeta".to_string(), "alpha".to_string()]
        );
        assert_eq!(ds.features().row(0).to_vec(), vec![1.5, -2.0]);
        assert_eq!(ds.features().row(1).to_vec(), vec![0.5, 30.0]);
        assert_eq!(ds.labels().column(0).to_vec(), vec![1, 0]);
    }

    #[test]
    fn unknown_label_is_rejected() {
        let r = parse_arff(HAND, &["missing".to_string()], Path::new("hand.arff"));
        assert!(matches!(r, Err(Error::InvalidDataset(_))));
    }

    #[test]
    fn sparse_rows_default_to_zero() {
        let text = "@relation s\n@attribute a numeric\n@attribute b numeric\n@attribute y {0,1}\n@data\n{1 2.5,2 1}\n{}\n";
        let ds = parse_arff(text, &["y".to_string()], Path::new("s.arff")).unwrap();
        assert_eq!(ds.features().row(0).to_vec(), vec![0.0, 2.5]);
        assert_eq!(ds.labels().column(0).to_vec(), vec![1, 0]);
    }

    #[test]
    fn string_feature_is_rejected() {
        let text = "@relation s\n@attribute a string\n@attribute y {0,1}\n@data\nfoo,1\n";
        assert!(matches!(
            parse_arff(text, &["y".to_string()], Path::new("s.arff")),
            Err(Error::Parse { row: 2, .. })
        ));
    }

    #[test]
    fn non_binary_label_value_is_rejected() {
        let text = "@relation s\n@attribute a numeric\n@attribute y numeric\n@data\n1,2\n";
        assert!(matches!(
            parse_arff(text, &["y".to_string()], Path::new("s.arff")),
            Err(Error::Parse {
                row: 5,
                column: 2,
                ..
            })
        ));
    }

    #[test]
    fn malformed_sections_fail() {
        assert!(parse_arff("@relation x\n@attribute a numeric\n", &[], Path::new("x")).is_err());
        assert!(parse_arff("@relation x\nbogus\n@data\n", &[], Path::new("x")).is_err());
        let text = "@relation s\n@attribute a numeric\n@attribute y {0,1}\n@data\n1\n";
        assert!(parse_arff(text, &["y".to_string()], Path::new("x")).is_err());
        let text = "@relation s\n@attribute a numeric\n@attribute y {0,1}\n@data\n?,1\n";
        assert!(parse_arff(text, &["y".to_string()], Path::new("x")).is_err());
    }

    #[test]
    fn label_spec_flattens_hierarchy() {
        let xml = r#"<?xml version="1.0" encoding="utf-8"?>
<labels xmlns="http://mulan.sourceforge.net/labels">
  <label name="a"><label name="a.1"></label></label>
  <label name="b"></label>
</labels>"#;
        assert_eq!(parse_label_spec(xml).unwrap(), vec!["a", "a.1", "b"]);
        assert!(parse_label_spec("<labels></labels>").is_err());
    }
}
