//! Text formats: coefficient trees as JSON, leaf masses as CSV or JSON, point clouds and
//! feature vectors as CSV.
//!
//! Floats are written in shortest round-trip form, so parsing a written value yields the
//! same bits.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::LeafMeasure;
use crate::node::NodeId;
use crate::tree::CoefficientTree;

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
struct TreeDocument {
    depth: u32,
    total_mass: f64,
    coeffs: Vec<(u32, u64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    provenance: Option<serde_json::Value>,
}

/// Serializes a tree as `{"depth", "totalMass", "coeffs": [[scale, index, a], ...]}` with
/// coefficients in lexicographic order. `provenance`, when given, is stored verbatim and
/// ignored on read.
pub fn tree_to_json(tree: &CoefficientTree, provenance: Option<serde_json::Value>) -> String {
    let number = |x: f64| serde_json::to_string(&x).expect("finite floats are serializable");
    let mut s = String::from("{\n");
    let _ = writeln!(s, "  \"depth\": {},", tree.depth());
    let _ = writeln!(s, "  \"totalMass\": {},", number(tree.total_mass()));
    s.push_str("  \"coeffs\": [");
    for (k, (n, a)) in tree.coefficients().enumerate() {
        let sep = if k == 0 { "\n" } else { ",\n" };
        let _ = write!(s, "{sep}    [{}, {}, {}]", n.scale, n.index, number(a));
    }
    s.push_str(if tree.stored_len() == 0 { "]" } else { "\n  ]" });
    if let Some(p) = provenance {
        let pretty = serde_json::to_string_pretty(&p).expect("json values are serializable");
        let _ = write!(s, ",\n  \"provenance\": {}", pretty.replace('\n', "\n  "));
    }
    s.push_str("\n}\n");
    s
}

pub fn tree_from_json(text: &str) -> Result<CoefficientTree> {
    let doc: TreeDocument = serde_json::from_str(text)?;
    let mut seen = BTreeSet::new();
    let mut coefficients = Vec::with_capacity(doc.coeffs.len());
    for (scale, index, a) in doc.coeffs {
        let node = NodeId::new(scale, index)?;
        if !seen.insert(node) {
            return Err(Error::Config(format!("duplicate coefficient for node {node}")));
        }
        coefficients.push((node, a));
    }
    CoefficientTree::new(doc.depth, doc.total_mass, coefficients)
}

pub fn read_tree(path: &Path) -> Result<CoefficientTree> {
    tree_from_json(&read_text(path)?)
}

/// Leaf masses as CSV: one value per line.
pub fn leaves_to_csv(leaves: &LeafMeasure) -> String {
    let mut s = String::new();
    for &m in leaves.masses() {
        let _ = writeln!(s, "{}", fmt_f64(m));
    }
    s
}

pub fn leaves_to_json(leaves: &LeafMeasure) -> String {
    serde_json::to_string(leaves.masses()).expect("floats are serializable")
}

/// Parses a single-column CSV of values. Blank lines and lines starting with `#` are skipped.
/// Errors carry the 1-based line number.
pub fn parse_values_csv(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    for (line_no, line) in data_lines(text) {
        let field = line.split(',').next().unwrap_or("").trim();
        values.push(parse_number(field, line_no)?);
    }
    Ok(values)
}

pub fn parse_values_json(text: &str) -> Result<Vec<f64>> {
    Ok(serde_json::from_str(text)?)
}

/// A point cloud read from CSV, with an optional class label per point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable {
    pub points: Vec<Vec<f64>>,
    pub labels: Option<Vec<String>>,
}

impl PointTable {
    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Parses rows of `dim` numeric columns, optionally followed by one label column.
///
/// If `dim` is `None` it is taken from the first row: every column that parses as a number
/// counts, and a trailing non-numeric column is a label. All rows must agree.
pub fn parse_points_csv(text: &str, dim: Option<usize>) -> Result<PointTable> {
    let mut points = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut dim = dim;
    let mut labelled: Option<bool> = None;
    for (line_no, line) in data_lines(text) {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let d = *dim.get_or_insert_with(|| {
            let numeric = fields.iter().take_while(|f| f.parse::<f64>().is_ok()).count();
            numeric
        });
        if d == 0 {
            return Err(Error::Parse {
                line: line_no,
                message: "row has no numeric coordinates".into(),
            });
        }
        let has_label = match fields.len() {
            n if n == d => false,
            n if n == d + 1 => true,
            n => {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected {d} coordinates (plus optional label), got {n} fields"),
                })
            }
        };
        if *labelled.get_or_insert(has_label) != has_label {
            return Err(Error::Parse {
                line: line_no,
                message: "label column present on some rows but not others".into(),
            });
        }
        let point = fields[..d]
            .iter()
            .map(|f| parse_number(f, line_no))
            .collect::<Result<Vec<_>>>()?;
        points.push(point);
        if has_label {
            labels.push(fields[d].to_string());
        }
    }
    if points.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "no data rows".into(),
        });
    }
    Ok(PointTable {
        points,
        labels: labelled.unwrap_or(false).then_some(labels),
    })
}

/// Feature vectors as CSV, one row per vector. The header comment documents the column
/// order as `scale:index` node addresses.
pub fn feature_vectors_to_csv(columns: &[NodeId], rows: &[Vec<f64>]) -> String {
    let mut s = String::from("# columns: ");
    let names: Vec<String> = columns.iter().map(|n| format!("{}:{}", n.scale, n.index)).collect();
    s.push_str(&names.join(","));
    s.push_str(" (lexicographic by scale then index; weighted by 2^(-scale/2))\n");
    for row in rows {
        let cells: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Shortest round-trip decimal, switching to exponent form for very large or small values.
pub fn fmt_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-5..1e16).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_number(field: &str, line: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(v) => Err(Error::Parse {
            line,
            message: format!("value {v} is not finite"),
        }),
        Err(_) => Err(Error::Parse {
            line,
            message: format!("cannot parse '{field}' as a number"),
        }),
    }
}
