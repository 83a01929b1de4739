use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// A feature vector with its class label and the dataset it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentVector {
    pub values: Vec<f64>,
    pub label: usize,
    pub origin: String,
}

impl LatentVector {
    pub fn new(values: Vec<f64>, label: usize, origin: impl Into<String>) -> Self {
        LatentVector {
            values,
            label,
            origin: origin.into(),
        }
    }
}

/// Shared dimension of a collection; errors on an empty or ragged one.
pub fn common_dimension(vectors: &[LatentVector]) -> Result<usize> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::InsufficientData("empty vector collection".into()))?;
    let d = first.values.len();
    if d == 0 {
        return Err(Error::shape("zero-dimensional vectors"));
    }
    if let Some((i, v)) = vectors.iter().enumerate().find(|(_, v)| v.values.len() != d) {
        return Err(Error::shape(format!(
            "vector {i} has dimension {}, expected {d}",
            v.values.len()
        )));
    }
    Ok(d)
}

/// Stacks the values into an `N x d` matrix.
pub fn feature_matrix(vectors: &[LatentVector]) -> Result<Matrix> {
    let d = common_dimension(vectors)?;
    let data = vectors.iter().flat_map(|v| v.values.iter().copied()).collect();
    Matrix::from_vec(vectors.len(), d, data)
}

/// Splits a collection by origin tag, in tag order.
pub fn group_by_origin(vectors: &[LatentVector]) -> BTreeMap<String, Vec<LatentVector>> {
    let mut out: BTreeMap<String, Vec<LatentVector>> = BTreeMap::new();
    for v in vectors {
        out.entry(v.origin.clone()).or_default().push(v.clone());
    }
    out
}

/// Reads `<feature columns...>,label,domain`. The feature columns may have
/// any names; `label` must be a non-negative integer.
pub fn read_labeled_csv(path: &Path) -> Result<Vec<LatentVector>> {
    let file = std::fs::File::open(path)?;
    labeled_from_reader(file, path)
}

pub fn labeled_from_reader<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<LatentVector>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let label_col = headers
        .iter()
        .position(|h| h == "label")
        .ok_or_else(|| parse_err(1, "missing `label` column".into()))?;
    let domain_col = headers
        .iter()
        .position(|h| h == "domain")
        .ok_or_else(|| parse_err(1, "missing `domain` column".into()))?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_col && c != domain_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(parse_err(1, "no feature columns".into()));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != headers.len() {
            return Err(parse_err(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        let values = feature_cols
            .iter()
            .map(|&c| match record[c].parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(parse_err(
                    line,
                    format!("column `{}`: bad value `{}`", headers[c], &record[c]),
                )),
            })
            .collect::<Result<Vec<f64>>>()?;
        let label = record[label_col]
            .parse::<usize>()
            .map_err(|_| parse_err(line, format!("bad label `{}`", &record[label_col])))?;
        out.push(LatentVector::new(values, label, &record[domain_col]));
    }
    Ok(out)
}

/// Writes `x0..x{d-1},label,domain`.
pub fn write_labeled_csv<W: std::io::Write>(vectors: &[LatentVector], writer: W) -> Result<()> {
    let d = common_dimension(vectors)?;
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = (0..d).map(|k| format!("x{k}")).collect();
    header.push("label".into());
    header.push("domain".into());
    w.write_record(&header)?;
    for v in vectors {
        let mut row: Vec<String> = v.values.iter().map(f64::to_string).collect();
        row.push(v.label.to_string());
        row.push(v.origin.clone());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
