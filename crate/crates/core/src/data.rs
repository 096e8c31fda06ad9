//! Headed numeric CSV ingestion.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct DataTable {
    pub names: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    /// Values of the label column, when one was requested.
    pub labels: Option<Vec<f64>>,
}

/// Reads every column except those in `skip` as features.
pub fn read_csv(path: &Path, skip: &[&str]) -> Result<DataTable> {
    read(path, skip, None)
}

/// Reads features plus a label column (removed from the features).
pub fn read_labeled_csv(path: &Path, label: Option<&str>) -> Result<DataTable> {
    read(path, &[], label)
}

fn read(path: &Path, skip: &[&str], label: Option<&str>) -> Result<DataTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers.is_empty() {
        return Err(Error::Parse(format!("{}: missing header row", path.display())));
    }
    let label_idx = match label {
        Some(name) => Some(
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Config(format!("{}: no label column `{name}`", path.display())))?,
        ),
        None => None,
    };
    let feature_idx: Vec<usize> =
        (0..headers.len()).filter(|&i| Some(i) != label_idx && !skip.contains(&headers[i].as_str())).collect();
    if feature_idx.is_empty() {
        return Err(Error::Parse(format!("{}: no feature columns", path.display())));
    }

    let mut rows = Vec::new();
    let mut labels = label_idx.map(|_| Vec::new());
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        let cell = |i: usize| -> Result<f64> {
            let raw = record.get(i).unwrap_or("");
            raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| {
                Error::Parse(format!(
                    "{} row {}: column `{}` holds non-numeric value `{raw}`",
                    path.display(),
                    line + 2,
                    headers[i]
                ))
            })
        };
        rows.push(feature_idx.iter().map(|&i| cell(i)).collect::<Result<Vec<_>>>()?);
        if let (Some(idx), Some(l)) = (label_idx, labels.as_mut()) {
            l.push(cell(idx)?);
        }
    }
    Ok(DataTable { names: feature_idx.iter().map(|&i| headers[i].clone()).collect(), rows, labels })
}
