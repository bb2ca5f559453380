//! CSV dataset ingestion.
//!
//! Expected layout: header `label,f0,f1,...` followed by one numeric row per
//! example. Features are min-max scaled to [0,1] per column; constant
//! columns map to 0.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::nn::InputShape;

use super::Dataset;

pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Data(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.first() != Some(&"label") {
        return Err(Error::Data(format!(
            "{}: first column must be `label`, got `{}`",
            path.display(),
            cols.first().unwrap_or(&"")
        )));
    }
    let dim = cols.len() - 1;
    if dim == 0 {
        return Err(Error::Data(format!("{}: no feature columns", path.display())));
    }

    let mut labels = Vec::new();
    let mut values = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != dim + 1 {
            return Err(Error::Data(format!(
                "{}:{}: expected {} fields, got {}",
                path.display(),
                lineno + 2,
                dim + 1,
                fields.len()
            )));
        }
        let label: u32 = fields[0].parse().map_err(|_| {
            Error::Data(format!(
                "{}:{}: bad label `{}`",
                path.display(),
                lineno + 2,
                fields[0]
            ))
        })?;
        labels.push(label);
        for f in &fields[1..] {
            let v: f64 = f.parse().map_err(|_| {
                Error::Data(format!("{}:{}: bad number `{f}`", path.display(), lineno + 2))
            })?;
            values.push(v);
        }
    }
    if labels.is_empty() {
        return Err(Error::Data(format!("{}: no data rows", path.display())));
    }

    // Per-feature min-max normalization.
    let n = labels.len();
    for c in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..n {
            let v = values[r * dim + c];
            if v < lo {
                lo = v;
            }
            if v > hi {
                hi = v;
            }
        }
        let span = hi - lo;
        for r in 0..n {
            let v = &mut values[r * dim + c];
            *v = if span > 0.0 { (*v - lo) / span } else { 0.0 };
        }
    }

    let num_classes = (labels.iter().copied().max().unwrap() as usize + 1).max(2);
    Dataset::new(
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "csv".into()),
        Matrix::from_vec(n, dim, values)?,
        labels,
        num_classes,
        InputShape::Flat(dim),
        format!("csv({})", path.display()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn parses_and_normalizes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let mut f = std::fs::File::create(&path).unwrap();
        writeln!(f, "label,f0,f1").unwrap();
        writeln!(f, "0,0.0,10.0").unwrap();
        writeln!(f, "1,5.0,20.0").unwrap();
        writeln!(f, "1,10.0,10.0").unwrap();
        drop(f);
        let ds = load_csv(&path).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.num_classes, 2);
        assert_eq!(ds.examples.row(0), &[0.0, 0.0]);
        assert_eq!(ds.examples.row(1), &[0.5, 1.0]);
        assert_eq!(ds.examples.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn rejects_missing_label_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "x,y\n1,2\n").unwrap();
        assert!(load_csv(&path).is_err());
    }

    #[test]
    fn rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        std::fs::write(&path, "label,f0,f1\n0,1.0\n").unwrap();
        assert!(load_csv(&path).is_err());
    }
}
