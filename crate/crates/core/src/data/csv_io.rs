use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{Provenance, TabularDataset};
use crate::numeric::Matrix;
use crate::{Error, Result};

/// Reads a headed CSV. Lines starting with `#` are comments. Every cell must
/// parse as a finite real; blank cells are rejected.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<TabularDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Schema {
            path: path.into(),
            detail: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::Schema {
            path: path.into(),
            detail: format!("label column '{label_column}' not found in header {headers:?}"),
        })?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (row_no, record) in reader.records().enumerate() {
        let row = row_no + 1;
        let record = record.map_err(|e| Error::Parse {
            row,
            column: String::new(),
            detail: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row,
                column: String::new(),
                detail: format!("{} cells, header has {}", record.len(), headers.len()),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[col].clone(),
                detail: if cell.is_empty() {
                    "blank cell".into()
                } else {
                    format!("'{cell}' is not a number")
                },
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[col].clone(),
                    detail: format!("'{cell}' is not finite"),
                });
            }
            if col == label_idx {
                labels.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let features = Matrix::from_vec(labels.len(), feature_names.len(), values)?;
    TabularDataset::new(features, labels, feature_names, label_column, Provenance::Real)
}

/// Writes `ds` with a `# provenance: <tag>` comment line, then the header
/// (features then label), then one row per sample.
pub fn write_csv(ds: &TabularDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    writeln!(out, "# provenance: {}", ds.provenance().as_str()).map_err(|e| Error::io(path, e))?;
    let mut writer = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = ds.feature_names().iter().map(String::as_str).collect();
    header.push(ds.label_name());
    let to_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    writer.write_record(&header).map_err(to_err)?;
    for r in 0..ds.len() {
        let mut cells: Vec<String> = ds.features().row(r).iter().map(|v| v.to_string()).collect();
        cells.push(ds.labels()[r].to_string());
        writer.write_record(&cells).map_err(to_err)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Writes serializable rows under `header`, preceded by `# ` comment lines.
/// The header is written even when there are no rows.
pub(crate) fn write_records<T: serde::Serialize>(
    path: &Path,
    comments: &[&str],
    header: &[&str],
    rows: &[T],
) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for c in comments {
        writeln!(out, "# {c}").map_err(|e| Error::io(path, e))?;
    }
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    writer
        .write_record(header)
        .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn loads_small_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,2,3\n4,5,6\n7,8,9\n");
        let ds = load_csv(&p, "y").unwrap();
        assert_eq!((ds.dim(), ds.len()), (2, 3));
        assert_eq!(ds.labels(), &[3.0, 6.0, 9.0]);
        assert_eq!(ds.features().row(1), &[4.0, 5.0]);
    }

    #[test]
    fn blank_cell_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "b.csv", "a,b,y\n1,2,3\n4,,6\n");
        match load_csv(&p, "y") {
            Err(Error::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn missing_label_is_schema_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "c.csv", "a,b\n1,2\n");
        assert!(matches!(load_csv(&p, "y"), Err(Error::Schema { .. })));
    }

    #[test]
    fn nine_process_variables() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("AT,AP,AH,AFDP,GTEP,TIT,TAT,TEY,CDP,CO2\n");
        for r in 0..5 {
            let row: Vec<String> = (0..10).map(|c| format!("{}", r * 10 + c)).collect();
            body.push_str(&row.join(","));
            body.push('\n');
        }
        let p = write(&dir, "case3.csv", &body);
        let ds = load_csv(&p, "CO2").unwrap();
        assert_eq!(ds.dim(), 9);
    }

    #[test]
    fn export_round_trips_with_provenance_comment() {
        let dir = tempfile::tempdir().unwrap();
        let ds = super::super::synth_make("piecewise-plant", 7, 0.1, 3)
            .unwrap()
            .with_provenance(Provenance::Generated);
        let p = dir.path().join("gen.csv");
        write_csv(&ds, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("# provenance: generated\n"));
        let back = load_csv(&p, "y").unwrap();
        assert_eq!(back.features(), ds.features());
        assert_eq!(back.labels(), ds.labels());
    }
}
