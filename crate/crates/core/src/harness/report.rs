use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::regress::Metrics;
use crate::{Error, Result};

/// Column order of `report.csv`.
pub const REPORT_HEADER: [&str; 8] =
    ["variant", "case", "parameter", "value", "regressor", "mae", "rmse", "status"];

/// One downstream result. `parameter`/`value` are empty outside sweeps;
/// failed runs carry NaN metrics and a non-`ok` status.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub variant: String,
    pub case: String,
    pub parameter: String,
    pub value: String,
    pub regressor: String,
    pub mae: f64,
    pub rmse: f64,
    pub status: String,
}

impl ReportRow {
    pub fn ok(variant: &str, case: &str, regressor: &str, m: Metrics) -> Self {
        Self {
            variant: variant.into(),
            case: case.into(),
            parameter: String::new(),
            value: String::new(),
            regressor: regressor.into(),
            mae: m.mae,
            rmse: m.rmse,
            status: "ok".into(),
        }
    }

    pub fn failed(variant: &str, case: &str, regressor: &str, status: String) -> Self {
        Self {
            variant: variant.into(),
            case: case.into(),
            parameter: String::new(),
            value: String::new(),
            regressor: regressor.into(),
            mae: f64::NAN,
            rmse: f64::NAN,
            status,
        }
    }

    pub fn with_setting(mut self, parameter: &str, value: impl ToString) -> Self {
        self.parameter = parameter.into();
        self.value = value.to_string();
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub rows: Vec<ReportRow>,
}

impl ReportTable {
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::data::write_records(path.as_ref(), &[], &REPORT_HEADER, &self.rows)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .from_path(path)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        let header: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Schema { path: path.into(), detail: e.to_string() })?
            .iter()
            .map(str::to_string)
            .collect();
        if header != REPORT_HEADER {
            return Err(Error::Schema {
                path: path.into(),
                detail: format!("unexpected report header {header:?}"),
            });
        }
        let rows = reader
            .deserialize()
            .collect::<std::result::Result<Vec<ReportRow>, _>>()
            .map_err(|e| Error::Schema { path: path.into(), detail: e.to_string() })?;
        Ok(Self { rows })
    }

    /// Rows for one variant and regressor label.
    pub fn find<'a>(&'a self, variant: &'a str, regressor: &'a str) -> impl Iterator<Item = &'a ReportRow> + 'a {
        self.rows
            .iter()
            .filter(move |r| r.variant == variant && r.regressor == regressor)
    }
}

pub const TIMING_HEADER: [&str; 4] = ["variant", "iterations", "seconds", "ratio_to_wgan_gp"];

/// Wall-clock of one training variant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub variant: String,
    pub iterations: usize,
    pub seconds: f64,
    pub ratio_to_wgan_gp: f64,
}

pub fn write_timing_csv(rows: &[TimingRow], path: impl AsRef<Path>) -> Result<()> {
    crate::data::write_records(path.as_ref(), &[], &TIMING_HEADER, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn report_round_trips_including_failures() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.csv");
        let table = ReportTable {
            rows: vec![
                ReportRow::ok("rgan-dde", "case \"3\", raw", "mlp (DNN)", Metrics { mae: 0.1, rmse: 1.0 / 3.0 }),
                ReportRow::failed("rgan-dde", "toy", "mlp (DNN)", "diverged: x".into()).with_setting("alpha", 100.0),
            ],
        };
        table.write_csv(&path).unwrap();
        let back = ReportTable::read_csv(&path).unwrap();
        assert_eq!(back.rows[0], table.rows[0]);
        assert!(back.rows[1].mae.is_nan());
        assert_eq!(back.rows[1].value, "100");
        let first = std::fs::read_to_string(&path).unwrap();
        assert_eq!(first.lines().next().unwrap(), REPORT_HEADER.join(","));
    }
}
