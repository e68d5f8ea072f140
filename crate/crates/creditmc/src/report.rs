//! Result records and their CSV/JSON serialization.
//!
//! The CSV schema is fixed so downstream tooling can rely on it; floats use
//! the shortest round-trip representation except `re_pct`, which is rounded
//! to two decimals at construction time so emission and re-parsing are
//! lossless.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cmc::EstimateReport;
use crate::error::{Error, Result};

pub const REPORT_HEADER: &str =
    "model,method,alpha,gamma,ell_hat,re_pct,runs,n_per_run,seed,elapsed_ms";
pub const QUANTILE_HEADER: &str =
    "model,method,alpha,var,cvar,runs,n_per_run,seed,elapsed_ms";

/// One tail-probability experiment row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub model: String,
    pub method: String,
    pub alpha: f64,
    pub gamma: f64,
    pub ell_hat: f64,
    pub re_pct: f64,
    pub runs: usize,
    pub n_per_run: usize,
    pub seed: u64,
    pub elapsed_ms: f64,
}

impl ReportRecord {
    pub fn new(
        model: &str,
        method: &str,
        alpha: f64,
        gamma: f64,
        report: &EstimateReport,
    ) -> Self {
        ReportRecord {
            model: model.to_string(),
            method: method.to_string(),
            alpha,
            gamma,
            ell_hat: report.point,
            re_pct: round2(report.re_pct()),
            runs: report.runs,
            n_per_run: report.n_per_run,
            seed: report.seed,
            elapsed_ms: report.elapsed_ms,
        }
    }

    fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.2},{},{},{},{}",
            self.model,
            self.method,
            self.alpha,
            self.gamma,
            self.ell_hat,
            self.re_pct,
            self.runs,
            self.n_per_run,
            self.seed,
            self.elapsed_ms
        )
    }

    fn from_csv_row(row: &str) -> Result<Self> {
        let f = split_fields(row, 10)?;
        Ok(ReportRecord {
            model: f[0].to_string(),
            method: f[1].to_string(),
            alpha: parse_f64(f[2])?,
            gamma: parse_f64(f[3])?,
            ell_hat: parse_f64(f[4])?,
            re_pct: parse_f64(f[5])?,
            runs: parse_usize(f[6])?,
            n_per_run: parse_usize(f[7])?,
            seed: f[8].parse().map_err(|_| Error::Parse(format!("bad seed {:?}", f[8])))?,
            elapsed_ms: parse_f64(f[9])?,
        })
    }
}

/// One VaR/CVaR experiment row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRecord {
    pub model: String,
    pub method: String,
    pub alpha: f64,
    pub var: f64,
    pub cvar: f64,
    pub runs: usize,
    pub n_per_run: usize,
    pub seed: u64,
    pub elapsed_ms: f64,
}

impl QuantileRecord {
    fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.model,
            self.method,
            self.alpha,
            self.var,
            self.cvar,
            self.runs,
            self.n_per_run,
            self.seed,
            self.elapsed_ms
        )
    }

    fn from_csv_row(row: &str) -> Result<Self> {
        let f = split_fields(row, 9)?;
        Ok(QuantileRecord {
            model: f[0].to_string(),
            method: f[1].to_string(),
            alpha: parse_f64(f[2])?,
            var: parse_f64(f[3])?,
            cvar: parse_f64(f[4])?,
            runs: parse_usize(f[5])?,
            n_per_run: parse_usize(f[6])?,
            seed: f[7].parse().map_err(|_| Error::Parse(format!("bad seed {:?}", f[7])))?,
            elapsed_ms: parse_f64(f[8])?,
        })
    }
}

/// Round to two decimals the way `{:.2}` formats, so the stored value and
/// its rendering agree.
pub fn round2(x: f64) -> f64 {
    format!("{x:.2}").parse().unwrap_or(x)
}

fn split_fields(row: &str, want: usize) -> Result<Vec<&str>> {
    let f: Vec<&str> = row.split(',').collect();
    if f.len() != want {
        return Err(Error::Parse(format!("expected {want} fields, found {} in {row:?}", f.len())));
    }
    Ok(f)
}

fn parse_f64(s: &str) -> Result<f64> {
    s.parse().map_err(|_| Error::Parse(format!("bad numeric field {s:?}")))
}

fn parse_usize(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Parse(format!("bad count field {s:?}")))
}

pub fn reports_to_csv(records: &[ReportRecord]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn reports_from_csv(text: &str) -> Result<Vec<ReportRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == REPORT_HEADER => {}
        other => return Err(Error::Parse(format!("bad report header {other:?}"))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(ReportRecord::from_csv_row).collect()
}

pub fn quantiles_to_csv(records: &[QuantileRecord]) -> String {
    let mut out = String::from(QUANTILE_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

pub fn quantiles_from_csv(text: &str) -> Result<Vec<QuantileRecord>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == QUANTILE_HEADER => {}
        other => return Err(Error::Parse(format!("bad quantile header {other:?}"))),
    }
    lines.filter(|l| !l.trim().is_empty()).map(QuantileRecord::from_csv_row).collect()
}

pub fn reports_to_json(records: &[ReportRecord]) -> Result<String> {
    serde_json::to_string_pretty(records).map_err(|e| Error::Parse(e.to_string()))
}

pub fn reports_from_json(text: &str) -> Result<Vec<ReportRecord>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn quantiles_to_json(records: &[QuantileRecord]) -> Result<String> {
    serde_json::to_string_pretty(records).map_err(|e| Error::Parse(e.to_string()))
}

pub fn quantiles_from_json(text: &str) -> Result<Vec<QuantileRecord>> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::Parse(format!("unknown output format {other:?}"))),
        }
    }
}

pub fn write_reports(records: &[ReportRecord], format: OutputFormat, path: &Path) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => reports_to_csv(records),
        OutputFormat::Json => reports_to_json(records)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_quantiles(
    records: &[QuantileRecord],
    format: OutputFormat,
    path: &Path,
) -> Result<()> {
    let text = match format {
        OutputFormat::Csv => quantiles_to_csv(records),
        OutputFormat::Json => quantiles_to_json(records)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record() -> ReportRecord {
        let report = EstimateReport::from_runs(
            vec![0.0482110234, 0.0491823711, 0.0475512209],
            10_000,
            42,
            1234.5678,
        );
        ReportRecord::new("gaussian", "is2", 0.95, 548.0, &report)
    }

    #[test]
    fn header_and_formatting() {
        let rec = sample_record();
        let csv = reports_to_csv(&[rec.clone()]);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), REPORT_HEADER);
        let row = lines.next().unwrap();
        assert!(row.starts_with("gaussian,is2,0.95,548,"));
        // re_pct field shows exactly two decimals.
        let re_field = row.split(',').nth(5).unwrap();
        let dot = re_field.find('.').expect("decimal point");
        assert_eq!(re_field.len() - dot - 1, 2, "re_pct field {re_field}");
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let rec = sample_record();
        let back = reports_from_csv(&reports_to_csv(&[rec.clone()])).unwrap();
        assert_eq!(back.len(), 1);
        assert_eq!(back[0], rec);
        // Including elapsed time: shortest float representation round-trips.
        assert_eq!(back[0].elapsed_ms, 1234.5678);

        let q = QuantileRecord {
            model: "t".into(),
            method: "cmc".into(),
            alpha: 0.995,
            var: 351.99999923342,
            cvar: 402.1234,
            runs: 10,
            n_per_run: 10_000,
            seed: 7,
            elapsed_ms: 18.25,
        };
        let back = quantiles_from_csv(&quantiles_to_csv(&[q.clone()])).unwrap();
        assert_eq!(back, vec![q]);
    }

    #[test]
    fn json_mirrors_field_names() {
        let rec = sample_record();
        let json = reports_to_json(&[rec.clone()]).unwrap();
        for key in ["model", "method", "alpha", "gamma", "ell_hat", "re_pct", "runs", "n_per_run", "seed", "elapsed_ms"] {
            assert!(json.contains(&format!("\"{key}\"")), "missing {key}");
        }
        assert_eq!(reports_from_json(&json).unwrap(), vec![rec]);
    }

    #[test]
    fn bad_inputs_are_rejected() {
        assert!(reports_from_csv("nope\n").is_err());
        let mut csv = reports_to_csv(&[sample_record()]);
        csv.push_str("gaussian,is2,0.95\n");
        assert!(reports_from_csv(&csv).is_err());
        assert!("xml".parse::<OutputFormat>().is_err());
        assert_eq!("csv".parse::<OutputFormat>().unwrap(), OutputFormat::Csv);
    }

    #[test]
    fn multi_alpha_emission_has_one_row_per_cell() {
        let alphas = [0.95, 0.99, 0.995];
        let methods = ["is2", "ds_fe"];
        let mut records = Vec::new();
        for &a in &alphas {
            for m in methods {
                let report = EstimateReport::from_runs(vec![0.05, 0.05], 100, 1, 0.1);
                records.push(ReportRecord::new("gaussian", m, a, 100.0, &report));
            }
        }
        let csv = reports_to_csv(&records);
        assert_eq!(csv.lines().count(), 1 + alphas.len() * methods.len());
        let parsed = reports_from_csv(&csv).unwrap();
        for &a in &alphas {
            for m in methods {
                assert_eq!(
                    parsed.iter().filter(|r| r.alpha == a && r.method == m).count(),
                    1
                );
            }
        }
    }

    #[test]
    fn round2_examples() {
        assert_eq!(round2(1.084999), 1.08);
        assert_eq!(round2(1.085001), 1.09);
        assert_eq!(round2(0.0), 0.0);
    }
}
