//! Experiment reports: per-cell tables with contamination and censoring
//! accounting, named acceptance checks, CSV/JSON serialization, and exact
//! pooling of disjoint-seed reports.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::stats::Welford;

use super::config::{ExperimentConfig, ExperimentError, ExperimentKind};

pub const SCHEMA_VERSION: u32 = 1;

/// One aggregation cell.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CellRow {
    /// Stable textual label, e.g. `"t=25"` or `"sep=4,t=16"`.
    pub cell: String,
    /// Replica-mean estimate over valid replicas.
    pub estimate: f64,
    pub stderr: f64,
    pub n_valid: u64,
    pub discarded_contaminated: u64,
    pub censored: u64,
    /// Second central moment sum backing exact pooling.
    pub m2: f64,
    /// Verdict for acceptance-tagged cells, when one applies.
    pub pass: Option<bool>,
    /// Secondary numbers (quantiles, normalized values, oracle references).
    #[serde(default)]
    pub extra: BTreeMap<String, f64>,
}

impl CellRow {
    pub fn from_moments(
        cell: String,
        moments: &Welford,
        contaminated: u64,
        censored: u64,
    ) -> CellRow {
        CellRow {
            cell,
            estimate: moments.mean,
            stderr: moments.se(),
            n_valid: moments.n,
            discarded_contaminated: contaminated,
            censored,
            m2: moments.m2,
            pass: None,
            extra: BTreeMap::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: f64) -> CellRow {
        self.extra.insert(key.to_string(), value);
        self
    }

    fn moments(&self) -> Welford {
        Welford {
            n: self.n_valid,
            mean: self.estimate,
            m2: self.m2,
        }
    }
}

/// A named statistical check with its verdict.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CheckRow {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl CheckRow {
    pub fn new(name: &str, pass: bool, detail: String) -> CheckRow {
        CheckRow {
            name: name.to_string(),
            pass,
            detail,
        }
    }
}

/// The full output of one campaign.
///
/// Serialized reports are a deterministic function of the configuration;
/// wall-clock runtime is kept out of the files and reported on the console.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    pub kind: ExperimentKind,
    pub config: ExperimentConfig,
    pub cells: Vec<CellRow>,
    pub checks: Vec<CheckRow>,
    pub overall_pass: bool,
    /// Number of single-campaign reports pooled into this one.
    #[serde(default)]
    pub pooled_from: u32,
    #[serde(skip)]
    pub runtime_seconds: f64,
}

impl ExperimentReport {
    pub fn new(
        kind: ExperimentKind,
        config: ExperimentConfig,
        cells: Vec<CellRow>,
        checks: Vec<CheckRow>,
    ) -> ExperimentReport {
        let overall_pass = checks.iter().all(|c| c.pass)
            && cells.iter().all(|c| c.pass.unwrap_or(true));
        ExperimentReport {
            schema_version: SCHEMA_VERSION,
            kind,
            config,
            cells,
            checks,
            overall_pass,
            pooled_from: 1,
            runtime_seconds: 0.0,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }

    pub fn from_json(text: &str) -> Result<ExperimentReport, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::SchemaMismatch(e.to_string()))
    }

    /// CSV mirror: one row per cell.
    pub fn to_csv(&self) -> String {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        wtr.write_record([
            "kind",
            "cell",
            "estimate",
            "stderr",
            "n_valid",
            "discarded_contaminated",
            "censored",
            "pass",
            "extra",
        ])
        .unwrap();
        for c in &self.cells {
            let extra = c
                .extra
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(";");
            wtr.write_record([
                self.kind.name().to_string(),
                c.cell.clone(),
                c.estimate.to_string(),
                c.stderr.to_string(),
                c.n_valid.to_string(),
                c.discarded_contaminated.to_string(),
                c.censored.to_string(),
                c.pass.map(|p| p.to_string()).unwrap_or_default(),
                extra,
            ])
            .unwrap();
        }
        String::from_utf8(wtr.into_inner().unwrap()).unwrap()
    }

    /// Write `<stem>.json` and `<stem>.csv` under `dir`.
    pub fn write_files(&self, dir: &std::path::Path, stem: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut j = std::fs::File::create(dir.join(format!("{stem}.json")))?;
        j.write_all(self.to_json().as_bytes())?;
        j.write_all(b"\n")?;
        let mut c = std::fs::File::create(dir.join(format!("{stem}.csv")))?;
        c.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// Pool reports of the same kind and schema cell-by-cell (inverse-variance
/// through exact moment merging).  Trend checks are not recomputed: pooled
/// reports carry tables only.
pub fn aggregate(reports: &[ExperimentReport]) -> Result<ExperimentReport, ExperimentError> {
    let first = reports
        .first()
        .ok_or_else(|| ExperimentError::SchemaMismatch("no reports to aggregate".into()))?;
    if reports.len() == 1 {
        return Ok(first.clone());
    }
    for r in reports {
        if r.schema_version != first.schema_version {
            return Err(ExperimentError::SchemaMismatch(format!(
                "schema {} vs {}",
                r.schema_version, first.schema_version
            )));
        }
        if r.kind != first.kind {
            return Err(ExperimentError::SchemaMismatch(format!(
                "kind {} vs {}",
                r.kind.name(),
                first.kind.name()
            )));
        }
        if r.cells.len() != first.cells.len()
            || r.cells
                .iter()
                .zip(&first.cells)
                .any(|(a, b)| a.cell != b.cell)
        {
            return Err(ExperimentError::SchemaMismatch(
                "cell labels differ between reports".into(),
            ));
        }
    }
    let mut cells = Vec::with_capacity(first.cells.len());
    for i in 0..first.cells.len() {
        let mut moments = Welford::default();
        let mut contaminated = 0;
        let mut censored = 0;
        for r in reports {
            let c = &r.cells[i];
            moments = moments.merge(&c.moments());
            contaminated += c.discarded_contaminated;
            censored += c.censored;
        }
        cells.push(CellRow::from_moments(
            first.cells[i].cell.clone(),
            &moments,
            contaminated,
            censored,
        ));
    }
    let mut out = ExperimentReport::new(first.kind, first.config.clone(), cells, Vec::new());
    out.pooled_from = reports.iter().map(|r| r.pooled_from).sum();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report_from_values(kind: ExperimentKind, label: &str, values: &[f64]) -> ExperimentReport {
        let mut w = Welford::default();
        for &v in values {
            w.push(v);
        }
        let cells = vec![CellRow::from_moments(label.into(), &w, 1, 2)];
        ExperimentReport::new(kind, ExperimentConfig::new(kind, 1), cells, Vec::new())
    }

    #[test]
    fn single_report_aggregates_to_itself() {
        let r = report_from_values(ExperimentKind::Extinction, "t=10", &[1.0, 0.0, 1.0]);
        let out = aggregate(&[r.clone()]).unwrap();
        assert_eq!(out.cells, r.cells);
    }

    #[test]
    fn pooling_matches_single_double_run() {
        let a: Vec<f64> = (0..40).map(|i| (i % 3) as f64).collect();
        let b: Vec<f64> = (0..56).map(|i| ((i * 7) % 5) as f64 / 2.0).collect();
        let ra = report_from_values(ExperimentKind::Survival, "k=2", &a);
        let rb = report_from_values(ExperimentKind::Survival, "k=2", &b);
        let pooled = aggregate(&[ra, rb]).unwrap();
        let all: Vec<f64> = a.iter().chain(&b).copied().collect();
        let rall = report_from_values(ExperimentKind::Survival, "k=2", &all);
        assert_eq!(pooled.cells[0].n_valid, rall.cells[0].n_valid);
        assert!((pooled.cells[0].estimate - rall.cells[0].estimate).abs() < 1e-12);
        assert!((pooled.cells[0].stderr - rall.cells[0].stderr).abs() < 1e-12);
        assert_eq!(pooled.cells[0].discarded_contaminated, 2);
        assert_eq!(pooled.cells[0].censored, 4);
        assert_eq!(pooled.pooled_from, 2);
    }

    #[test]
    fn mismatched_reports_are_rejected() {
        let a = report_from_values(ExperimentKind::Survival, "k=2", &[1.0]);
        let b = report_from_values(ExperimentKind::Extinction, "k=2", &[1.0]);
        assert!(matches!(
            aggregate(&[a.clone(), b]),
            Err(ExperimentError::SchemaMismatch(_))
        ));
        let c = report_from_values(ExperimentKind::Survival, "k=8", &[1.0]);
        assert!(matches!(
            aggregate(&[a, c]),
            Err(ExperimentError::SchemaMismatch(_))
        ));
    }

    #[test]
    fn report_serialization_round_trips() {
        let r = report_from_values(ExperimentKind::Extinction, "t=10", &[1.0, 0.0]);
        let back = ExperimentReport::from_json(&r.to_json()).unwrap();
        assert_eq!(back.cells, r.cells);
        let csv_text = r.to_csv();
        assert!(csv_text.contains("extinction"));
        assert!(csv_text.contains("t=10"));
    }
}
