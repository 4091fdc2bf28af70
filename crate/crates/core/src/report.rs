//! Run artifacts: the append-only record log, per-experiment CSV tables and
//! JSON summaries. Every row and every summary carries the config hash.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const RECORDS_FILE: &str = "records.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

/// One machine-readable result row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRecord {
    pub experiment_id: String,
    pub config_hash: String,
    pub metric: String,
    pub value: f64,
    pub stderr: Option<f64>,
    pub pass: Option<bool>,
    /// Kept out of records.csv so that file is reproducible byte for byte.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Formats a float with the shortest representation that round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn fmt_vec(xs: &[f64]) -> String {
    xs.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(";")
}

/// A CSV table; the config hash column is added on write.
#[derive(Debug, Clone, Default)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Table {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

fn csv_err(e: csv::Error) -> LabError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => LabError::Io(io),
        other => LabError::Format(format!("{other:?}")),
    }
}

/// Collects the artifacts of one run in an output directory.
#[derive(Debug)]
pub struct Artifacts {
    dir: PathBuf,
    experiment_id: String,
    hash: String,
    records: Vec<ReportRecord>,
    files: Vec<PathBuf>,
}

impl Artifacts {
    pub fn new(dir: &Path, experiment: &str, hash: &str) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            experiment_id: format!("{experiment}-{hash}"),
            hash: hash.to_string(),
            records: Vec::new(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn experiment_id(&self) -> &str {
        &self.experiment_id
    }

    pub fn records(&self) -> &[ReportRecord] {
        &self.records
    }

    /// Files written so far, in order.
    pub fn files(&self) -> &[PathBuf] {
        &self.files
    }

    pub fn record(&mut self, metric: &str, value: f64, stderr: Option<f64>, pass: Option<bool>) {
        self.records.push(ReportRecord {
            experiment_id: self.experiment_id.clone(),
            config_hash: self.hash.clone(),
            metric: metric.to_string(),
            value,
            stderr,
            pass,
            wall_time_s: 0.0,
        });
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn add_file(&mut self, path: PathBuf) {
        if !self.files.contains(&path) {
            self.files.push(path);
        }
    }

    pub fn write_table(&mut self, name: &str, table: &Table) -> Result<()> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(csv_err)?;
        let mut header = vec!["config_hash".to_string()];
        header.extend(table.header.iter().cloned());
        w.write_record(&header).map_err(csv_err)?;
        for row in &table.rows {
            let mut full = Vec::with_capacity(row.len() + 1);
            full.push(self.hash.clone());
            full.extend(row.iter().cloned());
            w.write_record(&full).map_err(csv_err)?;
        }
        w.flush()?;
        self.add_file(path);
        Ok(())
    }

    /// Writes `value` as pretty JSON with a `config_hash` field added.
    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut v = serde_json::to_value(value).map_err(|e| LabError::Format(e.to_string()))?;
        if let serde_json::Value::Object(map) = &mut v {
            map.insert("config_hash".into(), serde_json::Value::String(self.hash.clone()));
        }
        let text = serde_json::to_string_pretty(&v).map_err(|e| LabError::Format(e.to_string()))?;
        let path = self.path(name);
        fs::write(&path, text + "\n")?;
        self.add_file(path);
        Ok(())
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, text)?;
        self.add_file(path);
        Ok(())
    }

    /// Appends the records to records.csv and the wall time to timings.csv.
    pub fn finish(&mut self, wall_time_s: f64) -> Result<()> {
        for r in &mut self.records {
            r.wall_time_s = wall_time_s;
        }
        let path = self.path(RECORDS_FILE);
        let fresh = !path.exists();
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
        if fresh {
            w.write_record(["experiment_id", "config_hash", "metric", "value", "stderr", "pass"])
                .map_err(csv_err)?;
        }
        for r in &self.records {
            w.write_record([
                r.experiment_id.clone(),
                r.config_hash.clone(),
                r.metric.clone(),
                fmt_f64(r.value),
                fmt_opt(r.stderr),
                r.pass.map(|p| p.to_string()).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        self.add_file(path);

        let tpath = self.path(TIMINGS_FILE);
        let fresh = !tpath.exists();
        let mut f = OpenOptions::new().create(true).append(true).open(&tpath)?;
        if fresh {
            writeln!(f, "experiment_id,config_hash,wall_time_s")?;
        }
        writeln!(f, "{},{},{:.3}", self.experiment_id, self.hash, wall_time_s)?;
        self.add_file(tpath);
        Ok(())
    }

    /// Human-readable listing of the records.
    pub fn summary_text(&self) -> String {
        let mut out = format!("experiment {}\n", self.experiment_id);
        for r in &self.records {
            let stderr = r.stderr.map(|e| format!(" ± {e:.4}")).unwrap_or_default();
            let pass = match r.pass {
                Some(true) => "  [pass]",
                Some(false) => "  [FAIL]",
                None => "",
            };
            out.push_str(&format!("  {:<28} {:.6}{stderr}{pass}\n", r.metric, r.value));
        }
        out
    }
}
