use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CectError, Result};
use crate::eval::{AblationRow, Evaluation, MetricsReport, SweepRow};
use crate::model::{CectConfig, ModelGradCheck};
use crate::train::{TrainConfig, TrainHistory};

/// Everything one command produced, in a fixed field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_id: String,
    pub command: String,
    pub seed: u64,
    pub model: Option<CectConfig>,
    pub train_config: Option<TrainConfig>,
    pub training: Option<TrainHistory>,
    /// Keyed by subset name (`validation`, `test`, ...).
    pub evaluations: BTreeMap<String, Evaluation>,
    pub sweep: Option<Vec<SweepRow>>,
    pub ablation: Option<Vec<AblationRow>>,
    pub gradcheck: Option<ModelGradCheck>,
    /// Files written next to the report, relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunReport {
    pub fn new(command: &str, seed: u64) -> Self {
        RunReport {
            run_id: run_id(command, seed),
            command: command.to_string(),
            seed,
            model: None,
            train_config: None,
            training: None,
            evaluations: BTreeMap::new(),
            sweep: None,
            ablation: None,
            gradcheck: None,
            artifacts: Vec::new(),
        }
    }
}

pub fn run_id(command: &str, seed: u64) -> String {
    format!("{command}-s{seed}")
}

/// `<dir>/<run_id>.<kind>`.
pub fn artifact_path(dir: &Path, run_id: &str, kind: &str) -> PathBuf {
    dir.join(format!("{run_id}.{kind}"))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| CectError::Serialization(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| CectError::Serialization(e.to_string()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| CectError::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| CectError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &to_json(value)?)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| CectError::io(path, e))?;
    from_json(&text).map_err(|e| CectError::Serialization(format!("{}: {e}", path.display())))
}

/// A header plus rows of already formatted cells.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let ser = |e: csv::Error| CectError::Serialization(e.to_string());
        w.write_record(&self.header).map_err(ser)?;
        for r in &self.rows {
            w.write_record(r).map_err(ser)?;
        }
        let bytes = w.into_inner().map_err(|e| CectError::Serialization(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| CectError::Serialization(e.to_string()))
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let ser = |e: csv::Error| CectError::Serialization(e.to_string());
        let header = r.headers().map_err(ser)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<_, _>>()
            .map_err(ser)?;
        Ok(Table { header, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_csv()?)
    }
}

/// Shortest decimal that parses back to the same `f64`; empty when undefined.
fn cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn metric_cells(m: Option<&MetricsReport>) -> Vec<String> {
    match m {
        Some(m) => m.values().iter().map(|&v| cell(v)).collect(),
        None => vec![String::new(); 6],
    }
}

fn headers(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `alpha,beta,gamma,ACC,NPV,PPV,SEN,SPE,FOS`, one row per group. Metrics of
/// a failed group are left empty.
pub fn sweep_table(rows: &[SweepRow]) -> Table {
    let mut header = headers(&["alpha", "beta", "gamma"]);
    header.extend(headers(&MetricsReport::NAMES));
    let rows = rows
        .iter()
        .map(|r| {
            let mut cells: Vec<String> = r.coefficients.as_array().iter().map(|c| c.to_string()).collect();
            cells.extend(metric_cells(r.test.as_ref().map(|t| &t.metrics)));
            cells
        })
        .collect();
    Table { header, rows }
}

/// `ceb,tdb,tcb,s28,s56,s112,s224,alpha,beta,gamma,ACC` with `1`/`0` flags.
pub fn ablation_table(rows: &[AblationRow]) -> Table {
    let header = headers(&[
        "ceb", "tdb", "tcb", "s28", "s56", "s112", "s224", "alpha", "beta", "gamma", "ACC",
    ]);
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    let rows = rows
        .iter()
        .map(|r| {
            let b = r.spec.blocks;
            let mut cells = vec![flag(b.ceb), flag(b.tdb), flag(b.tcb)];
            cells.extend(r.spec.scales.iter().map(|&s| flag(s)));
            match r.spec.coefficients {
                Some(c) => cells.extend(c.as_array().iter().map(|v| v.to_string())),
                None => cells.extend(std::iter::repeat_n(String::new(), 3)),
            }
            cells.push(cell(r.accuracy()));
            cells
        })
        .collect();
    Table { header, rows }
}

/// One row per epoch.
pub fn history_table(h: &TrainHistory) -> Table {
    let mut header = headers(&[
        "epoch",
        "steps",
        "lr",
        "train_loss",
        "train_accuracy",
        "val_loss",
        "tp",
        "fp",
        "fn",
        "tn",
    ]);
    header.extend(MetricsReport::NAMES.iter().map(|n| format!("val_{n}")));
    let rows = h
        .epochs
        .iter()
        .map(|e| {
            let c = e.val_confusion;
            let mut cells = vec![
                e.epoch.to_string(),
                e.steps.to_string(),
                e.lr.to_string(),
                e.train_loss.to_string(),
                e.train_accuracy.to_string(),
                e.val_loss.to_string(),
                c.tp.to_string(),
                c.fp.to_string(),
                c.fn_.to_string(),
                c.tn.to_string(),
            ];
            cells.extend(metric_cells(Some(&e.val_metrics)));
            cells
        })
        .collect();
    Table { header, rows }
}

/// `step,loss`.
pub fn loss_table(h: &TrainHistory) -> Table {
    Table {
        header: headers(&["step", "loss"]),
        rows: h
            .step_losses
            .iter()
            .enumerate()
            .map(|(i, l)| vec![i.to_string(), l.to_string()])
            .collect(),
    }
}
