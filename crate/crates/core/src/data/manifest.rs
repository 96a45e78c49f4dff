//! Labelled image listings, from a class-per-directory tree or a CSV index.

use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CectError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    Negative = 0,
    Positive = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Negative, Label::Positive];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        match i {
            0 => Some(Label::Negative),
            1 => Some(Label::Positive),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Negative => "negative",
            Label::Positive => "positive",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "positive" | "1" => Ok(Label::Positive),
            "negative" | "0" => Ok(Label::Negative),
            other => Err(format!("unknown label `{other}` (expected positive, negative, 0 or 1)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    /// Stable identifier: the path as listed (relative to the manifest root).
    pub source_id: String,
    /// Location on disk.
    pub path: PathBuf,
    pub label: Label,
}

/// Records sorted by `source_id`, which is unique.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    records: Vec<Record>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub positive: usize,
    pub negative: usize,
}

impl ClassCounts {
    pub fn total(&self) -> usize {
        self.positive + self.negative
    }

    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Positive => self.positive,
            Label::Negative => self.negative,
        }
    }
}

impl Manifest {
    /// Sorts and checks uniqueness. Empty classes are allowed here so that
    /// split parts can be represented; loaders enforce non-empty classes.
    pub fn from_records(mut records: Vec<Record>) -> Result<Self> {
        records.sort_by(|a, b| a.source_id.cmp(&b.source_id));
        for pair in records.windows(2) {
            if pair[0].source_id == pair[1].source_id {
                return Err(CectError::Ingestion {
                    path: pair[1].path.clone(),
                    detail: format!("duplicate path `{}`", pair[1].source_id),
                });
            }
        }
        Ok(Manifest { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn counts(&self) -> ClassCounts {
        let positive = self.records.iter().filter(|r| r.label == Label::Positive).count();
        ClassCounts {
            positive,
            negative: self.records.len() - positive,
        }
    }

    fn require_both_classes(self, origin: &Path) -> Result<Self> {
        let c = self.counts();
        for label in Label::ALL {
            if c.get(label) == 0 {
                return Err(CectError::Ingestion {
                    path: origin.to_path_buf(),
                    detail: format!("class `{label}` has no images"),
                });
            }
        }
        Ok(self)
    }

    /// `<root>/positive/*` and `<root>/negative/*`, regular files only.
    pub fn load_dir(root: &Path) -> Result<Self> {
        let mut records = Vec::new();
        for label in Label::ALL {
            let dir = root.join(label.name());
            let entries = std::fs::read_dir(&dir).map_err(|e| CectError::Ingestion {
                path: dir.clone(),
                detail: format!("cannot list class directory: {e}"),
            })?;
            for entry in entries {
                let entry = entry.map_err(|e| CectError::io(&dir, e))?;
                let path = entry.path();
                if !path.is_file() {
                    continue;
                }
                let name = entry.file_name().to_string_lossy().into_owned();
                records.push(Record {
                    source_id: format!("{}/{name}", label.name()),
                    path,
                    label,
                });
            }
        }
        Self::from_records(records)?.require_both_classes(root)
    }

    /// CSV with header `path,label`. Relative paths resolve against the CSV's
    /// directory.
    pub fn load_csv(csv_path: &Path) -> Result<Self> {
        let base = csv_path.parent().unwrap_or(Path::new("."));
        let ingest = |detail: String| CectError::Ingestion {
            path: csv_path.to_path_buf(),
            detail,
        };
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(csv_path)
            .map_err(|e| ingest(e.to_string()))?;
        let headers = rdr.headers().map_err(|e| ingest(e.to_string()))?.clone();
        if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
            return Err(ingest(format!(
                "expected header `path,label`, got `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut records = Vec::new();
        for (line, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| ingest(e.to_string()))?;
            let label = row[1]
                .parse::<Label>()
                .map_err(|e| ingest(format!("row {}: {e}", line + 2)))?;
            let listed = row[0].to_string();
            if listed.is_empty() {
                return Err(ingest(format!("row {}: empty path", line + 2)));
            }
            let p = Path::new(&listed);
            let path = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            records.push(Record {
                source_id: listed,
                path,
                label,
            });
        }
        Self::from_records(records)?.require_both_classes(csv_path)
    }

    /// A directory is read as a class tree, a file as a CSV index.
    pub fn load(source: &Path) -> Result<Self> {
        if source.is_dir() {
            Self::load_dir(source)
        } else {
            Self::load_csv(source)
        }
    }

    /// Writes `path,label` rows using `source_id`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w =
            csv::Writer::from_path(path).map_err(|e| CectError::Serialization(format!("{}: {e}", path.display())))?;
        let ser = |e: csv::Error| CectError::Serialization(format!("{}: {e}", path.display()));
        w.write_record(["path", "label"]).map_err(ser)?;
        for r in &self.records {
            w.write_record([r.source_id.as_str(), r.label.name()]).map_err(ser)?;
        }
        w.flush().map_err(|e| CectError::io(path, e))
    }

    pub fn source_ids(&self) -> BTreeSet<&str> {
        self.records.iter().map(|r| r.source_id.as_str()).collect()
    }
}
