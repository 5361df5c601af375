//! On-disk layout: `<results>/<id>/metrics.csv` plus a `key.json` sidecar.
//! `metrics.csv` is written last, so its presence marks a finished run.

use std::fs;
use std::path::{Path, PathBuf};

use robustfl_sim::MetricRow;

use crate::error::{io, Error, Result};
use crate::grid::ExperimentKey;

pub const METRICS_FILE: &str = "metrics.csv";
pub const KEY_FILE: &str = "key.json";

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub key: ExperimentKey,
    pub series: Vec<MetricRow>,
}

impl ExperimentResult {
    pub fn accuracies(&self) -> Vec<f64> {
        self.series.iter().map(|r| r.test_accuracy).collect()
    }
}

pub fn result_dir(root: &Path, key: &ExperimentKey) -> PathBuf {
    root.join(key.id())
}

pub fn is_complete(root: &Path, key: &ExperimentKey) -> bool {
    result_dir(root, key).join(METRICS_FILE).is_file()
}

/// Writes `contents` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, contents).map_err(io(&tmp))?;
    fs::rename(&tmp, path).map_err(io(path))
}

pub fn metrics_csv(series: &[MetricRow]) -> String {
    let clients = series.first().map_or(0, |r| r.client_losses.len());
    let mut out = String::from("step,test_accuracy,train_loss");
    for k in 0..clients {
        out.push_str(&format!(",client{k}_loss"));
    }
    out.push('\n');
    for r in series {
        out.push_str(&format!("{},{},{}", r.step, r.test_accuracy, r.train_loss));
        for l in &r.client_losses {
            out.push_str(&format!(",{l}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_result(root: &Path, result: &ExperimentResult) -> Result<PathBuf> {
    let dir = result_dir(root, &result.key);
    fs::create_dir_all(&dir).map_err(io(&dir))?;
    let key = serde_json::to_string_pretty(&result.key)?;
    write_atomic(&dir.join(KEY_FILE), key.as_bytes())?;
    write_atomic(&dir.join(METRICS_FILE), metrics_csv(&result.series).as_bytes())?;
    Ok(dir)
}

pub fn parse_metrics(text: &str, path: &Path) -> Result<Vec<MetricRow>> {
    let err = |line: usize, reason: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        reason,
    };
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| err(1, "empty file".into()))?.split(',').collect();
    if header.len() < 3 || header[..3] != ["step", "test_accuracy", "train_loss"] {
        return Err(err(1, "expected header step,test_accuracy,train_loss".into()));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(err(lineno, format!("{} fields, header has {}", cells.len(), header.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(lineno, format!("{s:?}: {e}")));
        rows.push(MetricRow {
            step: cells[0].parse().map_err(|e| err(lineno, format!("step {:?}: {e}", cells[0])))?,
            test_accuracy: num(cells[1])?,
            train_loss: num(cells[2])?,
            client_losses: cells[3..].iter().map(|c| num(c)).collect::<Result<_>>()?,
        });
    }
    Ok(rows)
}

/// Reads a finished run from its directory.
pub fn read_result_dir(dir: &Path) -> Result<ExperimentResult> {
    let metrics = dir.join(METRICS_FILE);
    if !metrics.is_file() {
        return Err(Error::ResultAbsent(metrics));
    }
    let key_path = dir.join(KEY_FILE);
    let key_text = fs::read_to_string(&key_path).map_err(io(&key_path))?;
    let key: ExperimentKey = serde_json::from_str(&key_text)?;
    let text = fs::read_to_string(&metrics).map_err(io(&metrics))?;
    Ok(ExperimentResult {
        key,
        series: parse_metrics(&text, &metrics)?,
    })
}

pub fn read_result(root: &Path, key: &ExperimentKey) -> Result<ExperimentResult> {
    read_result_dir(&result_dir(root, key))
}

/// Every finished run under `root`, sorted by id, plus the number of
/// directories that could not be read.
pub fn read_all(root: &Path) -> Result<(Vec<ExperimentResult>, usize)> {
    let mut dirs: Vec<PathBuf> = match fs::read_dir(root) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_dir())
            .collect(),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((Vec::new(), 0)),
        Err(e) => return Err(io(root)(e)),
    };
    dirs.sort();
    let mut out = Vec::new();
    let mut unreadable = 0;
    for dir in dirs {
        match read_result_dir(&dir) {
            Ok(r) => out.push(r),
            Err(e) => {
                log::warn!("skipping {}: {e}", dir.display());
                unreadable += 1;
            }
        }
    }
    Ok((out, unreadable))
}
