//! Dataset files, predictions, manifests and grid syntax.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rotsolve::estimation::{Class, LabeledDataset};
use rotsolve::selection::logspace;
use serde::Serialize;

use crate::CliError;

/// Name of the label column in dataset files.
pub const LABEL_COLUMN: &str = "label";

/// A parsed dataset file. `labels` is `None` when the file has no label column.
#[derive(Debug, Clone)]
pub struct DatasetFile {
    pub features: Vec<String>,
    pub x: Array2<f64>,
    pub labels: Option<Vec<Class>>,
}

impl DatasetFile {
    /// Labelled dataset for training; both classes must be present.
    pub fn into_labeled(self, path: &Path) -> Result<LabeledDataset, CliError> {
        let labels = self
            .labels
            .ok_or_else(|| CliError::data(path, format!("no '{LABEL_COLUMN}' column")))?;
        for class in [Class::One, Class::Two] {
            if !labels.contains(&class) {
                return Err(CliError::data(path, format!("no rows with label {}", class.as_u8())));
            }
        }
        Ok(LabeledDataset::new(self.x, labels)?)
    }
}

fn parse_label(cell: &str) -> Option<Class> {
    match cell.trim() {
        "1" => Some(Class::One),
        "2" => Some(Class::Two),
        _ => None,
    }
}

/// Reads a header-first CSV file. When `require_labels` is set the label
/// column must exist.
pub fn read_dataset(path: &Path, require_labels: bool) -> Result<DatasetFile, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::data(path, e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(CliError::Usage(format!("{}: data file is empty", path.display())));
    }
    let label_idx = header.iter().position(|h| h == LABEL_COLUMN);
    if require_labels && label_idx.is_none() {
        return Err(CliError::data(path, format!("missing '{LABEL_COLUMN}' column")));
    }
    let features: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let p = features.len();
    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut rows = 0usize;
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| CliError::data(path, format!("line {line}: {e}")))?;
        if record.len() != header.len() {
            return Err(CliError::data(
                path,
                format!("line {line}: expected {} cells, found {}", header.len(), record.len()),
            ));
        }
        for (i, cell) in record.iter().enumerate() {
            if Some(i) == label_idx {
                let class = parse_label(cell)
                    .ok_or_else(|| CliError::data(path, format!("line {line}: label must be 1 or 2, got '{cell}'")))?;
                labels.push(class);
            } else {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    CliError::data(path, format!("line {line}, column '{}': '{cell}' is not a number", header[i]))
                })?;
                if !v.is_finite() {
                    return Err(CliError::data(path, format!("line {line}, column '{}': non-finite value", header[i])));
                }
                values.push(v);
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Usage(format!("{}: data file has no rows", path.display())));
    }
    if p == 0 {
        return Err(CliError::data(path, "no feature columns"));
    }
    let x = Array2::from_shape_vec((rows, p), values).expect("row lengths checked");
    Ok(DatasetFile {
        features,
        x,
        labels: label_idx.map(|_| labels),
    })
}

/// Writes `row,label` with 0-based row indices.
pub fn write_predictions(path: &Path, predictions: &[Class]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["row", LABEL_COLUMN]).map_err(|e| CliError::data(path, e.to_string()))?;
    for (i, c) in predictions.iter().enumerate() {
        w.write_record([i.to_string(), c.as_u8().to_string()])
            .map_err(|e| CliError::data(path, e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::data(path, e.to_string()))?;
    write_file(path, &bytes)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

/// Everything needed to rerun a command, plus timing.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub flags: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub version: String,
    pub started_unix_seconds: f64,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub details: Option<serde_json::Value>,
}

/// Start time of a command, turned into a manifest when it finishes.
pub struct RunClock {
    started: SystemTime,
    timer: Instant,
}

impl RunClock {
    pub fn start() -> Self {
        RunClock {
            started: SystemTime::now(),
            timer: Instant::now(),
        }
    }

    pub fn manifest(
        &self,
        command: &str,
        flags: impl Serialize,
        seeds: BTreeMap<String, u64>,
        outputs: Vec<PathBuf>,
        details: Option<serde_json::Value>,
    ) -> RunManifest {
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            flags: serde_json::to_value(flags).unwrap_or(serde_json::Value::Null),
            seeds,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_seconds: self
                .started
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            wall_clock_seconds: self.timer.elapsed().as_secs_f64(),
            outputs,
            details,
        }
    }
}

pub fn write_manifest(path: &Path, manifest: &RunManifest) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(manifest).map_err(|e| CliError::data(path, e.to_string()))?;
    write_file(path, text.as_bytes())
}

/// `<file>.manifest.json` next to an output file.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

// Snaps accumulated float noise such as 0.15000000000000002 back to 0.15.
fn tidy(v: f64) -> f64 {
    format!("{v:.12e}").parse().unwrap_or(v)
}

/// Parses a numeric grid. Accepted forms: a comma list `0.1,1,10`, an
/// inclusive range `start:step:stop`, or `log:lo:hi:n` for `n` log-spaced
/// points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>, CliError> {
    let bad = |why: &str| CliError::Usage(format!("invalid grid '{spec}': {why}"));
    let num = |s: &str| -> Result<f64, CliError> {
        let v: f64 = s.trim().parse().map_err(|_| bad(&format!("'{s}' is not a number")))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(bad("values must be finite"))
        }
    };
    let spec_t = spec.trim();
    if let Some(rest) = spec_t.strip_prefix("log:") {
        let parts: Vec<&str> = rest.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected log:lo:hi:n"));
        }
        let (lo, hi) = (num(parts[0])?, num(parts[1])?);
        let n: usize = parts[2].trim().parse().map_err(|_| bad("point count must be a positive integer"))?;
        if !(lo > 0.0 && hi >= lo) || n == 0 {
            return Err(bad("need 0 < lo <= hi and n >= 1"));
        }
        return Ok(logspace(lo, hi, n).into_iter().map(tidy).collect());
    }
    if spec_t.contains(':') {
        let parts: Vec<&str> = spec_t.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected start:step:stop"));
        }
        let (start, step, stop) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(step > 0.0) || stop < start {
            return Err(bad("need step > 0 and stop >= start"));
        }
        let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
        return Ok((0..count).map(|i| tidy(start + step * i as f64)).collect());
    }
    let values: Vec<f64> = spec_t.split(',').map(num).collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(bad("no values"));
    }
    Ok(values)
}
