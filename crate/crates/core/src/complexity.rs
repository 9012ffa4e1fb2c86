//! Model complexity inputs: parameter counts and inference latency.
//!
//! A model manifest is a small TOML file:
//!
//! ```toml
//! model_id = "3DUNet"
//! params_millions = 30.6
//! latency_series = "latency/3dunet.txt"   # one ms value per line
//! warmup = 10                             # optional
//! ```
//!
//! `latency_mean_ms` / `latency_std_ms` may replace `latency_series`.
//! A relative series path is resolved against the manifest's directory.

use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::summary::mean_std;

/// Leading samples discarded before latency statistics.
pub const DEFAULT_WARMUP: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySeries {
    pub model_id: String,
    /// Wall-clock durations in ms, warmup included.
    pub samples: Vec<f64>,
    pub warmup: usize,
}

impl LatencySeries {
    pub fn new(model_id: impl Into<String>, samples: Vec<f64>, warmup: usize) -> Result<Self> {
        if let Some(bad) = samples.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::format(format!(
                "latency samples must be positive and finite, got {bad}"
            )));
        }
        Ok(Self {
            model_id: model_id.into(),
            samples,
            warmup,
        })
    }

    /// Parse one duration per line; blank lines and `#` comments are skipped.
    pub fn parse(model_id: impl Into<String>, text: &str, warmup: usize) -> Result<Self> {
        let mut samples = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let v = line
                .parse::<f64>()
                .map_err(|_| Error::format(format!("latency series line {}: not a number: {line:?}", i + 1)))?;
            samples.push(v);
        }
        Self::new(model_id, samples, warmup)
    }

    pub fn from_file(model_id: impl Into<String>, path: impl AsRef<Path>, warmup: usize) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(model_id, &text, warmup)
    }

    pub fn to_text(&self) -> String {
        self.samples.iter().map(|s| format!("{s}\n")).collect()
    }
}

/// Mean and sample std (ms) after dropping the warmup samples.
pub fn latency_stats(series: &LatencySeries) -> Result<(f64, f64)> {
    let kept = series.samples.get(series.warmup..).unwrap_or(&[]);
    if kept.len() < 2 {
        return Err(Error::argument(format!(
            "latency series for {} has {} samples after {} warmup, need at least 2",
            series.model_id,
            kept.len(),
            series.warmup
        )));
    }
    Ok(mean_std(kept).expect("nonempty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRecord {
    pub model_id: String,
    pub params_millions: f64,
    pub latency_mean_ms: f64,
    pub latency_std_ms: f64,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    model_id: String,
    params_millions: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency_series: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency_mean_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    latency_std_ms: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    warmup: Option<usize>,
}

/// Manifest text pointing at a latency series file.
pub fn manifest_text(model_id: &str, params_millions: f64, series: &Path, warmup: usize) -> Result<String> {
    let m = Manifest {
        model_id: model_id.to_string(),
        params_millions,
        latency_series: Some(series.to_path_buf()),
        latency_mean_ms: None,
        latency_std_ms: None,
        warmup: Some(warmup),
    };
    toml::to_string(&m).map_err(|e| Error::Internal(format!("manifest serialization: {e}")))
}

/// Parse manifest text; `base` resolves a relative series path.
pub fn parse_manifest(text: &str, base: &Path) -> Result<ComplexityRecord> {
    let m: Manifest = toml::from_str(text).map_err(|e| Error::format(format!("model manifest: {e}")))?;
    if m.model_id.trim().is_empty() {
        return Err(Error::format("model manifest: empty model_id"));
    }
    if !(m.params_millions.is_finite() && m.params_millions > 0.0) {
        return Err(Error::format(format!(
            "model manifest {}: params_millions must be positive, got {}",
            m.model_id, m.params_millions
        )));
    }
    let (mean, std) = match (m.latency_series, m.latency_mean_ms, m.latency_std_ms) {
        (Some(series), None, None) => {
            let path = if series.is_absolute() {
                series
            } else {
                base.join(series)
            };
            let s = LatencySeries::from_file(&m.model_id, &path, m.warmup.unwrap_or(DEFAULT_WARMUP))?;
            latency_stats(&s).map_err(|e| Error::format(format!("{}: {e}", path.display())))?
        }
        (None, Some(mean), Some(std)) => (mean, std),
        _ => {
            return Err(Error::format(format!(
                "model manifest {}: give either latency_series or both latency_mean_ms and latency_std_ms",
                m.model_id
            )))
        }
    };
    if !(mean.is_finite() && mean > 0.0 && std.is_finite() && std >= 0.0) {
        return Err(Error::format(format!(
            "model manifest {}: invalid latency {mean} ± {std} ms",
            m.model_id
        )));
    }
    Ok(ComplexityRecord {
        model_id: m.model_id,
        params_millions: m.params_millions,
        latency_mean_ms: mean,
        latency_std_ms: std,
    })
}

pub fn ingest_manifest(path: impl AsRef<Path>) -> Result<ComplexityRecord> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_manifest(&text, base).map_err(|e| match e {
        Error::Format(msg) => Error::format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Run `argv` `n` times in sequence and record each wall-clock duration.
///
/// The child's stdout and stderr are discarded. Warmup is not applied here;
/// the returned series keeps every sample and carries `warmup`.
pub fn time_command(model_id: &str, argv: &[String], n: usize, warmup: usize) -> Result<LatencySeries> {
    if n == 0 {
        return Err(Error::argument("timing needs at least one run"));
    }
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| Error::argument("timing needs a command"))?;
    let mut samples = Vec::with_capacity(n);
    for run in 0..n {
        let start = Instant::now();
        let status = Command::new(program)
            .args(args)
            .stdin(Stdio::null())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .status()
            .map_err(|e| Error::Execution(format!("cannot start {program:?}: {e}")))?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        if !status.success() {
            return Err(Error::Execution(format!(
                "{program:?} failed on run {} with {status}",
                run + 1
            )));
        }
        samples.push(ms.max(f64::MIN_POSITIVE));
    }
    LatencySeries::new(model_id, samples, warmup)
}
