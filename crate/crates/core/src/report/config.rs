use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::fusion::{ScoreKind, DEFAULT_OVERLAP, DEFAULT_PATCH_SIZE, DEFAULT_SIGMA_COEFF};
use crate::metrics::{TotalMode, DEFAULT_NSD_TOLERANCE_MM};
use crate::ranking::{Direction, Directions, DEFAULT_SCOPES};
use crate::volume::LabelMap;

/// Run configuration, read from TOML. Every section and key is optional;
/// relative paths resolve against the config file's directory.
///
/// ```toml
/// out_dir = "results"
/// jobs = 4
///
/// [paths]
/// truth_dir = "labels"            # <case>.nii or <case>.nii.gz
/// label_map = "label_map.toml"    # default: bundled thoracic map
/// inventory = "cases.csv"         # restricts runs to the test split
/// manifests = ["models/unet.toml"]
///
/// [paths.predictions]             # model -> directory of label volumes
/// unet = "pred/unet"
///
/// [paths.scores]                  # model -> directory of <case>.vsbp files
/// unet = "scores/unet"
///
/// [fusion]
/// patch_size = 96
/// overlap = 0.5
/// sigma_coeff = 0.125
/// scores = "probabilities"        # or "logits"
///
/// [metrics]
/// tau_mm = 3.0
/// total_mode = "case-mean"        # or "pooled"
/// remap_sources = false           # apply label-map merges to inputs
///
/// [ranking]
/// scopes = ["btcv", "surgical", "total"]
/// [ranking.directions]
/// hd95 = "lower"
///
/// [stats]
/// enabled = true
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub out_dir: PathBuf,
    pub jobs: usize,
    pub truth_dir: Option<PathBuf>,
    pub label_map: Option<PathBuf>,
    pub inventory: Option<PathBuf>,
    pub manifests: Vec<PathBuf>,
    pub predictions: BTreeMap<String, PathBuf>,
    pub scores: BTreeMap<String, PathBuf>,
    pub patch_size: usize,
    pub overlap: f64,
    pub sigma_coeff: f64,
    pub score_kind: ScoreKind,
    pub tau_mm: f64,
    pub total_mode: TotalMode,
    pub remap_sources: bool,
    pub scopes: Vec<String>,
    pub directions: Directions,
    pub stats_enabled: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("segbench-out"),
            jobs: 0,
            truth_dir: None,
            label_map: None,
            inventory: None,
            manifests: Vec::new(),
            predictions: BTreeMap::new(),
            scores: BTreeMap::new(),
            patch_size: DEFAULT_PATCH_SIZE,
            overlap: DEFAULT_OVERLAP,
            sigma_coeff: DEFAULT_SIGMA_COEFF,
            score_kind: ScoreKind::Probabilities,
            tau_mm: DEFAULT_NSD_TOLERANCE_MM,
            total_mode: TotalMode::CaseMean,
            remap_sources: false,
            scopes: DEFAULT_SCOPES.iter().map(|s| s.to_string()).collect(),
            directions: Directions::default(),
            stats_enabled: true,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    out_dir: Option<PathBuf>,
    jobs: Option<usize>,
    #[serde(default)]
    paths: RawPaths,
    #[serde(default)]
    fusion: RawFusion,
    #[serde(default)]
    metrics: RawMetrics,
    #[serde(default)]
    ranking: RawRanking,
    #[serde(default)]
    stats: RawStats,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPaths {
    truth_dir: Option<PathBuf>,
    label_map: Option<PathBuf>,
    inventory: Option<PathBuf>,
    #[serde(default)]
    manifests: Vec<PathBuf>,
    #[serde(default)]
    predictions: BTreeMap<String, PathBuf>,
    #[serde(default)]
    scores: BTreeMap<String, PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFusion {
    patch_size: Option<usize>,
    overlap: Option<f64>,
    sigma_coeff: Option<f64>,
    scores: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMetrics {
    tau_mm: Option<f64>,
    total_mode: Option<String>,
    remap_sources: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRanking {
    scopes: Option<Vec<String>>,
    #[serde(default)]
    directions: BTreeMap<String, String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStats {
    enabled: Option<bool>,
}

pub fn parse_score_kind(s: &str) -> Result<ScoreKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "probabilities" | "probs" => Ok(ScoreKind::Probabilities),
        "logits" => Ok(ScoreKind::Logits),
        other => Err(Error::argument(format!(
            "unknown score kind {other:?} (probabilities|logits)"
        ))),
    }
}

impl RunConfig {
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::argument(format!("config: {e}")))?;
        let d = Self::default();
        let rel = |p: PathBuf| if p.is_absolute() { p } else { base.join(p) };
        let mut directions = Directions::default();
        for (metric, dir) in raw.ranking.directions {
            directions.insert(metric, dir.parse::<Direction>()?);
        }
        let cfg = Self {
            out_dir: raw.out_dir.map(rel).unwrap_or(d.out_dir),
            jobs: raw.jobs.unwrap_or(d.jobs),
            truth_dir: raw.paths.truth_dir.map(rel),
            label_map: raw.paths.label_map.map(rel),
            inventory: raw.paths.inventory.map(rel),
            manifests: raw.paths.manifests.into_iter().map(rel).collect(),
            predictions: raw.paths.predictions.into_iter().map(|(k, v)| (k, rel(v))).collect(),
            scores: raw.paths.scores.into_iter().map(|(k, v)| (k, rel(v))).collect(),
            patch_size: raw.fusion.patch_size.unwrap_or(d.patch_size),
            overlap: raw.fusion.overlap.unwrap_or(d.overlap),
            sigma_coeff: raw.fusion.sigma_coeff.unwrap_or(d.sigma_coeff),
            score_kind: raw
                .fusion
                .scores
                .as_deref()
                .map(parse_score_kind)
                .transpose()?
                .unwrap_or(d.score_kind),
            tau_mm: raw.metrics.tau_mm.unwrap_or(d.tau_mm),
            total_mode: raw
                .metrics
                .total_mode
                .as_deref()
                .map(str::parse)
                .transpose()?
                .unwrap_or(d.total_mode),
            remap_sources: raw.metrics.remap_sources.unwrap_or(d.remap_sources),
            scopes: raw.ranking.scopes.unwrap_or(d.scopes),
            directions,
            stats_enabled: raw.stats.enabled.unwrap_or(d.stats_enabled),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Range checks on numeric fields. Path existence is checked where each
    /// path is used, so the error names the command that needed it.
    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 {
            return Err(Error::argument("fusion.patch_size must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.overlap) {
            return Err(Error::argument(format!(
                "fusion.overlap must be in [0, 1), got {}",
                self.overlap
            )));
        }
        if !(self.sigma_coeff.is_finite() && self.sigma_coeff > 0.0) {
            return Err(Error::argument(format!(
                "fusion.sigma_coeff must be > 0, got {}",
                self.sigma_coeff
            )));
        }
        if !(self.tau_mm.is_finite() && self.tau_mm > 0.0) {
            return Err(Error::argument(format!(
                "metrics.tau_mm must be > 0, got {}",
                self.tau_mm
            )));
        }
        if self.scopes.is_empty() {
            return Err(Error::argument("ranking.scopes must not be empty"));
        }
        Ok(())
    }

    pub fn label_map(&self) -> Result<LabelMap> {
        match &self.label_map {
            Some(p) => LabelMap::from_file(p),
            None => Ok(LabelMap::thoracic_default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(RunConfig::parse("", Path::new("/x")).unwrap(), RunConfig::default());
    }

    #[test]
    fn relative_paths_and_overrides() {
        let text = r#"
            out_dir = "out"
            [paths]
            truth_dir = "gt"
            [paths.predictions]
            unet = "/abs/unet"
            [fusion]
            overlap = 0.25
            scores = "logits"
            [metrics]
            total_mode = "pooled"
            [ranking]
            scopes = ["total"]
            [ranking.directions]
            hd95 = "lower"
        "#;
        let c = RunConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(c.out_dir, PathBuf::from("/cfg/out"));
        assert_eq!(c.truth_dir, Some(PathBuf::from("/cfg/gt")));
        assert_eq!(c.predictions["unet"], PathBuf::from("/abs/unet"));
        assert_eq!(c.overlap, 0.25);
        assert_eq!(c.score_kind, ScoreKind::Logits);
        assert_eq!(c.total_mode, TotalMode::Pooled);
        assert_eq!(c.scopes, ["total"]);
        assert_eq!(c.directions.resolve("hd95").unwrap(), Direction::LowerBetter);
        assert_eq!(c.patch_size, DEFAULT_PATCH_SIZE);
    }

    #[test]
    fn rejects_bad_values_and_keys() {
        for bad in [
            "[fusion]\noverlap = 1.0\n",
            "[metrics]\ntau_mm = 0\n",
            "[fusion]\nscores = \"votes\"\n",
            "[ranking]\nscopes = []\n",
            "colour = 1\n",
            "[ranking.directions]\nx = \"sideways\"\n",
        ] {
            assert!(
                matches!(RunConfig::parse(bad, Path::new(".")), Err(Error::Argument(_))),
                "{bad}"
            );
        }
    }
}
