//! End-to-end steps behind the command-line front end. Each step reads its
//! inputs, writes its outputs under an output directory and returns the
//! in-memory results. Output order never depends on thread scheduling.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::RunConfig;
use crate::complexity::{ingest_manifest, ComplexityRecord};
use crate::error::{Error, Result};
use crate::fusion::{fuse, gaussian_weights, make_windows, read_patches, FuseOptions};
use crate::metrics::{
    aggregate, case_group_means, evaluate_case, records_to_csv, AggregateRow, Metric, MetricRecord, Scope,
};
use crate::ranking::{rank_table, read_metric_rows, MetricTable, RankingResult};
use crate::stats::{
    analyze, anova_to_csv, observations_to_csv, read_observations, tukey_to_csv, AnovaResult, Observation, TukeyPair,
};
use crate::volume::nifti::{read_labels, write_labels};
use crate::volume::{remap_labels, CaseInventory, LabelGroup, LabelVolume, Split, Volume};

pub const METRICS_FILE: &str = "metrics.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";
pub const METRIC_TABLE_FILE: &str = "metric_table.csv";
pub const COMPLEXITY_FILE: &str = "complexity.csv";
pub const COMPLEXITY_TABLE_FILE: &str = "complexity_table.csv";
pub const RANKING_FILE: &str = "ranking.csv";
pub const RANKING_TEXT_FILE: &str = "ranking.txt";
pub const METRIC_RANKS_FILE: &str = "metric_ranks.csv";
pub const ANOVA_FILE: &str = "anova.csv";
pub const TUKEY_FILE: &str = "tukey.csv";

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn not_found(path: &Path, what: String) -> Error {
    Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, what))
}

fn case_id_of(path: &Path) -> Option<String> {
    let name = path.file_name()?.to_str()?;
    name.strip_suffix(".nii.gz")
        .or_else(|| name.strip_suffix(".nii"))
        .map(str::to_string)
}

/// `<dir>/<case>.nii.gz`, falling back to `<dir>/<case>.nii`.
pub fn find_volume(dir: &Path, case: &str) -> Result<PathBuf> {
    for ext in ["nii.gz", "nii"] {
        let p = dir.join(format!("{case}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(not_found(
        &dir.join(format!("{case}.nii.gz")),
        format!("no volume for case {case} in {}", dir.display()),
    ))
}

/// Case IDs with a ground-truth volume, sorted. With an inventory, only its
/// test split is used and every test case must have a volume.
pub fn discover_cases(cfg: &RunConfig) -> Result<Vec<String>> {
    let dir = cfg
        .truth_dir
        .as_deref()
        .ok_or_else(|| Error::argument("paths.truth_dir (or --truth-dir) is required"))?;
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut found = BTreeSet::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if let Some(id) = case_id_of(&entry.path()) {
            found.insert(id);
        }
    }
    let cases: Vec<String> = match &cfg.inventory {
        None => found.into_iter().collect(),
        Some(inv_path) => {
            let inv = CaseInventory::from_file(inv_path)?;
            let mut test: Vec<String> = inv.in_split(Split::Test).map(|c| c.id.clone()).collect();
            test.sort();
            if let Some(missing) = test.iter().find(|c| !found.contains(*c)) {
                return Err(not_found(
                    &dir.join(format!("{missing}.nii.gz")),
                    format!("test case {missing} has no ground truth"),
                ));
            }
            test
        }
    };
    if cases.is_empty() {
        return Err(Error::format(format!("no ground-truth volumes in {}", dir.display())));
    }
    Ok(cases)
}

/// Fuse every model's window scores into label volumes at
/// `<out>/fused/<model>/<case>.nii.gz`. Geometry comes from the case's
/// ground-truth volume.
pub fn run_fuse(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    if cfg.scores.is_empty() {
        return Err(Error::argument(
            "no score directories configured (paths.scores or --scores)",
        ));
    }
    let cases = discover_cases(cfg)?;
    let truth_dir = cfg.truth_dir.as_deref().expect("checked by discover_cases");
    let importance = gaussian_weights(cfg.patch_size, cfg.sigma_coeff)?;
    let options = FuseOptions {
        score_kind: cfg.score_kind,
        keep_scores: false,
    };
    let mut written = Vec::new();
    for (model, dir) in &cfg.scores {
        for case in &cases {
            let path = dir.join(format!("{case}.vsbp"));
            if !path.is_file() {
                return Err(not_found(
                    &path,
                    format!("model {model} has no score file for case {case}"),
                ));
            }
            let file = read_patches(&path)?;
            if file.size != cfg.patch_size {
                return Err(Error::format(format!(
                    "{model}/{case}: window size {} differs from configured patch size {}",
                    file.size, cfg.patch_size
                )));
            }
            let truth = read_labels(find_volume(truth_dir, case)?)?;
            let grid = make_windows(truth.dims(), cfg.patch_size, cfg.overlap)?;
            let present: Vec<[usize; 3]> = file.patches.iter().map(|p| p.origin).collect();
            let missing = grid.missing(&present);
            if !missing.is_empty() {
                return Err(Error::format(format!(
                    "{model}/{case}: {} of {} windows missing, first at {:?}",
                    missing.len(),
                    grid.origins.len(),
                    missing[0]
                )));
            }
            let expected: BTreeSet<[usize; 3]> = grid.origins.iter().copied().collect();
            if let Some(extra) = present.iter().find(|o| !expected.contains(*o)) {
                return Err(Error::format(format!(
                    "{model}/{case}: window at {extra:?} is not on the sliding-window grid"
                )));
            }
            let fused = fuse(&file.patches, &importance, truth.dims(), options)?;
            let vol = Volume::new(truth.dims(), truth.spacing(), truth.origin(), fused.labels)?;
            let out = cfg.out_dir.join("fused").join(model).join(format!("{case}.nii.gz"));
            if let Some(d) = out.parent() {
                std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
            }
            write_labels(&out, &vol)?;
            log::info!("fused {model}/{case} from {} windows", file.patches.len());
            written.push(out);
        }
    }
    Ok(written)
}

#[derive(Debug, Clone)]
pub struct EvaluateOutput {
    pub records: Vec<MetricRecord>,
    pub aggregates: Vec<AggregateRow>,
    pub observations: Vec<(Metric, Vec<Observation>)>,
}

fn load_case(path: &Path, cfg: &RunConfig, map: &crate::volume::LabelMap) -> Result<LabelVolume> {
    let vol = read_labels(path)?;
    Ok(if cfg.remap_sources {
        remap_labels(&vol, map)
    } else {
        vol
    })
}

/// Evaluate every configured model on every case and write `metrics.csv`,
/// `aggregate.csv`, `metric_table.csv` and `observations_<metric>.csv`.
pub fn run_evaluate(cfg: &RunConfig) -> Result<EvaluateOutput> {
    if cfg.predictions.is_empty() {
        return Err(Error::argument(
            "no prediction directories configured (paths.predictions or --pred)",
        ));
    }
    let map = cfg.label_map()?;
    let cases = discover_cases(cfg)?;
    let truth_dir = cfg.truth_dir.as_deref().expect("checked by discover_cases");

    let mut records = Vec::new();
    for (model, pred_dir) in &cfg.predictions {
        let per_case: Vec<Result<Vec<MetricRecord>>> = cases
            .par_iter()
            .map(|case| {
                let truth = load_case(&find_volume(truth_dir, case)?, cfg, &map)?;
                let pred = load_case(&find_volume(pred_dir, case)?, cfg, &map)?;
                evaluate_case(&pred, &truth, &map, case, model, cfg.tau_mm)
            })
            .collect();
        for r in per_case {
            records.extend(r?);
        }
        log::info!("evaluated {model} on {} cases", cases.len());
    }

    let aggregates = aggregate(&records, &map, cfg.total_mode)?;
    let mut observations = Vec::new();
    for metric in Metric::ALL {
        let obs: Vec<Observation> = case_group_means(&records, &map, metric)?
            .into_iter()
            .map(Into::into)
            .collect();
        observations.push((metric, obs));
    }

    let out = &cfg.out_dir;
    write_file(&out.join(METRICS_FILE), &records_to_csv(&records))?;
    write_file(&out.join(AGGREGATE_FILE), &aggregates_to_csv(&aggregates))?;
    let mut table = metric_table_csv(&aggregates);
    if !cfg.manifests.is_empty() {
        let complexity = cfg.manifests.iter().map(ingest_manifest).collect::<Result<Vec<_>>>()?;
        table.push_str(complexity_rows(&complexity).trim_start_matches(TABLE_HEADER));
    }
    write_file(&out.join(METRIC_TABLE_FILE), &table)?;
    for (metric, obs) in &observations {
        write_file(
            &out.join(format!("observations_{metric}.csv")),
            &observations_to_csv(obs),
        )?;
    }
    Ok(EvaluateOutput {
        records,
        aggregates,
        observations,
    })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

/// `model_id,scope,metric,mean,std,n` with `NA` for undefined summaries.
pub fn aggregates_to_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from("model_id,scope,metric,mean,std,n\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.model_id,
            r.scope,
            r.metric,
            fmt_opt(r.mean),
            fmt_opt(r.std),
            r.n
        );
    }
    s
}

const TABLE_HEADER: &str = "model_id,metric_id,value\n";

/// Group-level means as ranking input: `dice_btcv`, `nsd_total`, and so on.
/// Undefined means are left out (the ranking step then reports them).
pub fn metric_table_csv(rows: &[AggregateRow]) -> String {
    let mut s = String::from(TABLE_HEADER);
    for r in rows {
        if matches!(r.scope, Scope::Label(_)) {
            continue;
        }
        match r.mean {
            Some(v) => {
                let _ = writeln!(s, "{},{}_{},{v}", r.model_id, r.metric, r.scope);
            }
            None => log::warn!("{} has no defined {} values for {}", r.model_id, r.metric, r.scope),
        }
    }
    s
}

/// `params_millions` and `latency_mean_ms` rows in metric-table form.
pub fn complexity_rows(records: &[ComplexityRecord]) -> String {
    let mut s = String::from(TABLE_HEADER);
    for r in records {
        let _ = writeln!(s, "{},params_millions,{}", r.model_id, r.params_millions);
        let _ = writeln!(s, "{},latency_mean_ms,{}", r.model_id, r.latency_mean_ms);
    }
    s
}

pub fn complexity_to_csv(records: &[ComplexityRecord]) -> String {
    let mut s = String::from("model_id,params_millions,latency_mean_ms,latency_std_ms\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.model_id, r.params_millions, r.latency_mean_ms, r.latency_std_ms
        );
    }
    s
}

/// Ingest manifests and write `complexity.csv` plus `complexity_table.csv`.
pub fn run_complexity(manifests: &[PathBuf], out_dir: &Path) -> Result<Vec<ComplexityRecord>> {
    if manifests.is_empty() {
        return Err(Error::argument("no model manifests given"));
    }
    let records = manifests.iter().map(ingest_manifest).collect::<Result<Vec<_>>>()?;
    let mut seen = BTreeSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.model_id.as_str())) {
        return Err(Error::argument(format!(
            "model {} appears in more than one manifest",
            dup.model_id
        )));
    }
    write_file(&out_dir.join(COMPLEXITY_FILE), &complexity_to_csv(&records))?;
    write_file(&out_dir.join(COMPLEXITY_TABLE_FILE), &complexity_rows(&records))?;
    Ok(records)
}

/// Build one table from metric-table CSVs and manifests, then rank.
pub fn build_table(tables: &[PathBuf], manifests: &[PathBuf], cfg: &RunConfig) -> Result<MetricTable> {
    let mut rows = Vec::new();
    for t in tables {
        rows.extend(read_metric_rows(t)?);
    }
    for m in manifests {
        let r = ingest_manifest(m)?;
        rows.push((r.model_id.clone(), "params_millions".into(), r.params_millions));
        rows.push((r.model_id, "latency_mean_ms".into(), r.latency_mean_ms));
    }
    MetricTable::from_rows(&rows, &cfg.directions)
}

/// Rank and write `metric_ranks.csv`, `ranking.csv` and `ranking.txt`.
pub fn run_rank(tables: &[PathBuf], manifests: &[PathBuf], cfg: &RunConfig) -> Result<RankingResult> {
    if tables.is_empty() {
        return Err(Error::argument("no metric table given"));
    }
    let table = build_table(tables, manifests, cfg)?;
    let scopes: Vec<&str> = cfg.scopes.iter().map(String::as_str).collect();
    let result = rank_table(&table, &scopes)?;
    write_file(&cfg.out_dir.join(METRIC_RANKS_FILE), &result.metric_ranks_csv())?;
    write_file(&cfg.out_dir.join(RANKING_FILE), &result.to_csv())?;
    write_file(&cfg.out_dir.join(RANKING_TEXT_FILE), &result.to_text())?;
    Ok(result)
}

/// Metric label for an observation file: its stem without `observations_`.
pub fn metric_label(path: &Path) -> String {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("value");
    stem.strip_prefix("observations_").unwrap_or(stem).to_string()
}

pub type StatsOutput = Vec<(String, AnovaResult, Vec<TukeyPair>)>;

/// ANOVA and Tukey HSD per observation file; writes `anova.csv`, `tukey.csv`.
pub fn run_stats(inputs: &[PathBuf], out_dir: &Path) -> Result<StatsOutput> {
    if inputs.is_empty() {
        return Err(Error::argument("no observation files given"));
    }
    let mut out = Vec::new();
    for path in inputs {
        let obs = read_observations(path)?;
        let (anova, pairs) = analyze(&obs)?;
        let groups: BTreeSet<LabelGroup> = obs.iter().map(|o| o.group).collect();
        log::info!(
            "{}: {} observations over {} groups",
            path.display(),
            obs.len(),
            groups.len()
        );
        out.push((metric_label(path), anova, pairs));
    }
    let anova: Vec<(&str, &AnovaResult)> = out.iter().map(|(m, a, _)| (m.as_str(), a)).collect();
    let tukey: Vec<(&str, &[TukeyPair])> = out.iter().map(|(m, _, t)| (m.as_str(), t.as_slice())).collect();
    write_file(&out_dir.join(ANOVA_FILE), &anova_to_csv(&anova))?;
    write_file(&out_dir.join(TUKEY_FILE), &tukey_to_csv(&tukey))?;
    Ok(out)
}
