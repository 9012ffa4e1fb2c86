//! Run orchestration and report rendering.

mod config;
mod pipeline;

pub use config::{parse_score_kind, RunConfig};
pub use pipeline::{
    aggregates_to_csv, build_table, complexity_rows, complexity_to_csv, discover_cases, find_volume, metric_label,
    metric_table_csv, run_complexity, run_evaluate, run_fuse, run_rank, run_stats, EvaluateOutput, StatsOutput,
    AGGREGATE_FILE, ANOVA_FILE, COMPLEXITY_FILE, COMPLEXITY_TABLE_FILE, METRICS_FILE, METRIC_RANKS_FILE,
    METRIC_TABLE_FILE, RANKING_FILE, RANKING_TEXT_FILE, TUKEY_FILE,
};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::{read_records, MetricRecord};
use crate::ranking::{
    align, category_ranking, final_ranking, read_metric_rows, CategoryRanking, CategorySpec, MetricTable, Ranked,
};
use crate::volume::LabelMap;
use pipeline::write_file;

pub const REPORT_FILE: &str = "report.txt";
pub const BOXPLOT_FILE: &str = "boxplot.csv";

const SUPERSCRIPT_DIGITS: [char; 10] = ['⁰', '¹', '²', '³', '⁴', '⁵', '⁶', '⁷', '⁸', '⁹'];

/// Rank as superscript: `2` becomes `²`, `1.5` becomes `¹·⁵`.
pub fn superscript(rank: f64) -> String {
    let plain = if rank.fract() == 0.0 {
        format!("{}", rank as i64)
    } else {
        format!("{rank}")
    };
    plain
        .chars()
        .map(|c| match c.to_digit(10) {
            Some(d) => SUPERSCRIPT_DIGITS[d as usize],
            None if c == '.' => '·',
            None => c,
        })
        .collect()
}

fn scope_title(scope: &str) -> String {
    match scope {
        "btcv" => "BTCV".to_string(),
        "surgical" => "Surgery".to_string(),
        "total" => "Total".to_string(),
        other => other.to_string(),
    }
}

/// Everything a report is rendered from.
#[derive(Debug, Clone)]
pub struct ReportBundle {
    pub table: MetricTable,
    /// `(model, metric_id)` to the sample std behind a mean.
    pub stds: BTreeMap<(String, String), f64>,
    pub records: Option<Vec<MetricRecord>>,
}

fn read_stds(
    path: &Path,
    out: &mut BTreeMap<(String, String), f64>,
    key_cols: (&str, &str),
    std_col: &str,
) -> Result<()> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(format!("{}: no {name} column", path.display())))
    };
    let (model_col, std_idx) = (col("model_id")?, col(std_col)?);
    let scope_cols = if key_cols.1.is_empty() {
        None
    } else {
        Some((col(key_cols.0)?, col(key_cols.1)?))
    };
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::format(format!("{}: {e}", path.display())))?;
        let Ok(std) = rec[std_idx].parse::<f64>() else { continue };
        let metric_id = match scope_cols {
            Some((metric, scope)) => format!("{}_{}", &rec[metric], &rec[scope]),
            None => key_cols.0.to_string(),
        };
        out.insert((rec[model_col].to_string(), metric_id), std);
    }
    Ok(())
}

impl ReportBundle {
    /// Load from a directory written by `evaluate` and/or `complexity`.
    /// Needs `metric_table.csv` or `complexity_table.csv`; `aggregate.csv`,
    /// `complexity.csv` and `metrics.csv` are used when present.
    pub fn load(dir: &Path, cfg: &RunConfig) -> Result<Self> {
        let sources: Vec<_> = [METRIC_TABLE_FILE, COMPLEXITY_TABLE_FILE]
            .iter()
            .map(|f| dir.join(f))
            .filter(|p| p.is_file())
            .collect();
        if sources.is_empty() {
            return Err(Error::format(format!(
                "report bundle {} has neither {METRIC_TABLE_FILE} nor {COMPLEXITY_TABLE_FILE}",
                dir.display()
            )));
        }
        // Earlier sources win, so complexity rows copied into the metric
        // table by `evaluate` are not counted twice.
        let mut rows = Vec::new();
        let mut seen = BTreeSet::new();
        for src in &sources {
            for row in read_metric_rows(src)? {
                if seen.insert((row.0.clone(), row.1.clone())) {
                    rows.push(row);
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::format(format!(
                "report bundle {} has no metric values",
                dir.display()
            )));
        }
        let table = MetricTable::from_rows(&rows, &cfg.directions)?;

        let mut stds = BTreeMap::new();
        let agg = dir.join(AGGREGATE_FILE);
        if agg.is_file() {
            read_stds(&agg, &mut stds, ("metric", "scope"), "std")?;
        }
        let cx = dir.join(COMPLEXITY_FILE);
        if cx.is_file() {
            read_stds(&cx, &mut stds, ("latency_mean_ms", ""), "latency_std_ms")?;
        }
        let metrics = dir.join(METRICS_FILE);
        let records = if metrics.is_file() {
            Some(read_records(&metrics)?)
        } else {
            None
        };
        Ok(Self { table, stds, records })
    }
}

/// Rankings the bundle supports: complexity when both complexity metrics are
/// present, segmentation for each scope with Dice and NSD, finals when both.
#[derive(Debug, Clone)]
pub struct ReportRankings {
    pub complexity: Option<CategoryRanking>,
    pub segmentation: Vec<(String, CategoryRanking)>,
    pub finals: Vec<(String, Ranked)>,
}

pub fn bundle_rankings(table: &MetricTable, scopes: &[String]) -> Result<ReportRankings> {
    let has = |spec: &CategorySpec| spec.metric_ids.iter().all(|m| table.column(m).is_some());
    let cx_spec = CategorySpec::complexity();
    let complexity = if has(&cx_spec) {
        Some(category_ranking(table, &cx_spec)?)
    } else {
        None
    };
    let mut segmentation = Vec::new();
    let mut finals = Vec::new();
    for scope in scopes {
        let spec = CategorySpec::segmentation(scope);
        if !has(&spec) {
            continue;
        }
        let seg = category_ranking(table, &spec)?;
        if let Some(cx) = &complexity {
            finals.push((scope.clone(), final_ranking(&seg.ranked, &cx.ranked)?));
        }
        segmentation.push((scope.clone(), seg));
    }
    Ok(ReportRankings {
        complexity,
        segmentation,
        finals,
    })
}

fn metric_rank(cat: &CategoryRanking, metric_id: &str, model: usize) -> Option<f64> {
    cat.metric_ids
        .iter()
        .position(|m| m == metric_id)
        .map(|k| cat.metric_ranks[k][model])
}

/// Aligned table: values to 4 decimals with `± std` where known, each
/// metric's rank as a superscript, then category rank columns.
pub fn render_table(bundle: &ReportBundle, rankings: &ReportRankings) -> String {
    let table = &bundle.table;
    // (header, metric_id, category holding the metric's ranks)
    let mut value_cols: Vec<(String, String, Option<&CategoryRanking>)> = Vec::new();
    for (id, title) in [("params_millions", "Params (M)"), ("latency_mean_ms", "Latency (ms)")] {
        if table.column(id).is_some() {
            value_cols.push((title.to_string(), id.to_string(), rankings.complexity.as_ref()));
        }
    }
    let mut rank_cols: Vec<(String, &Ranked)> = Vec::new();
    if let Some(cx) = &rankings.complexity {
        rank_cols.push(("Complexity".to_string(), &cx.ranked));
    }
    for metric in ["dice", "nsd"] {
        for (scope, seg) in &rankings.segmentation {
            let title = format!(
                "{} {}",
                metric.to_uppercase().replace("DICE", "Dice"),
                scope_title(scope)
            );
            value_cols.push((title, format!("{metric}_{scope}"), Some(seg)));
        }
    }
    for (scope, seg) in &rankings.segmentation {
        rank_cols.push((format!("Seg {}", scope_title(scope)), &seg.ranked));
    }
    for (scope, fin) in &rankings.finals {
        rank_cols.push((format!("Final {}", scope_title(scope)), fin));
    }

    let mut header = vec!["Model".to_string()];
    header.extend(value_cols.iter().map(|c| c.0.clone()));
    header.extend(rank_cols.iter().map(|c| c.0.clone()));
    let mut rows = vec![header];
    for (m, model) in table.models().iter().enumerate() {
        let mut row = vec![model.clone()];
        for (_, id, cat) in &value_cols {
            let v = table.value(model, id).expect("column checked");
            let mut cell = format!("{v:.4}");
            if let Some(sd) = bundle.stds.get(&(model.clone(), id.clone())) {
                let _ = write!(cell, " ± {sd:.4}");
            }
            if let Some(r) = cat.and_then(|c| metric_rank(c, id, m)) {
                cell.push_str(&superscript(r));
            }
            row.push(cell);
        }
        for (_, ranked) in &rank_cols {
            row.push(ranked.ranks[m].to_string());
        }
        rows.push(row);
    }
    align(&rows)
}

/// Per-(model, label, case) rows for distribution plots.
pub fn boxplot_csv(records: &[MetricRecord], map: &LabelMap) -> Result<String> {
    let mut s = String::from("model_id,label_id,label_name,group,case_id,dice,nsd\n");
    let na = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    for r in records {
        let target = map
            .target(r.label_id)
            .ok_or_else(|| Error::format(format!("label {} is not in the label map", r.label_id)))?;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.model_id,
            r.label_id,
            target.name,
            target.group,
            r.case_id,
            na(r.dice),
            na(r.nsd)
        );
    }
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct ReportOutput {
    pub text: String,
    pub boxplot_rows: Option<usize>,
}

/// Render `report.txt` (and `boxplot.csv` when per-case metrics exist) from
/// a bundle directory into `cfg.out_dir`.
pub fn run_report(bundle_dir: &Path, cfg: &RunConfig) -> Result<ReportOutput> {
    let bundle = ReportBundle::load(bundle_dir, cfg)?;
    let rankings = bundle_rankings(&bundle.table, &cfg.scopes)?;
    let text = render_table(&bundle, &rankings);
    write_file(&cfg.out_dir.join(REPORT_FILE), &text)?;
    let boxplot_rows = match &bundle.records {
        Some(records) => {
            let map = cfg.label_map()?;
            write_file(&cfg.out_dir.join(BOXPLOT_FILE), &boxplot_csv(records, &map)?)?;
            Some(records.len())
        }
        None => None,
    };
    Ok(ReportOutput { text, boxplot_rows })
}
