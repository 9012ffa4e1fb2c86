use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::MetricRecord;
use crate::error::{Error, Result};
use crate::summary::mean_std;
use crate::volume::{LabelGroup, LabelMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Metric {
    Dice,
    Nsd,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Dice, Metric::Nsd];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Dice => "dice",
            Metric::Nsd => "nsd",
        }
    }

    fn of(self, r: &MetricRecord) -> Option<f64> {
        match self {
            Metric::Dice => r.dice,
            Metric::Nsd => r.nsd,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dice" => Ok(Metric::Dice),
            "nsd" => Ok(Metric::Nsd),
            other => Err(Error::argument(format!("unknown metric {other:?}"))),
        }
    }
}

/// Which labels a summary row covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Scope {
    Label(u16),
    Group(LabelGroup),
    Total,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Label(id) => write!(f, "label_{id}"),
            Scope::Group(g) => f.write_str(g.as_str()),
            Scope::Total => f.write_str("total"),
        }
    }
}

/// How multi-label scopes (btcv, surgical, total) pool values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TotalMode {
    /// Mean over each case's labels first, then mean/std across cases.
    #[default]
    CaseMean,
    /// Mean/std over every defined (case, label) value.
    Pooled,
}

impl FromStr for TotalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "case-mean" => Ok(TotalMode::CaseMean),
            "pooled" => Ok(TotalMode::Pooled),
            other => Err(Error::argument(format!(
                "unknown total mode {other:?} (case-mean|pooled)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub model_id: String,
    pub scope: Scope,
    pub metric: Metric,
    /// `None` when the scope has no defined values.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Number of values the mean was taken over (cases or case-label pairs).
    pub n: usize,
}

fn check_labels(records: &[MetricRecord], map: &LabelMap) -> Result<()> {
    if records.is_empty() {
        return Err(Error::argument("no metric records to aggregate"));
    }
    if let Some(r) = records.iter().find(|r| map.target(r.label_id).is_none()) {
        return Err(Error::format(format!(
            "record {}/{} has label {} outside the label map",
            r.case_id, r.model_id, r.label_id
        )));
    }
    Ok(())
}

fn in_scope(scope: Scope, label: u16, map: &LabelMap) -> bool {
    match scope {
        Scope::Label(id) => id == label,
        Scope::Group(g) => map.group_of(label) == Some(g),
        Scope::Total => true,
    }
}

/// Per-model summaries for every label, both groups and the total, for both
/// metrics. Rows are ordered by model, then scope, then metric.
pub fn aggregate(records: &[MetricRecord], map: &LabelMap, mode: TotalMode) -> Result<Vec<AggregateRow>> {
    check_labels(records, map)?;
    let mut by_model: BTreeMap<&str, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        by_model.entry(&r.model_id).or_default().push(r);
    }

    let mut scopes: Vec<Scope> = map.targets().iter().map(|t| Scope::Label(t.id)).collect();
    scopes.extend([
        Scope::Group(LabelGroup::Btcv),
        Scope::Group(LabelGroup::Surgical),
        Scope::Total,
    ]);

    let mut rows = Vec::new();
    for (model, recs) in by_model {
        for &scope in &scopes {
            for metric in Metric::ALL {
                let values = match (scope, mode) {
                    (Scope::Label(_), _) | (_, TotalMode::Pooled) => recs
                        .iter()
                        .filter(|r| in_scope(scope, r.label_id, map))
                        .filter_map(|r| metric.of(r))
                        .collect::<Vec<_>>(),
                    (_, TotalMode::CaseMean) => case_means(&recs, map, scope, metric).into_values().collect(),
                };
                let summary = mean_std(&values);
                rows.push(AggregateRow {
                    model_id: model.to_string(),
                    scope,
                    metric,
                    mean: summary.map(|s| s.0),
                    std: summary.map(|s| s.1),
                    n: values.len(),
                });
            }
        }
    }
    Ok(rows)
}

/// Mean of the defined values per case within `scope`. Cases with no
/// defined value in the scope are left out.
fn case_means<'a>(recs: &[&'a MetricRecord], map: &LabelMap, scope: Scope, metric: Metric) -> BTreeMap<&'a str, f64> {
    let mut acc: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
    for r in recs {
        if !in_scope(scope, r.label_id, map) {
            continue;
        }
        if let Some(v) = metric.of(r) {
            let e = acc.entry(r.case_id.as_str()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

/// One per-case group mean: the observation unit of the variance analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseGroupMean {
    pub case_id: String,
    pub model_id: String,
    pub group: LabelGroup,
    pub value: f64,
}

/// Per (case, model, group) mean of `metric`, ordered by model, group, case.
pub fn case_group_means(records: &[MetricRecord], map: &LabelMap, metric: Metric) -> Result<Vec<CaseGroupMean>> {
    check_labels(records, map)?;
    let mut by_model: BTreeMap<&str, Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        by_model.entry(&r.model_id).or_default().push(r);
    }
    let mut out = Vec::new();
    for (model, recs) in by_model {
        for group in [LabelGroup::Surgical, LabelGroup::Btcv] {
            for (case, value) in case_means(&recs, map, Scope::Group(group), metric) {
                out.push(CaseGroupMean {
                    case_id: case.to_string(),
                    model_id: model.to_string(),
                    group,
                    value,
                });
            }
        }
    }
    Ok(out)
}
