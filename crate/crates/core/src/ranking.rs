//! Algorithm ranking: aggregate-then-rank with category and final rankings,
//! plus the case-based rank-then-aggregate alternative.
//!
//! Per-metric ranks use average ranks for ties. A category score is the mean
//! of a model's per-metric ranks; the category ranking is the dense rank of
//! those scores. The final score averages the raw segmentation and
//! complexity scores (not their dense ranks) and is dense-ranked again.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Scores closer than this (relative, floored at 1) share a dense rank.
pub const DENSE_RANK_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    HigherBetter,
    LowerBetter,
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "higher" | "higher-better" | "higher_better" | "max" => Ok(Direction::HigherBetter),
            "lower" | "lower-better" | "lower_better" | "min" => Ok(Direction::LowerBetter),
            other => Err(Error::argument(format!("unknown direction {other:?} (higher|lower)"))),
        }
    }
}

/// Metric-id to direction lookup: explicit entries first, then the built-in
/// prefix rules (`dice*`, `nsd*` higher; `params*`, `latency*` lower).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Directions {
    explicit: BTreeMap<String, Direction>,
}

impl Directions {
    pub fn with(mut self, metric_id: impl Into<String>, dir: Direction) -> Self {
        self.explicit.insert(metric_id.into(), dir);
        self
    }

    pub fn insert(&mut self, metric_id: impl Into<String>, dir: Direction) {
        self.explicit.insert(metric_id.into(), dir);
    }

    pub fn resolve(&self, metric_id: &str) -> Result<Direction> {
        if let Some(d) = self.explicit.get(metric_id) {
            return Ok(*d);
        }
        let id = metric_id.to_ascii_lowercase();
        if id.starts_with("dice") || id.starts_with("nsd") {
            Ok(Direction::HigherBetter)
        } else if id.starts_with("params") || id.starts_with("latency") {
            Ok(Direction::LowerBetter)
        } else {
            Err(Error::argument(format!(
                "no ranking direction known for metric {metric_id:?}"
            )))
        }
    }
}

/// Model × metric values, complete and finite.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    models: Vec<String>,
    metrics: Vec<String>,
    directions: Vec<Direction>,
    /// Row-major: `values[model * metrics.len() + metric]`.
    values: Vec<f64>,
}

impl MetricTable {
    /// Models and metrics keep first-appearance order.
    pub fn from_rows(rows: &[(String, String, f64)], directions: &Directions) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::argument("metric table is empty"));
        }
        let mut models: Vec<String> = Vec::new();
        let mut metrics: Vec<String> = Vec::new();
        let mut cells: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (model, metric, value) in rows {
            if !value.is_finite() {
                return Err(Error::argument(format!("{model}/{metric}: non-finite value {value}")));
            }
            let mi = position_or_push(&mut models, model);
            let ki = position_or_push(&mut metrics, metric);
            if cells.insert((mi, ki), *value).is_some() {
                return Err(Error::argument(format!(
                    "duplicate metric table entry {model}/{metric}"
                )));
            }
        }
        let mut values = Vec::with_capacity(models.len() * metrics.len());
        for (mi, model) in models.iter().enumerate() {
            for (ki, metric) in metrics.iter().enumerate() {
                let v = cells
                    .get(&(mi, ki))
                    .ok_or_else(|| Error::argument(format!("metric table has no {metric} for model {model}")))?;
                values.push(*v);
            }
        }
        let directions = metrics.iter().map(|m| directions.resolve(m)).collect::<Result<_>>()?;
        Ok(Self {
            models,
            metrics,
            directions,
            values,
        })
    }

    /// CSV with header `model_id,metric_id,value`.
    pub fn from_reader(reader: impl Read, directions: &Directions) -> Result<Self> {
        Self::from_rows(&metric_rows_from_reader(reader)?, directions)
    }

    pub fn from_file(path: impl AsRef<Path>, directions: &Directions) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file, directions)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("model_id,metric_id,value\n");
        for (mi, model) in self.models.iter().enumerate() {
            for (ki, metric) in self.metrics.iter().enumerate() {
                let _ = writeln!(s, "{model},{metric},{}", self.values[mi * self.metrics.len() + ki]);
            }
        }
        s
    }

    pub fn models(&self) -> &[String] {
        &self.models
    }

    pub fn metrics(&self) -> &[String] {
        &self.metrics
    }

    pub fn direction(&self, metric_id: &str) -> Option<Direction> {
        self.metric_index(metric_id).map(|k| self.directions[k])
    }

    pub fn value(&self, model: &str, metric_id: &str) -> Option<f64> {
        let mi = self.models.iter().position(|m| m == model)?;
        let ki = self.metric_index(metric_id)?;
        Some(self.values[mi * self.metrics.len() + ki])
    }

    fn metric_index(&self, metric_id: &str) -> Option<usize> {
        self.metrics.iter().position(|m| m == metric_id)
    }

    /// One metric's values, in model order.
    pub fn column(&self, metric_id: &str) -> Option<Vec<f64>> {
        let k = self.metric_index(metric_id)?;
        Some(
            (0..self.models.len())
                .map(|m| self.values[m * self.metrics.len() + k])
                .collect(),
        )
    }
}

/// Raw `(model_id, metric_id, value)` rows of a metric table CSV.
pub fn metric_rows_from_reader(reader: impl Read) -> Result<Vec<(String, String, f64)>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::format(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["model_id", "metric_id", "value"] {
        return Err(Error::format("metric table header must be model_id,metric_id,value"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(format!("line {}: {e}", i + 2)))?;
        let value: f64 = rec[2]
            .parse()
            .map_err(|_| Error::format(format!("line {}: bad value {:?}", i + 2, &rec[2])))?;
        rows.push((rec[0].to_string(), rec[1].to_string(), value));
    }
    Ok(rows)
}

pub fn read_metric_rows(path: impl AsRef<Path>) -> Result<Vec<(String, String, f64)>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    metric_rows_from_reader(file).map_err(|e| match e {
        Error::Format(m) => Error::format(format!("{}: {m}", path.display())),
        other => other,
    })
}

fn position_or_push(list: &mut Vec<String>, item: &str) -> usize {
    match list.iter().position(|x| x == item) {
        Some(i) => i,
        None => {
            list.push(item.to_string());
            list.len() - 1
        }
    }
}

/// Rank 1 is best; tied values share the mean of the positions they span.
pub fn rank_values(values: &[f64], dir: Direction) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::argument("nothing to rank"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(Error::argument(format!("cannot rank non-finite value {v}")));
    }
    let key = |i: usize| match dir {
        Direction::HigherBetter => -values[i],
        Direction::LowerBetter => values[i],
    };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key(a).total_cmp(&key(b)));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = avg;
        }
        start = end;
    }
    Ok(ranks)
}

/// Lower score is better. Distinct scores map to 1, 2, 3, ... with no gaps.
pub fn dense_rank(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0; scores.len()];
    let mut rank = 0;
    let mut anchor = f64::NAN;
    for &i in &order {
        let s = scores[i];
        if rank == 0 || (s - anchor).abs() > DENSE_RANK_TOLERANCE * anchor.abs().max(1.0) {
            rank += 1;
            anchor = s;
        }
        ranks[i] = rank;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategorySpec {
    pub name: String,
    pub metric_ids: Vec<String>,
}

impl CategorySpec {
    pub fn new(name: impl Into<String>, metric_ids: Vec<String>) -> Result<Self> {
        let name = name.into();
        if metric_ids.is_empty() {
            return Err(Error::argument(format!("category {name} has no metrics")));
        }
        Ok(Self { name, metric_ids })
    }

    /// Dice and NSD for one label scope, e.g. `btcv` -> `dice_btcv`, `nsd_btcv`.
    pub fn segmentation(scope: &str) -> Self {
        Self {
            name: format!("segmentation_{scope}"),
            metric_ids: vec![format!("dice_{scope}"), format!("nsd_{scope}")],
        }
    }

    pub fn complexity() -> Self {
        Self {
            name: "complexity".into(),
            metric_ids: vec!["params_millions".into(), "latency_mean_ms".into()],
        }
    }
}

/// Scores and dense ranks per model, in the table's model order.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranked {
    pub models: Vec<String>,
    pub scores: Vec<f64>,
    pub ranks: Vec<usize>,
}

impl Ranked {
    fn from_scores(models: Vec<String>, scores: Vec<f64>) -> Self {
        let ranks = dense_rank(&scores);
        Self { models, scores, ranks }
    }

    pub fn rank_of(&self, model: &str) -> Option<usize> {
        self.models.iter().position(|m| m == model).map(|i| self.ranks[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryRanking {
    pub name: String,
    pub metric_ids: Vec<String>,
    /// `metric_ranks[k][m]`: rank of model `m` on metric `k`.
    pub metric_ranks: Vec<Vec<f64>>,
    pub ranked: Ranked,
}

pub fn category_ranking(table: &MetricTable, spec: &CategorySpec) -> Result<CategoryRanking> {
    let n = table.models.len();
    let mut metric_ranks = Vec::with_capacity(spec.metric_ids.len());
    for id in &spec.metric_ids {
        let col = table
            .column(id)
            .ok_or_else(|| Error::argument(format!("category {}: metric table has no {id}", spec.name)))?;
        let dir = table.direction(id).expect("column exists");
        metric_ranks.push(rank_values(&col, dir)?);
    }
    let k = metric_ranks.len() as f64;
    let scores = (0..n)
        .map(|m| metric_ranks.iter().map(|r| r[m]).sum::<f64>() / k)
        .collect();
    Ok(CategoryRanking {
        name: spec.name.clone(),
        metric_ids: spec.metric_ids.clone(),
        metric_ranks,
        ranked: Ranked::from_scores(table.models.clone(), scores),
    })
}

/// Mean of the two raw category scores, dense-ranked. Output follows `a`'s
/// model order.
pub fn final_ranking(a: &Ranked, b: &Ranked) -> Result<Ranked> {
    let set_a: BTreeSet<&String> = a.models.iter().collect();
    let set_b: BTreeSet<&String> = b.models.iter().collect();
    if set_a != set_b || set_a.len() != a.models.len() || set_b.len() != b.models.len() {
        return Err(Error::argument(
            "final ranking needs the same models in both categories",
        ));
    }
    let scores = a
        .models
        .iter()
        .zip(&a.scores)
        .map(|(m, sa)| {
            let j = b.models.iter().position(|x| x == m).expect("same set");
            (sa + b.scores[j]) / 2.0
        })
        .collect();
    Ok(Ranked::from_scores(a.models.clone(), scores))
}

/// One per-case observation for the case-based scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseValue {
    pub case_id: String,
    pub model_id: String,
    pub metric_id: String,
    pub value: f64,
}

/// Rank models per (case, metric), then average each model's ranks.
/// Models keep first-appearance order.
pub fn rank_then_aggregate(values: &[CaseValue], directions: &Directions) -> Result<Ranked> {
    if values.is_empty() {
        return Err(Error::argument("no per-case values to rank"));
    }
    let mut models: Vec<String> = Vec::new();
    let mut groups: BTreeMap<(&str, &str), BTreeMap<usize, f64>> = BTreeMap::new();
    for v in values {
        let m = position_or_push(&mut models, &v.model_id);
        let cell = groups.entry((&v.case_id, &v.metric_id)).or_default();
        if cell.insert(m, v.value).is_some() {
            return Err(Error::argument(format!(
                "duplicate value for {}/{}/{}",
                v.case_id, v.model_id, v.metric_id
            )));
        }
    }
    let mut sums = vec![0.0; models.len()];
    for ((case, metric), cell) in &groups {
        if cell.len() != models.len() {
            let missing: Vec<&str> = (0..models.len())
                .filter(|m| !cell.contains_key(m))
                .map(|m| models[m].as_str())
                .collect();
            return Err(Error::argument(format!(
                "case {case}, metric {metric}: no value for {}",
                missing.join(", ")
            )));
        }
        let vals: Vec<f64> = cell.values().copied().collect();
        let ranks = rank_values(&vals, directions.resolve(metric)?)?;
        for (m, r) in cell.keys().zip(ranks) {
            sums[*m] += r;
        }
    }
    let n = groups.len() as f64;
    let scores = sums.into_iter().map(|s| s / n).collect();
    Ok(Ranked::from_scores(models, scores))
}

/// The full ranking of a table: complexity, then segmentation and final
/// rankings for each label scope.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingResult {
    pub models: Vec<String>,
    pub complexity: CategoryRanking,
    pub segmentation: Vec<(String, CategoryRanking)>,
    pub finals: Vec<(String, Ranked)>,
}

pub const DEFAULT_SCOPES: [&str; 3] = ["btcv", "surgical", "total"];

pub fn rank_table(table: &MetricTable, scopes: &[&str]) -> Result<RankingResult> {
    let complexity = category_ranking(table, &CategorySpec::complexity())?;
    let mut segmentation = Vec::new();
    let mut finals = Vec::new();
    for scope in scopes {
        let seg = category_ranking(table, &CategorySpec::segmentation(scope))?;
        finals.push((scope.to_string(), final_ranking(&seg.ranked, &complexity.ranked)?));
        segmentation.push((scope.to_string(), seg));
    }
    Ok(RankingResult {
        models: table.models.clone(),
        complexity,
        segmentation,
        finals,
    })
}

impl RankingResult {
    fn categories(&self) -> Vec<(String, &Ranked)> {
        let mut out = vec![("complexity".to_string(), &self.complexity.ranked)];
        for (scope, seg) in &self.segmentation {
            out.push((format!("segmentation_{scope}"), &seg.ranked));
        }
        for (scope, fin) in &self.finals {
            out.push((format!("final_{scope}"), fin));
        }
        out
    }

    /// `model_id,metric_id,rank` for every metric that fed a category.
    pub fn metric_ranks_csv(&self) -> String {
        let mut s = String::from("model_id,metric_id,rank\n");
        let mut cats = vec![&self.complexity];
        cats.extend(self.segmentation.iter().map(|(_, c)| c));
        for (m, model) in self.models.iter().enumerate() {
            for cat in &cats {
                for (id, ranks) in cat.metric_ids.iter().zip(&cat.metric_ranks) {
                    let _ = writeln!(s, "{model},{id},{}", ranks[m]);
                }
            }
        }
        s
    }

    /// One row per model: `<category>_score` and `<category>_rank` columns.
    pub fn to_csv(&self) -> String {
        let cats = self.categories();
        let mut s = String::from("model_id");
        for (name, _) in &cats {
            let _ = write!(s, ",{name}_score,{name}_rank");
        }
        s.push('\n');
        for (m, model) in self.models.iter().enumerate() {
            s.push_str(model);
            for (_, r) in &cats {
                let _ = write!(s, ",{},{}", r.scores[m], r.ranks[m]);
            }
            s.push('\n');
        }
        s
    }

    /// Aligned table of dense ranks.
    pub fn to_text(&self) -> String {
        let cats = self.categories();
        let mut header = vec!["model".to_string()];
        header.extend(cats.iter().map(|(n, _)| n.clone()));
        let mut rows = vec![header];
        for (m, model) in self.models.iter().enumerate() {
            let mut row = vec![model.clone()];
            row.extend(cats.iter().map(|(_, r)| r.ranks[m].to_string()));
            rows.push(row);
        }
        align(&rows)
    }
}

pub(crate) fn align(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                if c == 0 {
                    format!("{cell:<w$}", w = widths[c])
                } else {
                    format!("{cell:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(rows: &[(&str, &str, f64)]) -> MetricTable {
        let rows: Vec<_> = rows
            .iter()
            .map(|(a, b, v)| (a.to_string(), b.to_string(), *v))
            .collect();
        MetricTable::from_rows(&rows, &Directions::default()).unwrap()
    }

    #[test]
    fn rank_values_hand_cases() {
        assert_eq!(
            rank_values(&[10.0, 30.0, 20.0], Direction::LowerBetter).unwrap(),
            [1.0, 3.0, 2.0]
        );
        assert_eq!(
            rank_values(&[5.0, 5.0, 7.0], Direction::LowerBetter).unwrap(),
            [1.5, 1.5, 3.0]
        );
        assert_eq!(
            rank_values(&[95.44, 95.18], Direction::HigherBetter).unwrap(),
            [1.0, 2.0]
        );
        assert_eq!(rank_values(&[1.0; 4], Direction::HigherBetter).unwrap(), [2.5; 4]);
        assert!(rank_values(&[1.0, f64::NAN], Direction::HigherBetter).is_err());
        assert!(rank_values(&[], Direction::HigherBetter).is_err());
    }

    #[test]
    fn dense_rank_hand_cases() {
        assert_eq!(dense_rank(&[2.5, 2.5, 2.5, 5.5, 5.5, 3.5, 6.0]), [1, 1, 1, 3, 3, 2, 4]);
        assert_eq!(dense_rank(&[1.0]), [1]);
        assert_eq!(dense_rank(&[3.0, 1.0, 1.0]), [2, 1, 1]);
        // float noise from averaging does not split a tie
        assert_eq!(dense_rank(&[(0.1 + 0.2) * 10.0, 3.0]), [1, 1]);
    }

    #[test]
    fn direction_registry() {
        let d = Directions::default().with("hd95", Direction::LowerBetter);
        assert_eq!(d.resolve("dice_total").unwrap(), Direction::HigherBetter);
        assert_eq!(d.resolve("nsd_btcv").unwrap(), Direction::HigherBetter);
        assert_eq!(d.resolve("latency_mean_ms").unwrap(), Direction::LowerBetter);
        assert_eq!(d.resolve("hd95").unwrap(), Direction::LowerBetter);
        assert!(d.resolve("mystery").is_err());
        assert_eq!("lower".parse::<Direction>().unwrap(), Direction::LowerBetter);
    }

    #[test]
    fn table_validation() {
        let r = |m: &str, k: &str, v: f64| (m.to_string(), k.to_string(), v);
        let d = Directions::default();
        assert!(MetricTable::from_rows(&[r("a", "dice_x", 1.0), r("b", "nsd_x", 1.0)], &d).is_err());
        assert!(MetricTable::from_rows(&[r("a", "dice_x", 1.0), r("a", "dice_x", 2.0)], &d).is_err());
        assert!(MetricTable::from_rows(&[r("a", "dice_x", f64::INFINITY)], &d).is_err());
        assert!(MetricTable::from_rows(&[], &d).is_err());
    }

    #[test]
    fn table_csv_round_trip() {
        let t = table(&[
            ("a", "dice_x", 0.5),
            ("b", "dice_x", 0.25),
            ("a", "nsd_x", 1.0),
            ("b", "nsd_x", 0.75),
        ]);
        let back = MetricTable::from_reader(t.to_csv().as_bytes(), &Directions::default()).unwrap();
        assert_eq!(back, t);
        assert_eq!(t.value("b", "nsd_x"), Some(0.75));
        assert!(MetricTable::from_reader("model,metric,value\n".as_bytes(), &Directions::default()).is_err());
    }

    #[test]
    fn single_metric_category_densifies_ranks() {
        let t = table(&[("a", "dice_x", 0.9), ("b", "dice_x", 0.7), ("c", "dice_x", 0.9)]);
        let spec = CategorySpec::new("seg", vec!["dice_x".into()]).unwrap();
        let c = category_ranking(&t, &spec).unwrap();
        assert_eq!(c.metric_ranks[0], [1.5, 3.0, 1.5]);
        assert_eq!(c.ranked.ranks, [1, 2, 1]);
        assert!(CategorySpec::new("empty", vec![]).is_err());
        let missing = CategorySpec::new("x", vec!["nsd_x".into()]).unwrap();
        assert!(category_ranking(&t, &missing).is_err());
    }

    #[test]
    fn final_ranking_uses_raw_scores() {
        let seg = Ranked::from_scores(
            ["a", "b", "c", "d", "e", "f", "g"].map(String::from).to_vec(),
            vec![2.0, 1.0, 3.0, 5.0, 4.0, 7.0, 6.0],
        );
        let comp = Ranked::from_scores(seg.models.clone(), vec![2.5, 2.5, 2.5, 5.5, 5.5, 3.5, 6.0]);
        let fin = final_ranking(&seg, &comp).unwrap();
        assert_eq!(fin.scores, [2.25, 1.75, 2.75, 5.25, 4.75, 5.25, 6.0]);
        assert_eq!(fin.ranks, [2, 1, 3, 5, 4, 5, 6]);
        assert_eq!(final_ranking(&comp, &seg).unwrap(), fin);
        // densified inputs would have split d and f
        let dense = final_ranking(
            &Ranked::from_scores(seg.models.clone(), seg.ranks.iter().map(|&r| r as f64).collect()),
            &Ranked::from_scores(seg.models.clone(), comp.ranks.iter().map(|&r| r as f64).collect()),
        )
        .unwrap();
        assert_ne!(dense.ranks[3], dense.ranks[5]);
    }

    #[test]
    fn final_ranking_aligns_and_checks_models() {
        let a = Ranked::from_scores(vec!["x".into(), "y".into()], vec![1.0, 2.0]);
        let b = Ranked::from_scores(vec!["y".into(), "x".into()], vec![1.0, 4.0]);
        assert_eq!(final_ranking(&a, &b).unwrap().scores, [2.5, 1.5]);
        let c = Ranked::from_scores(vec!["x".into(), "z".into()], vec![1.0, 2.0]);
        assert!(final_ranking(&a, &c).is_err());
    }

    fn cv(case: &str, model: &str, metric: &str, value: f64) -> CaseValue {
        CaseValue {
            case_id: case.into(),
            model_id: model.into(),
            metric_id: metric.into(),
            value,
        }
    }

    #[test]
    fn rank_then_aggregate_hand_cases() {
        let d = Directions::default();
        // A wins case 1, B wins case 2 -> tie
        let v = [
            cv("1", "A", "dice", 0.9),
            cv("1", "B", "dice", 0.8),
            cv("2", "A", "dice", 0.7),
            cv("2", "B", "dice", 0.8),
        ];
        let r = rank_then_aggregate(&v, &d).unwrap();
        assert_eq!(r.scores, [1.5, 1.5]);
        assert_eq!(r.ranks, [1, 1]);

        // A narrowly wins two cases, B wins one by far. Per case: A ranks
        // (1, 1, 2), B (2, 2, 1), so A wins. Means: A 0.6, B 0.6667, so B wins.
        let v = [
            cv("1", "A", "dice", 0.80),
            cv("1", "B", "dice", 0.79),
            cv("2", "A", "dice", 0.80),
            cv("2", "B", "dice", 0.79),
            cv("3", "A", "dice", 0.20),
            cv("3", "B", "dice", 0.42),
        ];
        let r = rank_then_aggregate(&v, &d).unwrap();
        assert_eq!(r.ranks, [1, 2]);
        let t = table(&[("A", "dice", 0.6), ("B", "dice", (0.79 + 0.79 + 0.42) / 3.0)]);
        let c = category_ranking(&t, &CategorySpec::new("s", vec!["dice".into()]).unwrap()).unwrap();
        assert_eq!(c.ranked.ranks, [2, 1]);

        assert!(rank_then_aggregate(&v[..5], &d).is_err());
    }

    #[test]
    fn single_case_schemes_coincide() {
        let v = [
            cv("1", "A", "dice", 0.9),
            cv("1", "B", "dice", 0.8),
            cv("1", "C", "dice", 0.95),
            cv("1", "A", "nsd", 0.7),
            cv("1", "B", "nsd", 0.99),
            cv("1", "C", "nsd", 0.8),
        ];
        let r = rank_then_aggregate(&v, &Directions::default()).unwrap();
        let t = table(&[
            ("A", "dice", 0.9),
            ("B", "dice", 0.8),
            ("C", "dice", 0.95),
            ("A", "nsd", 0.7),
            ("B", "nsd", 0.99),
            ("C", "nsd", 0.8),
        ]);
        let c = category_ranking(&t, &CategorySpec::new("s", vec!["dice".into(), "nsd".into()]).unwrap()).unwrap();
        assert_eq!(r, c.ranked);
    }

    #[test]
    fn text_table_is_aligned() {
        let txt = align(&[vec!["model".into(), "r".into()], vec!["STUNet".into(), "1".into()]]);
        assert_eq!(txt, "model   r\nSTUNet  1\n");
    }

    proptest! {
        #[test]
        fn rank_invariant_under_monotone_maps(v in proptest::collection::vec(0u8..12, 1..12), a in 0.5f64..4.0, b in -5.0f64..5.0) {
            let x: Vec<f64> = v.iter().map(|&i| f64::from(i)).collect();
            let base = rank_values(&x, Direction::HigherBetter).unwrap();
            let affine: Vec<f64> = x.iter().map(|x| a * x + b).collect();
            prop_assert_eq!(&rank_values(&affine, Direction::HigherBetter).unwrap(), &base);
            let cubed: Vec<f64> = x.iter().map(|x| x * x * x).collect();
            prop_assert_eq!(&rank_values(&cubed, Direction::HigherBetter).unwrap(), &base);
            let neg: Vec<f64> = x.iter().map(|x| -x).collect();
            prop_assert_eq!(&rank_values(&neg, Direction::LowerBetter).unwrap(), &base);
            // ranks always sum to n(n+1)/2
            let n = x.len() as f64;
            prop_assert!((base.iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }

        #[test]
        fn dense_rank_is_gapless_and_monotone(v in proptest::collection::vec(0u8..10, 1..15)) {
            let s: Vec<f64> = v.iter().map(|&i| f64::from(i) / 2.0).collect();
            let r = dense_rank(&s);
            let distinct: BTreeSet<u8> = v.iter().copied().collect();
            let used: BTreeSet<usize> = r.iter().copied().collect();
            prop_assert_eq!(used, (1..=distinct.len()).collect::<BTreeSet<_>>());
            for i in 0..s.len() {
                for j in 0..s.len() {
                    if s[i] < s[j] { prop_assert!(r[i] < r[j]); }
                    if s[i] == s[j] { prop_assert_eq!(r[i], r[j]); }
                }
            }
        }

        #[test]
        fn final_ranking_symmetric(a in proptest::collection::vec(1.0f64..8.0, 2..8), seed in any::<u64>()) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand::rngs::StdRng::seed_from_u64(seed);
            let models: Vec<String> = (0..a.len()).map(|i| format!("m{i}")).collect();
            let b: Vec<f64> = a.iter().map(|_| rng.gen_range(1.0..8.0)).collect();
            let ra = Ranked::from_scores(models.clone(), a);
            let rb = Ranked::from_scores(models, b);
            prop_assert_eq!(final_ranking(&ra, &rb).unwrap(), final_ranking(&rb, &ra).unwrap());
        }
    }
}
