//! Two-way fixed-effects ANOVA (model × label group) and Tukey HSD.

mod dist;

pub use dist::{beta_inc, f_cdf, f_sf, gauss_legendre, norm_cdf, norm_pdf, studentized_range_cdf};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::CaseGroupMean;
use crate::volume::LabelGroup;

/// Significance threshold for pairwise comparisons.
pub const ALPHA: f64 = 0.05;

/// One value per (case, model, group).
#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub case_id: String,
    pub model_id: String,
    pub group: LabelGroup,
    pub value: f64,
}

impl From<CaseGroupMean> for Observation {
    fn from(m: CaseGroupMean) -> Self {
        Self {
            case_id: m.case_id,
            model_id: m.model_id,
            group: m.group,
            value: m.value,
        }
    }
}

/// `case_id,model_id,group,value`.
pub fn observations_to_csv(obs: &[Observation]) -> String {
    let mut s = String::from("case_id,model_id,group,value\n");
    for o in obs {
        let _ = writeln!(s, "{},{},{},{}", o.case_id, o.model_id, o.group, o.value);
    }
    s
}

pub fn observations_from_reader(reader: impl Read) -> Result<Vec<Observation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::format(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["case_id", "model_id", "group", "value"] {
        return Err(Error::format("observation header must be case_id,model_id,group,value"));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| Error::format(format!("line {line}: {e}")))?;
        let value: f64 = rec[3]
            .parse()
            .map_err(|_| Error::format(format!("line {line}: bad value {:?}", &rec[3])))?;
        if !value.is_finite() {
            return Err(Error::format(format!("line {line}: non-finite value")));
        }
        out.push(Observation {
            case_id: rec[0].to_string(),
            model_id: rec[1].to_string(),
            group: rec[2].parse()?,
            value,
        });
    }
    Ok(out)
}

pub fn read_observations(path: impl AsRef<Path>) -> Result<Vec<Observation>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    observations_from_reader(file)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnovaRow {
    pub ss: f64,
    pub df: f64,
    pub ms: f64,
    /// `None` for the error row.
    pub f: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnovaResult {
    pub model: AnovaRow,
    pub group: AnovaRow,
    pub interaction: AnovaRow,
    pub error: AnovaRow,
    pub ss_total: f64,
    /// Residual sum of squares is zero at rounding level.
    pub degenerate: bool,
    /// Model levels in first-appearance order, with their pooled values.
    pub model_levels: Vec<String>,
    pub replicates: usize,
}

impl AnovaResult {
    pub fn rows(&self) -> [(&'static str, &AnovaRow); 4] {
        [
            ("model", &self.model),
            ("group", &self.group),
            ("model:group", &self.interaction),
            ("residual", &self.error),
        ]
    }
}

struct Design<'a> {
    models: Vec<&'a str>,
    groups: Vec<LabelGroup>,
    /// cells[a][b]: values of model a in group b
    cells: Vec<Vec<Vec<f64>>>,
    n: usize,
}

fn balanced_design(obs: &[Observation]) -> Result<Design<'_>> {
    let mut models: Vec<&str> = Vec::new();
    let mut groups: Vec<LabelGroup> = Vec::new();
    let mut map: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for o in obs {
        if !o.value.is_finite() {
            return Err(Error::argument(format!(
                "non-finite observation for {}/{}",
                o.case_id, o.model_id
            )));
        }
        let a = match models.iter().position(|m| *m == o.model_id) {
            Some(i) => i,
            None => {
                models.push(&o.model_id);
                models.len() - 1
            }
        };
        let b = match groups.iter().position(|g| *g == o.group) {
            Some(i) => i,
            None => {
                groups.push(o.group);
                groups.len() - 1
            }
        };
        map.entry((a, b)).or_default().push(o.value);
    }
    if models.len() < 2 || groups.len() < 2 {
        return Err(Error::argument(format!(
            "two-way analysis needs >= 2 models and >= 2 groups, got {} and {}",
            models.len(),
            groups.len()
        )));
    }
    let mut cells = vec![vec![Vec::new(); groups.len()]; models.len()];
    for ((a, b), v) in map {
        cells[a][b] = v;
    }
    let n = cells[0][0].len();
    for (a, row) in cells.iter().enumerate() {
        for (b, cell) in row.iter().enumerate() {
            if cell.len() != n {
                return Err(Error::argument(format!(
                    "unbalanced design: model {} / group {} has {} values, expected {n}",
                    models[a],
                    groups[b],
                    cell.len()
                )));
            }
        }
    }
    if n < 2 {
        return Err(Error::argument("two-way analysis needs >= 2 replicates per cell"));
    }
    Ok(Design {
        models,
        groups,
        cells,
        n,
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Balanced two-way ANOVA with interaction.
///
/// When the residual mean square is numerically zero, a source with zero
/// sum of squares gets F = 0, p = 1, and any other source F = +inf, p = 0.
pub fn two_way_anova(obs: &[Observation]) -> Result<AnovaResult> {
    let d = balanced_design(obs)?;
    let (a, b, n) = (d.models.len(), d.groups.len(), d.n);
    let cell_mean: Vec<Vec<f64>> = d.cells.iter().map(|r| r.iter().map(|c| mean(c)).collect()).collect();
    let grand = cell_mean.iter().flatten().sum::<f64>() / (a * b) as f64;
    let a_mean: Vec<f64> = cell_mean.iter().map(|r| mean(r)).collect();
    let b_mean: Vec<f64> = (0..b)
        .map(|j| cell_mean.iter().map(|r| r[j]).sum::<f64>() / a as f64)
        .collect();

    let sq = |x: f64| x * x;
    let ss_a = (b * n) as f64 * a_mean.iter().map(|m| sq(m - grand)).sum::<f64>();
    let ss_b = (a * n) as f64 * b_mean.iter().map(|m| sq(m - grand)).sum::<f64>();
    let mut ss_ab = 0.0;
    let mut ss_e = 0.0;
    let mut ss_t = 0.0;
    let mut scale = 0.0f64;
    for i in 0..a {
        for j in 0..b {
            ss_ab += sq(cell_mean[i][j] - a_mean[i] - b_mean[j] + grand);
            for &y in &d.cells[i][j] {
                ss_e += sq(y - cell_mean[i][j]);
                ss_t += sq(y - grand);
                scale = scale.max(y.abs());
            }
        }
    }
    ss_ab *= n as f64;

    let df_a = (a - 1) as f64;
    let df_b = (b - 1) as f64;
    let df_ab = df_a * df_b;
    let df_e = (a * b * (n - 1)) as f64;
    let ms_e = ss_e / df_e;
    // sums of squares at rounding level relative to the data are zero
    let zero = 1e-24 * sq(scale) * (a * b * n) as f64;
    let degenerate = ss_e <= zero;

    let source = |ss: f64, df: f64| -> Result<AnovaRow> {
        let ms = ss / df;
        let (f, p) = if degenerate {
            if ss <= zero {
                (0.0, 1.0)
            } else {
                (f64::INFINITY, 0.0)
            }
        } else {
            let f = ms / ms_e;
            (f, f_sf(f, df, df_e)?)
        };
        Ok(AnovaRow {
            ss,
            df,
            ms,
            f: Some(f),
            p: Some(p),
        })
    };

    Ok(AnovaResult {
        model: source(ss_a, df_a)?,
        group: source(ss_b, df_b)?,
        interaction: source(ss_ab, df_ab)?,
        error: AnovaRow {
            ss: ss_e,
            df: df_e,
            ms: ms_e,
            f: None,
            p: None,
        },
        ss_total: ss_t,
        degenerate,
        model_levels: d.models.iter().map(|m| m.to_string()).collect(),
        replicates: n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TukeyPair {
    pub a: String,
    pub b: String,
    /// mean(a) - mean(b)
    pub diff: f64,
    pub se: f64,
    pub q: f64,
    pub p: f64,
    pub significant: bool,
}

/// All pairwise Tukey HSD comparisons between equally sized groups.
pub fn tukey_hsd(groups: &[(String, Vec<f64>)], mse: f64, df_error: f64) -> Result<Vec<TukeyPair>> {
    if groups.len() < 2 {
        return Err(Error::argument("Tukey HSD needs at least two groups"));
    }
    if !(mse.is_finite() && mse > 0.0) {
        return Err(Error::argument(format!(
            "Tukey HSD needs a positive error mean square, got {mse}"
        )));
    }
    if df_error.is_nan() || df_error <= 0.0 {
        return Err(Error::argument(format!(
            "error degrees of freedom must be positive, got {df_error}"
        )));
    }
    let n = groups[0].1.len();
    if n == 0 || groups.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::argument("Tukey HSD needs equal, nonzero group sizes"));
    }
    let k = groups.len() as u32;
    let means: Vec<f64> = groups.iter().map(|(_, v)| mean(v)).collect();
    let se = (mse / n as f64).sqrt();
    let mut out = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let diff = means[i] - means[j];
            let q = diff.abs() / se;
            let p = (1.0 - studentized_range_cdf(q, k, df_error)?).clamp(0.0, 1.0);
            out.push(TukeyPair {
                a: groups[i].0.clone(),
                b: groups[j].0.clone(),
                diff,
                se,
                q,
                p,
                significant: p < ALPHA,
            });
        }
    }
    Ok(out)
}

/// ANOVA, then Tukey HSD between models pooled over both groups, using the
/// ANOVA residual mean square. Tukey is skipped (empty) for a degenerate
/// design with zero residual.
pub fn analyze(obs: &[Observation]) -> Result<(AnovaResult, Vec<TukeyPair>)> {
    let anova = two_way_anova(obs)?;
    if anova.degenerate {
        log::warn!("residual mean square is zero; skipping Tukey HSD");
        return Ok((anova, Vec::new()));
    }
    let groups: Vec<(String, Vec<f64>)> = anova
        .model_levels
        .iter()
        .map(|m| {
            let v = obs.iter().filter(|o| &o.model_id == m).map(|o| o.value).collect();
            (m.clone(), v)
        })
        .collect();
    let pairs = tukey_hsd(&groups, anova.error.ms, anova.error.df)?;
    Ok((anova, pairs))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `metric,source,ss,df,ms,f,p`; `f` and `p` are empty for the residual.
pub fn anova_to_csv(results: &[(&str, &AnovaResult)]) -> String {
    let mut s = String::from("metric,source,ss,df,ms,f,p\n");
    for (metric, r) in results {
        for (name, row) in r.rows() {
            let _ = writeln!(
                s,
                "{metric},{name},{},{},{},{},{}",
                row.ss,
                row.df,
                row.ms,
                fmt_opt(row.f),
                fmt_opt(row.p)
            );
        }
    }
    s
}

/// `metric,model_a,model_b,diff,se,q,p,significant`.
pub fn tukey_to_csv(results: &[(&str, &[TukeyPair])]) -> String {
    let mut s = String::from("metric,model_a,model_b,diff,se,q,p,significant\n");
    for (metric, pairs) in results {
        for t in *pairs {
            let _ = writeln!(
                s,
                "{metric},{},{},{},{},{},{},{}",
                t.a, t.b, t.diff, t.se, t.q, t.p, t.significant
            );
        }
    }
    s
}
