use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use segbench::complexity::{latency_stats, manifest_text, time_command, DEFAULT_WARMUP};
use segbench::ranking::Direction;
use segbench::report::{self, parse_score_kind, RunConfig};
use segbench::{Error, Result};

/// Evaluate, rank and compare volumetric segmentation models.
#[derive(Debug, Parser)]
#[command(name = "segbench", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fuse sliding-window scores into label volumes.
    Fuse(FuseArgs),
    /// Per-label Dice and NSD against ground truth, plus group aggregates.
    Evaluate(EvaluateArgs),
    /// Rank models from metric tables and model manifests.
    Rank(RankArgs),
    /// Two-way ANOVA and Tukey HSD on per-case observations.
    Stats(StatsArgs),
    /// Model complexity: ingest manifests or time an inference command.
    #[command(subcommand)]
    Complexity(ComplexityCommand),
    /// Render the report table and boxplot data from a results directory.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct CaseArgs {
    /// Directory of ground-truth `<case>.nii[.gz]` volumes.
    #[arg(long)]
    truth_dir: Option<PathBuf>,
    /// Case inventory CSV; runs are limited to its test split.
    #[arg(long)]
    inventory: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FuseArgs {
    #[command(flatten)]
    cases: CaseArgs,
    /// MODEL=DIR with `<case>.vsbp` score files (repeatable).
    #[arg(long = "scores", value_parser = parse_pair)]
    scores: Vec<(String, PathBuf)>,
    #[arg(long)]
    patch_size: Option<usize>,
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    sigma_coeff: Option<f64>,
    /// `probabilities` or `logits`.
    #[arg(long)]
    score_kind: Option<String>,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    cases: CaseArgs,
    /// MODEL=DIR with `<case>.nii[.gz]` predictions (repeatable).
    #[arg(long = "pred", value_parser = parse_pair)]
    predictions: Vec<(String, PathBuf)>,
    /// Label map TOML (default: bundled thoracic map).
    #[arg(long)]
    label_map: Option<PathBuf>,
    /// NSD tolerance in mm.
    #[arg(long)]
    tau: Option<f64>,
    /// `case-mean` or `pooled`.
    #[arg(long)]
    total_mode: Option<String>,
    /// Apply the label map's source merges to inputs before scoring.
    #[arg(long)]
    remap_sources: bool,
    /// Model manifest whose complexity rows join the metric table (repeatable).
    #[arg(long = "manifest")]
    manifests: Vec<PathBuf>,
    /// Skip ANOVA/Tukey on the per-case observations.
    #[arg(long)]
    no_stats: bool,
}

#[derive(Debug, Args)]
struct RankArgs {
    /// Metric table CSVs (`model_id,metric_id,value`).
    #[arg(required = true)]
    tables: Vec<PathBuf>,
    /// Model manifest adding params and latency (repeatable).
    #[arg(long = "manifest")]
    manifests: Vec<PathBuf>,
    /// Label scope to rank on (repeatable; default btcv, surgical, total).
    #[arg(long = "scope")]
    scopes: Vec<String>,
    /// METRIC=higher|lower for metrics without a known direction.
    #[arg(long = "direction", value_parser = parse_direction)]
    directions: Vec<(String, Direction)>,
}

#[derive(Debug, Args)]
struct StatsArgs {
    /// Observation CSVs (`case_id,model_id,group,value`).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum ComplexityCommand {
    /// Summarize model manifests into complexity tables.
    Ingest {
        /// Manifests (default: those in the config).
        manifests: Vec<PathBuf>,
    },
    /// Time a command and write its latency series and manifest.
    Time {
        #[arg(long)]
        model: String,
        /// Parameter count in millions.
        #[arg(long)]
        params: f64,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long, default_value_t = DEFAULT_WARMUP)]
        warmup: usize,
        /// Command and arguments, run without a shell.
        #[arg(last = true, required = true)]
        command: Vec<String>,
    },
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Results directory (default: the output directory).
    bundle: Option<PathBuf>,
    /// Label map TOML for boxplot label names.
    #[arg(long)]
    label_map: Option<PathBuf>,
    /// Label scope to show (repeatable).
    #[arg(long = "scope")]
    scopes: Vec<String>,
}

fn parse_pair(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k.to_string(), PathBuf::from(v))),
        _ => Err(format!("expected MODEL=PATH, got {s:?}")),
    }
}

fn parse_direction(s: &str) -> std::result::Result<(String, Direction), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected METRIC=higher|lower, got {s:?}"))?;
    Ok((k.to_string(), v.parse().map_err(|e: Error| e.to_string())?))
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(d) = &common.out_dir {
        cfg.out_dir = d.clone();
    }
    if let Some(j) = common.jobs {
        cfg.jobs = j;
    }
    Ok(cfg)
}

fn apply_cases(cfg: &mut RunConfig, a: &CaseArgs) {
    if let Some(d) = &a.truth_dir {
        cfg.truth_dir = Some(d.clone());
    }
    if let Some(i) = &a.inventory {
        cfg.inventory = Some(i.clone());
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    if cfg.jobs > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build_global()
            .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Fuse(a) => {
            apply_cases(&mut cfg, &a.cases);
            cfg.scores.extend(a.scores);
            cfg.patch_size = a.patch_size.unwrap_or(cfg.patch_size);
            cfg.overlap = a.overlap.unwrap_or(cfg.overlap);
            cfg.sigma_coeff = a.sigma_coeff.unwrap_or(cfg.sigma_coeff);
            if let Some(k) = &a.score_kind {
                cfg.score_kind = parse_score_kind(k)?;
            }
            cfg.validate()?;
            let written = report::run_fuse(&cfg)?;
            println!(
                "fused {} volumes into {}",
                written.len(),
                cfg.out_dir.join("fused").display()
            );
        }
        Command::Evaluate(a) => {
            apply_cases(&mut cfg, &a.cases);
            cfg.predictions.extend(a.predictions);
            if let Some(m) = a.label_map {
                cfg.label_map = Some(m);
            }
            cfg.tau_mm = a.tau.unwrap_or(cfg.tau_mm);
            if let Some(m) = &a.total_mode {
                cfg.total_mode = m.parse()?;
            }
            cfg.remap_sources |= a.remap_sources;
            cfg.manifests.extend(a.manifests);
            cfg.stats_enabled &= !a.no_stats;
            cfg.validate()?;
            let out = report::run_evaluate(&cfg)?;
            println!(
                "wrote {} metric records to {}",
                out.records.len(),
                cfg.out_dir.display()
            );
            if cfg.stats_enabled {
                let inputs: Vec<PathBuf> = out
                    .observations
                    .iter()
                    .map(|(m, _)| cfg.out_dir.join(format!("observations_{m}.csv")))
                    .collect();
                // A design too small for ANOVA should not void the metrics.
                if let Err(e) = report::run_stats(&inputs, &cfg.out_dir) {
                    log::warn!("statistics skipped: {e}");
                }
            }
        }
        Command::Rank(a) => {
            if !a.scopes.is_empty() {
                cfg.scopes = a.scopes;
            }
            for (metric, dir) in a.directions {
                cfg.directions.insert(metric, dir);
            }
            cfg.validate()?;
            let result = report::run_rank(&a.tables, &a.manifests, &cfg)?;
            print!("{}", result.to_text());
        }
        Command::Stats(a) => {
            let out = report::run_stats(&a.inputs, &cfg.out_dir)?;
            for (metric, anova, pairs) in &out {
                let sig = pairs.iter().filter(|p| p.significant).count();
                println!(
                    "{metric}: model p = {}, {sig} of {} pairs significant",
                    anova.model.p.map_or("NA".to_string(), |p| format!("{p:.4}")),
                    pairs.len()
                );
            }
        }
        Command::Complexity(ComplexityCommand::Ingest { manifests }) => {
            let manifests = if manifests.is_empty() {
                cfg.manifests.clone()
            } else {
                manifests
            };
            let records = report::run_complexity(&manifests, &cfg.out_dir)?;
            for r in &records {
                println!(
                    "{}: {} M params, {:.4} ± {:.4} ms",
                    r.model_id, r.params_millions, r.latency_mean_ms, r.latency_std_ms
                );
            }
        }
        Command::Complexity(ComplexityCommand::Time {
            model,
            params,
            runs,
            warmup,
            command,
        }) => {
            let series = time_command(&model, &command, runs, warmup)?;
            let (mean, std) = latency_stats(&series)?;
            let file_stem: String = model
                .chars()
                .map(|c| {
                    if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                        c
                    } else {
                        '_'
                    }
                })
                .collect();
            let series_name = format!("{file_stem}.latency.txt");
            write(&cfg.out_dir.join(&series_name), &series.to_text())?;
            let manifest = cfg.out_dir.join(format!("{file_stem}.toml"));
            write(
                &manifest,
                &manifest_text(&model, params, Path::new(&series_name), warmup)?,
            )?;
            println!(
                "{model}: {mean:.4} ± {std:.4} ms over {} runs; manifest {}",
                runs.saturating_sub(warmup),
                manifest.display()
            );
        }
        Command::Report(a) => {
            if let Some(m) = a.label_map {
                cfg.label_map = Some(m);
            }
            if !a.scopes.is_empty() {
                cfg.scopes = a.scopes;
            }
            cfg.validate()?;
            let bundle = a.bundle.unwrap_or_else(|| cfg.out_dir.clone());
            let out = report::run_report(&bundle, &cfg)?;
            print!("{}", out.text);
        }
    }
    Ok(())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        std::fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
