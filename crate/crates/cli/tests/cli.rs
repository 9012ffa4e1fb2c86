use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use segbench::fusion::{write_patches, ScorePatch};
use segbench::volume::nifti::write_labels;
use segbench::volume::{LabelVolume, Volume};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures");

const LABEL_MAP: &str = r#"
[targets]
1 = { name = "liver", group = "btcv" }
2 = { name = "spleen", group = "btcv" }
3 = { name = "heart", group = "surgical" }
4 = { name = "trachea", group = "surgical" }
"#;

const DIMS: [usize; 3] = [8, 8, 8];
const SPACING: [f64; 3] = [0.8, 1.0, 2.0];
const CASES: usize = 4;

fn segbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_segbench"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = segbench(args);
    assert!(
        out.status.success(),
        "segbench {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Four labels in axis-aligned blocks that move with the case index.
fn truth_volume(case: usize) -> LabelVolume {
    let mut v = vec![0u16; DIMS.iter().product()];
    for z in 0..8 {
        for y in 0..8 {
            for x in 0..8 {
                let label = match (x + case % 2 < 4, y < 4 + case / 2) {
                    _ if z == 0 || z == 7 => 0,
                    (true, true) => 1,
                    (false, true) => 2,
                    (true, false) => 3,
                    (false, false) => 4,
                };
                v[x + 8 * (y + 8 * z)] = label;
            }
        }
    }
    Volume::new(DIMS, SPACING, [0.0; 3], v).unwrap()
}

/// Truth with the `case + 1` lowest slices of label 1 erased.
fn degraded(case: usize) -> LabelVolume {
    let t = truth_volume(case);
    let v = t
        .voxels()
        .iter()
        .enumerate()
        .map(|(i, &l)| if l == 1 && i / 64 <= case + 1 { 0 } else { l })
        .collect();
    Volume::new(DIMS, SPACING, [0.0; 3], v).unwrap()
}

struct Fixture {
    dir: tempfile::TempDir,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let f = Self { dir };
        std::fs::write(f.path("labels.toml"), LABEL_MAP).unwrap();
        for c in 0..CASES {
            let name = format!("case{c}.nii.gz");
            write_labels(f.path("truth").join(&name), &truth_volume(c)).unwrap();
            write_labels(f.path("pred/good").join(&name), &truth_volume(c)).unwrap();
            write_labels(f.path("pred/weak").join(&name), &degraded(c)).unwrap();
        }
        for (model, params, mean) in [("good", 10.0, 5.0), ("weak", 20.0, 4.0)] {
            std::fs::write(
                f.path(&format!("{model}.toml")),
                format!("model_id = \"{model}\"\nparams_millions = {params}\nlatency_mean_ms = {mean}\nlatency_std_ms = 0.5\n"),
            )
            .unwrap();
        }
        f
    }

    fn path(&self, rel: &str) -> PathBuf {
        let p = self.dir.path().join(rel);
        if rel.starts_with("pred/") || rel == "truth" {
            std::fs::create_dir_all(&p).unwrap();
        }
        p
    }

    fn evaluate(&self, out: &str, extra: &[&str]) -> PathBuf {
        let out = self.dir.path().join(out);
        let (truth, good, weak) = (self.path("truth"), self.path("pred/good"), self.path("pred/weak"));
        let (map, mg, mw) = (self.path("labels.toml"), self.path("good.toml"), self.path("weak.toml"));
        let good = format!("good={}", s(&good));
        let weak = format!("weak={}", s(&weak));
        let mut args = vec![
            "evaluate",
            "--out-dir",
            s(&out),
            "--truth-dir",
            s(&truth),
            "--label-map",
            s(&map),
            "--pred",
            &good,
            "--pred",
            &weak,
            "--manifest",
            s(&mg),
            "--manifest",
            s(&mw),
        ];
        args.extend_from_slice(extra);
        ok(&args);
        out
    }
}

fn csv_column(text: &str, name: &str) -> Vec<String> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header
        .iter()
        .position(|h| *h == name)
        .unwrap_or_else(|| panic!("no column {name}"));
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn rank_seven_model_fixture_final_columns() {
    let dir = tempfile::tempdir().unwrap();
    let table = format!("{FIXTURES}/ranking_seven_models.csv");
    let stdout = ok(&["rank", &table, "--out-dir", s(dir.path())]);
    assert!(stdout.starts_with("model"));
    let csv = std::fs::read_to_string(dir.path().join("ranking.csv")).unwrap();
    assert_eq!(
        csv_column(&csv, "model_id"),
        [
            "3DUNet",
            "STUNet",
            "AttentionUNet",
            "SwinUNETR",
            "FocalSegNet",
            "3DSwinUnet",
            "3DSwinUnetV4"
        ]
    );
    assert_eq!(csv_column(&csv, "final_btcv_rank"), ["2", "1", "2", "4", "3", "4", "5"]);
    assert_eq!(
        csv_column(&csv, "final_surgical_rank"),
        ["1", "1", "2", "4", "3", "4", "5"]
    );
    assert_eq!(
        csv_column(&csv, "final_total_rank"),
        ["2", "1", "3", "5", "4", "5", "6"]
    );
}

#[test]
fn single_model_ranks_first_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let table = dir.path().join("t.csv");
    let rows: String = ["params_millions", "latency_mean_ms", "dice_total", "nsd_total"]
        .iter()
        .map(|m| format!("only,{m},0.5\n"))
        .collect();
    std::fs::write(&table, format!("model_id,metric_id,value\n{rows}")).unwrap();
    ok(&["rank", s(&table), "--scope", "total", "--out-dir", s(dir.path())]);
    let csv = std::fs::read_to_string(dir.path().join("ranking.csv")).unwrap();
    for col in ["complexity_rank", "segmentation_total_rank", "final_total_rank"] {
        assert_eq!(csv_column(&csv, col), ["1"]);
    }
}

#[test]
fn prediction_equal_to_truth_scores_one() {
    let f = Fixture::new();
    let out = f.evaluate("out", &[]);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    let models = csv_column(&csv, "model_id");
    let dice = csv_column(&csv, "dice");
    let nsd = csv_column(&csv, "nsd");
    let good: Vec<usize> = (0..models.len()).filter(|&i| models[i] == "good").collect();
    assert_eq!(good.len(), CASES * 4);
    assert!(good.iter().all(|&i| dice[i] == "1" && nsd[i] == "1"));
    assert!((0..models.len()).any(|i| models[i] == "weak" && dice[i] != "1"));
    for name in [
        "aggregate.csv",
        "metric_table.csv",
        "observations_dice.csv",
        "observations_nsd.csv",
        "anova.csv",
        "tukey.csv",
    ] {
        assert!(out.join(name).is_file(), "{name}");
    }
}

#[test]
fn spacing_mismatch_is_a_data_error() {
    let f = Fixture::new();
    let t = truth_volume(0);
    let odd = Volume::new(DIMS, [0.8, 1.0, 1.0], [0.0; 3], t.voxels().to_vec()).unwrap();
    for c in 0..CASES {
        write_labels(f.path("pred/odd").join(format!("case{c}.nii.gz")), &odd).unwrap();
    }
    let out = segbench(&[
        "evaluate",
        "--out-dir",
        s(&f.path("o")),
        "--truth-dir",
        s(&f.path("truth")),
        "--label-map",
        s(&f.path("labels.toml")),
        "--pred",
        &format!("odd={}", s(&f.path("pred/odd"))),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("case0") && err.contains("spacing"), "{err}");
}

#[test]
fn empty_report_bundle_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = segbench(&["report", s(dir.path()), "--out-dir", s(&dir.path().join("r"))]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_value_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[fusion]\noverlap = 1.5\n").unwrap();
    let table = format!("{FIXTURES}/ranking_seven_models.csv");
    let out = segbench(&["rank", &table, "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_output_feeds_rank_and_report() {
    let f = Fixture::new();
    let out = f.evaluate("out", &[]);
    let table = out.join("metric_table.csv");
    ok(&["rank", s(&table), "--out-dir", s(&out)]);
    let csv = std::fs::read_to_string(out.join("ranking.csv")).unwrap();
    assert_eq!(csv_column(&csv, "model_id"), ["good", "weak"]);
    assert_eq!(csv_column(&csv, "segmentation_total_rank"), ["1", "2"]);
    // good: params 1, latency 2; weak: params 2, latency 1.
    assert_eq!(csv_column(&csv, "complexity_rank"), ["1", "1"]);

    let text = ok(&[
        "report",
        s(&out),
        "--out-dir",
        s(&out),
        "--label-map",
        s(&f.path("labels.toml")),
    ]);
    assert!(text.contains("1.0000 ± 0.0000¹"), "{text}");
    let boxplot = std::fs::read_to_string(out.join("boxplot.csv")).unwrap();
    assert_eq!(boxplot.lines().count(), 1 + 2 * CASES * 4);
    assert!(boxplot
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("good,1,liver,btcv,case0,1,1"));
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let f = Fixture::new();
    let a = f.evaluate("a", &["--jobs", "1"]);
    let b = f.evaluate("b", &["--jobs", "4"]);
    let mut names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 6);
    for name in names {
        let x = std::fs::read(a.join(&name)).unwrap();
        let y = std::fs::read(b.join(&name)).unwrap();
        assert!(x == y, "{name:?} differs between runs");
    }
}

#[test]
fn fuse_then_evaluate_recovers_truth() {
    let f = Fixture::new();
    let scores = f.path("pred/scores");
    for c in 0..CASES {
        // One window covering the whole volume with one-hot class scores.
        let t = truth_volume(c);
        let mut onehot = vec![0f32; 5 * 512];
        for (i, &l) in t.voxels().iter().enumerate() {
            onehot[usize::from(l) * 512 + i] = 1.0;
        }
        let patch = ScorePatch::new([0, 0, 0], 5, 8, onehot).unwrap();
        write_patches(scores.join(format!("case{c}.vsbp")), 5, 8, &[patch]).unwrap();
    }
    let out = f.path("fused_run");
    let spec = format!("m={}", s(&scores));
    let truth = f.path("truth");
    ok(&[
        "fuse",
        "--out-dir",
        s(&out),
        "--truth-dir",
        s(&truth),
        "--scores",
        &spec,
        "--patch-size",
        "8",
    ]);
    let fused = out.join("fused/m");
    let spec = format!("m={}", s(&fused));
    let map = f.path("labels.toml");
    ok(&[
        "evaluate",
        "--out-dir",
        s(&out),
        "--truth-dir",
        s(&truth),
        "--label-map",
        s(&map),
        "--pred",
        &spec,
        "--no-stats",
    ]);
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(csv_column(&csv, "dice").iter().all(|d| d == "1"));
    assert!(!out.join("anova.csv").exists());

    std::fs::remove_file(scores.join("case2.vsbp")).unwrap();
    let spec = format!("m={}", s(&scores));
    let res = segbench(&[
        "fuse",
        "--out-dir",
        s(&out),
        "--truth-dir",
        s(&truth),
        "--scores",
        &spec,
        "--patch-size",
        "8",
    ]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("case2"));
}

#[test]
fn timed_manifest_is_ingested() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    ok(&[
        "complexity",
        "--out-dir",
        s(out),
        "time",
        "--model",
        "stub",
        "--params",
        "1.5",
        "--runs",
        "4",
        "--warmup",
        "1",
        "--",
        "true",
    ]);
    let manifest = out.join("stub.toml");
    let text = ok(&["complexity", "--out-dir", s(out), "ingest", s(&manifest)]);
    assert!(text.starts_with("stub: 1.5 M params"), "{text}");
    let table = std::fs::read_to_string(out.join("complexity_table.csv")).unwrap();
    assert!(table.contains("stub,params_millions,1.5"));
}

#[test]
fn stats_on_constant_and_unbalanced_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("observations_dice.csv");
    let mut rows = String::from("case_id,model_id,group,value\n");
    for c in 0..3 {
        for m in ["a", "b"] {
            for g in ["btcv", "surgical"] {
                rows.push_str(&format!("c{c},{m},{g},0.9\n"));
            }
        }
    }
    std::fs::write(&obs, &rows).unwrap();
    ok(&["stats", s(&obs), "--out-dir", s(dir.path())]);
    let anova = std::fs::read_to_string(dir.path().join("anova.csv")).unwrap();
    let p = csv_column(&anova, "p");
    assert_eq!(&p[..3], ["1", "1", "1"], "{anova}");

    rows.push_str("c3,a,btcv,0.8\n");
    std::fs::write(&obs, &rows).unwrap();
    let res = segbench(&["stats", s(&obs), "--out-dir", s(dir.path())]);
    assert!(matches!(res.status.code(), Some(2 | 3)), "{res:?}");
}
