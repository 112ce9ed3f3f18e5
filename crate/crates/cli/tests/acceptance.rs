//! Acceptance criteria, one PASS/FAIL/SKIP line each. Exits nonzero if any
//! criterion fails.
//!
//! AC6 needs a local pneumoniaMNIST archive; point `CNNDISTILL_PNEUMONIA` at
//! the `.npz` file to run it.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use cnndistill_core::analysis::{pearson_correlation, Report};
use cnndistill_core::data::synth_blobs;
use cnndistill_core::features::{read_feature_csv, FeatureTable};
use cnndistill_core::gradcheck::{check_conv, check_linear, check_network, check_pool, check_relu, check_softmax_ce, CheckSummary};
use cnndistill_core::model::{CnnConfig, CnnModel, FLAT_LEN, SPATIAL_PLAN};
use cnndistill_core::rng::SplitMix64;
use cnndistill_core::tree::{grow_tree_on, TreeBudget};
use cnndistill_core::Tensor;

const KERNEL_SEEDS: u64 = 100;
const KERNEL_REL_TOL: f64 = 1e-6;
const NETWORK_REL_TOL: f64 = 1e-4;
const ORACLE_INSTANCES: usize = 500;
const SYNTH_SEED: u64 = 1;
const SYNTH_CLASSES: usize = 3;
const SYNTH_PER_CLASS: usize = 400;
const SYNTH_EPOCHS: usize = 5;
const MIN_CNN_ACCURACY: f64 = 0.90;
const MAX_GAP_POINTS: f64 = 12.0;
const MIN_FIDELITY: f64 = 0.80;
const CORR_TOL: f64 = 1e-12;
const DENSITY_TOL: f64 = 1e-2;
const PNEUMONIA_ENV: &str = "CNNDISTILL_PNEUMONIA";
const REPLAY_FILES: [&str; 5] = ["model.ckpt", "features_train.csv", "features_test.csv", "tree.json", "report.json"];

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn verdict(ok: bool, detail: impl Display) -> Verdict {
    if ok {
        Verdict::Pass(detail.to_string())
    } else {
        Verdict::Fail(detail.to_string())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    if elapsed <= limit {
        Ok(())
    } else {
        Err(format!("took {elapsed:.1?}, limit {limit:?}"))
    }
}

fn timed(detail: String, timing: &Result<(), String>) -> String {
    match timing {
        Ok(()) => detail,
        Err(e) => format!("{detail}; {e}"),
    }
}

fn gradients() -> Verdict {
    let started = Instant::now();
    type Checker = fn(u64) -> cnndistill_core::Result<CheckSummary>;
    let kernels: [(&str, Checker); 5] = [
        ("conv", check_conv),
        ("relu", check_relu),
        ("pool", check_pool),
        ("linear", check_linear),
        ("softmax_ce", check_softmax_ce),
    ];
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, check) in kernels {
        let mut total = CheckSummary::default();
        for seed in 0..KERNEL_SEEDS {
            match check(seed) {
                Ok(s) => total = total.merge(s),
                Err(e) => return Verdict::Fail(format!("{name} seed {seed}: {e}")),
            }
        }
        ok &= total.max_rel_error < KERNEL_REL_TOL && total.compared > 0;
        parts.push(format!("{name} {:.1e}", total.max_rel_error));
    }

    let data = match synth_blobs(3, 8, 11) {
        Ok(d) => d,
        Err(e) => return Verdict::Fail(e.to_string()),
    };
    let mut network = CheckSummary::default();
    for seed in 0..4u64 {
        let mut config = CnnConfig::new(1, 3, seed);
        config.learning_rate = 0.05;
        let result = CnnModel::init(config).and_then(|mut model| {
            // odd seeds probe a point away from the zero-bias initialization
            if seed % 2 == 1 {
                let images: Vec<Tensor> = (0..8).map(|i| data.image_tensor(i)).collect();
                let labels: Vec<usize> = (0..8).map(|i| data.label(i)).collect();
                for _ in 0..3 {
                    model.train_step(&images, &labels)?;
                }
            }
            let i = seed as usize * 5;
            check_network(&model, &data.image_tensor(i), data.label(i), 40, seed)
        });
        match result {
            Ok(s) => network = network.merge(s),
            Err(e) => return Verdict::Fail(format!("network seed {seed}: {e}")),
        }
    }
    ok &= network.max_rel_error < NETWORK_REL_TOL && network.compared > 0;
    parts.push(format!("network {:.1e} over {} probes", network.max_rel_error, network.compared));
    let timing = within(started.elapsed(), Duration::from_secs(60));
    verdict(ok && timing.is_ok(), timed(format!("max rel error {}", parts.join(", ")), &timing))
}

fn architecture() -> Verdict {
    let result = CnnModel::init(CnnConfig::new(1, 2, 0)).and_then(|m| m.forward(&Tensor::filled(&[1, 28, 28], 0.25)));
    match result {
        Ok(pass) => {
            let sides = pass.stage_sides();
            let ok = sides == SPATIAL_PLAN && pass.u.len() == 1024 && FLAT_LEN == 1024;
            verdict(ok, format!("sides {sides:?}, flatten {}", pass.u.len()))
        }
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn random_instance(rng: &mut SplitMix64, max_n: u64, dims: usize, grid: u64) -> (Vec<Vec<f64>>, Vec<usize>, usize) {
    let k = 2 + rng.below(2) as usize;
    let n = 1 + rng.below(max_n) as usize;
    let rows = (0..n).map(|_| (0..dims).map(|_| rng.below(grid) as f64).collect()).collect();
    let targets = (0..n).map(|_| rng.below(k as u64) as usize).collect();
    (rows, targets, k)
}

fn tree_oracle() -> Verdict {
    let started = Instant::now();
    let mut rng = SplitMix64::new(0x5eed);
    let mut splits = 0;
    for case in 0..ORACLE_INSTANCES {
        let (rows, targets, k) = random_instance(&mut rng, 8, 2, 5);
        let tree = match grow_tree_on(&rows.concat(), 2, &targets, k, &TreeBudget::new(64, 64)) {
            Ok(t) => t,
            Err(e) => return Verdict::Fail(format!("instance {case}: {e}")),
        };
        match support::check_tree_against_oracle(&tree, &rows, &targets, k) {
            Ok(n) => splits += n,
            Err(e) => return Verdict::Fail(format!("instance {case}: {e}")),
        }
    }
    let timing = within(started.elapsed(), Duration::from_secs(60));
    verdict(timing.is_ok(), timed(format!("{ORACLE_INSTANCES} instances, {splits} splits matched"), &timing))
}

fn budgets() -> Verdict {
    let mut rng = SplitMix64::new(0xb0d6e7);
    let mut trees = 0;
    for round in 0..10 {
        let (rows, targets, k) = random_instance(&mut rng, 200, 4, if round % 2 == 0 { 6 } else { 1000 });
        for depth in 1..=6 {
            for leaves in 2..=9 {
                let tree = match grow_tree_on(&rows.concat(), 4, &targets, k, &TreeBudget::new(depth, leaves)) {
                    Ok(t) => t,
                    Err(e) => return Verdict::Fail(e.to_string()),
                };
                let s = tree.stats();
                if s.leaves > leaves || s.depth > depth || s.nodes != 2 * s.leaves - 1 || tree.validate().is_err() {
                    return Verdict::Fail(format!("budget ({depth}, {leaves}) gave {s:?}"));
                }
                trees += 1;
            }
        }
    }
    Verdict::Pass(format!("{trees} trees within budget"))
}

fn binary() -> &'static str {
    env!("CARGO_BIN_EXE_cnndistill")
}

fn run_pipeline(config: &Path, out: &Path) -> Result<(), String> {
    for step in ["train", "distill"] {
        let output = Command::new(binary())
            .arg(step)
            .arg("--config")
            .arg(config)
            .arg("--out")
            .arg(out)
            .env("RUST_LOG", "warn")
            .output()
            .map_err(|e| e.to_string())?;
        if !output.status.success() {
            return Err(format!("{step} failed: {}", String::from_utf8_lossy(&output.stderr).trim()));
        }
    }
    Ok(())
}

fn read_report(dir: &Path) -> Result<Report, String> {
    let text = fs::read_to_string(dir.join("report.json")).map_err(|e| e.to_string())?;
    serde_json::from_str(&text).map_err(|e| e.to_string())
}

struct SynthRun {
    config: PathBuf,
    dir: PathBuf,
}

fn synth_run_dir(out: &Path) -> PathBuf {
    out.join(format!("synth_{SYNTH_CLASSES}x{SYNTH_PER_CLASS}")).join(SYNTH_SEED.to_string())
}

fn synthetic(work: &Path) -> (Verdict, Option<SynthRun>) {
    let config = work.join("synth.json");
    let body = serde_json::json!({
        "dataset": format!("synth:{SYNTH_CLASSES}x{SYNTH_PER_CLASS}"),
        "seed": SYNTH_SEED,
        "cnn": { "epochs": SYNTH_EPOCHS },
    });
    if let Err(e) = fs::write(&config, body.to_string()) {
        return (Verdict::Fail(e.to_string()), None);
    }
    let out = work.join("run_a");
    let started = Instant::now();
    if let Err(e) = run_pipeline(&config, &out) {
        return (Verdict::Fail(e), None);
    }
    let elapsed = started.elapsed();
    let dir = synth_run_dir(&out);
    let report = match read_report(&dir) {
        Ok(r) => r,
        Err(e) => return (Verdict::Fail(e), None),
    };
    let gap = 100.0 * (report.cnn_accuracy - report.dt_accuracy).abs();
    let timing = within(elapsed, Duration::from_secs(300));
    let ok = report.cnn_accuracy >= MIN_CNN_ACCURACY && gap <= MAX_GAP_POINTS && report.fidelity >= MIN_FIDELITY;
    let detail = format!(
        "cnn {:.3}, dt {:.3}, gap {gap:.1} points, fidelity {:.3}, tree nodes/leaves/depth {}/{}/{}",
        report.cnn_accuracy, report.dt_accuracy, report.fidelity, report.nodes, report.leaves, report.depth,
    );
    (verdict(ok && timing.is_ok(), timed(detail, &timing)), Some(SynthRun { config, dir }))
}

fn pneumonia(work: &Path) -> Verdict {
    let Some(path) = std::env::var_os(PNEUMONIA_ENV).map(PathBuf::from) else {
        return Verdict::Skip(format!("set {PNEUMONIA_ENV} to a pneumoniamnist.npz to run"));
    };
    if !path.is_file() {
        return Verdict::Fail(format!("{} is not a file", path.display()));
    }
    let config = work.join("pneumonia.json");
    let body = serde_json::json!({ "dataset": path, "seed": 0 });
    if let Err(e) = fs::write(&config, body.to_string()) {
        return Verdict::Fail(e.to_string());
    }
    let out = work.join("pneumonia");
    let started = Instant::now();
    if let Err(e) = run_pipeline(&config, &out) {
        return Verdict::Fail(e);
    }
    let timing = within(started.elapsed(), Duration::from_secs(30 * 60));
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let report = match read_report(&out.join(stem).join("0")) {
        Ok(r) => r,
        Err(e) => return Verdict::Fail(e),
    };
    let (cnn, dt) = (100.0 * report.cnn_accuracy, 100.0 * report.dt_accuracy);
    let ok = (cnn - 96.5).abs() <= 5.0 && (dt - 89.8).abs() <= 7.0 && cnn > dt && timing.is_ok();
    verdict(ok, timed(format!("cnn {cnn:.1}%, dt {dt:.1}%"), &timing))
}

fn columns(table: &FeatureTable) -> Vec<Vec<f64>> {
    (0..table.feature_dim()).map(|j| table.column(j).collect()).collect()
}

fn parse_csv_matrix(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .skip(1)
        .map(|line| line.split(',').skip(1).map(|v| v.parse::<f64>().map_err(|e| format!("{v}: {e}"))).collect())
        .collect()
}

fn check_correlation(emitted: &[Vec<f64>], table: &FeatureTable) -> Result<(), String> {
    let oracle = support::two_pass_pearson(&columns(table));
    let degenerate = pearson_correlation(table).map_err(|e| e.to_string())?.degenerate_columns().to_vec();
    let d = table.feature_dim();
    if emitted.len() != d || emitted.iter().any(|r| r.len() != d) {
        return Err(format!("matrix is not {d}x{d}"));
    }
    for i in 0..d {
        if !degenerate.contains(&i) && emitted[i][i] != 1.0 {
            return Err(format!("diagonal {i} is {}", emitted[i][i]));
        }
        for j in 0..d {
            let v = emitted[i][j];
            if !(-1.0..=1.0).contains(&v) || (v - emitted[j][i]).abs() > CORR_TOL {
                return Err(format!("entry ({i}, {j}) = {v}"));
            }
            let skip = degenerate.contains(&i) || degenerate.contains(&j);
            if !skip && (v - oracle[i][j]).abs() > CORR_TOL {
                return Err(format!("entry ({i}, {j}) = {v}, two-pass {}", oracle[i][j]));
            }
        }
    }
    Ok(())
}

fn check_density(path: &Path) -> Result<(), String> {
    let text = fs::read_to_string(path).map_err(|e| e.to_string())?;
    let points: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let (x, y) = l.split_once(',').ok_or("malformed row")?;
            Ok((x.parse().map_err(|_| "bad x")?, y.parse().map_err(|_| "bad density")?))
        })
        .collect::<Result<_, &str>>()?;
    if points.iter().any(|&(_, y)| y < 0.0) {
        return Err(format!("{} has negative density", path.display()));
    }
    let integral: f64 = points.windows(2).map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0).sum();
    if (integral - 1.0).abs() > DENSITY_TOL {
        return Err(format!("{} integrates to {integral}", path.display()));
    }
    Ok(())
}

fn analysis(run: Option<&SynthRun>) -> Verdict {
    let Some(run) = run else {
        return Verdict::Fail("no synthetic run to inspect".into());
    };
    let mut matrices = 0;
    let mut curves = 0;
    for split in ["train", "test"] {
        let result = (|| -> Result<(), String> {
            let table = read_feature_csv(run.dir.join(format!("features_{split}.csv"))).map_err(|e| e.to_string())?;
            let dir = run.dir.join("analysis").join(split);
            check_correlation(&parse_csv_matrix(&dir.join("corr.csv"))?, &table)?;
            matrices += 1;
            let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
                .map_err(|e| e.to_string())?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.file_name().is_some_and(|n| n.to_string_lossy().starts_with("density_")))
                .collect();
            entries.sort();
            if entries.len() != table.feature_dim() * table.num_classes() {
                return Err(format!("{} density curves in {}", entries.len(), dir.display()));
            }
            for path in entries {
                check_density(&path)?;
                curves += 1;
            }
            Ok(())
        })();
        if let Err(e) = result {
            return Verdict::Fail(e);
        }
    }
    Verdict::Pass(format!("{matrices} correlation matrices, {curves} density curves"))
}

fn replay(work: &Path, first: Option<&SynthRun>) -> Verdict {
    let Some(first) = first else {
        return Verdict::Fail("no first synthetic run to replay".into());
    };
    let out = work.join("run_b");
    if let Err(e) = run_pipeline(&first.config, &out) {
        return Verdict::Fail(e);
    }
    let second = synth_run_dir(&out);
    for name in REPLAY_FILES {
        match (fs::read(first.dir.join(name)), fs::read(second.join(name))) {
            (Ok(a), Ok(b)) if a == b => {}
            (Ok(_), Ok(_)) => return Verdict::Fail(format!("{name} differs between runs")),
            (Err(e), _) | (_, Err(e)) => return Verdict::Fail(format!("{name}: {e}")),
        }
    }
    Verdict::Pass(format!("{} artifacts byte-identical", REPLAY_FILES.len()))
}

fn report(id: &str, title: &str, started: Instant, v: &Verdict) -> bool {
    let (tag, detail, failed) = match v {
        Verdict::Pass(d) => ("PASS", d, false),
        Verdict::Fail(d) => ("FAIL", d, true),
        Verdict::Skip(d) => ("SKIP", d, false),
    };
    println!("{tag} {id} {title}: {} [{:.1?}]", detail.trim(), started.elapsed());
    failed
}

fn main() {
    let work = tempfile::tempdir().expect("temporary directory");
    let mut failures = 0;
    let mut record = |id: &str, title: &str, f: &mut dyn FnMut() -> Verdict| {
        let started = Instant::now();
        let v = f();
        failures += usize::from(report(id, title, started, &v));
    };

    record("AC1", "gradient correctness", &mut gradients);
    record("AC2", "architecture invariant", &mut architecture);
    record("AC3", "tree oracle equivalence", &mut tree_oracle);
    record("AC4", "budget satisfaction", &mut budgets);
    let mut synth = None;
    record("AC5", "synthetic end-to-end", &mut || {
        let (v, run) = synthetic(work.path());
        synth = run;
        v
    });
    record("AC6", "pneumoniaMNIST", &mut || pneumonia(work.path()));
    record("AC7", "analysis invariants", &mut || analysis(synth.as_ref()));
    record("AC8", "determinism replay", &mut || replay(work.path(), synth.as_ref()));

    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
}
