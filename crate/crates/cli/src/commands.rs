use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use cnndistill_core::analysis::{class_density, fidelity, make_report, pearson_correlation, Comparison, Report, TABLE_HEADER};
use cnndistill_core::checkpoint;
use cnndistill_core::data::{load_medmnist, split_70_30, synth_blobs, write_medmnist, ImageDataset};
use cnndistill_core::features::{extract_features, read_feature_csv, write_feature_csv, FeatureTable};
use cnndistill_core::model::{CnnModel, TrainLog};
use cnndistill_core::tree::{accuracy, export_dot, export_rules, grow_tree, DecisionTree, TreeBudget};
use cnndistill_core::Error;
use serde::Serialize;
use walkdir::WalkDir;

use crate::config::{DatasetSpec, RunConfig, Sweep};
use crate::error::{CliError, CliResult, Classify};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::write(path, e))
}

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))
}

pub fn load_dataset(spec: &DatasetSpec, seed: u64) -> CliResult<ImageDataset> {
    match spec {
        DatasetSpec::Path(p) => {
            if !p.exists() {
                return Err(CliError::Data(format!("dataset file {} does not exist", p.display())));
            }
            load_medmnist(p).data()
        }
        DatasetSpec::Synth { classes, per_class } => synth_blobs(*classes, *per_class, seed).config(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub dataset: String,
    pub seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub num_classes: usize,
    pub final_train_loss: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub test_accuracy: f64,
    pub config: serde_json::Value,
}

fn train_log_csv(log: &TrainLog) -> String {
    let mut out = String::from("epoch,loss,train_acc\n");
    for e in &log.epochs {
        writeln!(out, "{},{},{}", e.epoch, e.mean_loss, e.train_accuracy).unwrap();
    }
    out
}

/// Split, train and evaluate; writes `model.ckpt`, `train_log.csv` and
/// `train_summary.json` into the run directory.
pub fn cmd_train(config: &RunConfig) -> CliResult<TrainSummary> {
    let data = load_dataset(&config.dataset, config.seed)?;
    let (train, test) = split_70_30(&data, config.seed).data()?;
    let cnn_config = config.cnn_config(data.channels(), data.num_classes())?;
    let mut model = CnnModel::init(cnn_config).config()?;
    log::info!(
        "training on {} samples ({} held out), {} classes, {} epochs",
        train.len(),
        test.len(),
        data.num_classes(),
        config.cnn.epochs
    );
    let started = Instant::now();
    let log = model.train(&train, config.seed).runtime()?;
    let eval = model.evaluate(&test).runtime()?;
    log::info!("trained in {:.1?}; test accuracy {:.4}", started.elapsed(), eval.accuracy);

    let dir = config.run_dir();
    ensure_dir(&dir)?;
    write(&dir.join("model.ckpt"), checkpoint::to_bytes(&model))?;
    write(&dir.join("train_log.csv"), train_log_csv(&log))?;
    let last = log.epochs.last();
    let summary = TrainSummary {
        dataset: config.dataset.name(),
        seed: config.seed,
        train_samples: train.len(),
        test_samples: test.len(),
        num_classes: data.num_classes(),
        final_train_loss: last.map(|e| e.mean_loss),
        final_train_accuracy: last.map(|e| e.train_accuracy),
        test_accuracy: eval.accuracy,
        config: config.echo(),
    };
    write(&dir.join("train_summary.json"), serde_json::to_string_pretty(&summary).runtime()? + "\n")?;
    Ok(summary)
}

/// Correlation matrix plus one density curve per (feature, class) with at
/// least two samples of that class.
pub fn write_analysis(table: &FeatureTable, dir: &Path) -> CliResult<()> {
    ensure_dir(dir)?;
    let corr = pearson_correlation(table).data()?;
    write(&dir.join("corr.csv"), corr.to_csv())?;
    for class in 0..table.num_classes() {
        for feature in 0..table.feature_dim() {
            match class_density(table, feature, class) {
                Ok(curve) => write(&dir.join(format!("density_f{feature}_class{class}.csv")), curve.to_csv())?,
                Err(Error::ClassAbsent(_)) => {
                    log::warn!("class {class} has fewer than 2 samples in {}; no density", dir.display());
                    break;
                }
                Err(e) => return Err(CliError::Runtime(e.to_string())),
            }
        }
    }
    Ok(())
}

pub fn cmd_analyze(features: &Path, out: &Path) -> CliResult<()> {
    let table = read_feature_csv(features).data()?;
    write_analysis(&table, out)
}

fn feature_names(dim: usize) -> Vec<String> {
    (0..dim).map(|i| format!("f{i}")).collect()
}

fn distill_one(
    config: &RunConfig,
    dataset_name: &str,
    budget: &TreeBudget,
    train: &FeatureTable,
    test: &FeatureTable,
) -> CliResult<(DecisionTree, Report)> {
    let tree = grow_tree(train, config.target, budget).runtime()?;
    let dt_predictions = tree.predict_table(test).runtime()?;
    let comparison = Comparison {
        cnn_accuracy: accuracy(test.cnn_predictions(), test.labels()).runtime()?,
        dt_accuracy: accuracy(&dt_predictions, test.labels()).runtime()?,
        fidelity: fidelity(test.cnn_predictions(), &dt_predictions).runtime()?,
    };
    let mut echo = config.echo();
    echo["tree"] = serde_json::to_value(budget).runtime()?;
    let report =
        make_report(dataset_name, comparison, tree.stats(), *budget, config.target, config.seed, echo).runtime()?;
    Ok((tree, report))
}

fn write_tree(dir: &Path, tree: &DecisionTree, report: &Report) -> CliResult<()> {
    let names = feature_names(tree.feature_dim);
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    write(&dir.join("tree.json"), tree.to_json() + "\n")?;
    write(&dir.join("tree.dot"), export_dot(tree, &names))?;
    write(&dir.join("tree_rules.txt"), export_rules(tree))?;
    write(&dir.join("report.json"), report.to_json() + "\n")?;
    write(&dir.join("table.csv"), format!("{TABLE_HEADER}\n{}\n", report.table_row()))
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub report: Report,
    pub sweep: Vec<Report>,
}

/// Feature extraction, tree induction and analysis for a trained run.
pub fn cmd_distill(config: &RunConfig, checkpoint_path: Option<&Path>, sweep: Option<&Sweep>) -> CliResult<DistillOutcome> {
    let dir = config.run_dir();
    let ckpt = checkpoint_path.map_or_else(|| dir.join("model.ckpt"), Path::to_path_buf);
    if !ckpt.exists() {
        return Err(CliError::Data(format!("checkpoint {} does not exist (run `train` first)", ckpt.display())));
    }
    let model = checkpoint::load(&ckpt).data()?;
    if model.config().seed != config.seed {
        log::warn!("checkpoint was trained with seed {}, splitting with seed {}", model.config().seed, config.seed);
    }
    let data = load_dataset(&config.dataset, config.seed)?;
    let (train, test) = split_70_30(&data, config.seed).data()?;
    let train_table = extract_features(&model, &train).data()?;
    let test_table = extract_features(&model, &test).data()?;
    write_feature_csv(&train_table, dir.join("features_train.csv")).runtime()?;
    write_feature_csv(&test_table, dir.join("features_test.csv")).runtime()?;

    let name = config.dataset.name();
    let (tree, report) = distill_one(config, &name, &config.tree, &train_table, &test_table)?;
    write_tree(&dir, &tree, &report)?;
    log::info!("{TABLE_HEADER}\n{}", report.table_row());
    write_analysis(&train_table, &dir.join("analysis/train"))?;
    write_analysis(&test_table, &dir.join("analysis/test"))?;

    let mut rows = Vec::new();
    if let Some(sweep) = sweep {
        let sweep_dir = dir.join("sweep");
        for budget in sweep.budgets(&config.tree) {
            budget.validate().config()?;
            let (tree, report) = distill_one(config, &name, &budget, &train_table, &test_table)?;
            let sub = sweep_dir.join(format!("depth{}_leaves{}", budget.max_depth, budget.max_leaves));
            write_tree(&sub, &tree, &report)?;
            rows.push(report);
        }
        let mut table = format!("{TABLE_HEADER}\n");
        rows.iter().for_each(|r| writeln!(table, "{}", r.table_row()).unwrap());
        write(&sweep_dir.join("table.csv"), table)?;
    }
    Ok(DistillOutcome { report, sweep: rows })
}

/// Every `report.json` under `root`, in path order, as one table.
pub fn cmd_report(root: &Path) -> CliResult<(PathBuf, String)> {
    if !root.is_dir() {
        return Err(CliError::Data(format!("{} is not a directory", root.display())));
    }
    let mut table = format!("{TABLE_HEADER}\n");
    let mut count = 0;
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| CliError::Data(e.to_string()))?;
        if entry.file_name() != "report.json" {
            continue;
        }
        let text = fs::read_to_string(entry.path()).map_err(|e| CliError::Data(format!("{}: {e}", entry.path().display())))?;
        let report: Report = serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", entry.path().display())))?;
        writeln!(table, "{}", report.table_row()).unwrap();
        count += 1;
    }
    if count == 0 {
        return Err(CliError::Data(format!("no report.json under {}", root.display())));
    }
    let path = root.join("summary_table.csv");
    write(&path, &table)?;
    Ok((path, table))
}

/// Writes `synth_blobs` output as a MedMNIST-layout archive.
pub fn cmd_synth(spec: &DatasetSpec, seed: u64, output: &Path) -> CliResult<ImageDataset> {
    let DatasetSpec::Synth { .. } = spec else {
        return Err(CliError::Config(format!("{spec} is not a synth:KxM spec")));
    };
    let data = load_dataset(spec, seed)?;
    if let Some(dir) = output.parent() {
        ensure_dir(dir)?;
    }
    write_medmnist(&data, output).runtime()?;
    Ok(data)
}
