use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::{TargetMode, TreeBudget, TreeStats};

/// Columns of [`Report::table_row`]. Accuracy-table order first; fidelity
/// and the budget are extra columns.
pub const TABLE_HEADER: &str = "dataset,cnn_accuracy,dt_accuracy,nodes,leaves,depth,fidelity,max_depth,max_leaves";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Comparison {
    pub cnn_accuracy: f64,
    pub dt_accuracy: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub dataset_name: String,
    pub cnn_accuracy: f64,
    pub dt_accuracy: f64,
    pub fidelity: f64,
    pub nodes: usize,
    pub leaves: usize,
    pub depth: usize,
    pub budget: TreeBudget,
    pub target: TargetMode,
    pub seed: u64,
    pub config: serde_json::Value,
    pub notes: Vec<String>,
}

/// Fraction of samples on which the tree agrees with the network.
pub fn fidelity(cnn_predictions: &[usize], dt_predictions: &[usize]) -> Result<f64> {
    if cnn_predictions.len() != dt_predictions.len() {
        return Err(Error::LengthMismatch { left: cnn_predictions.len(), right: dt_predictions.len() });
    }
    if cnn_predictions.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    let agree = cnn_predictions.iter().zip(dt_predictions).filter(|(a, b)| a == b).count();
    Ok(agree as f64 / cnn_predictions.len() as f64)
}

pub fn make_report(
    dataset_name: &str,
    comparison: Comparison,
    stats: TreeStats,
    budget: TreeBudget,
    target: TargetMode,
    seed: u64,
    config: serde_json::Value,
) -> Result<Report> {
    for (what, v) in [
        ("cnn_accuracy", comparison.cnn_accuracy),
        ("dt_accuracy", comparison.dt_accuracy),
        ("fidelity", comparison.fidelity),
    ] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidConfig(format!("{what} = {v} is not a fraction")));
        }
    }
    if stats.nodes + 1 != 2 * stats.leaves {
        return Err(Error::InvalidConfig(format!("{} nodes cannot hold {} leaves", stats.nodes, stats.leaves)));
    }
    Ok(Report {
        dataset_name: dataset_name.to_string(),
        cnn_accuracy: comparison.cnn_accuracy,
        dt_accuracy: comparison.dt_accuracy,
        fidelity: comparison.fidelity,
        nodes: stats.nodes,
        leaves: stats.leaves,
        depth: stats.depth,
        budget,
        target,
        seed,
        config,
        notes: vec![
            "nodes counts internal nodes plus leaves (2 * leaves - 1 for a binary tree)".into(),
            "accuracies and fidelity are measured on the held-out 30% split".into(),
        ],
    })
}

impl Report {
    /// `dataset,cnn%,dt%,nodes,leaves,depth,fidelity%,max_depth,max_leaves`.
    pub fn table_row(&self) -> String {
        format!(
            "{},{:.1},{:.1},{},{},{},{:.1},{},{}",
            self.dataset_name,
            100.0 * self.cnn_accuracy,
            100.0 * self.dt_accuracy,
            self.nodes,
            self.leaves,
            self.depth,
            100.0 * self.fidelity,
            self.budget.max_depth,
            self.budget.max_leaves
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Header plus one row per report.
pub fn write_table<'a>(reports: impl IntoIterator<Item = &'a Report>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = format!("{TABLE_HEADER}\n");
    for r in reports {
        text.push_str(&r.table_row());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
