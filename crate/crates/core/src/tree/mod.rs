//! CART classification trees grown best-first under depth and leaf budgets.

mod export;
mod split;

pub use export::{export_dot, export_rules};
pub use split::{best_split, gini, Split};

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use split::{best_split_among, Gain};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Internal { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { class_counts: Vec<usize>, predicted_class: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub root: usize,
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeBudget {
    #[serde(default = "default_max_depth")]
    pub max_depth: usize,
    #[serde(default = "default_max_leaves")]
    pub max_leaves: usize,
    #[serde(default = "default_min_samples_split")]
    pub min_samples_split: usize,
}

fn default_max_depth() -> usize {
    4
}
fn default_max_leaves() -> usize {
    5
}
fn default_min_samples_split() -> usize {
    2
}

impl Default for TreeBudget {
    fn default() -> Self {
        Self { max_depth: default_max_depth(), max_leaves: default_max_leaves(), min_samples_split: default_min_samples_split() }
    }
}

impl TreeBudget {
    pub fn new(max_depth: usize, max_leaves: usize) -> Self {
        Self { max_depth, max_leaves, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::InvalidConfig("max_depth must be >= 1".into()));
        }
        if self.max_leaves < 2 {
            return Err(Error::InvalidConfig("max_leaves must be >= 2".into()));
        }
        Ok(())
    }
}

/// Which column of a [`FeatureTable`] the tree learns to predict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Ground-truth labels.
    #[default]
    Labels,
    /// The network's own predictions (fidelity to the teacher).
    #[serde(rename = "cnn")]
    CnnPredictions,
}

impl TargetMode {
    pub fn targets(self, table: &FeatureTable) -> &[usize] {
        match self {
            TargetMode::Labels => table.labels(),
            TargetMode::CnnPredictions => table.cnn_predictions(),
        }
    }
}

impl FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "labels" => Ok(TargetMode::Labels),
            "cnn" | "cnn_predictions" => Ok(TargetMode::CnnPredictions),
            other => Err(Error::InvalidConfig(format!("unknown tree target {other:?} (labels | cnn)"))),
        }
    }
}

impl fmt::Display for TargetMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TargetMode::Labels => "labels",
            TargetMode::CnnPredictions => "cnn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeStats {
    pub nodes: usize,
    pub leaves: usize,
    pub depth: usize,
}

pub fn grow_tree(table: &FeatureTable, target: TargetMode, budget: &TreeBudget) -> Result<DecisionTree> {
    grow_tree_on(table.values(), table.feature_dim(), target.targets(table), table.num_classes(), budget)
}

struct Candidate {
    node: usize,
    depth: usize,
    indices: Vec<usize>,
    split: Split,
    gain: Gain,
}

/// Best-first growth over a row-major `[n, feature_dim]` matrix.
///
/// Expandable leaves wait in a frontier keyed by the impurity decrease of
/// their best split, weighted by their share of the samples. The largest
/// decrease is expanded first, ties going to the leaf created earlier.
/// Growth stops once the tree has `max_leaves` leaves or the frontier is
/// empty; a leaf joins the frontier only if it sits above `max_depth`, holds
/// at least `min_samples_split` samples and has an improving split.
pub fn grow_tree_on(
    features: &[f64],
    feature_dim: usize,
    targets: &[usize],
    num_classes: usize,
    budget: &TreeBudget,
) -> Result<DecisionTree> {
    budget.validate()?;
    if targets.is_empty() {
        return Err(Error::Empty("feature table"));
    }
    if features.len() != targets.len() * feature_dim {
        return Err(Error::Shape {
            context: "grow_tree",
            detail: format!("{} values for {} rows of {feature_dim}", features.len(), targets.len()),
        });
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= num_classes) {
        return Err(Error::ClassOutOfRange { index: bad, num_classes });
    }
    let leaf = |indices: &[usize]| {
        let mut class_counts = vec![0; num_classes];
        indices.iter().for_each(|&i| class_counts[targets[i]] += 1);
        let predicted_class = majority(&class_counts);
        Node::Leaf { class_counts, predicted_class }
    };
    let consider = |frontier: &mut Vec<Candidate>, node: usize, depth: usize, indices: Vec<usize>| {
        if depth >= budget.max_depth || indices.len() < budget.min_samples_split.max(2) {
            return;
        }
        if let Some((split, gain)) = best_split_among(features, feature_dim, targets, num_classes, &indices) {
            frontier.push(Candidate { node, depth, indices, split, gain });
        }
    };

    let all: Vec<usize> = (0..targets.len()).collect();
    let mut nodes = vec![leaf(&all)];
    let mut frontier = Vec::new();
    consider(&mut frontier, 0, 0, all);
    let mut leaves = 1;
    while leaves < budget.max_leaves {
        let Some(pick) = pick_next(&frontier) else { break };
        let c = frontier.swap_remove(pick);
        let (left, right): (Vec<usize>, Vec<usize>) =
            c.indices.iter().partition(|&&i| features[i * feature_dim + c.split.feature] <= c.split.threshold);
        let (l, r) = (nodes.len(), nodes.len() + 1);
        nodes.push(leaf(&left));
        nodes.push(leaf(&right));
        nodes[c.node] = Node::Internal { feature: c.split.feature, threshold: c.split.threshold, left: l, right: r };
        leaves += 1;
        consider(&mut frontier, l, c.depth + 1, left);
        consider(&mut frontier, r, c.depth + 1, right);
    }
    Ok(DecisionTree { num_classes, feature_dim, root: 0, nodes })
}

/// Largest global gain; equal gains go to the lowest node id, i.e. the
/// earliest leaf.
fn pick_next(frontier: &[Candidate]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in frontier.iter().enumerate() {
        let better = match best {
            None => true,
            Some(b) => {
                let b = &frontier[b];
                c.gain.cmp(&b.gain).then(b.node.cmp(&c.node)) == Ordering::Greater
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

impl DecisionTree {
    /// Descends left while `row[feature] <= threshold`.
    pub fn predict(&self, row: &[f64]) -> Result<usize> {
        if row.len() != self.feature_dim {
            return Err(Error::LengthMismatch { left: row.len(), right: self.feature_dim });
        }
        Ok(self.predict_unchecked(row))
    }

    fn predict_unchecked(&self, row: &[f64]) -> usize {
        let mut at = self.root;
        loop {
            match &self.nodes[at] {
                Node::Internal { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { predicted_class, .. } => return *predicted_class,
            }
        }
    }

    pub fn predict_table(&self, table: &FeatureTable) -> Result<Vec<usize>> {
        if table.feature_dim() != self.feature_dim {
            return Err(Error::LengthMismatch { left: table.feature_dim(), right: self.feature_dim });
        }
        Ok(table.rows().map(|r| self.predict_unchecked(r)).collect())
    }

    /// Nodes (internal + leaves), leaves, and depth (a lone leaf has depth 0).
    pub fn stats(&self) -> TreeStats {
        let mut stats = TreeStats { nodes: 0, leaves: 0, depth: 0 };
        let mut stack = vec![(self.root, 0)];
        while let Some((at, depth)) = stack.pop() {
            stats.nodes += 1;
            stats.depth = stats.depth.max(depth);
            match &self.nodes[at] {
                Node::Internal { left, right, .. } => {
                    stack.push((*right, depth + 1));
                    stack.push((*left, depth + 1));
                }
                Node::Leaf { .. } => stats.leaves += 1,
            }
        }
        stats
    }

    /// Checks the structural invariants of a tree, e.g. one read from JSON.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(format!("tree: {msg}")));
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.root];
        while let Some(at) = stack.pop() {
            match seen.get_mut(at) {
                None => return bad(format!("node index {at} out of range")),
                Some(true) => return bad(format!("node {at} reached twice")),
                Some(s) => *s = true,
            }
            match &self.nodes[at] {
                Node::Internal { feature, threshold, left, right } => {
                    if *feature >= self.feature_dim || !threshold.is_finite() {
                        return bad(format!("node {at} has an invalid split"));
                    }
                    stack.extend([*left, *right]);
                }
                Node::Leaf { class_counts, predicted_class } => {
                    if class_counts.len() != self.num_classes || *predicted_class != majority(class_counts) {
                        return bad(format!("leaf {at} is inconsistent"));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        Ok(())
    }

    /// `Σ_leaves (n_leaf / n) · G(leaf)`.
    pub fn weighted_impurity(&self) -> f64 {
        let leaves: Vec<&Vec<usize>> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { class_counts, .. } => Some(class_counts),
                Node::Internal { .. } => None,
            })
            .collect();
        let total: usize = leaves.iter().map(|c| c.iter().sum::<usize>()).sum();
        leaves
            .iter()
            .filter(|c| c.iter().sum::<usize>() > 0)
            .map(|c| c.iter().sum::<usize>() as f64 / total as f64 * gini(c).unwrap_or(0.0))
            .sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: DecisionTree = serde_json::from_str(text)?;
        tree.validate()?;
        Ok(tree)
    }
}

/// Fraction of `predicted` equal to `expected`.
pub fn accuracy(predicted: &[usize], expected: &[usize]) -> Result<f64> {
    if predicted.len() != expected.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: expected.len() });
    }
    if predicted.is_empty() {
        return Err(Error::Empty("predictions"));
    }
    Ok(predicted.iter().zip(expected).filter(|(a, b)| a == b).count() as f64 / predicted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line() -> (Vec<f64>, Vec<usize>) {
        (vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0], vec![0, 0, 1, 1, 2, 2])
    }

    #[test]
    fn single_leaf_when_pure() {
        let t = grow_tree_on(&[1.0, 2.0], 1, &[1, 1], 2, &TreeBudget::default()).unwrap();
        assert_eq!(t.stats(), TreeStats { nodes: 1, leaves: 1, depth: 0 });
        assert_eq!(t.predict(&[100.0]).unwrap(), 1);
    }

    #[test]
    fn two_leaves_is_root_best_split() {
        let (x, y) = line();
        let t = grow_tree_on(&x, 1, &y, 3, &TreeBudget::new(4, 2)).unwrap();
        let root = best_split(&x, 1, &y, 3).unwrap();
        assert_eq!(t.stats(), TreeStats { nodes: 3, leaves: 2, depth: 1 });
        match &t.nodes[t.root] {
            Node::Internal { feature, threshold, .. } => assert_eq!((*feature, *threshold), (root.feature, root.threshold)),
            Node::Leaf { .. } => panic!("expected a split"),
        }
    }

    #[test]
    fn boundary_goes_left() {
        let t = grow_tree_on(&[0.0, 1.0], 1, &[0, 1], 2, &TreeBudget::default()).unwrap();
        assert_eq!(t.predict(&[0.5]).unwrap(), 0);
        assert_eq!(t.predict(&[0.5000001]).unwrap(), 1);
        assert!(t.predict(&[0.5, 1.0]).is_err());
    }

    #[test]
    fn depth_budget_limits_growth() {
        let (x, y) = line();
        let t = grow_tree_on(&x, 1, &y, 3, &TreeBudget::new(1, 9)).unwrap();
        assert_eq!(t.stats().leaves, 2);
        let t = grow_tree_on(&x, 1, &y, 3, &TreeBudget::new(2, 9)).unwrap();
        assert_eq!(t.stats(), TreeStats { nodes: 5, leaves: 3, depth: 2 });
        assert_eq!(accuracy(&x.iter().map(|v| t.predict(&[*v]).unwrap()).collect::<Vec<_>>(), &y).unwrap(), 1.0);
    }

    #[test]
    fn invalid_inputs() {
        assert!(grow_tree_on(&[], 1, &[], 2, &TreeBudget::default()).is_err());
        assert!(grow_tree_on(&[1.0], 1, &[0], 2, &TreeBudget::new(0, 5)).is_err());
        assert!(grow_tree_on(&[1.0], 1, &[0], 2, &TreeBudget::new(3, 1)).is_err());
        assert!(grow_tree_on(&[1.0], 1, &[2], 2, &TreeBudget::default()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = line();
        let t = grow_tree_on(&x, 1, &y, 3, &TreeBudget::default()).unwrap();
        let back = DecisionTree::from_json(&t.to_json()).unwrap();
        assert_eq!(back, t);
        assert!(t.to_json().contains("\"kind\": \"internal\""));
    }

    #[test]
    fn corrupt_json_rejected() {
        let t = DecisionTree {
            num_classes: 2,
            feature_dim: 1,
            root: 0,
            nodes: vec![Node::Internal { feature: 0, threshold: 0.0, left: 0, right: 1 }],
        };
        assert!(DecisionTree::from_json(&t.to_json()).is_err());
    }

    #[test]
    fn target_mode_parsing() {
        assert_eq!("labels".parse::<TargetMode>().unwrap(), TargetMode::Labels);
        assert_eq!("cnn".parse::<TargetMode>().unwrap(), TargetMode::CnnPredictions);
        assert!("other".parse::<TargetMode>().is_err());
        assert_eq!(serde_json::to_string(&TargetMode::CnnPredictions).unwrap(), "\"cnn\"");
    }
}
