//! Independent oracles shared by the integration tests and the acceptance
//! suite.
#![allow(dead_code)]

use cnndistill_core::tree::{DecisionTree, Node};

/// Exhaustive best split over `rows`: every feature in ascending order, every
/// midpoint between consecutive distinct values in ascending order, each
/// candidate scored by recounting the samples from scratch. Scores are exact
/// rationals; only a strictly better candidate replaces the incumbent, so the
/// first of several equal candidates wins. `None` unless the weighted child
/// impurity is strictly below the parent's.
pub fn brute_force_split(rows: &[Vec<f64>], targets: &[usize], num_classes: usize) -> Option<(usize, f64)> {
    let n = rows.len() as i128;
    if n < 2 {
        return None;
    }
    let sq_sum = |counts: &[i128]| counts.iter().map(|c| c * c).sum::<i128>();
    let mut parent = vec![0i128; num_classes];
    targets.iter().for_each(|&t| parent[t] += 1);
    // purity = Σl²/nl + Σr²/nr, kept as (numerator, denominator)
    let mut best: Option<((i128, i128), usize, f64)> = None;
    for f in 0..rows[0].len() {
        let mut values: Vec<f64> = rows.iter().map(|r| r[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for w in values.windows(2) {
            let t = (w[0] + w[1]) / 2.0;
            let mut left = vec![0i128; num_classes];
            let mut right = vec![0i128; num_classes];
            for (r, &y) in rows.iter().zip(targets) {
                if r[f] <= t {
                    left[y] += 1;
                } else {
                    right[y] += 1;
                }
            }
            let (nl, nr): (i128, i128) = (left.iter().sum(), right.iter().sum());
            let score = (sq_sum(&left) * nr + sq_sum(&right) * nl, nl * nr);
            let better = best.as_ref().is_none_or(|((bn, bd), ..)| score.0 * bd > bn * score.1);
            if better {
                best = Some((score, f, t));
            }
        }
    }
    let ((num, den), f, t) = best?;
    (num * n > sq_sum(&parent) * den).then_some((f, t))
}

/// Sample indices reaching each node, found by routing every row from the root.
pub fn node_members(tree: &DecisionTree, rows: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); tree.nodes.len()];
    for (i, row) in rows.iter().enumerate() {
        let mut at = tree.root;
        loop {
            members[at].push(i);
            match &tree.nodes[at] {
                Node::Internal { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { .. } => break,
            }
        }
    }
    members
}

/// Checks every internal node of `tree` against [`brute_force_split`] on the
/// samples that reach it. Returns a description of the first mismatch.
pub fn check_tree_against_oracle(
    tree: &DecisionTree,
    rows: &[Vec<f64>],
    targets: &[usize],
    num_classes: usize,
) -> Result<usize, String> {
    let members = node_members(tree, rows);
    let mut checked = 0;
    for (id, node) in tree.nodes.iter().enumerate() {
        if let Node::Internal { feature, threshold, .. } = node {
            let sub_rows: Vec<Vec<f64>> = members[id].iter().map(|&i| rows[i].clone()).collect();
            let sub_targets: Vec<usize> = members[id].iter().map(|&i| targets[i]).collect();
            let expected = brute_force_split(&sub_rows, &sub_targets, num_classes);
            if expected != Some((*feature, *threshold)) {
                return Err(format!("node {id}: tree split ({feature}, {threshold}), oracle {expected:?}"));
            }
            checked += 1;
        }
    }
    Ok(checked)
}

/// Textbook two-pass Pearson matrix: means first, then centred sums.
pub fn two_pass_pearson(columns: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = columns[0].len() as f64;
    let means: Vec<f64> = columns.iter().map(|c| c.iter().sum::<f64>() / n).collect();
    let centred: Vec<Vec<f64>> = columns.iter().zip(&means).map(|(c, m)| c.iter().map(|v| v - m).collect()).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    centred
        .iter()
        .map(|a| centred.iter().map(|b| dot(a, b) / (dot(a, a) * dot(b, b)).sqrt()).collect())
        .collect()
}
