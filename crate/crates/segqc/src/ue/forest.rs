//! Random forest regressor: CART trees on bootstrap samples with random
//! feature subsets, variance-reduction splits.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SegQcError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features tried per split; 0 means ceil(d / 3) (regression default).
    pub max_features: usize,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 12, min_samples_split: 4, max_features: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
enum Node {
    Leaf { value: f64 },
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

/// Either a fitted forest or, for degenerate constant targets, a constant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum ForestRegressor {
    Constant { value: f64 },
    Forest { trees: Vec<Tree>, config: ForestConfig },
}

impl ForestRegressor {
    /// True when fitting collapsed to a constant predictor.
    pub fn is_constant(&self) -> bool {
        matches!(self, ForestRegressor::Constant { .. })
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            ForestRegressor::Constant { value } => *value,
            ForestRegressor::Forest { trees, .. } => {
                trees.iter().map(|t| t.predict(x)).sum::<f64>() / trees.len() as f64
            }
        }
    }
}

/// Fits a deterministic (seeded) random forest.
pub fn fit_forest(
    x: &[Vec<f64>],
    y: &[f64],
    config: &ForestConfig,
    seed: u64,
) -> Result<ForestRegressor> {
    if x.len() != y.len() || x.is_empty() {
        return Err(SegQcError::InvalidConfig(format!(
            "{} feature rows for {} targets",
            x.len(),
            y.len()
        )));
    }
    let d = x[0].len();
    if x.iter().any(|row| row.len() != d) {
        return Err(SegQcError::InvalidConfig("ragged feature rows".into()));
    }
    let first = y[0];
    if y.iter().all(|&v| v == first) {
        return Ok(ForestRegressor::Constant { value: first });
    }
    let mtry = if config.max_features == 0 { d.div_ceil(3).max(1) } else { config.max_features.min(d) };
    let mut trees = Vec::with_capacity(config.n_trees);
    for t in 0..config.n_trees {
        let mut rng = ChaCha20Rng::seed_from_u64(seed.wrapping_add(t as u64).wrapping_mul(0x9E3779B97F4A7C15 | 1));
        // Bootstrap sample.
        let idx: Vec<usize> = (0..x.len()).map(|_| rng.random_range(0..x.len())).collect();
        let mut tree = Tree { nodes: Vec::new() };
        build_node(&mut tree, x, y, idx, 0, config, mtry, &mut rng);
        trees.push(tree);
    }
    Ok(ForestRegressor::Forest { trees, config: *config })
}

#[allow(clippy::too_many_arguments)]
fn build_node(
    tree: &mut Tree,
    x: &[Vec<f64>],
    y: &[f64],
    idx: Vec<usize>,
    depth: usize,
    cfg: &ForestConfig,
    mtry: usize,
    rng: &mut ChaCha20Rng,
) -> usize {
    let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    let node_id = tree.nodes.len();
    if depth >= cfg.max_depth || idx.len() < cfg.min_samples_split || constant_targets(y, &idx) {
        tree.nodes.push(Node::Leaf { value: mean });
        return node_id;
    }
    let d = x[0].len();
    let mut features: Vec<usize> = (0..d).collect();
    // Partial Fisher-Yates to pick mtry distinct features.
    for i in 0..mtry.min(d) {
        let j = rng.random_range(i..d);
        features.swap(i, j);
    }
    let mut best: Option<(usize, f64, f64)> = None; // (feature, threshold, score)
    for &f in features.iter().take(mtry) {
        let mut vals: Vec<(f64, f64)> = idx.iter().map(|&i| (x[i][f], y[i])).collect();
        vals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        // Prefix sums over the sorted order make every split O(1).
        let n = vals.len();
        let total: f64 = vals.iter().map(|v| v.1).sum();
        let total_sq: f64 = vals.iter().map(|v| v.1 * v.1).sum();
        let mut left_sum = 0.0;
        let mut left_sq = 0.0;
        for i in 0..n - 1 {
            left_sum += vals[i].1;
            left_sq += vals[i].1 * vals[i].1;
            if vals[i].0 == vals[i + 1].0 {
                continue;
            }
            let nl = (i + 1) as f64;
            let nr = (n - i - 1) as f64;
            let right_sum = total - left_sum;
            let right_sq = total_sq - left_sq;
            // Sum of squared errors after the split.
            let sse = (left_sq - left_sum * left_sum / nl) + (right_sq - right_sum * right_sum / nr);
            let threshold = 0.5 * (vals[i].0 + vals[i + 1].0);
            if best.map_or(true, |(_, _, s)| sse < s) {
                best = Some((f, threshold, sse));
            }
        }
    }
    let Some((feature, threshold, _)) = best else {
        tree.nodes.push(Node::Leaf { value: mean });
        return node_id;
    };
    let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
        idx.iter().partition(|&&i| x[i][feature] <= threshold);
    if left_idx.is_empty() || right_idx.is_empty() {
        tree.nodes.push(Node::Leaf { value: mean });
        return node_id;
    }
    tree.nodes.push(Node::Split { feature, threshold, left: 0, right: 0 });
    let left = build_node(tree, x, y, left_idx, depth + 1, cfg, mtry, rng);
    let right = build_node(tree, x, y, right_idx, depth + 1, cfg, mtry, rng);
    if let Node::Split { left: l, right: r, .. } = &mut tree.nodes[node_id] {
        *l = left;
        *r = right;
    }
    node_id
}

fn constant_targets(y: &[f64], idx: &[usize]) -> bool {
    let first = y[idx[0]];
    idx.iter().all(|&i| y[i] == first)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn memorizes_training_data() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let x: Vec<Vec<f64>> =
            (0..60).map(|_| (0..6).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| (r[0] + 0.5 * r[3]).clamp(0.0, 1.0)).collect();
        let forest = fit_forest(&x, &y, &ForestConfig::default(), 7).unwrap();
        let mae: f64 = x
            .iter()
            .zip(y.iter())
            .map(|(r, &t)| (forest.predict(r) - t).abs())
            .sum::<f64>()
            / y.len() as f64;
        assert!(mae < 0.05, "training MAE {mae}");
    }

    #[test]
    fn constant_targets_flagged() {
        let x = vec![vec![0.1, 0.2], vec![0.3, 0.4], vec![0.5, 0.6]];
        let y = vec![0.7; 3];
        let f = fit_forest(&x, &y, &ForestConfig::default(), 1).unwrap();
        assert!(f.is_constant());
        assert_eq!(f.predict(&[9.0, 9.0]), 0.7);
    }

    #[test]
    fn deterministic_given_seed() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let x: Vec<Vec<f64>> =
            (0..30).map(|_| (0..4).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| r[1]).collect();
        let a = fit_forest(&x, &y, &ForestConfig::default(), 3).unwrap();
        let b = fit_forest(&x, &y, &ForestConfig::default(), 3).unwrap();
        for row in &x {
            assert_eq!(a.predict(row), b.predict(row));
        }
    }
}
