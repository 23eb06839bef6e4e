//! Bagged regression trees.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EnsembleError;
use crate::numeric::bounded_mean;

/// Version tag written into serialized models.
pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestHyper {
    pub tree_count: usize,
    /// A split is only taken when both children keep at least this many rows.
    pub min_leaf: usize,
    /// Features drawn at each node; `None` means `ceil(p / 3)`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestHyper {
    fn default() -> Self {
        Self {
            tree_count: 100,
            min_leaf: 5,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestHyper {
    /// One tree on the full sample, every feature at every node, grown until
    /// leaves are pure.
    pub fn single_unpruned_tree() -> Self {
        Self {
            tree_count: 1,
            min_leaf: 1,
            features_per_split: Some(usize::MAX),
            bootstrap: false,
        }
    }

    fn mtry(&self, p: usize) -> usize {
        self.features_per_split.unwrap_or(p.div_ceil(3)).clamp(1, p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        rows: usize,
    },
    /// Rows with `x[feature] < threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    pub fn min_leaf_rows(&self) -> usize {
        match self {
            Node::Leaf { rows, .. } => *rows,
            Node::Split { left, right, .. } => left.min_leaf_rows().min(right.min_leaf_rows()),
        }
    }
}

/// Best axis-aligned split of `rows`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    pub sse: f64,
}

/// Scans every midpoint between consecutive distinct values of each listed
/// feature and returns the split with the smallest summed child SSE. Ties go
/// to the earlier feature in `features`, then to the lower threshold; SSEs
/// within rounding noise of each other count as tied.
pub fn best_split(x: &[Vec<f64>], y: &[f64], rows: &[usize], features: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = rows.len();
    let min_leaf = min_leaf.max(1);
    let mut best: Option<SplitChoice> = None;
    let mut order = rows.to_vec();
    for &f in features {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]).then(a.cmp(&b)));
        let total: f64 = order.iter().map(|&r| y[r]).sum();
        let total_sq: f64 = order.iter().map(|&r| y[r] * y[r]).sum();
        let tol = 1e-12 * (total_sq - total * total / n as f64).abs().max(f64::MIN_POSITIVE);
        let (mut sum_l, mut sq_l) = (0.0, 0.0);
        for i in 1..n {
            let prev = order[i - 1];
            sum_l += y[prev];
            sq_l += y[prev] * y[prev];
            let (lo, hi) = (x[prev][f], x[order[i]][f]);
            if lo == hi || i < min_leaf || n - i < min_leaf {
                continue;
            }
            let (nl, nr) = (i as f64, (n - i) as f64);
            let sum_r = total - sum_l;
            let sse = (sq_l - sum_l * sum_l / nl) + ((total_sq - sq_l) - sum_r * sum_r / nr);
            if best.is_none_or(|b| sse < b.sse - tol) {
                best = Some(SplitChoice { feature: f, threshold: lo + (hi - lo) / 2.0, sse });
            }
        }
    }
    best
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    min_leaf: usize,
    mtry: usize,
    p: usize,
}

impl Grower<'_> {
    fn grow(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Node {
        let values: Vec<f64> = rows.iter().map(|&r| self.y[r]).collect();
        let leaf = || Node::Leaf { value: bounded_mean(&values), rows: rows.len() };
        let constant = values.iter().all(|&v| v == values[0]);
        if constant || rows.len() < 2 * self.min_leaf {
            return leaf();
        }
        let features: Vec<usize> = if self.mtry >= self.p {
            (0..self.p).collect()
        } else {
            let mut f = sample(rng, self.p, self.mtry).into_vec();
            f.sort_unstable();
            f
        };
        let Some(split) = best_split(self.x, self.y, rows, &features, self.min_leaf) else {
            return leaf();
        };
        let (left, right): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.x[r][split.feature] < split.threshold);
        Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(self.grow(&left, rng)),
            right: Box::new(self.grow(&right, rng)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub root: Node,
    /// How often each training row was drawn into this tree's sample.
    pub sample_counts: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub format_version: u32,
    pub horizon: u32,
    pub seed: u64,
    pub hyper: ForestHyper,
    pub arity: usize,
    pub target_range: (f64, f64),
    /// Out-of-bag mean squared error, when any row was left out somewhere.
    pub oob_mse: Option<f64>,
    pub trees: Vec<Tree>,
}

/// Fits `hyper.tree_count` trees. Tree `i` draws from its own ChaCha stream
/// `i` under `seed`, so the model does not depend on thread scheduling.
pub fn fit_forest(x: &[Vec<f64>], y: &[f64], hyper: ForestHyper, seed: u64, horizon: u32) -> Result<ForestModel, EnsembleError> {
    if x.is_empty() {
        return Err(EnsembleError::NoTrainingRows);
    }
    if x.len() != y.len() {
        return Err(EnsembleError::Arity { expected: x.len(), got: y.len() });
    }
    let p = x[0].len();
    if let Some(row) = x.iter().find(|r| r.len() != p) {
        return Err(EnsembleError::Arity { expected: p, got: row.len() });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(EnsembleError::NonFinite);
    }
    if hyper.tree_count == 0 {
        return Err(EnsembleError::Hyper("tree_count must be positive".into()));
    }
    let n = x.len();
    let grower = Grower { x, y, min_leaf: hyper.min_leaf.max(1), mtry: hyper.mtry(p), p };
    let trees: Vec<Tree> = (0..hyper.tree_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut counts = vec![0u32; n];
            let rows: Vec<usize> = if hyper.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            for &r in &rows {
                counts[r] += 1;
            }
            Tree { root: grower.grow(&rows, &mut rng), sample_counts: counts }
        })
        .collect();

    let mut oob_err = 0.0;
    let mut oob_rows = 0usize;
    for (r, (xr, yr)) in x.iter().zip(y).enumerate() {
        let out: Vec<f64> = trees.iter().filter(|t| t.sample_counts[r] == 0).map(|t| t.root.predict(xr)).collect();
        if !out.is_empty() {
            oob_err += (bounded_mean(&out) - yr).powi(2);
            oob_rows += 1;
        }
    }
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(ForestModel {
        format_version: FOREST_FORMAT_VERSION,
        horizon,
        seed,
        hyper,
        arity: p,
        target_range: (lo, hi),
        oob_mse: (oob_rows > 0).then(|| oob_err / oob_rows as f64),
        trees,
    })
}

impl ForestModel {
    /// Mean of the per-tree leaf values, before any clamping.
    pub fn predict_raw(&self, x: &[f64]) -> Result<f64, EnsembleError> {
        if x.len() != self.arity {
            return Err(EnsembleError::Arity { expected: self.arity, got: x.len() });
        }
        let out: Vec<f64> = self.trees.iter().map(|t| t.root.predict(x)).collect();
        Ok(bounded_mean(&out))
    }

    /// Forest prediction for a count target, clamped at zero.
    pub fn predict(&self, x: &[f64]) -> Result<f64, EnsembleError> {
        Ok(self.predict_raw(x)?.max(0.0))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("forest models serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, EnsembleError> {
        let model: ForestModel = serde_json::from_str(text).map_err(|e| EnsembleError::Format(e.to_string()))?;
        if model.format_version != FOREST_FORMAT_VERSION {
            return Err(EnsembleError::Format(format!("unsupported forest format {}", model.format_version)));
        }
        Ok(model)
    }
}
