//! Bagged CART regression trees split on variance reduction.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_inputs, Algorithm, FittedModel, MaxFeatures, ModelParams, Standardizer};
use crate::error::Result;
use crate::genomic::DesignMatrix;
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestOptions {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_leaf: usize,
    pub seed: u64,
    /// Draw each tree's rows with replacement (sample size n).
    pub bootstrap: bool,
}

impl Default for ForestOptions {
    fn default() -> Self {
        ForestOptions {
            n_trees: 100,
            max_features: MaxFeatures::Sqrt,
            min_leaf: 1,
            seed: 0,
            bootstrap: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        value: f64,
        samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        samples: usize,
        /// Drop in summed squared error, divided by the tree's sample count.
        impurity_decrease: f64,
    },
}

/// Nodes in a flat arena; node 0 is the root.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                TreeNode::Leaf { value, .. } => return *value,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    fn importance(&self, n_features: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_features];
        for node in &self.nodes {
            if let TreeNode::Split {
                feature,
                impurity_decrease,
                ..
            } = node
            {
                out[*feature] += impurity_decrease;
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub n_features: usize,
}

impl ForestModel {
    pub(crate) fn predict(&self, x: ArrayView2<f64>) -> Vec<f64> {
        x.rows()
            .into_iter()
            .map(|row| {
                let row = row.to_vec();
                self.trees.iter().map(|t| t.predict_row(&row)).sum::<f64>() / self.trees.len() as f64
            })
            .collect()
    }

    /// Per-tree impurity decrease averaged over trees (not normalized).
    pub fn impurity_decrease(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.n_features];
        for t in &self.trees {
            for (a, b) in total.iter_mut().zip(t.importance(self.n_features)) {
                *a += b;
            }
        }
        total.iter_mut().for_each(|v| *v /= self.trees.len() as f64);
        total
    }
}

pub fn fit_random_forest(x: &DesignMatrix, y: &[f64], opts: &ForestOptions) -> Result<FittedModel> {
    check_inputs(x, y)?;
    if opts.n_trees == 0 || opts.min_leaf == 0 {
        return Err(crate::error::Error::invalid("random forest needs n_trees >= 1 and min_leaf >= 1"));
    }
    let n = y.len();
    let p = x.ncols();
    // column-major copy for split scans
    let columns: Vec<Vec<f64>> = x.values.columns().into_iter().map(|c| c.to_vec()).collect();
    let mtry = opts.max_features.resolve(p);

    let trees = (0..opts.n_trees)
        .map(|t| {
            let mut rng = seed::rng(opts.seed, &[t as u64]);
            let rows: Vec<usize> = if opts.bootstrap {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            TreeBuilder {
                columns: &columns,
                y,
                min_leaf: opts.min_leaf,
                mtry,
                total: rows.len() as f64,
                nodes: Vec::new(),
            }
            .build(rows, &mut rng)
        })
        .collect();

    Ok(FittedModel {
        algorithm: Algorithm::RandomForest,
        columns: x.column_names.clone(),
        standardizer: Standardizer::fit(x.values.view()),
        params: ModelParams::RandomForest(ForestModel { trees, n_features: p }),
    })
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    min_leaf: usize,
    mtry: usize,
    total: f64,
    nodes: Vec<TreeNode>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

impl TreeBuilder<'_> {
    fn build<R: Rng>(mut self, rows: Vec<usize>, rng: &mut R) -> Tree {
        // (node slot, rows) work stack; slots are filled in place
        self.nodes.push(TreeNode::Leaf { value: 0.0, samples: 0 });
        let mut stack = vec![(0usize, rows)];
        while let Some((slot, rows)) = stack.pop() {
            let n = rows.len();
            let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
            let mean = sum / n as f64;
            let sse: f64 = rows.iter().map(|&r| (self.y[r] - mean).powi(2)).sum();
            let split = if n >= 2 * self.min_leaf && sse > 0.0 {
                self.best_split(&rows, sum, rng)
            } else {
                None
            };
            match split {
                None => self.nodes[slot] = TreeNode::Leaf { value: mean, samples: n },
                Some(best) => {
                    let (left, right): (Vec<usize>, Vec<usize>) = rows
                        .iter()
                        .partition(|&&r| self.columns[best.feature][r] <= best.threshold);
                    let child_sse = |rs: &[usize]| {
                        let m = rs.iter().map(|&r| self.y[r]).sum::<f64>() / rs.len() as f64;
                        rs.iter().map(|&r| (self.y[r] - m).powi(2)).sum::<f64>()
                    };
                    let decrease = (sse - child_sse(&left) - child_sse(&right)).max(0.0) / self.total;
                    let l = self.nodes.len();
                    self.nodes.push(TreeNode::Leaf { value: 0.0, samples: 0 });
                    self.nodes.push(TreeNode::Leaf { value: 0.0, samples: 0 });
                    self.nodes[slot] = TreeNode::Split {
                        feature: best.feature,
                        threshold: best.threshold,
                        left: l,
                        right: l + 1,
                        samples: n,
                        impurity_decrease: decrease,
                    };
                    stack.push((l + 1, right));
                    stack.push((l, left));
                }
            }
        }
        Tree { nodes: self.nodes }
    }

    /// Scans features in random order until `mtry` non-constant ones have
    /// been examined; maximizes `S_l²/n_l + S_r²/n_r`.
    fn best_split<R: Rng>(&self, rows: &[usize], sum: f64, rng: &mut R) -> Option<BestSplit> {
        let n = rows.len();
        let mut order: Vec<usize> = (0..self.columns.len()).collect();
        order.shuffle(rng);
        let mut best: Option<BestSplit> = None;
        let mut examined = 0;
        let mut sorted: Vec<(f64, f64)> = Vec::with_capacity(n);
        for f in order {
            if examined >= self.mtry {
                break;
            }
            let col = &self.columns[f];
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (col[r], self.y[r])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            if sorted[0].0 == sorted[n - 1].0 {
                continue;
            }
            examined += 1;
            let mut left_sum = 0.0;
            for k in 1..n {
                left_sum += sorted[k - 1].1;
                if k < self.min_leaf || n - k < self.min_leaf || sorted[k - 1].0 == sorted[k].0 {
                    continue;
                }
                let right_sum = sum - left_sum;
                let score = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64;
                if best.as_ref().map_or(true, |b| score > b.score) {
                    let (lo, hi) = (sorted[k - 1].0, sorted[k].0);
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}
