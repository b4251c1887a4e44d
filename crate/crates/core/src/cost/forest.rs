//! Bagged CART regression trees. Kept in-repo so weight predictions are
//! deterministic under a fixed seed and serializable into the
//! calibration artifact.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::Real;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            trees: 50,
            max_depth: 12,
            min_leaf: 2,
            seed: 0x5eed,
        }
    }
}

const LEAF: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode<F> {
    pub feature: u16,
    pub threshold: F,
    pub left: u32,
    pub right: u32,
    pub value: F,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree<F> {
    nodes: Vec<TreeNode<F>>,
}

impl<F: Real> RegressionTree<F> {
    pub fn predict(&self, x: &[F]) -> F {
        let mut i = 0usize;
        loop {
            let node = &self.nodes[i];
            if node.feature == LEAF {
                return node.value;
            }
            i = if x[node.feature as usize] <= node.threshold {
                node.left as usize
            } else {
                node.right as usize
            };
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

struct TreeBuilder<'a, F> {
    features: &'a [F],
    n_features: usize,
    targets: &'a [F],
    max_depth: usize,
    min_leaf: usize,
    nodes: Vec<TreeNode<F>>,
}

impl<'a, F: Real> TreeBuilder<'a, F> {
    fn x(&self, row: usize, feat: usize) -> F {
        self.features[row * self.n_features + feat]
    }

    fn leaf(&mut self, rows: &[usize]) -> u32 {
        let mut sum = F::zero();
        for &r in rows {
            sum = sum + self.targets[r];
        }
        let value = sum / F::from_usize(rows.len()).unwrap();
        self.nodes.push(TreeNode {
            feature: LEAF,
            threshold: F::zero(),
            left: 0,
            right: 0,
            value,
        });
        (self.nodes.len() - 1) as u32
    }

    fn grow(&mut self, rows: &mut Vec<usize>, depth: usize) -> u32 {
        if depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
            return self.leaf(rows);
        }
        let n = rows.len();
        let nf = F::from_usize(n).unwrap();
        let mut total = F::zero();
        let mut total_sq = F::zero();
        for &r in rows.iter() {
            let y = self.targets[r];
            total = total + y;
            total_sq = total_sq + y * y;
        }
        let parent_sse = total_sq - total * total / nf;
        if parent_sse <= F::zero() {
            return self.leaf(rows);
        }

        // Best split over every feature: scan split points between
        // distinct adjacent values, tracking the summed child SSE. Ties
        // break on the smaller threshold value, which keeps the choice
        // independent of feature column order.
        let mut best: Option<(F, usize, F)> = None; // (child sse, feature, threshold)
        let mut order: Vec<usize> = Vec::with_capacity(n);
        for feat in 0..self.n_features {
            order.clear();
            order.extend_from_slice(rows);
            order.sort_unstable_by(|&a, &b| {
                self.x(a, feat)
                    .partial_cmp(&self.x(b, feat))
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut left_sum = F::zero();
            let mut left_sq = F::zero();
            for k in 0..n - 1 {
                let r = order[k];
                let y = self.targets[r];
                left_sum = left_sum + y;
                left_sq = left_sq + y * y;
                let xa = self.x(r, feat);
                let xb = self.x(order[k + 1], feat);
                if xa == xb {
                    continue;
                }
                let left_n = k + 1;
                let right_n = n - left_n;
                if left_n < self.min_leaf || right_n < self.min_leaf {
                    continue;
                }
                let lf = F::from_usize(left_n).unwrap();
                let rf = F::from_usize(right_n).unwrap();
                let right_sum = total - left_sum;
                let right_sq = total_sq - left_sq;
                let sse = (left_sq - left_sum * left_sum / lf)
                    + (right_sq - right_sum * right_sum / rf);
                let two = F::from_f64(2.0).unwrap();
                let threshold = (xa + xb) / two;
                if best.map_or(true, |(b_sse, _, b_thr)| {
                    sse < b_sse || (sse == b_sse && threshold < b_thr)
                }) {
                    best = Some((sse, feat, threshold));
                }
            }
        }
        let Some((child_sse, feat, threshold)) = best else {
            return self.leaf(rows);
        };
        if child_sse >= parent_sse {
            return self.leaf(rows);
        }
        let (mut left_rows, mut right_rows): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.x(r, feat) <= threshold);
        debug_assert!(!left_rows.is_empty() && !right_rows.is_empty());
        self.nodes.push(TreeNode {
            feature: feat as u16,
            threshold,
            left: 0,
            right: 0,
            value: total / nf,
        });
        let me = self.nodes.len() - 1;
        let left = self.grow(&mut left_rows, depth + 1);
        let right = self.grow(&mut right_rows, depth + 1);
        self.nodes[me].left = left;
        self.nodes[me].right = right;
        me as u32
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest<F> {
    trees: Vec<RegressionTree<F>>,
    n_features: usize,
}

impl<F: Real> RandomForest<F> {
    /// Fit on a row-major feature matrix. Also returns, per tree, the
    /// bootstrap multiplicity of every row, for out-of-bag estimates.
    pub fn fit(
        features: &[F],
        n_features: usize,
        targets: &[F],
        cfg: &ForestConfig,
    ) -> (Self, Vec<Vec<u32>>) {
        let n = targets.len();
        assert_eq!(features.len(), n * n_features);
        assert!(n > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut trees = Vec::with_capacity(cfg.trees);
        let mut bags = Vec::with_capacity(cfg.trees);
        for _ in 0..cfg.trees {
            let mut bag = vec![0u32; n];
            let mut rows: Vec<usize> = Vec::with_capacity(n);
            for _ in 0..n {
                let r = rng.gen_range(0..n);
                bag[r] += 1;
                rows.push(r);
            }
            rows.sort_unstable();
            let mut builder = TreeBuilder {
                features,
                n_features,
                targets,
                max_depth: cfg.max_depth,
                min_leaf: cfg.min_leaf,
                nodes: Vec::new(),
            };
            let root = builder.grow(&mut rows, 0);
            debug_assert_eq!(root, 0);
            trees.push(RegressionTree {
                nodes: builder.nodes,
            });
            bags.push(bag);
        }
        (
            RandomForest {
                trees,
                n_features,
            },
            bags,
        )
    }

    pub fn predict(&self, x: &[F]) -> F {
        debug_assert_eq!(x.len(), self.n_features);
        let mut sum = F::zero();
        for tree in &self.trees {
            sum = sum + tree.predict(x);
        }
        sum / F::from_usize(self.trees.len()).unwrap()
    }

    pub fn trees(&self) -> &[RegressionTree<F>] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }
}
