//! CART regression trees grown from presorted feature orders.
//!
//! Each feature's row order is sorted once per fit (or once per ensemble)
//! and stably partitioned as the tree grows, so split search at a node is
//! linear in its row count. Split candidates are midpoints between
//! consecutive distinct values; the score of a row set with weighted target
//! sum `S` and weight `W` is `S^2 / (W + l2)`, which for `l2 = 0` makes the
//! gain equal to the reduction in weighted squared error.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_xyw, Predictor};
use crate::error::{Error, Result};
use crate::frame::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub min_weighted_samples_split: f64,
    /// Fraction of features considered at each split; `ceil(fraction * p)` are drawn.
    pub feature_subsample: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: 8,
            min_samples_leaf: 1,
            min_weighted_samples_split: 0.0,
            feature_subsample: 1.0,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::InvalidParam("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidParam("min_samples_leaf must be >= 1".into()));
        }
        if !(self.feature_subsample > 0.0 && self.feature_subsample <= 1.0) {
            return Err(Error::InvalidParam("feature_subsample must lie in (0, 1]".into()));
        }
        if !(self.min_weighted_samples_split >= 0.0) {
            return Err(Error::InvalidParam("min_weighted_samples_split must be >= 0".into()));
        }
        Ok(())
    }

    pub(crate) fn features_per_split(&self, p: usize) -> usize {
        ((self.feature_subsample * p as f64 - 1e-9).ceil() as usize).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    /// Split feature; `None` for leaves.
    pub feature: Option<usize>,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub value: f64,
    /// Score improvement of this split (0 for leaves).
    pub gain: f64,
    pub weight: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub n_features: usize,
    pub nodes: Vec<TreeNode>,
}

impl RegressionTree {
    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.feature.is_none()).count()
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &RegressionTree, i: usize) -> usize {
            let n = &t.nodes[i];
            match n.feature {
                None => 0,
                Some(_) => 1 + walk(t, n.left).max(walk(t, n.right)),
            }
        }
        walk(self, 0)
    }

    /// Adds each split's gain to `acc[feature]`.
    pub fn accumulate_gains(&self, acc: &mut [f64]) {
        for n in &self.nodes {
            if let Some(f) = n.feature {
                acc[f] += n.gain;
            }
        }
    }
}

impl Predictor for RegressionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            match n.feature {
                None => return n.value,
                Some(f) => i = if x[f] <= n.threshold { n.left } else { n.right },
            }
        }
    }
}

/// Column-major copy of a feature matrix with each column's row order.
pub(crate) struct SortedColumns {
    values: Vec<Vec<f64>>,
    order: Vec<Vec<u32>>,
}

impl SortedColumns {
    pub(crate) fn new(x: &FeatureMatrix) -> Self {
        let values = x.columns();
        let order = values
            .iter()
            .map(|col| {
                let mut idx: Vec<u32> = (0..col.len() as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { values, order }
    }

    pub(crate) fn n_features(&self) -> usize {
        self.values.len()
    }
}

/// Per-row training inputs: `target`, effective `weight`, and `count` (the
/// row's multiplicity; rows with count 0 are excluded).
pub(crate) struct GrowInput<'a> {
    pub target: &'a [f64],
    pub weight: &'a [f64],
    pub count: &'a [u32],
}

pub(crate) struct Grower<'a, R: Rng> {
    cols: &'a SortedColumns,
    input: GrowInput<'a>,
    params: &'a TreeParams,
    l2: f64,
    rng: &'a mut R,
    nodes: Vec<TreeNode>,
    goes_left: Vec<bool>,
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

const PURE_TOL: f64 = 1e-14;

impl<'a, R: Rng> Grower<'a, R> {
    pub(crate) fn new(
        cols: &'a SortedColumns,
        input: GrowInput<'a>,
        params: &'a TreeParams,
        l2: f64,
        rng: &'a mut R,
    ) -> Self {
        let n = input.target.len();
        Self {
            cols,
            input,
            params,
            l2,
            rng,
            nodes: Vec::new(),
            goes_left: vec![false; n],
        }
    }

    pub(crate) fn grow(mut self) -> RegressionTree {
        let p = self.cols.n_features();
        let root: Vec<Vec<u32>> = if p == 0 {
            vec![(0..self.input.target.len() as u32)
                .filter(|&i| self.input.count[i as usize] > 0)
                .collect()]
        } else {
            self.cols
                .order
                .iter()
                .map(|o| o.iter().copied().filter(|&i| self.input.count[i as usize] > 0).collect())
                .collect()
        };
        self.build(root, 0);
        RegressionTree {
            n_features: p,
            nodes: self.nodes,
        }
    }

    fn build(&mut self, lists: Vec<Vec<u32>>, depth: usize) -> usize {
        let rows = &lists[0];
        let (mut s, mut w, mut ss, mut cnt) = (0.0, 0.0, 0.0, 0usize);
        for &i in rows {
            let i = i as usize;
            let wi = self.input.weight[i];
            let t = self.input.target[i];
            s += wi * t;
            w += wi;
            ss += wi * t * t;
            cnt += self.input.count[i] as usize;
        }
        let value = if w + self.l2 > 0.0 { s / (w + self.l2) } else { 0.0 };
        let id = self.nodes.len();
        self.nodes.push(TreeNode {
            feature: None,
            threshold: 0.0,
            left: 0,
            right: 0,
            value,
            gain: 0.0,
            weight: w,
            count: cnt,
        });

        let sse = if w > 0.0 { ss - s * s / w } else { 0.0 };
        let pure = sse <= PURE_TOL * ss.max(f64::MIN_POSITIVE);
        if depth >= self.params.max_depth
            || pure
            || cnt < 2 * self.params.min_samples_leaf
            || w < self.params.min_weighted_samples_split
            || self.cols.n_features() == 0
        {
            return id;
        }
        let Some(split) = self.best_split(&lists, s, w, sse) else {
            return id;
        };

        let col = &self.cols.values[split.feature];
        for &i in rows {
            self.goes_left[i as usize] = col[i as usize] <= split.threshold;
        }
        let mut left_lists = Vec::with_capacity(lists.len());
        let mut right_lists = Vec::with_capacity(lists.len());
        for list in &lists {
            let (l, r): (Vec<u32>, Vec<u32>) = list.iter().partition(|&&i| self.goes_left[i as usize]);
            left_lists.push(l);
            right_lists.push(r);
        }
        drop(lists);
        let left = self.build(left_lists, depth + 1);
        let right = self.build(right_lists, depth + 1);
        let node = &mut self.nodes[id];
        node.feature = Some(split.feature);
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        node.gain = split.gain;
        id
    }

    fn best_split(&mut self, lists: &[Vec<u32>], s: f64, w: f64, sse: f64) -> Option<Split> {
        let p = self.cols.n_features();
        let k = self.params.features_per_split(p);
        let mut feats: Vec<usize> = if k < p {
            sample(self.rng, p, k).into_vec()
        } else {
            (0..p).collect()
        };
        feats.sort_unstable();

        // For CART (l2 = 0) work with targets centered at the node mean; the
        // gain is unchanged algebraically and cancellation is avoided.
        let center = if self.l2 == 0.0 && w > 0.0 { s / w } else { 0.0 };
        let s_total = s - center * w;
        let parent = s_total * s_total / (w + self.l2);
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Split> = None;
        for f in feats {
            let col = &self.cols.values[f];
            let list = &lists[f];
            let total_count: usize = list.iter().map(|&i| self.input.count[i as usize] as usize).sum();
            let (mut sl, mut wl, mut cl) = (0.0, 0.0, 0usize);
            for pos in 0..list.len().saturating_sub(1) {
                let i = list[pos] as usize;
                let wi = self.input.weight[i];
                sl += wi * (self.input.target[i] - center);
                wl += wi;
                cl += self.input.count[i] as usize;
                let xi = col[i];
                let xn = col[list[pos + 1] as usize];
                if xn <= xi {
                    continue;
                }
                if cl < min_leaf || total_count - cl < min_leaf {
                    continue;
                }
                let sr = s_total - sl;
                let wr = w - wl;
                let gain = sl * sl / (wl + self.l2) + sr * sr / (wr + self.l2) - parent;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    best = Some(Split {
                        feature: f,
                        threshold: xi + (xn - xi) / 2.0,
                        gain,
                    });
                }
            }
        }
        best.filter(|b| b.gain > 0.0 && b.gain > 1e-12 * sse)
    }
}

/// Fits a single CART tree on weighted squared error.
pub fn fit_tree(
    x: &FeatureMatrix,
    y: &[f64],
    w: &[f64],
    params: &TreeParams,
    rng: &mut impl Rng,
) -> Result<RegressionTree> {
    check_xyw(x, y, w)?;
    params.validate()?;
    let cols = SortedColumns::new(x);
    let count = vec![1u32; y.len()];
    let input = GrowInput {
        target: y,
        weight: w,
        count: &count,
    };
    Ok(Grower::new(&cols, input, params, 0.0, rng).grow())
}
