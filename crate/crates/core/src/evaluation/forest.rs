//! CART classification trees with Gini impurity, bagged into a forest.
//!
//! Trees are grown to the configured depth once; shallower forests are read
//! off the same trees by stopping descent early, since every node keeps the
//! class counts of the samples that reached it.

use super::{EvalError, Result};
use crate::autodiff::NoiseSource;
use rayon::prelude::*;
use std::cmp::Ordering;

/// Labels are action codes.
pub const CLASSES: usize = 4;

/// Row-major feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    width: usize,
    data: Vec<f64>,
}

impl Features {
    pub fn new(width: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || !data.len().is_multiple_of(width) {
            return Err(EvalError::InvalidConfig(format!(
                "{} values do not form rows of width {width}",
                data.len()
            )));
        }
        Ok(Self { width, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let width = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * width);
        for r in rows {
            if r.as_ref().len() != width {
                return Err(EvalError::InvalidConfig("ragged feature rows".into()));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(width, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.width
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.width..(i + 1) * self.width]
    }

    #[inline]
    fn at(&self, i: usize, f: usize) -> f64 {
        self.data[i * self.width + f]
    }

    /// The listed rows, in order.
    pub fn select(&self, rows: &[usize]) -> Features {
        let mut data = Vec::with_capacity(rows.len() * self.width);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Features {
            width: self.width,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestConfig {
    pub trees: usize,
    pub max_depth: usize,
    pub seed: u64,
    /// Draw a bootstrap sample per tree; off grows every tree on the full set.
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            trees: 100,
            max_depth: 10,
            seed: 0,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Split {
    feature: usize,
    threshold: f64,
    left: usize,
    right: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Node {
    counts: [u32; CLASSES],
    depth: usize,
    split: Option<Split>,
}

/// Lowest class index wins ties.
fn argmax(counts: &[u32; CLASSES]) -> usize {
    let mut best = 0;
    for c in 1..CLASSES {
        if counts[c] > counts[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Class counts held by every leaf.
    pub fn leaf_counts(&self) -> Vec<[u32; CLASSES]> {
        self.nodes
            .iter()
            .filter(|n| n.split.is_none())
            .map(|n| n.counts)
            .collect()
    }

    /// Majority class of the node `x` reaches when descent stops at `depth`.
    pub fn predict_row(&self, x: &[f64], depth: usize) -> usize {
        let mut node = &self.nodes[0];
        while let Some(s) = node.split {
            if node.depth >= depth {
                break;
            }
            node = if x[s.feature] <= s.threshold {
                &self.nodes[s.left]
            } else {
                &self.nodes[s.right]
            };
        }
        argmax(&node.counts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecisionForest {
    config: ForestConfig,
    trees: Vec<DecisionTree>,
}

impl DecisionForest {
    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn predict_row(&self, x: &[f64], depth: usize) -> usize {
        let mut votes = [0u32; CLASSES];
        for t in &self.trees {
            votes[t.predict_row(x, depth)] += 1;
        }
        argmax(&votes)
    }

    /// Predictions at the full trained depth.
    pub fn predict(&self, features: &Features) -> Vec<u8> {
        self.predict_at_depth(features, self.config.max_depth)
    }

    /// Predictions of the same forest truncated to `depth`.
    pub fn predict_at_depth(&self, features: &Features, depth: usize) -> Vec<u8> {
        (0..features.len())
            .map(|i| self.predict_row(features.row(i), depth) as u8)
            .collect()
    }

    /// Fraction of rows predicted correctly at `depth`.
    pub fn accuracy(&self, features: &Features, labels: &[u8], depth: usize) -> f64 {
        if labels.is_empty() {
            return 0.0;
        }
        let hits = self
            .predict_at_depth(features, depth)
            .iter()
            .zip(labels)
            .filter(|(p, l)| p == l)
            .count();
        hits as f64 / labels.len() as f64
    }
}

/// Weighted Gini cost `n_l * gini_l + n_r * gini_r`.
fn split_cost(left: &[u64; CLASSES], right: &[u64; CLASSES]) -> f64 {
    let side = |c: &[u64; CLASSES]| -> f64 {
        let n: u64 = c.iter().sum();
        if n == 0 {
            return 0.0;
        }
        let sq: f64 = c.iter().map(|&v| (v as f64) * (v as f64)).sum();
        n as f64 - sq / n as f64
    };
    side(left) + side(right)
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // Adjacent floats: keep `a` on the left.
    if m >= b {
        a
    } else {
        m
    }
}

/// Per-tree growth state. Each feature keeps the in-bag samples sorted by
/// value; a node owns the same contiguous range in every ordering.
struct Grower<'a> {
    x: &'a Features,
    labels: &'a [u8],
    weights: Vec<u32>,
    orders: Vec<Vec<u32>>,
    scratch: Vec<u32>,
    goes_left: Vec<bool>,
    max_depth: usize,
}

impl Grower<'_> {
    fn counts(&self, lo: usize, hi: usize) -> [u32; CLASSES] {
        let mut c = [0u32; CLASSES];
        for &i in &self.orders[0][lo..hi] {
            c[self.labels[i as usize] as usize] += self.weights[i as usize];
        }
        c
    }

    /// Best `(feature, threshold, left_len)`; scans features in order and
    /// thresholds upward, keeping the first strict improvement.
    fn best_split(
        &self,
        lo: usize,
        hi: usize,
        total: &[u32; CLASSES],
    ) -> Option<(usize, f64, usize)> {
        let total: [u64; CLASSES] = total.map(u64::from);
        let mut best: Option<(f64, usize, f64, usize)> = None;
        for f in 0..self.x.width() {
            let order = &self.orders[f][lo..hi];
            let mut left = [0u64; CLASSES];
            for p in 0..order.len() - 1 {
                let i = order[p] as usize;
                left[self.labels[i] as usize] += u64::from(self.weights[i]);
                let a = self.x.at(i, f);
                let b = self.x.at(order[p + 1] as usize, f);
                if a == b {
                    continue;
                }
                let mut right = total;
                for c in 0..CLASSES {
                    right[c] -= left[c];
                }
                let cost = split_cost(&left, &right);
                if best.is_none_or(|(bc, ..)| cost < bc) {
                    best = Some((cost, f, midpoint(a, b), p + 1));
                }
            }
        }
        best.map(|(_, f, t, len)| (f, t, len))
    }

    fn partition(&mut self, lo: usize, hi: usize, feature: usize, left_len: usize) {
        for p in lo..hi {
            let i = self.orders[feature][p] as usize;
            self.goes_left[i] = p < lo + left_len;
        }
        for f in 0..self.orders.len() {
            if f == feature {
                continue;
            }
            self.scratch.clear();
            let seg = &mut self.orders[f][lo..hi];
            let mut w = 0;
            for r in 0..seg.len() {
                let i = seg[r];
                if self.goes_left[i as usize] {
                    seg[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
        }
    }

    fn grow(mut self) -> DecisionTree {
        let n = self.orders[0].len();
        let mut nodes = vec![Node {
            counts: self.counts(0, n),
            depth: 0,
            split: None,
        }];
        let mut stack = vec![(0usize, 0usize, n)];
        while let Some((id, lo, hi)) = stack.pop() {
            let node = &nodes[id];
            let impure = node.counts.iter().filter(|&&c| c > 0).count() > 1;
            if node.depth >= self.max_depth || !impure || hi - lo < 2 {
                continue;
            }
            let depth = node.depth;
            let counts = node.counts;
            let Some((feature, threshold, left_len)) = self.best_split(lo, hi, &counts) else {
                continue;
            };
            self.partition(lo, hi, feature, left_len);
            let mid = lo + left_len;
            let left = nodes.len();
            nodes.push(Node {
                counts: self.counts(lo, mid),
                depth: depth + 1,
                split: None,
            });
            nodes.push(Node {
                counts: self.counts(mid, hi),
                depth: depth + 1,
                split: None,
            });
            nodes[id].split = Some(Split {
                feature,
                threshold,
                left,
                right: left + 1,
            });
            stack.push((left + 1, mid, hi));
            stack.push((left, lo, mid));
        }
        DecisionTree { nodes }
    }
}

fn validate(x: &Features, labels: &[u8]) -> Result<()> {
    if x.is_empty() || labels.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if x.len() != labels.len() {
        return Err(EvalError::InvalidConfig(format!(
            "{} feature rows but {} labels",
            x.len(),
            labels.len()
        )));
    }
    for i in 0..x.len() {
        if !x.row(i).iter().all(|v| v.is_finite()) {
            return Err(EvalError::NonFinite(i));
        }
    }
    if let Some((row, &label)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= CLASSES)
    {
        return Err(EvalError::BadLabel { row, label });
    }
    Ok(())
}

/// Bagged CART forest. Tree `t` draws its bootstrap sample from noise stream
/// `t + 1` of `seed`, so the result does not depend on how trees are
/// scheduled across threads.
pub fn train_decision_forest(
    x: &Features,
    labels: &[u8],
    config: ForestConfig,
) -> Result<DecisionForest> {
    validate(x, labels)?;
    if config.trees == 0 {
        return Err(EvalError::InvalidConfig(
            "a forest needs at least one tree".into(),
        ));
    }
    let n = x.len();
    // Presort once; each tree filters these orders down to its in-bag rows.
    let sorted: Vec<Vec<u32>> = (0..x.width())
        .map(|f| {
            let mut idx: Vec<u32> = (0..n as u32).collect();
            idx.sort_by(|&a, &b| {
                x.at(a as usize, f)
                    .partial_cmp(&x.at(b as usize, f))
                    .unwrap_or(Ordering::Equal)
                    .then(a.cmp(&b))
            });
            idx
        })
        .collect();

    let trees = (0..config.trees)
        .into_par_iter()
        .map(|t| {
            let weights = if config.bootstrap {
                let mut rng = NoiseSource::stream(config.seed, t as u64 + 1);
                let mut w = vec![0u32; n];
                for _ in 0..n {
                    w[rng.index(n)] += 1;
                }
                w
            } else {
                vec![1u32; n]
            };
            let orders: Vec<Vec<u32>> = sorted
                .iter()
                .map(|o| {
                    o.iter()
                        .copied()
                        .filter(|&i| weights[i as usize] > 0)
                        .collect()
                })
                .collect();
            Grower {
                x,
                labels,
                weights,
                orders,
                scratch: Vec::new(),
                goes_left: vec![false; n],
                max_depth: config.max_depth,
            }
            .grow()
        })
        .collect();
    Ok(DecisionForest { config, trees })
}
