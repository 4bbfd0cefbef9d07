//! Gradient-boosted regression trees for squared-error loss with an ℓ2
//! penalty on leaf weights, and the direct multistep wrapper that trains one
//! ensemble per forecast horizon on flattened input windows.
//!
//! Splits are found by exact greedy search: every midpoint between
//! consecutive distinct feature values is scored with the second-order gain.
//! Feature orderings are computed once per ensemble and partitioned in place
//! as the tree grows.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::WindowSample;
use crate::linalg::Mat;
use crate::{HORIZON, INPUT_DAYS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtConfig {
    pub n_trees: usize,
    pub learning_rate: f64,
    pub max_depth: usize,
    /// ℓ2 penalty on leaf weights.
    pub lambda: f64,
    /// Minimum gain for a split to be kept.
    pub gamma: f64,
    /// Minimum hessian sum (sample count for squared error) in each child.
    pub min_child_weight: f64,
    /// Unused by the exact algorithm; kept so runs record their seed.
    pub seed: u64,
}

impl Default for GbtConfig {
    fn default() -> Self {
        Self { n_trees: 100, learning_rate: 0.05, max_depth: 3, lambda: 1.0, gamma: 0.0, min_child_weight: 1.0, seed: 0 }
    }
}

impl GbtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::config(format!("learning rate {} outside (0, 1]", self.learning_rate)));
        }
        if !(self.lambda >= 0.0) || !(self.gamma >= 0.0) || !(self.min_child_weight >= 0.0) {
            return Err(Error::config("lambda, gamma and min_child_weight must be non-negative"));
        }
        Ok(())
    }
}

/// Sentinel feature index marking a leaf.
pub const LEAF: u32 = u32::MAX;

/// A node of a tree stored in preorder. Internal nodes send `x[feature] <
/// threshold` to `left`; leaves carry the unshrunk weight in `value`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub feature: u32,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
    pub value: f64,
    /// Hessian sum (training samples) reaching the node.
    pub cover: f64,
    /// Split gain; zero for leaves.
    pub gain: f64,
}

impl TreeNode {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self { feature: LEAF, threshold: 0.0, left: 0, right: 0, value, cover, gain: 0.0 }
    }

    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    /// Unshrunk leaf weight reached by `x`.
    pub fn eval(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let n = &self.nodes[i];
            if n.is_leaf() {
                return n.value;
            }
            i = if x[n.feature as usize] < n.threshold { n.left } else { n.right } as usize;
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.is_leaf() {
                0
            } else {
                1 + go(t, n.left as usize).max(go(t, n.right as usize))
            }
        }
        go(self, 0)
    }
}

/// Ensemble for one target: `base_score + learning_rate * sum tree(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub base_score: f64,
    pub learning_rate: f64,
    pub lambda: f64,
    pub n_features: usize,
    pub trees: Vec<Tree>,
    /// Mean squared training error after each round, starting with the base
    /// score alone.
    pub train_loss: Vec<f64>,
}

impl Ensemble {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.base_score + self.learning_rate * self.trees.iter().map(|t| t.eval(x)).sum::<f64>()
    }

    pub fn predict(&self, x: &Mat) -> Result<Vec<f64>> {
        if x.cols != self.n_features {
            return Err(Error::Dimension { expected: self.n_features, got: x.cols });
        }
        Ok((0..x.rows).map(|r| self.predict_row(x.row(r))).collect())
    }
}

/// Best split of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Gain of splitting `(g, h)` into `(gl, hl)` and the rest.
pub fn split_gain(gl: f64, hl: f64, g: f64, h: f64, lambda: f64, gamma: f64) -> f64 {
    let gr = g - gl;
    let hr = h - hl;
    0.5 * (gl * gl / (hl + lambda) + gr * gr / (hr + lambda) - g * g / (h + lambda)) - gamma
}

/// Midpoint between two distinct sorted values, guaranteed to separate them.
pub fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) * 0.5;
    if m > lo {
        m
    } else {
        hi
    }
}

struct Builder<'a> {
    x: &'a Mat,
    grad: Vec<f64>,
    cfg: &'a GbtConfig,
    /// Per-feature sample order, partitioned in place so each node owns the
    /// same `[lo, hi)` range in every feature.
    order: Vec<Vec<u32>>,
    goes_left: Vec<bool>,
    scratch: Vec<u32>,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn node_stats(&self, lo: usize, hi: usize) -> (f64, f64) {
        let g: f64 = self.order[0][lo..hi].iter().map(|&i| self.grad[i as usize]).sum();
        (g, (hi - lo) as f64)
    }

    fn best_split(&self, lo: usize, hi: usize, g: f64, h: f64) -> Option<Split> {
        let cfg = self.cfg;
        let mut best: Option<Split> = None;
        for f in 0..self.x.cols {
            let ord = &self.order[f][lo..hi];
            let mut gl = 0.0;
            let mut hl = 0.0;
            for k in 0..ord.len() - 1 {
                let i = ord[k] as usize;
                gl += self.grad[i];
                hl += 1.0;
                let v = self.x.at(i, f);
                let next = self.x.at(ord[k + 1] as usize, f);
                if next <= v {
                    continue;
                }
                if hl < cfg.min_child_weight || h - hl < cfg.min_child_weight {
                    continue;
                }
                let gain = split_gain(gl, hl, g, h, cfg.lambda, cfg.gamma);
                if gain > 0.0 && best.map_or(true, |b| gain > b.gain) {
                    best = Some(Split { feature: f, threshold: midpoint(v, next), gain });
                }
            }
        }
        best
    }

    fn grow(&mut self, lo: usize, hi: usize, depth: usize) -> u32 {
        let (g, h) = self.node_stats(lo, hi);
        let id = self.nodes.len();
        let weight = -g / (h + self.cfg.lambda);
        self.nodes.push(TreeNode::leaf(weight, h));
        if depth >= self.cfg.max_depth || hi - lo < 2 {
            return id as u32;
        }
        let Some(split) = self.best_split(lo, hi, g, h) else {
            return id as u32;
        };
        for &i in &self.order[split.feature][lo..hi] {
            self.goes_left[i as usize] = self.x.at(i as usize, split.feature) < split.threshold;
        }
        let mut mid = lo;
        for f in 0..self.x.cols {
            let seg = &mut self.order[f][lo..hi];
            self.scratch.clear();
            let mut w = 0;
            for k in 0..seg.len() {
                let i = seg[k];
                if self.goes_left[i as usize] {
                    seg[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
            mid = lo + w;
        }
        let left = self.grow(lo, mid, depth + 1);
        let right = self.grow(mid, hi, depth + 1);
        let node = &mut self.nodes[id];
        node.feature = split.feature as u32;
        node.threshold = split.threshold;
        node.left = left;
        node.right = right;
        node.gain = split.gain;
        node.value = 0.0;
        id as u32
    }
}

/// Trains one ensemble on rows of `x` with targets `y`.
pub fn fit_ensemble(x: &Mat, y: &[f64], cfg: &GbtConfig) -> Result<Ensemble> {
    cfg.validate()?;
    if x.rows != y.len() {
        return Err(Error::Dimension { expected: y.len(), got: x.rows });
    }
    if y.len() < 2 {
        return Err(Error::insufficient(format!("gradient boosting needs at least 2 samples, got {}", y.len())));
    }
    if x.data.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("missing or non-finite value in boosting data".into()));
    }
    let n = y.len();
    let base_score = y.iter().sum::<f64>() / n as f64;
    let mut pred = vec![base_score; n];
    let mse = |pred: &[f64]| pred.iter().zip(y).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n as f64;
    let mut train_loss = vec![mse(&pred)];

    let mut presorted: Vec<Vec<u32>> = Vec::with_capacity(x.cols);
    for f in 0..x.cols {
        let mut idx: Vec<u32> = (0..n as u32).collect();
        idx.sort_by(|&a, &b| x.at(a as usize, f).total_cmp(&x.at(b as usize, f)).then(a.cmp(&b)));
        presorted.push(idx);
    }
    let mut trees = Vec::with_capacity(cfg.n_trees);
    let mut builder = Builder {
        x,
        grad: vec![0.0; n],
        cfg,
        order: presorted.clone(),
        goes_left: vec![false; n],
        scratch: Vec::with_capacity(n),
        nodes: Vec::new(),
    };
    for _ in 0..cfg.n_trees {
        for i in 0..n {
            builder.grad[i] = pred[i] - y[i];
        }
        for (dst, src) in builder.order.iter_mut().zip(&presorted) {
            dst.copy_from_slice(src);
        }
        builder.nodes = Vec::new();
        if x.cols == 0 {
            let (g, h) = (builder.grad.iter().sum::<f64>(), n as f64);
            builder.nodes.push(TreeNode::leaf(-g / (h + cfg.lambda), h));
        } else {
            builder.grow(0, n, 0);
        }
        let tree = Tree { nodes: core::mem::take(&mut builder.nodes) };
        for (i, p) in pred.iter_mut().enumerate() {
            *p += cfg.learning_rate * tree.eval(x.row(i));
        }
        train_loss.push(mse(&pred));
        trees.push(tree);
    }
    Ok(Ensemble { base_score, learning_rate: cfg.learning_rate, lambda: cfg.lambda, n_features: x.cols, trees, train_loss })
}

/// Names of flattened window features, oldest day first:
/// `d-13_<f>` ... `d0_<f>`.
pub fn flattened_names(features: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(INPUT_DAYS * features.len());
    for day in 0..INPUT_DAYS {
        let offset = INPUT_DAYS - 1 - day;
        for f in features {
            if offset == 0 {
                out.push(format!("d0_{f}"));
            } else {
                out.push(format!("d-{offset}_{f}"));
            }
        }
    }
    out
}

/// Row-major (day, then feature) copy of a window's inputs.
pub fn flatten(sample: &WindowSample) -> Vec<f64> {
    sample.x.data.clone()
}

/// Stacks flattened windows into a design matrix.
pub fn flatten_all(samples: &[WindowSample]) -> Result<Mat> {
    let width = samples.first().map_or(0, |s| s.x.data.len());
    let mut data = Vec::with_capacity(width * samples.len());
    for s in samples {
        if s.x.data.len() != width {
            return Err(Error::Dimension { expected: width, got: s.x.data.len() });
        }
        data.extend_from_slice(&s.x.data);
    }
    Ok(Mat::from_vec(samples.len(), width, data))
}

/// One independent ensemble per horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultistepGbt {
    pub config: GbtConfig,
    pub feature_names: Vec<String>,
    pub horizons: Vec<Ensemble>,
}

impl MultistepGbt {
    /// Trains the seven ensembles; `features` names the per-day columns.
    pub fn fit(samples: &[WindowSample], features: &[String], cfg: &GbtConfig) -> Result<Self> {
        let x = flatten_all(samples)?;
        let feature_names = flattened_names(features);
        if x.cols != feature_names.len() {
            return Err(Error::Dimension { expected: feature_names.len(), got: x.cols });
        }
        let mut horizons = Vec::with_capacity(HORIZON);
        for h in 0..HORIZON {
            let y: Vec<f64> = samples.iter().map(|s| s.y[h]).collect();
            horizons.push(fit_ensemble(&x, &y, cfg)?);
        }
        Ok(Self { config: cfg.clone(), feature_names, horizons })
    }

    pub fn predict_row(&self, x: &[f64]) -> Result<[f64; HORIZON]> {
        if x.len() != self.feature_names.len() {
            return Err(Error::Dimension { expected: self.feature_names.len(), got: x.len() });
        }
        let mut out = [0.0; HORIZON];
        for (o, e) in out.iter_mut().zip(&self.horizons) {
            *o = e.predict_row(x);
        }
        Ok(out)
    }

    pub fn predict(&self, sample: &WindowSample) -> Result<[f64; HORIZON]> {
        self.predict_row(&sample.x.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn zero_trees_predict_mean() {
        let x = Mat::from_vec(4, 1, vec![1.0, 2.0, 3.0, 4.0]);
        let e = fit_ensemble(&x, &[1.0, 2.0, 3.0, 6.0], &GbtConfig { n_trees: 0, ..GbtConfig::default() }).unwrap();
        assert_eq!(e.predict_row(&[10.0]), 3.0);
    }

    #[test]
    fn separable_stump_leaf_means() {
        let x = Mat::from_vec(6, 2, vec![0.0, 5.0, 1.0, 3.0, 2.0, 4.0, 10.0, 1.0, 11.0, 0.0, 12.0, 2.0]);
        let y = [1.0, 1.0, 1.0, 7.0, 7.0, 7.0];
        let cfg = GbtConfig { n_trees: 1, learning_rate: 1.0, max_depth: 1, lambda: 0.0, ..GbtConfig::default() };
        let e = fit_ensemble(&x, &y, &cfg).unwrap();
        let root = &e.trees[0].nodes[0];
        // Feature 0 first in tie order; both separate perfectly.
        assert_eq!(root.feature, 0);
        assert_eq!(root.threshold, 6.0);
        assert_eq!(e.predict_row(&[0.0, 0.0]), 1.0);
        assert_eq!(e.predict_row(&[20.0, 0.0]), 7.0);
    }

    #[test]
    fn large_min_child_weight_refuses_splits() {
        let mut s = 3;
        let x = Mat::from_vec(30, 2, (0..60).map(|_| lcg(&mut s)).collect());
        let y: Vec<f64> = (0..30).map(|_| lcg(&mut s)).collect();
        let e = fit_ensemble(&x, &y, &GbtConfig { min_child_weight: 100.0, ..GbtConfig::default() }).unwrap();
        assert!(e.trees.iter().all(|t| t.nodes.len() == 1));
        let p = e.predict(&x).unwrap();
        assert!(p.iter().all(|v| (v - p[0]).abs() < 1e-15));
    }

    #[test]
    fn loss_non_increasing_and_depth_bounded() {
        let mut s = 7;
        let n = 120;
        let x = Mat::from_vec(n, 5, (0..n * 5).map(|_| lcg(&mut s)).collect());
        let y: Vec<f64> = (0..n).map(|i| 3.0 * x.at(i, 0) - x.at(i, 3) + 0.1 * lcg(&mut s)).collect();
        let e = fit_ensemble(&x, &y, &GbtConfig { n_trees: 50, learning_rate: 0.3, ..GbtConfig::default() }).unwrap();
        for w in e.train_loss.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
        assert!(e.trees.iter().all(|t| t.depth() <= 3));
        for t in &e.trees {
            assert!(t.nodes.iter().all(|n| n.is_leaf() || n.gain > 0.0));
        }
    }

    #[test]
    fn flattened_manifest() {
        let names: Vec<String> = (0..23).map(|i| format!("f{i}")).collect();
        let flat = flattened_names(&names);
        assert_eq!(flat.len(), 322);
        assert_eq!(flat[0], "d-13_f0");
        assert_eq!(flat[321], "d0_f22");
    }

    #[test]
    fn hand_built_tree() {
        let t = Tree {
            nodes: vec![
                TreeNode { feature: 1, threshold: 0.5, left: 1, right: 2, value: 0.0, cover: 2.0, gain: 1.0 },
                TreeNode::leaf(-2.0, 1.0),
                TreeNode::leaf(3.0, 1.0),
            ],
        };
        assert_eq!(t.eval(&[9.0, 0.2]), -2.0);
        assert_eq!(t.eval(&[9.0, 0.5]), 3.0);
    }

    #[test]
    fn deterministic_bytes() {
        let mut s = 11;
        let x = Mat::from_vec(40, 3, (0..120).map(|_| lcg(&mut s)).collect());
        let y: Vec<f64> = (0..40).map(|_| lcg(&mut s)).collect();
        let a = fit_ensemble(&x, &y, &GbtConfig::default()).unwrap();
        let b = fit_ensemble(&x, &y, &GbtConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
