//! Global gain importance and exact Shapley attributions for the
//! gradient-boosted forecaster.
//!
//! Shapley values are computed tree by tree over the features that tree
//! actually splits on, by enumerating every coalition. The value of a
//! coalition is the path-dependent expectation: splits on features in the
//! coalition follow the explained sample, other splits average both children
//! weighted by how much of the background set reaches each.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::WindowSample;
use crate::gbt::{MultistepGbt, Tree};
use crate::math::abs;
use crate::HORIZON;

/// Largest number of distinct features a single tree may use.
pub const MAX_TREE_FEATURES: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGain {
    pub feature: String,
    pub gain: f64,
    pub share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    /// One list per horizon, sorted by descending gain.
    pub per_horizon: Vec<Vec<FeatureGain>>,
    /// Gains summed over horizons, sorted by descending gain.
    pub pooled: Vec<FeatureGain>,
}

impl ImportanceReport {
    /// Pooled gain summed over input days for each per-day column, so
    /// `d-3_lag_1` and `d0_lag_1` both count towards `lag_1`.
    pub fn by_base_feature(&self) -> Vec<FeatureGain> {
        let mut acc: BTreeMap<String, f64> = BTreeMap::new();
        for f in &self.pooled {
            *acc.entry(base_name(&f.feature).into()).or_default() += f.gain;
        }
        ranked(acc.into_iter().collect())
    }
}

/// Strips the `d-k_` / `d0_` day prefix of a flattened feature name.
pub fn base_name(flat: &str) -> &str {
    match flat.strip_prefix('d') {
        Some(rest) => rest.split_once('_').map_or(flat, |(_, b)| b),
        None => flat,
    }
}

fn ranked(items: Vec<(String, f64)>) -> Vec<FeatureGain> {
    let total: f64 = items.iter().map(|(_, g)| g).sum();
    let mut out: Vec<FeatureGain> =
        items.into_iter().filter(|(_, g)| *g > 0.0).map(|(feature, gain)| FeatureGain { share: gain / total, feature, gain }).collect();
    out.sort_by(|a, b| b.gain.total_cmp(&a.gain).then_with(|| a.feature.cmp(&b.feature)));
    out
}

fn tree_gains(trees: &[Tree], acc: &mut [f64]) {
    for t in trees {
        for n in t.nodes.iter().filter(|n| !n.is_leaf()) {
            acc[n.feature as usize] += n.gain;
        }
    }
}

/// Total split gain per feature, per horizon and pooled.
pub fn gain_importance(model: &MultistepGbt) -> ImportanceReport {
    let names = &model.feature_names;
    let mut pooled = vec![0.0; names.len()];
    let mut per_horizon = Vec::with_capacity(model.horizons.len());
    for e in &model.horizons {
        let mut acc = vec![0.0; names.len()];
        tree_gains(&e.trees, &mut acc);
        pooled.iter_mut().zip(&acc).for_each(|(p, a)| *p += a);
        per_horizon.push(ranked(names.iter().cloned().zip(acc).collect()));
    }
    ImportanceReport { per_horizon, pooled: ranked(names.iter().cloned().zip(pooled).collect()) }
}

/// Additive explanation of one prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapExplanation {
    /// Expected prediction over the background set.
    pub base: f64,
    /// One value per model feature, in feature order.
    pub contributions: Vec<f64>,
    pub prediction: f64,
}

impl ShapExplanation {
    /// `|base + sum(contributions) - prediction|`.
    pub fn additivity_gap(&self) -> f64 {
        abs(self.base + self.contributions.iter().sum::<f64>() - self.prediction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleExplanation {
    pub feature_names: Vec<String>,
    pub per_horizon: Vec<ShapExplanation>,
    /// Mean of the per-horizon explanations.
    pub mean: ShapExplanation,
}

/// Node covers of one tree under a background set.
fn background_covers(tree: &Tree, background: &[&[f64]]) -> Vec<f64> {
    let mut covers = vec![0.0; tree.nodes.len()];
    for x in background {
        let mut i = 0;
        loop {
            covers[i] += 1.0;
            let n = &tree.nodes[i];
            if n.is_leaf() {
                break;
            }
            i = if x[n.feature as usize] < n.threshold { n.left } else { n.right } as usize;
        }
    }
    covers
}

/// Path-dependent expectation of `tree` at `x` when only features whose
/// local index bit is set in `mask` are known.
pub fn coalition_value(tree: &Tree, covers: &[f64], x: &[f64], local: &[(u32, usize)], mask: u32, node: usize) -> f64 {
    let n = &tree.nodes[node];
    if n.is_leaf() {
        return n.value;
    }
    let bit = local.iter().find(|(f, _)| *f == n.feature).map(|(_, b)| *b).expect("split feature indexed");
    let (l, r) = (n.left as usize, n.right as usize);
    if mask & (1 << bit) != 0 {
        let next = if x[n.feature as usize] < n.threshold { l } else { r };
        return coalition_value(tree, covers, x, local, mask, next);
    }
    // Nodes the background never reaches fall back to training covers.
    let (cl, cr) = if covers[node] > 0.0 { (covers[l], covers[r]) } else { (tree.nodes[l].cover, tree.nodes[r].cover) };
    let total = cl + cr;
    if total <= 0.0 {
        return 0.5 * (coalition_value(tree, covers, x, local, mask, l) + coalition_value(tree, covers, x, local, mask, r));
    }
    (cl * coalition_value(tree, covers, x, local, mask, l) + cr * coalition_value(tree, covers, x, local, mask, r)) / total
}

/// Distinct split features of a tree in first-use order.
pub fn tree_features(tree: &Tree) -> Vec<u32> {
    let mut out: Vec<u32> = Vec::new();
    for n in tree.nodes.iter().filter(|n| !n.is_leaf()) {
        if !out.contains(&n.feature) {
            out.push(n.feature);
        }
    }
    out
}

/// Exact Shapley values of one tree for `x` by coalition enumeration.
/// Returns `(value of the empty coalition, [(feature, phi)])`.
pub fn tree_shapley(tree: &Tree, covers: &[f64], x: &[f64]) -> Result<(f64, Vec<(u32, f64)>)> {
    let feats = tree_features(tree);
    let m = feats.len();
    if m > MAX_TREE_FEATURES {
        return Err(Error::config(format!(
            "a tree splits on {m} distinct features, more than the {MAX_TREE_FEATURES} exact enumeration supports; reduce max_depth"
        )));
    }
    let local: Vec<(u32, usize)> = feats.iter().enumerate().map(|(b, &f)| (f, b)).collect();
    let n_sets = 1usize << m;
    let values: Vec<f64> = (0..n_sets).map(|s| coalition_value(tree, covers, x, &local, s as u32, 0)).collect();
    // weight[k] = k! (m - k - 1)! / m!
    let mut weight = vec![0.0; m.max(1)];
    for (k, w) in weight.iter_mut().enumerate().take(m) {
        *w = 1.0 / (m as f64 * binomial(m - 1, k));
    }
    let mut phi = Vec::with_capacity(m);
    for (b, &f) in feats.iter().enumerate() {
        let bit = 1usize << b;
        let mut acc = 0.0;
        for s in 0..n_sets {
            if s & bit == 0 {
                acc += weight[(s as u32).count_ones() as usize] * (values[s | bit] - values[s]);
            }
        }
        phi.push((f, acc));
    }
    Ok((values[0], phi))
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c = c * (n - i) as f64 / (i + 1) as f64;
    }
    c
}

/// Shapley explainer for a fitted model and a fixed background set.
#[derive(Debug, Clone)]
pub struct TreeExplainer<'a> {
    model: &'a MultistepGbt,
    /// Per horizon, per tree, per node.
    covers: Vec<Vec<Vec<f64>>>,
}

impl<'a> TreeExplainer<'a> {
    pub fn new(model: &'a MultistepGbt, background: &[WindowSample]) -> Result<Self> {
        if background.is_empty() {
            return Err(Error::insufficient("empty background set"));
        }
        let width = model.feature_names.len();
        if let Some(s) = background.iter().find(|s| s.x.data.len() != width) {
            return Err(Error::Dimension { expected: width, got: s.x.data.len() });
        }
        let rows: Vec<&[f64]> = background.iter().map(|s| &s.x.data[..]).collect();
        let covers = model.horizons.iter().map(|e| e.trees.iter().map(|t| background_covers(t, &rows)).collect()).collect();
        Ok(Self { model, covers })
    }

    /// Node covers used for tree `t` of horizon `h` (0-based).
    pub fn covers(&self, h: usize, t: usize) -> &[f64] {
        &self.covers[h][t]
    }

    pub fn explain(&self, sample: &WindowSample) -> Result<SampleExplanation> {
        let x = &sample.x.data[..];
        let width = self.model.feature_names.len();
        if x.len() != width {
            return Err(Error::Dimension { expected: width, got: x.len() });
        }
        let mut per_horizon = Vec::with_capacity(HORIZON);
        for (h, e) in self.model.horizons.iter().enumerate() {
            let mut base = e.base_score;
            let mut contributions = vec![0.0; width];
            for (t, tree) in e.trees.iter().enumerate() {
                let (v0, phi) = tree_shapley(tree, &self.covers[h][t], x)?;
                base += e.learning_rate * v0;
                for (f, p) in phi {
                    contributions[f as usize] += e.learning_rate * p;
                }
            }
            per_horizon.push(ShapExplanation { base, contributions, prediction: e.predict_row(x) });
        }
        let k = per_horizon.len().max(1) as f64;
        let mean = ShapExplanation {
            base: per_horizon.iter().map(|e| e.base).sum::<f64>() / k,
            contributions: (0..width).map(|j| per_horizon.iter().map(|e| e.contributions[j]).sum::<f64>() / k).collect(),
            prediction: per_horizon.iter().map(|e| e.prediction).sum::<f64>() / k,
        };
        Ok(SampleExplanation { feature_names: self.model.feature_names.clone(), per_horizon, mean })
    }
}

/// One bar of a waterfall chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaterfallStep {
    pub feature: String,
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waterfall {
    pub base: f64,
    /// Largest absolute contributions first.
    pub steps: Vec<WaterfallStep>,
    /// Sum of the contributions left out, when any are.
    pub remainder: Option<f64>,
    pub prediction: f64,
}

/// Top-`k` contributions by magnitude plus a remainder bucket.
pub fn waterfall(names: &[String], e: &ShapExplanation, k: usize) -> Waterfall {
    let mut idx: Vec<usize> = (0..e.contributions.len()).collect();
    idx.sort_by(|&a, &b| abs(e.contributions[b]).total_cmp(&abs(e.contributions[a])).then(a.cmp(&b)));
    let steps = idx.iter().take(k).map(|&i| WaterfallStep { feature: names[i].clone(), contribution: e.contributions[i] }).collect();
    let remainder = (idx.len() > k).then(|| idx[k..].iter().map(|&i| e.contributions[i]).sum());
    Waterfall { base: e.base, steps, remainder, prediction: e.prediction }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gbt::{TreeNode, LEAF};

    fn split(feature: u32, threshold: f64, left: u32, right: u32, cover: f64, gain: f64) -> TreeNode {
        TreeNode { feature, threshold, left, right, value: 0.0, cover, gain }
    }

    #[test]
    fn single_split_matches_two_player_closed_form() {
        // x0 < 0.5 -> 1.0 (cover 3), else 4.0 (cover 1).
        let tree = Tree { nodes: vec![split(0, 0.5, 1, 2, 4.0, 2.0), TreeNode::leaf(1.0, 3.0), TreeNode::leaf(4.0, 1.0)] };
        let covers = [4.0, 3.0, 1.0];
        let (v0, phi) = tree_shapley(&tree, &covers, &[0.9, 7.0]).unwrap();
        assert_eq!(v0, 1.75);
        assert_eq!(phi, vec![(0, 2.25)]);
    }

    #[test]
    fn symmetric_features_share_equally() {
        // f(x) = 1 when both x0 and x1 exceed 0.5, with equal covers.
        let tree = Tree {
            nodes: vec![
                split(0, 0.5, 1, 2, 4.0, 1.0),
                TreeNode::leaf(0.0, 2.0),
                split(1, 0.5, 3, 4, 2.0, 1.0),
                TreeNode::leaf(0.0, 1.0),
                TreeNode::leaf(1.0, 1.0),
            ],
        };
        let covers: Vec<f64> = tree.nodes.iter().map(|n| n.cover).collect();
        let (_, phi) = tree_shapley(&tree, &covers, &[1.0, 1.0, 3.0]).unwrap();
        assert_eq!(phi.len(), 2);
        assert!((phi[0].1 - phi[1].1).abs() < 1e-15);
        assert!((phi[0].1 - 0.375).abs() < 1e-15);
    }

    #[test]
    fn too_many_tree_features_rejected() {
        let mut nodes = Vec::new();
        // A right-leaning chain over 16 features.
        for f in 0..16u32 {
            let id = nodes.len() as u32;
            nodes.push(split(f, 0.0, id + 1, id + 2, 1.0, 1.0));
            nodes.push(TreeNode::leaf(0.0, 1.0));
        }
        nodes.push(TreeNode::leaf(1.0, 1.0));
        let tree = Tree { nodes };
        let covers = vec![1.0; tree.nodes.len()];
        assert!(matches!(tree_shapley(&tree, &covers, &[0.0; 16]), Err(Error::Config(_))));
        assert_ne!(tree.nodes[0].feature, LEAF);
    }

    #[test]
    fn base_names_strip_day_prefix() {
        assert_eq!(base_name("d-13_lag_1"), "lag_1");
        assert_eq!(base_name("d0_day_of_week"), "day_of_week");
        assert_eq!(base_name("tmax"), "tmax");
    }

    #[test]
    fn waterfall_top_k_and_remainder() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| String::from(*s)).collect();
        let e = ShapExplanation { base: 1.0, contributions: vec![0.5, -2.0, 0.25], prediction: -0.25 };
        let w = waterfall(&names, &e, 2);
        assert_eq!(w.steps[0].feature, "b");
        assert_eq!(w.remainder, Some(0.25));
        let all = waterfall(&names, &e, 10);
        assert_eq!(all.steps.len(), 3);
        assert_eq!(all.remainder, None);
    }
}
