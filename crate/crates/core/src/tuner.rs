//! Grid search for the machine-learning forecasters.
//!
//! Each configuration is trained on the first 80% of the training windows
//! and scored by mean absolute error on the chronologically last 20%,
//! averaged over all seven horizons.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::mae_pairs;
use crate::features::WindowSample;
use crate::gbt::{GbtConfig, MultistepGbt};
use crate::lstm::{self, LstmConfig, LstmParams};
use crate::HORIZON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbtGrid {
    pub n_trees: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub max_depth: Vec<usize>,
}

impl Default for GbtGrid {
    fn default() -> Self {
        Self { n_trees: alloc::vec![100, 300, 500], learning_rate: alloc::vec![0.01, 0.05, 0.1], max_depth: alloc::vec![3, 6, 9] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmGrid {
    pub hidden_size: Vec<usize>,
    pub n_layers: Vec<usize>,
    pub dropout_p: Vec<f64>,
    pub dense_units: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub batch_size: Vec<usize>,
}

impl Default for LstmGrid {
    fn default() -> Self {
        Self {
            hidden_size: alloc::vec![16, 32, 64, 128],
            n_layers: alloc::vec![1, 2, 3],
            dropout_p: alloc::vec![0.1, 0.2, 0.3],
            dense_units: alloc::vec![16, 32, 64, 128],
            learning_rate: alloc::vec![0.0001, 0.001, 0.01],
            batch_size: alloc::vec![8, 16, 32, 64, 128],
        }
    }
}

/// A search space together with the settings shared by every candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SearchSpace {
    Gbt {
        #[serde(default)]
        grid: GbtGrid,
        #[serde(default)]
        base: GbtConfig,
    },
    Lstm {
        #[serde(default)]
        grid: LstmGrid,
        #[serde(default)]
        base: LstmConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Candidate {
    Gbt(GbtConfig),
    Lstm(LstmConfig),
}

impl Candidate {
    /// The grid coordinates, in grid order.
    pub fn params(&self) -> Vec<(&'static str, f64)> {
        match self {
            Candidate::Gbt(c) => {
                alloc::vec![("n_trees", c.n_trees as f64), ("learning_rate", c.learning_rate), ("max_depth", c.max_depth as f64),]
            }
            Candidate::Lstm(c) => alloc::vec![
                ("hidden_size", c.hidden_size as f64),
                ("n_layers", c.n_layers as f64),
                ("dropout_p", c.dropout_p),
                ("dense_units", c.dense_units as f64),
                ("learning_rate", c.learning_rate),
                ("batch_size", c.batch_size as f64),
            ],
        }
    }

    /// Model size used to break score ties: maximum leaf count for trees,
    /// parameter count for the network.
    pub fn capacity(&self, n_features: usize) -> u128 {
        match self {
            Candidate::Gbt(c) => c.n_trees as u128 * (1u128 << c.max_depth.min(100)),
            Candidate::Lstm(c) => LstmParams::zeros(n_features, c).n_params() as u128,
        }
    }
}

impl SearchSpace {
    pub fn candidates(&self) -> Vec<Candidate> {
        let mut out = Vec::new();
        match self {
            SearchSpace::Gbt { grid, base } => {
                for &n_trees in &grid.n_trees {
                    for &learning_rate in &grid.learning_rate {
                        for &max_depth in &grid.max_depth {
                            out.push(Candidate::Gbt(GbtConfig { n_trees, learning_rate, max_depth, ..base.clone() }));
                        }
                    }
                }
            }
            SearchSpace::Lstm { grid, base } => {
                for &hidden_size in &grid.hidden_size {
                    for &n_layers in &grid.n_layers {
                        for &dropout_p in &grid.dropout_p {
                            for &dense_units in &grid.dense_units {
                                for &learning_rate in &grid.learning_rate {
                                    for &batch_size in &grid.batch_size {
                                        out.push(Candidate::Lstm(LstmConfig {
                                            hidden_size,
                                            n_layers,
                                            dropout_p,
                                            dense_units,
                                            learning_rate,
                                            batch_size,
                                            ..base.clone()
                                        }));
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardEntry {
    pub rank: usize,
    /// Position in grid order.
    pub index: usize,
    pub candidate: Candidate,
    /// Validation MAE; infinite when training failed.
    pub val_mae: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub winner: Candidate,
    pub winner_val_mae: f64,
    pub n_fit: usize,
    pub n_val: usize,
    /// Every candidate, best first.
    pub leaderboard: Vec<LeaderboardEntry>,
}

/// Trains `candidate` on `fit` and returns its mean validation MAE.
pub fn score(candidate: &Candidate, fit: &[WindowSample], val: &[WindowSample], features: &[String]) -> Result<f64> {
    let preds: Vec<[f64; HORIZON]> = match candidate {
        Candidate::Gbt(cfg) => {
            let m = MultistepGbt::fit(fit, features, cfg)?;
            val.iter().map(|s| m.predict(s)).collect::<Result<_>>()?
        }
        Candidate::Lstm(cfg) => lstm::train(fit, cfg)?.predict_many(val)?,
    };
    let pairs = val.iter().zip(&preds).flat_map(|(s, p)| s.y.iter().copied().zip(p.iter().copied()));
    let v = mae_pairs(pairs)?;
    if !v.is_finite() {
        return Err(Error::NonFinite("validation MAE".into()));
    }
    Ok(v)
}

/// Chronological split of training windows: the last `fraction` validates.
pub fn validation_split(train: &[WindowSample], fraction: f64) -> Result<(&[WindowSample], &[WindowSample])> {
    let n_val = ((train.len() as f64 * fraction) as usize).max(1);
    if n_val >= train.len() {
        return Err(Error::insufficient(format!("{} windows cannot be split for validation", train.len())));
    }
    Ok(train.split_at(train.len() - n_val))
}

/// Evaluates every candidate and ranks them by validation MAE, then by
/// capacity, then by grid position. Failed candidates score `+inf`.
pub fn grid_search(space: &SearchSpace, train: &[WindowSample], features: &[String]) -> Result<TuneResult> {
    let candidates = space.candidates();
    if candidates.is_empty() {
        return Err(Error::config("empty search space"));
    }
    let (fit, val) = validation_split(train, 0.2)?;
    let run = |c: &Candidate| -> (f64, Option<String>) {
        match score(c, fit, val, features) {
            Ok(v) => (v, None),
            Err(e) => (f64::INFINITY, Some(e.to_string())),
        }
    };
    #[cfg(feature = "parallel")]
    let scores: Vec<(f64, Option<String>)> = {
        use rayon::prelude::*;
        candidates.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let scores: Vec<(f64, Option<String>)> = candidates.iter().map(run).collect();
    Ok(rank(candidates, scores, features.len(), fit.len(), val.len()))
}

fn rank(candidates: Vec<Candidate>, scores: Vec<(f64, Option<String>)>, n_features: usize, n_fit: usize, n_val: usize) -> TuneResult {
    let mut entries: Vec<LeaderboardEntry> = candidates
        .into_iter()
        .zip(scores)
        .enumerate()
        .map(|(index, (candidate, (val_mae, error)))| LeaderboardEntry { rank: 0, index, candidate, val_mae, error })
        .collect();
    entries.sort_by(|a, b| {
        a.val_mae
            .total_cmp(&b.val_mae)
            .then(a.candidate.capacity(n_features).cmp(&b.candidate.capacity(n_features)))
            .then(a.index.cmp(&b.index))
    });
    for (r, e) in entries.iter_mut().enumerate() {
        e.rank = r + 1;
    }
    TuneResult { winner: entries[0].candidate.clone(), winner_val_mae: entries[0].val_mae, n_fit, n_val, leaderboard: entries }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = SearchSpace::Gbt { grid: GbtGrid::default(), base: GbtConfig::default() };
        assert_eq!(g.candidates().len(), 27);
        let l = SearchSpace::Lstm { grid: LstmGrid::default(), base: LstmConfig::default() };
        assert_eq!(l.candidates().len(), 2160);
    }

    #[test]
    fn ties_go_to_smaller_capacity_then_grid_order() {
        let small = Candidate::Gbt(GbtConfig { n_trees: 100, ..GbtConfig::default() });
        let big = Candidate::Gbt(GbtConfig { n_trees: 300, ..GbtConfig::default() });
        let r = rank(alloc::vec![big.clone(), small.clone()], alloc::vec![(1.0, None), (1.0, None)], 3, 8, 2);
        assert_eq!(r.winner, small);
        let r = rank(alloc::vec![small.clone(), small.clone()], alloc::vec![(1.0, None), (1.0, None)], 3, 8, 2);
        assert_eq!(r.leaderboard[0].index, 0);
        let r = rank(alloc::vec![small.clone(), big.clone()], alloc::vec![(f64::INFINITY, Some("x".into())), (2.0, None)], 3, 8, 2);
        assert_eq!(r.winner, big);
        assert_eq!(r.leaderboard[1].rank, 2);
    }
}
