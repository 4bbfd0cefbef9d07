//! Split search against brute-force enumeration on random small datasets.

use proptest::prelude::*;
use wardcast_core::gbt::{fit_ensemble, split_gain, GbtConfig};
use wardcast_core::linalg::Mat;

/// Every feature, every midpoint between distinct values, gain recomputed
/// from scratch by summing the left side directly.
fn brute_force(x: &Mat, grad: &[f64], lambda: f64, mcw: f64) -> Option<(usize, f64, f64)> {
    let n = x.rows;
    let g: f64 = grad.iter().sum();
    let h = n as f64;
    let mut best: Option<(usize, f64, f64)> = None;
    for f in 0..x.cols {
        let mut vals: Vec<f64> = (0..n).map(|i| x.at(i, f)).collect();
        vals.sort_by(f64::total_cmp);
        vals.dedup();
        for w in vals.windows(2) {
            let thr = w[0] + (w[1] - w[0]) * 0.5;
            let left: Vec<usize> = (0..n).filter(|&i| x.at(i, f) < thr).collect();
            let hl = left.len() as f64;
            if hl < mcw || h - hl < mcw {
                continue;
            }
            let gl: f64 = left.iter().map(|&i| grad[i]).sum();
            let gain = split_gain(gl, hl, g, h, lambda, 0.0);
            if gain > 0.0 && best.map_or(true, |b| gain > b.2 * (1.0 + 1e-12) + 1e-15) {
                best = Some((f, thr, gain));
            }
        }
    }
    best
}

fn dataset(seed: u64, n: usize, p: usize, discrete: bool) -> (Mat, Vec<f64>) {
    let mut s = seed;
    let mut next = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (s >> 11) as f64 / (1u64 << 53) as f64
    };
    let data: Vec<f64> = (0..n * p).map(|_| if discrete { (next() * 6.0).floor() } else { next() * 10.0 - 5.0 }).collect();
    let x = Mat::from_vec(n, p, data);
    let y: Vec<f64> = (0..n).map(|i| x.at(i, 0).sin() * 3.0 + x.at(i, p - 1) + next()).collect();
    (x, y)
}

#[test]
fn root_split_matches_brute_force_on_fifty_datasets() {
    for k in 0..50u64 {
        let n = 20 + (k as usize * 37) % 181;
        let p = 1 + (k as usize * 7) % 20;
        let (x, y) = dataset(1000 + k, n, p, k % 3 == 0);
        let cfg = GbtConfig { n_trees: 1, max_depth: 1, learning_rate: 1.0, lambda: 1.0, ..GbtConfig::default() };
        let e = fit_ensemble(&x, &y, &cfg).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let grad: Vec<f64> = y.iter().map(|v| mean - v).collect();
        let oracle = brute_force(&x, &grad, cfg.lambda, cfg.min_child_weight);
        let root = &e.trees[0].nodes[0];
        match oracle {
            None => assert!(root.is_leaf(), "dataset {k}"),
            Some((f, thr, gain)) => {
                assert_eq!(root.feature as usize, f, "dataset {k}");
                assert_eq!(root.threshold, thr, "dataset {k}");
                assert!((root.gain - gain).abs() <= 1e-9 * gain.abs().max(1.0), "dataset {k}");
            }
        }
        let deep = fit_ensemble(&x, &y, &GbtConfig { n_trees: 30, max_depth: 4, learning_rate: 0.3, ..GbtConfig::default() }).unwrap();
        for w in deep.train_loss.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "dataset {k}: loss rose {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn horizon_ensembles_are_independent() {
    use wardcast_core::calendar::CalendarDate;
    use wardcast_core::features::WindowSample;
    use wardcast_core::gbt::MultistepGbt;
    let names: Vec<String> = vec!["a".into(), "b".into()];
    let mut samples = Vec::new();
    for i in 0..40 {
        let x = Mat::from_vec(14, 2, (0..28).map(|j| ((i * 31 + j * 7) % 17) as f64).collect());
        let mut y = [0.0; 7];
        for (h, v) in y.iter_mut().enumerate() {
            *v = ((i * (h + 3)) % 11) as f64;
        }
        samples.push(WindowSample { origin: CalendarDate::new(2020, 1, 1).unwrap().add_days(i as i64), x, y });
    }
    let cfg = GbtConfig { n_trees: 10, ..GbtConfig::default() };
    let a = MultistepGbt::fit(&samples, &names, &cfg).unwrap();
    let mut perturbed = samples.clone();
    for s in &mut perturbed {
        s.y[3] += 5.0 * s.x.at(13, 0);
    }
    let b = MultistepGbt::fit(&perturbed, &names, &cfg).unwrap();
    for h in 0..7 {
        assert_eq!(a.horizons[h] == b.horizons[h], h != 3);
    }
    assert_eq!(a.horizons.len(), 7);
    assert!(a.horizons.iter().all(|e| e.trees.len() == 10));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn unused_feature_recoding_does_not_change_predictions(seed in 0u64..10_000) {
        let (x, y) = dataset(seed, 60, 3, false);
        let mut recoded = x.clone();
        // Feature 1 never drives the target; cube it (strictly monotone).
        for i in 0..x.rows {
            *recoded.at_mut(i, 1) = x.at(i, 1).powi(3) + 2.0;
        }
        let cfg = GbtConfig { n_trees: 5, ..GbtConfig::default() };
        let a = fit_ensemble(&x, &y, &cfg).unwrap();
        let b = fit_ensemble(&recoded, &y, &cfg).unwrap();
        let pa = a.predict(&x).unwrap();
        let pb = b.predict(&recoded).unwrap();
        for (u, v) in pa.iter().zip(&pb) {
            prop_assert!((u - v).abs() < 1e-9);
        }
    }
}
