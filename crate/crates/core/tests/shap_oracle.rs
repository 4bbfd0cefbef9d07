use rand::Rng;
use wardcast_core::calendar::CalendarDate;
use wardcast_core::explain::{base_name, gain_importance, tree_features, TreeExplainer};
use wardcast_core::features::WindowSample;
use wardcast_core::gbt::{GbtConfig, MultistepGbt, Tree};
use wardcast_core::linalg::Mat;
use wardcast_core::rng::stream;
use wardcast_core::{HORIZON, INPUT_DAYS};

const F: usize = 3;

fn names() -> Vec<String> {
    vec!["lag_1".into(), "tmax".into(), "noise".into()]
}

/// Targets depend on the latest day's first two columns only.
fn samples(n: usize, seed: u64) -> Vec<WindowSample> {
    let mut rng = stream(seed, 3);
    (0..n)
        .map(|i| {
            let x = Mat::from_vec(INPUT_DAYS, F, (0..INPUT_DAYS * F).map(|_| rng.random_range(-1.0..1.0)).collect());
            let a = x.at(INPUT_DAYS - 1, 0);
            let b = x.at(INPUT_DAYS - 1, 1);
            let y =
                core::array::from_fn(|h| 5.0 * a + if b > 0.2 { 1.0 + h as f64 * 0.1 } else { 0.0 } + 0.05 * rng.random_range(-1.0..1.0));
            WindowSample { origin: CalendarDate::ymd(2020, 1, 1).add_days(i as i64), x, y }
        })
        .collect()
}

/// Path-dependent expectation written independently of the library.
fn expectation(tree: &Tree, covers: &[f64], x: &[f64], known: &[u32], node: usize) -> f64 {
    let n = &tree.nodes[node];
    if n.is_leaf() {
        return n.value;
    }
    let (l, r) = (n.left as usize, n.right as usize);
    if known.contains(&n.feature) {
        let next = if x[n.feature as usize] < n.threshold { l } else { r };
        return expectation(tree, covers, x, known, next);
    }
    let (wl, wr) = if covers[node] > 0.0 { (covers[l], covers[r]) } else { (tree.nodes[l].cover, tree.nodes[r].cover) };
    (wl * expectation(tree, covers, x, known, l) + wr * expectation(tree, covers, x, known, r)) / (wl + wr)
}

fn permutations(items: &[u32]) -> Vec<Vec<u32>> {
    if items.len() <= 1 {
        return vec![items.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..items.len() {
        let mut rest = items.to_vec();
        let first = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, first);
            out.push(p);
        }
    }
    out
}

/// Shapley values as the mean marginal contribution over all orderings.
fn brute_force(tree: &Tree, covers: &[f64], x: &[f64]) -> Vec<(u32, f64)> {
    let feats = tree_features(tree);
    let perms = permutations(&feats);
    let mut phi: Vec<(u32, f64)> = feats.iter().map(|&f| (f, 0.0)).collect();
    for p in &perms {
        let mut known = Vec::new();
        let mut prev = expectation(tree, covers, x, &known, 0);
        for &f in p {
            known.push(f);
            let v = expectation(tree, covers, x, &known, 0);
            phi.iter_mut().find(|(g, _)| *g == f).unwrap().1 += v - prev;
            prev = v;
        }
    }
    phi.iter_mut().for_each(|(_, v)| *v /= perms.len() as f64);
    phi
}

#[test]
fn enumeration_matches_permutation_oracle_on_depth_three_trees() {
    let train = samples(200, 1);
    let model = MultistepGbt::fit(&train, &names(), &GbtConfig { n_trees: 20, max_depth: 3, ..GbtConfig::default() }).unwrap();
    let explainer = TreeExplainer::new(&model, &train).unwrap();
    let probes = samples(10, 2);
    let mut checked = 0;
    for s in &probes {
        for (h, e) in model.horizons.iter().enumerate() {
            for (t, tree) in e.trees.iter().enumerate() {
                let covers = explainer.covers(h, t);
                let (_, phi) = wardcast_core::explain::tree_shapley(tree, covers, &s.x.data).unwrap();
                let oracle = brute_force(tree, covers, &s.x.data);
                assert_eq!(phi.len(), oracle.len());
                for ((f, a), (g, b)) in phi.iter().zip(&oracle) {
                    assert_eq!(f, g);
                    assert!((a - b).abs() <= 1e-9, "tree {t}: {a} vs {b}");
                }
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 10 * HORIZON * 20);
}

#[test]
fn local_accuracy_on_hundred_samples() {
    let train = samples(300, 4);
    let model = MultistepGbt::fit(&train, &names(), &GbtConfig::default()).unwrap();
    let explainer = TreeExplainer::new(&model, &train).unwrap();
    for s in samples(100, 5) {
        let ex = explainer.explain(&s).unwrap();
        let pred = model.predict(&s).unwrap();
        for (h, e) in ex.per_horizon.iter().enumerate() {
            assert_eq!(e.prediction, pred[h]);
            assert!(e.additivity_gap() <= 1e-9, "{}", e.additivity_gap());
        }
        assert!(ex.mean.additivity_gap() <= 1e-9);
    }
}

#[test]
fn training_background_reproduces_recorded_covers() {
    let train = samples(120, 6);
    let model = MultistepGbt::fit(&train, &names(), &GbtConfig { n_trees: 10, ..GbtConfig::default() }).unwrap();
    let explainer = TreeExplainer::new(&model, &train).unwrap();
    for (h, e) in model.horizons.iter().enumerate() {
        for (t, tree) in e.trees.iter().enumerate() {
            let recorded: Vec<f64> = tree.nodes.iter().map(|n| n.cover).collect();
            assert_eq!(explainer.covers(h, t), &recorded[..]);
        }
    }
}

#[test]
fn depth_zero_model_has_no_contributions() {
    let train = samples(50, 7);
    let model = MultistepGbt::fit(&train, &names(), &GbtConfig { max_depth: 0, n_trees: 5, ..GbtConfig::default() }).unwrap();
    let ex = TreeExplainer::new(&model, &train).unwrap().explain(&train[3]).unwrap();
    for e in &ex.per_horizon {
        assert!(e.contributions.iter().all(|c| *c == 0.0));
        assert!((e.base - e.prediction).abs() <= 1e-12);
    }
    assert!(gain_importance(&model).pooled.is_empty());
}

#[test]
fn unused_features_get_zero_and_planted_driver_dominates() {
    let train = samples(300, 8);
    let model = MultistepGbt::fit(&train, &names(), &GbtConfig::default()).unwrap();
    let used: Vec<u32> = model.horizons.iter().flat_map(|e| e.trees.iter().flat_map(tree_features)).collect();
    let explainer = TreeExplainer::new(&model, &train).unwrap();
    let ex = explainer.explain(&train[10]).unwrap();
    for (j, c) in ex.mean.contributions.iter().enumerate() {
        if !used.contains(&(j as u32)) {
            assert_eq!(*c, 0.0);
        }
    }
    let report = gain_importance(&model);
    let total: f64 = report.pooled.iter().map(|f| f.share).sum();
    assert!((total - 1.0).abs() <= 1e-9);
    assert_eq!(report.pooled[0].feature, "d0_lag_1");
    let families = report.by_base_feature();
    assert_eq!(families[0].feature, "lag_1");
    assert!(families[0].share > 0.5);
    assert_eq!(base_name(&report.pooled[0].feature), "lag_1");
}
