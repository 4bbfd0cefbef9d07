use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::json;

fn wardcast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wardcast")).args(args).env("NO_COLOR", "1").output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = wardcast(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Short, fast configuration: one year of data, cheap models.
fn small_config(dir: &Path) -> PathBuf {
    let cfg = json!({
        "generator": {"n_days": 400, "anomaly": null},
        "experiment": {
            "series": [{"ward": "TotalAllWards", "complexity": "All"}],
            "models": ["gbt", "seasonal_naive"],
            "seeds": [1, 2],
            "test_days": 60,
            "gbt": {"n_trees": 10}
        }
    });
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_vec_pretty(&cfg).unwrap()).unwrap();
    p
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn generate_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for d in [&a, &b] {
        ok(&["--config", cfg.to_str().unwrap(), "generate", "--out", d.to_str().unwrap()]);
    }
    let (ta, tb) = (tree(&a), tree(&b));
    assert!(ta.iter().any(|(p, _)| p == Path::new("manifest.json")));
    assert!(!a.join("STALE").exists());
    assert_eq!(ta, tb);

    let c = tmp.path().join("c");
    ok(&["--config", cfg.to_str().unwrap(), "generate", "--out", c.to_str().unwrap(), "--seed", "2"]);
    assert_ne!(tree(&c), ta);
}

#[test]
fn step_by_step_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let cfg = cfg.to_str().unwrap();
    let p = |s: &str| tmp.path().join(s).to_str().unwrap().to_string();
    ok(&["--config", cfg, "generate", "--out", &p("data")]);
    ok(&["--config", cfg, "featurize", "--data", &p("data"), "--out", &p("features")]);
    assert!(tmp.path().join("features/splits.json").exists());

    let missing = wardcast(&["--config", cfg, "evaluate", "--data", &p("data"), "--models", &p("models"), "--out", &p("eval")]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(stderr(&missing).contains("missing model artifacts"), "{}", stderr(&missing));

    ok(&["--config", cfg, "--jobs", "1", "train", "--data", &p("data"), "--out", &p("models")]);
    ok(&["--config", cfg, "evaluate", "--data", &p("data"), "--models", &p("models"), "--out", &p("eval")]);
    let table = fs::read_to_string(tmp.path().join("eval/mae_table.csv")).unwrap();
    assert!(table.starts_with("complexity,ward,gbt_mean,gbt_std,seasonal_naive_mean,seasonal_naive_std"), "{table}");
    assert_eq!(table.lines().count(), 2);

    ok(&["--config", cfg, "explain", "--data", &p("data"), "--models", &p("models"), "--out", &p("explain"), "--top-k", "5"]);
    let waterfall = fs::read_to_string(tmp.path().join("explain/waterfall.csv")).unwrap();
    assert_eq!(waterfall.lines().count(), 1 + 5 + 1);
    assert!(waterfall.lines().last().unwrap().starts_with("(remainder)"));

    let manifest: serde_json::Value = serde_json::from_slice(&fs::read(tmp.path().join("eval/manifest.json")).unwrap()).unwrap();
    let inputs: Vec<&str> = manifest["inputs"].as_array().unwrap().iter().map(|e| e["path"].as_str().unwrap()).collect();
    assert_eq!(inputs, vec!["data/manifest.json", "models/manifest.json"]);
}

#[test]
fn ingest_then_impute() {
    let tmp = tempfile::tempdir().unwrap();
    let mut log = String::from("date,ward,complexity,count\n");
    let start: wardcast_core::calendar::CalendarDate = "2021-01-01".parse().unwrap();
    for i in 0..120 {
        let d = start.add_days(i);
        log.push_str(&format!("{d},Surgery,Major,{}\n", 3 + i % 7));
        log.push_str(&format!("{d},surgery,other,{}\n", 5 + i % 3));
    }
    log.push_str("not-a-date,Surgery,Major,1\n");
    let adm = tmp.path().join("adm.csv");
    fs::write(&adm, log).unwrap();
    let data = tmp.path().join("data");
    let out = ok(&["ingest", "--admissions", adm.to_str().unwrap(), "--window", "2021-03-01:2021-03-14", "--out", data.to_str().unwrap()]);
    assert!(stderr(&out).contains("skipped row"), "{}", stderr(&out));
    let rejected: serde_json::Value = serde_json::from_slice(&fs::read(data.join("rejected_rows.json")).unwrap()).unwrap();
    assert_eq!(rejected.as_array().unwrap().len(), 1);

    // Four months of data are too short for a yearly cycle.
    let cfg = tmp.path().join("cfg.json");
    fs::write(&cfg, r#"{"imputer": {"yearly_order": 0}}"#).unwrap();
    let imputed = tmp.path().join("imputed");
    ok(&["--config", cfg.to_str().unwrap(), "impute", "--data", data.to_str().unwrap(), "--out", imputed.to_str().unwrap(), "--seed", "3"]);
    let before = fs::read_to_string(data.join("series/surgery_major.csv")).unwrap();
    let after = fs::read_to_string(imputed.join("series/surgery_major.csv")).unwrap();
    let (b, a): (Vec<&str>, Vec<&str>) = (before.lines().collect(), after.lines().collect());
    assert_eq!(b.len(), a.len());
    for (x, y) in b.iter().zip(&a) {
        let date = &x[..10];
        if !("2021-03-01"..="2021-03-14").contains(&date) {
            assert_eq!(x, y);
        }
    }
}

#[test]
fn exit_codes_follow_error_category() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"experiment": {"seeds": [1], "bogus": 1}}"#).unwrap();
    let out = wardcast(&["--config", bad.to_str().unwrap(), "print-config"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).starts_with("error[config]: "), "{}", stderr(&out));

    let invalid = tmp.path().join("invalid.json");
    fs::write(&invalid, r#"{"experiment": {"test_days": 0}}"#).unwrap();
    let out = wardcast(&["--config", invalid.to_str().unwrap(), "generate", "--out", tmp.path().join("x").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));

    let out =
        wardcast(&["impute", "--data", tmp.path().join("nothing").to_str().unwrap(), "--out", tmp.path().join("y").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));

    let adm = tmp.path().join("adm.csv");
    fs::write(&adm, "date,ward,complexity\n2021-01-01,Oncology,Major\n").unwrap();
    let out = wardcast(&["ingest", "--admissions", adm.to_str().unwrap(), "--out", tmp.path().join("z").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("neurology"), "{}", stderr(&out));
}

#[test]
fn print_config_round_trips() {
    let out = ok(&["print-config"]);
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("c.json");
    fs::write(&p, &out.stdout).unwrap();
    let again = ok(&["--config", p.to_str().unwrap(), "print-config"]);
    assert_eq!(out.stdout, again.stdout);
}
