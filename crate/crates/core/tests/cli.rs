use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lrsweep::budget::reference_constants;
use lrsweep::surrogate::PlantedKStar;

fn lrsweep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrsweep"))
        .args(args)
        .current_dir(dir)
        .env_remove("LRSWEEP_CONFIG")
        .output()
        .expect("spawn lrsweep")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn enumerate_default_row_count() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lrsweep(tmp.path(), &["enumerate", "--f-c", "0", "--single-stage-only"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 134);

    let o = lrsweep(tmp.path(), &["enumerate"]);
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 586 + 4664);
    let single_f_c0 = lines
        .iter()
        .filter(|l| l.contains("\"f_C\":0,") && !l.contains("r1_exact"))
        .count();
    assert_eq!(single_f_c0, 134);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(lrsweep(dir, &["--help"]).status.code(), Some(0));
    assert_eq!(lrsweep(dir, &["enumerate", "--nope"]).status.code(), Some(1));
    assert_eq!(lrsweep(dir, &[]).status.code(), Some(1));

    // Unknown setup id is a data error.
    let o = lrsweep(dir, &["plan", "fC0_fD9_fr0_fM0_fk0"]);
    assert_eq!(o.status.code(), Some(2));

    // Malformed results row: message names file and line.
    fs::write(dir.join("bad.csv"), "setup_id,language_pair,val_loss\nfC0_fD0_fr0_fM0_fk0,x,oops\n").unwrap();
    let o = lrsweep(dir, &["analyze", "--results", "bad.csv", "--out-dir", "out"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("bad.csv:2"), "{}", stderr(&o));

    // Single compute budget cannot identify the k* shift: fit error.
    fs::write(dir.join("one.csv"), "C,f_D,log2_k_star\n1e18,-3,2\n1e18,-2,1.3\n").unwrap();
    let o = lrsweep(dir, &["fit", "kstar", "--input", "one.csv"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("setups.jsonl"), "keep me").unwrap();
    let o = lrsweep(dir, &["enumerate", "--f-c", "-4", "-o", "setups.jsonl"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(fs::read_to_string(dir.join("setups.jsonl")).unwrap(), "keep me");

    let o = lrsweep(dir, &["--force", "enumerate", "--f-c", "-4", "-o", "setups.jsonl"]);
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(dir.join("setups.jsonl")).unwrap().lines().count(), 106 + 830);
    // No temporaries left behind.
    let leftovers: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.file_name().to_string_lossy().contains(".tmp-"))
        .collect();
    assert!(leftovers.is_empty());
}

#[test]
fn config_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("cfg.json"), r#"{"devices": 4, "compute": [-2]}"#).unwrap();
    let id = "fC0_fD0_fr0_fM0_fk0";

    let run = |extra: &[&str], env: bool| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_lrsweep"));
        cmd.current_dir(dir).env_remove("LRSWEEP_CONFIG");
        if env {
            cmd.env("LRSWEEP_CONFIG", dir.join("cfg.json"));
        }
        let o = cmd.arg("plan").arg(id).args(extra).output().unwrap();
        assert!(o.status.success(), "{}", stderr(&o));
        let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v["plan"]["batch"]["devices"].as_u64().unwrap()
    };
    assert_eq!(run(&[], false), 8);
    assert_eq!(run(&[], true), 4);
    assert_eq!(run(&["--devices", "2"], true), 2);

    // Config also narrows the default grid.
    let o = lrsweep(dir, &["--config", "cfg.json", "enumerate"]);
    assert_eq!(stdout(&o).lines().count(), 106 + 830);

    fs::write(dir.join("typo.json"), r#"{"devices": 4, "devcies": 2}"#).unwrap();
    let o = lrsweep(dir, &["--config", "typo.json", "enumerate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn plan_with_batch_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let id = "fC-4_fD-6_fr1_fM0_fk1_r1=1/4_r2=3/4";
    let o = lrsweep(dir, &["plan", id, "--seed", "9", "--batches", "b.csv", "-o", "plan.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("plan.json")).unwrap()).unwrap();
    assert_eq!(v["plan"]["setup_id"], id);
    assert_eq!(v["plan"]["stages"].as_array().unwrap().len(), 2);
    assert_eq!(v["schedule"]["base_seed"], 9);
    assert_eq!(v["schedule"]["epoch_seeds"].as_array().unwrap().len(), 2);

    let csv = fs::read_to_string(dir.join("b.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("batch_index,stage,source,tokens"));
    let target: u64 = lines
        .filter(|l| l.contains(",target,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<u64>().unwrap())
        .sum();
    let stage_targets: u64 = v["schedule"]["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["budget"]["target"].as_u64().unwrap())
        .sum();
    assert_eq!(target, stage_targets);
}

#[test]
fn predict_reproduces_training_point() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let rc = reference_constants();
    let planted = PlantedKStar::linear(0.5, -6.0, 0.0, 4.0);
    let mut csv = String::from("C,f_D,log2_k_star\n");
    for delta in [-4.0, -2.0] {
        for f_d in -7..=0 {
            let x = f64::from(f_d) - 0.5 * delta;
            if (-5.0..=1.0).contains(&x) {
                let c = rc.c0 * f64::exp2(delta);
                csv.push_str(&format!("{c},{f_d},{}\n", planted.log2_kstar(delta, f64::from(f_d))));
            }
        }
    }
    fs::write(dir.join("curves.csv"), csv).unwrap();
    let o = lrsweep(dir, &["fit", "kstar", "--input", "curves.csv", "-o", "model.json"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let c = format!("{}", rc.c0 / 4.0);
    let d_t = format!("{}", rc.d_t0 * f64::exp2(-4.0));
    let o = lrsweep(dir, &["predict", "kstar", "--model", "model.json", "--C", &c, "--DT", &d_t]);
    assert!(o.status.success(), "{}", stderr(&o));
    let k: f64 = stdout(&o).trim().parse().unwrap();
    let want = planted.log2_kstar(-2.0, -4.0).exp2();
    assert!((k / want - 1.0).abs() < 1e-4, "{k} vs {want}");
}

#[test]
fn analyze_and_report() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert!(lrsweep(dir, &["enumerate", "--f-c", "0,-1", "-o", "s.jsonl"]).status.success());
    assert!(lrsweep(dir, &["simulate", "--setups", "s.jsonl", "--language-pair", "ja-en", "-o", "r.csv"])
        .status
        .success());
    let o = lrsweep(dir, &["analyze", "--setups", "s.jsonl", "--results", "r.csv", "--out-dir", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["language_pair"], "ja-en");
    let t = report["thresholds"].as_array().unwrap();
    assert_eq!(t.len(), 2);
    assert!(t.iter().all(|t| !t["crossing"].is_null()));

    // Re-running into the same directory needs --force.
    let o = lrsweep(dir, &["analyze", "--setups", "s.jsonl", "--results", "r.csv", "--out-dir", "out"]);
    assert_eq!(o.status.code(), Some(1));

    let o = lrsweep(dir, &["report", "--setups", "s.jsonl", "--results", "r.csv", "--summary"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("compute-optimal corpus"));
    assert!(text.contains("switch: multi-2stage wins up to"));

    let o = lrsweep(dir, &["report", "--setups", "s.jsonl", "--results", "r.csv"]);
    let figs: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for key in [
        "figure1_category_minima",
        "figure2_scale_curves",
        "figure3_kstar_curves",
        "figure4_ratio_points",
    ] {
        assert!(!figs[key].as_array().unwrap().is_empty(), "{key}");
    }
}

#[test]
fn unknown_ids_are_listed_not_fatal() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("r.csv"),
        "setup_id,language_pair,val_loss\nfC0_fD0_fr0_fM0_fk0,x,3.0\nmystery,x,2.0\nfC0_fD0_fr0_fM0_fk0,x,2.9\n",
    )
    .unwrap();
    let o = lrsweep(dir, &["analyze", "--results", "r.csv", "--out-dir", "out"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["ingest"]["rejected"][0]["line"], 3);
    assert_eq!(report["ingest"]["rejected"][0]["setup_id"], "mystery");
    assert_eq!(report["ingest"]["duplicates"], 1);
    assert_eq!(report["category_minima"][0]["mono-1stage"]["val_loss"], 2.9);
}
