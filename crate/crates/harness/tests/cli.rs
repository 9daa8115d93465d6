use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::process::{Command, Output};

use amp_core::approximator::{read_mlp, read_value_net};
use amp_harness::output::{read_curves, Manifest, CURVE_HEADER, FAILED};

fn amp(dir: &Path, config: &str, args: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_amp")).arg("--config").arg(&cfg).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const SMALL: &str = r#"{"env": {"kind": "mqn", "episode_length": 100},
    "ppo": {"iterations": 2, "episodes": 2, "hidden": [8], "value_fit": {"epochs": 2}}}"#;

#[test]
fn zero_iterations_leave_a_manifest_and_empty_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = amp(tmp.path(), r#"{"ppo": {"iterations": 0}}"#, &["train", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let m = Manifest::read(&out).unwrap();
    assert_eq!(m.status, "complete");
    assert_eq!(m.runs, vec!["plain_mc__input_only".to_string()]);
    assert_eq!(m.resolved_env["lambda1"], serde_json::json!(0.3));
    let curves = fs::read_to_string(out.join("plain_mc__input_only/curves.csv")).unwrap();
    assert_eq!(curves.trim(), CURVE_HEADER.join(","));
    assert!(read_curves(&out.join("plain_mc__input_only/seed_1.csv")).unwrap().is_empty());
}

#[test]
fn duplicate_seeds_and_unknown_keys_are_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let o = amp(tmp.path(), r#"{"seeds": [4, 4]}"#, &["train", "--out", tmp.path().join("a").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("duplicate"), "{}", stderr(&o));
    assert!(!tmp.path().join("a").exists());
    let o = amp(tmp.path(), r#"{"ppo": {"iteratons": 3}}"#, &["train"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("iteratons"), "{}", stderr(&o));
}

#[test]
fn same_config_reproduces_the_learning_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for name in ["a", "b"] {
        let out = tmp.path().join(name);
        let o = amp(tmp.path(), SMALL, &["train", "--seed", "7", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", stderr(&o));
        runs.push(read_curves(&out.join("plain_mc__input_only/seed_7.csv")).unwrap());
    }
    assert_eq!(runs[0].len(), 2);
    for (x, y) in runs[0].iter().zip(&runs[1]) {
        assert_eq!((x.seed, x.iteration, x.metric, x.value_loss), (y.seed, y.iteration, y.metric, y.value_loss));
    }
}

#[test]
fn normalization_pair_writes_both_value_loss_curves_and_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = SMALL.replacen('{', r#"{"normalizations": ["input_only", "input_and_output"], "seeds": [1, 2],"#, 1);
    let o = amp(tmp.path(), &cfg, &["train", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    for label in ["plain_mc__input_only", "plain_mc__input_and_output"] {
        let agg = fs::read_to_string(out.join(label).join("aggregate_value_loss.csv")).unwrap();
        assert_eq!(agg.lines().count(), 3, "{label}");
        let ck = out.join(label).join("checkpoints/seed_2");
        let mlp = read_mlp::<_, f64>(BufReader::new(fs::File::open(ck.join("policy.ckpt")).unwrap())).unwrap();
        assert_eq!(mlp.layer_sizes(), &[3, 8, 3]);
        read_value_net::<_, f64>(BufReader::new(fs::File::open(ck.join("value.ckpt")).unwrap())).unwrap();
        assert_eq!(fs::read_to_string(ck.join("iteration")).unwrap().trim(), "2");
    }
    let timing =
        Command::new(env!("CARGO_BIN_EXE_amp")).args(["timing", "--out", out.to_str().unwrap()]).output().unwrap();
    assert!(timing.status.success(), "{}", stderr(&timing));
    let table = String::from_utf8_lossy(&timing.stdout);
    assert!(table.contains("Data Preprocessing") && table.contains("plain_mc"), "{table}");
}

#[test]
fn intractable_exact_mode_leaves_failure_markers() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let cfg = r#"{"env": {"kind": "ride_hail", "regions": 2, "n_cars": 2, "horizon": 3},
        "estimators": [{"kind": "amp_exact"}], "ppo": {"iterations": 2, "episodes": 2}}"#;
    let o = amp(tmp.path(), cfg, &["train", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("cannot be enumerated"), "{}", stderr(&o));
    assert!(out.join(FAILED).exists());
    assert!(out.join("amp_exact__input_only").join(FAILED).exists());
    assert_eq!(Manifest::read(&out).unwrap().status, "failed");
}

#[test]
fn oracle_and_variance_commands_write_their_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("oracle");
    let o = amp(
        tmp.path(),
        r#"{"cap": 3, "policies": ["class1_first", "uniform"]}"#,
        &["oracle", "--out", out.to_str().unwrap()],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("oracle_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
    assert_eq!(fs::read_to_string(out.join("optimal_h.csv")).unwrap().lines().count(), 1 + 64);
    assert!(out.join("h_uniform.csv").exists() && out.join("optimal_policy.csv").exists());

    let out = tmp.path().join("variance");
    let cfg = r#"{"env": {"kind": "mqn", "buffer_cap": 5, "episode_length": 200}, "zeta": "oracle_h",
        "samples": [3], "episodes": 20, "anchors": [[0, 0, 0], [1, 0, 0]]}"#;
    let o = amp(tmp.path(), cfg, &["variance", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("variance.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("mode,L,anchor,mean,variance,episodes"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.iter().any(|r| r.starts_with("amp_sampled_L3,3,")), "{csv}");
    assert!(rows.iter().any(|r| r.starts_with("plain_mc,0,")), "{csv}");
    assert_eq!(Manifest::read(&out).unwrap().config["seed"], serde_json::json!(3));
}
