use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kac")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn minimal(out: &Path) -> String {
    format!(
        r#"{{
  "scenario": "cil",
  "stream": {{ "num_tasks": 2, "classes_per_task": 2, "d_latent": 4, "n_feature": 8,
              "params": {{ "train_per_class": 10, "test_per_class": 5 }} }},
  "train": {{ "epochs": 2 }},
  "heads": [{{ "kind": "kac" }}, {{ "kind": "linear" }}],
  "seeds": [3],
  "output_dir": {:?}
}}"#,
        out.to_string_lossy()
    )
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn minimal_run_writes_reports_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let cfg = write_config(tmp.path(), &minimal(&out));
    let res = kac(&["run", &cfg]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines[0], "scenario,head,steps,seed,avg,last");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("cil,kac-n4,2,3,"));
    assert!(lines[2].starts_with("cil,linear,2,3,"));

    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("cil_kac-n4_seed3.json")).unwrap()).unwrap();
    assert_eq!(report["seed"], 3);
    assert_eq!(report["report"]["config"]["seed"], 3);
    assert_eq!(report["report"]["config"]["head"]["kind"], "kac");
    assert_eq!(report["stream"]["effective_seed"], 3);
    assert!(report["report"].get("wall_clock_seconds").is_none());
    assert!(out.join("cil_linear_seed3_checkpoint.json").exists());
    assert!(out.join("resolved_config.json").exists());

    let again = tmp.path().join("again");
    assert_eq!(kac(&["run", &cfg, "--out", again.to_str().unwrap()]).status.code(), Some(0));
    let a: Vec<_> = dir_bytes(&out);
    let b: Vec<_> = dir_bytes(&again);
    assert_eq!(a.len(), b.len());
    for ((na, ba), (nb, bb)) in a.iter().zip(&b) {
        assert_eq!(na, nb);
        assert_eq!(ba, bb, "{na} differs between runs");
    }
}

#[test]
fn malformed_config_exits_two_with_position() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "{\n  \"scenario\": \"cil\",\n  \"seeds\": [0,,]\n}\n");
    let res = kac(&["run", &cfg]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("config.json:3:"), "{err}");

    let cfg = write_config(tmp.path(), r#"{"scenario": "cil", "seeds": [], "output_dir": "x", "heads": [{"kind": "linear"}]}"#);
    assert_eq!(kac(&["run", &cfg]).status.code(), Some(2));
    assert_eq!(kac(&["run", "/nonexistent/config.json"]).status.code(), Some(2));
    assert_eq!(kac(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_one() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{"scenario": "cil", "seeds": [0], "output_dir": "x", "heads": [{"kind": "linear"}],
        "stream": {"num_tasks": 4, "classes_per_task": 4, "d_latent": 1, "n_feature": 2,
                   "params": {"max_resamples": 10}}}"#;
    let cfg = write_config(tmp.path(), body);
    let out = tmp.path().join("o");
    let res = kac(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn gradcheck_passes_and_reports_every_head() {
    let res = kac(&["gradcheck", "--seed", "0", "--trials", "1"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    for name in ["kac", "bspline", "bspline-residual", "mlp", "mlp-fixed", "linear"] {
        assert!(
            text.lines().any(|l| l.starts_with(&format!("{name} ")) && l.contains("max relative error")),
            "{name}: {text}"
        );
    }
}

#[test]
fn corrupted_gradient_fails_gradcheck() {
    let res = kac(&["gradcheck", "--corrupt"]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stdout).contains("offending coordinate"));
    assert_eq!(kac(&["gradcheck", "--trials", "0"]).status.code(), Some(2));
}

#[test]
fn export_activations_contract() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let body = format!(
        r#"{{"scenario": "cil",
  "stream": {{ "num_tasks": 5, "classes_per_task": 4, "d_latent": 8, "n_feature": 32,
              "params": {{ "train_per_class": 4, "test_per_class": 2 }} }},
  "train": {{ "epochs": 1 }},
  "heads": [{{ "kind": "kac" }}, {{ "kind": "linear" }}],
  "seeds": [0], "output_dir": {:?}}}"#,
        out.to_string_lossy()
    );
    let cfg = write_config(tmp.path(), &body);
    assert_eq!(kac(&["run", &cfg]).status.code(), Some(0));

    let ckpt = out.join("cil_kac-n4_seed0_checkpoint.json");
    let a = tmp.path().join("a.csv");
    let b = tmp.path().join("b.csv");
    assert_eq!(kac(&["export-activations", ckpt.to_str().unwrap(), a.to_str().unwrap()]).status.code(), Some(0));
    assert_eq!(kac(&["export-activations", ckpt.to_str().unwrap(), b.to_str().unwrap()]).status.code(), Some(0));
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("class,channel,score"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 640);
    for row in rows {
        let score: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&score));
    }

    let linear = out.join("cil_linear_seed0_checkpoint.json");
    let res = kac(&["export-activations", linear.to_str().unwrap(), a.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn param_count_states_exact_weights() {
    let res = kac(&["param-count"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    assert!(text.contains("100 x (4 * 768) = 307200 weights"));
    assert!(text.contains("0.23M"));
}
