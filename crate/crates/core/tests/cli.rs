use std::path::Path;
use std::process::{Command, Output};

use herdalign::elicitation::p_from_alpha;

fn herdalign(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_herdalign"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("HERDALIGN_TEMPLATES")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn users_csv(path: &Path, rows: &[(f64, u32, f64)]) {
    let mut s = String::from("participant_id,p,k,prop_1,prop_2,prop_3,prop_4,prop_5,prop_6,prop_7,prop_8,prop_9,prop_10\n");
    for (i, (a, k, f)) in rows.iter().enumerate() {
        let p = p_from_alpha(*a, 20.0, 6.0);
        s.push_str(&format!("u{i},{p},{k}"));
        for t in 0..10 {
            s.push_str(&format!(",{}", f + t as f64));
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn solve_without_influence_prints_merton_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = herdalign(dir.path(), &["solve", "--alpha1", "0.3", "--theta", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("eta = "));
    let v = json(&dir.path().join("solve.json"));
    assert_eq!(v["iterations"], 1);
    for (a, b) in v["p1"].as_array().unwrap().iter().zip(v["merton_alpha1"].as_array().unwrap()) {
        assert!((a.as_f64().unwrap() - b.as_f64().unwrap()).abs() < 1e-10);
    }
    assert!(dir.path().join("solve.config").exists());
}

#[test]
fn solve_with_influence_lies_between_the_two_merton_paths() {
    let dir = tempfile::tempdir().unwrap();
    let o = herdalign(dir.path(), &["solve", "--alpha1", "0.13", "--theta", "7e-8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("solve.json"));
    let get = |k: &str| -> Vec<f64> { v[k].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect() };
    for ((p1, p2), m1) in get("p1").iter().zip(get("p2")).zip(get("merton_alpha1")) {
        assert!(p2 < *p1 && *p1 < m1, "{p2} < {p1} < {m1}");
    }
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(herdalign(dir.path(), &["solve", "--bogus"]).status.code(), Some(1));
    assert_eq!(herdalign(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(herdalign(dir.path(), &["analyze", "--eps", "0"]).status.code(), Some(1));
    assert_eq!(herdalign(dir.path(), &["gen-dataset", "--template", "P9"]).status.code(), Some(1));
    assert_eq!(herdalign(dir.path(), &["reduction", "--pre", "0", "--post", "1"]).status.code(), Some(3));
}

#[test]
fn gen_dataset_is_reproducible_and_mixes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let o = herdalign(a.path(), &["gen-dataset", "--trials", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(a.path().join("dataset.jsonl")).unwrap();
    assert_eq!(text.lines().count(), 100);
    assert!(herdalign(b.path(), &["gen-dataset", "--trials", "1", "--serial"]).status.success());
    let (ma, mb) = (json(&a.path().join("manifest.json")), json(&b.path().join("manifest.json")));
    assert_eq!(ma["files"]["dataset.jsonl"], mb["files"]["dataset.jsonl"]);
    assert_eq!(ma["records"], 100);

    let user = a.path().join("user.jsonl");
    let lines: Vec<&str> = text.lines().take(5).collect();
    std::fs::write(&user, lines.join("\n") + "\n").unwrap();
    let c = tempfile::tempdir().unwrap();
    let o = herdalign(
        c.path(),
        &["gen-dataset", "--trials", "1", "--mix", user.to_str().unwrap(), "10:1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let m = json(&c.path().join("manifest.json"));
    assert_eq!(m["mix"]["counts"]["theory"], 50);
    assert_eq!(m["mix"]["counts"]["user"], 5);
    let mixed = std::fs::read_to_string(c.path().join("mixed.jsonl")).unwrap();
    assert_eq!(mixed.lines().count(), 55);
}

#[test]
fn mix_command_writes_counts() {
    let dir = tempfile::tempdir().unwrap();
    assert!(herdalign(dir.path(), &["gen-dataset", "--trials", "1"]).status.success());
    let data = dir.path().join("dataset.jsonl");
    let o = herdalign(
        dir.path(),
        &["mix", "--theory", data.to_str().unwrap(), "--user", data.to_str().unwrap(), "--ratio", "1:1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("mix.json"));
    assert_eq!(v["counts"]["theory"], 100);
    assert_eq!(v["counts"]["user"], 100);
    let bad = herdalign(
        dir.path(),
        &["mix", "--theory", data.to_str().unwrap(), "--user", data.to_str().unwrap(), "--ratio", "x"],
    );
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn metrics_on_identical_tables_and_class_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let users = dir.path().join("users.csv");
    users_csv(&users, &[(0.1, 2, 30.0), (0.2, 5, 40.0), (0.3, 8, 20.0)]);
    let o = herdalign(dir.path(), &["metrics", "--user", users.to_str().unwrap(), "--agent", users.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&dir.path().join("metrics.json"));
    assert_eq!(v["agent"]["overall_mse"], 0.0);
    assert!(dir.path().join("plot_user.tsv").exists());
    assert!(dir.path().join("plot_agent.tsv").exists());

    let agent = dir.path().join("agent.csv");
    users_csv(&agent, &[(0.1, 2, 30.0)]);
    let o = herdalign(dir.path(), &["metrics", "--user", users.to_str().unwrap(), "--agent", agent.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("(2, 5)") && err.contains("(3, 8)"), "{err}");
}

#[test]
fn metrics_against_theory_runs_consistency_tests() {
    let dir = tempfile::tempdir().unwrap();
    let users = dir.path().join("users.csv");
    users_csv(&users, &[(0.1, 2, 30.0), (0.2, 5, 40.0), (0.3, 8, 20.0), (0.15, 1, 50.0)]);
    let o = herdalign(dir.path(), &["metrics", "--user", users.to_str().unwrap(), "--theory"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("t-test d"));
    let v = json(&dir.path().join("metrics.json"));
    assert!(v["theory"]["overall_mse"].as_f64().unwrap() > 0.0);
    assert!(v["consistency"].is_object());
}

#[test]
fn reduction_prints_rounded_percent() {
    let dir = tempfile::tempdir().unwrap();
    let o = herdalign(dir.path(), &["reduction", "--pre", "100", "--post", "38.74"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "-61.26%\n");
}

#[test]
fn analyze_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["analyze", "--family", "pareto:2", "--family", "exponential:0.5"];
    let oa = herdalign(a.path(), &args);
    assert!(oa.status.success(), "{}", stderr(&oa));
    assert!(herdalign(b.path(), &args).status.success());
    assert!(!stdout(&oa).contains("inequality_holds = false"));
    assert!(stdout(&oa).contains("inequality_holds = true"));
    assert_eq!(
        std::fs::read(a.path().join("analysis.json")).unwrap(),
        std::fs::read(b.path().join("analysis.json")).unwrap()
    );
    assert_eq!(herdalign(a.path(), &["analyze", "--family", "cubic:1"]).status.code(), Some(1));
}

#[test]
fn config_echo_reproduces_a_run() {
    let a = tempfile::tempdir().unwrap();
    let o = herdalign(a.path(), &["--seed", "99", "solve", "--alpha1", "0.2", "--alpha2", "0.4", "--theta", "5e-8"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = a.path().join("solve.config");
    assert!(std::fs::read_to_string(&echo).unwrap().starts_with("# herdalign "));
    let b = tempfile::tempdir().unwrap();
    let again = herdalign(
        b.path(),
        &["--config", echo.to_str().unwrap(), "solve", "--alpha1", "0.2", "--alpha2", "0.4", "--theta", "5e-8"],
    );
    assert!(again.status.success(), "{}", stderr(&again));
    assert_eq!(stdout(&o), stdout(&again));
    assert_eq!(
        std::fs::read(a.path().join("solve.json")).unwrap(),
        std::fs::read(b.path().join("solve.json")).unwrap()
    );
}

#[test]
fn convergence_failure_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tight.cfg");
    std::fs::write(&cfg, "tolerance=1e-300\nmax_iterations=2\n").unwrap();
    let o = herdalign(
        dir.path(),
        &["--config", cfg.to_str().unwrap(), "solve", "--alpha1", "0.1", "--theta", "1e-3"],
    );
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn template_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let tpl = dir.path().join("tpl");
    std::fs::create_dir(&tpl).unwrap();
    std::fs::write(tpl.join("p3_prompt.txt"), "alpha {alpha}, k {k}").unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_herdalign"))
        .args(["gen-dataset", "--trials", "1", "--out"])
        .arg(dir.path())
        .env("HERDALIGN_TEMPLATES", &tpl)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let first = std::fs::read_to_string(dir.path().join("dataset.jsonl")).unwrap();
    let v: serde_json::Value = serde_json::from_str(first.lines().next().unwrap()).unwrap();
    assert_eq!(v["prompt"], "alpha 0.05, k 1");
}
