use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lobhawk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lobhawk")).args(args).env("RUST_LOG", "info").output().expect("spawn lobhawk")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr:\n{}", String::from_utf8_lossy(&out.stderr));
}

fn small_config(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    let gen = lobhawk(&["--seed", "3", "fixture", "--assets", "AAPL,INTC", "--events", "2500", "--out", data.to_str().unwrap()]);
    ok(&gen);
    let cfg = dir.join("pipeline.toml");
    std::fs::write(
        &cfg,
        r#"seed = 11

[[assets]]
name = "AAPL"
messages = "data/AAPL_message_1.csv"
orderbook = "data/AAPL_orderbook_1.csv"

[[assets]]
name = "INTC"
messages = "data/INTC_message_1.csv"
orderbook = "data/INTC_orderbook_1.csv"

[neural]
hidden = 4
epochs = 1
batch = 32
window = 50
eval_mc_samples = 2

[sim]
runs = 2

[mm]
train_len = 800
test_len = 400

[sac]
hidden = [8]
batch = 32
learning_starts = 100
train_episodes = 1
eval_episodes = 3
"#,
    )
    .unwrap();
    cfg
}

fn manifest(root: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn missing_input_file_fails_validation_before_any_work() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("p.toml");
    std::fs::write(&cfg, "seed = 1\n[[assets]]\nname = \"X\"\nmessages = \"nope.csv\"\norderbook = \"nope_book.csv\"\n").unwrap();
    let out = tmp.path().join("out");
    let r = lobhawk(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("missing file"));
    assert!(!out.exists());
}

#[test]
fn seed_is_mandatory_in_pipeline_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("p.toml");
    std::fs::write(&cfg, "assets = []\n").unwrap();
    let r = lobhawk(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("seed"));
}

#[test]
fn interrupted_pipeline_resumes_after_completed_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let root = tmp.path().join("run");
    let full = lobhawk(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()]);
    ok(&full);
    let reference = manifest(&root);
    let results = std::fs::read(root.join("AAPL/results.json")).unwrap();
    let table = std::fs::read(root.join("report/table6_fill_ratio.csv")).unwrap();

    // Pretend the run died during the third stage.
    let mut m = reference.clone();
    for a in m["assets"].as_object_mut().unwrap().values_mut() {
        a["completed"].as_array_mut().unwrap().truncate(2);
    }
    std::fs::write(root.join("manifest.json"), serde_json::to_string_pretty(&m).unwrap()).unwrap();
    std::fs::remove_dir_all(root.join("AAPL/sim")).unwrap();
    std::fs::remove_file(root.join("AAPL/results.json")).unwrap();
    let events_mtime = std::fs::metadata(root.join("AAPL/events.csv")).unwrap().modified().unwrap();

    let again = lobhawk(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", root.to_str().unwrap()]);
    ok(&again);
    let log = String::from_utf8_lossy(&again.stderr);
    assert!(log.contains("AAPL: ingest already complete"), "{log}");
    assert!(log.contains("AAPL: train already complete"), "{log}");
    assert!(log.contains("AAPL: simulate\n") || log.contains("AAPL: simulate\r\n"), "{log}");
    assert_eq!(std::fs::metadata(root.join("AAPL/events.csv")).unwrap().modified().unwrap(), events_mtime);
    assert_eq!(manifest(&root), reference);
    assert_eq!(std::fs::read(root.join("AAPL/results.json")).unwrap(), results);
    assert_eq!(std::fs::read(root.join("report/table6_fill_ratio.csv")).unwrap(), table);
}

#[test]
fn pipeline_is_a_function_of_config_and_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    ok(&lobhawk(&["pipeline", "--config", cfg.to_str().unwrap(), "--out", a.to_str().unwrap()]));
    ok(&lobhawk(&["--sequential", "pipeline", "--config", cfg.to_str().unwrap(), "--out", b.to_str().unwrap()]));
    for f in ["manifest.json", "fingerprint.json", "report/manifest.json", "INTC/results.json", "AAPL/sim/run_001.csv", "AAPL/mm_sim/eval.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let c = tmp.path().join("c");
    ok(&lobhawk(&["--seed", "12", "pipeline", "--config", cfg.to_str().unwrap(), "--out", c.to_str().unwrap()]));
    assert_ne!(std::fs::read(a.join("AAPL/results.json")).unwrap(), std::fs::read(c.join("AAPL/results.json")).unwrap());
}

#[test]
fn output_root_from_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("p.toml");
    std::fs::write(&cfg, "seed = 1\n[[assets]]\nname = \"X\"\nmessages = \"nope.csv\"\norderbook = \"nope_book.csv\"\n").unwrap();
    let r = Command::new(env!("CARGO_BIN_EXE_lobhawk"))
        .args(["pipeline", "--config", cfg.to_str().unwrap()])
        .env_remove("LOBHAWK_OUTPUT")
        .output()
        .unwrap();
    assert!(!r.status.success());
}

#[test]
fn individual_subcommands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let p = |s: &str| d.join(s).to_str().unwrap().to_string();
    ok(&lobhawk(&["--seed", "5", "fixture", "--assets", "GOOG", "--events", "3000", "--out", &p("raw")]));
    ok(&lobhawk(&["ingest", "--messages", &p("raw/GOOG_message_1.csv"), "--book", &p("raw/GOOG_orderbook_1.csv"), "--out", &p("ev/events.csv")]));
    assert!(d.join("ev/events.mids.csv").is_file());
    assert!(d.join("ev/events.jumps.json").is_file());
    ok(&lobhawk(&["--seed", "5", "train", "--events", &p("ev/events.csv"), "--out", &p("model"), "--epochs", "1", "--hidden", "4", "--batch", "32"]));
    ok(&lobhawk(&["--seed", "5", "simulate", "--model", &p("model"), "--runs", "2", "--events-per-run", "1500", "--out", &p("sim")]));
    ok(&lobhawk(&["--seed", "5", "price", "--events", &p("sim/run_000.csv"), "--jumps", &p("ev/events.jumps.json"), "--v0", "1100", "--out", &p("path.csv")]));
    ok(&lobhawk(&["stats", "--path", &p("path.csv"), "--out", &p("stats.json")]));
    ok(&lobhawk(&[
        "--seed", "5", "mm-train", "--prices", &p("path.csv"), "--events", &p("sim/run_000.csv"), "--out", &p("agent"),
        "--train-len", "1000", "--test-len", "500", "--train-episodes", "1",
    ]));
    ok(&lobhawk(&["mm-eval", "--agent", &p("agent"), "--episodes", "4"]));
    let eval: Value = serde_json::from_str(&std::fs::read_to_string(d.join("agent/eval/eval.json")).unwrap()).unwrap();
    assert!(eval["mean_reward"].is_number());
    assert_eq!(std::fs::read_dir(d.join("agent/eval/episodes")).unwrap().count(), 4);
}

#[test]
fn hawkes_sim_writes_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let model = tmp.path().join("m.json");
    std::fs::write(
        &model,
        r#"{"version":1,"m":2,"base":[0.5,0.5],"alpha":[[0.2,0.1],[0.1,0.2]],"beta":[[1.0,1.0],[1.0,1.0]],"transfer":"identity"}"#,
    )
    .unwrap();
    let out = tmp.path().join("ev.csv");
    ok(&lobhawk(&["--seed", "2", "hawkes-sim", "--model", model.to_str().unwrap(), "--events", "300", "--out", out.to_str().unwrap()]));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 301);
}
