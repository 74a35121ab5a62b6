use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use suwr_cli::config::{DataSource, Selector, TrainRun};
use suwr_cli::{Checkpoint, EXIT_CONFIG, EXIT_DATA, EXIT_VIOLATION};
use suwr_core::neural::Activation;
use suwr_core::problems::{fixtures, Dataset, SynKind};
use suwr_core::{DatasetKind, SuwrModel, Task, TrainConfig};
use tempfile::tempdir;

fn suwr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_suwr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn gen_is_deterministic() {
    let dir = tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b/b.csv");
    for out in [&a, &b] {
        let o = suwr(&["gen", "--kind", "syn4", "--n", "300", "--seed", "7", "--out", p(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let ds = Dataset::read(&a).unwrap();
    assert_eq!(ds.rows().len(), 300);
    assert_eq!(ds.rows()[0].0.values().len(), 11);
    assert_eq!(ds.kind(), DatasetKind::Syn(SynKind::Syn4));
}

#[test]
fn gen_syn1_full_size() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("syn1.csv");
    assert_eq!(code(&suwr(&["gen", "--kind", "syn1", "--n", "10000", "--seed", "0", "--out", p(&out)])), 0);
    let text = fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 12);
    assert_eq!(lines.count(), 10000);
}

#[test]
fn gen_toy_is_exhaustive() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("toy.csv");
    assert_eq!(code(&suwr(&["gen", "--kind", "toy", "--out", p(&out)])), 0);
    let ds = Dataset::read(&out).unwrap();
    assert_eq!(ds.rows().len(), 1024);
    assert_eq!(ds.kind(), DatasetKind::Toy { d_pairs: 5 });
}

#[test]
fn audit_exit_codes() {
    let dir = tempdir().unwrap();
    let o = suwr(&["audit", "--fixture", "table1", "--out", p(dir.path())]);
    assert_eq!(code(&o), EXIT_VIOLATION);
    assert_eq!(stdout(&o).matches("violated").count(), 3);
    let report = json(&dir.path().join("audit.json"));
    assert_eq!(report["config"]["command"], "audit");

    let o = suwr(&["audit", "--fixture", "table3"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).matches("clean").count(), 3);

    let o = suwr(&["audit", "--fixture", "table1", "--check", "corollary"]);
    assert_eq!(code(&o), EXIT_VIOLATION);
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn audit_reads_policy_files() {
    let dir = tempdir().unwrap();
    let (problem, policy) = fixtures::table3();
    let file = dir.path().join("policy.json");
    let doc = fixtures::Fixture { problem, policy };
    fs::write(&file, serde_json::to_string(&doc).unwrap()).unwrap();
    assert_eq!(code(&suwr(&["audit", "--input", p(&file)])), 0);

    fs::write(&file, "{\"problem\": 3}").unwrap();
    assert_eq!(code(&suwr(&["audit", "--input", p(&file)])), EXIT_DATA);
}

#[test]
fn config_and_data_errors() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("o");
    assert_eq!(code(&suwr(&["train", "--out", p(&out)])), EXIT_CONFIG);
    assert_eq!(code(&suwr(&["train", "--kind", "syn9", "--out", p(&out)])), EXIT_CONFIG);
    assert_eq!(
        code(&suwr(&["train", "--kind", "syn1", "--lambda", "-1", "--out", p(&out)])),
        EXIT_CONFIG
    );
    assert_eq!(code(&suwr(&["train", "--kind", "toy2", "--T", "0", "--out", p(&out)])), EXIT_CONFIG);
    assert_eq!(code(&suwr(&["bogus"])), EXIT_CONFIG);

    let missing = dir.path().join("missing.json");
    assert_eq!(code(&suwr(&["eval", "--model", p(&missing), "--out", p(&out)])), EXIT_DATA);
    assert_eq!(code(&suwr(&["train", "--config", p(&missing), "--out", p(&out)])), EXIT_DATA);

    let garbage = dir.path().join("garbage.csv");
    fs::write(&garbage, "a,b\n1,2\n").unwrap();
    assert_eq!(
        code(&suwr(&["train", "--kind", "syn1", "--data", p(&garbage), "--out", p(&out)])),
        EXIT_DATA
    );
    assert!(!out.exists());
}

#[test]
fn training_reruns_from_its_own_artifact() {
    let dir = tempdir().unwrap();
    let first = dir.path().join("first");
    let second = dir.path().join("second");
    let o = suwr(&[
        "train", "--kind", "toy2", "--lambda", "0.2", "--epochs", "30", "--seed", "3", "--out", p(&first),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let model = first.join("model.json");
    assert_eq!(code(&suwr(&["train", "--config", p(&model), "--out", p(&second)])), 0);
    for f in ["model.json", "history.csv", "history.json"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
    let history = fs::read_to_string(first.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,loss,sparsity,metric\n"));
    assert_eq!(history.lines().count(), 31);
    let cfg = json(&model)["config"].clone();
    assert_eq!(cfg["train"]["lambda"], 0.2);
    assert_eq!(cfg["train"]["T"], 4);

    // flags override the loaded configuration
    let third = dir.path().join("third");
    assert_eq!(
        code(&suwr(&["train", "--config", p(&model), "--epochs", "2", "--out", p(&third)])),
        0
    );
    assert_eq!(json(&third.join("model.json"))["config"]["train"]["epochs"], 2);

    let audit = suwr(&["audit", "--model", p(&model)]);
    assert_eq!(code(&audit), 0, "{}", stdout(&audit));
}

#[test]
fn untrained_model_is_at_chance() {
    let dir = tempdir().unwrap();
    let kind = DatasetKind::Syn(SynKind::Syn1);
    let run = TrainRun {
        data: DataSource::train_default(kind),
        selector: Selector::Suwr,
        train: TrainConfig::synthetic(SynKind::Syn1),
    };
    let model = SuwrModel::new(11, 16, Task::Classification, Activation::Silu, 0).unwrap();
    let path = dir.path().join("model.json");
    fs::write(&path, serde_json::to_string(&Checkpoint::new(&run, &model)).unwrap()).unwrap();

    let out = dir.path().join("eval");
    let o = suwr(&["eval", "--model", p(&path), "--n", "4000", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report = json(&out.join("report.json"));
    let auroc = report["auroc"].as_f64().unwrap();
    assert!((auroc - 0.5).abs() < 0.08, "auroc {auroc}");
    assert_eq!(report["n"], 4000);
    assert_eq!(report["config"]["data"]["seed"], 100);
    assert!(fs::read_to_string(out.join("report.csv")).unwrap().starts_with("kind,cfsr,tpr,fdr,auroc"));

    let oracle = TrainRun {
        selector: Selector::Oracle,
        ..run
    };
    fs::write(&path, serde_json::to_string(&Checkpoint::new(&oracle, &model)).unwrap()).unwrap();
    assert_eq!(code(&suwr(&["eval", "--model", p(&path), "--n", "500", "--out", p(&out)])), 0);
    let report = json(&out.join("report.json"));
    assert_eq!(report["tpr"], 100.0);
    assert_eq!(report["fdr"], 0.0);
}

#[test]
fn pareto_sweep_writes_fronts_and_plot() {
    let dir = tempdir().unwrap();
    let o = suwr(&["pareto", "--kind", "toy", "--lambda", "0.3,0.4,0.5,0.8", "--out", p(dir.path())]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let local = fs::read_to_string(dir.path().join("local.csv")).unwrap();
    assert!(local.starts_with("lambda,sparsity,loss,kind\n"));
    let rows = local.lines().skip(1).count();
    assert!((1..=4).contains(&rows), "{local}");
    assert!(local.lines().skip(1).all(|l| l.ends_with(",local-optimal")));
    let global = fs::read_to_string(dir.path().join("global.csv")).unwrap();
    assert!(global.lines().skip(1).all(|l| l.ends_with(",global-optimal")));
    let svg = fs::read_to_string(dir.path().join("fronts.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(json(&dir.path().join("pareto.json"))["config"]["lambdas"][3], 0.8);
}

#[test]
fn infer_writes_narratives() {
    let dir = tempdir().unwrap();
    let train = dir.path().join("train");
    assert_eq!(
        code(&suwr(&["train", "--kind", "toy2", "--epochs", "3", "--out", p(&train)])),
        0
    );
    let out = dir.path().join("infer");
    let o = suwr(&["infer", "--model", p(&train.join("model.json")), "--limit", "3", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let doc = json(&out.join("narratives.json"));
    let instances = doc["instances"].as_array().unwrap();
    assert_eq!(instances.len(), 3);
    for inst in instances {
        let order = inst["step_order"].as_array().unwrap();
        let mask = inst["mask"].as_array().unwrap();
        assert_eq!(mask.len(), 4);
        let selected = mask.iter().filter(|b| b.as_u64() == Some(1)).count();
        assert_eq!(order.len(), selected);
        assert_eq!(inst["per_step_predictions"].as_array().unwrap().len(), order.len() + 1);
        assert_eq!(inst["per_step_stop_probs"].as_array().unwrap().len(), order.len() + 1);
    }
}
