use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cffl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cffl")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, total_examples: usize) -> String {
    let text = format!(
        r#"scenario = "imbalanced_size"
participants = 3
total_examples = {total_examples}
hidden_layers = [8]
frameworks = ["cffl", "fedavg", "dssgd"]
output_dir = "{out}"
seeds = [1]

[dataset]
kind = "synthetic"
examples = 600
features = 6
classes = 3
test_examples = 200

[protocol]
rounds = 3
upload_rate = 0.1
pretrain_epochs = 1
weighting = "data_size"
alpha = 5.0

[protocol.sgd]
learning_rate = 0.15
decay_gamma = 0.977
batch_size = 16
local_epochs = 1
clip_bound = 0.01

[protocol.threshold]
kind = "per_member"
factor = 0.3333333333333333
"#,
        out = dir.join("runs").display()
    );
    let path = dir.join("experiment.toml");
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn help_exits_zero() {
    assert_eq!(cffl(&["--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_are_config_errors() {
    assert_eq!(cffl(&["run"]).status.code(), Some(1));
    assert_eq!(cffl(&["run", "x.toml", "--frameworks", "fedsgd"]).status.code(), Some(1));
}

#[test]
fn missing_config_is_io_error() {
    let out = cffl(&["run", "/nonexistent/experiment.toml"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn malformed_config_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "participants = 0\n").unwrap();
    assert_eq!(cffl(&["run", path.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn infeasible_partition_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 5000);
    assert_eq!(cffl(&["run", &config]).status.code(), Some(2));
}

#[test]
fn empty_run_dir_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cffl(&["plot-data", dir.path().to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn run_then_fairness_then_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), 300);
    let out_dir = dir.path().join("out");
    let out = cffl(&[
        "run",
        &config,
        "--seed",
        "4",
        "--out",
        out_dir.to_str().unwrap(),
        "--frameworks",
        "cffl,fedavg",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    assert!(out_dir.join("config.toml").is_file());
    for framework in ["standalone", "cffl", "fedavg"] {
        let run = out_dir.join(framework).join("seed_4");
        assert!(run.join("metrics.csv").is_file(), "{framework}");
        assert!(run.join("summary.json").is_file(), "{framework}");
    }
    assert!(!out_dir.join("dssgd").exists());

    let cffl_run = out_dir.join("cffl/seed_4");
    let before = fs::read_to_string(cffl_run.join("summary.json")).unwrap();
    let out = cffl(&["fairness", cffl_run.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read_to_string(cffl_run.join("summary.json")).unwrap(), before);

    let series = dir.path().join("series");
    let out = cffl(&["plot-data", cffl_run.to_str().unwrap(), "--out", series.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    for p in 0..3 {
        let text = fs::read_to_string(series.join(format!("series_{p}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 4, "{text}");
        assert!(text.starts_with("round,test_accuracy\n"));
    }
}

#[test]
fn shipped_configs_parse() {
    use cffl::harness::ExperimentConfig;

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            seen += 1;
        }
    }
    assert!(seen >= 4);

    let size = ExperimentConfig::load(&dir.join("mnist_size_p5.toml")).unwrap();
    assert_eq!(size.protocol, ExperimentConfig::mnist_imbalanced_size("data/mnist", 5).protocol);
    let class = ExperimentConfig::load(&dir.join("mnist_class_p5.toml")).unwrap();
    let mut preset = ExperimentConfig::mnist_imbalanced_class("data/mnist", 5).protocol;
    preset.pretrain_epochs = 0;
    assert_eq!(class.protocol, preset);
}
