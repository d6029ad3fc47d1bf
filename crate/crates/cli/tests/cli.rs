use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use widecl_cli::config::ExperimentConfig;
use widecl_cli::runner::{self, RunManifest};
use widecl_core::trajectory::read_records_csv;
use widecl_core::EvalMatrix;

const REFERENCE: &str = r#"
seed = 11
[data]
kind = "permuted"
tasks = 2
rho = 0.0

[model]
kind = "dmft"
gamma0 = 1.0
samples = 3000
dt = 0.25
activation = "relu"

[schedule]
steps_per_task = 1000
checkpoint_every = 10
"#;

const LAZY_ROTATED: &str = r#"
seed = 5
[data]
kind = "rotated"
tasks = 2
samples = 1
dim = 4
rho = 0.5

[model]
kind = "dmft"
gamma0 = 0.0
samples = 2000
dt = 0.25
activation = "identity"
xi_mode = "gaussian"

[schedule]
steps_per_task = 80
checkpoint_every = 10
"#;

fn widecl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_widecl"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let p = dir.join("config.toml");
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> RunManifest {
    serde_json::from_slice(&fs::read(dir.join(runner::MANIFEST_FILE)).unwrap()).unwrap()
}

#[test]
fn reference_dmft_run_emits_four_files() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), REFERENCE);
    let out = tmp.path().join("run");
    let o = widecl(&["dmft", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(
        m.files,
        [
            runner::TRAJECTORY_FILE,
            runner::EVAL_MATRIX_FILE,
            runner::METRICS_FILE,
            runner::MANIFEST_FILE
        ]
    );
    assert_eq!(m.status, "ok");
    for f in &m.files {
        assert!(out.join(f).is_file(), "{f}");
    }
    let matrix = EvalMatrix::read_csv(fs::File::open(out.join(runner::EVAL_MATRIX_FILE)).unwrap()).unwrap();
    assert_eq!(matrix.num_tasks(), 2);
    // each task is fit by the end of its own window
    assert!(matrix.values[(0, 0)] < 0.05 * 15.0);
    assert!(matrix.values[(1, 1)] < 0.05 * 15.0);
}

#[test]
fn rerun_reproduces_digests_and_config_changes_alter_them() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(LAZY_ROTATED).unwrap();
    let a = runner::run(&cfg, &tmp.path().join("a")).unwrap();
    let b = runner::run(&cfg, &tmp.path().join("b")).unwrap();
    assert_eq!(a.config_hash, b.config_hash);
    assert_eq!(a.input_digest, b.input_digest);
    assert_eq!(a.output_digest, b.output_digest);
    for f in &a.files {
        if f != runner::MANIFEST_FILE {
            assert_eq!(
                fs::read(tmp.path().join("a").join(f)).unwrap(),
                fs::read(tmp.path().join("b").join(f)).unwrap(),
                "{f}"
            );
        }
    }
    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(runner::config_hash(&other), a.config_hash);
    let mut other = cfg.clone();
    other.schedule.checkpoint_every = 20;
    assert_ne!(runner::config_hash(&other), a.config_hash);
}

#[test]
fn output_files_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(LAZY_ROTATED).unwrap();
    let seq = runner::build_data(&cfg).unwrap();
    let out = tmp.path().join("run");
    runner::run(&cfg, &out).unwrap();
    let dcfg = match &cfg.model {
        widecl_cli::config::ModelSpec::Dmft(d) => cfg.dmft_config(d),
        _ => unreachable!(),
    };
    let traj = widecl_core::dmft::simulate(&seq, &dcfg).unwrap();
    let records = read_records_csv(fs::File::open(out.join(runner::TRAJECTORY_FILE)).unwrap()).unwrap();
    assert_eq!(records, traj.records());
    let m = EvalMatrix::read_csv(fs::File::open(out.join(runner::EVAL_MATRIX_FILE)).unwrap()).unwrap();
    assert_eq!(m, traj.loss_matrix().unwrap());

    runner::gen_data(&cfg, &tmp.path().join("data")).unwrap();
    let back = widecl_core::data::read_dataset_csv(fs::File::open(tmp.path().join("data/dataset.csv")).unwrap())
        .unwrap();
    assert_eq!(back.tasks, seq.tasks);
    assert_eq!(back.gram, seq.gram);
}

#[test]
fn zero_steps_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &LAZY_ROTATED.replace("steps_per_task = 80", "steps_per_task = 0"));
    let o = widecl(&["dmft", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schedule.steps_per_task"));
    assert!(!tmp.path().join("o").exists());
}

#[test]
fn wrong_subcommand_for_model_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), LAZY_ROTATED);
    let o = widecl(&["train", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.toml");
    let o = widecl(&["dmft", "--config", missing.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn divergence_exits_3_and_keeps_partial_output() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
[data]
kind = "rotated"
tasks = 1
samples = 2
dim = 4
rho = 0.0
targets = [1.0, 1.0]

[model]
kind = "finite"
width = 16
eta0 = 50.0
activation = "identity"
parameterization = "ntp"

[schedule]
steps_per_task = 200
checkpoint_every = 1
"#;
    let cfg = write_config(tmp.path(), text);
    let out = tmp.path().join("run");
    let o = widecl(&["train", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    assert_eq!(m.status, "diverged");
    assert!(m.error.is_some());
    let records = read_records_csv(fs::File::open(out.join(runner::TRAJECTORY_FILE)).unwrap()).unwrap();
    assert!(!records.is_empty());
    assert!(records.iter().all(|r| r.loss.is_finite()));
}

#[test]
fn gamma_sweep_counts_manifests() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[sweep]\nparam = \"gamma0\"\nvalues = [0.01, 0.03, 0.1, 0.3, 1.0]\nseeds = [1, 2, 3]\n",
        LAZY_ROTATED
            .replace("samples = 2000", "samples = 200")
            .replace("steps_per_task = 80", "steps_per_task = 20")
    );
    let cfg = write_config(tmp.path(), &text);
    let out = tmp.path().join("sweep");
    let o = widecl(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap(), "--workers", "4"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut manifests = 0;
    for v in ["0.01", "0.03", "0.1", "0.3", "1"] {
        for s in 1..=3 {
            let dir = out.join(format!("gamma0_{v}")).join(format!("seed_{s}"));
            assert!(dir.join(runner::MANIFEST_FILE).is_file(), "{}", dir.display());
            manifests += 1;
        }
    }
    assert_eq!(manifests, 15);
    let summary = fs::read_to_string(out.join(runner::SWEEP_SUMMARY_FILE)).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some(runner::SWEEP_HEADER));
    assert_eq!(lines.count(), 15);
}

#[test]
fn failed_sweep_points_are_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let text = r#"
[data]
kind = "rotated"
tasks = 2
samples = 2
dim = 6
rho = 0.0
targets = [1.0, 1.0]

[model]
kind = "finite"
width = 16
activation = "identity"
parameterization = "ntp"

[schedule]
steps_per_task = 100
checkpoint_every = 10

[sweep]
param = "gamma0"
values = [1.0]
seeds = [1]
"#;
    let mut cfg = ExperimentConfig::from_toml_str(text).unwrap();
    if let widecl_cli::config::ModelSpec::Finite(p) = &mut cfg.model {
        p.eta0 = 50.0;
    }
    let rows = runner::sweep(&cfg, tmp.path(), 1).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].outcome.is_err());
    let summary = fs::read_to_string(tmp.path().join(runner::SWEEP_SUMMARY_FILE)).unwrap();
    assert!(summary.lines().nth(1).unwrap().contains("error"));
}

#[test]
fn lazy_rho_sweep_forgetting_peaks_at_half() {
    let tmp = tempfile::tempdir().unwrap();
    let text = format!(
        "{}\n[sweep]\nparam = \"rho\"\nvalues = [0.0, 0.25, 0.5, 0.75, 1.0]\n",
        LAZY_ROTATED
    );
    let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
    let rows = runner::sweep(&cfg, tmp.path(), 4).unwrap();
    let cf: Vec<f64> = rows.iter().map(|r| r.outcome.as_ref().unwrap().forgetting).collect();
    let peak = cf
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap()
        .0;
    assert_eq!(peak, 2, "{cf:?}");
    assert!(cf[0] <= cf[1] && cf[1] <= cf[2], "{cf:?}");
    assert!(cf[2] >= cf[3] && cf[3] >= cf[4], "{cf:?}");
}

#[test]
fn oracle_prints_closed_forms() {
    let o = widecl(&["oracle", "--rho", "0.5", "--y", "1", "--t-max", "1", "--points", "2", "--order", "0"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "t,rho,y,order,task,value");
    assert_eq!(lines.len(), 1 + 2 * 2);
    let row: Vec<f64> = lines[3].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(&row[..5], &[1.0, 0.5, 1.0, 0.0, 1.0]);
    assert!((row[5] - (-2.0f64).exp()).abs() < 1e-15);

    let o = widecl(&["oracle", "--rho", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn metrics_subcommand_reads_matrix() {
    let tmp = tempfile::tempdir().unwrap();
    let p = tmp.path().join("m.csv");
    fs::write(
        &p,
        "kind,T,row,col,value\naccuracy,2,1,1,1\naccuracy,2,1,2,0\naccuracy,2,2,1,0.8\naccuracy,2,2,2,1\n",
    )
    .unwrap();
    let o = widecl(&["metrics", "--matrix", p.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let cfr = text.lines().find(|l| l.starts_with("CFr,")).unwrap();
    let v: f64 = cfr[4..].parse().unwrap();
    assert!((v - 0.2).abs() < 1e-12);
}

#[test]
fn compare_self_is_zero_and_mismatch_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::from_toml_str(LAZY_ROTATED).unwrap();
    runner::run(&cfg, &tmp.path().join("a")).unwrap();
    let mut three = cfg.clone();
    if let widecl_cli::config::DataSpec::Rotated { tasks, dim, .. } = &mut three.data {
        *tasks = 3;
        *dim = 4;
    }
    runner::run(&three, &tmp.path().join("b")).unwrap();
    let a = tmp.path().join("a").join(runner::TRAJECTORY_FILE);
    let b = tmp.path().join("b").join(runner::TRAJECTORY_FILE);

    let o = widecl(&["compare", "--finite", a.to_str().unwrap(), "--reference", a.to_str().unwrap()]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let gap: f64 = text.trim().strip_prefix("max_relative_gap,").unwrap().parse().unwrap();
    assert_eq!(gap, 0.0);

    let o = widecl(&["compare", "--finite", a.to_str().unwrap(), "--reference", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("task counts"));
}
