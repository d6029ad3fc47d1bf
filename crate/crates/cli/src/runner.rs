//! End-to-end runs and sweeps with reproducible file outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use widecl_core::data::{
    make_permuted_tasks, make_prototype_base, make_rotated_tasks, read_dataset_csv,
    write_dataset_csv, write_matrix_csv, PrototypeSpec,
};
use widecl_core::dmft::{simulate_lenient, write_fields_csv};
use widecl_core::finite_net::{train_sequential_lenient, NetworkState};
use widecl_core::metrics::{cf_loss_increase, cfr_loss_relative_increase, report};
use widecl_core::rng::{derive_seed, Stream};
use widecl_core::trajectory::fmt_f64;
use widecl_core::{TaskSequence, Trajectory};

use crate::config::{DataSpec, ExperimentConfig, ModelSpec};
use crate::error::{CliError, CliResult};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVAL_MATRIX_FILE: &str = "eval_matrix.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// SHA-256 of the canonical JSON form of the config.
    pub config_hash: String,
    pub seed: u64,
    /// SHA-256 over the config hash and the generated dataset.
    pub input_digest: String,
    /// SHA-256 over every numeric output file, in `files` order.
    pub output_digest: String,
    pub wall_clock_seconds: f64,
    pub files: Vec<String>,
    pub status: String,
    #[serde(default)]
    pub error: Option<String>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

/// Builds the task sequence described by the config.
pub fn build_data(cfg: &ExperimentConfig) -> CliResult<TaskSequence> {
    let data_seed = derive_seed(cfg.seed, Stream::Data);
    let seq = match &cfg.data {
        DataSpec::Rotated {
            tasks,
            samples,
            dim,
            rho,
            targets,
        } => {
            let targets = targets.clone().unwrap_or_else(|| vec![1.0; *samples]);
            make_rotated_tasks(*tasks, *samples, *dim, *rho, &targets, data_seed)?
        }
        DataSpec::Permuted {
            tasks,
            rho,
            classes,
            samples_per_class,
            dim,
            density,
            noise,
            intensity,
        } => {
            let spec = PrototypeSpec {
                classes: *classes,
                samples_per_class: *samples_per_class,
                dim: *dim,
                density: *density,
                noise: *noise,
                intensity: *intensity,
            };
            let base = make_prototype_base(&spec, data_seed)?;
            make_permuted_tasks(&base, *tasks, *rho, derive_seed(cfg.seed, Stream::Permutation))?
        }
        DataSpec::File { path } => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            read_dataset_csv(file)?
        }
    };
    Ok(seq)
}

/// Writes `dataset.csv` and `gram.csv`.
pub fn gen_data(cfg: &ExperimentConfig, out: &Path) -> CliResult<Vec<PathBuf>> {
    let seq = build_data(cfg)?;
    fs::create_dir_all(out)?;
    let data = out.join("dataset.csv");
    let gram = out.join("gram.csv");
    write_dataset_csv(&seq, fs::File::create(&data)?)?;
    write_matrix_csv(&seq.gram, fs::File::create(&gram)?)?;
    Ok(vec![data, gram])
}

struct Simulated {
    trajectory: Trajectory,
    failure: Option<widecl_core::Error>,
    extra: Vec<(String, Vec<u8>)>,
}

fn simulate(cfg: &ExperimentConfig, seq: &TaskSequence) -> CliResult<Simulated> {
    match &cfg.model {
        ModelSpec::Finite(p) => {
            let mut state = NetworkState::init(p, seq.dim(), derive_seed(cfg.seed, Stream::Init))?;
            let (trajectory, failure) = train_sequential_lenient(
                &mut state,
                p,
                seq,
                cfg.schedule.steps_per_task,
                &cfg.train_options(),
            )?;
            Ok(Simulated {
                trajectory,
                failure,
                extra: Vec::new(),
            })
        }
        ModelSpec::Dmft(d) => {
            let dcfg = cfg.dmft_config(d);
            let (trajectory, ensemble, failure) = simulate_lenient(seq, &dcfg, None)?;
            let mut extra = Vec::new();
            if cfg.output.field_dump {
                let mut buf = Vec::new();
                write_fields_csv(&ensemble, d.activation, &mut buf)?;
                let step = trajectory.checkpoints.last().map_or(0, |c| c.step);
                extra.push((format!("fields_t{step}.csv"), buf));
            }
            Ok(Simulated {
                trajectory,
                failure,
                extra,
            })
        }
    }
}

fn kernel_dumps(traj: &Trajectory) -> CliResult<Vec<(String, Vec<u8>)>> {
    let mut out = Vec::new();
    for cp in &traj.checkpoints {
        if let Some(k) = &cp.kernels {
            let mut buf = Vec::new();
            write_matrix_csv(&k.ntk, &mut buf)?;
            out.push((format!("K_t{}.csv", cp.step), buf));
        }
    }
    Ok(out)
}

/// Runs the configured pipeline and writes the trajectory, evaluation matrix,
/// metric report and manifest into `out`. A divergence still writes the
/// checkpoints recorded before it and a manifest, then returns the error.
pub fn run(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunManifest> {
    cfg.validate()?;
    let started = Instant::now();
    let seq = build_data(cfg)?;
    let hash = config_hash(cfg);
    let mut dataset = Vec::new();
    write_dataset_csv(&seq, &mut dataset)?;
    let mut input = Sha256::new();
    input.update(hash.as_bytes());
    input.update(&dataset);
    let input_digest = hex::encode(input.finalize());

    let sim = simulate(cfg, &seq)?;
    let mut files: Vec<(String, Vec<u8>)> = Vec::new();
    let mut traj_csv = Vec::new();
    sim.trajectory.write_csv(&mut traj_csv)?;
    files.push((TRAJECTORY_FILE.into(), traj_csv));
    if sim.failure.is_none() {
        let matrix = sim.trajectory.loss_matrix()?;
        let mut buf = Vec::new();
        matrix.write_csv(&mut buf)?;
        files.push((EVAL_MATRIX_FILE.into(), buf));
        let mut buf = Vec::new();
        report(&matrix)?.write_csv(&mut buf)?;
        files.push((METRICS_FILE.into(), buf));
    }
    if cfg.output.kernel_dumps {
        files.extend(kernel_dumps(&sim.trajectory)?);
    }
    files.extend(sim.extra);

    fs::create_dir_all(out)?;
    let mut output = Sha256::new();
    for (name, bytes) in &files {
        fs::write(out.join(name), bytes)?;
        output.update(name.as_bytes());
        output.update(bytes);
    }
    let mut names: Vec<String> = files.into_iter().map(|(n, _)| n).collect();
    names.push(MANIFEST_FILE.into());
    let manifest = RunManifest {
        config_hash: hash,
        seed: cfg.seed,
        input_digest,
        output_digest: hex::encode(output.finalize()),
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        files: names,
        status: if sim.failure.is_some() { "diverged" } else { "ok" }.into(),
        error: sim.failure.as_ref().map(|e| e.to_string()),
    };
    fs::write(out.join(MANIFEST_FILE), serde_json::to_vec_pretty(&manifest)?)?;
    match sim.failure {
        Some(e) => Err(e.into()),
        None => Ok(manifest),
    }
}

/// One row of the sweep summary.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub param: String,
    pub value: f64,
    pub seed: u64,
    pub outcome: Result<SweepMetrics, String>,
    pub manifest: Option<RunManifest>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepMetrics {
    /// Mean loss of each task right after its own training.
    pub learning_loss: f64,
    /// Mean loss over tasks after the last task.
    pub average_loss: f64,
    /// Mean loss increase of earlier tasks, final minus best.
    pub forgetting: f64,
    /// Relative loss increase of earlier tasks.
    pub forgetting_rate: f64,
    pub final_losses: Vec<f64>,
}

fn sweep_point(cfg: &ExperimentConfig, out: &Path) -> CliResult<(SweepMetrics, RunManifest)> {
    let manifest = run(cfg, out)?;
    let traj_file = fs::File::open(out.join(EVAL_MATRIX_FILE))?;
    let m = widecl_core::EvalMatrix::read_csv(traj_file)?;
    let t = m.num_tasks();
    let (forgetting, forgetting_rate) = if t >= 2 {
        (cf_loss_increase(&m)?, cfr_loss_relative_increase(&m)?)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok((
        SweepMetrics {
            learning_loss: widecl_core::metrics::learning_loss(&m)?,
            average_loss: widecl_core::metrics::average_loss(&m)?,
            forgetting,
            forgetting_rate,
            final_losses: m.values.row(t - 1).iter().copied().collect(),
        },
        manifest,
    ))
}

/// Runs every (value, seed) pair of the sweep on `workers` threads and writes
/// `sweep_summary.csv`. Failed points are recorded and the sweep continues.
pub fn sweep(cfg: &ExperimentConfig, out: &Path, workers: usize) -> CliResult<Vec<SweepRow>> {
    cfg.validate()?;
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::field("sweep", "missing [sweep] section"))?;
    let seeds = if spec.seeds.is_empty() {
        vec![cfg.seed]
    } else {
        spec.seeds.clone()
    };
    let points: Vec<(f64, u64)> = spec
        .values
        .iter()
        .flat_map(|&v| seeds.iter().map(move |&s| (v, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let name = spec.param.name();
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .map(|&(value, seed)| {
                let dir = out.join(format!("{name}_{value}")).join(format!("seed_{seed}"));
                let result = cfg.with_value(spec.param, value).and_then(|mut c| {
                    c.seed = seed;
                    c.sweep = None;
                    sweep_point(&c, &dir)
                });
                let (outcome, manifest) = match result {
                    Ok((m, man)) => (Ok(m), Some(man)),
                    Err(e) => (Err(e.to_string()), None),
                };
                SweepRow {
                    param: name.into(),
                    value,
                    seed,
                    outcome,
                    manifest,
                }
            })
            .collect()
    });
    fs::create_dir_all(out)?;
    write_summary(&rows, fs::File::create(out.join(SWEEP_SUMMARY_FILE))?)?;
    Ok(rows)
}

pub const SWEEP_HEADER: &str = "param,value,seed,LA,AA,CF,CFr,final_loss_per_task";

/// Loss-based summary: `LA` holds the learning loss, `AA` the average loss,
/// `CF` the mean loss increase and `CFr` the relative loss increase. Failed
/// points leave the metric columns empty and put the error in the last one.
pub fn write_summary<W: std::io::Write>(rows: &[SweepRow], w: W) -> CliResult<()> {
    let mut out = std::io::BufWriter::new(w);
    let line = |fields: Vec<String>| fields.join(",");
    writeln!(out, "{SWEEP_HEADER}")?;
    for r in rows {
        let mut f = vec![r.param.clone(), fmt_f64(r.value), r.seed.to_string()];
        match &r.outcome {
            Ok(m) => {
                f.extend([m.learning_loss, m.average_loss, m.forgetting, m.forgetting_rate].map(fmt_f64));
                f.push(m.final_losses.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(";"));
            }
            Err(e) => {
                f.extend(std::iter::repeat_n(String::new(), 4));
                f.push(format!("\"error: {}\"", e.replace('"', "'")));
            }
        }
        writeln!(out, "{}", line(f))?;
    }
    out.flush()?;
    Ok(())
}
