//! Infinite-width dynamics of a one-hidden-layer network, simulated with a
//! Monte-Carlo population of single-site processes.
//!
//! Each sample carries one hidden field per datum `h[mu]` and one readout
//! field `z`. With `g = phi'(h) z` and only the current task's residuals
//! entering the sums:
//!
//! ```text
//! dh[mu]/dt = gamma0 sum_a Delta[a] g[a] Kx[mu, a]
//! dz/dt     = gamma0 sum_a Delta[a] phi(h[a])
//! dDelta/dt = -(Phi + G * Kx) Delta
//! ```
//!
//! where `Phi = E[phi(h) phi(h')]` and `G = E[g g']` are sample means.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::data::TaskSequence;
use crate::error::{invalid, Error, Result};
use crate::linalg::{centered_cosine, cholesky_lower, symmetrize};
use crate::rng::rng_from_seed;
use crate::trajectory::{task_losses, Cadence, Checkpoint, KernelSnapshot, Trajectory};

/// Initial readout fields: standard normal, or identically zero (zero readout
/// initialization).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XiMode {
    Gaussian,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DmftConfig {
    pub gamma0: f64,
    pub samples: usize,
    pub dt: f64,
    pub steps_per_task: usize,
    pub activation: Activation,
    pub xi_mode: XiMode,
    /// Pair every sample `(chi, xi)` with `(chi, -xi)`. The dynamics are
    /// invariant under `(xi, gamma0) -> (-xi, -gamma0)`, so paired ensembles
    /// give results exactly even in `gamma0`.
    pub antithetic: bool,
    pub seed: u64,
    pub checkpoint_every: usize,
    pub overflow_bound: f64,
    pub record_kernels: bool,
    pub residual_mode: ResidualMode,
}

/// How residuals advance each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    /// Euler step of `dDelta/dt = -K Delta` with the estimated NTK.
    Kernel,
    /// Read the output off the fields, `f = E[z phi(h)] / gamma0`. This is
    /// the infinite-width limit of discrete gradient descent with step `dt`
    /// rather than a discretization of gradient flow. Needs `gamma0 > 0`.
    Readout,
}

impl Default for DmftConfig {
    fn default() -> Self {
        Self {
            gamma0: 1.0,
            samples: 3000,
            dt: 0.25,
            steps_per_task: 1000,
            activation: Activation::Relu,
            xi_mode: XiMode::Zero,
            antithetic: false,
            seed: 0,
            checkpoint_every: 10,
            overflow_bound: 1e12,
            record_kernels: false,
            residual_mode: ResidualMode::Kernel,
        }
    }
}

impl DmftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 >= 0.0 && self.gamma0.is_finite()) {
            return Err(invalid("gamma0", "must be non-negative and finite"));
        }
        if self.samples < 2 {
            return Err(invalid("samples", "must be >= 2"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive"));
        }
        if self.steps_per_task == 0 {
            return Err(invalid("steps_per_task", "must be >= 1"));
        }
        if self.residual_mode == ResidualMode::Readout && self.gamma0 == 0.0 {
            return Err(invalid("residual_mode", "readout needs gamma0 > 0"));
        }
        Ok(())
    }
}

/// Sample population: `h` and `chi` are S x (total data), `z` and `xi` length S.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldEnsemble {
    pub h: DMatrix<f64>,
    pub z: DVector<f64>,
    pub chi: DMatrix<f64>,
    pub xi: DVector<f64>,
}

impl FieldEnsemble {
    pub fn samples(&self) -> usize {
        self.h.nrows()
    }

    /// Gradient fields `g = phi'(h) z`, S x (total data).
    pub fn gradient_fields(&self, act: Activation) -> DMatrix<f64> {
        let mut g = self.h.map(|v| act.derivative(v));
        for (mut row, &z) in g.row_iter_mut().zip(self.z.iter()) {
            row *= z;
        }
        g
    }
}

/// Draws `chi ~ N(0, Kx)` row by row through a Cholesky factor of
/// `Kx + 1e-10 I`, and `xi` per `xi_mode`.
pub fn sample_initial_fields(
    gram: &DMatrix<f64>,
    samples: usize,
    xi_mode: XiMode,
    seed: u64,
) -> Result<FieldEnsemble> {
    sample_fields(gram, samples, xi_mode, false, seed)
}

/// As [`sample_initial_fields`], optionally mirroring `xi` across sample pairs.
pub fn sample_fields(
    gram: &DMatrix<f64>,
    samples: usize,
    xi_mode: XiMode,
    antithetic: bool,
    seed: u64,
) -> Result<FieldEnsemble> {
    if samples < 2 {
        return Err(invalid("samples", "must be >= 2"));
    }
    let m = gram.nrows();
    let l = cholesky_lower(gram, 1e-10)?;
    let mut rng = rng_from_seed(seed);
    let fresh = if antithetic { samples.div_ceil(2) } else { samples };
    let mut chi = DMatrix::zeros(samples, m);
    let mut xi = DVector::zeros(samples);
    let mut u = DVector::zeros(m);
    for s in 0..fresh {
        for v in u.iter_mut() {
            *v = rng.sample::<f64, _>(StandardNormal);
        }
        let row = &l * &u;
        chi.row_mut(s).copy_from(&row.transpose());
        if xi_mode == XiMode::Gaussian {
            xi[s] = rng.sample::<f64, _>(StandardNormal);
        }
        if antithetic && fresh + s < samples {
            chi.row_mut(fresh + s).copy_from(&row.transpose());
            xi[fresh + s] = -xi[s];
        }
    }
    Ok(FieldEnsemble {
        h: chi.clone(),
        z: xi.clone(),
        chi,
        xi,
    })
}

/// Sample-mean kernels `Phi`, `G` and `K = Phi + G * Kx`.
pub fn estimate_kernels(
    ensemble: &FieldEnsemble,
    gram: &DMatrix<f64>,
    act: Activation,
) -> KernelSnapshot {
    let s = ensemble.samples() as f64;
    let phi_h = ensemble.h.map(|v| act.apply(v));
    let g = ensemble.gradient_fields(act);
    let mut phi = phi_h.tr_mul(&phi_h) / s;
    let mut gk = g.tr_mul(&g) / s;
    symmetrize(&mut phi);
    symmetrize(&mut gk);
    let ntk = &phi + gk.component_mul(gram);
    KernelSnapshot { phi, g: gk, ntk }
}

/// One Euler update of the fields with the residuals of `current` (0-based
/// task range) held at their start-of-step values.
pub fn step(
    ensemble: &mut FieldEnsemble,
    residuals: &DVector<f64>,
    gram: &DMatrix<f64>,
    cfg: &DmftConfig,
    current: std::ops::Range<usize>,
) {
    if cfg.gamma0 == 0.0 {
        return;
    }
    let act = cfg.activation;
    let scale = cfg.gamma0 * cfg.dt;
    let p = current.len();
    let s = ensemble.samples();
    let delta = residuals.rows_range(current.clone());
    let mut gd = DMatrix::zeros(s, p);
    let mut phid = DVector::zeros(s);
    for (k, a) in current.clone().enumerate() {
        let d = delta[k];
        for i in 0..s {
            let h = ensemble.h[(i, a)];
            gd[(i, k)] = act.derivative(h) * ensemble.z[i] * d;
            phid[i] += act.apply(h) * d;
        }
    }
    let cross = gram.rows_range(current).into_owned();
    ensemble.h.gemm(scale, &gd, &cross, 1.0);
    ensemble.z.axpy(scale, &phid, 1.0);
}

fn check_losses(losses: &[f64], step: usize, bound: f64) -> Result<()> {
    for &loss in losses {
        if !loss.is_finite() || loss > bound {
            return Err(Error::Divergence { step, loss, bound });
        }
    }
    Ok(())
}

/// Samples the initial ensemble from `cfg.seed` and runs [`simulate_from`].
pub fn simulate(seq: &TaskSequence, cfg: &DmftConfig) -> Result<Trajectory> {
    let (traj, _, err) = simulate_lenient(seq, cfg, None)?;
    match err {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Integrates the coupled residual and field equations task by task. Each
/// step estimates kernels, updates every residual with the current task's
/// residuals, then updates the fields, all from start-of-step values.
pub fn simulate_from(
    seq: &TaskSequence,
    cfg: &DmftConfig,
    ensemble: FieldEnsemble,
) -> Result<(Trajectory, FieldEnsemble)> {
    let (traj, ensemble, err) = simulate_lenient(seq, cfg, Some(ensemble))?;
    match err {
        Some(e) => Err(e),
        None => Ok((traj, ensemble)),
    }
}

/// Like [`simulate_from`] (sampling from `cfg.seed` when `ensemble` is
/// `None`), but a divergence mid-run still returns the checkpoints recorded
/// before it alongside the error.
pub fn simulate_lenient(
    seq: &TaskSequence,
    cfg: &DmftConfig,
    ensemble: Option<FieldEnsemble>,
) -> Result<(Trajectory, FieldEnsemble, Option<Error>)> {
    cfg.validate()?;
    let mut ensemble = match ensemble {
        Some(e) => e,
        None => sample_fields(&seq.gram, cfg.samples, cfg.xi_mode, cfg.antithetic, cfg.seed)?,
    };
    let m = seq.gram.nrows();
    if ensemble.h.ncols() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: ensemble.h.ncols(),
        });
    }
    let layout = seq.layout();
    let cadence = Cadence {
        every: cfg.checkpoint_every,
        steps_per_task: cfg.steps_per_task,
        num_tasks: seq.num_tasks(),
    };
    let gram = &seq.gram;
    let targets = seq.all_targets();
    let readout = cfg.residual_mode == ResidualMode::Readout;
    let mut delta = if readout {
        &targets - readout_outputs(&ensemble, cfg)
    } else {
        targets.clone()
    };
    let frozen = (cfg.gamma0 == 0.0).then(|| estimate_kernels(&ensemble, gram, cfg.activation));
    let mut checkpoints = Vec::new();
    let total = cadence.total_steps();
    let mut failure = None;
    for s in 0..=total {
        let recording = cadence.records(s);
        let kernels = match &frozen {
            Some(k) => Some(k.clone()),
            None if !readout || (recording && cfg.record_kernels) => {
                Some(estimate_kernels(&ensemble, gram, cfg.activation))
            }
            None => None,
        };
        let losses = task_losses(&delta, &layout);
        if let Err(e) = check_losses(&losses, s, cfg.overflow_bound) {
            failure = Some(e);
            break;
        }
        if recording {
            checkpoints.push(Checkpoint {
                step: s,
                time: s as f64 * cfg.dt,
                task_trained: cadence.task_at(s),
                residuals: delta.clone(),
                losses,
                kernels: if cfg.record_kernels { kernels.clone() } else { None },
            });
        }
        if s == total {
            break;
        }
        let current = layout.range(cadence.task_at(s) - 1);
        let start = delta.clone();
        step(&mut ensemble, &start, gram, cfg, current.clone());
        if readout {
            delta = &targets - readout_outputs(&ensemble, cfg);
        } else if let Some(k) = &kernels {
            let k_cur = k.ntk.columns_range(current.clone());
            delta.gemv(-cfg.dt, &k_cur, &start.rows_range(current), 1.0);
        }
    }
    Ok((
        Trajectory {
            layout,
            steps_per_task: cfg.steps_per_task,
            dt: cfg.dt,
            checkpoints,
        },
        ensemble,
        failure,
    ))
}

/// Network outputs implied by the fields, `E[z phi(h)] / gamma0`.
pub fn readout_outputs(ensemble: &FieldEnsemble, cfg: &DmftConfig) -> DVector<f64> {
    let phi = ensemble.h.map(|v| cfg.activation.apply(v));
    phi.tr_mul(&ensemble.z) / (ensemble.samples() as f64 * cfg.gamma0)
}

/// Largest violation of `dCF/dt = -Delta1 . K12 Delta2` along the task-2
/// window, with the derivative taken as a forward difference between
/// consecutive checkpoints. Needs kernels at consecutive steps.
pub fn forgetting_rate_check(traj: &Trajectory) -> Result<f64> {
    if traj.num_tasks() < 2 {
        return Err(Error::SingleTask);
    }
    let r1 = traj.layout.range(0);
    let r2 = traj.layout.range(1);
    let start = traj.task_end_step(1);
    let end = traj.task_end_step(2);
    let mut worst: f64 = 0.0;
    let mut seen = false;
    for pair in traj.checkpoints.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.step < start || b.step > end || b.step != a.step + 1 {
            continue;
        }
        let k = a
            .kernels
            .as_ref()
            .ok_or_else(|| Error::Alignment("trajectory has no kernel snapshots".into()))?;
        let rate = (b.losses[0] - a.losses[0]) / (b.time - a.time);
        let d1 = a.residuals.rows_range(r1.clone());
        let d2 = a.residuals.rows_range(r2.clone());
        let k12 = k.ntk.view((r1.start, r2.start), (r1.len(), r2.len()));
        let predicted = -d1.dot(&(k12 * d2));
        worst = worst.max((rate - predicted).abs());
        seen = true;
    }
    if !seen {
        return Err(Error::Alignment(
            "no consecutive checkpoints inside the second task".into(),
        ));
    }
    Ok(worst)
}

/// Centered cosine between a feature kernel and the target outer product.
pub fn kernel_target_alignment(phi: &DMatrix<f64>, targets: &DVector<f64>) -> Result<f64> {
    if phi.nrows() != targets.len() || phi.ncols() != targets.len() {
        return Err(Error::DimensionMismatch {
            expected: targets.len(),
            got: phi.nrows(),
        });
    }
    centered_cosine(phi, &(targets * targets.transpose()))
}

/// Rows `sample,datum,h,g` of the ensemble, for histogramming.
pub fn write_fields_csv<W: std::io::Write>(
    ensemble: &FieldEnsemble,
    act: Activation,
    w: W,
) -> Result<()> {
    let g = ensemble.gradient_fields(act);
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["sample", "datum", "h", "g"])?;
    for s in 0..ensemble.samples() {
        for mu in 0..ensemble.h.ncols() {
            out.write_record([
                s.to_string(),
                mu.to_string(),
                crate::trajectory::fmt_f64(ensemble.h[(s, mu)]),
                crate::trajectory::fmt_f64(g[(s, mu)]),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
