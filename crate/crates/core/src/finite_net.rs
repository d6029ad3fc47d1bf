//! Finite-width MLP trained task by task with full-batch gradient descent on
//! the squared loss.
//!
//! `h1 = W0 x / sqrt(D)`, `h(l+1) = alpha h(l) + W(l) phi(h(l)) / sqrt(N)`,
//! `f = w . phi(hL) / (sqrt(N) gamma)`, with all weights initialized from
//! `N(0, 1)` except possibly the readout `w`. One GD step moves the outputs by
//! `eta / gamma^2 * K Delta`; since `eta / gamma^2 = eta0` in both
//! parameterizations the natural time is `t = step * eta0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::activation::Activation;
use crate::data::TaskSequence;
use crate::error::{invalid, Error, Result};
use crate::rng::rng_from_seed;
use crate::trajectory::{task_losses, Cadence, Checkpoint, KernelSnapshot, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameterization {
    Ntp,
    #[serde(alias = "mup")]
    MuP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReadoutInit {
    Zero,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamConfig {
    pub parameterization: Parameterization,
    pub gamma0: f64,
    pub width: usize,
    pub base_width: usize,
    /// Number of hidden layers `L`.
    pub depth: usize,
    /// Residual branch `alpha = 1` when set, `alpha = 0` otherwise.
    pub residual: bool,
    pub activation: Activation,
    pub eta0: f64,
    pub readout_init: ReadoutInit,
}

impl Default for ParamConfig {
    fn default() -> Self {
        Self {
            parameterization: Parameterization::MuP,
            gamma0: 1.0,
            width: 512,
            base_width: 64,
            depth: 1,
            residual: false,
            activation: Activation::Relu,
            eta0: 0.25,
            readout_init: ReadoutInit::Zero,
        }
    }
}

impl ParamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0 > 0.0 && self.gamma0.is_finite()) {
            return Err(invalid("gamma0", "must be positive and finite"));
        }
        if self.width == 0 {
            return Err(invalid("width", "must be >= 1"));
        }
        if self.base_width == 0 {
            return Err(invalid("base_width", "must be >= 1"));
        }
        if self.depth == 0 {
            return Err(invalid("depth", "must be >= 1"));
        }
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(invalid("eta0", "must be positive and finite"));
        }
        Ok(())
    }

    fn alpha(&self) -> f64 {
        if self.residual {
            1.0
        } else {
            0.0
        }
    }

    /// `(gamma, eta)` actually used by the network and the optimizer.
    pub fn effective_scales(&self) -> (f64, f64) {
        match self.parameterization {
            Parameterization::Ntp => (1.0, self.eta0),
            Parameterization::MuP => {
                let ratio = self.width as f64 / self.base_width as f64;
                (
                    self.gamma0 * ratio.sqrt(),
                    self.eta0 * self.gamma0 * self.gamma0 * ratio,
                )
            }
        }
    }

    /// Feature-learning strength of the infinite-width process that this
    /// network follows: `gamma0 / sqrt(N0)` under muP (so `N0 = 1` maps
    /// one to one), `1 / sqrt(N)` under NTP.
    pub fn equivalent_dmft_gamma0(&self) -> f64 {
        match self.parameterization {
            Parameterization::Ntp => 1.0 / (self.width as f64).sqrt(),
            Parameterization::MuP => self.gamma0 / (self.base_width as f64).sqrt(),
        }
    }
}

/// Weights and counters of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    /// `W0`, N x D.
    pub input_weights: DMatrix<f64>,
    /// `W1 .. W(L-1)`, each N x N.
    pub hidden_weights: Vec<DMatrix<f64>>,
    /// `w`, length N.
    pub readout: DVector<f64>,
    pub step: usize,
    /// 1-based task currently trained, 0 before training.
    pub task: usize,
}

impl NetworkState {
    pub fn init(cfg: &ParamConfig, dim: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if dim == 0 {
            return Err(invalid("dim", "must be >= 1"));
        }
        let n = cfg.width;
        let mut rng = rng_from_seed(seed);
        let mut normal = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
        };
        let input_weights = normal(n, dim);
        let hidden_weights = (1..cfg.depth).map(|_| normal(n, n)).collect();
        let readout = match cfg.readout_init {
            ReadoutInit::Zero => DVector::zeros(n),
            ReadoutInit::Gaussian => normal(n, 1).column(0).into_owned(),
        };
        Ok(Self {
            input_weights,
            hidden_weights,
            readout,
            step: 0,
            task: 0,
        })
    }

    pub fn from_weights(
        cfg: &ParamConfig,
        input_weights: DMatrix<f64>,
        hidden_weights: Vec<DMatrix<f64>>,
        readout: DVector<f64>,
    ) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.width;
        if input_weights.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: input_weights.nrows(),
            });
        }
        if hidden_weights.len() + 1 != cfg.depth {
            return Err(Error::DimensionMismatch {
                expected: cfg.depth - 1,
                got: hidden_weights.len(),
            });
        }
        if let Some(bad) = hidden_weights.iter().find(|w| w.shape() != (n, n)) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.nrows().max(bad.ncols()),
            });
        }
        if readout.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: readout.len(),
            });
        }
        Ok(Self {
            input_weights,
            hidden_weights,
            readout,
            step: 0,
            task: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.input_weights.ncols()
    }

    pub fn is_finite(&self) -> bool {
        self.input_weights.iter().all(|v| v.is_finite())
            && self.hidden_weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.readout.iter().all(|v| v.is_finite())
    }
}

/// Pre-activations of every layer for a batch, N x m each, and the outputs.
struct Pass {
    h: Vec<DMatrix<f64>>,
    phi: Vec<DMatrix<f64>>,
    f: DVector<f64>,
}

fn forward_batch(state: &NetworkState, cfg: &ParamConfig, x: &DMatrix<f64>) -> Pass {
    let n = cfg.width as f64;
    let act = cfg.activation;
    let m = x.ncols();
    let mut h1 = DMatrix::zeros(cfg.width, m);
    h1.gemm(1.0 / (x.nrows() as f64).sqrt(), &state.input_weights, x, 0.0);
    let mut h = vec![h1];
    let mut phi = vec![h[0].map(|v| act.apply(v))];
    for w in &state.hidden_weights {
        let mut next = h.last().unwrap() * cfg.alpha();
        next.gemm(1.0 / n.sqrt(), w, phi.last().unwrap(), 1.0);
        phi.push(next.map(|v| act.apply(v)));
        h.push(next);
    }
    let (gamma, _) = cfg.effective_scales();
    let f = phi.last().unwrap().tr_mul(&state.readout) / (n.sqrt() * gamma);
    Pass { h, phi, f }
}

/// Gradient fields `g(l) = sqrt(N) d h(L+1) / d h(l)` for every layer.
fn backward_batch(state: &NetworkState, cfg: &ParamConfig, pass: &Pass) -> Vec<DMatrix<f64>> {
    let n = cfg.width as f64;
    let act = cfg.activation;
    let depth = pass.h.len();
    let mut g = vec![DMatrix::zeros(0, 0); depth];
    let top = &pass.h[depth - 1];
    g[depth - 1] = DMatrix::from_fn(top.nrows(), top.ncols(), |i, mu| {
        act.derivative(top[(i, mu)]) * state.readout[i]
    });
    for l in (0..depth - 1).rev() {
        let mut back = state.hidden_weights[l].tr_mul(&g[l + 1]) / n.sqrt();
        back.zip_apply(&pass.h[l], |b, hv| *b *= act.derivative(hv));
        if cfg.residual {
            back += &g[l + 1];
        }
        g[l] = back;
    }
    g
}

/// Output and per-layer pre-activations for one input.
pub fn forward(
    state: &NetworkState,
    cfg: &ParamConfig,
    x: &DVector<f64>,
) -> Result<(f64, Vec<DVector<f64>>)> {
    if x.len() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: x.len(),
        });
    }
    let batch = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let pass = forward_batch(state, cfg, &batch);
    let fields = pass.h.iter().map(|h| h.column(0).into_owned()).collect();
    Ok((pass.f[0], fields))
}

/// Outputs on every datum of the sequence, in layout order.
pub fn predict(state: &NetworkState, cfg: &ParamConfig, seq: &TaskSequence) -> DVector<f64> {
    forward_batch(state, cfg, &seq.all_inputs()).f
}

fn kernels_from_pass(
    cfg: &ParamConfig,
    gram: &DMatrix<f64>,
    pass: &Pass,
    g: &[DMatrix<f64>],
    layer: usize,
) -> KernelSnapshot {
    let n = cfg.width as f64;
    let gram_of = |a: &DMatrix<f64>| {
        let mut k = a.tr_mul(a) / n;
        crate::linalg::symmetrize(&mut k);
        k
    };
    let phis: Vec<DMatrix<f64>> = pass.phi.iter().map(gram_of).collect();
    let gs: Vec<DMatrix<f64>> = g.iter().map(gram_of).collect();
    let depth = phis.len();
    let mut ntk = gram.component_mul(&gs[0]) + &phis[depth - 1];
    for l in 0..depth - 1 {
        ntk += phis[l].component_mul(&gs[l + 1]);
    }
    KernelSnapshot {
        phi: phis[layer - 1].clone(),
        g: gs[layer - 1].clone(),
        ntk,
    }
}

/// Feature kernel `Phi = phi(h).phi(h') / N`, gradient kernel `G = g.g' / N`
/// of hidden layer `layer` (1-based) and the full NTK over every datum.
/// For one hidden layer `K = Phi + G * Kx` elementwise.
pub fn compute_kernels(
    state: &NetworkState,
    cfg: &ParamConfig,
    seq: &TaskSequence,
    layer: usize,
) -> Result<KernelSnapshot> {
    if layer == 0 || layer > cfg.depth {
        return Err(invalid("layer", format!("must lie in 1..={}", cfg.depth)));
    }
    let pass = forward_batch(state, cfg, &seq.all_inputs());
    let g = backward_batch(state, cfg, &pass);
    Ok(kernels_from_pass(cfg, &seq.gram, &pass, &g, layer))
}

/// Unit values of the first-layer fields, N x (total data) each.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSamples {
    pub h: DMatrix<f64>,
    pub g: DMatrix<f64>,
}

pub fn extract_field_distributions(
    state: &NetworkState,
    cfg: &ParamConfig,
    seq: &TaskSequence,
) -> FieldSamples {
    let pass = forward_batch(state, cfg, &seq.all_inputs());
    let mut g = backward_batch(state, cfg, &pass);
    FieldSamples {
        h: pass.h[0].clone(),
        g: g.swap_remove(0),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub checkpoint_every: usize,
    pub overflow_bound: f64,
    pub record_kernels: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            checkpoint_every: 10,
            overflow_bound: 1e12,
            record_kernels: false,
        }
    }
}

fn check_losses(losses: &[f64], step: usize, bound: f64) -> Result<()> {
    for &loss in losses {
        if !loss.is_finite() || loss > bound {
            return Err(Error::Divergence { step, loss, bound });
        }
    }
    Ok(())
}

/// Trains on each task of `seq` in order for `steps_per_task` full-batch GD
/// steps, evaluating every task at the checkpoint cadence.
pub fn train_sequential(
    state: &mut NetworkState,
    cfg: &ParamConfig,
    seq: &TaskSequence,
    steps_per_task: usize,
    opts: &TrainOptions,
) -> Result<Trajectory> {
    let (traj, failure) = train_sequential_lenient(state, cfg, seq, steps_per_task, opts)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(traj),
    }
}

/// Like [`train_sequential`], but a divergence mid-run still returns the
/// checkpoints recorded before it alongside the error.
pub fn train_sequential_lenient(
    state: &mut NetworkState,
    cfg: &ParamConfig,
    seq: &TaskSequence,
    steps_per_task: usize,
    opts: &TrainOptions,
) -> Result<(Trajectory, Option<Error>)> {
    cfg.validate()?;
    if steps_per_task == 0 {
        return Err(invalid("steps_per_task", "must be >= 1"));
    }
    if seq.dim() != state.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.dim(),
            got: seq.dim(),
        });
    }
    let layout = seq.layout();
    let cadence = Cadence {
        every: opts.checkpoint_every,
        steps_per_task,
        num_tasks: seq.num_tasks(),
    };
    let all_x = seq.all_inputs();
    let all_y = seq.all_targets();
    let task_xt: Vec<DMatrix<f64>> = seq.tasks.iter().map(|t| t.inputs.transpose()).collect();
    let (gamma, eta) = cfg.effective_scales();
    let n = cfg.width as f64;
    let d = seq.dim() as f64;
    let lr = eta / gamma;

    let record = |state: &NetworkState, step: usize| -> Result<Checkpoint> {
        let pass = forward_batch(state, cfg, &all_x);
        let residuals = &all_y - &pass.f;
        let losses = task_losses(&residuals, &layout);
        check_losses(&losses, step, opts.overflow_bound)?;
        let kernels = opts.record_kernels.then(|| {
            let g = backward_batch(state, cfg, &pass);
            kernels_from_pass(cfg, &seq.gram, &pass, &g, 1)
        });
        Ok(Checkpoint {
            step,
            time: step as f64 * cfg.eta0,
            task_trained: cadence.task_at(step),
            residuals,
            losses,
            kernels,
        })
    };

    let mut checkpoints = Vec::new();
    let total = cadence.total_steps();
    let failure = (|| -> Result<()> {
        for step in 0..total {
            if cadence.records(step) {
                checkpoints.push(record(state, step)?);
            }
            let task = cadence.task_at(step);
            state.task = task;
            let data = &seq.tasks[task - 1];
            let pass = forward_batch(state, cfg, &data.inputs);
            let delta = &data.targets - &pass.f;
            check_losses(&[0.5 * delta.norm_squared()], step, opts.overflow_bound)?;
            let g = backward_batch(state, cfg, &pass);

            let depth = pass.h.len();
            state
                .readout
                .gemv(lr / n.sqrt(), &pass.phi[depth - 1], &delta, 1.0);
            for l in 0..depth - 1 {
                let gd = scale_columns(&g[l + 1], &delta);
                state.hidden_weights[l].gemm(lr / n, &gd, &pass.phi[l].transpose(), 1.0);
            }
            let gd = scale_columns(&g[0], &delta);
            state
                .input_weights
                .gemm(lr / (n * d).sqrt(), &gd, &task_xt[task - 1], 1.0);
            state.step += 1;
        }
        checkpoints.push(record(state, total)?);
        Ok(())
    })()
    .err();
    Ok((
        Trajectory {
            layout,
            steps_per_task,
            dt: cfg.eta0,
            checkpoints,
        },
        failure,
    ))
}

fn scale_columns(m: &DMatrix<f64>, s: &DVector<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (mut col, &v) in out.column_iter_mut().zip(s.iter()) {
        col *= v;
    }
    out
}
