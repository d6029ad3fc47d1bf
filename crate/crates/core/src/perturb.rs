//! Small-`gamma0` expansion of the infinite-width dynamics of a one-hidden-layer
//! linear network trained on two tasks with same-task input Gram `I` and
//! cross-task Gram `rho I`.
//!
//! Residuals expand as `Delta = Delta0 + gamma0^2 Delta2 + O(gamma0^4)` (the
//! odd orders vanish). The closed forms below assume one datum per task (or,
//! equivalently, per-datum quantities of decoupled data) and infinitely long
//! training on the first task where noted. [`PerturbationSystem`] integrates
//! the underlying ODEs directly for any two-task Gram and finite task
//! durations; it is the arbiter for the closed forms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::TaskLayout;
use crate::error::{invalid, Error, Result};

/// Lazy NTK between two data of the same task (`Phi + G Kx` with `Phi = Kx`, `G = 1`).
pub const LAZY_KERNEL_SAME_TASK: f64 = 2.0;

/// Lazy NTK between corresponding data of two tasks with similarity `rho`.
pub fn lazy_kernel_cross(rho: f64) -> f64 {
    2.0 * rho
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleTask {
    First,
    Second,
}

impl OracleTask {
    pub fn index(self) -> usize {
        match self {
            OracleTask::First => 1,
            OracleTask::Second => 2,
        }
    }
}

/// Zeroth-order residual of task 1 while training task 1.
pub fn delta0_task1_during_task1(t: f64, y: f64) -> f64 {
    y * (-2.0 * t).exp()
}

/// Zeroth-order residual of task 2 while training task 1. Solves
/// `d/dt Delta2 = -2 rho Delta1` with `Delta2(0) = y`.
pub fn delta0_task2_during_task1(t: f64, y: f64, rho: f64) -> f64 {
    y * (1.0 - rho) + y * rho * (-2.0 * t).exp()
}

/// Second-order residual coefficient while training task 1.
///
/// Feature learning enlarges the kernel, so the correction is negative (faster
/// decay); `Delta2` of task 2 is `rho` times that of task 1.
pub fn delta2_during_task1(t: f64, y: f64, rho: f64, task: OracleTask) -> f64 {
    let e2 = (-2.0 * t).exp();
    let base = -y.powi(3) * (e2 * (t - 0.75) + e2 * e2 - 0.25 * e2 * e2 * e2);
    match task {
        OracleTask::First => base,
        OracleTask::Second => rho * base,
    }
}

/// Zeroth-order residuals while training task 2, with `t` measured from the
/// switch and task 1 trained to convergence beforehand.
pub fn delta0_post_task2(t: f64, y: f64, rho: f64, task: OracleTask) -> f64 {
    let e2 = (-2.0 * t).exp();
    match task {
        OracleTask::First => y * rho * (1.0 - rho) * (e2 - 1.0),
        OracleTask::Second => y * (1.0 - rho) * e2,
    }
}

/// Lazy forgetting of task 1 after both tasks are trained to convergence.
pub fn cf0_infinite(rho: f64, y: f64) -> f64 {
    0.5 * y * y * rho * rho * (1.0 - rho) * (1.0 - rho)
}

/// Task-2 loss after convergence on task 1; unchanged through order `gamma0^2`.
pub fn final_loss_task2_after_task1(rho: f64, y: f64) -> f64 {
    0.5 * y * y * (1.0 - rho) * (1.0 - rho)
}

/// One evaluation request for the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleParams {
    pub rho: f64,
    pub y: f64,
    pub t: f64,
    pub order: u8,
}

impl OracleParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidRho(self.rho));
        }
        if self.t < 0.0 {
            return Err(invalid("t", "time must be non-negative"));
        }
        if self.order > 2 {
            return Err(invalid("order", "expansion is available up to order 2"));
        }
        Ok(())
    }

    /// Residual coefficient of `task` at this order during task-1 training.
    pub fn during_task1(&self, task: OracleTask) -> Result<f64> {
        self.validate()?;
        Ok(match (self.order, task) {
            (0, OracleTask::First) => delta0_task1_during_task1(self.t, self.y),
            (0, OracleTask::Second) => delta0_task2_during_task1(self.t, self.y, self.rho),
            (1, _) => 0.0,
            (_, task) => delta2_during_task1(self.t, self.y, self.rho, task),
        })
    }
}

/// Point of an integrated perturbation trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationPoint {
    pub t: f64,
    /// 1-based task trained at `t`.
    pub task_trained: usize,
    pub delta0: DVector<f64>,
    pub delta2: DVector<f64>,
}

impl PerturbationPoint {
    /// Half loss of `task` to second order: `1/2 (Delta0 + g^2 Delta2)^2`
    /// truncated after `g^2`.
    pub fn loss_coefficients(&self, layout: &TaskLayout, task: usize) -> (f64, f64) {
        let r = layout.range(task - 1);
        let d0 = self.delta0.rows_range(r.clone());
        let d2 = self.delta2.rows_range(r);
        (0.5 * d0.norm_squared(), d0.dot(&d2))
    }
}

/// Explicit-Euler integrator of the order-0 and order-2 residual equations for
/// the linear one-hidden-layer network with Gaussian readout initialization.
///
/// Auxiliary integrals per datum: `a = int Kx d`, `c = int d`,
/// `b[mu, beta] = int a'_mu c_beta`, `e = int d . a`, where `d` is the order-0
/// residual of the task being trained. They give
/// `K2 = a a^T + b Kx + (b Kx)^T + Kx (c^T Kx c + 2 e)`.
#[derive(Debug, Clone)]
pub struct PerturbationSystem {
    gram: DMatrix<f64>,
    layout: TaskLayout,
    targets: DVector<f64>,
}

impl PerturbationSystem {
    pub fn new(gram: DMatrix<f64>, layout: TaskLayout, targets: DVector<f64>) -> Result<Self> {
        let m = layout.total();
        if gram.shape() != (m, m) {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: gram.nrows(),
            });
        }
        if targets.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: targets.len(),
            });
        }
        Ok(Self {
            gram,
            layout,
            targets,
        })
    }

    /// The closed-form setting: one datum per task, `Kx = [[1, rho], [rho, 1]]`.
    pub fn two_task(rho: f64, y: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::InvalidRho(rho));
        }
        Self::new(
            DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]),
            TaskLayout::new(vec![1, 1]),
            DVector::from_element(2, y),
        )
    }

    pub fn layout(&self) -> &TaskLayout {
        &self.layout
    }

    /// Integrates through `phases` (1-based task, duration) with step `dt`,
    /// recording every `record_every` steps and at the end of each phase.
    pub fn integrate(
        &self,
        phases: &[(usize, f64)],
        dt: f64,
        record_every: usize,
    ) -> Result<Vec<PerturbationPoint>> {
        if dt <= 0.0 {
            return Err(invalid("dt", "must be positive"));
        }
        let m = self.layout.total();
        let kx = &self.gram;
        let mut d0: Vec<f64> = self.targets.iter().copied().collect();
        let mut d2 = vec![0.0; m];
        let mut a = vec![0.0; m];
        let mut c = vec![0.0; m];
        let mut b = vec![0.0; m * m];
        let mut e = 0.0;
        let mut t = 0.0;
        let mut out = Vec::new();
        let record = |t: f64, task: usize, d0: &[f64], d2: &[f64], out: &mut Vec<PerturbationPoint>| {
            out.push(PerturbationPoint {
                t,
                task_trained: task,
                delta0: DVector::from_column_slice(d0),
                delta2: DVector::from_column_slice(d2),
            });
        };

        let mut bkx = vec![0.0; m * m];
        let mut k2 = vec![0.0; m * m];
        let mut da = vec![0.0; m];
        for &(task, duration) in phases {
            if task == 0 || task > self.layout.num_tasks() {
                return Err(invalid("phases", format!("no task {task}")));
            }
            let cur = self.layout.range(task - 1);
            let steps = (duration / dt).round() as usize;
            record(t, task, &d0, &d2, &mut out);
            for s in 0..steps {
                // K2 at the start of the step.
                for mu in 0..m {
                    for nu in 0..m {
                        let mut acc = 0.0;
                        for beta in 0..m {
                            acc += b[mu * m + beta] * kx[(beta, nu)];
                        }
                        bkx[mu * m + nu] = acc;
                    }
                }
                let mut ckc = 0.0;
                for al in 0..m {
                    for be in 0..m {
                        ckc += c[al] * kx[(al, be)] * c[be];
                    }
                }
                let g2 = ckc + 2.0 * e;
                for mu in 0..m {
                    for nu in 0..m {
                        k2[mu * m + nu] =
                            a[mu] * a[nu] + bkx[mu * m + nu] + bkx[nu * m + mu] + kx[(mu, nu)] * g2;
                    }
                }

                for mu in 0..m {
                    da[mu] = cur.clone().map(|al| kx[(mu, al)] * d0[al]).sum();
                }
                let de: f64 = cur.clone().map(|al| d0[al] * a[al]).sum();
                let mut dd0 = vec![0.0; m];
                let mut dd2 = vec![0.0; m];
                for mu in 0..m {
                    dd0[mu] = -LAZY_KERNEL_SAME_TASK * da[mu];
                    dd2[mu] = -cur
                        .clone()
                        .map(|al| LAZY_KERNEL_SAME_TASK * kx[(mu, al)] * d2[al] + k2[mu * m + al] * d0[al])
                        .sum::<f64>();
                }

                for mu in 0..m {
                    for beta in 0..m {
                        b[mu * m + beta] += dt * da[mu] * c[beta];
                    }
                }
                for al in cur.clone() {
                    c[al] += dt * d0[al];
                }
                for mu in 0..m {
                    a[mu] += dt * da[mu];
                    d0[mu] += dt * dd0[mu];
                    d2[mu] += dt * dd2[mu];
                }
                e += dt * de;
                t += dt;
                if record_every > 0 && (s + 1) % record_every == 0 && s + 1 != steps {
                    record(t, task, &d0, &d2, &mut out);
                }
            }
            record(t, task, &d0, &d2, &mut out);
        }
        Ok(out)
    }
}

/// Forgetting coefficients `(CF0(t), CF2(t))` of task 1 along an integrated
/// two-phase trajectory, measured from the end of the first phase.
pub fn forgetting_coefficients(
    points: &[PerturbationPoint],
    layout: &TaskLayout,
) -> Vec<(f64, f64, f64)> {
    let Some(switch) = points.iter().position(|p| p.task_trained == 2) else {
        return Vec::new();
    };
    let (l0_ref, l2_ref) = points[switch].loss_coefficients(layout, 1);
    points[switch..]
        .iter()
        .map(|p| {
            let (l0, l2) = p.loss_coefficients(layout, 1);
            (p.t, l0 - l0_ref, l2 - l2_ref)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(delta0_task1_during_task1(0.0, 2.0), 2.0);
        assert!(delta0_task1_during_task1(50.0, 1.0).abs() < 1e-40);
        assert!((delta0_task1_during_task1(0.5, 1.0) - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(delta0_task2_during_task1(0.0, 1.0, 0.7), 1.0);
        assert!((delta0_task2_during_task1(60.0, 1.0, 0.7) - 0.3).abs() < 1e-12);
        assert!((delta0_task2_during_task1(0.3, 1.0, 0.5) - 0.774_405_818_047_1).abs() < 1e-12);
    }

    #[test]
    fn second_order_vanishes_at_both_ends() {
        for rho in [0.0, 0.3, 1.0] {
            for task in [OracleTask::First, OracleTask::Second] {
                assert!(delta2_during_task1(0.0, 1.7, rho, task).abs() < 1e-15);
                assert!(delta2_during_task1(40.0, 1.7, rho, task).abs() < 1e-30);
            }
        }
        let v = delta2_during_task1(1.0, 1.0, 0.4, OracleTask::First);
        let magnitude = (-2.0f64).exp() * 0.25 + (-4.0f64).exp() - 0.25 * (-6.0f64).exp();
        assert!((v + magnitude).abs() < 1e-15);
        assert!((magnitude - 0.051_530).abs() < 1e-6);
    }

    #[test]
    fn post_switch_values() {
        assert_eq!(delta0_post_task2(0.0, 1.0, 0.5, OracleTask::First), 0.0);
        assert!((delta0_post_task2(60.0, 1.0, 0.5, OracleTask::First) + 0.25).abs() < 1e-12);
        assert!((delta0_post_task2(0.0, 1.0, 0.3, OracleTask::Second) - 0.7).abs() < 1e-15);
    }

    #[test]
    fn forgetting_and_final_loss_laws() {
        assert!((cf0_infinite(0.5, 1.0) - 0.031_25).abs() < 1e-15);
        assert_eq!(cf0_infinite(0.0, 1.0), 0.0);
        assert_eq!(cf0_infinite(1.0, 1.0), 0.0);
        assert_eq!(final_loss_task2_after_task1(1.0, 1.0), 0.0);
        assert_eq!(final_loss_task2_after_task1(0.0, 1.0), 0.5);
        assert!((final_loss_task2_after_task1(0.5, 2.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn oracle_params_validate() {
        let p = OracleParams {
            rho: 0.5,
            y: 1.0,
            t: 0.0,
            order: 1,
        };
        assert_eq!(p.during_task1(OracleTask::First).unwrap(), 0.0);
        assert!(OracleParams { order: 3, ..p }.validate().is_err());
        assert!(OracleParams { rho: 1.2, ..p }.validate().is_err());
    }

    #[test]
    fn integrator_reproduces_lazy_transient() {
        let sys = PerturbationSystem::two_task(0.4, 1.0).unwrap();
        let pts = sys.integrate(&[(1, 1.0)], 1e-4, 0).unwrap();
        let last = pts.last().unwrap();
        assert!((last.delta0[0] - delta0_task1_during_task1(1.0, 1.0)).abs() < 1e-4);
        assert!((last.delta0[1] - delta0_task2_during_task1(1.0, 1.0, 0.4)).abs() < 1e-4);
    }

    #[test]
    fn integrator_matches_second_order_closed_form() {
        let rho = 0.6;
        let sys = PerturbationSystem::two_task(rho, 1.0).unwrap();
        let pts = sys.integrate(&[(1, 3.0)], 1e-4, 1000).unwrap();
        for p in &pts {
            let want1 = delta2_during_task1(p.t, 1.0, rho, OracleTask::First);
            let want2 = delta2_during_task1(p.t, 1.0, rho, OracleTask::Second);
            assert!((p.delta2[0] - want1).abs() < 1e-3, "t={} {} vs {}", p.t, p.delta2[0], want1);
            assert!((p.delta2[1] - want2).abs() < 1e-3);
        }
    }
}
