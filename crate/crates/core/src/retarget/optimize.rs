use nalgebra::{DVector, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::{JointState, KinematicChain};

use super::RetargetParams;

#[derive(Debug, Clone, PartialEq)]
pub struct FrameSolution {
    pub q: JointState,
    /// Final objective value, m².
    pub residual: f64,
    pub iterations: usize,
}

/// Retargeting objective `Σᵢ‖xᵢ − fᵢ(q)‖² + β‖q − q_prev‖²` and its gradient.
pub(crate) struct Objective<'a> {
    chain: &'a KinematicChain,
    targets: &'a [Vector3<f64>],
    q_prev: &'a [f64],
    beta: f64,
}

impl<'a> Objective<'a> {
    pub(crate) fn value(&self, q: &[f64]) -> Result<f64> {
        let poses = self.chain.frame_poses(q)?;
        let mut f = 0.0;
        for (&frame, x) in self.chain.fingertip_frames().iter().zip(self.targets) {
            f += (x - poses[frame].position).norm_squared();
        }
        Ok(f + self.beta * smooth_term(q, self.q_prev))
    }

    fn value_and_gradient(&self, q: &[f64]) -> Result<(f64, DVector<f64>)> {
        let poses = self.chain.frame_poses(q)?;
        let mut f = 0.0;
        let mut g = DVector::zeros(q.len());
        for (&frame, x) in self.chain.fingertip_frames().iter().zip(self.targets) {
            let r = x - poses[frame].position;
            f += r.norm_squared();
            let jac = self.chain.jacobian_from_poses(&poses, frame);
            g -= 2.0 * jac.fixed_rows::<3>(0).transpose() * r;
        }
        for (k, (&a, &b)) in q.iter().zip(self.q_prev).enumerate() {
            g[k] += 2.0 * self.beta * (a - b);
        }
        Ok((f + self.beta * smooth_term(q, self.q_prev), g))
    }
}

fn smooth_term(q: &[f64], q_prev: &[f64]) -> f64 {
    q.iter().zip(q_prev).map(|(a, b)| (a - b) * (a - b)).sum()
}

fn project(chain: &KinematicChain, q: &DVector<f64>) -> DVector<f64> {
    let mut out = q.clone();
    chain.clamp_in_place(out.as_mut_slice());
    out
}

/// Fits hand joints to fingertip targets (expressed in the hand root frame)
/// by projected gradient descent with Barzilai–Borwein steps and Armijo
/// backtracking. The warm start `q_prev` is also the smoothness anchor, and
/// every accepted step decreases the objective.
pub fn retarget_frame(
    chain: &KinematicChain,
    targets: &[Vector3<f64>],
    q_prev: &JointState,
    params: &RetargetParams,
) -> Result<FrameSolution> {
    if targets.len() != chain.fingertip_frames().len() {
        return Err(Error::invalid(format!(
            "{} targets for {} fingertips",
            targets.len(),
            chain.fingertip_frames().len()
        )));
    }
    if targets.iter().any(|t| t.iter().any(|v| !v.is_finite())) {
        return Err(Error::invalid("non-finite fingertip target"));
    }
    if !chain.within_limits(q_prev.as_slice()) {
        return Err(Error::invalid(format!(
            "warm start must lie within the limits of chain {:?}",
            chain.name
        )));
    }
    let objective = Objective {
        chain,
        targets,
        q_prev: q_prev.as_slice(),
        beta: params.beta_smooth,
    };

    let mut q = DVector::from_column_slice(q_prev.as_slice());
    if q.is_empty() {
        return Ok(FrameSolution {
            residual: objective.value(q.as_slice())?,
            q: q_prev.clone(),
            iterations: 0,
        });
    }
    let (mut f, mut g) = objective.value_and_gradient(q.as_slice())?;
    let mut alpha = 1.0;
    let mut iterations = 0;
    while iterations < params.max_iters {
        let stationarity = (project(chain, &(&q - &g)) - &q).amax();
        if stationarity <= 1e-14 {
            break;
        }
        let mut accepted = None;
        let mut trial_alpha = alpha;
        while trial_alpha > 1e-20 {
            let candidate = project(chain, &(&q - trial_alpha * &g));
            let step = &candidate - &q;
            if step.amax() == 0.0 {
                break;
            }
            let (f_new, g_new) = objective.value_and_gradient(candidate.as_slice())?;
            if f_new <= f + 1e-4 * g.dot(&step) {
                accepted = Some((candidate, f_new, g_new));
                break;
            }
            trial_alpha *= 0.5;
        }
        let Some((q_new, f_new, g_new)) = accepted else {
            break;
        };
        iterations += 1;
        let s = &q_new - &q;
        let y = &g_new - &g;
        q = q_new;
        f = f_new;
        g = g_new;
        if s.amax() < params.step_tol {
            break;
        }
        let sy = s.dot(&y);
        alpha = if sy > 0.0 {
            (s.dot(&s) / sy).clamp(1e-8, 1e8)
        } else {
            (trial_alpha * 2.0).min(1e8)
        };
    }
    Ok(FrameSolution {
        q: JointState(q.as_slice().to_vec()),
        residual: f,
        iterations,
    })
}

/// Objective value at `q`, exposed for property checks.
pub fn retarget_objective(
    chain: &KinematicChain,
    targets: &[Vector3<f64>],
    q_prev: &JointState,
    beta_smooth: f64,
    q: &JointState,
) -> Result<f64> {
    Objective {
        chain,
        targets,
        q_prev: q_prev.as_slice(),
        beta: beta_smooth,
    }
    .value(q.as_slice())
}
