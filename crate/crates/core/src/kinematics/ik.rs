use nalgebra::{DMatrix, DVector, Vector6};
use serde::{Deserialize, Serialize};

use super::chain::{JointState, KinematicChain};
use super::pose::Pose;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClikParams {
    /// Fraction of the damped least-squares step applied per iteration.
    pub gain: f64,
    /// Tikhonov term added to `J Jᵀ` before inversion.
    pub damping: f64,
    pub max_iters: usize,
    pub tol_pos: f64,
    pub tol_rot: f64,
}

impl Default for ClikParams {
    fn default() -> Self {
        ClikParams {
            gain: 0.5,
            damping: 1e-3,
            max_iters: 500,
            tol_pos: 1e-4,
            tol_rot: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClikSolution {
    pub q: JointState,
    pub pos_err: f64,
    pub rot_err: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// 6-D pose error `(Δp, axis·angle of target·current⁻¹)`.
pub fn pose_error(current: &Pose, target: &Pose) -> Vector6<f64> {
    let dp = target.position - current.position;
    let dr = current.rotation_error_to(target);
    Vector6::new(dp.x, dp.y, dp.z, dr.x, dr.y, dr.z)
}

/// Closed-loop inverse kinematics with a damped pseudo-inverse.
///
/// Iterates `q ← clamp(q + gain · Jᵀ(JJᵀ + λI)⁻¹ e)` until both the position and
/// rotation errors drop under tolerance. Unreachable targets are not an error:
/// the best iterate is returned with `converged = false`.
pub fn clik_solve(
    chain: &KinematicChain,
    target: &Pose,
    frame: &str,
    q_init: &JointState,
    params: &ClikParams,
) -> Result<ClikSolution> {
    let idx = chain
        .frame_index(frame)
        .ok_or_else(|| Error::NotFound(format!("frame {frame:?} in chain {:?}", chain.name)))?;
    if q_init.len() != chain.dof() {
        return Err(Error::invalid(format!(
            "q_init has length {}, chain has {} dof",
            q_init.len(),
            chain.dof()
        )));
    }
    let mut q = chain.clamp(q_init.as_slice()).0;
    let mut iterations = 0;
    loop {
        let poses = chain.frame_poses(&q)?;
        let err = pose_error(&poses[idx], target);
        let pos_err = err.fixed_rows::<3>(0).norm();
        let rot_err = err.fixed_rows::<3>(3).norm();
        let converged = pos_err < params.tol_pos && rot_err < params.tol_rot;
        if converged || iterations >= params.max_iters {
            return Ok(ClikSolution {
                q: JointState(q),
                pos_err,
                rot_err,
                converged,
                iterations,
            });
        }
        let jac = chain.jacobian_from_poses(&poses, idx);
        let step = damped_step(&jac, &err, params.damping);
        for (v, d) in q.iter_mut().zip(step.iter()) {
            *v += params.gain * d;
        }
        chain.clamp_in_place(&mut q);
        iterations += 1;
    }
}

fn damped_step(jac: &DMatrix<f64>, err: &Vector6<f64>, damping: f64) -> DVector<f64> {
    let jjt = jac * jac.transpose() + DMatrix::identity(6, 6) * damping;
    let e = DVector::from_column_slice(err.as_slice());
    match jjt.cholesky() {
        Some(ch) => jac.transpose() * ch.solve(&e),
        None => DVector::zeros(jac.ncols()),
    }
}
