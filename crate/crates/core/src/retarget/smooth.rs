use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::kinematics::Rig;

use super::RobotTrajectory;

const MAX_DEGREE: usize = 5;

/// Evaluation weights of a least-squares polynomial fit over `window` samples.
///
/// Row `r` holds the weights that produce the fitted value at sample `r` of
/// the window. Interior samples use the centered row; the first and last
/// `window / 2` samples of a sequence use the off-center rows of the nearest
/// full window, so any polynomial of degree ≤ 5 passes through unchanged.
pub(crate) fn savgol_rows(window: usize) -> DMatrix<f64> {
    let degree = MAX_DEGREE.min(window - 1);
    let half = (window / 2) as f64;
    let vander = DMatrix::from_fn(window, degree + 1, |i, p| ((i as f64 - half) / half).powi(p as i32));
    let pinv = vander
        .clone()
        .pseudo_inverse(1e-12)
        .expect("Vandermonde pseudo-inverse");
    vander * pinv
}

fn smooth_series(values: &[f64], rows: &DMatrix<f64>) -> Vec<f64> {
    let n = values.len();
    let window = rows.nrows();
    let half = window / 2;
    (0..n)
        .map(|i| {
            let start = i.saturating_sub(half).min(n - window);
            let r = i - start;
            (0..window).map(|j| rows[(r, j)] * values[start + j]).sum()
        })
        .collect()
}

/// Quintic Savitzky–Golay smoothing of every joint series, followed by
/// re-clamping to the joint limits. Object poses pass through unchanged.
pub fn min_jerk_smooth(traj: &RobotTrajectory, window: usize, rig: &Rig) -> Result<RobotTrajectory> {
    let n = traj.frames.len();
    if window < 3 || window % 2 == 0 || window > n {
        return Err(Error::invalid(format!(
            "smoothing window must be odd, at least 3 and at most the trajectory length {n}; got {window}"
        )));
    }
    let rows = savgol_rows(window);
    let mut out = traj.clone();
    let arm_dof = traj.frames[0].q_arm.len();
    let hand_dof = traj.frames[0].q_hand.len();
    for j in 0..arm_dof {
        let series: Vec<f64> = traj.frames.iter().map(|f| f.q_arm.0[j]).collect();
        for (f, v) in out.frames.iter_mut().zip(smooth_series(&series, &rows)) {
            f.q_arm.0[j] = v;
        }
    }
    for j in 0..hand_dof {
        let series: Vec<f64> = traj.frames.iter().map(|f| f.q_hand.0[j]).collect();
        for (f, v) in out.frames.iter_mut().zip(smooth_series(&series, &rows)) {
            f.q_hand.0[j] = v;
        }
    }
    for f in out.frames.iter_mut() {
        rig.arm.clamp_in_place(&mut f.q_arm.0);
        rig.hand.clamp_in_place(&mut f.q_hand.0);
    }
    Ok(out)
}
