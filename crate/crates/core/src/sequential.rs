//! Sequential square-root Kalman filter and Rauch–Tung–Striebel smoother.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    block2x2, hcat, is_numerically_singular, right_solve_lower, split_blocks, tria, LowerTriangularSqrt,
};
use crate::prior::TransitionModel;
use crate::statespace::{AffineObservation, GaussianSqrt};

/// Filtering and smoothing marginals on grid indices `0..=N`; index 0 is the
/// initial distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct RtsOutput {
    pub filtered: Vec<GaussianSqrt>,
    pub smoothed: Vec<GaussianSqrt>,
}

pub(crate) fn check_aligned(
    init: &GaussianSqrt,
    transitions: &[TransitionModel],
    observations: &[AffineObservation],
) -> Result<()> {
    if transitions.is_empty() {
        return Err(Error::InvalidInput("need at least one time step".into()));
    }
    check_dim("observations per transition", transitions.len(), observations.len())?;
    for tr in transitions {
        check_dim("transition state dimension", init.dim(), tr.state_dim())?;
    }
    for obs in observations {
        check_dim("observation state dimension", init.dim(), obs.h.ncols())?;
    }
    Ok(())
}

/// `m⁻ = Φ m`, `√P⁻ = tria([Φ √P, √Q])`.
pub fn kf_predict(state: &GaussianSqrt, trans: &TransitionModel) -> Result<GaussianSqrt> {
    check_dim("kf_predict", trans.state_dim(), state.dim())?;
    let mean = &trans.phi * &state.mean;
    let cov_sqrt = tria(&hcat(&[&(&trans.phi * state.cov_sqrt.matrix()), trans.q_sqrt.matrix()]))?;
    Ok(GaussianSqrt { mean, cov_sqrt })
}

/// Measurement update for `0 = H Y − d` (+ noise `√R`).
pub fn kf_update(pred: &GaussianSqrt, obs: &AffineObservation) -> Result<GaussianSqrt> {
    check_dim("kf_update", pred.dim(), obs.h.ncols())?;
    let m = obs.obs_dim();
    if m == 0 {
        return Ok(pred.clone());
    }
    let n = pred.dim();
    let p = pred.cov_sqrt.matrix();
    let psi = tria(&block2x2(
        &(&obs.h * p),
        obs.r_sqrt.matrix(),
        p,
        &DMatrix::zeros(n, m),
    ))?;
    let (psi11, psi21, psi22) = split_blocks(psi.matrix(), m);
    let gain = right_solve_lower(&psi21, &psi11).ok_or(Error::SingularInnovation)?;
    let mean = &pred.mean - gain * obs.residual(&pred.mean);
    Ok(GaussianSqrt {
        mean,
        cov_sqrt: LowerTriangularSqrt::from_lower_part(&psi22),
    })
}

/// One backward step: combines the filtering marginal at `n` with the
/// smoothing marginal at `n + 1`.
fn rts_step(
    filtered: &GaussianSqrt,
    trans: &TransitionModel,
    next_smoothed: &GaussianSqrt,
) -> Result<GaussianSqrt> {
    let n = filtered.dim();
    let pf = filtered.cov_sqrt.matrix();
    let pi = tria(&block2x2(
        &(&trans.phi * pf),
        trans.q_sqrt.matrix(),
        pf,
        &DMatrix::zeros(n, n),
    ))?;
    let (pi11, pi21, pi22) = split_blocks(pi.matrix(), n);
    if is_numerically_singular(&pi11) {
        return Err(Error::DegeneratePrediction);
    }
    let gain = right_solve_lower(&pi21, &pi11).ok_or(Error::DegeneratePrediction)?;
    let mean = &filtered.mean + &gain * (&next_smoothed.mean - &trans.phi * &filtered.mean);
    let cov_sqrt = tria(&hcat(&[&(&gain * next_smoothed.cov_sqrt.matrix()), &pi22]))?;
    Ok(GaussianSqrt { mean, cov_sqrt })
}

/// Backward pass over filtering marginals `0..=N`, with `transitions[n]`
/// mapping index `n` to `n + 1`.
pub fn rts_smooth_pass(
    filtered: &[GaussianSqrt],
    transitions: &[TransitionModel],
) -> Result<Vec<GaussianSqrt>> {
    if filtered.len() < 2 {
        return Err(Error::InvalidInput("need at least one time step".into()));
    }
    check_dim("rts_smooth_pass", filtered.len() - 1, transitions.len())?;
    let last = filtered.len() - 1;
    let mut smoothed = vec![filtered[last].clone(); filtered.len()];
    for n in (0..last).rev() {
        smoothed[n] = rts_step(&filtered[n], &transitions[n], &smoothed[n + 1])?;
    }
    Ok(smoothed)
}

/// Forward filter over observations at indices `1..=N`.
pub fn kf_filter(
    init: &GaussianSqrt,
    transitions: &[TransitionModel],
    observations: &[AffineObservation],
) -> Result<Vec<GaussianSqrt>> {
    check_aligned(init, transitions, observations)?;
    let mut filtered = Vec::with_capacity(transitions.len() + 1);
    filtered.push(init.clone());
    for (trans, obs) in transitions.iter().zip(observations) {
        let pred = kf_predict(filtered.last().expect("non-empty"), trans)?;
        filtered.push(kf_update(&pred, obs)?);
    }
    Ok(filtered)
}

/// Sequential square-root RTS smoother.
pub fn seq_rts(
    init: &GaussianSqrt,
    transitions: &[TransitionModel],
    observations: &[AffineObservation],
) -> Result<RtsOutput> {
    let filtered = kf_filter(init, transitions, observations)?;
    let smoothed = rts_smooth_pass(&filtered, transitions)?;
    Ok(RtsOutput { filtered, smoothed })
}
