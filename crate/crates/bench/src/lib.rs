//! Fixtures shared by the criterion benches.

use parode::prior::{iwp_transition, preconditioner, taylor_init};
use parode::statespace::linearize_ek1;
use parode::{uniform_grid, AffineObservation, GaussianSqrt, IwpPrior, NamedProblem, Result, TransitionModel};

/// One linear smoothing problem: the first inner step of an IEKS run, with
/// the ODE linearized around the Taylor-initialized state at every node.
pub struct LinearModel {
    pub init: GaussianSqrt,
    pub transitions: Vec<TransitionModel>,
    pub observations: Vec<AffineObservation>,
}

impl LinearModel {
    pub fn new(problem: &NamedProblem, nu: usize, steps: usize) -> Result<Self> {
        let ivp = &problem.ivp;
        let prior = IwpPrior::new(nu, ivp.dim())?;
        let times = uniform_grid(ivp.t_end(), steps);
        let pre = preconditioner(&prior, ivp.t_end() / steps as f64)?;
        let start = taylor_init(ivp, nu)?;
        let transitions = times
            .windows(2)
            .map(|w| iwp_transition(&prior, w[1] - w[0]).map(|tr| tr.preconditioned(&pre)))
            .collect::<Result<Vec<_>>>()?;
        let observations = times[1..]
            .iter()
            .map(|&t| linearize_ek1(ivp, &start.mean, t).map(|o| o.preconditioned(&pre.scales)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { init: pre.condition(&start), transitions, observations })
    }

    pub fn steps(&self) -> usize {
        self.transitions.len()
    }
}
