//! Iterated extended Kalman smoothing drivers for ODE initial value problems.
//!
//! All three drivers run inference with unit diffusion in preconditioned
//! coordinates, calibrate `σ̂` from the final filter pass and report the
//! posterior in the original coordinates with covariances scaled by `σ̂`.

use nalgebra::DVector;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{hcat, tria, whitened_sq_norm, LowerTriangularSqrt};
use crate::parallel::{para_rts, ScanStats};
use crate::pool::WorkPool;
use crate::prior::{iwp_transition, preconditioner, taylor_init, IwpPrior, Preconditioner, Projection, TransitionModel};
use crate::sequential::{kf_predict, kf_update, rts_smooth_pass, seq_rts, RtsOutput};
use crate::statespace::{
    linearize_ek0, linearize_ek1, validate_grid, AffineObservation, GaussianSqrt, IvProblem,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Linearization {
    /// First-order Taylor expansion of the vector field.
    #[default]
    Ek1,
    /// Jacobian replaced by zero.
    Ek0,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IeksConfig {
    pub max_iterations: usize,
    pub traj_rtol: f64,
    pub obj_atol: f64,
    pub obj_rtol: f64,
    pub linearization: Linearization,
}

impl Default for IeksConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            traj_rtol: 1e-13,
            obj_atol: 1e-9,
            obj_rtol: 1e-6,
            linearization: Linearization::Ek1,
        }
    }
}

impl IeksConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be at least 1".into()));
        }
        for (name, v) in [
            ("traj_rtol", self.traj_rtol),
            ("obj_atol", self.obj_atol),
            ("obj_rtol", self.obj_rtol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Which smoother drives the solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ParaIeks,
    Ieks,
    Eks,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::ParaIeks => "paraieks",
            Method::Ieks => "ieks",
            Method::Eks => "eks",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paraieks" => Ok(Method::ParaIeks),
            "ieks" => Ok(Method::Ieks),
            "eks" => Ok(Method::Eks),
            other => Err(Error::InvalidInput(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverReport {
    pub times: Vec<f64>,
    /// Full-state posterior marginals on the grid.
    pub marginals: Vec<GaussianSqrt>,
    /// `N(E₀μ_n, E₀Σ_nE₀ᵀ)`.
    pub solution_marginals: Vec<GaussianSqrt>,
    pub sigma_hat: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub filter_stats: ScanStats,
    pub smoother_stats: ScanStats,
}

impl SolverReport {
    /// Larger of the two scan counters.
    pub fn scan_stats(&self) -> ScanStats {
        self.filter_stats.max(self.smoother_stats)
    }

    pub fn solution_means(&self) -> Vec<DVector<f64>> {
        self.solution_marginals.iter().map(|g| g.mean.clone()).collect()
    }

    /// Marginal standard deviations of the solution components.
    pub fn solution_stds(&self) -> Vec<DVector<f64>> {
        self.solution_marginals
            .iter()
            .map(|g| g.cov().diagonal().map(|v| v.max(0.0).sqrt()))
            .collect()
    }
}

/// `½ Σ_n ‖η_n − Φ_n η_{n−1}‖²` whitened by the transition noise factors.
pub fn objective_value(traj: &[DVector<f64>], transitions: &[TransitionModel]) -> Result<f64> {
    check_dim("objective trajectory", transitions.len() + 1, traj.len())?;
    let mut total = 0.0;
    for (n, tr) in transitions.iter().enumerate() {
        let incr = &traj[n + 1] - &tr.phi * &traj[n];
        total += whitened_sq_norm(&incr, &tr.q_sqrt)?;
    }
    Ok(0.5 * total)
}

fn max_abs(traj: &[DVector<f64>]) -> f64 {
    traj.iter().map(|x| x.amax()).fold(0.0, f64::max)
}

/// Trajectory or objective has stopped moving.
pub fn stopping_check(
    prev_traj: &[DVector<f64>],
    new_traj: &[DVector<f64>],
    prev_obj: f64,
    new_obj: f64,
    cfg: &IeksConfig,
) -> bool {
    let change = prev_traj
        .iter()
        .zip(new_traj)
        .map(|(a, b)| (a - b).amax())
        .fold(0.0, f64::max);
    if change <= cfg.traj_rtol * max_abs(new_traj) {
        return true;
    }
    (new_obj - prev_obj).abs() <= cfg.obj_atol + cfg.obj_rtol * new_obj.abs()
}

/// Innovation `z = H m⁻ − d` and factor `√S` of its covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct Innovation {
    pub z: DVector<f64>,
    pub s_sqrt: LowerTriangularSqrt,
}

/// Innovations of a filter pass; `filtered[n]` must be the filtering
/// marginal at index `n`. Vacuous observations are skipped.
pub fn innovations(
    filtered: &[GaussianSqrt],
    transitions: &[TransitionModel],
    observations: &[AffineObservation],
) -> Result<Vec<Innovation>> {
    check_dim("innovations", transitions.len() + 1, filtered.len())?;
    check_dim("innovations", transitions.len(), observations.len())?;
    let mut out = Vec::with_capacity(observations.len());
    for ((prev, tr), obs) in filtered.iter().zip(transitions).zip(observations) {
        if obs.obs_dim() == 0 || obs.h.iter().all(|&x| x == 0.0) {
            continue;
        }
        let pred = kf_predict(prev, tr)?;
        let z = obs.residual(&pred.mean);
        let s_sqrt = tria(&hcat(&[
            &(&obs.h * pred.cov_sqrt.matrix()),
            obs.r_sqrt.matrix(),
        ]))?;
        out.push(Innovation { z, s_sqrt });
    }
    Ok(out)
}

/// `σ̂² = (1 / (N d)) Σ_n z_nᵀ S_n⁻¹ z_n` from a unit-diffusion filter pass.
pub fn calibrate_sigma(innovations: &[Innovation], steps: usize, d: usize) -> Result<f64> {
    if steps == 0 || d == 0 {
        return Err(Error::InvalidInput("calibration needs at least one step".into()));
    }
    let mut total = 0.0;
    for inn in innovations {
        if inn.z.iter().all(|&x| x == 0.0) {
            continue;
        }
        total += whitened_sq_norm(&inn.z, &inn.s_sqrt).map_err(|_| Error::SingularInnovation)?;
    }
    Ok((total / (steps * d) as f64).sqrt())
}

struct Setup {
    nu: usize,
    d: usize,
    times: Vec<f64>,
    pre: Preconditioner,
    init: GaussianSqrt,
    transitions: Vec<TransitionModel>,
}

impl Setup {
    fn new(ivp: &IvProblem, prior: &IwpPrior, times: &[f64]) -> Result<Self> {
        validate_grid(times)?;
        check_dim("prior dimension", ivp.dim(), prior.dim())?;
        let t_end = *times.last().expect("validated grid");
        if (t_end - ivp.t_end()).abs() > 1e-12 * ivp.t_end().abs().max(1.0) {
            return Err(Error::InvalidInput(format!(
                "grid ends at {t_end}, problem at {}",
                ivp.t_end()
            )));
        }
        let unit = IwpPrior::new(prior.nu(), prior.dim())?;
        let steps = times.len() - 1;
        let pre = preconditioner(&unit, t_end / steps as f64)?;
        let transitions = times
            .windows(2)
            .map(|w| iwp_transition(&unit, w[1] - w[0]).map(|tr| tr.preconditioned(&pre)))
            .collect::<Result<Vec<_>>>()?;
        let init = pre.condition(&taylor_init(ivp, prior.nu())?);
        Ok(Self {
            nu: prior.nu(),
            d: prior.dim(),
            times: times.to_vec(),
            pre,
            init,
            transitions,
        })
    }

    fn steps(&self) -> usize {
        self.transitions.len()
    }

    /// Linearizes at `eta` (original coordinates) for time index `n` and
    /// returns the preconditioned observation.
    fn observe(
        &self,
        ivp: &IvProblem,
        kind: Linearization,
        eta: &DVector<f64>,
        n: usize,
        iteration: usize,
    ) -> Result<AffineObservation> {
        let t = self.times[n];
        let obs = match kind {
            Linearization::Ek1 => linearize_ek1(ivp, eta, t),
            Linearization::Ek0 => linearize_ek0(ivp, eta, t),
        }
        .map_err(|e| match e {
            Error::Linearization { t, .. } => Error::Linearization {
                t,
                index: n,
                iteration: Some(iteration),
            },
            other => other,
        })?;
        Ok(obs.preconditioned(&self.pre.scales))
    }

    fn finish(
        &self,
        rts: &RtsOutput,
        observations: &[AffineObservation],
        iterations: usize,
        converged: bool,
        objective_trace: Vec<f64>,
        stats: (ScanStats, ScanStats),
    ) -> Result<SolverReport> {
        let inn = innovations(&rts.filtered, &self.transitions, observations)?;
        let sigma_hat = calibrate_sigma(&inn, self.steps(), self.d)?;
        let e0 = Projection::new(0);
        let e0_matrix = e0.matrix(self.nu, self.d);
        let marginals: Vec<GaussianSqrt> = rts
            .smoothed
            .iter()
            .map(|g| {
                let g = self.pre.restore(g);
                GaussianSqrt {
                    mean: g.mean,
                    cov_sqrt: g.cov_sqrt.scaled(sigma_hat),
                }
            })
            .collect();
        let solution_marginals = marginals
            .iter()
            .map(|g| {
                Ok(GaussianSqrt {
                    mean: e0.apply(&g.mean, self.nu, self.d),
                    cov_sqrt: tria(&(&e0_matrix * g.cov_sqrt.matrix()))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SolverReport {
            times: self.times.clone(),
            marginals,
            solution_marginals,
            sigma_hat,
            iterations,
            converged,
            objective_trace,
            filter_stats: stats.0,
            smoother_stats: stats.1,
        })
    }
}

fn iterate(
    ivp: &IvProblem,
    prior: &IwpPrior,
    times: &[f64],
    cfg: &IeksConfig,
    pool: &WorkPool,
    parallel: bool,
) -> Result<SolverReport> {
    cfg.validate()?;
    let setup = Setup::new(ivp, prior, times)?;
    let steps = setup.steps();
    let indices: Vec<usize> = (1..=steps).collect();

    let mut eta = vec![setup.pre.apply(&setup.init.mean); steps + 1];
    let mut prev_obj = objective_value(
        &eta.iter().map(|x| setup.pre.apply_inv(x)).collect::<Vec<_>>(),
        &setup.transitions,
    )?;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut last = None;

    for iteration in 1..=cfg.max_iterations {
        let observations = pool.try_map(&indices, |_, &n| {
            setup.observe(ivp, cfg.linearization, &eta[n], n, iteration)
        })?;
        let (rts, stats) = if parallel {
            let out = para_rts(pool, &setup.init, &setup.transitions, &observations)?;
            (out.marginals, (out.filter_stats, out.smoother_stats))
        } else {
            let out = seq_rts(&setup.init, &setup.transitions, &observations)?;
            (out, (ScanStats::default(), ScanStats::default()))
        };
        let means: Vec<DVector<f64>> = rts.smoothed.iter().map(|g| g.mean.clone()).collect();
        let obj = objective_value(&means, &setup.transitions)?;
        trace.push(obj);
        let new_eta: Vec<DVector<f64>> = means.iter().map(|m| setup.pre.apply(m)).collect();
        converged = stopping_check(&eta, &new_eta, prev_obj, obj, cfg);
        eta = new_eta;
        prev_obj = obj;
        last = Some((rts, observations, stats));
        if converged {
            break;
        }
    }

    let (rts, observations, stats) = last.expect("at least one iteration");
    let iterations = trace.len();
    setup.finish(&rts, &observations, iterations, converged, trace, stats)
}

/// Parallel-in-time IEKS: linearization and both scans run on `pool`.
///
/// Non-convergence within `cfg.max_iterations` is reported through
/// [`SolverReport::converged`], not as an error.
pub fn para_ieks(
    ivp: &IvProblem,
    prior: &IwpPrior,
    times: &[f64],
    cfg: &IeksConfig,
    pool: &WorkPool,
) -> Result<SolverReport> {
    iterate(ivp, prior, times, cfg, pool, true)
}

/// The same iteration with the sequential smoother.
pub fn seq_ieks(ivp: &IvProblem, prior: &IwpPrior, times: &[f64], cfg: &IeksConfig) -> Result<SolverReport> {
    iterate(ivp, prior, times, cfg, &WorkPool::sequential(), false)
}

/// Extended Kalman smoother with local linearization at each predicted mean.
pub fn eks_solve(
    ivp: &IvProblem,
    prior: &IwpPrior,
    times: &[f64],
    linearization: Linearization,
) -> Result<SolverReport> {
    let setup = Setup::new(ivp, prior, times)?;
    let mut filtered = Vec::with_capacity(setup.steps() + 1);
    let mut observations = Vec::with_capacity(setup.steps());
    filtered.push(setup.init.clone());
    for (k, tr) in setup.transitions.iter().enumerate() {
        let pred = kf_predict(&filtered[k], tr)?;
        let obs = setup.observe(ivp, linearization, &setup.pre.apply(&pred.mean), k + 1, 1)?;
        filtered.push(kf_update(&pred, &obs)?);
        observations.push(obs);
    }
    let smoothed = rts_smooth_pass(&filtered, &setup.transitions)?;
    let means: Vec<DVector<f64>> = smoothed.iter().map(|g| g.mean.clone()).collect();
    let obj = objective_value(&means, &setup.transitions)?;
    let rts = RtsOutput { filtered, smoothed };
    setup.finish(
        &rts,
        &observations,
        1,
        true,
        vec![obj],
        (ScanStats::default(), ScanStats::default()),
    )
}

/// Dispatches on `method`; `pool` is used only by the parallel driver.
pub fn solve(
    method: Method,
    ivp: &IvProblem,
    prior: &IwpPrior,
    times: &[f64],
    cfg: &IeksConfig,
    pool: &WorkPool,
) -> Result<SolverReport> {
    match method {
        Method::ParaIeks => para_ieks(ivp, prior, times, cfg, pool),
        Method::Ieks => seq_ieks(ivp, prior, times, cfg),
        Method::Eks => eks_solve(ivp, prior, times, cfg.linearization),
    }
}

/// `E₁μ − f(E₀μ, t)` at one full-state mean.
pub fn ode_residual(ivp: &IvProblem, mean: &DVector<f64>, t: f64, nu: usize) -> DVector<f64> {
    let d = ivp.dim();
    let y = Projection::new(0).apply(mean, nu, d);
    Projection::new(1).apply(mean, nu, d) - ivp.eval(&y, t)
}
