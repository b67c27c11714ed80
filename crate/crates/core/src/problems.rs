//! Benchmark initial value problems with exact Jacobians, reference
//! solutions and error metrics.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::jet::FieldScalar;
use crate::statespace::{GenericField, IvProblem};

/// Names accepted by [`by_name`].
pub const PROBLEM_NAMES: [&str; 3] = ["logistic", "rigidbody", "vanderpol"];

/// Largest relative endpoint change tolerated when halving the RK4 step.
pub const REFERENCE_RTOL: f64 = 1e-10;

const VDP_MU: f64 = 1.0;

#[derive(Debug, Clone)]
enum Reference {
    Closed(fn(f64) -> DVector<f64>),
    Rk4,
}

#[derive(Debug, Clone)]
pub struct NamedProblem {
    pub name: &'static str,
    pub ivp: IvProblem,
    reference: Reference,
}

impl NamedProblem {
    /// Reference solution at every point of `grid`.
    pub fn reference_on(&self, grid: &[f64]) -> Result<Vec<DVector<f64>>> {
        match self.reference {
            Reference::Closed(f) => Ok(grid.iter().map(|&t| f(t)).collect()),
            Reference::Rk4 => grid_reference(&self.ivp, grid),
        }
    }

    pub fn has_closed_form(&self) -> bool {
        matches!(self.reference, Reference::Closed(_))
    }
}

struct Logistic;

impl GenericField for Logistic {
    fn eval<S: FieldScalar>(&self, y: &[S], _t: &S) -> Vec<S> {
        let one = y[0].constant_like(1.0);
        vec![y[0].clone() * (one - y[0].clone())]
    }
}

struct RigidBody;

impl GenericField for RigidBody {
    fn eval<S: FieldScalar>(&self, y: &[S], _t: &S) -> Vec<S> {
        vec![
            y[1].clone() * y[2].clone() * -2.0,
            y[0].clone() * y[2].clone() * 1.25,
            y[0].clone() * y[1].clone() * -0.5,
        ]
    }
}

struct VanDerPol {
    mu: f64,
}

impl GenericField for VanDerPol {
    fn eval<S: FieldScalar>(&self, y: &[S], _t: &S) -> Vec<S> {
        let one = y[0].constant_like(1.0);
        let damping = (one - y[0].clone() * y[0].clone()) * y[1].clone();
        vec![y[1].clone(), (damping - y[0].clone()) * self.mu]
    }
}

const LOGISTIC_Y0: f64 = 0.01;

fn logistic_exact(t: f64) -> DVector<f64> {
    let e = t.exp();
    DVector::from_vec(vec![LOGISTIC_Y0 * e / (1.0 + LOGISTIC_Y0 * (e - 1.0))])
}

/// `ẏ = y(1 − y)` on `[0, 10]`, `y(0) = 0.01`.
pub fn logistic() -> NamedProblem {
    let ivp = IvProblem::from_generic(DVector::from_vec(vec![LOGISTIC_Y0]), 10.0, Logistic)
        .expect("valid problem")
        .with_jacobian(|y, _| DMatrix::from_element(1, 1, 1.0 - 2.0 * y[0]));
    NamedProblem {
        name: "logistic",
        ivp,
        reference: Reference::Closed(logistic_exact),
    }
}

/// Euler's rigid body equations on `[0, 20]`.
pub fn rigid_body() -> NamedProblem {
    let ivp = IvProblem::from_generic(DVector::from_vec(vec![1.0, 0.0, 0.9]), 20.0, RigidBody)
        .expect("valid problem")
        .with_jacobian(|y, _| {
            DMatrix::from_row_slice(
                3,
                3,
                &[
                    0.0,
                    -2.0 * y[2],
                    -2.0 * y[1],
                    1.25 * y[2],
                    0.0,
                    1.25 * y[0],
                    -0.5 * y[1],
                    -0.5 * y[0],
                    0.0,
                ],
            )
        });
    NamedProblem {
        name: "rigidbody",
        ivp,
        reference: Reference::Rk4,
    }
}

/// Non-stiff Van der Pol oscillator (`μ = 1`) on `[0, 6.3]`.
pub fn van_der_pol() -> NamedProblem {
    let mu = VDP_MU;
    let ivp = IvProblem::from_generic(DVector::from_vec(vec![2.0, 0.0]), 6.3, VanDerPol { mu })
        .expect("valid problem")
        .with_jacobian(move |y, _| {
            DMatrix::from_row_slice(
                2,
                2,
                &[0.0, 1.0, -2.0 * mu * y[0] * y[1] - mu, mu * (1.0 - y[0] * y[0])],
            )
        });
    NamedProblem {
        name: "vanderpol",
        ivp,
        reference: Reference::Rk4,
    }
}

pub fn by_name(name: &str) -> Result<NamedProblem> {
    match name {
        "logistic" => Ok(logistic()),
        "rigidbody" => Ok(rigid_body()),
        "vanderpol" => Ok(van_der_pol()),
        other => Err(Error::InvalidInput(format!(
            "unknown problem {other:?}; expected one of {}",
            PROBLEM_NAMES.join(", ")
        ))),
    }
}

fn rk4_step(ivp: &IvProblem, y: &DVector<f64>, t: f64, h: f64) -> DVector<f64> {
    let k1 = ivp.eval(y, t);
    let k2 = ivp.eval(&(y + &k1 * (h / 2.0)), t + h / 2.0);
    let k3 = ivp.eval(&(y + &k2 * (h / 2.0)), t + h / 2.0);
    let k4 = ivp.eval(&(y + &k3 * h), t + h);
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// RK4 over `grid` with `substeps` equal steps per interval; returns the
/// values at the grid points.
fn rk4_on_grid(ivp: &IvProblem, grid: &[f64], substeps: usize) -> Vec<DVector<f64>> {
    let mut y = ivp.y0().clone();
    let mut out = Vec::with_capacity(grid.len());
    out.push(y.clone());
    for w in grid.windows(2) {
        let h = (w[1] - w[0]) / substeps as f64;
        for k in 0..substeps {
            y = rk4_step(ivp, &y, w[0] + k as f64 * h, h);
        }
        out.push(y.clone());
    }
    out
}

fn endpoint_change(coarse: &DVector<f64>, fine: &DVector<f64>) -> f64 {
    (coarse - fine).amax() / fine.amax().max(f64::MIN_POSITIVE)
}

/// Tabulated RK4 solution, linearly interpolated between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseReference {
    pub times: Vec<f64>,
    pub values: Vec<DVector<f64>>,
}

impl DenseReference {
    /// Value at `t`, clamped to the tabulated interval.
    pub fn eval(&self, t: f64) -> DVector<f64> {
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return self.values[0].clone();
        }
        if t >= self.times[last] {
            return self.values[last].clone();
        }
        let k = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[k]) / (self.times[k + 1] - self.times[k]);
        &self.values[k] * (1.0 - w) + &self.values[k + 1] * w
    }
}

/// Fixed-step RK4 solution with step at most `h_ref`, accepted only if
/// halving the step moves the endpoint by less than [`REFERENCE_RTOL`]
/// relative.
pub fn rk4_reference(ivp: &IvProblem, h_ref: f64) -> Result<DenseReference> {
    if !(h_ref.is_finite() && h_ref > 0.0) {
        return Err(Error::InvalidInput(format!("reference step must be positive, got {h_ref}")));
    }
    let steps = (ivp.t_end() / h_ref).ceil().max(1.0) as usize;
    let nodes = |n: usize| crate::statespace::uniform_grid(ivp.t_end(), n);
    let coarse = rk4_on_grid(ivp, &nodes(steps), 1);
    let times = nodes(2 * steps);
    let values = rk4_on_grid(ivp, &times, 1);
    let change = endpoint_change(coarse.last().expect("non-empty"), values.last().expect("non-empty"));
    if !(change < REFERENCE_RTOL) {
        return Err(Error::ReferenceNotConverged { change });
    }
    Ok(DenseReference { times, values })
}

/// Reference values at the grid points, starting from ten RK4 steps per
/// grid interval and refining until the halving check passes.
pub fn grid_reference(ivp: &IvProblem, grid: &[f64]) -> Result<Vec<DVector<f64>>> {
    crate::statespace::validate_grid(grid)?;
    let mut substeps = 10;
    let mut coarse = rk4_on_grid(ivp, grid, substeps);
    let mut change = f64::INFINITY;
    for _ in 0..12 {
        let fine = rk4_on_grid(ivp, grid, 2 * substeps);
        change = endpoint_change(coarse.last().expect("non-empty"), fine.last().expect("non-empty"));
        if change < REFERENCE_RTOL {
            return Ok(fine);
        }
        coarse = fine;
        substeps *= 2;
    }
    Err(Error::ReferenceNotConverged { change })
}

/// Root-mean-square error over all grid points and solution components.
pub fn rmse(means: &[DVector<f64>], reference: &[DVector<f64>]) -> Result<f64> {
    check_dim("rmse grid points", reference.len(), means.len())?;
    if means.is_empty() {
        return Err(Error::InvalidInput("rmse of an empty trajectory".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (m, r) in means.iter().zip(reference) {
        check_dim("rmse dimension", r.len(), m.len())?;
        total += (m - r).norm_squared();
        count += m.len();
    }
    Ok((total / count as f64).sqrt())
}
