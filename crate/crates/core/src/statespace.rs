//! The discrete inference problem: Gaussian states, initial value problems,
//! Dirac observation models and their linearizations.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::jet::{FieldScalar, Jet};
use crate::linalg::LowerTriangularSqrt;
use crate::prior::Projection;

/// Gaussian with a square-root covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSqrt {
    pub mean: DVector<f64>,
    pub cov_sqrt: LowerTriangularSqrt,
}

impl GaussianSqrt {
    pub fn new(mean: DVector<f64>, cov_sqrt: LowerTriangularSqrt) -> Result<Self> {
        check_dim("GaussianSqrt", mean.len(), cov_sqrt.dim())?;
        Ok(Self { mean, cov_sqrt })
    }

    /// Point mass at `mean`.
    pub fn dirac(mean: DVector<f64>) -> Self {
        let n = mean.len();
        Self {
            mean,
            cov_sqrt: LowerTriangularSqrt::zeros(n),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn cov(&self) -> DMatrix<f64> {
        self.cov_sqrt.product()
    }
}

pub type FieldFn = dyn Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync;
pub type JacobianFn = dyn Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync;
pub type JetFieldFn = dyn Fn(&[Jet], &Jet) -> Vec<Jet> + Send + Sync;

/// A vector field written once for any [`FieldScalar`], so that the same code
/// serves plain evaluation and Taylor-mode propagation.
pub trait GenericField: Send + Sync + 'static {
    fn eval<S: FieldScalar>(&self, y: &[S], t: &S) -> Vec<S>;
}

/// Initial value problem `ẏ = f(y, t)`, `y(0) = y0`, on `[0, t_end]`.
#[derive(Clone)]
pub struct IvProblem {
    y0: DVector<f64>,
    t_end: f64,
    field: Arc<FieldFn>,
    jacobian: Option<Arc<JacobianFn>>,
    jet_field: Option<Arc<JetFieldFn>>,
}

impl fmt::Debug for IvProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("IvProblem")
            .field("y0", &self.y0)
            .field("t_end", &self.t_end)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("taylor_mode", &self.jet_field.is_some())
            .finish()
    }
}

impl IvProblem {
    pub fn new<F>(y0: DVector<f64>, t_end: f64, field: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>, f64) -> DVector<f64> + Send + Sync + 'static,
    {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::InvalidInput(format!("t_end must be positive, got {t_end}")));
        }
        if y0.is_empty() {
            return Err(Error::InvalidInput("empty initial value".into()));
        }
        Ok(Self {
            y0,
            t_end,
            field: Arc::new(field),
            jacobian: None,
            jet_field: None,
        })
    }

    /// Builds the problem from a [`GenericField`], which also enables
    /// Taylor-mode initialization to any order.
    pub fn from_generic<G: GenericField>(y0: DVector<f64>, t_end: f64, field: G) -> Result<Self> {
        let field = Arc::new(field);
        let f = field.clone();
        let mut ivp = Self::new(y0, t_end, move |y, t| DVector::from_vec(f.eval(y.as_slice(), &t)))?;
        ivp.jet_field = Some(Arc::new(move |y: &[Jet], t: &Jet| field.eval(y, t)));
        Ok(ivp)
    }

    pub fn with_jacobian<J>(mut self, jacobian: J) -> Self
    where
        J: Fn(&DVector<f64>, f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        self.jacobian = Some(Arc::new(jacobian));
        self
    }

    pub fn with_jet_field<J>(mut self, jet_field: J) -> Self
    where
        J: Fn(&[Jet], &Jet) -> Vec<Jet> + Send + Sync + 'static,
    {
        self.jet_field = Some(Arc::new(jet_field));
        self
    }

    pub fn dim(&self) -> usize {
        self.y0.len()
    }

    pub fn y0(&self) -> &DVector<f64> {
        &self.y0
    }

    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn eval(&self, y: &DVector<f64>, t: f64) -> DVector<f64> {
        (self.field)(y, t)
    }

    pub fn has_jet_field(&self) -> bool {
        self.jet_field.is_some()
    }

    pub fn eval_jet(&self, y: &[Jet], t: &Jet) -> Option<Vec<Jet>> {
        self.jet_field.as_ref().map(|g| g(y, t))
    }

    /// Jacobian `∂f/∂y`: analytic when supplied, otherwise central differences
    /// with step `1e-6·max(1, |y_i|)`.
    pub fn jacobian(&self, y: &DVector<f64>, t: f64) -> DMatrix<f64> {
        if let Some(jac) = &self.jacobian {
            return jac(y, t);
        }
        let d = y.len();
        let mut out = DMatrix::zeros(d, d);
        for j in 0..d {
            let step = 1e-6 * y[j].abs().max(1.0);
            let mut plus = y.clone();
            let mut minus = y.clone();
            plus[j] += step;
            minus[j] -= step;
            let col = (self.eval(&plus, t) - self.eval(&minus, t)) / (2.0 * step);
            out.set_column(j, &col);
        }
        out
    }
}

/// Linearized Dirac measurement `0 = H Y - d` (plus `√R` noise, zero here).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineObservation {
    pub h: DMatrix<f64>,
    pub d: DVector<f64>,
    pub r_sqrt: LowerTriangularSqrt,
}

impl AffineObservation {
    /// Noiseless observation.
    pub fn new(h: DMatrix<f64>, d: DVector<f64>) -> Result<Self> {
        check_dim("AffineObservation", h.nrows(), d.len())?;
        let m = d.len();
        Ok(Self {
            h,
            d,
            r_sqrt: LowerTriangularSqrt::zeros(m),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.d.len()
    }

    /// `H η - d`.
    pub fn residual(&self, eta: &DVector<f64>) -> DVector<f64> {
        &self.h * eta - &self.d
    }

    /// Re-expresses the observation for states `x = T x̄` with diagonal `T`.
    pub fn preconditioned(&self, scales: &DVector<f64>) -> Self {
        let mut h = self.h.clone();
        for (j, mut col) in h.column_iter_mut().enumerate() {
            col *= scales[j];
        }
        Self {
            h,
            d: self.d.clone(),
            r_sqrt: self.r_sqrt.clone(),
        }
    }
}

/// Time grid together with one state per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
}

impl StateTrajectory {
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>) -> Result<Self> {
        validate_grid(&times)?;
        check_dim("StateTrajectory", times.len(), states.len())?;
        Ok(Self { times, states })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Checks `t_0 = 0 < t_1 < … < t_N` with `N ≥ 1`.
pub fn validate_grid(times: &[f64]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::InvalidInput("grid needs at least two points".into()));
    }
    if times[0] != 0.0 {
        return Err(Error::InvalidInput(format!("grid must start at 0, got {}", times[0])));
    }
    if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid must be finite and strictly increasing".into()));
    }
    Ok(())
}

/// `N + 1` equispaced points on `[0, t_end]`.
pub fn uniform_grid(t_end: f64, steps: usize) -> Vec<f64> {
    (0..=steps)
        .map(|k| if k == steps { t_end } else { t_end * k as f64 / steps as f64 })
        .collect()
}

fn linearization_point(ivp: &IvProblem, eta: &DVector<f64>) -> Result<(usize, DVector<f64>)> {
    let d = ivp.dim();
    if eta.len() % d != 0 || eta.len() < 2 * d {
        return Err(Error::DimensionMismatch {
            context: "linearization point",
            expected: 2 * d,
            actual: eta.len(),
        });
    }
    let nu = eta.len() / d - 1;
    Ok((nu, Projection::new(0).apply(eta, nu, d)))
}

fn observation_from(
    nu: usize,
    d: usize,
    jac: Option<&DMatrix<f64>>,
    fy: DVector<f64>,
    y: &DVector<f64>,
    t: f64,
) -> Result<AffineObservation> {
    let big = d * (nu + 1);
    let mut h = DMatrix::zeros(d, big);
    for i in 0..d {
        h[(i, i * (nu + 1) + 1)] = 1.0;
    }
    let mut rhs = fy;
    if let Some(jac) = jac {
        for i in 0..d {
            for k in 0..d {
                h[(i, k * (nu + 1))] -= jac[(i, k)];
            }
        }
        rhs -= jac * y;
    }
    if h.iter().chain(rhs.iter()).any(|x| !x.is_finite()) {
        return Err(Error::Linearization { t, index: 0, iteration: None });
    }
    AffineObservation::new(h, rhs)
}

/// First-order Taylor linearization of `E₁Y − f(E₀Y, t)` around `eta`:
/// `H = E₁ − J E₀`, `d = f(E₀η) − J E₀η` with `J = ∂f/∂y(E₀η, t)`.
pub fn linearize_ek1(ivp: &IvProblem, eta: &DVector<f64>, t: f64) -> Result<AffineObservation> {
    let (nu, y) = linearization_point(ivp, eta)?;
    let fy = ivp.eval(&y, t);
    let jac = ivp.jacobian(&y, t);
    if jac.iter().any(|x| !x.is_finite()) {
        return Err(Error::Linearization { t, index: 0, iteration: None });
    }
    observation_from(nu, ivp.dim(), Some(&jac), fy, &y, t)
}

/// Zeroth-order variant with the Jacobian replaced by zero: `H = E₁`, `d = f(E₀η)`.
pub fn linearize_ek0(ivp: &IvProblem, eta: &DVector<f64>, t: f64) -> Result<AffineObservation> {
    let (nu, y) = linearization_point(ivp, eta)?;
    let fy = ivp.eval(&y, t);
    observation_from(nu, ivp.dim(), None, fy, &y, t)
}
