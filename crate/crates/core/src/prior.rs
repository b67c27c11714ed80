//! The ν-times integrated Wiener process prior.
//!
//! States are laid out block-per-dimension, `[y₁, y₁', …, y₁^(ν), y₂, …]`, so
//! the derivative projections are `E_i = I_d ⊗ e_i`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::linalg::{tria, LowerTriangularSqrt};
use crate::statespace::{GaussianSqrt, IvProblem};

/// IWP(ν) prior over a `d`-dimensional solution with diffusion scale `sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IwpPrior {
    nu: usize,
    dim: usize,
    sigma: f64,
}

impl IwpPrior {
    pub fn new(nu: usize, dim: usize) -> Result<Self> {
        Self::with_sigma(nu, dim, 1.0)
    }

    pub fn with_sigma(nu: usize, dim: usize, sigma: f64) -> Result<Self> {
        if nu == 0 {
            return Err(Error::InvalidInput("smoothness order must be at least 1".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("ODE dimension must be at least 1".into()));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidInput(format!("diffusion must be positive, got {sigma}")));
        }
        Ok(Self { nu, dim, sigma })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `D = d (ν + 1)`.
    pub fn state_dim(&self) -> usize {
        self.dim * (self.nu + 1)
    }
}

/// Discrete transition `Y(t + h) | Y(t) ~ N(Φ Y(t), √Q √Qᵀ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionModel {
    pub phi: DMatrix<f64>,
    pub q_sqrt: LowerTriangularSqrt,
    pub h: f64,
}

impl TransitionModel {
    pub fn state_dim(&self) -> usize {
        self.phi.nrows()
    }

    /// The same transition for coordinates `x = T x̄`: `(T⁻¹ Φ T, T⁻¹ √Q)`.
    pub fn preconditioned(&self, pre: &Preconditioner) -> Self {
        let n = self.state_dim();
        let phi = DMatrix::from_fn(n, n, |i, j| self.phi[(i, j)] * pre.scales[j] * pre.inv_scales[i]);
        Self {
            phi,
            q_sqrt: self.q_sqrt.scale_rows(&pre.inv_scales),
            h: self.h,
        }
    }
}

/// Derivative selector `E_i = I_d ⊗ e_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Projection {
    pub index: usize,
}

impl Projection {
    pub fn new(index: usize) -> Self {
        Self { index }
    }

    /// Dense `d × d(ν+1)` matrix.
    pub fn matrix(&self, nu: usize, d: usize) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(d, d * (nu + 1));
        for i in 0..d {
            e[(i, i * (nu + 1) + self.index)] = 1.0;
        }
        e
    }

    pub fn apply(&self, state: &DVector<f64>, nu: usize, d: usize) -> DVector<f64> {
        DVector::from_fn(d, |i, _| state[i * (nu + 1) + self.index])
    }
}

/// Diagonal coordinate change `T = I_d ⊗ diag(√h · h^(ν−i) / (ν−i)!)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Preconditioner {
    pub scales: DVector<f64>,
    pub inv_scales: DVector<f64>,
}

impl Preconditioner {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.scales)
    }

    pub fn inv_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.inv_scales)
    }

    /// `T x̄`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.scales)
    }

    /// `T⁻¹ x`.
    pub fn apply_inv(&self, x: &DVector<f64>) -> DVector<f64> {
        x.component_mul(&self.inv_scales)
    }

    /// Maps a preconditioned Gaussian back to the original coordinates.
    pub fn restore(&self, g: &GaussianSqrt) -> GaussianSqrt {
        GaussianSqrt {
            mean: self.apply(&g.mean),
            cov_sqrt: g.cov_sqrt.scale_rows(&self.scales),
        }
    }

    pub fn condition(&self, g: &GaussianSqrt) -> GaussianSqrt {
        GaussianSqrt {
            mean: self.apply_inv(&g.mean),
            cov_sqrt: g.cov_sqrt.scale_rows(&self.inv_scales),
        }
    }
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn check_step(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("step size must be positive and finite, got {h}")))
    }
}

fn block_scales(nu: usize, h: f64) -> Vec<f64> {
    (0..=nu)
        .map(|i| h.sqrt() * h.powi((nu - i) as i32) / factorial(nu - i))
        .collect()
}

pub fn preconditioner(prior: &IwpPrior, h: f64) -> Result<Preconditioner> {
    check_step(h)?;
    let block = block_scales(prior.nu, h);
    let scales = DVector::from_fn(prior.state_dim(), |k, _| block[k % (prior.nu + 1)]);
    let inv_scales = scales.map(|s| 1.0 / s);
    Ok(Preconditioner { scales, inv_scales })
}

/// Square-root of the step-invariant preconditioned diffusion block,
/// `[Q̄]_ij = 1 / (2ν + 1 − i − j)`.
fn unit_diffusion_sqrt(nu: usize) -> DMatrix<f64> {
    let q = DMatrix::from_fn(nu + 1, nu + 1, |i, j| 1.0 / (2 * nu + 1 - i - j) as f64);
    match q.clone().cholesky() {
        Some(c) => c.l(),
        None => psd_sqrt(q),
    }
}

/// Square-root of a symmetric matrix with negative eigenvalues clipped to zero.
fn psd_sqrt(m: DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = m.symmetric_eigen();
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let mut v = eig.eigenvectors;
    for (j, mut col) in v.column_iter_mut().enumerate() {
        col *= roots[j];
    }
    tria(&v).map(|l| l.into_matrix()).unwrap_or_else(|_| DMatrix::zeros(n, n))
}

fn kron_identity(d: usize, block: &DMatrix<f64>) -> DMatrix<f64> {
    let b = block.nrows();
    let mut out = DMatrix::zeros(d * b, d * b);
    for k in 0..d {
        out.view_mut((k * b, k * b), (b, b)).copy_from(block);
    }
    out
}

/// Closed-form IWP(ν) transition over a step `h`.
///
/// `Φ̆_ij = h^(j−i)/(j−i)!` for `j ≥ i`; the process-noise factor is
/// `σ T(h) chol(Q̄)`, which is a factor of `σ² Q̆(h)` without ever forming
/// the badly conditioned `Q̆(h)`.
pub fn iwp_transition(prior: &IwpPrior, h: f64) -> Result<TransitionModel> {
    check_step(h)?;
    let nu = prior.nu;
    let phi = DMatrix::from_fn(nu + 1, nu + 1, |i, j| {
        if j >= i {
            h.powi((j - i) as i32) / factorial(j - i)
        } else {
            0.0
        }
    });
    let scales = block_scales(nu, h);
    let mut q_block = unit_diffusion_sqrt(nu);
    for (i, mut row) in q_block.row_iter_mut().enumerate() {
        row *= scales[i] * prior.sigma;
    }
    Ok(TransitionModel {
        phi: kron_identity(prior.dim, &phi),
        q_sqrt: LowerTriangularSqrt::from_lower_part(&kron_identity(prior.dim, &q_block)),
        h,
    })
}

/// Exact initial state: `y0` and its first ν time derivatives from
/// Taylor-mode propagation through the vector field, with zero covariance.
pub fn taylor_init(ivp: &IvProblem, nu: usize) -> Result<GaussianSqrt> {
    if nu == 0 {
        return Err(Error::InvalidInput("smoothness order must be at least 1".into()));
    }
    let d = ivp.dim();
    let y0 = ivp.y0();
    // coeffs[i][k]: k-th Taylor coefficient of component i
    let mut coeffs: Vec<Vec<f64>> = (0..d).map(|i| vec![y0[i]]).collect();

    if nu == 1 && !ivp.has_jet_field() {
        let f0 = ivp.eval(y0, 0.0);
        for i in 0..d {
            coeffs[i].push(f0[i]);
        }
    } else {
        if !ivp.has_jet_field() {
            return Err(Error::TaylorInit(format!(
                "order {nu} needs a Taylor-mode vector field"
            )));
        }
        for k in 0..nu {
            let len = k + 1;
            let y: Vec<Jet> = coeffs.iter().map(|c| Jet::new(c[..len].to_vec())).collect();
            let t = Jet::variable(0.0, len);
            let fy = ivp.eval_jet(&y, &t).expect("jet field present");
            if fy.len() != d {
                return Err(Error::DimensionMismatch {
                    context: "taylor_init field output",
                    expected: d,
                    actual: fy.len(),
                });
            }
            for i in 0..d {
                let c = fy[i].coeffs().get(k).copied().ok_or_else(|| {
                    Error::TaylorInit("vector field truncated the Taylor series".into())
                })?;
                coeffs[i].push(c / (k + 1) as f64);
            }
        }
    }

    let mut mean = DVector::zeros(d * (nu + 1));
    for i in 0..d {
        for k in 0..=nu {
            mean[i * (nu + 1) + k] = coeffs[i][k] * factorial(k);
        }
    }
    if mean.iter().any(|x| !x.is_finite()) {
        return Err(Error::TaylorInit("vector field is not finite at the initial value".into()));
    }
    Ok(GaussianSqrt::dirac(mean))
}
