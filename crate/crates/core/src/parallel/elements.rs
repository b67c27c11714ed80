//! Square-root filtering and smoothing elements and their associative
//! combination rules.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{
    block2x2, hcat, is_numerically_singular, right_solve_lower, right_solve_lower_tr, split_blocks,
    tria, LowerTriangularSqrt,
};
use crate::prior::TransitionModel;
use crate::sequential::{kf_predict, kf_update};
use crate::statespace::{AffineObservation, GaussianSqrt};

/// Parameters of `p(Y_n | Z_n, Y_{n−1}) = N(A y + b, C)` and
/// `p(Z_n | Y_{n−1}) ∝ N_I(y; η, J)`, with `C` and `J` in square-root form.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteringElement {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c_sqrt: LowerTriangularSqrt,
    pub eta: DVector<f64>,
    /// General (not necessarily triangular) square-root of `J`.
    pub j_sqrt: DMatrix<f64>,
}

impl FilteringElement {
    /// Two-sided identity of [`combine_filtering`].
    pub fn identity(n: usize) -> Self {
        Self {
            a: DMatrix::identity(n, n),
            b: DVector::zeros(n),
            c_sqrt: LowerTriangularSqrt::zeros(n),
            eta: DVector::zeros(n),
            j_sqrt: DMatrix::zeros(n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// The filtering marginal `N(b, C)` carried by a prefix starting at 1.
    pub fn marginal(&self) -> GaussianSqrt {
        GaussianSqrt {
            mean: self.b.clone(),
            cov_sqrt: self.c_sqrt.clone(),
        }
    }
}

/// Parameters of `p(Y_n | Z_{1:n}, Y_{n+1}) = N(E y + g, L)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothingElement {
    pub e: DMatrix<f64>,
    pub g: DVector<f64>,
    pub l_sqrt: LowerTriangularSqrt,
}

impl SmoothingElement {
    pub fn identity(n: usize) -> Self {
        Self {
            e: DMatrix::identity(n, n),
            g: DVector::zeros(n),
            l_sqrt: LowerTriangularSqrt::zeros(n),
        }
    }

    /// Element for the final grid index, `b_N = p(Y_N | Z_{1:N})`.
    pub fn terminal(filtered: &GaussianSqrt) -> Self {
        let n = filtered.dim();
        Self {
            e: DMatrix::zeros(n, n),
            g: filtered.mean.clone(),
            l_sqrt: filtered.cov_sqrt.clone(),
        }
    }

    pub fn marginal(&self) -> GaussianSqrt {
        GaussianSqrt {
            mean: self.g.clone(),
            cov_sqrt: self.l_sqrt.clone(),
        }
    }
}

fn pad_columns(m: DMatrix<f64>, cols: usize) -> DMatrix<f64> {
    if m.ncols() >= cols {
        return m;
    }
    let mut out = DMatrix::zeros(m.nrows(), cols);
    out.columns_mut(0, m.ncols()).copy_from(&m);
    out
}

/// Builds the filtering element for one step.
///
/// Pass `init` for the first step only: that element then carries
/// `p(Y_1 | Z_1)` directly with `A = 0` and `η = 0`, `J = 0`. Later elements
/// start from `m_{n−1} = 0`, `P_{n−1} = 0`.
pub fn make_filtering_element(
    trans: &TransitionModel,
    obs: &AffineObservation,
    init: Option<&GaussianSqrt>,
) -> Result<FilteringElement> {
    let n = trans.state_dim();
    check_dim("filtering element observation", n, obs.h.ncols())?;
    let vacuous = obs.obs_dim() == 0 || obs.h.iter().all(|&x| x == 0.0);
    if vacuous && obs.d.iter().any(|&x| x != 0.0) {
        return Err(Error::DegenerateObservation);
    }

    if let Some(init) = init {
        let pred = kf_predict(init, trans)?;
        let post = if vacuous {
            pred
        } else {
            kf_update(&pred, obs).map_err(|e| match e {
                Error::SingularInnovation => Error::DegenerateObservation,
                other => other,
            })?
        };
        return Ok(FilteringElement {
            a: DMatrix::zeros(n, n),
            b: post.mean,
            c_sqrt: post.cov_sqrt,
            eta: DVector::zeros(n),
            j_sqrt: DMatrix::zeros(n, n),
        });
    }

    let pred_sqrt = trans.q_sqrt.matrix();
    let pred_mean = DVector::zeros(n);
    if vacuous {
        return Ok(FilteringElement {
            a: trans.phi.clone(),
            b: pred_mean,
            c_sqrt: trans.q_sqrt.clone(),
            eta: DVector::zeros(n),
            j_sqrt: DMatrix::zeros(n, n),
        });
    }

    let m = obs.obs_dim();
    let psi = tria(&block2x2(
        &(&obs.h * pred_sqrt),
        obs.r_sqrt.matrix(),
        pred_sqrt,
        &DMatrix::zeros(n, m),
    ))?;
    let (s_sqrt, psi21, psi22) = split_blocks(psi.matrix(), m);
    if is_numerically_singular(&s_sqrt) {
        return Err(Error::DegenerateObservation);
    }
    let gain = right_solve_lower(&psi21, &s_sqrt).ok_or(Error::DegenerateObservation)?;
    let a = (DMatrix::identity(n, n) - &gain * &obs.h) * &trans.phi;
    let b = &pred_mean - &gain * obs.residual(&pred_mean);
    let j_sqrt = right_solve_lower_tr(&(trans.phi.transpose() * obs.h.transpose()), &s_sqrt)
        .ok_or(Error::DegenerateObservation)?;
    let whitened_d = s_sqrt
        .solve_lower_triangular(&DMatrix::from_column_slice(m, 1, obs.d.as_slice()))
        .ok_or(Error::DegenerateObservation)?;
    let eta = (&j_sqrt * whitened_d).column(0).into_owned();
    Ok(FilteringElement {
        a,
        b,
        c_sqrt: LowerTriangularSqrt::from_lower_part(&psi22),
        eta,
        j_sqrt: pad_columns(j_sqrt, n),
    })
}

/// Associative filtering operator `a_i ⊗ a_j` (element `i` precedes `j`).
pub fn combine_filtering(ai: &FilteringElement, aj: &FilteringElement) -> Result<FilteringElement> {
    let n = ai.dim();
    check_dim("combine_filtering", n, aj.dim())?;
    let ci = ai.c_sqrt.matrix();
    let xi = tria(&block2x2(
        &(ci.transpose() * &aj.j_sqrt),
        &DMatrix::identity(n, n),
        &aj.j_sqrt,
        &DMatrix::zeros(n, n),
    ))?;
    let (xi11, xi21, xi22) = split_blocks(xi.matrix(), n);
    if is_numerically_singular(&xi11) {
        return Err(Error::CombinationSingular);
    }
    // W = √C_i Ξ11⁻ᵀ, M = W Ξ21ᵀ
    let w = right_solve_lower_tr(ci, &xi11).ok_or(Error::CombinationSingular)?;
    let m = &w * xi21.transpose();
    let eye = DMatrix::identity(n, n);
    let aj_rest = &aj.a * (&eye - &m);

    let a = &aj_rest * &ai.a;
    let b = &aj_rest * (&ai.b + ci * (ci.transpose() * &aj.eta)) + &aj.b;
    let c_sqrt = tria(&hcat(&[&(&aj.a * &w), aj.c_sqrt.matrix()]))?;
    let jj_bi = &aj.j_sqrt * (aj.j_sqrt.transpose() * &ai.b);
    let eta = ai.a.transpose() * ((&eye - m.transpose()) * (&aj.eta - jj_bi)) + &ai.eta;
    let j_sqrt = tria(&hcat(&[&(ai.a.transpose() * xi22), &ai.j_sqrt]))?.into_matrix();
    Ok(FilteringElement {
        a,
        b,
        c_sqrt,
        eta,
        j_sqrt,
    })
}

/// Smoothing element from the filtering marginal at `n` and the transition
/// `n → n + 1`.
pub fn make_smoothing_element(
    filtered: &GaussianSqrt,
    trans: &TransitionModel,
) -> Result<SmoothingElement> {
    let n = filtered.dim();
    check_dim("smoothing element", n, trans.state_dim())?;
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
    let e = right_solve_lower(&pi21, &pi11).ok_or(Error::DegeneratePrediction)?;
    let g = &filtered.mean - &e * (&trans.phi * &filtered.mean);
    Ok(SmoothingElement {
        e,
        g,
        l_sqrt: LowerTriangularSqrt::from_lower_part(&pi22),
    })
}

/// Associative smoothing operator `b_i ⊗ b_j` (element `i` precedes `j`).
pub fn combine_smoothing(bi: &SmoothingElement, bj: &SmoothingElement) -> Result<SmoothingElement> {
    check_dim("combine_smoothing", bi.g.len(), bj.g.len())?;
    Ok(SmoothingElement {
        e: &bi.e * &bj.e,
        g: &bi.e * &bj.g + &bi.g,
        l_sqrt: tria(&hcat(&[&(&bi.e * bj.l_sqrt.matrix()), bi.l_sqrt.matrix()]))?,
    })
}
