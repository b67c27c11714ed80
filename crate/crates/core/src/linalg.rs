//! Square-root covariance arithmetic.
//!
//! Covariances are carried as left square-roots `L` with `L Lᵀ = P`. The
//! workhorse is [`tria`], which maps any wide matrix `M` to a lower-triangular
//! `L` with `L Lᵀ = M Mᵀ` through a QR decomposition of `Mᵀ`. Diagonal signs
//! are left as QR produces them, so factors should only ever be compared in
//! product form.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Lower-triangular left square-root of a positive semi-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LowerTriangularSqrt(DMatrix<f64>);

impl LowerTriangularSqrt {
    /// Wraps a square matrix, rejecting it if anything above the diagonal is
    /// nonzero.
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if !data.is_square() {
            return Err(Error::InvalidInput(format!(
                "square-root factor must be square, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        let n = data.nrows();
        for j in 0..n {
            for i in 0..j {
                if data[(i, j)] != 0.0 {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i}, {j}) above the diagonal is nonzero"
                    )));
                }
            }
        }
        Ok(Self(data))
    }

    /// Takes the lower triangle of `data`, zeroing everything above it.
    pub fn from_lower_part(data: &DMatrix<f64>) -> Self {
        Self(data.lower_triangle())
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    /// The represented covariance `L Lᵀ`.
    pub fn product(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    /// Left-multiplies by a diagonal matrix, which keeps the factor triangular.
    pub fn scale_rows(&self, diag: &DVector<f64>) -> Self {
        let mut m = self.0.clone();
        for (i, mut row) in m.row_iter_mut().enumerate() {
            row *= diag[i];
        }
        Self(m)
    }

    pub fn is_all_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }
}

/// Triangularization: returns `Rᵀ` where `Mᵀ = QR` is a thin QR decomposition.
///
/// Inputs with fewer columns than rows are zero-padded to square.
pub fn tria(m: &DMatrix<f64>) -> Result<LowerTriangularSqrt> {
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("tria input contains NaN or Inf".into()));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(LowerTriangularSqrt::zeros(0));
    }
    let mt = if m.ncols() < n {
        let mut padded = DMatrix::zeros(n, n);
        padded.columns_mut(0, m.ncols()).copy_from(m);
        padded.transpose()
    } else {
        m.transpose()
    };
    let r = mt.qr().r();
    Ok(LowerTriangularSqrt(r.transpose().lower_triangle()))
}

/// `√(A + B) = tria([√A  √B])`.
pub fn sqrt_sum(a: &LowerTriangularSqrt, b: &LowerTriangularSqrt) -> Result<LowerTriangularSqrt> {
    check_dim("sqrt_sum", a.dim(), b.dim())?;
    tria(&hcat(&[a.matrix(), b.matrix()]))
}

/// `vᵀ (L Lᵀ)⁻¹ v`, computed as `‖w‖²` with `L w = v`.
pub fn whitened_sq_norm(v: &DVector<f64>, q_sqrt: &LowerTriangularSqrt) -> Result<f64> {
    check_dim("whitened_sq_norm", q_sqrt.dim(), v.len())?;
    let w = solve_lower(q_sqrt.matrix(), &DMatrix::from_column_slice(v.len(), 1, v.as_slice()))
        .ok_or(Error::SingularFactor("whitened_sq_norm"))?;
    Ok(w.norm_squared())
}

/// True when a diagonal entry of the triangular `l` vanishes relative to the
/// largest one (or is non-finite).
pub fn is_numerically_singular(l: &DMatrix<f64>) -> bool {
    let n = l.nrows().min(l.ncols());
    if n == 0 {
        return false;
    }
    let diag = l.diagonal();
    if diag.iter().any(|x| !x.is_finite()) {
        return true;
    }
    let scale = diag.amax();
    let tol = scale * f64::EPSILON * n as f64;
    scale == 0.0 || diag.iter().any(|x| x.abs() <= tol)
}

/// `L⁻¹ B` for lower-triangular `L`; `None` if `L` is numerically singular.
pub fn solve_lower(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if is_numerically_singular(l) {
        return None;
    }
    l.solve_lower_triangular(b)
}

/// `L⁻ᵀ B` for lower-triangular `L`.
pub fn solve_lower_tr(l: &DMatrix<f64>, b: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if is_numerically_singular(l) {
        return None;
    }
    l.tr_solve_lower_triangular(b)
}

/// `B L⁻¹`.
pub fn right_solve_lower(b: &DMatrix<f64>, l: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    solve_lower_tr(l, &b.transpose()).map(|x| x.transpose())
}

/// `B L⁻ᵀ`.
pub fn right_solve_lower_tr(b: &DMatrix<f64>, l: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    solve_lower(l, &b.transpose()).map(|x| x.transpose())
}

/// Horizontal concatenation of matrices with equal row counts.
pub fn hcat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = parts.first().map_or(0, |p| p.nrows());
    let cols = parts.iter().map(|p| p.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for p in parts {
        debug_assert_eq!(p.nrows(), rows);
        out.columns_mut(c, p.ncols()).copy_from(*p);
        c += p.ncols();
    }
    out
}

/// `[[a11, a12], [a21, a22]]`; block sizes must be conformal.
pub fn block2x2(
    a11: &DMatrix<f64>,
    a12: &DMatrix<f64>,
    a21: &DMatrix<f64>,
    a22: &DMatrix<f64>,
) -> DMatrix<f64> {
    let (r1, c1) = a11.shape();
    let (r2, c2) = a22.shape();
    let mut out = DMatrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a11);
    out.view_mut((0, c1), (r1, c2)).copy_from(a12);
    out.view_mut((r1, 0), (r2, c1)).copy_from(a21);
    out.view_mut((r1, c1), (r2, c2)).copy_from(a22);
    out
}

/// Splits a lower block-triangular square matrix into its `(11, 21, 22)`
/// blocks, with the leading block of size `k`.
pub(crate) fn split_blocks(
    l: &DMatrix<f64>,
    k: usize,
) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = l.nrows();
    (
        l.view((0, 0), (k, k)).into_owned(),
        l.view((k, 0), (n - k, k)).into_owned(),
        l.view((k, k), (n - k, n - k)).into_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn tria_of_row_is_its_norm() {
        let l = tria(&DMatrix::from_row_slice(1, 2, &[3.0, 4.0])).unwrap();
        assert_relative_eq!(l.matrix()[(0, 0)].abs(), 5.0, epsilon = 1e-14);
    }

    #[test]
    fn tria_reproduces_padded_factor() {
        let l = DMatrix::from_row_slice(3, 3, &[2.0, 0.0, 0.0, 1.0, 3.0, 0.0, -1.0, 0.5, 1.5]);
        let padded = hcat(&[&l, &DMatrix::zeros(3, 2)]);
        let t = tria(&padded).unwrap();
        assert_relative_eq!(t.product(), &l * l.transpose(), epsilon = 1e-13);
        for i in 0..3 {
            assert_relative_eq!(t.matrix()[(i, i)].abs(), l[(i, i)], epsilon = 1e-13);
        }
    }

    #[test]
    fn tria_matches_direct_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random(&mut rng, 3, 5);
        let l = tria(&m).unwrap();
        let expected = &m * m.transpose();
        let got = l.product();
        for (a, b) in got.iter().zip(expected.iter()) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn tria_output_is_exactly_lower() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = tria(&random(&mut rng, 4, 9)).unwrap();
        for j in 0..4 {
            for i in 0..j {
                assert_eq!(l.matrix()[(i, j)].to_bits(), 0.0f64.to_bits());
            }
        }
    }

    #[test]
    fn tria_pads_tall_input() {
        let m = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 2.0]);
        let l = tria(&m).unwrap();
        assert_eq!(l.dim(), 3);
        assert_relative_eq!(l.product(), &m * m.transpose(), epsilon = 1e-14);
    }

    #[test]
    fn tria_rejects_nan() {
        let m = DMatrix::from_row_slice(1, 2, &[f64::NAN, 1.0]);
        assert!(matches!(tria(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn sqrt_sum_identities() {
        let a = LowerTriangularSqrt::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 3.0])).unwrap();
        let s = sqrt_sum(&a, &LowerTriangularSqrt::zeros(2)).unwrap();
        assert_relative_eq!(s.product(), a.product(), epsilon = 1e-14);

        let i = LowerTriangularSqrt::identity(2);
        let two = sqrt_sum(&i, &i).unwrap();
        assert_relative_eq!(two.product(), DMatrix::identity(2, 2) * 2.0, epsilon = 1e-14);
    }

    #[test]
    fn sqrt_sum_matches_dense_cholesky() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = LowerTriangularSqrt::from_lower_part(&random(&mut rng, 4, 4));
        let b = LowerTriangularSqrt::from_lower_part(&random(&mut rng, 4, 4));
        let dense = a.product() + b.product();
        let chol = dense.clone().cholesky().unwrap().l();
        let s = sqrt_sum(&a, &b).unwrap();
        let scale = dense.norm();
        assert!((s.product() - &chol * chol.transpose()).norm() <= 1e-12 * scale);
        let s2 = sqrt_sum(&b, &a).unwrap();
        assert!((s.product() - s2.product()).norm() <= 1e-12 * scale);
    }

    #[test]
    fn sqrt_sum_dimension_mismatch() {
        let err = sqrt_sum(&LowerTriangularSqrt::zeros(2), &LowerTriangularSqrt::zeros(3));
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn whitened_norm_cases() {
        let i = LowerTriangularSqrt::identity(2);
        assert_eq!(whitened_sq_norm(&DVector::zeros(2), &i).unwrap(), 0.0);
        assert_relative_eq!(
            whitened_sq_norm(&DVector::from_vec(vec![3.0, 4.0]), &i).unwrap(),
            25.0
        );

        let q = LowerTriangularSqrt::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0])).unwrap();
        let v = DVector::from_vec(vec![2.0, 2.0]);
        let dense = q.product().try_inverse().unwrap();
        let expected = (v.transpose() * dense * &v)[(0, 0)];
        assert_relative_eq!(whitened_sq_norm(&v, &q).unwrap(), expected, epsilon = 1e-14);
    }

    #[test]
    fn whitened_norm_rejects_singular() {
        let q = LowerTriangularSqrt::new(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, 0.0])).unwrap();
        assert_eq!(
            whitened_sq_norm(&DVector::from_vec(vec![1.0, 1.0]), &q),
            Err(Error::SingularFactor("whitened_sq_norm"))
        );
    }

    #[test]
    fn new_rejects_upper_entries() {
        assert!(LowerTriangularSqrt::new(DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0])).is_err());
    }

    proptest::proptest! {
        #[test]
        fn tria_preserves_product(rows in 1usize..6, extra in 0usize..5, seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = random(&mut rng, rows, rows + extra);
            let l = tria(&m).unwrap();
            let expected = &m * m.transpose();
            let err = (l.product() - &expected).norm();
            proptest::prop_assert!(err <= 1e-12 * expected.norm().max(1e-300));
        }
    }
}
