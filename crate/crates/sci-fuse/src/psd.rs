//! Small dense symmetric-matrix utilities: positive semidefiniteness,
//! Loewner ordering, principal square roots, and covariance-ellipse
//! boundary sampling.
//!
//! Everything here is sized for navigation-filter covariances (a handful of
//! rows), so eigendecomposition is the canonical primitive throughout.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Default relative tolerance for semidefiniteness checks, matched to
/// double-precision eigensolver accuracy at typical covariance scales.
pub const DEFAULT_PSD_TOL: f64 = 1e-9;

/// A real symmetric matrix. Symmetry is enforced at construction by
/// averaging with the transpose, so downstream operations never re-check it.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    m: DMatrix<f64>,
}

impl SymMatrix {
    /// Build from a square matrix, symmetrizing as `(M + M^T)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "expected square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::InvalidParameter("matrix dimension must be at least 1".into()));
        }
        let sym = (&m + m.transpose()) * 0.5;
        Ok(Self { m: sym })
    }

    /// Build from row slices; rows must form a square array.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch(format!(
                "expected {n} entries per row for a {n}x{n} matrix"
            )));
        }
        let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Self::new(m)
    }

    /// 1x1 matrix holding a single variance.
    pub fn scalar(v: f64) -> Self {
        Self { m: DMatrix::from_element(1, 1, v) }
    }

    pub fn identity(n: usize) -> Self {
        Self { m: DMatrix::identity(n, n) }
    }

    pub fn zeros(n: usize) -> Self {
        Self { m: DMatrix::zeros(n, n) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self { m: DMatrix::from_diagonal(&DVector::from_row_slice(diag)) }
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn determinant(&self) -> f64 {
        self.m.determinant()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut vals: Vec<f64> = self.m.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        vals
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    /// `v^T M v`.
    pub fn quadratic_form(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.m * v)[(0, 0)]
    }

    /// True iff the smallest eigenvalue is at least
    /// `-tol * max(1, |largest eigenvalue|)`.
    pub fn is_psd(&self, tol: f64) -> bool {
        let vals = self.eigenvalues();
        let min = vals[0];
        let max_abs = vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        min >= -tol * max_abs.max(1.0)
    }

    /// Loewner order: `self ⪯ other` iff `other - self` is PSD at `tol`.
    pub fn loewner_leq(&self, other: &SymMatrix, tol: f64) -> Result<bool> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch(format!(
                "loewner_leq: {} vs {}",
                self.dim(),
                other.dim()
            )));
        }
        let diff = SymMatrix { m: &other.m - &self.m };
        Ok(diff.is_psd(tol))
    }

    /// Principal (spectral) square root. Requires `is_psd(1e-10)`;
    /// eigenvalues inside the tolerance band are clamped to zero.
    pub fn sqrt_psd(&self) -> Result<SymMatrix> {
        if !self.is_psd(1e-10) {
            return Err(Error::NotPsd(format!(
                "sqrt_psd: min eigenvalue {:.3e}",
                self.min_eigenvalue()
            )));
        }
        let eig = self.m.clone().symmetric_eigen();
        let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
        let root = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
        SymMatrix::new(root)
    }

    /// Maximum absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// Sampled boundary of the ellipse `{x | (x-center)^T P^{-1} (x-center) <= 1}`.
#[derive(Debug, Clone)]
pub struct EllipsePolyline {
    pub center: [f64; 2],
    pub points: Vec<[f64; 2]>,
}

/// Sample `num_points` boundary points at uniformly spaced angles:
/// `center + P^{1/2} (cos θ, sin θ)`.
pub fn ellipse_boundary(p: &SymMatrix, center: &DVector<f64>, num_points: usize) -> Result<EllipsePolyline> {
    if p.dim() != 2 || center.len() != 2 {
        return Err(Error::DimensionMismatch(format!(
            "ellipse_boundary needs a 2x2 covariance and 2-vector center, got dim {} and {}",
            p.dim(),
            center.len()
        )));
    }
    if num_points == 0 {
        return Err(Error::InvalidParameter("num_points must be positive".into()));
    }
    let vals = p.eigenvalues();
    if vals[0] <= 1e-12 * vals[1].abs().max(1.0) {
        return Err(Error::InvalidParameter(format!(
            "ellipse_boundary: singular covariance (min eigenvalue {:.3e})",
            vals[0]
        )));
    }
    let root = p.sqrt_psd()?;
    let s = root.matrix();
    let mut points = Vec::with_capacity(num_points);
    for k in 0..num_points {
        let theta = 2.0 * std::f64::consts::PI * (k as f64) / (num_points as f64);
        let dir = DVector::from_vec(vec![theta.cos(), theta.sin()]);
        let pt = s * dir;
        points.push([center[0] + pt[0], center[1] + pt[1]]);
    }
    Ok(EllipsePolyline { center: [center[0], center[1]], points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sym(rows: &[&[f64]]) -> SymMatrix {
        SymMatrix::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn identity_is_psd_at_zero_tol() {
        assert!(SymMatrix::identity(2).is_psd(0.0));
    }

    #[test]
    fn indefinite_matrix_is_not_psd() {
        // eigenvalues 3 and -1
        assert!(!sym(&[&[1.0, 2.0], &[2.0, 1.0]]).is_psd(1e-12));
    }

    #[test]
    fn example_covariance_is_psd() {
        assert!(sym(&[&[16.0, 8.0], &[8.0, 9.0]]).is_psd(0.0));
    }

    #[test]
    fn loewner_reflexive_and_zero_below_psd() {
        let a = sym(&[&[16.0, 8.0], &[8.0, 9.0]]);
        assert!(a.loewner_leq(&a, 0.0).unwrap());
        assert!(SymMatrix::zeros(2).loewner_leq(&a, 0.0).unwrap());
    }

    #[test]
    fn loewner_rejects_larger_matrix() {
        let a = sym(&[&[16.0, 8.0], &[8.0, 9.0]]);
        let b = sym(&[&[1.0, 1.0], &[1.0, 4.0]]);
        assert!(!a.loewner_leq(&b, 1e-12).unwrap());
    }

    #[test]
    fn loewner_dimension_mismatch_errors() {
        let a = SymMatrix::identity(2);
        let b = SymMatrix::identity(3);
        assert!(matches!(a.loewner_leq(&b, 0.0), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn sqrt_of_identity_and_diagonal() {
        let i = SymMatrix::identity(3);
        assert_eq!(i.sqrt_psd().unwrap(), i);
        let d = SymMatrix::from_diagonal(&[4.0, 9.0]);
        let s = d.sqrt_psd().unwrap();
        assert!((s.matrix()[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((s.matrix()[(1, 1)] - 3.0).abs() < 1e-12);
        assert!(s.matrix()[(0, 1)].abs() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = sym(&[&[16.0, 8.0], &[8.0, 9.0]]);
        let s = m.sqrt_psd().unwrap();
        let sq = s.matrix() * s.matrix();
        let err = (&sq - m.matrix()).abs().max();
        assert!(err <= 1e-9 * (1.0 + m.max_abs()), "residual {err}");
    }

    #[test]
    fn sqrt_rejects_indefinite() {
        assert!(matches!(sym(&[&[1.0, 2.0], &[2.0, 1.0]]).sqrt_psd(), Err(Error::NotPsd(_))));
    }

    #[test]
    fn ellipse_identity_axis_points() {
        let poly = ellipse_boundary(&SymMatrix::identity(2), &DVector::zeros(2), 4).unwrap();
        let expect = [[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        for (p, e) in poly.points.iter().zip(expect.iter()) {
            assert!((p[0] - e[0]).abs() < 1e-12 && (p[1] - e[1]).abs() < 1e-12, "{p:?} vs {e:?}");
        }
    }

    #[test]
    fn ellipse_semi_axes_from_diagonal() {
        let poly = ellipse_boundary(&SymMatrix::from_diagonal(&[4.0, 1.0]), &DVector::zeros(2), 4).unwrap();
        assert!((poly.points[0][0] - 2.0).abs() < 1e-12);
        assert!((poly.points[1][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ellipse_points_satisfy_quadratic_form() {
        let p = sym(&[&[16.0, 8.0], &[8.0, 9.0]]);
        let center = DVector::from_vec(vec![1.0, -2.0]);
        let poly = ellipse_boundary(&p, &center, 64).unwrap();
        let inv = p.matrix().clone().try_inverse().unwrap();
        for pt in &poly.points {
            let v = DVector::from_vec(vec![pt[0] - center[0], pt[1] - center[1]]);
            let q = (v.transpose() * &inv * &v)[(0, 0)];
            assert!((q - 1.0).abs() <= 1e-9, "quadratic form {q}");
        }
    }

    #[test]
    fn ellipse_rejects_bad_inputs() {
        assert!(ellipse_boundary(&SymMatrix::identity(3), &DVector::zeros(3), 8).is_err());
        assert!(ellipse_boundary(&SymMatrix::from_diagonal(&[1.0, 0.0]), &DVector::zeros(2), 8).is_err());
        assert!(ellipse_boundary(&SymMatrix::identity(2), &DVector::zeros(2), 0).is_err());
    }

    #[test]
    fn construction_symmetrizes() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 1.0, 2.0]);
        let s = SymMatrix::new(m).unwrap();
        assert_eq!(s.matrix()[(0, 1)], 2.0);
        assert_eq!(s.matrix()[(1, 0)], 2.0);
    }

    #[test]
    fn rejects_non_square_and_empty() {
        assert!(SymMatrix::new(DMatrix::zeros(2, 3)).is_err());
        assert!(SymMatrix::new(DMatrix::zeros(0, 0)).is_err());
    }

    /// Brute-force PSD oracle: all principal minors nonnegative. (A correct
    /// characterization of semidefiniteness, unlike leading minors alone.)
    fn psd_by_minors(m: &SymMatrix, tol: f64) -> bool {
        let n = m.dim();
        let scale = m.max_abs().max(1.0);
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let k = idx.len();
            let sub = DMatrix::from_fn(k, k, |i, j| m.matrix()[(idx[i], idx[j])]);
            if sub.determinant() < -tol * scale.powi(k as i32) {
                return false;
            }
        }
        true
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-4.0f64..4.0, n * n)
        }

        fn mat(n: usize, e: &[f64]) -> DMatrix<f64> {
            DMatrix::from_fn(n, n, |i, j| e[i * n + j])
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(128))]

            #[test]
            fn loewner_holds_for_constructed_order(n in 2usize..4, ea in entries(4), ec in entries(4)) {
                let ga = mat(n, &ea);
                let gc = mat(n, &ec);
                let a = SymMatrix::new(&ga * ga.transpose()).unwrap();
                let bump = &gc * gc.transpose();
                let b = SymMatrix::new(a.matrix() + &bump).unwrap();
                prop_assert!(a.loewner_leq(&b, 1e-9).unwrap());
                // reverse only if the bump is essentially zero
                if b.loewner_leq(&a, 1e-9).unwrap() {
                    prop_assert!(bump.abs().max() <= 1e-7 * (1.0 + a.max_abs()));
                }
            }

            #[test]
            fn sqrt_roundtrip_on_random_psd(n in 1usize..5, e in entries(4)) {
                let g = mat(n, &e);
                let m = SymMatrix::new(&g * g.transpose()).unwrap();
                let s = m.sqrt_psd().unwrap();
                prop_assert!(s.is_psd(1e-9));
                let err = (s.matrix() * s.matrix() - m.matrix()).abs().max();
                prop_assert!(err <= 1e-9 * (1.0 + m.max_abs()));
            }

            #[test]
            fn is_psd_matches_minor_oracle(n in 2usize..4, e in entries(3)) {
                let m = SymMatrix::new(mat(n, &e)).unwrap();
                // keep clear of the tolerance band where the two tests
                // legitimately differ
                let vals = m.eigenvalues();
                prop_assume!(vals.iter().all(|v| v.abs() > 1e-6));
                prop_assert_eq!(m.is_psd(1e-9), psd_by_minors(&m, 1e-12));
            }
        }
    }
}
