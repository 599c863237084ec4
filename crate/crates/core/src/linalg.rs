//! Dense linear-algebra kernel.
//!
//! Every solve goes through a thin SVD so that rank-deficient designs (one-hot
//! blocks that each sum to the all-ones column) have a well-defined
//! minimum-norm answer. Singular values at or below `RANK_RTOL * sigma_max` are
//! treated as exact zeros.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative singular-value cutoff used for every rank decision.
pub const RANK_RTOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LstsqSolution {
    /// p x q coefficient matrix.
    pub coefficients: Matrix,
    /// Squared Frobenius norm of `B - A * coefficients`.
    pub residual_sos: f64,
    pub effective_rank: usize,
}

#[derive(Debug, Clone)]
pub struct Residualized {
    /// k x d regression map from the design onto the target columns.
    pub gamma: Matrix,
    /// n x d residual `H - C * gamma`.
    pub residual: Matrix,
}

#[derive(Debug, Clone)]
pub struct TruncatedSvd {
    /// d x j right singular vectors, descending singular value order.
    pub basis: Matrix,
    /// n x j projections `R * basis`.
    pub scores: Matrix,
    pub singular_values: Vec<f64>,
}

pub(crate) fn ensure_finite(m: &Matrix, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

fn ensure_nonempty(m: &Matrix, op: &'static str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::dims(
            op,
            format!("empty matrix {}x{}", m.nrows(), m.ncols()),
        ));
    }
    Ok(())
}

struct ThinSvd {
    /// n x r left singular vectors.
    u: Matrix,
    /// r singular values, descending.
    sigma: Vec<f64>,
    /// p x r right singular vectors.
    v: Matrix,
}

fn thin_svd(m: &Matrix) -> Result<ThinSvd> {
    let (n, p) = m.shape();
    let fm = faer::Mat::<f64>::from_fn(n, p, |i, j| m[(i, j)]);
    let svd = fm
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("SVD failed to converge: {e:?}")))?;
    let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
    let r = s.nrows();
    Ok(ThinSvd {
        u: Matrix::from_fn(n, r, |i, j| u[(i, j)]),
        sigma: (0..r).map(|i| s[i]).collect(),
        v: Matrix::from_fn(p, r, |i, j| v[(i, j)]),
    })
}

/// Solves `argmin ||B - A X||_F^2 + ridge ||X||_F^2`.
///
/// With `ridge == 0` the minimum-norm minimizer is returned.
pub fn lstsq(a: &Matrix, b: &Matrix, ridge: f64) -> Result<LstsqSolution> {
    if a.nrows() != b.nrows() {
        return Err(Error::dims(
            "lstsq",
            format!("A has {} rows, B has {}", a.nrows(), b.nrows()),
        ));
    }
    ensure_nonempty(a, "lstsq")?;
    ensure_nonempty(b, "lstsq")?;
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "ridge must be finite and nonnegative, got {ridge}"
        )));
    }
    ensure_finite(a, "lstsq design")?;
    ensure_finite(b, "lstsq targets")?;

    let svd = thin_svd(a)?;
    let sigma = &svd.sigma;
    let sigma_max = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = RANK_RTOL * sigma_max;

    let effective_rank = sigma.iter().filter(|&&s| s > cutoff).count();
    let mut ut_b = svd.u.transpose() * b;
    for (i, &s) in sigma.iter().enumerate() {
        let scale = if ridge > 0.0 {
            s / (s * s + ridge)
        } else if s > cutoff {
            1.0 / s
        } else {
            0.0
        };
        ut_b.row_mut(i).scale_mut(scale);
    }
    let coefficients = &svd.v * ut_b;
    let residual_sos = (b - a * &coefficients).norm_squared();
    ensure_finite(&coefficients, "lstsq solution")?;

    Ok(LstsqSolution {
        coefficients,
        residual_sos,
        effective_rank,
    })
}

/// Regresses every column of `h` on `c` and returns the map and the residual.
///
/// With `ridge == 0` the residual is `(I - P) h` for `P` the orthogonal
/// projector onto the column space of `c`.
pub fn residualize(c: &Matrix, h: &Matrix, ridge: f64) -> Result<Residualized> {
    if c.nrows() != h.nrows() {
        return Err(Error::dims(
            "residualize",
            format!("C has {} rows, H has {}", c.nrows(), h.nrows()),
        ));
    }
    let gamma = lstsq(c, h, ridge)?.coefficients;
    let residual = h - c * &gamma;
    Ok(Residualized { gamma, residual })
}

/// Top-`j` right singular vectors of `r`.
///
/// Each basis column is oriented so that its entry of largest magnitude
/// (first one on ties) is nonnegative.
pub fn truncated_svd(r: &Matrix, j: usize) -> Result<TruncatedSvd> {
    ensure_nonempty(r, "truncated_svd")?;
    let (n, d) = r.shape();
    if j == 0 || j > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "rank j = {j} outside 1..={} for a {n}x{d} matrix",
            n.min(d)
        )));
    }
    ensure_finite(r, "truncated_svd input")?;

    let svd = thin_svd(r)?;
    let sigma = &svd.sigma;

    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]).then(a.cmp(&b)));

    let mut basis = Matrix::zeros(d, j);
    let mut singular_values = Vec::with_capacity(j);
    for (col, &idx) in order.iter().take(j).enumerate() {
        let mut v = svd.v.column(idx).into_owned();
        let mut pivot = 0;
        for i in 1..d {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        basis.set_column(col, &v);
        singular_values.push(sigma[idx]);
    }
    let scores = r * &basis;
    Ok(TruncatedSvd {
        basis,
        scores,
        singular_values,
    })
}

/// `max |(A^T B)_ij|`, the orthogonality diagnostic between two column sets.
pub fn max_abs_cross(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.nrows() != b.nrows() {
        return Err(Error::dims(
            "max_abs_cross",
            format!("A has {} rows, B has {}", a.nrows(), b.nrows()),
        ));
    }
    Ok((a.transpose() * b).amax())
}

/// Serializes a [`Matrix`] as a JSON array of rows.
pub mod rows_serde {
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    use super::Matrix;

    pub fn serialize<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Matrix, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(D::Error::custom("non-finite matrix entry"));
        }
        Ok(Matrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize, p: usize) -> Matrix {
        Matrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    /// Pseudo-inverse through the eigendecomposition of `A^T A`; shares no
    /// code with the SVD route under test.
    fn pinv_via_gram(a: &Matrix) -> Matrix {
        let gram = a.transpose() * a;
        let eig = SymmetricEigen::new(gram);
        let lmax = eig.eigenvalues.amax();
        let mut inv = Matrix::zeros(a.ncols(), a.ncols());
        for (i, &l) in eig.eigenvalues.iter().enumerate() {
            if l > 1e-12 * lmax {
                let v = eig.eigenvectors.column(i);
                inv += (v * v.transpose()) / l;
            }
        }
        inv * a.transpose()
    }

    #[test]
    fn identity_design() {
        let a = Matrix::identity(2, 2);
        let b = Matrix::from_row_slice(2, 1, &[3.0, 4.0]);
        let sol = lstsq(&a, &b, 0.0).unwrap();
        assert!((sol.coefficients[(0, 0)] - 3.0).abs() < 1e-12);
        assert!((sol.coefficients[(1, 0)] - 4.0).abs() < 1e-12);
        assert_eq!(sol.effective_rank, 2);
    }

    #[test]
    fn column_of_ones() {
        let a = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let b = Matrix::from_row_slice(2, 1, &[1.0, 3.0]);
        let sol = lstsq(&a, &b, 0.0).unwrap();
        assert!((sol.coefficients[(0, 0)] - 2.0).abs() < 1e-12);
        assert!((sol.residual_sos - 2.0).abs() < 1e-12);
    }

    #[test]
    fn duplicated_column_takes_min_norm() {
        let col = [1.0, 2.0, -1.0];
        let a = Matrix::from_fn(3, 2, |i, _| col[i]);
        let b = Matrix::from_column_slice(3, 1, &col);
        let sol = lstsq(&a, &b, 0.0).unwrap();
        let oracle = pinv_via_gram(&a) * &b;
        assert_eq!(sol.effective_rank, 1);
        for i in 0..2 {
            assert!((sol.coefficients[(i, 0)] - 0.5).abs() < 1e-10);
            assert!((oracle[(i, 0)] - 0.5).abs() < 1e-8);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let a = Matrix::zeros(3, 2);
        let b = Matrix::zeros(2, 1);
        assert!(matches!(
            lstsq(&a, &b, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let mut b = Matrix::zeros(3, 1);
        b[(1, 0)] = f64::NAN;
        assert!(matches!(lstsq(&a, &b, 0.0), Err(Error::NonFinite(_))));
        let b = Matrix::zeros(3, 1);
        assert!(lstsq(&a, &b, -1.0).is_err());
    }

    #[test]
    fn zero_design_gives_zero_solution() {
        let a = Matrix::zeros(4, 3);
        let b = Matrix::from_element(4, 2, 1.0);
        let sol = lstsq(&a, &b, 0.0).unwrap();
        assert_eq!(sol.effective_rank, 0);
        assert!(sol.coefficients.iter().all(|&v| v == 0.0));
        assert!((sol.residual_sos - 8.0).abs() < 1e-12);
    }

    #[test]
    fn residualize_examples() {
        let ones = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let out = residualize(&ones, &ones, 0.0).unwrap();
        assert!((out.gamma[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(out.residual.amax() < 1e-12);

        let c = Matrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let h = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let out = residualize(&c, &h, 0.0).unwrap();
        assert!(out.residual[(0, 0)].abs() < 1e-12);
        assert!((out.residual[(1, 0)] - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = random(&mut rng, 8, 3);
        let h = random(&mut rng, 8, 5);
        let out = residualize(&c, &h, 0.0).unwrap();
        assert!(max_abs_cross(&c, &out.residual).unwrap() < 1e-10);
    }

    #[test]
    fn truncated_svd_axis_aligned() {
        let r = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 2.0]);
        let t = truncated_svd(&r, 1).unwrap();
        assert!((t.basis[(0, 0)] - 1.0).abs() < 1e-12);
        assert!(t.basis[(1, 0)].abs() < 1e-12);
        assert!((t.scores[(0, 0)] - 3.0).abs() < 1e-12);
        assert!(t.scores[(1, 0)].abs() < 1e-12);
        assert!((t.singular_values[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_svd_zero_matrix() {
        let r = Matrix::zeros(3, 2);
        let t = truncated_svd(&r, 1).unwrap();
        let col = t.basis.column(0);
        assert!((col.norm() - 1.0).abs() < 1e-12);
        assert!(col.iter().all(|&v| v >= 0.0));
        assert!(t.scores.iter().all(|&v| v == 0.0));
        assert_eq!(t.singular_values[0], 0.0);
    }

    #[test]
    fn truncated_svd_full_rank_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = random(&mut rng, 10, 6);
        let t = truncated_svd(&r, 6).unwrap();
        let back = &t.scores * t.basis.transpose();
        assert!((back - &r).amax() < 1e-8);
        let orth = t.basis.transpose() * &t.basis;
        assert!((orth - Matrix::identity(6, 6)).amax() < 1e-10);
        assert!(t
            .singular_values
            .windows(2)
            .all(|w| w[0] >= w[1]));
    }

    #[test]
    fn truncated_svd_rank_range() {
        let r = Matrix::zeros(3, 2);
        assert!(truncated_svd(&r, 0).is_err());
        assert!(truncated_svd(&r, 3).is_err());
    }

    #[test]
    fn cross_examples() {
        let a = Matrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let b = Matrix::from_row_slice(2, 1, &[0.0, 1.0]);
        assert_eq!(max_abs_cross(&a, &b).unwrap(), 0.0);
        let ones = Matrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert_eq!(max_abs_cross(&ones, &ones).unwrap(), 2.0);
        assert!(max_abs_cross(&a, &Matrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn ridge_limit_on_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&mut rng, 12, 4);
        let b = random(&mut rng, 12, 2);
        let exact = lstsq(&a, &b, 0.0).unwrap().coefficients;
        let ridged = lstsq(&a, &b, 1e-12).unwrap().coefficients;
        assert!((exact - ridged).amax() < 1e-6);
    }

    #[test]
    fn ridge_matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = random(&mut rng, 9, 4);
        let b = random(&mut rng, 9, 3);
        let lambda = 0.7;
        let gram = a.transpose() * &a + Matrix::identity(4, 4) * lambda;
        let oracle = gram.lu().solve(&(a.transpose() * &b)).unwrap();
        let sol = lstsq(&a, &b, lambda).unwrap();
        assert!((sol.coefficients - oracle).amax() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn orthogonality_and_idempotence(seed in any::<u64>(), n in 10usize..50, k in 1usize..10, d in 1usize..8) {
            prop_assume!(k < n);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = random(&mut rng, n, k);
            let h = random(&mut rng, n, d);
            let out = residualize(&c, &h, 0.0).unwrap();
            prop_assert!(max_abs_cross(&c, &out.residual).unwrap() < 1e-10);
            let again = residualize(&c, &out.residual, 0.0).unwrap();
            prop_assert!((again.residual - &out.residual).amax() < 1e-10);
        }

        #[test]
        fn min_norm_matches_gram_pseudo_inverse(seed in any::<u64>(), n in 4usize..20, rank in 1usize..4, p in 4usize..8, q in 1usize..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // rank-deficient design: n x p built from an n x rank factor
            let left = random(&mut rng, n, rank);
            let right = random(&mut rng, rank, p);
            let a = left * right;
            let b = random(&mut rng, n, q);
            let sol = lstsq(&a, &b, 0.0).unwrap();
            let oracle = pinv_via_gram(&a) * &b;
            let diff = (&sol.coefficients - &oracle).amax();
            prop_assert!(diff < 1e-8);
            prop_assert!(sol.effective_rank <= rank);
        }

        #[test]
        fn residual_sos_is_consistent(seed in any::<u64>(), n in 3usize..15, p in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random(&mut rng, n, p);
            let b = random(&mut rng, n, 2);
            let sol = lstsq(&a, &b, 0.0).unwrap();
            let direct = (&b - &a * &sol.coefficients).norm_squared();
            prop_assert!((sol.residual_sos - direct).abs() <= 1e-8 * direct.max(1e-300) + 1e-14);
        }
    }
}
