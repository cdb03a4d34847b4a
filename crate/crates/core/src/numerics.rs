//! Small dense linear-algebra and integration kernel.
//!
//! Matrices and vectors are `nalgebra` dynamic types. Everything here is a
//! pure function over values; dimensions are small (tens of rows at most).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalue real parts must sit below this to count as Hurwitz.
pub const HURWITZ_MARGIN: f64 = 1e-9;
/// Largest condition number of `BᵀB` accepted by [`pinv_left`].
pub const MAX_CONDITION: f64 = 1e12;
/// Largest tolerated asymmetry before a matrix is rejected as non-symmetric.
pub const SYMMETRY_TOL: f64 = 1e-9;

/// Builds a matrix from nested rows. Ragged input is a dimension error.
pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::DimensionMismatch("ragged matrix rows".into()));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Column-stacking vectorization.
pub fn vec_of(m: &Matrix) -> Vector {
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec_of`].
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Matrix {
    Matrix::from_column_slice(rows, cols, v.as_slice())
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn symmetrize(m: &Matrix) -> Matrix {
    (m + m.transpose()) * 0.5
}

fn require_square(m: &Matrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "{what} must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Eigenvalues of the symmetric part of `m`, ascending.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    require_square(m, "symmetric eigenproblem input")?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut eig: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}

/// Smallest eigenvalue of a symmetric matrix (symmetrized first).
pub fn min_eig_sym(m: &Matrix) -> Result<f64> {
    Ok(sym_eigenvalues(m)?.first().copied().unwrap_or(0.0))
}

pub fn max_eig_sym(m: &Matrix) -> Result<f64> {
    Ok(sym_eigenvalues(m)?.last().copied().unwrap_or(0.0))
}

/// Largest real part over the eigenvalues of a general square matrix.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    require_square(a, "Hurwitz test input")?;
    if a.nrows() == 0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(a.complex_eigenvalues().iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

pub fn check_hurwitz(a: &Matrix) -> Result<()> {
    let max_real_part = spectral_abscissa(a)?;
    if max_real_part < -HURWITZ_MARGIN {
        Ok(())
    } else {
        Err(Error::NotHurwitz { max_real_part })
    }
}

/// Solves `AᵀP + PA + Qm = 0` for symmetric positive definite `P`.
///
/// The equation is vectorized into the Kronecker-sum system
/// `(I ⊗ Aᵀ + Aᵀ ⊗ I) vec(P) = -vec(Qm)` and solved by LU.
pub fn lyapunov_solve(a: &Matrix, qm: &Matrix) -> Result<Matrix> {
    require_square(a, "A")?;
    require_square(qm, "Qm")?;
    let n = a.nrows();
    if qm.nrows() != n {
        return Err(Error::DimensionMismatch(format!("A is {n}x{n} but Qm is {}x{}", qm.nrows(), qm.ncols())));
    }
    if (qm - qm.transpose()).amax() > SYMMETRY_TOL {
        return Err(Error::NotPositiveDefinite("Qm is not symmetric".into()));
    }
    if min_eig_sym(qm)? <= 0.0 {
        return Err(Error::NotPositiveDefinite("Qm has a non-positive eigenvalue".into()));
    }
    check_hurwitz(a)?;

    let eye = Matrix::identity(n, n);
    let at = a.transpose();
    let system = kron(&eye, &at) + kron(&at, &eye);
    let rhs = -vec_of(qm);
    let p_vec = system
        .lu()
        .solve(&rhs)
        .ok_or(Error::NotHurwitz { max_real_part: spectral_abscissa(a)? })?;
    Ok(symmetrize(&unvec(&p_vec, n, n)))
}

/// Frobenius norm of `AᵀP + PA + Qm`.
pub fn lyapunov_residual(a: &Matrix, p: &Matrix, qm: &Matrix) -> f64 {
    (a.transpose() * p + p * a + qm).norm()
}

/// Left pseudo-inverse `(BᵀB)⁻¹Bᵀ` of a full-column-rank matrix.
pub fn pinv_left(b: &Matrix) -> Result<Matrix> {
    if b.ncols() == 0 || b.nrows() < b.ncols() {
        return Err(Error::RankDeficient { condition: f64::INFINITY });
    }
    let gram = b.transpose() * b;
    let eig = sym_eigenvalues(&gram)?;
    let (lo, hi) = (eig[0], eig[eig.len() - 1]);
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        return Err(Error::RankDeficient { condition });
    }
    let inv = gram.try_inverse().ok_or(Error::RankDeficient { condition })?;
    Ok(inv * b.transpose())
}

/// One classical fourth-order Runge–Kutta step of `ẏ = f(t, y)`.
pub fn rk4_step<F>(mut f: F, t: f64, y: &Vector, h: f64) -> Result<Vector>
where
    F: FnMut(f64, &Vector) -> Vector,
{
    let mut eval = |tt: f64, yy: &Vector| -> Result<Vector> {
        let d = f(tt, yy);
        if d.iter().all(|v| v.is_finite()) {
            Ok(d)
        } else {
            Err(Error::NumericalBlowup { t: tt, detail: "non-finite state derivative".into() })
        }
    };
    let half = 0.5 * h;
    let k1 = eval(t, y)?;
    let k2 = eval(t + half, &(y + &k1 * half))?;
    let k3 = eval(t + half, &(y + &k2 * half))?;
    let k4 = eval(t + h, &(y + &k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}
