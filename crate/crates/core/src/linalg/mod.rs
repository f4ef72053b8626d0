//! Dense real-matrix kernels: matrix exponential, Kronecker algebra,
//! column-stacking vectorization, numerical rank, real-block eigendecomposition
//! and Krylov / controllability matrices.
//!
//! Matrices are `nalgebra` dynamic matrices. All functions are pure.

mod eigen;
mod expm;

pub use eigen::{real_block_eigen, EigenBlock, RealBlockEigen, DEFAULT_GAP_TOL};
pub use expm::expm;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Multiplier on `max(rows, cols) * eps` giving the default relative rank tolerance.
pub const RANK_TOL_SCALE: f64 = 1e3;

pub(crate) fn ensure_square(m: &Mat) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m.nrows())
}

/// Kronecker product; block `(i, j)` of the result is `m[(i, j)] * n`.
pub fn kron(m: &Mat, n: &Mat) -> Mat {
    m.kronecker(n)
}

/// Kronecker sum `M ⊗ I + I ⊗ N` for square `M`, `N` of equal size.
pub fn kron_sum(m: &Mat, n: &Mat) -> Result<Mat> {
    let d = ensure_square(m)?;
    let dn = ensure_square(n)?;
    if d != dn {
        return Err(Error::Dimension(format!(
            "kronecker sum needs equal sizes, got {d} and {dn}"
        )));
    }
    let ident = Mat::identity(d, d);
    Ok(kron(m, &ident) + kron(&ident, n))
}

/// Column-stacking vectorization.
pub fn vec(m: &Mat) -> Vector {
    // nalgebra storage is column-major already
    Vector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &Vector, rows: usize, cols: usize) -> Result<Mat> {
    if rows * cols != v.len() {
        return Err(Error::Dimension(format!(
            "cannot reshape length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(Mat::from_column_slice(rows, cols, v.as_slice()))
}

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

pub fn frobenius(m: &Mat) -> f64 {
    m.norm()
}

/// Default relative tolerance for [`numerical_rank`]: `1e3 * max(rows, cols) * eps`.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    RANK_TOL_SCALE * rows.max(cols) as f64 * f64::EPSILON
}

/// Numerical rank together with the evidence used to decide it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rank {
    pub rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    /// Absolute cut-off `rel_tol * sigma_max`.
    pub threshold: f64,
}

/// Counts singular values strictly above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &Mat, rel_tol: f64) -> Result<Rank> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Err(Error::Empty);
    }
    if !(rel_tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "rank tolerance must be positive, got {rel_tol}"
        )));
    }
    ensure_finite(m, "rank input")?;
    let mut sv: Vec<f64> = m.clone().singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv.first().copied().unwrap_or(0.0);
    let threshold = rel_tol * smax;
    let rank = if smax == 0.0 {
        0
    } else {
        sv.iter().filter(|&&s| s > threshold).count()
    };
    Ok(Rank {
        rank,
        singular_values: sv,
        threshold,
    })
}

/// `[γ | Mγ | … | M^{depth-1}γ]` for each seed γ, seeds concatenated in order.
pub fn krylov_columns(m: &Mat, seeds: &[Vector], depth: usize) -> Result<Mat> {
    let d = ensure_square(m)?;
    if depth == 0 {
        return Err(Error::InvalidArgument("krylov depth must be at least 1".into()));
    }
    if let Some(bad) = seeds.iter().find(|s| s.len() != d) {
        return Err(Error::Dimension(format!(
            "seed of length {} for a {d}x{d} matrix",
            bad.len()
        )));
    }
    let mut out = Mat::zeros(d, depth * seeds.len());
    for (s, seed) in seeds.iter().enumerate() {
        let mut x = seed.clone();
        for p in 0..depth {
            out.set_column(s * depth + p, &x);
            if p + 1 < depth {
                x = m * x;
            }
        }
    }
    Ok(out)
}

/// `[G | AG | … | A^{d-1}G]`.
pub fn controllability_matrix(a: &Mat, g: &Mat) -> Result<Mat> {
    let d = ensure_square(a)?;
    if g.nrows() != d {
        return Err(Error::Dimension(format!(
            "G has {} rows, expected {d}",
            g.nrows()
        )));
    }
    let m = g.ncols();
    let mut out = Mat::zeros(d, d * m);
    let mut block = g.clone();
    for p in 0..d {
        out.view_mut((0, p * m), (d, m)).copy_from(&block);
        if p + 1 < d {
            block = a * block;
        }
    }
    Ok(out)
}

pub fn columns(m: &Mat) -> Vec<Vector> {
    m.column_iter().map(|c| c.into_owned()).collect()
}

/// Symmetrizes `m` and clips eigenvalues in `[-tol·max(1,‖m‖), 0)` to zero.
/// Anything more negative is reported as [`Error::Indefinite`].
pub fn psd_project(m: &Mat, tol: f64) -> Result<Mat> {
    ensure_finite(m, "covariance")?;
    let sym = symmetrize(m);
    let scale = sym.norm().max(1.0);
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.min();
    if min < -tol * scale {
        return Err(Error::Indefinite(min));
    }
    if min >= 0.0 {
        return Ok(sym);
    }
    let clipped = eig.eigenvalues.map(|v| v.max(0.0));
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * Mat::from_diagonal(&clipped) * q.transpose())))
}

/// A factor `L` with `L Lᵀ = m` for symmetric PSD `m`, via the spectral decomposition.
pub fn psd_sqrt_factor(m: &Mat) -> Mat {
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    &eig.eigenvectors * Mat::from_diagonal(&roots)
}

/// Iterative decompositions may not terminate on NaN or infinite input.
pub(crate) fn ensure_finite(m: &Mat, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteMatrix(what))
    }
}

/// Converts row-major nested rows into a matrix; ragged input is a dimension error.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(r, c, |i, j| rows[i][j]))
}

pub(crate) fn serialize_mat<S: serde::Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
    serde::Serialize::serialize(&mat_to_rows(m), s)
}

pub fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
