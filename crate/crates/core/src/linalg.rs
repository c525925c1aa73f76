//! Dense symmetric linear algebra: spectral decomposition, positive/negative
//! matrix parts, PSD projection, and Frobenius inner products.
//!
//! Everything here is a pure function of its inputs; `SymMatrix` values are
//! immutable after construction and safe to share across threads.

use nalgebra::{DMatrix, DVector};

use crate::error::Error;
use crate::Result;

/// Relative threshold under which an eigenvalue is snapped to exactly zero
/// before clipping. Avoids sign flapping of near-null directions across
/// solver iterations.
pub const EPS_EIG: f64 = 1e-10;

/// Dense real symmetric matrix. Symmetry is enforced at construction by
/// averaging `(M + M^T) / 2`, so `entry(i, j) == entry(j, i)` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    data: DMatrix<f64>,
}

impl SymMatrix {
    /// Builds from a square matrix, symmetrizing it. Rejects empty or
    /// non-finite input.
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::invalid("matrix dimension must be at least 1"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("matrix contains a non-finite entry"));
        }
        let mut data = m;
        let n = data.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (data[(i, j)] + data[(j, i)]);
                data[(i, j)] = avg;
                data[(j, i)] = avg;
            }
        }
        Ok(SymMatrix { data })
    }

    /// Builds from a row-major slice of `dim * dim` entries.
    pub fn from_row_major(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::invalid(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        Self::from_matrix(DMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMatrix {
            data: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        SymMatrix {
            data: DMatrix::identity(dim, dim),
        }
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix {
            data: DMatrix::from_diagonal(&DVector::from_row_slice(diag)),
        }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.data[(i, j)]
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Row-major copy of all entries, used by the serialization formats.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.data[(i, j)]);
            }
        }
        out
    }

    pub fn trace(&self) -> f64 {
        self.data.trace()
    }

    pub fn scale(&self, c: f64) -> SymMatrix {
        SymMatrix {
            data: &self.data * c,
        }
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::invalid("dimension mismatch in matrix addition"));
        }
        Ok(SymMatrix {
            data: &self.data + &other.data,
        })
    }

    pub fn sub(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.dim() != other.dim() {
            return Err(Error::invalid("dimension mismatch in matrix subtraction"));
        }
        Ok(SymMatrix {
            data: &self.data - &other.data,
        })
    }

    pub fn frob_norm(&self) -> f64 {
        frob_norm_sq(self).sqrt()
    }
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted
/// descending; column `k` of `eigenvectors` pairs with `eigenvalues[k]`.
#[derive(Debug, Clone)]
pub struct SpectralDecomp {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralDecomp {
    /// Largest eigenvalue magnitude.
    pub fn lambda_max_abs(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |a, &l| a.max(l.abs()))
    }

    /// Eigenvalues after snapping `|lambda| <= EPS_EIG * max(1, |lambda|_max)`
    /// to exactly zero.
    fn snapped(&self) -> DVector<f64> {
        let cutoff = EPS_EIG * self.lambda_max_abs().max(1.0);
        self.eigenvalues.map(|l| if l.abs() <= cutoff { 0.0 } else { l })
    }

    fn rebuild(&self, diag: &DVector<f64>) -> SymMatrix {
        let n = self.eigenvectors.nrows();
        let mut scaled = self.eigenvectors.clone();
        for k in 0..n {
            scaled.column_mut(k).scale_mut(diag[k]);
        }
        let m = scaled * self.eigenvectors.transpose();
        // Symmetric up to roundoff; construction re-averages it exactly.
        SymMatrix::from_matrix(m).expect("reconstruction from finite eigenpairs")
    }

    /// `U max(diag, 0) U^T`, reusing this decomposition.
    pub fn positive_part(&self) -> SymMatrix {
        self.rebuild(&self.snapped().map(|l| l.max(0.0)))
    }

    /// `U min(diag, 0) U^T`, reusing this decomposition.
    pub fn negative_part(&self) -> SymMatrix {
        self.rebuild(&self.snapped().map(|l| l.min(0.0)))
    }

    /// Squared Frobenius norm of the negative part, straight from the
    /// eigenvalues.
    pub fn negative_norm_sq(&self) -> f64 {
        self.snapped()
            .iter()
            .map(|&l| if l < 0.0 { l * l } else { 0.0 })
            .sum()
    }
}

/// Spectral decomposition of a symmetric matrix.
///
/// The result satisfies `‖U diag(λ) U^T − M‖_F ≤ 1e-9 (1 + ‖M‖_F)` and
/// `‖U^T U − I‖_F ≤ 1e-10 D`.
pub fn sym_eig(m: &SymMatrix) -> Result<SpectralDecomp> {
    let dim = m.dim();
    let eig = nalgebra::SymmetricEigen::try_new(m.data.clone(), 1.0e-13, 0).ok_or({
        Error::NumericalFailure {
            what: "symmetric eigendecomposition did not converge",
            dim,
            residual: f64::NAN,
        }
    })?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalFailure {
            what: "eigendecomposition produced non-finite eigenvalues",
            dim,
            residual: f64::NAN,
        });
    }
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let eigenvalues = DVector::from_iterator(dim, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut eigenvectors = DMatrix::zeros(dim, dim);
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(SpectralDecomp {
        eigenvalues,
        eigenvectors,
    })
}

/// Euclidean projection onto the PSD cone: clips negative eigenvalues to
/// zero. This is the Frobenius-nearest PSD matrix to `m`.
pub fn positive_part(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(sym_eig(m)?.positive_part())
}

/// Complement of the PSD projection: clips positive eigenvalues to zero, so
/// `positive_part(m) + negative_part(m) == m` up to roundoff.
pub fn negative_part(m: &SymMatrix) -> Result<SymMatrix> {
    Ok(sym_eig(m)?.negative_part())
}

/// Frobenius inner product `Tr(A^T B)`.
pub fn frob_inner(a: &SymMatrix, b: &SymMatrix) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "dimension mismatch in inner product: {} vs {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a.data.iter().zip(b.data.iter()).map(|(x, y)| x * y).sum())
}

/// Sum of squared entries; equals the sum of squared eigenvalues.
pub fn frob_norm_sq(a: &SymMatrix) -> f64 {
    a.data.iter().map(|x| x * x).sum()
}
