//! Small dense symmetric-matrix helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Relative tolerance accepted when checking that an input matrix is symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Eigenvalues within this distance of the top one are treated as a single
/// (degenerate) top eigenspace.
pub const DEGENERACY_TOL: f64 = 1e-8;

/// A dense real symmetric matrix, stored exactly symmetrized.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMat(DMatrix<f64>);

impl SymMat {
    /// Checks squareness and symmetry (to [`SYMMETRY_TOL`] relative), then
    /// stores the symmetrized matrix.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
        }
        let scale = 1.0 + m.amax();
        let asymmetry = (&m - m.transpose()).amax();
        if asymmetry > SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self::symmetrize(m))
    }

    /// Takes the symmetric part `(M + Mᵀ)/2` of a square matrix.
    pub fn symmetrize(m: DMatrix<f64>) -> Self {
        assert_eq!(m.nrows(), m.ncols(), "symmetrize needs a square matrix");
        let t = m.transpose();
        SymMat((m + t) * 0.5)
    }

    pub fn from_row_slice(dim: usize, data: &[f64]) -> Result<Self> {
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, found: data.len() });
        }
        Self::new(DMatrix::from_row_slice(dim, dim, data))
    }

    pub fn zeros(dim: usize) -> Self {
        SymMat(DMatrix::zeros(dim, dim))
    }

    pub fn identity(dim: usize) -> Self {
        SymMat(DMatrix::identity(dim, dim))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// `vᵀ M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        let n = self.dim();
        debug_assert_eq!(v.len(), n);
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = 0.0;
            for j in 0..n {
                row += self.0[(i, j)] * v[j];
            }
            acc += v[i] * row;
        }
        acc
    }

    /// Congruence `Tᵀ M T` (T need not be square).
    pub fn congruence(&self, t: &DMatrix<f64>) -> SymMat {
        SymMat::symmetrize(t.transpose() * &self.0 * t)
    }

    pub fn scaled(&self, s: f64) -> SymMat {
        SymMat(&self.0 * s)
    }

    /// Row-major copy of the entries.
    pub fn to_row_major(&self) -> Vec<f64> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn eigen(&self) -> SymmetricEigen<f64, nalgebra::Dyn> {
        SymmetricEigen::new(self.0.clone())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigen().eigenvalues.min()
    }
}

impl core::ops::Sub for &SymMat {
    type Output = SymMat;
    fn sub(self, rhs: &SymMat) -> SymMat {
        SymMat(&self.0 - &rhs.0)
    }
}

/// Largest eigenvalue with a unit eigenvector.
pub fn lambda_max(m: &SymMat) -> (f64, DVector<f64>) {
    let eig = m.eigen();
    let (idx, value) = argmax(eig.eigenvalues.as_slice());
    (value, eig.eigenvectors.column(idx).into_owned())
}

/// Largest eigenvalue and an orthonormal basis of every eigenvector whose
/// eigenvalue is within `tol` of it.
pub fn top_eigenspace(m: &SymMat, tol: f64) -> (f64, Vec<DVector<f64>>) {
    let eig = m.eigen();
    let (_, value) = argmax(eig.eigenvalues.as_slice());
    let vecs = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, &l)| l >= value - tol)
        .map(|(i, _)| eig.eigenvectors.column(i).into_owned())
        .collect();
    (value, vecs)
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, v)| if v > best.1 { (i, v) } else { best })
}

/// Spectral radius of a square matrix (largest eigenvalue modulus).
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues().iter().map(|z| libm::hypot(z.re, z.im)).fold(0.0, f64::max)
}

/// Induced 2-norm.
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    let ata = SymMat::symmetrize(a.transpose() * a);
    libm::sqrt(lambda_max(&ata).0.max(0.0))
}

/// Rounded-entry key used to deduplicate matrices.
pub fn dedup_key(m: &SymMat, resolution: f64) -> Vec<i64> {
    m.as_matrix().iter().map(|&v| libm::round(v / resolution) as i64).collect()
}
