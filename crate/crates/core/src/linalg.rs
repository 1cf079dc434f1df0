//! Small dense symmetric matrices: eigendecomposition, PSD projection and a
//! covariance square root. Backed by `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Dense real symmetric matrix. Every constructor and mutator keeps the
/// stored entries exactly symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    pub fn zeros(order: usize) -> Self {
        Self(DMatrix::zeros(order, order))
    }

    pub fn identity(order: usize) -> Self {
        Self(DMatrix::identity(order, order))
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    /// Symmetric part `(A + Aᵀ)/2` of an arbitrary square matrix.
    pub fn from_dmatrix(a: DMatrix<f64>) -> Self {
        assert!(a.is_square(), "SymMatrix needs a square matrix");
        let at = a.transpose();
        Self((a + at) * 0.5)
    }

    /// Built from a function evaluated on the upper triangle (`i <= j`).
    pub fn from_upper_fn(order: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut m = DMatrix::zeros(order, order);
        for j in 0..order {
            for i in 0..=j {
                let v = f(i, j);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        Self(m)
    }

    /// Outer product `v vᵀ`.
    pub fn outer(v: &[f64]) -> Self {
        Self::from_upper_fn(v.len(), |i, j| v[i] * v[j])
    }

    pub fn order(&self) -> usize {
        self.0.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.0[(i, j)]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] = v;
        self.0[(j, i)] = v;
    }

    /// Adds `v` to both `(i, j)` and `(j, i)` (once if `i == j`).
    pub fn add_sym(&mut self, i: usize, j: usize, v: f64) {
        self.0[(i, j)] += v;
        if i != j {
            self.0[(j, i)] += v;
        }
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_dmatrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    /// `Tr(self · other)` for symmetric operands.
    pub fn trace_dot(&self, other: &SymMatrix) -> f64 {
        self.0.dot(&other.0)
    }

    /// Quadratic form `vᵀ A v`.
    pub fn quad(&self, v: &[f64]) -> f64 {
        let v = DVector::from_column_slice(v);
        v.dot(&(&self.0 * &v))
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(v);
        (&self.0 * v).iter().copied().collect()
    }

    /// Principal submatrix on the given indices.
    pub fn principal(&self, idx: &[usize]) -> SymMatrix {
        SymMatrix::from_upper_fn(idx.len(), |a, b| self.0[(idx[a], idx[b])])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Largest upper-triangle entry magnitude; handy for debugging dumps.
    pub fn max_abs(&self) -> f64 {
        self.0.amax()
    }
}

/// Eigenvalues in ascending order with matching orthonormal eigenvectors
/// (columns of `vectors`).
#[derive(Debug, Clone)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl Eigen {
    /// Column `j` of the eigenvector matrix.
    pub fn vector(&self, j: usize) -> Vec<f64> {
        self.vectors.column(j).iter().copied().collect()
    }

    pub fn reconstruct(&self) -> SymMatrix {
        let d = DMatrix::from_diagonal(&DVector::from_column_slice(&self.values));
        SymMatrix::from_dmatrix(&self.vectors * d * self.vectors.transpose())
    }
}

const EIGH_MAX_ITER: usize = 10_000;

pub fn eigh(a: &SymMatrix) -> Result<Eigen> {
    if !a.is_finite() {
        return Err(Error::Numerical("eigh: non-finite matrix entry".into()));
    }
    let n = a.order();
    if n == 0 {
        return Ok(Eigen {
            values: vec![],
            vectors: DMatrix::zeros(0, 0),
        });
    }
    let eig = SymmetricEigen::try_new(a.0.clone(), f64::EPSILON, EIGH_MAX_ITER)
        .ok_or_else(|| Error::Numerical("eigh: QR iteration did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    Ok(Eigen { values, vectors })
}

/// Nearest PSD matrix in Frobenius norm: negative eigenvalues clipped to 0.
pub fn psd_project(a: &SymMatrix) -> Result<SymMatrix> {
    let mut e = eigh(a)?;
    if e.values.iter().all(|&v| v >= 0.0) {
        return Ok(a.clone());
    }
    for v in &mut e.values {
        *v = v.max(0.0);
    }
    Ok(e.reconstruct())
}

/// Relative tolerance on negative eigenvalues accepted by [`factor_sqrt`].
pub const PSD_TOL: f64 = 1e-10;

/// A factor `F` with `F Fᵀ = A` for PSD `A`, computed as `V·sqrt(Λ)`.
pub fn factor_sqrt(a: &SymMatrix) -> Result<DMatrix<f64>> {
    let e = eigh(a)?;
    let scale = 1.0 + a.frobenius();
    if let Some(&min) = e.values.first() {
        if min < -PSD_TOL * scale {
            return Err(Error::NotPsd { min_eig: min });
        }
    }
    let mut f = e.vectors;
    for (j, &lam) in e.values.iter().enumerate() {
        let s = lam.max(0.0).sqrt();
        f.column_mut(j).scale_mut(s);
    }
    Ok(f)
}
