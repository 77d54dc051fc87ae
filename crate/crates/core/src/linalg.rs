//! Dense small-matrix primitives.
//!
//! Matrices are `nalgebra::DMatrix<f64>`, stored column-major. `vec` stacks
//! columns, which coincides with the storage order, so `vec`/`unvec` are
//! plain copies of the backing slice.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type DenseMatrix = DMatrix<f64>;

/// Relative singular-value threshold used when counting numerical rank.
pub const RANK_REL_TOL: f64 = 1e-8;

/// Eigenvalues (descending) and matching orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DenseMatrix,
}

impl EigenResult {
    /// First `k` eigenvectors as an `n x k` block.
    pub fn top(&self, k: usize) -> DenseMatrix {
        self.eigenvectors.columns(0, k).into_owned()
    }
}

pub fn vec_matrix(m: &DenseMatrix) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DenseMatrix> {
    if v.len() != rows * cols {
        return Err(Error::Dimension(format!(
            "cannot reshape vector of length {} into {rows}x{cols}",
            v.len()
        )));
    }
    Ok(DenseMatrix::from_column_slice(rows, cols, v.as_slice()))
}

pub fn kron(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a.kronecker(b)
}

fn require_square(m: &DenseMatrix, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "{what} requires a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Largest eigenvalue modulus, from the real Schur form.
pub fn spectral_radius(m: &DenseMatrix) -> Result<f64> {
    require_square(m, "spectral_radius")?;
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    let eig = m.clone().complex_eigenvalues();
    Ok(eig.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Moore-Penrose pseudoinverse; singular values below `rel_tol * sigma_max`
/// are treated as zero.
pub fn pseudo_inverse(m: &DenseMatrix, rel_tol: f64) -> DenseMatrix {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return DenseMatrix::zeros(c, r);
    }
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if smax <= 0.0 || !smax.is_finite() {
        return DenseMatrix::zeros(c, r);
    }
    let cut = rel_tol * smax;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut out = DenseMatrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            let vk = vt.row(k).transpose();
            let uk = u.column(k);
            out += (vk * uk.transpose()) / s;
        }
    }
    out
}

/// Number of singular values above `rel_tol * sigma_max`.
pub fn numerical_rank(m: &DenseMatrix, rel_tol: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.clone().singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > rel_tol * smax).count()
}

/// Best rank-`k` approximation (truncated SVD). Returns `m` unchanged when
/// `k` is at least its rank.
pub fn truncate_rank(m: &DenseMatrix, k: usize) -> DenseMatrix {
    if k >= m.nrows().min(m.ncols()) {
        return m.clone();
    }
    let mut svd = m.clone().svd(true, true);
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    for &i in &order[k..] {
        svd.singular_values[i] = 0.0;
    }
    svd.recompose().expect("both factors were computed")
}

/// Symmetric eigendecomposition of `(M + Mᵀ)/2`, eigenvalues descending.
///
/// Each eigenvector is signed so that its largest-magnitude component (the
/// first one on ties) is nonnegative.
pub fn symmetric_eigen(m: &DenseMatrix) -> Result<EigenResult> {
    require_square(m, "symmetric_eigen")?;
    let n = m.nrows();
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));

    let mut values = DVector::zeros(n);
    let mut vectors = DenseMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        values[dst] = eig.eigenvalues[src];
        let mut col = eig.eigenvectors.column(src).into_owned();
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < 0.0 {
            col = -col;
        }
        vectors.set_column(dst, &col);
    }
    Ok(EigenResult {
        eigenvalues: values,
        eigenvectors: vectors,
    })
}

/// Nearest Kronecker product: `(A, B)` minimizing `‖Phi − B⊗A‖_F` with `A`
/// `m x m`, `B` `n x n`, scaled so `‖A‖_F = 1`.
///
/// Block `(p, q)` of `B⊗A` is `b_pq A`, so rearranging each `m x m` block of
/// `Phi` into a row gives `vec(B) vec(A)ᵀ`; the dominant singular pair of that
/// rearrangement gives the factors. The shared sign is fixed so that the
/// entries of `A` sum to a nonnegative value.
pub fn nkp_rearrange_project(
    phi: &DenseMatrix,
    m: usize,
    n: usize,
) -> Result<(DenseMatrix, DenseMatrix)> {
    let mn = m * n;
    if phi.nrows() != mn || phi.ncols() != mn || mn == 0 {
        return Err(Error::Dimension(format!(
            "nkp projection expects a {mn}x{mn} matrix for (m,n)=({m},{n}), got {}x{}",
            phi.nrows(),
            phi.ncols()
        )));
    }
    let mut rearranged = DenseMatrix::zeros(n * n, m * m);
    for q in 0..n {
        for p in 0..n {
            let row = q * n + p;
            let block = phi.view((p * m, q * m), (m, m));
            for (col, v) in block.iter().enumerate() {
                rearranged[(row, col)] = *v;
            }
        }
    }
    let svd = rearranged.svd(true, true);
    let (k, sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    if sigma <= 0.0 {
        let mut a = DenseMatrix::identity(m, m);
        a /= (m as f64).sqrt();
        return Ok((a, DenseMatrix::zeros(n, n)));
    }
    let mut a = DenseMatrix::from_column_slice(m, m, vt.row(k).transpose().as_slice());
    let mut b = DenseMatrix::from_column_slice(n, n, u.column(k).into_owned().as_slice()) * sigma;
    let an = a.norm();
    a /= an;
    b *= an;
    if a.sum() < 0.0 {
        a = -a;
        b = -b;
    }
    Ok((a, b))
}

/// `A X Bᵀ` for conformable matrices.
pub fn bilinear(a: &DenseMatrix, x: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    a * x * b.transpose()
}
