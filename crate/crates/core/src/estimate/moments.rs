//! Second-moment statistics of consecutive frame pairs.
//!
//! Every sum the ICLSE iteration needs (`S1yx`, `S1xx`, `S2yx`, `S2xx`, the
//! `C` update and the objective) is a linear function of
//! `Σ vec(X_{t-1}) vec(X_{t-1})ᵀ`, `Σ vec(X_t) vec(X_{t-1})ᵀ` and the first
//! moments, so they are accumulated once per series and each iteration costs
//! `O(m²n²)` regardless of `T`.

use nalgebra::DVector;

use crate::linalg::DenseMatrix;
use crate::model::CountMatrixSeries;

#[derive(Debug, Clone)]
pub struct LagMoments {
    pub m: usize,
    pub n: usize,
    /// Number of `(X_{t-1}, X_t)` pairs, `T - 1`.
    pub pairs: usize,
    /// `Σ vec(X_{t-1})`
    pub sum_x: DVector<f64>,
    /// `Σ vec(X_t)`
    pub sum_y: DVector<f64>,
    /// `Σ vec(X_{t-1}) vec(X_{t-1})ᵀ`
    pub gxx: DenseMatrix,
    /// `Σ vec(X_t) vec(X_{t-1})ᵀ`
    pub gyx: DenseMatrix,
    /// `Σ ‖X_t‖_F²`
    pub syy: f64,
}

impl LagMoments {
    pub fn from_series(series: &CountMatrixSeries) -> Self {
        let (m, n) = (series.m(), series.n());
        let mn = m * n;
        let mut out = Self {
            m,
            n,
            pairs: series.len().saturating_sub(1),
            sum_x: DVector::zeros(mn),
            sum_y: DVector::zeros(mn),
            gxx: DenseMatrix::zeros(mn, mn),
            gyx: DenseMatrix::zeros(mn, mn),
            syy: 0.0,
        };
        for t in 1..series.len() {
            let x = series.vec_frame(t - 1);
            let y = series.vec_frame(t);
            out.gxx.ger(1.0, &x, &x, 1.0);
            out.gyx.ger(1.0, &y, &x, 1.0);
            out.syy += y.norm_squared();
            out.sum_x += x;
            out.sum_y += y;
        }
        out
    }

    #[inline]
    fn idx(&self, row: usize, col: usize) -> usize {
        col * self.m + row
    }

    pub fn sum_x_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_column_slice(self.m, self.n, self.sum_x.as_slice())
    }

    pub fn sum_y_matrix(&self) -> DenseMatrix {
        DenseMatrix::from_column_slice(self.m, self.n, self.sum_y.as_slice())
    }

    /// `(S1yx, S1xx)` with `S1yx = Σ (X_t − C) B X_{t-1}ᵀ` and
    /// `S1xx = Σ X_{t-1} BᵀB X_{t-1}ᵀ`.
    pub fn s1(&self, b: &DenseMatrix, c: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        let (m, n) = (self.m, self.n);
        let btb = b.transpose() * b;
        let mut syx = DenseMatrix::zeros(m, m);
        let mut sxx = DenseMatrix::zeros(m, m);
        for j in 0..m {
            for i in 0..m {
                let mut acc_yx = 0.0;
                let mut acc_xx = 0.0;
                for l in 0..n {
                    let jl = self.idx(j, l);
                    let sx_jl = self.sum_x[jl];
                    for k in 0..n {
                        let ik = self.idx(i, k);
                        acc_yx += b[(k, l)] * (self.gyx[(ik, jl)] - c[(i, k)] * sx_jl);
                        acc_xx += btb[(k, l)] * self.gxx[(ik, jl)];
                    }
                }
                syx[(i, j)] = acc_yx;
                sxx[(i, j)] = acc_xx;
            }
        }
        (syx, sxx)
    }

    /// `(S2yx, S2xx)` with `S2yx = Σ (X_t − C)ᵀ A X_{t-1}` and
    /// `S2xx = Σ X_{t-1}ᵀ AᵀA X_{t-1}`.
    pub fn s2(&self, a: &DenseMatrix, c: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
        let (m, n) = (self.m, self.n);
        let ata = a.transpose() * a;
        let mut syx = DenseMatrix::zeros(n, n);
        let mut sxx = DenseMatrix::zeros(n, n);
        for q in 0..n {
            for p in 0..n {
                let mut acc_yx = 0.0;
                let mut acc_xx = 0.0;
                for j in 0..m {
                    let jq = self.idx(j, q);
                    let sx_jq = self.sum_x[jq];
                    for i in 0..m {
                        let ip = self.idx(i, p);
                        acc_yx += a[(i, j)] * (self.gyx[(ip, jq)] - c[(i, p)] * sx_jq);
                        acc_xx += ata[(i, j)] * self.gxx[(ip, jq)];
                    }
                }
                syx[(p, q)] = acc_yx;
                sxx[(p, q)] = acc_xx;
            }
        }
        (syx, sxx)
    }

    /// `(T−1)⁻¹ Σ (X_t − A X_{t-1} Bᵀ)`.
    pub fn c_update(&self, a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
        let n = self.pairs.max(1) as f64;
        (self.sum_y_matrix() - a * self.sum_x_matrix() * b.transpose()) / n
    }

    /// `Σ_{t≥2} ‖X_t − A X_{t-1} Bᵀ − C‖_F²` from the moments.
    pub fn objective(&self, a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix) -> f64 {
        let zero = DenseMatrix::zeros(self.m, self.n);
        let (syx0, sxx) = self.s1(b, &zero);
        let ata = a.transpose() * a;
        let cross = a.dot(&syx0);
        let quad = ata.dot(&sxx);
        let c_y = c.dot(&self.sum_y_matrix());
        let c_fit = c.dot(&(a * self.sum_x_matrix() * b.transpose()));
        let value = self.syy - 2.0 * cross + quad - 2.0 * c_y + 2.0 * c_fit
            + self.pairs as f64 * c.norm_squared();
        value.max(0.0)
    }
}
