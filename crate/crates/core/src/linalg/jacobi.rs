use super::dense::DenseMatrix;
use crate::error::{Result, RomError};

/// Off-diagonal Frobenius norm, relative to the full Frobenius norm, at
/// which the sweeps stop.
pub const OFF_DIAGONAL_RTOL: f64 = 1e-14;
pub const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a symmetric matrix, eigenvalues sorted non-increasing.
/// Column `k` of `vectors` belongs to `values[k]`.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
    pub sweeps: usize,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k)
    }

    /// V diag(λ) Vᵀ.
    pub fn reconstruct(&self) -> DenseMatrix {
        let n = self.values.len();
        DenseMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| self.vectors[(i, k)] * self.values[k] * self.vectors[(j, k)])
                .sum()
        })
    }
}

/// Cyclic Jacobi rotations on a dense symmetric matrix.
pub fn jacobi_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    if !a.is_square() {
        return Err(RomError::Shape(format!(
            "eigenproblem on {}x{} matrix",
            a.rows(),
            a.cols()
        )));
    }
    let n = a.rows();
    let norm = a.frobenius_norm();
    if a.symmetry_defect() > 1e-12 * norm.max(f64::MIN_POSITIVE) {
        return Err(RomError::Argument("matrix is not symmetric".into()));
    }
    let mut m = a.clone();
    // enforce exact symmetry before rotating
    for i in 0..n {
        for j in (i + 1)..n {
            let s = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let tol = OFF_DIAGONAL_RTOL * norm;

    let off_norm = |m: &DenseMatrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += m[(i, j)] * m[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&m) > tol {
        if sweeps == MAX_SWEEPS {
            return Err(RomError::Numerical(format!(
                "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps (off-diagonal {:.3e}, target {tol:.3e})",
                off_norm(&m)
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (mkp, mkq) = (m[(k, p)], m[(k, q)]);
                    m[(k, p)] = c * mkp - s * mkq;
                    m[(k, q)] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let (mpk, mqk) = (m[(p, k)], m[(q, k)]);
                    m[(p, k)] = c * mpk - s * mqk;
                    m[(q, k)] = s * mpk + c * mqk;
                }
                m[(p, q)] = 0.0;
                m[(q, p)] = 0.0;
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let values = order.iter().map(|&k| m[(k, k)]).collect();
    let vectors = DenseMatrix::from_fn(n, n, |i, k| v[(i, order[k])]);
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}
