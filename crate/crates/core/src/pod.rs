//! Proper orthogonal decomposition by the method of snapshots.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::grid::{inner_product, same_grid, weighted_dot, Field};
use crate::linalg::{jacobi_eigen, DenseMatrix, SymmetricEigen};

/// Eigenvalues at or below this fraction of the largest are treated as zero.
pub const RANK_RTOL: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Velocity,
    Pressure,
    /// Velocity modes enriched with pressure supremizers.
    Supremizer,
}

/// Orthonormal modes plus the full correlation spectrum they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct ReducedBasis {
    pub kind: BasisKind,
    pub modes: Vec<Field>,
    pub eigenvalues: Vec<f64>,
    pub m: usize,
}

impl ReducedBasis {
    pub fn n(&self) -> usize {
        self.modes.len()
    }

    /// First `n` modes; same spectrum.
    pub fn truncated(&self, n: usize) -> ReducedBasis {
        ReducedBasis {
            kind: self.kind,
            modes: self.modes[..n.min(self.modes.len())].to_vec(),
            eigenvalues: self.eigenvalues.clone(),
            m: self.m,
        }
    }

    pub fn project(&self, f: &Field) -> Result<Vec<f64>> {
        self.modes.iter().map(|m| inner_product(m, f)).collect()
    }

    pub fn expand(&self, coeffs: &[f64]) -> Result<Field> {
        let first = self
            .modes
            .first()
            .ok_or_else(|| RomError::Shape("cannot expand in an empty basis".into()))?;
        if coeffs.len() != self.modes.len() {
            return Err(RomError::Shape(format!(
                "{} coefficients for {} modes",
                coeffs.len(),
                self.modes.len()
            )));
        }
        let mut out = first.zeros_like();
        for (c, m) in coeffs.iter().zip(&self.modes) {
            out.axpy(*c, m);
        }
        Ok(out)
    }

    /// Orthogonal projection onto the span of the modes.
    pub fn projector(&self, f: &Field) -> Result<Field> {
        if self.modes.is_empty() {
            return Ok(f.zeros_like());
        }
        self.expand(&self.project(f)?)
    }

    pub fn gram(&self) -> DenseMatrix {
        gram(&self.modes)
    }
}

pub fn gram(modes: &[Field]) -> DenseMatrix {
    let n = modes.len();
    DenseMatrix::from_fn(n, n, |i, j| inner_product(&modes[i], &modes[j]).unwrap_or(f64::NAN))
}

/// Max-norm deviation of the Gram matrix from the identity.
pub fn gram_deviation(modes: &[Field]) -> f64 {
    gram(modes).sub(&DenseMatrix::identity(modes.len())).max_abs()
}

/// C_mq = (1/M) <s_m, s_q> for an arbitrary inner product; rows in parallel,
/// each entry a fixed-order sum.
pub fn correlation_matrix_with<T: Sync>(snaps: &[T], ip: impl Fn(&T, &T) -> f64 + Sync) -> Result<DenseMatrix> {
    let m = snaps.len();
    if m == 0 {
        return Err(RomError::Argument("correlation matrix of an empty snapshot set".into()));
    }
    let scale = 1.0 / m as f64;
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| (i..m).map(|j| scale * ip(&snaps[i], &snaps[j])).collect())
        .collect();
    let mut c = DenseMatrix::zeros(m, m);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            c[(i, i + k)] = v;
            c[(i + k, i)] = v;
        }
    }
    Ok(c)
}

pub fn correlation_matrix(snaps: &[Field]) -> Result<DenseMatrix> {
    if let Some(first) = snaps.first() {
        if snaps
            .iter()
            .any(|s| s.kind() != first.kind() || !same_grid(s.grid(), first.grid()))
        {
            return Err(RomError::Shape("snapshots differ in kind or grid".into()));
        }
    }
    correlation_matrix_with(snaps, |a, b| weighted_dot(a.grid(), a.kind(), a.values(), b.values()))
}

pub fn symmetric_eig(c: &DenseMatrix) -> Result<SymmetricEigen> {
    jacobi_eigen(c)
}

/// Count of eigenvalues above the rank cutoff.
pub fn numerical_rank(values: &[f64]) -> usize {
    let top = values.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return 0;
    }
    values.iter().take_while(|&&l| l > RANK_RTOL * top).count()
}

/// Smallest N whose cumulative energy fraction reaches `threshold`.
pub fn truncation_rank(values: &[f64], threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(RomError::Argument(format!(
            "energy threshold must be in (0, 1], got {threshold}"
        )));
    }
    let pos: Vec<f64> = values.iter().map(|l| l.max(0.0)).collect();
    let total: f64 = pos.iter().sum();
    if !(total > 0.0) {
        return Err(RomError::Rank("spectrum is identically zero".into()));
    }
    let mut acc = 0.0;
    for (i, l) in pos.iter().enumerate() {
        acc += l;
        if acc / total >= threshold * (1.0 - 1e-15) {
            return Ok(i + 1);
        }
    }
    Ok(numerical_rank(values).max(1))
}

/// Modified Gram–Schmidt, two passes, in the given inner product. Vectors
/// whose remainder falls below `drop_tol` times their original norm are
/// reported as a rank error.
pub fn orthonormalize_with(
    vectors: Vec<Vec<f64>>,
    ip: impl Fn(&[f64], &[f64]) -> f64,
    drop_tol: f64,
) -> Result<Vec<Vec<f64>>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(vectors.len());
    for (k, mut v) in vectors.into_iter().enumerate() {
        let norm0 = ip(&v, &v).sqrt();
        for _ in 0..2 {
            for q in &out {
                let c = ip(q, &v);
                for (x, y) in v.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let norm = ip(&v, &v).sqrt();
        if !(norm > drop_tol * norm0) || norm == 0.0 {
            return Err(RomError::Rank(format!(
                "vector {k} is linearly dependent on its predecessors (remainder {norm:.3e} of {norm0:.3e})"
            )));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        out.push(v);
    }
    Ok(out)
}

/// POD modes of raw vectors: ξ_i = Σ_m (v_i)_m s_m / √(M λ_i), then
/// re-orthonormalized. Returns the modes and the full spectrum.
pub fn pod_vectors(
    snaps: &[Vec<f64>],
    eig: &SymmetricEigen,
    n: usize,
    ip: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<Vec<Vec<f64>>> {
    let m = snaps.len();
    if eig.values.len() != m {
        return Err(RomError::Shape(format!(
            "{} eigenpairs for {m} snapshots",
            eig.values.len()
        )));
    }
    let rank = numerical_rank(&eig.values);
    if n == 0 || n > rank {
        return Err(RomError::Rank(format!(
            "requested {n} modes but the snapshot set has numerical rank {rank}"
        )));
    }
    let len = snaps[0].len();
    let raw: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let scale = 1.0 / (m as f64 * eig.values[i]).sqrt();
            let mut xi = vec![0.0; len];
            for (mi, s) in snaps.iter().enumerate() {
                let c = eig.vectors[(mi, i)] * scale;
                for (x, y) in xi.iter_mut().zip(s) {
                    *x += c * y;
                }
            }
            xi
        })
        .collect();
    orthonormalize_with(raw, ip, 1e-8)
}

pub fn build_basis(snaps: &[Field], eig: &SymmetricEigen, n: usize, kind: BasisKind) -> Result<ReducedBasis> {
    let first = snaps
        .first()
        .ok_or_else(|| RomError::Argument("cannot build a basis from no snapshots".into()))?;
    let (grid, fk) = (first.grid().clone(), first.kind());
    let raw: Vec<Vec<f64>> = snaps.iter().map(|s| s.values().to_vec()).collect();
    let modes = pod_vectors(&raw, eig, n, |a, b| weighted_dot(&grid, fk, a, b))?;
    Ok(ReducedBasis {
        kind,
        modes: modes
            .into_iter()
            .map(|v| Field::new(grid.clone(), fk, v))
            .collect::<Result<_>>()?,
        eigenvalues: eig.values.clone(),
        m: snaps.len(),
    })
}

/// Correlation matrix, eigensolve and the first `n` modes in one call.
pub fn pod(snaps: &[Field], n: usize, kind: BasisKind) -> Result<ReducedBasis> {
    let c = correlation_matrix(snaps)?;
    let eig = symmetric_eig(&c)?;
    build_basis(snaps, &eig, n, kind)
}

/// Basis with every mode above the rank cutoff.
pub fn pod_full_rank(snaps: &[Field], kind: BasisKind) -> Result<ReducedBasis> {
    let c = correlation_matrix(snaps)?;
    let eig = symmetric_eig(&c)?;
    let rank = numerical_rank(&eig.values);
    build_basis(snaps, &eig, rank, kind)
}

/// (1/M) Σ_m ‖s_m − P_N s_m‖², computed directly from projections.
pub fn projection_error(snaps: &[Field], basis: &ReducedBasis, n: usize) -> Result<f64> {
    if n > basis.n() {
        return Err(RomError::Argument(format!("N = {n} exceeds basis size {}", basis.n())));
    }
    let b = basis.truncated(n);
    let total: f64 = snaps
        .par_iter()
        .map(|s| -> Result<f64> {
            let mut r = s.clone();
            if n > 0 {
                r.axpy(-1.0, &b.projector(s)?);
            }
            inner_product(&r, &r)
        })
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    Ok(total / snaps.len() as f64)
}

/// Σ_{m>N} λ_m, negative round-off clipped.
pub fn eigen_tail(values: &[f64], n: usize) -> f64 {
    values.iter().skip(n).map(|l| l.max(0.0)).sum()
}
