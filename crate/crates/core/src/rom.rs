//! Galerkin reduced model: supremizer enrichment, reduced operators,
//! semi-implicit time integration and field reconstruction.
//!
//! The reduced momentum equation for u = Σ a_i φ_i + u_D χ^u and
//! p = Σ b_j ψ_j + Σ_k p_D,k χ^p_k reads
//!
//! ```text
//! a' = ν B a − Ct(a, a) − u_D (d2 + d3) a − u_D² d4 + ν u_D d1 − u_D' d6
//!      − K b − Σ_k p_D,k d5_k,          P a = −u_D d7
//! ```

use rayon::prelude::*;

use crate::error::{Result, RomError};
use crate::grid::{inner_product, weighted_dot, Field, FieldKind, SnapshotMeta, SnapshotSet};
use crate::lifting::LiftingPair;
use crate::linalg::{jacobi_eigen, DenseMatrix, Lu};
use crate::ops::Operators;
use crate::pod::{orthonormalize_with, BasisKind, ReducedBasis};

/// Solves L s = G ψ for each pressure mode, appends the solutions to the
/// velocity modes and re-orthonormalizes the combined set.
pub fn supremizer_enrich(basis_u: &ReducedBasis, basis_p: &ReducedBasis, ops: &Operators) -> Result<ReducedBasis> {
    if basis_p.n() == 0 {
        return Ok(basis_u.clone());
    }
    let g = ops.grid.clone();
    let chol = ops
        .velocity_stiffness()
        .cholesky()
        .map_err(|e| RomError::Numerical(format!("supremizer solve: {e}")))?;
    let sups: Vec<Vec<f64>> = basis_p
        .modes
        .par_iter()
        .map(|psi| {
            let gp = ops.grad.matvec(psi.values());
            let rhs: Vec<f64> = gp
                .iter()
                .enumerate()
                .map(|(r, x)| {
                    if g.is_dirichlet_face(r) {
                        0.0
                    } else {
                        -g.face_weight(r) * x
                    }
                })
                .collect();
            chol.solve(&rhs)
        })
        .collect();
    let mut all: Vec<Vec<f64>> = basis_u.modes.iter().map(|m| m.values().to_vec()).collect();
    all.extend(sups);
    let modes = orthonormalize_with(all, |a, b| weighted_dot(&g, FieldKind::Vector2, a, b), 1e-10)?;
    Ok(ReducedBasis {
        kind: BasisKind::Supremizer,
        modes: modes
            .into_iter()
            .map(|v| Field::new(g.clone(), FieldKind::Vector2, v))
            .collect::<Result<_>>()?,
        eigenvalues: basis_u.eigenvalues.clone(),
        m: basis_u.m,
    })
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReducedOperators {
    pub nu: f64,
    pub n_u: usize,
    pub n_p: usize,
    pub n_out: usize,
    /// (φ_i, L φ_j)
    pub b: DenseMatrix,
    /// (φ_i, N(φ_j, φ_k)) at `i * n_u² + j * n_u + k`.
    pub ct: Vec<f64>,
    /// (φ_i, G ψ_j)
    pub k: DenseMatrix,
    /// (ψ_i, D φ_j)
    pub p: DenseMatrix,
    pub d1: Vec<f64>,
    pub d2: DenseMatrix,
    pub d3: DenseMatrix,
    pub d4: Vec<f64>,
    /// Per outlet: (φ_i, G χ^p_k) with unit outlet pressure.
    pub d5: Vec<Vec<f64>>,
    pub d6: Vec<f64>,
    pub d7: Vec<f64>,
}

impl ReducedOperators {
    pub fn ct(&self, i: usize, j: usize, k: usize) -> f64 {
        self.ct[(i * self.n_u + j) * self.n_u + k]
    }

    /// Ct(a, a)_i = Σ_jk ct_ijk a_j a_k.
    pub fn convection(&self, a: &[f64]) -> Vec<f64> {
        let n = self.n_u;
        (0..n)
            .map(|i| {
                let block = &self.ct[i * n * n..(i + 1) * n * n];
                let mut s = 0.0;
                for j in 0..n {
                    let row = &block[j * n..(j + 1) * n];
                    let inner: f64 = row.iter().zip(a).map(|(c, x)| c * x).sum();
                    s += a[j] * inner;
                }
                s
            })
            .collect()
    }

    pub fn check_finite(&self) -> Result<()> {
        let all = self
            .b
            .data()
            .iter()
            .chain(&self.ct)
            .chain(self.k.data())
            .chain(self.p.data())
            .chain(&self.d1)
            .chain(self.d2.data())
            .chain(self.d3.data())
            .chain(&self.d4)
            .chain(self.d5.iter().flatten())
            .chain(&self.d6)
            .chain(&self.d7);
        for x in all {
            if !x.is_finite() {
                return Err(RomError::Numerical(
                    "reduced operators contain non-finite entries".into(),
                ));
            }
        }
        Ok(())
    }
}

fn dots(modes: &[Field], v: &[f64]) -> Vec<f64> {
    modes
        .iter()
        .map(|m| weighted_dot(m.grid(), m.kind(), m.values(), v))
        .collect()
}

pub fn assemble_operators(
    basis_u: &ReducedBasis,
    basis_p: &ReducedBasis,
    lift: &LiftingPair,
    nu: f64,
    ops: &Operators,
) -> Result<ReducedOperators> {
    let g = &*ops.grid;
    for m in basis_u
        .modes
        .iter()
        .chain(&basis_p.modes)
        .chain(std::iter::once(&lift.chi_u))
    {
        if **m.grid() != *g {
            return Err(RomError::Shape(
                "basis, lifting and operators use different grids".into(),
            ));
        }
    }
    if basis_u.modes.iter().any(|m| m.kind() != FieldKind::Vector2)
        || basis_p.modes.iter().any(|m| m.kind() != FieldKind::Scalar)
    {
        return Err(RomError::Shape(
            "velocity basis must be vector, pressure basis scalar".into(),
        ));
    }
    let phi = &basis_u.modes;
    let psi = &basis_p.modes;
    let (nu_, np) = (phi.len(), psi.len());
    let chi = lift.chi_u.values();

    let lap_phi: Vec<Vec<f64>> = phi.par_iter().map(|f| ops.laplacian(f.values())).collect();
    let b = DenseMatrix::from_fn(nu_, nu_, |i, j| {
        weighted_dot(g, FieldKind::Vector2, phi[i].values(), &lap_phi[j])
    });

    // one convection evaluation per (j, k) pair, tested against every mode
    let ct_jk: Vec<Vec<f64>> = (0..nu_ * nu_)
        .into_par_iter()
        .map(|jk| dots(phi, &ops.convection(phi[jk / nu_].values(), phi[jk % nu_].values())))
        .collect();
    let mut ct = vec![0.0; nu_ * nu_ * nu_];
    for (jk, col) in ct_jk.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            ct[i * nu_ * nu_ + jk] = *v;
        }
    }

    let grad_psi: Vec<Vec<f64>> = psi.par_iter().map(|p| ops.grad.matvec(p.values())).collect();
    let k = DenseMatrix::from_fn(nu_, np, |i, j| {
        weighted_dot(g, FieldKind::Vector2, phi[i].values(), &grad_psi[j])
    });
    let div_phi: Vec<Vec<f64>> = phi.par_iter().map(|f| ops.divergence(f.values())).collect();
    let p = DenseMatrix::from_fn(np, nu_, |i, j| {
        weighted_dot(g, FieldKind::Scalar, psi[i].values(), &div_phi[j])
    });

    let d1 = dots(phi, &ops.laplacian(chi));
    let d2_cols: Vec<Vec<f64>> = phi
        .par_iter()
        .map(|f| dots(phi, &ops.convection(f.values(), chi)))
        .collect();
    let d3_cols: Vec<Vec<f64>> = phi
        .par_iter()
        .map(|f| dots(phi, &ops.convection(chi, f.values())))
        .collect();
    let d2 = DenseMatrix::from_fn(nu_, nu_, |i, j| d2_cols[j][i]);
    let d3 = DenseMatrix::from_fn(nu_, nu_, |i, j| d3_cols[j][i]);
    let d4 = dots(phi, &ops.convection(chi, chi));
    let d5 = lift
        .chi_p
        .iter()
        .enumerate()
        .map(|(kk, cp)| {
            let mut unit = vec![0.0; lift.n_outlets()];
            unit[kk] = 1.0;
            dots(phi, &ops.gradient(cp.values(), &unit))
        })
        .collect();
    let d6 = dots(phi, chi);
    let div_chi = ops.divergence(chi);
    let d7 = psi
        .iter()
        .map(|p| weighted_dot(g, FieldKind::Scalar, p.values(), &div_chi))
        .collect();

    let out = ReducedOperators {
        nu,
        n_u: nu_,
        n_p: np,
        n_out: lift.n_outlets(),
        b,
        ct,
        k,
        p,
        d1,
        d2,
        d3,
        d4,
        d5,
        d6,
        d7,
    };
    out.check_finite()?;
    Ok(out)
}

/// Smallest singular value of P, the reduced inf-sup proxy.
pub fn inf_sup_constant(ops: &ReducedOperators) -> Result<f64> {
    if ops.n_p == 0 {
        return Ok(f64::INFINITY);
    }
    let ppt = ops.p.matmul(&ops.p.transpose())?;
    let eig = jacobi_eigen(&ppt)?;
    Ok(eig.values.last().copied().unwrap_or(0.0).max(0.0).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReducedTrajectory {
    pub times: Vec<f64>,
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
}

/// Boundary data driving the reduced model.
pub trait BoundaryData {
    fn inlet(&self, t: f64) -> f64;
    fn outlet(&self, t: f64) -> Vec<f64>;
}

impl<F, G> BoundaryData for (F, G)
where
    F: Fn(f64) -> f64,
    G: Fn(f64) -> Vec<f64>,
{
    fn inlet(&self, t: f64) -> f64 {
        (self.0)(t)
    }
    fn outlet(&self, t: f64) -> Vec<f64> {
        (self.1)(t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegrationOptions {
    /// Largest internal step; output intervals are subdivided evenly.
    pub max_step: f64,
    pub convection: bool,
}

struct SaddleCache {
    entries: Vec<(f64, Lu)>,
}

impl SaddleCache {
    fn get(&mut self, ops: &ReducedOperators, h: f64) -> Result<&Lu> {
        if let Some(pos) = self.entries.iter().position(|(s, _)| (s - h).abs() <= 1e-12 * h) {
            return Ok(&self.entries[pos].1);
        }
        let (n, m) = (ops.n_u, ops.n_p);
        let mat = DenseMatrix::from_fn(n + m, n + m, |r, c| match (r < n, c < n) {
            (true, true) => (if r == c { 1.0 / h } else { 0.0 }) - ops.nu * ops.b[(r, c)],
            (true, false) => ops.k[(r, c - n)],
            (false, true) => ops.p[(r - n, c)],
            (false, false) => 0.0,
        });
        let lu = Lu::new(&mat).map_err(|e| {
            RomError::Stability(format!(
                "reduced saddle-point matrix is singular ({e}); enrich the velocity basis with supremizers"
            ))
        })?;
        self.entries.push((h, lu));
        Ok(&self.entries.last().unwrap().1)
    }
}

/// Semi-implicit Euler: implicit diffusion and pressure, explicit
/// convection, lifting terms at the new time level.
pub fn integrate_rom(
    ops: &ReducedOperators,
    a0: &[f64],
    b0: Option<&[f64]>,
    times: &[f64],
    bc: &impl BoundaryData,
    opts: IntegrationOptions,
) -> Result<ReducedTrajectory> {
    if a0.len() != ops.n_u {
        return Err(RomError::Shape(format!(
            "{} initial coefficients for {} modes",
            a0.len(),
            ops.n_u
        )));
    }
    if times.is_empty() || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RomError::Argument(
            "query times must be nonempty and strictly increasing".into(),
        ));
    }
    if !(opts.max_step > 0.0) {
        return Err(RomError::Argument(format!(
            "internal step must be positive, got {}",
            opts.max_step
        )));
    }
    let (n, m) = (ops.n_u, ops.n_p);
    let mut cache = SaddleCache { entries: Vec::new() };
    let mut a = a0.to_vec();
    let mut b = b0.map(|x| x.to_vec()).unwrap_or_else(|| vec![0.0; m]);
    let mut out = ReducedTrajectory {
        times: times.to_vec(),
        a: vec![a.clone()],
        b: vec![b.clone()],
    };
    let mut rhs = vec![0.0; n + m];
    for w in times.windows(2) {
        let span = w[1] - w[0];
        let sub = ((span / opts.max_step) - 1e-9).ceil().max(1.0) as usize;
        let h = span / sub as f64;
        for s in 0..sub {
            let t_old = w[0] + s as f64 * h;
            let t_new = if s + 1 == sub { w[1] } else { w[0] + (s + 1) as f64 * h };
            let ud_old = bc.inlet(t_old);
            let ud_new = bc.inlet(t_new);
            let pd_new = bc.outlet(t_new);
            if pd_new.len() != ops.n_out {
                return Err(RomError::Shape(format!(
                    "{} outlet pressures for {} outlets",
                    pd_new.len(),
                    ops.n_out
                )));
            }
            let conv = if opts.convection {
                let mut c = ops.convection(&a);
                let da2 = ops.d2.matvec(&a);
                let da3 = ops.d3.matvec(&a);
                for i in 0..n {
                    c[i] += ud_old * (da2[i] + da3[i]) + ud_old * ud_old * ops.d4[i];
                }
                c
            } else {
                vec![0.0; n]
            };
            let dud = (ud_new - ud_old) / h;
            for i in 0..n {
                let mut r = a[i] / h - conv[i] + ops.nu * ud_new * ops.d1[i] - dud * ops.d6[i];
                for (k, p) in pd_new.iter().enumerate() {
                    r -= p * ops.d5[k][i];
                }
                rhs[i] = r;
            }
            for j in 0..m {
                rhs[n + j] = -ud_new * ops.d7[j];
            }
            let x = cache.get(ops, h)?.solve(&rhs);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(RomError::Numerical(format!(
                    "reduced state became non-finite at t={t_new}"
                )));
            }
            a.copy_from_slice(&x[..n]);
            b.copy_from_slice(&x[n..]);
        }
        out.a.push(a.clone());
        out.b.push(b.clone());
    }
    Ok(out)
}

/// u = Σ a_i φ_i + u_D χ^u, p = Σ b_j ψ_j + Σ_k p_D,k χ^p_k at every trajectory time.
pub fn reconstruct(
    basis_u: &ReducedBasis,
    basis_p: &ReducedBasis,
    traj: &ReducedTrajectory,
    lift: &LiftingPair,
    ud: &[f64],
    pd: &[Vec<f64>],
) -> Result<SnapshotSet> {
    let nt = traj.times.len();
    if ud.len() != nt || pd.len() != lift.n_outlets() || pd.iter().any(|s| s.len() != nt) {
        return Err(RomError::Shape(
            "boundary series not aligned with trajectory times".into(),
        ));
    }
    if traj.a.first().map_or(0, Vec::len) != basis_u.n() || traj.b.first().map_or(0, Vec::len) != basis_p.n() {
        return Err(RomError::Shape("trajectory and basis sizes differ".into()));
    }
    let grid = lift.grid().clone();
    let fields: Vec<(Field, Field)> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let mut u = lift.chi_u.scaled(ud[t]);
            for (c, m) in traj.a[t].iter().zip(&basis_u.modes) {
                u.axpy(*c, m);
            }
            let mut p = Field::zeros(grid.clone(), FieldKind::Scalar);
            for (c, m) in traj.b[t].iter().zip(&basis_p.modes) {
                p.axpy(*c, m);
            }
            for (k, chi) in lift.chi_p.iter().enumerate() {
                p.axpy(pd[k][t], chi);
            }
            (u, p)
        })
        .collect();
    let (velocity, pressure) = fields.into_iter().unzip();
    SnapshotSet::new(
        traj.times.clone(),
        velocity,
        pressure,
        SnapshotMeta {
            nu: f64::NAN,
            waveform: String::new(),
            inlet_velocity: ud.to_vec(),
            outlet_pressure: pd.to_vec(),
        },
    )
}

/// Coefficients of the orthogonal projection of each field.
pub fn project_all(basis: &ReducedBasis, fields: &[Field]) -> Result<Vec<Vec<f64>>> {
    fields
        .par_iter()
        .map(|f| basis.modes.iter().map(|m| inner_product(m, f)).collect())
        .collect()
}
