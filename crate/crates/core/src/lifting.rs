//! Lifting fields carrying the inhomogeneous boundary data, and the
//! homogenize / dehomogenize maps on snapshot sets.
//!
//! The velocity lifting is a discrete potential flow with the unit inlet
//! trace; the pressure liftings are discrete harmonic fields with value 1 on
//! one outlet, 0 on the inlet and the other outlets, and zero normal
//! derivative on walls.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::grid::{BoundaryTag, Field, FieldKind, Grid, Side, SnapshotMeta, SnapshotSet};
use crate::linalg::SymBandMatrix;
use crate::ops::{inlet_flow, inlet_trace, outlet_flow, InletProfile, Operators};

#[derive(Clone, Debug, PartialEq)]
pub struct LiftingPair {
    pub chi_u: Field,
    /// One pressure lifting per outlet.
    pub chi_p: Vec<Field>,
    pub profile: InletProfile,
    pub record: LiftingRecord,
}

/// Normalization diagnostics persisted next to the fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LiftingRecord {
    pub inlet_flux: f64,
    pub outlet_flux: Vec<f64>,
    pub max_divergence: f64,
}

impl LiftingPair {
    pub fn grid(&self) -> &Arc<Grid> {
        self.chi_u.grid()
    }
    pub fn n_outlets(&self) -> usize {
        self.chi_p.len()
    }
}

/// Builds the cell Laplacian with the given boundary handling and returns its
/// negation (symmetric positive definite) plus the right-hand side produced
/// by unit Dirichlet data on the edges where `value` returns Some.
fn cell_poisson(g: &Grid, dirichlet: impl Fn(BoundaryTag) -> Option<f64>) -> (SymBandMatrix, Vec<f64>) {
    let (nx, ny) = (g.nx(), g.ny());
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let mut a = SymBandMatrix::zeros(g.n_cells(), ny);
    let mut rhs = vec![0.0; g.n_cells()];
    for i in 0..nx {
        for j in 0..ny {
            let c = g.cell(i, j);
            let mut boundary = |side: Side, edge: usize, ih2: f64| {
                if let Some(val) = dirichlet(g.tags(side)[edge]) {
                    // half-cell distance to the boundary value
                    a.add(c, c, 2.0 * ih2);
                    rhs[c] += 2.0 * ih2 * val;
                }
            };
            if i == 0 {
                boundary(Side::Left, j, ihx2);
            }
            if i == nx - 1 {
                boundary(Side::Right, j, ihx2);
            }
            if j == 0 {
                boundary(Side::Bottom, i, ihy2);
            }
            if j == ny - 1 {
                boundary(Side::Top, i, ihy2);
            }
            if i + 1 < nx {
                let e = g.cell(i + 1, j);
                a.add(c, c, ihx2);
                a.add(e, e, ihx2);
                a.add(e, c, -ihx2);
            }
            if j + 1 < ny {
                let n = g.cell(i, j + 1);
                a.add(c, c, ihy2);
                a.add(n, n, ihy2);
                a.add(n, c, -ihy2);
            }
        }
    }
    (a, rhs)
}

pub fn compute_lifting(grid: Arc<Grid>, profile: InletProfile) -> Result<LiftingPair> {
    let g = &*grid;
    let ops = Operators::new(grid.clone());
    let trace = inlet_trace(g, profile);

    // potential with phi = 0 on outlets, zero flux elsewhere: -D G0 phi = D trace
    let (a, _) = cell_poisson(g, |t| matches!(t, BoundaryTag::Outlet(_)).then_some(0.0));
    let chol = a
        .cholesky()
        .map_err(|e| RomError::Numerical(format!("potential-flow solve: {e}")))?;
    let phi = chol.solve(&ops.divergence(&trace));
    let grad = ops.grad.matvec(&phi);
    let chi: Vec<f64> = trace.iter().zip(&grad).map(|(t, gp)| t + gp).collect();
    let max_divergence = ops.divergence(&chi).iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let chi_u = Field::new(grid.clone(), FieldKind::Vector2, chi)?;

    let mut chi_p = Vec::with_capacity(g.n_outlets());
    for k in 0..g.n_outlets() {
        let (a, rhs) = cell_poisson(g, |t| match t {
            BoundaryTag::Outlet(m) => Some(if m == k { 1.0 } else { 0.0 }),
            BoundaryTag::Inlet => Some(0.0),
            BoundaryTag::Wall => None,
        });
        let chol = a
            .cholesky()
            .map_err(|e| RomError::Numerical(format!("pressure lifting solve: {e}")))?;
        chi_p.push(Field::new(grid.clone(), FieldKind::Scalar, chol.solve(&rhs))?);
    }

    let record = LiftingRecord {
        inlet_flux: inlet_flow(g, chi_u.values()),
        outlet_flux: (0..g.n_outlets()).map(|k| outlet_flow(g, chi_u.values(), k)).collect(),
        max_divergence,
    };
    Ok(LiftingPair {
        chi_u,
        chi_p,
        profile,
        record,
    })
}

fn check_series(set: &SnapshotSet, ud: &[f64], pd: &[Vec<f64>], lift: &LiftingPair) -> Result<()> {
    let m = set.len();
    if ud.len() != m || pd.iter().any(|s| s.len() != m) {
        return Err(RomError::Shape(format!(
            "boundary series lengths {} / {:?} do not match {m} snapshots",
            ud.len(),
            pd.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    if pd.len() != lift.n_outlets() {
        return Err(RomError::Shape(format!(
            "{} pressure series for {} outlet liftings",
            pd.len(),
            lift.n_outlets()
        )));
    }
    if !crate::grid::same_grid(set.grid(), lift.grid()) {
        return Err(RomError::Shape("lifting and snapshots live on different grids".into()));
    }
    Ok(())
}

fn shift(set: &SnapshotSet, ud: &[f64], pd: &[Vec<f64>], lift: &LiftingPair, sign: f64) -> Result<SnapshotSet> {
    check_series(set, ud, pd, lift)?;
    let mut out = set.clone();
    for (m, u) in out.velocity.iter_mut().enumerate() {
        u.axpy(sign * ud[m], &lift.chi_u);
    }
    for (m, p) in out.pressure.iter_mut().enumerate() {
        for (k, chi) in lift.chi_p.iter().enumerate() {
            p.axpy(sign * pd[k][m], chi);
        }
    }
    out.meta = SnapshotMeta {
        inlet_velocity: set
            .meta
            .inlet_velocity
            .iter()
            .zip(ud)
            .map(|(a, b)| a + sign * b)
            .collect(),
        outlet_pressure: set
            .meta
            .outlet_pressure
            .iter()
            .zip(pd)
            .map(|(s, d)| s.iter().zip(d).map(|(a, b)| a + sign * b).collect())
            .collect(),
        ..set.meta.clone()
    };
    Ok(out)
}

/// u' = u - u_D χ^u, p' = p - Σ_k p_D,k χ^p_k. `pd` is indexed `[outlet][time]`.
pub fn homogenize(set: &SnapshotSet, ud: &[f64], pd: &[Vec<f64>], lift: &LiftingPair) -> Result<SnapshotSet> {
    shift(set, ud, pd, lift, -1.0)
}

pub fn dehomogenize(set: &SnapshotSet, ud: &[f64], pd: &[Vec<f64>], lift: &LiftingPair) -> Result<SnapshotSet> {
    shift(set, ud, pd, lift, 1.0)
}

/// Largest velocity magnitude on the inlet faces.
pub fn max_inlet_trace(u: &Field) -> f64 {
    let g = u.grid();
    g.inlet_edges()
        .iter()
        .map(|&(side, e)| u.values()[g.boundary_face(side, e).0].abs())
        .fold(0.0, f64::max)
}
