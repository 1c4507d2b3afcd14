//! Staggered-grid stencils: Laplacian, pressure gradient, divergence and the
//! central divergence-form convection term.
//!
//! Operators act on full velocity vectors (prescribed faces included) and
//! produce zero rows on prescribed faces. The tangential velocity on inlet
//! and wall edges is zero; outlets carry zero normal stress, so tangential
//! ghosts mirror the interior value there.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::grid::{BoundaryTag, FaceRole, Grid, Side};
use crate::linalg::{Csr, SymBandMatrix};

/// Shape of the inlet normal velocity across the inlet edges.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum InletProfile {
    #[default]
    Plug,
    /// 4 s (1 - s) across each inlet side, unit peak.
    Parabolic,
}

impl std::str::FromStr for InletProfile {
    type Err = RomError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "plug" => Ok(InletProfile::Plug),
            "parabolic" => Ok(InletProfile::Parabolic),
            other => Err(RomError::Config(format!("unknown inlet profile {other:?}"))),
        }
    }
}

/// Assembled linear operators of one grid.
#[derive(Clone, Debug)]
pub struct Operators {
    pub grid: Arc<Grid>,
    /// Vector Laplacian, n_vel x n_vel.
    pub lap: Csr,
    /// Homogeneous pressure gradient (outlet pressure zero), n_vel x n_cells.
    pub grad: Csr,
    /// Gradient contribution of a unit pressure on outlet k, per velocity unknown.
    pub grad_outlet: Vec<Vec<f64>>,
    /// Divergence, n_cells x n_vel.
    pub div: Csr,
}

impl Operators {
    pub fn new(grid: Arc<Grid>) -> Operators {
        let g = &*grid;
        let mut lap = Csr::new(g.n_vel());
        let mut grad = Csr::new(g.n_cells());
        let mut grad_outlet = vec![vec![0.0; g.n_vel()]; g.n_outlets()];
        let mut row = Vec::with_capacity(8);
        for idx in 0..g.n_vel() {
            row.clear();
            if g.is_dirichlet_face(idx) {
                lap.push_row(&[]);
                grad.push_row(&[]);
                continue;
            }
            laplacian_row(g, idx, &mut row);
            lap.push_row(&row);
            row.clear();
            if let Some((k, c)) = gradient_row(g, idx, &mut row) {
                grad_outlet[k][idx] = c;
            }
            grad.push_row(&row);
        }
        let mut div = Csr::new(g.n_vel());
        let (hx, hy) = (g.hx(), g.hy());
        for i in 0..g.nx() {
            for j in 0..g.ny() {
                div.push_row(&[
                    (g.u(i + 1, j), 1.0 / hx),
                    (g.u(i, j), -1.0 / hx),
                    (g.v(i, j + 1), 1.0 / hy),
                    (g.v(i, j), -1.0 / hy),
                ]);
            }
        }
        Operators {
            grid,
            lap,
            grad,
            grad_outlet,
            div,
        }
    }

    pub fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.lap.matvec(u)
    }

    /// Gradient of `p` with outlet pressures `pb` imposed on the outlet faces.
    pub fn gradient(&self, p: &[f64], pb: &[f64]) -> Vec<f64> {
        let mut out = self.grad.matvec(p);
        for (k, &b) in pb.iter().enumerate() {
            for (o, c) in out.iter_mut().zip(&self.grad_outlet[k]) {
                *o += c * b;
            }
        }
        out
    }

    pub fn divergence(&self, u: &[f64]) -> Vec<f64> {
        self.div.matvec(u)
    }

    /// -W L restricted to the free faces, identity rows on prescribed faces.
    /// Symmetric positive definite in the natural velocity ordering.
    pub fn velocity_stiffness(&self) -> SymBandMatrix {
        let g = &*self.grid;
        let mut a = SymBandMatrix::zeros(g.n_vel(), g.ny() + 1);
        for r in 0..g.n_vel() {
            if g.is_dirichlet_face(r) {
                a.add(r, r, 1.0);
                continue;
            }
            let w = g.face_weight(r);
            for (c, val) in self.lap.row(r) {
                if c <= r && !g.is_dirichlet_face(c) {
                    a.add(r, c, -w * val);
                }
            }
        }
        a
    }

    pub fn convection(&self, adv: &[f64], q: &[f64]) -> Vec<f64> {
        convection(&self.grid, adv, q)
    }
}

fn laplacian_row(g: &Grid, idx: usize, row: &mut Vec<(usize, f64)>) {
    let (nx, ny) = (g.nx(), g.ny());
    let (ihx2, ihy2) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    // normal direction: mirror at an outlet face, standard otherwise
    let normal = |row: &mut Vec<(usize, f64)>, pos: usize, last: usize, at: &dyn Fn(usize) -> usize, ih2: f64| {
        if pos == 0 {
            row.extend([(at(1), 2.0 * ih2), (at(0), -2.0 * ih2)]);
        } else if pos == last {
            row.extend([(at(last - 1), 2.0 * ih2), (at(last), -2.0 * ih2)]);
        } else {
            row.extend([(at(pos - 1), ih2), (at(pos), -2.0 * ih2), (at(pos + 1), ih2)]);
        }
    };
    // tangential direction: ghost value is -interior (no slip) or +interior
    let tangential = |row: &mut Vec<(usize, f64)>,
                      pos: usize,
                      last: usize,
                      at: &dyn Fn(usize) -> usize,
                      lo: (Side, usize),
                      hi: (Side, usize),
                      ih2: f64| {
        row.push((at(pos), -2.0 * ih2));
        for (nb, side) in [(pos.checked_sub(1), lo), ((pos < last).then_some(pos + 1), hi)] {
            match nb {
                Some(n) => row.push((at(n), ih2)),
                None => {
                    let ghost = if g.tangential_dirichlet(side.0, side.1) {
                        -1.0
                    } else {
                        1.0
                    };
                    row.push((at(pos), ghost * ih2));
                }
            }
        }
    };
    if idx < g.n_u() {
        let (i, j) = (idx / ny, idx % ny);
        normal(row, i, nx, &|a| g.u(a, j), ihx2);
        tangential(row, j, ny - 1, &|b| g.u(i, b), (Side::Bottom, i), (Side::Top, i), ihy2);
    } else {
        let k = idx - g.n_u();
        let (i, j) = (k / (ny + 1), k % (ny + 1));
        normal(row, j, ny, &|b| g.v(i, b), ihy2);
        tangential(row, i, nx - 1, &|a| g.v(a, j), (Side::Left, j), (Side::Right, j), ihx2);
    }
}

/// Fills the homogeneous gradient row of an active face; returns the outlet
/// coefficient when the face lies on an outlet.
fn gradient_row(g: &Grid, idx: usize, row: &mut Vec<(usize, f64)>) -> Option<(usize, f64)> {
    let (nx, ny) = (g.nx(), g.ny());
    let role = g.face_role(idx);
    let (pos, last, h, at): (usize, usize, f64, Box<dyn Fn(usize) -> usize + '_>) = if idx < g.n_u() {
        let (i, j) = (idx / ny, idx % ny);
        (i, nx, g.hx(), Box::new(move |a| g.cell(a, j)))
    } else {
        let k = idx - g.n_u();
        let (i, j) = (k / (ny + 1), k % (ny + 1));
        (j, ny, g.hy(), Box::new(move |b| g.cell(i, b)))
    };
    match role {
        FaceRole::Interior => {
            row.extend([(at(pos), 1.0 / h), (at(pos - 1), -1.0 / h)]);
            None
        }
        FaceRole::Outlet(k) if pos == 0 => {
            row.push((at(0), 2.0 / h));
            Some((k, -2.0 / h))
        }
        FaceRole::Outlet(k) => {
            debug_assert_eq!(pos, last);
            row.push((at(last - 1), -2.0 / h));
            Some((k, 2.0 / h))
        }
        FaceRole::Dirichlet(_) => None,
    }
}

/// Tangential boundary value at a boundary node: zero where the velocity is
/// prescribed, the adjacent interior value at outlets.
#[inline]
fn tangential_value(g: &Grid, side: Side, node: usize, adjacent: f64) -> f64 {
    if g.tangential_dirichlet(side, node) {
        0.0
    } else {
        adjacent
    }
}

/// Divergence-form convection `div(adv ⊗ q)` with central fluxes; bilinear
/// in (adv, q). Rows of prescribed faces are zero.
pub fn convection(g: &Grid, a: &[f64], q: &[f64]) -> Vec<f64> {
    let (nx, ny) = (g.nx(), g.ny());
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = vec![0.0; g.n_vel()];
    let u = |i: usize, j: usize| g.u(i, j);
    let v = |i: usize, j: usize| g.v(i, j);

    for i in 0..=nx {
        for j in 0..ny {
            let idx = u(i, j);
            if g.is_dirichlet_face(idx) {
                continue;
            }
            // x-fluxes at the cell centers on either side, or the face itself
            let flux_c = |c: usize| 0.25 * (a[u(c, j)] + a[u(c + 1, j)]) * (q[u(c, j)] + q[u(c + 1, j)]);
            let (east, west, width) = if i == 0 {
                (flux_c(0), a[idx] * q[idx], 0.5 * hx)
            } else if i == nx {
                (a[idx] * q[idx], flux_c(nx - 1), 0.5 * hx)
            } else {
                (flux_c(i), flux_c(i - 1), hx)
            };
            // advecting v at the nodes (i, j) and (i, j+1)
            let v_node = |jn: usize| -> f64 {
                match i {
                    0 => a[v(0, jn)],
                    _ if i == nx => a[v(nx - 1, jn)],
                    _ => 0.5 * (a[v(i - 1, jn)] + a[v(i, jn)]),
                }
            };
            let north_q = if j + 1 < ny {
                0.5 * (q[idx] + q[u(i, j + 1)])
            } else {
                tangential_value(g, Side::Top, i, q[idx])
            };
            let south_q = if j > 0 {
                0.5 * (q[idx] + q[u(i, j - 1)])
            } else {
                tangential_value(g, Side::Bottom, i, q[idx])
            };
            out[idx] = (east - west) / width + (v_node(j + 1) * north_q - v_node(j) * south_q) / hy;
        }
    }

    for i in 0..nx {
        for j in 0..=ny {
            let idx = v(i, j);
            if g.is_dirichlet_face(idx) {
                continue;
            }
            let flux_c = |c: usize| 0.25 * (a[v(i, c)] + a[v(i, c + 1)]) * (q[v(i, c)] + q[v(i, c + 1)]);
            let (north, south, width) = if j == 0 {
                (flux_c(0), a[idx] * q[idx], 0.5 * hy)
            } else if j == ny {
                (a[idx] * q[idx], flux_c(ny - 1), 0.5 * hy)
            } else {
                (flux_c(j), flux_c(j - 1), hy)
            };
            let u_node = |in_: usize| -> f64 {
                match j {
                    0 => a[u(in_, 0)],
                    _ if j == ny => a[u(in_, ny - 1)],
                    _ => 0.5 * (a[u(in_, j - 1)] + a[u(in_, j)]),
                }
            };
            let east_q = if i + 1 < nx {
                0.5 * (q[idx] + q[v(i + 1, j)])
            } else {
                tangential_value(g, Side::Right, j, q[idx])
            };
            let west_q = if i > 0 {
                0.5 * (q[idx] + q[v(i - 1, j)])
            } else {
                tangential_value(g, Side::Left, j, q[idx])
            };
            out[idx] = (north - south) / width + (u_node(i + 1) * east_q - u_node(i) * west_q) / hx;
        }
    }
    out
}

/// Net outward flow through outlet `k`.
pub fn outlet_flow(g: &Grid, u: &[f64], k: usize) -> f64 {
    g.outlet_edges(k)
        .iter()
        .map(|&(side, e)| {
            let (idx, sign) = g.boundary_face(side, e);
            sign * u[idx] * g.edge_length(side)
        })
        .sum()
}

/// Velocity vector that is zero everywhere except the inlet faces, where it
/// holds the inward normal velocity of unit amplitude shaped by `profile`.
pub fn inlet_trace(g: &Grid, profile: InletProfile) -> Vec<f64> {
    let mut out = vec![0.0; g.n_vel()];
    for side in Side::ALL {
        let tags = g.tags(side);
        let n = tags.len() as f64;
        for (e, t) in tags.iter().enumerate() {
            if *t != BoundaryTag::Inlet {
                continue;
            }
            let s = (e as f64 + 0.5) / n;
            let shape = match profile {
                InletProfile::Plug => 1.0,
                InletProfile::Parabolic => 4.0 * s * (1.0 - s),
            };
            let (idx, sign) = g.boundary_face(side, e);
            out[idx] = -sign * shape;
        }
    }
    out
}

/// Net inward flow through the inlet edges.
pub fn inlet_flow(g: &Grid, u: &[f64]) -> f64 {
    g.inlet_edges()
        .iter()
        .map(|&(side, e)| {
            let (idx, sign) = g.boundary_face(side, e);
            -sign * u[idx] * g.edge_length(side)
        })
        .sum()
}

/// Zeroes the prescribed faces of a velocity vector.
pub fn zero_dirichlet(g: &Grid, u: &mut [f64]) {
    for (idx, x) in u.iter_mut().enumerate() {
        if g.is_dirichlet_face(idx) {
            *x = 0.0;
        }
    }
}
