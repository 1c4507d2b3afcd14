//! Structured 2D domain, staggered field storage and the discrete L² inner
//! product shared by every other module.
//!
//! Layout conventions (all indices are x-major):
//! - scalars live at cell centers, `cell(i, j) = i * ny + j`;
//! - the x-velocity lives on x-faces, `u(i, j) = i * ny + j` for `i in 0..=nx`;
//! - the y-velocity lives on y-faces, `v(i, j) = n_u + i * (ny + 1) + j`.
//!
//! Boundary faces carry half of a cell's area in the inner product, so the
//! discrete Laplacian and the gradient/divergence pair are symmetric and
//! adjoint with respect to it.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryTag {
    Inlet,
    Wall,
    Outlet(usize),
}

impl BoundaryTag {
    /// Inlet and wall edges prescribe the velocity; outlets leave it free.
    pub fn is_velocity_dirichlet(self) -> bool {
        !matches!(self, BoundaryTag::Outlet(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];
}

#[derive(Clone, Debug, PartialEq)]
pub enum SideTags {
    Uniform(BoundaryTag),
    PerEdge(Vec<BoundaryTag>),
}

/// Boundary tag specification, one entry per side of the rectangle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TagMap {
    sides: HashMap<Side, SideTags>,
}

impl TagMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn side(mut self, side: Side, tags: SideTags) -> Self {
        self.sides.insert(side, tags);
        self
    }

    pub fn uniform(self, side: Side, tag: BoundaryTag) -> Self {
        self.side(side, SideTags::Uniform(tag))
    }

    /// Left inlet, right outlet 0, walls on top and bottom.
    pub fn channel() -> Self {
        TagMap::new()
            .uniform(Side::Left, BoundaryTag::Inlet)
            .uniform(Side::Right, BoundaryTag::Outlet(0))
            .uniform(Side::Bottom, BoundaryTag::Wall)
            .uniform(Side::Top, BoundaryTag::Wall)
    }

    fn resolve(&self, side: Side, count: usize) -> Result<Vec<BoundaryTag>> {
        match self.sides.get(&side) {
            None => Err(RomError::Config(format!("no boundary tags for {side:?} side"))),
            Some(SideTags::Uniform(t)) => Ok(vec![*t; count]),
            Some(SideTags::PerEdge(v)) if v.len() == count => Ok(v.clone()),
            Some(SideTags::PerEdge(v)) => Err(RomError::Config(format!(
                "{side:?} side has {} edge tags, expected {count}",
                v.len()
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    lx: f64,
    ly: f64,
    hx: f64,
    hy: f64,
    left: Vec<BoundaryTag>,
    right: Vec<BoundaryTag>,
    bottom: Vec<BoundaryTag>,
    top: Vec<BoundaryTag>,
    n_outlets: usize,
}

/// Where a velocity unknown sits relative to the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FaceRole {
    Interior,
    /// Normal velocity on an inlet or wall edge: prescribed.
    Dirichlet(BoundaryTag),
    /// Normal velocity on an outlet edge: solved for.
    Outlet(usize),
}

pub fn build_grid(nx: usize, ny: usize, lx: f64, ly: f64, tags: &TagMap) -> Result<Grid> {
    if nx < 3 || ny < 3 {
        return Err(RomError::Config(format!(
            "grid needs at least 3x3 cells, got {nx}x{ny}"
        )));
    }
    if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
        return Err(RomError::Config(format!(
            "domain lengths must be positive, got {lx} x {ly}"
        )));
    }
    let left = tags.resolve(Side::Left, ny)?;
    let right = tags.resolve(Side::Right, ny)?;
    let bottom = tags.resolve(Side::Bottom, nx)?;
    let top = tags.resolve(Side::Top, nx)?;

    let all = || left.iter().chain(&right).chain(&bottom).chain(&top);
    if !all().any(|t| *t == BoundaryTag::Inlet) {
        return Err(RomError::Config("grid has no inlet edge".into()));
    }
    let mut outlet_ids: Vec<usize> = all()
        .filter_map(|t| match t {
            BoundaryTag::Outlet(k) => Some(*k),
            _ => None,
        })
        .collect();
    outlet_ids.sort_unstable();
    outlet_ids.dedup();
    if outlet_ids.is_empty() {
        return Err(RomError::Config("grid has no outlet edge".into()));
    }
    if outlet_ids.iter().enumerate().any(|(i, k)| i != *k) {
        return Err(RomError::Config(format!(
            "outlet indices must be contiguous from 0, got {outlet_ids:?}"
        )));
    }

    Ok(Grid {
        nx,
        ny,
        lx,
        ly,
        hx: lx / nx as f64,
        hy: ly / ny as f64,
        left,
        right,
        bottom,
        top,
        n_outlets: outlet_ids.len(),
    })
}

impl Grid {
    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn lx(&self) -> f64 {
        self.lx
    }
    pub fn ly(&self) -> f64 {
        self.ly
    }
    pub fn hx(&self) -> f64 {
        self.hx
    }
    pub fn hy(&self) -> f64 {
        self.hy
    }
    pub fn n_outlets(&self) -> usize {
        self.n_outlets
    }

    pub fn tags(&self, side: Side) -> &[BoundaryTag] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
            Side::Bottom => &self.bottom,
            Side::Top => &self.top,
        }
    }

    /// The tag map that rebuilds this grid.
    pub fn tag_map(&self) -> TagMap {
        Side::ALL.iter().fold(TagMap::new(), |m, s| {
            m.side(*s, SideTags::PerEdge(self.tags(*s).to_vec()))
        })
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }
    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }
    pub fn n_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }
    pub fn n_vel(&self) -> usize {
        self.n_u() + self.n_v()
    }

    #[inline]
    pub fn cell(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }
    #[inline]
    pub fn u(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }
    #[inline]
    pub fn v(&self, i: usize, j: usize) -> usize {
        self.n_u() + i * (self.ny + 1) + j
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    /// Control-volume area of a velocity unknown.
    pub fn face_weight(&self, idx: usize) -> f64 {
        let full = self.hx * self.hy;
        if idx < self.n_u() {
            let i = idx / self.ny;
            if i == 0 || i == self.nx {
                0.5 * full
            } else {
                full
            }
        } else {
            let j = (idx - self.n_u()) % (self.ny + 1);
            if j == 0 || j == self.ny {
                0.5 * full
            } else {
                full
            }
        }
    }

    pub fn face_role(&self, idx: usize) -> FaceRole {
        let tag = if idx < self.n_u() {
            let (i, j) = (idx / self.ny, idx % self.ny);
            if i == 0 {
                self.left[j]
            } else if i == self.nx {
                self.right[j]
            } else {
                return FaceRole::Interior;
            }
        } else {
            let k = idx - self.n_u();
            let (i, j) = (k / (self.ny + 1), k % (self.ny + 1));
            if j == 0 {
                self.bottom[i]
            } else if j == self.ny {
                self.top[i]
            } else {
                return FaceRole::Interior;
            }
        };
        match tag {
            BoundaryTag::Outlet(k) => FaceRole::Outlet(k),
            t => FaceRole::Dirichlet(t),
        }
    }

    pub fn is_dirichlet_face(&self, idx: usize) -> bool {
        matches!(self.face_role(idx), FaceRole::Dirichlet(_))
    }

    /// Whether the velocity component tangential to `side` is prescribed at
    /// the boundary node `node` (node index runs along the side, 0..=count).
    pub fn tangential_dirichlet(&self, side: Side, node: usize) -> bool {
        let tags = self.tags(side);
        let before = node.checked_sub(1).and_then(|k| tags.get(k));
        let after = tags.get(node);
        before.into_iter().chain(after).any(|t| t.is_velocity_dirichlet())
    }

    /// Boundary edges belonging to outlet `k`: (side, edge index).
    pub fn outlet_edges(&self, k: usize) -> Vec<(Side, usize)> {
        self.edges_with(|t| t == BoundaryTag::Outlet(k))
    }

    pub fn inlet_edges(&self) -> Vec<(Side, usize)> {
        self.edges_with(|t| t == BoundaryTag::Inlet)
    }

    fn edges_with(&self, pred: impl Fn(BoundaryTag) -> bool) -> Vec<(Side, usize)> {
        Side::ALL
            .iter()
            .flat_map(|s| {
                self.tags(*s)
                    .iter()
                    .enumerate()
                    .filter(|(_, t)| pred(**t))
                    .map(move |(e, _)| (*s, e))
            })
            .collect()
    }

    /// Length of a boundary edge on the given side.
    pub fn edge_length(&self, side: Side) -> f64 {
        match side {
            Side::Left | Side::Right => self.hy,
            Side::Bottom | Side::Top => self.hx,
        }
    }

    /// Velocity index of the normal face on a boundary edge and the sign
    /// that turns the stored component into the outward normal velocity.
    pub fn boundary_face(&self, side: Side, edge: usize) -> (usize, f64) {
        match side {
            Side::Left => (self.u(0, edge), -1.0),
            Side::Right => (self.u(self.nx, edge), 1.0),
            Side::Bottom => (self.v(edge, 0), -1.0),
            Side::Top => (self.v(edge, self.ny), 1.0),
        }
    }

    /// Cell adjacent to a boundary edge.
    pub fn boundary_cell(&self, side: Side, edge: usize) -> usize {
        match side {
            Side::Left => self.cell(0, edge),
            Side::Right => self.cell(self.nx - 1, edge),
            Side::Bottom => self.cell(edge, 0),
            Side::Top => self.cell(edge, self.ny - 1),
        }
    }

    /// Total area of outlet `k`.
    pub fn outlet_area(&self, k: usize) -> f64 {
        self.outlet_edges(k).iter().map(|(s, _)| self.edge_length(*s)).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FieldKind {
    Scalar,
    Vector2,
}

/// Discrete field on a grid in the staggered layout.
#[derive(Clone, Debug)]
pub struct Field {
    kind: FieldKind,
    values: Vec<f64>,
    grid: Arc<Grid>,
}

impl PartialEq for Field {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && same_grid(&self.grid, &other.grid) && self.values == other.values
    }
}

pub fn same_grid(a: &Arc<Grid>, b: &Arc<Grid>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

pub fn layout_len(grid: &Grid, kind: FieldKind) -> usize {
    match kind {
        FieldKind::Scalar => grid.n_cells(),
        FieldKind::Vector2 => grid.n_vel(),
    }
}

impl Field {
    pub fn new(grid: Arc<Grid>, kind: FieldKind, values: Vec<f64>) -> Result<Field> {
        let expected = layout_len(&grid, kind);
        if values.len() != expected {
            return Err(RomError::Shape(format!(
                "{kind:?} field needs {expected} values, got {}",
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|x| !x.is_finite()) {
            return Err(RomError::Numerical(format!("non-finite field value at index {k}")));
        }
        Ok(Field { kind, values, grid })
    }

    pub fn zeros(grid: Arc<Grid>, kind: FieldKind) -> Field {
        let n = layout_len(&grid, kind);
        Field {
            kind,
            values: vec![0.0; n],
            grid,
        }
    }

    pub fn constant(grid: Arc<Grid>, kind: FieldKind, value: f64) -> Field {
        let mut f = Field::zeros(grid, kind);
        f.values.iter_mut().for_each(|x| *x = value);
        f
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// self += alpha * other. Layouts must match.
    pub fn axpy(&mut self, alpha: f64, other: &Field) {
        debug_assert_eq!(self.values.len(), other.values.len());
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.values.iter_mut().for_each(|x| *x *= alpha);
    }

    pub fn scaled(&self, alpha: f64) -> Field {
        let mut f = self.clone();
        f.scale(alpha);
        f
    }

    pub fn zeros_like(&self) -> Field {
        Field::zeros(self.grid.clone(), self.kind)
    }

    fn check_compatible(&self, other: &Field) -> Result<()> {
        if self.kind != other.kind {
            return Err(RomError::Shape(format!(
                "field kinds differ: {:?} vs {:?}",
                self.kind, other.kind
            )));
        }
        if !same_grid(&self.grid, &other.grid) {
            return Err(RomError::Shape("fields live on different grids".into()));
        }
        Ok(())
    }
}

/// Discrete L² inner product (control-volume weighted sum).
pub fn inner_product(f: &Field, g: &Field) -> Result<f64> {
    f.check_compatible(g)?;
    Ok(weighted_dot(&f.grid, f.kind, &f.values, &g.values))
}

pub fn l2_norm(f: &Field) -> f64 {
    weighted_dot(&f.grid, f.kind, &f.values, &f.values).sqrt()
}

/// Inner product on raw layout vectors; the summation order is the index order.
pub fn weighted_dot(grid: &Grid, kind: FieldKind, a: &[f64], b: &[f64]) -> f64 {
    match kind {
        FieldKind::Scalar => {
            let w = grid.cell_area();
            a.iter().zip(b).map(|(x, y)| x * y * w).sum()
        }
        FieldKind::Vector2 => a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| x * y * grid.face_weight(k))
            .sum(),
    }
}

/// Boundary data and provenance carried alongside a snapshot set.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct SnapshotMeta {
    pub nu: f64,
    pub waveform: String,
    /// Inlet velocity multiplier u_D(t) per snapshot.
    pub inlet_velocity: Vec<f64>,
    /// Outlet boundary pressure per outlet, per snapshot: `[outlet][time]`.
    pub outlet_pressure: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotSet {
    pub times: Vec<f64>,
    pub velocity: Vec<Field>,
    pub pressure: Vec<Field>,
    pub meta: SnapshotMeta,
}

impl SnapshotSet {
    pub fn new(times: Vec<f64>, velocity: Vec<Field>, pressure: Vec<Field>, meta: SnapshotMeta) -> Result<SnapshotSet> {
        let set = SnapshotSet {
            times,
            velocity,
            pressure,
            meta,
        };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.times.len();
        if m == 0 {
            return Err(RomError::Shape("snapshot set is empty".into()));
        }
        if self.velocity.len() != m || self.pressure.len() != m {
            return Err(RomError::Shape(format!(
                "{} times, {} velocity and {} pressure snapshots",
                m,
                self.velocity.len(),
                self.pressure.len()
            )));
        }
        if self.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(RomError::Shape("snapshot times must be strictly increasing".into()));
        }
        if self.meta.inlet_velocity.len() != m || self.meta.outlet_pressure.iter().any(|s| s.len() != m) {
            return Err(RomError::Shape("boundary samples not aligned with times".into()));
        }
        let grid = self.velocity[0].grid();
        if self.meta.outlet_pressure.len() != grid.n_outlets() {
            return Err(RomError::Shape(format!(
                "{} outlet pressure series for {} outlets",
                self.meta.outlet_pressure.len(),
                grid.n_outlets()
            )));
        }
        for f in self.velocity.iter() {
            if f.kind() != FieldKind::Vector2 || !same_grid(f.grid(), grid) {
                return Err(RomError::Shape("velocity snapshot kind or grid mismatch".into()));
            }
        }
        for f in self.pressure.iter() {
            if f.kind() != FieldKind::Scalar || !same_grid(f.grid(), grid) {
                return Err(RomError::Shape("pressure snapshot kind or grid mismatch".into()));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.velocity[0].grid()
    }

    /// Keep every `stride`-th snapshot starting from the first.
    pub fn subsample(&self, stride: usize) -> SnapshotSet {
        let keep: Vec<usize> = (0..self.len()).step_by(stride.max(1)).collect();
        self.select(&keep)
    }

    pub fn select(&self, idx: &[usize]) -> SnapshotSet {
        SnapshotSet {
            times: idx.iter().map(|&k| self.times[k]).collect(),
            velocity: idx.iter().map(|&k| self.velocity[k].clone()).collect(),
            pressure: idx.iter().map(|&k| self.pressure[k].clone()).collect(),
            meta: SnapshotMeta {
                nu: self.meta.nu,
                waveform: self.meta.waveform.clone(),
                inlet_velocity: idx.iter().map(|&k| self.meta.inlet_velocity[k]).collect(),
                outlet_pressure: self
                    .meta
                    .outlet_pressure
                    .iter()
                    .map(|s| idx.iter().map(|&k| s[k]).collect())
                    .collect(),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn channel(nx: usize, ny: usize, lx: f64, ly: f64) -> Arc<Grid> {
        Arc::new(build_grid(nx, ny, lx, ly, &TagMap::channel()).unwrap())
    }

    fn random_field(g: &Arc<Grid>, kind: FieldKind, rng: &mut ChaCha8Rng) -> Field {
        let n = layout_len(g, kind);
        Field::new(g.clone(), kind, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn spacing_is_derived() {
        let g = build_grid(3, 3, 1.0, 1.0, &TagMap::channel()).unwrap();
        assert_eq!(g.hx(), 1.0 / 3.0);
        assert_eq!(g.hy(), 1.0 / 3.0);
        let g = build_grid(64, 16, 2.0, 0.5, &TagMap::channel()).unwrap();
        assert_eq!(g.hx(), 0.03125);
        assert_eq!(g.hy(), 0.03125);
    }

    #[test]
    fn missing_side_is_config_error() {
        let tags = TagMap::new()
            .uniform(Side::Left, BoundaryTag::Inlet)
            .uniform(Side::Right, BoundaryTag::Outlet(0))
            .uniform(Side::Bottom, BoundaryTag::Wall);
        assert!(matches!(build_grid(3, 3, 1.0, 1.0, &tags), Err(RomError::Config(_))));
    }

    #[test]
    fn rejects_small_or_degenerate_grids() {
        assert!(build_grid(2, 3, 1.0, 1.0, &TagMap::channel()).is_err());
        assert!(build_grid(3, 3, 0.0, 1.0, &TagMap::channel()).is_err());
        let no_outlet = TagMap::channel().uniform(Side::Right, BoundaryTag::Wall);
        assert!(build_grid(3, 3, 1.0, 1.0, &no_outlet).is_err());
        let bad_edges = TagMap::channel().side(Side::Top, SideTags::PerEdge(vec![BoundaryTag::Wall]));
        assert!(build_grid(3, 3, 1.0, 1.0, &bad_edges).is_err());
    }

    #[test]
    fn unit_constant_has_unit_norm() {
        for n in [3, 5, 8] {
            let g = channel(n, n, 1.0, 1.0);
            let one = Field::constant(g.clone(), FieldKind::Scalar, 1.0);
            assert!((inner_product(&one, &one).unwrap() - 1.0).abs() < 1e-14);
            assert!((l2_norm(&one) - 1.0).abs() < 1e-14);
            let onev = Field::constant(g, FieldKind::Vector2, 1.0);
            // two components, each integrating to the domain area
            assert!((l2_norm(&onev).powi(2) - 2.0).abs() < 1e-14);
        }
        let zero = Field::zeros(channel(4, 4, 1.0, 1.0), FieldKind::Scalar);
        assert_eq!(l2_norm(&zero), 0.0);
    }

    #[test]
    fn mirrored_antisymmetric_field_is_orthogonal() {
        let g = channel(4, 4, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        // integer samples keep every partial sum exact
        let ints = (0..16).map(|_| rng.gen_range(-8..=8) as f64).collect();
        let base = Field::new(g.clone(), FieldKind::Scalar, ints).unwrap();
        // f symmetric in x, h antisymmetric in x
        let mut f = Field::zeros(g.clone(), FieldKind::Scalar);
        let mut h = Field::zeros(g.clone(), FieldKind::Scalar);
        for i in 0..4 {
            for j in 0..4 {
                let a = base.values()[g.cell(i, j)];
                let b = base.values()[g.cell(3 - i, j)];
                f.values_mut()[g.cell(i, j)] = a + b;
                h.values_mut()[g.cell(i, j)] = a - b;
            }
        }
        assert_eq!(inner_product(&f, &h).unwrap().abs(), 0.0);
    }

    #[test]
    fn inner_product_matches_summation_oracle() {
        let g = channel(4, 4, 1.3, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in [FieldKind::Scalar, FieldKind::Vector2] {
            let f = random_field(&g, kind, &mut rng);
            let h = random_field(&g, kind, &mut rng);
            let mut oracle = 0.0;
            let area = g.hx() * g.hy();
            match kind {
                FieldKind::Scalar => {
                    for i in 0..4 {
                        for j in 0..4 {
                            let k = g.cell(i, j);
                            oracle += f.values()[k] * h.values()[k] * area;
                        }
                    }
                }
                FieldKind::Vector2 => {
                    for i in 0..=4 {
                        for j in 0..4 {
                            let k = g.u(i, j);
                            let w = if i == 0 || i == 4 { 0.5 } else { 1.0 };
                            oracle += w * area * f.values()[k] * h.values()[k];
                        }
                    }
                    for i in 0..4 {
                        for j in 0..=4 {
                            let k = g.v(i, j);
                            let w = if j == 0 || j == 4 { 0.5 } else { 1.0 };
                            oracle += w * area * f.values()[k] * h.values()[k];
                        }
                    }
                }
            }
            assert!((inner_product(&f, &h).unwrap() - oracle).abs() < 1e-14);
        }
    }

    #[test]
    fn norm_is_homogeneous() {
        let g = channel(4, 4, 1.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f = random_field(&g, FieldKind::Vector2, &mut rng);
        let direct = l2_norm(&f.scaled(-2.5));
        assert!((direct - 2.5 * l2_norm(&f)).abs() < 1e-13 * direct);
    }

    #[test]
    fn mismatched_fields_are_rejected() {
        let g = channel(4, 4, 1.0, 1.0);
        let a = Field::zeros(g.clone(), FieldKind::Scalar);
        let b = Field::zeros(g, FieldKind::Vector2);
        assert!(matches!(inner_product(&a, &b), Err(RomError::Shape(_))));
        let c = Field::zeros(channel(5, 4, 1.0, 1.0), FieldKind::Scalar);
        assert!(matches!(inner_product(&a, &c), Err(RomError::Shape(_))));
        assert!(Field::new(channel(4, 4, 1.0, 1.0), FieldKind::Scalar, vec![0.0; 3]).is_err());
        assert!(Field::new(channel(3, 3, 1.0, 1.0), FieldKind::Scalar, vec![f64::NAN; 9]).is_err());
    }

    #[test]
    fn face_roles_on_channel() {
        let g = channel(4, 3, 1.0, 1.0);
        assert_eq!(g.face_role(g.u(0, 1)), FaceRole::Dirichlet(BoundaryTag::Inlet));
        assert_eq!(g.face_role(g.u(4, 1)), FaceRole::Outlet(0));
        assert_eq!(g.face_role(g.u(2, 1)), FaceRole::Interior);
        assert_eq!(g.face_role(g.v(1, 0)), FaceRole::Dirichlet(BoundaryTag::Wall));
        assert_eq!(g.face_role(g.v(1, 3)), FaceRole::Dirichlet(BoundaryTag::Wall));
        assert!((g.outlet_area(0) - 1.0).abs() < 1e-15);
        assert!(g.tangential_dirichlet(Side::Bottom, 4));
        assert!(!g.tangential_dirichlet(Side::Right, 1));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn vals(n: usize) -> impl Strategy<Value = Vec<f64>> {
            proptest::collection::vec(-10.0..10.0f64, n)
        }

        proptest! {
            #[test]
            fn bilinear_symmetric_triangle(a in vals(40), b in vals(40), c in vals(40),
                                           alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
                let g = channel(4, 4, 1.0, 0.5);
                let f = Field::new(g.clone(), FieldKind::Vector2, a).unwrap();
                let h = Field::new(g.clone(), FieldKind::Vector2, b).unwrap();
                let k = Field::new(g.clone(), FieldKind::Vector2, c).unwrap();
                prop_assert_eq!(inner_product(&f, &h).unwrap(), inner_product(&h, &f).unwrap());

                let mut comb = f.scaled(alpha);
                comb.axpy(beta, &k);
                let lhs = inner_product(&comb, &h).unwrap();
                let rhs = alpha * inner_product(&f, &h).unwrap() + beta * inner_product(&k, &h).unwrap();
                let scale = (alpha.abs() * l2_norm(&f) + beta.abs() * l2_norm(&k)) * l2_norm(&h) + 1e-300;
                prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);

                let mut sum = f.clone();
                sum.axpy(1.0, &h);
                prop_assert!(l2_norm(&sum) <= (l2_norm(&f) + l2_norm(&h)) * (1.0 + 1e-12));
                prop_assert!(inner_product(&f, &f).unwrap() >= 0.0);
            }
        }
    }
}
