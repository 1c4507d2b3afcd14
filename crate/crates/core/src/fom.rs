//! Desk-scale full-order model: unsteady incompressible Navier–Stokes on a
//! staggered grid, pulsatile inlet, no-slip walls and Windkessel outlets.
//!
//! Each step solves the coupled system
//!
//! ```text
//! (I/dt - nu L) u' + G p' = u/dt - N(u) - g_b p_b
//!                 D u'    = 0
//! ```
//!
//! with explicit convection and the outlet pressures `p_b` advanced from the
//! previous step's outlet flow. The constant matrix is factored once.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::grid::{build_grid, l2_norm, Field, FieldKind, Grid, SnapshotMeta, SnapshotSet, TagMap};
use crate::linalg::{BandLu, BandMatrix};
use crate::ops::{inlet_trace, outlet_flow, InletProfile, Operators};
use crate::windkessel::{wk_step, WindkesselParams, WindkesselState};

/// Inlet velocity multiplier u_D(t).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Waveform {
    /// Half-sine systole of fraction `alpha` of the period, zero in diastole.
    Pulsatile {
        u_sys: f64,
        period: f64,
        alpha: f64,
    },
    Constant {
        u: f64,
    },
}

impl Waveform {
    pub fn value(&self, t: f64) -> f64 {
        match *self {
            Waveform::Pulsatile { u_sys, period, alpha } => {
                let tau = t.rem_euclid(period);
                if tau < alpha * period {
                    u_sys * (std::f64::consts::PI * tau / (alpha * period)).sin()
                } else {
                    0.0
                }
            }
            Waveform::Constant { u } => u,
        }
    }

    pub fn peak(&self) -> f64 {
        match *self {
            Waveform::Pulsatile { u_sys, .. } => u_sys.abs(),
            Waveform::Constant { u } => u.abs(),
        }
    }

    pub fn period(&self) -> Option<f64> {
        match *self {
            Waveform::Pulsatile { period, .. } => Some(period),
            Waveform::Constant { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Waveform::Pulsatile { u_sys, period, alpha } => {
                if !(period > 0.0) {
                    return Err(RomError::Config(format!(
                        "waveform period must be positive, got {period}"
                    )));
                }
                if !(alpha > 0.0 && alpha <= 1.0) {
                    return Err(RomError::Config(format!(
                        "systole fraction must be in (0, 1], got {alpha}"
                    )));
                }
                if !(u_sys >= 0.0 && u_sys.is_finite()) {
                    return Err(RomError::Config(format!(
                        "systolic velocity must be nonnegative, got {u_sys}"
                    )));
                }
            }
            Waveform::Constant { u } if !u.is_finite() => {
                return Err(RomError::Config("constant inlet velocity must be finite".into()))
            }
            Waveform::Constant { .. } => {}
        }
        Ok(())
    }

    pub fn describe(&self) -> String {
        match *self {
            Waveform::Pulsatile { u_sys, period, alpha } => {
                format!("pulsatile u_sys={u_sys} period={period} alpha={alpha}")
            }
            Waveform::Constant { u } => format!("constant u={u}"),
        }
    }
}

pub fn inlet_profile(t: f64, waveform: &Waveform) -> f64 {
    waveform.value(t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FomConfig {
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub tags: TagMap,
    pub nu: f64,
    pub dt: f64,
    pub t0: f64,
    pub t_end: f64,
    /// First recorded time; snapshots before it are discarded.
    pub record_start: f64,
    /// Record every `stride`-th step after `record_start`.
    pub stride: usize,
    pub waveform: Waveform,
    pub profile: InletProfile,
    pub windkessel: Vec<WindkesselParams>,
    pub convection: bool,
}

impl Default for FomConfig {
    fn default() -> Self {
        FomConfig {
            nx: 64,
            ny: 16,
            lx: 2.0,
            ly: 0.5,
            tags: TagMap::channel(),
            nu: 2.5e-3,
            dt: 0.005,
            t0: 0.0,
            t_end: 1.8,
            record_start: 1.2,
            stride: 2,
            waveform: Waveform::Pulsatile {
                u_sys: 0.5,
                period: 0.6,
                alpha: 0.4,
            },
            profile: InletProfile::Plug,
            windkessel: vec![WindkesselParams {
                rp: 0.4,
                rd: 4.0,
                c: 0.0625,
                pd: 0.0,
            }],
            convection: true,
        }
    }
}

impl FomConfig {
    pub fn build_grid(&self) -> Result<Grid> {
        build_grid(self.nx, self.ny, self.lx, self.ly, &self.tags)
    }

    /// Number of time steps from `t0` to `t_end`.
    pub fn n_steps(&self) -> usize {
        ((self.t_end - self.t0) / self.dt).round() as usize
    }

    pub fn first_recorded_step(&self) -> usize {
        (((self.record_start - self.t0) / self.dt).round().max(0.0)) as usize
    }

    pub fn time_of(&self, step: usize) -> f64 {
        self.t0 + step as f64 * self.dt
    }

    pub fn is_recorded(&self, step: usize) -> bool {
        let first = self.first_recorded_step();
        step >= first && (step - first).is_multiple_of(self.stride.max(1))
    }

    pub fn validate(&self) -> Result<Grid> {
        let grid = self.build_grid()?;
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(RomError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t0 < self.t_end) {
            return Err(RomError::Config(format!(
                "start time {} must precede end time {}",
                self.t0, self.t_end
            )));
        }
        if !(self.record_start >= self.t0 && self.record_start <= self.t_end) {
            return Err(RomError::Config(format!(
                "record start {} outside [{}, {}]",
                self.record_start, self.t0, self.t_end
            )));
        }
        if self.stride == 0 {
            return Err(RomError::Config("snapshot stride must be at least 1".into()));
        }
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return Err(RomError::Config(format!("viscosity must be positive, got {}", self.nu)));
        }
        self.waveform.validate()?;
        let h = grid.hx().min(grid.hy());
        let cfl = self.waveform.peak() * self.dt / h;
        if cfl >= 1.0 {
            return Err(RomError::Config(format!(
                "CFL estimate {cfl:.3} >= 1 (peak {}, dt {}, h {h})",
                self.waveform.peak(),
                self.dt
            )));
        }
        if self.windkessel.len() != grid.n_outlets() {
            return Err(RomError::Config(format!(
                "{} Windkessel parameter sets for {} outlets",
                self.windkessel.len(),
                grid.n_outlets()
            )));
        }
        for (k, wk) in self.windkessel.iter().enumerate() {
            WindkesselParams::new(wk.rp, wk.rd, wk.c)?;
            if self.dt >= wk.time_constant() {
                return Err(RomError::Config(format!(
                    "dt {} not below Rd*C = {} on outlet {k}",
                    self.dt,
                    wk.time_constant()
                )));
            }
        }
        Ok(grid)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FomState {
    pub velocity: Field,
    pub pressure: Field,
    pub windkessel: Vec<WindkesselState>,
    pub t: f64,
}

impl FomState {
    /// Fluid at rest with the inlet condition of time `t`.
    pub fn rest(solver: &FomSolver, t: f64) -> FomState {
        let g = solver.grid.clone();
        let ud = solver.cfg.waveform.value(t);
        let vel: Vec<f64> = solver.trace.iter().map(|x| x * ud).collect();
        FomState {
            velocity: Field::new(g.clone(), FieldKind::Vector2, vel).expect("finite trace"),
            pressure: Field::zeros(g.clone(), FieldKind::Scalar),
            windkessel: vec![WindkesselState { pp: 0.0, p: 0.0, t }; g.n_outlets()],
            t,
        }
    }

    pub fn outlet_pressures(&self) -> Vec<f64> {
        self.windkessel.iter().map(|w| w.p).collect()
    }
}

/// Unknown numbering of the coupled system, grouped by grid column.
struct Layout {
    ny: usize,
    block: usize,
}

impl Layout {
    fn u(&self, i: usize, j: usize) -> usize {
        i * self.block + j
    }
    fn v(&self, i: usize, j: usize) -> usize {
        i * self.block + self.ny + j
    }
    fn p(&self, i: usize, j: usize) -> usize {
        i * self.block + 2 * self.ny + 1 + j
    }
}

pub struct FomSolver {
    pub cfg: FomConfig,
    pub grid: Arc<Grid>,
    pub ops: Operators,
    /// Unit inlet trace, scaled by u_D(t) on the inlet faces.
    pub trace: Vec<f64>,
    lu: BandLu,
    vel_pos: Vec<usize>,
    p_pos: Vec<usize>,
}

impl FomSolver {
    pub fn new(cfg: FomConfig) -> Result<FomSolver> {
        let grid = Arc::new(cfg.validate()?);
        let ops = Operators::new(grid.clone());
        let trace = inlet_trace(&grid, cfg.profile);
        let g = &*grid;
        let (nx, ny) = (g.nx(), g.ny());
        let lay = Layout { ny, block: 3 * ny + 1 };
        let mut vel_pos = vec![0; g.n_vel()];
        for i in 0..=nx {
            for j in 0..ny {
                vel_pos[g.u(i, j)] = lay.u(i, j);
            }
        }
        for i in 0..nx {
            for j in 0..=ny {
                vel_pos[g.v(i, j)] = lay.v(i, j);
            }
        }
        let mut p_pos = vec![0; g.n_cells()];
        for i in 0..nx {
            for j in 0..ny {
                p_pos[g.cell(i, j)] = lay.p(i, j);
            }
        }
        let n = g.n_vel() + g.n_cells();

        let mut entries: Vec<(usize, usize, f64)> = Vec::new();
        let idt = 1.0 / cfg.dt;
        for idx in 0..g.n_vel() {
            let r = vel_pos[idx];
            if g.is_dirichlet_face(idx) {
                entries.push((r, r, 1.0));
                continue;
            }
            entries.push((r, r, idt));
            for (c, val) in ops.lap.row(idx) {
                entries.push((r, vel_pos[c], -cfg.nu * val));
            }
            for (c, val) in ops.grad.row(idx) {
                entries.push((r, p_pos[c], val));
            }
        }
        for c in 0..g.n_cells() {
            let r = p_pos[c];
            for (col, val) in ops.div.row(c) {
                entries.push((r, vel_pos[col], val));
            }
        }
        let kl = entries.iter().map(|&(r, c, _)| r.saturating_sub(c)).max().unwrap_or(0);
        let ku = entries.iter().map(|&(r, c, _)| c.saturating_sub(r)).max().unwrap_or(0);
        let mut band = BandMatrix::zeros(n, kl, ku);
        for (r, c, v) in entries {
            band.add(r, c, v);
        }
        let lu = band
            .factor()
            .map_err(|e| RomError::Numerical(format!("flow system factorization failed: {e}")))?;
        Ok(FomSolver {
            cfg,
            grid,
            ops,
            trace,
            lu,
            vel_pos,
            p_pos,
        })
    }

    pub fn initial_state(&self) -> FomState {
        FomState::rest(self, self.cfg.t0)
    }

    /// Advances one step of size `cfg.dt`.
    pub fn advance(&self, state: &FomState) -> Result<FomState> {
        let g = &*self.grid;
        let cfg = &self.cfg;
        let t_new = state.t + cfg.dt;
        let u = state.velocity.values();

        let mut windkessel = Vec::with_capacity(g.n_outlets());
        for (k, wk) in state.windkessel.iter().enumerate() {
            let q = outlet_flow(g, u, k);
            windkessel.push(wk_step(wk, q, cfg.dt, &cfg.windkessel[k])?);
        }
        let pb: Vec<f64> = windkessel.iter().map(|w| w.p).collect();

        let conv = if cfg.convection {
            self.ops.convection(u, u)
        } else {
            vec![0.0; g.n_vel()]
        };
        let ud = cfg.waveform.value(t_new);
        let idt = 1.0 / cfg.dt;
        let mut rhs = vec![0.0; self.lu.n()];
        for idx in 0..g.n_vel() {
            let r = self.vel_pos[idx];
            rhs[r] = if g.is_dirichlet_face(idx) {
                ud * self.trace[idx]
            } else {
                let mut b = idt * u[idx] - conv[idx];
                for (k, p) in pb.iter().enumerate() {
                    b -= self.ops.grad_outlet[k][idx] * p;
                }
                b
            };
        }
        let x = self.lu.solve(&rhs);
        let vel: Vec<f64> = self.vel_pos.iter().map(|&r| x[r]).collect();
        let pre: Vec<f64> = self.p_pos.iter().map(|&r| x[r]).collect();
        let velocity = Field::new(self.grid.clone(), FieldKind::Vector2, vel)
            .map_err(|_| RomError::Numerical(format!("flow solution became non-finite at t={t_new}")))?;
        let pressure = Field::new(self.grid.clone(), FieldKind::Scalar, pre)
            .map_err(|_| RomError::Numerical(format!("pressure became non-finite at t={t_new}")))?;
        Ok(FomState {
            velocity,
            pressure,
            windkessel,
            t: t_new,
        })
    }

    /// Largest cell divergence of a velocity field.
    pub fn max_divergence(&self, u: &Field) -> f64 {
        self.ops
            .divergence(u.values())
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

pub fn fom_advance(state: &FomState, solver: &FomSolver) -> Result<FomState> {
    solver.advance(state)
}

/// Result of a full-order run.
#[derive(Clone, Debug)]
pub struct FomRun {
    pub snapshots: SnapshotSet,
    /// Outlet pressures at every step from t0: (t, p per outlet).
    pub outlet_series: Vec<(f64, Vec<f64>)>,
    /// Relative L² velocity difference between the final state and the
    /// state one period earlier, when the run spans two periods.
    pub cycle_drift: Option<f64>,
    pub final_state: FomState,
    pub seconds: f64,
}

pub fn fom_run(cfg: &FomConfig) -> Result<FomRun> {
    let solver = FomSolver::new(cfg.clone())?;
    fom_run_with(&solver, solver.initial_state())
}

/// Runs from a given state at `cfg.t0` to `cfg.t_end`.
pub fn fom_run_with(solver: &FomSolver, initial: FomState) -> Result<FomRun> {
    let start = Instant::now();
    let cfg = &solver.cfg;
    let n_steps = cfg.n_steps();
    let period_steps = cfg.waveform.period().map(|p| (p / cfg.dt).round() as usize);
    let drift_step = period_steps.and_then(|ps| n_steps.checked_sub(ps));

    let mut times = Vec::new();
    let mut velocity = Vec::new();
    let mut pressure = Vec::new();
    let mut inlet = Vec::new();
    let mut outlet: Vec<Vec<f64>> = vec![Vec::new(); solver.grid.n_outlets()];
    let mut series = Vec::with_capacity(n_steps + 1);
    let mut earlier: Option<Field> = None;

    let mut state = initial;
    for step in 0..=n_steps {
        if step > 0 {
            state = solver.advance(&state)?;
            // pin the clock to the step grid
            state.t = cfg.time_of(step);
        }
        series.push((state.t, state.outlet_pressures()));
        if Some(step) == drift_step {
            earlier = Some(state.velocity.clone());
        }
        if cfg.is_recorded(step) {
            times.push(state.t);
            velocity.push(state.velocity.clone());
            pressure.push(state.pressure.clone());
            inlet.push(cfg.waveform.value(state.t));
            for (k, w) in state.windkessel.iter().enumerate() {
                outlet[k].push(w.p);
            }
        }
    }
    let cycle_drift = earlier.map(|e| {
        let mut d = state.velocity.clone();
        d.axpy(-1.0, &e);
        l2_norm(&d) / l2_norm(&state.velocity).max(f64::MIN_POSITIVE)
    });
    let snapshots = SnapshotSet::new(
        times,
        velocity,
        pressure,
        SnapshotMeta {
            nu: cfg.nu,
            waveform: cfg.waveform.describe(),
            inlet_velocity: inlet,
            outlet_pressure: outlet,
        },
    )?;
    Ok(FomRun {
        snapshots,
        outlet_series: series,
        cycle_drift,
        final_state: state,
        seconds: start.elapsed().as_secs_f64(),
    })
}
