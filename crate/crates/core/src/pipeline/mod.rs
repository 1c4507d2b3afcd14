//! Offline and online stages, bundle persistence and error reports.

pub mod config;
mod report;

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{NnSettings, PipelineConfig};
pub use report::{compare, matching, time_average, write_report, ErrorRow, RunReport, SweepRow};

use crate::error::{Result, RomError};
use crate::fom::{fom_run, FomConfig, Waveform};
use crate::grid::{Field, Grid, SnapshotSet};
use crate::io;
use crate::lifting::{compute_lifting, homogenize, LiftingPair};
use crate::nn::{nn_train, predict_outflow, NNModel, TrainResult, REFERENCE_HYPERPARAMETERS};
use crate::ops::{InletProfile, Operators};
use crate::pod::{build_basis, correlation_matrix, numerical_rank, symmetric_eig, BasisKind, ReducedBasis};
use crate::rom::{
    assemble_operators, integrate_rom, reconstruct, supremizer_enrich, IntegrationOptions, ReducedOperators,
};

pub const BUNDLE_FORMAT: &str = "romkit-bundle/1";

/// Outlet pressure p_D(t): stored full-order samples where available, the
/// trained networks in between.
#[derive(Clone, Debug, PartialEq)]
pub struct OutletData {
    pub series: Vec<(f64, Vec<f64>)>,
    pub models: Vec<NNModel>,
}

impl OutletData {
    pub fn stored(&self, t: f64) -> Option<&[f64]> {
        let tol = 1e-9 * t.abs().max(1.0);
        let k = self.series.partition_point(|(s, _)| *s < t - tol);
        self.series
            .get(k)
            .filter(|(s, _)| (s - t).abs() <= tol)
            .map(|(_, p)| p.as_slice())
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        match self.stored(t) {
            Some(p) => p.to_vec(),
            None => self.models.iter().map(|m| predict_outflow(m, t).value).collect(),
        }
    }
}

/// Everything needed to evaluate the reduced model.
#[derive(Clone, Debug, PartialEq)]
pub struct RomModel {
    pub lift: LiftingPair,
    /// POD bases with every mode kept offline; the model uses leading parts.
    pub pod_u: ReducedBasis,
    pub pod_p: ReducedBasis,
    /// Velocity space of the model (POD modes plus supremizers).
    pub basis_u: ReducedBasis,
    pub basis_p: ReducedBasis,
    pub ops: ReducedOperators,
    /// Homogenized full-order state at `t_start`, projected for the initial condition.
    pub initial_u: Field,
    pub initial_p: Field,
    pub waveform: Waveform,
    pub outlet: OutletData,
    pub nu: f64,
    pub convection: bool,
    pub supremizers: bool,
    pub pressure_lifting: bool,
    pub t_start: f64,
    pub t_end: f64,
}

impl RomModel {
    pub fn grid(&self) -> &Arc<Grid> {
        self.lift.grid()
    }
    /// POD velocity modes in the model, before enrichment.
    pub fn n_u_pod(&self) -> usize {
        self.ops.n_u - if self.supremizers { self.basis_p.n() } else { 0 }
    }
    pub fn n_p(&self) -> usize {
        self.basis_p.n()
    }
    pub fn velocity_only(&self) -> bool {
        self.basis_p.n() == 0
    }

    /// The same model with `n_u` velocity and `n_p` pressure POD modes.
    pub fn with_modes(&self, n_u: usize, n_p: usize) -> Result<RomModel> {
        if n_u == 0 || n_u > self.pod_u.n() || n_p > self.pod_p.n() {
            return Err(RomError::Rank(format!(
                "requested ({n_u}, {n_p}) modes, the bundle holds ({}, {})",
                self.pod_u.n(),
                self.pod_p.n()
            )));
        }
        let fops = Operators::new(self.grid().clone());
        let bu = self.pod_u.truncated(n_u);
        let bp = self.pod_p.truncated(n_p);
        let basis_u = if self.supremizers {
            supremizer_enrich(&bu, &bp, &fops)?
        } else {
            bu
        };
        let mut ops = assemble_operators(&basis_u, &bp, &self.lift, self.nu, &fops)?;
        if !self.pressure_lifting {
            ops.d5.iter_mut().for_each(|d| d.iter_mut().for_each(|x| *x = 0.0));
        }
        Ok(RomModel {
            basis_u,
            basis_p: bp,
            ops,
            ..self.clone()
        })
    }

    pub fn initial_coefficients(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        Ok((
            self.basis_u.project(&self.initial_u)?,
            self.basis_p.project(&self.initial_p)?,
        ))
    }

    /// Integrates from `t_start` with step at most `dt_r` and reconstructs the
    /// fields at `times`.
    pub fn simulate(&self, times: &[f64], dt_r: f64) -> Result<SnapshotSet> {
        let tol = 1e-9 * self.t_start.abs().max(1.0);
        let first = *times
            .first()
            .ok_or_else(|| RomError::Argument("no query times".into()))?;
        if first < self.t_start - tol {
            return Err(RomError::Argument(format!(
                "query time {first} precedes the reduced model start {}",
                self.t_start
            )));
        }
        let prepend = first > self.t_start + tol;
        let mut all = Vec::with_capacity(times.len() + 1);
        if prepend {
            all.push(self.t_start);
        }
        all.extend_from_slice(times);

        let (a0, b0) = self.initial_coefficients()?;
        let wf = self.waveform;
        let outlet = &self.outlet;
        let bc = (move |t: f64| wf.value(t), move |t: f64| outlet.at(t));
        let opts = IntegrationOptions {
            max_step: dt_r,
            convection: self.convection,
        };
        let mut traj = integrate_rom(&self.ops, &a0, Some(&b0), &all, &bc, opts)?;
        if prepend {
            traj.times.remove(0);
            traj.a.remove(0);
            traj.b.remove(0);
        }
        let ud: Vec<f64> = times.iter().map(|&t| wf.value(t)).collect();
        let n_out = self.lift.n_outlets();
        let mut pd = vec![Vec::with_capacity(times.len()); n_out];
        for &t in times {
            let p = if self.pressure_lifting {
                outlet.at(t)
            } else {
                vec![0.0; n_out]
            };
            for (k, v) in p.into_iter().enumerate() {
                pd[k].push(v);
            }
        }
        let mut set = reconstruct(&self.basis_u, &self.basis_p, &traj, &self.lift, &ud, &pd)?;
        set.meta.nu = self.nu;
        set.meta.waveform = wf.describe();
        Ok(set)
    }

    /// Query grid `t_start + k dt_r` up to `t_end`.
    pub fn default_times(&self, dt_r: f64) -> Vec<f64> {
        let n = ((self.t_end - self.t_start) / dt_r + 1e-9).floor() as usize;
        (0..=n).map(|k| self.t_start + k as f64 * dt_r).collect()
    }
}

/// Median wall time of `reps` calls.
pub fn median_seconds<T>(reps: usize, mut f: impl FnMut() -> Result<T>) -> Result<f64> {
    let mut t = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let s = Instant::now();
        std::hint::black_box(f()?);
        t.push(s.elapsed().as_secs_f64());
    }
    t.sort_by(f64::total_cmp);
    Ok(t[t.len() / 2])
}

/// Result of the offline stage, before anything is written.
#[derive(Clone, Debug)]
pub struct OfflineOutput {
    pub model: RomModel,
    /// Full-order states at every step of the recording window.
    pub reference: SnapshotSet,
    /// Subset used for POD and network training.
    pub training: SnapshotSet,
    pub nn: Vec<TrainResult>,
    pub ranks: (usize, usize),
    pub report: RunReport,
}

fn timed<T>(timings: &mut Vec<(String, f64)>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let s = Instant::now();
    let out = f().map_err(|e| e.at(stage))?;
    timings.push((stage.to_string(), s.elapsed().as_secs_f64()));
    Ok(out)
}

pub fn run_offline(cfg: &PipelineConfig) -> Result<OfflineOutput> {
    cfg.validate()?;
    let mut timings = Vec::new();

    let fom_cfg = FomConfig {
        stride: 1,
        ..cfg.fom.clone()
    };
    let run = timed(&mut timings, "fom", || fom_run(&fom_cfg))?;
    let reference = run.snapshots.clone();
    let training = reference.subsample(cfg.fom.stride);
    let grid = reference.grid().clone();
    let n_out = grid.n_outlets();

    let lift = timed(&mut timings, "lifting", || {
        compute_lifting(grid.clone(), cfg.fom.profile)
    })?;

    let pd_of = |set: &SnapshotSet| -> Vec<Vec<f64>> {
        if cfg.pressure_lifting {
            set.meta.outlet_pressure.clone()
        } else {
            vec![vec![0.0; set.len()]; n_out]
        }
    };
    let (pod_u, pod_p, ranks) = timed(&mut timings, "pod", || {
        let h = homogenize(&training, &training.meta.inlet_velocity, &pd_of(&training), &lift)?;
        let want = cfg.sweep.iter().copied().max().unwrap_or(0);
        let eu = symmetric_eig(&correlation_matrix(&h.velocity)?)?;
        let ep = symmetric_eig(&correlation_matrix(&h.pressure)?)?;
        let (ru, rp) = (numerical_rank(&eu.values), numerical_rank(&ep.values));
        if cfg.modes_u > ru || cfg.modes_p > rp {
            return Err(RomError::Rank(format!(
                "requested ({}, {}) modes but the snapshots have ranks ({ru}, {rp})",
                cfg.modes_u, cfg.modes_p
            )));
        }
        let nu_max = cfg.modes_u.max(want).min(ru);
        let np_max = if cfg.modes_p == 0 {
            0
        } else {
            cfg.modes_p.max(want).min(rp)
        };
        let bu = build_basis(&h.velocity, &eu, nu_max, BasisKind::Velocity)?;
        let bp = if np_max == 0 {
            ReducedBasis {
                kind: BasisKind::Pressure,
                modes: Vec::new(),
                eigenvalues: ep.values.clone(),
                m: h.len(),
            }
        } else {
            build_basis(&h.pressure, &ep, np_max, BasisKind::Pressure)?
        };
        Ok((bu, bp, (ru, rp)))
    })?;

    let nn = timed(&mut timings, "nn", || {
        let ts = &training.times;
        (0..n_out)
            .into_par_iter()
            .map(|k| {
                let model = NNModel::two_hidden(cfg.nn.hidden, cfg.nn.activation, cfg.nn.seed + k as u64)?;
                nn_train(&model, ts, &training.meta.outlet_pressure[k], &cfg.nn.train_config())
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let window_start = reference.times[0];
    let ud0 = [reference.meta.inlet_velocity[0]];
    let pd0: Vec<Vec<f64>> = pd_of(&reference).iter().map(|s| vec![s[0]]).collect();
    let first = reference.select(&[0]);
    let h0 = homogenize(&first, &ud0, &pd0, &lift)?;
    let template = RomModel {
        lift,
        basis_u: pod_u.clone(),
        basis_p: pod_p.clone(),
        pod_u,
        pod_p,
        ops: ReducedOperators::default(),
        initial_u: h0.velocity[0].clone(),
        initial_p: h0.pressure[0].clone(),
        waveform: cfg.fom.waveform,
        outlet: OutletData {
            series: run.outlet_series.clone(),
            models: nn.iter().map(|r| r.model.clone()).collect(),
        },
        nu: cfg.fom.nu,
        convection: cfg.fom.convection,
        supremizers: cfg.supremizers,
        pressure_lifting: cfg.pressure_lifting,
        t_start: window_start,
        t_end: *reference.times.last().unwrap(),
    };
    let model = timed(&mut timings, "operators", || {
        template.with_modes(cfg.modes_u, cfg.modes_p)
    })?;

    let rom = timed(&mut timings, "validation", || {
        model.simulate(&reference.times, cfg.dt_r)
    })?;
    let errors = compare(&reference, &rom, &model)?;
    let rom_seconds = median_seconds(cfg.timing_reps, || model.simulate(&reference.times, cfg.dt_r))?;
    timings.push(("rom_online".into(), rom_seconds));

    let sweep = timed(&mut timings, "sweep", || {
        let mut rows: Vec<SweepRow> = Vec::new();
        for &n in &cfg.sweep {
            let nu_ = n.min(model.pod_u.n());
            let np_ = if cfg.modes_p == 0 { 0 } else { n.min(model.pod_p.n()) };
            if rows.iter().any(|r| r.n_u == nu_ && r.n_p == np_) {
                continue;
            }
            let m = model.with_modes(nu_, np_)?;
            let rows_n = compare(&reference, &m.simulate(&reference.times, cfg.dt_r)?, &m)?;
            rows.push(SweepRow::from_rows(nu_, np_, &rows_n));
        }
        Ok(rows)
    })?;

    let report = RunReport {
        errors,
        sweep,
        spectrum_u: model.pod_u.eigenvalues.clone(),
        spectrum_p: model.pod_p.eigenvalues.clone(),
        fom_seconds: run.seconds,
        rom_seconds,
        timings,
        summary: summary(cfg, &model, ranks, &nn, run.cycle_drift)?,
    };
    Ok(OfflineOutput {
        model,
        reference,
        training,
        nn,
        ranks,
        report,
    })
}

fn summary(
    cfg: &PipelineConfig,
    model: &RomModel,
    ranks: (usize, usize),
    nn: &[TrainResult],
    cycle_drift: Option<f64>,
) -> Result<serde_json::Value> {
    Ok(serde_json::json!({
        "n_u": model.n_u_pod(),
        "n_p": model.n_p(),
        "n_u_enriched": model.ops.n_u,
        "rank_u": ranks.0,
        "rank_p": ranks.1,
        "velocity_only": model.velocity_only(),
        "supremizers": model.supremizers,
        "pressure_lifting": model.pressure_lifting,
        "convection": model.convection,
        "inf_sup": crate::rom::inf_sup_constant(&model.ops)?,
        "cycle_drift": cycle_drift,
        "dt_r": cfg.dt_r,
        "nn": {
            "hidden": cfg.nn.hidden,
            "hidden_layers": 2,
            "activation": cfg.nn.activation,
            "epochs": cfg.nn.epochs,
            "learning_rate": cfg.nn.learning_rate,
            "split": cfg.nn.split,
            "seed": cfg.nn.seed,
            "train_mse": nn.iter().map(|r| r.train_mse).collect::<Vec<_>>(),
            "test_mse": nn.iter().map(|r| r.test_mse).collect::<Vec<_>>(),
            "reference_defaults": REFERENCE_HYPERPARAMETERS,
        },
    }))
}

#[derive(Serialize, Deserialize)]
struct RomFile {
    format: String,
    grid: io::GridRecord,
    nu: String,
    scheme: String,
    n_u: usize,
    n_p: usize,
    n_u_enriched: usize,
    n_outlets: usize,
    velocity_only: bool,
    supremizers: bool,
    pressure_lifting: bool,
    convection: bool,
    t_start: String,
    t_end: String,
    waveform: Waveform,
    profile: InletProfile,
    lifting: String,
    bases: Vec<String>,
    networks: Vec<String>,
}

/// A loaded bundle: the model, the full-order reference and the configuration.
#[derive(Clone, Debug)]
pub struct Bundle {
    pub config: PipelineConfig,
    pub model: RomModel,
    pub reference: SnapshotSet,
    /// Full-order wall time from the offline report, if present.
    pub fom_seconds: Option<f64>,
}

pub fn save_bundle(dir: &Path, cfg: &PipelineConfig, out: &OfflineOutput) -> Result<()> {
    let m = &out.model;
    std::fs::write(dir.join("config.txt"), cfg.to_text())?;
    io::save_lifting(&dir.join("lifting"), &m.lift)?;
    io::save_basis(&dir.join("pod_u"), &m.pod_u)?;
    io::save_basis(&dir.join("pod_p"), &m.pod_p)?;
    io::save_basis(&dir.join("rom_u"), &m.basis_u)?;
    io::save_operators(&dir.join("operators.bin"), &m.ops)?;
    io::write_f64s(&dir.join("initial_u.bin"), m.initial_u.values())?;
    io::write_f64s(&dir.join("initial_p.bin"), m.initial_p.values())?;
    io::write_outlet_pressure_csv(&dir.join("outlet_pressure.csv"), &m.outlet.series)?;
    let mut networks = Vec::new();
    for (k, r) in out.nn.iter().enumerate() {
        let name = format!("nn_{k}.json");
        std::fs::write(dir.join(&name), r.model.to_json()? + "\n")?;
        let mut w = csv::Writer::from_path(dir.join(format!("loss_{k}.csv")))?;
        w.write_record(["epoch", "train_mse", "test_mse"])?;
        for e in &r.history {
            w.write_record([e.epoch.to_string(), io::dec(e.train_mse), io::dec(e.test_mse)])?;
        }
        w.flush()?;
        networks.push(name);
    }
    io::save_snapshots(&dir.join("reference"), &out.reference)?;
    let rom = RomFile {
        format: BUNDLE_FORMAT.into(),
        grid: io::GridRecord::of(m.grid()),
        nu: io::dec(m.nu),
        scheme: "semi-implicit Euler: implicit diffusion and pressure, explicit convection".into(),
        n_u: m.n_u_pod(),
        n_p: m.n_p(),
        n_u_enriched: m.ops.n_u,
        n_outlets: m.lift.n_outlets(),
        velocity_only: m.velocity_only(),
        supremizers: m.supremizers,
        pressure_lifting: m.pressure_lifting,
        convection: m.convection,
        t_start: io::dec(m.t_start),
        t_end: io::dec(m.t_end),
        waveform: m.waveform,
        profile: m.lift.profile,
        lifting: "lifting".into(),
        bases: vec!["pod_u".into(), "pod_p".into(), "rom_u".into()],
        networks,
    };
    std::fs::write(dir.join("rom.json"), serde_json::to_string_pretty(&rom)? + "\n")?;
    write_report(&dir.join("report"), &out.report)
}

/// Runs the offline stage and writes the bundle; the target directory is
/// replaced only when every stage succeeded.
pub fn offline(cfg: &PipelineConfig, bundle: &Path) -> Result<OfflineOutput> {
    let out = run_offline(cfg)?;
    io::write_dir_atomically(bundle, |dir| save_bundle(dir, cfg, &out).map_err(|e| e.at("write")))?;
    Ok(out)
}

pub fn load_bundle(dir: &Path) -> Result<Bundle> {
    let path = dir.join("rom.json");
    let text = std::fs::read_to_string(&path).map_err(|e| RomError::Format(format!("{}: {e}", path.display())))?;
    let rom: RomFile = serde_json::from_str(&text).map_err(|e| RomError::Format(format!("{}: {e}", path.display())))?;
    if rom.format != BUNDLE_FORMAT {
        return Err(RomError::Format(format!(
            "bundle format {:?}, this build reads {BUNDLE_FORMAT:?}",
            rom.format
        )));
    }
    let config = PipelineConfig::from_text(
        &std::fs::read_to_string(dir.join("config.txt"))?,
        Some(dir.to_path_buf()),
    )?;
    let grid = Arc::new(rom.grid.build()?);
    let lift = io::load_lifting(&dir.join(&rom.lifting), &grid)?;
    let pod_u = io::load_basis(&dir.join("pod_u"), &grid)?;
    let pod_p = io::load_basis(&dir.join("pod_p"), &grid)?;
    let basis_u = io::load_basis(&dir.join("rom_u"), &grid)?;
    let ops = io::load_operators(&dir.join("operators.bin"))?;
    if ops.n_u != basis_u.n() || ops.n_p != rom.n_p || rom.n_p > pod_p.n() {
        return Err(RomError::Format("operators do not match the stored bases".into()));
    }
    let read_field = |name: &str, kind| -> Result<Field> {
        let len = crate::grid::layout_len(&grid, kind);
        Field::new(grid.clone(), kind, io::read_f64s(&dir.join(name), len)?)
    };
    let models = rom
        .networks
        .iter()
        .map(|n| NNModel::from_json(&std::fs::read_to_string(dir.join(n))?))
        .collect::<Result<Vec<_>>>()?;
    let model = RomModel {
        basis_p: pod_p.truncated(rom.n_p),
        lift,
        pod_u,
        pod_p,
        basis_u,
        ops,
        initial_u: read_field("initial_u.bin", crate::grid::FieldKind::Vector2)?,
        initial_p: read_field("initial_p.bin", crate::grid::FieldKind::Scalar)?,
        waveform: rom.waveform,
        outlet: OutletData {
            series: io::read_outlet_pressure_csv(&dir.join("outlet_pressure.csv"))?,
            models,
        },
        nu: io::parse_dec(&rom.nu)?,
        convection: rom.convection,
        supremizers: rom.supremizers,
        pressure_lifting: rom.pressure_lifting,
        t_start: io::parse_dec(&rom.t_start)?,
        t_end: io::parse_dec(&rom.t_end)?,
    };
    let reference = io::load_snapshots(&dir.join("reference"))?;
    Ok(Bundle {
        config,
        model,
        reference,
        fom_seconds: report::read_fom_seconds(&dir.join("report")),
    })
}

#[derive(Clone, Debug, Default)]
pub struct OnlineRequest {
    /// Explicit query times; default: the window at step `dt_r`.
    pub times: Option<Vec<f64>>,
    pub dt_r: Option<f64>,
    /// Velocity and pressure POD modes; default: the bundle's.
    pub modes: Option<(usize, usize)>,
    /// Pressure fields are wanted; refused by velocity-only bundles.
    pub pressure: bool,
}

#[derive(Clone, Debug)]
pub struct OnlineOutput {
    pub set: SnapshotSet,
    /// Errors at the query times that coincide with reference times.
    pub report: RunReport,
}

pub fn run_online(bundle: &Bundle, req: &OnlineRequest) -> Result<OnlineOutput> {
    let base = &bundle.model;
    if req.pressure && base.velocity_only() {
        return Err(RomError::Argument(
            "this bundle is velocity-only and cannot answer pressure queries".into(),
        ));
    }
    let model = match req.modes {
        Some((nu_, np_)) if (nu_, np_) != (base.n_u_pod(), base.n_p()) => base.with_modes(nu_, np_)?,
        _ => base.clone(),
    };
    let dt_r = req.dt_r.unwrap_or(bundle.config.dt_r);
    if !(dt_r > 0.0) {
        return Err(RomError::Argument(format!("dt_r must be positive, got {dt_r}")));
    }
    let times = req.times.clone().unwrap_or_else(|| model.default_times(dt_r));
    let limit = model.t_end + 0.1 * (model.t_end - model.t_start);
    if let Some(&t) = times.iter().find(|&&t| t > limit + 1e-12) {
        return Err(RomError::Argument(format!(
            "query time {t} lies more than 10% beyond the training window ending at {}",
            model.t_end
        )));
    }
    let set = model.simulate(&times, dt_r)?;
    let seconds = median_seconds(bundle.config.timing_reps, || model.simulate(&times, dt_r))?;

    let (ri, qi) = report::matching(&bundle.reference.times, &set.times);
    let errors = if ri.is_empty() {
        Vec::new()
    } else {
        compare(&bundle.reference.select(&ri), &set.select(&qi), &model)?
    };
    let fom_seconds = bundle.fom_seconds.unwrap_or(f64::NAN);
    let report = RunReport {
        errors,
        sweep: Vec::new(),
        spectrum_u: model.pod_u.eigenvalues.clone(),
        spectrum_p: model.pod_p.eigenvalues.clone(),
        fom_seconds,
        rom_seconds: seconds,
        timings: vec![("rom_online".into(), seconds)],
        summary: serde_json::json!({
            "n_u": model.n_u_pod(),
            "n_p": model.n_p(),
            "dt_r": dt_r,
            "query_times": times.len(),
            "compared_times": ri.len(),
        }),
    };
    Ok(OnlineOutput { set, report })
}

pub fn online(bundle_dir: &Path, req: &OnlineRequest, out: &Path) -> Result<OnlineOutput> {
    let bundle = load_bundle(bundle_dir)?;
    let result = run_online(&bundle, req)?;
    io::write_dir_atomically(out, |dir| {
        io::save_snapshots(&dir.join("rom"), &result.set)?;
        write_report(dir, &result.report)
    })?;
    Ok(result)
}

/// Runs the full-order model alone and writes its snapshots.
pub fn fom_only(cfg: &PipelineConfig, out: &Path) -> Result<crate::fom::FomRun> {
    let run = fom_run(&cfg.fom)?;
    io::write_dir_atomically(out, |dir| {
        io::save_snapshots(dir, &run.snapshots)?;
        io::write_outlet_pressure_csv(&dir.join("outlet_pressure.csv"), &run.outlet_series)
    })?;
    Ok(run)
}

/// One row of the reduced-basis demo table.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RbRow {
    pub mu: f64,
    pub s_fom: f64,
    pub s_rb: f64,
    pub err: f64,
}

/// The built-in affine problem: POD over `train` log-spaced parameters,
/// evaluated on `test` log-spaced parameters.
pub fn rb_demo(n_dofs: usize, train: usize, modes: usize, test: usize) -> Result<(Vec<RbRow>, Vec<f64>)> {
    use crate::affine::{fom_solve, rb_offline, rb_online, AffineProblem};
    let problem = AffineProblem::demo(n_dofs)?;
    let space = rb_offline(&problem, &problem.parameters.line(train, true)?, modes)?;
    let rows = problem
        .parameters
        .line(test, true)?
        .par_iter()
        .map(|mu| {
            let s_fom = fom_solve(&problem, mu)?.output;
            let s_rb = rb_online(&space.reduced, mu)?.output;
            Ok(RbRow {
                mu: mu[0],
                s_fom,
                s_rb,
                err: (s_fom - s_rb).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rows, space.eigenvalues))
}
