//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{Result, RomError};
use crate::fom::{FomConfig, Waveform};
use crate::grid::{BoundaryTag, Side, SideTags, TagMap};
use crate::nn::{Activation, TrainConfig};
use crate::ops::InletProfile;
use crate::windkessel::{read_params_csv, WindkesselParams};

#[derive(Clone, Debug, PartialEq)]
pub struct NnSettings {
    pub hidden: usize,
    pub activation: Activation,
    pub epochs: usize,
    pub learning_rate: f64,
    pub split: f64,
    pub seed: u64,
}

impl NnSettings {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            split: self.split,
            seed: self.seed,
            normalize: true,
        }
    }
}

impl Default for NnSettings {
    fn default() -> Self {
        NnSettings {
            hidden: 32,
            activation: Activation::Tanh,
            epochs: 20_000,
            learning_rate: 0.05,
            split: 0.8,
            seed: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub fom: FomConfig,
    pub n_outlets: usize,
    pub modes_u: usize,
    pub modes_p: usize,
    /// Mode counts of the error-vs-N table; N_u = N_p = N, clipped to the ranks.
    pub sweep: Vec<usize>,
    pub supremizers: bool,
    /// Off: raw pressure snapshots, no outlet pressure forcing in the ROM.
    pub pressure_lifting: bool,
    pub nn: NnSettings,
    /// Reduced time step; also the spacing of the default query grid.
    pub dt_r: f64,
    pub timing_reps: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let fom = FomConfig::default();
        PipelineConfig {
            dt_r: fom.dt,
            fom,
            n_outlets: 1,
            modes_u: 6,
            modes_p: 6,
            sweep: (1..=8).collect(),
            supremizers: true,
            pressure_lifting: true,
            nn: NnSettings::default(),
            timing_reps: 5,
        }
    }
}

/// Every accepted key with a one-line description, in file order.
pub const KEYS: &[(&str, &str)] = &[
    ("nx", "cells along the channel"),
    ("ny", "cells across the channel"),
    ("lx", "channel length"),
    ("ly", "channel height"),
    ("outlets", "number of outlets splitting the right side"),
    ("nu", "kinematic viscosity"),
    ("dt", "full-order time step"),
    ("t0", "start time"),
    ("t_end", "end time"),
    ("record_start", "first recorded time"),
    ("stride", "snapshot stride for the POD training set"),
    ("waveform", "pulsatile | constant"),
    ("u_sys", "peak systolic inlet velocity"),
    ("period", "cardiac period T_c"),
    ("systole_fraction", "systole fraction of the period"),
    ("u_const", "inlet velocity of the constant waveform"),
    ("profile", "inlet profile: plug | parabolic"),
    ("convection", "true | false"),
    ("windkessel", "CSV table outlet,Rp,Rd,C (relative to the config file)"),
    ("rp", "proximal resistance, all outlets"),
    ("rd", "distal resistance, all outlets"),
    ("c", "compliance, all outlets"),
    ("modes_u", "velocity POD modes N_u"),
    ("modes_p", "pressure POD modes N_p (0: velocity only)"),
    ("sweep", "mode counts for the error table, e.g. 1-8 or 1,2,4"),
    ("supremizers", "true | false"),
    ("pressure_lifting", "true | false"),
    ("nn_hidden", "neurons per hidden layer"),
    ("nn_activation", "softplus | tanh | relu | identity"),
    ("nn_epochs", "gradient descent epochs"),
    ("nn_learning_rate", "learning rate"),
    ("nn_split", "training fraction"),
    ("seed", "seed for the network initialization and split"),
    ("dt_r", "reduced time step"),
    ("timing_reps", "repetitions of the timed online run"),
];

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| RomError::Config(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(RomError::Config(format!("{key}: expected true or false, got {v:?}"))),
    }
}

pub fn parse_sweep(v: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        if let Some((a, b)) = part.split_once('-') {
            let (a, b): (usize, usize) = (parse("sweep", a.trim())?, parse("sweep", b.trim())?);
            out.extend(a..=b);
        } else {
            out.push(parse("sweep", part)?);
        }
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() || out[0] == 0 {
        return Err(RomError::Config(format!(
            "sweep must list positive mode counts, got {v:?}"
        )));
    }
    Ok(out)
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| RomError::Config(format!("line {}: expected key = value, got {raw:?}", no + 1)))?;
        let k = k.trim().to_string();
        if !KEYS.iter().any(|(name, _)| *name == k) {
            return Err(RomError::Config(format!("line {}: unknown key {k:?}", no + 1)));
        }
        if map.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(RomError::Config(format!("line {}: duplicate key {k:?}", no + 1)));
        }
    }
    Ok(map)
}

impl PipelineConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RomError::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_text(&text, path.parent().map(Path::to_path_buf))
    }

    /// `base` resolves a relative Windkessel table path.
    pub fn from_text(text: &str, base: Option<PathBuf>) -> Result<Self> {
        let map = parse_pairs(text)?;
        let mut cfg = PipelineConfig::default();
        let get = |k: &str| map.get(k).map(String::as_str);
        macro_rules! set {
            ($key:literal, $field:expr) => {
                if let Some(v) = get($key) {
                    $field = parse($key, v)?;
                }
            };
        }
        let f = &mut cfg.fom;
        set!("nx", f.nx);
        set!("ny", f.ny);
        set!("lx", f.lx);
        set!("ly", f.ly);
        set!("nu", f.nu);
        set!("dt", f.dt);
        set!("t0", f.t0);
        set!("t_end", f.t_end);
        set!("record_start", f.record_start);
        set!("stride", f.stride);
        set!("outlets", cfg.n_outlets);
        if let Some(v) = get("profile") {
            f.profile = v.parse::<InletProfile>()?;
        }
        if let Some(v) = get("convection") {
            f.convection = parse_bool("convection", v)?;
        }

        let (mut u_sys, mut period, mut alpha) = (0.5, 0.6, 0.4);
        let mut u_const = 0.5;
        set!("u_sys", u_sys);
        set!("period", period);
        set!("systole_fraction", alpha);
        set!("u_const", u_const);
        f.waveform = match get("waveform").unwrap_or("pulsatile") {
            "pulsatile" => Waveform::Pulsatile { u_sys, period, alpha },
            "constant" => Waveform::Constant { u: u_const },
            other => return Err(RomError::Config(format!("waveform: unknown kind {other:?}"))),
        };

        if cfg.n_outlets == 0 || cfg.n_outlets > f.ny {
            return Err(RomError::Config(format!(
                "outlets must be in 1..={}, got {}",
                f.ny, cfg.n_outlets
            )));
        }
        let tags = (0..f.ny)
            .map(|j| BoundaryTag::Outlet(j * cfg.n_outlets / f.ny))
            .collect();
        f.tags = TagMap::channel().side(Side::Right, SideTags::PerEdge(tags));

        let base_wk = f.windkessel[0];
        let (mut rp, mut rd, mut c) = (base_wk.rp, base_wk.rd, base_wk.c);
        set!("rp", rp);
        set!("rd", rd);
        set!("c", c);
        f.windkessel = if let Some(file) = get("windkessel") {
            if ["rp", "rd", "c"].iter().any(|k| map.contains_key(*k)) {
                return Err(RomError::Config(
                    "give either a windkessel table or rp/rd/c, not both".into(),
                ));
            }
            let path = base.unwrap_or_default().join(file);
            read_params_csv(&path)?.into_iter().map(|o| o.params).collect()
        } else {
            vec![WindkesselParams::new(rp, rd, c)?; cfg.n_outlets]
        };

        set!("modes_u", cfg.modes_u);
        set!("modes_p", cfg.modes_p);
        if let Some(v) = get("sweep") {
            cfg.sweep = parse_sweep(v)?;
        }
        if let Some(v) = get("supremizers") {
            cfg.supremizers = parse_bool("supremizers", v)?;
        }
        if let Some(v) = get("pressure_lifting") {
            cfg.pressure_lifting = parse_bool("pressure_lifting", v)?;
        }
        set!("nn_hidden", cfg.nn.hidden);
        if let Some(v) = get("nn_activation") {
            cfg.nn.activation = v.parse()?;
        }
        set!("nn_epochs", cfg.nn.epochs);
        set!("nn_learning_rate", cfg.nn.learning_rate);
        set!("nn_split", cfg.nn.split);
        set!("seed", cfg.nn.seed);
        cfg.dt_r = cfg.fom.dt;
        set!("dt_r", cfg.dt_r);
        set!("timing_reps", cfg.timing_reps);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.fom.validate()?;
        if self.modes_u == 0 {
            return Err(RomError::Config("modes_u must be at least 1".into()));
        }
        if !(self.dt_r > 0.0 && self.dt_r.is_finite()) {
            return Err(RomError::Config(format!("dt_r must be positive, got {}", self.dt_r)));
        }
        if self.nn.hidden == 0 || self.nn.epochs == 0 {
            return Err(RomError::Config(
                "network needs hidden neurons and at least one epoch".into(),
            ));
        }
        self.nn.train_config().validate()?;
        if self.timing_reps == 0 {
            return Err(RomError::Config("timing_reps must be at least 1".into()));
        }
        Ok(())
    }

    /// Canonical text form; parsing it gives back the same configuration.
    pub fn to_text(&self) -> String {
        let f = &self.fom;
        let mut lines = vec![
            format!("nx = {}", f.nx),
            format!("ny = {}", f.ny),
            format!("lx = {}", f.lx),
            format!("ly = {}", f.ly),
            format!("outlets = {}", self.n_outlets),
            format!("nu = {}", f.nu),
            format!("dt = {}", f.dt),
            format!("t0 = {}", f.t0),
            format!("t_end = {}", f.t_end),
            format!("record_start = {}", f.record_start),
            format!("stride = {}", f.stride),
        ];
        match f.waveform {
            Waveform::Pulsatile { u_sys, period, alpha } => {
                lines.push("waveform = pulsatile".into());
                lines.push(format!("u_sys = {u_sys}"));
                lines.push(format!("period = {period}"));
                lines.push(format!("systole_fraction = {alpha}"));
            }
            Waveform::Constant { u } => {
                lines.push("waveform = constant".into());
                lines.push(format!("u_const = {u}"));
            }
        }
        let profile = match f.profile {
            InletProfile::Plug => "plug",
            InletProfile::Parabolic => "parabolic",
        };
        lines.push(format!("profile = {profile}"));
        lines.push(format!("convection = {}", f.convection));
        let wk = &f.windkessel[0];
        if f.windkessel.iter().all(|w| w == wk) {
            lines.push(format!("rp = {}", wk.rp));
            lines.push(format!("rd = {}", wk.rd));
            lines.push(format!("c = {}", wk.c));
        } else {
            lines.push("# per-outlet Windkessel parameters:".into());
            for (k, w) in f.windkessel.iter().enumerate() {
                lines.push(format!("#   outlet {k}: Rp={} Rd={} C={}", w.rp, w.rd, w.c));
            }
        }
        lines.push(format!("modes_u = {}", self.modes_u));
        lines.push(format!("modes_p = {}", self.modes_p));
        let sweep: Vec<String> = self.sweep.iter().map(usize::to_string).collect();
        lines.push(format!("sweep = {}", sweep.join(",")));
        lines.push(format!("supremizers = {}", self.supremizers));
        lines.push(format!("pressure_lifting = {}", self.pressure_lifting));
        lines.push(format!("nn_hidden = {}", self.nn.hidden));
        lines.push(format!("nn_activation = {}", self.nn.activation));
        lines.push(format!("nn_epochs = {}", self.nn.epochs));
        lines.push(format!("nn_learning_rate = {}", self.nn.learning_rate));
        lines.push(format!("nn_split = {}", self.nn.split));
        lines.push(format!("seed = {}", self.nn.seed));
        lines.push(format!("dt_r = {}", self.dt_r));
        lines.push(format!("timing_reps = {}", self.timing_reps));
        lines.join("\n") + "\n"
    }
}
