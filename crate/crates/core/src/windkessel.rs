//! Three-element (RCR) Windkessel outlet model.
//!
//! The proximal pressure obeys `C dpp/dt + (pp - pd)/Rd = Q` and the pressure
//! seen by the flow domain is `p = pp + Rp Q`; the distal pressure `pd` is
//! the zero reference.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindkesselParams {
    pub rp: f64,
    pub rd: f64,
    pub c: f64,
    pub pd: f64,
}

impl WindkesselParams {
    pub fn new(rp: f64, rd: f64, c: f64) -> Result<Self> {
        for (name, v) in [("Rp", rp), ("Rd", rd), ("C", c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(RomError::Config(format!("Windkessel {name} must be positive, got {v}")));
            }
        }
        Ok(WindkesselParams { rp, rd, c, pd: 0.0 })
    }

    /// Relaxation time Rd·C of the proximal pressure.
    pub fn time_constant(&self) -> f64 {
        self.rd * self.c
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct WindkesselState {
    pub pp: f64,
    pub p: f64,
    pub t: f64,
}

/// One explicit Euler step driven by the outlet flow rate `q` (outflow positive).
pub fn wk_step(state: &WindkesselState, q: f64, dt: f64, params: &WindkesselParams) -> Result<WindkesselState> {
    if !(dt > 0.0) {
        return Err(RomError::Argument(format!("time step must be positive, got {dt}")));
    }
    if dt >= params.time_constant() {
        log::warn!(
            "Windkessel step dt={dt} is not below Rd*C={}; explicit Euler may oscillate",
            params.time_constant()
        );
    }
    let pp = state.pp + (dt / params.c) * (q - (state.pp - params.pd) / params.rd);
    Ok(WindkesselState {
        pp,
        p: pp + params.rp * q,
        t: state.t + dt,
    })
}

/// Steady outlet pressure for a constant flow rate.
pub fn wk_steady_pressure(q: f64, params: &WindkesselParams) -> f64 {
    (params.rp + params.rd) * q + params.pd
}

/// A named parameter row, as read from an outlet table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutletParams {
    pub outlet: String,
    pub params: WindkesselParams,
}

#[derive(Debug, Deserialize)]
struct Row {
    outlet: String,
    #[serde(rename = "Rp")]
    rp: String,
    #[serde(rename = "Rd")]
    rd: String,
    #[serde(rename = "C")]
    c: String,
}

fn parse_num(field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| RomError::Config(format!("cannot parse {field} value {s:?}")))
}

/// Reads a `outlet,Rp,Rd,C` table; row order defines the outlet index.
pub fn read_params_csv(path: &Path) -> Result<Vec<OutletParams>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["outlet", "Rp", "Rd", "C"] {
        return Err(RomError::Config(format!(
            "Windkessel table header must be outlet,Rp,Rd,C, got {:?}",
            headers
        )));
    }
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let row: Row = row?;
        out.push(OutletParams {
            outlet: row.outlet.trim().to_string(),
            params: WindkesselParams::new(
                parse_num("Rp", &row.rp)?,
                parse_num("Rd", &row.rd)?,
                parse_num("C", &row.c)?,
            )?,
        });
    }
    if out.is_empty() {
        return Err(RomError::Config("Windkessel table has no rows".into()));
    }
    Ok(out)
}

pub fn write_params_csv(path: &Path, rows: &[OutletParams]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["outlet", "Rp", "Rd", "C"])?;
    for r in rows {
        w.write_record([
            r.outlet.clone(),
            r.params.rp.to_string(),
            r.params.rd.to_string(),
            r.params.c.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// The five aortic outlets used in the reference application, values verbatim.
pub fn aortic_outlets() -> Vec<OutletParams> {
    [
        ("RSA", 1.84e8, 3.11e9, 3.26e-5),
        ("RCA", 1.23e8, 2.07e9, 5.16e-10),
        ("LCA", 1.78e8, 3.01e9, 3.52e-10),
        ("LSA", 7.09e7, 1.19e9, 9.35e-10),
        ("DA", 7.8e6, 1.31e8, 7.72e-9),
    ]
    .into_iter()
    .map(|(name, rp, rd, c)| OutletParams {
        outlet: name.to_string(),
        params: WindkesselParams { rp, rd, c, pd: 0.0 },
    })
    .collect()
}

/// Iterates `wk_step` at constant flow until the proximal pressure stalls.
pub fn iterate_to_steady(q: f64, dt: f64, params: &WindkesselParams, max_steps: usize) -> Result<WindkesselState> {
    let mut s = WindkesselState::default();
    for _ in 0..max_steps {
        let next = wk_step(&s, q, dt, params)?;
        let done = (next.pp - s.pp).abs() < 1e-12 * next.pp.abs();
        s = next;
        if done {
            return Ok(s);
        }
    }
    Err(RomError::Numerical(format!(
        "Windkessel did not reach steady state in {max_steps} steps"
    )))
}
