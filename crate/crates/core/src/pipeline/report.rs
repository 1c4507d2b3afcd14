use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::RomModel;
use crate::error::{Result, RomError};
use crate::grid::{l2_norm, same_grid, SnapshotSet};
use crate::io::dec;

/// Absolute L² errors at one time: reduced model vs full order, and the
/// best approximation in the reduced spaces vs full order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorRow {
    pub t: f64,
    pub err_u: f64,
    pub err_p: f64,
    pub proj_u: f64,
    pub proj_p: f64,
}

/// Time-averaged errors for one pair of mode counts.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_u: usize,
    pub n_p: usize,
    pub err_u: f64,
    pub err_p: f64,
    pub proj_u: f64,
    pub proj_p: f64,
}

impl SweepRow {
    pub fn from_rows(n_u: usize, n_p: usize, rows: &[ErrorRow]) -> SweepRow {
        let m = time_average(rows);
        SweepRow {
            n_u,
            n_p,
            err_u: m.err_u,
            err_p: m.err_p,
            proj_u: m.proj_u,
            proj_p: m.proj_p,
        }
    }
}

/// Mean of every column; `t` is the mean time.
pub fn time_average(rows: &[ErrorRow]) -> ErrorRow {
    let n = rows.len().max(1) as f64;
    let sum = |f: fn(&ErrorRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    ErrorRow {
        t: sum(|r| r.t),
        err_u: sum(|r| r.err_u),
        err_p: sum(|r| r.err_p),
        proj_u: sum(|r| r.proj_u),
        proj_p: sum(|r| r.proj_p),
    }
}

/// Index pairs of equal times (to 1e-9 relative) in two increasing lists.
pub fn matching(a: &[f64], b: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let (mut ia, mut ib) = (Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        let tol = 1e-9 * a[i].abs().max(1.0);
        if (a[i] - b[j]).abs() <= tol {
            ia.push(i);
            ib.push(j);
            i += 1;
            j += 1;
        } else if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    (ia, ib)
}

/// Errors of `rom` against `fom` at aligned times, with the projection
/// errors of the homogenized full-order fields onto the model's spaces.
/// Pressure columns are NaN for velocity-only models.
pub fn compare(fom: &SnapshotSet, rom: &SnapshotSet, model: &RomModel) -> Result<Vec<ErrorRow>> {
    if fom.len() != rom.len() {
        return Err(RomError::Shape(format!(
            "{} full-order vs {} reduced snapshots",
            fom.len(),
            rom.len()
        )));
    }
    if let Some(k) = (0..fom.len()).find(|&k| (fom.times[k] - rom.times[k]).abs() > 1e-9 * fom.times[k].abs().max(1.0))
    {
        return Err(RomError::Shape(format!(
            "snapshot {k} is at t={} in one set and t={} in the other",
            fom.times[k], rom.times[k]
        )));
    }
    if fom.is_empty() || !same_grid(fom.grid(), rom.grid()) || !same_grid(fom.grid(), model.grid()) {
        return Err(RomError::Shape(
            "compared sets must be nonempty and share a grid".into(),
        ));
    }
    let lift = &model.lift;
    let velocity_only = model.velocity_only();
    (0..fom.len())
        .into_par_iter()
        .map(|k| {
            let mut du = fom.velocity[k].clone();
            du.axpy(-1.0, &rom.velocity[k]);
            let mut uh = fom.velocity[k].clone();
            uh.axpy(-fom.meta.inlet_velocity[k], &lift.chi_u);
            let mut ru = uh.clone();
            ru.axpy(-1.0, &model.basis_u.projector(&uh)?);
            let (err_p, proj_p) = if velocity_only {
                (f64::NAN, f64::NAN)
            } else {
                let mut dp = fom.pressure[k].clone();
                dp.axpy(-1.0, &rom.pressure[k]);
                let mut ph = fom.pressure[k].clone();
                if model.pressure_lifting {
                    for (j, chi) in lift.chi_p.iter().enumerate() {
                        ph.axpy(-fom.meta.outlet_pressure[j][k], chi);
                    }
                }
                let mut rp = ph.clone();
                rp.axpy(-1.0, &model.basis_p.projector(&ph)?);
                (l2_norm(&dp), l2_norm(&rp))
            };
            Ok(ErrorRow {
                t: fom.times[k],
                err_u: l2_norm(&du),
                err_p,
                proj_u: l2_norm(&ru),
                proj_p,
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub errors: Vec<ErrorRow>,
    pub sweep: Vec<SweepRow>,
    pub spectrum_u: Vec<f64>,
    pub spectrum_p: Vec<f64>,
    pub fom_seconds: f64,
    /// Median wall time of the online evaluation.
    pub rom_seconds: f64,
    /// Stage name and wall time, in execution order.
    pub timings: Vec<(String, f64)>,
    pub summary: serde_json::Value,
}

impl RunReport {
    pub fn mean(&self) -> ErrorRow {
        time_average(&self.errors)
    }
    pub fn speedup(&self) -> f64 {
        self.fom_seconds / self.rom_seconds
    }
}

fn num(x: f64) -> serde_json::Value {
    if x.is_finite() {
        serde_json::json!(x)
    } else {
        serde_json::Value::Null
    }
}

pub fn write_report(dir: &Path, r: &RunReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join("errors.csv"))?;
    w.write_record(["t", "err_u", "err_p", "proj_u", "proj_p"])?;
    for e in &r.errors {
        w.write_record([dec(e.t), dec(e.err_u), dec(e.err_p), dec(e.proj_u), dec(e.proj_p)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("spectrum.csv"))?;
    w.write_record(["i", "lambda_u", "lambda_p"])?;
    for i in 0..r.spectrum_u.len().max(r.spectrum_p.len()) {
        let cell = |v: &[f64]| v.get(i).map(|x| dec(*x)).unwrap_or_default();
        w.write_record([(i + 1).to_string(), cell(&r.spectrum_u), cell(&r.spectrum_p)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("timings.csv"))?;
    w.write_record(["stage", "seconds"])?;
    for (s, t) in &r.timings {
        w.write_record([s.clone(), dec(*t)])?;
    }
    w.flush()?;

    if !r.sweep.is_empty() {
        let mut w = csv::Writer::from_path(dir.join("sweep.csv"))?;
        w.write_record(["n_u", "n_p", "err_u", "err_p", "proj_u", "proj_p"])?;
        for s in &r.sweep {
            w.write_record([
                s.n_u.to_string(),
                s.n_p.to_string(),
                dec(s.err_u),
                dec(s.err_p),
                dec(s.proj_u),
                dec(s.proj_p),
            ])?;
        }
        w.flush()?;
    }

    let m = r.mean();
    let json = serde_json::json!({
        "mean_errors": {
            "err_u": num(m.err_u), "err_p": num(m.err_p),
            "proj_u": num(m.proj_u), "proj_p": num(m.proj_p),
        },
        "fom_seconds": num(r.fom_seconds),
        "rom_online_seconds": num(r.rom_seconds),
        "speedup": num(r.speedup()),
        "timing": "monotonic clock; online value is the median of repeated runs",
        "details": r.summary,
    });
    std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(&json)? + "\n")?;
    Ok(())
}

/// FOM wall time stored in a report directory.
pub fn read_fom_seconds(dir: &Path) -> Option<f64> {
    let text = std::fs::read_to_string(dir.join("report.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    v.get("fom_seconds")?.as_f64()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matching_pairs_equal_times() {
        let a = [0.0, 0.005, 0.01, 0.015, 0.02];
        let b = [0.0, 0.0025, 0.005 + 1e-15, 0.0075, 0.01, 0.03];
        assert_eq!(matching(&a, &b), (vec![0, 1, 2], vec![0, 2, 4]));
    }

    #[test]
    fn averages() {
        let r = |t, e| ErrorRow {
            t,
            err_u: e,
            err_p: 2.0 * e,
            proj_u: e,
            proj_p: 0.0,
        };
        let m = time_average(&[r(0.0, 1.0), r(1.0, 3.0)]);
        assert_eq!((m.t, m.err_u, m.err_p), (0.5, 2.0, 4.0));
    }
}
