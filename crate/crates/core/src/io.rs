//! On-disk formats. Binary arrays are raw little-endian f64 in layout order;
//! every number in a JSON or CSV file is a decimal string that parses back to
//! the same bits.

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, RomError};
use crate::grid::{build_grid, BoundaryTag, Field, FieldKind, Grid, Side, SideTags, SnapshotMeta, SnapshotSet, TagMap};
use crate::lifting::{LiftingPair, LiftingRecord};
use crate::linalg::DenseMatrix;
use crate::ops::InletProfile;
use crate::pod::{BasisKind, ReducedBasis};
use crate::rom::ReducedOperators;

pub const SNAPSHOT_FORMAT: &str = "romkit-snapshots/1";
pub const LIFTING_FORMAT: &str = "romkit-lifting/1";
pub const BASIS_FORMAT: &str = "romkit-basis/1";
const OPERATORS_MAGIC: &[u8; 8] = b"RKOPS001";

fn io_err(path: &Path, e: std::io::Error) -> RomError {
    RomError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

pub fn write_f64s(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 * values.len());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| io_err(path, e))
}

pub fn read_f64s(path: &Path, expected: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    if bytes.len() != 8 * expected {
        return Err(RomError::Format(format!(
            "{}: expected {expected} values, found {} bytes",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn dec(x: f64) -> String {
    x.to_string()
}

pub fn decs(v: &[f64]) -> Vec<String> {
    v.iter().map(|&x| dec(x)).collect()
}

pub fn parse_dec(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| RomError::Format(format!("not a number: {s:?}")))
}

pub fn parse_decs(v: &[String]) -> Result<Vec<f64>> {
    v.iter().map(|s| parse_dec(s)).collect()
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| io_err(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&s).map_err(|e| RomError::Format(format!("{}: {e}", path.display())))
}

fn check_format(found: &str, expected: &str, path: &Path) -> Result<()> {
    if found != expected {
        return Err(RomError::Format(format!(
            "{}: format {found:?}, this build reads {expected:?}",
            path.display()
        )));
    }
    Ok(())
}

fn tag_name(t: BoundaryTag) -> String {
    match t {
        BoundaryTag::Inlet => "inlet".into(),
        BoundaryTag::Wall => "wall".into(),
        BoundaryTag::Outlet(k) => format!("outlet:{k}"),
    }
}

fn parse_tag(s: &str) -> Result<BoundaryTag> {
    match s {
        "inlet" => Ok(BoundaryTag::Inlet),
        "wall" => Ok(BoundaryTag::Wall),
        _ => s
            .strip_prefix("outlet:")
            .and_then(|k| k.parse().ok())
            .map(BoundaryTag::Outlet)
            .ok_or_else(|| RomError::Format(format!("unknown boundary tag {s:?}"))),
    }
}

#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
pub struct GridRecord {
    pub nx: usize,
    pub ny: usize,
    pub lx: String,
    pub ly: String,
    pub left: Vec<String>,
    pub right: Vec<String>,
    pub bottom: Vec<String>,
    pub top: Vec<String>,
}

const SIDES: [Side; 4] = [Side::Left, Side::Right, Side::Bottom, Side::Top];

impl GridRecord {
    pub fn of(g: &Grid) -> GridRecord {
        let names = |s: Side| g.tags(s).iter().map(|&t| tag_name(t)).collect();
        GridRecord {
            nx: g.nx(),
            ny: g.ny(),
            lx: dec(g.lx()),
            ly: dec(g.ly()),
            left: names(Side::Left),
            right: names(Side::Right),
            bottom: names(Side::Bottom),
            top: names(Side::Top),
        }
    }

    pub fn build(&self) -> Result<Grid> {
        let mut tags = TagMap::new();
        for (side, names) in SIDES.iter().zip([&self.left, &self.right, &self.bottom, &self.top]) {
            let t = names.iter().map(|s| parse_tag(s)).collect::<Result<Vec<_>>>()?;
            tags = tags.side(*side, SideTags::PerEdge(t));
        }
        build_grid(self.nx, self.ny, parse_dec(&self.lx)?, parse_dec(&self.ly)?, &tags)
    }
}

#[derive(Serialize, Deserialize)]
struct SnapshotRecord {
    format: String,
    grid: GridRecord,
    n_snapshots: usize,
    velocity_len: usize,
    pressure_len: usize,
    times: Vec<String>,
    nu: String,
    waveform: String,
    inlet_velocity: Vec<String>,
    outlet_pressure: Vec<Vec<String>>,
}

fn snapshot_name(prefix: &str, m: usize) -> String {
    format!("{prefix}_{m:06}.bin")
}

pub fn save_snapshots(dir: &Path, set: &SnapshotSet) -> Result<()> {
    set.validate()?;
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let g = set.grid();
    let rec = SnapshotRecord {
        format: SNAPSHOT_FORMAT.into(),
        grid: GridRecord::of(g),
        n_snapshots: set.len(),
        velocity_len: g.n_vel(),
        pressure_len: g.n_cells(),
        times: decs(&set.times),
        nu: dec(set.meta.nu),
        waveform: set.meta.waveform.clone(),
        inlet_velocity: decs(&set.meta.inlet_velocity),
        outlet_pressure: set.meta.outlet_pressure.iter().map(|s| decs(s)).collect(),
    };
    for (m, (u, p)) in set.velocity.iter().zip(&set.pressure).enumerate() {
        write_f64s(&dir.join(snapshot_name("u", m)), u.values())?;
        write_f64s(&dir.join(snapshot_name("p", m)), p.values())?;
    }
    write_json(&dir.join("meta.json"), &rec)
}

pub fn load_snapshots(dir: &Path) -> Result<SnapshotSet> {
    let path = dir.join("meta.json");
    let rec: SnapshotRecord = read_json(&path)?;
    check_format(&rec.format, SNAPSHOT_FORMAT, &path)?;
    let grid = Arc::new(rec.grid.build()?);
    if rec.velocity_len != grid.n_vel() || rec.pressure_len != grid.n_cells() {
        return Err(RomError::Format(format!(
            "{}: field lengths disagree with the grid",
            path.display()
        )));
    }
    let mut velocity = Vec::with_capacity(rec.n_snapshots);
    let mut pressure = Vec::with_capacity(rec.n_snapshots);
    for m in 0..rec.n_snapshots {
        let u = read_f64s(&dir.join(snapshot_name("u", m)), rec.velocity_len)?;
        let p = read_f64s(&dir.join(snapshot_name("p", m)), rec.pressure_len)?;
        velocity.push(Field::new(grid.clone(), FieldKind::Vector2, u)?);
        pressure.push(Field::new(grid.clone(), FieldKind::Scalar, p)?);
    }
    let meta = SnapshotMeta {
        nu: parse_dec(&rec.nu)?,
        waveform: rec.waveform,
        inlet_velocity: parse_decs(&rec.inlet_velocity)?,
        outlet_pressure: rec
            .outlet_pressure
            .iter()
            .map(|s| parse_decs(s))
            .collect::<Result<_>>()?,
    };
    SnapshotSet::new(parse_decs(&rec.times)?, velocity, pressure, meta)
}

/// `t,outlet,p` rows.
pub fn write_outlet_pressure_csv(path: &Path, series: &[(f64, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t", "outlet", "p"])?;
    for (t, ps) in series {
        for (k, p) in ps.iter().enumerate() {
            w.write_record([dec(*t), k.to_string(), dec(*p)])?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_outlet_pressure_csv(path: &Path) -> Result<Vec<(f64, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<(f64, Vec<f64>)> = Vec::new();
    for row in r.records() {
        let row = row?;
        let (t, k, p) = (parse_dec(&row[0])?, &row[1], parse_dec(&row[2])?);
        let k: usize = k
            .parse()
            .map_err(|_| RomError::Format(format!("bad outlet index {k:?}")))?;
        if k == 0 {
            out.push((t, Vec::new()));
        }
        match out.last_mut() {
            Some((tt, ps)) if *tt == t && ps.len() == k => ps.push(p),
            _ => {
                return Err(RomError::Format(format!(
                    "{}: rows out of order at t={t}",
                    path.display()
                )))
            }
        }
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct LiftingFile {
    format: String,
    grid: GridRecord,
    profile: InletProfile,
    n_outlets: usize,
    inlet_flux: String,
    outlet_flux: Vec<String>,
    max_divergence: String,
}

pub fn save_lifting(dir: &Path, lift: &LiftingPair) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    write_f64s(&dir.join("chi_u.bin"), lift.chi_u.values())?;
    let p: Vec<f64> = lift.chi_p.iter().flat_map(|f| f.values().iter().copied()).collect();
    write_f64s(&dir.join("chi_p.bin"), &p)?;
    write_json(
        &dir.join("lifting.json"),
        &LiftingFile {
            format: LIFTING_FORMAT.into(),
            grid: GridRecord::of(lift.grid()),
            profile: lift.profile,
            n_outlets: lift.n_outlets(),
            inlet_flux: dec(lift.record.inlet_flux),
            outlet_flux: decs(&lift.record.outlet_flux),
            max_divergence: dec(lift.record.max_divergence),
        },
    )
}

pub fn load_lifting(dir: &Path, grid: &Arc<Grid>) -> Result<LiftingPair> {
    let path = dir.join("lifting.json");
    let f: LiftingFile = read_json(&path)?;
    check_format(&f.format, LIFTING_FORMAT, &path)?;
    if f.grid != GridRecord::of(grid) {
        return Err(RomError::Format(format!(
            "{}: lifting was built on another grid",
            path.display()
        )));
    }
    let chi_u = Field::new(
        grid.clone(),
        FieldKind::Vector2,
        read_f64s(&dir.join("chi_u.bin"), grid.n_vel())?,
    )?;
    let nc = grid.n_cells();
    let p = read_f64s(&dir.join("chi_p.bin"), nc * f.n_outlets)?;
    let chi_p = p
        .chunks_exact(nc)
        .map(|c| Field::new(grid.clone(), FieldKind::Scalar, c.to_vec()))
        .collect::<Result<_>>()?;
    Ok(LiftingPair {
        chi_u,
        chi_p,
        profile: f.profile,
        record: LiftingRecord {
            inlet_flux: parse_dec(&f.inlet_flux)?,
            outlet_flux: parse_decs(&f.outlet_flux)?,
            max_divergence: parse_dec(&f.max_divergence)?,
        },
    })
}

#[derive(Serialize, Deserialize)]
struct BasisFile {
    format: String,
    kind: BasisKind,
    field: String,
    n: usize,
    m: usize,
    /// Modes are orthonormal in the face/cell-area weighted inner product.
    normalization: String,
}

pub fn save_basis(dir: &Path, basis: &ReducedBasis) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    for (i, m) in basis.modes.iter().enumerate() {
        write_f64s(&dir.join(format!("modes_{i:03}.bin")), m.values())?;
    }
    let mut w = csv::Writer::from_path(dir.join("spectrum.csv"))?;
    w.write_record(["i", "lambda"])?;
    for (i, l) in basis.eigenvalues.iter().enumerate() {
        w.write_record([(i + 1).to_string(), dec(*l)])?;
    }
    w.flush().map_err(|e| io_err(dir, e))?;
    let field = match basis.kind {
        BasisKind::Pressure => "scalar",
        BasisKind::Velocity | BasisKind::Supremizer => "vector2",
    };
    write_json(
        &dir.join("basis.json"),
        &BasisFile {
            format: BASIS_FORMAT.into(),
            kind: basis.kind,
            field: field.into(),
            n: basis.n(),
            m: basis.m,
            normalization: "area-weighted L2".into(),
        },
    )
}

pub fn load_basis(dir: &Path, grid: &Arc<Grid>) -> Result<ReducedBasis> {
    let path = dir.join("basis.json");
    let f: BasisFile = read_json(&path)?;
    check_format(&f.format, BASIS_FORMAT, &path)?;
    let kind = match f.field.as_str() {
        "scalar" => FieldKind::Scalar,
        "vector2" => FieldKind::Vector2,
        other => {
            return Err(RomError::Format(format!(
                "{}: unknown field kind {other:?}",
                path.display()
            )))
        }
    };
    let len = crate::grid::layout_len(grid, kind);
    let modes = (0..f.n)
        .map(|i| {
            Field::new(
                grid.clone(),
                kind,
                read_f64s(&dir.join(format!("modes_{i:03}.bin")), len)?,
            )
        })
        .collect::<Result<_>>()?;
    let mut r = csv::Reader::from_path(dir.join("spectrum.csv"))?;
    let eigenvalues = r.records().map(|row| parse_dec(&row?[1])).collect::<Result<_>>()?;
    Ok(ReducedBasis {
        kind: f.kind,
        modes,
        eigenvalues,
        m: f.m,
    })
}

/// `operators.bin`: the 8-byte magic, then n_u, n_p, n_out as u64 LE, then
/// f64 LE arrays: ν, B (n_u×n_u), Ct (n_u³, index i·n_u²+j·n_u+k),
/// K (n_u×n_p), P (n_p×n_u), d1 (n_u), d2, d3 (n_u×n_u), d4 (n_u),
/// d5 (n_out×n_u), d6 (n_u), d7 (n_p). Matrices are row-major.
pub fn save_operators(path: &Path, ops: &ReducedOperators) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut put = |bytes: &[u8]| w.write_all(bytes).map_err(|e| io_err(path, e));
    put(OPERATORS_MAGIC)?;
    for n in [ops.n_u, ops.n_p, ops.n_out] {
        put(&(n as u64).to_le_bytes())?;
    }
    let arrays: [&[f64]; 12] = [
        std::slice::from_ref(&ops.nu),
        ops.b.data(),
        &ops.ct,
        ops.k.data(),
        ops.p.data(),
        &ops.d1,
        ops.d2.data(),
        ops.d3.data(),
        &ops.d4,
        &ops.d5.concat(),
        &ops.d6,
        &ops.d7,
    ];
    for a in arrays {
        for v in a {
            put(&v.to_le_bytes())?;
        }
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn load_operators(path: &Path) -> Result<ReducedOperators> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    let bad = |what: &str| RomError::Format(format!("{}: {what}", path.display()));
    if bytes.len() < 32 || &bytes[..8] != OPERATORS_MAGIC {
        return Err(bad("not a reduced-operator file of this version"));
    }
    let dim = |k: usize| u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().unwrap()) as usize;
    let (nu_, np, no) = (dim(0), dim(1), dim(2));
    let expected = 1 + nu_ * nu_ + nu_.pow(3) + 2 * nu_ * np + 3 * nu_ + 2 * nu_ * nu_ + no * nu_ + np;
    let body = &bytes[32..];
    if body.len() != 8 * expected {
        return Err(bad(&format!("size does not match dimensions ({nu_}, {np}, {no})")));
    }
    let mut vals = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    let mut take = |n: usize| -> Vec<f64> { vals.by_ref().take(n).collect() };
    let mat = |r: usize, c: usize, v: Vec<f64>| DenseMatrix::from_rows(r, c, v);
    let nu = take(1)[0];
    let b = mat(nu_, nu_, take(nu_ * nu_))?;
    let ct = take(nu_.pow(3));
    let k = mat(nu_, np, take(nu_ * np))?;
    let p = mat(np, nu_, take(np * nu_))?;
    let d1 = take(nu_);
    let d2 = mat(nu_, nu_, take(nu_ * nu_))?;
    let d3 = mat(nu_, nu_, take(nu_ * nu_))?;
    let d4 = take(nu_);
    let d5 = take(no * nu_)
        .chunks(nu_.max(1))
        .map(<[f64]>::to_vec)
        .collect::<Vec<_>>();
    let d5 = if nu_ == 0 { vec![Vec::new(); no] } else { d5 };
    let d6 = take(nu_);
    let d7 = take(np);
    Ok(ReducedOperators {
        nu,
        n_u: nu_,
        n_p: np,
        n_out: no,
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
    })
}

/// Exclusive lock on a target directory, held while its replacement is
/// written. The lock file sits next to the target.
pub struct DirLock {
    path: PathBuf,
}

impl DirLock {
    pub fn acquire(target: &Path) -> Result<DirLock> {
        let path = sibling(target, ".lock");
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
        match fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(DirLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(RomError::Io(std::io::Error::new(
                e.kind(),
                format!(
                    "{} is locked by another writer (remove {} if no writer is running)",
                    target.display(),
                    path.display()
                ),
            ))),
            Err(e) => Err(io_err(&path, e)),
        }
    }
}

impl Drop for DirLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn sibling(target: &Path, suffix: &str) -> PathBuf {
    let name = target
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    target.with_file_name(format!(".{name}{suffix}"))
}

/// Builds the directory content in a temporary sibling and swaps it into
/// place only when `fill` succeeds; on failure nothing is left behind.
pub fn write_dir_atomically(target: &Path, fill: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let _lock = DirLock::acquire(target)?;
    let tmp = sibling(target, &format!(".tmp{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
    }
    fs::create_dir_all(&tmp).map_err(|e| io_err(&tmp, e))?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if target.exists() {
        fs::remove_dir_all(target).map_err(|e| io_err(target, e))?;
    }
    fs::rename(&tmp, target).map_err(|e| io_err(target, e))
}
