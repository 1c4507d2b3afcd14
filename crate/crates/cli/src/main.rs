use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};
use romkit::io;
use romkit::pipeline::config::PipelineConfig;
use romkit::pipeline::{self, OnlineRequest};
use romkit::{Result, RomError};

#[derive(Parser)]
#[command(name = "romkit", version, about = "Reduced-order modeling of pulsatile channel flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full-order solver and write its snapshots.
    Fom {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        out: PathBuf,
    },
    /// Build a reduced model bundle.
    Offline {
        #[command(flatten)]
        setup: Setup,
        #[arg(long)]
        bundle: PathBuf,
    },
    /// Evaluate a bundle at query times and reconstruct the fields.
    Online {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_modes)]
        modes: Option<(usize, usize)>,
        #[arg(long = "dt-r")]
        dt_r: Option<f64>,
        /// Comma-separated query times; default is the recording window at step dt-r.
        #[arg(long, value_delimiter = ',')]
        times: Option<Vec<f64>>,
        /// Require pressure fields (refused by velocity-only bundles).
        #[arg(long)]
        pressure: bool,
    },
    /// Compare reconstructed snapshots against the bundle's full-order reference.
    Compare {
        #[arg(long)]
        bundle: PathBuf,
        /// Output directory of an `online` run, or a snapshot directory.
        #[arg(long)]
        rom: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = parse_modes)]
        modes: Option<(usize, usize)>,
    },
    /// Stationary affine reduced-basis demo; prints mu,s_fom,s_rb,err.
    Rb {
        #[arg(long, value_enum, default_value_t = Problem::Demo)]
        problem: Problem,
        #[arg(long, default_value_t = 20)]
        train: usize,
        #[arg(long, default_value_t = 4)]
        modes: usize,
        #[arg(long, default_value_t = 50)]
        test: usize,
        #[arg(long, default_value_t = 1024)]
        dofs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Problem {
    Demo,
}

#[derive(Args)]
struct Setup {
    /// key = value configuration file; defaults are used for absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_modes)]
    modes: Option<(usize, usize)>,
    #[arg(long = "dt-r")]
    dt_r: Option<f64>,
}

impl Setup {
    fn load(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.nn.seed = s;
        }
        if let Some((u, p)) = self.modes {
            cfg.modes_u = u;
            cfg.modes_p = p;
        }
        if let Some(dt) = self.dt_r {
            cfg.dt_r = dt;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_modes(s: &str) -> std::result::Result<(usize, usize), String> {
    let (u, p) = s.split_once(',').ok_or("expected Nu,Np")?;
    let n = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    Ok((n(u)?, n(p)?))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Fom { setup, out } => {
            let cfg = setup.load()?;
            let run = pipeline::fom_only(&cfg, &out)?;
            info!("{} snapshots in {:.3} s", run.snapshots.len(), run.seconds);
            println!("{}", out.display());
        }
        Command::Offline { setup, bundle } => {
            let cfg = setup.load()?;
            let out = pipeline::offline(&cfg, &bundle)?;
            let r = &out.report;
            let m = r.mean();
            info!(
                "err_u {:.3e} err_p {:.3e} proj_u {:.3e} proj_p {:.3e}",
                m.err_u, m.err_p, m.proj_u, m.proj_p
            );
            info!(
                "fom {:.3} s, rom {:.3e} s, speedup {:.1}",
                r.fom_seconds,
                r.rom_seconds,
                r.speedup()
            );
            for t in &out.nn {
                if t.test_mse > 1e-2 {
                    warn!("outlet network test MSE {:.3e}", t.test_mse);
                }
            }
            println!("{}", bundle.display());
        }
        Command::Online {
            bundle,
            out,
            modes,
            dt_r,
            times,
            pressure,
        } => {
            let req = OnlineRequest {
                times,
                dt_r,
                modes,
                pressure,
            };
            let res = pipeline::online(&bundle, &req, &out)?;
            if res.report.errors.is_empty() {
                info!("no query time coincides with a reference time; errors not computed");
            } else {
                let m = res.report.mean();
                info!(
                    "err_u {:.3e} err_p {:.3e} over {} times",
                    m.err_u,
                    m.err_p,
                    res.report.errors.len()
                );
            }
            println!("{}", out.display());
        }
        Command::Compare {
            bundle,
            rom,
            out,
            modes,
        } => {
            let b = pipeline::load_bundle(&bundle)?;
            let set_dir = if rom.join("rom").join("meta.json").exists() {
                rom.join("rom")
            } else {
                rom.clone()
            };
            let set = io::load_snapshots(&set_dir)?;
            let modes = modes.or_else(|| stored_modes(&rom));
            let model = match modes {
                Some((u, p)) => b.model.with_modes(u, p)?,
                None => b.model.clone(),
            };
            let (ri, qi) = pipeline::matching(&b.reference.times, &set.times);
            if ri.is_empty() {
                return Err(RomError::Argument(
                    "no snapshot time coincides with a reference time".into(),
                ));
            }
            let errors = pipeline::compare(&b.reference.select(&ri), &set.select(&qi), &model)?;
            let m = pipeline::time_average(&errors);
            let report = pipeline::RunReport {
                errors,
                sweep: Vec::new(),
                spectrum_u: model.pod_u.eigenvalues.clone(),
                spectrum_p: model.pod_p.eigenvalues.clone(),
                fom_seconds: b.fom_seconds.unwrap_or(f64::NAN),
                rom_seconds: f64::NAN,
                timings: Vec::new(),
                summary: compare_summary(model.n_u_pod(), model.n_p(), ri.len()),
            };
            io::write_dir_atomically(&out, |dir| pipeline::write_report(dir, &report))?;
            info!("err_u {:.3e} err_p {:.3e}", m.err_u, m.err_p);
            println!("{}", out.display());
        }
        Command::Rb {
            problem: Problem::Demo,
            train,
            modes,
            test,
            dofs,
        } => {
            let (rows, _) = pipeline::rb_demo(dofs, train, modes, test)?;
            println!("mu,s_fom,s_rb,err");
            for r in rows {
                println!(
                    "{},{},{},{}",
                    io::dec(r.mu),
                    io::dec(r.s_fom),
                    io::dec(r.s_rb),
                    io::dec(r.err)
                );
            }
        }
    }
    Ok(())
}

fn compare_summary(n_u: usize, n_p: usize, compared: usize) -> serde_json::Value {
    serde_json::json!({ "n_u": n_u, "n_p": n_p, "compared_times": compared })
}

/// Mode counts recorded in an online run's report.
fn stored_modes(dir: &Path) -> Option<(usize, usize)> {
    let text = std::fs::read_to_string(dir.join("report.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    let d = v.get("details")?;
    Some((d.get("n_u")?.as_u64()? as usize, d.get("n_p")?.as_u64()? as usize))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
