//! Acceptance suite. Each test prints one `criterion N PASS|FAIL` line.
//! Tests share one lock so wall-clock measurements are not disturbed by
//! neighbours running in parallel.

use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romkit::affine::{fom_solve, rb_offline, rb_online, AffineProblem};
use romkit::grid::TagMap;
use romkit::lifting::{dehomogenize, homogenize, max_inlet_trace};
use romkit::linalg::{jacobi_eigen, DenseMatrix};
use romkit::nn::{mse, nn_backprop, nn_train, Activation, NNModel, TrainConfig};
use romkit::pipeline::config::PipelineConfig;
use romkit::pipeline::{compare, matching, run_offline, time_average, OfflineOutput, RomModel};
use romkit::pod::{eigen_tail, gram_deviation, numerical_rank, pod_full_rank, projection_error, BasisKind};
use romkit::windkessel::{aortic_outlets, iterate_to_steady, wk_step, WindkesselParams, WindkesselState};
use romkit::{build_grid, inner_product, Field, FieldKind, SnapshotSet};

static LOCK: Mutex<()> = Mutex::new(());
static DEFAULT: OnceLock<OfflineOutput> = OnceLock::new();

fn serial() -> MutexGuard<'static, ()> {
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn verdict(n: usize, name: &str, ok: bool, detail: String) {
    println!("criterion {n:>2} {} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
}

/// The default channel experiment, built once per test binary.
fn default_run() -> &'static OfflineOutput {
    DEFAULT.get_or_init(|| run_offline(&PipelineConfig::default()).expect("default offline run"))
}

fn homogenized(set: &SnapshotSet, model: &RomModel) -> SnapshotSet {
    homogenize(set, &set.meta.inlet_velocity, &set.meta.outlet_pressure, &model.lift).unwrap()
}

fn sq(f: &Field) -> f64 {
    inner_product(f, f).unwrap()
}

#[test]
fn c01_pod_error_equals_eigenvalue_tail() {
    let _g = serial();
    let run = default_run();
    let h = homogenized(&run.reference, &run.model);

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let g = Arc::new(build_grid(12, 8, 1.5, 1.0, &TagMap::channel()).unwrap());
    let random: Vec<Field> = (0..128)
        .map(|_| {
            Field::new(
                g.clone(),
                FieldKind::Scalar,
                (0..g.n_cells()).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            )
            .unwrap()
        })
        .collect();
    // rank 3 set with a wide spectrum
    let shapes: Vec<Field> = random[..3].to_vec();
    let low: Vec<Field> = (0..40)
        .map(|k| {
            let mut f = Field::zeros(g.clone(), FieldKind::Scalar);
            for (j, s) in shapes.iter().enumerate() {
                f.axpy(10f64.powi(-3 * j as i32) * (0.3 * (k + j) as f64).sin(), s);
            }
            f
        })
        .collect();

    let start = Instant::now();
    let sets: [(&str, &[Field], BasisKind); 5] = [
        ("velocity", &h.velocity, BasisKind::Velocity),
        ("pressure", &h.pressure, BasisKind::Pressure),
        ("random-128", &random, BasisKind::Pressure),
        ("random-64", &random[..64], BasisKind::Pressure),
        ("rank-3", &low, BasisKind::Pressure),
    ];
    let mut worst = 0.0f64;
    let mut strict = 0.0f64;
    let mut checked = 0;
    for (_, snaps, kind) in sets {
        assert!(snaps.len() <= 128);
        let b = pod_full_rank(snaps, kind).unwrap();
        let total: f64 = snaps.iter().map(sq).sum::<f64>() / snaps.len() as f64;
        for n in 0..=b.n() {
            let direct = projection_error(snaps, &b, n).unwrap();
            let tail = eigen_tail(&b.eigenvalues, n);
            // rounding in both sides is proportional to the total energy
            worst = worst.max((direct - tail).abs() / total);
            if tail > 1e-6 * total {
                strict = strict.max((direct - tail).abs() / tail);
            }
            checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        1,
        "POD identity",
        worst <= 1e-10 && secs < 10.0,
        format!("{checked} (set, N) pairs, max |err - tail| / energy {worst:.2e}, max relative to tail {strict:.2e}, {secs:.2} s"),
    );
}

#[test]
fn c02_bases_are_orthonormal() {
    let _g = serial();
    let m = &default_run().model;
    let dev = [
        ("velocity", gram_deviation(&m.pod_u.modes)),
        ("pressure", gram_deviation(&m.pod_p.modes)),
        ("enriched", gram_deviation(&m.basis_u.modes)),
    ];
    assert_eq!(
        m.basis_u.n(),
        m.n_u_pod() + m.n_p(),
        "enriched basis carries one supremizer per pressure mode"
    );
    let worst = dev.iter().map(|d| d.1).fold(0.0, f64::max);
    verdict(
        2,
        "basis orthonormality",
        worst < 1e-10,
        dev.iter()
            .map(|(k, d)| format!("{k} {d:.2e}"))
            .collect::<Vec<_>>()
            .join(", "),
    );
}

#[test]
fn c03_eigensolver_reconstructs() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let mut worst_rel = 0.0f64;
    for k in 0..50 {
        let n = if k == 0 { 64 } else { rng.gen_range(1..=64) };
        let raw: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = DenseMatrix::from_rows(n, n, raw).unwrap();
        let a = DenseMatrix::from_fn(n, n, |i, j| 0.5 * (a[(i, j)] + a[(j, i)]));
        let e = jacobi_eigen(&a).unwrap();
        let d = e.reconstruct().sub(&a).frobenius_norm();
        worst = worst.max(d);
        worst_rel = worst_rel.max(d / a.frobenius_norm());
    }
    verdict(
        3,
        "eigensolver oracle",
        worst <= 1e-12,
        format!("max ||VΛVᵀ - C||_F {worst:.2e} (relative {worst_rel:.2e})"),
    );
}

#[test]
fn c04_windkessel_steady_and_first_order() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rows: Vec<(WindkesselParams, f64)> = aortic_outlets().into_iter().map(|o| (o.params, 1e-5)).collect();
    for _ in 0..20 {
        let p = WindkesselParams::new(
            rng.gen_range(0.05..1.0),
            rng.gen_range(0.5..10.0),
            rng.gen_range(0.01..1.0),
        )
        .unwrap();
        rows.push((p, rng.gen_range(0.1..2.0)));
    }
    let (mut steady, mut ratios) = (0.0f64, Vec::new());
    for (p, q) in &rows {
        let tau = p.time_constant();
        let s = iterate_to_steady(*q, tau / 20.0, p, 1_000_000).unwrap();
        let target = (p.rp + p.rd) * q;
        steady = steady.max((s.p - target).abs() / target);

        // error at t = tau against the exact exponential approach
        let exact = p.rd * q * (1.0 - (-1.0f64).exp()) + p.rp * q;
        let err = |n: usize| {
            let mut s = WindkesselState::default();
            for _ in 0..n {
                s = wk_step(&s, *q, tau / n as f64, p).unwrap();
            }
            (s.p - exact).abs()
        };
        let e: Vec<f64> = [10, 20, 40, 80].iter().map(|&n| err(n)).collect();
        ratios.extend(e.windows(2).map(|w| w[0] / w[1]));
    }
    let lo = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ratios.iter().copied().fold(0.0, f64::max);
    verdict(
        4,
        "Windkessel steady oracle",
        steady < 1e-3 && lo >= 1.8 && hi <= 2.2,
        format!(
            "{} rows, max steady deviation {steady:.2e}, halving ratios in [{lo:.3}, {hi:.3}]",
            rows.len()
        ),
    );
}

fn gradient_check(model: &NNModel, xs: &[f64], ys: &[f64]) -> f64 {
    let h = 1e-6;
    let (_, g) = nn_backprop(model, xs, ys).unwrap();
    let g = g.flat();
    let p0 = model.params();
    let mut m = model.clone();
    let mut worst = 0.0f64;
    for i in 0..p0.len() {
        let mut p = p0.clone();
        p[i] = p0[i] + h;
        m.set_params(&p);
        let up = mse(&m, xs, ys);
        p[i] = p0[i] - h;
        m.set_params(&p);
        let fd = (up - mse(&m, xs, ys)) / (2.0 * h);
        // gradients under 1e-6 are at the rounding level of the quotient
        worst = worst.max((g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6));
    }
    worst
}

#[test]
fn c05_backprop_and_sine_fit() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut grad = 0.0f64;
    for act in [Activation::Softplus, Activation::Tanh] {
        for k in 0..10u64 {
            let m = NNModel::two_hidden(rng.gen_range(2..10), act, 50 + k).unwrap();
            let xs: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ys: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
            grad = grad.max(gradient_check(&m, &xs, &ys));
        }
    }

    let xs: Vec<f64> = (0..64).map(|i| i as f64 / 63.0).collect();
    let ys: Vec<f64> = xs.iter().map(|x| (2.0 * std::f64::consts::PI * x).sin()).collect();
    let cfg = TrainConfig {
        epochs: 40_000,
        learning_rate: 0.05,
        split: 0.8,
        seed: 4,
        normalize: true,
    };
    let fit = nn_train(&NNModel::two_hidden(32, Activation::Tanh, 4).unwrap(), &xs, &ys, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    verdict(
        5,
        "NN gradient check and sine fit",
        grad < 1e-4 && fit.test_mse < 1e-4 && secs < 60.0,
        format!(
            "max gradient deviation {grad:.2e}, sine test MSE {:.2e}, {secs:.1} s",
            fit.test_mse
        ),
    );
}

#[test]
fn c06_lifting_and_pressure_ablation() {
    let _g = serial();
    let run = default_run();
    let r = &run.reference;
    let h = homogenized(r, &run.model);
    let ud_max = r.meta.inlet_velocity.iter().fold(0.0f64, |a, u| a.max(u.abs()));
    let trace = h.velocity.iter().map(max_inlet_trace).fold(0.0, f64::max);

    let back = dehomogenize(&h, &r.meta.inlet_velocity, &r.meta.outlet_pressure, &run.model.lift).unwrap();
    let mut round = 0.0f64;
    for (a, b) in back
        .velocity
        .iter()
        .chain(&back.pressure)
        .zip(r.velocity.iter().chain(&r.pressure))
    {
        let scale = b.values().iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        for (x, y) in a.values().iter().zip(b.values()) {
            round = round.max((x - y).abs() / scale);
        }
    }

    let cfg = PipelineConfig {
        pressure_lifting: false,
        sweep: vec![],
        timing_reps: 1,
        ..PipelineConfig::default()
    };
    let ablated = run_offline(&cfg).unwrap();
    let (on, off) = (run.report.mean().err_p, ablated.report.mean().err_p);
    verdict(
        6,
        "lifting",
        trace < 1e-9 * ud_max && round <= 1e-13 && off >= 10.0 * on,
        format!(
            "inlet trace {trace:.2e} (max u_D {ud_max:.3}), round trip {round:.2e}, err_p {on:.3e} with lifting vs {off:.3e} without ({:.0}x)",
            off / on
        ),
    );
}

#[test]
fn c07_reconstruction_tracks_projection() {
    let _g = serial();
    let run = default_run();
    let r = &run.report;
    // knee: smallest N leaving under 1e-6 of the velocity energy
    let lam = &r.spectrum_u;
    let total: f64 = lam.iter().map(|l| l.max(0.0)).sum();
    let knee = (1..=lam.len())
        .find(|&n| eigen_tail(lam, n) < 1e-6 * total)
        .unwrap_or(lam.len());
    let rows: Vec<_> = r.sweep.iter().filter(|s| s.n_u <= knee.max(6)).collect();
    let covered = rows.first().is_some_and(|s| s.n_u == 1) && rows.last().is_some_and(|s| s.n_u >= knee.max(6));
    let falling = rows
        .windows(2)
        .all(|w| w[1].err_u < w[0].err_u && w[1].proj_u < w[0].proj_u);
    let six = r
        .sweep
        .iter()
        .find(|s| s.n_u == 6 && s.n_p == 6)
        .expect("N = 6 in the sweep");
    let ratio = six.err_u / six.proj_u;
    let rom_pipeline: f64 = r.timings.iter().filter(|(s, _)| s != "fom").map(|(_, t)| t).sum();
    for s in &r.sweep {
        println!(
            "  N={} err_u {:.3e} proj_u {:.3e} err_p {:.3e} proj_p {:.3e}",
            s.n_u, s.err_u, s.proj_u, s.err_p, s.proj_p
        );
    }
    verdict(
        7,
        "ROM fidelity",
        covered && falling && ratio <= 3.0 && r.fom_seconds <= 600.0 && rom_pipeline <= 120.0,
        format!(
            "N=6 err_u/proj_u {ratio:.3}, monotone over N=1..{} (knee {knee}): {falling}, FOM {:.2} s, ROM pipeline {rom_pipeline:.2} s",
            rows.last().map_or(0, |s| s.n_u),
            r.fom_seconds
        ),
    );
}

#[test]
fn c08_stokes_rom_equals_projection() {
    let _g = serial();
    let base = PipelineConfig {
        sweep: vec![],
        timing_reps: 1,
        ..PipelineConfig::default()
    };
    let mut cfg = base.clone();
    cfg.fom.convection = false;
    cfg.modes_u = 1;
    cfg.modes_p = 1;
    let (nu, np) = run_offline(&cfg).unwrap().ranks;
    cfg.modes_u = nu;
    cfg.modes_p = np;
    let run = run_offline(&cfg).unwrap();
    let m = &run.model;
    let rom = m.simulate(&run.reference.times, cfg.dt_r).unwrap();
    let (hf, hr) = (homogenized(&run.reference, m), homogenized(&rom, m));
    let rel = |fom: &[Field], red: &[Field], b: &romkit::pod::ReducedBasis| {
        let (mut num, mut den) = (0.0, 0.0);
        for (f, r) in fom.iter().zip(red) {
            let p = b.projector(f).unwrap();
            let mut d = r.clone();
            d.axpy(-1.0, &p);
            num += sq(&d);
            den += sq(&p);
        }
        (num / den).sqrt()
    };
    let eu = rel(&hf.velocity, &hr.velocity, &m.basis_u);
    let ep = rel(&hf.pressure, &hr.pressure, &m.basis_p);
    verdict(
        8,
        "Stokes equivalence",
        eu <= 1e-6 && ep <= 1e-6,
        format!("full rank ({nu}, {np}), relative L2 over the window: velocity {eu:.2e}, pressure {ep:.2e}"),
    );
}

#[test]
fn c09_online_speedup() {
    let _g = serial();
    let r = &default_run().report;
    let s = r.speedup();
    verdict(
        9,
        "speedup",
        s >= 100.0,
        format!(
            "FOM {:.3} s once, ROM online {:.3e} s median, speedup {s:.0}x",
            r.fom_seconds, r.rom_seconds
        ),
    );
}

fn median_seconds(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..reps)
        .map(|_| {
            let s = Instant::now();
            f();
            s.elapsed().as_secs_f64()
        })
        .collect();
    t.sort_by(f64::total_cmp);
    t[reps / 2]
}

#[test]
fn c10_affine_reduced_basis() {
    let _g = serial();
    let p = AffineProblem::demo(4096).unwrap();
    let train = p.parameters.line(12, true).unwrap();
    let rank = numerical_rank(&rb_offline(&p, &train, 1).unwrap().eigenvalues).min(10);
    let sp = rb_offline(&p, &train, rank).unwrap();

    let mut repro = 0.0f64;
    for mu in &sp.training {
        let s = fom_solve(&p, mu).unwrap().output;
        repro = repro.max((s - rb_online(&sp.reduced, mu).unwrap().output).abs() / s.abs());
    }

    let test = p.parameters.line(50, false).unwrap();
    let truth: Vec<f64> = test.iter().map(|mu| fom_solve(&p, mu).unwrap().output).collect();
    let mut errs = Vec::new();
    for n in 1..=rank {
        let red = sp.reduced.truncated(n).unwrap();
        let e: Vec<f64> = test
            .iter()
            .zip(&truth)
            .map(|(mu, s)| (s - rb_online(&red, mu).unwrap().output).abs())
            .collect();
        errs.push(e);
    }
    // pointwise in μ: the error never grows when a mode is added
    let monotone = errs
        .windows(2)
        .all(|w| w[1].iter().zip(&w[0]).all(|(b, a)| *b <= *a * (1.0 + 1e-9) + 1e-15));

    // the online operator holds N-sized blocks only
    let r = &sp.reduced;
    let sized =
        r.blocks.iter().all(|b| b.rows() == rank && b.cols() == rank) && r.loads.iter().all(|l| l.len() == rank);

    let mu = [2.7];
    let fom = median_seconds(21, || {
        std::hint::black_box(fom_solve(&p, std::hint::black_box(&mu)).unwrap());
    });
    let rb = median_seconds(201, || {
        std::hint::black_box(rb_online(r, std::hint::black_box(&mu)).unwrap());
    });
    verdict(
        10,
        "affine RB",
        repro <= 1e-10 && monotone && sized && fom / rb >= 100.0,
        format!(
            "N={rank}, training reproduction {repro:.2e}, error non-increasing in N: {monotone}, N-sized data: {sized}, fom_solve/rb_online {:.0}x",
            fom / rb
        ),
    );
}

#[test]
fn c11_refined_step_robustness() {
    let _g = serial();
    let run = default_run();
    let dt = PipelineConfig::default().dt_r;
    let r = &run.reference;
    let errs = |n: usize, h: f64| {
        let m = run.model.with_modes(n, n).unwrap();
        let set = m.simulate(&m.default_times(h), h).unwrap();
        let (ri, qi) = matching(&r.times, &set.times);
        assert_eq!(ri.len(), r.len());
        let a = time_average(&compare(&r.select(&ri), &set.select(&qi), &m).unwrap());
        (a.err_u, a.err_p)
    };
    let sizes: Vec<usize> = run.report.sweep.iter().map(|s| s.n_u).collect();
    let mut worst = 1.0f64;
    let (mut coarse, mut fine) = (Vec::new(), Vec::new());
    for &n in &sizes {
        let (a, b) = (errs(n, dt), errs(n, dt / 2.0));
        println!(
            "  N={n} dt_r={dt}: u {:.3e} p {:.3e} | dt_r={}: u {:.3e} p {:.3e}",
            a.0,
            a.1,
            dt / 2.0,
            b.0,
            b.1
        );
        for (x, y) in [(a.0, b.0), (a.1, b.1)] {
            worst = worst.max(x.max(y) / x.min(y));
        }
        coarse.push(a);
        fine.push(b);
    }
    let trend = |v: &[(f64, f64)], k: usize| -> Vec<bool> {
        v.windows(2)
            .map(|w| if k == 0 { w[1].0 < w[0].0 } else { w[1].1 < w[0].1 })
            .collect()
    };
    let kept = trend(&coarse, 0) == trend(&fine, 0) && trend(&coarse, 1) == trend(&fine, 1);
    verdict(
        11,
        "refined time step",
        worst < 2.0 && kept,
        format!("largest change in a time-averaged error {worst:.1}x over N={sizes:?}, trends preserved: {kept}"),
    );
}
