use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romkit::fom::{fom_run, fom_run_with, FomConfig, FomSolver, FomState, Waveform};
use romkit::grid::{weighted_dot, Field, FieldKind, Grid};
use romkit::ops::{outlet_flow, InletProfile};
use romkit::windkessel::WindkesselParams;

fn coarse() -> FomConfig {
    FomConfig {
        nx: 32,
        ny: 8,
        lx: 2.0,
        ly: 0.5,
        nu: 0.02,
        dt: 0.01,
        t0: 0.0,
        t_end: 0.4,
        record_start: 0.0,
        stride: 1,
        ..FomConfig::default()
    }
}

fn energy(u: &Field) -> f64 {
    0.5 * weighted_dot(u.grid(), FieldKind::Vector2, u.values(), u.values())
}

/// Velocity of a random node stream function: discretely divergence free,
/// zero on every boundary face.
fn swirl(g: &Grid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (nx, ny) = (g.nx(), g.ny());
    let mut psi = vec![vec![0.0; ny + 1]; nx + 1];
    for col in psi.iter_mut().take(nx).skip(1) {
        for s in col.iter_mut().take(ny).skip(1) {
            *s = rng.gen_range(-0.01..0.01);
        }
    }
    let mut u = vec![0.0; g.n_vel()];
    for i in 0..=nx {
        for j in 0..ny {
            u[g.u(i, j)] = (psi[i][j + 1] - psi[i][j]) / g.hy();
        }
    }
    for i in 0..nx {
        for j in 0..=ny {
            u[g.v(i, j)] = -(psi[i + 1][j] - psi[i][j]) / g.hx();
        }
    }
    u
}

#[test]
fn plug_inflow_develops_into_poiseuille() {
    let u_in = 0.1;
    let cfg = FomConfig {
        waveform: Waveform::Constant { u: u_in },
        profile: InletProfile::Plug,
        t_end: 12.0,
        record_start: 12.0,
        ..coarse()
    };
    let run = fom_run(&cfg).unwrap();
    let state = &run.final_state;
    let g = state.velocity.grid();
    let u = state.velocity.values();

    // mean velocity u_in, profile 6 u_in s (1 - s) at cell-centre heights
    let i = 3 * g.nx() / 4;
    let (mut num, mut den) = (0.0, 0.0);
    for j in 0..g.ny() {
        let s = (j as f64 + 0.5) / g.ny() as f64;
        let exact = 6.0 * u_in * s * (1.0 - s);
        num += (u[g.u(i, j)] - exact).powi(2);
        den += exact * exact;
    }
    let rel = (num / den).sqrt();
    assert!(rel < 0.02, "profile error {rel}");

    // resistive outlet at steady state
    let wk = cfg.windkessel[0];
    let q = outlet_flow(g, u, 0);
    assert!((q - u_in * cfg.ly).abs() < 1e-6 * u_in * cfg.ly, "flow {q}");
    let p = state.windkessel[0].p;
    assert!(
        (p - (wk.rp + wk.rd) * q).abs() < 1e-3 * p.abs(),
        "{p} vs {}",
        (wk.rp + wk.rd) * q
    );
}

#[test]
fn unforced_flow_loses_energy_every_step() {
    // zero inlet velocity: no net flow, so the outlet Windkessel stays at rest
    let cfg = FomConfig {
        nx: 16,
        ny: 16,
        lx: 1.0,
        ly: 1.0,
        waveform: Waveform::Constant { u: 0.0 },
        ..coarse()
    };
    let solver = FomSolver::new(cfg).unwrap();
    let g = solver.grid.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut state = FomState {
        velocity: Field::new(g.clone(), FieldKind::Vector2, swirl(&g, &mut rng)).unwrap(),
        ..solver.initial_state()
    };
    let mut e = energy(&state.velocity);
    let e0 = e;
    assert!(e0 > 0.0);
    for _ in 0..60 {
        state = solver.advance(&state).unwrap();
        let next = energy(&state.velocity);
        assert!(next <= e, "energy rose from {e} to {next}");
        e = next;
    }
    assert!(e < 0.5 * e0);
}

#[test]
fn random_impulse_is_projected_to_divergence_free() {
    let solver = FomSolver::new(coarse()).unwrap();
    let g = solver.grid.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut kick: Vec<f64> = (0..g.n_vel()).map(|_| rng.gen_range(-0.2..0.2)).collect();
    for (r, k) in kick.iter_mut().enumerate() {
        if g.is_dirichlet_face(r) {
            *k = 0.0;
        }
    }
    let start = FomState {
        velocity: Field::new(g.clone(), FieldKind::Vector2, kick).unwrap(),
        ..solver.initial_state()
    };
    assert!(solver.max_divergence(&start.velocity) > 1.0);
    let h = g.hx().min(g.hy());
    let mut s = start;
    for _ in 0..5 {
        s = solver.advance(&s).unwrap();
        assert!(solver.max_divergence(&s.velocity) < 1e-8 * 0.2 / h);
    }
}

#[test]
fn time_stepping_is_first_order() {
    // smooth start: the systolic half-sine from rest, measured at t = 0.2
    let at = |dt: f64| {
        let cfg = FomConfig {
            dt,
            t_end: 0.2,
            record_start: 0.2,
            profile: InletProfile::Parabolic,
            ..coarse()
        };
        let run = fom_run(&cfg).unwrap();
        (run.final_state.velocity, run.final_state.pressure)
    };
    let dts = [0.01, 0.005, 0.0025, 0.00125];
    let states: Vec<_> = dts.iter().map(|&dt| at(dt)).collect();
    let diff = |a: &Field, b: &Field| {
        let mut d = a.clone();
        d.axpy(-1.0, b);
        romkit::l2_norm(&d)
    };
    for w in 0..2 {
        let e1 = diff(&states[w].0, &states[w + 1].0);
        let e2 = diff(&states[w + 1].0, &states[w + 2].0);
        let ratio = e1 / e2;
        assert!((1.7..=2.3).contains(&ratio), "velocity ratio {ratio} at dt={}", dts[w]);
    }
}

#[test]
fn reruns_are_bit_identical() {
    let cfg = FomConfig { t_end: 0.3, ..coarse() };
    let a = fom_run(&cfg).unwrap();
    let b = fom_run(&cfg).unwrap();
    assert_eq!(a.snapshots, b.snapshots);
    assert_eq!(a.outlet_series, b.outlet_series);

    let solver = FomSolver::new(cfg).unwrap();
    let c = fom_run_with(&solver, solver.initial_state()).unwrap();
    assert_eq!(a.snapshots, c.snapshots);
}

#[test]
fn outlet_series_follows_the_windkessel() {
    // the recorded outlet pressure is the explicit Windkessel update driven by the outlet flow
    let cfg = FomConfig {
        windkessel: vec![WindkesselParams::new(0.2, 2.0, 0.1).unwrap()],
        ..coarse()
    };
    let solver = FomSolver::new(cfg.clone()).unwrap();
    let mut s = solver.initial_state();
    for _ in 0..20 {
        let next = solver.advance(&s).unwrap();
        let q = outlet_flow(&solver.grid, s.velocity.values(), 0);
        let wk = cfg.windkessel[0];
        let pp = s.windkessel[0].pp + cfg.dt / wk.c * (q - (s.windkessel[0].pp - wk.pd) / wk.rd);
        assert!((next.windkessel[0].pp - pp).abs() <= 1e-12 * pp.abs().max(1e-12));
        assert!((next.windkessel[0].p - (pp + wk.rp * q)).abs() <= 1e-12 * next.windkessel[0].p.abs().max(1e-12));
        s = next;
    }
}
