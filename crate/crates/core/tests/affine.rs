use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use romkit::affine::{fom_solve, rb_offline, rb_online, AffineProblem, Coefficient, ParameterBox};
use romkit::linalg::{dot, DenseMatrix, Lu, SymBandMatrix};
use romkit::RomError;

fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> SymBandMatrix {
    let vals: Vec<f64> = (0..n * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = DenseMatrix::from_rows(n, n, vals).unwrap();
    let bt = b.transpose();
    let g = bt.matmul(&b).unwrap();
    let mut a = SymBandMatrix::zeros(n, n - 1);
    for i in 0..n {
        for j in 0..=i {
            a.add(i, j, g[(i, j)] + if i == j { 0.5 } else { 0.0 });
        }
    }
    a
}

fn dense(a: &SymBandMatrix) -> DenseMatrix {
    DenseMatrix::from_fn(a.n(), a.n(), |i, j| a.get(i, j))
}

/// Two SPD terms with coefficients 1 and μ, two load terms with 1 and μ².
fn random_problem(n: usize, seed: u64) -> AffineProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = vec![random_spd(n, &mut rng), random_spd(n, &mut rng)];
    let loads = (0..2)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let one: Coefficient = Arc::new(|_| 1.0);
    AffineProblem::new(
        blocks,
        loads,
        vec![one.clone(), Arc::new(|m| m[0])],
        vec![one, Arc::new(|m| m[0] * m[0])],
        ParameterBox::new(vec![(0.5, 2.0)]).unwrap(),
        vec![1.0],
    )
    .unwrap()
}

#[test]
fn full_order_output_matches_dense_factorization() {
    for seed in 0..5 {
        let p = random_problem(24, seed);
        for mu in [0.5, 1.3, 2.0] {
            let s = fom_solve(&p, &[mu]).unwrap();
            assert!(s.residual <= 1e-12);
            let f = p.load(&[mu]);
            let u = Lu::new(&dense(&p.matrix(&[mu]))).unwrap().solve(&f);
            let oracle = dot(&f, &u);
            assert!(
                (s.output - oracle).abs() <= 1e-10 * oracle.abs(),
                "{} vs {oracle}",
                s.output
            );
        }
    }
}

#[test]
fn two_dimensional_manifold_is_captured_by_two_modes() {
    // constant operator, load f1 + μ² f2: every solution lies in a 2D space
    let mut p = random_problem(30, 7);
    p.blocks.truncate(1);
    p.theta_a.truncate(1);
    let train = p.parameters.line(9, false).unwrap();
    let sp = rb_offline(&p, &train, 2).unwrap();
    assert!(matches!(rb_offline(&p, &train, 3), Err(RomError::Rank(_))));
    let e = p.matrix(&p.reference);
    for mu in &train {
        let u = fom_solve(&p, mu).unwrap().u;
        let coeffs: Vec<f64> = sp.basis.iter().map(|xi| e.quad_form(xi, &u)).collect();
        let pu = sp.expand(&coeffs);
        let d: Vec<f64> = u.iter().zip(&pu).map(|(a, b)| a - b).collect();
        assert!(e.quad_form(&d, &d).sqrt() < 1e-12 * e.quad_form(&u, &u).sqrt());
    }
}

#[test]
fn reduced_blocks_equal_dense_triple_products() {
    let p = random_problem(20, 3);
    let train = p.parameters.line(6, false).unwrap();
    let sp = rb_offline(&p, &train, 4).unwrap();
    let v = DenseMatrix::from_fn(20, 4, |i, j| sp.basis[j][i]);
    for (q, blk) in p.blocks.iter().enumerate() {
        let oracle = v.transpose().matmul(&dense(blk)).unwrap().matmul(&v).unwrap();
        let diff = oracle.sub(&sp.reduced.blocks[q]).max_abs();
        assert!(diff <= 1e-13 * oracle.max_abs().max(1.0), "block {q}: {diff:.2e}");
    }
    for (q, fq) in p.loads.iter().enumerate() {
        let oracle = v.transpose().matvec(fq);
        for (a, b) in oracle.iter().zip(&sp.reduced.loads[q]) {
            assert!((a - b).abs() <= 1e-13 * a.abs().max(1.0));
        }
    }
    // energy-orthonormal basis
    let e = p.matrix(&p.reference);
    for i in 0..4 {
        for j in 0..4 {
            let g = e.quad_form(&sp.basis[i], &sp.basis[j]);
            assert!((g - if i == j { 1.0 } else { 0.0 }).abs() < 1e-10);
        }
    }
}

fn demo_space(n_dofs: usize) -> (AffineProblem, romkit::affine::RBSpace, usize) {
    let p = AffineProblem::demo(n_dofs).unwrap();
    let train = p.parameters.line(12, true).unwrap();
    let full = rb_offline(&p, &train, 1).unwrap();
    let rank = romkit::pod::numerical_rank(&full.eigenvalues);
    (p.clone(), rb_offline(&p, &train, rank).unwrap(), rank)
}

#[test]
fn demo_reproduces_training_outputs_and_bounds_from_below() {
    let (p, sp, rank) = demo_space(511);
    assert!((2..=10).contains(&rank), "rank {rank}");
    for mu in &sp.training {
        let s = fom_solve(&p, mu).unwrap().output;
        let r = rb_online(&sp.reduced, mu).unwrap().output;
        assert!((s - r).abs() <= 1e-10 * s.abs(), "μ={mu:?}: {s} vs {r}");
    }
    let test = p.parameters.line(50, false).unwrap();
    let mut previous = f64::INFINITY;
    for n in 1..=rank {
        let red = sp.reduced.truncated(n).unwrap();
        let mut worst = 0.0f64;
        for mu in &test {
            let s = fom_solve(&p, mu).unwrap().output;
            let r = rb_online(&red, mu).unwrap().output;
            assert!(s - r >= -1e-12 * s.abs(), "N={n} μ={mu:?}: output above the truth");
            worst = worst.max((s - r).abs());
        }
        assert!(worst <= previous, "N={n}: {worst:.3e} after {previous:.3e}");
        previous = worst;
    }
}

#[test]
fn galerkin_error_equals_best_energy_approximation() {
    let (p, sp, rank) = demo_space(255);
    let red = sp.reduced.truncated(rank - 1).unwrap();
    let basis = &sp.basis[..rank - 1];
    for mu in [[0.15], [0.7], [3.3], [9.0]] {
        let a = p.matrix(&mu);
        let u = fom_solve(&p, &mu).unwrap().u;
        let rb = sp.expand(&rb_online(&red, &mu).unwrap().coeffs);
        // best approximation: energy-orthogonal projection at this μ
        let g = DenseMatrix::from_fn(basis.len(), basis.len(), |i, j| a.quad_form(&basis[i], &basis[j]));
        let rhs: Vec<f64> = basis.iter().map(|xi| a.quad_form(xi, &u)).collect();
        let best = sp.expand(&Lu::new(&g).unwrap().solve(&rhs));
        let err = |w: &[f64]| {
            let d: Vec<f64> = u.iter().zip(w).map(|(x, y)| x - y).collect();
            a.quad_form(&d, &d).sqrt()
        };
        let (e_rb, e_best) = (err(&rb), err(&best));
        assert!(
            (e_rb - e_best).abs() <= 1e-10 * e_best.max(1e-300) + 1e-14,
            "{e_rb} vs {e_best}"
        );
    }
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
fn online_is_much_faster_than_full_order() {
    let (p, sp, _) = demo_space(4096);
    let mu = [2.7];
    let fom = median_seconds(21, || {
        std::hint::black_box(fom_solve(&p, std::hint::black_box(&mu)).unwrap());
    });
    let rb = median_seconds(201, || {
        std::hint::black_box(rb_online(&sp.reduced, std::hint::black_box(&mu)).unwrap());
    });
    println!("fom {fom:.3e}s rb {rb:.3e}s ratio {:.0}", fom / rb);
    assert!(fom / rb >= 100.0);
}
