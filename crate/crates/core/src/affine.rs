//! Reduced basis method for affinely parameterized, compliant, symmetric
//! elliptic problems: A(μ) = Σ θ_a^q(μ) A_q, f(μ) = Σ θ_f^q(μ) f_q, output
//! s(μ) = f(μ)ᵀ u(μ).

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Result, RomError};
use crate::linalg::{dot, DenseMatrix, Lu, SymBandMatrix};
use crate::pod::{correlation_matrix_with, numerical_rank, pod_vectors, symmetric_eig};

pub type Coefficient = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Closed box of admissible parameters, one interval per component.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterBox {
    pub bounds: Vec<(f64, f64)>,
}

impl ParameterBox {
    pub fn new(bounds: Vec<(f64, f64)>) -> Result<Self> {
        if bounds.is_empty()
            || bounds
                .iter()
                .any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
        {
            return Err(RomError::Problem(format!("invalid parameter box {bounds:?}")));
        }
        Ok(ParameterBox { bounds })
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn check(&self, mu: &[f64]) -> Result<()> {
        let inside = mu.len() == self.dim() && mu.iter().zip(&self.bounds).all(|(m, (a, b))| *m >= *a && *m <= *b);
        if !inside {
            return Err(RomError::Argument(format!(
                "parameter {mu:?} is outside the box {:?}",
                self.bounds
            )));
        }
        Ok(())
    }

    /// `k` points evenly spaced along a scalar box; log spacing when `log` is set.
    pub fn line(&self, k: usize, log: bool) -> Result<Vec<Vec<f64>>> {
        if self.dim() != 1 || k == 0 {
            return Err(RomError::Argument("line sampling needs a scalar box and k >= 1".into()));
        }
        let (a, b) = self.bounds[0];
        if log && !(a > 0.0) {
            return Err(RomError::Argument("log sampling needs a positive box".into()));
        }
        Ok((0..k)
            .map(|i| {
                let s = if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 };
                let v = match (i, log) {
                    (0, _) if k > 1 => a,
                    _ if k > 1 && i == k - 1 => b,
                    (_, true) => (a.ln() + s * (b.ln() - a.ln())).exp(),
                    (_, false) => a + s * (b - a),
                };
                vec![v.clamp(a, b)]
            })
            .collect())
    }
}

#[derive(Clone)]
pub struct AffineProblem {
    pub blocks: Vec<SymBandMatrix>,
    pub loads: Vec<Vec<f64>>,
    pub theta_a: Vec<Coefficient>,
    pub theta_f: Vec<Coefficient>,
    pub parameters: ParameterBox,
    /// Parameter whose energy product defines the reduced basis.
    pub reference: Vec<f64>,
}

impl fmt::Debug for AffineProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AffineProblem")
            .field("n_dofs", &self.n_dofs())
            .field("q_a", &self.blocks.len())
            .field("q_f", &self.loads.len())
            .field("parameters", &self.parameters)
            .finish()
    }
}

impl AffineProblem {
    pub fn new(
        blocks: Vec<SymBandMatrix>,
        loads: Vec<Vec<f64>>,
        theta_a: Vec<Coefficient>,
        theta_f: Vec<Coefficient>,
        parameters: ParameterBox,
        reference: Vec<f64>,
    ) -> Result<Self> {
        if blocks.is_empty() || loads.is_empty() {
            return Err(RomError::Problem("need at least one matrix and one load term".into()));
        }
        if blocks.len() != theta_a.len() || loads.len() != theta_f.len() {
            return Err(RomError::Problem(
                "every affine term needs one coefficient function".into(),
            ));
        }
        let (n, bw) = (blocks[0].n(), blocks[0].bandwidth());
        if blocks.iter().any(|b| b.n() != n || b.bandwidth() != bw) || loads.iter().any(|f| f.len() != n) {
            return Err(RomError::Problem("affine terms have inconsistent sizes".into()));
        }
        parameters.check(&reference)?;
        Ok(AffineProblem {
            blocks,
            loads,
            theta_a,
            theta_f,
            parameters,
            reference,
        })
    }

    pub fn n_dofs(&self) -> usize {
        self.blocks[0].n()
    }

    pub fn matrix(&self, mu: &[f64]) -> SymBandMatrix {
        let mut a = SymBandMatrix::zeros(self.n_dofs(), self.blocks[0].bandwidth());
        for (blk, th) in self.blocks.iter().zip(&self.theta_a) {
            a.axpy(th(mu), blk);
        }
        a
    }

    pub fn load(&self, mu: &[f64]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_dofs()];
        for (fq, th) in self.loads.iter().zip(&self.theta_f) {
            let c = th(mu);
            f.iter_mut().zip(fq).for_each(|(a, b)| *a += c * b);
        }
        f
    }

    /// −(κ u')' = 1 on (0, 1), u(0) = u(1) = 0, linear finite elements on
    /// `n_dofs + 1` uniform elements, κ = μ left of `interface` and 1 right
    /// of it. An element cut by the interface splits its stiffness between
    /// the two terms, so the problem is affine for any interface position.
    pub fn diffusion_1d(n_dofs: usize, interface: f64, parameters: ParameterBox) -> Result<Self> {
        if n_dofs == 0 || !(0.0..=1.0).contains(&interface) {
            return Err(RomError::Problem(format!(
                "bad 1D diffusion setup: {n_dofs} dofs, interface {interface}"
            )));
        }
        let h = 1.0 / (n_dofs + 1) as f64;
        let mut left = SymBandMatrix::zeros(n_dofs, 1);
        let mut right = SymBandMatrix::zeros(n_dofs, 1);
        for e in 0..=n_dofs {
            let a = (interface - e as f64 * h).clamp(0.0, h);
            for (m, w) in [(&mut left, a / (h * h)), (&mut right, (h - a) / (h * h))] {
                // element e joins nodes e and e+1; node k is unknown k-1
                let (i, j) = (e.checked_sub(1), (e < n_dofs).then_some(e));
                if let Some(i) = i {
                    m.add(i, i, w);
                }
                if let Some(j) = j {
                    m.add(j, j, w);
                }
                if let (Some(i), Some(j)) = (i, j) {
                    m.add(j, i, -w);
                }
            }
        }
        let one: Coefficient = Arc::new(|_| 1.0);
        let mu: Coefficient = Arc::new(|p| p[0]);
        let (blocks, theta_a) = if interface >= 1.0 {
            (vec![left], vec![mu])
        } else {
            (vec![left, right], vec![mu, one.clone()])
        };
        AffineProblem::new(blocks, vec![vec![h; n_dofs]], theta_a, vec![one], parameters, vec![1.0])
    }

    /// The built-in example: two subdomains split at 0.5, μ ∈ [0.1, 10].
    pub fn demo(n_dofs: usize) -> Result<Self> {
        Self::diffusion_1d(n_dofs, 0.5, ParameterBox::new(vec![(0.1, 10.0)])?)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FomSolution {
    pub u: Vec<f64>,
    pub output: f64,
    /// Normwise backward error in the ∞-norm after refinement.
    pub residual: f64,
}

const RESIDUAL_RTOL: f64 = 1e-12;

pub fn fom_solve(problem: &AffineProblem, mu: &[f64]) -> Result<FomSolution> {
    problem.parameters.check(mu)?;
    let a = problem.matrix(mu);
    let f = problem.load(mu);
    let chol = a
        .cholesky()
        .map_err(|e| RomError::Problem(format!("assembled operator at μ={mu:?}: {e}")))?;
    let mut u = chol.solve(&f);
    let a_norm = a.norm_inf();
    let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let f_norm = inf(&f);
    // normwise backward error ‖r‖ / (‖A‖‖u‖ + ‖f‖)
    let backward = |u: &[f64]| -> (Vec<f64>, f64) {
        let r: Vec<f64> = a.matvec(u).iter().zip(&f).map(|(au, b)| b - au).collect();
        let scale = (a_norm * inf(u) + f_norm).max(f64::MIN_POSITIVE);
        let e = inf(&r) / scale;
        (r, e)
    };
    let (mut r, mut rel) = backward(&u);
    for _ in 0..2 {
        if rel <= RESIDUAL_RTOL {
            break;
        }
        let du = chol.solve(&r);
        u.iter_mut().zip(&du).for_each(|(x, d)| *x += d);
        (r, rel) = backward(&u);
    }
    if rel > RESIDUAL_RTOL {
        log::warn!("full-order backward error {rel:.2e} at μ={mu:?} above {RESIDUAL_RTOL:e}");
    }
    Ok(FomSolution {
        output: dot(&f, &u),
        u,
        residual: rel,
    })
}

/// Everything the online stage needs: N×N blocks, N-vectors and the
/// coefficient functions. Nothing of full-order size.
#[derive(Clone)]
pub struct ReducedAffine {
    pub blocks: Vec<DenseMatrix>,
    pub loads: Vec<Vec<f64>>,
    pub theta_a: Vec<Coefficient>,
    pub theta_f: Vec<Coefficient>,
    pub parameters: ParameterBox,
}

impl fmt::Debug for ReducedAffine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ReducedAffine")
            .field("n", &self.n())
            .field("blocks", &self.blocks)
            .finish()
    }
}

impl ReducedAffine {
    pub fn n(&self) -> usize {
        self.loads[0].len()
    }

    /// Leading `n`-mode sub-blocks; the basis is hierarchical.
    pub fn truncated(&self, n: usize) -> Result<ReducedAffine> {
        if n == 0 || n > self.n() {
            return Err(RomError::Argument(format!("cannot truncate {} modes to {n}", self.n())));
        }
        Ok(ReducedAffine {
            blocks: self
                .blocks
                .iter()
                .map(|b| DenseMatrix::from_fn(n, n, |i, j| b[(i, j)]))
                .collect(),
            loads: self.loads.iter().map(|f| f[..n].to_vec()).collect(),
            ..self.clone()
        })
    }
}

#[derive(Clone, Debug)]
pub struct RBSpace {
    /// Basis vectors, orthonormal in the energy product at `reference`.
    pub basis: Vec<Vec<f64>>,
    pub reduced: ReducedAffine,
    /// Energy-product POD spectrum of the training snapshots.
    pub eigenvalues: Vec<f64>,
    pub training: Vec<Vec<f64>>,
    pub reference: Vec<f64>,
}

impl RBSpace {
    pub fn n(&self) -> usize {
        self.basis.len()
    }

    /// Full-order vector Σ c_i ξ_i.
    pub fn expand(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.basis[0].len()];
        for (c, xi) in coeffs.iter().zip(&self.basis) {
            u.iter_mut().zip(xi).for_each(|(a, b)| *a += c * b);
        }
        u
    }
}

pub fn rb_offline(problem: &AffineProblem, training: &[Vec<f64>], n: usize) -> Result<RBSpace> {
    if training.len() < n || n == 0 {
        return Err(RomError::Argument(format!(
            "{} training parameters for {n} modes",
            training.len()
        )));
    }
    let snaps: Vec<Vec<f64>> = training
        .par_iter()
        .map(|mu| fom_solve(problem, mu).map(|s| s.u))
        .collect::<Result<_>>()?;
    let energy = problem.matrix(&problem.reference);
    let pairs: Vec<(&Vec<f64>, Vec<f64>)> = snaps.iter().map(|s| (s, energy.matvec(s))).collect();
    let c = correlation_matrix_with(&pairs, |a, b| dot(a.0, &b.1))?;
    let eig = symmetric_eig(&c)?;
    let rank = numerical_rank(&eig.values);
    if n > rank {
        return Err(RomError::Rank(format!(
            "requested {n} modes but the training snapshots have rank {rank}"
        )));
    }
    let basis = pod_vectors(&snaps, &eig, n, |a, b| energy.quad_form(a, b))?;

    let blocks = problem
        .blocks
        .iter()
        .map(|aq| {
            let images: Vec<Vec<f64>> = basis.iter().map(|xi| aq.matvec(xi)).collect();
            DenseMatrix::from_fn(n, n, |i, j| dot(&basis[i], &images[j]))
        })
        .collect();
    let loads = problem
        .loads
        .iter()
        .map(|fq| basis.iter().map(|xi| dot(xi, fq)).collect())
        .collect();
    Ok(RBSpace {
        basis,
        reduced: ReducedAffine {
            blocks,
            loads,
            theta_a: problem.theta_a.clone(),
            theta_f: problem.theta_f.clone(),
            parameters: problem.parameters.clone(),
        },
        eigenvalues: eig.values,
        training: training.to_vec(),
        reference: problem.reference.clone(),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RbSolution {
    pub coeffs: Vec<f64>,
    pub output: f64,
}

/// Online solve. Takes only the reduced data, so its cost is independent of
/// the full-order dimension.
pub fn rb_online(space: &ReducedAffine, mu: &[f64]) -> Result<RbSolution> {
    space.parameters.check(mu)?;
    let n = space.n();
    let mut a = DenseMatrix::zeros(n, n);
    for (blk, th) in space.blocks.iter().zip(&space.theta_a) {
        let c = th(mu);
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += c * blk[(i, j)];
            }
        }
    }
    let mut f = vec![0.0; n];
    for (fq, th) in space.loads.iter().zip(&space.theta_f) {
        let c = th(mu);
        f.iter_mut().zip(fq).for_each(|(x, y)| *x += c * y);
    }
    let lu = Lu::new(&a).map_err(|e| RomError::Stability(format!("reduced operator at μ={mu:?}: {e}")))?;
    let coeffs = lu.solve(&f);
    Ok(RbSolution {
        output: dot(&coeffs, &f),
        coeffs,
    })
}
