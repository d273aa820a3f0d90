//! The manifold-constrained magnetic integrator.
//!
//! One step from (qₙ, pₙ) ∈ T*M runs the five-equation update
//!
//! ```text
//!     p̄        = pₙ − (ε/2) G(qₙ)ᵀ μ            (fibre momentum shift)
//!     (q′, p̄′) = Φ1 ∘ Φ2 ∘ Φ1 (qₙ, p̄)           (Euclidean magnetic step)
//!     0        = g(q′)                           (position constraint, fixes μ)
//!     pₙ₊₁     = p̄′ − (ε/2) G(q′)ᵀ μ′            (cotangent momentum shift)
//!     0        = G(q′) pₙ₊₁                      (momentum constraint, fixes μ′)
//! ```
//!
//! μ is found by Newton's method. The position output of the Euclidean step is
//! affine in the input momentum (the first kick shifts p independently of μ,
//! the drift is linear in p, and the final kick leaves q fixed), so the
//! response of q′ to μ is exactly C = −(ε/2) M(ε) G(qₙ)ᵀ and the Newton
//! Jacobian ∂g(q′)/∂μ = G(q′) C is analytic. μ′ then solves the normal equations
//! (ε/2) G(q′)G(q′)ᵀ μ′ = G(q′) p̄′ in closed form, which makes pₙ₊₁ the exact
//! orthogonal projection of p̄′ onto the cotangent space.

use alloc::vec::Vec;

use crate::magnetic::{euclidean_magnetic_step, PhaseState, SpectralFactorization};
use crate::target::Target;
use crate::{max_abs, Error, Matrix, Vector};

/// Step size, step count, and Newton controls for one trajectory.
#[derive(Debug, Clone)]
pub struct IntegratorParams {
    /// Signed step size ε; the sign is drawn by the sampler.
    pub step_size: f64,
    pub num_steps: usize,
    /// Newton tolerance on ‖g(q′)‖_∞.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
}

impl IntegratorParams {
    pub fn new(step_size: f64, num_steps: usize) -> Self {
        Self {
            step_size,
            num_steps,
            newton_tol: 1e-10,
            newton_max_iter: 50,
        }
    }

    pub fn reversed(&self) -> Self {
        Self {
            step_size: -self.step_size,
            ..self.clone()
        }
    }

    fn validate(&self) {
        assert!(self.step_size != 0.0, "step size must be non-zero");
        assert!(self.num_steps >= 1);
        assert!(self.newton_tol > 0.0);
    }
}

/// Multipliers produced by one constrained step.
#[derive(Debug, Clone)]
pub struct MultiplierSolve {
    pub mu: Vector,
    pub mu_prime: Vector,
    pub newton_iters: usize,
    pub converged: bool,
}

struct NewtonOutcome {
    mu: Vector,
    iters: usize,
    /// Position output of the Euclidean step at the converged μ.
    q_next: Vector,
    /// Momentum after the first kick and the μ shift, entering the drift.
    kicked: Vector,
}

fn newton_solve(
    q: &Vector,
    p: &Vector,
    target: &dyn Target,
    fact: &SpectralFactorization,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<NewtonOutcome, Error> {
    let man = target.manifold();
    let k = man.constraint_dim();

    let grad0 = target.grad_potential(q);
    if !grad0.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let w0 = p - &grad0 * (eps * 0.5);
    let base_q = q + fact.apply_shift(eps, &w0);

    if k == 0 {
        return Ok(NewtonOutcome {
            mu: Vector::zeros(0),
            iters: 0,
            q_next: base_q,
            kicked: w0,
        });
    }

    let g0t = man.jacobian(q).transpose();
    // exact linear response of q′ to μ
    let mut c_mat = Matrix::zeros(q.len(), k);
    for j in 0..k {
        let col = fact.apply_shift(eps, &g0t.column(j).into_owned()) * (-eps * 0.5);
        c_mat.column_mut(j).copy_from(&col);
    }

    let mut mu = Vector::zeros(k);
    let mut q_next = base_q.clone();
    let mut iters = 0;
    loop {
        let residual_vec = man.constraint(&q_next);
        let residual = max_abs(&residual_vec);
        if !residual.is_finite() {
            return Err(Error::ConvergenceFailure {
                iters,
                residual,
                step: None,
            });
        }
        if residual <= tol {
            let kicked = &w0 - &g0t * &mu * (eps * 0.5);
            return Ok(NewtonOutcome {
                mu,
                iters,
                q_next,
                kicked,
            });
        }
        if iters >= max_iter {
            return Err(Error::ConvergenceFailure {
                iters,
                residual,
                step: None,
            });
        }
        let jac = man.jacobian(&q_next) * &c_mat;
        let delta = jac.lu().solve(&residual_vec).ok_or(Error::ConvergenceFailure {
            iters,
            residual,
            step: None,
        })?;
        mu -= delta;
        q_next = &base_q + &c_mat * &mu;
        iters += 1;
    }
}

/// Finds the position multiplier μ such that the Euclidean magnetic step applied
/// to (q, p − (ε/2) G(q)ᵀ μ) lands on the manifold. Returns μ and the number of
/// Newton iterations; zero iterations means the unshifted step was already
/// feasible.
pub fn newton_lagrange(
    q: &Vector,
    p: &Vector,
    target: &dyn Target,
    fact: &SpectralFactorization,
    eps: f64,
    tol: f64,
    max_iter: usize,
) -> Result<(Vector, usize), Error> {
    let outcome = newton_solve(q, p, target, fact, eps, tol, max_iter)?;
    Ok((outcome.mu, outcome.iters))
}

/// Solves the normal equations (ε/2) G Gᵀ μ′ = G p̄ for the momentum
/// multiplier. The resulting pₙ₊₁ = p̄ − (ε/2) Gᵀ μ′ is the orthogonal projection
/// of p̄ onto the kernel of G.
pub fn solve_mu_prime(
    _q_next: &Vector,
    p_bar: &Vector,
    g_next: &Matrix,
    eps: f64,
) -> Result<Vector, Error> {
    assert!(eps != 0.0);
    let k = g_next.nrows();
    if k == 0 {
        return Ok(Vector::zeros(0));
    }
    let gram = g_next * g_next.transpose();
    let rhs = g_next * p_bar;
    let solved = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.clone().lu().solve(&rhs));
    match solved {
        Some(x) => Ok(x * (2.0 / eps)),
        None => {
            let smallest_sv = g_next.clone().svd(false, false).singular_values.min();
            Err(Error::RankDeficient { smallest_sv })
        }
    }
}

/// One constrained magnetic step. With no constraints (k = 0) this is exactly the
/// Euclidean magnetic step.
pub fn constrained_step(
    state: &PhaseState,
    target: &dyn Target,
    fact: &SpectralFactorization,
    params: &IntegratorParams,
) -> Result<(PhaseState, MultiplierSolve), Error> {
    params.validate();
    let man = target.manifold();
    let eps = params.step_size;

    if man.constraint_dim() == 0 {
        let next = euclidean_magnetic_step(state, |q| target.grad_potential(q), fact, eps)?;
        return Ok((
            next,
            MultiplierSolve {
                mu: Vector::zeros(0),
                mu_prime: Vector::zeros(0),
                newton_iters: 0,
                converged: true,
            },
        ));
    }

    let outcome = newton_solve(
        &state.position,
        &state.momentum,
        target,
        fact,
        eps,
        params.newton_tol,
        params.newton_max_iter,
    )?;

    // finish the Euclidean step on the shifted momentum: drift, then second kick
    let drifted = fact.apply_exp(eps, &outcome.kicked);
    let grad1 = target.grad_potential(&outcome.q_next);
    if !grad1.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    let p_bar = drifted - grad1 * (eps * 0.5);

    let g_next = man.jacobian(&outcome.q_next);
    let mu_prime = solve_mu_prime(&outcome.q_next, &p_bar, &g_next, eps)?;
    let p_next = &p_bar - g_next.transpose() * &mu_prime * (eps * 0.5);

    Ok((
        PhaseState::new(outcome.q_next, p_next),
        MultiplierSolve {
            mu: outcome.mu,
            mu_prime,
            newton_iters: outcome.iters,
            converged: true,
        },
    ))
}

/// Result of an N-step trajectory.
#[derive(Debug, Clone)]
pub struct Integration {
    pub state: PhaseState,
    /// Visited states including the initial one, when recording was requested.
    pub trajectory: Option<Vec<PhaseState>>,
    pub total_newton_iters: usize,
}

/// Runs N constrained steps. Trajectory recording is opt-in; failures carry the
/// step index at which they occurred.
pub fn integrate(
    state: &PhaseState,
    target: &dyn Target,
    fact: &SpectralFactorization,
    params: &IntegratorParams,
    record_trajectory: bool,
) -> Result<Integration, Error> {
    params.validate();
    let mut current = state.clone();
    let mut trajectory = if record_trajectory {
        let mut t = Vec::with_capacity(params.num_steps + 1);
        t.push(current.clone());
        Some(t)
    } else {
        None
    };
    let mut total_newton_iters = 0;
    for n in 0..params.num_steps {
        match constrained_step(&current, target, fact, params) {
            Ok((next, solve)) => {
                total_newton_iters += solve.newton_iters;
                current = next;
                if let Some(t) = trajectory.as_mut() {
                    t.push(current.clone());
                }
            }
            Err(Error::ConvergenceFailure {
                iters, residual, ..
            }) => {
                return Err(Error::ConvergenceFailure {
                    iters,
                    residual,
                    step: Some(n),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Integration {
        state: current,
        trajectory,
        total_newton_iters,
    })
}
