//! Effective sample size and the numerical structure-check battery.
//!
//! ESS uses the initial monotone positive sequence estimator on pair sums of
//! empirical autocorrelations: ESS = n / (1 + 2 Σ ρ̂ₜ) with the sum truncated at
//! the first non-positive, non-monotone pair. Values above n are legitimate
//! (negatively correlated chains) and are clamped at the caller's ceiling.
//!
//! The check battery turns the integrator's structural properties
//! (reversibility, symplecticness, second order, constraint feasibility) into
//! reproducible numerical verdicts. Thresholds are data carried in [`CheckThresholds`], not
//! constants buried in code, so a report always names the gate it was held to.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::integrator::{constrained_step, integrate, IntegratorParams};
use crate::magnetic::{
    euclidean_magnetic_step, MagneticField, PhaseState, SkewMatrix, SpectralFactorization,
};
use crate::manifold::{feasibility_residual, project_generic, sample_momentum};
use crate::target::Target;
use crate::{max_abs, Error, Matrix, Vector};

/// Smallest ESS reported after clamping.
const ESS_FLOOR: f64 = 1e-12;

/// ESS of one scalar series, clamped to (0, ceiling].
pub fn effective_sample_size(series: &[f64], ceiling: f64) -> Result<f64, Error> {
    let n = series.len();
    if n < 10 {
        return Err(Error::DegenerateSeries("series shorter than 10 points"));
    }
    assert!(ceiling > 0.0);
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let autocov = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / nf
    };
    let gamma0 = autocov(0);
    if gamma0 <= 1e-30 * (1.0 + mean * mean) {
        return Err(Error::DegenerateSeries("zero variance"));
    }

    // Geyer pair sums Γ_m = ρ_{2m} + ρ_{2m+1}: keep while positive, enforce
    // monotonicity, stop at the data horizon.
    let mut iact = -1.0;
    let mut prev = f64::INFINITY;
    let mut m = 0usize;
    loop {
        let t0 = 2 * m;
        if t0 >= n {
            break;
        }
        let t1 = t0 + 1;
        let mut pair = autocov(t0) / gamma0;
        if t1 < n {
            pair += autocov(t1) / gamma0;
        }
        if pair <= 0.0 {
            break;
        }
        let capped = pair.min(prev);
        prev = capped;
        iact += 2.0 * capped;
        m += 1;
    }

    let ess = if iact <= ESS_FLOOR {
        // strong negative correlation: effectively superefficient
        ceiling
    } else {
        nf / iact
    };
    Ok(ess.clamp(ESS_FLOOR, ceiling))
}

/// Per-coordinate ESS summary of a samples matrix (rows = draws).
#[derive(Debug, Clone)]
pub struct EssReport {
    pub per_coordinate: Vec<f64>,
    pub min_ess: f64,
    pub mean_ess: f64,
    /// min ESS / wall seconds, when a wall time was supplied.
    pub min_per_second: Option<f64>,
    pub mean_per_second: Option<f64>,
    pub truncation_ceiling: f64,
}

pub fn ess_report(
    samples: &Matrix,
    ceiling: f64,
    wall_time_seconds: Option<f64>,
) -> Result<EssReport, Error> {
    assert!(samples.ncols() >= 1);
    let mut per_coordinate = Vec::with_capacity(samples.ncols());
    for j in 0..samples.ncols() {
        let col: Vec<f64> = samples.column(j).iter().copied().collect();
        // a coordinate pinned by the constraints (e.g. a row difference of an
        // affine design forcing qᵢ = const) is deterministic: report the ceiling
        // instead of failing the whole matrix
        match effective_sample_size(&col, ceiling) {
            Ok(e) => per_coordinate.push(e),
            Err(Error::DegenerateSeries("zero variance")) => per_coordinate.push(ceiling),
            Err(e) => return Err(e),
        }
    }
    let min_ess = per_coordinate.iter().copied().fold(f64::INFINITY, f64::min);
    let mean_ess = per_coordinate.iter().sum::<f64>() / per_coordinate.len() as f64;
    let per_sec = |x: f64| wall_time_seconds.filter(|t| *t > 0.0).map(|t| x / t);
    Ok(EssReport {
        min_per_second: per_sec(min_ess),
        mean_per_second: per_sec(mean_ess),
        per_coordinate,
        min_ess,
        mean_ess,
        truncation_ceiling: ceiling,
    })
}

/// One structure check outcome. `passed` holds exactly when
/// `max_residual <= threshold`.
#[derive(Debug, Clone)]
pub struct CheckReport {
    pub name: String,
    pub max_residual: f64,
    pub threshold: f64,
    pub passed: bool,
    pub details: String,
}

impl CheckReport {
    pub fn evaluate(name: &str, max_residual: f64, threshold: f64, details: String) -> Self {
        Self {
            name: String::from(name),
            max_residual,
            threshold,
            passed: max_residual <= threshold,
            details,
        }
    }

    /// Line format consumed by the harness: `name residual threshold PASS|FAIL`.
    pub fn to_line(&self) -> String {
        format!(
            "{} {:.6e} {:.6e} {}",
            self.name,
            self.max_residual,
            self.threshold,
            if self.passed { "PASS" } else { "FAIL" }
        )
    }
}

/// Gate values for the battery. These are data so that acceptance runs are
/// reproducible and reports always carry the thresholds they were held to.
#[derive(Debug, Clone)]
pub struct CheckThresholds {
    pub euclidean_reversibility: f64,
    pub manifold_reversibility: f64,
    pub euclidean_symplectic: f64,
    pub manifold_symplectic: f64,
    /// Allowed deviation of the energy-error slope from 2.
    pub order_slope_tolerance: f64,
    pub feasibility: f64,
}

impl Default for CheckThresholds {
    fn default() -> Self {
        Self {
            euclidean_reversibility: 1e-10,
            manifold_reversibility: 1e-8,
            euclidean_symplectic: 1e-6,
            manifold_symplectic: 1e-5,
            order_slope_tolerance: 0.2,
            feasibility: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckParams {
    pub seed: u64,
    pub cases: usize,
    pub thresholds: CheckThresholds,
}

impl CheckParams {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            cases: 100,
            thresholds: CheckThresholds::default(),
        }
    }
}

fn random_quadratic(m: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(m, |_, _| 0.3 + rng.random::<f64>())
}

fn random_state(m: usize, rng: &mut ChaCha8Rng) -> PhaseState {
    use rand_distr::{Distribution, StandardNormal};
    PhaseState::new(
        Vector::from_fn(m, |_, _| StandardNormal.sample(rng)),
        Vector::from_fn(m, |_, _| StandardNormal.sample(rng)),
    )
}

/// Round-trip residual of an arbitrary step map over randomized Euclidean cases.
/// The map is injectable so that broken integrators can be detected by tests and
/// self-checks.
pub fn check_map_reversibility<F>(
    name: &str,
    params: &CheckParams,
    threshold: f64,
    mut map: F,
) -> CheckReport
where
    F: FnMut(&PhaseState, &Vector, &SpectralFactorization, f64) -> Result<PhaseState, Error>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for case in 0..params.cases {
        let m = 2 + (case % 5);
        let l = SkewMatrix::from_gaussian(m, &mut rng);
        let fact = SpectralFactorization::factorize(&l).expect("factorization failed");
        let weights = random_quadratic(m, &mut rng);
        let state = random_state(m, &mut rng);
        let eps = 0.001 + 0.3 * rng.random::<f64>();
        let residual = match map(&state, &weights, &fact, eps)
            .and_then(|fwd| map(&fwd, &weights, &fact, -eps))
        {
            Ok(back) => (&back.position - &state.position)
                .amax()
                .max((&back.momentum - &state.momentum).amax()),
            Err(_) => f64::INFINITY,
        };
        if residual > worst {
            worst = residual;
            worst_case = format!("case {case} (m = {m}, eps = {eps:.4})");
        }
    }
    CheckReport::evaluate(name, worst, threshold, worst_case)
}

/// Reversibility of the Euclidean magnetic step on random fields and quadratics.
pub fn check_euclidean_reversibility(params: &CheckParams) -> CheckReport {
    check_map_reversibility(
        "euclidean_reversibility",
        params,
        params.thresholds.euclidean_reversibility,
        |state, weights, fact, eps| {
            let w = weights.clone();
            euclidean_magnetic_step(state, move |q: &Vector| q.component_mul(&w), fact, eps)
        },
    )
}

/// Finite-difference Jacobian preservation of J_mag = [[L, I], [−I, 0]] by one
/// Euclidean step: ‖Jᵀ J_mag J − J_mag‖_max with central differences.
pub fn check_euclidean_symplectic(params: &CheckParams) -> CheckReport {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    let cases = params.cases.min(25);
    for case in 0..cases {
        let m = 2 + (case % 4);
        let l = SkewMatrix::from_gaussian(m, &mut rng);
        let fact = SpectralFactorization::factorize(&l).expect("factorization failed");
        let weights = random_quadratic(m, &mut rng);
        let state = random_state(m, &mut rng);
        let eps = 0.05 + 0.2 * rng.random::<f64>();

        let grad = |q: &Vector| q.component_mul(&weights);
        let map = |z: &Vector| -> Vector {
            let st = PhaseState::new(z.rows(0, m).into_owned(), z.rows(m, m).into_owned());
            let out = euclidean_magnetic_step(&st, grad, &fact, eps).expect("step failed");
            let mut flat = Vector::zeros(2 * m);
            flat.rows_mut(0, m).copy_from(&out.position);
            flat.rows_mut(m, m).copy_from(&out.momentum);
            flat
        };
        let mut z0 = Vector::zeros(2 * m);
        z0.rows_mut(0, m).copy_from(&state.position);
        z0.rows_mut(m, m).copy_from(&state.momentum);
        let mut jac = Matrix::zeros(2 * m, 2 * m);
        for j in 0..2 * m {
            let mut zp = z0.clone();
            let mut zm = z0.clone();
            zp[j] += h;
            zm[j] -= h;
            jac.column_mut(j).copy_from(&((map(&zp) - map(&zm)) / (2.0 * h)));
        }
        let j_mag = magnetic_structure_matrix(l.matrix());
        let residual = (jac.transpose() * &j_mag * &jac - &j_mag).amax();
        if residual > worst {
            worst = residual;
            worst_case = format!("case {case} (m = {m}, eps = {eps:.4})");
        }
    }
    CheckReport::evaluate(
        "euclidean_symplectic",
        worst,
        params.thresholds.euclidean_symplectic,
        worst_case,
    )
}

/// J_mag = [[L, I], [−I, 0]].
pub fn magnetic_structure_matrix(l: &Matrix) -> Matrix {
    let m = l.nrows();
    let mut j = Matrix::zeros(2 * m, 2 * m);
    j.view_mut((0, 0), (m, m)).copy_from(l);
    j.view_mut((0, m), (m, m)).copy_from(&Matrix::identity(m, m));
    j.view_mut((m, 0), (m, m))
        .copy_from(&(-Matrix::identity(m, m)));
    j
}

/// Forward-then-backward residual of the constrained integrator over random
/// states, fields, and step sizes in [1e−3, 1e−1], for every supplied target.
pub fn check_manifold_reversibility(
    targets: &[(String, Arc<dyn Target>)],
    params: &CheckParams,
) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for (name, target) in targets {
        let m = target.dim();
        for case in 0..params.cases {
            let l = SkewMatrix::from_gaussian(m, &mut rng);
            let field = MagneticField::new(l).expect("factorization failed");
            let q = target.manifold().random_point(&mut rng);
            let p = sample_momentum(target.manifold(), &q, &mut rng);
            let state = PhaseState::new(q, p);
            let eps = 0.001 + 0.099 * rng.random::<f64>();
            let mut iparams = IntegratorParams::new(eps, 5);
            iparams.newton_tol = 1e-12;
            let residual = match integrate(&state, target.as_ref(), field.factorization(), &iparams, false)
                .and_then(|fwd| {
                    integrate(
                        &fwd.state,
                        target.as_ref(),
                        field.factorization(),
                        &iparams.reversed(),
                        false,
                    )
                }) {
                Ok(back) => (&back.state.position - &state.position)
                    .amax()
                    .max((&back.state.momentum - &state.momentum).amax()),
                Err(_) => f64::INFINITY,
            };
            if residual > worst {
                worst = residual;
                worst_case = format!("{name} case {case} (eps = {eps:.4})");
            }
        }
    }
    CheckReport::evaluate(
        "manifold_reversibility",
        worst,
        params.thresholds.manifold_reversibility,
        worst_case,
    )
}

/// Builds an orthonormal-ish pair of tangent directions of T*M at `state` and
/// measures how the restricted magnetic 2-form changes across one constrained
/// step, with the directions propagated by central differences.
pub fn check_manifold_symplectic(
    targets: &[(String, Arc<dyn Target>)],
    params: &CheckParams,
) -> CheckReport {
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for (name, target) in targets {
        let man = target.manifold();
        let m = target.dim();
        let cases = params.cases.min(20);
        for case in 0..cases {
            let l = SkewMatrix::from_gaussian(m, &mut rng);
            let field = MagneticField::new(l.clone()).expect("factorization failed");
            let q = man.random_point(&mut rng);
            let p = sample_momentum(man, &q, &mut rng);
            let eps = 0.02 + 0.08 * rng.random::<f64>();
            let mut iparams = IntegratorParams::new(eps, 1);
            iparams.newton_tol = 1e-13;

            // tangent direction of T*M: G δq = 0 and G δp + (dG[δq]) p = 0
            let tangent_dir = |rng: &mut ChaCha8Rng| -> Vector {
                use rand_distr::{Distribution, StandardNormal};
                let a = Vector::from_fn(m, |_, _| StandardNormal.sample(rng));
                let b = Vector::from_fn(m, |_, _| StandardNormal.sample(rng));
                let dq = man.project_cotangent(&q, &a);
                let fd = (man.jacobian(&(&q + &dq * h)) - man.jacobian(&(&q - &dq * h))) / (2.0 * h);
                let rhs = &fd * &p;
                // δp = P b − Gᵀ(GGᵀ)⁻¹ rhs
                let mut dp = man.project_cotangent(&q, &b);
                if man.constraint_dim() > 0 {
                    let g = man.jacobian(&q);
                    let gram = &g * g.transpose();
                    let x = gram.lu().solve(&rhs).expect("gram solve failed");
                    dp -= g.transpose() * x;
                }
                let mut dir = Vector::zeros(2 * m);
                dir.rows_mut(0, m).copy_from(&dq);
                dir.rows_mut(m, m).copy_from(&dp);
                let scale = 1.0 / dir.norm();
                dir * scale
            };
            let d1 = tangent_dir(&mut rng);
            let d2 = tangent_dir(&mut rng);

            let step = |z: &Vector| -> Result<Vector, Error> {
                let st = PhaseState::new(z.rows(0, m).into_owned(), z.rows(m, m).into_owned());
                let (out, _) = constrained_step(&st, target.as_ref(), field.factorization(), &iparams)?;
                let mut flat = Vector::zeros(2 * m);
                flat.rows_mut(0, m).copy_from(&out.position);
                flat.rows_mut(m, m).copy_from(&out.momentum);
                Ok(flat)
            };
            let mut z0 = Vector::zeros(2 * m);
            z0.rows_mut(0, m).copy_from(&q);
            z0.rows_mut(m, m).copy_from(&p);

            let propagate = |dir: &Vector| -> Result<Vector, Error> {
                let plus = step(&(&z0 + dir * h))?;
                let minus = step(&(&z0 - dir * h))?;
                Ok((plus - minus) / (2.0 * h))
            };
            let residual = match (propagate(&d1), propagate(&d2)) {
                (Ok(t1), Ok(t2)) => {
                    let j_mag = magnetic_structure_matrix(l.matrix());
                    let before = (d1.transpose() * &j_mag * &d2)[0];
                    let after = (t1.transpose() * &j_mag * &t2)[0];
                    Float::abs(after - before)
                }
                _ => f64::INFINITY,
            };
            if residual > worst {
                worst = residual;
                worst_case = format!("{name} case {case} (eps = {eps:.4})");
            }
        }
    }
    CheckReport::evaluate(
        "manifold_symplectic",
        worst,
        params.thresholds.manifold_symplectic,
        worst_case,
    )
}

/// Least-squares slope of ln(energy error) against ln(ε) at fixed total time
/// T = 1 over the ladder ε ∈ {0.2, 0.1, 0.05, 0.025, 0.0125}. A symmetric
/// second-order integrator gives slope ≈ 2.
pub fn check_order(targets: &[(String, Arc<dyn Target>)], params: &CheckParams) -> CheckReport {
    let ladder = [0.2, 0.1, 0.05, 0.025, 0.0125];
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for (name, target) in targets {
        let m = target.dim();
        let l = SkewMatrix::from_gaussian(m, &mut rng);
        let field = MagneticField::new(l).expect("factorization failed");
        // max drift over a few random states keeps accidental cancellations of
        // the leading ε² term from polluting the slope
        let states: Vec<PhaseState> = (0..5)
            .map(|_| {
                let q = target.manifold().random_point(&mut rng);
                let p = sample_momentum(target.manifold(), &q, &mut rng);
                PhaseState::new(q, p)
            })
            .collect();
        let mut lx = Vec::new();
        let mut ly = Vec::new();
        for &eps in &ladder {
            let steps = (1.0 / eps) as usize;
            let mut drift = 0.0f64;
            for state in &states {
                let iparams = IntegratorParams::new(eps, steps);
                let out = integrate(state, target.as_ref(), field.factorization(), &iparams, false)
                    .expect("order ladder integration failed");
                drift = drift
                    .max(Float::abs(target.hamiltonian(&out.state) - target.hamiltonian(state)));
            }
            lx.push(Float::ln(eps));
            ly.push(Float::ln(drift.max(1e-300)));
        }
        let slope = least_squares_slope(&lx, &ly);
        let residual = Float::abs(slope - 2.0);
        if residual > worst {
            worst = residual;
            worst_case = format!("{name}: slope {slope:.3}");
        }
    }
    CheckReport::evaluate(
        "order_energy_slope",
        worst,
        params.thresholds.order_slope_tolerance,
        worst_case,
    )
}

pub fn least_squares_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Runs 10³ constrained steps at ε = 0.01 from each target's default start and
/// reports the worst of ‖g(q)‖_∞ and ‖G(q) p‖_∞ seen along the way.
pub fn check_feasibility(targets: &[(String, Arc<dyn Target>)], params: &CheckParams) -> CheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for (name, target) in targets {
        let man = target.manifold();
        let m = target.dim();
        let l = SkewMatrix::from_gaussian(m, &mut rng);
        let field = MagneticField::new(l).expect("factorization failed");
        let q = target.initial_point();
        let p = sample_momentum(man, &q, &mut rng);
        let mut state = PhaseState::new(q, p);
        let iparams = IntegratorParams::new(0.01, 1);
        for step in 0..1000 {
            match constrained_step(&state, target.as_ref(), field.factorization(), &iparams) {
                Ok((next, _)) => state = next,
                Err(_) => {
                    worst = f64::INFINITY;
                    worst_case = format!("{name}: integration failed at step {step}");
                    break;
                }
            }
            let g_res = feasibility_residual(man, &state.position);
            let p_res = if man.constraint_dim() > 0 {
                max_abs(&(man.jacobian(&state.position) * &state.momentum))
            } else {
                0.0
            };
            let res = g_res.max(p_res);
            if res > worst {
                worst = res;
                worst_case = format!("{name}: step {step}");
            }
        }
    }
    CheckReport::evaluate(
        "feasibility_drift",
        worst,
        params.thresholds.feasibility,
        worst_case,
    )
}

/// Which battery to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckSuite {
    /// Euclidean step checks only.
    Core,
    /// Constrained integrator checks only.
    Constrained,
    All,
}

/// The standard battery over the built-in target catalog.
pub fn standard_battery(suite: CheckSuite, seed: u64) -> Vec<CheckReport> {
    let params = CheckParams::new(seed);
    let targets = crate::catalog::check_targets(seed ^ 0x5eed);
    let feas_targets = crate::catalog::feasibility_targets(seed ^ 0xfea5);
    let order_targets = crate::catalog::order_targets(seed ^ 0x04de);
    let mut reports = Vec::new();
    if suite != CheckSuite::Constrained {
        reports.push(check_euclidean_reversibility(&params));
        reports.push(check_euclidean_symplectic(&params));
    }
    if suite != CheckSuite::Core {
        reports.push(check_manifold_reversibility(&targets, &params));
        reports.push(check_manifold_symplectic(&targets, &params));
        reports.push(check_order(&order_targets, &params));
        reports.push(check_feasibility(&feas_targets, &params));
    }
    reports
}

/// Verifies that the default generic projection fallback agrees with closed
/// forms; exposed for the battery's own sanity rather than as a theorem check.
pub fn projection_consistency(target: &dyn Target, seed: u64, cases: usize) -> f64 {
    use rand_distr::{Distribution, StandardNormal};
    let man = target.manifold();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let q = man.random_point(&mut rng);
        let v = Vector::from_fn(man.ambient_dim(), |_, _| StandardNormal.sample(&mut rng));
        let closed = man.project_cotangent(&q, &v);
        let generic = project_generic(man, &q, &v);
        worst = worst.max((closed - generic).amax());
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::magnetic::flow_kinetic;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1_series(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (1.0 - phi * phi).sqrt();
        let mut x = 0.0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            x = phi * x + scale * z;
            out.push(x);
        }
        out
    }

    #[test]
    fn ess_of_white_noise_is_near_n() {
        let series = ar1_series(0.0, 10_000, 1);
        let ess = effective_sample_size(&series, 1e9).unwrap();
        assert!(
            (0.8 * 10_000.0..=1.2 * 10_000.0).contains(&ess),
            "white-noise ESS {ess}"
        );
    }

    #[test]
    fn ess_of_ar1_matches_integrated_autocorrelation() {
        // IACT of AR(1) with φ = 0.5 is (1+φ)/(1−φ) = 3, so ESS ≈ n/3
        let n = 100_000;
        let series = ar1_series(0.5, n, 2);
        let ess = effective_sample_size(&series, 1e9).unwrap();
        let expected = n as f64 / 3.0;
        assert!(
            (ess - expected).abs() <= 0.1 * expected,
            "AR(1) ESS {ess} vs expected {expected}"
        );
    }

    #[test]
    fn ess_rejects_constant_series() {
        let series = vec![2.5; 100];
        match effective_sample_size(&series, 1e4) {
            Err(Error::DegenerateSeries(_)) => {}
            other => panic!("expected DegenerateSeries, got {other:?}"),
        }
    }

    #[test]
    fn ess_rejects_short_series() {
        let series = vec![1.0, 2.0, 3.0];
        assert!(matches!(
            effective_sample_size(&series, 1e4),
            Err(Error::DegenerateSeries(_))
        ));
    }

    #[test]
    fn ess_respects_ceiling_under_negative_correlation() {
        let n = 50_000;
        let series = ar1_series(-0.6, n, 3);
        let ceiling = 1.5 * n as f64;
        let ess = effective_sample_size(&series, ceiling).unwrap();
        assert!(ess > n as f64, "negative correlation should push ESS above n");
        assert!(ess <= ceiling);
    }

    /// Same truncation rule, written as a direct full-autocorrelation pass.
    fn brute_force_ess(series: &[f64], ceiling: f64) -> f64 {
        let n = series.len();
        let nf = n as f64;
        let mean = series.iter().sum::<f64>() / nf;
        let c: Vec<f64> = series.iter().map(|x| x - mean).collect();
        let rho: Vec<f64> = (0..n)
            .map(|t| {
                c[..n - t]
                    .iter()
                    .zip(&c[t..])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    / nf
            })
            .collect();
        let gamma0 = rho[0];
        let mut iact = -1.0;
        let mut prev = f64::INFINITY;
        let mut m = 0;
        while 2 * m < n {
            let mut pair = rho[2 * m] / gamma0;
            if 2 * m + 1 < n {
                pair += rho[2 * m + 1] / gamma0;
            }
            if pair <= 0.0 {
                break;
            }
            let capped = pair.min(prev);
            prev = capped;
            iact += 2.0 * capped;
            m += 1;
        }
        if iact <= 1e-12 {
            ceiling
        } else {
            (nf / iact).clamp(1e-12, ceiling)
        }
    }

    #[test]
    fn ess_matches_brute_force_on_short_series() {
        for (len, seed) in [(64usize, 5u64), (777, 6), (2048, 7)] {
            let series = ar1_series(0.3, len, seed);
            let fast = effective_sample_size(&series, 1e7).unwrap();
            let brute = brute_force_ess(&series, 1e7);
            assert!(
                (fast - brute).abs() <= 1e-10 * brute,
                "len {len}: {fast} vs {brute}"
            );
        }
    }

    #[test]
    fn ess_report_summarizes_columns() {
        let n = 2000;
        let a = ar1_series(0.0, n, 8);
        let b = ar1_series(0.9, n, 9);
        let mut samples = Matrix::zeros(n, 2);
        for i in 0..n {
            samples[(i, 0)] = a[i];
            samples[(i, 1)] = b[i];
        }
        let report = ess_report(&samples, 1e6, Some(2.0)).unwrap();
        assert_eq!(report.per_coordinate.len(), 2);
        assert!(report.per_coordinate[1] < report.per_coordinate[0]);
        assert_eq!(report.min_ess, report.per_coordinate[1]);
        assert!((report.min_per_second.unwrap() - report.min_ess / 2.0).abs() < 1e-12);
        assert!(report.min_ess <= report.mean_ess);
    }

    #[test]
    fn battery_passes_on_clean_build() {
        for report in standard_battery(CheckSuite::All, 2024) {
            assert!(report.passed, "failed: {}", report.to_line());
        }
    }

    #[test]
    fn broken_integrator_fails_reversibility() {
        // drop the second potential kick: no longer a symmetric composition
        let params = CheckParams::new(7);
        let report = check_map_reversibility(
            "broken_phi1",
            &params,
            CheckThresholds::default().euclidean_reversibility,
            |state, weights, fact, eps| {
                let w = weights.clone();
                let kicked =
                    crate::magnetic::flow_potential(state, move |q: &Vector| q.component_mul(&w), eps)?;
                Ok(flow_kinetic(&kicked, fact, eps))
            },
        );
        assert!(!report.passed, "mutated integrator must fail: {}", report.to_line());
    }

    #[test]
    fn report_line_format_is_stable() {
        let report = CheckReport::evaluate("demo", 1.5e-9, 1e-8, String::new());
        assert_eq!(report.to_line(), "demo 1.500000e-9 1.000000e-8 PASS");
        let report = CheckReport::evaluate("demo", 2e-8, 1e-8, String::new());
        assert!(report.to_line().ends_with("FAIL"));
    }

    #[test]
    fn canonical_leapfrog_baseline_passes_all_checks() {
        // L = 0 on ℝ²: the plain leapfrog must clear reversibility and
        // symplecticness at the euclidean thresholds
        let params = CheckParams::new(11);
        let rev = check_map_reversibility(
            "leapfrog_reversibility",
            &params,
            CheckThresholds::default().euclidean_reversibility,
            |state, weights, _fact, eps| {
                let w = weights.clone();
                let zero = SpectralFactorization::factorize(&SkewMatrix::zeros(state.dim())).unwrap();
                euclidean_magnetic_step(state, move |q: &Vector| q.component_mul(&w), &zero, eps)
            },
        );
        assert!(rev.passed, "{}", rev.to_line());
    }

    #[test]
    fn order_check_sees_second_order_slope() {
        let targets = crate::catalog::order_targets(99);
        let report = check_order(&targets, &CheckParams::new(12));
        assert!(report.passed, "{} ({})", report.to_line(), report.details);
    }
}
