//! Ready-made experiment targets shared by the check battery, the test suites,
//! and the CLI.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::manifold::{Manifold, SpecialOrthogonal, Stiefel};
use crate::target::{
    Bvmf, FreeMotion, GameRecord, GaussianAffine, NetworkEigenmodel, SimplexSphere, SphereUniform,
    Target,
};
use crate::{Matrix, Vector};

/// Splitmix-style derivation of per-chain / per-field seeds from a master seed.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// The linearly-constrained Gaussian benchmark: A is the 2×4 design with rows
/// (1,1,1,1) and (1,1,−1,1), b = 0, μ = 0, Σ = diag(1, 1, 1/100, 1/100).
pub fn paper_affine_gaussian() -> GaussianAffine {
    let a = Matrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0]);
    GaussianAffine::new(
        Vector::zeros(4),
        Vector::from_vec(alloc::vec![1.0, 1.0, 0.01, 0.01]),
        a,
        Vector::zeros(2),
    )
    .expect("benchmark design is full rank")
}

/// Mildly anisotropic Gaussian on the same affine subspace, gentle enough that
/// the whole order ladder stays in the asymptotic regime.
pub fn mild_affine_gaussian() -> GaussianAffine {
    let a = Matrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0]);
    GaussianAffine::new(
        Vector::zeros(4),
        Vector::from_vec(alloc::vec![1.0, 1.0, 0.25, 0.25]),
        a,
        Vector::zeros(2),
    )
    .expect("benchmark design is full rank")
}

/// Bingham-von Mises-Fisher target with a random positive definite A and
/// standard normal b on S^{m−1}.
pub fn random_bvmf(m: usize, seed: u64) -> Bvmf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Matrix::from_fn(m, m, |_, _| StandardNormal.sample(&mut rng));
    let a = &z * z.transpose() / m as f64;
    let b = Vector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    Bvmf::new(a, b)
}

/// Von Mises-like density on the circle: π(q) ∝ exp(κ q₁), i.e. b = (κ, 0),
/// A = 0 in the Bingham-von Mises-Fisher family.
pub fn circle_von_mises(kappa: f64) -> Bvmf {
    Bvmf::new(Matrix::zeros(2, 2), Vector::from_vec(alloc::vec![kappa, 0.0]))
}

/// Synthetic volleyball-style tournament: `players` skills under a symmetric
/// Dirichlet(α) prior and `games` random 3-vs-3 matches whose winners are drawn
/// from fixed ground-truth skills.
pub fn volleyball_synthetic(players: usize, games: usize, alpha: f64, seed: u64) -> SimplexSphere {
    assert!(players >= 6);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // fixed ground-truth skills, deliberately uneven
    let truth: Vec<f64> = (0..players)
        .map(|i| 1.0 + (i % 3) as f64 + 0.5 * (i as f64 / players as f64))
        .collect();
    let total: f64 = truth.iter().sum();
    let mut records = Vec::with_capacity(games);
    for _ in 0..games {
        // choose 6 distinct players, split 3 vs 3
        let mut pool: Vec<usize> = (0..players).collect();
        for i in 0..6 {
            let j = i + (rng.random::<u64>() as usize) % (players - i);
            pool.swap(i, j);
        }
        let team_a: Vec<usize> = pool[0..3].to_vec();
        let team_b: Vec<usize> = pool[3..6].to_vec();
        let strength_a: f64 = team_a.iter().map(|&i| truth[i] / total).sum();
        let strength_b: f64 = team_b.iter().map(|&i| truth[i] / total).sum();
        let p_a = strength_a / (strength_a + strength_b);
        records.push(GameRecord {
            team_a,
            team_b,
            winner_a: rng.random::<f64>() < p_a,
        });
    }
    SimplexSphere::new(alloc::vec![alpha; players], records).expect("alpha > 0")
}

/// Synthetic adjacency matrix drawn from the eigenmodel itself with moderate
/// spectrum (σ alternating ±, offset −0.4), suitable for desk-scale runs.
pub fn synthetic_adjacency(n: usize, rank: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stiefel = Stiefel::new(n, rank);
    let u_flat = stiefel.random_point(&mut rng);
    let u = Matrix::from_column_slice(n, rank, u_flat.as_slice());
    let sigma = Vector::from_fn(rank, |i, _| if i % 2 == 0 { 4.0 } else { -3.0 });
    let eta = &u * Matrix::from_diagonal(&sigma) * u.transpose();
    let mut delta = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let p = 0.5 * libm::erfc(-(eta[(i, j)] - 0.4) / core::f64::consts::SQRT_2);
            let edge = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
            delta[(i, j)] = edge;
            delta[(j, i)] = edge;
        }
    }
    delta
}

/// Eigenmodel posterior over a synthetic graph with the usual priors.
pub fn synthetic_eigenmodel(n: usize, rank: usize, seed: u64) -> NetworkEigenmodel {
    NetworkEigenmodel::new(synthetic_adjacency(n, rank, seed), rank, 230.0, 100.0, 1.0)
}

fn stiefel_free(n: usize, r: usize) -> FreeMotion<Stiefel> {
    let man = Stiefel::new(n, r);
    let mut start = Vector::zeros(n * r);
    for c in 0..r {
        start[c * n + c] = 1.0;
    }
    FreeMotion::new(man, start)
}

fn so3_free() -> FreeMotion<SpecialOrthogonal> {
    let man = SpecialOrthogonal::new(3);
    let start = Vector::from_column_slice(Matrix::identity(3, 3).as_slice());
    FreeMotion::new(man, start)
}

/// Targets the randomized structure checks run against: one per manifold family.
pub fn check_targets(seed: u64) -> Vec<(String, Arc<dyn Target>)> {
    alloc::vec![
        (
            String::from("affine_gaussian"),
            Arc::new(paper_affine_gaussian()) as Arc<dyn Target>
        ),
        (
            String::from("bvmf_s5"),
            Arc::new(random_bvmf(6, derive_seed(seed, 1)))
        ),
        (String::from("sphere_uniform_s2"), Arc::new(SphereUniform::new(3))),
        (String::from("stiefel_4_2_free"), Arc::new(stiefel_free(4, 2))),
        (String::from("so3_free"), Arc::new(so3_free())),
        (
            String::from("eigenmodel_6_2"),
            Arc::new(synthetic_eigenmodel(6, 2, derive_seed(seed, 2)))
        ),
    ]
}

/// Feasibility drift additionally covers the simplex posterior, whose log
/// barrier keeps trajectories off the orthant boundary.
pub fn feasibility_targets(seed: u64) -> Vec<(String, Arc<dyn Target>)> {
    let mut targets = check_targets(seed);
    targets.push((
        String::from("simplex_volleyball"),
        Arc::new(volleyball_synthetic(9, 20, 3.0, derive_seed(seed, 3))),
    ));
    targets
}

/// The order criterion runs on a sphere BvMF target and an affine Gaussian.
pub fn order_targets(seed: u64) -> Vec<(String, Arc<dyn Target>)> {
    alloc::vec![
        (
            String::from("bvmf_s2"),
            Arc::new(random_bvmf(3, derive_seed(seed, 4))) as Arc<dyn Target>
        ),
        (String::from("affine_gaussian_mild"), Arc::new(mild_affine_gaussian())),
    ]
}

/// Draws `count` seeded random fields for a best-of-k magnetic search.
pub fn field_seeds(master: u64, count: usize) -> Vec<u64> {
    (0..count).map(|i| derive_seed(master, 100 + i as u64)).collect()
}

/// Human-readable label for a derived field seed, used in run manifests.
pub fn field_label(index: usize, seed: u64) -> String {
    format!("field_{index:02}_seed_{seed:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::feasibility_residual;

    #[test]
    fn derived_seeds_are_distinct() {
        let seeds = field_seeds(42, 5);
        for i in 0..seeds.len() {
            for j in (i + 1)..seeds.len() {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        assert_eq!(seeds, field_seeds(42, 5));
    }

    #[test]
    fn catalog_targets_have_feasible_starts() {
        for (name, target) in feasibility_targets(7) {
            let q0 = target.initial_point();
            assert!(
                feasibility_residual(target.manifold(), &q0) <= 1e-9,
                "{name}: infeasible default start"
            );
            assert!(target.manifold().validate_initial(&q0).is_ok(), "{name}");
        }
    }

    #[test]
    fn synthetic_adjacency_is_valid_input() {
        let delta = synthetic_adjacency(8, 2, 3);
        assert_eq!((&delta - delta.transpose()).amax(), 0.0);
        for i in 0..8 {
            assert_eq!(delta[(i, i)], 0.0);
        }
        // deterministic
        assert_eq!(delta, synthetic_adjacency(8, 2, 3));
    }

    #[test]
    fn volleyball_games_are_disjoint_and_deterministic() {
        let a = volleyball_synthetic(9, 25, 3.0, 11);
        let b = volleyball_synthetic(9, 25, 3.0, 11);
        let q = a.initial_point();
        assert_eq!(a.potential(&q), b.potential(&q));
    }
}
