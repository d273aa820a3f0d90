//! Target densities π(q) ∝ exp(−U(q)) paired with the manifolds they live on.
//!
//! Together with the quadratic kinetic energy this fixes the Hamiltonian
//! H(q, p) = U(q) + ½pᵀp. Four families are provided: a Gaussian under linear
//! constraints, the Bingham-von Mises-Fisher family on spheres, Dirichlet/game
//! posteriors mapped from the simplex onto the sphere, and a low-rank network
//! eigenmodel on Stiefel(n, r) × ℝ^{r+1}.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use nalgebra::SymmetricEigen;
use num_traits::Float;

use crate::magnetic::PhaseState;
use crate::manifold::{Affine, Block, Manifold, Product, Sphere, Stiefel};
use crate::{Error, Matrix, Vector};

/// A potential energy on a manifold. Implementations are immutable; evaluation is
/// pure and reentrant.
pub trait Target: Send + Sync {
    fn manifold(&self) -> &dyn Manifold;

    /// U(q).
    fn potential(&self, q: &Vector) -> f64;

    /// ∇U(q) in ambient coordinates.
    fn grad_potential(&self, q: &Vector) -> Vector;

    fn name(&self) -> &str;

    /// A feasible default starting point for chains.
    fn initial_point(&self) -> Vector;

    fn dim(&self) -> usize {
        self.manifold().ambient_dim()
    }

    /// H(q, p) = U(q) + ½ pᵀp.
    fn hamiltonian(&self, state: &PhaseState) -> f64 {
        self.potential(&state.position) + 0.5 * state.momentum.dot(&state.momentum)
    }
}

/// Gaussian Normal(μ, Σ) with diagonal Σ, restricted to {q : A q = b}.
pub struct GaussianAffine {
    manifold: Affine,
    mean: Vector,
    variances: Vector,
    name: String,
}

impl GaussianAffine {
    pub fn new(mean: Vector, variances: Vector, a: Matrix, b: Vector) -> Result<Self, Error> {
        assert_eq!(mean.len(), a.ncols());
        assert_eq!(variances.len(), mean.len());
        assert!(variances.iter().all(|v| *v > 0.0), "Σ must be positive");
        let manifold = Affine::new(a, b)?;
        Ok(Self {
            manifold,
            mean,
            variances,
            name: String::from("gaussian_affine"),
        })
    }

    pub fn mean(&self) -> &Vector {
        &self.mean
    }

    pub fn variances(&self) -> &Vector {
        &self.variances
    }

    pub fn affine(&self) -> &Affine {
        &self.manifold
    }
}

impl Target for GaussianAffine {
    fn manifold(&self) -> &dyn Manifold {
        &self.manifold
    }

    fn potential(&self, q: &Vector) -> f64 {
        let d = q - &self.mean;
        0.5 * d
            .iter()
            .zip(self.variances.iter())
            .map(|(x, v)| x * x / v)
            .sum::<f64>()
    }

    fn grad_potential(&self, q: &Vector) -> Vector {
        (q - &self.mean).component_div(&self.variances)
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn initial_point(&self) -> Vector {
        self.manifold.project_point(&self.mean)
    }
}

/// Bingham-von Mises-Fisher density π(q) ∝ exp(bᵀq + qᵀAq) on the unit sphere,
/// so U(q) = −bᵀq − qᵀAq. A is symmetrized on input.
pub struct Bvmf {
    manifold: Sphere,
    a: Matrix,
    b: Vector,
    name: String,
}

impl Bvmf {
    pub fn new(a: Matrix, b: Vector) -> Self {
        let m = b.len();
        assert_eq!(a.nrows(), m);
        assert_eq!(a.ncols(), m);
        let a = (&a + a.transpose()) * 0.5;
        Self {
            manifold: Sphere::new(m),
            a,
            b,
            name: String::from("bvmf"),
        }
    }

    pub fn parameters(&self) -> (&Matrix, &Vector) {
        (&self.a, &self.b)
    }
}

impl Target for Bvmf {
    fn manifold(&self) -> &dyn Manifold {
        &self.manifold
    }

    fn potential(&self, q: &Vector) -> f64 {
        -self.b.dot(q) - (q.transpose() * &self.a * q)[0]
    }

    fn grad_potential(&self, q: &Vector) -> Vector {
        -&self.b - &self.a * q * 2.0
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn initial_point(&self) -> Vector {
        let norm = self.b.norm();
        if norm > 1e-12 {
            &self.b / norm
        } else {
            let mut e = Vector::zeros(self.b.len());
            e[0] = 1.0;
            e
        }
    }
}

/// One observed game between two disjoint teams of player indices.
#[derive(Debug, Clone)]
pub struct GameRecord {
    pub team_a: Vec<usize>,
    pub team_b: Vec<usize>,
    pub winner_a: bool,
}

/// Dirichlet(α) prior on the simplex plus win/loss observations, embedded in the
/// positive orthant of the sphere by θᵢ = qᵢ².
///
/// The pushforward of Dirichlet(α) under that map has density ∝ Π |qᵢ|^{2αᵢ−1}
/// with respect to the surface measure, so
///
/// ```text
///     U(q) = −Σᵢ (2αᵢ − 1) ln|qᵢ| − Σ_games ln(S_win / S_all),
/// ```
///
/// where S_T = Σ_{i∈T} qᵢ² and the win probability of team T₁ against T₂ is
/// S_{T₁} / S_{T₁∪T₂}. The exponent is validated against a numerical pushforward
/// oracle in the test suite rather than trusted from the algebra. Chains start in
/// the positive orthant; samples map back to the simplex via qᵢ ↦ qᵢ².
pub struct SimplexSphere {
    manifold: Sphere,
    alpha: Vec<f64>,
    games: Vec<GameRecord>,
    name: String,
}

impl SimplexSphere {
    pub fn new(alpha: Vec<f64>, games: Vec<GameRecord>) -> Result<Self, Error> {
        assert!(alpha.len() >= 2);
        for (index, a) in alpha.iter().enumerate() {
            if !a.is_finite() || *a <= 0.0 {
                return Err(Error::NonPositiveAlpha { index, value: *a });
            }
        }
        let n = alpha.len();
        for g in &games {
            assert!(
                g.team_a.iter().chain(&g.team_b).all(|i| *i < n),
                "player index out of range"
            );
            assert!(
                g.team_a.iter().all(|i| !g.team_b.contains(i)),
                "teams must be disjoint"
            );
        }
        Ok(Self {
            manifold: Sphere::new(n),
            alpha,
            games,
            name: String::from("simplex_sphere"),
        })
    }

    pub fn players(&self) -> usize {
        self.alpha.len()
    }

    fn team_mass(q: &Vector, team: &[usize]) -> f64 {
        team.iter().map(|&i| q[i] * q[i]).sum()
    }
}

impl Target for SimplexSphere {
    fn manifold(&self) -> &dyn Manifold {
        &self.manifold
    }

    fn potential(&self, q: &Vector) -> f64 {
        let mut u = 0.0;
        for (i, a) in self.alpha.iter().enumerate() {
            u -= (2.0 * a - 1.0) * Float::ln(Float::abs(q[i]));
        }
        for g in &self.games {
            let s_a = Self::team_mass(q, &g.team_a);
            let s_b = Self::team_mass(q, &g.team_b);
            let s_win = if g.winner_a { s_a } else { s_b };
            u -= Float::ln(s_win) - Float::ln(s_a + s_b);
        }
        u
    }

    fn grad_potential(&self, q: &Vector) -> Vector {
        let n = self.players();
        let mut grad = Vector::zeros(n);
        for (i, a) in self.alpha.iter().enumerate() {
            grad[i] -= (2.0 * a - 1.0) / q[i];
        }
        for g in &self.games {
            let s_a = Self::team_mass(q, &g.team_a);
            let s_b = Self::team_mass(q, &g.team_b);
            let s_all = s_a + s_b;
            let (winners, s_win) = if g.winner_a {
                (&g.team_a, s_a)
            } else {
                (&g.team_b, s_b)
            };
            for &i in winners {
                grad[i] -= 2.0 * q[i] / s_win;
            }
            for &i in g.team_a.iter().chain(&g.team_b) {
                grad[i] += 2.0 * q[i] / s_all;
            }
        }
        grad
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn initial_point(&self) -> Vector {
        let n = self.players();
        Vector::from_element(n, 1.0 / Float::sqrt(n as f64))
    }
}

const LN_2PI: f64 = 1.8378770664093453;

/// ln Φ(x) for the standard normal CDF Φ, stable over the whole real line.
///
/// The complementary error function covers |x| small and moderately negative x;
/// deep in the left tail (where erfc underflows) the Mills-ratio asymptotic takes
/// over, and for large positive x the value is computed as ln(1 − Φ(−x)).
pub fn log_probit(x: f64) -> f64 {
    if x > 6.0 {
        Float::ln_1p(-0.5 * libm::erfc(x / core::f64::consts::SQRT_2))
    } else if x > -30.0 {
        Float::ln(0.5 * libm::erfc(-x / core::f64::consts::SQRT_2))
    } else {
        let x2 = x * x;
        -0.5 * x2 - 0.5 * LN_2PI - Float::ln(-x)
            + Float::ln_1p(-1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2))
    }
}

/// exp(ln φ(x) − ln Φ(x)): the probit score φ/Φ, stable in the far left tail.
fn probit_ratio(x: f64) -> f64 {
    let log_pdf = -0.5 * x * x - 0.5 * LN_2PI;
    Float::exp(log_pdf - log_probit(x))
}

/// Bayesian network eigenmodel: edges δᵢⱼ ∼ Bernoulli(Φ((UΣUᵀ)ᵢⱼ + c)) over i < j
/// with Gaussian priors σᵢ ∼ Normal(0, priorVarSigma), c ∼ Normal(0, priorVarC)
/// and a uniform prior on U over Stiefel(n, r).
///
/// Parameter layout: [U column-major (n·r) | σ (r) | c (1)].
pub struct NetworkEigenmodel {
    manifold: Product,
    stiefel: Stiefel,
    adjacency: Matrix,
    n: usize,
    rank: usize,
    prior_var_sigma: f64,
    prior_var_c: f64,
    /// Multiplier on the log-likelihood; 0 samples the prior alone.
    likelihood_weight: f64,
    name: String,
}

impl NetworkEigenmodel {
    pub fn new(
        adjacency: Matrix,
        rank: usize,
        prior_var_sigma: f64,
        prior_var_c: f64,
        likelihood_weight: f64,
    ) -> Self {
        let n = adjacency.nrows();
        assert_eq!(adjacency.ncols(), n);
        assert!(rank >= 1 && rank <= n);
        assert!((&adjacency - adjacency.transpose()).amax() == 0.0, "Δ must be symmetric");
        for i in 0..n {
            assert_eq!(adjacency[(i, i)], 0.0, "Δ must have zero diagonal");
            for j in 0..n {
                let d = adjacency[(i, j)];
                assert!(d == 0.0 || d == 1.0, "Δ entries must be 0/1");
            }
        }
        assert!(prior_var_sigma > 0.0 && prior_var_c > 0.0);
        let manifold = Product::new(alloc::vec![
            Block::Constrained(Box::new(Stiefel::new(n, rank))),
            Block::Free(rank + 1),
        ]);
        Self {
            manifold,
            stiefel: Stiefel::new(n, rank),
            adjacency,
            n,
            rank,
            prior_var_sigma,
            prior_var_c,
            likelihood_weight,
            name: String::from("network_eigenmodel"),
        }
    }

    pub fn nodes(&self) -> usize {
        self.n
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn split(&self, q: &Vector) -> (Matrix, Vector, f64) {
        let nr = self.n * self.rank;
        let u = self
            .stiefel
            .as_matrix(&q.rows(0, nr).into_owned());
        let sigma = q.rows(nr, self.rank).into_owned();
        let c = q[nr + self.rank];
        (u, sigma, c)
    }

    fn link_matrix(&self, u: &Matrix, sigma: &Vector, c: f64) -> Matrix {
        let scaled = u * Matrix::from_diagonal(sigma);
        let mut eta = scaled * u.transpose();
        eta.iter_mut().for_each(|x| *x += c);
        eta
    }
}

impl Target for NetworkEigenmodel {
    fn manifold(&self) -> &dyn Manifold {
        &self.manifold
    }

    fn potential(&self, q: &Vector) -> f64 {
        let (u, sigma, c) = self.split(q);
        let eta = self.link_matrix(&u, &sigma, c);
        let mut log_lik = 0.0;
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let x = eta[(i, j)];
                log_lik += if self.adjacency[(i, j)] == 1.0 {
                    log_probit(x)
                } else {
                    log_probit(-x)
                };
            }
        }
        let prior = sigma.iter().map(|s| s * s).sum::<f64>() / (2.0 * self.prior_var_sigma)
            + c * c / (2.0 * self.prior_var_c);
        -self.likelihood_weight * log_lik + prior
    }

    fn grad_potential(&self, q: &Vector) -> Vector {
        let (u, sigma, c) = self.split(q);
        let eta = self.link_matrix(&u, &sigma, c);
        // dℓ/dηᵢⱼ, symmetric with zero diagonal
        let mut w = Matrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in (i + 1)..self.n {
                let x = eta[(i, j)];
                let score = if self.adjacency[(i, j)] == 1.0 {
                    probit_ratio(x)
                } else {
                    -probit_ratio(-x)
                };
                let scaled = self.likelihood_weight * score;
                w[(i, j)] = scaled;
                w[(j, i)] = scaled;
            }
        }
        // dℓ/dU = W U Σ; dℓ/dσ_c = ½ (Uᵀ W U)_{cc}; dℓ/dc = Σ_{i<j} Wᵢⱼ
        let grad_u = &w * &u * Matrix::from_diagonal(&sigma);
        let utwu = u.transpose() * &w * &u;
        let mut grad = Vector::zeros(self.dim());
        let nr = self.n * self.rank;
        grad.rows_mut(0, nr)
            .copy_from(&(Vector::from_column_slice(grad_u.as_slice()) * -1.0));
        for k in 0..self.rank {
            grad[nr + k] = -0.5 * utwu[(k, k)] + sigma[k] / self.prior_var_sigma;
        }
        grad[nr + self.rank] = -0.5 * w.sum() + c / self.prior_var_c;
        grad
    }

    fn name(&self) -> &str {
        &self.name
    }

    /// Rank-r spectral initialization: U from the leading eigenvectors of Δ
    /// (by absolute eigenvalue), σ the matching eigenvalues, c = 0.
    fn initial_point(&self) -> Vector {
        let eig = SymmetricEigen::new(self.adjacency.clone());
        let mut order: Vec<usize> = (0..self.n).collect();
        order.sort_by(|&i, &j| {
            Float::abs(eig.eigenvalues[j]).total_cmp(&Float::abs(eig.eigenvalues[i]))
        });
        let mut u_flat = Vector::zeros(self.n * self.rank);
        let mut sigma = Vector::zeros(self.rank);
        for (col, &idx) in order.iter().take(self.rank).enumerate() {
            u_flat
                .rows_mut(col * self.n, self.n)
                .copy_from(&eig.eigenvectors.column(idx).into_owned());
            sigma[col] = eig.eigenvalues[idx];
        }
        let u_flat = self.stiefel.polar_retract(&u_flat);
        let mut q = Vector::zeros(self.dim());
        q.rows_mut(0, self.n * self.rank).copy_from(&u_flat);
        q.rows_mut(self.n * self.rank, self.rank).copy_from(&sigma);
        q
    }
}

/// Uniform density on the sphere S^{m−1}: U ≡ 0.
pub struct SphereUniform {
    manifold: Sphere,
    name: String,
}

impl SphereUniform {
    pub fn new(ambient: usize) -> Self {
        Self {
            manifold: Sphere::new(ambient),
            name: String::from("sphere_uniform"),
        }
    }
}

impl Target for SphereUniform {
    fn manifold(&self) -> &dyn Manifold {
        &self.manifold
    }

    fn potential(&self, _q: &Vector) -> f64 {
        0.0
    }

    fn grad_potential(&self, _q: &Vector) -> Vector {
        Vector::zeros(self.manifold.ambient_dim())
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn initial_point(&self) -> Vector {
        let mut e = Vector::zeros(self.manifold.ambient_dim());
        e[0] = 1.0;
        e
    }
}

/// Kinetic-only target (U ≡ 0) on an arbitrary manifold, used for geodesic traces.
pub struct FreeMotion<M: Manifold> {
    manifold: M,
    start: Vector,
    name: String,
}

impl<M: Manifold> FreeMotion<M> {
    pub fn new(manifold: M, start: Vector) -> Self {
        Self {
            manifold,
            start,
            name: String::from("free_motion"),
        }
    }
}

impl<M: Manifold> Target for FreeMotion<M> {
    fn manifold(&self) -> &dyn Manifold {
        &self.manifold
    }

    fn potential(&self, _q: &Vector) -> f64 {
        0.0
    }

    fn grad_potential(&self, _q: &Vector) -> Vector {
        Vector::zeros(self.manifold.ambient_dim())
    }

    fn name(&self) -> &str {
        &self.name
    }

    fn initial_point(&self) -> Vector {
        self.start.clone()
    }
}
