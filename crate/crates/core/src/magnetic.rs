//! Skew-symmetric magnetic fields and the closed-form split flows on Euclidean
//! space.
//!
//! A field L ∈ Skew(m) enters the dynamics through the equations of motion
//!
//! ```text
//!     q̇ = p,        ṗ = −∇U(q) − L p.
//! ```
//!
//! Splitting H = U/2 + ½pᵀp + U/2 gives one integrator step as the symmetric
//! composition Φ1 ∘ Φ2 ∘ Φ1, where Φ1 is a half potential kick and Φ2 is the exact
//! flow of the magnetic kinetic part:
//!
//! ```text
//!     Φ2: p ↦ exp(−εL) p,    q ↦ q + M(ε) p,    M(ε) = (exp(−εL) − I)(−L)⁻¹
//! ```
//!
//! with M(ε) extended by ε·I on the kernel of L. Rather than a complex
//! eigendecomposition of −L, this module stores the equivalent *real* block form:
//! orthonormal planes (u, v) on which L acts as a rotation generator with frequency
//! ω (L u = ω v, L v = −ω u), plus an orthonormal basis of the kernel. All flow
//! applications then reduce to plane-wise 2×2 rotations, which keeps outputs exactly
//! real and makes the L = 0 case collapse bit-for-bit onto the classical leapfrog.

use alloc::vec::Vec;

use nalgebra::SymmetricEigen;
use num_traits::Float;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{Error, Matrix, Vector};

/// Input validation tolerance on the symmetry defect ‖A + Aᵀ‖_max.
pub const SKEW_TOL: f64 = 1e-12;

/// Frequencies at or below this cut (relative to the largest frequency) are folded
/// into the kernel; the ω → 0 limit of the plane flow is ε·I, so the fold is
/// continuous.
const NULL_FREQ_CUT: f64 = 1e-10;

/// Relative gap under which two frequencies are treated as one eigenspace.
const CLUSTER_GAP: f64 = 1e-7;

/// A position/momentum pair in ambient coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub position: Vector,
    pub momentum: Vector,
}

impl PhaseState {
    pub fn new(position: Vector, momentum: Vector) -> Self {
        assert_eq!(
            position.len(),
            momentum.len(),
            "position and momentum must have equal dimension"
        );
        Self { position, momentum }
    }

    pub fn dim(&self) -> usize {
        self.position.len()
    }
}

/// A validated skew-symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SkewMatrix {
    entries: Matrix,
}

impl SkewMatrix {
    /// Accepts `a` if its symmetry defect ‖A + Aᵀ‖_max is at most [`SKEW_TOL`] and
    /// stores the exactly skew part (A − Aᵀ)/2, which has an exactly zero diagonal.
    pub fn validate(a: Matrix) -> Result<Self, Error> {
        assert_eq!(a.nrows(), a.ncols(), "skew matrix must be square");
        let defect = (&a + a.transpose()).amax();
        if defect > SKEW_TOL {
            return Err(Error::NotSkewSymmetric { defect });
        }
        let entries = (&a - a.transpose()) * 0.5;
        Ok(Self { entries })
    }

    /// The zero field in dimension `m`.
    pub fn zeros(m: usize) -> Self {
        Self {
            entries: Matrix::zeros(m, m),
        }
    }

    /// Skew-symmetrizes a matrix of i.i.d. standard normal entries: (Z − Zᵀ)/2.
    /// Deterministic given the state of `rng`.
    pub fn from_gaussian<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Self {
        assert!(dim >= 1);
        let z = Matrix::from_fn(dim, dim, |_, _| StandardNormal.sample(rng));
        let entries = (&z - z.transpose()) * 0.5;
        Self { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.entries
    }

    pub fn is_zero(&self) -> bool {
        self.entries.amax() == 0.0
    }
}

/// One invariant plane of the field: L u = ω v and L v = −ω u with ω > 0,
/// equivalently −L = ω (u vᵀ − v uᵀ) restricted to span{u, v}.
#[derive(Debug, Clone)]
pub struct RotationBlock {
    pub basis_u: Vector,
    pub basis_v: Vector,
    pub frequency: f64,
}

/// Real spectral factorization of a skew-symmetric matrix: rotation planes plus an
/// orthonormal kernel basis. Immutable once built; shared freely across chains.
#[derive(Debug, Clone)]
pub struct SpectralFactorization {
    dim: usize,
    blocks: Vec<RotationBlock>,
    null_basis: Vec<Vector>,
}

impl SpectralFactorization {
    /// Factorizes `l` via the symmetric eigendecomposition of LᵀL = −L².
    ///
    /// Each positive eigenvalue ω² of LᵀL carries an even-dimensional, L-invariant
    /// eigenspace; within it, any unit u yields a partner v = L u / ω, and
    /// Gram-Schmidt sweeps extract the remaining planes. Eigenvalues within a
    /// small relative gap are treated as a single eigenspace, in which any
    /// orthonormal plane choice is valid because the flow is basis-invariant on
    /// that subspace.
    pub fn factorize(l: &SkewMatrix) -> Result<Self, Error> {
        let m = l.dim();
        let a = l.matrix();
        let scale = a.amax();
        if scale == 0.0 {
            return Ok(Self {
                dim: m,
                blocks: Vec::new(),
                null_basis: (0..m).map(|i| unit_vector(m, i)).collect(),
            });
        }

        let s = a.transpose() * a;
        let s = (&s + s.transpose()) * 0.5;
        let eig = SymmetricEigen::try_new(s, f64::EPSILON, 100_000)
            .ok_or(Error::NumericalFailure("symmetric eigensolve did not converge"))?;

        // Frequency of each eigenvector measured directly as ‖L w‖: far more robust
        // near the kernel than sqrt of the eigenvalue, whose noise floor is the
        // square root of the eigensolve's.
        let mut modes: Vec<(f64, Vector)> = (0..m)
            .map(|j| {
                let w: Vector = eig.eigenvectors.column(j).into_owned();
                let freq = (a * &w).norm();
                (freq, w)
            })
            .collect();
        modes.sort_by(|x, y| y.0.total_cmp(&x.0));

        let omega_max = modes[0].0;
        let null_cut = NULL_FREQ_CUT * 1.0f64.max(omega_max);
        let split = modes.partition_point(|(freq, _)| *freq > null_cut);
        let (rotating, null_modes) = modes.split_at(split);

        let mut blocks: Vec<RotationBlock> = Vec::with_capacity(split / 2);
        let gap = CLUSTER_GAP * 1.0f64.max(omega_max);
        let mut start = 0;
        while start < rotating.len() {
            let mut end = start + 1;
            while end < rotating.len() && rotating[end - 1].0 - rotating[end].0 <= gap {
                end += 1;
            }
            let cluster: Vec<Vector> = rotating[start..end].iter().map(|(_, w)| w.clone()).collect();
            extract_cluster_planes(a, cluster, &mut blocks)?;
            start = end;
        }

        let mut null_basis: Vec<Vector> = Vec::with_capacity(null_modes.len());
        for (_, w) in null_modes {
            let mut n = w.clone();
            for _ in 0..2 {
                for b in &blocks {
                    orthogonalize_against(&mut n, &b.basis_u);
                    orthogonalize_against(&mut n, &b.basis_v);
                }
                for prev in &null_basis {
                    orthogonalize_against(&mut n, prev);
                }
            }
            let norm = n.norm();
            if norm < 1e-6 {
                return Err(Error::NumericalFailure("kernel basis collapsed"));
            }
            null_basis.push(n / norm);
        }

        let fact = Self {
            dim: m,
            blocks,
            null_basis,
        };
        fact.verify(a, scale)?;
        Ok(fact)
    }

    /// Construct-time self check of the factorization invariants.
    fn verify(&self, a: &Matrix, scale: f64) -> Result<(), Error> {
        if 2 * self.blocks.len() + self.null_basis.len() != self.dim {
            return Err(Error::NumericalFailure("plane/kernel dimensions do not add up"));
        }
        let recon_err = (self.reconstruct_neg() + a).amax();
        if recon_err > 1e-10 * 1.0f64.max(scale) {
            return Err(Error::NumericalFailure("factorization does not reconstruct -L"));
        }
        let basis = self.basis_matrix();
        let ortho_err = (basis.transpose() * &basis - Matrix::identity(self.dim, self.dim)).amax();
        if ortho_err > 1e-10 {
            return Err(Error::NumericalFailure("factorization basis lost orthonormality"));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blocks(&self) -> &[RotationBlock] {
        &self.blocks
    }

    pub fn null_basis(&self) -> &[Vector] {
        &self.null_basis
    }

    /// Σ ω (u vᵀ − v uᵀ) over all planes, which equals −L.
    pub fn reconstruct_neg(&self) -> Matrix {
        let mut out = Matrix::zeros(self.dim, self.dim);
        for b in &self.blocks {
            let uv = &b.basis_u * b.basis_v.transpose();
            out += (&uv - uv.transpose()) * b.frequency;
        }
        out
    }

    /// All basis columns (plane pairs then kernel) as an m×m matrix.
    pub fn basis_matrix(&self) -> Matrix {
        let mut cols: Vec<Vector> = Vec::with_capacity(self.dim);
        for b in &self.blocks {
            cols.push(b.basis_u.clone());
            cols.push(b.basis_v.clone());
        }
        cols.extend(self.null_basis.iter().cloned());
        Matrix::from_columns(&cols)
    }

    /// Applies exp(−εL): a rotation by εω on each plane, identity on the kernel.
    pub fn apply_exp(&self, eps: f64, p: &Vector) -> Vector {
        let mut out = p.clone();
        for b in &self.blocks {
            let a = b.basis_u.dot(p);
            let c = b.basis_v.dot(p);
            let (sin, cos) = Float::sin_cos(eps * b.frequency);
            let a_new = cos * a + sin * c;
            let c_new = -sin * a + cos * c;
            out += &b.basis_u * (a_new - a) + &b.basis_v * (c_new - c);
        }
        out
    }

    /// Applies M(ε) = (exp(−εL) − I)(−L)⁻¹, the position-update operator of the
    /// kinetic flow: plane-wise (sin(εω)·a + versin(εω)·b)/ω, and ε·I on the kernel.
    pub fn apply_shift(&self, eps: f64, p: &Vector) -> Vector {
        let mut out = p * eps;
        for b in &self.blocks {
            let a = b.basis_u.dot(p);
            let c = b.basis_v.dot(p);
            let w = b.frequency;
            let sin = Float::sin(eps * w);
            // 1 − cos(εω) without cancellation at small εω
            let versin = 2.0 * Float::powi(Float::sin(0.5 * eps * w), 2);
            let da = (sin * a + versin * c) / w;
            let dc = (-versin * a + sin * c) / w;
            out += &b.basis_u * (da - eps * a) + &b.basis_v * (dc - eps * c);
        }
        out
    }
}

fn unit_vector(m: usize, i: usize) -> Vector {
    let mut v = Vector::zeros(m);
    v[i] = 1.0;
    v
}

fn orthogonalize_against(w: &mut Vector, basis: &Vector) {
    let c = basis.dot(w);
    *w -= basis * c;
}

/// Pulls d/2 orthonormal planes out of a d-dimensional L-invariant eigenspace.
fn extract_cluster_planes(
    a: &Matrix,
    mut work: Vec<Vector>,
    blocks: &mut Vec<RotationBlock>,
) -> Result<(), Error> {
    let d = work.len();
    if !d.is_multiple_of(2) {
        return Err(Error::NumericalFailure("rotation eigenspace has odd dimension"));
    }
    let first_new = blocks.len();
    for _ in 0..d / 2 {
        let seed_idx = work
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
            .map(|(j, _)| j)
            .expect("cluster exhausted early");
        let mut u = work.swap_remove(seed_idx);
        for _ in 0..2 {
            for b in &blocks[first_new..] {
                orthogonalize_against(&mut u, &b.basis_u);
                orthogonalize_against(&mut u, &b.basis_v);
            }
        }
        let norm = u.norm();
        if norm < 1e-6 {
            return Err(Error::NumericalFailure("degenerate plane seed"));
        }
        u /= norm;

        let lu = a * &u;
        let frequency = lu.norm();
        if frequency <= 0.0 {
            return Err(Error::NumericalFailure("vanishing frequency in rotation eigenspace"));
        }
        let mut v = lu / frequency;
        for _ in 0..2 {
            for b in &blocks[first_new..] {
                orthogonalize_against(&mut v, &b.basis_u);
                orthogonalize_against(&mut v, &b.basis_v);
            }
            orthogonalize_against(&mut v, &u);
        }
        let vnorm = v.norm();
        if vnorm < 1e-6 {
            return Err(Error::NumericalFailure("degenerate plane partner"));
        }
        v /= vnorm;

        for w in work.iter_mut() {
            orthogonalize_against(w, &u);
            orthogonalize_against(w, &v);
        }
        if !work.is_empty() {
            // one seed is now linearly dependent on the extracted plane; drop it
            let dead = work
                .iter()
                .enumerate()
                .min_by(|x, y| x.1.norm().total_cmp(&y.1.norm()))
                .map(|(j, _)| j)
                .expect("cluster exhausted early");
            work.swap_remove(dead);
        }

        blocks.push(RotationBlock {
            basis_u: u,
            basis_v: v,
            frequency,
        });
    }
    Ok(())
}

/// A magnetic field: the skew matrix L together with its cached factorization.
/// The factorization is computed once and reused for every step size.
#[derive(Debug, Clone)]
pub struct MagneticField {
    skew: SkewMatrix,
    factorization: SpectralFactorization,
}

impl MagneticField {
    pub fn new(skew: SkewMatrix) -> Result<Self, Error> {
        let factorization = SpectralFactorization::factorize(&skew)?;
        Ok(Self {
            skew,
            factorization,
        })
    }

    /// The canonical (zero-field) structure in dimension `m`.
    pub fn zero(m: usize) -> Self {
        Self::new(SkewMatrix::zeros(m)).expect("zero field always factorizes")
    }

    pub fn dim(&self) -> usize {
        self.skew.dim()
    }

    pub fn skew(&self) -> &SkewMatrix {
        &self.skew
    }

    pub fn factorization(&self) -> &SpectralFactorization {
        &self.factorization
    }

    pub fn is_zero(&self) -> bool {
        self.skew.is_zero()
    }
}

/// Half potential kick Φ1: q unchanged, p ← p − (ε/2) ∇U(q).
///
/// A non-finite gradient aborts the step so samplers see an explicit rejection
/// signal instead of a propagating NaN.
pub fn flow_potential<F>(state: &PhaseState, grad_u: F, eps: f64) -> Result<PhaseState, Error>
where
    F: Fn(&Vector) -> Vector,
{
    let g = grad_u(&state.position);
    if !g.iter().all(|x| x.is_finite()) {
        return Err(Error::NonFiniteGradient);
    }
    Ok(PhaseState {
        position: state.position.clone(),
        momentum: &state.momentum - g * (eps * 0.5),
    })
}

/// Exact magnetic drift Φ2: p ← exp(−εL) p, q ← q + M(ε) p.
pub fn flow_kinetic(state: &PhaseState, fact: &SpectralFactorization, eps: f64) -> PhaseState {
    debug_assert_eq!(state.dim(), fact.dim());
    PhaseState {
        position: &state.position + fact.apply_shift(eps, &state.momentum),
        momentum: fact.apply_exp(eps, &state.momentum),
    }
}

/// One full step Φ1 ∘ Φ2 ∘ Φ1 of the Euclidean magnetic integrator.
pub fn euclidean_magnetic_step<F>(
    state: &PhaseState,
    grad_u: F,
    fact: &SpectralFactorization,
    eps: f64,
) -> Result<PhaseState, Error>
where
    F: Fn(&Vector) -> Vector,
{
    let kicked = flow_potential(state, &grad_u, eps)?;
    let drifted = flow_kinetic(&kicked, fact, eps);
    flow_potential(&drifted, &grad_u, eps)
}
