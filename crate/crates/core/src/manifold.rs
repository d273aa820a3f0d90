//! Embedded manifolds M = {q ∈ ℝᵐ : g(q) = 0} with full-rank constraint Jacobians.
//!
//! Every manifold exposes its constraint map g, the Jacobian G(q), and the
//! orthogonal projection onto the cotangent space {p : G(q) p = 0}. The concrete
//! catalog covers affine subspaces, spheres, Stiefel manifolds, the special
//! orthogonal group, and products of constrained blocks with unconstrained ones.
//!
//! Matrix-valued points (Stiefel, SO(n)) are flattened column-major into the
//! ambient vector.

use alloc::boxed::Box;
use alloc::vec::Vec;

use nalgebra::SymmetricEigen;
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};

use crate::{max_abs, Error, Matrix, Vector};

/// Feasibility tolerance on ‖g(q)‖_∞ for points entering the integrator.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// An embedded manifold. Implementations are immutable and freely shareable; all
/// methods are pure.
pub trait Manifold: Send + Sync {
    fn ambient_dim(&self) -> usize;

    /// Number of scalar constraints k.
    fn constraint_dim(&self) -> usize;

    /// g(q) ∈ ℝᵏ.
    fn constraint(&self, q: &Vector) -> Vector;

    /// G(q), the k×m Jacobian of g.
    fn jacobian(&self, q: &Vector) -> Matrix;

    /// Orthogonal projection of `v` onto {w : G(q) w = 0}. The default uses the
    /// generic normal-equations formula; concrete manifolds override it with their
    /// closed forms.
    fn project_cotangent(&self, q: &Vector, v: &Vector) -> Vector {
        project_generic(self, q, v)
    }

    /// Extra admissibility check for chain starting points, beyond feasibility.
    /// Used by SO(n), whose det = +1 component is preserved by the flow but not
    /// expressible as a level-set constraint.
    fn validate_initial(&self, _q: &Vector) -> Result<(), Error> {
        Ok(())
    }

    /// A random feasible point, used by randomized structure checks.
    fn random_point(&self, rng: &mut dyn RngCore) -> Vector;
}

/// v − Gᵀ(GGᵀ)⁻¹G v, valid for any full-rank constraint Jacobian.
pub fn project_generic<M: Manifold + ?Sized>(man: &M, q: &Vector, v: &Vector) -> Vector {
    let k = man.constraint_dim();
    if k == 0 {
        return v.clone();
    }
    let g = man.jacobian(q);
    let gram = &g * g.transpose();
    let rhs = &g * v;
    let x = gram
        .clone()
        .cholesky()
        .map(|c| c.solve(&rhs))
        .or_else(|| gram.lu().solve(&rhs))
        .expect("constraint Gram matrix is singular");
    v - g.transpose() * x
}

/// Samples p | q ∼ Normal(0, Id_m | G(q) p = 0): an ambient standard normal draw
/// followed by orthogonal projection to the cotangent space.
pub fn sample_momentum<M, R>(man: &M, q: &Vector, rng: &mut R) -> Vector
where
    M: Manifold + ?Sized,
    R: RngCore + ?Sized,
{
    let z = Vector::from_fn(man.ambient_dim(), |_, _| StandardNormal.sample(rng));
    man.project_cotangent(q, &z)
}

/// ‖g(q)‖_∞.
pub fn feasibility_residual<M: Manifold + ?Sized>(man: &M, q: &Vector) -> f64 {
    let g = man.constraint(q);
    if g.is_empty() {
        0.0
    } else {
        max_abs(&g)
    }
}

/// Unconstrained ℝᵐ: no constraint rows, identity projection.
#[derive(Debug, Clone)]
pub struct Euclidean {
    dim: usize,
}

impl Euclidean {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { dim }
    }
}

impl Manifold for Euclidean {
    fn ambient_dim(&self) -> usize {
        self.dim
    }

    fn constraint_dim(&self) -> usize {
        0
    }

    fn constraint(&self, _q: &Vector) -> Vector {
        Vector::zeros(0)
    }

    fn jacobian(&self, _q: &Vector) -> Matrix {
        Matrix::zeros(0, self.dim)
    }

    fn project_cotangent(&self, _q: &Vector, v: &Vector) -> Vector {
        v.clone()
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Vector {
        Vector::from_fn(self.dim, |_, _| StandardNormal.sample(rng))
    }
}

/// Affine subspace {q : A q = b} with A full row rank.
#[derive(Debug, Clone)]
pub struct Affine {
    a: Matrix,
    b: Vector,
    /// Aᵀ(AAᵀ)⁻¹, cached for the projection.
    pinv: Matrix,
}

impl Affine {
    pub fn new(a: Matrix, b: Vector) -> Result<Self, Error> {
        assert_eq!(a.nrows(), b.len());
        assert!(a.nrows() >= 1 && a.nrows() < a.ncols());
        let svd = a.clone().svd(false, false);
        let smallest_sv = svd.singular_values.min();
        if smallest_sv <= 1e-10 {
            return Err(Error::RankDeficient { smallest_sv });
        }
        let gram = &a * a.transpose();
        let chol = gram.cholesky().ok_or(Error::RankDeficient { smallest_sv })?;
        // solve (AAᵀ) X = A, then pinv = Xᵀ
        let x = chol.solve(&a);
        Ok(Self {
            pinv: x.transpose(),
            a,
            b,
        })
    }

    /// Exact affine restoration x − Aᵀ(AAᵀ)⁻¹(Ax − b), for building feasible
    /// starting points. Never used inside the integrator.
    pub fn project_point(&self, x: &Vector) -> Vector {
        x - &self.pinv * (&self.a * x - &self.b)
    }

    pub fn design(&self) -> (&Matrix, &Vector) {
        (&self.a, &self.b)
    }
}

impl Manifold for Affine {
    fn ambient_dim(&self) -> usize {
        self.a.ncols()
    }

    fn constraint_dim(&self) -> usize {
        self.a.nrows()
    }

    fn constraint(&self, q: &Vector) -> Vector {
        &self.a * q - &self.b
    }

    fn jacobian(&self, _q: &Vector) -> Matrix {
        self.a.clone()
    }

    fn project_cotangent(&self, _q: &Vector, v: &Vector) -> Vector {
        v - &self.pinv * (&self.a * v)
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Vector {
        let z = Vector::from_fn(self.ambient_dim(), |_, _| StandardNormal.sample(rng));
        self.project_point(&z)
    }
}

/// Unit sphere S^{m−1} ⊂ ℝᵐ: g(q) = qᵀq − 1, G(q) = 2qᵀ.
#[derive(Debug, Clone)]
pub struct Sphere {
    ambient: usize,
}

impl Sphere {
    pub fn new(ambient: usize) -> Self {
        assert!(ambient >= 2);
        Self { ambient }
    }
}

impl Manifold for Sphere {
    fn ambient_dim(&self) -> usize {
        self.ambient
    }

    fn constraint_dim(&self) -> usize {
        1
    }

    fn constraint(&self, q: &Vector) -> Vector {
        Vector::from_vec(alloc::vec![q.dot(q) - 1.0])
    }

    fn jacobian(&self, q: &Vector) -> Matrix {
        Matrix::from_fn(1, self.ambient, |_, j| 2.0 * q[j])
    }

    /// v ↦ v − (qᵀv) q, the closed form for unit q.
    fn project_cotangent(&self, q: &Vector, v: &Vector) -> Vector {
        v - q * q.dot(v)
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Vector {
        loop {
            let z = Vector::from_fn(self.ambient, |_, _| StandardNormal.sample(rng));
            let n = z.norm();
            if n > 1e-8 {
                return z / n;
            }
        }
    }
}

/// Stiefel manifold St(n, r): n×r matrices with orthonormal columns, flattened
/// column-major. The constraint keeps only the upper triangle (including the
/// diagonal) of QᵀQ − I so that G has full row rank k = r(r+1)/2.
#[derive(Debug, Clone)]
pub struct Stiefel {
    n: usize,
    r: usize,
}

impl Stiefel {
    pub fn new(n: usize, r: usize) -> Self {
        assert!(n >= r && r >= 1);
        Self { n, r }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n, self.r)
    }

    pub fn as_matrix(&self, q: &Vector) -> Matrix {
        Matrix::from_column_slice(self.n, self.r, q.as_slice())
    }

    /// Upper-triangle row order: (0,0), (0,1), (1,1), (0,2), (1,2), (2,2), ...
    fn triangle_rows(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.r).flat_map(move |b| (0..=b).map(move |a| (a, b)))
    }

    /// Polar retraction X ↦ X (XᵀX)^{−1/2}, for building feasible points only.
    pub fn polar_retract(&self, x: &Vector) -> Vector {
        let xm = self.as_matrix(x);
        let gram = xm.transpose() * &xm;
        let eig = SymmetricEigen::new(gram);
        let mut inv_sqrt = Matrix::zeros(self.r, self.r);
        for i in 0..self.r {
            let lam = eig.eigenvalues[i].max(1e-300);
            let col = eig.eigenvectors.column(i);
            inv_sqrt += col * col.transpose() / num_traits::Float::sqrt(lam);
        }
        let q = xm * inv_sqrt;
        Vector::from_column_slice(q.as_slice())
    }
}

impl Manifold for Stiefel {
    fn ambient_dim(&self) -> usize {
        self.n * self.r
    }

    fn constraint_dim(&self) -> usize {
        self.r * (self.r + 1) / 2
    }

    fn constraint(&self, q: &Vector) -> Vector {
        let qm = self.as_matrix(q);
        let c = qm.transpose() * &qm - Matrix::identity(self.r, self.r);
        Vector::from_iterator(
            self.constraint_dim(),
            self.triangle_rows().map(|(a, b)| c[(a, b)]),
        )
    }

    fn jacobian(&self, q: &Vector) -> Matrix {
        let qm = self.as_matrix(q);
        let mut g = Matrix::zeros(self.constraint_dim(), self.ambient_dim());
        for (row, (a, b)) in self.triangle_rows().enumerate() {
            // d(QᵀQ)_{ab} / dQ_{ic} = δ_{cb} Q_{ia} + δ_{ca} Q_{ib}
            for i in 0..self.n {
                g[(row, i + self.n * b)] += qm[(i, a)];
                g[(row, i + self.n * a)] += qm[(i, b)];
            }
        }
        g
    }

    /// V ↦ V − Q sym(QᵀV) with sym(X) = (X + Xᵀ)/2, closed form at feasible Q.
    fn project_cotangent(&self, q: &Vector, v: &Vector) -> Vector {
        let qm = self.as_matrix(q);
        let vm = self.as_matrix(v);
        let qtv = qm.transpose() * &vm;
        let sym = (&qtv + qtv.transpose()) * 0.5;
        let out = vm - qm * sym;
        Vector::from_column_slice(out.as_slice())
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Vector {
        let z = Vector::from_fn(self.ambient_dim(), |_, _| StandardNormal.sample(rng));
        self.polar_retract(&z)
    }
}

/// SO(n), realized as Stiefel(n, n) plus a det = +1 check on initial points.
/// Continuous flows cannot leave the connected component, so the determinant is
/// checked at chain start only.
#[derive(Debug, Clone)]
pub struct SpecialOrthogonal {
    stiefel: Stiefel,
}

impl SpecialOrthogonal {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2);
        Self {
            stiefel: Stiefel::new(n, n),
        }
    }

    pub fn order(&self) -> usize {
        self.stiefel.n
    }

    pub fn determinant(&self, q: &Vector) -> f64 {
        self.stiefel.as_matrix(q).determinant()
    }
}

impl Manifold for SpecialOrthogonal {
    fn ambient_dim(&self) -> usize {
        self.stiefel.ambient_dim()
    }

    fn constraint_dim(&self) -> usize {
        self.stiefel.constraint_dim()
    }

    fn constraint(&self, q: &Vector) -> Vector {
        self.stiefel.constraint(q)
    }

    fn jacobian(&self, q: &Vector) -> Matrix {
        self.stiefel.jacobian(q)
    }

    fn project_cotangent(&self, q: &Vector, v: &Vector) -> Vector {
        self.stiefel.project_cotangent(q, v)
    }

    fn validate_initial(&self, q: &Vector) -> Result<(), Error> {
        let det = self.determinant(q);
        if det < 0.0 {
            return Err(Error::WrongComponent { det });
        }
        Ok(())
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Vector {
        let mut q = self.stiefel.random_point(rng);
        if self.determinant(&q) < 0.0 {
            let n = self.order();
            for i in 0..n {
                q[i] = -q[i];
            }
        }
        q
    }
}

/// One block of a product manifold.
pub enum Block {
    Constrained(Box<dyn Manifold>),
    /// Unconstrained block of the given dimension: no constraint rows, identity
    /// projection.
    Free(usize),
}

impl Block {
    fn ambient_dim(&self) -> usize {
        match self {
            Block::Constrained(m) => m.ambient_dim(),
            Block::Free(d) => *d,
        }
    }

    fn constraint_dim(&self) -> usize {
        match self {
            Block::Constrained(m) => m.constraint_dim(),
            Block::Free(_) => 0,
        }
    }
}

/// Product of constrained and unconstrained blocks acting blockwise on the
/// concatenated ambient vector.
pub struct Product {
    blocks: Vec<Block>,
    ambient: usize,
    constraints: usize,
}

impl Product {
    pub fn new(blocks: Vec<Block>) -> Self {
        assert!(!blocks.is_empty());
        let ambient = blocks.iter().map(Block::ambient_dim).sum();
        let constraints = blocks.iter().map(Block::constraint_dim).sum();
        Self {
            blocks,
            ambient,
            constraints,
        }
    }

    fn for_each_block(&self, mut f: impl FnMut(&Block, usize, usize)) {
        let mut q_off = 0;
        let mut g_off = 0;
        for block in &self.blocks {
            f(block, q_off, g_off);
            q_off += block.ambient_dim();
            g_off += block.constraint_dim();
        }
    }
}

impl Manifold for Product {
    fn ambient_dim(&self) -> usize {
        self.ambient
    }

    fn constraint_dim(&self) -> usize {
        self.constraints
    }

    fn constraint(&self, q: &Vector) -> Vector {
        let mut out = Vector::zeros(self.constraints);
        self.for_each_block(|block, q_off, g_off| {
            if let Block::Constrained(man) = block {
                let local = man.constraint(&q.rows(q_off, man.ambient_dim()).into_owned());
                out.rows_mut(g_off, man.constraint_dim()).copy_from(&local);
            }
        });
        out
    }

    fn jacobian(&self, q: &Vector) -> Matrix {
        let mut out = Matrix::zeros(self.constraints, self.ambient);
        self.for_each_block(|block, q_off, g_off| {
            if let Block::Constrained(man) = block {
                let local = man.jacobian(&q.rows(q_off, man.ambient_dim()).into_owned());
                out.view_mut((g_off, q_off), (man.constraint_dim(), man.ambient_dim()))
                    .copy_from(&local);
            }
        });
        out
    }

    fn project_cotangent(&self, q: &Vector, v: &Vector) -> Vector {
        let mut out = v.clone();
        self.for_each_block(|block, q_off, _| {
            if let Block::Constrained(man) = block {
                let d = man.ambient_dim();
                let local = man.project_cotangent(
                    &q.rows(q_off, d).into_owned(),
                    &v.rows(q_off, d).into_owned(),
                );
                out.rows_mut(q_off, d).copy_from(&local);
            }
        });
        out
    }

    fn validate_initial(&self, q: &Vector) -> Result<(), Error> {
        let mut result = Ok(());
        self.for_each_block(|block, q_off, _| {
            if let Block::Constrained(man) = block {
                if result.is_ok() {
                    result = man.validate_initial(&q.rows(q_off, man.ambient_dim()).into_owned());
                }
            }
        });
        result
    }

    fn random_point(&self, rng: &mut dyn RngCore) -> Vector {
        let mut out = Vector::zeros(self.ambient);
        self.for_each_block(|block, q_off, _| match block {
            Block::Constrained(man) => {
                let local = man.random_point(rng);
                out.rows_mut(q_off, man.ambient_dim()).copy_from(&local);
            }
            Block::Free(d) => {
                for i in 0..*d {
                    out[q_off + i] = StandardNormal.sample(rng);
                }
            }
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// The 2×4 design used by the linearly-constrained Gaussian experiment.
    fn experiment_affine() -> Affine {
        let a = Matrix::from_row_slice(2, 4, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, 1.0]);
        Affine::new(a, Vector::zeros(2)).unwrap()
    }

    fn catalog() -> Vec<(&'static str, Box<dyn Manifold>)> {
        alloc::vec![
            ("affine", Box::new(experiment_affine()) as Box<dyn Manifold>),
            ("sphere3", Box::new(Sphere::new(3))),
            ("sphere6", Box::new(Sphere::new(6))),
            ("stiefel42", Box::new(Stiefel::new(4, 2))),
            ("so3", Box::new(SpecialOrthogonal::new(3))),
            (
                "product",
                Box::new(Product::new(alloc::vec![
                    Block::Constrained(Box::new(Stiefel::new(3, 2))),
                    Block::Free(2),
                ])),
            ),
        ]
    }

    #[test]
    fn affine_origin_is_feasible() {
        let man = experiment_affine();
        assert_eq!(man.constraint(&Vector::zeros(4)), Vector::zeros(2));
    }

    #[test]
    fn affine_projection_fixes_kernel_vectors() {
        let man = experiment_affine();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = man.random_point(&mut rng);
        let v = sample_momentum(&man, &q, &mut rng);
        let again = man.project_cotangent(&q, &v);
        assert!((&again - &v).amax() <= 1e-10);
    }

    #[test]
    fn affine_projection_kills_constrained_coordinate() {
        let man =
            Affine::new(Matrix::from_row_slice(1, 2, &[1.0, 0.0]), Vector::zeros(1)).unwrap();
        let v = Vector::from_vec(vec![3.0, 4.0]);
        let p = man.project_cotangent(&Vector::zeros(2), &v);
        assert!((&p - Vector::from_vec(vec![0.0, 4.0])).amax() <= 1e-14);
    }

    #[test]
    fn affine_rejects_rank_deficient_design() {
        let a = Matrix::from_row_slice(2, 3, &[1.0, 1.0, 0.0, 2.0, 2.0, 0.0]);
        match Affine::new(a, Vector::zeros(2)) {
            Err(Error::RankDeficient { .. }) => {}
            other => panic!("expected RankDeficient, got {:?}", other.map(|_| ())),
        }
    }

    #[test]
    fn sphere_removes_radial_component() {
        let man = Sphere::new(3);
        let q = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let v = Vector::from_vec(vec![3.0, 4.0, 0.0]);
        let p = man.project_cotangent(&q, &v);
        assert!((&p - Vector::from_vec(vec![0.0, 4.0, 0.0])).amax() <= 1e-14);
    }

    #[test]
    fn sphere_constraint_values() {
        let man = Sphere::new(3);
        let e1 = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(man.constraint(&e1)[0], 0.0);
        assert_eq!(man.constraint(&(e1 * 2.0))[0], 3.0);
    }

    #[test]
    fn sphere_projection_lands_in_jacobian_kernel() {
        let man = Sphere::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let q = man.random_point(&mut rng);
            let v = Vector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
            let p = man.project_cotangent(&q, &v);
            assert!(max_abs(&(man.jacobian(&q) * p)) <= 1e-10);
        }
    }

    #[test]
    fn stiefel_identity_columns_are_feasible() {
        let man = Stiefel::new(4, 2);
        let mut q = Vector::zeros(8);
        q[0] = 1.0; // first column e1
        q[5] = 1.0; // second column e2
        assert!(feasibility_residual(&man, &q) == 0.0);
    }

    #[test]
    fn stiefel_one_by_one_degenerates_to_two_point_sphere() {
        let man = Stiefel::new(1, 1);
        let q = Vector::from_vec(vec![1.0]);
        assert_eq!(man.constraint(&q)[0], 0.0);
        let q = Vector::from_vec(vec![0.5]);
        assert_eq!(man.constraint(&q)[0], -0.75);
    }

    #[test]
    fn stiefel_projection_satisfies_tangency() {
        let man = Stiefel::new(5, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let q = man.random_point(&mut rng);
            let v = Vector::from_fn(15, |_, _| StandardNormal.sample(&mut rng));
            let p = man.project_cotangent(&q, &v);
            let qm = Matrix::from_column_slice(5, 3, q.as_slice());
            let pm = Matrix::from_column_slice(5, 3, p.as_slice());
            let sym = qm.transpose() * &pm + pm.transpose() * &qm;
            assert!(sym.amax() <= 1e-10);
        }
    }

    #[test]
    fn special_orthogonal_accepts_identity() {
        let man = SpecialOrthogonal::new(3);
        let id = Vector::from_column_slice(Matrix::identity(3, 3).as_slice());
        assert!(man.validate_initial(&id).is_ok());
    }

    #[test]
    fn special_orthogonal_rejects_reflections() {
        let man = SpecialOrthogonal::new(3);
        let mut refl = Matrix::identity(3, 3);
        refl[(0, 0)] = -1.0;
        let q = Vector::from_column_slice(refl.as_slice());
        match man.validate_initial(&q) {
            Err(Error::WrongComponent { det }) => assert!((det + 1.0).abs() <= 1e-12),
            other => panic!("expected WrongComponent, got {other:?}"),
        }
    }

    #[test]
    fn momentum_sample_on_sphere_has_no_radial_part() {
        let man = Sphere::new(3);
        let q = Vector::from_vec(vec![1.0, 0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = sample_momentum(&man, &q, &mut rng);
        assert!(p[0].abs() <= 1e-12);
    }

    #[test]
    fn momentum_sample_is_deterministic_under_seed() {
        let man = Sphere::new(4);
        let q = man.random_point(&mut ChaCha8Rng::seed_from_u64(1));
        let a = sample_momentum(&man, &q, &mut ChaCha8Rng::seed_from_u64(2));
        let b = sample_momentum(&man, &q, &mut ChaCha8Rng::seed_from_u64(2));
        assert_eq!(a, b);
    }

    #[test]
    fn momentum_sample_covariance_matches_projector() {
        let man = experiment_affine();
        let q = Vector::zeros(4);
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let draws = 100_000;
        let mut cov = Matrix::zeros(4, 4);
        for _ in 0..draws {
            let p = sample_momentum(&man, &q, &mut rng);
            cov += &p * p.transpose();
        }
        cov /= draws as f64;
        let (a, _) = man.design();
        let gram = a * a.transpose();
        let projector = Matrix::identity(4, 4) - a.transpose() * gram.lu().solve(a).unwrap();
        assert!((cov - projector).amax() <= 0.02);
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let h = 1e-6;
        for (name, man) in catalog() {
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            for _ in 0..200 {
                let q = man.random_point(&mut rng);
                let g = man.jacobian(&q);
                let scale = g.amax().max(1.0);
                for j in 0..man.ambient_dim() {
                    let mut qp = q.clone();
                    let mut qm = q.clone();
                    qp[j] += h;
                    qm[j] -= h;
                    let col = (man.constraint(&qp) - man.constraint(&qm)) / (2.0 * h);
                    for i in 0..man.constraint_dim() {
                        let err = (col[i] - g[(i, j)]).abs() / scale;
                        assert!(err <= 1e-5, "{name}: FD mismatch {err} at ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn projections_are_idempotent_and_annihilated_by_jacobian() {
        for (name, man) in catalog() {
            let mut rng = ChaCha8Rng::seed_from_u64(63);
            for _ in 0..200 {
                let q = man.random_point(&mut rng);
                assert!(
                    feasibility_residual(man.as_ref(), &q) <= FEASIBILITY_TOL,
                    "{name}: random point infeasible"
                );
                let v = Vector::from_fn(man.ambient_dim(), |_, _| StandardNormal.sample(&mut rng));
                let p = man.project_cotangent(&q, &v);
                let twice = man.project_cotangent(&q, &p);
                assert!((&twice - &p).amax() <= 1e-10, "{name}: not idempotent");
                if man.constraint_dim() > 0 {
                    assert!(
                        max_abs(&(man.jacobian(&q) * &p)) <= 1e-10,
                        "{name}: projection leaves jacobian residual"
                    );
                }
            }
        }
    }

    #[test]
    fn closed_form_projections_match_generic_formula() {
        for (name, man) in catalog() {
            let mut rng = ChaCha8Rng::seed_from_u64(95);
            for _ in 0..50 {
                let q = man.random_point(&mut rng);
                let v = Vector::from_fn(man.ambient_dim(), |_, _| StandardNormal.sample(&mut rng));
                let closed = man.project_cotangent(&q, &v);
                let generic = project_generic(man.as_ref(), &q, &v);
                assert!(
                    (&closed - &generic).amax() <= 1e-9,
                    "{name}: closed form diverges from generic projection"
                );
            }
        }
    }

    #[test]
    fn single_block_product_behaves_like_bare_manifold() {
        let bare = Stiefel::new(4, 2);
        let prod = Product::new(vec![Block::Constrained(Box::new(Stiefel::new(4, 2)))]);
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        for _ in 0..20 {
            let q = bare.random_point(&mut rng);
            let v = Vector::from_fn(8, |_, _| StandardNormal.sample(&mut rng));
            assert_eq!(bare.constraint(&q), prod.constraint(&q));
            assert_eq!(bare.jacobian(&q), prod.jacobian(&q));
            assert_eq!(
                bare.project_cotangent(&q, &v),
                prod.project_cotangent(&q, &v)
            );
        }
    }

    #[test]
    fn product_free_blocks_pass_through() {
        let prod = Product::new(vec![
            Block::Constrained(Box::new(Sphere::new(3))),
            Block::Free(2),
        ]);
        assert_eq!(prod.ambient_dim(), 5);
        assert_eq!(prod.constraint_dim(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = prod.random_point(&mut rng);
        let v = Vector::from_fn(5, |_, _| StandardNormal.sample(&mut rng));
        let p = prod.project_cotangent(&q, &v);
        assert_eq!(p[3], v[3]);
        assert_eq!(p[4], v[4]);
    }
}
