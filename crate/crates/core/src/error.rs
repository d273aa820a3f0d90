use thiserror::Error;

/// Errors shared across the sampler stack.
///
/// Numerical failure modes are part of the sampler contract: a Newton solve that
/// cannot restore the constraint surfaces as a rejected proposal rather than as a
/// panic or a silent NaN.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Input matrix is not skew-symmetric within tolerance.
    #[error("matrix is not skew-symmetric (symmetry defect {defect:e})")]
    NotSkewSymmetric { defect: f64 },

    /// An eigensolve or factorization did not converge or produced an
    /// inconsistent result.
    #[error("numerical failure: {0}")]
    NumericalFailure(&'static str),

    /// A constraint Jacobian or design matrix lost full row rank.
    #[error("rank-deficient matrix (smallest singular value {smallest_sv:e})")]
    RankDeficient { smallest_sv: f64 },

    /// Initial point lies on the wrong connected component (det < 0 on SO(n)).
    #[error("initial point has determinant {det}, expected +1")]
    WrongComponent { det: f64 },

    /// Dirichlet concentration parameters must be strictly positive.
    #[error("alpha[{index}] = {value} is not strictly positive")]
    NonPositiveAlpha { index: usize, value: f64 },

    /// Newton iteration on the position multiplier failed to reach tolerance.
    /// `step` is the integration step at which the failure occurred, when the
    /// solve ran inside a multi-step trajectory.
    #[error("Newton solve did not converge after {iters} iterations (residual {residual:e})")]
    ConvergenceFailure {
        iters: usize,
        residual: f64,
        step: Option<usize>,
    },

    /// A potential-gradient oracle returned a non-finite value.
    #[error("gradient oracle returned a non-finite value")]
    NonFiniteGradient,

    /// Chain start point violates the manifold constraint.
    #[error("initial point infeasible (constraint residual {residual:e})")]
    InitializationInfeasible { residual: f64 },

    /// Series has zero variance or is too short for autocorrelation analysis.
    #[error("degenerate series: {0}")]
    DegenerateSeries(&'static str),
}
