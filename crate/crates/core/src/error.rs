use thiserror::Error;

/// Failure modes shared by every stage of the pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("loop is singular on the unit circle (min |det| = {min_det:e})")]
    SingularLoop { min_det: f64 },

    #[error("truncation tail {tail:e} exceeds tolerance {tol:e}")]
    DegreeOverflow { tail: f64, tol: f64 },

    #[error("series needs {needed} negative lambda powers but the budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("off the big cell (residual {residual:e}, condition {condition:e})")]
    OffBigCell { residual: f64, condition: f64 },

    #[error("loop is not twisted (defect {defect:e})")]
    NotTwisted { defect: f64 },

    #[error("Iwasawa frame failed the reality check (defect {defect:e})")]
    NonRealResult { defect: f64 },

    #[error("a + t + conj(t) = {value:e} lies on the orbit boundary")]
    OrbitBoundary { value: f64 },

    #[error("Sym matrix is not in su(1,1) (defect {defect:e})")]
    NotInRealForm { defect: f64 },

    #[error("radial grid needs at least 5 uniform points, got {points}")]
    GridTooCoarse { points: usize },

    #[error("asymptotic seed is out of regime at x0 = {x0:e} (y0 = {y0:e})")]
    SeedOutOfRegime { x0: f64, y0: f64 },

    #[error("tolerance {tol:e} is outside the supported range [{min:e}, {max:e}]")]
    ToleranceUnachievable { tol: f64, min: f64, max: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
