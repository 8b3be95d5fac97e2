use crate::trace::EstimateTrace;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Signal/operator shapes do not line up.
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// Invalid argument value (non-finite sample, empty signal, zero vector, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A model violates the standing stability assumption.
    #[error("unstable model: {0}")]
    Unstable(String),

    /// The probe budget cannot cover the next (composite) experiment.
    #[error("sample budget exhausted: {used} used of {budget}, next probe needs {requested}")]
    BudgetExhausted {
        used: u64,
        budget: u64,
        requested: u64,
    },

    /// The operator is singular where the problem requires definiteness
    /// (e.g. a leading impulse-response tap of zero).
    #[error("singular operator: {0}")]
    SingularOperator(String),

    /// A noisy probe produced an unusable quadratic form; the caller may
    /// retry the same probe under fresh noise.
    #[error("noisy probe produced a nonpositive denominator; retry with new noise")]
    NoisyDenominator,

    /// Iteration input collapsed to (numerically) zero; restart advised.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// The saddle iteration left its region of local convergence.
    #[error("divergence guard tripped at iteration {iteration}: objective {current} exceeds 10x envelope {envelope}")]
    Divergence {
        iteration: usize,
        current: f64,
        envelope: f64,
    },

    /// The adaptive integrator could not make progress.
    #[error("flow step size underflow at tau={tau}")]
    FlowStepUnderflow { tau: f64 },

    /// The integrator hit its right-hand-side evaluation cap.
    #[error("flow exceeded max_rhs_evals={limit} at tau={tau}")]
    FlowEvalBudget { limit: usize, tau: f64 },

    /// An estimator stopped early; the partial trace is attached.
    #[error("estimation aborted ({reason}); partial trace with {} rows attached", trace.rows().len())]
    EstimateAborted {
        reason: Box<Error>,
        trace: EstimateTrace,
    },

    /// A plant description file could not be parsed.
    #[error("plant file error: {0}")]
    PlantFile(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// The innermost cause of an estimator abort.
    pub fn root(&self) -> &Error {
        match self {
            Error::EstimateAborted { reason, .. } => reason.root(),
            other => other,
        }
    }
}
