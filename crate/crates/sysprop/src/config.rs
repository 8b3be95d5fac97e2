//! Estimator configuration shared by the gain, passivity and cone modules.

use crate::error::{Error, Result};
use crate::signal::Signal;

/// Choice of initial input on the unit sphere.
///
/// `Sine` is sin(t), t = 1..N, normalized (N = channels * horizon for MIMO,
/// filled across the stacked channels); `Ones` the normalized constant
/// signal; `SineOffset` sin(t) + 0.25 normalized. A custom start inside a
/// minor eigenspace can stall the iterations: convergence guarantees hold
/// for almost all, not all, initial inputs.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialInput {
    Sine,
    Ones,
    SineOffset,
    Custom(Signal),
}

impl InitialInput {
    pub fn build(&self, channels: usize, horizon: usize) -> Result<Signal> {
        let total = channels * horizon;
        let raw = match self {
            InitialInput::Sine => (1..=total).map(|t| (t as f64).sin()).collect(),
            InitialInput::Ones => vec![1.0; total],
            InitialInput::SineOffset => (1..=total).map(|t| (t as f64).sin() + 0.25).collect(),
            InitialInput::Custom(u) => {
                if u.channels() != channels || u.len() != horizon {
                    return Err(Error::Dimension {
                        context: "custom initial input",
                        expected: total,
                        got: u.channels() * u.len(),
                    });
                }
                return u.normalized();
            }
        };
        Signal::new(channels, raw)?.normalized()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GainMethod {
    Power,
    PgPower,
    GradientAscent,
    GradientAscentLineSearch,
    ContinuousFlow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PassivityMethod {
    GradientDescent,
    GradientDescentLineSearch,
    ContinuousFlow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeMethod {
    ArrowHurwicz,
    Uzawa,
    ContinuousFlow,
}

/// Iteration parameters. Stopping: the objective changed by at most
/// `rel_tol` (relative) for `patience` consecutive iterations, or the
/// gradient norm fell below `grad_tol`, or the session budget ran out,
/// or `max_iters` was hit.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig<M> {
    pub method: M,
    /// Fixed step size; also the fallback step when a line search degenerates.
    pub alpha: f64,
    pub rel_tol: f64,
    pub grad_tol: f64,
    pub patience: usize,
    pub max_iters: usize,
    pub u0: InitialInput,
    /// Continuous-flow horizon and integrator tolerances (flow methods only).
    pub flow_time: f64,
    pub flow_rel_tol: f64,
    pub flow_abs_tol: f64,
    pub max_rhs_evals: usize,
    /// Passivity only: also run the input-feedforward index estimator.
    pub with_nu: bool,
}

impl<M> EstimatorConfig<M> {
    pub fn with_method(method: M, alpha: f64, u0: InitialInput) -> Self {
        Self {
            method,
            alpha,
            rel_tol: 1e-6,
            grad_tol: 1e-8,
            patience: 3,
            max_iters: 100_000,
            u0,
            flow_time: 50.0,
            flow_rel_tol: 1e-8,
            flow_abs_tol: 1e-10,
            max_rhs_evals: 1_000_000,
            with_nu: false,
        }
    }
}

impl Default for EstimatorConfig<GainMethod> {
    fn default() -> Self {
        Self::with_method(GainMethod::Power, 0.01, InitialInput::Sine)
    }
}

impl Default for EstimatorConfig<PassivityMethod> {
    fn default() -> Self {
        Self::with_method(
            PassivityMethod::GradientDescentLineSearch,
            0.01,
            InitialInput::Ones,
        )
    }
}

impl Default for EstimatorConfig<ConeMethod> {
    fn default() -> Self {
        Self::with_method(ConeMethod::Uzawa, 0.002, InitialInput::Sine)
    }
}

/// Tracks the `rel_tol`/`patience` stopping rule.
#[derive(Debug, Clone)]
pub(crate) struct ConvergenceMonitor {
    rel_tol: f64,
    patience: usize,
    last: Option<f64>,
    streak: usize,
}

impl ConvergenceMonitor {
    pub fn new(rel_tol: f64, patience: usize) -> Self {
        Self {
            rel_tol,
            patience,
            last: None,
            streak: 0,
        }
    }

    /// Feeds the next objective value; true once the change stayed within
    /// tolerance for `patience` consecutive iterations.
    pub fn update(&mut self, value: f64) -> bool {
        if let Some(prev) = self.last {
            if (value - prev).abs() <= self.rel_tol * value.abs().max(1e-12) {
                self.streak += 1;
            } else {
                self.streak = 0;
            }
        }
        self.last = Some(value);
        self.streak >= self.patience
    }
}
