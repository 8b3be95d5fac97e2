//! Continuous-time gradient and saddle-point dynamics over probe sessions.
//!
//! The finite-dimensional flows are integrated with an adaptive embedded
//! Dormand-Prince 5(4) pair; every right-hand-side evaluation is a real
//! probe (2 samples for the gain/Oja fields, 3 for passivity and conic),
//! and the sphere component is re-projected after every accepted step.

use crate::error::{Error, Result};
use crate::probe::ProbeSession;
use crate::signal::Signal;
use crate::trace::{EstimateTrace, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhsKind {
    /// du/dtau = 2 G^T G u - 2 rho_1(u) u (ascent).
    GainAscent,
    /// du/dtau = -grad rho_2(u) (descent).
    PassivityDescent,
    /// dc/dtau = -grad_c rho_3, du/dtau = +grad_u rho_3.
    ConicSaddle,
    /// The R^n Oja field 2(G^T G - (u^T G^T G u) I)u; equal to the gain
    /// field on the sphere.
    Oja,
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub rhs: RhsKind,
    /// Flow horizon tau.
    pub t_end: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_rhs_evals: usize,
}

impl FlowConfig {
    fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(Error::Domain("flow time must be positive".into()));
        }
        for (name, tol) in [("rel_tol", self.rel_tol), ("abs_tol", self.abs_tol)] {
            if !(tol > 0.0 && tol < 1.0) {
                return Err(Error::Domain(format!(
                    "{name} must lie in (0, 1), got {tol}"
                )));
            }
        }
        if self.max_rhs_evals < 7 {
            return Err(Error::Domain(
                "max_rhs_evals must allow at least one step".into(),
            ));
        }
        Ok(())
    }
}

/// Flow state: a sphere point, or a (center, sphere point) pair.
#[derive(Debug, Clone)]
pub enum FlowState {
    Sphere(Signal),
    CenterSphere(f64, Signal),
}

#[derive(Debug, Clone, Copy)]
pub struct FlowPoint {
    pub tau: f64,
    pub objective: f64,
    pub estimate: f64,
    pub samples: u64,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    pub points: Vec<FlowPoint>,
    pub state: FlowState,
    /// Largest |(norm of the u-part) - 1| observed before re-projection.
    pub max_sphere_drift: f64,
}

impl FlowTrajectory {
    /// CSV with columns `tau, objective, estimate, samples`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,objective,estimate,samples\n");
        for p in &self.points {
            out.push_str(&format!(
                "{},{},{},{}\n",
                p.tau, p.objective, p.estimate, p.samples
            ));
        }
        out
    }
}

struct RhsEval {
    deriv: Vec<f64>,
    objective: f64,
    estimate: f64,
}

struct FlowProblem<'a> {
    session: &'a mut ProbeSession,
    kind: RhsKind,
    channels: usize,
    has_center: bool,
    evals: usize,
    max_evals: usize,
}

impl FlowProblem<'_> {
    fn split<'s>(&self, state: &'s [f64]) -> (f64, &'s [f64]) {
        if self.has_center {
            (state[0], &state[1..])
        } else {
            (0.0, state)
        }
    }

    fn u_signal(&self, state: &[f64]) -> Signal {
        let (_, u) = self.split(state);
        Signal::from_raw(self.channels, u.to_vec())
    }

    fn eval(&mut self, state: &[f64], tau: f64) -> Result<RhsEval> {
        if self.evals >= self.max_evals {
            return Err(Error::FlowEvalBudget {
                limit: self.max_evals,
                tau,
            });
        }
        self.evals += 1;
        let u = self.u_signal(state);
        let nn = u.dot(&u);
        match self.kind {
            RhsKind::GainAscent | RhsKind::Oja => {
                let (_y, gram) = self.session.gram_apply(&u)?;
                let raw = u.dot(&gram);
                let quotient = raw / nn;
                let shift = if self.kind == RhsKind::GainAscent {
                    quotient
                } else {
                    raw
                };
                let deriv = gram.scaled(2.0).axpy(-2.0 * shift, &u);
                Ok(RhsEval {
                    deriv: deriv.into_data(),
                    objective: quotient,
                    estimate: quotient.max(0.0).sqrt(),
                })
            }
            RhsKind::PassivityDescent => {
                let y = self.session.evaluate(&u)?;
                let gt_u = self.session.adjoint_apply(&u)?;
                let gram = self.session.adjoint_apply(&y)?;
                let sym = y.axpy(1.0, &gt_u);
                let denom = u.dot(&gram);
                if denom <= 0.0 {
                    return Err(if self.session.is_noiseless() {
                        Error::SingularOperator(format!("u^T G^T G u = {denom} is not positive"))
                    } else {
                        Error::NoisyDenominator
                    });
                }
                let value = 0.5 * u.dot(&sym) / denom;
                let deriv = sym.axpy(-2.0 * value, &gram).scaled(-1.0 / denom);
                Ok(RhsEval {
                    deriv: deriv.into_data(),
                    objective: value,
                    estimate: -value,
                })
            }
            RhsKind::ConicSaddle => {
                let (c, _) = self.split(state);
                let y = self.session.evaluate(&u)?;
                let gt_u = self.session.adjoint_apply(&u)?;
                let gram = self.session.adjoint_apply(&y)?;
                let sym = y.axpy(1.0, &gt_u);
                let value = (u.dot(&gram) - c * u.dot(&sym)) / nn + c * c;
                let dc = -(2.0 * c - u.dot(&sym) / nn);
                let du = gram.axpy(-c, &sym).axpy(c * c - value, &u).scaled(2.0 / nn);
                let mut deriv = Vec::with_capacity(state.len());
                deriv.push(dc);
                deriv.extend(du.into_data());
                Ok(RhsEval {
                    deriv,
                    objective: value,
                    estimate: value.max(0.0).sqrt(),
                })
            }
        }
    }
}

// Dormand-Prince 5(4) tableau.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = B1 - 5179.0 / 57600.0;
const E3: f64 = B3 - 7571.0 / 16695.0;
const E4: f64 = B4 - 393.0 / 640.0;
const E5: f64 = B5 + 92097.0 / 339200.0;
const E6: f64 = B6 - 187.0 / 2100.0;
const E7: f64 = -1.0 / 40.0;

fn combine(state: &[f64], h: f64, terms: &[(f64, &[f64])]) -> Vec<f64> {
    let mut out = state.to_vec();
    for (coeff, k) in terms {
        for (o, v) in out.iter_mut().zip(*k) {
            *o += h * coeff * v;
        }
    }
    out
}

/// Integrates the chosen flow from `x0` to `cfg.t_end`, sampling the
/// trajectory at every accepted step (at least 100 points; the maximum
/// step is t_end/100). After every accepted step the sphere component is
/// re-normalized; the pre-projection drift is reported.
pub fn integrate_flow(
    session: &mut ProbeSession,
    x0: FlowState,
    cfg: &FlowConfig,
) -> Result<FlowTrajectory> {
    cfg.validate()?;
    let (has_center, u0) = match &x0 {
        FlowState::Sphere(u) => (false, u),
        FlowState::CenterSphere(_, u) => (true, u),
    };
    if matches!(x0, FlowState::CenterSphere(..)) != matches!(cfg.rhs, RhsKind::ConicSaddle) {
        return Err(Error::Domain(
            "conic flows need a (center, sphere) state; sphere flows a plain sphere state".into(),
        ));
    }
    if (u0.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(
            "flow initial input must lie on the unit sphere".into(),
        ));
    }
    if u0.channels() != session.channels() || u0.len() != session.horizon() {
        return Err(Error::Dimension {
            context: "flow initial input",
            expected: session.channels() * session.horizon(),
            got: u0.channels() * u0.len(),
        });
    }

    let mut state: Vec<f64> = match &x0 {
        FlowState::Sphere(u) => u.samples().to_vec(),
        FlowState::CenterSphere(c, u) => {
            let mut v = vec![*c];
            v.extend_from_slice(u.samples());
            v
        }
    };
    let mut problem = FlowProblem {
        session,
        kind: cfg.rhs,
        channels: u0.channels(),
        has_center,
        evals: 0,
        max_evals: cfg.max_rhs_evals,
    };

    let mut points: Vec<FlowPoint> = Vec::new();
    let mut max_drift = 0.0f64;
    let h_max = cfg.t_end / 100.0;
    let mut h = cfg.t_end / 200.0;
    let mut tau = 0.0;

    let result = (|| -> Result<()> {
        let mut k1 = {
            let e = problem.eval(&state, tau)?;
            points.push(FlowPoint {
                tau,
                objective: e.objective,
                estimate: e.estimate,
                samples: problem.session.samples_used(),
            });
            e.deriv
        };
        while tau < cfg.t_end {
            h = h.min(h_max).min(cfg.t_end - tau);
            if h < 1e-13 * cfg.t_end {
                return Err(Error::FlowStepUnderflow { tau });
            }
            let k2 = problem.eval(&combine(&state, h, &[(A21, &k1)]), tau)?.deriv;
            let k3 = problem
                .eval(&combine(&state, h, &[(A31, &k1), (A32, &k2)]), tau)?
                .deriv;
            let k4 = problem
                .eval(
                    &combine(&state, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]),
                    tau,
                )?
                .deriv;
            let k5 = problem
                .eval(
                    &combine(&state, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
                    tau,
                )?
                .deriv;
            let k6 = problem
                .eval(
                    &combine(
                        &state,
                        h,
                        &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
                    ),
                    tau,
                )?
                .deriv;
            let x_new = combine(
                &state,
                h,
                &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            );
            let k7 = problem.eval(&x_new, tau)?.deriv;

            let mut err_sq = 0.0;
            for i in 0..state.len() {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = cfg.abs_tol + cfg.rel_tol * state[i].abs().max(x_new[i].abs());
                err_sq += (e / scale) * (e / scale);
            }
            let err = (err_sq / state.len() as f64).sqrt();

            if err <= 1.0 {
                tau += h;
                state = x_new;
                // re-project the sphere component
                let offset = if has_center { 1 } else { 0 };
                let norm: f64 = state[offset..].iter().map(|x| x * x).sum::<f64>().sqrt();
                max_drift = max_drift.max((norm - 1.0).abs());
                if norm > 0.0 {
                    for v in &mut state[offset..] {
                        *v /= norm;
                    }
                }
                let e = problem.eval(&state, tau)?;
                points.push(FlowPoint {
                    tau,
                    objective: e.objective,
                    estimate: e.estimate,
                    samples: problem.session.samples_used(),
                });
                k1 = e.deriv;
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                h *= factor;
            } else {
                h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            }
        }
        Ok(())
    })();

    let final_state = || -> FlowState {
        if has_center {
            FlowState::CenterSphere(
                state[0],
                Signal::from_raw(u0.channels(), state[1..].to_vec()),
            )
        } else {
            FlowState::Sphere(Signal::from_raw(u0.channels(), state.clone()))
        }
    };

    match result {
        Ok(()) => Ok(FlowTrajectory {
            points,
            state: final_state(),
            max_sphere_drift: max_drift,
        }),
        Err(e) => {
            let mut trace = EstimateTrace::new();
            for (i, p) in points.iter().enumerate() {
                trace.push(TraceRow::new(i, p.objective, p.estimate, None, p.samples));
            }
            Err(Error::EstimateAborted {
                reason: Box::new(e),
                trace,
            })
        }
    }
}
