//! Black-box estimation of the minimal conic sector (c*, r_min).
//!
//! rho_3(c, u) = u^T A(c) u / ||u||^2 with A(c) = G^T G - c(G+G^T) + c^2 I
//! is ||y - cu||^2 / ||u||^2; the minimal radius is the min over c of the
//! max over the sphere. Arrow-Hurwicz descends in c while ascending in u;
//! Uzawa replaces the c-step by the exact inner minimizer
//! c = (1/2) u^T (G+G^T) u. Either way one probe triple per iteration
//! (three samples) feeds both gradients.

use crate::config::{ConeMethod, ConvergenceMonitor, EstimatorConfig};
use crate::error::{Error, Result};
use crate::flows::{integrate_flow, FlowConfig, FlowState, FlowTrajectory, RhsKind};
use crate::probe::ProbeSession;
use crate::signal::{retract, Signal};
use crate::trace::{EstimateTrace, TraceRow};

#[derive(Debug, Clone)]
pub struct ConeEstimate {
    pub c_hat: f64,
    pub r_hat: f64,
    pub u_current: Signal,
    pub trace: EstimateTrace,
    /// Present for the continuous-flow method only.
    pub flow: Option<FlowTrajectory>,
}

/// The probe triple behind every conic quantity: y = Gu, sym_u = (G+G^T)u,
/// gram_u = G^T G u, in 3 samples (SISO).
fn probe_triple(session: &mut ProbeSession, u: &Signal) -> Result<(Signal, Signal, Signal)> {
    session.ensure_budget(1 + 2 * session.adjoint_cost())?;
    let y = session.evaluate(u)?;
    let gt_u = session.adjoint_apply(u)?;
    let gram_u = session.adjoint_apply(&y)?;
    let sym_u = y.axpy(1.0, &gt_u);
    Ok((y, sym_u, gram_u))
}

/// rho_3(c, u) from three samples; also returns y = Gu, sym_u = (G+G^T)u
/// and gramgram_u = G^T G u for gradient assembly.
pub fn rho3(
    session: &mut ProbeSession,
    c: f64,
    u: &Signal,
) -> Result<(f64, Signal, Signal, Signal)> {
    let nn = u.norm();
    if nn == 0.0 {
        return Err(Error::Domain("rho3 needs a nonzero input".into()));
    }
    let (y, sym_u, gram_u) = probe_triple(session, u)?;
    let value = rho3_value(c, u, &sym_u, &gram_u);
    Ok((value, y, sym_u, gram_u))
}

fn rho3_value(c: f64, u: &Signal, sym_u: &Signal, gram_u: &Signal) -> f64 {
    let nn = u.dot(u);
    (u.dot(gram_u) - c * u.dot(sym_u)) / nn + c * c
}

/// d rho_3 / dc = 2c - u^T (G+G^T) u / ||u||^2; free given the probes.
pub fn grad_c_rho3(c: f64, u: &Signal, sym_u: &Signal) -> f64 {
    2.0 * c - u.dot(sym_u) / u.dot(u)
}

/// Sphere gradient in u: (2/||u||^2) (A(c) - rho_3 I) u; free given the probes.
pub fn grad_u_rho3(c: f64, u: &Signal, sym_u: &Signal, gramgram_u: &Signal, value: f64) -> Signal {
    let nn = u.dot(u);
    gramgram_u
        .axpy(-c, sym_u)
        .axpy(c * c - value, u)
        .scaled(2.0 / nn)
}

/// One Arrow-Hurwicz step: simultaneous gradient descent in c and retracted
/// ascent in u, three samples.
pub fn arrow_hurwicz_step(
    session: &mut ProbeSession,
    c: f64,
    u: &Signal,
    alpha: f64,
) -> Result<(f64, Signal)> {
    let (value, _y, sym_u, gram_u) = rho3(session, c, u)?;
    let c_next = c - alpha * grad_c_rho3(c, u, &sym_u);
    let du = grad_u_rho3(c, u, &sym_u, &gram_u, value);
    let u_next = retract(u, &du.scaled(alpha))?;
    Ok((c_next, u_next))
}

/// One Uzawa step: the c-update is the exact inner minimizer
/// c' = (1/2) u^T (Gu + PGPu); the u-update ascends at the fresh center.
/// Three samples.
pub fn uzawa_step(session: &mut ProbeSession, u: &Signal, alpha: f64) -> Result<(f64, Signal)> {
    let (_y, sym_u, gram_u) = probe_triple(session, u)?;
    let nn = u.dot(u);
    let c_next = 0.5 * u.dot(&sym_u) / nn;
    let value = rho3_value(c_next, u, &sym_u, &gram_u);
    let du = grad_u_rho3(c_next, u, &sym_u, &gram_u, value);
    let u_next = retract(u, &du.scaled(alpha))?;
    Ok((c_next, u_next))
}

/// Runs the configured saddle iteration from (c, u) = (0, u0).
///
/// The divergence guard halts with a diagnostic when rho_3 jumps past ten
/// times the running envelope of values seen so far; the saddle guarantees
/// are local, and a single-step tenfold excursion past everything the run
/// has reached marks a lost iteration rather than progress.
pub fn estimate_cone(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<ConeMethod>,
) -> Result<ConeEstimate> {
    let u0 = cfg.u0.build(session.channels(), session.horizon())?;
    if cfg.method == ConeMethod::ContinuousFlow {
        return flow_cone(session, cfg, u0);
    }
    let mut trace = EstimateTrace::new();
    let outcome = run_saddle(session, cfg, u0, &mut trace);
    match outcome {
        Ok((c_hat, r_hat, u_current)) => Ok(ConeEstimate {
            c_hat,
            r_hat,
            u_current,
            trace,
            flow: None,
        }),
        Err(e) => Err(Error::EstimateAborted {
            reason: Box::new(e),
            trace,
        }),
    }
}

fn run_saddle(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<ConeMethod>,
    u0: Signal,
    trace: &mut EstimateTrace,
) -> Result<(f64, f64, Signal)> {
    let mut c = 0.0;
    let mut u = u0;
    let mut monitor = ConvergenceMonitor::new(cfg.rel_tol, cfg.patience);
    let mut envelope = f64::NEG_INFINITY;
    let mut last = (c, 0.0);

    for k in 0..cfg.max_iters {
        let (_y, sym_u, gram_u) = probe_triple(session, &u)?;
        let nn = u.dot(&u);
        // Uzawa minimizes in c first; Arrow-Hurwicz takes a gradient step.
        let c_now = match cfg.method {
            ConeMethod::Uzawa => 0.5 * u.dot(&sym_u) / nn,
            ConeMethod::ArrowHurwicz => c,
            ConeMethod::ContinuousFlow => unreachable!("handled upstream"),
        };
        let value = rho3_value(c_now, &u, &sym_u, &gram_u);
        let r_now = value.max(0.0).sqrt();
        trace.push(
            TraceRow::new(k, value, r_now, Some(cfg.alpha), session.samples_used())
                .with_cone(c_now, r_now),
        );
        if envelope.is_finite() && value > 10.0 * envelope.max(1e-9) {
            return Err(Error::Divergence {
                iteration: k,
                current: value,
                envelope,
            });
        }
        envelope = envelope.max(value);
        last = (c_now, value);

        let grad_c = grad_c_rho3(c_now, &u, &sym_u);
        let du = grad_u_rho3(c_now, &u, &sym_u, &gram_u, value);
        if grad_c.abs() <= cfg.grad_tol && du.norm() <= cfg.grad_tol {
            return Ok((c_now, r_now, u));
        }
        match cfg.method {
            ConeMethod::Uzawa => {
                c = c_now;
                u = retract(&u, &du.scaled(cfg.alpha))?;
            }
            ConeMethod::ArrowHurwicz => {
                c = c_now - cfg.alpha * grad_c;
                u = retract(&u, &du.scaled(cfg.alpha))?;
            }
            ConeMethod::ContinuousFlow => unreachable!(),
        }
        if monitor.update(value) {
            break;
        }
    }
    Ok((last.0, last.1.max(0.0).sqrt(), u))
}

fn flow_cone(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<ConeMethod>,
    u0: Signal,
) -> Result<ConeEstimate> {
    let flow_cfg = FlowConfig {
        rhs: RhsKind::ConicSaddle,
        t_end: cfg.flow_time,
        rel_tol: cfg.flow_rel_tol,
        abs_tol: cfg.flow_abs_tol,
        max_rhs_evals: cfg.max_rhs_evals,
    };
    let traj = integrate_flow(session, FlowState::CenterSphere(0.0, u0), &flow_cfg)?;
    let mut trace = EstimateTrace::new();
    for (i, p) in traj.points.iter().enumerate() {
        trace.push(TraceRow::new(i, p.objective, p.estimate, None, p.samples));
    }
    let (c_hat, u_current) = match &traj.state {
        FlowState::CenterSphere(c, u) => (*c, u.clone()),
        FlowState::Sphere(u) => (0.0, u.clone()),
    };
    let last = traj.points.last().expect("trajectory has points");
    Ok(ConeEstimate {
        c_hat,
        r_hat: last.estimate,
        u_current,
        trace,
        flow: Some(traj),
    })
}
