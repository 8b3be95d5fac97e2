//! Black-box L2-gain estimation.
//!
//! gamma^2 is the maximum of the Rayleigh quotient rho_1(u) =
//! u^T G^T G u / ||u||^2 over the unit sphere, reachable through probes
//! alone: one Gram probe per iterate gives both the quotient and its
//! sphere gradient. The one-sample variant runs the power method on the
//! symmetric operator PG instead, whose dominant absolute eigenvalue is
//! exactly gamma.

use crate::config::{ConvergenceMonitor, EstimatorConfig, GainMethod};
use crate::error::{Error, Result};
use crate::flows::{integrate_flow, FlowConfig, FlowState, FlowTrajectory, RhsKind};
use crate::probe::ProbeSession;
use crate::signal::{retract, Signal};
use crate::trace::{EstimateTrace, TraceRow};

/// Result of a gain estimation run.
///
/// `gamma_hat` squared equals the rho_1 value of `u_current` as computed
/// from the latest probe (for the PG variant, the square of the latest
/// absolute PG quotient).
#[derive(Debug, Clone)]
pub struct GainEstimate {
    pub gamma_hat: f64,
    pub u_current: Signal,
    pub trace: EstimateTrace,
    /// Present for the continuous-flow method only.
    pub flow: Option<FlowTrajectory>,
}

/// rho_1(u) from one Gram probe: returns the quotient together with the
/// raw output y = Gu and gram_u = G^T G u (2 samples on SISO plants).
pub fn rho1(session: &mut ProbeSession, u: &Signal) -> Result<(f64, Signal, Signal)> {
    let norm = u.norm();
    if norm == 0.0 {
        return Err(Error::Domain("rho1 needs a nonzero input".into()));
    }
    let (y, gram_u) = session.gram_apply(u)?;
    let value = u.dot(&gram_u) / (norm * norm);
    Ok((value, y, gram_u))
}

/// Sphere gradient 2 G^T G u - 2 rho_1(u) u, free given rho1's outputs.
pub fn grad_rho1(u: &Signal, gram_u: &Signal, value: f64) -> Signal {
    gram_u.scaled(2.0).axpy(-2.0 * value, u)
}

fn normalize_or_degenerate(v: Signal, what: &str) -> Result<Signal> {
    let norm = v.norm();
    if !(norm > 1e-300) {
        return Err(Error::DegenerateInput(format!(
            "{what} collapsed to numerical zero; restart from a different input"
        )));
    }
    Ok(v.scaled(1.0 / norm))
}

/// One power-method step on G^T G: u -> G^T G u / ||G^T G u|| (2 samples).
pub fn power_step(session: &mut ProbeSession, u: &Signal) -> Result<Signal> {
    let (_, gram_u) = session.gram_apply(u)?;
    normalize_or_degenerate(gram_u, "power step G^T G u")
}

/// One power-method step on PG: u -> reverse(Gu) normalized (1 sample,
/// SISO only). The induced gain estimate is |u^T reverse(Gu)|.
pub fn pg_power_step(session: &mut ProbeSession, u: &Signal) -> Result<Signal> {
    if session.channels() != 1 {
        return Err(Error::Domain(
            "pg_power requires a SISO plant; PG is symmetric only for Toeplitz operators".into(),
        ));
    }
    let v = session.evaluate(u)?.reversed();
    normalize_or_degenerate(v, "power step PGu")
}

/// Maximizer of the quotient ([1 a]^T M [1 a]) / ([1 a]^T N [1 a]) over a,
/// i.e. the eigenvector of the larger 2x2 pencil eigenvalue, scaled so the
/// first entry is one. `None` when N is not positive definite or the
/// scaling degenerates (|first entry| < 1e-12 after normalization).
pub fn pencil_2x2_extreme(
    m11: f64,
    m12: f64,
    m22: f64,
    n11: f64,
    n12: f64,
    n22: f64,
    want_max: bool,
) -> Option<(f64, f64)> {
    let det_n = n11 * n22 - n12 * n12;
    if !(n11 > 0.0) || !(det_n > 0.0) {
        return None;
    }
    // det(M - lambda N) = a l^2 + b l + c
    let a = det_n;
    let b = -(m11 * n22 + m22 * n11 - 2.0 * m12 * n12);
    let c = m11 * m22 - m12 * m12;
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 || !disc.is_finite() {
        return None;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + if b >= 0.0 { sq } else { -sq });
    let (mut l1, mut l2) = (q / a, if q != 0.0 { c / q } else { -b / a - q / a });
    if l1 < l2 {
        std::mem::swap(&mut l1, &mut l2);
    }
    let lambda = if want_max { l1 } else { l2 };
    // null vector of (M - lambda N): orthogonal to its larger row
    let r1 = (m11 - lambda * n11, m12 - lambda * n12);
    let r2 = (m12 - lambda * n12, m22 - lambda * n22);
    let row = if r1.0.hypot(r1.1) >= r2.0.hypot(r2.1) {
        r1
    } else {
        r2
    };
    let (v0, v1) = (-row.1, row.0);
    let norm = v0.hypot(v1);
    if norm == 0.0 || (v0 / norm).abs() < 1e-12 {
        return None;
    }
    Some((lambda, v1 / v0))
}

/// Runs the configured gain estimator until tolerance, gradient, budget or
/// iteration limits fire. Budget exhaustion propagates as an abort with the
/// partial trace attached.
pub fn estimate_gain(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<GainMethod>,
) -> Result<GainEstimate> {
    let u0 = cfg.u0.build(session.channels(), session.horizon())?;
    if cfg.method == GainMethod::PgPower && session.channels() != 1 {
        return Err(Error::Domain("pg_power requires a SISO plant".into()));
    }
    if cfg.method == GainMethod::ContinuousFlow {
        return flow_gain(session, cfg, u0);
    }

    let mut trace = EstimateTrace::new();
    let outcome = run_iterations(session, cfg, u0, &mut trace);
    match outcome {
        Ok((gamma_hat, u_current)) => Ok(GainEstimate {
            gamma_hat,
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

fn run_iterations(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<GainMethod>,
    u0: Signal,
    trace: &mut EstimateTrace,
) -> Result<(f64, Signal)> {
    let mut u = u0;
    let mut monitor = ConvergenceMonitor::new(cfg.rel_tol, cfg.patience);

    match cfg.method {
        GainMethod::Power | GainMethod::GradientAscent => {
            let mut gamma = 0.0;
            for k in 0..cfg.max_iters {
                let (value, _y, gram_u) = rho1(session, &u)?;
                gamma = value.max(0.0).sqrt();
                let grad = grad_rho1(&u, &gram_u, value);
                let alpha = match cfg.method {
                    GainMethod::GradientAscent => Some(cfg.alpha),
                    _ => None,
                };
                trace.push(TraceRow::new(
                    k,
                    value,
                    gamma,
                    alpha,
                    session.samples_used(),
                ));
                if monitor.update(value) || grad.norm() <= cfg.grad_tol {
                    return Ok((gamma, u));
                }
                u = match cfg.method {
                    GainMethod::Power => normalize_or_degenerate(gram_u, "power step G^T G u")?,
                    _ => retract(&u, &grad.scaled(cfg.alpha))?,
                };
            }
            Ok((gamma, u))
        }
        GainMethod::PgPower => {
            let mut gamma = 0.0;
            for k in 0..cfg.max_iters {
                let v = session.evaluate(&u)?.reversed();
                let q = u.dot(&v);
                gamma = q.abs();
                trace.push(TraceRow::new(k, q * q, gamma, None, session.samples_used()));
                let grad_norm = 2.0 * v.axpy(-q, &u).norm();
                if monitor.update(gamma) || grad_norm <= cfg.grad_tol {
                    return Ok((gamma, u));
                }
                u = normalize_or_degenerate(v, "power step PGu")?;
            }
            Ok((gamma, u))
        }
        GainMethod::GradientAscentLineSearch => {
            let (mut value, _y, mut gram_u) = rho1(session, &u)?;
            let mut gamma = value.max(0.0).sqrt();
            trace.push(TraceRow::new(0, value, gamma, None, session.samples_used()));
            for k in 1..cfg.max_iters {
                let p = grad_rho1(&u, &gram_u, value);
                if p.norm() <= cfg.grad_tol {
                    return Ok((gamma, u));
                }
                let (_yp, gram_p) = session.gram_apply(&p)?;
                // 2x2 quotient of (G^T G, I) restricted to span{u, p}
                let m11 = value;
                let m12 = 0.5 * (gram_u.dot(&p) + gram_p.dot(&u));
                let m22 = p.dot(&gram_p);
                let n11 = 1.0;
                let n12 = u.dot(&p);
                let n22 = p.dot(&p);
                let alpha = pencil_2x2_extreme(m11, m12, m22, n11, n12, n22, true)
                    .map(|(_, a)| a)
                    .unwrap_or(cfg.alpha);
                let shifted = u.axpy(alpha, &p);
                let norm = shifted.norm();
                if !(norm > 1e-300) {
                    return Err(Error::DegenerateInput("line-search step collapsed".into()));
                }
                u = shifted.scaled(1.0 / norm);
                gram_u = gram_u.axpy(alpha, &gram_p).scaled(1.0 / norm);
                value = u.dot(&gram_u);
                gamma = value.max(0.0).sqrt();
                trace.push(TraceRow::new(
                    k,
                    value,
                    gamma,
                    Some(alpha),
                    session.samples_used(),
                ));
                if monitor.update(value) {
                    return Ok((gamma, u));
                }
            }
            Ok((gamma, u))
        }
        GainMethod::ContinuousFlow => unreachable!("handled by estimate_gain"),
    }
}

fn flow_gain(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<GainMethod>,
    u0: Signal,
) -> Result<GainEstimate> {
    let flow_cfg = FlowConfig {
        rhs: RhsKind::GainAscent,
        t_end: cfg.flow_time,
        rel_tol: cfg.flow_rel_tol,
        abs_tol: cfg.flow_abs_tol,
        max_rhs_evals: cfg.max_rhs_evals,
    };
    let traj = integrate_flow(session, FlowState::Sphere(u0), &flow_cfg)?;
    let mut trace = EstimateTrace::new();
    for (i, p) in traj.points.iter().enumerate() {
        trace.push(TraceRow::new(i, p.objective, p.estimate, None, p.samples));
    }
    let last = traj.points.last().expect("trajectory has points");
    let u_current = match &traj.state {
        FlowState::Sphere(u) => u.clone(),
        FlowState::CenterSphere(_, u) => u.clone(),
    };
    Ok(GainEstimate {
        gamma_hat: last.estimate,
        u_current,
        trace,
        flow: Some(traj),
    })
}
