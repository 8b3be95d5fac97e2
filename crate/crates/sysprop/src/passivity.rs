//! Black-box estimation of the shortage of passivity.
//!
//! s = -min over the sphere of the generalized Rayleigh quotient
//! rho_2(u) = (1/2) u^T (G+G^T) u / u^T G^T G u. One probe triple per
//! iterate, (u, Gu), (Pu, GPu), (PGu, GPGu), yields the quotient, its
//! gradient and the exact line-search pencil; cached linear combinations
//! keep the steady-state cost at three samples per iteration. The
//! denominator uses u^T (PG)^2 u rather than ||Gu||^2 so measurement noise
//! enters linearly instead of squared.

use crate::config::{ConvergenceMonitor, EstimatorConfig, PassivityMethod};
use crate::error::{Error, Result};
use crate::flows::{integrate_flow, FlowConfig, FlowState, FlowTrajectory, RhsKind};
use crate::gain::pencil_2x2_extreme;
use crate::probe::ProbeSession;
use crate::signal::{retract, Signal};
use crate::trace::{EstimateTrace, TraceRow};

/// The reusable probe products: (G+G^T)u, G^T G u for the current iterate
/// and, after a line search, the same pair for the latest search direction.
#[derive(Debug, Clone)]
pub struct ReuseCache {
    pub sym_u: Signal,
    pub gram_u: Signal,
    pub sym_p: Option<Signal>,
    pub gram_p: Option<Signal>,
}

#[derive(Debug, Clone)]
pub struct PassivityEstimate {
    /// -rho_2 at the final iterate.
    pub s_hat: f64,
    /// Input-feedforward passivity index, when its estimator ran.
    pub nu_hat: Option<f64>,
    pub u_current: Signal,
    pub cached: ReuseCache,
    pub trace: EstimateTrace,
    pub nu_trace: Option<EstimateTrace>,
    /// Present for the continuous-flow method only.
    pub flow: Option<FlowTrajectory>,
}

/// rho_2(u) from three samples; returns (value, sym_u, gram_u) with
/// sym_u = (G+G^T)u and gram_u = G^T G u.
///
/// A nonpositive denominator is a singular-operator error on noiseless
/// sessions and a retry signal under noise.
pub fn rho2(session: &mut ProbeSession, u: &Signal) -> Result<(f64, Signal, Signal)> {
    if u.norm() == 0.0 {
        return Err(Error::Domain("rho2 needs a nonzero input".into()));
    }
    session.ensure_budget(1 + 2 * session.adjoint_cost())?;
    let y = session.evaluate(u)?;
    let gt_u = session.adjoint_apply(u)?;
    let gram_u = session.adjoint_apply(&y)?;
    let sym_u = y.axpy(1.0, &gt_u);
    let denom = u.dot(&gram_u);
    if denom <= 0.0 {
        return Err(if session.is_noiseless() {
            Error::SingularOperator(format!("u^T G^T G u = {denom} is not positive"))
        } else {
            Error::NoisyDenominator
        });
    }
    Ok((0.5 * u.dot(&sym_u) / denom, sym_u, gram_u))
}

/// Sphere gradient of rho_2: ((G+G^T)u - 2 rho_2 G^T G u) / ||Gu||^2,
/// assembled from rho2's outputs at no extra samples.
pub fn grad_rho2(u: &Signal, sym_u: &Signal, gram_u: &Signal, value: f64) -> Signal {
    let denom = u.dot(gram_u);
    sym_u.axpy(-2.0 * value, gram_u).scaled(1.0 / denom)
}

/// Outcome of the exact line search along p.
#[derive(Debug, Clone)]
pub struct LineSearch {
    /// The optimal step, or None when the 2x2 pencil degenerated (noise,
    /// zero direction, or an eigenvector with vanishing first entry); the
    /// caller then falls back to its fixed step.
    pub alpha_star: Option<f64>,
    pub sym_p: Signal,
    pub gram_p: Signal,
}

/// Exact line search for rho_2 along a tangent direction p.
///
/// Probes (p, Gp), (Pp, GPp), (PGp, GPGp), forms the 2x2 pencil of the
/// restricted quotient and takes the eigenvector of the smaller eigenvalue
/// scaled to unit first entry; its second entry is alpha*. The probed
/// (G+G^T)p, G^T G p return for reuse regardless of degeneracy.
pub fn exact_line_search(
    session: &mut ProbeSession,
    u: &Signal,
    p: &Signal,
    cached: &ReuseCache,
) -> Result<LineSearch> {
    session.ensure_budget(1 + 2 * session.adjoint_cost())?;
    let y_p = session.evaluate(p)?;
    let gt_p = session.adjoint_apply(p)?;
    let gram_p = session.adjoint_apply(&y_p)?;
    let sym_p = y_p.axpy(1.0, &gt_p);

    let m11 = u.dot(&cached.sym_u);
    let m12 = 0.5 * (u.dot(&sym_p) + p.dot(&cached.sym_u));
    let m22 = p.dot(&sym_p);
    let n11 = u.dot(&cached.gram_u);
    let n12 = 0.5 * (u.dot(&gram_p) + p.dot(&cached.gram_u));
    let n22 = p.dot(&gram_p);
    let alpha_star = pencil_2x2_extreme(m11, m12, m22, n11, n12, n22, false).map(|(_, a)| a);
    Ok(LineSearch {
        alpha_star,
        sym_p,
        gram_p,
    })
}

/// Runs the configured shortage-of-passivity estimator; optionally also the
/// input-feedforward index descent on the same session.
pub fn estimate_passivity(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<PassivityMethod>,
) -> Result<PassivityEstimate> {
    let u0 = cfg.u0.build(session.channels(), session.horizon())?;
    if cfg.method == PassivityMethod::ContinuousFlow {
        return flow_passivity(session, cfg, u0);
    }
    let mut trace = EstimateTrace::new();
    let outcome = run_descent(session, cfg, u0.clone(), &mut trace);
    match outcome {
        Ok((value, u, cached)) => {
            let (nu_hat, nu_trace) = if cfg.with_nu {
                let (nu, nt) = estimate_nu(session, cfg, u0)?;
                (Some(nu), Some(nt))
            } else {
                (None, None)
            };
            Ok(PassivityEstimate {
                s_hat: -value,
                nu_hat,
                u_current: u,
                cached,
                trace,
                nu_trace,
                flow: None,
            })
        }
        Err(e) => Err(Error::EstimateAborted {
            reason: Box::new(e),
            trace,
        }),
    }
}

/// Probes rho2 with a small retry allowance for noisy denominators.
fn rho2_with_retry(session: &mut ProbeSession, u: &Signal) -> Result<(f64, Signal, Signal)> {
    let mut last = None;
    for _ in 0..3 {
        match rho2(session, u) {
            Err(Error::NoisyDenominator) => last = Some(Error::NoisyDenominator),
            other => return other,
        }
    }
    Err(last.expect("loop ran"))
}

fn run_descent(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<PassivityMethod>,
    u0: Signal,
    trace: &mut EstimateTrace,
) -> Result<(f64, Signal, ReuseCache)> {
    let mut u = u0;
    let (mut value, mut sym_u, mut gram_u) = rho2_with_retry(session, &u)?;
    let mut monitor = ConvergenceMonitor::new(cfg.rel_tol, cfg.patience);
    trace.push(TraceRow::new(
        0,
        value,
        -value,
        None,
        session.samples_used(),
    ));
    monitor.update(value);
    let mut cached = ReuseCache {
        sym_u: sym_u.clone(),
        gram_u: gram_u.clone(),
        sym_p: None,
        gram_p: None,
    };

    for k in 1..cfg.max_iters {
        let p = grad_rho2(&u, &sym_u, &gram_u, value).scaled(-1.0);
        if p.norm() <= cfg.grad_tol {
            break;
        }
        match cfg.method {
            PassivityMethod::GradientDescentLineSearch => {
                let ls = exact_line_search(session, &u, &p, &cached)?;
                let alpha = ls.alpha_star.unwrap_or(cfg.alpha);
                let shifted = u.axpy(alpha, &p);
                let norm = shifted.norm();
                if !(norm > 1e-300) {
                    return Err(Error::DegenerateInput("line-search step collapsed".into()));
                }
                u = shifted.scaled(1.0 / norm);
                sym_u = sym_u.axpy(alpha, &ls.sym_p).scaled(1.0 / norm);
                gram_u = gram_u.axpy(alpha, &ls.gram_p).scaled(1.0 / norm);
                let denom = u.dot(&gram_u);
                if denom <= 0.0 {
                    if session.is_noiseless() {
                        return Err(Error::SingularOperator(format!(
                            "u^T G^T G u = {denom} is not positive"
                        )));
                    }
                    // Reuse drifted too far under noise; re-anchor with a
                    // fresh probe triple.
                    let fresh = rho2_with_retry(session, &u)?;
                    value = fresh.0;
                    sym_u = fresh.1;
                    gram_u = fresh.2;
                } else {
                    value = 0.5 * u.dot(&sym_u) / denom;
                }
                cached = ReuseCache {
                    sym_u: sym_u.clone(),
                    gram_u: gram_u.clone(),
                    sym_p: Some(ls.sym_p),
                    gram_p: Some(ls.gram_p),
                };
                trace.push(TraceRow::new(
                    k,
                    value,
                    -value,
                    Some(alpha),
                    session.samples_used(),
                ));
            }
            PassivityMethod::GradientDescent => {
                u = retract(&u, &p.scaled(cfg.alpha))?;
                let fresh = rho2_with_retry(session, &u)?;
                value = fresh.0;
                sym_u = fresh.1;
                gram_u = fresh.2;
                cached = ReuseCache {
                    sym_u: sym_u.clone(),
                    gram_u: gram_u.clone(),
                    sym_p: None,
                    gram_p: None,
                };
                trace.push(TraceRow::new(
                    k,
                    value,
                    -value,
                    Some(cfg.alpha),
                    session.samples_used(),
                ));
            }
            PassivityMethod::ContinuousFlow => unreachable!("handled upstream"),
        }
        if monitor.update(value) {
            break;
        }
    }
    Ok((value, u, cached))
}

/// Input-feedforward passivity index: descend the plain Rayleigh quotient
/// of (G+G^T)/2 on the sphere, two samples per iteration; nu_hat is the
/// smallest quotient seen.
fn estimate_nu(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<PassivityMethod>,
    u0: Signal,
) -> Result<(f64, EstimateTrace)> {
    let mut u = u0;
    let mut trace = EstimateTrace::new();
    let mut monitor = ConvergenceMonitor::new(cfg.rel_tol, cfg.patience);
    let mut nu_best = f64::INFINITY;
    let run = |session: &mut ProbeSession,
               u: &mut Signal,
               trace: &mut EstimateTrace,
               monitor: &mut ConvergenceMonitor,
               nu_best: &mut f64|
     -> Result<()> {
        for k in 0..cfg.max_iters {
            session.ensure_budget(1 + session.adjoint_cost())?;
            let y = session.evaluate(u)?;
            let gt_u = session.adjoint_apply(u)?;
            let sym_u = y.axpy(1.0, &gt_u);
            let q = 0.5 * u.dot(&sym_u);
            *nu_best = nu_best.min(q);
            trace.push(TraceRow::new(
                k,
                q,
                *nu_best,
                Some(cfg.alpha),
                session.samples_used(),
            ));
            let grad = sym_u.axpy(-u.dot(&sym_u), u);
            if monitor.update(q) || grad.norm() <= cfg.grad_tol {
                break;
            }
            *u = retract(u, &grad.scaled(-cfg.alpha))?;
        }
        Ok(())
    };
    match run(session, &mut u, &mut trace, &mut monitor, &mut nu_best) {
        Ok(()) => Ok((nu_best, trace)),
        Err(e) => Err(Error::EstimateAborted {
            reason: Box::new(e),
            trace,
        }),
    }
}

fn flow_passivity(
    session: &mut ProbeSession,
    cfg: &EstimatorConfig<PassivityMethod>,
    u0: Signal,
) -> Result<PassivityEstimate> {
    let flow_cfg = FlowConfig {
        rhs: RhsKind::PassivityDescent,
        t_end: cfg.flow_time,
        rel_tol: cfg.flow_rel_tol,
        abs_tol: cfg.flow_abs_tol,
        max_rhs_evals: cfg.max_rhs_evals,
    };
    let traj = integrate_flow(session, FlowState::Sphere(u0.clone()), &flow_cfg)?;
    let mut trace = EstimateTrace::new();
    for (i, p) in traj.points.iter().enumerate() {
        trace.push(TraceRow::new(i, p.objective, p.estimate, None, p.samples));
    }
    let u_current = match &traj.state {
        FlowState::Sphere(u) => u.clone(),
        FlowState::CenterSphere(_, u) => u.clone(),
    };
    let last = traj.points.last().expect("trajectory has points");
    let value = last.objective;
    // One fresh probe triple so the returned cache matches u_current.
    let (v2, sym_u, gram_u) = rho2_with_retry(session, &u_current)?;
    let (nu_hat, nu_trace) = if cfg.with_nu {
        let (nu, nt) = estimate_nu(session, cfg, u0)?;
        (Some(nu), Some(nt))
    } else {
        (None, None)
    };
    let _ = v2;
    Ok(PassivityEstimate {
        s_hat: -value,
        nu_hat,
        u_current,
        cached: ReuseCache {
            sym_u,
            gram_u,
            sym_p: None,
            gram_p: None,
        },
        trace,
        nu_trace,
        flow: Some(traj),
    })
}
