//! Ground-truth oracle with full plant knowledge.
//!
//! Everything here may materialize the hidden Toeplitz operator densely and
//! solve eigenproblems over it; estimators must never call into this module.
//! It backs tests, the divergence/step-bound diagnostics, and the CLI truth
//! reports.

pub mod dense;

use crate::error::{Error, Result};
use crate::lti::{ImpulseResponse, MimoPlant};
use crate::probe::Plant;
use crate::signal::Signal;
use dense::{
    back_solve_transposed, cholesky, dot, forward_solve_matrix, jacobi_eigen, sym_eigen,
    sym_eigvals, Mat,
};

/// Dense lower-triangular Toeplitz matrix of a SISO impulse response.
pub fn toeplitz_matrix(h: &ImpulseResponse) -> Mat {
    let n = h.horizon();
    let g = h.taps();
    Mat::from_fn(n, n, |i, j| if i >= j { g[i - j] } else { 0.0 })
}

/// Dense block operator of a MIMO plant (mn x mn, channel-major blocks).
pub fn mimo_matrix(p: &MimoPlant) -> Mat {
    let m = p.channels();
    let n = p.horizon();
    let mut gamma = Mat::zeros(m * n, m * n);
    for bi in 0..m {
        for bj in 0..m {
            let g = p.block(bi, bj).taps();
            for i in 0..n {
                for j in 0..=i {
                    gamma.set(bi * n + i, bj * n + j, g[i - j]);
                }
            }
        }
    }
    gamma
}

/// Dense operator of any plant.
pub fn operator_matrix(p: &Plant) -> Mat {
    match p {
        Plant::Siso(h) => toeplitz_matrix(h),
        Plant::Mimo(m) => mimo_matrix(m),
    }
}

/// G^T G. The SISO path exploits Toeplitz structure and assembles the
/// correlation sums in O(n^2).
pub fn gram_matrix(p: &Plant) -> Mat {
    match p {
        Plant::Siso(h) => {
            let n = h.horizon();
            let g = h.taps();
            let mut m = Mat::zeros(n, n);
            for d in 0..n {
                let mut run = 0.0;
                for j in (d..n).rev() {
                    let s = n - 1 - j;
                    run += g[s] * g[s + d];
                    m.set(j - d, j, run);
                    m.set(j, j - d, run);
                }
            }
            m
        }
        Plant::Mimo(p) => {
            let gamma = mimo_matrix(p);
            gamma.transpose().matmul(&gamma)
        }
    }
}

/// The symmetric part (G + G^T)/2.
pub fn sym_part_matrix(p: &Plant) -> Mat {
    match p {
        Plant::Siso(h) => {
            let n = h.horizon();
            let g = h.taps();
            Mat::from_fn(
                n,
                n,
                |i, j| {
                    if i == j {
                        g[0]
                    } else {
                        0.5 * g[i.abs_diff(j)]
                    }
                },
            )
        }
        Plant::Mimo(p) => {
            let gamma = mimo_matrix(p);
            let mut s = gamma.transpose();
            s.add_scaled(1.0, &gamma);
            s.scale_in_place(0.5);
            s
        }
    }
}

/// A(c) = G^T G - c (G + G^T) + c^2 I, assembled from precomputed pieces.
pub fn cone_matrix(gram: &Mat, sym_half: &Mat, c: f64) -> Mat {
    let n = gram.nrows();
    let mut a = gram.clone();
    a.add_scaled(-2.0 * c, sym_half);
    for i in 0..n {
        a.set(i, i, a.get(i, i) + c * c);
    }
    a
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Symmetric,
    GeneralizedPencil,
}

/// Eigenvalues (descending) with matching eigenvectors: orthonormal for
/// symmetric problems, B-orthonormal for the generalized pencil.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
    pub problem_kind: ProblemKind,
}

impl SpectralSummary {
    /// max_i ||M v_i - lambda_i v_i|| for the symmetric problem.
    pub fn max_residual_symmetric(&self, m: &Mat) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(&l, v)| {
                let mv = m.matvec(v);
                mv.iter()
                    .zip(v)
                    .map(|(a, b)| (a - l * b) * (a - l * b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// max_i ||M v_i - lambda_i N v_i|| for the pencil problem.
    pub fn max_residual_pencil(&self, m: &Mat, n: &Mat) -> f64 {
        self.eigenvalues
            .iter()
            .zip(&self.eigenvectors)
            .map(|(&l, v)| {
                let mv = m.matvec(v);
                let nv = n.matvec(v);
                mv.iter()
                    .zip(&nv)
                    .map(|(a, b)| (a - l * b) * (a - l * b))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }
}

/// Full eigendecomposition of a symmetric matrix as a summary.
pub fn symmetric_summary(m: &Mat) -> Result<SpectralSummary> {
    let (eigenvalues, eigenvectors) = sym_eigen(m)?;
    Ok(SpectralSummary {
        eigenvalues,
        eigenvectors,
        problem_kind: ProblemKind::Symmetric,
    })
}

/// Generalized symmetric-definite pencil (M, N) solved by the Cholesky
/// transform: N = R^T R, then the standard problem R^{-T} M R^{-1}.
/// Returned eigenvectors are N-orthonormal.
pub fn pencil_summary(m: &Mat, n: &Mat) -> Result<SpectralSummary> {
    let l = cholesky(n)?;
    let y = forward_solve_matrix(&l, m);
    let yt = y.transpose();
    let mut w = forward_solve_matrix(&l, &yt).transpose();
    w.symmetrize();
    let (eigenvalues, wvecs) = sym_eigen(&w)?;
    let eigenvectors = wvecs
        .into_iter()
        .map(|wv| back_solve_transposed(&l, &wv))
        .collect();
    Ok(SpectralSummary {
        eigenvalues,
        eigenvectors,
        problem_kind: ProblemKind::GeneralizedPencil,
    })
}

/// Pencil eigenvalues only (descending), cheaper than `pencil_summary`.
fn pencil_eigvals(m: &Mat, n: &Mat) -> Result<Vec<f64>> {
    let l = cholesky(n)?;
    let y = forward_solve_matrix(&l, m);
    let yt = y.transpose();
    let mut w = forward_solve_matrix(&l, &yt).transpose();
    w.symmetrize();
    sym_eigvals(w)
}

fn fix_sign(mut v: Vec<f64>) -> Vec<f64> {
    let mut idx = 0;
    let mut best = 0.0;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best {
            best = x.abs();
            idx = i;
        }
    }
    if v[idx] < 0.0 {
        for x in &mut v {
            *x = -*x;
        }
    }
    v
}

fn signal_from_vec(p: &Plant, v: Vec<f64>) -> Signal {
    Signal::new(p.channels(), v).expect("eigenvector entries are finite")
}

/// True L2-gain: gamma = sqrt(lambda_1(G^T G)) with the maximizing unit
/// input, sign fixed so its largest-magnitude entry is positive.
pub fn true_gain(p: &Plant) -> Result<(f64, Signal)> {
    let gram = gram_matrix(p);
    let summary = symmetric_summary(&gram)?;
    let gamma = summary.eigenvalues[0].max(0.0).sqrt();
    let u = fix_sign(summary.eigenvectors[0].clone());
    Ok((gamma, signal_from_vec(p, u)))
}

/// L2-gain value only (skips eigenvector accumulation).
pub fn l2_gain(p: &Plant) -> Result<f64> {
    let vals = sym_eigvals(gram_matrix(p))?;
    Ok(vals[0].max(0.0).sqrt())
}

fn check_leading_tap(p: &Plant) -> Result<()> {
    if let Plant::Siso(h) = p {
        if h.leading_tap() == 0.0 {
            return Err(Error::SingularOperator(
                "leading impulse-response tap is zero; the passivity pencil needs g0 != 0".into(),
            ));
        }
    }
    Ok(())
}

/// Shortage of passivity s = -lambda_min of the pencil ((G+G^T)/2, G^T G)
/// and the input-feedforward index nu = lambda_min((G+G^T)/2).
pub fn true_passivity(p: &Plant) -> Result<(f64, f64)> {
    check_leading_tap(p)?;
    let gram = gram_matrix(p);
    let sym_half = sym_part_matrix(p);
    let pencil = pencil_eigvals(&sym_half, &gram)?;
    let s = -pencil[pencil.len() - 1];
    let sym_vals = sym_eigvals(sym_half)?;
    let nu = sym_vals[sym_vals.len() - 1];
    Ok((s, nu))
}

/// Minimal conic sector: golden-section minimization of c -> lambda_1(A(c))
/// over [-2 gamma, 2 gamma], refined to |interval| <= 1e-8. Each step is a
/// dense symmetric eigensolve.
pub fn true_cone(p: &Plant) -> Result<(f64, f64)> {
    let gram = gram_matrix(p);
    let sym_half = sym_part_matrix(p);
    let gamma = sym_eigvals(gram.clone())?[0].max(0.0).sqrt();
    let top = |c: f64| -> Result<f64> {
        let a = cone_matrix(&gram, &sym_half, c);
        Ok(sym_eigvals(a)?[0])
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = -2.0 * gamma;
    let mut b = 2.0 * gamma;
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = top(x1)?;
    let mut f2 = top(x2)?;
    while b - a > 1e-8 {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = top(x1)?;
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = top(x2)?;
        }
    }
    let c_star = 0.5 * (a + b);
    let r_min = top(c_star)?.max(0.0).sqrt();
    Ok((c_star, r_min))
}

/// Which optimization problem a conditioning report describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    Gain,
    Passivity,
}

/// Local strong concavity/convexity gap l, gradient Lipschitz constant L,
/// and the line-search convergence-rate estimate ((L-l)/(L+l))^2 of the
/// chosen problem. A zero gap means the extreme eigenvalue is not simple
/// and the local guarantees are void.
#[derive(Debug, Clone, Copy)]
pub struct ConditioningReport {
    pub concavity_l: f64,
    pub lipschitz_big_l: f64,
    pub predicted_rate: f64,
    pub extreme_simple: bool,
}

pub fn conditioning(p: &Plant, problem: Problem) -> Result<ConditioningReport> {
    let vals = match problem {
        Problem::Gain => sym_eigvals(gram_matrix(p))?,
        Problem::Passivity => {
            check_leading_tap(p)?;
            let gram = gram_matrix(p);
            let sym_half = sym_part_matrix(p);
            // Minimization problem: measure gaps from the smallest
            // eigenvalue by flipping the spectrum.
            let mut v = pencil_eigvals(&sym_half, &gram)?;
            v.reverse();
            v.iter_mut().for_each(|x| *x = -*x);
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            v
        }
    };
    let n = vals.len();
    let (l, big_l) = if n < 2 {
        (0.0, 0.0)
    } else {
        (vals[0] - vals[1], vals[0] - vals[n - 1])
    };
    let extreme_simple = l > 1e-12 * big_l.max(1.0);
    let predicted_rate = if big_l <= 0.0 {
        0.0
    } else {
        ((big_l - l) / (big_l + l)).powi(2)
    };
    Ok(ConditioningReport {
        concavity_l: l,
        lipschitz_big_l: big_l,
        predicted_rate,
        extreme_simple,
    })
}

/// The saddle point of the conic objective: center, minimal radius, and the
/// maximizing input.
///
/// At the minimizer of c -> lambda_1(A(c)) the top eigenvalue is typically
/// twofold degenerate (two analytic branches cross); the equilibrium input
/// is then the unit vector inside the top eigenspace whose symmetric-part
/// quadratic form equals 2 c*, which exists by the intermediate value
/// theorem on the crossing branches.
#[derive(Debug, Clone)]
pub struct ConeSaddle {
    pub c_star: f64,
    pub r_min: f64,
    pub u_star: Vec<f64>,
    /// Top eigenvalue of A(c*) had (numerical) multiplicity two.
    pub degenerate: bool,
    /// u*^T (G+G^T) v_2 over the orthogonal partner in the top eigenspace;
    /// nonzero is the local-convergence assumption for degenerate tops.
    pub coupling: Option<f64>,
}

pub fn cone_saddle_point(p: &Plant) -> Result<ConeSaddle> {
    let (c_star, r_min) = true_cone(p)?;
    let gram = gram_matrix(p);
    let sym_half = sym_part_matrix(p);
    let a = cone_matrix(&gram, &sym_half, c_star);
    let summary = symmetric_summary(&a)?;
    let vals = &summary.eigenvalues;
    let n = vals.len();
    let scale = vals[0].abs().max(1.0);
    let degenerate = n > 1 && (vals[0] - vals[1]) <= 1e-5 * scale;
    if degenerate && n > 2 && (vals[0] - vals[2]) <= 1e-5 * scale {
        return Err(Error::Domain(
            "top eigenvalue of A(c*) has multiplicity > 2; saddle point is not isolated".into(),
        ));
    }
    if !degenerate {
        let u_star = fix_sign(summary.eigenvectors[0].clone());
        return Ok(ConeSaddle {
            c_star,
            r_min,
            u_star,
            degenerate,
            coupling: None,
        });
    }
    let v1 = &summary.eigenvectors[0];
    let v2 = &summary.eigenvectors[1];
    // q(theta) for v = cos(theta) v1 + sin(theta) v2 against S = G + G^T:
    // solve q(theta) = 2 c*.
    let s1 = sym_half.matvec(v1);
    let s2 = sym_half.matvec(v2);
    let q11 = 2.0 * dot(&s1, v1);
    let q12 = 2.0 * dot(&s1, v2);
    let q22 = 2.0 * dot(&s2, v2);
    let half_diff = 0.5 * (q11 - q22);
    let offset = 0.5 * (q11 + q22);
    let target = 2.0 * c_star - offset;
    let radius = half_diff.hypot(q12);
    let ratio = if radius > 0.0 {
        (target / radius).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let phi = q12.atan2(half_diff) + ratio.acos();
    let theta = 0.5 * phi;
    let (ct, st) = (theta.cos(), theta.sin());
    let u_star: Vec<f64> = v1.iter().zip(v2).map(|(a, b)| ct * a + st * b).collect();
    // orthogonal partner inside the eigenspace
    let v2_perp: Vec<f64> = v1.iter().zip(v2).map(|(a, b)| -st * a + ct * b).collect();
    let su = sym_half.matvec(&u_star);
    let coupling = 2.0 * dot(&su, &v2_perp);
    Ok(ConeSaddle {
        c_star,
        r_min,
        u_star: fix_sign(u_star),
        degenerate,
        coupling: Some(coupling),
    })
}

/// The saddle-iteration step bound 1 / (2 ||S S^T - 2 H|| ) evaluated at the
/// true optimum, with S the mixed second derivative of the cone objective
/// and H its u-Hessian, both restricted to the tangent space at u*.
pub fn uzawa_step_bound(p: &Plant) -> Result<f64> {
    let saddle = cone_saddle_point(p)?;
    let (c_star, r_min) = (saddle.c_star, saddle.r_min);
    let gram = gram_matrix(p);
    let sym_half = sym_part_matrix(p);
    let a = cone_matrix(&gram, &sym_half, c_star);
    let u = &saddle.u_star;
    let n = u.len();
    // S = 2((G+G^T)u - (u^T(G+G^T)u) u)
    let sym_u: Vec<f64> = sym_half.matvec(u).iter().map(|x| 2.0 * x).collect();
    let q = dot(&sym_u, u);
    let s_vec: Vec<f64> = sym_u
        .iter()
        .zip(u)
        .map(|(x, ui)| 2.0 * (x - q * ui))
        .collect();
    // B = S S^T - 2 * 2 (A(c*) - r_min^2 I)
    let mut b = Mat::from_fn(n, n, |i, j| s_vec[i] * s_vec[j] - 4.0 * a.get(i, j));
    let shift = 4.0 * r_min * r_min;
    for i in 0..n {
        b.set(i, i, b.get(i, i) + shift);
    }
    // restrict to the tangent space: P B P with P = I - u u^T
    let bu = b.matvec(u);
    let ubu = dot(&bu, u);
    let mut pbp = b;
    for i in 0..n {
        for j in 0..n {
            let v = pbp.get(i, j) - u[i] * bu[j] - bu[i] * u[j] + ubu * u[i] * u[j];
            pbp.set(i, j, v);
        }
    }
    let vals = sym_eigvals(pbp)?;
    let norm = vals.iter().map(|x| x.abs()).fold(0.0, f64::max);
    if norm == 0.0 {
        return Err(Error::Domain(
            "degenerate saddle curvature; step bound undefined".into(),
        ));
    }
    Ok(1.0 / (2.0 * norm))
}

/// Reference eigensolve by cyclic Jacobi, re-exported for validation runs.
pub fn jacobi_reference(m: &Mat) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    jacobi_eigen(m)
}

/// One frozen reference value: `plant_id, property, value, tolerance`.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenRow {
    pub plant_id: String,
    pub property: String,
    pub value: f64,
    pub tolerance: f64,
}

/// Parses the golden-file CSV (header `plant_id,property,value,tolerance`).
pub fn parse_golden(text: &str) -> Result<Vec<GoldenRow>> {
    let mut rows = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (ln == 0 && line.starts_with("plant_id")) {
            continue;
        }
        let parts: Vec<&str> = line.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::Domain(format!(
                "golden file line {} has {} fields, expected 4",
                ln + 1,
                parts.len()
            )));
        }
        let value: f64 = parts[2]
            .parse()
            .map_err(|_| Error::Domain(format!("golden value unparsable on line {}", ln + 1)))?;
        let tolerance: f64 = parts[3].parse().map_err(|_| {
            Error::Domain(format!("golden tolerance unparsable on line {}", ln + 1))
        })?;
        rows.push(GoldenRow {
            plant_id: parts[0].to_string(),
            property: parts[1].to_string(),
            value,
            tolerance,
        });
    }
    Ok(rows)
}

pub fn format_golden(rows: &[GoldenRow]) -> String {
    let mut out = String::from("plant_id,property,value,tolerance\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.plant_id, r.property, r.value, r.tolerance
        ));
    }
    out
}
