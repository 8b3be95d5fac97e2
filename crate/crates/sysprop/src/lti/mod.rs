//! LTI plant models and the finite-horizon convolution operator.
//!
//! A plant is visible to estimators only through the probe module; the types
//! here construct the hidden side: impulse-response sequences, state-space
//! models with exact zero-order-hold discretization, block MIMO operators,
//! and reproducible random stable plants.

mod conv;

use nalgebra::{Complex, DMatrix, DVector, RowDVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::signal::Signal;

pub(crate) use conv::causal_conv;

/// Finite impulse-response sequence g_0..g_{n-1}; the horizon n is the tap count.
///
/// Applying it to a length-n input realizes the lower-triangular Toeplitz
/// convolution operator on the truncated horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    taps: Vec<f64>,
}

impl ImpulseResponse {
    pub fn new(taps: Vec<f64>) -> Result<Self> {
        if taps.is_empty() {
            return Err(Error::Domain(
                "impulse response needs at least one tap".into(),
            ));
        }
        if !taps.iter().all(|x| x.is_finite()) {
            return Err(Error::Domain(
                "impulse response contains a non-finite tap".into(),
            ));
        }
        Ok(Self { taps })
    }

    pub fn horizon(&self) -> usize {
        self.taps.len()
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Leading tap g_0; the passivity pencil needs it nonzero.
    pub fn leading_tap(&self) -> f64 {
        self.taps[0]
    }

    pub(crate) fn apply_slice(&self, u: &[f64]) -> Vec<f64> {
        causal_conv(&self.taps, u)
    }
}

/// y(t) = sum_{k=0}^{t-1} g_k u(t-k) on the common horizon.
pub fn toeplitz_apply(h: &ImpulseResponse, u: &Signal) -> Result<Signal> {
    if u.channels() != 1 {
        return Err(Error::Dimension {
            context: "toeplitz_apply channels",
            expected: 1,
            got: u.channels(),
        });
    }
    if u.len() != h.horizon() {
        return Err(Error::Dimension {
            context: "toeplitz_apply length",
            expected: h.horizon(),
            got: u.len(),
        });
    }
    Ok(Signal::from_raw(1, h.apply_slice(u.channel(0))))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeDomain {
    Continuous,
    Discrete,
}

/// SISO state-space model (A, B, C, D), continuous- or discrete-time.
///
/// Construction enforces the standing stability assumption: continuous
/// models need all eigenvalue real parts strictly negative, discrete models
/// a spectral radius strictly below one.
#[derive(Debug, Clone)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: RowDVector<f64>,
    d: f64,
    time_domain: TimeDomain,
}

impl StateSpaceModel {
    pub fn new(
        a: Vec<Vec<f64>>,
        b: Vec<f64>,
        c: Vec<f64>,
        d: f64,
        time_domain: TimeDomain,
    ) -> Result<Self> {
        let nx = a.len();
        if nx == 0 || a.iter().any(|row| row.len() != nx) {
            return Err(Error::Domain("A must be square and nonempty".into()));
        }
        if b.len() != nx || c.len() != nx {
            return Err(Error::Dimension {
                context: "state-space B/C length",
                expected: nx,
                got: if b.len() != nx { b.len() } else { c.len() },
            });
        }
        let flat: Vec<f64> = a.iter().flatten().copied().collect();
        if !flat.iter().all(|x| x.is_finite())
            || !b.iter().all(|x| x.is_finite())
            || !c.iter().all(|x| x.is_finite())
            || !d.is_finite()
        {
            return Err(Error::Domain("state-space entries must be finite".into()));
        }
        let model = Self {
            a: DMatrix::from_row_slice(nx, nx, &flat),
            b: DVector::from_vec(b),
            c: RowDVector::from_vec(c),
            d,
            time_domain,
        };
        model.check_stability()?;
        Ok(model)
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn time_domain(&self) -> TimeDomain {
        self.time_domain
    }

    pub fn feedthrough(&self) -> f64 {
        self.d
    }

    fn eigenvalues(&self) -> Vec<Complex<f64>> {
        self.a.complex_eigenvalues().iter().copied().collect()
    }

    fn check_stability(&self) -> Result<()> {
        // Strictly unstable models are rejected, as are poles at the
        // continuous origin / discrete z = 1 (the excluded pure-integrator
        // boundary). Undamped oscillatory modes on the stability boundary
        // pass: the finite-horizon operator stays well defined and the
        // reference oscillator plant has purely imaginary poles.
        let tol = 1e-9 * (1.0 + one_norm(&self.a));
        match self.time_domain {
            TimeDomain::Continuous => {
                for l in self.eigenvalues() {
                    if l.re > tol {
                        return Err(Error::Unstable(format!(
                            "continuous model has eigenvalue real part {} > 0",
                            l.re
                        )));
                    }
                    if l.norm() <= tol {
                        return Err(Error::Unstable(
                            "continuous model has a pole at the origin (pure integrator)".into(),
                        ));
                    }
                }
            }
            TimeDomain::Discrete => {
                for l in self.eigenvalues() {
                    if l.norm() > 1.0 + tol {
                        return Err(Error::Unstable(format!(
                            "discrete model has spectral radius {} > 1",
                            l.norm()
                        )));
                    }
                    if (l - nalgebra::Complex::new(1.0, 0.0)).norm() <= tol {
                        return Err(Error::Unstable(
                            "discrete model has a pole at z = 1 (pure integrator)".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Spectral radius of A (discrete) or max real part (continuous);
    /// exposed so experiments can report the construction margin.
    pub fn stability_margin(&self) -> f64 {
        match self.time_domain {
            TimeDomain::Continuous => self
                .eigenvalues()
                .iter()
                .map(|l| l.re)
                .fold(f64::NEG_INFINITY, f64::max),
            TimeDomain::Discrete => self
                .eigenvalues()
                .iter()
                .map(|l| l.norm())
                .fold(0.0, f64::max),
        }
    }

    /// First n Markov parameters of a discrete model: g_0 = D, g_k = C A^{k-1} B.
    pub fn impulse_taps(&self, n: usize) -> Result<ImpulseResponse> {
        if self.time_domain != TimeDomain::Discrete {
            return Err(Error::Domain(
                "impulse taps need a discrete model; discretize first".into(),
            ));
        }
        if n == 0 {
            return Err(Error::Domain("horizon must be positive".into()));
        }
        let mut taps = Vec::with_capacity(n);
        taps.push(self.d);
        let mut x = self.b.clone();
        for _ in 1..n {
            taps.push((&self.c * &x)[(0, 0)]);
            x = &self.a * x;
        }
        ImpulseResponse::new(taps)
    }
}

/// Dense 1-norm (max absolute column sum).
fn one_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.ncols())
        .map(|j| m.column(j).iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by Pade order 13 with scaling and squaring.
fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    const THETA_13: f64 = 5.371920351148152;
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    let n = a.nrows();
    let norm = one_norm(a);
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a1 = a * 2f64.powi(-s);
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = &a1 * &a1;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let u = &a1
        * (&a6 * (B[13] * &a6 + B[11] * &a4 + B[9] * &a2)
            + B[7] * &a6
            + B[5] * &a4
            + B[3] * &a2
            + B[1] * &id);
    let v = &a6 * (B[12] * &a6 + B[10] * &a4 + B[8] * &a2)
        + B[6] * &a6
        + B[4] * &a4
        + B[2] * &a2
        + B[0] * &id;
    let lhs = &v - &u;
    let rhs = &v + &u;
    let mut e = lhs
        .lu()
        .solve(&rhs)
        .expect("Pade denominator is nonsingular for scaled inputs");
    for _ in 0..s {
        e = &e * &e;
    }
    e
}

/// Exact zero-order-hold discretization of a stable continuous model,
/// returning its first n impulse-response samples.
///
/// The discrete pair comes from the matrix exponential of the augmented
/// block [[A, B], [0, 0]] scaled by dt, so g_0 = D and g_k = C A_d^{k-1} B_d.
pub fn zoh_discretize(m: &StateSpaceModel, dt: f64, n: usize) -> Result<ImpulseResponse> {
    if m.time_domain != TimeDomain::Continuous {
        return Err(Error::Domain(
            "zoh_discretize expects a continuous model".into(),
        ));
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain(format!(
            "sampling time must be positive, got {dt}"
        )));
    }
    if n == 0 {
        return Err(Error::Domain("horizon must be positive".into()));
    }
    m.check_stability()?;
    let nx = m.order();
    let mut aug = DMatrix::<f64>::zeros(nx + 1, nx + 1);
    aug.view_mut((0, 0), (nx, nx)).copy_from(&m.a);
    aug.view_mut((0, nx), (nx, 1)).copy_from(&m.b);
    let e = expm(&(aug * dt));
    let ad: Vec<Vec<f64>> = (0..nx)
        .map(|i| (0..nx).map(|j| e[(i, j)]).collect())
        .collect();
    let bd: Vec<f64> = (0..nx).map(|i| e[(i, nx)]).collect();
    let cd: Vec<f64> = m.c.iter().copied().collect();
    let discrete = StateSpaceModel::new(ad, bd, cd, m.d, TimeDomain::Discrete)?;
    discrete.impulse_taps(n)
}

/// Deterministic random stable discrete model.
///
/// Recipe (fixed so downstream reference numbers are reproducible):
/// ChaCha8 seeded by `seed`; eigenvalues drawn uniformly in the disk of
/// radius 0.95 as floor(order/2) conjugate pairs (r = 0.95*sqrt(u1),
/// theta = pi*u2, realized as 2x2 rotation-scale blocks) plus, for odd
/// orders, one real eigenvalue uniform in [-0.95, 0.95]; then B, C standard
/// normal and D standard normal with |D| clamped up to 1e-3 so g_0 != 0.
pub fn random_stable_model(seed: u64, order: usize) -> Result<StateSpaceModel> {
    if order == 0 {
        return Err(Error::Domain("order must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = order / 2;
    let mut a = vec![vec![0.0; order]; order];
    for p in 0..pairs {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        let r = 0.95 * u1.sqrt();
        let theta = std::f64::consts::PI * u2;
        let (re, im) = (r * theta.cos(), r * theta.sin());
        let i = 2 * p;
        a[i][i] = re;
        a[i][i + 1] = im;
        a[i + 1][i] = -im;
        a[i + 1][i + 1] = re;
    }
    if order % 2 == 1 {
        let u: f64 = rng.gen();
        a[order - 1][order - 1] = 0.95 * (2.0 * u - 1.0);
    }
    let normal = StandardNormal;
    let b: Vec<f64> = (0..order).map(|_| normal.sample(&mut rng)).collect();
    let c: Vec<f64> = (0..order).map(|_| normal.sample(&mut rng)).collect();
    let mut d: f64 = normal.sample(&mut rng);
    if d.abs() < 1e-3 {
        d = if d < 0.0 { -1e-3 } else { 1e-3 };
    }
    StateSpaceModel::new(a, b, c, d, TimeDomain::Discrete)
}

/// Impulse response of `random_stable_model(seed, order)` truncated to n taps.
pub fn random_stable_plant(seed: u64, order: usize, n: usize) -> Result<ImpulseResponse> {
    random_stable_model(seed, order)?.impulse_taps(n)
}

/// Square m x m grid of SISO impulse responses sharing one horizon.
#[derive(Debug, Clone)]
pub struct MimoPlant {
    blocks: Vec<ImpulseResponse>,
    channels: usize,
}

impl MimoPlant {
    /// Row-major m x m blocks; all horizons must agree.
    pub fn new(blocks: Vec<Vec<ImpulseResponse>>) -> Result<Self> {
        let m = blocks.len();
        if m == 0 || blocks.iter().any(|row| row.len() != m) {
            return Err(Error::Domain(
                "MIMO blocks must form a nonempty square grid".into(),
            ));
        }
        let horizon = blocks[0][0].horizon();
        if blocks.iter().flatten().any(|b| b.horizon() != horizon) {
            return Err(Error::Domain(
                "all MIMO blocks must share one horizon".into(),
            ));
        }
        Ok(Self {
            blocks: blocks.into_iter().flatten().collect(),
            channels: m,
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn horizon(&self) -> usize {
        self.blocks[0].horizon()
    }

    /// Block mapping input channel j to output channel i.
    pub fn block(&self, i: usize, j: usize) -> &ImpulseResponse {
        &self.blocks[i * self.channels + j]
    }
}

/// Y_i = sum_j blocks[i][j] * U_j, channel by channel.
pub fn mimo_apply(p: &MimoPlant, u: &Signal) -> Result<Signal> {
    let m = p.channels();
    if u.channels() != m {
        return Err(Error::Dimension {
            context: "mimo_apply channels",
            expected: m,
            got: u.channels(),
        });
    }
    if u.len() != p.horizon() {
        return Err(Error::Dimension {
            context: "mimo_apply length",
            expected: p.horizon(),
            got: u.len(),
        });
    }
    let n = p.horizon();
    let mut y = Signal::zeros(m, n);
    for i in 0..m {
        for j in 0..m {
            let part = p.block(i, j).apply_slice(u.channel(j));
            let out = y.channel_mut(i);
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
    }
    Ok(y)
}

/// Deterministic random MIMO plant: per-block sub-seeds drawn from one
/// ChaCha8 stream seeded by `seed`, each block a `random_stable_plant`.
pub fn random_mimo_plant(seed: u64, order: usize, n: usize, m: usize) -> Result<MimoPlant> {
    if m == 0 {
        return Err(Error::Domain("channel count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let mut row = Vec::with_capacity(m);
        for _ in 0..m {
            let sub: u64 = rng.gen();
            row.push(random_stable_plant(sub, order, n)?);
        }
        rows.push(row);
    }
    MimoPlant::new(rows)
}
