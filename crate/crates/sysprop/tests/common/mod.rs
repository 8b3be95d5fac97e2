//! Shared fixtures for the integration suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sysprop::lti::{zoh_discretize, ImpulseResponse, StateSpaceModel, TimeDomain};
use sysprop::probe::{NoiseModel, Plant, ProbeSession};
use sysprop::signal::Signal;

/// The lightly damped two-state oscillator used as the reference plant.
pub fn oscillator_model() -> StateSpaceModel {
    StateSpaceModel::new(
        vec![vec![-0.1, 1.0], vec![-1.0, 0.1]],
        vec![0.0, 1.0],
        vec![0.0, 1.0],
        0.01,
        TimeDomain::Continuous,
    )
    .expect("oscillator is marginally stable and accepted")
}

pub fn oscillator_plant() -> Plant {
    Plant::Siso(zoh_discretize(&oscillator_model(), 0.01, 1000).unwrap())
}

pub fn identity_plant(n: usize) -> Plant {
    let mut taps = vec![0.0; n];
    taps[0] = 1.0;
    Plant::Siso(ImpulseResponse::new(taps).unwrap())
}

pub fn rand_unit(n: usize, rng: &mut ChaCha8Rng) -> Signal {
    let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    Signal::siso(v).unwrap().normalized().unwrap()
}

/// Random unit tangent direction at u.
pub fn rand_tangent(u: &Signal, rng: &mut ChaCha8Rng) -> Signal {
    let n = u.samples().len();
    let v: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    let v = Signal::new(u.channels(), v).unwrap();
    let v = v.axpy(-v.dot(u), u);
    v.normalized().unwrap()
}

pub struct UnbiasednessReport {
    pub draws: usize,
    pub worst_sigma_ratio: f64,
}

/// Statistical check that the noisy rho_1 gradient estimate is unbiased:
/// over `draws` draws the empirical mean must deviate from the noiseless
/// gradient by at most 4 empirical-standard-errors componentwise.
pub fn rho1_gradient_unbiased(
    plant: &Plant,
    noise: NoiseModel,
    u: &Signal,
    draws: usize,
) -> UnbiasednessReport {
    let mut clean = ProbeSession::noiseless(plant.clone());
    let (value, _, gram) = sysprop::gain::rho1(&mut clean, u).unwrap();
    let reference = sysprop::gain::grad_rho1(u, &gram, value);

    let mut noisy = ProbeSession::new(plant.clone(), noise, None).unwrap();
    let dim = u.samples().len();
    let mut mean = vec![0.0f64; dim];
    let mut m2 = vec![0.0f64; dim];
    for k in 1..=draws {
        let (v, _, g) = sysprop::gain::rho1(&mut noisy, u).unwrap();
        let grad = sysprop::gain::grad_rho1(u, &g, v);
        for (i, x) in grad.samples().iter().enumerate() {
            let delta = x - mean[i];
            mean[i] += delta / k as f64;
            m2[i] += delta * (x - mean[i]);
        }
    }
    let nf = draws as f64;
    let mut worst: f64 = 0.0;
    for i in 0..dim {
        let std = (m2[i] / (nf - 1.0)).sqrt();
        let se = std / nf.sqrt();
        let dev = (mean[i] - reference.samples()[i]).abs();
        // components with (numerically) zero variance must agree exactly
        let ratio = if se > 1e-300 { dev / se } else { dev / 1e-300 };
        worst = worst.max(ratio);
    }
    UnbiasednessReport {
        draws,
        worst_sigma_ratio: worst / 4.0,
    }
}
