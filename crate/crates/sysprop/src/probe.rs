//! The black-box boundary: estimators talk to the plant only through a
//! `ProbeSession`, which runs experiments, corrupts outputs per its noise
//! model, counts every physical evaluation, and refuses to exceed a budget.
//!
//! Composite probes implement the time-reversal adjoint tricks: for SISO
//! Toeplitz operators G^T = P G P with P the sample-reversal permutation,
//! so adjoints and Gram products come from forward experiments alone. MIMO
//! adjoints decompose into m^2 single-block experiments.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::error::{Error, Result};
use crate::lti::{mimo_apply, toeplitz_apply, ImpulseResponse, MimoPlant};
use crate::signal::Signal;

/// Output corruption model. Exactly the parameters of the chosen kind apply.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    None,
    /// i.i.d. zero-mean Gaussian added to every output sample.
    AdditiveGaussian {
        sigma: f64,
    },
    /// y -> (1 + eps) * y with eps uniform in [-epsilon_bar, epsilon_bar].
    MultiplicativeUniform {
        epsilon_bar: f64,
    },
}

/// Noise kind plus the seed of its deterministic stream.
///
/// Draws are keyed by the global evaluation index and made in a fixed
/// channel-major, time-minor order, so composite probes reproduce exactly
/// regardless of internal batching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            seed: 0,
        }
    }

    pub fn additive(sigma: f64, seed: u64) -> Result<Self> {
        if !(sigma >= 0.0) || !sigma.is_finite() {
            return Err(Error::Domain(format!(
                "sigma must be nonnegative, got {sigma}"
            )));
        }
        Ok(Self {
            kind: NoiseKind::AdditiveGaussian { sigma },
            seed,
        })
    }

    pub fn multiplicative(epsilon_bar: f64, seed: u64) -> Result<Self> {
        if !(epsilon_bar >= 0.0) || !epsilon_bar.is_finite() {
            return Err(Error::Domain(format!(
                "epsilon_bar must be nonnegative, got {epsilon_bar}"
            )));
        }
        Ok(Self {
            kind: NoiseKind::MultiplicativeUniform { epsilon_bar },
            seed,
        })
    }

    pub fn is_none(&self) -> bool {
        matches!(self.kind, NoiseKind::None)
            || matches!(self.kind, NoiseKind::AdditiveGaussian { sigma } if sigma == 0.0)
            || matches!(self.kind, NoiseKind::MultiplicativeUniform { epsilon_bar } if epsilon_bar == 0.0)
    }

    /// Corrupts one evaluation's output in place. `eval_index` keys the
    /// substream so draw order is independent of batching.
    fn corrupt(&self, eval_index: u64, y: &mut [f64]) {
        match self.kind {
            NoiseKind::None => {}
            NoiseKind::AdditiveGaussian { sigma } => {
                if sigma == 0.0 {
                    return;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(eval_index_stream(eval_index));
                let dist = Normal::new(0.0, sigma).expect("validated sigma");
                for v in y.iter_mut() {
                    *v += dist.sample(&mut rng);
                }
            }
            NoiseKind::MultiplicativeUniform { epsilon_bar } => {
                if epsilon_bar == 0.0 {
                    return;
                }
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(eval_index_stream(eval_index));
                let dist = Uniform::new_inclusive(-epsilon_bar, epsilon_bar);
                for v in y.iter_mut() {
                    *v *= 1.0 + dist.sample(&mut rng);
                }
            }
        }
    }
}

fn eval_index_stream(eval_index: u64) -> u64 {
    // Stream 0 is never used for evaluations so seeds stay distinct from
    // any default-stream use of the same key elsewhere.
    eval_index + 1
}

/// A plant hidden behind the oracle: SISO impulse response or block MIMO.
#[derive(Debug, Clone)]
pub enum Plant {
    Siso(ImpulseResponse),
    Mimo(MimoPlant),
}

impl Plant {
    pub fn channels(&self) -> usize {
        match self {
            Plant::Siso(_) => 1,
            Plant::Mimo(p) => p.channels(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Plant::Siso(h) => h.horizon(),
            Plant::Mimo(p) => p.horizon(),
        }
    }

    fn apply(&self, u: &Signal) -> Result<Signal> {
        match self {
            Plant::Siso(h) => toeplitz_apply(h, u),
            Plant::Mimo(p) => mimo_apply(p, u),
        }
    }
}

/// Per-channel sample reversal, the involution P used by adjoint probing.
/// `reverse(reverse(u)) == u` exactly.
pub fn reverse(u: &Signal) -> Signal {
    u.reversed()
}

/// The evaluation oracle. Single-owner mutable state: the sample counter
/// and the noise stream advance together, one step per physical experiment.
#[derive(Debug, Clone)]
pub struct ProbeSession {
    plant: Plant,
    noise: NoiseModel,
    samples_used: u64,
    budget: Option<u64>,
}

impl ProbeSession {
    pub fn new(plant: Plant, noise: NoiseModel, budget: Option<u64>) -> Result<Self> {
        if budget == Some(0) {
            return Err(Error::Domain("budget must be positive when given".into()));
        }
        Ok(Self {
            plant,
            noise,
            samples_used: 0,
            budget,
        })
    }

    pub fn noiseless(plant: Plant) -> Self {
        Self::new(plant, NoiseModel::none(), None).expect("no budget to validate")
    }

    pub fn channels(&self) -> usize {
        self.plant.channels()
    }

    pub fn horizon(&self) -> usize {
        self.plant.horizon()
    }

    pub fn samples_used(&self) -> u64 {
        self.samples_used
    }

    pub fn budget(&self) -> Option<u64> {
        self.budget
    }

    pub fn noise(&self) -> &NoiseModel {
        &self.noise
    }

    pub fn is_noiseless(&self) -> bool {
        self.noise.is_none()
    }

    /// Physical experiments one adjoint application costs on this plant:
    /// 1 for SISO, m^2 for MIMO.
    pub fn adjoint_cost(&self) -> u64 {
        match &self.plant {
            Plant::Siso(_) => 1,
            Plant::Mimo(p) => (p.channels() * p.channels()) as u64,
        }
    }

    /// Errors unless the budget can cover `cost` further experiments.
    /// Composite probes reserve their whole cost up front so an exhausted
    /// budget aborts the probe before it consumes anything.
    pub fn ensure_budget(&self, cost: u64) -> Result<()> {
        if let Some(budget) = self.budget {
            if self.samples_used + cost > budget {
                return Err(Error::BudgetExhausted {
                    used: self.samples_used,
                    budget,
                    requested: cost,
                });
            }
        }
        Ok(())
    }

    /// One physical experiment: y = noise(plant(u)). Counts one sample.
    pub fn evaluate(&mut self, u: &Signal) -> Result<Signal> {
        self.ensure_budget(1)?;
        let mut y = self.plant.apply(u)?;
        let idx = self.samples_used;
        self.noise.corrupt(idx, y.samples_mut());
        self.samples_used += 1;
        Ok(y)
    }

    /// G^T y from forward experiments. SISO: reverse(evaluate(reverse(y))),
    /// one sample. MIMO: the m^2-experiment block decomposition.
    pub fn adjoint_apply(&mut self, y: &Signal) -> Result<Signal> {
        match &self.plant {
            Plant::Siso(_) => {
                self.ensure_budget(1)?;
                Ok(self.evaluate(&y.reversed())?.reversed())
            }
            Plant::Mimo(_) => self.mimo_adjoint_apply(y),
        }
    }

    /// (Gu, G^T G u) in adjoint_cost() + 1 experiments.
    pub fn gram_apply(&mut self, u: &Signal) -> Result<(Signal, Signal)> {
        self.ensure_budget(1 + self.adjoint_cost())?;
        let y = self.evaluate(u)?;
        let gram = self.adjoint_apply(&y)?;
        Ok((y, gram))
    }

    /// Adjoint of a block MIMO operator from m^2 experiments.
    ///
    /// Experiment (i, j): feed the time-reversed channel j of `y` into
    /// input slot i (all other inputs zero), keep output channel j,
    /// reverse it, and accumulate into result channel i. Summed over all
    /// (i, j) this realizes the Kronecker-product decomposition of Gamma^T
    /// out of single-block probes. SISO sessions are the m = 1 case at
    /// cost 1.
    pub fn mimo_adjoint_apply(&mut self, y: &Signal) -> Result<Signal> {
        let m = self.plant.channels();
        let n = self.plant.horizon();
        if y.channels() != m {
            return Err(Error::Dimension {
                context: "mimo_adjoint_apply channels",
                expected: m,
                got: y.channels(),
            });
        }
        if y.len() != n {
            return Err(Error::Dimension {
                context: "mimo_adjoint_apply length",
                expected: n,
                got: y.len(),
            });
        }
        self.ensure_budget((m * m) as u64)?;
        let mut result = Signal::zeros(m, n);
        for i in 0..m {
            for j in 0..m {
                let mut probe = Signal::zeros(m, n);
                {
                    let slot = probe.channel_mut(i);
                    for (dst, src) in slot.iter_mut().zip(y.channel(j).iter().rev()) {
                        *dst = *src;
                    }
                }
                let out = self.evaluate(&probe)?;
                let acc = result.channel_mut(i);
                for (dst, src) in acc.iter_mut().zip(out.channel(j).iter().rev()) {
                    *dst += *src;
                }
            }
        }
        Ok(result)
    }
}
