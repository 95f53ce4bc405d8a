//! Exploration noise: weight-space perturbation with adaptive scaling and the
//! action-space baselines it is compared against.

use rand::Rng as _;

use crate::error::{check_len, Error, Result};
use crate::nn::ParamVector;
use crate::rng::{standard_normal, Rng};

/// Returns `theta` plus independent `N(0, sigma²)` noise on every entry whose
/// perturbation mask is set. The input is never modified.
pub fn perturb(theta: &ParamVector, sigma: f64, rng: &mut Rng) -> Result<ParamVector> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("perturbation sigma must be >= 0, got {sigma}")));
    }
    let values = theta
        .values()
        .iter()
        .zip(theta.mask())
        .map(|(&v, &on)| if on { v + sigma * standard_normal(rng) } else { v })
        .collect();
    theta.with_values(values)
}

/// State of the geometric noise-scale controller.
///
/// After each measurement the scale grows by `alpha` when the measured
/// action-space distance is at most `delta` and shrinks by `alpha` otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveNoiseState {
    pub sigma: f64,
    pub alpha: f64,
    pub delta: f64,
    pub adapt_interval: usize,
}

impl AdaptiveNoiseState {
    pub fn new(sigma: f64, alpha: f64, delta: f64, adapt_interval: usize) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("initial sigma must be > 0, got {sigma}")));
        }
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!("alpha must be > 1, got {alpha}")));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("delta must be > 0, got {delta}")));
        }
        if adapt_interval == 0 {
            return Err(Error::InvalidConfig("adapt interval must be >= 1".into()));
        }
        Ok(Self {
            sigma,
            alpha,
            delta,
            adapt_interval,
        })
    }

    /// Applies one adaptation step. An infinite distance counts as above the
    /// threshold.
    pub fn adapt(&mut self, measured_distance: f64) -> Result<f64> {
        if measured_distance.is_nan() || measured_distance < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "distance must be >= 0, got {measured_distance}"
            )));
        }
        // d == delta grows the scale.
        if measured_distance <= self.delta {
            self.sigma *= self.alpha;
        } else {
            self.sigma /= self.alpha;
        }
        Ok(self.sigma)
    }
}

/// Index of the largest value; the lowest index wins exact ties.
pub fn argmax(values: &[f64]) -> Result<usize> {
    if values.is_empty() {
        return Err(Error::Empty("argmax input"));
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn epsilon_greedy_select(q_values: &[f64], epsilon: f64, rng: &mut Rng) -> Result<usize> {
    if q_values.is_empty() {
        return Err(Error::Empty("q values"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1], got {epsilon}")));
    }
    // Always consume one draw so the stream does not depend on epsilon.
    let explore = rng.random::<f64>() < epsilon;
    if explore {
        Ok(rng.random_range(0..q_values.len()))
    } else {
        argmax(q_values)
    }
}

/// `start + (end − start)·min(t/horizon, 1)`.
pub fn linear_anneal(start: f64, end: f64, t: u64, horizon: u64) -> f64 {
    let frac = if horizon == 0 {
        1.0
    } else {
        (t as f64 / horizon as f64).min(1.0)
    };
    start * (1.0 - frac) + end * frac
}

/// Adds independent `N(0, sigma²)` noise to each action dimension and clips
/// the result into `[low, high]`.
pub fn gaussian_action_noise(
    action: &[f64],
    sigma: f64,
    low: &[f64],
    high: &[f64],
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_len("action low bound", action.len(), low.len())?;
    check_len("action high bound", action.len(), high.len())?;
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!("action noise sigma must be >= 0, got {sigma}")));
    }
    Ok(action
        .iter()
        .zip(low.iter().zip(high))
        .map(|(&a, (&lo, &hi))| (a + sigma * standard_normal(rng)).clamp(lo, hi))
        .collect())
}

/// Discretized Ornstein–Uhlenbeck process
/// `x ← x + θ(μ − x)dt + σ√dt·N(0, I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OuState {
    pub value: Vec<f64>,
    pub theta: f64,
    pub sigma: f64,
    pub mu: Vec<f64>,
    pub dt: f64,
}

impl OuState {
    /// Zero-mean process with θ = 0.15 and dt = 1.
    pub fn new(dim: usize, sigma: f64) -> Self {
        Self {
            value: vec![0.0; dim],
            theta: 0.15,
            sigma,
            mu: vec![0.0; dim],
            dt: 1.0,
        }
    }

    pub fn reset(&mut self) {
        self.value.clone_from(&self.mu);
    }

    pub fn step(&mut self, rng: &mut Rng) -> &[f64] {
        let diffusion = self.sigma * self.dt.sqrt();
        for (x, &m) in self.value.iter_mut().zip(&self.mu) {
            *x += self.theta * (m - *x) * self.dt + diffusion * standard_normal(rng);
        }
        &self.value
    }

    /// Standard deviation of the discrete process at stationarity.
    pub fn stationary_std(&self) -> f64 {
        let t = self.theta;
        self.sigma * (self.dt / (2.0 * t - t * t * self.dt)).sqrt()
    }
}
