//! Action-space distances between a policy and its perturbed copy.
//!
//! Discrete policies are compared as softmax distributions over Q-values (or
//! policy-head logits) with the KL divergence; deterministic continuous
//! policies by the root-mean-square action difference.

use crate::error::{check_len, Error, Result};
use crate::nn::{softmax_in_place, Network};

/// A discrete probability distribution over actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePolicyDist(Vec<f64>);

impl DiscretePolicyDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("probability vector"));
        }
        if probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::InvalidArgument("probabilities must be finite and >= 0".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Max-shifted softmax over `q_values`.
pub fn softmax_policy(q_values: &[f64]) -> Result<DiscretePolicyDist> {
    if q_values.is_empty() {
        return Err(Error::Empty("q values"));
    }
    if q_values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("q values"));
    }
    let mut p = q_values.to_vec();
    softmax_in_place(&mut p);
    Ok(DiscretePolicyDist(p))
}

/// `KL(p ‖ q)`, with `0·log 0 = 0`. Returns `+∞` when `q` puts zero mass on
/// an action `p` can take.
pub fn kl_divergence(p: &DiscretePolicyDist, q: &DiscretePolicyDist) -> Result<f64> {
    check_len("kl divergence", p.len(), q.len())?;
    let mut kl = 0.0;
    for (&pi, &qi) in p.0.iter().zip(&q.0) {
        if pi == 0.0 {
            continue;
        }
        if qi == 0.0 {
            return Ok(f64::INFINITY);
        }
        kl += pi * (pi / qi).ln();
    }
    // Rounding can leave tiny negative sums when p ≈ q.
    Ok(kl.max(0.0))
}

/// KL divergence between a greedy policy and its ε-greedy version over
/// `n_actions` actions: `−log(1 − ε + ε/n)`.
pub fn epsilon_greedy_kl_threshold(epsilon: f64, n_actions: usize) -> f64 {
    let n = n_actions.max(1) as f64;
    -(epsilon / n - epsilon).ln_1p()
}

/// Mean over states of `KL(softmax(q) ‖ softmax(q̃))`; `q` and `q_tilde` are
/// row-major `states × actions` value matrices.
pub fn mean_softmax_kl(q: &[f64], q_tilde: &[f64], n_actions: usize) -> Result<f64> {
    check_len("perturbed q values", q.len(), q_tilde.len())?;
    if n_actions == 0 || q.is_empty() || !q.len().is_multiple_of(n_actions) {
        return Err(Error::Empty("q-value batch"));
    }
    let rows = q.len() / n_actions;
    let mut total = 0.0;
    for (a, b) in q.chunks_exact(n_actions).zip(q_tilde.chunks_exact(n_actions)) {
        total += kl_divergence(&softmax_policy(a)?, &softmax_policy(b)?)?;
    }
    Ok(total / rows as f64)
}

/// Same as [`mean_softmax_kl`] for rows that are already probabilities.
pub fn mean_kl(p: &[f64], p_tilde: &[f64], n_actions: usize) -> Result<f64> {
    check_len("perturbed probabilities", p.len(), p_tilde.len())?;
    if n_actions == 0 || p.is_empty() || !p.len().is_multiple_of(n_actions) {
        return Err(Error::Empty("probability batch"));
    }
    let rows = p.len() / n_actions;
    let mut total = 0.0;
    for (a, b) in p.chunks_exact(n_actions).zip(p_tilde.chunks_exact(n_actions)) {
        total += kl_divergence(&DiscretePolicyDist::new(a.to_vec())?, &DiscretePolicyDist::new(b.to_vec())?)?;
    }
    Ok(total / rows as f64)
}

/// `sqrt(1/N Σ_i E_s[(a_i − ã_i)²])` for row-major `states × action_dim`
/// action batches, with the expectation taken as the batch mean.
pub fn rms_action_distance(actions: &[f64], actions_tilde: &[f64], action_dim: usize) -> Result<f64> {
    check_len("perturbed actions", actions.len(), actions_tilde.len())?;
    if action_dim == 0 || actions.is_empty() || !actions.len().is_multiple_of(action_dim) {
        return Err(Error::Empty("action batch"));
    }
    let sq: f64 = actions
        .iter()
        .zip(actions_tilde)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok((sq / actions.len() as f64).sqrt())
}

/// Action distance between two deterministic policies given as closures,
/// averaged over `states`.
pub fn continuous_policy_distance<P, Q>(mut pi: P, mut pi_tilde: Q, states: &[Vec<f64>]) -> Result<f64>
where
    P: FnMut(&[f64]) -> Result<Vec<f64>>,
    Q: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    if states.is_empty() {
        return Err(Error::Empty("state batch"));
    }
    let mut a = Vec::new();
    let mut b = Vec::new();
    let mut dim = None;
    for s in states {
        let x = pi(s)?;
        let y = pi_tilde(s)?;
        check_len("policy action", x.len(), y.len())?;
        if *dim.get_or_insert(x.len()) != x.len() {
            return Err(Error::InvalidArgument("policy action dimension changed".into()));
        }
        a.extend(x);
        b.extend(y);
    }
    rms_action_distance(&a, &b, dim.unwrap_or(0))
}

/// [`continuous_policy_distance`] for two actor networks over a row-major
/// state batch, evaluated in one batched pass each.
pub fn network_policy_distance(pi: &Network, pi_tilde: &Network, states: &[f64]) -> Result<f64> {
    check_len("perturbed policy input", pi.input_dim(), pi_tilde.input_dim())?;
    check_len("perturbed policy output", pi.output_dim(), pi_tilde.output_dim())?;
    let dim = pi.input_dim();
    if states.is_empty() || !states.len().is_multiple_of(dim) {
        return Err(Error::Empty("state batch"));
    }
    let batch = states.len() / dim;
    let a = pi.forward_batch(states, None, batch)?.into_output();
    let b = pi_tilde.forward_batch(states, None, batch)?.into_output();
    rms_action_distance(&a, &b, pi.output_dim())
}
