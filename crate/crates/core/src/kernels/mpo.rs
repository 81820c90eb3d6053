use crate::error::{Error, Result};
use crate::neural::{log_softmax, softmax};

pub const DEFAULT_EPSILON_ETA: f64 = 0.1;
pub const DEFAULT_KL_EPSILON: f64 = 0.01;
/// Lower bound the temperature is projected onto after each dual step.
pub const MIN_TEMPERATURE: f64 = 1e-6;
const MAX_ALPHA: f64 = 1e6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpoDuals {
    /// Temperature of the E-step weights.
    pub eta: f64,
    /// KL multiplier.
    pub alpha: f64,
    /// Target KL between successive policies.
    pub epsilon: f64,
    /// Temperature dual constraint.
    pub epsilon_eta: f64,
}

impl Default for MpoDuals {
    fn default() -> Self {
        Self { eta: 1.0, alpha: 1.0, epsilon: DEFAULT_KL_EPSILON, epsilon_eta: DEFAULT_EPSILON_ETA }
    }
}

fn check_eta(eta: f64) -> Result<()> {
    if eta > 0.0 && eta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("temperature must be > 0, got {eta}")))
    }
}

/// E-step weights `w_i ∝ exp(Q_i / eta)` over candidates drawn from the
/// target policy.
pub fn mpo_weights(q: &[f64], eta: f64) -> Result<Vec<f64>> {
    check_eta(eta)?;
    Ok(softmax(&q.iter().map(|v| v / eta).collect::<Vec<_>>()))
}

/// Weights `w_a ∝ prior(a) exp(Q_a / eta)` when every action is enumerated.
fn prior_weights(q: &[f64], prior: &[f64], eta: f64) -> Vec<f64> {
    let scores: Vec<f64> = q.iter().zip(prior).map(|(v, p)| v / eta + p.max(1e-300).ln()).collect();
    softmax(&scores)
}

/// Temperature dual `g(eta) = eta eps_eta + eta mean_s log sum_i prior_si exp(Q_si / eta)`
/// and its derivative. `priors = None` means uniform weights over the
/// sampled candidates of each state.
pub fn mpo_temperature_loss(q_sets: &[Vec<f64>], priors: Option<&[Vec<f64>]>, eta: f64, epsilon_eta: f64) -> Result<(f64, f64)> {
    check_eta(eta)?;
    if q_sets.is_empty() {
        return Err(Error::InvalidArgument("no states for the temperature dual".into()));
    }
    let mut log_z_mean = 0.0;
    let mut weighted_q_mean = 0.0;
    for (s, q) in q_sets.iter().enumerate() {
        let log_prior: Vec<f64> = match priors {
            Some(p) => p[s].iter().map(|x| x.max(1e-300).ln()).collect(),
            None => vec![-(q.len() as f64).ln(); q.len()],
        };
        let scores: Vec<f64> = q.iter().zip(&log_prior).map(|(v, lp)| v / eta + lp).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + scores.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        let w = softmax(&scores);
        log_z_mean += log_z;
        weighted_q_mean += w.iter().zip(q).map(|(w, v)| w * v).sum::<f64>();
    }
    let n = q_sets.len() as f64;
    log_z_mean /= n;
    weighted_q_mean /= n;
    let g = eta * epsilon_eta + eta * log_z_mean;
    let dg = epsilon_eta + log_z_mean - weighted_q_mean / eta;
    Ok((g, dg))
}

/// Descent step on the Lagrangian `alpha (epsilon - KL)` with respect to
/// `alpha`: the multiplier grows while the KL exceeds its target.
pub fn mpo_alpha_step(alpha: f64, kl: f64, epsilon: f64, learning_rate: f64) -> f64 {
    (alpha + learning_rate * (kl - epsilon)).clamp(0.0, MAX_ALPHA)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpoLoss {
    pub weights: Vec<f64>,
    /// `sum_a w_a log pi_theta(a)`.
    pub weighted_ml: f64,
    /// `KL(pi_target || pi_theta)`.
    pub kl: f64,
    /// `-weighted_ml + alpha * kl`, minimised by the policy.
    pub loss: f64,
    pub grad_logits: Vec<f64>,
}

/// Policy loss for a discrete action set where all actions are enumerated.
pub fn mpo_discrete_policy_loss(q: &[f64], target_probs: &[f64], online_logits: &[f64], duals: &MpoDuals) -> Result<MpoLoss> {
    check_eta(duals.eta)?;
    if q.len() != target_probs.len() || q.len() != online_logits.len() {
        return Err(Error::Shape("MPO inputs differ in length".into()));
    }
    let weights = prior_weights(q, target_probs, duals.eta);
    let p = softmax(online_logits);
    let log_p = log_softmax(online_logits);
    let weighted_ml: f64 = weights.iter().zip(&log_p).map(|(w, lp)| w * lp).sum();
    let kl: f64 = target_probs
        .iter()
        .zip(&log_p)
        .filter(|(t, _)| **t > 0.0)
        .map(|(t, lp)| t * (t.ln() - lp))
        .sum();
    let grad_logits = (0..p.len()).map(|j| (p[j] - weights[j]) + duals.alpha * (p[j] - target_probs[j])).collect();
    Ok(MpoLoss { weights, weighted_ml, kl, loss: -weighted_ml + duals.alpha * kl, grad_logits })
}

/// KL between diagonal Gaussians, `KL(N(mu1, s1) || N(mu2, s2))`.
pub fn gaussian_kl(mu1: &[f64], sigma1: &[f64], mu2: &[f64], sigma2: &[f64]) -> f64 {
    (0..mu1.len())
        .map(|i| {
            (sigma2[i] / sigma1[i]).ln() + (sigma1[i].powi(2) + (mu1[i] - mu2[i]).powi(2)) / (2.0 * sigma2[i].powi(2))
                - 0.5
        })
        .sum()
}
