use crate::error::{Error, Result};
use crate::neural::{log_softmax, softmax};

/// Additive floor applied to search policies before taking their log.
pub const DEFAULT_POLICY_FLOOR: f64 = 1e-6;

/// `-sum_a pi(a) log pi(a)`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyGradientTerms {
    /// `-log pi(a) * advantage`.
    pub pg_loss: f64,
    /// Entropy of the policy (before scaling by the coefficient).
    pub entropy: f64,
    /// `pg_loss - entropy_coeff * entropy`.
    pub loss: f64,
    /// Gradient of `loss` with respect to the logits.
    pub grad_logits: Vec<f64>,
}

/// Entropy-regularised policy-gradient loss for one step. The advantage is
/// treated as a constant.
pub fn impala_policy_gradient(logits: &[f64], action: usize, advantage: f64, entropy_coeff: f64) -> Result<PolicyGradientTerms> {
    if action >= logits.len() {
        return Err(Error::InvalidArgument(format!("action {action} out of range")));
    }
    let p = softmax(logits);
    if p[action] <= 0.0 {
        return Err(Error::NonFinite("log of zero probability for the chosen action".into()));
    }
    let log_p = log_softmax(logits);
    let h = entropy(&p);
    let pg_loss = -log_p[action] * advantage;
    let grad_logits = (0..logits.len())
        .map(|j| {
            let onehot = (j == action) as u8 as f64;
            // d(-H)/dz_j = p_j (log p_j + H)
            -advantage * (onehot - p[j]) + entropy_coeff * p[j] * (log_p[j] + h)
        })
        .collect();
    Ok(PolicyGradientTerms { pg_loss, entropy: h, loss: pg_loss - entropy_coeff * h, grad_logits })
}

/// Ascent direction for a deterministic policy's output: the critic's
/// action gradient evaluated at the policy action. For a distributional
/// critic pass the gradient of its mean.
pub fn dpg_gradient(critic_grad_wrt_action: &[f64]) -> Vec<f64> {
    critic_grad_wrt_action.to_vec()
}

/// `KL(pi_theta || pi_search)` with `pi_theta = softmax(logits)`, after
/// adding `floor` to the search policy and renormalising.
pub fn mcts_imitation_loss(logits: &[f64], search_policy: &[f64], floor: f64) -> Result<(f64, Vec<f64>)> {
    if logits.len() != search_policy.len() {
        return Err(Error::Shape("logits and search policy differ in length".into()));
    }
    let total: f64 = search_policy.iter().map(|p| p + floor).sum();
    let log_m: Vec<f64> = search_policy.iter().map(|p| ((p + floor) / total).ln()).collect();
    if log_m.iter().any(|l| !l.is_finite()) {
        return Err(Error::InvalidArgument("search policy has zero mass where the policy is positive".into()));
    }
    let p = softmax(logits);
    let log_p = log_softmax(logits);
    let kl: f64 = (0..p.len()).map(|i| p[i] * (log_p[i] - log_m[i])).sum();
    let grad = (0..p.len()).map(|j| p[j] * (log_p[j] - log_m[j] - kl)).collect();
    Ok((kl, grad))
}

/// Negative log-likelihood of the demonstrated action.
pub fn bc_loss_discrete(logits: &[f64], action: usize) -> Result<(f64, Vec<f64>)> {
    if action >= logits.len() {
        return Err(Error::InvalidArgument(format!("action {action} out of range")));
    }
    let log_p = log_softmax(logits);
    let p = softmax(logits);
    let grad = (0..p.len()).map(|j| p[j] - (j == action) as u8 as f64).collect();
    Ok((-log_p[action], grad))
}

/// Squared error to the demonstrated continuous action.
pub fn bc_loss_continuous(predicted: &[f64], demonstrated: &[f64]) -> Result<(f64, Vec<f64>)> {
    if predicted.len() != demonstrated.len() {
        return Err(Error::Shape("action dimensions differ".into()));
    }
    let diff: Vec<f64> = predicted.iter().zip(demonstrated).map(|(p, d)| p - d).collect();
    Ok((diff.iter().map(|d| d * d).sum(), diff.iter().map(|d| 2.0 * d).collect()))
}
