use crate::error::{Error, Result};
use crate::interfaces::argmax;

pub const DEFAULT_PRIORITY_MIX: f64 = 0.9;

/// `sum_i gamma^i r_i`, evaluated directly.
pub fn discounted_return(rewards: &[f64], gamma: f64) -> f64 {
    rewards.iter().enumerate().map(|(i, r)| gamma.powi(i as i32) * r).sum()
}

/// Returns-to-go via `R_t = r_t + gamma R_{t+1}`.
pub fn returns_recursive(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

/// `reward + discount * target_q[argmax online_q]`; the bootstrap vanishes
/// when `discount == 0`.
pub fn double_q_target(reward: f64, discount: f64, online_q_next: &[f64], target_q_next: &[f64]) -> f64 {
    if discount == 0.0 {
        return reward;
    }
    reward + discount * target_q_next[argmax(online_q_next)]
}

/// n-step double-Q target from raw rewards. `terminal` drops the bootstrap.
pub fn nstep_double_q_target(
    rewards: &[f64],
    gamma: f64,
    terminal: bool,
    online_q_next: &[f64],
    target_q_next: &[f64],
) -> Result<f64> {
    if rewards.is_empty() {
        return Err(Error::InvalidArgument("n-step target needs at least one reward".into()));
    }
    if online_q_next.len() != target_q_next.len() || online_q_next.is_empty() {
        return Err(Error::Shape("online and target Q rows differ".into()));
    }
    let discount = if terminal { 0.0 } else { gamma.powi(rewards.len() as i32) };
    Ok(double_q_target(discounted_return(rewards, gamma), discount, online_q_next, target_q_next))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TdLoss {
    /// Weighted mean of `(y - q)^2`.
    pub loss: f64,
    /// Gradient of `loss` with respect to each `q`.
    pub grad: Vec<f64>,
    /// `y - q` per element.
    pub td_errors: Vec<f64>,
}

/// Squared TD loss averaged over the batch, optionally weighted per element.
pub fn td_loss(targets: &[f64], predictions: &[f64], weights: Option<&[f64]>) -> Result<TdLoss> {
    if targets.len() != predictions.len() || weights.map_or(false, |w| w.len() != targets.len()) {
        return Err(Error::Shape("td_loss inputs differ in length".into()));
    }
    let n = targets.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(targets.len());
    let mut td_errors = Vec::with_capacity(targets.len());
    for (i, (y, q)) in targets.iter().zip(predictions).enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let delta = y - q;
        loss += w * delta * delta / n;
        grad.push(-2.0 * w * delta / n);
        td_errors.push(delta);
    }
    Ok(TdLoss { loss, grad, td_errors })
}

/// `mix * max|delta| + (1 - mix) * mean|delta|` over unmasked steps.
pub fn r2d2_priority(td_errors: &[f64], mask: &[bool], mix: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&mix) {
        return Err(Error::InvalidArgument(format!("priority mix {mix} not in [0,1]")));
    }
    let abs: Vec<f64> = td_errors.iter().zip(mask).filter(|(_, m)| **m).map(|(d, _)| d.abs()).collect();
    if abs.is_empty() {
        return Err(Error::InvalidArgument("every step is masked".into()));
    }
    let max = abs.iter().cloned().fold(0.0, f64::max);
    let mean = abs.iter().sum::<f64>() / abs.len() as f64;
    Ok(mix * max + (1.0 - mix) * mean)
}
