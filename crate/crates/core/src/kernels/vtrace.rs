use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct VTraceOutput {
    /// Corrected value targets `v_t`.
    pub v_targets: Vec<f64>,
    /// `r_t + gamma_t v_{t+1} - V(o_t)`, with `v_T` the bootstrap value.
    pub pg_advantages: Vec<f64>,
    pub rhos: Vec<f64>,
    pub cs: Vec<f64>,
}

/// V-trace targets for a sequence of `T` steps.
///
/// `values` has `T + 1` entries, the last being the bootstrap `V(o_T)`.
/// `discounts[t]` is `gamma` or 0 where the episode ended after step `t`.
pub fn vtrace(
    values: &[f64],
    rewards: &[f64],
    discounts: &[f64],
    behavior_log_probs: &[f64],
    target_log_probs: &[f64],
    rho_clip: f64,
    c_clip: f64,
) -> Result<VTraceOutput> {
    let t_len = rewards.len();
    if values.len() != t_len + 1
        || discounts.len() != t_len
        || behavior_log_probs.len() != t_len
        || target_log_probs.len() != t_len
    {
        return Err(Error::Shape("vtrace inputs are not aligned".into()));
    }
    if rho_clip < 1.0 || c_clip < 1.0 {
        return Err(Error::InvalidArgument("vtrace clips must be >= 1".into()));
    }
    let mut rhos = Vec::with_capacity(t_len);
    let mut cs = Vec::with_capacity(t_len);
    for (b, p) in behavior_log_probs.iter().zip(target_log_probs) {
        let ratio = (p - b).exp();
        if !ratio.is_finite() {
            return Err(Error::NonFinite("importance ratio".into()));
        }
        rhos.push(ratio.min(rho_clip));
        cs.push(ratio.min(c_clip));
    }
    let mut v_targets = vec![0.0; t_len];
    // acc holds v_{t+1} - V(o_{t+1}).
    let mut acc = 0.0;
    for t in (0..t_len).rev() {
        let delta = rhos[t] * (rewards[t] + discounts[t] * values[t + 1] - values[t]);
        acc = delta + discounts[t] * cs[t] * acc;
        v_targets[t] = values[t] + acc;
    }
    let pg_advantages = (0..t_len)
        .map(|t| {
            let next = if t + 1 < t_len { v_targets[t + 1] } else { values[t_len] };
            rewards[t] + discounts[t] * next - values[t]
        })
        .collect();
    Ok(VTraceOutput { v_targets, pg_advantages, rhos, cs })
}
