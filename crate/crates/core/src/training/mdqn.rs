//! Munchausen-DQN regression target.

use crate::error::{Error, Result};
use crate::neuro::{log_softmax_with_temperature, logsumexp};

/// Constants of the target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MdqnParams {
    pub temperature: f64,
    pub alpha: f64,
    pub clip: f64,
    pub gamma: f64,
}

/// `sum_a pi(a) (Q(a) - tau ln pi(a))` with `pi = softmax(Q / tau)`,
/// evaluated in closed form as `tau * logsumexp(Q / tau)`.
pub fn soft_value(q: &[f64], temperature: f64) -> Result<f64> {
    if !(temperature > 0.0) {
        return Err(Error::Argument(format!("temperature must be positive, got {temperature}")));
    }
    if q.is_empty() {
        return Err(Error::Argument("empty Q vector".into()));
    }
    let scaled: Vec<f64> = q.iter().map(|v| v / temperature).collect();
    Ok(temperature * logsumexp(&scaled))
}

/// The same quantity as [`soft_value`], summed term by term.
pub fn soft_value_explicit(q: &[f64], temperature: f64) -> Result<f64> {
    let logp = log_softmax_with_temperature(q, temperature)?;
    Ok(q.iter()
        .zip(&logp)
        .map(|(qa, lp)| lp.exp() * (qa - temperature * lp))
        .sum())
}

/// `r + alpha tau max(ln pi(a|s), l0) + gamma (1 - done) V_soft(s')`.
///
/// `current_q` and `next_q` are the target network's values at `s` and `s'`;
/// `next_q` is ignored when `done`.
pub fn mdqn_target(
    reward: f64,
    done: bool,
    current_q: &[f64],
    action: usize,
    next_q: &[f64],
    p: &MdqnParams,
) -> Result<f64> {
    if !(p.temperature > 0.0) {
        return Err(Error::Argument(format!("temperature must be positive, got {}", p.temperature)));
    }
    let logp = log_softmax_with_temperature(current_q, p.temperature)?;
    let lp = *logp.get(action).ok_or(Error::Index {
        vertex: action,
        n_vertices: current_q.len(),
    })?;
    let mut y = reward + p.alpha * p.temperature * lp.max(p.clip);
    if !done {
        y += p.gamma * soft_value(next_q, p.temperature)?;
    }
    if !y.is_finite() {
        return Err(Error::Argument("non-finite target".into()));
    }
    Ok(y)
}
