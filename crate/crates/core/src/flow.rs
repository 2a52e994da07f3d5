//! Conditional probability paths, closed-form velocities and rate
//! matrices, time discretization, stepping rules and the training loss.
//!
//! Continuous variables follow the Gaussian path `c_t ~ N(t·c_1, (1−t)²)`;
//! integer variables follow the categorical path that mixes the label with
//! the uniform distribution over the `K+1` categories.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{FmipError, Result};
use crate::graph::SolutionState;
use crate::model::ModelOutput;
use crate::rng::SplitMix64;

/// Training times are drawn from `U(0, 1 − EPS_TRAIN)`.
pub const EPS_TRAIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    Cosine,
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub steps: usize,
    pub kind: ScheduleKind,
    pub times: Vec<f64>,
}

impl Schedule {
    pub fn new(kind: ScheduleKind, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(FmipError::Domain("schedule needs at least one step".into()));
        }
        let n = steps as f64;
        let mut times: Vec<f64> = (0..=steps)
            .map(|k| match kind {
                ScheduleKind::Cosine => (std::f64::consts::PI * k as f64 / (2.0 * n)).sin(),
                ScheduleKind::Uniform => k as f64 / n,
            })
            .collect();
        times[0] = 0.0;
        times[steps] = 1.0;
        Ok(Self { steps, kind, times })
    }

    /// `t_k = sin(πk / 2N)`: finer steps near the data end.
    pub fn cosine(steps: usize) -> Result<Self> {
        Self::new(ScheduleKind::Cosine, steps)
    }

    pub fn uniform(steps: usize) -> Result<Self> {
        Self::new(ScheduleKind::Uniform, steps)
    }

    pub fn step_sizes(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

fn check_time(t: f64) -> Result<()> {
    if t.is_nan() || t >= 1.0 {
        return Err(FmipError::Domain(format!("time {t} must be below 1")));
    }
    Ok(())
}

/// Draws `(d_t, c_t)` from the conditional path through the label.
pub fn sample_conditional(d1: &[usize], c1: &[f64], t: f64, int_bound: u32, rng: &mut SplitMix64) -> SolutionState {
    let cats = int_bound as u64 + 1;
    let d = d1
        .iter()
        .map(|&label| if rng.next_f64() < t { label } else { rng.below(cats) as usize })
        .collect();
    let c = c1.iter().map(|&x| t * x + (1.0 - t) * rng.normal()).collect();
    SolutionState { d, c, t }
}

/// Probability of category `j` under the conditional path at time `t`.
pub fn path_probability(j: usize, label: usize, t: f64, int_bound: u32) -> f64 {
    let base = (1.0 - t) / (int_bound as f64 + 1.0);
    if j == label {
        t + base
    } else {
        base
    }
}

pub fn cond_velocity(c_t: &[f64], c1: &[f64], t: f64) -> Result<Vec<f64>> {
    check_time(t)?;
    Ok(c_t.iter().zip(c1).map(|(ct, x)| (x - ct) / (1.0 - t)).collect())
}

/// `R_{t|1}(d_t → j)`: all mass `1/(1−t)` points at the label unless the
/// chain already sits there.
pub fn cond_rate(d_t: usize, j: usize, d1: usize, t: f64) -> Result<f64> {
    check_time(t)?;
    Ok(if d_t != d1 && j == d1 { 1.0 / (1.0 - t) } else { 0.0 })
}

pub fn cond_rate_row(d_t: usize, d1: usize, t: f64, categories: usize) -> Result<Vec<f64>> {
    (0..categories).map(|j| cond_rate(d_t, j, d1, t)).collect()
}

pub fn euler_step_cont(c_t: &[f64], velocity: &[f64], dt: f64) -> Vec<f64> {
    c_t.iter().zip(velocity).map(|(c, v)| c + v * dt).collect()
}

/// Jump probabilities out of `current` over a step `dt`; when the total
/// outflow exceeds one it is rescaled so the chain moves with certainty.
pub fn transition_probs(current: usize, rates: &[f64], dt: f64) -> Result<Vec<f64>> {
    if let Some((j, r)) = rates.iter().enumerate().find(|(j, r)| *j != current && !(**r >= 0.0)) {
        return Err(FmipError::Contract(format!("rate toward category {j} is {r}; rates must be nonnegative")));
    }
    let mut p: Vec<f64> = rates.iter().enumerate().map(|(j, r)| if j == current { 0.0 } else { r * dt }).collect();
    let outflow: f64 = p.iter().sum();
    if outflow > 1.0 {
        p.iter_mut().for_each(|v| *v /= outflow);
    } else {
        p[current] = 1.0 - outflow;
    }
    Ok(p)
}

pub fn categorical_step(current: usize, rates: &[f64], dt: f64, rng: &mut SplitMix64) -> Result<usize> {
    Ok(rng.categorical(&transition_probs(current, rates, dt)?))
}

/// Training objective from explicit probabilities:
/// `‖ĉ−c_1‖²/(1−t) − ω Σ log p(d_1)`.
pub fn training_loss_probs(probs: &Array2<f64>, c_hat: &[f64], d1: &[usize], c1: &[f64], t: f64, omega: f64) -> f64 {
    let sq: f64 = c_hat.iter().zip(c1).map(|(a, b)| (a - b) * (a - b)).sum();
    let nll: f64 = d1.iter().enumerate().map(|(i, &l)| -probs[[i, l]].ln()).sum();
    sq / (1.0 - t) + omega * nll
}

/// Training objective on network output (log-softmax of the logits).
pub fn training_loss(out: &ModelOutput, d1: &[usize], c1: &[f64], t: f64, omega: f64) -> f64 {
    let sq: f64 = out.cont_values.iter().zip(c1).map(|(a, b)| (a - b) * (a - b)).sum();
    let mut nll = 0.0;
    for (row, &l) in out.int_logits.rows().into_iter().zip(d1) {
        let mx = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let lse = mx + row.iter().map(|v| (v - mx).exp()).sum::<f64>().ln();
        nll += lse - row[l];
    }
    sq / (1.0 - t) + omega * nll
}

/// Model velocity `(ĉ_1 − c_t)/(1−t)` and rate rows `p(j)/(1−t)` with a
/// zero diagonal.
pub fn model_velocity_and_rates(out: &ModelOutput, state: &SolutionState, t: f64) -> Result<(Vec<f64>, Array2<f64>)> {
    check_time(t)?;
    let velocity = cond_velocity(&state.c, &out.cont_values, t)?;
    Ok((velocity, rates_from_probs(&out.int_probs(), &state.d, t)))
}

pub(crate) fn rates_from_probs(probs: &Array2<f64>, d: &[usize], t: f64) -> Array2<f64> {
    let mut rates = probs.mapv(|p| p / (1.0 - t));
    for (i, &di) in d.iter().enumerate() {
        rates[[i, di]] = 0.0;
    }
    rates
}
