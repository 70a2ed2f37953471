//! Univariate Hawkes process with exponential kernel:
//! `lambda(t) = mu + sum_{t_j < t} alpha * exp(-beta * (t - t_j))`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TemporalError;

/// Lower clamp applied to every parameter during fitting.
pub const PARAM_FLOOR: f64 = 1e-8;
/// Largest branching ratio `alpha / beta` the fitter will return.
const MAX_BRANCHING: f64 = 1.0 - 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HawkesModel {
    /// Baseline intensity, events per second.
    pub mu: f64,
    /// Jump in intensity contributed by each event.
    pub alpha: f64,
    /// Decay rate, per second.
    pub beta: f64,
}

impl HawkesModel {
    pub fn new(mu: f64, alpha: f64, beta: f64) -> Result<Self, TemporalError> {
        let m = Self { mu, alpha, beta };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), TemporalError> {
        let ok = self.mu.is_finite() && self.alpha.is_finite() && self.beta.is_finite();
        if !ok || self.mu < 0.0 || self.alpha < 0.0 || self.beta <= 0.0 {
            return Err(TemporalError::InvalidModel(*self));
        }
        Ok(())
    }

    pub fn branching_ratio(&self) -> f64 {
        self.alpha / self.beta
    }

    /// Heuristic starting point for [`fit`]: the baseline matches the mean
    /// event rate and the decay matches the median inter-event gap.
    pub fn initial_guess(events: &[f64], horizon: f64) -> Self {
        let n = events.len().max(1) as f64;
        let gap = median_gap(events).unwrap_or(1.0).max(1e-3);
        let beta = 1.0 / gap;
        Self {
            mu: (0.5 * n / horizon.max(1e-9)).max(PARAM_FLOOR),
            alpha: 0.5 * beta,
            beta,
        }
    }
}

// The negated form also rejects NaN.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub(crate) fn check_sorted(events: &[f64]) -> Result<(), TemporalError> {
    if let Some(i) = events.windows(2).position(|w| !(w[0] <= w[1])) {
        return Err(TemporalError::Unsorted { index: i + 1 });
    }
    if events.iter().any(|t| !t.is_finite()) {
        return Err(TemporalError::NonFinite);
    }
    Ok(())
}

/// Median of the strictly positive consecutive gaps.
pub fn median_gap(times: &[f64]) -> Option<f64> {
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).filter(|g| *g > 0.0).collect();
    if gaps.is_empty() {
        return None;
    }
    gaps.sort_by(f64::total_cmp);
    let n = gaps.len();
    Some(if n % 2 == 1 {
        gaps[n / 2]
    } else {
        0.5 * (gaps[n / 2 - 1] + gaps[n / 2])
    })
}

/// Running excitation `sum_{t_j < t} exp(-beta (t - t_j))`, advanced
/// through sorted times without revisiting past events.
#[derive(Debug, Clone, Copy)]
struct Excitation {
    beta: f64,
    /// Time of the last group of events folded into `sum`.
    at: f64,
    /// Excitation from events strictly before `at`, evaluated at `at`.
    sum: f64,
    /// Events sitting exactly at `at`, not yet folded into `sum`.
    pending: usize,
}

impl Excitation {
    fn new(beta: f64) -> Self {
        Self {
            beta,
            at: f64::NEG_INFINITY,
            sum: 0.0,
            pending: 0,
        }
    }

    /// Value at `t >= at`, counting only events strictly before `t`.
    fn value_at(&self, t: f64) -> f64 {
        if self.pending == 0 && self.sum == 0.0 {
            return 0.0;
        }
        if t == self.at {
            self.sum
        } else {
            (self.sum + self.pending as f64) * (-self.beta * (t - self.at)).exp()
        }
    }

    fn push(&mut self, t: f64) {
        if t != self.at {
            self.sum = self.value_at(t);
            self.at = t;
            self.pending = 0;
        }
        self.pending += 1;
    }
}

/// Conditional intensity at `t`. Events at or after `t` are ignored.
pub fn intensity(model: &HawkesModel, events: &[f64], t: f64) -> Result<f64, TemporalError> {
    check_sorted(events)?;
    let mut exc = Excitation::new(model.beta);
    for &e in events.iter().take_while(|&&e| e < t) {
        exc.push(e);
    }
    Ok(model.mu + model.alpha * exc.value_at(t))
}

/// Intensity at each point of a sorted grid, in one pass over the events.
pub fn intensity_at_sorted(model: &HawkesModel, events: &[f64], grid: &[f64]) -> Result<Vec<f64>, TemporalError> {
    check_sorted(events)?;
    check_sorted(grid)?;
    let mut exc = Excitation::new(model.beta);
    let mut next = 0;
    Ok(grid
        .iter()
        .map(|&t| {
            while next < events.len() && events[next] < t {
                exc.push(events[next]);
                next += 1;
            }
            model.mu + model.alpha * exc.value_at(t)
        })
        .collect())
}

/// Log-likelihood and its gradient in `(mu, alpha, beta)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodGrad {
    pub value: f64,
    pub d_mu: f64,
    pub d_alpha: f64,
    pub d_beta: f64,
}

/// `sum_i log lambda(t_i) - mu T - (alpha/beta) sum_i (1 - exp(-beta (T - t_i)))`.
/// Returns `-inf` when some `lambda(t_i) <= 0`.
pub fn log_likelihood(model: &HawkesModel, events: &[f64], horizon: f64) -> Result<f64, TemporalError> {
    Ok(log_likelihood_with_grad(model, events, horizon)?.value)
}

pub fn log_likelihood_with_grad(
    model: &HawkesModel,
    events: &[f64],
    horizon: f64,
) -> Result<LikelihoodGrad, TemporalError> {
    check_sorted(events)?;
    if let Some(&last) = events.last() {
        if events[0] < 0.0 || last > horizon {
            return Err(TemporalError::OutsideHorizon { horizon });
        }
    }
    let HawkesModel { mu, alpha, beta } = *model;
    // a = sum exp(-beta d), b = sum d exp(-beta d) over strictly earlier events.
    let (mut a, mut b) = (0.0f64, 0.0f64);
    let mut a_pending = 0.0f64;
    let mut prev = f64::NAN;
    let mut log_sum = 0.0;
    let (mut d_mu, mut d_alpha, mut d_beta) = (0.0, 0.0, 0.0);
    let mut infeasible = false;
    for &t in events {
        if t != prev {
            if prev.is_finite() {
                let dt = t - prev;
                let decay = (-beta * dt).exp();
                // Events at `prev` sit at distance 0 there: they add to `a` only.
                let a_at_prev = a + a_pending;
                a = decay * a_at_prev;
                b = decay * (b + dt * a_at_prev);
            }
            a_pending = 0.0;
            prev = t;
        }
        let lambda = mu + alpha * a;
        if lambda <= 0.0 {
            infeasible = true;
        } else {
            log_sum += lambda.ln();
            d_mu += 1.0 / lambda;
            d_alpha += a / lambda;
            d_beta -= alpha * b / lambda;
        }
        a_pending += 1.0;
    }
    let mut comp = 0.0;
    let mut comp_dbeta = 0.0;
    for &t in events {
        let rem = horizon - t;
        let e = (-beta * rem).exp();
        comp += 1.0 - e;
        comp_dbeta += rem * e;
    }
    let value = if infeasible {
        f64::NEG_INFINITY
    } else {
        log_sum - mu * horizon - alpha / beta * comp
    };
    Ok(LikelihoodGrad {
        value,
        d_mu: d_mu - horizon,
        d_alpha: d_alpha - comp / beta,
        d_beta: d_beta + alpha / (beta * beta) * comp - alpha / beta * comp_dbeta,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub steps: usize,
    pub step_size: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            steps: 2000,
            step_size: 0.1,
        }
    }
}

fn project(m: HawkesModel) -> HawkesModel {
    let beta = m.beta.max(PARAM_FLOOR);
    HawkesModel {
        mu: m.mu.max(PARAM_FLOOR),
        alpha: m.alpha.max(PARAM_FLOOR).min(MAX_BRANCHING * beta),
        beta,
    }
}

/// Maximum-likelihood fit by projected gradient ascent.
///
/// Each step moves parameter `p` by `step * p^2 * dL/dp / n` (a diagonal
/// rescaling that makes the step size unit-free) and is halved until the
/// likelihood does not decrease, so the returned model is never worse
/// than `init`. Parameters are clamped at [`PARAM_FLOOR`] and the branching
/// ratio is kept below one.
pub fn fit(events: &[f64], horizon: f64, init: HawkesModel, options: FitOptions) -> Result<HawkesModel, TemporalError> {
    if events.len() < 2 {
        return Err(TemporalError::TooFewEvents(events.len()));
    }
    init.validate()?;
    if options.step_size == 0.0 || options.steps == 0 {
        return Ok(init);
    }
    let n = events.len() as f64;
    let mut current = project(init);
    let mut cur = log_likelihood_with_grad(&current, events, horizon)?;
    if !cur.value.is_finite() {
        current = init;
        cur = log_likelihood_with_grad(&current, events, horizon)?;
    }
    let mut step = options.step_size;
    for _ in 0..options.steps {
        let dir = [
            current.mu * current.mu * cur.d_mu / n,
            current.alpha * current.alpha * cur.d_alpha / n,
            current.beta * current.beta * cur.d_beta / n,
        ];
        let mut accepted = false;
        let mut trial_step = step;
        for _ in 0..40 {
            let candidate = project(HawkesModel {
                mu: current.mu + trial_step * dir[0],
                alpha: current.alpha + trial_step * dir[1],
                beta: current.beta + trial_step * dir[2],
            });
            let cand = log_likelihood_with_grad(&candidate, events, horizon)?;
            if cand.value >= cur.value {
                let gain = cand.value - cur.value;
                current = candidate;
                cur = cand;
                accepted = true;
                if gain <= 1e-12 * cur.value.abs().max(1.0) {
                    return Ok(current);
                }
                break;
            }
            trial_step *= 0.5;
        }
        if !accepted {
            break;
        }
        // Let the step recover after a backtracked iteration.
        step = (trial_step * 2.0).min(options.step_size * 8.0);
    }
    Ok(current)
}

/// Ogata thinning on `[start, horizon)`, continuing from prior `history`.
/// Stops early once `max_events` new events have been generated.
pub fn simulate<R: Rng>(
    model: &HawkesModel,
    start: f64,
    horizon: f64,
    max_events: Option<usize>,
    rng: &mut R,
) -> Vec<f64> {
    let mut events = Vec::new();
    let mut t = start;
    // Excitation just after the most recent accepted event.
    let mut excitation = 0.0;
    let mut last = start;
    let limit = max_events.unwrap_or(usize::MAX);
    while events.len() < limit {
        let decayed = excitation * (-model.beta * (t - last)).exp();
        // Intensity only decays between events, so its current value bounds it.
        let bound = model.mu + model.alpha * decayed;
        if bound <= 0.0 {
            break;
        }
        let u: f64 = rng.gen_range(f64::EPSILON..1.0);
        t += -u.ln() / bound;
        if t >= horizon {
            break;
        }
        let lambda = model.mu + model.alpha * excitation * (-model.beta * (t - last)).exp();
        let accept: f64 = rng.gen();
        if accept * bound <= lambda {
            excitation = excitation * (-model.beta * (t - last)).exp() + 1.0;
            last = t;
            events.push(t);
        } else {
            excitation *= (-model.beta * (t - last)).exp();
            last = t;
        }
    }
    events
}
