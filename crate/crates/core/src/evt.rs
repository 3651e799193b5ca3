//! Generalized Pareto tails and peaks-over-threshold supply models.
//!
//! A donor either produces nothing on a given day (the threshold value, zero
//! for every fitted category) or, with probability `rate`, produces an event
//! whose size above the threshold follows a GPD with location, scale and
//! shape parameters. The shape controls tail weight: the mean exists only for
//! `shape < 1` and the variance only for `shape < 0.5`.

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use crate::error::EvtError;

/// Below this magnitude the shape is treated as zero and the exponential
/// limit of every formula is used instead.
pub const EXPONENTIAL_LIMIT: f64 = 1e-9;

/// Minimum number of exceedances accepted by [`fit_gpd`].
pub const MIN_FIT_SAMPLES: usize = 30;

/// Absolute log-likelihood spread at which the maximizer stops.
pub const FIT_TOLERANCE: f64 = 1e-8;

/// Iteration cap shared by all restarts of the maximizer.
pub const FIT_MAX_ITERATIONS: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpdParams {
    pub location: f64,
    pub scale: f64,
    pub shape: f64,
}

impl GpdParams {
    pub fn new(location: f64, scale: f64, shape: f64) -> Result<Self, EvtError> {
        let p = Self {
            location,
            scale,
            shape,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), EvtError> {
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(EvtError::InvalidScale(self.scale));
        }
        if !self.location.is_finite() || !self.shape.is_finite() {
            return Err(EvtError::InvalidScale(self.scale));
        }
        Ok(())
    }

    fn is_exponential(&self) -> bool {
        self.shape.abs() < EXPONENTIAL_LIMIT
    }

    /// `location + scale / (1 - shape)`.
    pub fn mean(&self) -> Result<f64, EvtError> {
        if self.shape >= 1.0 {
            return Err(EvtError::MeanUndefined { shape: self.shape });
        }
        Ok(self.location + self.scale / (1.0 - self.shape))
    }

    /// Value exceeded with probability `u`.
    ///
    /// This is the inverse of the survival function, so `u -> 1` gives the
    /// location and `u -> 0` runs off into the tail. Feeding it a uniform
    /// draw yields a GPD sample.
    pub fn quantile(&self, u: f64) -> Result<f64, EvtError> {
        if !(u > 0.0 && u < 1.0) {
            return Err(EvtError::ProbabilityDomain(u));
        }
        Ok(self.quantile_unchecked(u))
    }

    fn quantile_unchecked(&self, u: f64) -> f64 {
        if self.is_exponential() {
            self.location - self.scale * u.ln()
        } else {
            self.location + self.scale * (u.powf(-self.shape) - 1.0) / self.shape
        }
    }

    /// Cumulative distribution function.
    pub fn cdf(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        if z <= 0.0 {
            return 0.0;
        }
        if self.is_exponential() {
            return 1.0 - (-z).exp();
        }
        let t = 1.0 + self.shape * z;
        if t <= 0.0 {
            // Beyond the finite upper endpoint of a negative-shape tail.
            return 1.0;
        }
        1.0 - t.powf(-1.0 / self.shape)
    }

    /// Probability density function.
    pub fn pdf(&self, x: f64) -> f64 {
        let z = (x - self.location) / self.scale;
        if z < 0.0 {
            return 0.0;
        }
        if self.is_exponential() {
            return (-z).exp() / self.scale;
        }
        let t = 1.0 + self.shape * z;
        if t <= 0.0 {
            return 0.0;
        }
        t.powf(-1.0 / self.shape - 1.0) / self.scale
    }

    /// Log-likelihood of excesses over the location.
    ///
    /// Returns negative infinity (never NaN, never a panic) when any excess
    /// falls outside the support.
    pub fn log_likelihood(&self, excesses: &[f64]) -> f64 {
        log_likelihood(self.scale, self.shape, excesses)
    }
}

fn log_likelihood(scale: f64, shape: f64, excesses: &[f64]) -> f64 {
    if excesses.is_empty() {
        return 0.0;
    }
    if !(scale > 0.0) || !scale.is_finite() || !shape.is_finite() {
        return f64::NEG_INFINITY;
    }
    let n = excesses.len() as f64;
    if shape.abs() < EXPONENTIAL_LIMIT {
        let mut sum = 0.0;
        for &x in excesses {
            if !(x >= 0.0) {
                return f64::NEG_INFINITY;
            }
            sum += x;
        }
        return -n * scale.ln() - sum / scale;
    }
    let mut sum = 0.0;
    for &x in excesses {
        let t = 1.0 + shape * x / scale;
        if !(x >= 0.0) || !(t > 0.0) {
            return f64::NEG_INFINITY;
        }
        sum += t.ln();
    }
    -n * scale.ln() - (1.0 + 1.0 / shape) * sum
}

/// Maximum-likelihood GPD fit with the location pinned at zero.
///
/// The search runs a Nelder-Mead simplex over `(ln scale, shape)` started from
/// method-of-moments estimates, restarting from the incumbent until a restart
/// no longer improves the log-likelihood by more than [`FIT_TOLERANCE`].
pub fn fit_gpd(excesses: &[f64]) -> Result<GpdParams, EvtError> {
    if excesses.len() < MIN_FIT_SAMPLES {
        return Err(EvtError::InsufficientData {
            needed: MIN_FIT_SAMPLES,
            got: excesses.len(),
        });
    }
    if let Some(&bad) = excesses.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(EvtError::InvalidSample(bad));
    }

    let n = excesses.len() as f64;
    let mean = excesses.iter().sum::<f64>() / n;
    let var = excesses.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let max = excesses.iter().copied().fold(f64::MIN, f64::max);
    if !(var > f64::EPSILON * mean * mean) {
        return Err(EvtError::DegenerateData);
    }

    let ratio = mean * mean / var;
    let mut shape0 = (0.5 * (1.0 - ratio)).clamp(-0.45, 0.9);
    let mut scale0 = 0.5 * mean * (ratio + 1.0);
    if !(scale0 > 0.0) {
        scale0 = mean;
    }
    if shape0 < 0.0 && 1.0 + shape0 * max / scale0 <= 0.0 {
        shape0 = 0.1;
        scale0 = mean * 0.9;
    }

    let objective = |v: [f64; 2]| -> f64 {
        let ll = log_likelihood(v[0].exp(), v[1], excesses);
        if ll.is_nan() {
            f64::INFINITY
        } else {
            -ll
        }
    };

    let mut start = [scale0.ln(), shape0];
    let mut best_value = objective(start);
    let mut iterations = 0usize;
    loop {
        let outcome = nelder_mead(&objective, start, [0.1, 0.05], FIT_MAX_ITERATIONS - iterations);
        iterations += outcome.iterations;
        let improvement = best_value - outcome.value;
        if outcome.value <= best_value {
            start = outcome.point;
            best_value = outcome.value;
        }
        let best = GpdParams {
            location: 0.0,
            scale: start[0].exp(),
            shape: start[1],
        };
        if !outcome.converged || iterations >= FIT_MAX_ITERATIONS {
            return Err(EvtError::NonConvergence {
                iterations,
                best,
                log_likelihood: -best_value,
            });
        }
        if improvement.abs() < FIT_TOLERANCE || !improvement.is_finite() {
            if !best_value.is_finite() {
                return Err(EvtError::NonConvergence {
                    iterations,
                    best,
                    log_likelihood: -best_value,
                });
            }
            return Ok(best);
        }
    }
}

struct SimplexOutcome {
    point: [f64; 2],
    value: f64,
    iterations: usize,
    converged: bool,
}

fn nelder_mead<F>(f: &F, start: [f64; 2], step: [f64; 2], max_iter: usize) -> SimplexOutcome
where
    F: Fn([f64; 2]) -> f64,
{
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(f);
    let mut iterations = 0;
    loop {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);

        let spread = values[2] - values[0];
        if spread.is_finite() && spread < FIT_TOLERANCE {
            return SimplexOutcome {
                point: simplex[0],
                value: values[0],
                iterations,
                converged: true,
            };
        }
        if iterations >= max_iter {
            return SimplexOutcome {
                point: simplex[0],
                value: values[0],
                iterations,
                converged: false,
            };
        }
        iterations += 1;

        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };

        let reflected = along(-1.0);
        let fr = f(reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
            continue;
        }
        if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
            continue;
        }
        let (contracted, fc) = if fr < values[2] {
            let p = along(-0.5);
            (p, f(p))
        } else {
            let p = along(0.5);
            (p, f(p))
        };
        if fc < values[2].min(fr) {
            simplex[2] = contracted;
            values[2] = fc;
            continue;
        }
        // Shrink towards the best vertex.
        for i in 1..3 {
            simplex[i] = [
                simplex[0][0] + 0.5 * (simplex[i][0] - simplex[0][0]),
                simplex[0][1] + 0.5 * (simplex[i][1] - simplex[0][1]),
            ];
            values[i] = f(simplex[i]);
        }
    }
}

/// Asymptotic standard errors `(scale, shape)` from the observed information.
///
/// Informational only. `None` when the numerical Hessian is not negative
/// definite at `params`.
pub fn standard_errors(params: &GpdParams, excesses: &[f64]) -> Option<(f64, f64)> {
    let ll = |s: f64, z: f64| log_likelihood(s, z, excesses);
    let (s, z) = (params.scale, params.shape);
    let hs = 1e-4 * s;
    let hz = 1e-4;
    let f0 = ll(s, z);
    let hss = (ll(s + hs, z) - 2.0 * f0 + ll(s - hs, z)) / (hs * hs);
    let hzz = (ll(s, z + hz) - 2.0 * f0 + ll(s, z - hz)) / (hz * hz);
    let hsz = (ll(s + hs, z + hz) - ll(s + hs, z - hz) - ll(s - hs, z + hz) + ll(s - hs, z - hz))
        / (4.0 * hs * hz);
    // Covariance is the inverse of the negated Hessian.
    let (a, b, d) = (-hss, -hsz, -hzz);
    let det = a * d - b * b;
    if !(det > 0.0 && a > 0.0) || !det.is_finite() {
        return None;
    }
    Some(((d / det).sqrt(), (a / det).sqrt()))
}

/// `(theoretical, empirical)` quantile pairs for a QQ plot of `excesses`
/// against `params`, using plotting positions `i / (n + 1)`.
pub fn qq_pairs(params: &GpdParams, excesses: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = excesses.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, x)| {
            let p = (i as f64 + 1.0) / (n + 1.0);
            (params.quantile_unchecked(1.0 - p), x)
        })
        .collect()
}

/// Peaks-over-threshold model for one donor or donor category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotModel {
    pub threshold: f64,
    pub rate: f64,
    /// Absent when no exceedance was ever observed.
    pub tail: Option<GpdParams>,
}

impl PotModel {
    pub fn new(threshold: f64, rate: f64, tail: Option<GpdParams>) -> Result<Self, EvtError> {
        let m = Self {
            threshold,
            rate,
            tail,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), EvtError> {
        if !(self.threshold.is_finite() && self.threshold >= 0.0) {
            return Err(EvtError::InvalidThreshold(self.threshold));
        }
        if !(0.0..=1.0).contains(&self.rate) {
            return Err(EvtError::InvalidRate(self.rate));
        }
        if let Some(tail) = &self.tail {
            tail.validate()?;
        }
        Ok(())
    }

    /// Draw one day's supply.
    ///
    /// Two independent uniforms are consumed on every call: the first decides
    /// whether an event happens, the second sets its size.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let occurrence: f64 = rng.sample(Open01);
        let magnitude: f64 = rng.sample(Open01);
        match &self.tail {
            Some(tail) if occurrence <= self.rate => {
                self.threshold + tail.quantile_unchecked(magnitude)
            }
            _ => self.threshold,
        }
    }

    /// Expected daily value including non-event days.
    pub fn daily_mean(&self) -> Result<f64, EvtError> {
        match &self.tail {
            Some(tail) => Ok(self.threshold + self.rate * tail.mean()?),
            None => Ok(self.threshold),
        }
    }
}

/// Fit a peaks-over-threshold model to a series of daily values.
pub fn fit_pot(daily_values: &[f64], threshold: f64) -> Result<PotModel, EvtError> {
    if daily_values.is_empty() {
        return Err(EvtError::EmptyInput);
    }
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(EvtError::InvalidThreshold(threshold));
    }
    if let Some(&bad) = daily_values.iter().find(|x| !x.is_finite()) {
        return Err(EvtError::InvalidSample(bad));
    }
    let excesses: Vec<f64> = daily_values
        .iter()
        .filter(|&&v| v > threshold)
        .map(|&v| v - threshold)
        .collect();
    let rate = excesses.len() as f64 / daily_values.len() as f64;
    let tail = if excesses.is_empty() {
        None
    } else {
        Some(fit_gpd(&excesses)?)
    };
    Ok(PotModel {
        threshold,
        rate,
        tail,
    })
}
