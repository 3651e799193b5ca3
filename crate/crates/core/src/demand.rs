//! Daily demand and warehouse carryover.
//!
//! Each morning the warehouse stock decays by `epsilon`, then covers as much
//! of the day's demand as it can. Whatever is picked up beyond the remaining
//! (net) demand is added to stock in the evening. Shortfalls never draw the
//! stock negative.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{DemandError, SupplyError};
use crate::supply::check_epsilon;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DemandSpec {
    Constant(f64),
    /// Normal draw clamped at zero.
    Gaussian { mean: f64, sd: f64 },
}

impl DemandSpec {
    /// Mean and standard deviation of observed daily distribution, lbs.
    pub const OBSERVED: DemandSpec = DemandSpec::Gaussian {
        mean: 10_410.0,
        sd: 10_041.0,
    };

    pub fn validate(&self) -> Result<(), DemandError> {
        match *self {
            DemandSpec::Constant(a) if !(a.is_finite() && a >= 0.0) => Err(DemandError::InvalidAmount(a)),
            DemandSpec::Gaussian { mean, sd } if !(mean.is_finite() && sd.is_finite() && sd >= 0.0) => {
                Err(DemandError::InvalidGaussian { mean, sd })
            }
            _ => Ok(()),
        }
    }

    /// Draw one day's total demand.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            DemandSpec::Constant(a) => a,
            DemandSpec::Gaussian { mean, sd } => {
                if sd == 0.0 {
                    return mean.max(0.0);
                }
                Normal::new(mean, sd)
                    .map(|n| n.sample(rng))
                    .unwrap_or(mean)
                    .max(0.0)
            }
        }
    }
}

/// Same as [`DemandSpec::sample`].
pub fn daily_demand<R: Rng + ?Sized>(spec: &DemandSpec, rng: &mut R) -> f64 {
    spec.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Warehouse {
    pub stock: f64,
    pub enabled: bool,
}

impl Warehouse {
    pub fn new(enabled: bool) -> Self {
        Self { stock: 0.0, enabled }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Morning {
    pub net_demand: f64,
    pub carry_consumed: f64,
    pub warehouse: Warehouse,
}

/// Decay the stock overnight and let it cover today's demand.
pub fn begin_day(w: Warehouse, epsilon: f64, total_demand: f64) -> Result<Morning, SupplyError> {
    check_epsilon(epsilon)?;
    if !w.enabled {
        return Ok(Morning {
            net_demand: total_demand,
            carry_consumed: 0.0,
            warehouse: Warehouse { stock: 0.0, ..w },
        });
    }
    let decayed = epsilon * w.stock;
    let carry_consumed = decayed.min(total_demand);
    Ok(Morning {
        net_demand: (total_demand - decayed).max(0.0),
        carry_consumed,
        warehouse: Warehouse {
            stock: decayed - carry_consumed,
            ..w
        },
    })
}

/// Store whatever was recovered beyond the net demand.
pub fn end_day(w: Warehouse, recovered: f64, net_demand: f64) -> Warehouse {
    if !w.enabled {
        return w;
    }
    Warehouse {
        stock: w.stock + (recovered - net_demand).max(0.0),
        ..w
    }
}
