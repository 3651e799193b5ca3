//! Donor supply: category fits, size-based scale prediction, daily draws and
//! carryover of food left at donors.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::SupplyError;
use crate::evt::{GpdParams, PotModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DonorCategory {
    Grocer,
    Manufacturer,
    Farm,
    Individual,
}

impl DonorCategory {
    pub const ALL: [DonorCategory; 4] = [
        DonorCategory::Grocer,
        DonorCategory::Manufacturer,
        DonorCategory::Farm,
        DonorCategory::Individual,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DonorCategory::Grocer => "grocer",
            DonorCategory::Manufacturer => "manufacturer",
            DonorCategory::Farm => "farm",
            DonorCategory::Individual => "individual",
        }
    }
}

impl fmt::Display for DonorCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DonorCategory {
    type Err = SupplyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "grocer" => Ok(DonorCategory::Grocer),
            "manufacturer" => Ok(DonorCategory::Manufacturer),
            "farm" => Ok(DonorCategory::Farm),
            "individual" => Ok(DonorCategory::Individual),
            other => Err(SupplyError::UnknownCategory(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Donor {
    pub id: String,
    pub name: String,
    pub category: DonorCategory,
    pub square_footage: Option<f64>,
    pub latitude: Option<f64>,
    pub longitude: Option<f64>,
    /// Driving distance to the warehouse, when known independently of a
    /// distance matrix.
    pub distance_from_warehouse: Option<f64>,
}

impl Donor {
    pub fn new(id: impl Into<String>, category: DonorCategory) -> Self {
        let id = id.into();
        Self {
            name: id.clone(),
            id,
            category,
            square_footage: None,
            latitude: None,
            longitude: None,
            distance_from_warehouse: None,
        }
    }

    pub fn with_square_footage(mut self, sqft: f64) -> Self {
        self.square_footage = Some(sqft);
        self
    }

    pub fn with_location(mut self, lat: f64, lon: f64) -> Self {
        self.latitude = Some(lat);
        self.longitude = Some(lon);
        self
    }

    pub fn with_distance(mut self, km: f64) -> Self {
        self.distance_from_warehouse = Some(km);
        self
    }
}

/// Check the donor-set invariants: unique ids, positive square footage.
pub fn validate_donors(donors: &[Donor]) -> Result<(), SupplyError> {
    let mut seen = HashSet::with_capacity(donors.len());
    for d in donors {
        if !seen.insert(d.id.as_str()) {
            return Err(SupplyError::DuplicateDonor(d.id.clone()));
        }
        if let Some(x) = d.square_footage {
            if !(x.is_finite() && x > 0.0) {
                return Err(SupplyError::InvalidSquareFootage(x));
            }
        }
    }
    Ok(())
}

/// Power-law link between building size and mean event size:
/// `log10(mean) = slope * log10(sqft) + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleModel {
    pub slope: f64,
    pub intercept: f64,
}

impl ScaleModel {
    /// Reference slope and intercept.
    pub const FITTED: ScaleModel = ScaleModel {
        slope: 0.291,
        intercept: 1.103,
    };

    /// Mean event size the model expects for a building of `sqft`.
    pub fn mean_for(&self, sqft: f64) -> f64 {
        10f64.powf(self.slope * sqft.log10() + self.intercept)
    }
}

impl Default for ScaleModel {
    fn default() -> Self {
        Self::FITTED
    }
}

/// GPD scale that gives a zero-location tail of the given shape the mean
/// `10^(m log10 x + b)`, i.e. `x^m (1 - shape) 10^b`.
pub fn predict_scale(sqft: f64, shape: f64, model: &ScaleModel) -> Result<f64, SupplyError> {
    if !(sqft.is_finite() && sqft > 0.0) {
        return Err(SupplyError::InvalidSquareFootage(sqft));
    }
    if !(shape < 1.0) {
        return Err(SupplyError::ShapeTooLarge(shape));
    }
    Ok(sqft.powf(model.slope) * (1.0 - shape) * 10f64.powf(model.intercept))
}

/// Ordinary least squares of `log10(mean)` on `log10(sqft)`.
pub fn fit_scale_model(points: &[(f64, f64)]) -> Result<ScaleModel, SupplyError> {
    if points.len() < 3 {
        return Err(SupplyError::InsufficientPoints(points.len()));
    }
    if let Some(&(x, y)) = points
        .iter()
        .find(|(x, y)| !(x.is_finite() && *x > 0.0 && y.is_finite() && *y > 0.0))
    {
        return Err(SupplyError::NonPositivePoint(x, y));
    }
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|(x, y)| (x.log10(), y.log10())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if !(sxx > 0.0) {
        return Err(SupplyError::DegeneratePoints);
    }
    let slope = sxy / sxx;
    Ok(ScaleModel {
        slope,
        intercept: my - slope * mx,
    })
}

/// Per-category peaks-over-threshold fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryFits(pub BTreeMap<DonorCategory, PotModel>);

impl CategoryFits {
    /// Reference fits for each category.
    pub fn reference() -> Self {
        let row = |rate, scale, shape| PotModel {
            threshold: 0.0,
            rate,
            tail: Some(GpdParams {
                location: 0.0,
                scale,
                shape,
            }),
        };
        let mut m = BTreeMap::new();
        m.insert(DonorCategory::Grocer, row(0.302, 293.139, 0.205));
        m.insert(DonorCategory::Manufacturer, row(0.038, 562.549, 0.107));
        m.insert(DonorCategory::Individual, row(0.029, 141.755, 0.905));
        m.insert(DonorCategory::Farm, row(0.023, 918.811, 0.867));
        Self(m)
    }

    /// The fit pooled over every donor.
    pub fn pooled_reference() -> PotModel {
        PotModel {
            threshold: 0.0,
            rate: 0.121,
            tail: Some(GpdParams {
                location: 0.0,
                scale: 275.947,
                shape: 0.439,
            }),
        }
    }

    pub fn get(&self, category: DonorCategory) -> Option<&PotModel> {
        self.0.get(&category)
    }
}

/// Supply model for one donor.
///
/// Rate and shape always come from the donor's category. When the donor's
/// square footage is known the scale is predicted from it, otherwise the
/// category scale is used.
pub fn donor_pot_model(
    donor: &Donor,
    fits: &CategoryFits,
    scale_model: &ScaleModel,
) -> Result<PotModel, SupplyError> {
    let fit = fits
        .get(donor.category)
        .ok_or_else(|| SupplyError::MissingCategory(donor.category.to_string()))?;
    let tail = match (fit.tail, donor.square_footage) {
        (Some(tail), Some(sqft)) => Some(GpdParams {
            location: 0.0,
            scale: predict_scale(sqft, tail.shape, scale_model)?,
            shape: tail.shape,
        }),
        (Some(tail), None) => Some(GpdParams {
            location: 0.0,
            ..tail
        }),
        (None, _) => None,
    };
    Ok(PotModel {
        threshold: 0.0,
        rate: fit.rate,
        tail,
    })
}

/// Food sitting at each donor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SupplyState {
    /// Available today: new draws plus surviving leftovers.
    pub fresh: Vec<f64>,
    /// Not picked up on the previous day, before overnight expiry.
    pub leftover: Vec<f64>,
}

impl SupplyState {
    pub fn new(donors: usize) -> Self {
        Self {
            fresh: vec![0.0; donors],
            leftover: vec![0.0; donors],
        }
    }

    /// Replace `fresh` with `draw(i, model_i) + epsilon * leftover_i`.
    ///
    /// `draw` supplies the new supply for donor `i`; the simulator passes a
    /// closure reading each donor's own random substream.
    pub fn advance<F>(&mut self, models: &[PotModel], epsilon: f64, mut draw: F) -> Result<(), SupplyError>
    where
        F: FnMut(usize, &PotModel) -> f64,
    {
        check_epsilon(epsilon)?;
        if self.leftover.len() != models.len() {
            return Err(SupplyError::LengthMismatch {
                fresh: models.len(),
                selection: self.leftover.len(),
            });
        }
        self.fresh.clear();
        self.fresh.extend(
            models
                .iter()
                .zip(&self.leftover)
                .enumerate()
                .map(|(i, (m, &old))| draw(i, m) + epsilon * old),
        );
        Ok(())
    }
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<(), SupplyError> {
    if (0.0..=1.0).contains(&epsilon) {
        Ok(())
    } else {
        Err(SupplyError::InvalidEpsilon(epsilon))
    }
}

/// One day's supply for every donor, drawing sequentially from `rng`.
pub fn generate_daily_supply<R: Rng + ?Sized>(
    models: &[PotModel],
    state: &SupplyState,
    epsilon: f64,
    rng: &mut R,
) -> Result<SupplyState, SupplyError> {
    let mut next = state.clone();
    next.advance(models, epsilon, |_, m| m.sample(rng))?;
    Ok(next)
}

/// What stays at each donor after pickups: everything at unselected donors,
/// nothing at selected ones. Expiry is applied when the next day is drawn.
pub fn retain_unpicked(fresh: &[f64], selected: &[bool]) -> Result<Vec<f64>, SupplyError> {
    if fresh.len() != selected.len() {
        return Err(SupplyError::LengthMismatch {
            fresh: fresh.len(),
            selection: selected.len(),
        });
    }
    Ok(fresh
        .iter()
        .zip(selected)
        .map(|(&s, &picked)| if picked { 0.0 } else { s })
        .collect())
}
