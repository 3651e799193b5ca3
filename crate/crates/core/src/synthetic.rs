//! Seeded synthetic donor networks for running without proprietary data.
//!
//! Donors are scattered around a warehouse with a per-category radius. A
//! fraction of farms and manufacturers is pushed past `far_km` so that
//! distance filters have something to remove.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SupplyError;
use crate::geo::{LatLon, EARTH_RADIUS_KM};
use crate::supply::{donor_pot_model, CategoryFits, Donor, DonorCategory, ScaleModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryProfile {
    pub category: DonorCategory,
    pub count: usize,
    /// Log-uniform square-footage range; `None` leaves the field blank.
    pub sqft: Option<(f64, f64)>,
    /// Fraction of donors whose square footage is recorded; the rest fall
    /// back to the category scale.
    pub sqft_known: f64,
    /// Typical distance to the warehouse, km.
    pub radius_km: f64,
    /// Fraction placed between `far_km` and `1.5 * far_km`.
    pub far_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub warehouse: LatLon,
    pub far_km: f64,
    pub categories: Vec<CategoryProfile>,
}

impl Profile {
    fn base(categories: Vec<CategoryProfile>) -> Self {
        Self {
            warehouse: LatLon {
                lat: 40.10,
                lon: -105.17,
            },
            far_km: 100.0,
            categories,
        }
    }

    /// 90 donors in four categories.
    pub fn cfs90() -> Self {
        Self::base(vec![
            cat(DonorCategory::Grocer, 55, Some((40_000.0, 250_000.0)), 0.3, 12.0, 0.0),
            cat(DonorCategory::Manufacturer, 12, Some((20_000.0, 150_000.0)), 1.0, 25.0, 0.25),
            cat(DonorCategory::Individual, 15, None, 0.0, 12.0, 0.0),
            cat(DonorCategory::Farm, 8, None, 0.0, 40.0, 0.25),
        ])
    }

    /// 156 donors.
    pub fn cfs156() -> Self {
        Self::base(vec![
            cat(DonorCategory::Grocer, 100, Some((40_000.0, 250_000.0)), 0.3, 15.0, 0.0),
            cat(DonorCategory::Manufacturer, 24, Some((20_000.0, 150_000.0)), 1.0, 25.0, 0.25),
            cat(DonorCategory::Individual, 20, None, 0.0, 12.0, 0.0),
            cat(DonorCategory::Farm, 12, None, 0.0, 40.0, 0.25),
        ])
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "cfs90" => Some(Self::cfs90()),
            "cfs156" => Some(Self::cfs156()),
            _ => None,
        }
    }

    pub fn len(&self) -> usize {
        self.categories.iter().map(|c| c.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn cat(
    category: DonorCategory,
    count: usize,
    sqft: Option<(f64, f64)>,
    sqft_known: f64,
    radius_km: f64,
    far: f64,
) -> CategoryProfile {
    CategoryProfile {
        category,
        count,
        sqft,
        sqft_known,
        radius_km,
        far_fraction: far,
    }
}

/// Point at `km` great-circle distance and `bearing` radians from `origin`.
pub fn destination(origin: LatLon, km: f64, bearing: f64) -> LatLon {
    let d = km / EARTH_RADIUS_KM;
    let (lat1, lon1) = (origin.lat.to_radians(), origin.lon.to_radians());
    let lat2 = (lat1.sin() * d.cos() + lat1.cos() * d.sin() * bearing.cos()).asin();
    let lon2 = lon1 + (bearing.sin() * d.sin() * lat1.cos()).atan2(d.cos() - lat1.sin() * lat2.sin());
    LatLon {
        lat: lat2.to_degrees(),
        lon: (lon2.to_degrees() + 540.0) % 360.0 - 180.0,
    }
}

/// Generate donors with ids `<category>-<nn>` and coordinates.
///
/// `distance_from_warehouse` is left empty; build distances from the
/// coordinates with the haversine provider.
pub fn generate_donors(profile: &Profile, seed: u64) -> Vec<Donor> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(profile.len());
    for c in &profile.categories {
        let n_far = (c.far_fraction * c.count as f64).round() as usize;
        let n_sqft = (c.sqft_known * c.count as f64).round() as usize;
        for i in 0..c.count {
            let km = if i < n_far {
                rng.random_range(profile.far_km..1.5 * profile.far_km)
            } else {
                // Roughly uniform over a disc, so most donors sit near the edge.
                (c.radius_km * rng.random::<f64>().sqrt()).max(0.5)
            };
            let bearing = rng.random_range(0.0..std::f64::consts::TAU);
            let p = destination(profile.warehouse, km, bearing);
            let id = format!("{}-{:02}", c.category, i + 1);
            let mut d = Donor::new(id, c.category).with_location(p.lat, p.lon);
            d.name = format!("{} {}", c.category, i + 1);
            if let (Some((lo, hi)), true) = (c.sqft, i < n_sqft) {
                // Log-uniform square footage.
                let s = (lo.ln() + rng.random::<f64>() * (hi / lo).ln()).exp();
                d = d.with_square_footage(s.round());
            }
            out.push(d);
        }
    }
    out
}

/// Daily donation values for each donor drawn from its own supply model
/// (category rate and shape, scale from square footage when known), in
/// `(donor_id, day, lbs)` form.
pub fn generate_daily_values(
    donors: &[Donor],
    fits: &CategoryFits,
    scale_model: &ScaleModel,
    days: u32,
    seed: u64,
) -> Result<Vec<(String, u32, f64)>, SupplyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(donors.len() * days as usize);
    for d in donors {
        let model = donor_pot_model(d, fits, scale_model)?;
        for day in 0..days {
            out.push((d.id.clone(), day, model.sample(&mut rng)));
        }
    }
    Ok(out)
}
