//! File formats: donor sets, distance tables, daily and sweep outputs, and
//! the fits document.
//!
//! All numeric output uses Rust's shortest round-trip float formatting, so
//! reading a file back gives bitwise-identical values.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoError};
use crate::evt::{GpdParams, PotModel};
use crate::geo::{CachedRoutes, DistanceMatrix};
use crate::sim::{ClusterInfo, DayRecord, Sweep};
use crate::supply::{CategoryFits, Donor, DonorCategory, ScaleModel};

pub const DONOR_HEADER: [&str; 7] = ["id", "name", "category", "sqft", "lat", "lon", "dist_km"];
pub const DISTANCE_HEADER: [&str; 3] = ["from_id", "to_id", "km"];
pub const DAILY_HEADER: [&str; 9] = [
    "day",
    "total_demand",
    "net_demand",
    "recovered",
    "cost_km",
    "excess",
    "warehouse",
    "underrun",
    "optimal",
];
pub const CLUSTER_HEADER: [&str; 3] = ["cluster_index", "donor_id", "cluster_cost_km"];
pub const FITS_SCHEMA_VERSION: u32 = 1;

fn parse_err(path: &str, e: &csv::Error) -> IoError {
    let line = e.position().map_or(0, |p| p.line());
    let message = match e.kind() {
        csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
        _ => e.to_string(),
    };
    IoError::Parse {
        path: path.to_string(),
        line,
        message,
    }
}

fn format_err(path: &str, message: impl Into<String>) -> IoError {
    IoError::Format {
        path: path.to_string(),
        message: message.into(),
    }
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, path: &str, expected: &[&str]) -> Result<(), IoError> {
    let header = rdr.headers().map_err(|e| parse_err(path, &e))?;
    if header.is_empty() {
        return Err(IoError::Parse {
            path: path.to_string(),
            line: 1,
            message: "empty file".into(),
        });
    }
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(IoError::Parse {
            path: path.to_string(),
            line: 1,
            message: format!("expected header `{}`, got `{}`", expected.join(","), got.join(",")),
        });
    }
    Ok(())
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input)
}

#[derive(Debug, Deserialize)]
struct DonorRow {
    id: String,
    name: String,
    category: String,
    sqft: Option<f64>,
    lat: Option<f64>,
    lon: Option<f64>,
    dist_km: Option<f64>,
}

/// Read a donor set: `id,name,category,sqft,lat,lon,dist_km`.
pub fn read_donors<R: Read>(input: R, path: &str) -> Result<Vec<Donor>, Error> {
    let mut rdr = reader(input);
    check_header(&mut rdr, path, &DONOR_HEADER)?;
    let mut out = Vec::new();
    for row in rdr.deserialize::<DonorRow>() {
        let row = row.map_err(|e| parse_err(path, &e))?;
        let line = out.len() as u64 + 2;
        let category: DonorCategory = row.category.parse().map_err(|_| IoError::Parse {
            path: path.to_string(),
            line,
            message: format!("unknown category `{}`", row.category),
        })?;
        if row.id.is_empty() {
            return Err(IoError::Parse {
                path: path.to_string(),
                line,
                message: "empty donor id".into(),
            }
            .into());
        }
        out.push(Donor {
            id: row.id,
            name: row.name,
            category,
            square_footage: row.sqft,
            latitude: row.lat,
            longitude: row.lon,
            distance_from_warehouse: row.dist_km,
        });
    }
    crate::supply::validate_donors(&out)?;
    Ok(out)
}

pub fn write_donors<W: Write>(out: W, donors: &[Donor]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DONOR_HEADER)?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for d in donors {
        w.write_record([
            d.id.clone(),
            d.name.clone(),
            d.category.to_string(),
            opt(d.square_footage),
            opt(d.latitude),
            opt(d.longitude),
            opt(d.distance_from_warehouse),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DistanceRow {
    from_id: String,
    to_id: String,
    km: f64,
}

/// Read `from_id,to_id,km` rows into a route cache.
pub fn read_routes<R: Read>(input: R, path: &str) -> Result<CachedRoutes, Error> {
    let mut rdr = reader(input);
    check_header(&mut rdr, path, &DISTANCE_HEADER)?;
    let mut routes = CachedRoutes::new();
    for (i, row) in rdr.deserialize::<DistanceRow>().enumerate() {
        let row = row.map_err(|e| parse_err(path, &e))?;
        if !(row.km.is_finite() && row.km >= 0.0) {
            return Err(IoError::Parse {
                path: path.to_string(),
                line: i as u64 + 2,
                message: format!("invalid distance {}", row.km),
            }
            .into());
        }
        routes.insert(row.from_id, row.to_id, row.km);
    }
    Ok(routes)
}

/// Write the upper triangle of `matrix` as `from_id,to_id,km` rows.
pub fn write_distances<W: Write>(out: W, matrix: &DistanceMatrix) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DISTANCE_HEADER)?;
    let ids = matrix.ids();
    for i in 0..ids.len() {
        for j in (i + 1)..ids.len() {
            w.write_record([ids[i].as_str(), ids[j].as_str(), &matrix.km(i, j).to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_daily<W: Write>(out: W, records: &[DayRecord]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DAILY_HEADER)?;
    for r in records {
        w.write_record([
            r.day.to_string(),
            r.total_demand.to_string(),
            r.net_demand.to_string(),
            r.recovered.to_string(),
            r.cost.to_string(),
            r.excess.to_string(),
            r.warehouse_stock.to_string(),
            r.underrun.to_string(),
            r.optimality_proven.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct DailyRow {
    day: u32,
    total_demand: f64,
    net_demand: f64,
    recovered: f64,
    cost_km: f64,
    excess: f64,
    warehouse: f64,
    underrun: bool,
    optimal: bool,
}

pub fn read_daily<R: Read>(input: R, path: &str) -> Result<Vec<DayRecord>, Error> {
    let mut rdr = reader(input);
    check_header(&mut rdr, path, &DAILY_HEADER)?;
    rdr.deserialize::<DailyRow>()
        .map(|row| {
            let r = row.map_err(|e| parse_err(path, &e))?;
            Ok(DayRecord {
                day: r.day,
                total_demand: r.total_demand,
                net_demand: r.net_demand,
                recovered: r.recovered,
                cost: r.cost_km,
                excess: r.excess,
                warehouse_stock: r.warehouse,
                underrun: r.underrun,
                optimality_proven: r.optimal,
            })
        })
        .collect()
}

pub fn write_clusters<W: Write>(out: W, clusters: &[ClusterInfo]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CLUSTER_HEADER)?;
    for (k, c) in clusters.iter().enumerate() {
        for id in &c.member_ids {
            w.write_record([k.to_string(), id.clone(), c.cost.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Long-format sweep table: swept parameters, then the summary columns.
pub fn write_sweep<W: Write>(out: W, sweep: &Sweep) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = sweep.param_names.clone();
    header.extend(["mean_cost_km", "mean_excess_lbs", "underrun_days"]);
    w.write_record(&header)?;
    for row in &sweep.rows {
        let mut rec: Vec<String> = row.params.iter().map(f64::to_string).collect();
        rec.push(row.summary.mean_cost.to_string());
        rec.push(row.summary.mean_excess.to_string());
        rec.push(row.summary.underrun_days.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_qq<W: Write>(out: W, pairs: &[(f64, f64)]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theoretical", "empirical"])?;
    for (t, e) in pairs {
        w.write_record([t.to_string(), e.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One fitted label in a fits document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitEntry {
    pub threshold: f64,
    pub rate: f64,
    pub tail: Option<GpdParams>,
    /// `(scale, shape)` standard errors, when they could be computed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub standard_errors: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observations: Option<usize>,
}

impl FitEntry {
    pub fn model(&self) -> PotModel {
        PotModel {
            threshold: self.threshold,
            rate: self.rate,
            tail: self.tail,
        }
    }
}

impl From<PotModel> for FitEntry {
    fn from(m: PotModel) -> Self {
        Self {
            threshold: m.threshold,
            rate: m.rate,
            tail: m.tail,
            standard_errors: None,
            observations: None,
        }
    }
}

/// Fits document: POT parameters by label plus an optional scale model.
///
/// Labels that name a donor category feed the simulator; any other label
/// (such as `all`) is kept for reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitsFile {
    pub schema_version: u32,
    pub categories: BTreeMap<String, FitEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale_model: Option<ScaleModel>,
}

impl Default for FitsFile {
    fn default() -> Self {
        Self {
            schema_version: FITS_SCHEMA_VERSION,
            categories: BTreeMap::new(),
            scale_model: None,
        }
    }
}

impl FitsFile {
    /// Reference category fits plus the pooled `all` row, with standard
    /// errors and the fitted scale model.
    pub fn reference() -> Self {
        let errors = |label: &str| match label {
            "all" => (5.382, 0.016),
            "grocer" => (6.130, 0.016),
            "manufacturer" => (42.979, 0.051),
            "individual" => (18.374, 0.126),
            _ => (188.314, 0.200),
        };
        let mut categories: BTreeMap<String, FitEntry> = CategoryFits::reference()
            .0
            .into_iter()
            .map(|(c, m)| (c.to_string(), m.into()))
            .collect();
        categories.insert("all".into(), CategoryFits::pooled_reference().into());
        for (label, entry) in categories.iter_mut() {
            entry.standard_errors = Some(errors(label));
        }
        Self {
            schema_version: FITS_SCHEMA_VERSION,
            categories,
            scale_model: Some(ScaleModel::FITTED),
        }
    }

    pub fn from_json(text: &str, path: &str) -> Result<Self, Error> {
        let f: FitsFile = serde_json::from_str(text).map_err(|e| IoError::Parse {
            path: path.to_string(),
            line: e.line() as u64,
            message: e.to_string(),
        })?;
        if f.schema_version != FITS_SCHEMA_VERSION {
            return Err(format_err(path, format!("unsupported schema_version {}", f.schema_version)).into());
        }
        for (label, entry) in &f.categories {
            entry
                .model()
                .validate()
                .map_err(|e| format_err(path, format!("category `{label}`: {e}")))?;
        }
        Ok(f)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("fits serialize");
        s.push('\n');
        s
    }

    pub fn category_fits(&self) -> CategoryFits {
        CategoryFits(
            self.categories
                .iter()
                .filter_map(|(label, e)| label.parse::<DonorCategory>().ok().map(|c| (c, e.model())))
                .collect(),
        )
    }

    pub fn scale_model_or_default(&self) -> ScaleModel {
        self.scale_model.unwrap_or_default()
    }
}

pub fn read_file(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}
