use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use foodrescue::error::{IoError, SimError};
use foodrescue::evt::{fit_pot, qq_pairs, standard_errors};
use foodrescue::geo::{ClusterMethod, CachedRoutes, DistanceMatrix, HaversineRoutes, LatLon, RouteProvider, WarehouseLegs};
use foodrescue::io::{self, FitEntry, FitsFile};
use foodrescue::sim::{self, ConservationReport, Scenario, SimOutcome, Sweep};
use foodrescue::supply::{fit_scale_model, CategoryFits, Donor, DonorCategory, ScaleModel};
use foodrescue::synthetic::{self, Profile};

use crate::config::{NetworkConfig, RunConfig};
use crate::error::CliError;
use crate::manifest::{ManifestBuilder, MANIFEST_FILE};
use crate::values::{read_values, DATE_FORMAT};
use crate::{ensure_dir, ClusterArgs, FitArgs, GenArgs, Inputs, Method, SweepArgs, SweepKind};

pub const DAILY_FILE: &str = "daily.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CLUSTERS_FILE: &str = "clusters.csv";
pub const FITS_FILE: &str = "fits.json";
pub const DONORS_FILE: &str = "donors.csv";
pub const DISTANCES_FILE: &str = "distances.csv";
pub const VALUES_FILE: &str = "daily_values.csv";

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|source| {
            IoError::File {
                path: path.display().to_string(),
                source,
            }
        })
        .map_err(CliError::from)
}

fn write_with<F>(dir: &Path, name: &str, outputs: &mut Vec<String>, f: F) -> Result<(), CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), String>,
{
    let path = dir.join(name);
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::output(&path, e))?;
    std::fs::write(&path, buf).map_err(|e| CliError::output(&path, e))?;
    outputs.push(name.to_string());
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, outputs: &mut Vec<String>) -> Result<(), CliError> {
    write_with(dir, name, outputs, |buf| {
        serde_json::to_writer_pretty(&mut *buf, value).map_err(|e| e.to_string())?;
        buf.push(b'\n');
        Ok(())
    })
}

fn note(quiet: bool, msg: impl AsRef<str>) {
    if !quiet {
        eprintln!("{}", msg.as_ref());
    }
}

fn load_config(path: Option<&PathBuf>, m: &mut ManifestBuilder) -> Result<RunConfig, CliError> {
    match path {
        Some(p) => {
            let bytes = read_bytes(p)?;
            m.input("config", p, &bytes);
            let text = String::from_utf8_lossy(&bytes);
            RunConfig::from_json(&text, &p.display().to_string())
        }
        None => Ok(RunConfig::default()),
    }
}

fn load_donors(path: &Path, m: &mut ManifestBuilder) -> Result<Vec<Donor>, CliError> {
    let bytes = read_bytes(path)?;
    m.input("donors", path, &bytes);
    Ok(io::read_donors(bytes.as_slice(), &path.display().to_string())?)
}

fn load_fits(path: Option<&PathBuf>, m: &mut ManifestBuilder) -> Result<FitsFile, CliError> {
    match path {
        Some(p) => {
            let bytes = read_bytes(p)?;
            m.input("fits", p, &bytes);
            Ok(FitsFile::from_json(&String::from_utf8_lossy(&bytes), &p.display().to_string())?)
        }
        None => Ok(FitsFile::reference()),
    }
}

/// Distance file first, then donors' own warehouse legs, then (if enabled)
/// haversine from coordinates.
fn load_matrix(
    donors: &[Donor],
    distances: Option<&PathBuf>,
    network: &NetworkConfig,
    m: &mut ManifestBuilder,
) -> Result<DistanceMatrix, CliError> {
    let file = match distances {
        Some(p) => {
            let bytes = read_bytes(p)?;
            m.input("distances", p, &bytes);
            Some((p, bytes))
        }
        None => None,
    };
    let routes = match &file {
        Some((p, bytes)) => io::read_routes(bytes.as_slice(), &p.display().to_string())?,
        None => CachedRoutes::new(),
    };
    let legs = WarehouseLegs::new(network.warehouse_id.clone(), donors);
    let mut providers: Vec<&dyn RouteProvider> = vec![&routes, &legs];
    let haversine;
    if network.distance_fallback {
        let mut h = HaversineRoutes::new(network.circuity)?.with_donors(donors)?;
        if let Some(LatLon { lat, lon }) = network.warehouse_location {
            h = h.with_node(network.warehouse_id.clone(), LatLon::new(lat, lon)?);
        }
        haversine = h;
        providers.push(&haversine);
    }
    let mut ids = Vec::with_capacity(donors.len() + 1);
    ids.push(network.warehouse_id.clone());
    for d in donors {
        if d.id == network.warehouse_id {
            return Err(CliError::Validation(format!("donor id `{}` clashes with the warehouse id", d.id)));
        }
        ids.push(d.id.clone());
    }
    // Pairs in the file that name unknown nodes are a referential error.
    if let Some((p, bytes)) = &file {
        let known: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        let mut rdr = csv::Reader::from_reader(bytes.as_slice());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| CliError::output(p, e))?;
            for id in rec.iter().take(2) {
                if !known.contains(id.trim()) {
                    return Err(IoError::Parse {
                        path: p.display().to_string(),
                        line: i as u64 + 2,
                        message: format!("unknown id `{}`", id.trim()),
                    }
                    .into());
                }
            }
        }
    }
    Ok(DistanceMatrix::from_providers(ids, &network.warehouse_id, &providers)?)
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    days: u32,
    mean_cost_km: f64,
    mean_excess_lbs: f64,
    mean_recovered_lbs: f64,
    underrun_days: u32,
    total_recovered_lbs: f64,
    unproven_optimal_days: u32,
    all_clusters_cost_km: f64,
    participating_donors: usize,
    clusters: usize,
    conservation: &'a ConservationReport,
    config: &'a RunConfig,
}

fn check_conservation(report: &ConservationReport) -> Result<(), CliError> {
    if report.is_clean() {
        Ok(())
    } else {
        Err(CliError::Internal {
            module: "sim",
            message: format!(
                "{} of {} conservation checks failed (first: {})",
                report.failures,
                report.checks,
                report.first_failure.as_deref().unwrap_or("none")
            ),
        })
    }
}

struct Loaded {
    cfg: RunConfig,
    donors: Vec<Donor>,
    matrix: DistanceMatrix,
    fits: CategoryFits,
    scale_model: ScaleModel,
}

fn load_inputs(inputs: &Inputs, m: &mut ManifestBuilder) -> Result<Loaded, CliError> {
    let mut cfg = load_config(inputs.config.as_ref(), m)?;
    if let Some(seed) = inputs.seed {
        cfg.simulation.seed = seed;
    }
    // Validate before touching data.
    cfg.validate()?;
    let donors = load_donors(&inputs.donors, m)?;
    let fits_file = load_fits(inputs.fits.as_ref(), m)?;
    let matrix = load_matrix(&donors, inputs.distances.as_ref(), &cfg.network, m)?;
    Ok(Loaded {
        cfg,
        donors,
        matrix,
        fits: fits_file.category_fits(),
        scale_model: fits_file.scale_model_or_default(),
    })
}

pub fn simulate(inputs: &Inputs, quiet: bool) -> Result<(), CliError> {
    let mut m = ManifestBuilder::new("simulate");
    let l = load_inputs(inputs, &mut m)?;
    let scenario = Scenario {
        donors: &l.donors,
        matrix: &l.matrix,
        fits: &l.fits,
        scale_model: &l.scale_model,
    };
    let outcome: SimOutcome = sim::run_simulation(&l.cfg.simulation, &scenario)?;
    ensure_dir(&inputs.out_dir)?;
    let dir = &inputs.out_dir;
    let mut outputs = Vec::new();
    write_with(dir, DAILY_FILE, &mut outputs, |b| io::write_daily(b, &outcome.records).map_err(|e| e.to_string()))?;
    write_with(dir, CLUSTERS_FILE, &mut outputs, |b| {
        io::write_clusters(b, &outcome.clusters).map_err(|e| e.to_string())
    })?;
    let s = &outcome.summary;
    let summary = SummaryFile {
        days: s.days,
        mean_cost_km: s.mean_cost,
        mean_excess_lbs: s.mean_excess,
        mean_recovered_lbs: s.mean_recovered,
        underrun_days: s.underrun_days,
        total_recovered_lbs: s.total_recovered,
        unproven_optimal_days: s.unproven_optimal_days,
        all_clusters_cost_km: outcome.all_clusters_cost,
        participating_donors: outcome.participants.len(),
        clusters: outcome.clusters.len(),
        conservation: &outcome.conservation,
        config: &l.cfg,
    };
    write_json(dir, SUMMARY_FILE, &summary, &mut outputs)?;
    outputs.push(MANIFEST_FILE.into());
    m.finish(Some(l.cfg.simulation.seed), serde_json::to_value(&l.cfg).unwrap_or_default(), outputs)
        .write(dir)?;
    note(
        quiet,
        format!(
            "{} days: mean cost {:.2} km, mean excess {:.2} lbs, {} underrun days",
            s.days, s.mean_cost, s.mean_excess, s.underrun_days
        ),
    );
    check_conservation(&outcome.conservation)
}

pub fn sweep(a: &SweepArgs, quiet: bool) -> Result<(), CliError> {
    let mut m = ManifestBuilder::new(&format!("sweep {}", kind_name(a.kind)));
    let l = load_inputs(&a.inputs, &mut m)?;
    let pick = |cli: &Vec<f64>, cfg: &Vec<f64>| if cli.is_empty() { cfg.clone() } else { cli.clone() };
    let scenario = Scenario {
        donors: &l.donors,
        matrix: &l.matrix,
        fits: &l.fits,
        scale_model: &l.scale_model,
    };
    let sim_cfg = &l.cfg.simulation;
    let grids = &l.cfg.sweep;
    let sweep: Sweep = match a.kind {
        SweepKind::Epsilon => sim::sweep_epsilon(sim_cfg, &scenario, &pick(&a.grid, &grids.epsilon))?,
        SweepKind::Demand => sim::sweep_demand(sim_cfg, &scenario, &pick(&a.grid, &grids.demand))?,
        SweepKind::Participation => {
            let fractions = pick(&a.grid, &grids.fractions);
            let demands = pick(&a.demand_grid, &grids.demand);
            if fractions.is_empty() || demands.is_empty() {
                return Err(SimError::EmptyGrid.into());
            }
            sim::sweep_participation(sim_cfg, &scenario, &fractions, &demands)?
        }
    };
    ensure_dir(&a.inputs.out_dir)?;
    let dir = &a.inputs.out_dir;
    let mut outputs = Vec::new();
    let name = format!("sweep_{}.csv", kind_name(a.kind));
    write_with(dir, &name, &mut outputs, |b| io::write_sweep(b, &sweep).map_err(|e| e.to_string()))?;
    outputs.push(MANIFEST_FILE.into());
    m.finish(Some(sim_cfg.seed), serde_json::to_value(&l.cfg).unwrap_or_default(), outputs)
        .write(dir)?;
    note(quiet, format!("{} cells written to {}", sweep.rows.len(), dir.join(&name).display()));
    check_conservation(&sweep.conservation())
}

fn kind_name(k: SweepKind) -> &'static str {
    match k {
        SweepKind::Epsilon => "epsilon",
        SweepKind::Demand => "demand",
        SweepKind::Participation => "participation",
    }
}

pub fn cluster(a: &ClusterArgs, quiet: bool) -> Result<(), CliError> {
    let mut m = ManifestBuilder::new("cluster");
    let mut cfg = load_config(a.config.as_ref(), &mut m)?;
    if let Some(seed) = a.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(k) = a.k {
        cfg.simulation.cluster_count = Some(k);
    }
    if let Some(method) = a.method {
        cfg.simulation.cluster_method = match method {
            Method::KMedoids => ClusterMethod::KMedoids,
            Method::KMeans => ClusterMethod::KMeans,
        };
    }
    cfg.validate()?;
    let donors = load_donors(&a.donors, &mut m)?;
    let matrix = load_matrix(&donors, a.distances.as_ref(), &cfg.network, &mut m)?;
    let fits = CategoryFits::reference();
    let scale_model = ScaleModel::default();
    let scenario = Scenario {
        donors: &donors,
        matrix: &matrix,
        fits: &fits,
        scale_model: &scale_model,
    };
    let clusters = sim::plan_clusters(&cfg.simulation, &scenario)?;
    ensure_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    write_with(&a.out_dir, CLUSTERS_FILE, &mut outputs, |b| {
        io::write_clusters(b, &clusters).map_err(|e| e.to_string())
    })?;
    outputs.push(MANIFEST_FILE.into());
    m.finish(Some(cfg.simulation.seed), serde_json::to_value(&cfg).unwrap_or_default(), outputs)
        .write(&a.out_dir)?;
    let total: f64 = clusters.iter().map(|c| c.cost).sum();
    note(quiet, format!("{} clusters, visiting all costs {total:.2} km", clusters.len()));
    Ok(())
}

#[derive(Debug, Serialize)]
struct FitEcho<'a> {
    threshold: f64,
    category: Option<&'a str>,
    days: usize,
    first_date: String,
}

pub fn fit(a: &FitArgs, quiet: bool) -> Result<(), CliError> {
    let mut m = ManifestBuilder::new("fit");
    if !(a.threshold.is_finite() && a.threshold >= 0.0) {
        return Err(CliError::Validation(format!("threshold {} must be >= 0", a.threshold)));
    }
    if let Some(c) = &a.category {
        if c != "all" && c.parse::<DonorCategory>().is_err() {
            return Err(CliError::Validation(format!("unknown category label `{c}`")));
        }
    }
    let bytes = read_bytes(&a.values)?;
    m.input("values", &a.values, &bytes);
    let values = read_values(bytes.as_slice(), &a.values.display().to_string())?;
    let donors = match &a.donors {
        Some(p) => Some(load_donors(p, &mut m)?),
        None => None,
    };

    // label -> donor ids
    let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
    let all: Vec<&str> = values.series.keys().map(String::as_str).collect();
    match &donors {
        Some(donors) => {
            let by_id: BTreeMap<&str, &Donor> = donors.iter().map(|d| (d.id.as_str(), d)).collect();
            for id in &all {
                let d = by_id.get(id).ok_or_else(|| IoError::Format {
                    path: a.values.display().to_string(),
                    message: format!("donor `{id}` is not in the donor set"),
                })?;
                groups.entry(d.category.to_string()).or_default().push(id);
            }
            groups.insert("all".into(), all.clone());
        }
        None => {
            groups.insert(a.category.clone().unwrap_or_else(|| "all".into()), all.clone());
        }
    }
    if let Some(c) = &a.category {
        groups.retain(|label, _| label == c);
        if groups.is_empty() {
            return Err(IoError::Format {
                path: a.values.display().to_string(),
                message: format!("no records for category `{c}`"),
            }
            .into());
        }
    }

    let mut doc = FitsFile::default();
    ensure_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    for (label, ids) in &groups {
        let series: Vec<f64> = ids.iter().flat_map(|id| values.series[*id].iter().copied()).collect();
        let model = fit_pot(&series, a.threshold)?;
        let mut entry = FitEntry::from(model);
        entry.observations = Some(series.len());
        if let Some(tail) = model.tail {
            let excesses: Vec<f64> = series
                .iter()
                .filter(|&&v| v > a.threshold)
                .map(|&v| v - a.threshold)
                .collect();
            entry.standard_errors = standard_errors(&tail, &excesses);
            let pairs = qq_pairs(&tail, &excesses);
            write_with(&a.out_dir, &format!("qq_{label}.csv"), &mut outputs, |b| {
                io::write_qq(b, &pairs).map_err(|e| e.to_string())
            })?;
        }
        note(
            quiet,
            match model.tail {
                Some(t) => format!("{label}: rate {:.4}, scale {:.3}, shape {:.4}", model.rate, t.scale, t.shape),
                None => format!("{label}: rate {:.4}, no tail", model.rate),
            },
        );
        doc.categories.insert(label.clone(), entry);
    }
    if let Some(donors) = &donors {
        doc.scale_model = fit_donor_scale(donors, &values.series, a.threshold);
        if doc.scale_model.is_none() {
            note(quiet, "too few donors with square footage for a scale fit");
        }
    }
    let text = doc.to_json();
    write_with(&a.out_dir, FITS_FILE, &mut outputs, |b| {
        b.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    outputs.push(MANIFEST_FILE.into());
    let echo = FitEcho {
        threshold: a.threshold,
        category: a.category.as_deref(),
        days: values.days,
        first_date: values.first.format(DATE_FORMAT).to_string(),
    };
    m.finish(None, serde_json::to_value(&echo).unwrap_or_default(), outputs)
        .write(&a.out_dir)?;
    Ok(())
}

/// Log-log fit of each donor's tail mean against its square footage, over
/// donors whose own series can be fitted.
fn fit_donor_scale(donors: &[Donor], series: &BTreeMap<String, Vec<f64>>, threshold: f64) -> Option<ScaleModel> {
    let points: Vec<(f64, f64)> = donors
        .iter()
        .filter_map(|d| {
            let sqft = d.square_footage?;
            let model = fit_pot(series.get(&d.id)?, threshold).ok()?;
            let mean = model.tail?.mean().ok()?;
            Some((sqft, mean))
        })
        .collect();
    fit_scale_model(&points).ok()
}

#[derive(Debug, Serialize)]
struct GenEcho<'a> {
    profile: &'a Profile,
    circuity: f64,
    value_days: Option<u32>,
}

pub fn gen_synthetic(a: &GenArgs, quiet: bool) -> Result<(), CliError> {
    let mut m = ManifestBuilder::new("gen-synthetic");
    let profile = match Profile::preset(&a.profile) {
        Some(p) => p,
        None => {
            let path = PathBuf::from(&a.profile);
            let bytes = read_bytes(&path)?;
            m.input("profile", &path, &bytes);
            serde_json::from_slice(&bytes)
                .map_err(|e| CliError::Validation(format!("{}: line {}: {e}", a.profile, e.line())))?
        }
    };
    if profile.is_empty() {
        return Err(CliError::Validation("profile has zero donors".into()));
    }
    if let Some(c) = profile.categories.iter().find(|c| {
        !(0.0..=1.0).contains(&c.far_fraction)
            || !(0.0..=1.0).contains(&c.sqft_known)
            || !(c.radius_km.is_finite() && c.radius_km > 0.0)
            || c.sqft.is_some_and(|(lo, hi)| !(lo > 0.0 && hi >= lo && hi.is_finite()))
    }) {
        return Err(CliError::Validation(format!("invalid profile entry for `{}`", c.category)));
    }
    let warehouse = LatLon::new(profile.warehouse.lat, profile.warehouse.lon)?;
    let mut donors = synthetic::generate_donors(&profile, a.seed);
    let h = HaversineRoutes::new(a.circuity)?
        .with_donors(&donors)?
        .with_node(foodrescue::geo::DEFAULT_WAREHOUSE_ID, warehouse);
    let mut ids = vec![foodrescue::geo::DEFAULT_WAREHOUSE_ID.to_string()];
    ids.extend(donors.iter().map(|d| d.id.clone()));
    let matrix = DistanceMatrix::from_providers(ids, foodrescue::geo::DEFAULT_WAREHOUSE_ID, &[&h])?;
    for (i, d) in donors.iter_mut().enumerate() {
        d.distance_from_warehouse = Some(matrix.to_warehouse(i + 1));
    }
    ensure_dir(&a.out_dir)?;
    let mut outputs = Vec::new();
    write_with(&a.out_dir, DONORS_FILE, &mut outputs, |b| io::write_donors(b, &donors).map_err(|e| e.to_string()))?;
    write_with(&a.out_dir, DISTANCES_FILE, &mut outputs, |b| {
        io::write_distances(b, &matrix).map_err(|e| e.to_string())
    })?;
    if let Some(days) = a.value_days {
        let records = synthetic::generate_daily_values(
            &donors,
            &CategoryFits::reference(),
            &ScaleModel::FITTED,
            days,
            a.seed,
        )?;
        let start = chrono::NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date");
        write_with(&a.out_dir, VALUES_FILE, &mut outputs, |b| {
            let mut w = csv::Writer::from_writer(b);
            w.write_record(crate::values::VALUES_HEADER).map_err(|e| e.to_string())?;
            for (id, day, lbs) in records.iter().filter(|r| r.2 > 0.0) {
                let date = start + chrono::Days::new(u64::from(*day));
                w.write_record([id.as_str(), &date.format(DATE_FORMAT).to_string(), &lbs.to_string()])
                    .map_err(|e| e.to_string())?;
            }
            w.flush().map_err(|e| e.to_string())
        })?;
    }
    outputs.push(MANIFEST_FILE.into());
    let echo = GenEcho {
        profile: &profile,
        circuity: a.circuity,
        value_days: a.value_days,
    };
    m.finish(Some(a.seed), serde_json::to_value(&echo).unwrap_or_default(), outputs)
        .write(&a.out_dir)?;
    note(quiet, format!("{} donors written to {}", donors.len(), a.out_dir.display()));
    Ok(())
}
