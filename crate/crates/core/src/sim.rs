//! Multi-day Monte Carlo simulation and parameter sweeps.
//!
//! One simulated day:
//!
//! 1. every participating donor draws new supply and keeps `epsilon` of what
//!    was left the day before;
//! 2. donor supply is summed per cluster;
//! 3. the warehouse stock decays and covers what it can of the day's demand;
//! 4. the cheapest set of clusters covering `net_demand * (1 + overage)` is
//!    chosen (all clusters when even that cannot cover it);
//! 5. selected clusters are emptied and anything recovered beyond net demand
//!    goes into the warehouse.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::demand::{begin_day, end_day, DemandSpec, Warehouse};
use crate::error::{Error, GeoError, SimError};
use crate::evt::PotModel;
use crate::geo::{self, ClusterMethod, DistanceMatrix, LatLon};
use crate::rng::Substreams;
use crate::solver::{solve_with_budget, PickupProblem, DEFAULT_NODE_BUDGET};
use crate::supply::{donor_pot_model, retain_unpicked, validate_donors, CategoryFits, Donor, ScaleModel, SupplyState};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Relative tolerance of the per-day conservation checks.
pub const CONSERVATION_TOLERANCE: f64 = 1e-9;

fn default_schema() -> u32 {
    CONFIG_SCHEMA_VERSION
}
fn default_days() -> u32 {
    365
}
fn default_epsilon() -> f64 {
    0.5
}
fn default_demand() -> DemandSpec {
    DemandSpec::Constant(10_260.0)
}
fn default_true() -> bool {
    true
}
fn default_budget() -> u64 {
    DEFAULT_NODE_BUDGET
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default = "default_days")]
    pub days: u32,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_demand")]
    pub demand: DemandSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_true")]
    pub warehouse_enabled: bool,
    /// Extra fraction of net demand to pick up each day.
    #[serde(default)]
    pub overage_factor: f64,
    /// Donors farther than this from the warehouse do not participate.
    #[serde(default)]
    pub max_donor_distance_km: Option<f64>,
    #[serde(default)]
    pub cluster_count: Option<usize>,
    #[serde(default)]
    pub cluster_method: ClusterMethod,
    /// Random fraction of donors that participate.
    #[serde(default)]
    pub donor_fraction: Option<f64>,
    #[serde(default = "default_budget")]
    pub node_budget: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            days: default_days(),
            epsilon: default_epsilon(),
            demand: default_demand(),
            seed: 0,
            warehouse_enabled: true,
            overage_factor: 0.0,
            max_donor_distance_km: None,
            cluster_count: None,
            cluster_method: ClusterMethod::KMedoids,
            donor_fraction: None,
            node_budget: DEFAULT_NODE_BUDGET,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.days == 0 {
            return bad("days must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return bad(format!("epsilon {} outside [0, 1]", self.epsilon));
        }
        if let Err(e) = self.demand.validate() {
            return bad(e.to_string());
        }
        if !(self.overage_factor.is_finite() && self.overage_factor >= 0.0) {
            return bad(format!("overage_factor {} must be >= 0", self.overage_factor));
        }
        if let Some(d) = self.max_donor_distance_km {
            if !(d.is_finite() && d >= 0.0) {
                return bad(format!("max_donor_distance_km {d} must be >= 0"));
            }
        }
        if self.cluster_count == Some(0) {
            return bad("cluster_count must be >= 1".into());
        }
        if let Some(f) = self.donor_fraction {
            if !(f > 0.0 && f <= 1.0) {
                return bad(format!("donor_fraction {f} outside (0, 1]"));
            }
        }
        if self.node_budget == 0 {
            return bad("node_budget must be >= 1".into());
        }
        Ok(())
    }
}

/// Shared, read-only inputs of a simulation.
#[derive(Debug, Clone, Copy)]
pub struct Scenario<'a> {
    pub donors: &'a [Donor],
    pub matrix: &'a DistanceMatrix,
    pub fits: &'a CategoryFits,
    pub scale_model: &'a ScaleModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub day: u32,
    pub total_demand: f64,
    pub net_demand: f64,
    pub recovered: f64,
    pub cost: f64,
    /// `recovered - net_demand`.
    pub excess: f64,
    pub warehouse_stock: f64,
    pub underrun: bool,
    pub optimality_proven: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub days: u32,
    pub mean_cost: f64,
    pub mean_excess: f64,
    pub mean_recovered: f64,
    pub underrun_days: u32,
    pub total_recovered: f64,
    pub unproven_optimal_days: u32,
}

impl SimSummary {
    pub fn from_records(records: &[DayRecord]) -> Self {
        let n = records.len().max(1) as f64;
        let total_recovered: f64 = records.iter().map(|r| r.recovered).sum();
        Self {
            days: records.len() as u32,
            mean_cost: records.iter().map(|r| r.cost).sum::<f64>() / n,
            mean_excess: records.iter().map(|r| r.excess).sum::<f64>() / n,
            mean_recovered: total_recovered / n,
            underrun_days: records.iter().filter(|r| r.underrun).count() as u32,
            total_recovered,
            unproven_optimal_days: records.iter().filter(|r| !r.optimality_proven).count() as u32,
        }
    }
}

/// Tally of the per-day bookkeeping checks.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub checks: u64,
    pub failures: u64,
    pub first_failure: Option<String>,
}

impl ConservationReport {
    fn check(&mut self, ok: bool, day: u32, what: &str) {
        self.checks += 1;
        if !ok {
            self.failures += 1;
            if self.first_failure.is_none() {
                self.first_failure = Some(format!("day {day}: {what}"));
            }
        }
    }

    pub fn merge(&mut self, other: &ConservationReport) {
        self.checks += other.checks;
        self.failures += other.failures;
        if self.first_failure.is_none() {
            self.first_failure.clone_from(&other.first_failure);
        }
    }

    pub fn is_clean(&self) -> bool {
        self.checks > 0 && self.failures == 0
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= CONSERVATION_TOLERANCE * (1.0 + a.abs().max(b.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterInfo {
    pub member_ids: Vec<String>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutcome {
    pub records: Vec<DayRecord>,
    pub summary: SimSummary,
    pub conservation: ConservationReport,
    pub clusters: Vec<ClusterInfo>,
    /// Cost of visiting every cluster in one day.
    pub all_clusters_cost: f64,
    /// Ids of the donors that took part, in input order.
    pub participants: Vec<String>,
}

struct Prepared {
    /// Position of each participant in the input donor list; doubles as its
    /// random substream slot.
    slots: Vec<u64>,
    models: Vec<PotModel>,
    /// Participant positions (into `slots`) per cluster.
    clusters: Vec<Vec<usize>>,
    costs: Vec<f64>,
    infos: Vec<ClusterInfo>,
}

/// Donors that survive the distance filter and participation draw, as
/// positions in `scenario.donors`.
pub fn participants(cfg: &SimConfig, scenario: &Scenario<'_>) -> Result<Vec<usize>, Error> {
    let matrix = scenario.matrix;
    let mut kept = Vec::with_capacity(scenario.donors.len());
    for (i, d) in scenario.donors.iter().enumerate() {
        let node = matrix.require(&d.id)?;
        if let Some(limit) = cfg.max_donor_distance_km {
            if matrix.to_warehouse(node) > limit {
                continue;
            }
        }
        kept.push(i);
    }
    if let Some(f) = cfg.donor_fraction {
        // One shuffle per seed, so a larger fraction always contains a
        // smaller one.
        let mut order = kept.clone();
        order.shuffle(&mut Substreams::new(cfg.seed).participation());
        let take = ((f * kept.len() as f64).ceil() as usize).clamp(1, kept.len().max(1));
        order.truncate(take);
        order.sort_unstable();
        kept = order;
    }
    if kept.is_empty() {
        return Err(SimError::NoDonors.into());
    }
    Ok(kept)
}

struct Plan {
    chosen: Vec<usize>,
    /// Participant positions (into `chosen`) per cluster.
    clusters: Vec<Vec<usize>>,
    costs: Vec<f64>,
    infos: Vec<ClusterInfo>,
}

fn plan(cfg: &SimConfig, scenario: &Scenario<'_>) -> Result<Plan, Error> {
    cfg.validate()?;
    validate_donors(scenario.donors)?;
    let chosen = participants(cfg, scenario)?;
    let matrix = scenario.matrix;
    let donors: Vec<&Donor> = chosen.iter().map(|&i| &scenario.donors[i]).collect();
    let nodes: Vec<usize> = donors
        .iter()
        .map(|d| matrix.require(&d.id))
        .collect::<Result<_, _>>()?;

    let n = donors.len();
    let k = cfg.cluster_count.unwrap_or_else(|| geo::default_cluster_count(n));
    if k > n {
        return Err(GeoError::ClusterCount { k, n }.into());
    }
    let mut rng = Substreams::new(cfg.seed).clustering();
    let assignment = match cfg.cluster_method {
        ClusterMethod::KMedoids => geo::kmedoids(matrix, &nodes, k, &mut rng)?.assignment,
        ClusterMethod::KMeans => {
            let points = donors
                .iter()
                .map(|d| match (d.latitude, d.longitude) {
                    (Some(lat), Some(lon)) => LatLon::new(lat, lon),
                    _ => Err(GeoError::MissingCoordinates(d.id.clone())),
                })
                .collect::<Result<Vec<_>, _>>()?;
            geo::kmeans_coordinates(&points, k, &mut rng)?
        }
    };
    let positions: Vec<usize> = (0..n).collect();
    let clusters = geo::group(&positions, &assignment, k);
    let mut costs = Vec::with_capacity(k);
    let mut infos = Vec::with_capacity(k);
    for members in &clusters {
        let idx: Vec<usize> = members.iter().map(|&p| nodes[p]).collect();
        let cost = geo::cluster_cost_of(&idx, matrix)?;
        costs.push(cost);
        infos.push(ClusterInfo {
            member_ids: members.iter().map(|&p| donors[p].id.clone()).collect(),
            cost,
        });
    }
    Ok(Plan {
        chosen,
        clusters,
        costs,
        infos,
    })
}

/// Clusters a simulation with `cfg` would use, without simulating.
pub fn plan_clusters(cfg: &SimConfig, scenario: &Scenario<'_>) -> Result<Vec<ClusterInfo>, Error> {
    Ok(plan(cfg, scenario)?.infos)
}

fn prepare(cfg: &SimConfig, scenario: &Scenario<'_>) -> Result<Prepared, Error> {
    let plan = plan(cfg, scenario)?;
    let models = plan
        .chosen
        .iter()
        .map(|&i| donor_pot_model(&scenario.donors[i], scenario.fits, scenario.scale_model))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Prepared {
        slots: plan.chosen.iter().map(|&i| i as u64).collect(),
        models,
        clusters: plan.clusters,
        costs: plan.costs,
        infos: plan.infos,
    })
}

/// Run one simulation. Deterministic in `(cfg, scenario)`.
pub fn run_simulation(cfg: &SimConfig, scenario: &Scenario<'_>) -> Result<SimOutcome, Error> {
    let prep = prepare(cfg, scenario)?;
    let streams = Substreams::new(cfg.seed);
    let n = prep.models.len();
    let eps = cfg.epsilon;

    let mut state = SupplyState::new(n);
    let mut warehouse = Warehouse::new(cfg.warehouse_enabled);
    let mut records = Vec::with_capacity(cfg.days as usize);
    let mut report = ConservationReport::default();
    let mut donor_selected = vec![false; n];
    let mut cluster_supply = vec![0.0; prep.clusters.len()];

    for day in 0..cfg.days {
        let t = u64::from(day);
        state.advance(&prep.models, eps, |i, m| m.sample(&mut streams.supply(t, prep.slots[i])))?;
        for (c, members) in prep.clusters.iter().enumerate() {
            cluster_supply[c] = members.iter().map(|&i| state.fresh[i]).sum();
        }
        let available: f64 = cluster_supply.iter().sum();

        let total_demand = cfg.demand.sample(&mut streams.demand(t));
        let stock_before = warehouse.stock;
        let morning = begin_day(warehouse, eps, total_demand)?;
        let target = morning.net_demand * (1.0 + cfg.overage_factor);

        let problem = PickupProblem::new(prep.costs.clone(), cluster_supply.clone(), target)?;
        let schedule = solve_with_budget(&problem, cfg.node_budget);
        let recovered = schedule.total_supply;

        donor_selected.iter_mut().for_each(|s| *s = false);
        for (c, members) in prep.clusters.iter().enumerate() {
            if schedule.selected[c] {
                for &i in members {
                    donor_selected[i] = true;
                }
            }
        }
        state.leftover = retain_unpicked(&state.fresh, &donor_selected)?;
        warehouse = end_day(morning.warehouse, recovered, morning.net_demand);

        let excess = recovered - morning.net_demand;
        let record = DayRecord {
            day,
            total_demand,
            net_demand: morning.net_demand,
            recovered,
            cost: schedule.total_cost,
            excess,
            warehouse_stock: warehouse.stock,
            underrun: excess < 0.0,
            optimality_proven: schedule.optimal,
        };

        report.check(morning.warehouse.stock >= 0.0 && warehouse.stock >= 0.0, day, "negative warehouse stock");
        report.check(recovered <= available * (1.0 + CONSERVATION_TOLERANCE), day, "recovered more than available");
        report.check(record.underrun == (record.excess < 0.0), day, "underrun flag");
        report.check(
            close(morning.carry_consumed + morning.net_demand, total_demand),
            day,
            "carry plus net demand differs from demand",
        );
        let satisfied = morning.carry_consumed + recovered.min(morning.net_demand);
        report.check(satisfied <= total_demand * (1.0 + CONSERVATION_TOLERANCE) + CONSERVATION_TOLERANCE, day, "over-satisfied demand");
        if cfg.warehouse_enabled {
            let expected = eps * stock_before - morning.carry_consumed + excess.max(0.0);
            report.check(close(warehouse.stock, expected), day, "warehouse stock chain");
        } else {
            report.check(morning.net_demand == total_demand && warehouse.stock == 0.0, day, "disabled warehouse");
        }
        records.push(record);
    }

    let summary = SimSummary::from_records(&records);
    let all_clusters_cost = prep.costs.iter().sum();
    Ok(SimOutcome {
        records,
        summary,
        conservation: report,
        clusters: prep.infos,
        all_clusters_cost,
        participants: prep.slots.iter().map(|&i| scenario.donors[i as usize].id.clone()).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    /// Values of the swept parameters, in the order of `Sweep::param_names`.
    pub params: Vec<f64>,
    pub summary: SimSummary,
    pub conservation: ConservationReport,
    pub all_clusters_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param_names: Vec<&'static str>,
    pub rows: Vec<SweepRow>,
}

impl Sweep {
    pub fn conservation(&self) -> ConservationReport {
        let mut r = ConservationReport::default();
        for row in &self.rows {
            r.merge(&row.conservation);
        }
        r
    }
}

fn run_cells(
    scenario: &Scenario<'_>,
    param_names: Vec<&'static str>,
    cells: Vec<(Vec<f64>, SimConfig)>,
) -> Result<Sweep, Error> {
    if cells.is_empty() {
        return Err(SimError::EmptyGrid.into());
    }
    for (_, cfg) in &cells {
        cfg.validate()?;
    }
    let rows = cells
        .into_par_iter()
        .map(|(params, cfg)| {
            run_simulation(&cfg, scenario).map(|o| SweepRow {
                params,
                summary: o.summary,
                conservation: o.conservation,
                all_clusters_cost: o.all_clusters_cost,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sweep { param_names, rows })
}

/// One simulation per `epsilon`, all sharing `cfg.seed`.
pub fn sweep_epsilon(cfg: &SimConfig, scenario: &Scenario<'_>, grid: &[f64]) -> Result<Sweep, Error> {
    let cells = grid
        .iter()
        .map(|&e| (vec![e], SimConfig { epsilon: e, ..cfg.clone() }))
        .collect();
    run_cells(scenario, vec!["epsilon"], cells)
}

/// One simulation per constant daily demand.
pub fn sweep_demand(cfg: &SimConfig, scenario: &Scenario<'_>, demand_grid: &[f64]) -> Result<Sweep, Error> {
    let cells = demand_grid
        .iter()
        .map(|&d| {
            (
                vec![d],
                SimConfig {
                    demand: DemandSpec::Constant(d),
                    ..cfg.clone()
                },
            )
        })
        .collect();
    run_cells(scenario, vec!["demand"], cells)
}

/// One simulation per `(fraction, demand)` cell over nested random donor
/// subsets. An explicit `cluster_count` is scaled with the fraction.
pub fn sweep_participation(
    cfg: &SimConfig,
    scenario: &Scenario<'_>,
    fractions: &[f64],
    demand_grid: &[f64],
) -> Result<Sweep, Error> {
    if fractions.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(SimError::Config("participation fractions must be strictly ascending".into()).into());
    }
    let mut cells = Vec::with_capacity(fractions.len() * demand_grid.len());
    for &f in fractions {
        for &d in demand_grid {
            cells.push((
                vec![f, d],
                SimConfig {
                    donor_fraction: Some(f),
                    demand: DemandSpec::Constant(d),
                    cluster_count: cfg.cluster_count.map(|k| ((k as f64 * f).ceil() as usize).max(1)),
                    ..cfg.clone()
                },
            ));
        }
    }
    run_cells(scenario, vec!["fraction", "demand"], cells)
}
