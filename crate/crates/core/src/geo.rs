//! Distances, donor clustering and cluster visit costs.

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::GeoError;
use crate::supply::Donor;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Ratio of road distance to great-circle distance used when no driving
/// distance is available.
pub const DEFAULT_CIRCUITY: f64 = 1.3;

/// Default id of the warehouse node in distance files.
pub const DEFAULT_WAREHOUSE_ID: &str = "warehouse";

/// Tolerance on `km[i][j] == km[j][i]` after symmetrization.
pub const SYMMETRY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Result<Self, GeoError> {
        if !(lat.is_finite() && lon.is_finite() && (-90.0..=90.0).contains(&lat) && (-180.0..=180.0).contains(&lon)) {
            return Err(GeoError::CoordinateDomain { lat, lon });
        }
        Ok(Self { lat, lon })
    }
}

/// Great-circle distance scaled by `circuity`.
pub fn haversine_km(a: LatLon, b: LatLon, circuity: f64) -> Result<f64, GeoError> {
    let a = LatLon::new(a.lat, a.lon)?;
    let b = LatLon::new(b.lat, b.lon)?;
    if !(circuity.is_finite() && circuity >= 1.0) {
        return Err(GeoError::InvalidCircuity(circuity));
    }
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    let c = 2.0 * h.sqrt().min(1.0).asin();
    Ok(EARTH_RADIUS_KM * c * circuity)
}

/// Source of point-to-point driving distances.
pub trait RouteProvider {
    /// Distance from `from` to `to`, if this provider knows it.
    fn distance_km(&self, from: &str, to: &str) -> Option<f64>;
}

/// Distances read from a file of `(from, to, km)` rows.
#[derive(Debug, Clone, Default)]
pub struct CachedRoutes {
    routes: HashMap<(String, String), f64>,
}

impl CachedRoutes {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, from: impl Into<String>, to: impl Into<String>, km: f64) {
        self.routes.insert((from.into(), to.into()), km);
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }
}

impl RouteProvider for CachedRoutes {
    fn distance_km(&self, from: &str, to: &str) -> Option<f64> {
        self.routes.get(&(from.to_string(), to.to_string())).copied()
    }
}

/// Warehouse legs taken from each donor's own `distance_from_warehouse`.
#[derive(Debug, Clone)]
pub struct WarehouseLegs {
    warehouse_id: String,
    legs: HashMap<String, f64>,
}

impl WarehouseLegs {
    pub fn new(warehouse_id: impl Into<String>, donors: &[Donor]) -> Self {
        Self {
            warehouse_id: warehouse_id.into(),
            legs: donors
                .iter()
                .filter_map(|d| d.distance_from_warehouse.map(|km| (d.id.clone(), km)))
                .collect(),
        }
    }
}

impl RouteProvider for WarehouseLegs {
    fn distance_km(&self, from: &str, to: &str) -> Option<f64> {
        if from == self.warehouse_id {
            self.legs.get(to).copied()
        } else if to == self.warehouse_id {
            self.legs.get(from).copied()
        } else {
            None
        }
    }
}

/// Great-circle fallback for nodes with known coordinates.
#[derive(Debug, Clone)]
pub struct HaversineRoutes {
    coords: HashMap<String, LatLon>,
    circuity: f64,
}

impl HaversineRoutes {
    pub fn new(circuity: f64) -> Result<Self, GeoError> {
        if !(circuity.is_finite() && circuity >= 1.0) {
            return Err(GeoError::InvalidCircuity(circuity));
        }
        Ok(Self {
            coords: HashMap::new(),
            circuity,
        })
    }

    pub fn with_donors(mut self, donors: &[Donor]) -> Result<Self, GeoError> {
        for d in donors {
            if let (Some(lat), Some(lon)) = (d.latitude, d.longitude) {
                self.coords.insert(d.id.clone(), LatLon::new(lat, lon)?);
            }
        }
        Ok(self)
    }

    pub fn with_node(mut self, id: impl Into<String>, at: LatLon) -> Self {
        self.coords.insert(id.into(), at);
        self
    }
}

impl RouteProvider for HaversineRoutes {
    fn distance_km(&self, from: &str, to: &str) -> Option<f64> {
        let a = self.coords.get(from)?;
        let b = self.coords.get(to)?;
        haversine_km(*a, *b, self.circuity).ok()
    }
}

/// Symmetric pairwise driving distances over donors plus the warehouse.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    km: Vec<f64>,
    warehouse: usize,
}

impl DistanceMatrix {
    /// Build from an arbitrary distance function; `(i, j)` and `(j, i)` are
    /// averaged.
    pub fn from_fn<F>(ids: Vec<String>, warehouse_id: &str, mut f: F) -> Result<Self, GeoError>
    where
        F: FnMut(usize, usize) -> f64,
    {
        let n = ids.len();
        let warehouse = ids
            .iter()
            .position(|id| id == warehouse_id)
            .ok_or_else(|| GeoError::MissingWarehouse(warehouse_id.to_string()))?;
        let mut km = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (f(i, j), f(j, i));
                for (v, from, to) in [(a, i, j), (b, j, i)] {
                    if !(v.is_finite() && v >= 0.0) {
                        return Err(GeoError::InvalidDistance {
                            from: ids[from].clone(),
                            to: ids[to].clone(),
                            km: v,
                        });
                    }
                }
                let avg = 0.5 * (a + b);
                km[i * n + j] = avg;
                km[j * n + i] = avg;
            }
        }
        let index = ids.iter().cloned().enumerate().map(|(i, id)| (id, i)).collect();
        Ok(Self {
            ids,
            index,
            km,
            warehouse,
        })
    }

    /// Build by asking `providers` in order for every unordered pair.
    ///
    /// The first provider that knows either direction of a pair wins; when it
    /// knows both they are averaged, when it knows one that value is used for
    /// both. A pair no provider knows is an error.
    pub fn from_providers(
        ids: Vec<String>,
        warehouse_id: &str,
        providers: &[&dyn RouteProvider],
    ) -> Result<Self, GeoError> {
        let n = ids.len();
        let mut km = vec![f64::NAN; n * n];
        for i in 0..n {
            km[i * n + i] = 0.0;
            for j in (i + 1)..n {
                let found = providers.iter().find_map(|p| {
                    match (p.distance_km(&ids[i], &ids[j]), p.distance_km(&ids[j], &ids[i])) {
                        (Some(a), Some(b)) => Some((a, b)),
                        (Some(a), None) => Some((a, a)),
                        (None, Some(b)) => Some((b, b)),
                        (None, None) => None,
                    }
                });
                let (a, b) = found.ok_or_else(|| GeoError::MissingPair(ids[i].clone(), ids[j].clone()))?;
                km[i * n + j] = a;
                km[j * n + i] = b;
            }
        }
        Self::from_fn(ids, warehouse_id, |i, j| km[i * n + j])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn warehouse_index(&self) -> usize {
        self.warehouse
    }

    pub fn warehouse_id(&self) -> &str {
        &self.ids[self.warehouse]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn require(&self, id: &str) -> Result<usize, GeoError> {
        self.index_of(id).ok_or_else(|| GeoError::UnknownId(id.to_string()))
    }

    #[inline]
    pub fn km(&self, i: usize, j: usize) -> f64 {
        self.km[i * self.ids.len() + j]
    }

    pub fn km_between(&self, a: &str, b: &str) -> Result<f64, GeoError> {
        Ok(self.km(self.require(a)?, self.require(b)?))
    }

    pub fn to_warehouse(&self, i: usize) -> f64 {
        self.km(self.warehouse, i)
    }

    /// Zero diagonal, finite non-negative entries, symmetric.
    pub fn check_invariants(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            self.km(i, i) == 0.0
                && (0..n).all(|j| {
                    let v = self.km(i, j);
                    v.is_finite() && v >= 0.0 && (v - self.km(j, i)).abs() <= SYMMETRY_TOLERANCE
                })
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClusterMethod {
    /// Alternating k-medoids on the distance matrix.
    #[default]
    KMedoids,
    /// Lloyd k-means on donor coordinates.
    KMeans,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub member_ids: Vec<String>,
    /// Visit cost in km, once computed.
    pub cost: Option<f64>,
}

/// Result of a k-medoids run over matrix node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Medoids {
    pub medoids: Vec<usize>,
    /// Cluster index for each entry of the input node list.
    pub assignment: Vec<usize>,
    /// Sum of member-to-medoid distances after each half-step.
    pub objective_trace: Vec<f64>,
}

impl Medoids {
    pub fn objective(&self) -> f64 {
        self.objective_trace.last().copied().unwrap_or(0.0)
    }
}

const MAX_REFINEMENTS: usize = 200;
const RESTARTS: usize = 8;

/// k-medoids over `nodes` (matrix indices) with `RESTARTS` seeded restarts;
/// the restart with the smallest objective is kept.
pub fn kmedoids<R: Rng + ?Sized>(
    matrix: &DistanceMatrix,
    nodes: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<Medoids, GeoError> {
    let n = nodes.len();
    if k == 0 || k > n {
        return Err(GeoError::ClusterCount { k, n });
    }
    let mut best: Option<Medoids> = None;
    for _ in 0..RESTARTS {
        let run = kmedoids_once(matrix, nodes, k, rng);
        if best.as_ref().is_none_or(|b| run.objective() < b.objective()) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn kmedoids_once<R: Rng + ?Sized>(matrix: &DistanceMatrix, nodes: &[usize], k: usize, rng: &mut R) -> Medoids {
    let n = nodes.len();
    let d = |a: usize, b: usize| matrix.km(nodes[a], nodes[b]);

    // Seeding: first medoid uniform, then proportional to squared distance to
    // the nearest medoid chosen so far.
    let mut medoids: Vec<usize> = Vec::with_capacity(k);
    medoids.push(rng.random_range(0..n));
    let mut nearest: Vec<f64> = (0..n).map(|i| d(i, medoids[0])).collect();
    while medoids.len() < k {
        let weights: Vec<f64> = (0..n)
            .map(|i| if medoids.contains(&i) { 0.0 } else { nearest[i] * nearest[i] })
            .collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = None;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 {
                    chosen = Some(i);
                    if target < *w {
                        break;
                    }
                    target -= w;
                }
            }
            chosen.expect("positive total weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|i| !medoids.contains(i)).collect();
            free[rng.random_range(0..free.len())]
        };
        medoids.push(pick);
        for (i, near) in nearest.iter_mut().enumerate() {
            *near = near.min(d(i, pick));
        }
    }

    let assign = |medoids: &[usize]| -> (Vec<usize>, f64) {
        let mut assignment = vec![0; n];
        let mut total = 0.0;
        for (i, slot) in assignment.iter_mut().enumerate() {
            let (c, dist) = match medoids.iter().position(|&m| m == i) {
                Some(own) => (own, 0.0),
                None => medoids
                    .iter()
                    .enumerate()
                    .map(|(c, &m)| (c, d(i, m)))
                    .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc }),
            };
            *slot = c;
            total += dist;
        }
        (assignment, total)
    };

    let (mut assignment, objective) = assign(&medoids);
    let mut trace = vec![objective];
    for _ in 0..MAX_REFINEMENTS {
        // Medoid update: the member with the smallest total distance to the
        // rest of its cluster; the current medoid wins ties.
        let mut changed = false;
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
        for (i, &c) in assignment.iter().enumerate() {
            members[c].push(i);
        }
        for c in 0..k {
            if members[c].is_empty() {
                // Reseed with the point farthest from its medoid.
                let far = (0..n)
                    .filter(|i| !medoids.contains(i))
                    .max_by(|&a, &b| {
                        d(a, medoids[assignment[a]]).total_cmp(&d(b, medoids[assignment[b]])).then(b.cmp(&a))
                    });
                if let Some(far) = far {
                    medoids[c] = far;
                    changed = true;
                }
                continue;
            }
            let cost = |m: usize| members[c].iter().map(|&i| d(i, m)).sum::<f64>();
            let mut best = medoids[c];
            let mut best_cost = cost(best);
            for &cand in &members[c] {
                let cc = cost(cand);
                if cc < best_cost {
                    best = cand;
                    best_cost = cc;
                }
            }
            if best != medoids[c] {
                medoids[c] = best;
                changed = true;
            }
        }
        let update_objective: f64 = (0..n).map(|i| d(i, medoids[assignment[i]])).sum();
        trace.push(update_objective);
        let (next, next_objective) = assign(&medoids);
        trace.push(next_objective);
        let reassigned = next != assignment;
        assignment = next;
        if !changed && !reassigned {
            break;
        }
    }
    Medoids {
        medoids: medoids.iter().map(|&m| nodes[m]).collect(),
        assignment,
        objective_trace: trace,
    }
}

/// Lloyd k-means on locally projected coordinates (km east/north of the
/// centroid). Returns a cluster index per point.
pub fn kmeans_coordinates<R: Rng + ?Sized>(points: &[LatLon], k: usize, rng: &mut R) -> Result<Vec<usize>, GeoError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(GeoError::ClusterCount { k, n });
    }
    let lat0 = points.iter().map(|p| p.lat).sum::<f64>() / n as f64;
    let lon0 = points.iter().map(|p| p.lon).sum::<f64>() / n as f64;
    let kx = EARTH_RADIUS_KM * lat0.to_radians().cos() * std::f64::consts::PI / 180.0;
    let ky = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
    let xy: Vec<[f64; 2]> = points.iter().map(|p| [(p.lon - lon0) * kx, (p.lat - lat0) * ky]).collect();
    let d2 = |a: [f64; 2], b: [f64; 2]| (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2);

    let mut centers = vec![xy[rng.random_range(0..n)]];
    while centers.len() < k {
        let w: Vec<f64> = xy
            .iter()
            .map(|&p| centers.iter().map(|&c| d2(p, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = w.iter().sum();
        let idx = if total > 0.0 {
            let mut t = rng.random::<f64>() * total;
            let mut chosen = 0;
            for (i, wi) in w.iter().enumerate() {
                if *wi > 0.0 {
                    chosen = i;
                    if t < *wi {
                        break;
                    }
                    t -= wi;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centers.push(xy[idx]);
    }

    let mut assignment = vec![usize::MAX; n];
    for _ in 0..MAX_REFINEMENTS {
        let next: Vec<usize> = xy
            .iter()
            .map(|&p| {
                (0..k)
                    .map(|c| (c, d2(p, centers[c])))
                    .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc })
                    .0
            })
            .collect();
        let mut counts = vec![0usize; k];
        for &c in &next {
            counts[c] += 1;
        }
        let mut next = next;
        for c in 0..k {
            if counts[c] == 0 {
                let far = (0..n)
                    .filter(|&i| counts[next[i]] > 1)
                    .max_by(|&a, &b| d2(xy[a], centers[next[a]]).total_cmp(&d2(xy[b], centers[next[b]])))
                    .expect("k <= n leaves a cluster with spare members");
                counts[next[far]] -= 1;
                next[far] = c;
                counts[c] = 1;
            }
        }
        let stable = next == assignment;
        assignment = next;
        for (c, center) in centers.iter_mut().enumerate() {
            let (mut sx, mut sy, mut m) = (0.0, 0.0, 0.0);
            for (i, p) in xy.iter().enumerate() {
                if assignment[i] == c {
                    sx += p[0];
                    sy += p[1];
                    m += 1.0;
                }
            }
            *center = [sx / m, sy / m];
        }
        if stable {
            break;
        }
    }
    Ok(assignment)
}

/// Partition every non-warehouse node of `matrix` into `k` clusters.
pub fn cluster_donors<R: Rng + ?Sized>(matrix: &DistanceMatrix, k: usize, rng: &mut R) -> Result<Vec<Cluster>, GeoError> {
    let nodes: Vec<usize> = (0..matrix.len()).filter(|&i| i != matrix.warehouse_index()).collect();
    let fit = kmedoids(matrix, &nodes, k, rng)?;
    Ok(group(&nodes, &fit.assignment, k)
        .into_iter()
        .map(|members| Cluster {
            member_ids: members.iter().map(|&i| matrix.ids()[i].clone()).collect(),
            cost: None,
        })
        .collect())
}

/// Group `nodes` by cluster label, preserving node order within each group.
pub fn group(nodes: &[usize], assignment: &[usize], k: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); k];
    for (&node, &c) in nodes.iter().zip(assignment) {
        out[c].push(node);
    }
    out
}

/// Visit cost of a cluster given as matrix indices: twice the mean warehouse
/// leg plus the smallest total distance from one member to all the others.
pub fn cluster_cost_of(members: &[usize], matrix: &DistanceMatrix) -> Result<f64, GeoError> {
    if members.is_empty() {
        return Err(GeoError::EmptyCluster);
    }
    let n = members.len() as f64;
    let legs: f64 = members.iter().map(|&i| matrix.to_warehouse(i)).sum();
    let spread = members
        .iter()
        .map(|&j| members.iter().map(|&i| matrix.km(i, j)).sum::<f64>())
        .fold(f64::INFINITY, f64::min);
    Ok(2.0 / n * legs + spread)
}

pub fn cluster_cost(cluster: &Cluster, matrix: &DistanceMatrix) -> Result<f64, GeoError> {
    let idx = cluster
        .member_ids
        .iter()
        .map(|id| matrix.require(id))
        .collect::<Result<Vec<_>, _>>()?;
    cluster_cost_of(&idx, matrix)
}

/// Rule-of-thumb cluster count: 50 for the 156-donor set, 30 for the
/// 90-donor set, otherwise about three donors per cluster.
pub fn default_cluster_count(donors: usize) -> usize {
    match donors {
        156 => 50,
        90 => 30,
        n => n.div_ceil(3).max(1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn matrix(ids: &[&str], pairs: &[(&str, &str, f64)]) -> DistanceMatrix {
        let mut r = CachedRoutes::new();
        for (a, b, km) in pairs {
            r.insert(*a, *b, *km);
        }
        DistanceMatrix::from_providers(ids.iter().map(|s| s.to_string()).collect(), "warehouse", &[&r]).unwrap()
    }

    #[test]
    fn haversine_examples() {
        let a = LatLon::new(0.0, 0.0).unwrap();
        let b = LatLon::new(0.0, 1.0).unwrap();
        assert_eq!(haversine_km(a, a, 1.3).unwrap(), 0.0);
        let oracle = 2.0 * std::f64::consts::PI * EARTH_RADIUS_KM / 360.0;
        assert_relative_eq!(haversine_km(a, b, 1.3).unwrap(), oracle * 1.3, max_relative = 1e-12);
        assert_relative_eq!(oracle, 111.194_926_644_558_7, max_relative = 1e-12);
        assert_eq!(haversine_km(a, b, 1.3).unwrap(), haversine_km(b, a, 1.3).unwrap());
        assert!(LatLon::new(91.0, 0.0).is_err());
        assert!(haversine_km(LatLon { lat: 0.0, lon: 200.0 }, a, 1.3).is_err());
    }

    #[test]
    fn asymmetric_input_is_averaged() {
        let m = matrix(
            &["warehouse", "a"],
            &[("warehouse", "a", 10.0), ("a", "warehouse", 12.0)],
        );
        assert_eq!(m.km(0, 1), 11.0);
        assert_eq!(m.km(1, 0), 11.0);
        assert!(m.check_invariants());
    }

    #[test]
    fn missing_pair_and_warehouse() {
        let r = CachedRoutes::new();
        let err = DistanceMatrix::from_providers(vec!["warehouse".into(), "a".into()], "warehouse", &[&r]).unwrap_err();
        assert_eq!(err, GeoError::MissingPair("warehouse".into(), "a".into()));
        let err = DistanceMatrix::from_fn(vec!["a".into()], "warehouse", |_, _| 0.0).unwrap_err();
        assert_eq!(err, GeoError::MissingWarehouse("warehouse".into()));
    }

    #[test]
    fn providers_fall_through_in_order() {
        let donors = vec![
            Donor::new("a", crate::supply::DonorCategory::Grocer)
                .with_location(40.0, -105.0)
                .with_distance(7.0),
            Donor::new("b", crate::supply::DonorCategory::Grocer).with_location(40.1, -105.0),
        ];
        let legs = WarehouseLegs::new("warehouse", &donors);
        let hav = HaversineRoutes::new(1.3)
            .unwrap()
            .with_donors(&donors)
            .unwrap()
            .with_node("warehouse", LatLon::new(40.0, -105.1).unwrap());
        let ids = vec!["warehouse".to_string(), "a".into(), "b".into()];
        let m = DistanceMatrix::from_providers(ids, "warehouse", &[&legs, &hav]).unwrap();
        assert_eq!(m.km_between("warehouse", "a").unwrap(), 7.0);
        let ab = haversine_km(LatLon::new(40.0, -105.0).unwrap(), LatLon::new(40.1, -105.0).unwrap(), 1.3).unwrap();
        assert_eq!(m.km_between("a", "b").unwrap(), ab);
    }

    #[test]
    fn cluster_cost_examples() {
        let m = matrix(
            &["warehouse", "a", "b", "z"],
            &[
                ("warehouse", "a", 5.0),
                ("warehouse", "b", 7.0),
                ("a", "b", 3.0),
                ("warehouse", "z", 0.0),
                ("a", "z", 0.0),
                ("b", "z", 0.0),
            ],
        );
        let single = Cluster {
            member_ids: vec!["a".into()],
            cost: None,
        };
        assert_eq!(cluster_cost(&single, &m).unwrap(), 10.0);
        let pair = Cluster {
            member_ids: vec!["a".into(), "b".into()],
            cost: None,
        };
        assert_eq!(cluster_cost(&pair, &m).unwrap(), 15.0);
        let unknown = Cluster {
            member_ids: vec!["nope".into()],
            cost: None,
        };
        assert_eq!(cluster_cost(&unknown, &m), Err(GeoError::UnknownId("nope".into())));
    }

    #[test]
    fn three_point_bipartition() {
        let m = matrix(
            &["warehouse", "A", "B", "C"],
            &[
                ("warehouse", "A", 10.0),
                ("warehouse", "B", 10.0),
                ("warehouse", "C", 10.0),
                ("A", "B", 1.0),
                ("A", "C", 100.0),
                ("B", "C", 100.0),
            ],
        );
        // Oracle: objective of every bipartition into two non-empty groups
        // with the best medoid per group.
        let nodes = [1usize, 2, 3];
        let mut best = (f64::INFINITY, 0u32);
        for mask in 1u32..7 {
            let cost = |g: Vec<usize>| {
                g.iter()
                    .map(|&j| g.iter().map(|&i| m.km(i, j)).sum::<f64>())
                    .fold(f64::INFINITY, f64::min)
            };
            let inside: Vec<usize> = (0..3).filter(|b| mask >> b & 1 == 1).map(|b| nodes[b]).collect();
            let outside: Vec<usize> = (0..3).filter(|b| mask >> b & 1 == 0).map(|b| nodes[b]).collect();
            let total = cost(inside) + cost(outside);
            if total < best.0 {
                best = (total, mask);
            }
        }
        assert_eq!(best.0, 1.0);
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut clusters = cluster_donors(&m, 2, &mut rng).unwrap();
            clusters.sort_by_key(|c| c.member_ids.len());
            assert_eq!(clusters[0].member_ids, vec!["C".to_string()]);
            assert_eq!(clusters[1].member_ids, vec!["A".to_string(), "B".to_string()]);
        }
    }

    fn random_matrix(n: usize, seed: u64) -> DistanceMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(f64, f64)> = (0..=n).map(|_| (rng.random::<f64>() * 50.0, rng.random::<f64>() * 50.0)).collect();
        let mut ids = vec!["warehouse".to_string()];
        ids.extend((0..n).map(|i| format!("d{i}")));
        DistanceMatrix::from_fn(ids, "warehouse", |i, j| {
            ((pts[i].0 - pts[j].0).powi(2) + (pts[i].1 - pts[j].1).powi(2)).sqrt()
        })
        .unwrap()
    }

    #[test]
    fn k_extremes() {
        let m = random_matrix(12, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let all = cluster_donors(&m, 12, &mut rng).unwrap();
        assert!(all.iter().all(|c| c.member_ids.len() == 1));
        let one = cluster_donors(&m, 1, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one[0].member_ids.len(), 12);
        assert!(matches!(cluster_donors(&m, 0, &mut rng), Err(GeoError::ClusterCount { .. })));
        assert!(matches!(cluster_donors(&m, 13, &mut rng), Err(GeoError::ClusterCount { .. })));
    }

    #[test]
    fn duplicate_points_still_give_k_clusters() {
        let ids = vec!["warehouse".to_string(), "a".into(), "b".into(), "c".into()];
        let m = DistanceMatrix::from_fn(ids, "warehouse", |i, j| if i == 0 || j == 0 { 5.0 } else { 0.0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = cluster_donors(&m, 3, &mut rng).unwrap();
        assert!(c.iter().all(|c| c.member_ids.len() == 1));
    }

    #[test]
    fn kmeans_mode_partitions() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<LatLon> = (0..40)
            .map(|i| LatLon::new(40.0 + (i % 4) as f64 * 0.2 + rng.random::<f64>() * 0.01, -105.0).unwrap())
            .collect();
        let a = kmeans_coordinates(&pts, 4, &mut rng).unwrap();
        let mut counts = [0; 4];
        for &c in &a {
            counts[c] += 1;
        }
        assert_eq!(counts, [10, 10, 10, 10]);
    }

    #[test]
    fn default_counts() {
        assert_eq!(default_cluster_count(156), 50);
        assert_eq!(default_cluster_count(90), 30);
        assert_eq!(default_cluster_count(10), 4);
        assert_eq!(default_cluster_count(1), 1);
    }

    proptest! {
        #[test]
        fn clustering_properties(n in 2usize..25, kfrac in 0.0f64..1.0, seed in 0u64..1000) {
            let m = random_matrix(n, seed);
            let k = 1 + ((n - 1) as f64 * kfrac) as usize;
            let nodes: Vec<usize> = (1..=n).collect();
            let fit = kmedoids(&m, &nodes, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert!(fit.objective_trace.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            let groups = group(&nodes, &fit.assignment, k);
            prop_assert!(groups.iter().all(|g| !g.is_empty()));
            let mut seen: Vec<usize> = groups.concat();
            seen.sort();
            prop_assert_eq!(seen, nodes.clone());
            let again = kmedoids(&m, &nodes, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            prop_assert_eq!(again, fit);
            for g in &groups {
                let c = cluster_cost_of(g, &m).unwrap();
                let floor = 2.0 * g.iter().map(|&i| m.to_warehouse(i)).fold(f64::INFINITY, f64::min) / g.len() as f64;
                prop_assert!(c >= floor - 1e-9);
                if g.len() == 1 {
                    prop_assert_eq!(c, 2.0 * m.to_warehouse(g[0]));
                }
            }
        }
    }
}
