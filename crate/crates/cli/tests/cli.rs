use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use foodrescue::geo::{CachedRoutes, DistanceMatrix};
use foodrescue::io;
use foodrescue::rng::{Purpose, Substreams};
use foodrescue::supply::{CategoryFits, DonorCategory};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_foodrescue"))
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn run<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    bin().args(args).output().unwrap()
}

fn ps(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_error(o: &Output, code: i32, module: &str) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    let lines: Vec<&str> = err.lines().collect();
    assert_eq!(lines.len(), 1, "{err}");
    assert!(lines[0].starts_with(&format!("error[{module}]: ")), "{err}");
}

fn data_str(rel: &str) -> String {
    data(rel).to_str().unwrap().to_string()
}

fn simulate_args(out: &str, config: &str) -> Vec<String> {
    vec![
        "--quiet".into(),
        "simulate".into(),
        "--config".into(),
        config.into(),
        "--donors".into(),
        data_str("cfs90/donors.csv"),
        "--distances".into(),
        data_str("cfs90/distances.csv"),
        "--out-dir".into(),
        out.into(),
    ]
}

#[test]
fn simulate_summary_matches_daily_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = run(&simulate_args(ps(&out), &data_str("example_config.json")));
    assert!(o.status.success(), "{}", stderr(&o));
    let records = io::read_daily(std::fs::File::open(out.join("daily.csv")).unwrap(), "daily.csv").unwrap();
    assert_eq!(records.len(), 365);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    let mean = |f: fn(&foodrescue::sim::DayRecord) -> f64| records.iter().map(f).sum::<f64>() / records.len() as f64;
    let close = |key: &str, v: f64| {
        let s = summary[key].as_f64().unwrap();
        assert!((s - v).abs() <= 1e-9 * (1.0 + v.abs()), "{key}: {s} vs {v}");
    };
    close("mean_cost_km", mean(|r| r.cost));
    close("mean_excess_lbs", mean(|r| r.excess));
    close("total_recovered_lbs", records.iter().map(|r| r.recovered).sum());
    assert_eq!(
        summary["underrun_days"].as_u64().unwrap(),
        records.iter().filter(|r| r.underrun).count() as u64
    );
    assert_eq!(summary["conservation"]["failures"].as_u64(), Some(0));
    assert_eq!(summary["config"]["simulation"]["epsilon"].as_f64(), Some(0.5));

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("run_manifest.json")).unwrap()).unwrap();
    let donors_bytes = std::fs::read(data("cfs90/donors.csv")).unwrap();
    use sha2::Digest;
    let digest = hex::encode(sha2::Sha256::digest(&donors_bytes));
    assert_eq!(manifest["inputs"]["donors"]["sha256"].as_str(), Some(digest.as_str()));
    assert_eq!(manifest["seed"].as_u64(), Some(1));
    assert!(manifest["duration_secs"].as_f64().unwrap() >= 0.0);
}

#[test]
fn invalid_epsilon_fails_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "simulation": {"epsilon": 1.5}}"#).unwrap();
    let out = tmp.path().join("run");
    let o = run(&simulate_args(ps(&out), ps(&cfg)));
    assert_error(&o, 2, "sim");
    assert!(stderr(&o).contains("epsilon"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_key_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("typo.json");
    std::fs::write(&cfg, r#"{"schema_version": 1, "simulation": {"epsilom": 0.5}}"#).unwrap();
    let o = run(&simulate_args(ps(&tmp.path().join("run")), ps(&cfg)));
    assert_error(&o, 2, "cli");
    assert!(stderr(&o).contains("epsilom"));
}

#[test]
fn missing_input_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run(&[
        "simulate",
        "--donors",
        ps(&tmp.path().join("nope.csv")),
        "--out-dir",
        ps(tmp.path()),
    ]);
    assert_error(&o, 3, "io");
}

fn sweep(tmp: &Path, kind: &str, extra: &[&str]) -> Output {
    let mut args: Vec<String> = vec![
        "--quiet".into(),
        "sweep".into(),
        kind.into(),
        "--config".into(),
        data_str("example_config.json"),
        "--donors".into(),
        data_str("cfs90/donors.csv"),
        "--distances".into(),
        data_str("cfs90/distances.csv"),
        "--out-dir".into(),
        ps(tmp).into(),
    ];
    args.extend(extra.iter().map(|s| s.to_string()));
    run(&args)
}

fn sweep_rows(path: &Path) -> Vec<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn single_cell_sweep_equals_simulate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sweep(tmp.path(), "epsilon", &["--grid", "0.5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = sweep_rows(&tmp.path().join("sweep_epsilon.csv"));
    assert_eq!(rows.len(), 1);

    let out = tmp.path().join("sim");
    assert!(run(&simulate_args(ps(&out), &data_str("example_config.json"))).status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(rows[0][1], summary["mean_cost_km"].as_f64().unwrap());
    assert_eq!(rows[0][2], summary["mean_excess_lbs"].as_f64().unwrap());
    assert_eq!(rows[0][3], summary["underrun_days"].as_f64().unwrap());
}

#[test]
fn sweep_header_and_zero_demand() {
    let tmp = tempfile::tempdir().unwrap();
    let o = sweep(tmp.path(), "demand", &["--grid", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("sweep_demand.csv")).unwrap();
    assert!(text.starts_with("demand,mean_cost_km,mean_excess_lbs,underrun_days\n"));
    let rows = sweep_rows(&tmp.path().join("sweep_demand.csv"));
    assert_eq!(rows[0][1], 0.0);
    assert_eq!(rows[0][3], 0.0);

    let o = sweep(tmp.path(), "participation", &["--grid", "0.5,1", "--demand-grid", "1000"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("sweep_participation.csv")).unwrap();
    assert!(text.starts_with("fraction,demand,mean_cost_km"));
    assert_eq!(text.lines().count(), 3);
}

#[test]
fn empty_grid_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(&cfg, r#"{"schema_version": 1}"#).unwrap();
    let o = run(&[
        "sweep",
        "epsilon",
        "--config",
        ps(&cfg),
        "--donors",
        &data_str("cfs90/donors.csv"),
        "--distances",
        &data_str("cfs90/distances.csv"),
        "--out-dir",
        ps(tmp.path()),
    ]);
    assert_error(&o, 2, "sim");
}

fn cluster(out: &Path, donors: &Path, distances: &Path, k: &str) -> Output {
    run(&[
        "--quiet",
        "cluster",
        "--donors",
        ps(donors),
        "--distances",
        ps(distances),
        "-k",
        k,
        "--out-dir",
        ps(out),
    ])
}

#[test]
fn cluster_extremes() {
    let tmp = tempfile::tempdir().unwrap();
    let (d, m) = (data("cfs90/donors.csv"), data("cfs90/distances.csv"));
    let o = cluster(&tmp.path().join("one"), &d, &m, "1");
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(tmp.path().join("one/clusters.csv")).unwrap();
    assert!(text.starts_with("cluster_index,donor_id,cluster_cost_km\n"));
    assert_eq!(text.lines().count(), 91);
    assert!(text.lines().skip(1).all(|l| l.starts_with("0,")));

    let o = cluster(&tmp.path().join("all"), &d, &m, "90");
    assert!(o.status.success(), "{}", stderr(&o));
    let mut rdr = csv::Reader::from_path(tmp.path().join("all/clusters.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 90);
    let indices: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.get(0).unwrap()).collect();
    assert_eq!(indices.len(), 90);
    // A singleton costs the round trip to the warehouse.
    let routes = io::read_routes(std::fs::File::open(&m).unwrap(), "m").unwrap();
    let donors = io::read_donors(std::fs::File::open(&d).unwrap(), "d").unwrap();
    let mut ids = vec!["warehouse".to_string()];
    ids.extend(donors.iter().map(|d| d.id.clone()));
    let matrix = DistanceMatrix::from_providers(ids, "warehouse", &[&routes as &CachedRoutes]).unwrap();
    for r in &rows {
        let i = matrix.index_of(r.get(1).unwrap()).unwrap();
        let cost: f64 = r.get(2).unwrap().parse().unwrap();
        assert!((cost - 2.0 * matrix.to_warehouse(i)).abs() < 1e-9);
    }

    let o = cluster(&tmp.path().join("too-many"), &d, &m, "91");
    assert_error(&o, 2, "geo");
}

#[test]
fn cluster_unknown_id_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let donors = tmp.path().join("donors.csv");
    std::fs::write(&donors, "id,name,category,sqft,lat,lon,dist_km\na,A,grocer,,,,\nb,B,farm,,,,\n").unwrap();
    let dist = tmp.path().join("distances.csv");
    std::fs::write(
        &dist,
        "from_id,to_id,km\nwarehouse,a,1\nwarehouse,b,2\na,b,2.5\na,zed,4\n",
    )
    .unwrap();
    let o = cluster(&tmp.path().join("x"), &donors, &dist, "1");
    assert_error(&o, 3, "io");
    assert!(stderr(&o).contains("zed") && stderr(&o).contains("line 5"), "{}", stderr(&o));

    std::fs::write(&dist, "from_id,to_id,km\nwarehouse,a,1\nwarehouse,b,2\n").unwrap();
    let o = cluster(&tmp.path().join("x"), &donors, &dist, "1");
    assert_error(&o, 3, "geo");
}

#[test]
fn gen_synthetic_is_deterministic_and_valid() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = |dir: &str, seed: &str| {
        let out = tmp.path().join(dir);
        let o = run(&["--quiet", "gen-synthetic", "--profile", "cfs90", "--seed", seed, "--out-dir", ps(&out)]);
        assert!(o.status.success(), "{}", stderr(&o));
        out
    };
    let (a, b) = (gen("a", "3"), gen("b", "3"));
    for f in ["donors.csv", "distances.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap());
    }
    let donors = io::read_donors(std::fs::File::open(a.join("donors.csv")).unwrap(), "d").unwrap();
    assert_eq!(donors.len(), 90);
    let routes = io::read_routes(std::fs::File::open(a.join("distances.csv")).unwrap(), "m").unwrap();
    let mut ids = vec!["warehouse".to_string()];
    ids.extend(donors.iter().map(|d| d.id.clone()));
    let matrix = DistanceMatrix::from_providers(ids, "warehouse", &[&routes]).unwrap();
    assert!(matrix.check_invariants());

    let profile = tmp.path().join("empty.json");
    std::fs::write(
        &profile,
        r#"{"warehouse": {"lat": 40.0, "lon": -105.0}, "far_km": 100.0, "categories": []}"#,
    )
    .unwrap();
    let o = run(&["gen-synthetic", "--profile", ps(&profile), "--out-dir", ps(&tmp.path().join("e"))]);
    assert_error(&o, 2, "cli");
}

fn write_values(path: &Path, rows: &[(String, u32, f64)]) {
    let start = chrono::NaiveDate::from_ymd_opt(2011, 1, 1).unwrap();
    let mut text = String::from("donor_id,date,lbs\n");
    for (id, day, lbs) in rows {
        let date = start + chrono::Days::new(u64::from(*day));
        text.push_str(&format!("{id},{},{lbs}\n", date.format("%Y-%m-%d")));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn fit_recovers_grocer_parameters() {
    let tmp = tempfile::tempdir().unwrap();
    let model = *CategoryFits::reference().get(DonorCategory::Grocer).unwrap();
    let mut rng = Substreams::new(9).stream(Purpose::Synthetic, 0, 0);
    // 100 donors over 365 days, with zero days left implicit.
    let rows: Vec<(String, u32, f64)> = (0..100)
        .flat_map(|d| (0..365).map(move |t| (format!("g{d}"), t)))
        .map(|(id, t)| (id, t, model.sample(&mut rng)))
        .filter(|r| r.2 > 0.0)
        .collect();
    let values = tmp.path().join("values.csv");
    write_values(&values, &rows);
    let out = tmp.path().join("fit");
    let o = run(&["--quiet", "fit", "--values", ps(&values), "--category", "grocer", "--out-dir", ps(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = io::FitsFile::from_json(&std::fs::read_to_string(out.join("fits.json")).unwrap(), "f").unwrap();
    let e = &doc.categories["grocer"];
    let tail = e.tail.unwrap();
    assert!((e.rate - 0.302).abs() <= 0.01, "{}", e.rate);
    assert!((tail.scale / 293.139 - 1.0).abs() <= 0.05, "{}", tail.scale);
    assert!((tail.shape - 0.205).abs() <= 0.05, "{}", tail.shape);
    assert_eq!(e.observations, Some(36_500));
    let qq = std::fs::read_to_string(out.join("qq_grocer.csv")).unwrap();
    assert!(qq.starts_with("theoretical,empirical\n"));
}

#[test]
fn fit_edge_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let values = tmp.path().join("values.csv");
    std::fs::write(&values, "").unwrap();
    let o = run(&["fit", "--values", ps(&values), "--out-dir", ps(&tmp.path().join("a"))]);
    assert_error(&o, 3, "io");

    std::fs::write(&values, "donor_id,date,lbs\na,2011-01-01,0\na,2011-01-09,0\nb,2011-01-04,0\n").unwrap();
    let out = tmp.path().join("zero");
    let o = run(&["--quiet", "fit", "--values", ps(&values), "--out-dir", ps(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = io::FitsFile::from_json(&std::fs::read_to_string(out.join("fits.json")).unwrap(), "f").unwrap();
    let e = &doc.categories["all"];
    assert_eq!(e.rate, 0.0);
    assert_eq!(e.tail, None);
    assert_eq!(e.observations, Some(18));

    std::fs::write(&values, "donor_id,date,lbs\na,2011-01-01,3\na,01/02/2011,4\n").unwrap();
    let o = run(&["fit", "--values", ps(&values), "--out-dir", ps(&tmp.path().join("b"))]);
    assert_error(&o, 3, "io");
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn fitted_document_drives_a_simulation() {
    let tmp = tempfile::tempdir().unwrap();
    let gen = tmp.path().join("gen");
    let o = run(&["--quiet", "gen-synthetic", "--seed", "2", "--value-days", "400", "--out-dir", ps(&gen)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let fit = tmp.path().join("fit");
    let o = run(&[
        "--quiet",
        "fit",
        "--values",
        ps(&gen.join("daily_values.csv")),
        "--donors",
        ps(&gen.join("donors.csv")),
        "--out-dir",
        ps(&fit),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let doc = io::FitsFile::from_json(&std::fs::read_to_string(fit.join("fits.json")).unwrap(), "f").unwrap();
    for label in ["all", "grocer", "manufacturer", "individual", "farm"] {
        assert!(doc.categories.contains_key(label), "{label}");
    }
    let sm = doc.scale_model.expect("grocers with square footage give a scale fit");
    assert!((sm.slope - 0.291).abs() < 0.2, "{sm:?}");

    let out = tmp.path().join("sim");
    let o = run(&[
        "--quiet",
        "simulate",
        "--donors",
        ps(&gen.join("donors.csv")),
        "--distances",
        ps(&gen.join("distances.csv")),
        "--fits",
        ps(&fit.join("fits.json")),
        "--out-dir",
        ps(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("daily.csv").exists());
}

#[test]
fn haversine_fallback_fills_missing_pairs() {
    let tmp = tempfile::tempdir().unwrap();
    let donors = tmp.path().join("donors.csv");
    std::fs::write(
        &donors,
        "id,name,category,sqft,lat,lon,dist_km\n\
         a,A,grocer,30000,40.01,-105.27,\n\
         b,B,grocer,,40.02,-105.25,\n\
         c,C,farm,,40.20,-105.10,\n",
    )
    .unwrap();
    let cfg = tmp.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schema_version": 1,
            "simulation": {"days": 30, "cluster_count": 2},
            "network": {"distance_fallback": true, "warehouse_location": {"lat": 40.0, "lon": -105.2}}}"#,
    )
    .unwrap();
    let out = tmp.path().join("sim");
    let o = run(&["--quiet", "simulate", "--config", ps(&cfg), "--donors", ps(&donors), "--out-dir", ps(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));

    std::fs::write(&cfg, r#"{"schema_version": 1, "simulation": {"days": 30}}"#).unwrap();
    let o = run(&["simulate", "--config", ps(&cfg), "--donors", ps(&donors), "--out-dir", ps(&out)]);
    assert_error(&o, 3, "geo");
}
