use std::path::{Path, PathBuf};

use fridgesim_core::client::EXIT_ALERTS;
use fridgesim_core::cloud::ObjectStore;
use fridgesim_core::config::Config;
use fridgesim_core::inventory::parse_snapshot;
use fridgesim_core::scenario::{parse_scenario, run, run_with_store, write_outputs, RunTrace, ScenarioEvent};

const ALL: [&str; 7] = [
    "empty",
    "seven_changes",
    "quota_exhaustion",
    "small_eggs",
    "weight_500",
    "fridge_day",
    "seeded_eggs",
];

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/scenarios")
}

fn load(name: &str) -> (Vec<ScenarioEvent>, Config) {
    let dir = fixture_dir();
    let events = parse_scenario(&std::fs::read(dir.join(format!("{name}.json"))).unwrap()).unwrap();
    let cfg_path = dir.join(format!("{name}.toml"));
    let config = if cfg_path.exists() {
        Config::load(&cfg_path).unwrap()
    } else {
        Config::default()
    };
    (events, config)
}

fn run_fixture(name: &str, seed: u64) -> RunTrace {
    let (events, config) = load(name);
    run(&events, seed, &config).unwrap()
}

#[test]
fn every_fixture_runs_clean_across_seeds() {
    for seed in [0, 1, 2020, u64::MAX] {
        for name in ALL {
            let t = run_fixture(name, seed);
            assert!(t.is_clean(), "{name} seed {seed}:\n{}", t.summary_text());
            assert_eq!(t.summary.inventory_objects as u64, t.summary.upload_count, "{name}");
            assert!(!t.summary.pending, "{name}");
        }
    }
}

#[test]
fn empty_fridge_uploads_once() {
    let t = run_fixture("empty", 7);
    assert_eq!(t.summary.upload_count, 1);
    assert_eq!(t.manifest.lines().filter(|l| l.ends_with("inventory_0.json")).count(), 1);
    assert_eq!(t.latest.unwrap().seq, 0);
}

#[test]
fn small_eggs_trigger_eleven_of_sixteen() {
    let t = run_fixture("small_eggs", 2020);
    assert_eq!(t.latest.unwrap().egg_count(), 11);
    assert!(t.report.contains("eggs      11/16\n"), "{}", t.report);
}

#[test]
fn weight_reads_back_within_five_grams() {
    for seed in 0..20 {
        let t = run_fixture("weight_500", seed);
        let grams = t.latest.unwrap().weights[0].grams.as_f64();
        assert!((grams - 500.0).abs() <= 5.0, "seed {seed}: {grams}");
    }
}

#[test]
fn fridge_day_reports_alerts_and_survives_corruption() {
    let t = run_fixture("fridge_day", 2020);
    assert_eq!(t.report_exit_code, EXIT_ALERTS);
    assert!(t.report.contains("  eggs 4 < 6\n"), "{}", t.report);
    assert!(t.report.contains("  bottles 1 < 2\n"), "{}", t.report);
    assert_eq!(t.summary.error_count, 1);
    assert_eq!(t.gateway_log.matches("bus-error").count(), 1);
    let latest = t.latest.unwrap();
    assert_eq!(latest.bottle_count(), 1);
    assert!(latest.eggs[8 + 3], "small egg in a good cup");
}

#[test]
fn quota_parks_then_catches_up() {
    let t = run_fixture("quota_exhaustion", 2020);
    assert!(t.gateway_log.contains("quota-defer"));
    assert!(t.summary.defer_count > 0);
    assert_eq!(t.latest.unwrap().egg_count(), 7);
}

#[test]
fn seeded_eggs_depend_on_seed_only() {
    let a = run_fixture("seeded_eggs", 11).render();
    assert_eq!(a, run_fixture("seeded_eggs", 11).render());
    let counts: std::collections::BTreeSet<usize> = (0..16)
        .map(|s| run_fixture("seeded_eggs", s).latest.unwrap().egg_count())
        .collect();
    assert!(counts.len() > 1, "seeded mode should vary with the seed: {counts:?}");
}

#[test]
fn persisted_store_reopens_to_same_latest() {
    let dir = tempfile::tempdir().unwrap();
    let (events, config) = load("fridge_day");
    let store = ObjectStore::open(dir.path().join("store")).unwrap();
    let t = run_with_store(&events, 2020, &config, store).unwrap();
    let reopened = ObjectStore::open(dir.path().join("store")).unwrap();
    assert_eq!(reopened.manifest_text(), t.manifest);
    let latest = parse_snapshot(&reopened.fetch_latest().unwrap().octets).unwrap();
    assert_eq!(Some(latest), t.latest);
    assert_eq!(
        std::fs::read(dir.path().join("store/latest.json")).unwrap(),
        reopened.fetch_latest().unwrap().octets
    );

    let out = dir.path().join("out");
    write_outputs(&t, &out).unwrap();
    for f in ["trace.log", "MANIFEST", "report.txt", "summary.txt"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    assert_eq!(std::fs::read_to_string(out.join("report.txt")).unwrap(), t.report);
}
