use evbattery::capacity::{evaluate_capacity, CapacityDataset, CapacitySettings, RegressorConfig, RegressorKind};
use evbattery::data::{dataset_stats, read_dataset, write_dataset};
use evbattery::detectors::{DetectorSpec, DyadConfig};
use evbattery::evalkit::{run_detection, DetectionSettings};
use evbattery::exec::Execution;
use evbattery::synthgen::{anonymize, generate_fleet, generate_fleet_with, AnonymizeConfig, GenConfig};

fn small() -> GenConfig {
    GenConfig {
        n_normal: 10,
        n_anomalous: 5,
        snippets_per_vehicle: Some(12),
        ..GenConfig::default()
    }
}

#[test]
fn dataset_round_trips_through_disk() {
    let fleet = generate_fleet(&small()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &fleet).unwrap();
    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back, fleet);
    let stats = dataset_stats(&back);
    assert_eq!((stats.vehicles, stats.anomalous_vehicles, stats.snippets), (15, 5, 180));
}

#[test]
fn parallel_generation_matches_sequential() {
    let a = generate_fleet_with(&small(), Execution::Sequential).unwrap();
    let b = generate_fleet_with(&small(), Execution::Parallel).unwrap();
    assert_eq!(a.vehicles, b.vehicles);
}

#[test]
fn variance_detection_end_to_end() {
    let fleet = generate_fleet(&small()).unwrap();
    let run = run_detection(&fleet, &DetectorSpec::variance(), &DetectionSettings::default()).unwrap();
    assert_eq!(run.report.rounds.len(), 5);
    assert!(run.report.rounds.iter().all(|r| (0.0..=1.0).contains(&r.auroc)));
    // Each normal vehicle is tested once; each anomalous vehicle in the four
    // rounds where its fold is not used for validation.
    let normal: usize = run.report.rounds.iter().map(|r| r.test_normal).sum();
    let anomalous: usize = run.report.rounds.iter().map(|r| r.test_anomalous).sum();
    assert_eq!((normal, anomalous), (10, 20));
}

#[test]
fn short_dyad_run_is_reproducible_and_ignores_timestamp_shift() {
    let fleet = generate_fleet(&small()).unwrap();
    let mut cfg = DyadConfig::default();
    cfg.train.epochs = 1;
    cfg.hidden_size = 8;
    cfg.latent_size = 4;
    let spec = DetectorSpec::Dyad(cfg);
    let settings = DetectionSettings {
        folds: 3,
        ..DetectionSettings::default()
    };
    let a = run_detection(&fleet, &spec, &settings).unwrap();
    let b = run_detection(&fleet, &spec, &DetectionSettings { execution: Execution::Sequential, ..settings.clone() }).unwrap();
    assert_eq!(a.report, b.report);
    // Zero value perturbation leaves only the timestamp and mileage maps,
    // which no model reads.
    let shifted = anonymize(&fleet, &AnonymizeConfig { amplitude_fraction: 0.0, ..AnonymizeConfig::default() });
    let c = run_detection(&shifted, &spec, &settings).unwrap();
    assert_eq!(
        a.report.rounds.iter().map(|r| r.auroc).collect::<Vec<_>>(),
        c.report.rounds.iter().map(|r| r.auroc).collect::<Vec<_>>()
    );
}

#[test]
fn ridge_capacity_end_to_end() {
    let fleet = generate_fleet(&GenConfig {
        snippets_per_vehicle: Some(40),
        ..small()
    })
    .unwrap();
    let ds = CapacityDataset::from_vehicles(&fleet);
    assert!(ds.n_labeled() > 0);
    let run = evaluate_capacity(&ds, &RegressorConfig::with_kind(RegressorKind::Ridge), &CapacitySettings::default()).unwrap();
    assert_eq!(run.report.rounds.len(), 5);
    assert_eq!(run.predictions.len(), ds.n_labeled());
    assert!(run.predictions.iter().all(|p| p.predicted_capacity.is_finite()));
}
