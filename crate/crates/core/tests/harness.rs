use nmf_rlct::harness::{run_experiment, run_replicates, FailedReplicate, ReplicateRecord};
use nmf_rlct::io::{read_replicates_csv, write_json, write_replicates_csv};
use nmf_rlct::{ExperimentConfig, ExperimentResult, GibbsConfig, Hyperparameters, ModelDims, ReplicateEstimates, TruthSpec};

fn small() -> ExperimentConfig {
    ExperimentConfig {
        dims: ModelDims::new(3, 3, 2, 1).unwrap(),
        hyper: Hyperparameters::symmetric(1.0).unwrap(),
        truth: TruthSpec::default(),
        n: 100,
        n_test: 2_000,
        replicates: 5,
        gibbs: GibbsConfig { burn_in: 500, thin: 2, draws: 200, seed: 0 },
        master_seed: 11,
    }
}

fn record(index: usize, lambda_point: f64) -> ReplicateRecord {
    ReplicateRecord {
        index,
        estimates: ReplicateEstimates {
            empirical_loss: 0.0,
            functional_variance: 0.0,
            waic: 0.0,
            generalization_error: 0.0,
            empirical_entropy: 0.0,
            lambda_point,
        },
    }
}

#[test]
fn injected_points_aggregate_to_mean_and_standard_error() {
    let cfg = small();
    let truth = cfg.truth.resolve(&cfg.dims).unwrap();
    let r = ExperimentResult::from_records(cfg, truth, vec![record(2, 3.0), record(0, 1.0), record(1, 2.0)], vec![])
        .unwrap();
    assert_eq!(r.lambda_hat, 2.0);
    assert!((r.stderr - 1.0 / 3f64.sqrt()).abs() < 1e-15);
    assert_eq!(r.replicates.iter().map(|x| x.index).collect::<Vec<_>>(), [0, 1, 2]);
}

#[test]
fn failures_are_excluded_up_to_a_fifth() {
    let cfg = small();
    let truth = cfg.truth.resolve(&cfg.dims).unwrap();
    let fail = |index| FailedReplicate { index, reason: "boom".into() };
    let ok = ExperimentResult::from_records(
        cfg.clone(),
        truth.clone(),
        (0..4).map(|i| record(i, 1.0)).collect(),
        vec![fail(4)],
    )
    .unwrap();
    assert_eq!(ok.failed.len(), 1);
    let err = ExperimentResult::from_records(cfg, truth, (0..3).map(|i| record(i, 1.0)).collect(), vec![fail(3), fail(4)])
        .unwrap_err();
    assert!(!err.is_config());
    assert!(err.to_string().contains("boom"));
}

#[test]
fn estimate_survives_persistence_round_trip() {
    let cfg = small();
    let result = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("replicates.csv");
    write_replicates_csv(&csv, &result.replicates).unwrap();
    let reloaded = read_replicates_csv(&csv).unwrap();
    assert_eq!(reloaded, result.replicates);
    let again = ExperimentResult::from_records(cfg.clone(), result.truth.clone(), reloaded, vec![]).unwrap();
    assert_eq!(again.lambda_hat.to_bits(), result.lambda_hat.to_bits());
    assert_eq!(again.stderr.to_bits(), result.stderr.to_bits());

    let json = dir.path().join("result.json");
    write_json(&json, &result).unwrap();
    let parsed: ExperimentResult = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(parsed.lambda_hat.to_bits(), result.lambda_hat.to_bits());
    assert_eq!(parsed.replicates, result.replicates);
}

#[test]
fn replicates_are_independent_of_batching() {
    let cfg = small();
    let all = run_replicates(&cfg, &[0, 1, 2, 3, 4]).unwrap();
    let part = run_replicates(&cfg, &[3, 1]).unwrap();
    for r in &part.replicates {
        assert_eq!(r, &all.replicates[r.index]);
    }
}

#[test]
fn larger_sample_cell_with_broad_prior() {
    // φ = 2, n = 1000, K = 2000: the reference estimate is 4.79, below λ̄ = 7.5.
    let cfg = ExperimentConfig::table1(2.0, 1000).unwrap();
    let r = run_experiment(&cfg).unwrap();
    assert!((r.lambda_hat - 4.79).abs() <= 0.25, "{} ± {}", r.lambda_hat, r.stderr);
    assert!(r.lambda_hat < r.lambda_upper);
    assert_eq!(r.lambda_upper, 7.5);
}
