use posecal::search::Loss;
use posecal::session::StopReason;
use posecal::simulator::{abs_rms_err, run_experiment, run_session, EvalSet, ExperimentConfig, Strategy};

fn small_config() -> ExperimentConfig {
    ExperimentConfig {
        repetitions: 2,
        frame_cap: 6,
        seed: 4,
        strategies: vec![Strategy::Random, Strategy::GeneratedOnly, Strategy::search(Loss::SumIod)],
        ..ExperimentConfig::default()
    }
}

#[test]
fn strategies_share_the_startup_frame() {
    let cfg = small_config();
    let result = run_experiment(&cfg, 1).unwrap();
    for r in 0..cfg.repetitions {
        let first: Vec<f64> = result.strategies.iter().map(|s| s.runs[r].abs_rms[0]).collect();
        assert!(first.windows(2).all(|w| w[0] == w[1]), "{first:?}");
    }
}

#[test]
fn sessions_stay_within_the_cap() {
    let cfg = small_config();
    let result = run_experiment(&cfg, 1).unwrap();
    for s in &result.strategies {
        assert_eq!(s.runs.len(), cfg.repetitions);
        for run in &s.runs {
            assert!(run.len() <= cfg.frame_cap);
            assert!(run.stop_reason.is_some());
            if run.len() < cfg.frame_cap {
                assert_eq!(run.stop_reason, Some(StopReason::Converged));
            }
            assert!(run.abs_rms.iter().all(|v| v.is_finite() && *v >= 0.0));
        }
        assert_eq!(s.aggregate.frames, (1..=s.aggregate.frames.len()).collect::<Vec<_>>());
    }
}

#[test]
fn parallel_runs_match_serial_runs() {
    let cfg = small_config();
    assert_eq!(run_experiment(&cfg, 1).unwrap(), run_experiment(&cfg, 2).unwrap());
}

#[test]
fn single_session_improves_on_the_startup_estimate() {
    let cfg = ExperimentConfig::default();
    let eval = cfg.eval_set().unwrap();
    let run = run_session(&cfg, Strategy::search(Loss::SumIod), 0, &eval).unwrap();
    let (first, last) = (run.abs_rms[0], *run.abs_rms.last().unwrap());
    assert!(last < first / 10.0, "{first} -> {last}");
    assert!(last < 5.0, "final error {last} px");
}

#[test]
fn the_truth_has_zero_error() {
    let cfg = ExperimentConfig::default();
    let eval = EvalSet::generate(&cfg.truth, &cfg.board, 20, (600.0, 1500.0), 1).unwrap();
    assert_eq!(abs_rms_err(&cfg.truth.model(), &cfg.truth, &eval), 0.0);
}
