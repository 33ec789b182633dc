mod common;

use common::*;
use esri_net_core::bundle::fig1;
use esri_net_core::{
    rank_firms, run_strategy, ConvergenceMetadata, Heuristic, IndexRow, PropagationOptions, RiskModel,
    StrategyError,
};
use proptest::prelude::*;

fn row(firm: usize, id: &str, co2: f64, ew: f64, ratio: f64) -> IndexRow<f64> {
    IndexRow {
        firm,
        firm_id: id.into(),
        esri: 0.0,
        ew_esri: ew,
        co2,
        co2_share_total: Some(co2 / 10.0),
        co2_share_ets: None,
        ratio: Some(ratio),
        convergence: ConvergenceMetadata {
            iterations: 1,
            max_delta: 0.0,
            converged: true,
        },
    }
}

#[test]
fn emitters_sort_by_emissions() {
    let rows = [row(0, "x", 3.0, 0.1, 1.0), row(1, "y", 5.0, 0.1, 1.0), row(2, "z", 1.0, 0.1, 1.0)];
    assert_eq!(rank_firms(&rows, Heuristic::LargestEmittersFirst), vec![1, 0, 2]);
}

#[test]
fn identical_keys_fall_back_to_id() {
    let rows = [row(0, "q", 2.0, 0.1, 2.0), row(1, "p", 2.0, 0.1, 2.0)];
    for h in Heuristic::ALL {
        assert_eq!(rank_firms(&rows, h), vec![1, 0], "{h}");
    }
}

#[test]
fn infinite_ratios_lead_and_tie_on_emissions() {
    let rows = [
        row(0, "a", 1.0, 0.0, f64::INFINITY),
        row(1, "b", 4.0, 0.0, f64::INFINITY),
        row(2, "c", 9.0, 0.01, 1e6),
    ];
    assert_eq!(rank_firms(&rows, Heuristic::OptimalRatio), vec![1, 0, 2]);
    assert_eq!(rank_firms(&rows, Heuristic::LeastRiskyFirst), vec![1, 0, 2]);
}

#[test]
fn toy_orderings_and_benchmarks() {
    let b = fig1::<f64>();
    let pf = b.calibrate(None, None).unwrap();
    let model = RiskModel::new(&b.network, &pf, PropagationOptions::default(), None).unwrap();
    let rows: Vec<_> = model.batch_indices(&["a", "b", "d"]).ok_rows().cloned().collect();
    let ids = |order: &[usize]| -> Vec<String> { order.iter().map(|&i| b.network.firm(i).id.clone()).collect() };

    let ratio = rank_firms(&rows, Heuristic::OptimalRatio);
    assert_eq!(ids(&ratio), ["a", "b", "d"]);
    let curve = run_strategy(&model, &ratio, 0.5).unwrap();
    assert_eq!(curve.benchmark, Some(2));
    assert_eq!(curve.removed_at_benchmark(), ratio[..2]);

    let emitters = rank_firms(&rows, Heuristic::LargestEmittersFirst);
    assert_eq!(ids(&emitters)[0], "d");
    let curve = run_strategy(&model, &emitters, 0.5).unwrap();
    let bench = curve.benchmark_row().unwrap();
    assert_eq!(bench.cum_firms, 1);
    assert!((bench.cum_job_loss - 0.7).abs() < 1e-12);

    let zero = run_strategy(&model, &emitters, 0.0).unwrap();
    assert_eq!(zero.benchmark, Some(0));
    assert!(zero.removed_at_benchmark().is_empty());
    assert_eq!(zero.summary(None).firms_removed, 0);

    let csv = curve.to_csv();
    assert_eq!(csv.lines().next().unwrap(), "rank,firm_id,cum_firms,cum_co2_saved,cum_job_loss,benchmark_flag");
    assert_eq!(csv.lines().filter(|l| l.ends_with(",1")).count(), 1);
}

#[test]
fn unreachable_target_still_returns_the_curve() {
    let b = fig1::<f64>();
    let pf = b.calibrate(None, None).unwrap();
    let model = RiskModel::new(&b.network, &pf, PropagationOptions::default(), None).unwrap();
    let rows: Vec<_> = model.batch_indices(&["a"]).ok_rows().cloned().collect();
    let order = rank_firms(&rows, Heuristic::OptimalRatio);
    match run_strategy(&model, &order, 0.9) {
        Err(StrategyError::TargetUnreachable { achievable, curve, .. }) => {
            assert!((achievable - 0.25).abs() < 1e-12);
            assert_eq!(curve.rows.len(), 2);
            assert!(curve.benchmark.is_none());
        }
        other => panic!("{other:?}"),
    }
    assert!(matches!(run_strategy(&model, &order, 1.5), Err(StrategyError::InvalidTarget(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn cumulative_series_never_fall(case in arb_case(9), which in 0..3usize) {
        let pf = case.calibrate();
        let model = RiskModel::new(&case.net, &pf, tight(), None).unwrap();
        let ids: Vec<String> = case.net.firms().iter().map(|f| f.id.clone()).collect();
        let rows: Vec<_> = model.batch_indices(&ids).ok_rows().cloned().collect();
        let order = rank_firms(&rows, Heuristic::ALL[which]);
        let mut sorted = order.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..ids.len()).collect::<Vec<_>>());
        let curve = run_strategy(&model, &order, 0.0).unwrap();
        for w in curve.rows.windows(2) {
            prop_assert!(w[1].cum_co2_saved >= w[0].cum_co2_saved - SCENARIO_SLACK);
            prop_assert!(w[1].cum_job_loss >= w[0].cum_job_loss - SCENARIO_SLACK);
        }
        prop_assert_eq!(run_strategy(&model, &order, 0.0).unwrap(), curve);
    }
}
