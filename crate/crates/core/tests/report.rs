use esri_net_core::bundle::fig1;
use esri_net_core::report::{
    co2_rank_csv, index_records, read_curve_csv, read_indices_csv, scatter_csv, CurveSeries, FigureInputs,
};
use esri_net_core::{
    emit_figure_data, generate, rank_firms, run_strategy, Heuristic, Network, PropagationOptions, ReportError,
    RiskModel, SynthParams,
};

fn ets_ids(net: &Network) -> Vec<String> {
    net.firms().iter().filter(|f| f.ets_member).map(|f| f.id.clone()).collect()
}

#[test]
fn toy_scatter_has_one_row_per_firm() {
    let b = fig1::<f64>();
    let pf = b.calibrate(None, None).unwrap();
    let model = RiskModel::new(&b.network, &pf, PropagationOptions::default(), None).unwrap();
    let ids: Vec<String> = b.network.firms().iter().map(|f| f.id.clone()).collect();
    let table = model.batch_indices(&ids);
    let csv = scatter_csv(&b.network, &index_records(&table)).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "firm_id,sector,co2_share_total,ew_esri,ratio");
    assert_eq!(lines.len(), 6);
    let d = lines.iter().find(|l| l.starts_with("d,")).unwrap();
    assert!(d.contains(",0.7,"), "{d}");
}

#[test]
fn missing_indices_are_reported() {
    let b = fig1::<f64>();
    let dir = tempfile::tempdir().unwrap();
    let err = emit_figure_data(&b.network, &FigureInputs::default(), dir.path()).unwrap_err();
    assert!(matches!(err, ReportError::MissingUpstream(_)));
}

#[test]
fn figure_files_round_trip_and_mark_removed_firms() {
    let net: Network = generate(&SynthParams::new(400, 2000, 30, 11)).unwrap();
    let pf = esri_net_core::bundle::NetworkBundle::from_network(net.clone())
        .calibrate(None, None)
        .unwrap();
    let model = RiskModel::new(&net, &pf, PropagationOptions::default(), None).unwrap();
    let table = model.batch_indices(&ets_ids(&net));
    let dir = tempfile::tempdir().unwrap();

    std::fs::write(dir.path().join("indices.csv"), table.to_csv()).unwrap();
    let records = read_indices_csv(dir.path().join("indices.csv")).unwrap();
    assert_eq!(records, index_records(&table));

    let rows: Vec<_> = table.ok_rows().cloned().collect();
    let mut curves = Vec::new();
    for h in Heuristic::ALL {
        let curve = run_strategy(&model, &rank_firms(&rows, h), 0.3).unwrap();
        let path = dir.path().join(format!("{}.csv", h.short_name()));
        std::fs::write(&path, curve.to_csv()).unwrap();
        let series = read_curve_csv(&path, h.short_name()).unwrap();
        assert_eq!(series, CurveSeries::from_curve(h.short_name(), &curve));
        assert_eq!(series.rows.iter().filter(|r| r.benchmark_flag == 1).count(), 1);
        assert_eq!(series.removed_at_benchmark().len(), curve.benchmark_row().unwrap().cum_firms);
        curves.push(series);
    }

    let co2 = co2_rank_csv(&net, &curves);
    let mut lines = co2.lines();
    assert_eq!(lines.next().unwrap(), "rank,firm_id,co2,removed_emitters,removed_risk,removed_ratio");
    let body: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(body.len(), 30);
    for (col, c) in curves.iter().enumerate() {
        let marked = body.iter().filter(|r| r[3 + col] == "1").count();
        assert_eq!(marked, c.removed_at_benchmark().len(), "{}", c.label);
    }
    let co2s: Vec<f64> = body.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(co2s.windows(2).all(|w| w[0] >= w[1]));

    let files = emit_figure_data(&net, &FigureInputs { indices: Some(records), curves }, dir.path()).unwrap();
    for p in [&files.scatter, &files.ratio_rank, &files.co2_rank, files.curves.as_ref().unwrap()] {
        assert!(p.exists());
    }
    let ratio = std::fs::read_to_string(&files.ratio_rank).unwrap();
    let vals: Vec<f64> = ratio.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(vals.windows(2).all(|w| w[0] >= w[1]));
}
