use netcausal::harness::{
    emit_table, read_records_csv, run_experiment, write_records_csv, ExperimentConfig, GraphModel, ReplicationRecord,
    TableFormat,
};

fn small(model: GraphModel) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.design.graph_model = model;
    cfg.design.n = 150;
    cfg.design.replications = 4;
    cfg.design.seed = 77;
    cfg.estimators.gnn_depths = vec![1, 2];
    cfg.estimators.glm_orders = vec![1, 3];
    cfg.train.epochs = 10;
    cfg
}

#[test]
fn single_replication_is_deterministic() {
    let mut cfg = small(GraphModel::Er);
    cfg.design.replications = 1;
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.rows.len(), 4);
    assert!(a.rows.iter().all(|r| r.replications == 1));
}

#[test]
fn config_survives_toml_round_trip_and_reproduces_results() {
    let cfg = small(GraphModel::Rgg);
    let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(run_experiment(&cfg).unwrap(), run_experiment(&back).unwrap());
}

/// Recomputes every table column from the per-replication CSV alone.
#[test]
fn aggregates_recompute_from_csv() {
    let cfg = small(GraphModel::Er);
    let res = run_experiment(&cfg).unwrap();
    let mut buf = Vec::new();
    write_records_csv(&res.records, &mut buf).unwrap();
    let records: Vec<ReplicationRecord> = read_records_csv(buf.as_slice()).unwrap();
    assert_eq!(records, res.records);

    let z = 1.959964;
    for row in &res.rows {
        let rs: Vec<&ReplicationRecord> = records.iter().filter(|r| r.estimator == row.estimator).collect();
        let k = rs.len() as f64;
        let mean = rs.iter().map(|r| r.tau_hat).sum::<f64>() / k;
        let sd = (rs.iter().map(|r| (r.tau_hat - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        let cover = |se: &dyn Fn(&ReplicationRecord) -> f64| {
            rs.iter().filter(|r| (r.tau_hat - 0.0).abs() <= z * se(r)).count() as f64 / k
        };
        let close = |a: f64, b: f64| assert!((a - b).abs() <= 1e-12, "{}: {a} vs {b}", row.estimator);
        close(row.bias, mean);
        close(row.se_oracle, sd);
        close(row.coverage_hac, cover(&|r| r.hac_se));
        close(row.coverage_iid, cover(&|r| r.iid_se));
        close(row.coverage_oracle, cover(&|_| sd));
        close(row.mean_se_hac, rs.iter().map(|r| r.hac_se).sum::<f64>() / k);
        close(row.mean_se_iid, rs.iter().map(|r| r.iid_se).sum::<f64>() / k);
        close(
            row.mean_treated,
            rs.iter().map(|r| r.treated_count as f64).sum::<f64>() / k,
        );
        assert!((0.0..=1.0).contains(&row.coverage_hac));
    }
}

#[test]
fn table_csv_parses_back() {
    let res = run_experiment(&small(GraphModel::Er)).unwrap();
    let text = emit_table(&res.rows, TableFormat::Csv);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader.headers().unwrap().clone();
    assert_eq!(header.get(0), Some("estimator"));
    let rows: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), res.rows.len());
    for (rec, row) in rows.iter().zip(&res.rows) {
        assert_eq!(&rec[0], row.estimator);
        let bias: f64 = rec[4].parse().unwrap();
        assert_eq!(bias, row.bias);
    }
}
