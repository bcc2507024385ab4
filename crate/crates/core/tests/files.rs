use hhme_core::ingest::{self, PairedDataset, PairedRow};
use hhme_core::montecarlo::{self, MAX_DUMP_ROWS};
use hhme_core::popgen::{generate_population, parameters_from_population, PopulationSpec};
use hhme_core::{reference, Error, ParameterSet, RunConfig, Stratum};

#[test]
fn parameter_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("design.toml");
    let p = reference::reference_design();
    p.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("S_y2") && text.contains("W2"));
    assert_eq!(ParameterSet::load(&path).unwrap(), p);
}

#[test]
fn missing_parameter_file_is_io_error() {
    let err = ParameterSet::load("/nonexistent/design.toml").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(!err.is_validation());
}

#[test]
fn unknown_key_is_rejected() {
    let mut text = reference::published_moments().to_toml_string().unwrap();
    text.push_str("bogus = 1\n");
    assert!(ParameterSet::from_toml_str(&text).is_err());
}

#[test]
fn dataset_file_round_trip() {
    let rows: Vec<PairedRow> = (0..12)
        .map(|i| {
            let v = i as f64;
            PairedRow {
                y_true: 10.0 + v,
                x_true: 20.0 + 2.0 * v + (v * 0.7).sin(),
                y_meas: 10.5 + v + (v * 1.3).cos(),
                x_meas: 19.5 + 2.0 * v,
                stratum: if i % 3 == 0 { Stratum::NonRespondent } else { Stratum::Respondent },
            }
        })
        .collect();
    let data = PairedDataset::new(rows).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    ingest::write_dataset(&data, std::fs::File::create(&path).unwrap()).unwrap();
    let back = ingest::load_dataset(&path).unwrap();
    assert_eq!(back.rows(), data.rows());
}

#[test]
fn reordered_columns_and_bad_cells() {
    let text = "stratum, x_meas ,y_meas,x_true,y_true\n1,2,3,2,3\n2,4,5,4,5\n1,6,7,6,8\n";
    let data = ingest::read_dataset(text.as_bytes()).unwrap();
    assert_eq!(data.rows()[2].y_true, 8.0);
    assert_eq!(data.rows()[1].stratum, Stratum::NonRespondent);

    let bad = "y_true,x_true,y_meas,x_meas,stratum\n1,2,3,4,7\n";
    assert!(matches!(ingest::read_dataset(bad.as_bytes()), Err(Error::BadCell { .. })));
    let missing = "y_true,x_true,y_meas,stratum\n1,2,3,1\n";
    assert!(matches!(ingest::read_dataset(missing.as_bytes()), Err(Error::MissingColumn("x_meas"))));
}

#[test]
fn population_and_replication_dumps() {
    let design = reference::published_moments();
    let mut small = design.clone();
    small.population_size = Some(400);
    small.n = 20;
    let pop = generate_population(&PopulationSpec::from_parameters(&small).unwrap(), 3).unwrap();
    let params = parameters_from_population(&pop, 20, 2.0, design.errors).validate().unwrap();

    let mut buf = Vec::new();
    pop.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("x_true,y_true,stratum"));
    assert_eq!(text.lines().count(), 401);

    let cfg = RunConfig::new(50, 11);
    let rows = montecarlo::replication_rows(&pop, &params, &cfg).unwrap();
    assert_eq!(rows.len(), 50);
    let mut buf = Vec::new();
    montecarlo::write_replications_csv(&rows, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("rep,n1,n2,r,y_star,x_star,t1,t_r,t_lr,t_p\n"));
    assert_eq!(text.lines().count(), 51);

    // replayed rows agree with the aggregated run
    let run = montecarlo::run(&pop, &params, &cfg).unwrap();
    let mean_t1 = rows.iter().map(|r| r.t1).sum::<f64>() / rows.len() as f64;
    assert!((run.record("t1").unwrap().empirical_mean - mean_t1).abs() < 1e-9 * mean_t1);

    let capped = montecarlo::replication_rows(&pop, &params, &RunConfig::new(MAX_DUMP_ROWS + 5, 1)).unwrap();
    assert_eq!(capped.len() as u64, MAX_DUMP_ROWS);
}
