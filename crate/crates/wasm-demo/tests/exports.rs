use mmab_sax_demo::{checkpoint_sequence_value, regret_curve_value};

#[test]
fn checkpoints_match_the_core_fixture() {
    let v = checkpoint_sequence_value(3, 5, 0.01, 100_000, false).unwrap();
    let ns: Vec<u64> = v["points"].as_array().unwrap().iter().map(|p| p["n"].as_u64().unwrap()).collect();
    assert_eq!(ns, [14, 171, 1931, 20842]);
}

#[test]
fn short_curve() {
    let cfg = r#"{"arms":[{"mean":0.9,"capacity":1},{"mean":0.5,"capacity":1}],"players":2,"horizon":2000,"delta":0.05}"#;
    let v = regret_curve_value(cfg).unwrap();
    let series = v["series"].as_array().unwrap();
    assert_eq!(series.last().unwrap()[0], 2000);
    assert!(v["cumulative"].as_f64().unwrap() > 0.0);
    let too_long = cfg.replace("2000", "900000000");
    assert!(regret_curve_value(&too_long).is_err());
}
