use demreg_core::experiment::{build_trial, TrialConfig};
use demreg_core::{
    assemble, parse_grid, partition, register, serialize_grid, CellOffset, ControlPoint, MatchMethod, RegisterOptions,
};

fn points(cfg: &TrialConfig, seed: u64) -> (demreg_core::experiment::TrialInputs, Vec<ControlPoint>) {
    let inputs = build_trial(cfg, seed).unwrap();
    let pts = inputs.points.iter().map(|(p, _)| *p).collect();
    (inputs, pts)
}

#[test]
fn registration_survives_text_round_trip() {
    let cfg = TrialConfig {
        rows: 96,
        cols: 80,
        n_points: 16,
        offset: Some(CellOffset::new(-7, 4)),
        ..TrialConfig::default()
    };
    let (inputs, pts) = points(&cfg, 31);
    let reference = parse_grid(&serialize_grid(&inputs.reference)).unwrap();
    let candidate = parse_grid(&serialize_grid(&inputs.candidate)).unwrap();
    for method in [MatchMethod::Direct, MatchMethod::QuadEdge] {
        let options = RegisterOptions::with_method(method);
        let from_text = register(&reference, &candidate, &pts, &options).unwrap();
        let in_memory = register(&inputs.reference, &inputs.candidate, &pts, &options).unwrap();
        assert_eq!(from_text, in_memory);
        let ok = from_text.outcome.unwrap();
        assert!(ok.transform.same_offset(&inputs.truth));
        assert_eq!(ok.errors.rmse, 0.0);
    }
}

#[test]
fn register_against_reassembled_tiles() {
    let cfg =
        TrialConfig { rows: 70, cols: 70, n_points: 12, offset: Some(CellOffset::new(3, 3)), ..TrialConfig::default() };
    let (inputs, pts) = points(&cfg, 2);
    let tiles = partition(&inputs.reference, 16, 24).unwrap();
    let rebuilt = assemble(&tiles).unwrap();
    let run = register(&rebuilt, &inputs.candidate, &pts, &RegisterOptions::default()).unwrap();
    let ok = run.outcome.unwrap();
    assert!(ok.transform.same_offset(&inputs.truth));
    // The merged mosaic covers the reference exactly since the candidate is cut from it.
    assert_eq!(ok.merge.grid, inputs.reference);
}

#[test]
fn noisy_candidate_needs_wider_gates() {
    let cfg = TrialConfig {
        rows: 80,
        cols: 80,
        n_points: 16,
        sigma: 0.05,
        offset: Some(CellOffset::new(-2, 9)),
        ..TrialConfig::default()
    };
    let (inputs, pts) = points(&cfg, 5);
    let strict = register(&inputs.reference, &inputs.candidate, &pts, &RegisterOptions::default()).unwrap();
    assert!(strict.outcome.is_err());

    let wide = RegisterOptions { tol_elev: Some(0.5), tol_edge: Some(0.5), ..RegisterOptions::default() };
    let run = register(&inputs.reference, &inputs.candidate, &pts, &wide).unwrap();
    let ok = run.outcome.unwrap();
    assert!(ok.transform.same_offset(&inputs.truth));
    assert!(ok.errors.rmse > 0.0 && ok.errors.rmse < 0.1, "{}", ok.errors.rmse);
    assert!(ok.errors.t_defined);
}
