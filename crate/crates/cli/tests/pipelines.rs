use tclab_cli::pipeline::{run_ergodic, run_exponents};
use tclab_cli::{Mode, RunConfig};
use tclab_core::CoarseLabel;

#[test]
fn default_counterexample_flags_no_line() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ergodic(&RunConfig::default(), dir.path()).unwrap();
    assert_eq!(out.lines.len(), 2);
    for l in &out.lines {
        assert!(
            !l.flagged_non_ergodic,
            "{:?}: {:?}",
            l.probe.direction, l.probe.decay
        );
    }
    let json = std::fs::read_to_string(dir.path().join("dispersion.json")).unwrap();
    assert!(json.contains("\"flagged_non_ergodic\": false"));
    let csv = std::fs::read_to_string(dir.path().join("averages_line_0.csv")).unwrap();
    // header + 2 horizons × 5 observables × 64 starts
    assert_eq!(csv.lines().count(), 1 + 2 * 5 * 64);
}

#[test]
fn skew_line_records_decay() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.cocycle.mode = Mode::Skew;
    cfg.ergodic.lines = vec![[1.0.into(), 0.0.into()]];
    let out = run_ergodic(&cfg, dir.path()).unwrap();
    let probe = &out.lines[0].probe;
    assert!(!out.lines[0].flagged_non_ergodic);
    for d in &probe.decay {
        assert!(
            d.long < d.short,
            "{}: {} -> {}",
            d.observable,
            d.short,
            d.long
        );
    }
}

#[test]
fn skew_exponents_record_missing_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.cocycle.mode = Mode::Skew;
    let out = run_exponents(&cfg, dir.path()).unwrap();
    assert!(!out.verdicts.rank_one);
    // only the first factor keeps a rank-one factor: its zero line is the t-axis
    assert_eq!(
        out.verdicts.missing_witness_labels,
        vec![CoarseLabel::PlusChi1, CoarseLabel::MinusChi1]
    );
    assert!(out.verdicts.all_pass());
    let csv = std::fs::read_to_string(dir.path().join("exponent_field.csv")).unwrap();
    assert!(csv.starts_with("label,point_id,s,t,T,estimate,closed_form,abs_error\n"));
    assert_eq!(csv.lines().count(), 1 + 4 * 2 * 64);
}

#[test]
fn product_exponents_are_homogeneous_without_rank_one_criterion() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.cocycle.delta = 0.0.into();
    let out = run_exponents(&cfg, dir.path()).unwrap();
    assert!(!out.verdicts.rank_one);
    assert!(out.verdicts.homogeneous);
    let text = std::fs::read_to_string(dir.path().join("verdicts.json")).unwrap();
    assert!(text.contains("\"rank_one\": false"));
}
