use proptest::prelude::*;

use cct_core::faultstudy::{FaultScenario, StudyOptions};
use cct_core::report::{emit_reports, read_csv, write_csv};
use cct_core::scenario::wscc9_tmib;
use cct_core::sweep::{find_optimum, run_sweep, Metric, ParamPath, SweepError, SweepRow, SweepSpec, SweepTable};

fn spec(sc: &FaultScenario, param: &str, lo: f64, hi: f64, step: f64) -> SweepSpec {
    SweepSpec::new(ParamPath::parse(sc, param).unwrap(), lo, hi, step).unwrap()
}

fn csv_text(table: &SweepTable) -> String {
    let mut buf = Vec::new();
    write_csv(table, &mut buf).unwrap();
    String::from_utf8(buf).unwrap()
}

#[test]
fn parallel_and_serial_sweeps_agree() {
    let sc = wscc9_tmib();
    let s = spec(&sc, "B_C", -1.0, 0.0, 0.25);
    let opts = StudyOptions::default();
    let serial = run_sweep(&sc, &s, &opts, 1).unwrap();
    let pooled = run_sweep(&sc, &s, &opts, 3).unwrap();
    let default = run_sweep(&sc, &s, &opts, 0).unwrap();
    assert_eq!(serial, pooled);
    assert_eq!(serial, default);
    assert_eq!(csv_text(&serial), csv_text(&pooled));
    let params: Vec<f64> = serial.rows.iter().map(|r| r.param).collect();
    assert_eq!(params, vec![-1.0, -0.75, -0.5, -0.25, 0.0]);
}

#[test]
fn inadmissible_everywhere() {
    // Generators lagging the infinite bus would have to absorb power.
    let mut sc = wscc9_tmib();
    sc.prefault_angles.insert(2, -60f64.to_radians());
    sc.prefault_angles.insert(3, -60f64.to_radians());
    let table = run_sweep(&sc, &spec(&sc, "G_C", 0.5, 1.5, 0.5), &StudyOptions::default(), 1).unwrap();
    assert_eq!(table.rows.len(), 3);
    assert!(!table.any_admissible());
    for r in &table.rows {
        assert!(r.verdicts.iter().any(|v| v == "pm_nonpositive"), "{:?}", r.verdicts);
        assert!(r.tau.is_none() && r.tau_h.is_none() && r.tau_a.is_none());
    }
    assert_eq!(find_optimum(&table.rows, Metric::Tau), Err(SweepError::NoAdmissible));
}

#[test]
fn admissible_rows_carry_all_metrics() {
    let sc = wscc9_tmib();
    let table = run_sweep(&sc, &spec(&sc, "G_C", 0.8, 1.2, 0.2), &StudyOptions::default(), 0).unwrap();
    for r in &table.rows {
        assert!(r.admissible, "{:?}", r.verdicts);
        assert!(r.delta_e.unwrap() > 0.0);
        assert!(r.tau.is_some() && r.tau_h.is_some() && r.tau_a.is_some());
        assert!(r.closest_uep.is_some());
    }
}

#[test]
fn grid_values_are_decimal_literals() {
    let sc = wscc9_tmib();
    let v = spec(&sc, "G_A", 0.0, 1.0, 0.1).values();
    assert_eq!(v.len(), 11);
    assert_eq!(v[3], 0.3);
    assert_eq!(v[10], 1.0);
    assert!(SweepSpec::new(ParamPath::parse(&sc, "G_A").unwrap(), 1.0, 0.0, 0.1).is_err());
}

#[test]
fn parameter_paths() {
    let sc = wscc9_tmib();
    assert_eq!(ParamPath::parse(&sc, "G_C").unwrap().bus, 8);
    assert_eq!(ParamPath::parse(&sc, "B:6").unwrap().label, "B_6");
    assert!(matches!(ParamPath::parse(&sc, "G_Z"), Err(SweepError::UnknownLoad(_))));
    assert!(matches!(ParamPath::parse(&sc, "X_A"), Err(SweepError::BadPath(_))));
    let p = ParamPath::parse(&sc, "B_B").unwrap();
    assert_eq!(p.current(&p.apply(&sc, -0.5)), -0.5);
}

#[test]
fn reports_are_written() {
    let sc = wscc9_tmib();
    let table = run_sweep(&sc, &spec(&sc, "G_C", 0.9, 1.0, 0.1), &StudyOptions::default(), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_reports(&table, None, dir.path()).unwrap();
    assert_eq!(files.len(), 2);
    let back = read_csv(std::fs::File::open(dir.path().join("sweep.csv")).unwrap()).unwrap();
    assert_eq!(back.rows, table.rows);
}

fn opt_value() -> impl Strategy<Value = Option<f64>> {
    prop_oneof![Just(None), Just(Some(f64::INFINITY)), any::<f64>().prop_filter("finite", |v| v.is_finite()).prop_map(Some)]
}

fn row() -> impl Strategy<Value = SweepRow> {
    (
        -100.0f64..100.0,
        opt_value(),
        opt_value(),
        opt_value(),
        opt_value(),
        opt_value(),
        any::<bool>(),
        prop::option::of(prop::collection::vec(-10.0f64..10.0, 2)),
        prop::collection::vec(prop::sample::select(vec!["tau_unbounded", "tauH_no_crossing", "no_uep", "islanded"]), 0..3),
    )
        .prop_map(|(param, tau, tau_h, tau_a, delta_e, e_c, admissible, closest_uep, v)| SweepRow {
            param,
            tau,
            tau_h,
            tau_a,
            delta_e,
            e_c,
            admissible,
            closest_uep,
            verdicts: v.into_iter().map(String::from).collect(),
        })
}

proptest! {
    #[test]
    fn csv_round_trip_is_exact(rows in prop::collection::vec(row(), 0..8)) {
        let table = SweepTable { param: String::new(), rows };
        let mut buf = Vec::new();
        write_csv(&table, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, table);
    }
}
