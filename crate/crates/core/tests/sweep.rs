mod common;

use common::default_config;

use qbmaser::sweep::{read_sweep_csv, run_point, run_sweep, write_sweep_csv, Axis, GridPiece, SweepSpec};
use qbmaser::Scheme;

fn spec(axis: Axis, grid: Vec<GridPiece>) -> SweepSpec {
    SweepSpec {
        axis,
        grid,
        schemes: Scheme::ALL.to_vec(),
        base: default_config(&[]),
        target_cycle: 1,
        scheme_overrides: Default::default(),
        export_trajectories: false,
        note: None,
    }
}

#[test]
fn three_schemes_by_fifty_points() {
    let s = spec(Axis::Tau2, vec![GridPiece::Range { range: [1e-7, 1.1e-6, 2e-8] }]);
    let result = run_sweep(&s, 4).unwrap();
    assert_eq!(result.rows.len(), 150);
    for (k, row) in result.rows.iter().enumerate() {
        assert_eq!(row.scheme, Scheme::ALL[k / 50]);
        assert!(row.error.is_none(), "{row:?}");
        assert_eq!(row.metrics.unwrap().cycle_index, 0);
    }
    let values: Vec<f64> = result.rows[..50].iter().map(|r| r.value).collect();
    assert_eq!(values[0], 1e-7);
    assert_eq!(values[49], 1.08e-6);

    let mut buf = Vec::new();
    write_sweep_csv(&result.rows, &mut buf).unwrap();
    assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), result.rows);
}

#[test]
fn failed_point_is_marked_and_others_survive() {
    // 1e5 Hz lies below the internal loss, so that point cannot be run.
    let s = spec(Axis::KappaLow, vec![GridPiece::Value(1e5), GridPiece::Value(9.55e6)]);
    let mut s = s;
    s.scheme_overrides.insert(
        Scheme::Instantaneous,
        [("schedule.termination".to_string(), serde_json::json!({"fixed": 440e-9}))].into(),
    );
    s.schemes = vec![Scheme::Instantaneous];
    let result = run_sweep(&s, 2).unwrap();
    assert_eq!(result.rows.len(), 2);
    assert!(result.rows[1].error.is_none());
    let bad = &result.rows[0];
    assert!(bad.metrics.is_none());
    assert!(bad.error.as_deref().unwrap().contains("kappa_low"), "{:?}", bad.error);

    let mut buf = Vec::new();
    write_sweep_csv(&result.rows, &mut buf).unwrap();
    assert_eq!(read_sweep_csv(buf.as_slice()).unwrap(), result.rows);
}

#[test]
fn points_are_independent_of_the_sweep() {
    let mut s = spec(Axis::Tau1, vec![GridPiece::Logspace { logspace: (1e-8, 1e-6, 4) }]);
    s.target_cycle = 3;
    let serial = run_sweep(&s, 1).unwrap();
    let parallel = run_sweep(&s, 6).unwrap();
    assert_eq!(serial.rows, parallel.rows);
    let row = &parallel.rows[7];
    let (alone, _) = run_point(&s, row.scheme, row.value);
    assert_eq!(&alone, row);
    assert_eq!(row.metrics.unwrap().cycle_index, 2);
}

#[test]
fn kappa_axis_recomputes_auto_transition_time() {
    let s = spec(Axis::KappaLow, vec![GridPiece::Value(5e6)]);
    let cfg = s.point_config(Scheme::Linear, 5e6).unwrap().resolve().unwrap();
    assert!((cfg.schedule.tau_down - 2.0 / (std::f64::consts::TAU * 5e6)).abs() < 1e-20);
    assert_eq!(cfg.schedule.n_cycles, 1);
}

#[test]
fn shipped_presets_parse() {
    for name in ["fig4-tau2", "fig4-kappa", "fig5", "fig6"] {
        let text = std::fs::read_to_string(common::preset_path(name)).unwrap();
        let s: SweepSpec = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let grid = s.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(grid.len() > 10, "{name}");
    }
}
