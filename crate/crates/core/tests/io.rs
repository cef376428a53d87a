use counterlase::integrate::EventSpec;
use counterlase::io::{
    events_table, read_file, read_table, trajectory_table, write_file, write_table, Table,
};
use counterlase::{simulate, ModelParams, SpinState, Tolerances};
use proptest::prelude::*;
use serde_json::json;

#[test]
fn trajectory_file_round_trips_with_metadata() {
    let p = ModelParams::transitional(1.53292);
    let specs = [EventSpec::extremum(0)];
    let traj = simulate(
        &p,
        &SpinState::new(0.01, 0.0, -0.49),
        (0.0, 200.0),
        Tolerances::SCAN,
        &specs,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let meta = json!({"params": p, "rtol": 1e-9});
    let path = dir.path().join("trajectory.csv");
    let table = trajectory_table(&traj, Some(0.5));
    write_file(&path, &meta, &table).unwrap();
    let (m, t) = read_file(&path).unwrap();
    assert_eq!(m, meta);
    assert_eq!(t, table);
    assert_eq!(t.rows.len(), 401);
    let last: f64 = t.column("gamma").unwrap()[400].parse().unwrap();
    assert_eq!(last, traj.y_end()[2]);
    let ev = events_table(&traj, &specs);
    assert_eq!(ev.rows.len(), traj.events.len());
}

#[test]
fn missing_metadata_line_is_an_error() {
    assert!(read_table("a,b\n1,2\n".as_bytes()).is_err());
}

proptest! {
    #[test]
    fn tables_round_trip(rows in prop::collection::vec(prop::collection::vec(-1e6..1e6f64, 3), 0..20)) {
        let mut t = Table::new(&["x", "y", "z"]);
        for r in &rows {
            t.push(r.iter());
        }
        let mut buf = Vec::new();
        write_table(&mut buf, &json!({"k": 1}), &t).unwrap();
        let (_, back) = read_table(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &t);
        for (r, b) in rows.iter().zip(&back.rows) {
            for (x, s) in r.iter().zip(b) {
                prop_assert_eq!(*x, s.parse::<f64>().unwrap());
            }
        }
    }
}
