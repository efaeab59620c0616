use std::path::PathBuf;

use global_mppi::problems::pusher::{trajectory_csv, PushTScenario};

fn golden_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/pusht_golden.csv")
}

fn parse(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect()
}

/// Set `GMPPI_BLESS=1` to rewrite the stored trajectory.
#[test]
fn golden_trajectory() {
    let s = PushTScenario::default_scenario();
    let traj = s.rollout(s.golden_controls.as_ref().unwrap()).unwrap();
    let csv = trajectory_csv(&traj, s.dt);
    if std::env::var("GMPPI_BLESS").is_ok_and(|v| v == "1") {
        std::fs::write(golden_path(), &csv).unwrap();
    }
    let stored = std::fs::read_to_string(golden_path()).expect("golden file; run with GMPPI_BLESS=1 to create it");
    assert_eq!(csv.lines().next(), stored.lines().next());
    let (a, b) = (parse(&csv), parse(&stored));
    assert_eq!(a.len(), b.len());
    for (i, (ra, rb)) in a.iter().zip(&b).enumerate() {
        for (x, y) in ra.iter().zip(rb) {
            assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0), "row {i}: {x} vs {y}");
        }
    }
    let last = &a[a.len() - 1];
    assert!(last[1].abs() + last[2].abs() > 0.0, "slider never moved");
}

#[test]
fn stored_rows_are_seventeen_digit_floats() {
    let stored = std::fs::read_to_string(golden_path()).unwrap();
    for cell in stored.lines().skip(1).flat_map(|l| l.split(',')) {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{cell}");
    }
}
