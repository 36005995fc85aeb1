use std::path::PathBuf;

use tactile_core::eval::{detection_table, region_summary};
use tactile_core::fixture::{session_from_counts, study_counts};
use tactile_core::model::DetectionConfig;
use tactile_core::session::{load, write_csv};

fn shipped_session_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/study_session.csv")
}

/// Set `REGENERATE_FIXTURES=1` to rewrite the shipped session from the counts.
#[test]
fn shipped_session_matches_counts() {
    let expected = write_csv(&session_from_counts(&study_counts()).unwrap());
    let path = shipped_session_path();
    if std::env::var_os("REGENERATE_FIXTURES").is_some() {
        std::fs::write(&path, &expected).unwrap();
    }
    let shipped = std::fs::read_to_string(&path).unwrap();
    assert!(shipped == expected, "fixtures/study_session.csv is stale");
}

#[test]
fn shipped_session_has_three_hundred_trials() {
    let log = load(shipped_session_path()).unwrap();
    assert_eq!(log.trials().len(), 300);
    assert!(log.trials().iter().all(|t| t.rows.len() == 3));
    let table = detection_table(&log, &DetectionConfig::default()).unwrap();
    assert_eq!(table.total().trials, 300);
    assert_eq!(region_summary(&table).unwrap().len(), 3);
}
