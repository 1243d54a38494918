use std::collections::BTreeSet;

use proptest::prelude::*;
use staggerspill::config::PanelSection;
use staggerspill::panel_io::{read_panel, sort_ids, write_panel};
use staggerspill::ErrorKind;
use staggerspill_core::{Cohort, PanelDataset, PanelParts};

fn ids() -> impl Strategy<Value = Vec<String>> {
    prop_oneof![
        prop::collection::btree_set(-500i64..5000, 2..9)
            .prop_map(|s| s.into_iter().map(|v| v.to_string()).collect()),
        prop::collection::btree_set("[a-z][a-z0-9_]{0,4}", 2..9)
            .prop_map(|s| s.into_iter().collect()),
    ]
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1e6..1e6f64,
        any::<f64>().prop_filter("finite", |v| v.is_finite()),
        Just(0.0),
    ]
}

prop_compose! {
    fn parts()(
        ids in ids(),
        t in 2usize..6,
        start in 1900i64..2100,
        gaps in prop::collection::vec(1i64..4, 5),
    )(
        outcome in prop::collection::vec(finite(), ids.len() * t),
        cohort in prop::collection::vec(prop::option::of(2..=t), ids.len()),
        weight in prop::collection::vec(1e-3..1e5f64, ids.len()),
        stratum in prop::collection::vec(0u32..3, ids.len()),
        k in 0usize..3,
        basis in prop::collection::vec(finite(), ids.len() * 2),
        exposure_only in prop::collection::vec(prop::bool::weighted(0.2), ids.len()),
        ids in Just(ids),
        t in Just(t),
        start in Just(start),
        gaps in Just(gaps),
    ) -> PanelParts {
        let n = ids.len();
        let mut period_labels = vec![start];
        for g in gaps.iter().take(t - 1) {
            period_labels.push(period_labels.last().unwrap() + g);
        }
        // the reader only learns labels that occur, so compress to the used ones
        let used: Vec<u32> = stratum.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
        let names = ["east", "north", "west"];
        PanelParts {
            unit_ids: ids,
            period_labels,
            outcome,
            cohort: cohort
                .into_iter()
                .map(|c| c.map_or(Cohort::Never, Cohort::Adopts))
                .collect(),
            weight,
            stratum: stratum
                .iter()
                .map(|s| used.iter().position(|u| u == s).unwrap() as u32)
                .collect(),
            stratum_labels: used.iter().map(|&u| names[u as usize].to_string()).collect(),
            basis: basis.chunks(2).flat_map(|b| b[..k].to_vec()).collect(),
            basis_names: (0..k).map(|j| format!("x{j}")).collect(),
            exposure_only: exposure_only.into_iter().take(n).collect(),
            anticipation: 0,
        }
    }
}

proptest! {
    #[test]
    fn write_then_read_reproduces_the_dataset(parts in parts(), delta in 0usize..2) {
        let ds = PanelDataset::from_parts(PanelParts { anticipation: delta, ..parts }).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("panel.csv");
        write_panel(&ds, &path).unwrap();
        let back = read_panel(&path, &PanelSection::default(), delta).unwrap();
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn sorting_ids_is_idempotent_and_a_permutation(mut v in prop::collection::vec("-?[0-9a-c]{1,3}", 0..12)) {
        let before: BTreeSet<String> = v.iter().cloned().collect();
        sort_ids(&mut v);
        let once = v.clone();
        sort_ids(&mut v);
        prop_assert_eq!(&once, &v);
        prop_assert_eq!(before, v.iter().cloned().collect::<BTreeSet<_>>());
    }
}

#[test]
fn integer_ids_sort_numerically() {
    let mut v: Vec<String> = ["10", "9", "-1", "100"].map(String::from).to_vec();
    sort_ids(&mut v);
    assert_eq!(v, ["-1", "9", "10", "100"]);
    let mut v: Vec<String> = ["10", "9", "a"].map(String::from).to_vec();
    sort_ids(&mut v);
    assert_eq!(v, ["10", "9", "a"]);
}

fn read_text(text: &str) -> staggerspill::error::Result<PanelDataset> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("panel.csv");
    std::fs::write(&path, text).unwrap();
    read_panel(&path, &PanelSection::default(), 0)
}

fn rejected(text: &str, needle: &str) {
    let err = read_text(text).expect_err("panel should be rejected");
    assert_eq!(err.kind, ErrorKind::Validation);
    assert!(err.message.contains(needle), "{:?} lacks {needle:?}", err.message);
}

#[test]
fn cohort_spellings() {
    let ds = read_text(
        "unit,period,outcome,cohort\n\
         a,1,0,\na,2,0,\nb,1,0,never\nb,2,0,never\nc,1,0,2\nc,2,0,2\nd,1,0,9\nd,2,0,9\n",
    )
    .unwrap();
    let got: Vec<Cohort> = ds.cohorts().to_vec();
    assert_eq!(got, [Cohort::Never, Cohort::Never, Cohort::Adopts(2), Cohort::Never]);
    assert!(!ds.has_basis());
}

#[test]
fn malformed_panels_are_validation_errors() {
    rejected("unit,period,outcome,cohort\na,1,0,2\na,1,1,2\n", "duplicate row");
    rejected(
        "unit,period,outcome,cohort\na,1,0,2\na,2,0,2\nb,1,0,\n",
        "unbalanced panel",
    );
    rejected(
        "unit,period,outcome,cohort\na,1,0,2\na,2,0,3\n",
        "change over time",
    );
    rejected("unit,period,cohort\na,1,2\n", "\"outcome\"");
    rejected("unit,period,outcome,cohort\n", "no rows");
    rejected("unit,period,outcome,cohort\na,1,x,2\n", "not numeric");
    rejected("unit,period,outcome,cohort\na,1.5,0,2\n", "not an integer");
    rejected(
        "unit,period,outcome,cohort\na,1,0,2\na,3,0,2\nb,1,0,\nb,3,0,\n",
        "not a panel period",
    );
    rejected(
        "unit,period,outcome,cohort,weight\na,1,0,2,0\na,2,0,2,0\n",
        "positive",
    );
}

#[test]
fn missing_file_is_reported_as_such() {
    let err = read_panel(
        std::path::Path::new("/nonexistent/panel.csv"),
        &PanelSection::default(),
        0,
    )
    .unwrap_err();
    assert_eq!(err.kind, ErrorKind::Validation);
    assert!(err.message.starts_with("panel not found"));

    // a directory exists but cannot be read as a file
    let dir = tempfile::tempdir().unwrap();
    let err = read_panel(dir.path(), &PanelSection::default(), 0).unwrap_err();
    assert_ne!(err.kind, ErrorKind::Validation, "{}", err.message);
}
