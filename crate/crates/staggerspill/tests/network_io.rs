use std::path::Path;

use proptest::prelude::*;
use staggerspill::config::{NetworkRule, NetworkSection};
use staggerspill::network_io::{hop_distances, load_network};
use staggerspill::ErrorKind;
use staggerspill_core::inference::Distance;
use staggerspill_core::{Cohort, NetworkWeights, PanelDataset, PanelParts};

fn panel(ids: &[&str]) -> PanelDataset {
    let n = ids.len();
    PanelDataset::from_parts(PanelParts {
        unit_ids: ids.iter().map(|s| s.to_string()).collect(),
        period_labels: vec![1, 2],
        outcome: vec![0.0; 2 * n],
        cohort: (0..n)
            .map(|i| if i % 2 == 0 { Cohort::Adopts(2) } else { Cohort::Never })
            .collect(),
        ..Default::default()
    })
    .unwrap()
}

fn section(path: &Path) -> NetworkSection {
    NetworkSection {
        path: Some(path.to_path_buf()),
        ..Default::default()
    }
}

fn file(dir: &tempfile::TempDir, text: &str) -> std::path::PathBuf {
    let p = dir.path().join("net.csv");
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn default_is_the_line() {
    let ds = panel(&["a", "b", "c"]);
    let net = load_network(&NetworkSection::default(), &ds).unwrap();
    assert_eq!(net.rule, NetworkRule::Line);
    assert_eq!(net.weights, NetworkWeights::line(3));
    assert!(matches!(net.distance, Distance::Line(ref p) if p == &[1.0, 2.0, 3.0]));
}

#[test]
fn from_to_edge_list_with_row_normalization() {
    let ds = panel(&["a", "b", "c", "d"]);
    let dir = tempfile::tempdir().unwrap();
    let p = file(&dir, "from,to,weight\nb,a,2\nb,c,6\nd,c,1\nb,a,2\n");
    let mut cfg = section(&p);
    let raw = load_network(&cfg, &ds).unwrap();
    assert_eq!(raw.rule, NetworkRule::Edges);
    // duplicate edges add up
    assert_eq!(raw.weights.neighbours(1), &[(0, 4.0), (2, 6.0)]);
    assert!(raw.weights.neighbours(0).is_empty());

    cfg.row_normalize = true;
    let net = load_network(&cfg, &ds).unwrap();
    assert_eq!(net.weights.neighbours(1), &[(0, 0.4), (2, 0.6)]);
    assert_eq!(net.weights.neighbours(3), &[(2, 1.0)]);
    // hop distances ignore direction and weight
    assert_eq!(net.distance.get(0, 3), 3.0);
    assert_eq!(net.distance.get(3, 0), 3.0);
    assert_eq!(net.distance.get(2, 1), 1.0);
}

#[test]
fn unweighted_edges_default_to_one() {
    let ds = panel(&["1", "2", "3"]);
    let dir = tempfile::tempdir().unwrap();
    let p = file(&dir, "i,j\n1,2\n3,2\n");
    let net = load_network(&section(&p), &ds).unwrap();
    assert_eq!(net.weights.neighbours(0), &[(1, 1.0)]);
    assert_eq!(net.weights.neighbours(2), &[(1, 1.0)]);
}

#[test]
fn labelled_matrix_is_reordered_to_the_panel() {
    let ds = panel(&["a", "b", "c"]);
    let dir = tempfile::tempdir().unwrap();
    // c, b, a order: d(a,b)=1, d(a,c)=5, d(b,c)=2
    let p = file(&dir, "unit,c,b,a\nc,0,2,5\nb,2,0,1\na,5,1,0\n");
    let mut cfg = section(&p);
    cfg.cutoff = Some(2.0);
    let net = load_network(&cfg, &ds).unwrap();
    assert_eq!(net.rule, NetworkRule::Cutoff);
    assert_eq!(net.distance.get(0, 2), 5.0);
    assert_eq!(net.distance.get(0, 1), 1.0);
    assert_eq!(net.weights.neighbours(0), &[(1, 1.0)]);
    assert_eq!(net.weights.neighbours(1), &[(0, 1.0), (2, 1.0)]);

    cfg.row_normalize = true;
    let net = load_network(&cfg, &ds).unwrap();
    assert_eq!(net.weights.neighbours(1), &[(0, 0.5), (2, 0.5)]);
}

#[test]
fn bad_networks_are_validation_errors() {
    let ds = panel(&["a", "b", "c"]);
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, Option<f64>, Option<NetworkRule>, &str); 6] = [
        ("i,j,weight\na,b,-1\n", None, None, "nonnegative"),
        ("i,j\na,z\n", None, None, "unknown unit z"),
        ("unit,a,b,c\na,0,1,1\nb,1,0,1\nc,1,1,0\n", None, None, "cutoff"),
        ("unit,a,b\na,0,1\nb,1,0\n", Some(1.0), None, "missing from the distance matrix"),
        ("i,j\na,b\n", None, Some(NetworkRule::Cutoff), "does not match"),
        ("unit,a,b,c\na,0,1,1\nb,2,0,1\nc,1,1,0\n", Some(1.0), None, ""),
    ];
    for (text, cutoff, rule, needle) in cases {
        let p = file(&dir, text);
        let mut cfg = section(&p);
        cfg.cutoff = cutoff;
        cfg.rule = rule;
        let err = load_network(&cfg, &ds).expect_err(text);
        assert_eq!(err.kind, ErrorKind::Validation, "{text}: {}", err.message);
        assert!(err.message.contains(needle), "{text}: {}", err.message);
    }
}

/// Floyd-Warshall over the undirected unit-length graph.
fn floyd(n: usize, edges: &[(usize, usize)]) -> Vec<f64> {
    let mut d = vec![f64::INFINITY; n * n];
    for i in 0..n {
        d[i * n + i] = 0.0;
    }
    for &(i, j) in edges {
        d[i * n + j] = 1.0;
        d[j * n + i] = 1.0;
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i * n + k] + d[k * n + j];
                if via < d[i * n + j] {
                    d[i * n + j] = via;
                }
            }
        }
    }
    d
}

proptest! {
    #[test]
    fn hop_distances_match_floyd_warshall(
        n in 1usize..10,
        raw in prop::collection::vec((0usize..10, 0usize..10, 0.1..3.0f64), 0..20),
    ) {
        let edges: Vec<(usize, usize, f64)> = raw
            .into_iter()
            .map(|(i, j, w)| (i % n, j % n, w))
            .filter(|&(i, j, _)| i != j)
            .collect();
        let w = NetworkWeights::from_edges(n, edges.iter().copied()).unwrap();
        let d = hop_distances(&w);
        let want = floyd(n, &edges.iter().map(|&(i, j, _)| (i, j)).collect::<Vec<_>>());
        for i in 0..n {
            for j in 0..n {
                let got = d.get(i, j);
                let exp = want[i * n + j];
                if exp.is_finite() {
                    prop_assert_eq!(got, exp);
                } else {
                    prop_assert_eq!(got, f64::MAX);
                }
            }
        }
    }
}
