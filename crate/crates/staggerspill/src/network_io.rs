//! Network CSV: an edge list (`i, j[, weight]` or `from, to[, weight]`) or a
//! dense distance matrix with a header row of unit ids.
//!
//! Besides the interference weights, every network yields the pairwise
//! distance used by the spatial covariance: line positions, the distance
//! matrix itself, or shortest-path hop counts over the undirected edge graph.

use std::collections::{HashMap, VecDeque};
use std::path::Path;

use staggerspill_core::exposure::DistanceMatrix;
use staggerspill_core::inference::Distance;
use staggerspill_core::{NetworkWeights, PanelDataset};

use crate::config::{NetworkRule, NetworkSection};
use crate::error::{CliError, Result};

/// Hop distance between disconnected units: beyond any bandwidth.
const UNREACHABLE: f64 = f64::MAX;

#[derive(Debug, Clone)]
pub struct Network {
    pub rule: NetworkRule,
    pub weights: NetworkWeights,
    pub distance: Distance,
}

fn bad(msg: String) -> CliError {
    CliError::validation(msg)
}

fn index_of(ds: &PanelDataset) -> HashMap<&str, usize> {
    ds.unit_ids()
        .iter()
        .enumerate()
        .map(|(k, u)| (u.as_str(), k))
        .collect()
}

enum Raw {
    Edges(Vec<(String, String, f64)>),
    Matrix { ids: Vec<String>, rows: Vec<(Option<String>, Vec<f64>)> },
}

fn read_raw(path: &Path) -> Result<Raw> {
    let file = std::fs::File::open(path).map_err(|e| CliError::input("network", path, &e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(file);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::io(format!("cannot read network header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |names: &[&str]| header.iter().position(|h| names.contains(&h.as_str()));
    let num = |s: &str, line: usize| {
        s.parse::<f64>()
            .map_err(|_| bad(format!("network line {line}: {s:?} is not numeric")))
    };
    if let (Some(ci), Some(cj)) = (col(&["i", "from"]), col(&["j", "to"])) {
        let cw = col(&["weight", "w"]);
        let mut edges = Vec::new();
        for (k, rec) in rdr.records().enumerate() {
            let line = k + 2;
            let rec = rec.map_err(|e| bad(format!("network line {line}: {e}")))?;
            let get = |c: usize| {
                rec.get(c)
                    .ok_or_else(|| bad(format!("network line {line}: missing field")))
            };
            let w = match cw {
                Some(c) => num(get(c)?, line)?,
                None => 1.0,
            };
            edges.push((get(ci)?.to_string(), get(cj)?.to_string(), w));
        }
        return Ok(Raw::Edges(edges));
    }
    // A blank, `unit` or `id` corner cell means every row starts with its unit id.
    let labelled = header.first().is_some_and(|h| {
        h.is_empty() || ["unit", "id", "unit_id"].contains(&h.to_ascii_lowercase().as_str())
    });
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| bad(format!("network line {line}: {e}")))?;
        let fields: Vec<&str> = rec.iter().collect();
        let (label, values) = match (labelled, fields.split_first()) {
            (true, Some((l, rest))) => (Some(l.to_string()), rest),
            _ => (None, &fields[..]),
        };
        let values = values
            .iter()
            .map(|s| num(s, line))
            .collect::<Result<Vec<f64>>>()?;
        rows.push((label, values));
    }
    let ids = if labelled { header[1..].to_vec() } else { header };
    Ok(Raw::Matrix { ids, rows })
}

/// Distances in panel order from a matrix keyed by its own id order.
fn matrix_distances(
    ids: &[String],
    rows: &[(Option<String>, Vec<f64>)],
    ds: &PanelDataset,
) -> Result<DistanceMatrix> {
    let n = ds.n_units();
    if ids.len() != rows.len() {
        return Err(bad(format!(
            "distance matrix has {} columns but {} rows",
            ids.len(),
            rows.len()
        )));
    }
    for (k, (label, values)) in rows.iter().enumerate() {
        if values.len() != ids.len() {
            return Err(bad(format!("distance matrix row {} has {} entries", k + 1, values.len())));
        }
        if let Some(l) = label {
            if l != &ids[k] {
                return Err(bad(format!("distance matrix row {l} does not match column {}", ids[k])));
            }
        }
    }
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(k, u)| (u.as_str(), k)).collect();
    if pos.len() != ids.len() {
        return Err(bad("distance matrix repeats a unit id".into()));
    }
    let order: Vec<usize> = ds
        .unit_ids()
        .iter()
        .map(|u| {
            pos.get(u.as_str())
                .copied()
                .ok_or_else(|| bad(format!("unit {u} is missing from the distance matrix")))
        })
        .collect::<Result<_>>()?;
    if ids.len() != n {
        return Err(bad(format!(
            "distance matrix covers {} units, the panel has {n}",
            ids.len()
        )));
    }
    let mut d = vec![0.0; n * n];
    for (a, &ra) in order.iter().enumerate() {
        for (b, &rb) in order.iter().enumerate() {
            d[a * n + b] = rows[ra].1[rb];
        }
    }
    Ok(DistanceMatrix::new(n, d)?)
}

/// Shortest-path hop counts over the undirected graph of nonzero weights.
pub fn hop_distances(w: &NetworkWeights) -> DistanceMatrix {
    let n = w.n();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for i in 0..n {
        for &(j, _) in w.neighbours(i) {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let mut d = vec![UNREACHABLE; n * n];
    let mut queue = VecDeque::new();
    for s in 0..n {
        d[s * n + s] = 0.0;
        queue.push_back(s);
        while let Some(u) = queue.pop_front() {
            let du = d[s * n + u];
            for &v in &adj[u] {
                if d[s * n + v] == UNREACHABLE {
                    d[s * n + v] = du + 1.0;
                    queue.push_back(v);
                }
            }
        }
    }
    DistanceMatrix::new(n, d).expect("hop distances are symmetric with zero diagonal")
}

fn normalize_rows(w: &NetworkWeights) -> Result<NetworkWeights> {
    let edges = (0..w.n()).flat_map(|i| {
        let total: f64 = w.neighbours(i).iter().map(|&(_, v)| v).sum();
        w.neighbours(i)
            .iter()
            .map(move |&(j, v)| (i, j, if total != 0.0 { v / total } else { v }))
    });
    Ok(NetworkWeights::from_edges(w.n(), edges)?)
}

/// Build the network for a panel from the configured source and rule.
pub fn load_network(cfg: &NetworkSection, ds: &PanelDataset) -> Result<Network> {
    let n = ds.n_units();
    let line = || Network {
        rule: NetworkRule::Line,
        weights: NetworkWeights::line(n),
        distance: Distance::Line((1..=n).map(|p| p as f64).collect()),
    };
    let Some(path) = &cfg.path else {
        return match cfg.rule {
            None | Some(NetworkRule::Line) => Ok(line()),
            Some(_) => Err(bad("network.rule needs a network file (--network)".into())),
        };
    };
    if cfg.rule == Some(NetworkRule::Line) {
        return Ok(line());
    }
    match (read_raw(path)?, cfg.rule) {
        (Raw::Edges(edges), None | Some(NetworkRule::Edges)) => {
            let idx = index_of(ds);
            let find = |u: &str| {
                idx.get(u)
                    .copied()
                    .ok_or_else(|| bad(format!("network edge names unknown unit {u}")))
            };
            let triplets = edges
                .iter()
                .map(|(a, b, w)| Ok((find(a)?, find(b)?, *w)))
                .collect::<Result<Vec<_>>>()?;
            if triplets.iter().any(|&(_, _, w)| w < 0.0) {
                return Err(bad("network weights must be nonnegative".into()));
            }
            let mut weights = NetworkWeights::from_edges(n, triplets)?;
            if cfg.row_normalize {
                weights = normalize_rows(&weights)?;
            }
            let distance = Distance::Matrix(hop_distances(&weights));
            Ok(Network {
                rule: NetworkRule::Edges,
                weights,
                distance,
            })
        }
        (Raw::Matrix { ids, rows }, None | Some(NetworkRule::Cutoff)) => {
            let cutoff = cfg
                .cutoff
                .ok_or_else(|| bad("a distance matrix needs network.cutoff".into()))?;
            let dist = matrix_distances(&ids, &rows, ds)?;
            let weights = NetworkWeights::from_cutoff(&dist, cutoff, cfg.row_normalize)?;
            Ok(Network {
                rule: NetworkRule::Cutoff,
                weights,
                distance: Distance::Matrix(dist),
            })
        }
        (Raw::Edges(_), Some(r)) | (Raw::Matrix { .. }, Some(r)) => Err(bad(format!(
            "network file {} does not match rule {r:?}",
            path.display()
        ))),
    }
}
