use alloc::vec::Vec;

use super::dgp::PotentialOutcomes;
use crate::panel::Cohort;
use crate::pipeline::Estimates;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTruth {
    pub g: usize,
    pub l: i32,
    pub dse: f64,
    pub cse: f64,
    pub dte: f64,
}

/// Retained-support event-time truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventTruth {
    pub l: i32,
    pub dse: f64,
    pub cse: f64,
    pub dte: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TruthTable {
    pub cells: Vec<CellTruth>,
    pub event_time: Vec<EventTruth>,
}

impl TruthTable {
    pub fn cell(&self, g: usize, l: i32) -> Option<&CellTruth> {
        self.cells.iter().find(|c| c.g == g && c.l == l)
    }

    pub fn event(&self, l: i32) -> Option<&EventTruth> {
        self.event_time.iter().find(|e| e.l == l)
    }
}

/// Cohort averages of `Y(g, H) - Y(inf, H)` and `Y(inf, H) - Y(inf, 0)` at
/// `t = g + l`, for every cell in `est`, and their aggregates over each
/// reported event time's admissible cohorts with the estimator's weights.
pub fn finite_population_truth(po: &PotentialOutcomes, est: &Estimates) -> TruthTable {
    let mut cells = Vec::new();
    for c in &est.cells {
        let (g, t) = (c.g, c.t);
        let (mut dse, mut cse, mut n) = (0.0, 0.0, 0usize);
        for i in 0..po.n_units() {
            if po.cohort[i] != Cohort::Adopts(g) {
                continue;
            }
            let q = po.realized_dose(i, t);
            dse += po.treated(i, t, g, q) - po.never(i, t, q);
            cse += po.never(i, t, q) - po.never(i, t, 0.0);
            n += 1;
        }
        let nf = n.max(1) as f64;
        let (dse, cse) = (dse / nf, cse / nf);
        cells.push(CellTruth {
            g,
            l: c.l,
            dse,
            cse,
            dte: dse + cse,
        });
    }
    let mut event_time = Vec::new();
    for e in &est.event_time {
        let (mut dse, mut cse) = (0.0, 0.0);
        for (g, w) in e.cohorts.iter().zip(&e.weights) {
            if let Some(c) = cells.iter().find(|c| c.g == *g && c.l == e.l) {
                dse += w * c.dse;
                cse += w * c.cse;
            }
        }
        event_time.push(EventTruth {
            l: e.l,
            dse,
            cse,
            dte: dse + cse,
        });
    }
    TruthTable { cells, event_time }
}
