use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write;

use nalgebra::DMatrix;

use super::dgp::{generate, Design, DgpConfig, N_PERIODS};
use super::identities::{did_decomposition, verify_unit_taxonomy};
use super::truth::finite_population_truth;
use crate::error::{Error, Result};
use crate::estimators::{dse_regression, Component, Sample};
use crate::inference::{infer_with, Bandwidth, Distance, InferenceConfig, Kernel, ShacPlan};
use crate::pipeline::{estimate, EstimationConfig, FirstStageKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Dse,
    Cse,
    Dte,
    /// Exposure-ignorant group-versus-never DID, scored against the DTE target.
    Did,
    /// Exposure-ignorant group-time ATT, scored against the DTE target.
    Cs,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Dse,
        Method::Cse,
        Method::Dte,
        Method::Did,
        Method::Cs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dse => "DSE",
            Method::Cse => "CSE",
            Method::Dte => "DTE",
            Method::Did => "DID",
            Method::Cs => "CS",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Method::Dse => "Proposed DSE",
            Method::Cse => "Proposed CSE",
            Method::Dte => "Proposed DTE",
            Method::Did => "Standard DID",
            Method::Cs => "Callaway and Sant'Anna",
        }
    }

    fn component(self) -> Component {
        match self {
            Method::Dse => Component::Dse,
            Method::Cse => Component::Cse,
            Method::Dte => Component::Dte,
            Method::Did => Component::DidBench,
            Method::Cs => Component::CsBench,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub dgp: DgpConfig,
    pub reps: usize,
    pub seed: u64,
    pub estimation: EstimationConfig,
    pub inference: InferenceConfig,
}

impl McConfig {
    /// Period-specific dose-response first stage on doses 0, 1, 2 without strata,
    /// `m = 5`, event times 0 to 2,
    /// Bartlett kernel with bandwidth `ceil(N^(1/3))`, no bands.
    pub fn new(design: Design, n: usize, reps: usize, seed: u64) -> Self {
        Self {
            dgp: DgpConfig::new(design, n),
            reps,
            seed,
            estimation: EstimationConfig {
                min_cell: 5,
                event_max: 2,
                pre_period: false,
                first_stage: FirstStageKind::Dose {
                    doses: alloc::vec![0.0, 1.0, 2.0],
                    pooled: false,
                },
                use_strata: false,
            },
            inference: InferenceConfig {
                kernel: Kernel::Bartlett,
                bandwidth: Bandwidth::CubeRoot,
                alpha: 0.05,
                band_draws: 0,
                seed,
                check_jacobian: false,
            },
        }
    }
}

/// One method's estimate at one event time of one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub l: i32,
    pub estimate: f64,
    pub truth: f64,
    pub covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationRecord {
    pub rep: u64,
    pub outcomes: Vec<MethodOutcome>,
    /// `(l, share of eligible cohort units in the admissible set)`; zero when unreported.
    pub retained_share: Vec<(i32, f64)>,
    /// Largest `|DTE - DSE - CSE|` over cells and event times.
    pub additivity_residual: f64,
    /// Largest relative gap between the regression and cell-mean DSE.
    pub regression_rel_err: f64,
    pub taxonomy_residual: f64,
    pub decomposition_residual: f64,
}

fn rel_gap(a: f64, b: f64) -> f64 {
    let scale = libm::fabs(a).max(libm::fabs(b));
    if scale == 0.0 {
        0.0
    } else {
        libm::fabs(a - b) / scale
    }
}

/// Serial neighbour sums for the spatial covariance.
pub fn serial_sums(plan: &ShacPlan, rows: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..plan.n()).map(|i| plan.neighbour_sum(rows, i)).collect()
}

/// Generate, estimate, infer and score one replication.
pub fn run_replication(cfg: &McConfig, rep: u64) -> Result<ReplicationRecord> {
    run_replication_with(cfg, rep, &serial_sums)
}

pub fn run_replication_with(
    cfg: &McConfig,
    rep: u64,
    sums: &crate::inference::NeighbourSums,
) -> Result<ReplicationRecord> {
    let draw = generate(&cfg.dgp, cfg.seed, rep)?;
    let est = estimate(&draw.ds, &draw.path, &cfg.estimation)?;
    let truth = finite_population_truth(&draw.po, &est);
    let report = infer_with(
        &draw.ds,
        &draw.path,
        &est,
        &cfg.inference,
        &Distance::Line(draw.positions.clone()),
        sums,
    )?;

    let mut outcomes = Vec::new();
    let mut retained_share = Vec::new();
    for l in 0..=cfg.estimation.event_max as i32 {
        let eligible: f64 = est
            .cohorts
            .iter()
            .filter(|c| c.g + l as usize <= N_PERIODS)
            .map(|c| c.w)
            .sum();
        let (Some(e), Some(tr)) = (est.event(l), truth.event(l)) else {
            retained_share.push((l, 0.0));
            continue;
        };
        let kept: f64 = est
            .cohorts
            .iter()
            .filter(|c| e.cohorts.contains(&c.g))
            .map(|c| c.w)
            .sum();
        retained_share.push((l, if eligible > 0.0 { kept / eligible } else { 0.0 }));
        for m in Method::ALL {
            let Some(value) = e.value(m.component()) else {
                continue;
            };
            let target = match m {
                Method::Dse => tr.dse,
                Method::Cse => tr.cse,
                _ => tr.dte,
            };
            let covered = report
                .record(m.component(), None, Some(l), true)
                .map(|r| r.ci_lo <= target && target <= r.ci_hi);
            outcomes.push(MethodOutcome {
                method: m,
                l,
                estimate: value,
                truth: target,
                covered,
            });
        }
    }

    let mut additivity = 0.0f64;
    for c in &est.cells {
        if let (Some(a), Some(b), Some(d)) = (c.dse.value, c.cse.value, c.dte.value) {
            additivity = additivity.max(libm::fabs(d - a - b));
        }
    }
    for e in &est.event_time {
        if let (Some(a), Some(b), Some(d)) = (e.dse, e.cse, e.dte) {
            additivity = additivity.max(libm::fabs(d - a - b));
        }
    }
    let s = Sample::new(
        &draw.ds,
        &draw.path,
        cfg.estimation.min_cell,
        cfg.estimation.use_strata,
    )?;
    let mut regression = 0.0f64;
    for c in est.cells.iter().filter(|c| c.l >= 0) {
        if let (Some(sup), Some(v)) = (&c.support, c.dse.value) {
            regression = regression.max(rel_gap(dse_regression(&s, sup)?, v));
        }
    }
    let mut decomposition = 0.0f64;
    for c in &est.cohorts {
        if let Some(d) = did_decomposition(&draw.po, c.g) {
            decomposition = decomposition.max(d.residual());
        }
    }
    Ok(ReplicationRecord {
        rep,
        outcomes,
        retained_share,
        additivity_residual: additivity,
        regression_rel_err: regression,
        taxonomy_residual: verify_unit_taxonomy(&draw.po),
        decomposition_residual: decomposition,
    })
}

/// Performance of one method, pooled over event times (`l = None`) or at one event time.
#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub method: Method,
    pub l: Option<i32>,
    /// Mean of `estimate - truth` over available (replication, event time) pairs.
    pub bias: f64,
    pub rmse: f64,
    /// Share of available intervals covering the truth.
    pub coverage: Option<f64>,
    /// Share of (replication, event time) pairs with an estimate.
    pub availability: f64,
    /// Mean retained share of eligible cohort mass.
    pub retained_share: f64,
    pub n_estimates: usize,
    pub n_intervals: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub design: Design,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub rows: Vec<McRow>,
    pub failures: Vec<(u64, String)>,
    pub max_additivity_residual: f64,
    pub max_regression_rel_err: f64,
    pub max_taxonomy_residual: f64,
    pub max_decomposition_residual: f64,
}

impl McReport {
    pub fn row(&self, method: Method, l: Option<i32>) -> Option<&McRow> {
        self.rows.iter().find(|r| r.method == method && r.l == l)
    }

    /// Pooled row for a method.
    pub fn pooled(&self, method: Method) -> Option<&McRow> {
        self.row(method, None)
    }
}

/// Aggregate replication results in replication order.
pub fn summarize(cfg: &McConfig, results: &[(u64, Result<ReplicationRecord>)]) -> McReport {
    let mut sorted: Vec<&(u64, Result<ReplicationRecord>)> = results.iter().collect();
    sorted.sort_by_key(|(r, _)| *r);
    let records: Vec<&ReplicationRecord> =
        sorted.iter().filter_map(|(_, r)| r.as_ref().ok()).collect();
    let failures = sorted
        .iter()
        .filter_map(|(k, r)| r.as_ref().err().map(|e| (*k, e.to_string())))
        .collect();
    let ls: Vec<i32> = (0..=cfg.estimation.event_max as i32).collect();
    let slots = |filter: Option<i32>| -> usize {
        let per = if filter.is_some() { 1 } else { ls.len() };
        sorted.len() * per
    };
    let mut rows = Vec::new();
    for m in Method::ALL {
        for filter in core::iter::once(None).chain(ls.iter().map(|&l| Some(l))) {
            let (mut sum, mut sq, mut k) = (0.0, 0.0, 0usize);
            let (mut hits, mut ints) = (0usize, 0usize);
            let (mut share, mut share_n) = (0.0, 0usize);
            for r in &records {
                for o in r
                    .outcomes
                    .iter()
                    .filter(|o| o.method == m && filter.is_none_or(|l| o.l == l))
                {
                    let e = o.estimate - o.truth;
                    sum += e;
                    sq += e * e;
                    k += 1;
                    if let Some(c) = o.covered {
                        ints += 1;
                        hits += c as usize;
                    }
                }
                for &(l, s) in r
                    .retained_share
                    .iter()
                    .filter(|(l, _)| filter.is_none_or(|f| *l == f))
                {
                    let _ = l;
                    share += s;
                    share_n += 1;
                }
            }
            let kf = k.max(1) as f64;
            let total = slots(filter);
            rows.push(McRow {
                method: m,
                l: filter,
                bias: if k > 0 { sum / kf } else { f64::NAN },
                rmse: if k > 0 { libm::sqrt(sq / kf) } else { f64::NAN },
                coverage: (ints > 0).then(|| hits as f64 / ints as f64),
                availability: if total > 0 {
                    k as f64 / total as f64
                } else {
                    0.0
                },
                retained_share: if share_n > 0 {
                    share / share_n as f64
                } else {
                    0.0
                },
                n_estimates: k,
                n_intervals: ints,
            });
        }
    }
    let max =
        |f: fn(&ReplicationRecord) -> f64| records.iter().map(|r| f(r)).fold(0.0f64, f64::max);
    McReport {
        design: cfg.dgp.design,
        n: cfg.dgp.n,
        reps: cfg.reps,
        seed: cfg.seed,
        rows,
        failures,
        max_additivity_residual: max(|r| r.additivity_residual),
        max_regression_rel_err: max(|r| r.regression_rel_err),
        max_taxonomy_residual: max(|r| r.taxonomy_residual),
        max_decomposition_residual: max(|r| r.decomposition_residual),
    }
}

/// Run every replication serially.
pub fn run_monte_carlo(cfg: &McConfig) -> Result<McReport> {
    if cfg.reps == 0 {
        return Err(Error::InvalidConfig(
            "at least one replication is required".into(),
        ));
    }
    let results: Vec<(u64, Result<ReplicationRecord>)> = (0..cfg.reps as u64)
        .map(|r| (r, run_replication(cfg, r)))
        .collect();
    Ok(summarize(cfg, &results))
}

fn cell(row: Option<&McRow>) -> String {
    match row {
        Some(r) if r.n_estimates > 0 => {
            let cov = r
                .coverage
                .map_or("   NA".to_string(), |c| format!("{c:5.3}"));
            format!("{:7.3} {:6.3} {}", r.bias, r.rmse, cov)
        }
        _ => format!("{:>7} {:>6} {:>5}", "NA", "NA", "NA"),
    }
}

fn table(title: &str, methods: &[Method], reports: &[McReport]) -> String {
    let designs: BTreeSet<Design> = reports.iter().map(|r| r.design).collect();
    let sizes: BTreeSet<usize> = reports.iter().map(|r| r.n).collect();
    let mut out = String::new();
    let _ = writeln!(out, "{title}");
    let mut head = format!("{:<6} {:<24}", "DGP", "Method");
    let mut sub = format!("{:<6} {:<24}", "", "");
    for n in &sizes {
        head.push_str(&format!(" | {:^20}", format!("N={n}")));
        sub.push_str(&format!(" | {:>7} {:>6} {:>5}", "Bias", "RMSE", "Cov"));
    }
    let _ = writeln!(out, "{head}");
    let _ = writeln!(out, "{sub}");
    for d in &designs {
        for m in methods {
            let mut line = format!("{:<6} {:<24}", d.as_str().to_ascii_uppercase(), m.label());
            for n in &sizes {
                let row = reports
                    .iter()
                    .find(|r| r.design == *d && r.n == *n)
                    .and_then(|r| r.pooled(*m));
                line.push_str(" | ");
                line.push_str(&cell(row));
            }
            let _ = writeln!(out, "{line}");
        }
    }
    out
}

/// Two text tables: benchmark deviations from the DTE target, then the
/// proposed estimators, pooled over event times.
pub fn format_tables(reports: &[McReport]) -> String {
    let mut out = table(
        "Exposure-ignorant benchmarks: deviation from the retained-support DTE target",
        &[Method::Did, Method::Cs],
        reports,
    );
    out.push('\n');
    out.push_str(&table(
        "Proposed estimators on retained support",
        &[Method::Dse, Method::Cse, Method::Dte],
        reports,
    ));
    out
}
