//! Artifact writers. Cohorts and periods are reported by calendar label;
//! event times are offsets. Floats use the shortest round-trip form.

use std::path::Path;

use serde::Serialize;
use staggerspill_core::estimators::Component;
use staggerspill_core::exposure::{ExposureConfig, ExposurePath};
use staggerspill_core::inference::{IntervalEstimate, InferenceReport};
use staggerspill_core::simulate::{format_tables, McReport};
use staggerspill_core::{Estimates, PanelDataset};

use crate::error::{CliError, Result};

/// One line of `estimates.csv`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateRow {
    pub component: &'static str,
    pub g: Option<i64>,
    pub l: Option<i32>,
    pub t: Option<i64>,
    pub aggregate: bool,
    pub value: Option<f64>,
    pub admissible: bool,
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
    pub retained_mass: Option<f64>,
    pub n_target: Option<usize>,
    pub n_source: Option<usize>,
}

fn label(ds: &PanelDataset, t: Option<usize>) -> Option<i64> {
    t.map(|t| ds.period_labels()[t - 1])
}

fn find(
    inf: Option<&InferenceReport>,
    component: Component,
    g: Option<usize>,
    l: Option<i32>,
    t: Option<usize>,
    aggregate: bool,
) -> Option<&IntervalEstimate> {
    inf?.records.iter().find(|r| {
        r.id.component == component
            && r.id.g == g
            && r.id.l == l
            && r.id.aggregate == aggregate
            && (r.id.t.is_none() || t.is_none() || r.id.t == t)
    })
}

/// Cohort-level and diagnostic records followed by event-time aggregates.
pub fn estimate_rows(
    ds: &PanelDataset,
    est: &Estimates,
    inf: Option<&InferenceReport>,
) -> Vec<EstimateRow> {
    let mut out = Vec::new();
    for rec in est.records() {
        let iv = find(inf, rec.component, rec.g, rec.l, rec.t, false);
        out.push(EstimateRow {
            component: rec.component.as_str(),
            g: label(ds, rec.g),
            l: rec.l,
            t: label(ds, rec.t),
            aggregate: false,
            value: rec.value,
            admissible: rec.admissible(),
            se: iv.map(|r| r.se),
            ci_lo: iv.map(|r| r.ci_lo),
            ci_hi: iv.map(|r| r.ci_hi),
            band_lo: iv.and_then(|r| r.band_lo),
            band_hi: iv.and_then(|r| r.band_hi),
            retained_mass: rec.target_mass_retained,
            n_target: Some(rec.n_target),
            n_source: Some(rec.n_source),
        });
    }
    for e in &est.event_time {
        for c in [
            Component::Dse,
            Component::Cse,
            Component::Dte,
            Component::DidBench,
            Component::CsBench,
        ] {
            let Some(v) = e.value(c) else { continue };
            let iv = find(inf, c, None, Some(e.l), None, true);
            out.push(EstimateRow {
                component: c.as_str(),
                g: None,
                l: Some(e.l),
                t: None,
                aggregate: true,
                value: Some(v),
                admissible: true,
                se: iv.map(|r| r.se),
                ci_lo: iv.map(|r| r.ci_lo),
                ci_hi: iv.map(|r| r.ci_hi),
                band_lo: iv.and_then(|r| r.band_lo),
                band_hi: iv.and_then(|r| r.band_hi),
                retained_mass: None,
                n_target: None,
                n_source: None,
            });
        }
    }
    out
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| CliError::write(path, e))?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

/// Write a header-only file when there are no rows, so consumers always see the columns.
fn write_csv_or_header<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    if rows.is_empty() {
        let mut w = csv::Writer::from_path(path).map_err(|e| CliError::write(path, e))?;
        w.write_record(header).map_err(|e| CliError::write(path, e))?;
        w.flush().map_err(|e| CliError::write(path, e))
    } else {
        write_csv(path, rows)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::write(path, e))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::write(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::write(path, e))
}

#[derive(Serialize)]
struct EstimatesJson<'a> {
    n_units: usize,
    n_periods: usize,
    unreported_event_times: &'a [i32],
    inference: Option<InferenceJson>,
    records: &'a [EstimateRow],
}

#[derive(Serialize)]
struct InferenceJson {
    bandwidth: f64,
    alpha: f64,
    dimension: usize,
    max_abs_moment: f64,
    jacobian_max_rel_err: Option<f64>,
    block_lower_triangular: bool,
    bands: Vec<BandJson>,
}

#[derive(Serialize)]
struct BandJson {
    component: &'static str,
    multiplier: f64,
    psd_projected: bool,
}

pub fn write_estimates(
    dir: &Path,
    ds: &PanelDataset,
    est: &Estimates,
    inf: Option<&InferenceReport>,
) -> Result<()> {
    let rows = estimate_rows(ds, est, inf);
    write_csv(&dir.join("estimates.csv"), &rows)?;
    let json = EstimatesJson {
        n_units: ds.n_units(),
        n_periods: ds.n_periods(),
        unreported_event_times: &est.unreported,
        inference: inf.map(|r| InferenceJson {
            bandwidth: r.bandwidth,
            alpha: r.alpha,
            dimension: r.system.dimension,
            max_abs_moment: r.system.max_abs_moment,
            jacobian_max_rel_err: r.system.jacobian_max_rel_err,
            block_lower_triangular: r.system.block_lower_triangular,
            bands: r
                .bands
                .iter()
                .map(|(c, b)| BandJson {
                    component: c.as_str(),
                    multiplier: b.multiplier,
                    psd_projected: b.psd_projected,
                })
                .collect(),
        }),
        records: &rows,
    };
    write_json(&dir.join("estimates.json"), &json)
}

#[derive(Debug, Serialize)]
struct SupportRow {
    g: i64,
    l: i32,
    t: i64,
    t0: i64,
    stratum: String,
    h_t: String,
    h_t0: String,
    n_target: usize,
    w_target: f64,
    n_source: usize,
    w_source: f64,
    retained: bool,
    cell_retained_mass: f64,
    all_mass_retained: bool,
    cse_covered_share: f64,
}

const SUPPORT_HEADER: [&str; 15] = [
    "g",
    "l",
    "t",
    "t0",
    "stratum",
    "h_t",
    "h_t0",
    "n_target",
    "w_target",
    "n_source",
    "w_source",
    "retained",
    "cell_retained_mass",
    "all_mass_retained",
    "cse_covered_share",
];

/// One line per target-support cell of every post-adoption cohort-event pair.
pub fn write_support(
    dir: &Path,
    ds: &PanelDataset,
    est: &Estimates,
    xcfg: &ExposureConfig,
) -> Result<()> {
    let p = |t: usize| ds.period_labels()[t - 1];
    let mut rows = Vec::new();
    for c in &est.cells {
        let Some(sup) = &c.support else { continue };
        let tagged = sup
            .cells
            .iter()
            .map(|x| (x, true))
            .chain(sup.dropped.iter().map(|x| (x, false)));
        let mut all: Vec<_> = tagged.collect();
        all.sort_by_key(|(x, _)| x.key);
        for (x, retained) in all {
            rows.push(SupportRow {
                g: p(c.g),
                l: c.l,
                t: p(c.t),
                t0: p(c.t0),
                stratum: ds.stratum_labels()[x.key.stratum as usize].clone(),
                h_t: xcfg.label(x.key.h_t).to_string(),
                h_t0: xcfg.label(x.key.h_t0).to_string(),
                n_target: x.n_target,
                w_target: x.w_target,
                n_source: x.n_source,
                w_source: x.w_source,
                retained,
                cell_retained_mass: sup.retained_mass,
                all_mass_retained: sup.all_mass_retained,
                cse_covered_share: c.cse_coverage.mass_share(),
            });
        }
    }
    write_csv_or_header(&dir.join("support.csv"), &rows, &SUPPORT_HEADER)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchmarkRow {
    pub g: Option<i64>,
    pub l: i32,
    pub aggregate: bool,
    pub did: Option<f64>,
    pub did_se: Option<f64>,
    pub did_ci_lo: Option<f64>,
    pub did_ci_hi: Option<f64>,
    pub cs: Option<f64>,
    pub cs_se: Option<f64>,
    pub cs_ci_lo: Option<f64>,
    pub cs_ci_hi: Option<f64>,
    pub dse: Option<f64>,
    pub dte: Option<f64>,
    /// Benchmark minus DTE.
    pub gap: Option<f64>,
}

const BENCHMARK_HEADER: [&str; 14] = [
    "g",
    "l",
    "aggregate",
    "did",
    "did_se",
    "did_ci_lo",
    "did_ci_hi",
    "cs",
    "cs_se",
    "cs_ci_lo",
    "cs_ci_hi",
    "dse",
    "dte",
    "gap",
];

/// Both exposure-ignorant benchmarks on the admissible set, by cohort and by event time.
pub fn benchmark_rows(
    ds: &PanelDataset,
    est: &Estimates,
    inf: Option<&InferenceReport>,
) -> Vec<BenchmarkRow> {
    let mut out = Vec::new();
    let mut push = |g: Option<usize>,
                    l: i32,
                    aggregate: bool,
                    did: Option<f64>,
                    cs: Option<f64>,
                    dse: Option<f64>,
                    dte: Option<f64>| {
        let d = find(inf, Component::DidBench, g, Some(l), None, aggregate);
        let c = find(inf, Component::CsBench, g, Some(l), None, aggregate);
        out.push(BenchmarkRow {
            g: label(ds, g),
            l,
            aggregate,
            did,
            did_se: d.map(|r| r.se),
            did_ci_lo: d.map(|r| r.ci_lo),
            did_ci_hi: d.map(|r| r.ci_hi),
            cs,
            cs_se: c.map(|r| r.se),
            cs_ci_lo: c.map(|r| r.ci_lo),
            cs_ci_hi: c.map(|r| r.ci_hi),
            dse,
            dte,
            gap: did.zip(dte).map(|(a, b)| a - b),
        });
    };
    for c in est.cells.iter().filter(|c| c.l >= 0 && c.admissible()) {
        push(
            Some(c.g),
            c.l,
            false,
            c.did.value,
            c.cs.value,
            c.dse.value,
            c.dte.value,
        );
    }
    for e in est.event_time.iter().filter(|e| e.l >= 0) {
        push(None, e.l, true, e.did, e.cs, e.dse, e.dte);
    }
    out
}

pub fn write_benchmark(
    dir: &Path,
    ds: &PanelDataset,
    est: &Estimates,
    inf: Option<&InferenceReport>,
) -> Result<()> {
    let rows = benchmark_rows(ds, est, inf);
    write_csv_or_header(&dir.join("benchmark.csv"), &rows, &BENCHMARK_HEADER)
}

#[derive(Debug, Serialize)]
struct ExposureRow<'a> {
    unit: &'a str,
    period: i64,
    raw: f64,
    state: &'a str,
    dose: f64,
}

pub fn write_exposure(
    dir: &Path,
    ds: &PanelDataset,
    path: &ExposurePath,
    xcfg: &ExposureConfig,
) -> Result<()> {
    let mut rows = Vec::with_capacity(ds.n_units() * ds.n_periods());
    for i in 0..ds.n_units() {
        for t in 1..=ds.n_periods() {
            let s = path.state(i, t);
            rows.push(ExposureRow {
                unit: ds.unit_id(i),
                period: ds.period_labels()[t - 1],
                raw: path.raw(i, t),
                state: xcfg.label(s),
                dose: xcfg.dose_of(s),
            });
        }
    }
    write_csv(&dir.join("exposure.csv"), &rows)
}

#[derive(Debug, Serialize)]
struct McLine {
    design: &'static str,
    n: usize,
    reps: usize,
    seed: u64,
    method: &'static str,
    /// Empty for the row pooled over event times.
    l: Option<i32>,
    bias: f64,
    rmse: f64,
    coverage: Option<f64>,
    availability: f64,
    retained_share: f64,
    n_estimates: usize,
    n_intervals: usize,
}

#[derive(Debug, Serialize)]
struct IdentityLine {
    design: &'static str,
    n: usize,
    failed_replications: usize,
    max_additivity_residual: f64,
    max_regression_rel_err: f64,
    max_taxonomy_residual: f64,
    max_decomposition_residual: f64,
}

#[derive(Debug, Serialize)]
struct ReplicationLine {
    design: &'static str,
    n: usize,
    rep: u64,
    method: &'static str,
    l: i32,
    estimate: f64,
    truth: f64,
    covered: Option<bool>,
}

/// `mc_report.csv`, `mc_identities.csv` and `tables.txt`.
pub fn write_mc(dir: &Path, reports: &[McReport]) -> Result<()> {
    let mut lines = Vec::new();
    let mut ids = Vec::new();
    for r in reports {
        for row in &r.rows {
            lines.push(McLine {
                design: r.design.as_str(),
                n: r.n,
                reps: r.reps,
                seed: r.seed,
                method: row.method.as_str(),
                l: row.l,
                bias: row.bias,
                rmse: row.rmse,
                coverage: row.coverage,
                availability: row.availability,
                retained_share: row.retained_share,
                n_estimates: row.n_estimates,
                n_intervals: row.n_intervals,
            });
        }
        ids.push(IdentityLine {
            design: r.design.as_str(),
            n: r.n,
            failed_replications: r.failures.len(),
            max_additivity_residual: r.max_additivity_residual,
            max_regression_rel_err: r.max_regression_rel_err,
            max_taxonomy_residual: r.max_taxonomy_residual,
            max_decomposition_residual: r.max_decomposition_residual,
        });
    }
    write_csv(&dir.join("mc_report.csv"), &lines)?;
    write_csv(&dir.join("mc_identities.csv"), &ids)?;
    write_text(&dir.join("tables.txt"), &format_tables(reports))
}

/// Per-replication outcomes, one line per method and event time.
pub fn write_replications(
    dir: &Path,
    runs: &[(&McReport, &[crate::mc::Replication])],
) -> Result<()> {
    let mut lines = Vec::new();
    for (rep, results) in runs {
        for (_, r) in results.iter() {
            let Ok(r) = r else { continue };
            for o in &r.outcomes {
                lines.push(ReplicationLine {
                    design: rep.design.as_str(),
                    n: rep.n,
                    rep: r.rep,
                    method: o.method.as_str(),
                    l: o.l,
                    estimate: o.estimate,
                    truth: o.truth,
                    covered: o.covered,
                });
            }
        }
    }
    write_csv_or_header(
        &dir.join("replications.csv"),
        &lines,
        &["design", "n", "rep", "method", "l", "estimate", "truth", "covered"],
    )
}
