//! Influence-function inference: stacked estimating equations, spatial HAC
//! covariance, pointwise intervals and simultaneous bands.

mod intervals;
mod shac;
mod stack;

pub use intervals::{pointwise_ci, simultaneous_band, Band, Interval};
pub use shac::{shac_covariance, Distance, Kernel, ShacPlan};
pub use stack::{aggregate_rows, did_rows, Functional, Param, StackedSystem};

use alloc::format;
use alloc::vec::Vec;

pub use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::estimators::{Component, Sample};
use crate::exposure::ExposurePath;
use crate::panel::PanelDataset;
use crate::pipeline::Estimates;
use crate::stats::cube_root_ceil;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Fixed(f64),
    /// `ceil(N^(1/3))` in distance units.
    CubeRoot,
}

impl Bandwidth {
    pub fn resolve(self, n: usize) -> f64 {
        match self {
            Bandwidth::Fixed(b) => b,
            Bandwidth::CubeRoot => cube_root_ceil(n) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceConfig {
    pub kernel: Kernel,
    pub bandwidth: Bandwidth,
    pub alpha: f64,
    /// Gaussian draws for the simultaneous bands; zero disables them.
    pub band_draws: usize,
    pub seed: u64,
    /// Compare the analytic Jacobian with central finite differences.
    pub check_jacobian: bool,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            kernel: Kernel::Bartlett,
            bandwidth: Bandwidth::CubeRoot,
            alpha: 0.05,
            band_draws: 10_000,
            seed: 20240601,
            check_jacobian: false,
        }
    }
}

/// Identity of one influence-row column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnId {
    pub component: Component,
    pub g: Option<usize>,
    pub l: Option<i32>,
    pub t: Option<usize>,
    /// Event-time aggregate rather than a single cohort.
    pub aggregate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate {
    pub id: ColumnId,
    pub value: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub band_lo: Option<f64>,
    pub band_hi: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemDiagnostics {
    pub dimension: usize,
    /// `max |(1/N) sum_i q_i(theta_hat)|`; zero up to rounding.
    pub max_abs_moment: f64,
    pub jacobian_max_rel_err: Option<f64>,
    pub block_lower_triangular: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub n: usize,
    pub bandwidth: f64,
    pub alpha: f64,
    pub records: Vec<IntervalEstimate>,
    /// Sup-t multiplier per component over its event-time aggregates.
    pub bands: Vec<(Component, Band)>,
    pub system: SystemDiagnostics,
    pub columns: Vec<ColumnId>,
    /// `N x K` influence rows, one column per entry of `columns`.
    pub rows: DMatrix<f64>,
    /// Spatial HAC covariance of all columns.
    pub gamma: DMatrix<f64>,
    /// Independent-units covariance (self-pairs only) of all columns.
    pub gamma_iid: DMatrix<f64>,
}

impl InferenceReport {
    pub fn column(&self, id: &ColumnId) -> Option<usize> {
        self.columns.iter().position(|c| c == id)
    }

    pub fn record(
        &self,
        component: Component,
        g: Option<usize>,
        l: Option<i32>,
        aggregate: bool,
    ) -> Option<&IntervalEstimate> {
        self.records.iter().find(|r| {
            r.id.component == component && r.id.g == g && r.id.l == l && r.id.aggregate == aggregate
        })
    }

    /// Covariance used for a column's intervals: independent units for the
    /// Callaway-Sant'Anna benchmark, spatial HAC otherwise.
    pub fn variance(&self, k: usize) -> f64 {
        if self.columns[k].component == Component::CsBench {
            self.gamma_iid[(k, k)]
        } else {
            self.gamma[(k, k)]
        }
    }
}

/// Largest elementwise relative discrepancy `|a - b| / max(|a|, |b|)`, with
/// entries below `floor` in both matrices treated as agreeing zeros.
pub fn max_relative_error(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| {
            let scale = libm::fabs(x).max(libm::fabs(y));
            if scale <= floor {
                0.0
            } else {
                libm::fabs(x - y) / scale
            }
        })
        .fold(0.0, f64::max)
}

/// Inference with single-threaded spatial sums.
pub fn infer(
    ds: &PanelDataset,
    path: &ExposurePath,
    est: &Estimates,
    cfg: &InferenceConfig,
    dist: &Distance,
) -> Result<InferenceReport> {
    infer_with(ds, path, est, cfg, dist, &|plan, rows| {
        (0..plan.n()).map(|i| plan.neighbour_sum(rows, i)).collect()
    })
}

/// Evaluator of per-unit neighbour sums, in unit order.
pub type NeighbourSums = dyn Fn(&ShacPlan, &DMatrix<f64>) -> Vec<Vec<f64>>;

/// Inference with a caller-supplied evaluator for the per-unit neighbour sums,
/// which must return `plan.neighbour_sum(rows, i)` for every `i` in order.
pub fn infer_with(
    ds: &PanelDataset,
    path: &ExposurePath,
    est: &Estimates,
    cfg: &InferenceConfig,
    dist: &Distance,
    sums: &NeighbourSums,
) -> Result<InferenceReport> {
    let n = ds.n_units();
    if dist.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} distance units for {n} panel units",
            dist.n()
        )));
    }
    let s = Sample::new(ds, path, est.config.min_cell, est.config.use_strata)?;
    let sys = StackedSystem::build(s, est)?;
    let jac = sys.jacobian()?;
    let mean = sys.mean_moments(&sys.theta)?;
    let jacobian_max_rel_err = if cfg.check_jacobian {
        let fd = sys.jacobian_fd()?;
        Some(max_relative_error(&jac, &fd, 1e-12 * jac.amax().max(1.0)))
    } else {
        None
    };
    let system = SystemDiagnostics {
        dimension: sys.dim(),
        max_abs_moment: mean.amax(),
        jacobian_max_rel_err,
        block_lower_triangular: sys.is_block_lower_triangular(&jac),
    };

    let mut columns: Vec<ColumnId> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut functionals: Vec<(usize, Functional)> = Vec::new();
    let mut sums_of: Vec<(usize, usize, usize)> = Vec::new();
    let placeholder = Vec::new;

    let add = |id: ColumnId,
               value: f64,
               r: Vec<f64>,
               columns: &mut Vec<ColumnId>,
               values: &mut Vec<f64>,
               rows: &mut Vec<Vec<f64>>| {
        columns.push(id);
        values.push(value);
        rows.push(r);
        columns.len() - 1
    };

    for e in &est.event_time {
        let id = |component| ColumnId {
            component,
            g: None,
            l: Some(e.l),
            t: None,
            aggregate: true,
        };
        let mut comps = Vec::new();
        for c in [Component::Dse, Component::Cse] {
            if let Some(v) = e.value(c) {
                let k = add(
                    id(c),
                    v,
                    placeholder(),
                    &mut columns,
                    &mut values,
                    &mut rows,
                );
                functionals.push((
                    k,
                    Functional::EventTime {
                        component: c,
                        l: e.l,
                    },
                ));
                comps.push(k);
            }
        }
        if let (Some(v), [a, b]) = (e.dte, comps.as_slice()) {
            let k = add(
                id(Component::Dte),
                v,
                placeholder(),
                &mut columns,
                &mut values,
                &mut rows,
            );
            sums_of.push((k, *a, *b));
        }
        if e.l >= 0 {
            let mut parts = Vec::new();
            for &g in &e.cohorts {
                let cell = est.cell(g, e.l).ok_or_else(|| {
                    Error::InvalidArgument(format!("missing cell ({g}, {})", e.l))
                })?;
                let (r, tau) = did_rows(&s, g, cell.t, cell.t0)?;
                parts.push((g, tau, r));
            }
            let agg = aggregate_rows(&s, &parts);
            if let Some(v) = e.did {
                add(
                    id(Component::DidBench),
                    v,
                    agg.clone(),
                    &mut columns,
                    &mut values,
                    &mut rows,
                );
            }
            if let Some(v) = e.cs {
                add(
                    id(Component::CsBench),
                    v,
                    agg,
                    &mut columns,
                    &mut values,
                    &mut rows,
                );
            }
        }
    }
    for c in &est.cells {
        let id = |component| ColumnId {
            component,
            g: Some(c.g),
            l: Some(c.l),
            t: Some(c.t),
            aggregate: false,
        };
        let mut comps = Vec::new();
        for (comp, rec) in [(Component::Dse, &c.dse), (Component::Cse, &c.cse)] {
            if comp == Component::Dse && c.l < 0 {
                continue;
            }
            if let Some(v) = rec.value {
                let k = add(
                    id(comp),
                    v,
                    placeholder(),
                    &mut columns,
                    &mut values,
                    &mut rows,
                );
                functionals.push((
                    k,
                    Functional::Cell {
                        component: comp,
                        g: c.g,
                        l: c.l,
                    },
                ));
                comps.push(k);
            }
        }
        if let (Some(v), [a, b]) = (c.dte.value, comps.as_slice()) {
            let k = add(
                id(Component::Dte),
                v,
                placeholder(),
                &mut columns,
                &mut values,
                &mut rows,
            );
            sums_of.push((k, *a, *b));
        }
        if c.l >= 0 {
            if let (Some(dv), Some(cv)) = (c.did.value, c.cs.value) {
                let (r, _) = did_rows(&s, c.g, c.t, c.t0)?;
                add(
                    id(Component::DidBench),
                    dv,
                    r.clone(),
                    &mut columns,
                    &mut values,
                    &mut rows,
                );
                add(
                    id(Component::CsBench),
                    cv,
                    r,
                    &mut columns,
                    &mut values,
                    &mut rows,
                );
            }
        }
    }
    for e in &est.never_treated {
        if let (Some(t), Some(v)) = (e.t, e.value) {
            let id = ColumnId {
                component: Component::CseNeverTreated,
                g: None,
                l: None,
                t: Some(t),
                aggregate: false,
            };
            let k = add(id, v, placeholder(), &mut columns, &mut values, &mut rows);
            functionals.push((k, Functional::NeverTreated { t }));
        }
    }
    for e in &est.never_treated_change {
        if let (Some(g), Some(v)) = (e.g, e.value) {
            let id = ColumnId {
                component: Component::CseNeverTreatedChange,
                g: Some(g),
                l: e.l,
                t: e.t,
                aggregate: false,
            };
            let k = add(id, v, placeholder(), &mut columns, &mut values, &mut rows);
            functionals.push((k, Functional::NeverTreatedChange { g }));
        }
    }

    let kcols = columns.len();
    let mut phi = DMatrix::<f64>::zeros(n, kcols);
    let fs: Vec<Functional> = functionals.iter().map(|&(_, f)| f).collect();
    let stacked = sys.influence_rows(&jac, &fs)?;
    for (j, &(k, _)) in functionals.iter().enumerate() {
        phi.set_column(k, &stacked.column(j));
    }
    for (k, r) in rows.iter().enumerate() {
        if !r.is_empty() {
            for i in 0..n {
                phi[(i, k)] = r[i];
            }
        }
    }
    for &(k, a, b) in &sums_of {
        for i in 0..n {
            phi[(i, k)] = phi[(i, a)] + phi[(i, b)];
        }
    }

    let bandwidth = cfg.bandwidth.resolve(n);
    let plan = ShacPlan::new(dist, &cfg.kernel, bandwidth)?;
    let gamma = plan.assemble(&phi, &sums(&plan, &phi));
    let self_pairs = ShacPlan::new(dist, &cfg.kernel, 0.0)?;
    let gamma_iid = self_pairs.covariance(&phi)?;

    let mut report = InferenceReport {
        n,
        bandwidth,
        alpha: cfg.alpha,
        records: Vec::with_capacity(kcols),
        bands: Vec::new(),
        system,
        columns,
        rows: phi,
        gamma,
        gamma_iid,
    };
    for (k, &value) in values.iter().enumerate().take(kcols) {
        let ci = pointwise_ci(value, report.variance(k), n, cfg.alpha)?;
        report.records.push(IntervalEstimate {
            id: report.columns[k],
            value,
            se: ci.se,
            ci_lo: ci.lo,
            ci_hi: ci.hi,
            band_lo: None,
            band_hi: None,
        });
    }
    if cfg.band_draws > 0 {
        for comp in [
            Component::Dse,
            Component::Cse,
            Component::Dte,
            Component::DidBench,
            Component::CsBench,
        ] {
            let idx: Vec<usize> = (0..kcols)
                .filter(|&k| report.columns[k].aggregate && report.columns[k].component == comp)
                .collect();
            if idx.is_empty() {
                continue;
            }
            let cov = DMatrix::from_fn(idx.len(), idx.len(), |a, b| {
                let g = if comp == Component::CsBench {
                    &report.gamma_iid
                } else {
                    &report.gamma
                };
                g[(idx[a], idx[b])]
            });
            let band = match simultaneous_band(&cov, cfg.alpha, cfg.band_draws, cfg.seed) {
                Ok(b) => b,
                Err(Error::InvalidCovariance(_)) => continue,
                Err(e) => return Err(e),
            };
            for &k in &idx {
                let r = &mut report.records[k];
                r.band_lo = Some(r.value - band.multiplier * r.se);
                r.band_hi = Some(r.value + band.multiplier * r.se);
            }
            report.bands.push((comp, band));
        }
    }
    Ok(report)
}
