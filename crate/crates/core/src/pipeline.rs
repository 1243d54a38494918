//! End-to-end estimation: first stage, every cohort-event cell, diagnostics
//! and event-time aggregates, followed by optional inference.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::estimators::{
    aggregate_event_time, cs_att_benchmark, cse_never_treated_change, did_benchmark, dse_support,
    estimate_cse, estimate_cse_never_treated, estimate_dse, estimate_dte, estimate_local_pde,
    fit_cse_dose, fit_cse_saturated, fit_cse_structured, Component, ComponentEstimate, CseCoverage,
    EventTimeEstimate, FirstStageFit, RetainedSupport, Sample,
};
use crate::exposure::ExposurePath;
use crate::panel::{baseline_period, PanelDataset};

pub use crate::inference::{infer, InferenceConfig, InferenceReport};

#[derive(Debug, Clone, PartialEq)]
pub enum FirstStageKind {
    /// Never-treated cell means by period, stratum and exposure state.
    Saturated,
    /// Binary-positive response with basis interactions and a calendar-time spline.
    Structured { spline_df: usize },
    /// Period intercepts plus a linear response in the exposure dose, pooled
    /// over periods or period-specific. `doses[k]` is the dose of state `k`.
    Dose { doses: Vec<f64>, pooled: bool },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationConfig {
    /// Minimum cell count `m_N` for every support rule.
    pub min_cell: usize,
    /// Largest reported event time.
    pub event_max: usize,
    /// Also report the CSE one period before adoption.
    pub pre_period: bool,
    pub first_stage: FirstStageKind,
    /// Condition cells on strata.
    pub use_strata: bool,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        Self {
            min_cell: 5,
            event_max: 2,
            pre_period: true,
            first_stage: FirstStageKind::Saturated,
            use_strata: true,
        }
    }
}

/// Every component at one cohort-event cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellEstimate {
    pub g: usize,
    pub l: i32,
    pub t: usize,
    pub t0: usize,
    /// Same-state support; absent before adoption.
    pub support: Option<RetainedSupport>,
    pub cse_coverage: CseCoverage,
    pub dse: ComponentEstimate,
    pub cse: ComponentEstimate,
    pub dte: ComponentEstimate,
    pub local_pde: ComponentEstimate,
    pub did: ComponentEstimate,
    pub cs: ComponentEstimate,
}

impl CellEstimate {
    pub fn component(&self, c: Component) -> Option<&ComponentEstimate> {
        match c {
            Component::Dse => Some(&self.dse),
            Component::Cse => Some(&self.cse),
            Component::Dte => Some(&self.dte),
            Component::LocalPde => Some(&self.local_pde),
            Component::DidBench => Some(&self.did),
            Component::CsBench => Some(&self.cs),
            _ => None,
        }
    }

    /// Both DSE and CSE admissible (CSE alone before adoption).
    pub fn admissible(&self) -> bool {
        self.cse.admissible() && (self.l < 0 || self.dse.admissible())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CohortInfo {
    pub g: usize,
    pub n: usize,
    pub w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub config: EstimationConfig,
    pub n_units: usize,
    pub cohorts: Vec<CohortInfo>,
    pub cells: Vec<CellEstimate>,
    /// Reported event-time aggregates, ascending in `l`.
    pub event_time: Vec<EventTimeEstimate>,
    /// Event times without any admissible cohort.
    pub unreported: Vec<i32>,
    /// Never-treated spillover at each period `1..=T`.
    pub never_treated: Vec<ComponentEstimate>,
    /// Change in never-treated spillover between each cohort's baseline and adoption period.
    pub never_treated_change: Vec<ComponentEstimate>,
    pub fit: FirstStageFit,
}

impl Estimates {
    pub fn cell(&self, g: usize, l: i32) -> Option<&CellEstimate> {
        self.cells.iter().find(|c| c.g == g && c.l == l)
    }

    pub fn event(&self, l: i32) -> Option<&EventTimeEstimate> {
        self.event_time.iter().find(|e| e.l == l)
    }

    /// Flat list of every cohort-level and diagnostic record.
    pub fn records(&self) -> Vec<ComponentEstimate> {
        let mut out = Vec::new();
        for c in &self.cells {
            if c.l >= 0 {
                out.extend(
                    [&c.dse, &c.cse, &c.dte, &c.local_pde, &c.did, &c.cs]
                        .into_iter()
                        .cloned(),
                );
            } else {
                out.push(c.cse.clone());
            }
        }
        out.extend(self.never_treated.iter().cloned());
        out.extend(self.never_treated_change.iter().cloned());
        out
    }
}

/// Estimate every component on one panel and exposure path.
pub fn estimate(
    ds: &PanelDataset,
    path: &ExposurePath,
    cfg: &EstimationConfig,
) -> Result<Estimates> {
    let s = Sample::new(ds, path, cfg.min_cell, cfg.use_strata)?;
    let (n_source, _) = ds.source_mass();
    if n_source == 0 {
        return Err(Error::EmptyGroup("no never-treated units".into()));
    }
    let fit = match &cfg.first_stage {
        FirstStageKind::Saturated => fit_cse_saturated(&s)?,
        FirstStageKind::Structured { spline_df } => fit_cse_structured(&s, *spline_df)?,
        FirstStageKind::Dose { doses, pooled } => fit_cse_dose(&s, doses, *pooled)?,
    };
    let delta = ds.anticipation();
    let tn = ds.n_periods();
    let cohorts: Vec<CohortInfo> = ds
        .target_cohorts()
        .into_iter()
        .filter(|&g| baseline_period(g, delta).is_ok())
        .map(|g| {
            let (n, w) = ds.cohort_mass(g);
            CohortInfo { g, n, w }
        })
        .collect();
    if cohorts.is_empty() {
        return Err(Error::EmptyGroup(
            "no treated cohort with a valid baseline period".into(),
        ));
    }
    let l_min: i32 = if cfg.pre_period { -1 } else { 0 };
    let mut cells = Vec::new();
    for info in &cohorts {
        let g = info.g;
        let t0 = baseline_period(g, delta)?;
        for l in l_min..=cfg.event_max as i32 {
            let t = g as i64 + l as i64;
            if t < 2 || t as usize > tn {
                continue;
            }
            let t = t as usize;
            let (cse, cse_coverage) = estimate_cse(&fit, &s, g, l)?;
            let cell = if l >= 0 {
                let support = dse_support(&s, g, l)?;
                let dse = estimate_dse(&support);
                let dte = estimate_dte(&dse, &cse)?;
                CellEstimate {
                    g,
                    l,
                    t,
                    t0,
                    dse,
                    dte,
                    local_pde: estimate_local_pde(&s, g, l)?,
                    did: did_benchmark(&s, g, l)?,
                    cs: cs_att_benchmark(&s, g, l)?,
                    support: Some(support),
                    cse,
                    cse_coverage,
                }
            } else {
                let (gg, ll, tt) = (Some(g), Some(l), Some(t));
                CellEstimate {
                    g,
                    l,
                    t,
                    t0,
                    support: None,
                    cse,
                    cse_coverage,
                    dse: ComponentEstimate::empty(Component::Dse, gg, ll, tt),
                    dte: ComponentEstimate::empty(Component::Dte, gg, ll, tt),
                    local_pde: ComponentEstimate::empty(Component::LocalPde, gg, ll, tt),
                    did: ComponentEstimate::empty(Component::DidBench, gg, ll, tt),
                    cs: ComponentEstimate::empty(Component::CsBench, gg, ll, tt),
                }
            };
            cells.push(cell);
        }
    }
    let flat: Vec<ComponentEstimate> = cells
        .iter()
        .flat_map(|c| {
            [
                c.dse.clone(),
                c.cse.clone(),
                c.dte.clone(),
                c.did.clone(),
                c.cs.clone(),
            ]
        })
        .collect();
    let mass: Vec<(usize, f64)> = cohorts.iter().map(|c| (c.g, c.w)).collect();
    let mut event_time = Vec::new();
    let mut unreported = Vec::new();
    for l in l_min..=cfg.event_max as i32 {
        match aggregate_event_time(l, &flat, &mass) {
            Ok(e) => event_time.push(e),
            Err(Error::EmptyGroup(_)) => unreported.push(l),
            Err(e) => return Err(e),
        }
    }
    let never_treated = (1..=tn)
        .map(|t| estimate_cse_never_treated(&fit, &s, t))
        .collect::<Result<Vec<_>>>()?;
    let never_treated_change = cohorts
        .iter()
        .map(|c| cse_never_treated_change(&fit, &s, c.g))
        .collect::<Result<Vec<_>>>()?;
    Ok(Estimates {
        config: cfg.clone(),
        n_units: ds.n_units(),
        cohorts,
        cells,
        event_time,
        unreported,
        never_treated,
        never_treated_change,
        fit,
    })
}
