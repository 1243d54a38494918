//! Component estimators: DSE, CSE, DTE, local PDE, never-treated
//! diagnostics, spillover-ignorant benchmarks and event-time aggregation.

mod aggregate;
mod benchmark;
mod cse;
mod dse;
mod first_stage;
mod spline;

pub use aggregate::{aggregate_event_time, EventTimeEstimate};
pub use benchmark::{cs_att_benchmark, did_benchmark, estimate_local_pde};
pub use cse::{cse_never_treated_change, estimate_cse, estimate_cse_never_treated, CseCoverage};
pub use dse::{
    dse_regression, dse_support, estimate_dse, estimate_dte, RetainedSupport, SupportCell,
};
pub use first_stage::{
    fit_cse_dose, fit_cse_saturated, fit_cse_structured, Column, FirstStageFit, ResponseShape,
    SaturatedCell, SaturatedFit, StructuredFit,
};
pub use spline::natural_spline_basis;

use alloc::format;

use crate::error::{Error, Result};
use crate::exposure::{ExposurePath, ExposureState};
use crate::panel::{PanelDataset, Role};

/// Which estimand a record refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Dse,
    Cse,
    Dte,
    LocalPde,
    DidBench,
    CsBench,
    CseNeverTreated,
    CseNeverTreatedChange,
}

impl Component {
    pub fn as_str(self) -> &'static str {
        match self {
            Component::Dse => "DSE",
            Component::Cse => "CSE",
            Component::Dte => "DTE",
            Component::LocalPde => "localPDE",
            Component::DidBench => "DIDbench",
            Component::CsBench => "CSbench",
            Component::CseNeverTreated => "CSEneverT",
            Component::CseNeverTreatedChange => "dCSEneverT",
        }
    }
}

/// One estimate, or an explicit "not reported" record when `value` is `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentEstimate {
    pub component: Component,
    pub g: Option<usize>,
    pub l: Option<i32>,
    /// Calendar period the estimate refers to.
    pub t: Option<usize>,
    pub value: Option<f64>,
    /// Share of target mass on retained support, where that notion applies.
    pub target_mass_retained: Option<f64>,
    pub n_target: usize,
    pub n_source: usize,
}

impl ComponentEstimate {
    pub fn admissible(&self) -> bool {
        self.value.is_some()
    }

    pub(crate) fn empty(
        component: Component,
        g: Option<usize>,
        l: Option<i32>,
        t: Option<usize>,
    ) -> Self {
        Self {
            component,
            g,
            l,
            t,
            value: None,
            target_mass_retained: None,
            n_target: 0,
            n_source: 0,
        }
    }
}

/// DSE cell: stratum plus the exposure states at the target and baseline periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub stratum: u32,
    pub h_t: ExposureState,
    pub h_t0: ExposureState,
}

/// A panel together with its exposure path and support settings.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub ds: &'a PanelDataset,
    pub path: &'a ExposurePath,
    /// Minimum cell count `m_N`.
    pub min_cell: usize,
    /// Condition on strata; when false every unit is in stratum 0.
    pub use_strata: bool,
}

impl<'a> Sample<'a> {
    pub fn new(
        ds: &'a PanelDataset,
        path: &'a ExposurePath,
        min_cell: usize,
        use_strata: bool,
    ) -> Result<Self> {
        if path.n_units() != ds.n_units() || path.n_periods() != ds.n_periods() {
            return Err(Error::DimensionMismatch(format!(
                "exposure path is {}x{}, panel is {}x{}",
                path.n_units(),
                path.n_periods(),
                ds.n_units(),
                ds.n_periods()
            )));
        }
        if min_cell == 0 {
            return Err(Error::InvalidArgument(
                "minimum cell count must be positive".into(),
            ));
        }
        Ok(Self {
            ds,
            path,
            min_cell,
            use_strata,
        })
    }

    #[inline]
    pub fn stratum(&self, i: usize) -> u32 {
        if self.use_strata {
            self.ds.stratum(i)
        } else {
            0
        }
    }

    #[inline]
    pub fn role(&self, i: usize) -> Role {
        self.ds.role(i)
    }

    #[inline]
    pub fn is_source(&self, i: usize) -> bool {
        self.ds.role(i) == Role::Source
    }

    #[inline]
    pub fn in_cohort(&self, i: usize, g: usize) -> bool {
        self.ds.role(i) == Role::Target(g)
    }

    pub fn n_units(&self) -> usize {
        self.ds.n_units()
    }

    pub fn n_periods(&self) -> usize {
        self.ds.n_periods()
    }

    pub fn delta(&self) -> usize {
        self.ds.anticipation()
    }

    /// Target period `g + l`, checked against the panel length.
    pub fn target_period(&self, g: usize, l: i32) -> Result<usize> {
        let t = g as i64 + l as i64;
        if t < 1 || t as usize > self.n_periods() {
            return Err(Error::PeriodOutOfRange(format!(
                "g + l = {t} outside 1..={}",
                self.n_periods()
            )));
        }
        Ok(t as usize)
    }

    /// DSE cell key of unit `i` for target period `t` and baseline `t0`.
    #[inline]
    pub fn cell_key(&self, i: usize, t: usize, t0: usize) -> CellKey {
        CellKey {
            stratum: self.stratum(i),
            h_t: self.path.state(i, t),
            h_t0: self.path.state(i, t0),
        }
    }
}
