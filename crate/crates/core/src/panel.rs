//! Balanced unit-by-period panels with staggered adoption cohorts.
//!
//! Periods are indexed `1..=T` and units `0..N`. A unit's cohort is the first
//! period in which it is treated; treatment is absorbing, so `D_it = 1{t >= G_i}`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Adoption time of a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Cohort {
    Adopts(usize),
    Never,
}

impl Cohort {
    pub fn period(self) -> Option<usize> {
        match self {
            Cohort::Adopts(g) => Some(g),
            Cohort::Never => None,
        }
    }

    pub fn is_never(self) -> bool {
        matches!(self, Cohort::Never)
    }
}

/// The part a unit plays in estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Member of adoption cohort `g`.
    Target(usize),
    /// Never-treated comparison and source unit.
    Source,
    /// Contributes to other units' exposure only.
    ExposureOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IssueCode {
    DimensionMismatch,
    NonFiniteOutcome,
    NonPositiveWeight,
    CohortOutOfRange,
    StratumOutOfRange,
    NonFiniteBasis,
    DuplicateRow,
    Unbalanced,
    NoSourceUnits,
    NoTargetUnits,
    ExposureOnlyNever,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::DimensionMismatch => "dimension_mismatch",
            IssueCode::NonFiniteOutcome => "non_finite_outcome",
            IssueCode::NonPositiveWeight => "non_positive_weight",
            IssueCode::CohortOutOfRange => "cohort_out_of_range",
            IssueCode::StratumOutOfRange => "stratum_out_of_range",
            IssueCode::NonFiniteBasis => "non_finite_basis",
            IssueCode::DuplicateRow => "duplicate_row",
            IssueCode::Unbalanced => "unbalanced_panel",
            IssueCode::NoSourceUnits => "no_never_treated",
            IssueCode::NoTargetUnits => "no_treated_cohort",
            IssueCode::ExposureOnlyNever => "exposure_only_never",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Issue {
    pub code: IssueCode,
    pub unit: Option<usize>,
    pub period: Option<usize>,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<Issue>,
    pub warnings: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error(
        &mut self,
        code: IssueCode,
        unit: Option<usize>,
        period: Option<usize>,
        message: String,
    ) {
        self.errors.push(Issue {
            code,
            unit,
            period,
            message,
        });
    }

    pub fn warn(
        &mut self,
        code: IssueCode,
        unit: Option<usize>,
        period: Option<usize>,
        message: String,
    ) {
        self.warnings.push(Issue {
            code,
            unit,
            period,
            message,
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for e in &self.errors {
            if !first {
                f.write_str("; ")?;
            }
            first = false;
            write!(f, "[{}] {}", e.code.as_str(), e.message)?;
        }
        if first {
            f.write_str("no errors")?;
        }
        Ok(())
    }
}

/// Raw fields from which a [`PanelDataset`] is validated and built.
#[derive(Debug, Clone, Default)]
pub struct PanelParts {
    pub unit_ids: Vec<String>,
    /// Calendar label of each period, ascending; period `t` is `period_labels[t-1]`.
    pub period_labels: Vec<i64>,
    /// Row-major `N x T` outcomes.
    pub outcome: Vec<f64>,
    pub cohort: Vec<Cohort>,
    /// Empty means unit weights.
    pub weight: Vec<f64>,
    /// Empty means a single degenerate stratum.
    pub stratum: Vec<u32>,
    pub stratum_labels: Vec<String>,
    /// Row-major `N x k` first-stage basis; empty when absent.
    pub basis: Vec<f64>,
    pub basis_names: Vec<String>,
    /// Empty means no exposure-only units.
    pub exposure_only: Vec<bool>,
    pub anticipation: usize,
}

/// Balanced panel. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    unit_ids: Vec<String>,
    period_labels: Vec<i64>,
    n_periods: usize,
    outcome: Vec<f64>,
    cohort: Vec<Cohort>,
    weight: Vec<f64>,
    stratum: Vec<u32>,
    stratum_labels: Vec<String>,
    basis: Vec<f64>,
    basis_names: Vec<String>,
    exposure_only: Vec<bool>,
    anticipation: usize,
}

/// Check every dataset invariant without building anything.
pub fn validate(parts: &PanelParts) -> ValidationReport {
    let mut report = ValidationReport::default();
    let n = parts.unit_ids.len();
    let t = parts.period_labels.len();
    if n == 0 || t == 0 {
        report.error(
            IssueCode::DimensionMismatch,
            None,
            None,
            "panel has no units or no periods".into(),
        );
        return report;
    }
    let dims = [
        ("outcome", parts.outcome.len(), n * t, false),
        ("cohort", parts.cohort.len(), n, false),
        ("weight", parts.weight.len(), n, true),
        ("stratum", parts.stratum.len(), n, true),
        ("exposure_only", parts.exposure_only.len(), n, true),
    ];
    for (name, got, want, optional) in dims {
        if got != want && !(optional && got == 0) {
            report.error(
                IssueCode::DimensionMismatch,
                None,
                None,
                format!("{name} has {got} entries, expected {want}"),
            );
        }
    }
    let k = parts.basis_names.len();
    if parts.basis.len() != n * k {
        report.error(
            IssueCode::DimensionMismatch,
            None,
            None,
            format!(
                "basis has {} entries, expected {}",
                parts.basis.len(),
                n * k
            ),
        );
    }
    if !report.is_ok() {
        return report;
    }
    for w in parts.period_labels.windows(2) {
        if w[0] >= w[1] {
            report.error(
                IssueCode::DimensionMismatch,
                None,
                None,
                "period labels must be strictly increasing".into(),
            );
            break;
        }
    }
    for (i, y) in parts.outcome.chunks(t).enumerate() {
        for (s, v) in y.iter().enumerate() {
            if !v.is_finite() {
                report.error(
                    IssueCode::NonFiniteOutcome,
                    Some(i),
                    Some(s + 1),
                    format!(
                        "outcome for unit {} period {} is not finite",
                        parts.unit_ids[i],
                        s + 1
                    ),
                );
            }
        }
    }
    for (i, &w) in parts.weight.iter().enumerate() {
        if !(w.is_finite() && w > 0.0) {
            report.error(
                IssueCode::NonPositiveWeight,
                Some(i),
                None,
                format!(
                    "weight for unit {} must be positive, got {w}",
                    parts.unit_ids[i]
                ),
            );
        }
    }
    for (i, c) in parts.cohort.iter().enumerate() {
        if let Cohort::Adopts(g) = *c {
            if g < 2 || g > t {
                report.error(
                    IssueCode::CohortOutOfRange,
                    Some(i),
                    None,
                    format!("cohort {g} for unit {} outside 2..={t}", parts.unit_ids[i]),
                );
            }
        }
    }
    let n_strata = parts.stratum_labels.len().max(1);
    for (i, &x) in parts.stratum.iter().enumerate() {
        if x as usize >= n_strata {
            report.error(
                IssueCode::StratumOutOfRange,
                Some(i),
                None,
                format!(
                    "stratum index {x} for unit {} has no label",
                    parts.unit_ids[i]
                ),
            );
        }
    }
    if parts.basis.iter().any(|v| !v.is_finite()) {
        report.error(
            IssueCode::NonFiniteBasis,
            None,
            None,
            "basis contains non-finite values".into(),
        );
    }
    let exposure_only = |i: usize| parts.exposure_only.get(i).copied().unwrap_or(false);
    for (i, c) in parts.cohort.iter().enumerate() {
        if exposure_only(i) && c.is_never() {
            report.warn(
                IssueCode::ExposureOnlyNever,
                Some(i),
                None,
                format!(
                    "unit {} is exposure-only but never adopts",
                    parts.unit_ids[i]
                ),
            );
        }
    }
    let has_source = (0..n).any(|i| parts.cohort[i].is_never() && !exposure_only(i));
    let has_target = (0..n).any(|i| !parts.cohort[i].is_never() && !exposure_only(i));
    if !has_source {
        report.warn(
            IssueCode::NoSourceUnits,
            None,
            None,
            "no never-treated units".into(),
        );
    }
    if !has_target {
        report.warn(
            IssueCode::NoTargetUnits,
            None,
            None,
            "no treated cohort".into(),
        );
    }
    report
}

impl PanelDataset {
    pub fn from_parts(mut parts: PanelParts) -> Result<Self> {
        let report = validate(&parts);
        if !report.is_ok() {
            return Err(Error::InvalidPanel(report));
        }
        let n = parts.unit_ids.len();
        if parts.weight.is_empty() {
            parts.weight = alloc::vec![1.0; n];
        }
        if parts.stratum.is_empty() {
            parts.stratum = alloc::vec![0; n];
        }
        if parts.stratum_labels.is_empty() {
            parts.stratum_labels = alloc::vec![String::from("all")];
        }
        if parts.exposure_only.is_empty() {
            parts.exposure_only = alloc::vec![false; n];
        }
        Ok(Self {
            n_periods: parts.period_labels.len(),
            unit_ids: parts.unit_ids,
            period_labels: parts.period_labels,
            outcome: parts.outcome,
            cohort: parts.cohort,
            weight: parts.weight,
            stratum: parts.stratum,
            stratum_labels: parts.stratum_labels,
            basis: parts.basis,
            basis_names: parts.basis_names,
            exposure_only: parts.exposure_only,
            anticipation: parts.anticipation,
        })
    }

    /// Back to raw parts, with defaults materialized.
    pub fn to_parts(&self) -> PanelParts {
        PanelParts {
            unit_ids: self.unit_ids.clone(),
            period_labels: self.period_labels.clone(),
            outcome: self.outcome.clone(),
            cohort: self.cohort.clone(),
            weight: self.weight.clone(),
            stratum: self.stratum.clone(),
            stratum_labels: self.stratum_labels.clone(),
            basis: self.basis.clone(),
            basis_names: self.basis_names.clone(),
            exposure_only: self.exposure_only.clone(),
            anticipation: self.anticipation,
        }
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    pub fn unit_id(&self, i: usize) -> &str {
        &self.unit_ids[i]
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn period_labels(&self) -> &[i64] {
        &self.period_labels
    }

    /// Outcome of unit `i` at period `t` (1-based).
    #[inline]
    pub fn y(&self, i: usize, t: usize) -> f64 {
        self.outcome[i * self.n_periods + t - 1]
    }

    pub fn outcome_row(&self, i: usize) -> &[f64] {
        &self.outcome[i * self.n_periods..(i + 1) * self.n_periods]
    }

    pub fn cohort(&self, i: usize) -> Cohort {
        self.cohort[i]
    }

    pub fn cohorts(&self) -> &[Cohort] {
        &self.cohort
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weight[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weight
    }

    pub fn stratum(&self, i: usize) -> u32 {
        self.stratum[i]
    }

    pub fn stratum_labels(&self) -> &[String] {
        &self.stratum_labels
    }

    pub fn has_basis(&self) -> bool {
        !self.basis_names.is_empty()
    }

    pub fn basis_names(&self) -> &[String] {
        &self.basis_names
    }

    pub fn basis(&self, i: usize) -> &[f64] {
        let k = self.basis_names.len();
        &self.basis[i * k..(i + 1) * k]
    }

    pub fn is_exposure_only(&self, i: usize) -> bool {
        self.exposure_only[i]
    }

    pub fn anticipation(&self) -> usize {
        self.anticipation
    }

    pub fn role(&self, i: usize) -> Role {
        if self.exposure_only[i] {
            return Role::ExposureOnly;
        }
        match self.cohort[i] {
            Cohort::Adopts(g) => Role::Target(g),
            Cohort::Never => Role::Source,
        }
    }

    /// Own treatment status `D_it`.
    pub fn treated(&self, i: usize, t: usize) -> bool {
        matches!(self.cohort[i], Cohort::Adopts(g) if t >= g)
    }

    /// Distinct adoption periods of target (non exposure-only) units, ascending.
    pub fn target_cohorts(&self) -> Vec<usize> {
        let mut gs: Vec<usize> = (0..self.n_units())
            .filter_map(|i| match self.role(i) {
                Role::Target(g) => Some(g),
                _ => None,
            })
            .collect();
        gs.sort_unstable();
        gs.dedup();
        gs
    }

    /// `(count, weighted mass)` of the units in cohort `g`.
    pub fn cohort_mass(&self, g: usize) -> (usize, f64) {
        let mut n = 0;
        let mut w = 0.0;
        for i in 0..self.n_units() {
            if self.role(i) == Role::Target(g) {
                n += 1;
                w += self.weight[i];
            }
        }
        (n, w)
    }

    /// `(count, weighted mass)` of never-treated source units.
    pub fn source_mass(&self) -> (usize, f64) {
        let mut n = 0;
        let mut w = 0.0;
        for i in 0..self.n_units() {
            if self.role(i) == Role::Source {
                n += 1;
                w += self.weight[i];
            }
        }
        (n, w)
    }

    /// Copy with every outcome mapped through `f(i, t, y)`.
    pub fn map_outcomes(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> Self {
        let mut out = self.clone();
        let t_len = self.n_periods;
        for (k, y) in out.outcome.iter_mut().enumerate() {
            *y = f(k / t_len, k % t_len + 1, *y);
        }
        out
    }

    /// Copy with a different anticipation window.
    pub fn with_anticipation(&self, delta: usize) -> Self {
        let mut out = self.clone();
        out.anticipation = delta;
        out
    }

    /// Copy with unit weights replaced.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        let mut parts = self.to_parts();
        parts.weight = weights;
        Self::from_parts(parts)
    }
}

/// `t0(g) = g - delta - 1`.
pub fn baseline_period(g: usize, delta: usize) -> Result<usize> {
    if g < delta + 2 {
        return Err(Error::PeriodOutOfRange(format!(
            "baseline period for cohort {g} with anticipation {delta} precedes the first period"
        )));
    }
    Ok(g - delta - 1)
}

/// `Y_it - Y_{i,t0}` for every unit.
pub fn long_difference(ds: &PanelDataset, t: usize, t0: usize) -> Result<Vec<f64>> {
    if t0 < 1 || t0 >= t || t > ds.n_periods() {
        return Err(Error::PeriodOutOfRange(format!(
            "long difference needs 1 <= t0 < t <= {}, got t={t}, t0={t0}",
            ds.n_periods()
        )));
    }
    Ok((0..ds.n_units())
        .map(|i| ds.y(i, t) - ds.y(i, t0))
        .collect())
}
