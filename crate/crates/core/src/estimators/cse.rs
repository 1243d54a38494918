use super::{Component, ComponentEstimate, FirstStageFit, Sample};
use crate::error::{Error, Result};
use crate::panel::baseline_period;
use crate::stats::WeightedMean;

/// How much of a target population the fitted contrast covers at one period.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CseCoverage {
    pub n_target: usize,
    pub n_covered: usize,
    pub w_target: f64,
    pub w_covered: f64,
}

impl CseCoverage {
    pub fn complete(&self) -> bool {
        self.n_target > 0 && self.n_covered == self.n_target
    }

    pub fn mass_share(&self) -> f64 {
        if self.w_target > 0.0 {
            self.w_covered / self.w_target
        } else {
            0.0
        }
    }
}

/// Weighted average of the fitted contrast over the units selected by `member`.
fn transported(
    fit: &FirstStageFit,
    s: &Sample<'_>,
    t: usize,
    member: impl Fn(usize) -> bool,
) -> (Option<f64>, CseCoverage) {
    let mut acc = WeightedMean::default();
    let mut cov = CseCoverage::default();
    for i in 0..s.n_units() {
        if !member(i) {
            continue;
        }
        let w = s.ds.weight(i);
        cov.n_target += 1;
        cov.w_target += w;
        if let Some(c) = fit.contrast(s, i, t) {
            cov.n_covered += 1;
            cov.w_covered += w;
            acc.push(w, c);
        }
    }
    let value = if cov.complete() { acc.mean() } else { None };
    (value, cov)
}

/// Transported plug-in CSE for cohort `g` at event time `l` (`l >= -1` allowed).
pub fn estimate_cse(
    fit: &FirstStageFit,
    s: &Sample<'_>,
    g: usize,
    l: i32,
) -> Result<(ComponentEstimate, CseCoverage)> {
    let t = s.target_period(g, l)?;
    let (value, cov) = transported(fit, s, t, |i| s.in_cohort(i, g));
    if cov.n_target == 0 {
        return Err(Error::EmptyGroup(alloc::format!("cohort {g} has no units")));
    }
    let n_source = (0..s.n_units()).filter(|&i| s.is_source(i)).count();
    Ok((
        ComponentEstimate {
            component: Component::Cse,
            g: Some(g),
            l: Some(l),
            t: Some(t),
            value,
            target_mass_retained: Some(cov.mass_share()),
            n_target: cov.n_target,
            n_source,
        },
        cov,
    ))
}

/// Within-source spillover `sum_{never} w c_t / W_inf`, reported only when the
/// fit covers every never-treated unit at `t`.
pub fn estimate_cse_never_treated(
    fit: &FirstStageFit,
    s: &Sample<'_>,
    t: usize,
) -> Result<ComponentEstimate> {
    if t < 1 || t > s.n_periods() {
        return Err(Error::PeriodOutOfRange(alloc::format!(
            "period {t} outside 1..={}",
            s.n_periods()
        )));
    }
    let (value, cov) = transported(fit, s, t, |i| s.is_source(i));
    if cov.n_target == 0 {
        return Err(Error::EmptyGroup("no never-treated units".into()));
    }
    Ok(ComponentEstimate {
        component: Component::CseNeverTreated,
        g: None,
        l: None,
        t: Some(t),
        value,
        target_mass_retained: Some(cov.mass_share()),
        n_target: cov.n_target,
        n_source: cov.n_target,
    })
}

/// `tau_inf(g) - tau_inf(t0(g))`.
pub fn cse_never_treated_change(
    fit: &FirstStageFit,
    s: &Sample<'_>,
    g: usize,
) -> Result<ComponentEstimate> {
    let t0 = baseline_period(g, s.delta())?;
    let a = estimate_cse_never_treated(fit, s, g)?;
    let b = estimate_cse_never_treated(fit, s, t0)?;
    let value = match (a.value, b.value) {
        (Some(x), Some(y)) => Some(x - y),
        _ => None,
    };
    Ok(ComponentEstimate {
        component: Component::CseNeverTreatedChange,
        g: Some(g),
        l: Some(0),
        t: Some(g),
        value,
        target_mass_retained: None,
        n_target: a.n_target,
        n_source: a.n_source,
    })
}
