use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::{CellKey, Component, ComponentEstimate, Sample};
use crate::error::{Error, Result};
use crate::linalg::wls;
use crate::panel::baseline_period;
use crate::stats::WeightedMean;

/// Counts, masses and long-difference means of one DSE cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportCell {
    pub key: CellKey,
    pub n_target: usize,
    pub n_source: usize,
    pub w_target: f64,
    pub w_source: f64,
    pub mean_target: Option<f64>,
    pub mean_source: Option<f64>,
}

/// Cells of the cohort-`g` target support split into retained and dropped
/// under the minimum-count rule.
#[derive(Debug, Clone, PartialEq)]
pub struct RetainedSupport {
    pub g: usize,
    pub l: i32,
    pub t: usize,
    pub t0: usize,
    pub min_cell: usize,
    /// Cells with `n_target >= m` and `n_source >= m`, ordered by key.
    pub cells: Vec<SupportCell>,
    /// Target-support cells failing the rule.
    pub dropped: Vec<SupportCell>,
    pub n_target: usize,
    pub w_target: f64,
    pub n_source: usize,
    pub w_source: f64,
    /// Weighted share of cohort mass on retained cells.
    pub retained_mass: f64,
    pub all_mass_retained: bool,
}

/// Retained support of the same-state comparison for cohort `g` at event time `l`.
pub fn dse_support(s: &Sample<'_>, g: usize, l: i32) -> Result<RetainedSupport> {
    let t0 = baseline_period(g, s.delta())?;
    let t = s.target_period(g, l)?;
    if t <= t0 {
        return Err(Error::PeriodOutOfRange(format!(
            "target period {t} does not follow baseline {t0}"
        )));
    }
    let mut cells: BTreeMap<CellKey, (WeightedMean, WeightedMean)> = BTreeMap::new();
    let (mut target, mut source) = (WeightedMean::default(), WeightedMean::default());
    for i in 0..s.n_units() {
        let is_target = s.in_cohort(i, g);
        if !is_target && !s.is_source(i) {
            continue;
        }
        let w = s.ds.weight(i);
        let d = s.ds.y(i, t) - s.ds.y(i, t0);
        let entry = cells.entry(s.cell_key(i, t, t0)).or_default();
        if is_target {
            entry.0.push(w, d);
            target.push(w, d);
        } else {
            entry.1.push(w, d);
            source.push(w, d);
        }
    }
    if target.count == 0 {
        return Err(Error::EmptyGroup(format!("cohort {g} has no units")));
    }
    if source.count == 0 {
        return Err(Error::EmptyGroup("no never-treated units".into()));
    }
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    let mut mass = 0.0;
    for (key, (a, b)) in cells {
        if a.count == 0 {
            continue;
        }
        let cell = SupportCell {
            key,
            n_target: a.count,
            n_source: b.count,
            w_target: a.weight,
            w_source: b.weight,
            mean_target: a.mean(),
            mean_source: b.mean(),
        };
        if a.count >= s.min_cell && b.count >= s.min_cell {
            mass += a.weight;
            kept.push(cell);
        } else {
            dropped.push(cell);
        }
    }
    let all = dropped.is_empty();
    Ok(RetainedSupport {
        g,
        l,
        t,
        t0,
        min_cell: s.min_cell,
        cells: kept,
        dropped,
        n_target: target.count,
        w_target: target.weight,
        n_source: source.count,
        w_source: source.weight,
        retained_mass: if all { 1.0 } else { mass / target.weight },
        all_mass_retained: all,
    })
}

/// Saturated same-state DSE; not reported unless all target mass is retained.
pub fn estimate_dse(support: &RetainedSupport) -> ComponentEstimate {
    let value = support.all_mass_retained.then(|| {
        let mut v = 0.0;
        for c in &support.cells {
            let (a, b) = (c.mean_target.unwrap_or(0.0), c.mean_source.unwrap_or(0.0));
            v += (c.w_target / support.w_target) * (a - b);
        }
        v
    });
    ComponentEstimate {
        component: Component::Dse,
        g: Some(support.g),
        l: Some(support.l),
        t: Some(support.t),
        value,
        target_mass_retained: Some(support.retained_mass),
        n_target: support.n_target,
        n_source: support.n_source,
    }
}

/// DSE recovered from the saturated long-difference regression
/// `Delta = sum_z a_z 1{Z=z} + sum_z b_z D 1{Z=z}` on the retained sample,
/// aggregated with the cohort cell shares.
pub fn dse_regression(s: &Sample<'_>, support: &RetainedSupport) -> Result<f64> {
    let (g, t, t0) = (support.g, support.t, support.t0);
    let index: BTreeMap<CellKey, usize> = support
        .cells
        .iter()
        .enumerate()
        .map(|(k, c)| (c.key, k))
        .collect();
    let k = index.len();
    if k == 0 {
        return Err(Error::EmptyGroup(format!(
            "no retained cells for cohort {g}"
        )));
    }
    let mut rows = Vec::new();
    for i in 0..s.n_units() {
        let treated = s.in_cohort(i, g);
        if !treated && !s.is_source(i) {
            continue;
        }
        if let Some(&z) = index.get(&s.cell_key(i, t, t0)) {
            rows.push((i, z, treated));
        }
    }
    let mut x = DMatrix::<f64>::zeros(rows.len(), 2 * k);
    let mut y = Vec::with_capacity(rows.len());
    let mut w = Vec::with_capacity(rows.len());
    for (r, &(i, z, treated)) in rows.iter().enumerate() {
        x[(r, z)] = 1.0;
        if treated {
            x[(r, k + z)] = 1.0;
        }
        y.push(s.ds.y(i, t) - s.ds.y(i, t0));
        w.push(s.ds.weight(i));
    }
    let fit = wls(&x, &y, &w)?;
    if !fit.aliased.is_empty() {
        return Err(Error::SingularSystem(format!(
            "saturated DSE regression aliased columns {:?}",
            fit.aliased
        )));
    }
    let retained: f64 = support.cells.iter().map(|c| c.w_target).sum();
    let mut v = 0.0;
    for (z, c) in support.cells.iter().enumerate() {
        v += c.w_target / retained * fit.coef[k + z];
    }
    Ok(v)
}

/// Post-estimation sum `DSE + CSE`.
pub fn estimate_dte(dse: &ComponentEstimate, cse: &ComponentEstimate) -> Result<ComponentEstimate> {
    if dse.g != cse.g || dse.l != cse.l {
        return Err(Error::InvalidArgument(format!(
            "DTE needs matching cells, got DSE {:?}/{:?} and CSE {:?}/{:?}",
            dse.g, dse.l, cse.g, cse.l
        )));
    }
    let value = match (dse.value, cse.value) {
        (Some(a), Some(b)) => Some(a + b),
        _ => None,
    };
    Ok(ComponentEstimate {
        component: Component::Dte,
        g: dse.g,
        l: dse.l,
        t: dse.t,
        value,
        target_mass_retained: dse.target_mass_retained,
        n_target: dse.n_target,
        n_source: dse.n_source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::{ExposurePath, ExposureState};
    use crate::panel::tests::parts;
    use crate::panel::{Cohort, PanelDataset};
    use alloc::vec;

    /// Six units, three periods; cohort 3 at rows 0-1, never-treated at rows 2-5.
    fn fixture() -> PanelDataset {
        let d = [3.0, 5.0, 1.0, 1.0, 2.0, 0.0];
        let mut y = vec![0.0; 18];
        for (i, v) in d.iter().enumerate() {
            y[i * 3 + 2] = *v;
        }
        let mut c = vec![Cohort::Never; 6];
        c[0] = Cohort::Adopts(3);
        c[1] = Cohort::Adopts(3);
        PanelDataset::from_parts(parts(6, 3, c, y)).unwrap()
    }

    #[test]
    fn hand_cell_means() {
        let ds = fixture();
        let path = ExposurePath::from_states(3, vec![ExposureState::ZERO; 18]);
        let s = Sample::new(&ds, &path, 2, false).unwrap();
        let sup = dse_support(&s, 3, 0).unwrap();
        assert!(sup.all_mass_retained);
        assert_eq!(estimate_dse(&sup).value, Some(3.0));
        assert!((dse_regression(&s, &sup).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_drops_cells() {
        let ds = fixture();
        let path = ExposurePath::from_states(3, vec![ExposureState::ZERO; 18]);
        let s = Sample::new(&ds, &path, 5, false).unwrap();
        let sup = dse_support(&s, 3, 0).unwrap();
        assert!(!sup.all_mass_retained);
        assert_eq!(sup.retained_mass, 0.0);
        assert_eq!(estimate_dse(&sup).value, None);
    }

    #[test]
    fn target_cell_missing_from_sources() {
        let ds = fixture();
        let mut states = vec![ExposureState::ZERO; 18];
        states[2] = ExposureState(1); // unit 0 exposed at t = 3
        let path = ExposurePath::from_states(3, states);
        let s = Sample::new(&ds, &path, 1, false).unwrap();
        let sup = dse_support(&s, 3, 0).unwrap();
        assert!(!sup.all_mass_retained);
        assert!((sup.retained_mass - 0.5).abs() < 1e-15);
        assert_eq!(sup.dropped[0].n_source, 0);
    }

    #[test]
    fn dte_requires_both() {
        let mut a = ComponentEstimate::empty(Component::Dse, Some(3), Some(0), Some(3));
        let mut b = ComponentEstimate::empty(Component::Cse, Some(3), Some(0), Some(3));
        a.value = Some(3.0);
        assert_eq!(estimate_dte(&a, &b).unwrap().value, None);
        b.value = Some(0.6);
        assert_eq!(estimate_dte(&a, &b).unwrap().value, Some(3.6));
        b.l = Some(1);
        assert!(estimate_dte(&a, &b).is_err());
    }
}
