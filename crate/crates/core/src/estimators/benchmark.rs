use super::{Component, ComponentEstimate, Sample};
use crate::error::{Error, Result};
use crate::panel::baseline_period;
use crate::stats::WeightedMean;

/// Weighted long-difference means of cohort `g` and of never-treated units,
/// restricted to units passing `keep`.
fn group_means(
    s: &Sample<'_>,
    g: usize,
    t: usize,
    t0: usize,
    keep: impl Fn(usize) -> bool,
) -> (WeightedMean, WeightedMean) {
    let (mut a, mut b) = (WeightedMean::default(), WeightedMean::default());
    for i in 0..s.n_units() {
        let treated = s.in_cohort(i, g);
        if !(treated || s.is_source(i)) || !keep(i) {
            continue;
        }
        let d = s.ds.y(i, t) - s.ds.y(i, t0);
        if treated {
            a.push(s.ds.weight(i), d);
        } else {
            b.push(s.ds.weight(i), d);
        }
    }
    (a, b)
}

fn periods(s: &Sample<'_>, g: usize, l: i32) -> Result<(usize, usize)> {
    let t0 = baseline_period(g, s.delta())?;
    let t = s.target_period(g, l)?;
    if t <= t0 {
        return Err(Error::PeriodOutOfRange(alloc::format!(
            "target period {t} does not follow baseline {t0}"
        )));
    }
    Ok((t, t0))
}

/// Cohort-vs-never long-difference DID that ignores exposure.
pub fn did_benchmark(s: &Sample<'_>, g: usize, l: i32) -> Result<ComponentEstimate> {
    let (t, t0) = periods(s, g, l)?;
    let (a, b) = group_means(s, g, t, t0, |_| true);
    match (a.mean(), b.mean()) {
        (Some(x), Some(y)) => Ok(ComponentEstimate {
            component: Component::DidBench,
            g: Some(g),
            l: Some(l),
            t: Some(t),
            value: Some(x - y),
            target_mass_retained: Some(1.0),
            n_target: a.count,
            n_source: b.count,
        }),
        (None, _) => Err(Error::EmptyGroup(alloc::format!("cohort {g} has no units"))),
        (_, None) => Err(Error::EmptyGroup("no never-treated units".into())),
    }
}

/// Unconditional group-time ATT with never-treated comparisons. Without
/// covariates its point value is the DID contrast; it differs in its variance.
pub fn cs_att_benchmark(s: &Sample<'_>, g: usize, l: i32) -> Result<ComponentEstimate> {
    let mut e = did_benchmark(s, g, l)?;
    e.component = Component::CsBench;
    Ok(e)
}

/// DID restricted to units unexposed at both the baseline and target periods.
pub fn estimate_local_pde(s: &Sample<'_>, g: usize, l: i32) -> Result<ComponentEstimate> {
    let (t, t0) = periods(s, g, l)?;
    let isolated = |i: usize| s.path.state(i, t).is_zero() && s.path.state(i, t0).is_zero();
    let (a, b) = group_means(s, g, t, t0, isolated);
    let ok = a.count >= s.min_cell && b.count >= s.min_cell;
    let (all_a, _) = group_means(s, g, t, t0, |_| true);
    let value = if ok {
        Some(a.mean().unwrap_or(0.0) - b.mean().unwrap_or(0.0))
    } else {
        None
    };
    Ok(ComponentEstimate {
        component: Component::LocalPde,
        g: Some(g),
        l: Some(l),
        t: Some(t),
        value,
        target_mass_retained: (all_a.weight > 0.0).then(|| a.weight / all_a.weight),
        n_target: a.count,
        n_source: b.count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::{ExposurePath, ExposureState};
    use crate::panel::tests::parts;
    use crate::panel::{Cohort, PanelDataset};
    use alloc::vec;
    use alloc::vec::Vec;

    fn fixture(d: &[f64], cohorts: Vec<Cohort>, exposed: &[usize]) -> (PanelDataset, ExposurePath) {
        let n = d.len();
        let mut y = vec![0.0; n * 3];
        for (i, v) in d.iter().enumerate() {
            y[i * 3 + 2] = *v;
        }
        let ds = PanelDataset::from_parts(parts(n, 3, cohorts, y)).unwrap();
        let mut st = vec![ExposureState::ZERO; n * 3];
        for &i in exposed {
            st[i * 3 + 2] = ExposureState(1);
        }
        (ds, ExposurePath::from_states(3, st))
    }

    #[test]
    fn isolated_cells_hand_means() {
        // isolated treated {4, 6}, isolated never {1, 3}; exposed units carry noise
        let d = [4.0, 6.0, 100.0, 1.0, 3.0, -50.0];
        let c = vec![
            Cohort::Adopts(3),
            Cohort::Adopts(3),
            Cohort::Adopts(3),
            Cohort::Never,
            Cohort::Never,
            Cohort::Never,
        ];
        let (ds, path) = fixture(&d, c, &[2, 5]);
        let s = Sample::new(&ds, &path, 2, false).unwrap();
        assert_eq!(estimate_local_pde(&s, 3, 0).unwrap().value, Some(3.0));
    }

    #[test]
    fn empty_isolated_cell_inadmissible() {
        let d = [4.0, 1.0, 3.0];
        let c = vec![Cohort::Adopts(3), Cohort::Never, Cohort::Never];
        let (ds, path) = fixture(&d, c, &[0]);
        let s = Sample::new(&ds, &path, 1, false).unwrap();
        assert_eq!(estimate_local_pde(&s, 3, 0).unwrap().value, None);
    }

    #[test]
    fn benchmarks_share_point_value() {
        let d = [4.0, 6.0, 1.0, 3.0];
        let c = vec![
            Cohort::Adopts(3),
            Cohort::Adopts(3),
            Cohort::Never,
            Cohort::Never,
        ];
        let (ds, path) = fixture(&d, c, &[0, 3]);
        let s = Sample::new(&ds, &path, 1, false).unwrap();
        let a = did_benchmark(&s, 3, 0).unwrap();
        let b = cs_att_benchmark(&s, 3, 0).unwrap();
        assert_eq!(a.value, Some(3.0));
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn equal_means_give_zero() {
        let d = [2.0, 2.0, 2.0, 2.0];
        let c = vec![
            Cohort::Adopts(3),
            Cohort::Adopts(3),
            Cohort::Never,
            Cohort::Never,
        ];
        let (ds, path) = fixture(&d, c, &[]);
        let s = Sample::new(&ds, &path, 1, false).unwrap();
        assert_eq!(did_benchmark(&s, 3, 0).unwrap().value, Some(0.0));
    }
}
