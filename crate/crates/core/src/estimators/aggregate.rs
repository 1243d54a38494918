use alloc::vec::Vec;

use super::{Component, ComponentEstimate};
use crate::error::{Error, Result};

/// Event-time aggregate over the common admissible cohort set.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTimeEstimate {
    pub l: i32,
    /// Admissible cohorts, ascending.
    pub cohorts: Vec<usize>,
    /// `W_g / sum W_g'` over `cohorts`.
    pub weights: Vec<f64>,
    pub dse: Option<f64>,
    pub cse: Option<f64>,
    pub dte: Option<f64>,
    pub did: Option<f64>,
    pub cs: Option<f64>,
}

impl EventTimeEstimate {
    pub fn value(&self, c: Component) -> Option<f64> {
        match c {
            Component::Dse => self.dse,
            Component::Cse => self.cse,
            Component::Dte => self.dte,
            Component::DidBench => self.did,
            Component::CsBench => self.cs,
            _ => None,
        }
    }
}

fn find(estimates: &[ComponentEstimate], c: Component, g: usize, l: i32) -> Option<f64> {
    estimates
        .iter()
        .find(|e| e.component == c && e.g == Some(g) && e.l == Some(l))
        .and_then(|e| e.value)
}

/// Aggregate cohort-level estimates at event time `l` with weights proportional
/// to cohort mass. A cohort enters when both its DSE and CSE are admissible;
/// before adoption (`l < 0`) only the CSE is required. DSE, CSE, DTE and the
/// benchmarks all use the same cohorts and weights.
pub fn aggregate_event_time(
    l: i32,
    estimates: &[ComponentEstimate],
    cohort_mass: &[(usize, f64)],
) -> Result<EventTimeEstimate> {
    let mut cohorts = Vec::new();
    let mut mass = Vec::new();
    for &(g, w) in cohort_mass {
        let cse_ok = find(estimates, Component::Cse, g, l).is_some();
        let dse_ok = l < 0 || find(estimates, Component::Dse, g, l).is_some();
        if cse_ok && dse_ok {
            cohorts.push(g);
            mass.push(w);
        }
    }
    if cohorts.is_empty() {
        return Err(Error::EmptyGroup(alloc::format!(
            "no admissible cohort at event time {l}"
        )));
    }
    let total: f64 = mass.iter().sum();
    let weights: Vec<f64> = mass.iter().map(|w| w / total).collect();
    let combine = |c: Component| -> Option<f64> {
        let mut v = 0.0;
        for (g, w) in cohorts.iter().zip(&weights) {
            v += w * find(estimates, c, *g, l)?;
        }
        Some(v)
    };
    Ok(EventTimeEstimate {
        l,
        dse: combine(Component::Dse),
        cse: combine(Component::Cse),
        dte: combine(Component::Dte),
        did: combine(Component::DidBench),
        cs: combine(Component::CsBench),
        cohorts,
        weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn est(c: Component, g: usize, l: i32, v: Option<f64>) -> ComponentEstimate {
        let mut e = ComponentEstimate::empty(c, Some(g), Some(l), Some(g + l as usize));
        e.value = v;
        e
    }

    #[test]
    fn mass_weighted_mean() {
        let es = vec![
            est(Component::Dse, 3, 0, Some(1.0)),
            est(Component::Cse, 3, 0, Some(0.0)),
            est(Component::Dse, 4, 0, Some(3.0)),
            est(Component::Cse, 4, 0, Some(0.0)),
        ];
        let a = aggregate_event_time(0, &es, &[(3, 10.0), (4, 30.0)]).unwrap();
        assert_eq!(a.dse, Some(2.5));
        assert_eq!(a.weights, vec![0.25, 0.75]);
    }

    #[test]
    fn single_cohort_passes_through() {
        let es = vec![
            est(Component::Dse, 3, 1, Some(1.7)),
            est(Component::Cse, 3, 1, Some(0.4)),
            est(Component::Dte, 3, 1, Some(2.1)),
            est(Component::Dse, 4, 1, None),
            est(Component::Cse, 4, 1, Some(9.0)),
        ];
        let a = aggregate_event_time(1, &es, &[(3, 5.0), (4, 5.0)]).unwrap();
        assert_eq!(a.cohorts, vec![3]);
        assert_eq!(a.dse, Some(1.7));
        assert_eq!(a.dte, Some(2.1));
        assert_eq!(a.did, None);
    }

    #[test]
    fn empty_set_is_error() {
        let es = vec![
            est(Component::Dse, 3, 0, None),
            est(Component::Cse, 3, 0, Some(0.0)),
        ];
        assert!(aggregate_event_time(0, &es, &[(3, 1.0)]).is_err());
    }
}
