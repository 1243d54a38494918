use super::dgp::PotentialOutcomes;
use crate::panel::Cohort;
use crate::stats::WeightedMean;

/// Largest residual of `total = switch + spill_C` and `total = pure + spill`
/// over treated unit-periods.
pub fn verify_unit_taxonomy(po: &PotentialOutcomes) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..po.n_units() {
        let Cohort::Adopts(g) = po.cohort[i] else {
            continue;
        };
        for t in g..=po.n_periods {
            let q = po.realized_dose(i, t);
            let total = po.treated(i, t, g, q) - po.never(i, t, 0.0);
            let switch = po.treated(i, t, g, q) - po.never(i, t, q);
            let spill_c = po.never(i, t, q) - po.never(i, t, 0.0);
            let pure = po.treated(i, t, g, 0.0) - po.never(i, t, 0.0);
            let spill = po.treated(i, t, g, q) - po.treated(i, t, g, 0.0);
            worst = worst
                .max(libm::fabs(total - switch - spill_c))
                .max(libm::fabs(total - pure - spill));
        }
    }
    worst
}

/// Terms of the conventional DID decomposition at adoption for one cohort.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DidDecomposition {
    pub did: f64,
    pub pde: f64,
    pub ast: f64,
    pub base: f64,
    pub never_at_g: f64,
    pub never_at_t0: f64,
    pub parallel_trends: f64,
}

impl DidDecomposition {
    pub fn rhs(&self) -> f64 {
        self.pde + self.ast - self.base - self.never_at_g + self.never_at_t0 + self.parallel_trends
    }

    pub fn residual(&self) -> f64 {
        libm::fabs(self.did - self.rhs())
    }
}

/// Sample analogue of the DID decomposition for cohort `g` with baseline
/// `g - 1`; `None` if the cohort or the never-treated group is empty.
pub fn did_decomposition(po: &PotentialOutcomes, g: usize) -> Option<DidDecomposition> {
    if g < 2 || g > po.n_periods {
        return None;
    }
    let t0 = g - 1;
    let mut did_g = WeightedMean::default();
    let mut did_n = WeightedMean::default();
    let (mut pde, mut ast, mut base) = (
        WeightedMean::default(),
        WeightedMean::default(),
        WeightedMean::default(),
    );
    let (mut ng, mut n0) = (WeightedMean::default(), WeightedMean::default());
    let (mut pt_g, mut pt_n) = (WeightedMean::default(), WeightedMean::default());
    for i in 0..po.n_units() {
        let (qg, q0) = (po.realized_dose(i, g), po.realized_dose(i, t0));
        let pure_trend = po.never(i, g, 0.0) - po.never(i, t0, 0.0);
        let change = po.observed(i, g) - po.observed(i, t0);
        match po.cohort[i] {
            Cohort::Adopts(c) if c == g => {
                did_g.push(1.0, change);
                pde.push(1.0, po.treated(i, g, g, 0.0) - po.never(i, g, 0.0));
                ast.push(1.0, po.treated(i, g, g, qg) - po.treated(i, g, g, 0.0));
                base.push(1.0, po.never(i, t0, q0) - po.never(i, t0, 0.0));
                pt_g.push(1.0, pure_trend);
            }
            Cohort::Never => {
                did_n.push(1.0, change);
                ng.push(1.0, po.never(i, g, qg) - po.never(i, g, 0.0));
                n0.push(1.0, po.never(i, t0, q0) - po.never(i, t0, 0.0));
                pt_n.push(1.0, pure_trend);
            }
            _ => {}
        }
    }
    Some(DidDecomposition {
        did: did_g.mean()? - did_n.mean()?,
        pde: pde.mean()?,
        ast: ast.mean()?,
        base: base.mean()?,
        never_at_g: ng.mean()?,
        never_at_t0: n0.mean()?,
        parallel_trends: pt_g.mean()? - pt_n.mean()?,
    })
}
