use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use super::spline::natural_spline_basis;
use super::Sample;
use crate::error::{Error, Result};
use crate::exposure::ExposureState;
use crate::linalg::wls;
use crate::stats::WeightedMean;

/// Never-treated cell `(t, x, h)` with the weighted mean of `Y_t - Y_1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatedCell {
    pub t: usize,
    pub stratum: u32,
    pub h: ExposureState,
    pub n: usize,
    pub w: f64,
    pub mean: f64,
}

/// Nonparametric first stage: contrasts of never-treated cell means.
#[derive(Debug, Clone, PartialEq)]
pub struct SaturatedFit {
    pub min_cell: usize,
    pub cells: BTreeMap<(usize, u32, ExposureState), SaturatedCell>,
}

impl SaturatedFit {
    /// Cell with at least `min_cell` units.
    pub fn usable(&self, t: usize, x: u32, h: ExposureState) -> Option<&SaturatedCell> {
        self.cells.get(&(t, x, h)).filter(|c| c.n >= self.min_cell)
    }

    /// `c_t(x, h) = mu_t(x, h) - mu_t(x, 0)`, available when both cells are usable.
    pub fn contrast(&self, t: usize, x: u32, h: ExposureState) -> Option<f64> {
        if t == 1 {
            return h.is_zero().then_some(0.0);
        }
        let zero = self.usable(t, x, ExposureState::ZERO)?;
        if h.is_zero() {
            return Some(0.0);
        }
        Some(self.usable(t, x, h)?.mean - zero.mean)
    }
}

/// Structured first-stage design column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Intercept,
    Basis(usize),
    Spline(usize),
    /// Period intercept `1{t = u}`.
    Period(usize),
    /// Pooled exposure response `P_it`.
    Exposure,
    /// `P_it 1{t = u}`.
    ExposurePeriod(usize),
    /// `P_it V_ij`.
    ExposureBasis(usize),
}

impl Column {
    fn is_response(self) -> bool {
        matches!(
            self,
            Column::Exposure | Column::ExposurePeriod(_) | Column::ExposureBasis(_)
        )
    }
}

/// How an exposure state enters the response columns as `P_it`.
#[derive(Debug, Clone, PartialEq)]
pub enum ResponseShape {
    /// `P = 1{h != 0}`.
    Binary,
    /// `P = q(h)`, the dose of state `h`; index 0 is the zero state.
    Dose(Vec<f64>),
}

impl ResponseShape {
    pub fn value(&self, h: ExposureState) -> f64 {
        match self {
            ResponseShape::Binary => {
                if h.is_zero() {
                    0.0
                } else {
                    1.0
                }
            }
            ResponseShape::Dose(q) => q.get(h.0 as usize).copied().unwrap_or(0.0),
        }
    }
}

/// Parametric exposure-response model fitted by weighted least squares on
/// never-treated rows `R_it = Y_it - Y_i1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredFit {
    pub columns: Vec<Column>,
    /// Coefficient per column; `None` for aliased columns.
    pub coef: Vec<Option<f64>>,
    pub aliased: Vec<Column>,
    pub response: ResponseShape,
    pub spline_df: usize,
    pub n_periods: usize,
    pub min_cell: usize,
    /// Never-treated counts by `(t, stratum, state)`.
    pub counts: BTreeMap<(usize, u32, ExposureState), usize>,
}

impl StructuredFit {
    /// Full design row for basis `v` at period `t` in state `h`.
    pub fn design_row(&self, v: &[f64], t: usize, h: ExposureState) -> Vec<f64> {
        let spline = if self.spline_df > 0 {
            natural_spline_basis(t as f64, self.spline_df, 1.0, self.n_periods as f64)
        } else {
            Vec::new()
        };
        let pf = if t > 1 { self.response.value(h) } else { 0.0 };
        let at = |u: usize, x: f64| if u == t { x } else { 0.0 };
        self.columns
            .iter()
            .map(|c| match *c {
                Column::Intercept => 1.0,
                Column::Basis(j) => v[j],
                Column::Spline(k) => spline[k],
                Column::Period(u) => at(u, 1.0),
                Column::Exposure => pf,
                Column::ExposurePeriod(u) => at(u, pf),
                Column::ExposureBasis(j) => pf * v[j],
            })
            .collect()
    }

    fn count(&self, t: usize, x: u32, h: ExposureState) -> usize {
        self.counts.get(&(t, x, h)).copied().unwrap_or(0)
    }

    fn exposed_count(&self, t: usize, x: u32) -> usize {
        self.counts
            .range((t, x, ExposureState(1))..=(t, x, ExposureState(u8::MAX)))
            .map(|(_, n)| n)
            .sum()
    }

    /// Gradient of `c_t(v, h)` with respect to the full coefficient vector,
    /// `None` when the contrast is unavailable. A binary response needs
    /// `min_cell` exposed and unexposed never-treated units at `(t, x)`; a dose
    /// response needs them in state `h` and in the zero state.
    pub fn contrast_gradient(
        &self,
        v: &[f64],
        x: u32,
        t: usize,
        h: ExposureState,
    ) -> Option<Vec<f64>> {
        if t == 1 {
            return h.is_zero().then(|| vec![0.0; self.columns.len()]);
        }
        if self.count(t, x, ExposureState::ZERO) < self.min_cell {
            return None;
        }
        if h.is_zero() {
            return Some(vec![0.0; self.columns.len()]);
        }
        let exposed = match self.response {
            ResponseShape::Binary => self.exposed_count(t, x),
            ResponseShape::Dose(_) => self.count(t, x, h),
        };
        if exposed < self.min_cell {
            return None;
        }
        let main = self
            .columns
            .iter()
            .position(|c| *c == Column::ExposurePeriod(t))
            .or_else(|| self.columns.iter().position(|c| *c == Column::Exposure))?;
        self.coef[main]?;
        let row = self.design_row(v, t, h);
        Some(
            self.columns
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    if c.is_response() && self.coef[k].is_some() {
                        row[k]
                    } else {
                        0.0
                    }
                })
                .collect(),
        )
    }

    /// `c_t(v, h) = P(h) (beta_t + v' beta_V)`; aliased response columns count as zero.
    pub fn contrast(&self, v: &[f64], x: u32, t: usize, h: ExposureState) -> Option<f64> {
        let grad = self.contrast_gradient(v, x, t, h)?;
        let mut c = 0.0;
        for (k, gk) in grad.iter().enumerate() {
            if *gk != 0.0 {
                c += gk * self.coef[k].unwrap_or(0.0);
            }
        }
        Some(c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FirstStageFit {
    Saturated(SaturatedFit),
    Structured(StructuredFit),
}

impl FirstStageFit {
    /// Fitted contrast for unit `i` at period `t` in its realized state.
    pub fn contrast(&self, s: &Sample<'_>, i: usize, t: usize) -> Option<f64> {
        let h = s.path.state(i, t);
        match self {
            FirstStageFit::Saturated(f) => f.contrast(t, s.stratum(i), h),
            FirstStageFit::Structured(f) => f.contrast(s.ds.basis(i), s.stratum(i), t, h),
        }
    }

    pub fn aliased(&self) -> &[Column] {
        match self {
            FirstStageFit::Saturated(_) => &[],
            FirstStageFit::Structured(f) => &f.aliased,
        }
    }
}

/// Weighted never-treated cell means of `Y_t - Y_1` by `(t, stratum, state)`, `t = 2..=T`.
pub fn fit_cse_saturated(s: &Sample<'_>) -> Result<FirstStageFit> {
    let mut acc: BTreeMap<(usize, u32, ExposureState), WeightedMean> = BTreeMap::new();
    let mut any = false;
    for i in 0..s.n_units() {
        if !s.is_source(i) {
            continue;
        }
        any = true;
        let w = s.ds.weight(i);
        let y1 = s.ds.y(i, 1);
        for t in 2..=s.n_periods() {
            acc.entry((t, s.stratum(i), s.path.state(i, t)))
                .or_default()
                .push(w, s.ds.y(i, t) - y1);
        }
    }
    if !any {
        return Err(Error::EmptyGroup(
            "no never-treated units for the first stage".into(),
        ));
    }
    let cells = acc
        .into_iter()
        .map(|((t, x, h), m)| {
            let cell = SaturatedCell {
                t,
                stratum: x,
                h,
                n: m.count,
                w: m.weight,
                mean: m.mean().unwrap_or(0.0),
            };
            ((t, x, h), cell)
        })
        .collect();
    Ok(FirstStageFit::Saturated(SaturatedFit {
        min_cell: s.min_cell,
        cells,
    }))
}

/// Column layout of the structured first stage.
pub(crate) fn structured_columns(k: usize, spline_df: usize, n_periods: usize) -> Vec<Column> {
    let mut cols = vec![Column::Intercept];
    cols.extend((0..k).map(Column::Basis));
    cols.extend((0..spline_df).map(Column::Spline));
    cols.extend((2..=n_periods).map(Column::ExposurePeriod));
    cols.extend((0..k).map(Column::ExposureBasis));
    cols
}

fn fit_structured(s: &Sample<'_>, mut fit: StructuredFit) -> Result<FirstStageFit> {
    let tn = s.n_periods();
    let sources: Vec<usize> = (0..s.n_units()).filter(|&i| s.is_source(i)).collect();
    if sources.is_empty() {
        return Err(Error::EmptyGroup(
            "no never-treated units for the first stage".into(),
        ));
    }
    let p = fit.columns.len();
    let rows = sources.len() * tn;
    let mut x = DMatrix::<f64>::zeros(rows, p);
    let mut y = Vec::with_capacity(rows);
    let mut w = Vec::with_capacity(rows);
    let mut r = 0;
    for &i in &sources {
        let y1 = s.ds.y(i, 1);
        for t in 1..=tn {
            let h = s.path.state(i, t);
            *fit.counts.entry((t, s.stratum(i), h)).or_default() += 1;
            for (c, v) in fit.design_row(s.ds.basis(i), t, h).into_iter().enumerate() {
                x[(r, c)] = v;
            }
            y.push(s.ds.y(i, t) - y1);
            w.push(s.ds.weight(i));
            r += 1;
        }
    }
    let ls = wls(&x, &y, &w)?;
    fit.coef = (0..p).map(|c| ls.coef_of(c)).collect();
    fit.aliased = ls.aliased.iter().map(|&c| fit.columns[c]).collect();
    Ok(FirstStageFit::Structured(fit))
}

/// Binary-positive model: weighted least squares of `R_it` on an intercept,
/// basis main effects and a calendar-time spline, plus `P_it 1{t = u}` and
/// `P_it V_i` with `P_it = 1{H_it != 0}`, over never-treated rows `t = 1..=T`.
pub fn fit_cse_structured(s: &Sample<'_>, spline_df: usize) -> Result<FirstStageFit> {
    if !s.ds.has_basis() {
        return Err(Error::MissingBasis(
            "structured first stage needs basis columns".into(),
        ));
    }
    if spline_df == 0 {
        return Err(Error::InvalidArgument(
            "spline degrees of freedom must be positive".into(),
        ));
    }
    let tn = s.n_periods();
    let k = s.ds.basis_names().len();
    fit_structured(
        s,
        StructuredFit {
            columns: structured_columns(k, spline_df, tn),
            coef: Vec::new(),
            aliased: Vec::new(),
            response: ResponseShape::Binary,
            spline_df,
            n_periods: tn,
            min_cell: s.min_cell,
            counts: BTreeMap::new(),
        },
    )
}

/// Dose-response model: `R_it` on period intercepts and the dose `q(H_it)`,
/// with one slope (`pooled`) or one slope per period. `doses[k]` is the dose
/// of state `k`, and `doses[0]` must be zero.
pub fn fit_cse_dose(s: &Sample<'_>, doses: &[f64], pooled: bool) -> Result<FirstStageFit> {
    if doses.first() != Some(&0.0) || doses.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidArgument(
            "doses must be finite with dose 0 for the zero state".into(),
        ));
    }
    let tn = s.n_periods();
    if tn < 2 {
        return Err(Error::InvalidArgument(
            "dose first stage needs at least two periods".into(),
        ));
    }
    let mut columns: Vec<Column> = (2..=tn).map(Column::Period).collect();
    if pooled {
        columns.push(Column::Exposure);
    } else {
        columns.extend((2..=tn).map(Column::ExposurePeriod));
    }
    fit_structured(
        s,
        StructuredFit {
            columns,
            coef: Vec::new(),
            aliased: Vec::new(),
            response: ResponseShape::Dose(doses.to_vec()),
            spline_df: 0,
            n_periods: tn,
            min_cell: s.min_cell,
            counts: BTreeMap::new(),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::ExposurePath;
    use crate::panel::tests::parts;
    use crate::panel::{Cohort, PanelDataset};

    #[test]
    fn saturated_contrast_is_difference_of_means() {
        // never-treated at t = 2: exposed {2.0, 2.2}, unexposed {1.4, 1.6}
        let y2 = [2.0, 2.2, 1.4, 1.6];
        let mut y = vec![0.0; 8];
        for (i, v) in y2.iter().enumerate() {
            y[i * 2 + 1] = *v;
        }
        let ds = PanelDataset::from_parts(parts(4, 2, vec![Cohort::Never; 4], y)).unwrap();
        let mut st = vec![ExposureState::ZERO; 8];
        st[1] = ExposureState(2);
        st[3] = ExposureState(2);
        let path = ExposurePath::from_states(2, st);
        let s = Sample::new(&ds, &path, 2, false).unwrap();
        let fit = fit_cse_saturated(&s).unwrap();
        let c = fit.contrast(&s, 0, 2).unwrap();
        assert!((c - 0.6).abs() < 1e-12);
        assert_eq!(fit.contrast(&s, 2, 2), Some(0.0));
        let strict = Sample::new(&ds, &path, 3, false).unwrap();
        assert_eq!(
            fit_cse_saturated(&strict).unwrap().contrast(&strict, 0, 2),
            None
        );
    }

    #[test]
    fn structured_needs_basis() {
        let ds =
            PanelDataset::from_parts(parts(2, 2, vec![Cohort::Never; 2], vec![0.0; 4])).unwrap();
        let path = ExposurePath::from_states(2, vec![ExposureState::ZERO; 4]);
        let s = Sample::new(&ds, &path, 1, false).unwrap();
        assert!(matches!(
            fit_cse_structured(&s, 2),
            Err(Error::MissingBasis(_))
        ));
    }

    #[test]
    fn structured_without_exposure_aliases_response_columns() {
        let n = 6;
        let mut p = parts(
            n,
            4,
            vec![Cohort::Never; n],
            (0..24).map(|k| (k % 7) as f64).collect(),
        );
        p.basis_names = vec!["v".into()];
        p.basis = (0..n).map(|i| i as f64).collect();
        let ds = PanelDataset::from_parts(p).unwrap();
        let path = ExposurePath::from_states(4, vec![ExposureState::ZERO; 24]);
        let s = Sample::new(&ds, &path, 1, false).unwrap();
        let FirstStageFit::Structured(fit) = fit_cse_structured(&s, 2).unwrap() else {
            unreachable!()
        };
        assert!(fit.aliased.contains(&Column::ExposurePeriod(2)));
        assert!(fit.aliased.contains(&Column::ExposureBasis(0)));
        assert_eq!(fit.contrast(&[1.0], 0, 3, ExposureState::ZERO), Some(0.0));
        assert_eq!(fit.contrast(&[1.0], 0, 3, ExposureState(1)), None);
    }
}
