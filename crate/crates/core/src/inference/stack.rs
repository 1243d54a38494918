use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimators::{CellKey, Component, FirstStageFit, Sample};
use crate::exposure::ExposureState;
use crate::pipeline::Estimates;

/// One primitive parameter of the stacked system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Param {
    /// Never-treated weighted mean long difference in a retained DSE cell.
    SourceMean {
        g: usize,
        l: i32,
        key: CellKey,
    },
    /// Never-treated weighted mean of `Y_t - Y_1` in a first-stage cell.
    CellMean {
        t: usize,
        stratum: u32,
        h: ExposureState,
    },
    /// Structured first-stage coefficient.
    Coefficient(usize),
    Dse {
        g: usize,
        l: i32,
    },
    Cse {
        g: usize,
        l: i32,
    },
    CseNeverTreated {
        t: usize,
    },
    /// Weighted cohort mass `W_g / N`.
    Share {
        g: usize,
    },
}

impl Param {
    /// Position of the parameter's block in the stacking order.
    pub fn block(&self) -> usize {
        match self {
            Param::SourceMean { .. } => 0,
            Param::CellMean { .. } | Param::Coefficient(_) => 1,
            Param::Dse { .. } => 2,
            Param::Cse { .. } => 3,
            Param::CseNeverTreated { .. } => 4,
            Param::Share { .. } => 5,
        }
    }
}

/// Smooth function of the parameters whose influence rows are wanted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Functional {
    /// Cohort-mass weighted average over the event-time admissible set.
    EventTime {
        component: Component,
        l: i32,
    },
    Cell {
        component: Component,
        g: usize,
        l: i32,
    },
    NeverTreated {
        t: usize,
    },
    NeverTreatedChange {
        g: usize,
    },
}

struct DseTarget {
    p: usize,
    g: usize,
    l: i32,
    t: usize,
    t0: usize,
}

struct CseTarget {
    p: usize,
    g: usize,
    t: usize,
}

enum FirstStageBlock {
    Saturated(BTreeMap<(usize, u32, ExposureState), usize>),
    Structured {
        /// `(design column, parameter index)` for each kept column.
        kept: Vec<(usize, usize)>,
        /// Per unit (sources only), `T` rows of kept-column design values.
        design: Vec<Option<Vec<f64>>>,
    },
}

/// Per-unit moment conditions `q_i(theta)` stacked in block order, linear in `theta`.
pub struct StackedSystem<'a> {
    s: Sample<'a>,
    fit: &'a FirstStageFit,
    pub params: Vec<Param>,
    /// Point estimates `theta_hat`.
    pub theta: Vec<f64>,
    index: BTreeMap<Param, usize>,
    first: FirstStageBlock,
    dse: Vec<DseTarget>,
    cse: Vec<CseTarget>,
    never: Vec<(usize, usize)>,
    shares: Vec<(usize, usize)>,
    /// Event-time cohort sets, copied from the estimates.
    event_cohorts: BTreeMap<i32, Vec<usize>>,
}

impl<'a> StackedSystem<'a> {
    /// Build from a sample and its point estimates; every reported cell-level
    /// DSE and CSE and every reported never-treated diagnostic enters the stack.
    pub fn build(s: Sample<'a>, est: &'a Estimates) -> Result<Self> {
        let fit = &est.fit;
        let n = s.n_units();
        let tn = s.n_periods();
        let mut params = Vec::new();
        let mut theta = Vec::new();
        let push = |p: Param, v: f64, params: &mut Vec<Param>, theta: &mut Vec<f64>| {
            params.push(p);
            theta.push(v);
            params.len() - 1
        };
        let cells: Vec<_> = est.cells.iter().filter(|c| c.admissible()).collect();
        let dse_cells: Vec<_> = est
            .cells
            .iter()
            .filter(|c| c.l >= 0 && c.dse.admissible())
            .collect();
        let cse_cells: Vec<_> = est.cells.iter().filter(|c| c.cse.admissible()).collect();

        // source cell means
        for c in &dse_cells {
            let sup = c
                .support
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument("missing DSE support".into()))?;
            for cell in &sup.cells {
                let m = cell
                    .mean_source
                    .ok_or_else(|| Error::EmptyGroup("empty source cell".into()))?;
                push(
                    Param::SourceMean {
                        g: c.g,
                        l: c.l,
                        key: cell.key,
                    },
                    m,
                    &mut params,
                    &mut theta,
                );
            }
        }

        // first stage
        let never_ts: Vec<(usize, f64)> = est
            .never_treated
            .iter()
            .filter_map(|e| Some((e.t?, e.value?)))
            .filter(|&(t, _)| t >= 2)
            .collect();
        let first = match fit {
            FirstStageFit::Saturated(sat) => {
                let mut needed = BTreeSet::new();
                let mut need = |i: usize, t: usize| {
                    let h = s.path.state(i, t);
                    if t >= 2 && !h.is_zero() {
                        let x = s.stratum(i);
                        needed.insert((t, x, h));
                        needed.insert((t, x, ExposureState::ZERO));
                    }
                };
                for c in &cse_cells {
                    for i in (0..n).filter(|&i| s.in_cohort(i, c.g)) {
                        need(i, c.t);
                    }
                }
                for &(t, _) in &never_ts {
                    for i in (0..n).filter(|&i| s.is_source(i)) {
                        need(i, t);
                    }
                }
                let mut map = BTreeMap::new();
                for (t, x, h) in needed {
                    let cell = sat.usable(t, x, h).ok_or_else(|| {
                        Error::InvalidArgument(format!(
                            "first-stage cell ({t}, {x}, {h:?}) unusable"
                        ))
                    })?;
                    let p = push(
                        Param::CellMean { t, stratum: x, h },
                        cell.mean,
                        &mut params,
                        &mut theta,
                    );
                    map.insert((t, x, h), p);
                }
                FirstStageBlock::Saturated(map)
            }
            FirstStageFit::Structured(st) => {
                let mut kept = Vec::new();
                for (col, c) in st.coef.iter().enumerate() {
                    if let Some(v) = c {
                        kept.push((
                            col,
                            push(Param::Coefficient(col), *v, &mut params, &mut theta),
                        ));
                    }
                }
                let design = (0..n)
                    .map(|i| {
                        s.is_source(i).then(|| {
                            let mut d = Vec::with_capacity(tn * kept.len());
                            for t in 1..=tn {
                                let row = st.design_row(s.ds.basis(i), t, s.path.state(i, t));
                                d.extend(kept.iter().map(|&(col, _)| row[col]));
                            }
                            d
                        })
                    })
                    .collect();
                FirstStageBlock::Structured { kept, design }
            }
        };

        let mut dse = Vec::new();
        for c in &dse_cells {
            let v = c
                .dse
                .value
                .ok_or_else(|| Error::InvalidArgument("missing DSE value".into()))?;
            let p = push(Param::Dse { g: c.g, l: c.l }, v, &mut params, &mut theta);
            dse.push(DseTarget {
                p,
                g: c.g,
                l: c.l,
                t: c.t,
                t0: c.t0,
            });
        }
        let mut cse = Vec::new();
        for c in &cse_cells {
            let v = c
                .cse
                .value
                .ok_or_else(|| Error::InvalidArgument("missing CSE value".into()))?;
            let p = push(Param::Cse { g: c.g, l: c.l }, v, &mut params, &mut theta);
            cse.push(CseTarget { p, g: c.g, t: c.t });
        }
        let mut never = Vec::new();
        for &(t, v) in &never_ts {
            never.push((
                push(Param::CseNeverTreated { t }, v, &mut params, &mut theta),
                t,
            ));
        }
        let share_cohorts: BTreeSet<usize> = cells.iter().map(|c| c.g).collect();
        let mut shares = Vec::new();
        for g in share_cohorts {
            let w = est
                .cohorts
                .iter()
                .find(|c| c.g == g)
                .map(|c| c.w)
                .unwrap_or(0.0);
            shares.push((
                push(Param::Share { g }, w / n as f64, &mut params, &mut theta),
                g,
            ));
        }
        let index = params.iter().enumerate().map(|(k, p)| (*p, k)).collect();
        let event_cohorts = est
            .event_time
            .iter()
            .map(|e| (e.l, e.cohorts.clone()))
            .collect();
        Ok(Self {
            s,
            fit,
            params,
            theta,
            index,
            first,
            dse,
            cse,
            never,
            shares,
            event_cohorts,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.len()
    }

    pub fn n_units(&self) -> usize {
        self.s.n_units()
    }

    pub fn param_index(&self, p: &Param) -> Option<usize> {
        self.index.get(p).copied()
    }

    /// `c_t` for unit `i` as a sparse linear form in `theta`.
    fn contrast_terms(&self, i: usize, t: usize) -> Result<Vec<(usize, f64)>> {
        let h = self.s.path.state(i, t);
        if h.is_zero() || t < 2 {
            return Ok(Vec::new());
        }
        let x = self.s.stratum(i);
        match (&self.first, self.fit) {
            (FirstStageBlock::Saturated(map), _) => {
                let a = map.get(&(t, x, h));
                let b = map.get(&(t, x, ExposureState::ZERO));
                match (a, b) {
                    (Some(&a), Some(&b)) => Ok(vec![(a, 1.0), (b, -1.0)]),
                    _ => Err(Error::InvalidArgument(format!(
                        "no first-stage parameter for unit {i} at {t}"
                    ))),
                }
            }
            (FirstStageBlock::Structured { kept, .. }, FirstStageFit::Structured(st)) => {
                let grad = st
                    .contrast_gradient(self.s.ds.basis(i), x, t, h)
                    .ok_or_else(|| {
                        Error::InvalidArgument(format!("contrast unavailable for unit {i} at {t}"))
                    })?;
                Ok(kept
                    .iter()
                    .filter(|&&(col, _)| grad[col] != 0.0)
                    .map(|&(col, p)| (p, grad[col]))
                    .collect())
            }
            _ => Err(Error::InvalidArgument(
                "first-stage block does not match the fit".into(),
            )),
        }
    }

    /// Visit every nonzero moment entry `(i, p, q_ip(theta))`.
    fn visit(&self, theta: &[f64], mut f: impl FnMut(usize, usize, f64)) -> Result<()> {
        let s = &self.s;
        let tn = s.n_periods();
        for i in 0..s.n_units() {
            let w = s.ds.weight(i);
            if s.is_source(i) {
                for d in &self.dse {
                    let key = s.cell_key(i, d.t, d.t0);
                    if let Some(&p) = self.index.get(&Param::SourceMean {
                        g: d.g,
                        l: d.l,
                        key,
                    }) {
                        f(i, p, w * (s.ds.y(i, d.t) - s.ds.y(i, d.t0) - theta[p]));
                    }
                }
                let y1 = s.ds.y(i, 1);
                match &self.first {
                    FirstStageBlock::Saturated(map) => {
                        for t in 2..=tn {
                            if let Some(&p) = map.get(&(t, s.stratum(i), s.path.state(i, t))) {
                                f(i, p, w * (s.ds.y(i, t) - y1 - theta[p]));
                            }
                        }
                    }
                    FirstStageBlock::Structured { kept, design } => {
                        let d = design[i].as_ref().expect("design row for source unit");
                        let kc = kept.len();
                        let mut q = vec![0.0; kc];
                        for t in 1..=tn {
                            let row = &d[(t - 1) * kc..t * kc];
                            let mut fitted = 0.0;
                            for (a, &(_, p)) in kept.iter().enumerate() {
                                fitted += row[a] * theta[p];
                            }
                            let r = s.ds.y(i, t) - y1 - fitted;
                            for a in 0..kc {
                                q[a] += row[a] * r;
                            }
                        }
                        for (a, &(_, p)) in kept.iter().enumerate() {
                            f(i, p, w * q[a]);
                        }
                    }
                }
                for &(p, t) in &self.never {
                    let c: f64 = self
                        .contrast_terms(i, t)?
                        .iter()
                        .map(|&(pp, a)| a * theta[pp])
                        .sum();
                    f(i, p, w * (c - theta[p]));
                }
            }
            if let crate::panel::Role::Target(g) = s.role(i) {
                for d in self.dse.iter().filter(|d| d.g == g) {
                    let key = s.cell_key(i, d.t, d.t0);
                    let src = self
                        .index
                        .get(&Param::SourceMean { g, l: d.l, key })
                        .copied()
                        .ok_or_else(|| {
                            Error::InvalidArgument(format!(
                                "cohort unit {i} outside retained support"
                            ))
                        })?;
                    f(
                        i,
                        d.p,
                        w * (s.ds.y(i, d.t) - s.ds.y(i, d.t0) - theta[src] - theta[d.p]),
                    );
                }
                for c in self.cse.iter().filter(|c| c.g == g) {
                    let v: f64 = self
                        .contrast_terms(i, c.t)?
                        .iter()
                        .map(|&(pp, a)| a * theta[pp])
                        .sum();
                    f(i, c.p, w * (v - theta[c.p]));
                }
            }
            for &(p, g) in &self.shares {
                let own = if s.in_cohort(i, g) { w } else { 0.0 };
                f(i, p, own - theta[p]);
            }
        }
        Ok(())
    }

    /// `N x P` matrix of moment rows at `theta`.
    pub fn moments(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        let mut q = DMatrix::<f64>::zeros(self.n_units(), self.dim());
        self.visit(theta, |i, p, v| q[(i, p)] += v)?;
        Ok(q)
    }

    /// Sample mean of the moments at `theta`.
    pub fn mean_moments(&self, theta: &[f64]) -> Result<DVector<f64>> {
        let mut m = DVector::<f64>::zeros(self.dim());
        self.visit(theta, |_, p, v| m[p] += v)?;
        Ok(m / self.n_units() as f64)
    }

    /// Analytic `R = (1/N) sum_i d q_i / d theta`.
    pub fn jacobian(&self) -> Result<DMatrix<f64>> {
        let s = &self.s;
        let p = self.dim();
        let tn = s.n_periods();
        let mut r = DMatrix::<f64>::zeros(p, p);
        for i in 0..s.n_units() {
            let w = s.ds.weight(i);
            if s.is_source(i) {
                for d in &self.dse {
                    let key = s.cell_key(i, d.t, d.t0);
                    if let Some(&k) = self.index.get(&Param::SourceMean {
                        g: d.g,
                        l: d.l,
                        key,
                    }) {
                        r[(k, k)] -= w;
                    }
                }
                match &self.first {
                    FirstStageBlock::Saturated(map) => {
                        for t in 2..=tn {
                            if let Some(&k) = map.get(&(t, s.stratum(i), s.path.state(i, t))) {
                                r[(k, k)] -= w;
                            }
                        }
                    }
                    FirstStageBlock::Structured { kept, design } => {
                        let d = design[i].as_ref().expect("design row for source unit");
                        let kc = kept.len();
                        for t in 1..=tn {
                            let row = &d[(t - 1) * kc..t * kc];
                            for (a, &(_, pa)) in kept.iter().enumerate() {
                                if row[a] == 0.0 {
                                    continue;
                                }
                                for (b, &(_, pb)) in kept.iter().enumerate() {
                                    r[(pa, pb)] -= w * row[a] * row[b];
                                }
                            }
                        }
                    }
                }
                for &(k, t) in &self.never {
                    for (pp, a) in self.contrast_terms(i, t)? {
                        r[(k, pp)] += w * a;
                    }
                    r[(k, k)] -= w;
                }
            }
            if let crate::panel::Role::Target(g) = s.role(i) {
                for d in self.dse.iter().filter(|d| d.g == g) {
                    let key = s.cell_key(i, d.t, d.t0);
                    if let Some(&src) = self.index.get(&Param::SourceMean { g, l: d.l, key }) {
                        r[(d.p, src)] -= w;
                    }
                    r[(d.p, d.p)] -= w;
                }
                for c in self.cse.iter().filter(|c| c.g == g) {
                    for (pp, a) in self.contrast_terms(i, c.t)? {
                        r[(c.p, pp)] += w * a;
                    }
                    r[(c.p, c.p)] -= w;
                }
            }
        }
        let nf = self.n_units() as f64;
        r /= nf;
        for &(k, _) in &self.shares {
            r[(k, k)] = -1.0;
        }
        Ok(r)
    }

    /// Central finite-difference Jacobian of the mean moments.
    pub fn jacobian_fd(&self) -> Result<DMatrix<f64>> {
        let p = self.dim();
        let mut r = DMatrix::<f64>::zeros(p, p);
        let mut th = self.theta.clone();
        for j in 0..p {
            let h = 1e-4 * self.theta[j].abs().max(1.0);
            th[j] = self.theta[j] + h;
            let up = self.mean_moments(&th)?;
            th[j] = self.theta[j] - h;
            let dn = self.mean_moments(&th)?;
            th[j] = self.theta[j];
            let step = 2.0 * h;
            for a in 0..p {
                r[(a, j)] = (up[a] - dn[a]) / step;
            }
        }
        Ok(r)
    }

    /// Whether every Jacobian entry above the block diagonal is zero.
    pub fn is_block_lower_triangular(&self, r: &DMatrix<f64>) -> bool {
        let p = self.dim();
        (0..p).all(|a| {
            (0..p).all(|b| self.params[b].block() <= self.params[a].block() || r[(a, b)] == 0.0)
        })
    }

    fn find(&self, p: Param) -> Result<usize> {
        self.param_index(&p)
            .ok_or_else(|| Error::InvalidArgument(format!("parameter {p:?} not in the stack")))
    }

    /// Gradient of a functional at `theta_hat`; `None` for constants.
    pub fn gradient(&self, f: &Functional) -> Result<Option<DVector<f64>>> {
        let mut grad = DVector::<f64>::zeros(self.dim());
        match *f {
            Functional::EventTime { component, l } => {
                let cohorts = self.event_cohorts.get(&l).ok_or_else(|| {
                    Error::InvalidArgument(format!("event time {l} not reported"))
                })?;
                let mut parts = Vec::new();
                for &g in cohorts {
                    let tau = match component {
                        Component::Dse => self.find(Param::Dse { g, l })?,
                        Component::Cse => self.find(Param::Cse { g, l })?,
                        _ => {
                            return Err(Error::InvalidArgument(format!(
                                "no stacked parameter for {component:?}"
                            )))
                        }
                    };
                    parts.push((tau, self.find(Param::Share { g })?));
                }
                let total: f64 = parts.iter().map(|&(_, sp)| self.theta[sp]).sum();
                let a: f64 = parts
                    .iter()
                    .map(|&(tp, sp)| self.theta[sp] * self.theta[tp])
                    .sum::<f64>()
                    / total;
                for &(tp, sp) in &parts {
                    grad[tp] += self.theta[sp] / total;
                    grad[sp] += (self.theta[tp] - a) / total;
                }
            }
            Functional::Cell { component, g, l } => {
                let p = match component {
                    Component::Dse => self.find(Param::Dse { g, l })?,
                    Component::Cse => self.find(Param::Cse { g, l })?,
                    _ => {
                        return Err(Error::InvalidArgument(format!(
                            "no stacked parameter for {component:?}"
                        )))
                    }
                };
                grad[p] = 1.0;
            }
            Functional::NeverTreated { t } => {
                if t < 2 {
                    return Ok(None);
                }
                grad[self.find(Param::CseNeverTreated { t })?] = 1.0;
            }
            Functional::NeverTreatedChange { g } => {
                let t0 = crate::panel::baseline_period(g, self.s.delta())?;
                grad[self.find(Param::CseNeverTreated { t: g })?] += 1.0;
                if t0 >= 2 {
                    grad[self.find(Param::CseNeverTreated { t: t0 })?] -= 1.0;
                }
            }
        }
        Ok(Some(grad))
    }

    /// Influence rows `phi_i = -grad' R^{-1} q_i(theta_hat)`, one column per functional.
    pub fn influence_rows(
        &self,
        jac: &DMatrix<f64>,
        functionals: &[Functional],
    ) -> Result<DMatrix<f64>> {
        let n = self.n_units();
        let mut out = DMatrix::<f64>::zeros(n, functionals.len());
        if self.dim() == 0 {
            return Ok(out);
        }
        let q = self.moments(&self.theta)?;
        let rt = jac.transpose();
        let scale = rt.amax();
        let lu = rt.lu();
        for (k, d) in lu.u().diagonal().iter().enumerate() {
            if !(d.abs() > 1e-13 * scale) {
                return Err(Error::SingularSystem(format!(
                    "stacked Jacobian is singular at parameter {:?}",
                    self.params[k.min(self.dim() - 1)]
                )));
            }
        }
        for (k, f) in functionals.iter().enumerate() {
            let Some(grad) = self.gradient(f)? else {
                continue;
            };
            let u = lu
                .solve(&grad)
                .ok_or_else(|| Error::SingularSystem("stacked Jacobian is singular".into()))?;
            let col = -(&q * u);
            out.set_column(k, &col);
        }
        Ok(out)
    }
}

/// Influence rows of the exposure-ignorant DID contrast for cohort `g` at `(t, t0)`:
/// `w D (Delta - mu_g) / s_g - w C (Delta - mu_inf) / s_inf` with `s = W / N`.
pub fn did_rows(s: &Sample<'_>, g: usize, t: usize, t0: usize) -> Result<(Vec<f64>, f64)> {
    let n = s.n_units();
    let (mut a, mut b) = (
        crate::stats::WeightedMean::default(),
        crate::stats::WeightedMean::default(),
    );
    for i in 0..n {
        let d = s.ds.y(i, t) - s.ds.y(i, t0);
        if s.in_cohort(i, g) {
            a.push(s.ds.weight(i), d);
        } else if s.is_source(i) {
            b.push(s.ds.weight(i), d);
        }
    }
    let (Some(mg), Some(mi)) = (a.mean(), b.mean()) else {
        return Err(Error::EmptyGroup(format!(
            "DID rows need cohort {g} and never-treated units"
        )));
    };
    let nf = n as f64;
    let (sg, si) = (a.weight / nf, b.weight / nf);
    let rows = (0..n)
        .map(|i| {
            let d = s.ds.y(i, t) - s.ds.y(i, t0);
            let w = s.ds.weight(i);
            if s.in_cohort(i, g) {
                w * (d - mg) / sg
            } else if s.is_source(i) {
                -w * (d - mi) / si
            } else {
                0.0
            }
        })
        .collect();
    Ok((rows, mg - mi))
}

/// Rows of a cohort-mass weighted aggregate of per-cohort rows, including the
/// share-estimation term `(w 1{G=g} - s_g)(tau_g - a) / S`.
pub fn aggregate_rows(s: &Sample<'_>, parts: &[(usize, f64, Vec<f64>)]) -> Vec<f64> {
    let n = s.n_units();
    let nf = n as f64;
    let shares: Vec<f64> = parts
        .iter()
        .map(|(g, _, _)| s.ds.cohort_mass(*g).1 / nf)
        .collect();
    let total: f64 = shares.iter().sum();
    let a: f64 = parts
        .iter()
        .zip(&shares)
        .map(|((_, tau, _), sh)| sh * tau)
        .sum::<f64>()
        / total;
    (0..n)
        .map(|i| {
            let mut v = 0.0;
            for ((g, tau, rows), sh) in parts.iter().zip(&shares) {
                let own = if s.in_cohort(i, *g) {
                    s.ds.weight(i)
                } else {
                    0.0
                };
                v += sh / total * rows[i] + (own - sh) * (tau - a) / total;
            }
            v
        })
        .collect()
}
