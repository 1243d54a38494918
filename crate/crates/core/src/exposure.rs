//! Exposure mappings: network weights, raw exposure indices, coarsened
//! exposure states and two-date states.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::panel::{baseline_period, Cohort, PanelDataset};

/// Sparse nonnegative interference weights `w_ij`, one neighbour list per unit.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    rows: Vec<Vec<(usize, f64)>>,
}

impl NetworkWeights {
    /// Build from `(i, j, w)` triplets. Duplicate pairs are summed; zero weights dropped.
    pub fn from_edges(
        n: usize,
        edges: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::InvalidNetwork(format!(
                    "edge ({i}, {j}) outside {n} units"
                )));
            }
            if i == j {
                return Err(Error::InvalidNetwork(format!("self weight for unit {i}")));
            }
            if !w.is_finite() {
                return Err(Error::InvalidNetwork(format!(
                    "non-finite weight on edge ({i}, {j})"
                )));
            }
            if w != 0.0 {
                rows[i].push((j, w));
            }
        }
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, w) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += w,
                    _ => merged.push((j, w)),
                }
            }
            *row = merged;
        }
        Ok(Self { rows })
    }

    /// Row-major dense matrix; the diagonal must be zero.
    pub fn from_dense(n: usize, w: &[f64]) -> Result<Self> {
        if w.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix has {} entries, expected {}",
                w.len(),
                n * n
            )));
        }
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let v = w[i * n + j];
                if i == j {
                    if v != 0.0 {
                        return Err(Error::InvalidNetwork(format!("w[{i}][{i}] must be zero")));
                    }
                } else if v != 0.0 {
                    edges.push((i, j, v));
                }
            }
        }
        Self::from_edges(n, edges)
    }

    /// Open line on positions `0..n`: each unit's nearest neighbours, row-normalized.
    pub fn line(n: usize) -> Self {
        let rows = (0..n)
            .map(|i| {
                let mut nb = Vec::with_capacity(2);
                if i > 0 {
                    nb.push(i - 1);
                }
                if i + 1 < n {
                    nb.push(i + 1);
                }
                let w = if nb.len() == 2 { 0.5 } else { 1.0 };
                nb.into_iter().map(|j| (j, w)).collect()
            })
            .collect();
        Self { rows }
    }

    /// Neighbour indicator `1{0 < d_ij <= cutoff}`, optionally row-normalized.
    pub fn from_cutoff(dist: &DistanceMatrix, cutoff: f64, row_normalize: bool) -> Result<Self> {
        if !(cutoff.is_finite() && cutoff > 0.0) {
            return Err(Error::InvalidNetwork(format!(
                "cutoff must be positive, got {cutoff}"
            )));
        }
        let n = dist.n();
        let rows = (0..n)
            .map(|i| {
                let nb: Vec<usize> = (0..n)
                    .filter(|&j| j != i && dist.get(i, j) <= cutoff)
                    .collect();
                let w = if row_normalize && !nb.is_empty() {
                    1.0 / nb.len() as f64
                } else {
                    1.0
                };
                nb.into_iter().map(|j| (j, w)).collect()
            })
            .collect();
        Ok(Self { rows })
    }

    pub fn n(&self) -> usize {
        self.rows.len()
    }

    pub fn neighbours(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// Relabel units: unit `i` of the result is unit `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inv = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let rows = perm
            .iter()
            .map(|&old| {
                let mut r: Vec<(usize, f64)> =
                    self.rows[old].iter().map(|&(j, w)| (inv[j], w)).collect();
                r.sort_by_key(|&(j, _)| j);
                r
            })
            .collect();
        Self { rows }
    }
}

/// Dense symmetric distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(Error::DimensionMismatch(format!(
                "distance matrix has {} entries, expected {}",
                d.len(),
                n * n
            )));
        }
        for i in 0..n {
            if d[i * n + i] != 0.0 {
                return Err(Error::InvalidNetwork(format!(
                    "distance d[{i}][{i}] must be zero"
                )));
            }
            for j in 0..i {
                let (a, b) = (d[i * n + j], d[j * n + i]);
                if !(a.is_finite() && a >= 0.0) {
                    return Err(Error::InvalidNetwork(format!(
                        "distance d[{i}][{j}] must be finite and nonnegative"
                    )));
                }
                if a != b {
                    return Err(Error::InvalidNetwork(format!(
                        "distance matrix not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { n, d })
    }

    /// Euclidean distances between planar points.
    pub fn from_points(points: &[[f64; 2]]) -> Self {
        let n = points.len();
        let mut d = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..i {
                let v = libm::hypot(points[i][0] - points[j][0], points[i][1] - points[j][1]);
                d[i * n + j] = v;
                d[j * n + i] = v;
            }
        }
        Self { n, d }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.d[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.d
    }
}

/// How interference weights are obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum NetworkSpec {
    Weights(NetworkWeights),
    Distance {
        distances: DistanceMatrix,
        cutoff: f64,
        row_normalize: bool,
    },
    Line {
        n: usize,
    },
}

impl NetworkSpec {
    pub fn weights(&self) -> Result<NetworkWeights> {
        match self {
            NetworkSpec::Weights(w) => Ok(w.clone()),
            NetworkSpec::Distance {
                distances,
                cutoff,
                row_normalize,
            } => NetworkWeights::from_cutoff(distances, *cutoff, *row_normalize),
            NetworkSpec::Line { n } => Ok(NetworkWeights::line(*n)),
        }
    }
}

/// Temporal kernel `psi` applied to the lag `t - G_j >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub enum TemporalKernel {
    /// `psi == 1`.
    Constant,
    /// `psi(lag) = values[lag]`, holding the last value for longer lags.
    Tabulated(Vec<f64>),
}

impl TemporalKernel {
    #[inline]
    pub fn eval(&self, lag: usize) -> f64 {
        match self {
            TemporalKernel::Constant => 1.0,
            TemporalKernel::Tabulated(v) => *v.get(lag).or(v.last()).unwrap_or(&0.0),
        }
    }
}

/// Index into the configured label set; `ExposureState::ZERO` is the label "0".
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ExposureState(pub u8);

impl ExposureState {
    pub const ZERO: ExposureState = ExposureState(0);

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

/// Kernel, coarsening bins and dose scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposureConfig {
    pub kernel: TemporalKernel,
    /// Upper edges of the positive bins, strictly increasing. Bin `k` is
    /// `(upper[k-1], upper[k]]` with `upper[-1] = 0`.
    pub upper: Vec<f64>,
    pub labels: Vec<String>,
    /// Dose for each positive bin; the "0" label always has dose 0.
    pub doses: Vec<f64>,
}

impl ExposureConfig {
    /// Three states `{0, low, high}` with edges 0.5 and 1 and doses 1 and 2.
    pub fn three_state() -> Self {
        Self {
            kernel: TemporalKernel::Constant,
            upper: vec![0.5, 1.0],
            labels: vec!["low".into(), "high".into()],
            doses: vec![1.0, 2.0],
        }
    }

    /// Two states `{0, positive}` covering all of `(0, inf)`.
    pub fn binary() -> Self {
        Self {
            kernel: TemporalKernel::Constant,
            upper: vec![f64::INFINITY],
            labels: vec!["positive".into()],
            doses: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.upper.is_empty() {
            return Err(Error::InvalidExposureConfig(
                "at least one positive bin is required".into(),
            ));
        }
        if self.upper.len() != self.labels.len() || self.upper.len() != self.doses.len() {
            return Err(Error::InvalidExposureConfig(
                "bins, labels and doses must have equal length".into(),
            ));
        }
        if self.upper.len() > 254 {
            return Err(Error::InvalidExposureConfig("too many bins".into()));
        }
        let mut prev = 0.0;
        for &u in &self.upper {
            if u.is_nan() || u <= prev {
                return Err(Error::InvalidExposureConfig(
                    "bin edges must be positive and strictly increasing".into(),
                ));
            }
            prev = u;
        }
        for (k, l) in self.labels.iter().enumerate() {
            if l == "0" || self.labels[..k].contains(l) {
                return Err(Error::InvalidExposureConfig(format!(
                    "duplicate or reserved label {l:?}"
                )));
            }
        }
        if let TemporalKernel::Tabulated(v) = &self.kernel {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidExposureConfig(
                    "tabulated kernel must be nonempty and finite".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn n_states(&self) -> usize {
        self.labels.len() + 1
    }

    pub fn label(&self, s: ExposureState) -> &str {
        if s.is_zero() {
            "0"
        } else {
            &self.labels[s.0 as usize - 1]
        }
    }

    pub fn state_of(&self, label: &str) -> Result<ExposureState> {
        if label == "0" {
            return Ok(ExposureState::ZERO);
        }
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|k| ExposureState(k as u8 + 1))
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Dose score `q(label)`.
    pub fn dose(&self, label: &str) -> Result<f64> {
        Ok(self.dose_of(self.state_of(label)?))
    }

    #[inline]
    pub fn dose_of(&self, s: ExposureState) -> f64 {
        if s.is_zero() {
            0.0
        } else {
            self.doses[s.0 as usize - 1]
        }
    }

    /// Coarsen one raw value. `None` when it lies above the top bin or is negative.
    pub fn bin(&self, raw: f64) -> Option<ExposureState> {
        if raw == 0.0 {
            return Some(ExposureState::ZERO);
        }
        if !(raw > 0.0) {
            return None;
        }
        self.upper
            .iter()
            .position(|&u| raw <= u)
            .map(|k| ExposureState(k as u8 + 1))
    }
}

/// Raw exposure index and coarsened state for every unit-period.
#[derive(Debug, Clone, PartialEq)]
pub struct ExposurePath {
    n_periods: usize,
    raw: Vec<f64>,
    state: Vec<ExposureState>,
}

impl ExposurePath {
    /// Build from explicit states with zero raw values where the state is "0" and
    /// one elsewhere. Used for fixtures and for forcing exposure patterns.
    pub fn from_states(n_periods: usize, state: Vec<ExposureState>) -> Self {
        let raw = state
            .iter()
            .map(|s| if s.is_zero() { 0.0 } else { 1.0 })
            .collect();
        Self {
            n_periods,
            raw,
            state,
        }
    }

    pub fn n_units(&self) -> usize {
        self.state.len() / self.n_periods
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    /// Raw index at period `t` (1-based).
    #[inline]
    pub fn raw(&self, i: usize, t: usize) -> f64 {
        self.raw[i * self.n_periods + t - 1]
    }

    /// Coarsened state at period `t` (1-based).
    #[inline]
    pub fn state(&self, i: usize, t: usize) -> ExposureState {
        self.state[i * self.n_periods + t - 1]
    }

    /// Every state set to "0".
    pub fn zeroed(&self) -> Self {
        Self {
            n_periods: self.n_periods,
            raw: vec![0.0; self.raw.len()],
            state: vec![ExposureState::ZERO; self.state.len()],
        }
    }
}

/// `H~_it = sum_{j != i} w_ij psi(t - G_j) 1{t >= G_j}` for periods `1..=T`.
pub fn raw_exposure(
    cohorts: &[Cohort],
    n_periods: usize,
    net: &NetworkWeights,
    kernel: &TemporalKernel,
) -> Result<Vec<f64>> {
    let n = cohorts.len();
    if net.n() != n {
        return Err(Error::DimensionMismatch(format!(
            "network has {} units, panel has {n}",
            net.n()
        )));
    }
    let mut raw = vec![0.0; n * n_periods];
    for i in 0..n {
        let row = &mut raw[i * n_periods..(i + 1) * n_periods];
        for &(j, w) in net.neighbours(i) {
            if let Cohort::Adopts(g) = cohorts[j] {
                for t in g..=n_periods {
                    row[t - 1] += w * kernel.eval(t - g);
                }
            }
        }
    }
    Ok(raw)
}

/// Coarsen a raw index matrix with `n_periods` columns.
pub fn coarsen(raw: &[f64], n_periods: usize, cfg: &ExposureConfig) -> Result<Vec<ExposureState>> {
    cfg.validate()?;
    raw.iter()
        .enumerate()
        .map(|(k, &v)| {
            cfg.bin(v).ok_or(Error::ExposureOutOfBins {
                unit: k / n_periods,
                period: k % n_periods + 1,
                value: v,
            })
        })
        .collect()
}

/// Raw index and states for a panel.
pub fn exposure_path(
    ds: &PanelDataset,
    net: &NetworkWeights,
    cfg: &ExposureConfig,
) -> Result<ExposurePath> {
    cfg.validate()?;
    let t = ds.n_periods();
    let raw = raw_exposure(ds.cohorts(), t, net, &cfg.kernel)?;
    let state = coarsen(&raw, t, cfg)?;
    Ok(ExposurePath {
        n_periods: t,
        raw,
        state,
    })
}

/// `(H_{i,g+l}, H_{i,t0(g)})` for every unit.
pub fn two_date_state(
    path: &ExposurePath,
    g: usize,
    l: i32,
    delta: usize,
) -> Result<Vec<(ExposureState, ExposureState)>> {
    let t0 = baseline_period(g, delta)?;
    let t = g as i64 + l as i64;
    if t < 1 || t as usize > path.n_periods() {
        return Err(Error::PeriodOutOfRange(format!(
            "period g+l = {t} outside 1..={}",
            path.n_periods()
        )));
    }
    let t = t as usize;
    Ok((0..path.n_units())
        .map(|i| (path.state(i, t), path.state(i, t0)))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(k: u8) -> ExposureState {
        ExposureState(k)
    }

    #[test]
    fn all_never_means_zero_exposure() {
        let cohorts = vec![Cohort::Never; 5];
        let raw = raw_exposure(
            &cohorts,
            4,
            &NetworkWeights::line(5),
            &TemporalKernel::Constant,
        )
        .unwrap();
        assert!(raw.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn line_two_adopted_neighbours_give_one() {
        let cohorts = vec![Cohort::Adopts(2), Cohort::Never, Cohort::Adopts(3)];
        let raw = raw_exposure(
            &cohorts,
            4,
            &NetworkWeights::line(3),
            &TemporalKernel::Constant,
        )
        .unwrap();
        // unit 1 at t = 1..4
        assert_eq!(&raw[4..8], &[0.0, 0.5, 1.0, 1.0]);
        // endpoint has one neighbour with weight 1
        assert_eq!(&raw[0..4], &[0.0, 0.0, 0.0, 0.0]);
        assert_eq!(&raw[8..12], &[0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn line_endpoint_weight() {
        let cohorts = vec![Cohort::Never, Cohort::Adopts(2)];
        let raw = raw_exposure(
            &cohorts,
            2,
            &NetworkWeights::line(2),
            &TemporalKernel::Constant,
        )
        .unwrap();
        assert_eq!(raw[1], 1.0);
    }

    #[test]
    fn cutoff_rule_counts_neighbours() {
        // four points on a line at 0, 30, 45, 120 miles
        let pts = [[0.0, 0.0], [30.0, 0.0], [45.0, 0.0], [120.0, 0.0]];
        let d = DistanceMatrix::from_points(&pts);
        let w = NetworkWeights::from_cutoff(&d, 50.0, false).unwrap();
        assert_eq!(w.neighbours(0), &[(1, 1.0), (2, 1.0)]);
        assert_eq!(w.neighbours(3), &[]);
        let cohorts = vec![
            Cohort::Never,
            Cohort::Adopts(2),
            Cohort::Adopts(3),
            Cohort::Adopts(2),
        ];
        let raw = raw_exposure(&cohorts, 3, &w, &TemporalKernel::Constant).unwrap();
        assert_eq!(&raw[0..3], &[0.0, 1.0, 2.0]);
    }

    #[test]
    fn coarsen_default_bins() {
        let cfg = ExposureConfig::three_state();
        assert_eq!(cfg.bin(0.0), Some(s(0)));
        assert_eq!(cfg.label(cfg.bin(0.5).unwrap()), "low");
        assert_eq!(cfg.label(cfg.bin(0.7).unwrap()), "high");
        assert_eq!(cfg.label(cfg.bin(1.0).unwrap()), "high");
        assert_eq!(cfg.bin(1.5), None);
        assert!(matches!(
            coarsen(&[0.0, 2.0], 2, &cfg),
            Err(Error::ExposureOutOfBins {
                unit: 0,
                period: 2,
                ..
            })
        ));
    }

    #[test]
    fn doses() {
        let cfg = ExposureConfig::three_state();
        assert_eq!(cfg.dose("0").unwrap(), 0.0);
        assert_eq!(cfg.dose("low").unwrap(), 1.0);
        assert_eq!(cfg.dose("high").unwrap(), 2.0);
        assert!(matches!(cfg.dose("medium"), Err(Error::UnknownLabel(_))));
    }

    #[test]
    fn binary_coarsening() {
        let cfg = ExposureConfig::binary();
        assert_eq!(cfg.label(cfg.bin(3.0).unwrap()), "positive");
        assert_eq!(cfg.label(cfg.bin(0.0).unwrap()), "0");
    }

    #[test]
    fn rejects_bad_bins() {
        let mut cfg = ExposureConfig::three_state();
        cfg.upper = vec![1.0, 0.5];
        assert!(cfg.validate().is_err());
        let mut cfg = ExposureConfig::three_state();
        cfg.labels[1] = "low".into();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn two_date_lookup() {
        // unit 0: H_2 = 0, H_4 = high
        let mut states = vec![s(0); 8];
        states[3] = s(2);
        let path = ExposurePath::from_states(4, states);
        let pairs = two_date_state(&path, 3, 1, 0).unwrap();
        assert_eq!(pairs[0], (s(2), s(0)));
        assert_eq!(pairs[1], (s(0), s(0)));
        assert!(two_date_state(&path, 4, 1, 0).is_err());
        assert!(two_date_state(&path, 2, 0, 1).is_err());
    }

    #[test]
    fn anticipation_shifts_baseline() {
        let states: Vec<ExposureState> = (0..6).map(|k| s(k as u8 % 3)).collect();
        let path = ExposurePath::from_states(6, states);
        // delta = 1, g = 4, l = 0 uses periods 4 and 2
        let pair = two_date_state(&path, 4, 0, 1).unwrap()[0];
        assert_eq!(pair, (path.state(0, 4), path.state(0, 2)));
    }

    #[test]
    fn tabulated_kernel_holds_last_value() {
        let k = TemporalKernel::Tabulated(vec![0.5, 1.0]);
        assert_eq!(k.eval(0), 0.5);
        assert_eq!(k.eval(7), 1.0);
    }
}
