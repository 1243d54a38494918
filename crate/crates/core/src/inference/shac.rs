use alloc::vec;
use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::exposure::DistanceMatrix;

/// Spatial kernel `K(u)` on normalized distance `u = rho / b`.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// `max(0, 1 - u)`.
    Bartlett,
    /// `1{u <= 1}`; not positive semidefinite in general.
    Uniform,
    /// Piecewise-linear through `(u, K)` knots on `[0, 1]`, zero beyond 1.
    Tabulated(Vec<(f64, f64)>),
}

impl Kernel {
    pub fn eval(&self, u: f64) -> f64 {
        if !(u <= 1.0) {
            return 0.0;
        }
        match self {
            Kernel::Bartlett => 1.0 - u,
            Kernel::Uniform => 1.0,
            Kernel::Tabulated(pts) => {
                let Some(first) = pts.first() else { return 0.0 };
                if u <= first.0 {
                    return first.1;
                }
                for w in pts.windows(2) {
                    let ((u0, k0), (u1, k1)) = (w[0], w[1]);
                    if u <= u1 {
                        return k0 + (k1 - k0) * (u - u0) / (u1 - u0);
                    }
                }
                pts[pts.len() - 1].1
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Kernel::Tabulated(pts) = self {
            if pts.is_empty() || pts[0].0 != 0.0 || pts[0].1 != 1.0 {
                return Err(Error::InvalidConfig(
                    "tabulated kernel must start at (0, 1)".into(),
                ));
            }
            for w in pts.windows(2) {
                if !(w[1].0 > w[0].0) || w[1].0 > 1.0 {
                    return Err(Error::InvalidConfig(
                        "tabulated kernel knots must increase within [0, 1]".into(),
                    ));
                }
            }
            if pts.iter().any(|p| !p.1.is_finite()) {
                return Err(Error::InvalidConfig(
                    "tabulated kernel values must be finite".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Pairwise distance source for the covariance double sum.
#[derive(Debug, Clone, PartialEq)]
pub enum Distance {
    /// Positions on a line; `rho = |p_i - p_j|`.
    Line(Vec<f64>),
    /// Planar coordinates; Euclidean distance.
    Points(Vec<[f64; 2]>),
    Matrix(DistanceMatrix),
}

impl Distance {
    pub fn n(&self) -> usize {
        match self {
            Distance::Line(p) => p.len(),
            Distance::Points(p) => p.len(),
            Distance::Matrix(m) => m.n(),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Distance::Line(p) => libm::fabs(p[i] - p[j]),
            Distance::Points(p) => libm::hypot(p[i][0] - p[j][0], p[i][1] - p[j][1]),
            Distance::Matrix(m) => m.get(i, j),
        }
    }
}

/// Kernel weights of every pair with nonzero weight, per unit, ascending in `j`.
#[derive(Debug, Clone)]
pub struct ShacPlan {
    neighbours: Vec<Vec<(usize, f64)>>,
}

impl ShacPlan {
    /// Bandwidth zero keeps self-pairs only.
    pub fn new(dist: &Distance, kernel: &Kernel, bandwidth: f64) -> Result<Self> {
        kernel.validate()?;
        if !(bandwidth >= 0.0 && bandwidth.is_finite()) {
            return Err(Error::InvalidConfig(
                "bandwidth must be finite and nonnegative".into(),
            ));
        }
        let n = dist.n();
        if bandwidth == 0.0 {
            return Ok(Self {
                neighbours: (0..n).map(|i| vec![(i, 1.0)]).collect(),
            });
        }
        let mut neighbours = Vec::with_capacity(n);
        match dist {
            Distance::Line(p) => {
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| p[a].total_cmp(&p[b]).then(a.cmp(&b)));
                let sorted: Vec<f64> = order.iter().map(|&k| p[k]).collect();
                for i in 0..n {
                    let lo = sorted.partition_point(|&v| v < p[i] - bandwidth);
                    let hi = sorted.partition_point(|&v| v <= p[i] + bandwidth);
                    let mut nb: Vec<(usize, f64)> = order[lo..hi]
                        .iter()
                        .map(|&j| (j, kernel.eval(libm::fabs(p[i] - p[j]) / bandwidth)))
                        .filter(|&(_, k)| k != 0.0)
                        .collect();
                    nb.sort_by_key(|&(j, _)| j);
                    neighbours.push(nb);
                }
            }
            _ => {
                for i in 0..n {
                    let nb = (0..n)
                        .map(|j| (j, kernel.eval(dist.get(i, j) / bandwidth)))
                        .filter(|&(_, k)| k != 0.0)
                        .collect();
                    neighbours.push(nb);
                }
            }
        }
        Ok(Self { neighbours })
    }

    pub fn n(&self) -> usize {
        self.neighbours.len()
    }

    /// `s_i(l) = sum_j K_ij phi_j(l)`, summed in ascending `j`.
    pub fn neighbour_sum(&self, rows: &DMatrix<f64>, i: usize) -> Vec<f64> {
        let k = rows.ncols();
        let mut s = vec![0.0; k];
        for &(j, w) in &self.neighbours[i] {
            for (l, sl) in s.iter_mut().enumerate() {
                *sl += w * rows[(j, l)];
            }
        }
        s
    }

    /// Assemble `Gamma(l, l') = (1/N) sum_i phi_i(l) s_i(l')` from neighbour sums,
    /// computing `l <= l'` and mirroring so the result is exactly symmetric.
    pub fn assemble(&self, rows: &DMatrix<f64>, sums: &[Vec<f64>]) -> DMatrix<f64> {
        let (n, k) = rows.shape();
        let mut gamma = DMatrix::<f64>::zeros(k, k);
        for (i, s) in sums.iter().enumerate() {
            for a in 0..k {
                let pa = rows[(i, a)];
                if pa == 0.0 {
                    continue;
                }
                for b in a..k {
                    gamma[(a, b)] += pa * s[b];
                }
            }
        }
        let nf = n as f64;
        for a in 0..k {
            for b in a..k {
                gamma[(a, b)] /= nf;
                gamma[(b, a)] = gamma[(a, b)];
            }
        }
        gamma
    }

    /// Single-threaded covariance.
    pub fn covariance(&self, rows: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if rows.nrows() != self.n() {
            return Err(Error::DimensionMismatch(alloc::format!(
                "{} influence rows for {} distance units",
                rows.nrows(),
                self.n()
            )));
        }
        let sums: Vec<Vec<f64>> = (0..self.n()).map(|i| self.neighbour_sum(rows, i)).collect();
        Ok(self.assemble(rows, &sums))
    }
}

/// `Gamma(l, l') = (1/N) sum_i sum_j K(rho_ij / b) phi_i(l) phi_j(l')`.
pub fn shac_covariance(
    rows: &DMatrix<f64>,
    dist: &Distance,
    kernel: &Kernel,
    bandwidth: f64,
) -> Result<DMatrix<f64>> {
    ShacPlan::new(dist, kernel, bandwidth)?.covariance(rows)
}
