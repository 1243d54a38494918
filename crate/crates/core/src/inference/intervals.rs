use alloc::vec::Vec;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::psd_factor;
use crate::stats::{empirical_quantile, two_sided_z};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub se: f64,
    pub lo: f64,
    pub hi: f64,
}

/// `value +/- z_{1-alpha/2} sqrt(gamma_ll / N)`.
pub fn pointwise_ci(value: f64, gamma_ll: f64, n: usize, alpha: f64) -> Result<Interval> {
    if gamma_ll < 0.0 || gamma_ll.is_nan() {
        return Err(Error::InvalidCovariance(alloc::format!(
            "negative variance {gamma_ll}"
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(alloc::format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let se = libm::sqrt(gamma_ll / n as f64);
    let half = two_sided_z(alpha) * se;
    Ok(Interval {
        se,
        lo: value - half,
        hi: value + half,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Band {
    /// Critical value applied to each coordinate's standard error.
    pub multiplier: f64,
    /// Whether negative eigenvalues were projected away.
    pub psd_projected: bool,
}

/// Gaussian sup-t multiplier: the `1 - alpha` quantile of `max_l |Z_l| / sd_l`
/// with `Z ~ N(0, cov)`. Draw `d` uses its own ChaCha stream keyed by `(seed, d)`.
/// Coordinates with zero variance are ignored; the multiplier never falls below
/// the pointwise critical value.
pub fn simultaneous_band(
    cov: &DMatrix<f64>,
    alpha: f64,
    n_draws: usize,
    seed: u64,
) -> Result<Band> {
    let k = cov.nrows();
    if k == 0 || cov.ncols() != k {
        return Err(Error::InvalidCovariance(
            "band needs a nonempty square covariance".into(),
        ));
    }
    if n_draws == 0 {
        return Err(Error::InvalidArgument(
            "band needs at least one draw".into(),
        ));
    }
    let z = two_sided_z(alpha);
    let sd: Vec<f64> = (0..k).map(|l| libm::sqrt(cov[(l, l)].max(0.0))).collect();
    if sd.iter().all(|&v| v == 0.0) {
        return Err(Error::InvalidCovariance("all-zero covariance".into()));
    }
    let (_, factor, clipped) = psd_factor(cov);
    let mut stats = Vec::with_capacity(n_draws);
    let mut xi = alloc::vec![0.0; k];
    for d in 0..n_draws {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(d as u64);
        for v in xi.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        let mut m = 0.0f64;
        for l in 0..k {
            if sd[l] == 0.0 {
                continue;
            }
            let mut zl = 0.0;
            for (j, x) in xi.iter().enumerate() {
                zl += factor[(l, j)] * x;
            }
            m = m.max(libm::fabs(zl) / sd[l]);
        }
        stats.push(m);
    }
    let q = empirical_quantile(&mut stats, 1.0 - alpha).unwrap_or(z);
    Ok(Band {
        multiplier: q.max(z),
        psd_projected: clipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_interval() {
        let ci = pointwise_ci(1.5, 0.0, 100, 0.05).unwrap();
        assert_eq!((ci.lo, ci.hi), (1.5, 1.5));
        assert!(pointwise_ci(0.0, -1.0, 10, 0.05).is_err());
    }

    #[test]
    fn single_coordinate_band_is_pointwise() {
        let cov = DMatrix::from_element(1, 1, 2.0);
        let b = simultaneous_band(&cov, 0.05, 20000, 3).unwrap();
        assert!((b.multiplier - 1.959964).abs() < 0.05, "{}", b.multiplier);
    }

    #[test]
    fn five_independent_coordinates() {
        // P(max_5 |N| <= c) = (2 Phi(c) - 1)^5 = 0.95 at c = 2.5686
        let cov = DMatrix::<f64>::identity(5, 5);
        let b = simultaneous_band(&cov, 0.05, 20000, 11).unwrap();
        assert!((b.multiplier - 2.5686).abs() < 0.05, "{}", b.multiplier);
    }

    #[test]
    fn reproducible() {
        let cov = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        let a = simultaneous_band(&cov, 0.1, 500, 9).unwrap();
        let b = simultaneous_band(&cov, 0.1, 500, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_covariance_rejected() {
        assert!(simultaneous_band(&DMatrix::zeros(2, 2), 0.05, 10, 1).is_err());
    }
}
