use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::exposure::{exposure_path, ExposureConfig, ExposurePath, NetworkWeights};
use crate::panel::{Cohort, PanelDataset, PanelParts};

/// Panel length in every design.
pub const N_PERIODS: usize = 6;

/// Cohort support, in assignment-index order.
pub const COHORTS: [Cohort; 4] = [
    Cohort::Adopts(3),
    Cohort::Adopts(4),
    Cohort::Adopts(5),
    Cohort::Never,
];

const NEVER: Cohort = Cohort::Never;
const G3: Cohort = Cohort::Adopts(3);
const G4: Cohort = Cohort::Adopts(4);
const G5: Cohort = Cohort::Adopts(5);

/// Within-block placement for the balanced line assignment. Never-treated
/// units sit together, so their neighbours are mostly never-treated while
/// adopters mostly border adopters; high exposure is then common among
/// adopters and rare among never-treated units.
pub const BLOCK12_PATTERN: [Cohort; 12] = [NEVER, NEVER, NEVER, G3, G4, G5, G3, G4, G5, G3, G4, G5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Design {
    Dgp1,
    Dgp2,
    Dgp3,
}

impl Design {
    pub const ALL: [Design; 3] = [Design::Dgp1, Design::Dgp2, Design::Dgp3];

    /// Treated-side exposure interaction.
    pub fn kappa(self) -> f64 {
        match self {
            Design::Dgp1 => 0.0,
            Design::Dgp2 | Design::Dgp3 => 0.4,
        }
    }

    pub fn assignment(self) -> Assignment {
        match self {
            Design::Dgp1 | Design::Dgp2 => Assignment::IidEqual,
            Design::Dgp3 => Assignment::Block12Balanced,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Design::Dgp1 => "dgp1",
            Design::Dgp2 => "dgp2",
            Design::Dgp3 => "dgp3",
        }
    }
}

impl fmt::Display for Design {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Design {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dgp1" => Ok(Design::Dgp1),
            "dgp2" => Ok(Design::Dgp2),
            "dgp3" => Ok(Design::Dgp3),
            _ => Err(Error::InvalidConfig(format!("unknown design {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    /// Independent uniform draws over the four cohorts.
    IidEqual,
    /// Consecutive blocks of 12 positions, three units per cohort, with the
    /// block pattern rotated by a random offset per block.
    Block12Balanced,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DgpConfig {
    pub design: Design,
    pub n: usize,
    pub assignment: Assignment,
    /// Multiplier on the idiosyncratic shocks; 1 in the reported designs.
    pub noise_scale: f64,
    /// Within-block placement for the balanced block assignment.
    pub placement: BlockPlacement,
}

/// How the three units of each cohort are placed inside a block of 12.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockPlacement {
    /// Uniform random permutation of the block, drawn independently per block.
    Shuffled,
    /// A fixed pattern rotated by a random offset per block.
    Rotated([Cohort; 12]),
}

impl DgpConfig {
    pub fn new(design: Design, n: usize) -> Self {
        Self {
            design,
            n,
            assignment: design.assignment(),
            noise_scale: 1.0,
            placement: BlockPlacement::Shuffled,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::InvalidConfig(
                "simulation needs at least two units".into(),
            ));
        }
        if self.design == Design::Dgp3 && self.assignment != Assignment::Block12Balanced {
            return Err(Error::InvalidConfig(
                "dgp3 requires the balanced block assignment".into(),
            ));
        }
        if let BlockPlacement::Rotated(pattern) = &self.placement {
            for c in COHORTS {
                if pattern.iter().filter(|&&b| b == c).count() != 3 {
                    return Err(Error::InvalidConfig(
                        "block pattern must hold three units of each cohort".into(),
                    ));
                }
            }
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::InvalidConfig(
                "noise scale must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// `lambda_t = 0.2 (t - 1)`.
pub fn lambda(t: usize) -> f64 {
    0.2 * (t as f64 - 1.0)
}

/// Control-state spillover slope: 0 through period 2, 0.3 afterwards.
pub fn rho(t: usize) -> f64 {
    if t <= 2 {
        0.0
    } else {
        0.3
    }
}

/// Own-treatment profile `tau_l`, zero before adoption.
pub fn tau(l: i64) -> f64 {
    match l {
        l if l < 0 => 0.0,
        0 => 1.0,
        1 => 1.5,
        _ => 2.0,
    }
}

/// Potential-outcome schedules of one draw.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub n_periods: usize,
    pub kappa: f64,
    pub cohort: Vec<Cohort>,
    pub x: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Row-major `N x T` shocks, already scaled.
    pub eps: Vec<f64>,
    /// Dose of the realized exposure state, row-major `N x T`.
    pub dose: Vec<f64>,
}

impl PotentialOutcomes {
    pub fn n_units(&self) -> usize {
        self.cohort.len()
    }

    fn base(&self, i: usize, t: usize) -> f64 {
        self.alpha[i] + lambda(t) + 0.5 * self.x[i] + self.eps[i * self.n_periods + t - 1]
    }

    /// Realized dose `q(H_it)`.
    pub fn realized_dose(&self, i: usize, t: usize) -> f64 {
        self.dose[i * self.n_periods + t - 1]
    }

    /// `Y_it(inf, h)` at dose `q`.
    pub fn never(&self, i: usize, t: usize, q: f64) -> f64 {
        self.base(i, t) + rho(t) * q
    }

    /// `Y_it(g, h)` at dose `q`; equals the untreated schedule before adoption.
    pub fn treated(&self, i: usize, t: usize, g: usize, q: f64) -> f64 {
        if t < g {
            return self.never(i, t, q);
        }
        self.base(i, t) + tau(t as i64 - g as i64) + (rho(t) + self.kappa) * q
    }

    /// Schedule of unit `i` under its own cohort.
    pub fn own(&self, i: usize, t: usize, q: f64) -> f64 {
        match self.cohort[i] {
            Cohort::Adopts(g) => self.treated(i, t, g, q),
            Cohort::Never => self.never(i, t, q),
        }
    }

    /// Observed outcome at the realized cohort and exposure.
    pub fn observed(&self, i: usize, t: usize) -> f64 {
        self.own(i, t, self.realized_dose(i, t))
    }
}

/// One simulated panel with its exposure path, schedules, and line positions.
#[derive(Debug, Clone)]
pub struct Draw {
    pub ds: PanelDataset,
    pub path: ExposurePath,
    pub po: PotentialOutcomes,
    pub positions: Vec<f64>,
}

fn assign(cfg: &DgpConfig, rng: &mut ChaCha20Rng) -> Vec<Cohort> {
    match cfg.assignment {
        Assignment::IidEqual => (0..cfg.n)
            .map(|_| COHORTS[rng.random_range(0..COHORTS.len())])
            .collect(),
        Assignment::Block12Balanced => {
            let mut out = Vec::with_capacity(cfg.n);
            while out.len() < cfg.n {
                let take = (cfg.n - out.len()).min(12);
                match cfg.placement {
                    BlockPlacement::Shuffled => {
                        let mut block = [NEVER, NEVER, NEVER, G3, G3, G3, G4, G4, G4, G5, G5, G5];
                        block.shuffle(rng);
                        out.extend_from_slice(&block[..take]);
                    }
                    BlockPlacement::Rotated(pattern) => {
                        let offset = rng.random_range(0..12usize);
                        out.extend((0..take).map(|k| pattern[(k + offset) % 12]));
                    }
                }
            }
            out
        }
    }
}

/// Generate replication `rep` under master seed `seed`. The replication uses
/// its own ChaCha20 stream; draws are cohorts, then `X`, `alpha`, `eps`.
pub fn generate(cfg: &DgpConfig, seed: u64, rep: u64) -> Result<Draw> {
    cfg.validate()?;
    let n = cfg.n;
    let tn = N_PERIODS;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    let cohort = assign(cfg, &mut rng);
    let mut normal =
        |k: usize| -> Vec<f64> { (0..k).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let x = normal(n);
    let alpha = normal(n);
    let eps: Vec<f64> = normal(n * tn)
        .into_iter()
        .map(|e: f64| e * cfg.noise_scale)
        .collect();

    let parts = PanelParts {
        unit_ids: (1..=n).map(|i| i.to_string()).collect(),
        period_labels: (1..=tn as i64).collect(),
        outcome: alloc::vec![0.0; n * tn],
        cohort: cohort.clone(),
        ..Default::default()
    };
    let skeleton = PanelDataset::from_parts(parts)?;
    let xcfg = ExposureConfig::three_state();
    let path = exposure_path(&skeleton, &NetworkWeights::line(n), &xcfg)?;
    let dose = (0..n * tn)
        .map(|k| xcfg.dose_of(path.state(k / tn, k % tn + 1)))
        .collect();
    let po = PotentialOutcomes {
        n_periods: tn,
        kappa: cfg.design.kappa(),
        cohort,
        x,
        alpha,
        eps,
        dose,
    };
    let ds = skeleton.map_outcomes(|i, t, _| po.observed(i, t));
    Ok(Draw {
        ds,
        path,
        po,
        positions: (0..n).map(|i| i as f64).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_constants() {
        assert!((lambda(3) - 0.4).abs() < 1e-15);
        assert_eq!((rho(2), rho(3)), (0.0, 0.3));
        assert_eq!((tau(0), tau(1), tau(2), tau(3)), (1.0, 1.5, 2.0, 2.0));
    }

    #[test]
    fn dgp1_switch_contrast_is_tau0() {
        let d = generate(&DgpConfig::new(Design::Dgp1, 60), 1, 0).unwrap();
        for i in 0..60 {
            if let Cohort::Adopts(g) = d.po.cohort[i] {
                let q = d.po.realized_dose(i, g);
                let c = d.po.treated(i, g, g, q) - d.po.never(i, g, q);
                assert!((c - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn block_assignment_is_balanced() {
        let d = generate(&DgpConfig::new(Design::Dgp3, 48), 5, 2).unwrap();
        for block in d.po.cohort.chunks(12) {
            for c in COHORTS {
                assert_eq!(block.iter().filter(|&&b| b == c).count(), 3);
            }
        }
    }

    #[test]
    fn observed_is_consistent() {
        let d = generate(&DgpConfig::new(Design::Dgp2, 30), 3, 1).unwrap();
        for i in 0..30 {
            for t in 1..=N_PERIODS {
                assert_eq!(d.ds.y(i, t), d.po.observed(i, t));
            }
        }
    }

    #[test]
    fn replications_differ_and_repeat() {
        let cfg = DgpConfig::new(Design::Dgp1, 20);
        let a = generate(&cfg, 9, 0).unwrap();
        let b = generate(&cfg, 9, 0).unwrap();
        let c = generate(&cfg, 9, 1).unwrap();
        assert_eq!(a.ds, b.ds);
        assert_ne!(a.ds, c.ds);
    }
}
