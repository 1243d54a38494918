//! Run configuration: a TOML (or JSON) file with one section per module,
//! overridden by command-line flags and resolved against per-command defaults.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use staggerspill_core::exposure::{ExposureConfig, TemporalKernel};
use staggerspill_core::inference::{Bandwidth, InferenceConfig, Kernel};
use staggerspill_core::panel::Cohort;
use staggerspill_core::pipeline::{EstimationConfig, FirstStageKind};
use staggerspill_core::simulate::{BlockPlacement, Design, McConfig};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Estimate,
    Simulate,
    Benchmark,
    Exposure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum FirstStageName {
    Saturated,
    Structured,
    Dose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelName {
    Bartlett,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NetworkRule {
    /// Units on positions 1..N of an open line, row-normalized.
    Line,
    /// Edge list `i, j, weight` keyed by unit id.
    Edges,
    /// Dense distance matrix; neighbours within `cutoff`.
    Cutoff,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PanelSection {
    pub path: Option<PathBuf>,
    pub unit: String,
    pub period: String,
    pub outcome: String,
    pub cohort: String,
    /// Used when present in the header.
    pub weight: String,
    pub stratum: String,
    pub exposure_only: String,
    /// Basis columns; `None` takes every column not named above.
    pub basis: Option<Vec<String>>,
}

impl Default for PanelSection {
    fn default() -> Self {
        Self {
            path: None,
            unit: "unit".into(),
            period: "period".into(),
            outcome: "outcome".into(),
            cohort: "cohort".into(),
            weight: "weight".into(),
            stratum: "stratum".into(),
            exposure_only: "exposure_only".into(),
            basis: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub path: Option<PathBuf>,
    /// `None` picks `line` without a file and detects edges versus matrix otherwise.
    pub rule: Option<NetworkRule>,
    pub cutoff: Option<f64>,
    pub row_normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExposureSection {
    /// Tabulated temporal kernel by lag; `None` is the constant kernel.
    pub kernel: Option<Vec<f64>>,
    /// Upper edges of the positive bins.
    pub bins: Vec<f64>,
    pub labels: Vec<String>,
    pub doses: Vec<f64>,
}

impl Default for ExposureSection {
    fn default() -> Self {
        let c = ExposureConfig::three_state();
        Self {
            kernel: None,
            bins: c.upper,
            labels: c.labels,
            doses: c.doses,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub min_cell: usize,
    pub event_max: usize,
    pub delta: usize,
    pub first_stage: Option<FirstStageName>,
    pub spline_df: usize,
    /// One dose slope for all periods instead of one per period.
    pub pooled: bool,
    pub pre_period: Option<bool>,
    pub use_strata: Option<bool>,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            min_cell: 5,
            event_max: 2,
            delta: 0,
            first_stage: None,
            spline_df: 3,
            pooled: false,
            pre_period: None,
            use_strata: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub kernel: KernelName,
    /// Fixed bandwidth in distance units; `None` is `ceil(N^(1/3))`.
    pub bandwidth: Option<f64>,
    pub alpha: f64,
    pub band_draws: Option<usize>,
    pub check_jacobian: bool,
}

impl Default for InferenceSection {
    fn default() -> Self {
        Self {
            kernel: KernelName::Bartlett,
            bandwidth: None,
            alpha: 0.05,
            band_draws: None,
            check_jacobian: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub designs: Vec<String>,
    pub sizes: Vec<usize>,
    pub reps: usize,
    /// `shuffled`, or a 12-character block pattern over `3`, `4`, `5` and `N`.
    pub placement: String,
    /// Also write one line per replication and event time.
    pub keep_replications: bool,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            designs: Design::ALL.iter().map(|d| d.as_str().to_string()).collect(),
            sizes: vec![200, 500],
            reps: 1000,
            placement: "shuffled".into(),
            keep_replications: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub out: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 20240601,
            threads: None,
            out: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub panel: PanelSection,
    pub network: NetworkSection,
    pub exposure: ExposureSection,
    pub estimators: EstimatorSection,
    pub inference: InferenceSection,
    pub simulate: SimulateSection,
    pub run: RunSection,
}

/// `run.json` layout; its `config` member is itself a valid configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: Command,
    pub version: String,
    pub config: RunConfig,
}

impl RunConfig {
    /// Read a TOML file, or a JSON file holding either a configuration or a
    /// `run.json` record.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input("config", path, &e))?;
        if path.extension().is_some_and(|e| e == "json") {
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CliError::validation(format!("invalid config {}: {e}", path.display())))?;
            let inner = value.get("config").cloned().unwrap_or(value);
            serde_json::from_value(inner)
                .map_err(|e| CliError::validation(format!("invalid config {}: {e}", path.display())))
        } else {
            toml::from_str(&text)
                .map_err(|e| CliError::validation(format!("invalid config {}: {e}", path.display())))
        }
    }

    /// Fill command-dependent defaults and check every setting.
    pub fn resolve(mut self, command: Command) -> Result<Self> {
        let sim = command == Command::Simulate;
        let e = &mut self.estimators;
        e.first_stage.get_or_insert(if sim {
            FirstStageName::Dose
        } else {
            FirstStageName::Saturated
        });
        e.pre_period.get_or_insert(!sim);
        e.use_strata.get_or_insert(!sim);
        self.inference
            .band_draws
            .get_or_insert(if sim { 0 } else { 10_000 });
        self.validate(command)?;
        Ok(self)
    }

    fn validate(&self, command: Command) -> Result<()> {
        let bad = |m: String| Err(CliError::validation(m));
        if self.estimators.min_cell == 0 {
            return bad("min_cell must be positive".into());
        }
        let a = self.inference.alpha;
        if !(a > 0.0 && a < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {a}"));
        }
        if let Some(b) = self.inference.bandwidth {
            if !(b > 0.0 && b.is_finite()) {
                return bad(format!("bandwidth must be positive, got {b}"));
            }
        }
        if self.run.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        self.exposure_config()?.validate()?;
        match command {
            Command::Simulate => {
                if self.simulate.reps == 0 {
                    return bad("reps must be positive".into());
                }
                if self.simulate.sizes.is_empty() || self.simulate.designs.is_empty() {
                    return bad("simulation needs at least one design and size".into());
                }
                self.designs()?;
                self.placement()?;
            }
            _ => {
                if self.panel.path.is_none() {
                    return bad("a panel file is required (--panel)".into());
                }
                if self.network.rule == Some(NetworkRule::Cutoff) && self.network.cutoff.is_none() {
                    return bad("the cutoff rule needs network.cutoff".into());
                }
                if self.estimators.first_stage == Some(FirstStageName::Structured)
                    && self.estimators.spline_df == 0
                {
                    return bad("spline_df must be positive".into());
                }
            }
        }
        Ok(())
    }

    pub fn exposure_config(&self) -> Result<ExposureConfig> {
        let x = &self.exposure;
        Ok(ExposureConfig {
            kernel: match &x.kernel {
                None => TemporalKernel::Constant,
                Some(v) => TemporalKernel::Tabulated(v.clone()),
            },
            upper: x.bins.clone(),
            labels: x.labels.clone(),
            doses: x.doses.clone(),
        })
    }

    pub fn estimation_config(&self) -> EstimationConfig {
        let e = &self.estimators;
        let first_stage = match e.first_stage.unwrap_or(FirstStageName::Saturated) {
            FirstStageName::Saturated => FirstStageKind::Saturated,
            FirstStageName::Structured => FirstStageKind::Structured {
                spline_df: e.spline_df,
            },
            FirstStageName::Dose => FirstStageKind::Dose {
                doses: std::iter::once(0.0)
                    .chain(self.exposure.doses.iter().copied())
                    .collect(),
                pooled: e.pooled,
            },
        };
        EstimationConfig {
            min_cell: e.min_cell,
            event_max: e.event_max,
            pre_period: e.pre_period.unwrap_or(true),
            first_stage,
            use_strata: e.use_strata.unwrap_or(true),
        }
    }

    pub fn inference_config(&self) -> InferenceConfig {
        let i = &self.inference;
        InferenceConfig {
            kernel: match i.kernel {
                KernelName::Bartlett => Kernel::Bartlett,
                KernelName::Uniform => Kernel::Uniform,
            },
            bandwidth: i.bandwidth.map_or(Bandwidth::CubeRoot, Bandwidth::Fixed),
            alpha: i.alpha,
            band_draws: i.band_draws.unwrap_or(10_000),
            seed: self.run.seed,
            check_jacobian: i.check_jacobian,
        }
    }

    pub fn designs(&self) -> Result<Vec<Design>> {
        self.simulate
            .designs
            .iter()
            .map(|d| d.parse::<Design>().map_err(CliError::from))
            .collect()
    }

    pub fn placement(&self) -> Result<BlockPlacement> {
        parse_placement(&self.simulate.placement)
    }

    /// Monte Carlo configuration for one design and size.
    pub fn mc_config(&self, design: Design, n: usize) -> Result<McConfig> {
        let mut cfg = McConfig::new(design, n, self.simulate.reps, self.run.seed);
        cfg.dgp.placement = self.placement()?;
        cfg.estimation = self.estimation_config();
        cfg.inference = self.inference_config();
        cfg.dgp.validate()?;
        Ok(cfg)
    }
}

/// `shuffled`, or twelve characters from `3`, `4`, `5` and `N` (never).
pub fn parse_placement(s: &str) -> Result<BlockPlacement> {
    if s.eq_ignore_ascii_case("shuffled") {
        return Ok(BlockPlacement::Shuffled);
    }
    let cohorts: Vec<Cohort> = s
        .chars()
        .map(|c| match c {
            'N' | 'n' => Ok(Cohort::Never),
            '3'..='5' => Ok(Cohort::Adopts(c as usize - '0' as usize)),
            _ => Err(CliError::validation(format!("bad placement character {c:?}"))),
        })
        .collect::<Result<_>>()?;
    let pattern: [Cohort; 12] = cohorts
        .try_into()
        .map_err(|_| CliError::validation("a block pattern has exactly 12 entries"))?;
    Ok(BlockPlacement::Rotated(pattern))
}
