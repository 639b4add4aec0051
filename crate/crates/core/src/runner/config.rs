use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::conditioning::{ConditionalSettings, ConditioningMethod, GridSpec, MeasurementSettings, Window};
use crate::criteria::{HzFrame, SteeringDirection};
use crate::error::{Error, Result};
use crate::quadratures::Quadrature;
use crate::stategen::{PumpModel, SpdcParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Fig1a,
    Fig1b,
    Fig1d,
    Fig2,
    Fig3b,
    Fig3c,
    Fig4a,
    Fig4b,
    Custom,
}

impl Experiment {
    pub fn family(self) -> Option<Family> {
        match self {
            Experiment::Fig1a | Experiment::Fig1b | Experiment::Fig1d | Experiment::Fig2 => Some(Family::Spdc),
            Experiment::Fig3b | Experiment::Fig3c => Some(Family::PhotonSubtracted),
            Experiment::Fig4a | Experiment::Fig4b => Some(Family::Mixture),
            Experiment::Custom => None,
        }
    }
}

/// State family; each has exactly one sweepable parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Three-photon SPDC, swept in `ξ`.
    Spdc,
    /// Lossy photon-subtracted TMSV, swept in `η = η_A = η_B`.
    PhotonSubtracted,
    /// TMSV/SMSV mixture, swept in `P`.
    Mixture,
}

impl Family {
    pub fn parameter(self) -> Parameter {
        match self {
            Family::Spdc => Parameter::Xi,
            Family::PhotonSubtracted => Parameter::Eta,
            Family::Mixture => Parameter::P,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Parameter {
    Xi,
    Eta,
    #[serde(alias = "P")]
    P,
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::Xi => "xi",
            Parameter::Eta => "eta",
            Parameter::P => "P",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepRange {
    pub parameter: Parameter,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SweepRange {
    /// `start, start + step, …` up to and including `stop`, rounded to 12
    /// significant digits.
    pub fn points(&self) -> Vec<f64> {
        if self.stop < self.start {
            return Vec::new();
        }
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| round_sig(self.start + i as f64 * self.step)).collect()
    }
}

/// Rounds to 12 significant digits.
pub fn round_sig(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().unwrap_or(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Physics {
    /// TMSV squeezing.
    pub r: Option<f64>,
    pub r_a: Option<f64>,
    pub r_b: Option<f64>,
    /// Pump amplitude; defaults to 5.
    pub alpha_p: Option<f64>,
    #[serde(default)]
    pub pump: PumpModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    A,
    B,
}

impl Party {
    pub fn mode(self) -> usize {
        match self {
            Party::A => 0,
            Party::B => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectionSpec {
    pub steering: Party,
    pub steering_order: usize,
    pub steered_order: usize,
}

impl DirectionSpec {
    pub fn direction(&self) -> SteeringDirection {
        self.with_orders(self.steering_order, self.steered_order)
    }

    pub fn with_orders(&self, k: usize, l: usize) -> SteeringDirection {
        match self.steering {
            Party::A => SteeringDirection::a_to_b(k, l),
            Party::B => SteeringDirection::b_to_a(k, l),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cutoffs {
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Binning {
    pub bin_width: f64,
    pub probability_floor: f64,
    /// CR is evaluated on every `cr_every`-th sweep point (plus the last),
    /// then filled in between sub-grid points whose signs differ. 0 disables CR.
    pub cr_every: usize,
}

impl Default for Binning {
    fn default() -> Self {
        let m = MeasurementSettings::default();
        Self {
            bin_width: m.bin_width,
            probability_floor: m.probability_floor,
            cr_every: 1,
        }
    }
}

impl Binning {
    pub fn settings(&self) -> MeasurementSettings {
        MeasurementSettings {
            bin_width: self.bin_width,
            probability_floor: self.probability_floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSettings {
    /// Bisection stops once the bracket is narrower than this.
    pub tolerance: f64,
    /// Refine every sign change found in a sweep.
    pub refine: bool,
}

impl Default for ThresholdSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-4,
            refine: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl std::str::FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(Error::Config(format!("unknown output format {s:?} (expected csv or json)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    pub path: Option<PathBuf>,
    pub format: Format,
}

/// One conditional-state preparation compared against an ideal cat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatConfig {
    pub name: String,
    pub xi: f64,
    #[serde(default = "party_a")]
    pub measured: Party,
    pub order: usize,
    #[serde(default = "quadrature_x")]
    pub quadrature: Quadrature,
    pub target: f64,
    /// Relative window half-width, as a fraction of `|target|`.
    #[serde(default = "default_window")]
    pub window: f64,
    #[serde(default)]
    pub method: ConditioningMethod,
    #[serde(default)]
    pub sector: Option<usize>,
    pub alpha: f64,
    pub components: usize,
    #[serde(default)]
    pub grid: GridSpec,
}

fn party_a() -> Party {
    Party::A
}

fn quadrature_x() -> Quadrature {
    Quadrature::X
}

fn default_window() -> f64 {
    0.02
}

impl CatConfig {
    pub fn settings(&self) -> ConditionalSettings {
        ConditionalSettings {
            window: Window::Relative(self.window),
            method: self.method,
            sector: self.sector,
            ..ConditionalSettings::default()
        }
    }
}

/// Declarative description of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub experiment: Experiment,
    /// Required for `custom`; must match the experiment otherwise.
    #[serde(default)]
    pub family: Option<Family>,
    #[serde(default)]
    pub sweep: Option<SweepRange>,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub direction: Option<DirectionSpec>,
    /// Extra (steering, steered) order pairs for CR, one column each.
    #[serde(default)]
    pub cr_orders: Vec<[usize; 2]>,
    pub cutoffs: Cutoffs,
    #[serde(default)]
    pub binning: Binning,
    #[serde(default)]
    pub hz_frame: HzFrame,
    #[serde(default)]
    pub threshold: ThresholdSettings,
    #[serde(default)]
    pub output: Output,
    #[serde(default)]
    pub cat: Vec<CatConfig>,
}

impl SweepConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn family(&self) -> Result<Family> {
        match (self.experiment.family(), self.family) {
            (Some(f), None) => Ok(f),
            (Some(f), Some(g)) if f == g => Ok(f),
            (Some(f), Some(g)) => Err(Error::Config(format!(
                "experiment {:?} uses the {f:?} family, config says {g:?}",
                self.experiment
            ))),
            (None, Some(g)) => Ok(g),
            (None, None) => Err(Error::Config("custom experiments must name a family".into())),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let family = self.family()?;
        let cfg = |m: String| Err(Error::Config(m));
        if self.cutoffs.a < 2 || self.cutoffs.b < 2 {
            return cfg(format!("cutoffs must be >= 2, got ({}, {})", self.cutoffs.a, self.cutoffs.b));
        }
        if let Some(s) = &self.sweep {
            if s.parameter != family.parameter() {
                return cfg(format!(
                    "{family:?} sweeps {}, config sweeps {}",
                    family.parameter().name(),
                    s.parameter.name()
                ));
            }
            if !(s.step > 0.0 && s.step.is_finite()) {
                return cfg(format!("sweep step must be > 0, got {}", s.step));
            }
            if !(s.start.is_finite() && s.stop.is_finite()) || s.stop < s.start {
                return cfg(format!("sweep range [{}, {}] is empty", s.start, s.stop));
            }
            if self.direction.is_none() {
                return cfg("a sweep needs a [direction] table".into());
            }
        } else if self.cat.is_empty() {
            return cfg("config has neither a [sweep] nor any [[cat]] entries".into());
        }
        if let Some(d) = &self.direction {
            d.direction().validate().or_else(|e| cfg(e.to_string()))?;
        }
        for &[k, l] in &self.cr_orders {
            if k == 0 || l == 0 {
                return cfg("cr_orders entries must be >= 1".into());
            }
        }
        if self.threshold.tolerance <= 0.0 || self.threshold.tolerance > 1e-3 {
            return cfg(format!("threshold tolerance must lie in (0, 1e-3], got {}", self.threshold.tolerance));
        }
        let need = |name: &str, v: Option<f64>| match v {
            Some(x) if x >= 0.0 && x.is_finite() => Ok(()),
            Some(x) => cfg(format!("physics.{name} must be finite and >= 0, got {x}")),
            None => cfg(format!("the {family:?} family needs physics.{name}")),
        };
        match family {
            Family::Spdc => {
                if let Some(a) = self.physics.alpha_p {
                    if !(a > 0.0 && a.is_finite()) {
                        return cfg(format!("physics.alpha_p must be > 0, got {a}"));
                    }
                }
            }
            Family::PhotonSubtracted => need("r", self.physics.r)?,
            Family::Mixture => {
                need("r", self.physics.r)?;
                need("r_a", self.physics.r_a)?;
                need("r_b", self.physics.r_b)?;
            }
        }
        if !self.cat.is_empty() && family != Family::Spdc {
            return cfg("[[cat]] entries need the SPDC family".into());
        }
        for c in &self.cat {
            if c.window <= 0.0 {
                return cfg(format!("cat {:?}: window must be > 0", c.name));
            }
            if c.order == 0 {
                return cfg(format!("cat {:?}: order must be >= 1", c.name));
            }
        }
        Ok(())
    }

    pub fn spdc_params(&self, xi: f64) -> SpdcParams {
        SpdcParams {
            alpha_p: self.physics.alpha_p.unwrap_or(5.0),
            pump: self.physics.pump,
            ..SpdcParams::new(xi, self.cutoffs.a, self.cutoffs.b)
        }
    }

    pub fn sweep_range(&self) -> Result<&SweepRange> {
        self.sweep
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [sweep] table".into()))
    }

    pub fn direction_spec(&self) -> Result<&DirectionSpec> {
        self.direction
            .as_ref()
            .ok_or_else(|| Error::Config("config has no [direction] table".into()))
    }
}
