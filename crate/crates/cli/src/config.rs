//! Declarative run configuration. Every section has defaults matching the
//! Pr:YSO experiment, so an empty document is a complete configuration.

use std::path::{Path, PathBuf};

use afc_core::counting::{DetectorSpec, ShotPlan};
use afc_core::dynamics::{EngineOptions, MaterialSpec, PulseShape, SampleOptions, StarkPulse};
use afc_core::prep::{BurnSequence, LevelScheme, PrepSettings};
use afc_core::readout::{ChirpSpec, DeconvolutionOptions, DetectorResponse};
use afc_core::spectra::{CavitySpec, CombSpec};
use afc_core::UniformGrid;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub material: MaterialSpec,
    pub comb: CombSpec,
    pub efficiency: EfficiencySection,
    pub ensemble: EnsembleSection,
    pub stark: StarkSection,
    pub echo_map: EchoMapSection,
    pub prep: PrepSection,
    pub readout: ReadoutSection,
    pub cavity: CavitySection,
    pub detector: DetectorSpec,
    pub plan: ShotPlan,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            material: MaterialSpec::default(),
            comb: CombSpec::default(),
            efficiency: EfficiencySection::default(),
            ensemble: EnsembleSection::default(),
            stark: StarkSection::default(),
            echo_map: EchoMapSection::default(),
            prep: PrepSection::default(),
            readout: ReadoutSection::default(),
            cavity: CavitySection::default(),
            detector: DetectorSpec::default(),
            plan: ShotPlan::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EfficiencySection {
    pub times_s: Vec<f64>,
    /// Also evaluate the ensemble simulation at the comb echo times.
    pub cross_validate: bool,
}

impl Default for EfficiencySection {
    fn default() -> Self {
        Self { times_s: (2..=90).map(|k| k as f64 * 50e-9).collect(), cross_validate: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleSection {
    pub n_ions: usize,
    pub sampling: SampleOptions,
    pub engine: EngineOptions,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        Self {
            n_ions: 200_000,
            sampling: SampleOptions { input_pulse_fwhm_s: Some(150e-9) },
            engine: EngineOptions::default(),
        }
    }
}

/// Electrode pulse used for phase control.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StarkSection {
    pub voltage_v: f64,
    pub shape: PulseShape,
    pub duration_s: f64,
    pub first_start_s: f64,
}

impl Default for StarkSection {
    fn default() -> Self {
        Self { voltage_v: 54.0, shape: PulseShape::Gaussian, duration_s: 23e-9, first_start_s: 100e-9 }
    }
}

impl StarkSection {
    /// Pulse template starting at `t = 0`.
    pub fn template(&self, material: &MaterialSpec) -> StarkPulse {
        let field = material.field_from_voltage(self.voltage_v);
        match self.shape {
            PulseShape::Square => StarkPulse::square(0.0, self.duration_s, field),
            PulseShape::Gaussian => StarkPulse::gaussian(0.0, self.duration_s, field),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DetectionMode {
    /// Classical intensity traces.
    #[default]
    Bright,
    /// Adds Poisson count histograms per delay.
    WeakCoherent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EchoMapSection {
    /// Explicit delays; when empty the start/stop/step sweep is used.
    pub delays_s: Vec<f64>,
    pub delay_start_s: f64,
    pub delay_stop_s: f64,
    pub delay_step_s: f64,
    /// Trace window; starts after the transmitted input pulse.
    pub window_start_s: f64,
    pub window_stop_s: f64,
    pub time_step_s: f64,
    pub mode: DetectionMode,
}

impl Default for EchoMapSection {
    fn default() -> Self {
        Self {
            delays_s: Vec::new(),
            delay_start_s: 0.0,
            delay_stop_s: 4.5e-6,
            delay_step_s: 50e-9,
            window_start_s: 250e-9,
            window_stop_s: 5e-6,
            time_step_s: 5e-9,
            mode: DetectionMode::Bright,
        }
    }
}

impl EchoMapSection {
    pub fn delays(&self) -> Result<Vec<f64>, CliError> {
        if !self.delays_s.is_empty() {
            let mut d = self.delays_s.clone();
            d.sort_by(f64::total_cmp);
            return Ok(d);
        }
        if !(self.delay_step_s > 0.0) || self.delay_stop_s < self.delay_start_s {
            return Err(CliError::Config("echo_map delay sweep is empty or has a non-positive step".into()));
        }
        let n = ((self.delay_stop_s - self.delay_start_s) / self.delay_step_s + 1e-9).floor() as usize + 1;
        Ok((0..n).map(|k| self.delay_start_s + k as f64 * self.delay_step_s).collect())
    }

    pub fn grid(&self) -> Result<UniformGrid, CliError> {
        Ok(UniformGrid::span(self.window_start_s, self.window_stop_s, self.time_step_s)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSection {
    /// TOML level scheme; the bundled Pr:YSO scheme when absent.
    pub level_scheme: Option<PathBuf>,
    /// Burn sequence CSV; the bundled sequence when absent.
    pub sequence: Option<PathBuf>,
    /// Multiplies every burn pulse width.
    pub width_scale: f64,
    pub settings: PrepSettings,
    /// Peaks reported in the summary.
    pub report_peaks: usize,
}

impl Default for PrepSection {
    fn default() -> Self {
        Self { level_scheme: None, sequence: None, width_scale: 1.0, settings: PrepSettings::default(), report_peaks: 4 }
    }
}

impl PrepSection {
    pub fn level_scheme(&self) -> Result<LevelScheme, CliError> {
        Ok(match &self.level_scheme {
            Some(p) => LevelScheme::load(p)?,
            None => LevelScheme::default(),
        })
    }

    pub fn sequence(&self) -> Result<BurnSequence, CliError> {
        let seq = match &self.sequence {
            Some(p) => BurnSequence::load(p)?,
            None => BurnSequence::default(),
        };
        Ok(if self.width_scale == 1.0 { seq } else { seq.with_width_scale(self.width_scale)? })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    pub chirp: ChirpSpec,
    /// Synthetic structure probed by the chirp.
    pub structure: CombSpec,
    pub profile_start_hz: f64,
    pub profile_stop_hz: f64,
    pub profile_step_hz: f64,
    pub detector: DetectorResponse,
    /// Tabulated `freq_hz,re,im` response; overrides `detector`.
    pub detector_file: Option<PathBuf>,
    pub compensate: bool,
    pub deconvolution: DeconvolutionOptions,
    pub fit_peaks: usize,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            // the last peak needs several microseconds of ringing before the sweep ends
            chirp: ChirpSpec { span_hz: 22e6, ..ChirpSpec::default() },
            structure: CombSpec {
                peak_optical_depth: 0.8,
                center_frequency_hz: 7.49e6,
                ..CombSpec::default()
            },
            profile_start_hz: -4e6,
            profile_stop_hz: 20e6,
            profile_step_hz: 5e3,
            detector: DetectorResponse::default(),
            detector_file: None,
            compensate: true,
            deconvolution: DeconvolutionOptions::default(),
            fit_peaks: 4,
        }
    }
}

impl ReadoutSection {
    pub fn detector(&self) -> Result<DetectorResponse, CliError> {
        let d = match &self.detector_file {
            Some(p) => DetectorResponse::load_tabulated(p)?,
            None => self.detector.clone(),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn profile_grid(&self) -> Result<UniformGrid, CliError> {
        Ok(UniformGrid::span(self.profile_start_hz, self.profile_stop_hz, self.profile_step_hz)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavitySection {
    pub r1: f64,
    pub r2: f64,
    pub peak_optical_depth: f64,
    pub peak_fwhm_hz: f64,
    pub storage_time_s: f64,
    pub finesse_min: f64,
    pub finesse_max: f64,
    pub points: usize,
}

impl Default for CavitySection {
    fn default() -> Self {
        Self {
            r1: 0.96,
            r2: 0.999,
            peak_optical_depth: 1.0,
            peak_fwhm_hz: 1e3,
            storage_time_s: 100e-6,
            finesse_min: 2.0,
            finesse_max: 500.0,
            points: 400,
        }
    }
}

impl CavitySection {
    pub fn cavity(&self) -> CavitySpec {
        CavitySpec { r1: self.r1, r2: self.r2 }
    }
}

/// A parsed configuration together with the hash of its canonical form.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: Option<PathBuf>,
    pub config_sha256: String,
}

impl RunConfig {
    /// Parses TOML; relative file references resolve against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, CliError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if let Some(base) = base {
            for p in [&mut cfg.prep.level_scheme, &mut cfg.prep.sequence, &mut cfg.readout.detector_file]
                .into_iter()
                .flatten()
            {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    /// Sha-256 of the canonical JSON form; equal configurations hash equally
    /// regardless of formatting or omitted defaults.
    pub fn sha256(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.material.validate()?;
        self.comb.validate()?;
        self.detector.validate()?;
        self.plan.validate()?;
        self.readout.chirp.validate()?;
        if self.ensemble.n_ions == 0 {
            return Err(CliError::Config("ensemble.n_ions must be positive".into()));
        }
        Ok(())
    }
}

pub fn load(path: Option<&Path>) -> Result<LoadedConfig, CliError> {
    let config = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            RunConfig::from_toml(&text, p.parent())?
        }
        None => RunConfig::default(),
    };
    let config_sha256 = config.sha256();
    Ok(LoadedConfig { config, source: path.map(Path::to_path_buf), config_sha256 })
}
