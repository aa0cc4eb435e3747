use std::f64::consts::{LN_2, PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use super::material::{stark_shift, MaterialSpec};
use crate::error::{ensure, invalid, Result};
use crate::spectra::gaussian_area_factor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PulseShape {
    Square,
    Gaussian,
}

/// One electric-field pulse.
///
/// For a square pulse `duration_s` is the full length and the pulse occupies
/// `[start, start + duration]`. For a Gaussian it is the FWHM, `start_s` is
/// the leading half-maximum point and the peak sits at `start + FWHM/2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarkPulse {
    pub start_s: f64,
    pub shape: PulseShape,
    pub duration_s: f64,
    /// Signed peak field along the applied axis (V/m).
    pub field_v_per_m: f64,
}

impl StarkPulse {
    pub fn square(start_s: f64, duration_s: f64, field_v_per_m: f64) -> Self {
        Self { start_s, shape: PulseShape::Square, duration_s, field_v_per_m }
    }

    pub fn gaussian(start_s: f64, fwhm_s: f64, field_v_per_m: f64) -> Self {
        Self { start_s, shape: PulseShape::Gaussian, duration_s: fwhm_s, field_v_per_m }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.start_s.is_finite() && self.start_s >= 0.0, || {
            format!("pulse start must be >= 0, got {}", self.start_s)
        })?;
        ensure(self.duration_s.is_finite() && self.duration_s > 0.0, || {
            format!("pulse duration must be positive, got {}", self.duration_s)
        })?;
        ensure(self.field_v_per_m.is_finite(), || "pulse field must be finite".into())
    }

    pub fn center(&self) -> f64 {
        self.start_s + 0.5 * self.duration_s
    }

    pub fn end(&self) -> f64 {
        self.start_s + self.duration_s
    }

    pub fn shifted(mut self, start_s: f64) -> Self {
        self.start_s = start_s;
        self
    }

    /// Time integral of the field-to-shift response, in cycles (Ω·T for a square pulse).
    pub fn area_cycles(&self, material: &MaterialSpec) -> f64 {
        let omega = stark_shift(self.field_v_per_m, material);
        match self.shape {
            PulseShape::Square => omega * self.duration_s,
            PulseShape::Gaussian => omega * self.duration_s * gaussian_area_factor(),
        }
    }

    /// Fraction of the pulse area accumulated by time `t`.
    fn accumulated_fraction(&self, t: f64) -> f64 {
        match self.shape {
            PulseShape::Square => ((t - self.start_s) / self.duration_s).clamp(0.0, 1.0),
            PulseShape::Gaussian => {
                let sigma = self.duration_s / (8.0 * LN_2).sqrt();
                0.5 * (1.0 + erf((t - self.center()) / (SQRT_2 * sigma)))
            }
        }
    }
}

/// Phase (radians) accumulated by the +1 and -1 classes over the whole pulse.
pub fn stark_phase(pulse: &StarkPulse, material: &MaterialSpec) -> (f64, f64) {
    let phi = 2.0 * PI * pulse.area_cycles(material);
    (phi, -phi)
}

/// Pulse template of the given shape and width whose class phase is exactly ±π/2.
pub fn quarter_wave_pulse(shape: PulseShape, duration_s: f64, material: &MaterialSpec) -> Result<StarkPulse> {
    material.validate()?;
    let coeff = material.projected_coefficient();
    ensure(coeff > 0.0, || "field has no projection on the dipole axis".into())?;
    let mut p = StarkPulse { start_s: 0.0, shape, duration_s, field_v_per_m: 1.0 };
    p.validate()?;
    p.field_v_per_m = 0.25 / p.area_cycles(material);
    Ok(p)
}

/// An ordered, non-overlapping sequence of Stark pulses.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarkTimeline {
    pub pulses: Vec<StarkPulse>,
}

impl StarkTimeline {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Sorts by start time and rejects overlapping pulses.
    pub fn new(mut pulses: Vec<StarkPulse>) -> Result<Self> {
        for p in &pulses {
            p.validate()?;
        }
        pulses.sort_by(|a, b| a.start_s.total_cmp(&b.start_s));
        for w in pulses.windows(2) {
            if w[1].start_s < w[0].end() {
                return Err(invalid(format!(
                    "pulses overlap: [{}, {}] and [{}, {}]",
                    w[0].start_s,
                    w[0].end(),
                    w[1].start_s,
                    w[1].end()
                )));
            }
        }
        Ok(Self { pulses })
    }

    pub fn is_empty(&self) -> bool {
        self.pulses.is_empty()
    }

    /// Each pulse's field rescaled so its phase grows by `extra` radians.
    pub fn with_extra_phase(&self, extra: f64, material: &MaterialSpec) -> Self {
        let pulses = self
            .pulses
            .iter()
            .map(|p| {
                let phi = stark_phase(p, material).0;
                let target = phi + extra;
                let mut q = *p;
                q.field_v_per_m = if phi != 0.0 {
                    p.field_v_per_m * target / phi
                } else {
                    target / (2.0 * PI * StarkPulse { field_v_per_m: 1.0, ..*p }.area_cycles(material))
                };
                q
            })
            .collect();
        Self { pulses }
    }

    /// Same pulses with every field negated.
    pub fn negated(&self) -> Self {
        Self {
            pulses: self
                .pulses
                .iter()
                .map(|p| StarkPulse { field_v_per_m: -p.field_v_per_m, ..*p })
                .collect(),
        }
    }
}

/// Evaluates the accumulated +1-class phase `φ(t)` of a timeline.
///
/// Pulses shorter than `kick_threshold_s` act as an instantaneous step at
/// their center (applied for `t >= center`); longer pulses use the exact
/// running integral of their envelope.
#[derive(Debug, Clone)]
pub struct PhaseSchedule {
    entries: Vec<(StarkPulse, f64, bool)>,
}

impl PhaseSchedule {
    pub fn new(timeline: &StarkTimeline, material: &MaterialSpec, kick_threshold_s: f64) -> Self {
        let entries = timeline
            .pulses
            .iter()
            .map(|p| (*p, stark_phase(p, material).0, p.duration_s < kick_threshold_s))
            .collect();
        Self { entries }
    }

    pub fn phase_at(&self, t: f64) -> f64 {
        self.entries
            .iter()
            .map(|(p, phi, kick)| {
                if *kick {
                    if t >= p.center() {
                        *phi
                    } else {
                        0.0
                    }
                } else {
                    phi * p.accumulated_fraction(t)
                }
            })
            .sum()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }
}
