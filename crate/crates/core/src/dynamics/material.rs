use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};

/// Host-crystal constants that set the Stark response and optional decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaterialSpec {
    /// Permanent dipole-moment difference |Δμ|/h in Hz per V/m.
    pub dipole_difference_hz_per_v_per_m: f64,
    /// Angle between the dipole difference and the applied field axis (degrees).
    pub dipole_angle_deg: f64,
    pub electrode_gap_m: f64,
    pub excited_lifetime_s: f64,
    pub optical_coherence_time_s: f64,
}

impl Default for MaterialSpec {
    fn default() -> Self {
        Self {
            // A 23 ns FWHM Gaussian at 54 V over 6 mm gives a pi/2 phase with this value.
            dipole_difference_hz_per_v_per_m: 1161.0,
            dipole_angle_deg: 12.4,
            electrode_gap_m: 6e-3,
            excited_lifetime_s: 164e-6,
            optical_coherence_time_s: 152e-6,
        }
    }
}

impl MaterialSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dipole difference", self.dipole_difference_hz_per_v_per_m),
            ("electrode gap", self.electrode_gap_m),
            ("excited lifetime", self.excited_lifetime_s),
            ("optical coherence time", self.optical_coherence_time_s),
        ] {
            ensure(v.is_finite() && v > 0.0, || format!("{name} must be positive, got {v}"))?;
        }
        ensure((0.0..=90.0).contains(&self.dipole_angle_deg), || {
            format!("dipole angle must be in [0, 90] degrees, got {}", self.dipole_angle_deg)
        })
    }

    /// Field in V/m for a voltage across the electrode gap.
    pub fn field_from_voltage(&self, volts: f64) -> f64 {
        volts / self.electrode_gap_m
    }

    /// Stark shift per unit field along the applied axis (Hz per V/m).
    pub fn projected_coefficient(&self) -> f64 {
        let c = self.dipole_angle_deg.to_radians().cos();
        // cos(90 deg) is 6e-17 in floating point; the projection is exactly zero there.
        let c = if self.dipole_angle_deg == 90.0 { 0.0 } else { c };
        self.dipole_difference_hz_per_v_per_m * c
    }
}

/// Stark shift magnitude Ω (Hz) of class +1 for a field in V/m; class -1 shifts by -Ω.
pub fn stark_shift(field_v_per_m: f64, material: &MaterialSpec) -> f64 {
    material.projected_coefficient() * field_v_per_m
}
