//! Weak-coherent-state photon counting: expected counts, dark floor, SNR
//! and Monte-Carlo detection histograms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::dynamics::EmissionTrace;
use crate::error::{ensure, invalid, Error, Result};
use crate::spectra::gaussian_area_factor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSpec {
    pub quantum_efficiency: f64,
    pub dark_rate_hz: f64,
    pub bin_width_s: f64,
}

impl Default for DetectorSpec {
    fn default() -> Self {
        Self { quantum_efficiency: 0.69, dark_rate_hz: 26.0, bin_width_s: 350e-9 }
    }
}

impl DetectorSpec {
    pub fn validate(&self) -> Result<()> {
        ensure((0.0..=1.0).contains(&self.quantum_efficiency), || {
            format!("quantum efficiency {} outside [0, 1]", self.quantum_efficiency)
        })?;
        ensure(self.dark_rate_hz >= 0.0 && self.dark_rate_hz.is_finite(), || "dark rate must be >= 0".into())?;
        ensure(self.bin_width_s > 0.0 && self.bin_width_s.is_finite(), || "bin width must be positive".into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ShotPlan {
    /// Mean photon number per storage pulse.
    pub mean_photon_number: f64,
    pub shots_per_cycle: u64,
    pub cycles: u64,
    /// Detection-path transmission after the memory, excluding the detector
    /// quantum efficiency. Not measured; fitted where needed.
    pub path_transmission: f64,
    /// FWHM of the Gaussian input pulse; converts a peak-normalized trace to
    /// photon number.
    pub input_pulse_fwhm_s: f64,
}

impl Default for ShotPlan {
    fn default() -> Self {
        Self { mean_photon_number: 0.097, shots_per_cycle: 2000, cycles: 15, path_transmission: 1.0, input_pulse_fwhm_s: 150e-9 }
    }
}

impl ShotPlan {
    pub fn validate(&self) -> Result<()> {
        ensure(self.mean_photon_number >= 0.0 && self.mean_photon_number.is_finite(), || {
            "mean photon number must be >= 0".into()
        })?;
        ensure(self.shots_per_cycle > 0 && self.cycles > 0, || "shot totals must be positive".into())?;
        ensure((0.0..=1.0).contains(&self.path_transmission), || {
            format!("path transmission {} outside [0, 1]", self.path_transmission)
        })?;
        ensure(self.input_pulse_fwhm_s > 0.0, || "input pulse FWHM must be positive".into())
    }

    pub fn total_shots(&self) -> u64 {
        self.shots_per_cycle * self.cycles
    }

    /// Time integral of a unit-peak input pulse.
    pub fn pulse_area_s(&self) -> f64 {
        self.input_pulse_fwhm_s * gaussian_area_factor()
    }
}

/// `n̄ η T_path QE N_shots`.
pub fn expected_signal(plan: &ShotPlan, efficiency: f64, det: &DetectorSpec) -> Result<f64> {
    plan.validate()?;
    det.validate()?;
    ensure((0.0..=1.0).contains(&efficiency), || format!("efficiency {efficiency} outside [0, 1]"))?;
    Ok(plan.mean_photon_number * efficiency * plan.path_transmission * det.quantum_efficiency * plan.total_shots() as f64)
}

/// Dark counts in one bin accumulated over `shots`.
pub fn expected_dark(det: &DetectorSpec, shots: u64) -> Result<f64> {
    det.validate()?;
    Ok(det.dark_rate_hz * det.bin_width_s * shots as f64)
}

/// Signal mean over noise-floor mean.
pub fn snr(signal_counts: f64, dark_counts: f64) -> Result<f64> {
    ensure(signal_counts >= 0.0, || "signal counts must be >= 0".into())?;
    if !(dark_counts > 0.0) {
        return Err(invalid("noise floor must be positive"));
    }
    Ok(signal_counts / dark_counts)
}

/// Path transmission that makes the plan reach `target_snr`; fails when even
/// a lossless path falls short.
pub fn fit_path_transmission(target_snr: f64, plan: &ShotPlan, efficiency: f64, det: &DetectorSpec) -> Result<f64> {
    ensure(target_snr > 0.0, || "target SNR must be positive".into())?;
    let ideal = ShotPlan { path_transmission: 1.0, ..*plan };
    let dark = expected_dark(det, plan.total_shots())?;
    let best = snr(expected_signal(&ideal, efficiency, det)?, dark)?;
    if target_snr > best {
        return Err(Error::InvalidParameter(format!("SNR {target_snr} exceeds the lossless-path value {best}")));
    }
    Ok(target_snr / best)
}

/// Counts per time bin accumulated over every shot of a plan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountHistogram {
    pub bin_start_s: Vec<f64>,
    pub bin_width_s: f64,
    pub counts: Vec<u64>,
}

impl CountHistogram {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        crate::io::write_counts(out, &self.bin_start_s, &self.counts)
    }
}

/// Start times of the detection bins covering the trace.
pub fn bin_starts(trace: &EmissionTrace, det: &DetectorSpec) -> Vec<f64> {
    let span = trace.grid.end() - trace.grid.start;
    let n = ((span / det.bin_width_s).floor() as usize).max(1);
    (0..n).map(|b| trace.grid.start + b as f64 * det.bin_width_s).collect()
}

/// Mean counts per bin over all shots. The trace is peak-normalized to the
/// input pulse, so its integral over a bin divided by the input pulse area
/// is the emitted photon fraction.
pub fn expected_histogram(plan: &ShotPlan, trace: &EmissionTrace, det: &DetectorSpec) -> Result<Vec<f64>> {
    plan.validate()?;
    det.validate()?;
    ensure(trace.intensity.iter().all(|v| v.is_finite() && *v >= 0.0), || "trace must be finite and >= 0".into())?;
    let starts = bin_starts(trace, det);
    let mut photons = vec![0.0; starts.len()];
    for (k, &i) in trace.intensity.iter().enumerate() {
        let b = ((trace.grid.at(k) - trace.grid.start) / det.bin_width_s).floor() as usize;
        if let Some(p) = photons.get_mut(b) {
            *p += i * trace.grid.step;
        }
    }
    let shots = plan.total_shots() as f64;
    let per_photon = plan.mean_photon_number * plan.path_transmission * det.quantum_efficiency / plan.pulse_area_s();
    let dark = expected_dark(det, 1)?;
    Ok(photons.iter().map(|p| shots * (per_photon * p + dark)).collect())
}

/// Poisson-sampled histogram. Each cycle draws from its own ChaCha stream,
/// so results depend only on `seed`, never on execution order.
pub fn simulate_detection(plan: &ShotPlan, trace: &EmissionTrace, det: &DetectorSpec, seed: u64) -> Result<CountHistogram> {
    let mean = expected_histogram(plan, trace, det)?;
    let per_cycle = 1.0 / plan.cycles as f64;
    let mut counts = vec![0u64; mean.len()];
    for cycle in 0..plan.cycles {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(cycle);
        for (c, &m) in counts.iter_mut().zip(&mean) {
            let lambda = m * per_cycle;
            if lambda > 0.0 {
                let d = Poisson::new(lambda).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                *c += d.sample(&mut rng) as u64;
            }
        }
    }
    Ok(CountHistogram { bin_start_s: bin_starts(trace, det), bin_width_s: det.bin_width_s, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_oracles() {
        let det = DetectorSpec::default();
        let plan = ShotPlan::default();
        assert_eq!(plan.total_shots(), 30_000);
        let dark = expected_dark(&det, 30_000).unwrap();
        assert!((dark - 26.0 * 350e-9 * 3e4).abs() < 1e-15);
        assert!((dark - 0.273).abs() < 1e-12);
        let s = expected_signal(&plan, 0.38, &det).unwrap();
        assert!((s - 0.097 * 0.38 * 0.69 * 3e4).abs() < 1e-9);
        assert!((s - 763.0).abs() < 1.0);
        assert!((snr(156.0, 0.273).unwrap() - 571.4).abs() < 0.1);
        assert!((snr(s, dark).unwrap() - 2795.0).abs() < 1.0);
        assert_eq!(expected_signal(&plan, 0.0, &det).unwrap(), 0.0);
    }

    #[test]
    fn dark_scales_with_bin_and_rate() {
        let det = DetectorSpec::default();
        let wide = DetectorSpec { bin_width_s: 700e-9, ..det };
        assert!((expected_dark(&wide, 10).unwrap() - 2.0 * expected_dark(&det, 10).unwrap()).abs() < 1e-15);
        assert_eq!(expected_dark(&DetectorSpec { dark_rate_hz: 0.0, ..det }, 10).unwrap(), 0.0);
    }

    #[test]
    fn snr_rejects_zero_floor_and_is_shot_invariant() {
        assert!(snr(1.0, 0.0).unwrap_err().is_validation());
        assert_eq!(snr(3.0, 3.0).unwrap(), 1.0);
        let det = DetectorSpec::default();
        let a = ShotPlan::default();
        let b = ShotPlan { cycles: 45, ..a };
        let r = |p: &ShotPlan| snr(expected_signal(p, 0.3, &det).unwrap(), expected_dark(&det, p.total_shots()).unwrap()).unwrap();
        assert!((r(&a) - r(&b)).abs() < 1e-9 * r(&a));
    }

    #[test]
    fn path_fit_hits_target() {
        let det = DetectorSpec::default();
        let plan = ShotPlan::default();
        let t = fit_path_transmission(570.0, &plan, 0.38, &det).unwrap();
        let fitted = ShotPlan { path_transmission: t, ..plan };
        let s = snr(expected_signal(&fitted, 0.38, &det).unwrap(), expected_dark(&det, 30_000).unwrap()).unwrap();
        assert!((s - 570.0).abs() < 1e-9);
        assert!((t - 0.204).abs() < 0.001, "{t}");
        assert!(fit_path_transmission(1e5, &plan, 0.38, &det).is_err());
    }

    #[test]
    fn validation() {
        assert!(DetectorSpec { quantum_efficiency: 1.2, ..Default::default() }.validate().is_err());
        assert!(ShotPlan { mean_photon_number: -0.1, ..Default::default() }.validate().is_err());
        assert!(ShotPlan { cycles: 0, ..Default::default() }.validate().is_err());
    }
}
