//! Fixtures shared by the kernel benchmarks.

use afc_core::dynamics::{sample_ensemble, IonEnsemble, MaterialSpec, SampleOptions, StarkPulse, StarkTimeline};
use afc_core::readout::{apply_detector, chirp_forward, gaussian_peaks, BeatTrace, ChirpSpec, DetectorResponse, ForwardMethod};
use afc_core::spectra::{AbsorptionProfile, CombSpec};
use afc_core::UniformGrid;

pub const SPACING_HZ: f64 = 2.3e6;

pub fn lab_comb() -> CombSpec {
    CombSpec::new(4, SPACING_HZ, 140e3, 45.0).expect("valid comb")
}

pub fn ensemble(n_ions: usize) -> IonEnsemble {
    sample_ensemble(&lab_comb(), n_ions, 7, &SampleOptions::default()).expect("ensemble")
}

/// Storage pulse followed by a recall pulse two periods later.
pub fn recall_timeline(material: &MaterialSpec) -> StarkTimeline {
    let pulse = StarkPulse::gaussian(0.0, 23e-9, material.field_from_voltage(54.0));
    StarkTimeline::new(vec![pulse.shifted(100e-9), pulse.shifted(100e-9 + 2.0 / SPACING_HZ)]).expect("timeline")
}

/// Four-peak structure on the default readout frequency grid.
pub fn readout_truth() -> AbsorptionProfile {
    let grid = UniformGrid::new(-4e6, 5e3, 4801).expect("grid");
    let peaks: Vec<(f64, f64, f64)> = (0..4).map(|k| (4.04e6 + k as f64 * SPACING_HZ, 140e3, 0.8)).collect();
    gaussian_peaks(&grid, &peaks).expect("profile")
}

pub fn readout_chirp() -> ChirpSpec {
    ChirpSpec { span_hz: 22e6, ..ChirpSpec::default() }
}

pub fn detected_trace() -> BeatTrace {
    let det = DetectorResponse::SinglePole { bandwidth_hz: 3.5e6 };
    let raw = chirp_forward(&readout_truth(), &readout_chirp(), ForwardMethod::Convolution).expect("forward");
    apply_detector(&raw, &det).expect("detector")
}
