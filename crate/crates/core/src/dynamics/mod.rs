//! Microscopic ensemble model of comb echoes under Stark phase control.
//!
//! The collective field is `Σ_j c_j exp(i 2π ν_j t + i s_j φ(t))` with
//! `s_j = ±1` the ion's Stark class and `φ(t)` the phase accumulated from the
//! electric-field timeline. Because `φ` depends only on the class, the field
//! factors as `e^{iφ} S₊(t) + e^{-iφ} S₋(t)`; the class sums are computed
//! once per time grid and reused for every timeline.

mod engine;
mod ensemble;
mod material;
mod timeline;

pub use engine::{
    check_time_grid, class_sums_at, class_sums_on_grid, echo_map, emission_trace, on_demand_recall, suppression_ratio,
    two_pulse_timeline, ClassSums, EchoRecord, EmissionEngine, EmissionTrace, EngineOptions, Recall, CHUNK,
};
pub use ensemble::{
    allocate_ions, gaussian_pulse_spectrum, sample_ensemble, sample_mirrored_ensemble, IonEnsemble, SampleOptions,
};
pub use material::{stark_shift, MaterialSpec};
pub use timeline::{quarter_wave_pulse, stark_phase, PhaseSchedule, PulseShape, StarkPulse, StarkTimeline};
