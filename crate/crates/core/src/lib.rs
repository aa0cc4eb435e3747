//! Simulation and analysis of Stark-controlled atomic frequency comb memories.
//!
//! - [`spectra`]: analytic comb profiles and recall efficiency (free space and cavity).
//! - [`dynamics`]: microscopic ion-ensemble echo engine with electric-field phase control.
//! - [`prep`]: spectral hole-burning preparation of the comb in a hyperfine level scheme.
//! - [`readout`]: chirped-probe spectroscopy forward model and deconvolution.
//! - [`counting`]: weak-coherent-state photon statistics.

pub mod counting;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod io;
pub mod optim;
pub mod prep;
pub mod readout;
pub mod spectra;

pub use error::{Error, Result};
pub use grid::UniformGrid;
pub use spectra::{AbsorptionProfile, CavitySpec, CombSpec, EfficiencyCurve, EfficiencyPoint};
