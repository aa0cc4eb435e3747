use std::f64::consts::{LN_2, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Result};
use crate::spectra::{fwhm_to_sigma, CombSpec};

/// Options for drawing an ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SampleOptions {
    /// Intensity FWHM (s) of a transform-limited Gaussian input pulse centered
    /// on the comb. When set, each ion's excitation amplitude is the pulse's
    /// spectral amplitude at its detuning; otherwise all weights are 1.
    pub input_pulse_fwhm_s: Option<f64>,
}

/// Spectral amplitude of a Gaussian pulse with intensity FWHM `tau` at offset `f` (Hz).
pub fn gaussian_pulse_spectrum(f: f64, tau: f64) -> f64 {
    (-(PI * f * tau).powi(2) / (2.0 * LN_2)).exp()
}

/// Sampled ions. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IonEnsemble {
    pub spec: CombSpec,
    pub seed: u64,
    pub peak: Vec<u16>,
    /// Transition frequency relative to the comb center (Hz), peak offset included.
    pub detuning_hz: Vec<f64>,
    /// +1 or -1.
    pub class: Vec<i8>,
    pub weight: Vec<Complex64>,
    /// Spatial phase k·z (radians).
    pub kz: Vec<f64>,
}

impl IonEnsemble {
    pub fn len(&self) -> usize {
        self.detuning_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detuning_hz.is_empty()
    }

    pub fn class_counts(&self) -> (usize, usize) {
        let plus = self.class.iter().filter(|&&c| c > 0).count();
        (plus, self.len() - plus)
    }

    /// Every class label flipped.
    pub fn swapped_classes(&self) -> Self {
        let mut out = self.clone();
        out.class.iter_mut().for_each(|c| *c = -*c);
        out
    }

    /// Copy with all spatial phases replaced.
    pub fn with_kz(&self, kz: Vec<f64>) -> Result<Self> {
        ensure(kz.len() == self.len(), || "kz length mismatch".into())?;
        let mut out = self.clone();
        out.kz = kz;
        Ok(out)
    }

    /// Builds an ensemble from explicit per-ion data.
    pub fn from_parts(
        spec: CombSpec,
        seed: u64,
        peak: Vec<u16>,
        detuning_hz: Vec<f64>,
        class: Vec<i8>,
        weight: Vec<Complex64>,
        kz: Vec<f64>,
    ) -> Result<Self> {
        spec.validate()?;
        let n = detuning_hz.len();
        ensure(peak.len() == n && class.len() == n && weight.len() == n && kz.len() == n, || {
            "per-ion arrays have different lengths".into()
        })?;
        ensure(class.iter().all(|&c| c == 1 || c == -1), || "class labels must be +1 or -1".into())?;
        ensure(peak.iter().all(|&p| (p as usize) < spec.peak_count), || "peak index out of range".into())?;
        ensure(detuning_hz.iter().all(|d| d.is_finite()), || "detunings must be finite".into())?;
        ensure(weight.iter().all(|w| w.re.is_finite() && w.im.is_finite()), || "weights must be finite".into())?;
        ensure(kz.iter().all(|k| k.is_finite()), || "spatial phases must be finite".into())?;
        Ok(Self { spec, seed, peak, detuning_hz, class, weight, kz })
    }
}

/// Number of ions per peak, proportional to the height multipliers
/// (largest-remainder rounding, ties to the lower index).
pub fn allocate_ions(spec: &CombSpec, n_ions: usize) -> Vec<usize> {
    let m: Vec<f64> = (0..spec.peak_count).map(|l| spec.multiplier(l)).collect();
    let total: f64 = m.iter().sum();
    let quotas: Vec<f64> = m.iter().map(|w| w / total * n_ions as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut left = n_ions - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..m.len()).collect();
    order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        counts[i] += 1;
        left -= 1;
    }
    counts
}

fn input_weight(opts: &SampleOptions, detuning: f64) -> Complex64 {
    match opts.input_pulse_fwhm_s {
        Some(tau) => Complex64::new(gaussian_pulse_spectrum(detuning, tau), 0.0),
        None => Complex64::new(1.0, 0.0),
    }
}

fn check_request(spec: &CombSpec, n_ions: usize, opts: &SampleOptions) -> Result<()> {
    spec.validate()?;
    ensure(n_ions >= 2 * spec.peak_count, || {
        format!("need at least {} ions for {} peaks, got {n_ions}", 2 * spec.peak_count, spec.peak_count)
    })?;
    ensure(n_ions <= u32::MAX as usize, || "ensemble too large".into())?;
    if let Some(tau) = opts.input_pulse_fwhm_s {
        ensure(tau.is_finite() && tau > 0.0, || format!("input pulse FWHM must be positive, got {tau}"))?;
    }
    Ok(())
}

/// Draws `n_ions` ions: Gaussian detunings of FWHM γ around each peak center,
/// independent fair-coin Stark classes, uniform spatial phases.
pub fn sample_ensemble(spec: &CombSpec, n_ions: usize, seed: u64, opts: &SampleOptions) -> Result<IonEnsemble> {
    check_request(spec, n_ions, opts)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = fwhm_to_sigma(spec.peak_fwhm_hz);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let counts = allocate_ions(spec, n_ions);

    let mut ens = IonEnsemble {
        spec: spec.clone(),
        seed,
        peak: Vec::with_capacity(n_ions),
        detuning_hz: Vec::with_capacity(n_ions),
        class: Vec::with_capacity(n_ions),
        weight: Vec::with_capacity(n_ions),
        kz: Vec::with_capacity(n_ions),
    };
    for (l, &count) in counts.iter().enumerate() {
        let center = spec.peak_center(l);
        for _ in 0..count {
            let d = center + sigma * std.sample(&mut rng);
            ens.peak.push(l as u16);
            ens.detuning_hz.push(d);
            ens.class.push(if rng.random_bool(0.5) { 1 } else { -1 });
            ens.weight.push(input_weight(opts, d));
            ens.kz.push(rng.random_range(0.0..2.0 * PI));
        }
    }
    Ok(ens)
}

/// Exactly class-balanced ensemble: every sampled +1 ion has a -1 twin with
/// the same detuning, weight and spatial phase, and detunings are mirrored
/// about each peak center. `n_ions` is rounded down to a multiple of 4.
pub fn sample_mirrored_ensemble(spec: &CombSpec, n_ions: usize, seed: u64, opts: &SampleOptions) -> Result<IonEnsemble> {
    check_request(spec, n_ions, opts)?;
    let quads = n_ions / 4;
    ensure(quads >= spec.peak_count, || "too few ions for a mirrored ensemble".into())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sigma = fwhm_to_sigma(spec.peak_fwhm_hz);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let counts = allocate_ions(spec, quads);
    let n = 4 * quads;
    let mut peak = Vec::with_capacity(n);
    let mut detuning = Vec::with_capacity(n);
    let mut class = Vec::with_capacity(n);
    let mut weight = Vec::with_capacity(n);
    let mut kz = Vec::with_capacity(n);
    for (l, &count) in counts.iter().enumerate() {
        let center = spec.peak_center(l);
        for _ in 0..count {
            let off = sigma * std.sample(&mut rng);
            let phase = rng.random_range(0.0..2.0 * PI);
            for d in [center + off, center - off] {
                for c in [1i8, -1] {
                    peak.push(l as u16);
                    detuning.push(d);
                    class.push(c);
                    weight.push(input_weight(opts, d));
                    kz.push(phase);
                }
            }
        }
    }
    IonEnsemble::from_parts(spec.clone(), seed, peak, detuning, class, weight, kz)
}
