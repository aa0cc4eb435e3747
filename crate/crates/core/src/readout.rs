//! Chirped-probe readout of an absorption structure: forward model of the
//! beat pattern, finite detector bandwidth, inversion back to optical depth
//! and Gaussian peak fitting.
//!
//! Complex field transmission is the minimum-phase filter whose magnitude is
//! `exp(-αL(ν)/2)`; its phase follows from the magnitude through the
//! discrete Hilbert relation (folded cepstrum).

use std::f64::consts::{LN_2, PI};
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, invalid, Error, Result};
use crate::grid::{interpolate, UniformGrid};
use crate::io::{read_columns, RESPONSE_HEADER};
use crate::optim::levenberg_marquardt;
use crate::spectra::AbsorptionProfile;

/// Linear frequency sweep of the probe, starting at `t = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChirpSpec {
    /// Sweep rate (Hz/s).
    pub rate_hz_per_s: f64,
    pub start_hz: f64,
    pub span_hz: f64,
    /// Field amplitude (arbitrary units).
    pub amplitude: f64,
    pub sample_step_s: f64,
    /// Zero-padding factor of the FFT grid relative to the sweep length.
    pub padding: usize,
}

impl Default for ChirpSpec {
    fn default() -> Self {
        Self { rate_hz_per_s: 1e12, start_hz: -3e6, span_hz: 18e6, amplitude: 1.0, sample_step_s: 5e-9, padding: 4 }
    }
}

impl ChirpSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.rate_hz_per_s > 0.0 && self.rate_hz_per_s.is_finite(), || "chirp rate must be positive".into())?;
        ensure(self.span_hz > 0.0 && self.span_hz.is_finite(), || "chirp span must be positive".into())?;
        ensure(self.amplitude > 0.0 && self.amplitude.is_finite(), || "amplitude must be positive".into())?;
        ensure(self.sample_step_s > 0.0, || "sample step must be positive".into())?;
        ensure(self.padding >= 4, || format!("padding must be >= 4, got {}", self.padding))?;
        let fmax = self.start_hz.abs().max((self.start_hz + self.span_hz).abs());
        let nyquist = 0.5 / self.sample_step_s;
        if fmax >= nyquist {
            return Err(Error::UnderResolvedGrid(format!(
                "sweep reaches {fmax} Hz but the {} s sample step resolves only {nyquist} Hz",
                self.sample_step_s
            )));
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.span_hz / self.rate_hz_per_s
    }

    pub fn samples(&self) -> usize {
        (self.duration() / self.sample_step_s).floor() as usize + 1
    }

    pub fn time_grid(&self) -> Result<UniformGrid> {
        UniformGrid::new(0.0, self.sample_step_s, self.samples())
    }

    /// Instantaneous probe frequency at each sample: `start + rate t`.
    pub fn frequency_grid(&self) -> Result<UniformGrid> {
        UniformGrid::new(self.start_hz, self.rate_hz_per_s * self.sample_step_s, self.samples())
    }

    fn fft_len(&self) -> usize {
        (self.padding * self.samples()).next_power_of_two()
    }

    fn field(&self, len: usize) -> Vec<Complex64> {
        let n = self.samples();
        let mut e = vec![Complex64::new(0.0, 0.0); len];
        for (k, v) in e.iter_mut().take(n).enumerate() {
            let t = k as f64 * self.sample_step_s;
            *v = self.amplitude * Complex64::cis(2.0 * PI * self.start_hz * t + PI * self.rate_hz_per_s * t * t);
        }
        e
    }
}

/// Detected intensity versus time.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatTrace {
    pub grid: UniformGrid,
    pub intensity: Vec<f64>,
}

impl BeatTrace {
    pub fn new(grid: UniformGrid, intensity: Vec<f64>) -> Result<Self> {
        ensure(intensity.len() == grid.len, || "trace length does not match its grid".into())?;
        ensure(intensity.iter().all(|v| v.is_finite()), || "trace samples must be finite".into())?;
        Ok(Self { grid, intensity })
    }

    pub fn energy(&self) -> f64 {
        self.intensity.iter().sum::<f64>() * self.grid.step
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum DetectorResponse {
    /// Infinite bandwidth.
    Ideal,
    /// `1 / (1 + i f / f_c)`.
    SinglePole { bandwidth_hz: f64 },
    /// Complex response tabulated at non-negative frequencies; negative
    /// frequencies use the conjugate (real impulse response).
    Tabulated { freq_hz: Vec<f64>, re: Vec<f64>, im: Vec<f64> },
}

impl Default for DetectorResponse {
    fn default() -> Self {
        DetectorResponse::SinglePole { bandwidth_hz: 3.5e6 }
    }
}

impl DetectorResponse {
    pub fn validate(&self) -> Result<()> {
        match self {
            DetectorResponse::Ideal => Ok(()),
            DetectorResponse::SinglePole { bandwidth_hz } => {
                ensure(*bandwidth_hz > 0.0 && bandwidth_hz.is_finite(), || "detector bandwidth must be positive".into())
            }
            DetectorResponse::Tabulated { freq_hz, re, im } => {
                ensure(freq_hz.len() >= 2 && re.len() == freq_hz.len() && im.len() == freq_hz.len(), || {
                    "tabulated response needs >= 2 rows of equal length".into()
                })?;
                ensure(freq_hz[0] >= 0.0 && freq_hz.windows(2).all(|w| w[1] > w[0]), || {
                    "tabulated frequencies must be non-negative and increasing".into()
                })
            }
        }
    }

    /// Reads `freq_hz,re,im`.
    pub fn load_tabulated(path: impl AsRef<Path>) -> Result<Self> {
        Self::tabulated_from_csv(std::fs::File::open(path)?)
    }

    pub fn tabulated_from_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut cols = read_columns(input, &RESPONSE_HEADER)?;
        let im = cols.pop().unwrap_or_default();
        let re = cols.pop().unwrap_or_default();
        let freq_hz = cols.pop().unwrap_or_default();
        let d = DetectorResponse::Tabulated { freq_hz, re, im };
        d.validate()?;
        Ok(d)
    }

    pub fn response(&self, f: f64) -> Complex64 {
        match self {
            DetectorResponse::Ideal => Complex64::new(1.0, 0.0),
            DetectorResponse::SinglePole { bandwidth_hz } => Complex64::new(1.0, f / bandwidth_hz).inv(),
            DetectorResponse::Tabulated { freq_hz, re, im } => {
                let a = f.abs();
                let lerp = |ys: &[f64]| {
                    let i = freq_hz.partition_point(|&x| x <= a);
                    if i == 0 {
                        ys[0]
                    } else if i >= freq_hz.len() {
                        ys[ys.len() - 1]
                    } else {
                        let w = (a - freq_hz[i - 1]) / (freq_hz[i] - freq_hz[i - 1]);
                        ys[i - 1] + w * (ys[i] - ys[i - 1])
                    }
                };
                let h = Complex64::new(lerp(re), lerp(im));
                if f < 0.0 {
                    h.conj()
                } else {
                    h
                }
            }
        }
    }
}

struct Ffts {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    len: usize,
}

impl Ffts {
    fn new(len: usize) -> Self {
        let mut p = FftPlanner::new();
        Self { fwd: p.plan_fft_forward(len), inv: p.plan_fft_inverse(len), len }
    }

    fn forward(&self, x: &mut [Complex64]) {
        self.fwd.process(x);
    }

    /// Normalized inverse.
    fn inverse(&self, x: &mut [Complex64]) {
        self.inv.process(x);
        let s = 1.0 / self.len as f64;
        x.iter_mut().for_each(|v| *v *= s);
    }

    fn freq(&self, k: usize, dt: f64) -> f64 {
        let k = if k <= self.len / 2 { k as f64 } else { k as f64 - self.len as f64 };
        k / (self.len as f64 * dt)
    }
}

/// Minimum-phase transfer function with `|H| = exp(-αL/2)` on an FFT grid.
fn minimum_phase(ffts: &Ffts, alpha: &[f64]) -> Vec<Complex64> {
    let n = ffts.len;
    let mut c: Vec<Complex64> = alpha.iter().map(|a| Complex64::new(-0.5 * a, 0.0)).collect();
    ffts.inverse(&mut c);
    for (k, v) in c.iter_mut().enumerate() {
        let w = if k == 0 || k == n / 2 {
            1.0
        } else if k < n / 2 {
            2.0
        } else {
            0.0
        };
        *v *= w;
    }
    ffts.forward(&mut c);
    c.iter().map(|z| z.exp()).collect()
}

fn propagate(ffts: &Ffts, chirp: &ChirpSpec, transfer: &[Complex64]) -> Vec<f64> {
    let mut e = chirp.field(ffts.len);
    ffts.forward(&mut e);
    e.iter_mut().zip(transfer).for_each(|(a, h)| *a *= h);
    ffts.inverse(&mut e);
    e.iter().take(chirp.samples()).map(|z| z.norm_sqr()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ForwardMethod {
    /// Full linear-system propagation of the swept field.
    #[default]
    Convolution,
    /// `I(t) = A² exp(-αL(start + rate t))`; ignores the free-induction decay.
    InstantaneousFrequency,
}

/// Probe intensity transmitted through the profile. Optical depth is zero
/// outside the profile grid.
pub fn chirp_forward(profile: &AbsorptionProfile, chirp: &ChirpSpec, method: ForwardMethod) -> Result<BeatTrace> {
    chirp.validate()?;
    let lo = chirp.start_hz;
    let hi = chirp.start_hz + chirp.span_hz;
    let tol = 1e-9 * chirp.span_hz;
    ensure(profile.grid.start <= lo + tol && profile.grid.end() >= hi - tol, || {
        format!(
            "profile [{}, {}] does not cover the sweep [{lo}, {hi}]",
            profile.grid.start,
            profile.grid.end()
        )
    })?;
    let tgrid = chirp.time_grid()?;
    let a2 = chirp.amplitude * chirp.amplitude;
    match method {
        ForwardMethod::InstantaneousFrequency => {
            let fgrid = chirp.frequency_grid()?;
            let intensity = fgrid.points().map(|nu| a2 * (-profile.at(nu)).exp()).collect();
            BeatTrace::new(tgrid, intensity)
        }
        ForwardMethod::Convolution => {
            let ffts = Ffts::new(chirp.fft_len());
            let alpha: Vec<f64> = (0..ffts.len)
                .map(|k| {
                    let f = ffts.freq(k, chirp.sample_step_s);
                    if profile.grid.contains(f) {
                        profile.at(f)
                    } else {
                        0.0
                    }
                })
                .collect();
            let h = minimum_phase(&ffts, &alpha);
            BeatTrace::new(tgrid, propagate(&ffts, chirp, &h))
        }
    }
}

/// Trace extended to `len` samples by a raised-cosine blend from the last
/// sample back to the first, so circular filtering sees no jump.
fn smooth_wrap(x: &[f64], len: usize) -> Vec<Complex64> {
    let n = x.len();
    let gap = len - n;
    let (first, last) = (x[0], x[n - 1]);
    let mut out: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for j in 0..gap {
        let u = (j + 1) as f64 / (gap + 1) as f64;
        let w = 0.5 * (1.0 - (PI * u).cos());
        out.push(Complex64::new(last + w * (first - last), 0.0));
    }
    out
}

fn filter_trace(trace: &BeatTrace, mut gain: impl FnMut(f64) -> Complex64) -> Result<BeatTrace> {
    let n = trace.intensity.len();
    ensure(n >= 2, || "trace too short".into())?;
    let ffts = Ffts::new((2 * n).next_power_of_two());
    let mut x = smooth_wrap(&trace.intensity, ffts.len);
    ffts.forward(&mut x);
    for (k, v) in x.iter_mut().enumerate() {
        *v *= gain(ffts.freq(k, trace.grid.step));
    }
    ffts.inverse(&mut x);
    BeatTrace::new(trace.grid, x.iter().take(n).map(|z| z.re).collect())
}

/// Linear time-invariant filtering of the detected signal.
pub fn apply_detector(trace: &BeatTrace, det: &DetectorResponse) -> Result<BeatTrace> {
    det.validate()?;
    if matches!(det, DetectorResponse::Ideal) {
        return Ok(trace.clone());
    }
    filter_trace(trace, |f| det.response(f))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DeconvolutionOptions {
    /// Tikhonov floor relative to the peak detector gain.
    pub regularization: f64,
    pub max_refinements: usize,
    pub method: ForwardMethod,
}

impl Default for DeconvolutionOptions {
    fn default() -> Self {
        Self { regularization: 1e-3, max_refinements: 30, method: ForwardMethod::Convolution }
    }
}

/// Regularized inverse of a detector response. Fails when the response sits
/// below the floor over more than half of the band.
pub fn compensate_detector(trace: &BeatTrace, det: &DetectorResponse, regularization: f64) -> Result<BeatTrace> {
    det.validate()?;
    if matches!(det, DetectorResponse::Ideal) {
        return Ok(trace.clone());
    }
    let n = (2 * trace.intensity.len()).next_power_of_two();
    let ffts = Ffts::new(n);
    let gains: Vec<Complex64> = (0..n).map(|k| det.response(ffts.freq(k, trace.grid.step))).collect();
    let peak = gains.iter().map(|g| g.norm()).fold(0.0, f64::max);
    let floor = regularization * peak;
    let below = gains.iter().filter(|g| g.norm() < floor).count();
    if !(peak > 0.0) || 2 * below > n {
        return Err(Error::IllConditioned(format!(
            "detector response below {floor:e} over {below} of {n} frequency bins"
        )));
    }
    let mut k = 0;
    filter_trace(trace, |_| {
        let g = gains[k];
        k += 1;
        g.conj() / (g.norm_sqr() + floor * floor)
    })
}

/// First-order inverse of the beat pattern. With `y = I/A² - 1` sampled at
/// the probe frequencies, returns `D = H - 1` on the same frequencies.
fn linear_inverse(ffts_n: &Ffts, y: &[f64], chirp: &ChirpSpec) -> Vec<Complex64> {
    let m = y.len();
    let dnu = chirp.rate_hz_per_s * chirp.sample_step_s;
    let mut q: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    ffts_n.inverse(&mut q);
    for (k, v) in q.iter_mut().enumerate() {
        if k == 0 {
            *v *= 0.5;
        } else if k < m.div_ceil(2) {
            let tau = k as f64 / (m as f64 * dnu);
            *v *= Complex64::cis(-PI * chirp.rate_hz_per_s * tau * tau);
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    ffts_n.forward(&mut q);
    q
}

/// Inverts a beat trace to optical depth on the sweep's frequency grid.
///
/// With a detector given, its response is first removed by Tikhonov-regularized
/// division. The first-order inverse is then refined against the full forward
/// model, keeping the iterate with the smallest residual. The slab transfer
/// function already contains propagation of the free-induction field through
/// the remaining medium; nothing beyond linear response is modelled.
pub fn deconvolve_profile(
    trace: &BeatTrace,
    chirp: &ChirpSpec,
    det: Option<&DetectorResponse>,
    opts: &DeconvolutionOptions,
) -> Result<AbsorptionProfile> {
    chirp.validate()?;
    ensure(opts.regularization > 0.0, || "regularization must be positive".into())?;
    let n = chirp.samples();
    ensure(trace.intensity.len() == n && (trace.grid.step - chirp.sample_step_s).abs() <= 1e-12 * chirp.sample_step_s, || {
        format!("trace ({} samples, step {}) does not match the sweep ({n} samples)", trace.intensity.len(), trace.grid.step)
    })?;
    let trace = match det {
        Some(d) => compensate_detector(trace, d, opts.regularization)?,
        None => trace.clone(),
    };
    let a2 = chirp.amplitude * chirp.amplitude;
    let fgrid = chirp.frequency_grid()?;
    if opts.method == ForwardMethod::InstantaneousFrequency {
        let od = trace.intensity.iter().map(|&i| (-(i / a2).max(f64::MIN_POSITIVE).ln()).max(0.0)).collect();
        return AbsorptionProfile::new(fgrid, od);
    }

    let y: Vec<f64> = trace.intensity.iter().map(|&i| i / a2 - 1.0).collect();
    let small = Ffts::new(n);
    let big = Ffts::new(chirp.fft_len());
    let forward = |d: &[Complex64]| -> Vec<f64> {
        let h: Vec<Complex64> = (0..big.len)
            .map(|k| {
                let f = big.freq(k, chirp.sample_step_s);
                if fgrid.contains(f) {
                    Complex64::new(1.0, 0.0) + interp_complex(&fgrid, d, f)
                } else {
                    Complex64::new(1.0, 0.0)
                }
            })
            .collect();
        propagate(&big, chirp, &h).iter().map(|&i| i / a2 - 1.0).collect()
    };
    let norm = |r: &[f64]| r.iter().map(|v| v * v).sum::<f64>();

    let mut d = linear_inverse(&small, &y, chirp);
    let mut best_res = f64::INFINITY;
    let mut best = d.clone();
    for _ in 0..opts.max_refinements {
        let model = forward(&d);
        let r: Vec<f64> = y.iter().zip(&model).map(|(a, b)| a - b).collect();
        let res = norm(&r);
        if !(res < best_res) {
            break;
        }
        best_res = res;
        best = d.clone();
        let step = linear_inverse(&small, &r, chirp);
        d.iter_mut().zip(&step).for_each(|(a, b)| *a += b);
    }
    let od = best.iter().map(|z| (-2.0 * (Complex64::new(1.0, 0.0) + z).norm().ln()).max(0.0)).collect();
    AbsorptionProfile::new(fgrid, od)
}

fn interp_complex(grid: &UniformGrid, d: &[Complex64], x: f64) -> Complex64 {
    let u = ((x - grid.start) / grid.step).clamp(0.0, (grid.len - 1) as f64);
    let i = (u.floor() as usize).min(grid.len - 2);
    let w = u - i as f64;
    d[i] * (1.0 - w) + d[i + 1] * w
}

/// One fitted Gaussian with one-sigma uncertainties.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeakFit {
    pub center_hz: f64,
    pub fwhm_hz: f64,
    pub height: f64,
    pub center_err: f64,
    pub fwhm_err: f64,
    pub height_err: f64,
}

#[derive(Debug, Clone)]
pub struct PeakFitReport {
    pub peaks: Vec<PeakFit>,
    pub sse: f64,
    /// Residual sum of squares after every accepted optimizer step.
    pub accepted_sse: Vec<f64>,
    pub iterations: usize,
}

/// Half-maximum width around sample `k`, walking outwards; linear interpolation at the crossings.
fn half_max_width(grid: &UniformGrid, v: &[f64], k: usize) -> f64 {
    let half = 0.5 * v[k];
    let mut lo = k;
    while lo > 0 && v[lo] > half {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < v.len() && v[hi] > half {
        hi += 1;
    }
    let cross = |i: usize, j: usize| {
        let (a, b) = (v[i], v[j]);
        let w = if b != a { (half - a) / (b - a) } else { 0.5 };
        grid.at(i) + w * (grid.at(j) - grid.at(i))
    };
    let left = if lo < k { cross(lo, lo + 1) } else { grid.at(k) - 0.5 * grid.step };
    let right = if hi > k { cross(hi - 1, hi) } else { grid.at(k) + 0.5 * grid.step };
    (right - left).max(grid.step)
}

/// Least-squares fit of `n_peaks` Gaussians.
///
/// Starting values come from the tallest local maxima, each suppressing
/// candidates within its half-maximum width, so noise ripples on one peak
/// do not seed a second one.
pub fn fit_peaks(profile: &AbsorptionProfile, n_peaks: usize) -> Result<PeakFitReport> {
    fit_peaks_samples(&profile.grid, &profile.optical_depth, n_peaks)
}

/// [`fit_peaks`] on raw samples, which may be negative (noisy measurements).
pub fn fit_peaks_samples(grid: &UniformGrid, v: &[f64], n_peaks: usize) -> Result<PeakFitReport> {
    ensure(n_peaks >= 1, || "n_peaks must be >= 1".into())?;
    ensure(v.len() == grid.len && v.len() >= 3, || "samples must match a grid of >= 3 points".into())?;
    let mut maxima: Vec<usize> = (1..v.len() - 1).filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] > 0.0).collect();
    maxima.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut seeds: Vec<(f64, f64, f64)> = Vec::new();
    for &i in &maxima {
        if seeds.len() == n_peaks {
            break;
        }
        let x = grid.at(i);
        if seeds.iter().any(|&(c, w, _)| (x - c).abs() < w) {
            continue;
        }
        seeds.push((x, half_max_width(grid, v, i), v[i]));
    }
    if seeds.len() < n_peaks {
        return Err(Error::Degenerate(format!(
            "profile has {} separable maxima, {} peaks requested",
            seeds.len(),
            n_peaks
        )));
    }
    seeds.sort_by(|a, b| a.0.total_cmp(&b.0));

    let xs = grid.to_vec();
    let k = 4.0 * LN_2;
    let mut p0 = Vec::with_capacity(3 * n_peaks);
    for &(c, w, h) in &seeds {
        p0.extend([c, w, h]);
    }
    let report = levenberg_marquardt(
        |p, r, jac: Option<&mut DMatrix<f64>>| {
            for (i, &x) in xs.iter().enumerate() {
                let mut m = 0.0;
                for j in 0..n_peaks {
                    let (c, w, h) = (p[3 * j], p[3 * j + 1], p[3 * j + 2]);
                    m += h * (-k * ((x - c) / w).powi(2)).exp();
                }
                r[i] = m - v[i];
            }
            if let Some(jm) = jac {
                for (i, &x) in xs.iter().enumerate() {
                    for j in 0..n_peaks {
                        let (c, w, h) = (p[3 * j], p[3 * j + 1], p[3 * j + 2]);
                        let u = (x - c) / w;
                        let e = (-k * u * u).exp();
                        jm[(i, 3 * j)] = h * e * 2.0 * k * u / w;
                        jm[(i, 3 * j + 1)] = h * e * 2.0 * k * u * u / w;
                        jm[(i, 3 * j + 2)] = e;
                    }
                }
            }
        },
        &p0,
        xs.len(),
        500,
    )?;
    let cov = report.covariance();
    let err = |i: usize| cov.as_ref().map_or(f64::NAN, |c| c[(i, i)].max(0.0).sqrt());
    let peaks: Vec<PeakFit> = (0..n_peaks)
        .map(|j| PeakFit {
            center_hz: report.params[3 * j],
            fwhm_hz: report.params[3 * j + 1].abs(),
            height: report.params[3 * j + 2],
            center_err: err(3 * j),
            fwhm_err: err(3 * j + 1),
            height_err: err(3 * j + 2),
        })
        .collect();
    for a in 0..n_peaks {
        for b in a + 1..n_peaks {
            let w = peaks[a].fwhm_hz.max(peaks[b].fwhm_hz);
            if (peaks[a].center_hz - peaks[b].center_hz).abs() < 0.5 * w {
                return Err(Error::Degenerate(format!(
                    "peaks at {} and {} Hz are closer than half their width",
                    peaks[a].center_hz, peaks[b].center_hz
                )));
            }
        }
    }
    if peaks.iter().any(|p| !(p.fwhm_hz > 0.0) || !p.height.is_finite()) {
        return Err(Error::NonConvergence("fit produced a non-physical peak".into()));
    }
    Ok(PeakFitReport { peaks, sse: report.sse, accepted_sse: report.accepted_sse, iterations: report.iterations })
}

/// Gaussian optical-depth profile helper for tests and synthetic inputs.
pub fn gaussian_peaks(grid: &UniformGrid, peaks: &[(f64, f64, f64)]) -> Result<AbsorptionProfile> {
    for &(_, w, h) in peaks {
        if !(w > 0.0) || h < 0.0 {
            return Err(invalid("peak width must be positive and height non-negative"));
        }
    }
    let k = 4.0 * LN_2;
    let od = grid
        .points()
        .map(|x| peaks.iter().map(|&(c, w, h)| h * (-k * ((x - c) / w).powi(2)).exp()).sum())
        .collect();
    AbsorptionProfile::new(*grid, od)
}

/// Optical depth at `x` from a profile, zero outside its grid.
pub fn profile_value(profile: &AbsorptionProfile, x: f64) -> f64 {
    if profile.grid.contains(x) {
        interpolate(&profile.grid, &profile.optical_depth, x)
    } else {
        0.0
    }
}
