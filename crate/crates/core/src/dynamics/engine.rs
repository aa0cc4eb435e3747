use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ensemble::IonEnsemble;
use super::material::MaterialSpec;
use super::timeline::{stark_phase, PhaseSchedule, StarkPulse, StarkTimeline};
use crate::error::{ensure, invalid, Error, Result};
use crate::grid::UniformGrid;
use crate::optim::brent_minimize;
use crate::spectra::efficiency_forward;

/// Ions per parallel work unit; partial sums are reduced in chunk order.
pub const CHUNK: usize = 8192;
/// Phasor recurrence steps between exact re-evaluations.
const REANCHOR: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineOptions {
    /// Deplete the stored excitation by each emitted echo.
    pub attrition: bool,
    /// Multiply the field amplitude by `exp(-t / T2)`.
    pub coherence_decay: bool,
    /// Pulses shorter than this fraction of `1/Δ` act as instantaneous kicks.
    pub kick_threshold: f64,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self { attrition: true, coherence_decay: false, kick_threshold: 0.1 }
    }
}

impl EngineOptions {
    pub fn without_attrition(mut self) -> Self {
        self.attrition = false;
        self
    }
}

/// Efficiency carried away by one rephasing at `m/Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EchoRecord {
    pub index: usize,
    pub time_s: f64,
    /// Fraction of the stored excitation emitted in this echo.
    pub efficiency: f64,
}

/// Emission intensity on a uniform time grid, in units of recall efficiency
/// per echo: the first free echo at `1/Δ` equals the analytic forward efficiency.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionTrace {
    pub grid: UniformGrid,
    pub intensity: Vec<f64>,
    /// Analytic efficiency at `1/Δ` that anchors the scale.
    pub reference_efficiency: f64,
    pub echoes: Vec<EchoRecord>,
}

impl EmissionTrace {
    pub fn times(&self) -> Vec<f64> {
        self.grid.to_vec()
    }

    /// Index and value of the largest sample with time in `[lo, hi]`.
    pub fn max_in(&self, lo: f64, hi: f64) -> Option<(usize, f64)> {
        (0..self.grid.len)
            .filter(|&i| {
                let t = self.grid.at(i);
                t >= lo && t <= hi
            })
            .map(|i| (i, self.intensity[i]))
            .fold(None, |best, (i, v)| match best {
                Some((_, bv)) if bv >= v => best,
                _ => Some((i, v)),
            })
    }

    /// Sum of per-echo emitted efficiencies.
    pub fn total_emitted(&self) -> f64 {
        self.echoes.iter().map(|e| e.efficiency).sum()
    }
}

/// Per-class coherent sums `S±(t) = Σ w_j exp(i 2π ν_j t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassSums {
    pub plus: Vec<Complex64>,
    pub minus: Vec<Complex64>,
}

fn forward_weights(ens: &IonEnsemble, range: std::ops::Range<usize>) -> Vec<Complex64> {
    // Absorption imprints exp(i kz) and forward emission reads out exp(-i kz).
    range
        .map(|j| ens.weight[j] * Complex64::cis(ens.kz[j]) * Complex64::cis(-ens.kz[j]))
        .collect()
}

fn reduce_in_order(parts: Vec<(Vec<Complex64>, Vec<Complex64>)>, len: usize) -> ClassSums {
    let mut plus = vec![Complex64::new(0.0, 0.0); len];
    let mut minus = plus.clone();
    for (p, m) in parts {
        for k in 0..len {
            plus[k] += p[k];
            minus[k] += m[k];
        }
    }
    ClassSums { plus, minus }
}

/// Class sums on every point of a uniform grid.
pub fn class_sums_on_grid(ens: &IonEnsemble, grid: &UniformGrid) -> ClassSums {
    let n = ens.len();
    let k_len = grid.len;
    let parts: Vec<_> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(n);
            let w = forward_weights(ens, range.clone());
            let mut plus = vec![Complex64::new(0.0, 0.0); k_len];
            let mut minus = plus.clone();
            for (wj, j) in w.iter().zip(range) {
                let omega = 2.0 * PI * ens.detuning_hz[j];
                let rot = Complex64::cis(omega * grid.step);
                let acc = if ens.class[j] > 0 { &mut plus } else { &mut minus };
                let mut z = Complex64::new(0.0, 0.0);
                for (k, a) in acc.iter_mut().enumerate() {
                    if k % REANCHOR == 0 {
                        z = wj * Complex64::cis(omega * grid.at(k));
                    }
                    *a += z;
                    z *= rot;
                }
            }
            (plus, minus)
        })
        .collect();
    reduce_in_order(parts, k_len)
}

/// Class sums at arbitrary times, each evaluated exactly.
pub fn class_sums_at(ens: &IonEnsemble, times: &[f64]) -> ClassSums {
    let n = ens.len();
    let parts: Vec<_> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let range = c * CHUNK..((c + 1) * CHUNK).min(n);
            let w = forward_weights(ens, range.clone());
            let mut plus = vec![Complex64::new(0.0, 0.0); times.len()];
            let mut minus = plus.clone();
            for (wj, j) in w.iter().zip(range) {
                let omega = 2.0 * PI * ens.detuning_hz[j];
                let acc = if ens.class[j] > 0 { &mut plus } else { &mut minus };
                for (a, &t) in acc.iter_mut().zip(times) {
                    *a += wj * Complex64::cis(omega * t);
                }
            }
            (plus, minus)
        })
        .collect();
    reduce_in_order(parts, times.len())
}

fn combine(plus: Complex64, minus: Complex64, phi: f64) -> Complex64 {
    Complex64::cis(phi) * plus + Complex64::cis(-phi) * minus
}

/// Precomputed ensemble sums for one time grid; traces for many timelines
/// reuse them.
pub struct EmissionEngine<'a> {
    ens: &'a IonEnsemble,
    material: MaterialSpec,
    opts: EngineOptions,
    grid: UniformGrid,
    sums: ClassSums,
    echo_times: Vec<f64>,
    echo_sums: ClassSums,
    scale: f64,
    reference: f64,
}

/// Rejects grids coarser than `1/(4 M Δ)` or starting before zero.
pub fn check_time_grid(ens: &IonEnsemble, grid: &UniformGrid) -> Result<()> {
    let spec = &ens.spec;
    let limit = 1.0 / (4.0 * spec.peak_count as f64 * spec.spacing_hz);
    if grid.step > limit * (1.0 + 1e-9) {
        return Err(Error::UnderResolvedGrid(format!(
            "time step {} s exceeds 1/(4 M Δ) = {limit} s",
            grid.step
        )));
    }
    ensure(grid.start >= 0.0, || format!("time grid starts before zero ({})", grid.start))
}

impl<'a> EmissionEngine<'a> {
    pub fn new(ens: &'a IonEnsemble, grid: &UniformGrid, material: &MaterialSpec, opts: &EngineOptions) -> Result<Self> {
        material.validate()?;
        ensure(!ens.is_empty(), || "empty ensemble".into())?;
        ensure(opts.kick_threshold >= 0.0, || "kick threshold must be >= 0".into())?;
        check_time_grid(ens, grid)?;
        let period = 1.0 / ens.spec.spacing_hz;
        let last = (grid.end() / period + 1e-9).floor() as usize;
        let mut echo_times = vec![period];
        echo_times.extend((2..=last).map(|m| m as f64 * period));
        // Index 0 is always 1/Δ (the normalization anchor) even when the grid ends earlier.
        let all = class_sums_at(ens, &echo_times);
        let free = (all.plus[0] + all.minus[0]).norm_sqr();
        if !(free > 0.0) {
            return Err(Error::Degenerate("ensemble has no free echo at 1/Δ".into()));
        }
        let reference = efficiency_forward(&ens.spec, period)?;
        echo_times.truncate(last);
        let echo_sums = ClassSums { plus: all.plus[..last].to_vec(), minus: all.minus[..last].to_vec() };
        let sums = class_sums_on_grid(ens, grid);
        Ok(Self {
            ens,
            material: material.clone(),
            opts: *opts,
            grid: *grid,
            sums,
            echo_times,
            echo_sums,
            scale: reference / free,
            reference,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    /// Absolute-efficiency scale applied to `|field|²`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    fn schedule(&self, timeline: &StarkTimeline) -> PhaseSchedule {
        PhaseSchedule::new(timeline, &self.material, self.opts.kick_threshold / self.ens.spec.spacing_hz)
    }

    fn decay(&self, t: f64) -> f64 {
        if self.opts.coherence_decay {
            (-t / self.material.optical_coherence_time_s).exp()
        } else {
            1.0
        }
    }

    /// Per-echo emission and the remaining-excitation factor after each echo.
    fn attrition(&self, schedule: &PhaseSchedule) -> (Vec<EchoRecord>, Vec<f64>) {
        let mut remaining = 1.0;
        let mut records = Vec::with_capacity(self.echo_times.len());
        let mut after = Vec::with_capacity(self.echo_times.len());
        for (m, &t) in self.echo_times.iter().enumerate() {
            let field = combine(self.echo_sums.plus[m], self.echo_sums.minus[m], schedule.phase_at(t)) * self.decay(t);
            let raw = (self.scale * field.norm_sqr()).clamp(0.0, 1.0);
            records.push(EchoRecord { index: m + 1, time_s: t, efficiency: remaining * raw });
            if self.opts.attrition {
                remaining *= 1.0 - raw;
            }
            after.push(remaining);
        }
        (records, after)
    }

    /// Remaining excitation at time `t`: depletion by echo `m` takes effect at `(m + 1/2)/Δ`.
    fn remaining_at(&self, after: &[f64], t: f64) -> f64 {
        let steps = ((t * self.ens.spec.spacing_hz - 0.5).floor() as i64).max(0) as usize;
        let steps = steps.min(after.len());
        if steps == 0 {
            1.0
        } else {
            after[steps - 1]
        }
    }

    pub fn trace(&self, timeline: &StarkTimeline) -> Result<EmissionTrace> {
        let schedule = self.schedule(timeline);
        let (echoes, after) = self.attrition(&schedule);
        let intensity = (0..self.grid.len)
            .map(|k| {
                let t = self.grid.at(k);
                let field = combine(self.sums.plus[k], self.sums.minus[k], schedule.phase_at(t));
                self.scale * self.remaining_at(&after, t) * (self.decay(t) * field.norm()).powi(2)
            })
            .collect();
        Ok(EmissionTrace { grid: self.grid, intensity, reference_efficiency: self.reference, echoes })
    }

    /// Exact intensity at arbitrary times (not restricted to the grid).
    pub fn intensity_at(&self, timeline: &StarkTimeline, times: &[f64]) -> Vec<f64> {
        let schedule = self.schedule(timeline);
        let (_, after) = self.attrition(&schedule);
        let sums = class_sums_at(self.ens, times);
        times
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let field = combine(sums.plus[i], sums.minus[i], schedule.phase_at(t));
                self.scale * self.remaining_at(&after, t) * (self.decay(t) * field.norm()).powi(2)
            })
            .collect()
    }
}

/// Emission intensity of the ensemble under a Stark timeline.
pub fn emission_trace(
    ens: &IonEnsemble,
    timeline: &StarkTimeline,
    grid: &UniformGrid,
    material: &MaterialSpec,
    opts: &EngineOptions,
) -> Result<EmissionTrace> {
    EmissionEngine::new(ens, grid, material, opts)?.trace(timeline)
}

/// Two-pulse timeline: the template at `first_start_s` and again `delay_s`
/// later. Zero delay merges both into one pulse of twice the field.
pub fn two_pulse_timeline(template: &StarkPulse, first_start_s: f64, delay_s: f64) -> Result<StarkTimeline> {
    ensure(delay_s >= 0.0 && delay_s.is_finite(), || format!("delay must be >= 0, got {delay_s}"))?;
    let first = template.shifted(first_start_s);
    if delay_s == 0.0 {
        let merged = StarkPulse { field_v_per_m: 2.0 * template.field_v_per_m, ..first };
        return StarkTimeline::new(vec![merged]);
    }
    StarkTimeline::new(vec![first, template.shifted(first_start_s + delay_s)])
}

/// One trace per pulse delay, sharing the ensemble sums.
pub fn echo_map(
    ens: &IonEnsemble,
    delays: &[f64],
    template: &StarkPulse,
    first_start_s: f64,
    grid: &UniformGrid,
    material: &MaterialSpec,
    opts: &EngineOptions,
) -> Result<Vec<EmissionTrace>> {
    ensure(!delays.is_empty(), || "no delays given".into())?;
    ensure(delays.windows(2).all(|w| w[0] <= w[1]), || "delays must be sorted".into())?;
    ensure(delays[0] >= 0.0, || "delays must be non-negative".into())?;
    let timelines = delays
        .iter()
        .map(|&d| two_pulse_timeline(template, first_start_s, d))
        .collect::<Result<Vec<_>>>()?;
    let engine = EmissionEngine::new(ens, grid, material, opts)?;
    timelines.iter().map(|tl| engine.trace(tl)).collect()
}

/// Intensity at `1/Δ` with a single Stark pulse relative to no pulse.
pub fn suppression_ratio(ens: &IonEnsemble, timeline: &StarkTimeline, material: &MaterialSpec, opts: &EngineOptions) -> Result<f64> {
    material.validate()?;
    let period = 1.0 / ens.spec.spacing_hz;
    if timeline.pulses.len() != 1 {
        return Err(invalid(format!("expected exactly one pulse, got {}", timeline.pulses.len())));
    }
    let pulse = &timeline.pulses[0];
    ensure(pulse.end() < period, || format!("pulse must end before the first echo at {period} s"))?;
    let schedule = PhaseSchedule::new(timeline, material, opts.kick_threshold * period);
    let sums = class_sums_at(ens, &[period]);
    let free = (sums.plus[0] + sums.minus[0]).norm_sqr();
    if !(free > 0.0) {
        return Err(Error::Degenerate("ensemble has no free echo at 1/Δ".into()));
    }
    Ok(combine(sums.plus[0], sums.minus[0], schedule.phase_at(period)).norm_sqr() / free)
}

#[derive(Debug, Clone)]
pub struct Recall {
    pub echo_time_s: f64,
    pub efficiency: f64,
    pub timeline: StarkTimeline,
    pub trace: EmissionTrace,
}

/// Places two quarter-wave pulses so the first free echo is suppressed and
/// emission is restored at `n/Δ`, then locates that echo.
///
/// The first pulse starts at `first_start_s`. For `n = 1` the second pulse
/// follows immediately; otherwise it is centered at `(n - 1/2)/Δ`. The trace
/// covers `[(n - 1/2)/Δ, (n + 1/2)/Δ]` with the given step.
pub fn on_demand_recall(
    ens: &IonEnsemble,
    n: usize,
    template: &StarkPulse,
    first_start_s: f64,
    step_s: f64,
    material: &MaterialSpec,
    opts: &EngineOptions,
) -> Result<Recall> {
    ensure(n >= 1, || "echo index must be >= 1".into())?;
    let phi = stark_phase(template, material).0;
    ensure((phi.rem_euclid(PI) - PI / 2.0).abs() < 1e-2, || {
        format!("pulse template gives phase {phi} rad, not ±π/2")
    })?;
    let period = 1.0 / ens.spec.spacing_hz;
    let first = template.shifted(first_start_s);
    ensure(first.center() < period, || "first pulse must act before the first echo".into())?;
    let second_start = if n == 1 { first.end() } else { (n as f64 - 0.5) * period - 0.5 * template.duration_s };
    let second = template.shifted(second_start);
    ensure(second.center() < n as f64 * period, || "second pulse does not precede the requested echo".into())?;
    let timeline = StarkTimeline::new(vec![first, second])?;

    let lo = (n as f64 - 0.5) * period;
    let len = (period / step_s).ceil() as usize + 1;
    let grid = UniformGrid::new(lo, step_s, len)?;
    let engine = EmissionEngine::new(ens, &grid, material, opts)?;
    let trace = engine.trace(&timeline)?;
    let (k, _) = trace.max_in(grid.start, grid.end()).expect("non-empty grid");
    let tk = grid.at(k);
    let refined = brent_minimize(|t| -engine.intensity_at(&timeline, &[t])[0], tk - step_s, tk + step_s, 1e-10, 100);
    let (echo_time_s, efficiency) = if -refined.value >= trace.intensity[k] { (refined.x, -refined.value) } else { (tk, trace.intensity[k]) };
    Ok(Recall { echo_time_s, efficiency, timeline, trace })
}
