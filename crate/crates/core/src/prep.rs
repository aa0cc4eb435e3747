//! Spectral hole-burning preparation of a comb over a three-level ground and
//! three-level excited hyperfine structure.
//!
//! Ions are grouped into classes labelled by `x`, the frequency of their
//! `1/2g -> 1/2e` transition. A class absorbs on `x + E_e[e] - E_g[g]` for
//! every ground/excited pair. Pulses are collapsed to an instantaneous
//! excite-and-decay map: excitation out of a ground level is followed
//! immediately by branching back to the ground levels.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{ensure, invalid, Error, Result};
use crate::grid::UniformGrid;
use crate::spectra::{fwhm_to_sigma, AbsorptionProfile};

/// Peak single-shot transfer probability for a full-strength transition.
pub const TRANSFER_EFFICIENCY: f64 = 0.05;

const DEFAULT_SCHEME: &str = include_str!("../data/level_scheme.toml");
const DEFAULT_SEQUENCE: &str = include_str!("../data/burn_sequence.csv");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelScheme {
    /// `[1/2g-3/2g, 3/2g-5/2g]` in Hz.
    pub ground_splittings_hz: [f64; 2],
    /// `[1/2e-3/2e, 3/2e-5/2e]` in Hz.
    pub excited_splittings_hz: [f64; 2],
    /// `s[g][e]`.
    pub oscillator_strengths: [[f64; 3]; 3],
    /// `b[e][g]`; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branching: Option<[[f64; 3]; 3]>,
}

impl Default for LevelScheme {
    fn default() -> Self {
        Self::from_toml(DEFAULT_SCHEME).expect("bundled level scheme is valid")
    }
}

impl LevelScheme {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        for v in self.ground_splittings_hz.iter().chain(&self.excited_splittings_hz) {
            ensure(v.is_finite() && *v > 0.0, || format!("splittings must be positive, got {v}"))?;
        }
        // Zero strength is allowed: such a transition simply never couples.
        for row in &self.oscillator_strengths {
            for &s in row {
                ensure((0.0..=1.0).contains(&s), || format!("oscillator strength {s} outside [0, 1]"))?;
            }
        }
        for row in &self.branching() {
            ensure(row.iter().all(|&b| (0.0..=1.0).contains(&b)), || "branching ratios must lie in [0, 1]".into())?;
            let sum: f64 = row.iter().sum();
            ensure((sum - 1.0).abs() <= 1e-12, || format!("branching row sums to {sum}, not 1"))?;
        }
        Ok(())
    }

    pub fn branching(&self) -> [[f64; 3]; 3] {
        self.branching.unwrap_or([[1.0 / 3.0; 3]; 3])
    }

    /// Ground-level energies relative to `1/2g` (Hz, decreasing).
    pub fn ground_energies(&self) -> [f64; 3] {
        let [a, b] = self.ground_splittings_hz;
        [0.0, -a, -(a + b)]
    }

    /// Excited-level energies relative to `1/2e` (Hz, increasing).
    pub fn excited_energies(&self) -> [f64; 3] {
        let [a, b] = self.excited_splittings_hz;
        [0.0, a, a + b]
    }

    /// Frequency of transition `g -> e` for the class labelled `x`.
    pub fn transition_frequency(&self, x: f64, t: Transition) -> f64 {
        x + self.excited_energies()[t.excited] - self.ground_energies()[t.ground]
    }

    pub fn strength(&self, t: Transition) -> f64 {
        self.oscillator_strengths[t.ground][t.excited]
    }
}

/// A ground-to-excited hyperfine transition, written like `5/2g->1/2e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Transition {
    pub ground: usize,
    pub excited: usize,
}

impl Transition {
    pub fn new(ground: usize, excited: usize) -> Result<Self> {
        ensure(ground < 3 && excited < 3, || format!("level index out of range: {ground}, {excited}"))?;
        Ok(Self { ground, excited })
    }

    pub fn all() -> impl Iterator<Item = Transition> {
        (0..3).flat_map(|g| (0..3).map(move |e| Transition { ground: g, excited: e }))
    }
}

const LEVEL_NAMES: [&str; 3] = ["1/2", "3/2", "5/2"];

fn parse_level(s: &str, suffix: char) -> Result<usize> {
    let body = s
        .trim()
        .strip_suffix(suffix)
        .ok_or_else(|| Error::Parse(format!("level '{s}' must end with '{suffix}'")))?;
    LEVEL_NAMES
        .iter()
        .position(|n| *n == body)
        .ok_or_else(|| Error::Parse(format!("unknown level '{s}'")))
}

impl FromStr for Transition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let (g, e) = s.split_once("->").ok_or_else(|| Error::Parse(format!("transition '{s}' needs '->'")))?;
        Ok(Self { ground: parse_level(g, 'g')?, excited: parse_level(e, 'e')? })
    }
}

impl fmt::Display for Transition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}g->{}e", LEVEL_NAMES[self.ground], LEVEL_NAMES[self.excited])
    }
}

impl Serialize for Transition {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Transition {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PulseKind {
    Sechyp,
    /// Sechyp edges around a linear scan of `scan_hz`.
    Hybrid { scan_hz: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnPulseSpec {
    pub name: String,
    pub center_hz: f64,
    pub width_hz: f64,
    pub t_fwhm_s: f64,
    /// Recorded only; the collapsed dynamics do not use it.
    pub t_cutoff_s: f64,
    pub target: Transition,
    pub repetitions: u32,
    pub kind: PulseKind,
}

impl BurnPulseSpec {
    pub fn validate(&self) -> Result<()> {
        ensure(self.repetitions >= 1, || format!("{}: repetitions must be >= 1", self.name))?;
        ensure(self.center_hz.is_finite(), || format!("{}: center must be finite", self.name))?;
        ensure(self.width_hz > 0.0 && self.t_fwhm_s > 0.0, || format!("{}: widths must be positive", self.name))?;
        ensure(self.t_cutoff_s >= 0.0, || format!("{}: cutoff must be >= 0", self.name))?;
        if let PulseKind::Hybrid { scan_hz } = self.kind {
            ensure(scan_hz >= 0.0 && scan_hz.is_finite(), || format!("{}: scan must be >= 0", self.name))?;
        }
        Ok(())
    }

    /// Width of the transfer plateau (Hz).
    pub fn plateau_hz(&self) -> f64 {
        match self.kind {
            PulseKind::Sechyp => self.width_hz,
            PulseKind::Hybrid { scan_hz } => self.width_hz + scan_hz,
        }
    }

    /// Edge scale of the tanh profile (Hz): the sechyp time scale `t_FWHM / ln(2 + √3)`.
    pub fn edge_hz(&self) -> f64 {
        (2.0 + 3f64.sqrt()).ln() / (std::f64::consts::PI * self.t_fwhm_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurnSequence {
    pub pulses: Vec<BurnPulseSpec>,
}

#[derive(Debug, Deserialize, Serialize)]
struct SequenceRow {
    name: String,
    nu_mhz: f64,
    nu_width_mhz: f64,
    t_fwhm_us: f64,
    t_cutoff_us: f64,
    target: String,
    reps: u32,
    kind: String,
    #[serde(default)]
    scan_mhz: Option<f64>,
}

impl Default for BurnSequence {
    fn default() -> Self {
        Self::from_csv(DEFAULT_SEQUENCE.as_bytes()).expect("bundled sequence is valid")
    }
}

impl BurnSequence {
    pub fn new(pulses: Vec<BurnPulseSpec>) -> Result<Self> {
        ensure(!pulses.is_empty(), || "burn sequence is empty".into())?;
        for p in &pulses {
            p.validate()?;
        }
        Ok(Self { pulses })
    }

    /// Columns: `name,nu_mhz,nu_width_mhz,t_fwhm_us,t_cutoff_us,target,reps,kind[,scan_mhz]`.
    pub fn from_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).flexible(true).from_reader(input);
        let mut pulses = Vec::new();
        for row in r.deserialize::<SequenceRow>() {
            let row = row?;
            let kind = match row.kind.as_str() {
                "sechyp" => PulseKind::Sechyp,
                "hybrid" => PulseKind::Hybrid { scan_hz: row.scan_mhz.unwrap_or(0.8) * 1e6 },
                other => return Err(Error::Parse(format!("{}: unknown pulse kind '{other}'", row.name))),
            };
            pulses.push(BurnPulseSpec {
                target: row.target.parse()?,
                name: row.name,
                center_hz: row.nu_mhz * 1e6,
                width_hz: row.nu_width_mhz * 1e6,
                t_fwhm_s: row.t_fwhm_us * 1e-6,
                t_cutoff_s: row.t_cutoff_us * 1e-6,
                repetitions: row.reps,
                kind,
            });
        }
        Self::new(pulses)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        for p in &self.pulses {
            let (kind, scan) = match p.kind {
                PulseKind::Sechyp => ("sechyp", 0.0),
                PulseKind::Hybrid { scan_hz } => ("hybrid", scan_hz / 1e6),
            };
            w.serialize(SequenceRow {
                name: p.name.clone(),
                nu_mhz: p.center_hz / 1e6,
                nu_width_mhz: p.width_hz / 1e6,
                t_fwhm_us: p.t_fwhm_s * 1e6,
                t_cutoff_us: p.t_cutoff_s * 1e6,
                target: p.target.to_string(),
                reps: p.repetitions,
                kind: kind.into(),
                scan_mhz: Some(scan),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Same sequence with every width multiplied by `factor`.
    pub fn with_width_scale(&self, factor: f64) -> Result<Self> {
        ensure(factor > 0.0, || "width factor must be positive".into())?;
        let mut out = self.clone();
        out.pulses.iter_mut().for_each(|p| p.width_hz *= factor);
        Ok(out)
    }
}

/// Ground-level occupations per ion class.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationState {
    /// Class labels `x` (Hz).
    pub grid: UniformGrid,
    pub population: Vec<[f64; 3]>,
}

impl PopulationState {
    /// Thermal start: each ground level holds 1/3.
    pub fn thermal(grid: UniformGrid) -> Self {
        Self { population: vec![[1.0 / 3.0; 3]; grid.len], grid }
    }

    pub fn totals(&self) -> Vec<f64> {
        self.population.iter().map(|p| p.iter().sum()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.population.len() == self.grid.len, || "population length mismatch".into())?;
        for p in &self.population {
            ensure(p.iter().all(|v| *v >= 0.0 && v.is_finite()), || "negative occupation".into())?;
            ensure(p.iter().sum::<f64>() <= 1.0 + 1e-12, || "class occupation above 1".into())?;
        }
        Ok(())
    }
}

/// Options for the transparent window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindowSpec {
    pub start_hz: f64,
    pub width_hz: f64,
    /// Occupation left on offending levels, relative to the thermal 1/3.
    pub residual: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self { start_hz: 0.0, width_hz: 18e6, residual: 1e-3 }
    }
}

/// Empties every ground level that absorbs inside `[start, start + width]`
/// down to `residual / 3`, moving the excess equally onto that class's
/// non-absorbing levels. A class with no such level loses its population.
pub fn burn_window(state: &PopulationState, scheme: &LevelScheme, window: &WindowSpec) -> Result<PopulationState> {
    scheme.validate()?;
    ensure(window.width_hz >= 0.0, || "window width must be >= 0".into())?;
    ensure((0.0..=1.0).contains(&window.residual), || "residual must be in [0, 1]".into())?;
    let span = state.grid.end() - state.grid.start;
    if window.width_hz > span {
        return Err(invalid(format!("window of {} Hz is wider than the {span} Hz class grid", window.width_hz)));
    }
    if window.width_hz == 0.0 {
        return Ok(state.clone());
    }
    let (lo, hi) = (window.start_hz, window.start_hz + window.width_hz);
    let cap = window.residual / 3.0;
    let population = state
        .population
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let x = state.grid.at(i);
            let offending: [bool; 3] = std::array::from_fn(|g| {
                (0..3).any(|e| {
                    let nu = scheme.transition_frequency(x, Transition { ground: g, excited: e });
                    nu >= lo && nu <= hi
                })
            });
            let mut out = *p;
            let escapes = offending.iter().filter(|o| !**o).count();
            if escapes == 0 {
                return [0.0; 3];
            }
            let mut excess = 0.0;
            for g in 0..3 {
                if offending[g] && out[g] > cap {
                    excess += out[g] - cap;
                    out[g] = cap;
                }
            }
            for g in 0..3 {
                if !offending[g] {
                    out[g] += excess / escapes as f64;
                }
            }
            out
        })
        .collect();
    Ok(PopulationState { grid: state.grid, population })
}

/// Relative coupling of `t` under a pulse aimed at `target`: a pulse drives
/// every transition out of its target ground level, with intensity matched
/// to the target's strength and saturating at full transfer.
pub fn relative_coupling(scheme: &LevelScheme, target: Transition, t: Transition) -> f64 {
    let st = scheme.strength(target);
    if t.ground != target.ground || st == 0.0 {
        return 0.0;
    }
    (scheme.strength(t) / st).min(1.0)
}

/// Transfer probability of a single shot at each frequency for a transition
/// of the given relative strength.
pub fn transfer_profile(pulse: &BurnPulseSpec, frequencies: &[f64], strength: f64) -> Vec<f64> {
    frequencies.iter().map(|&nu| transfer_probability(pulse, nu, strength)).collect()
}

pub fn transfer_probability(pulse: &BurnPulseSpec, nu: f64, strength: f64) -> f64 {
    let w = pulse.edge_hz();
    let half = 0.5 * pulse.plateau_hz();
    let (lo, hi) = (pulse.center_hz - half, pulse.center_hz + half);
    let shape = ((nu - lo) / w).tanh() - ((nu - hi) / w).tanh();
    let norm = 2.0 * (half / w).tanh();
    (TRANSFER_EFFICIENCY * strength * shape / norm).max(0.0)
}

/// Applies `repetitions` shots of `pulse`. Each shot excites out of the
/// target ground level and returns the excitation through the branching ratios.
pub fn apply_pulse(state: &PopulationState, pulse: &BurnPulseSpec, scheme: &LevelScheme) -> Result<PopulationState> {
    pulse.validate()?;
    scheme.validate()?;
    let b = scheme.branching();
    let g = pulse.target.ground;
    let couplings: [f64; 3] = std::array::from_fn(|e| relative_coupling(scheme, pulse.target, Transition { ground: g, excited: e }));
    let population = state
        .population
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let x = state.grid.at(i);
            let probs: [f64; 3] = std::array::from_fn(|e| {
                if couplings[e] == 0.0 {
                    0.0
                } else {
                    transfer_probability(pulse, scheme.transition_frequency(x, Transition { ground: g, excited: e }), couplings[e])
                }
            });
            let total: f64 = probs.iter().sum();
            let mut out = *p;
            if total == 0.0 {
                return out;
            }
            // at most one third per excited level so the excited fractions stay <= 1
            let probs = probs.map(|q| q.min(1.0 / 3.0));
            for _ in 0..pulse.repetitions {
                let excited: [f64; 3] = std::array::from_fn(|e| out[g] * probs[e]);
                out[g] -= excited.iter().sum::<f64>();
                for (e, ex) in excited.iter().enumerate() {
                    for (k, o) in out.iter_mut().enumerate() {
                        *o += ex * b[e][k];
                    }
                }
            }
            out.map(|v| v.max(0.0))
        })
        .collect();
    Ok(PopulationState { grid: state.grid, population })
}

/// Grids and scaling for a preparation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrepSettings {
    pub class_start_hz: f64,
    pub class_stop_hz: f64,
    pub class_step_hz: f64,
    pub output_start_hz: f64,
    pub output_stop_hz: f64,
    pub output_step_hz: f64,
    pub window: WindowSpec,
    /// Optical depth of the unburnt thermal ensemble.
    pub background_optical_depth: f64,
    /// Per-class Gaussian linewidth (FWHM, Hz); defaults to the coarser grid step.
    pub linewidth_hz: Option<f64>,
}

impl Default for PrepSettings {
    fn default() -> Self {
        Self {
            class_start_hz: -45e6,
            class_stop_hz: 30e6,
            class_step_hz: 10e3,
            output_start_hz: -4e6,
            output_stop_hz: 22e6,
            output_step_hz: 10e3,
            window: WindowSpec::default(),
            background_optical_depth: 1.0,
            linewidth_hz: None,
        }
    }
}

impl PrepSettings {
    pub fn class_grid(&self) -> Result<UniformGrid> {
        UniformGrid::span(self.class_start_hz, self.class_stop_hz, self.class_step_hz)
    }

    pub fn output_grid(&self) -> Result<UniformGrid> {
        UniformGrid::span(self.output_start_hz, self.output_stop_hz, self.output_step_hz)
    }

    pub fn linewidth(&self) -> f64 {
        self.linewidth_hz.unwrap_or(self.class_step_hz.max(self.output_step_hz))
    }
}

/// `Σ_{class, g, e} pop · s[g][e] · G(ν - ν_ge(x)) dx`, scaled so the thermal
/// ensemble has the background optical depth.
pub fn absorption_profile(
    state: &PopulationState,
    scheme: &LevelScheme,
    grid: &UniformGrid,
    linewidth_hz: f64,
    background_optical_depth: f64,
) -> Result<AbsorptionProfile> {
    ensure(linewidth_hz > 0.0, || "linewidth must be positive".into())?;
    ensure(background_optical_depth >= 0.0, || "background optical depth must be >= 0".into())?;
    let sigma = fwhm_to_sigma(linewidth_hz);
    let dx = state.grid.step;
    let reach = 8.0 * sigma + dx;
    let thermal: f64 = scheme.oscillator_strengths.iter().flatten().sum::<f64>() / 3.0;
    let scale = background_optical_depth / thermal;
    let offsets: Vec<(Transition, f64, f64)> = Transition::all()
        .map(|t| (t, scheme.transition_frequency(0.0, t), scheme.strength(t)))
        .filter(|(_, _, s)| *s > 0.0)
        .collect();
    // Each class stands for a band of width dx; its line is that band convolved
    // with the Gaussian, so a flat distribution sums to exactly one per Hz.
    let cdf = |u: f64| 0.5 * (1.0 + erf(u / (std::f64::consts::SQRT_2 * sigma)));
    let od = (0..grid.len)
        .into_par_iter()
        .map(|k| {
            let nu = grid.at(k);
            let mut acc = 0.0;
            for &(t, off, s) in &offsets {
                let lo = ((nu - off - reach - state.grid.start) / dx).ceil().max(0.0) as usize;
                let hi = (((nu - off + reach - state.grid.start) / dx).floor() as i64).min(state.grid.len as i64 - 1);
                if hi < lo as i64 {
                    continue;
                }
                for i in lo..=hi as usize {
                    let d = nu - (state.grid.at(i) + off);
                    acc += state.population[i][t.ground] * s * (cdf(d + 0.5 * dx) - cdf(d - 0.5 * dx));
                }
            }
            scale * acc
        })
        .collect();
    AbsorptionProfile::new(*grid, od)
}

/// Window burn followed by every pulse of the sequence, in order.
pub fn run_sequence(seq: &BurnSequence, scheme: &LevelScheme, settings: &PrepSettings) -> Result<(PopulationState, AbsorptionProfile)> {
    let mut state = burn_window(&PopulationState::thermal(settings.class_grid()?), scheme, &settings.window)?;
    for p in &seq.pulses {
        state = apply_pulse(&state, p, scheme)?;
    }
    let profile = absorption_profile(&state, scheme, &settings.output_grid()?, settings.linewidth(), settings.background_optical_depth)?;
    Ok((state, profile))
}

/// Local maxima of a profile above `min_height`, as `(frequency, value)`.
pub fn local_maxima(profile: &AbsorptionProfile, min_height: f64) -> Vec<(f64, f64)> {
    let v = &profile.optical_depth;
    (1..v.len().saturating_sub(1))
        .filter(|&i| v[i] > v[i - 1] && v[i] >= v[i + 1] && v[i] >= min_height)
        .map(|i| (profile.grid.at(i), v[i]))
        .collect()
}

/// The `n` tallest local maxima inside `[lo, hi]`, ordered by frequency.
pub fn dominant_peaks(profile: &AbsorptionProfile, n: usize, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut peaks: Vec<_> = local_maxima(profile, 0.0).into_iter().filter(|(f, _)| *f >= lo && *f <= hi).collect();
    peaks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
    peaks.truncate(n);
    peaks.sort_by(|a, b| a.0.total_cmp(&b.0));
    peaks
}
