//! Analytic comb models: Gaussian-peak absorption profiles, effective
//! absorption, free-space and cavity recall efficiency, and least-squares
//! fitting of the peak optical depth to measured efficiency curves.

use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::error::{ensure, invalid, Error, Result};
use crate::grid::UniformGrid;
use crate::optim::brent_minimize;

/// `sqrt(pi / (4 ln 2))`: area of a unit-height Gaussian per unit FWHM.
pub fn gaussian_area_factor() -> f64 {
    (PI / (4.0 * LN_2)).sqrt()
}

/// FWHM to standard deviation.
pub fn fwhm_to_sigma(fwhm: f64) -> f64 {
    fwhm / (8.0 * LN_2).sqrt()
}

/// A comb of `peak_count` Gaussian absorption peaks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CombSpec {
    pub peak_count: usize,
    pub spacing_hz: f64,
    pub peak_fwhm_hz: f64,
    /// Peak optical depth (dimensionless alpha*L).
    pub peak_optical_depth: f64,
    pub center_frequency_hz: f64,
    /// Per-peak height multipliers; empty means all ones.
    pub height_multipliers: Vec<f64>,
}

impl Default for CombSpec {
    fn default() -> Self {
        Self {
            peak_count: 4,
            spacing_hz: 2.3e6,
            peak_fwhm_hz: 140e3,
            peak_optical_depth: 45.0,
            center_frequency_hz: 0.0,
            height_multipliers: Vec::new(),
        }
    }
}

impl CombSpec {
    pub fn new(peak_count: usize, spacing_hz: f64, peak_fwhm_hz: f64, peak_optical_depth: f64) -> Result<Self> {
        let spec = Self {
            peak_count,
            spacing_hz,
            peak_fwhm_hz,
            peak_optical_depth,
            center_frequency_hz: 0.0,
            height_multipliers: Vec::new(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_center(mut self, center_hz: f64) -> Self {
        self.center_frequency_hz = center_hz;
        self
    }

    pub fn with_multipliers(mut self, multipliers: Vec<f64>) -> Result<Self> {
        self.height_multipliers = multipliers;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        // A single peak is allowed: the profile and ensemble code are
        // well-defined for it even though the echo picture needs two.
        ensure(self.peak_count >= 1, || "peak_count must be >= 1".into())?;
        ensure(self.spacing_hz.is_finite() && self.spacing_hz > 0.0, || {
            format!("spacing must be positive, got {}", self.spacing_hz)
        })?;
        ensure(self.peak_fwhm_hz > 0.0 && self.peak_fwhm_hz < self.spacing_hz, || {
            format!(
                "peak FWHM must satisfy 0 < fwhm < spacing, got fwhm={} spacing={}",
                self.peak_fwhm_hz, self.spacing_hz
            )
        })?;
        ensure(self.peak_optical_depth.is_finite() && self.peak_optical_depth >= 0.0, || {
            format!("peak optical depth must be >= 0, got {}", self.peak_optical_depth)
        })?;
        ensure(self.center_frequency_hz.is_finite(), || "center frequency must be finite".into())?;
        if !self.height_multipliers.is_empty() {
            ensure(self.height_multipliers.len() == self.peak_count, || {
                format!(
                    "{} height multipliers given for {} peaks",
                    self.height_multipliers.len(),
                    self.peak_count
                )
            })?;
            ensure(self.height_multipliers.iter().all(|&m| m.is_finite() && m > 0.0), || {
                "height multipliers must be positive".into()
            })?;
        }
        Ok(())
    }

    pub fn multiplier(&self, peak: usize) -> f64 {
        self.height_multipliers.get(peak).copied().unwrap_or(1.0)
    }

    /// Center of peak `index`; the comb is centered on `center_frequency_hz`.
    pub fn peak_center(&self, index: usize) -> f64 {
        self.center_frequency_hz + (index as f64 - 0.5 * (self.peak_count as f64 - 1.0)) * self.spacing_hz
    }

    pub fn finesse(&self) -> f64 {
        self.spacing_hz / self.peak_fwhm_hz
    }
}

/// Comb finesse `F = spacing / FWHM`.
pub fn comb_finesse(spec: &CombSpec) -> f64 {
    spec.finesse()
}

/// Effective comb absorption `(alphaL / F) sqrt(pi / (4 ln 2))`.
pub fn effective_absorption(alpha_l: f64, finesse: f64) -> Result<f64> {
    ensure(finesse.is_finite() && finesse > 0.0, || format!("finesse must be positive, got {finesse}"))?;
    ensure(alpha_l.is_finite() && alpha_l >= 0.0, || format!("alphaL must be >= 0, got {alpha_l}"))?;
    Ok(alpha_l / finesse * gaussian_area_factor())
}

/// Dephasing rate `2 pi gamma / sqrt(8 ln 2)` (rad/s) for a peak FWHM in Hz.
pub fn gamma_tilde(fwhm_hz: f64) -> Result<f64> {
    ensure(fwhm_hz.is_finite() && fwhm_hz > 0.0, || format!("peak FWHM must be positive, got {fwhm_hz}"))?;
    Ok(2.0 * PI * fwhm_hz / (8.0 * LN_2).sqrt())
}

fn check_time(t: f64) -> Result<()> {
    ensure(t.is_finite() && t >= 0.0, || format!("storage time must be >= 0, got {t}"))
}

/// Forward-recall efficiency from the effective absorption and dephasing rate.
pub fn efficiency_from_effective(alpha_eff: f64, gamma_t: f64, t: f64) -> f64 {
    let eta = alpha_eff * alpha_eff * (-alpha_eff).exp() * (-(t * gamma_t).powi(2)).exp();
    eta.clamp(0.0, 1.0)
}

/// Free-space recall efficiency after storage time `t` (seconds).
pub fn efficiency_forward(spec: &CombSpec, t: f64) -> Result<f64> {
    spec.validate()?;
    check_time(t)?;
    let a = effective_absorption(spec.peak_optical_depth, spec.finesse())?;
    let g = gamma_tilde(spec.peak_fwhm_hz)?;
    Ok(efficiency_from_effective(a, g, t))
}

/// Mirror reflectivities of an asymmetric memory cavity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySpec {
    pub r1: f64,
    pub r2: f64,
}

impl CavitySpec {
    pub fn new(r1: f64, r2: f64) -> Result<Self> {
        let c = Self { r1, r2 };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.r1 >= 1.0 {
            // A perfect input mirror closes the cavity: nothing couples in or out.
            return Err(Error::CavityDivergence { round_trip: self.r2.max(0.0).sqrt() });
        }
        ensure(self.r1 >= 0.0, || format!("R1 must be in [0, 1), got {}", self.r1))?;
        ensure(self.r2 > 0.0 && self.r2 <= 1.0, || format!("R2 must be in (0, 1], got {}", self.r2))?;
        Ok(())
    }
}

/// Relative tolerance on `1 - sqrt(R1 R2) exp(-alpha_eff)` below which the
/// cavity expression is treated as divergent.
pub const CAVITY_DIVERGENCE_TOL: f64 = 1e-12;

pub fn cavity_efficiency_from_effective(alpha_eff: f64, gamma_t: f64, cavity: &CavitySpec, t: f64) -> Result<f64> {
    cavity.validate()?;
    let round_trip = (cavity.r1 * cavity.r2).sqrt() * (-alpha_eff).exp();
    if round_trip >= 1.0 - CAVITY_DIVERGENCE_TOL {
        return Err(Error::CavityDivergence { round_trip });
    }
    let num = 4.0
        * alpha_eff
        * alpha_eff
        * (-2.0 * alpha_eff).exp()
        * (1.0 - cavity.r1).powi(2)
        * cavity.r2
        * (-(t * gamma_t).powi(2)).exp();
    let eta = num / (1.0 - round_trip).powi(4);
    Ok(eta.clamp(0.0, 1.0))
}

/// Recall efficiency of the comb placed inside an asymmetric cavity.
pub fn efficiency_cavity(spec: &CombSpec, cavity: &CavitySpec, t: f64) -> Result<f64> {
    spec.validate()?;
    check_time(t)?;
    let a = effective_absorption(spec.peak_optical_depth, spec.finesse())?;
    let g = gamma_tilde(spec.peak_fwhm_hz)?;
    cavity_efficiency_from_effective(a, g, cavity, t)
}

/// One row of a finesse scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityScanPoint {
    pub finesse: f64,
    pub efficiency: f64,
}

/// Cavity efficiency over a log-spaced finesse grid plus the refined optimum.
#[derive(Debug, Clone)]
pub struct CavityScan {
    pub points: Vec<CavityScanPoint>,
    pub best: CavityScanPoint,
}

/// Scan the comb finesse for a fixed peak width and optical depth.
pub fn cavity_finesse_scan(
    peak_optical_depth: f64,
    peak_fwhm_hz: f64,
    cavity: &CavitySpec,
    t: f64,
    finesse_min: f64,
    finesse_max: f64,
    points: usize,
) -> Result<CavityScan> {
    ensure(finesse_min > 0.0 && finesse_max > finesse_min, || {
        format!("finesse range [{finesse_min}, {finesse_max}] is invalid")
    })?;
    ensure(points >= 2, || "finesse scan needs at least 2 points".into())?;
    check_time(t)?;
    cavity.validate()?;
    let g = gamma_tilde(peak_fwhm_hz)?;
    let eval = |f: f64| -> Result<f64> {
        let a = effective_absorption(peak_optical_depth, f)?;
        cavity_efficiency_from_effective(a, g, cavity, t)
    };
    let ratio = (finesse_max / finesse_min).ln();
    let mut scan = Vec::with_capacity(points);
    for i in 0..points {
        let f = finesse_min * (ratio * i as f64 / (points - 1) as f64).exp();
        scan.push(CavityScanPoint { finesse: f, efficiency: eval(f)? });
    }
    let (imax, _) = scan
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, p)| if p.efficiency > acc.1 { (i, p.efficiency) } else { acc });
    let lo = scan[imax.saturating_sub(1)].finesse;
    let hi = scan[(imax + 1).min(points - 1)].finesse;
    let refined = brent_minimize(|lf| -eval(lf.exp()).unwrap_or(0.0), lo.ln(), hi.ln(), 1e-12, 200);
    let best_f = refined.x.exp();
    let best = CavityScanPoint { finesse: best_f, efficiency: eval(best_f)? };
    let best = if best.efficiency >= scan[imax].efficiency { best } else { scan[imax] };
    Ok(CavityScan { points: scan, best })
}

/// Optical depth sampled on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionProfile {
    pub grid: UniformGrid,
    pub optical_depth: Vec<f64>,
}

impl AbsorptionProfile {
    pub fn new(grid: UniformGrid, optical_depth: Vec<f64>) -> Result<Self> {
        ensure(optical_depth.len() == grid.len, || {
            format!("{} samples for a {}-point grid", optical_depth.len(), grid.len)
        })?;
        ensure(optical_depth.iter().all(|v| v.is_finite() && *v >= 0.0), || {
            "optical depth samples must be finite and non-negative".into()
        })?;
        Ok(Self { grid, optical_depth })
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.grid.to_vec()
    }

    pub fn max(&self) -> f64 {
        self.optical_depth.iter().cloned().fold(0.0, f64::max)
    }

    /// Trapezoidal integral of the optical depth over frequency (Hz).
    pub fn integral(&self) -> f64 {
        let s: f64 = self.optical_depth.iter().sum();
        let ends = self.optical_depth[0] + self.optical_depth[self.grid.len - 1];
        (s - 0.5 * ends) * self.grid.step
    }

    /// Optical depth at an arbitrary frequency (linear interpolation, clamped).
    pub fn at(&self, freq_hz: f64) -> f64 {
        crate::grid::interpolate(&self.grid, &self.optical_depth, freq_hz)
    }
}

/// Minimum samples per peak FWHM accepted by [`build_comb_profile`].
pub const MIN_SAMPLES_PER_FWHM: f64 = 8.0;

/// Sum of Gaussian peaks of the comb, sampled on `grid`.
pub fn build_comb_profile(spec: &CombSpec, grid: &UniformGrid) -> Result<AbsorptionProfile> {
    spec.validate()?;
    if grid.step * MIN_SAMPLES_PER_FWHM > spec.peak_fwhm_hz * (1.0 + 1e-12) {
        return Err(Error::UnderResolvedGrid(format!(
            "step {} Hz gives fewer than {} samples per {} Hz FWHM",
            grid.step, MIN_SAMPLES_PER_FWHM, spec.peak_fwhm_hz
        )));
    }
    let first = spec.peak_center(0);
    let last = spec.peak_center(spec.peak_count - 1);
    if !(grid.contains(first) && grid.contains(last)) {
        return Err(invalid(format!(
            "grid [{}, {}] does not span peak centers [{first}, {last}]",
            grid.start,
            grid.end()
        )));
    }
    let sigma = fwhm_to_sigma(spec.peak_fwhm_hz);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let od = grid
        .points()
        .map(|nu| {
            (0..spec.peak_count)
                .map(|l| {
                    let d = nu - spec.peak_center(l);
                    spec.peak_optical_depth * spec.multiplier(l) * (-d * d * inv).exp()
                })
                .sum()
        })
        .collect();
    AbsorptionProfile::new(*grid, od)
}

/// One measured (or synthetic) efficiency sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyPoint {
    pub t_s: f64,
    pub eta: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EfficiencyCurve {
    pub points: Vec<EfficiencyPoint>,
}

impl EfficiencyCurve {
    pub fn new(points: Vec<EfficiencyPoint>) -> Result<Self> {
        for p in &points {
            ensure(p.t_s.is_finite() && p.t_s >= 0.0, || format!("storage time {} < 0", p.t_s))?;
            ensure((0.0..=1.0).contains(&p.eta), || format!("efficiency {} outside [0, 1]", p.eta))?;
            ensure(p.stderr.is_finite() && p.stderr >= 0.0, || format!("standard error {} < 0", p.stderr))?;
        }
        Ok(Self { points })
    }

    /// Curve of model efficiencies at the given times (zero standard error).
    pub fn from_model(spec: &CombSpec, times: &[f64]) -> Result<Self> {
        let points = times
            .iter()
            .map(|&t| Ok(EfficiencyPoint { t_s: t, eta: efficiency_forward(spec, t)?, stderr: 0.0 }))
            .collect::<Result<Vec<_>>>()?;
        Self::new(points)
    }
}

/// Which of the two optical depths that give the same efficiency to report.
///
/// The forward efficiency depends on alphaL only through `x^2 e^-x`, which is
/// two-to-one: any curve below the maximum is matched equally well by an
/// under-absorbing (`x < 2`) and an over-absorbing (`x > 2`) comb.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AbsorptionBranch {
    Low,
    #[default]
    High,
}

#[derive(Debug, Clone, Copy)]
pub struct AlphaFitOptions {
    pub branch: AbsorptionBranch,
    pub upper_bound: f64,
    /// Two-sided normal quantile used for the interval (1.96 = 95 %).
    pub z: f64,
}

impl Default for AlphaFitOptions {
    fn default() -> Self {
        Self { branch: AbsorptionBranch::High, upper_bound: 200.0, z: 1.96 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaFit {
    pub alpha_l: f64,
    pub std_error: f64,
    pub interval: (f64, f64),
    pub rss: f64,
    pub branch: AbsorptionBranch,
    pub iterations: usize,
}

/// Least-squares estimate of the peak optical depth from an efficiency curve
/// with known peak width and spacing.
///
/// Points are weighted by `1/stderr^2` when every point carries a positive
/// standard error, otherwise unweighted.
pub fn fit_alpha(curve: &EfficiencyCurve, peak_fwhm_hz: f64, spacing_hz: f64, opts: &AlphaFitOptions) -> Result<AlphaFit> {
    ensure(curve.points.len() >= 3, || format!("need >= 3 points, got {}", curve.points.len()))?;
    ensure(peak_fwhm_hz > 0.0 && spacing_hz > peak_fwhm_hz, || {
        format!("invalid comb: fwhm={peak_fwhm_hz} spacing={spacing_hz}")
    })?;
    if curve.points.iter().all(|p| p.eta == 0.0) {
        return Err(Error::Degenerate("all efficiencies are zero".into()));
    }
    let finesse = spacing_hz / peak_fwhm_hz;
    let k = gaussian_area_factor() / finesse;
    let g = gamma_tilde(peak_fwhm_hz)?;
    let weighted = curve.points.iter().all(|p| p.stderr > 0.0);
    let w: Vec<f64> = curve
        .points
        .iter()
        .map(|p| if weighted { 1.0 / (p.stderr * p.stderr) } else { 1.0 })
        .collect();

    let model = |alpha_l: f64, t: f64| efficiency_from_effective(alpha_l * k, g, t);
    let rss = |alpha_l: f64| -> f64 {
        curve
            .points
            .iter()
            .zip(&w)
            .map(|(p, wi)| wi * (model(alpha_l, p.t_s) - p.eta).powi(2))
            .sum()
    };

    // x^2 e^-x peaks at x = 2; each branch is monotone so the RSS is unimodal there.
    let turning = 2.0 / k;
    let (lo, hi) = match opts.branch {
        AbsorptionBranch::Low => (1e-9, turning.min(opts.upper_bound)),
        AbsorptionBranch::High => (turning.min(opts.upper_bound), opts.upper_bound),
    };
    ensure(hi > lo, || format!("branch interval [{lo}, {hi}] is empty for upper bound {}", opts.upper_bound))?;
    let m = brent_minimize(rss, lo, hi, 1e-14, 500);
    if !m.converged {
        return Err(Error::NonConvergence(format!("alphaL search did not converge (last {})", m.x)));
    }
    if (opts.upper_bound - m.x) <= 1e-6 * opts.upper_bound {
        return Err(Error::NonConvergence(format!(
            "alphaL estimate pinned at the upper bound {}",
            opts.upper_bound
        )));
    }
    let alpha_l = m.x;

    // d eta / d alphaL = k * (2x - x^2) e^-x * envelope, x = k alphaL
    let x = alpha_l * k;
    let jtj: f64 = curve
        .points
        .iter()
        .zip(&w)
        .map(|(p, wi)| {
            let d = k * (2.0 * x - x * x) * (-x).exp() * (-(p.t_s * g).powi(2)).exp();
            wi * d * d
        })
        .sum();
    let dof = (curve.points.len() - 1) as f64;
    let s2 = m.value / dof;
    let std_error = if jtj > 0.0 { (s2 / jtj).sqrt() } else { f64::INFINITY };
    Ok(AlphaFit {
        alpha_l,
        std_error,
        interval: (alpha_l - opts.z * std_error, alpha_l + opts.z * std_error),
        rss: m.value,
        branch: opts.branch,
        iterations: m.iterations,
    })
}
