//! One function per experiment. Each renders into an [`OutputDir`] and
//! returns notes for the manifest.

use std::path::Path;

use afc_core::counting::simulate_detection;
use afc_core::dynamics::{echo_map, sample_ensemble, EmissionEngine, StarkTimeline};
use afc_core::io::{EFFICIENCY_HEADER, PROFILE_HEADER, TRACE_HEADER};
use afc_core::prep::{dominant_peaks, run_sequence};
use afc_core::readout::{apply_detector, chirp_forward, deconvolve_profile, fit_peaks, ForwardMethod};
use afc_core::spectra::{build_comb_profile, cavity_finesse_scan, effective_absorption, EfficiencyCurve};
use afc_core::{AbsorptionProfile, UniformGrid};
use serde::Serialize;

use crate::config::{DetectionMode, LoadedConfig, RunConfig};
use crate::output::{ManifestMeta, OutputDir, RunManifest};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    EfficiencyCurve,
    EchoMap,
    PrepareComb,
    Readout,
    CavityDesign,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EfficiencyCurve => "efficiency-curve",
            Command::EchoMap => "echo-map",
            Command::PrepareComb => "prepare-comb",
            Command::Readout => "readout",
            Command::CavityDesign => "cavity-design",
        }
    }
}

/// Validates the configuration for `cmd`; with `dry_run` nothing is computed
/// or written and `Ok(None)` is returned.
pub fn run(cmd: Command, loaded: &LoadedConfig, out: &Path, dry_run: bool) -> Result<Option<RunManifest>, CliError> {
    let cfg = &loaded.config;
    cfg.validate()?;
    check(cmd, cfg)?;
    if dry_run {
        return Ok(None);
    }
    let mut dir = OutputDir::create(out)?;
    let notes = match cmd {
        Command::EfficiencyCurve => efficiency_curve(cfg, &mut dir)?,
        Command::EchoMap => echo_map_cmd(cfg, &mut dir)?,
        Command::PrepareComb => prepare_comb(cfg, &mut dir)?,
        Command::Readout => readout(cfg, &mut dir)?,
        Command::CavityDesign => cavity_design(cfg, &mut dir)?,
    };
    let meta = ManifestMeta {
        command: cmd.name().into(),
        config_sha256: loaded.config_sha256.clone(),
        config_source: loaded.source.as_ref().map(|p| p.display().to_string()),
        seed: cfg.seed,
        notes,
    };
    Ok(Some(dir.finish(meta)?))
}

/// Command-specific checks that need no heavy computation.
fn check(cmd: Command, cfg: &RunConfig) -> Result<(), CliError> {
    match cmd {
        Command::EfficiencyCurve => {
            if cfg.efficiency.times_s.is_empty() {
                return Err(CliError::Config("efficiency.times_s is empty".into()));
            }
            if cfg.efficiency.times_s.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
                return Err(CliError::Config("efficiency.times_s must be finite and >= 0".into()));
            }
        }
        Command::EchoMap => {
            cfg.echo_map.delays()?;
            cfg.echo_map.grid()?;
            cfg.stark.template(&cfg.material).validate()?;
        }
        Command::PrepareComb => {
            cfg.prep.level_scheme()?.validate()?;
            cfg.prep.sequence()?;
        }
        Command::Readout => {
            cfg.readout.detector()?;
            cfg.readout.profile_grid()?;
            cfg.readout.structure.validate()?;
        }
        Command::CavityDesign => {
            cfg.cavity.cavity().validate()?;
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct EfficiencySummary {
    finesse: f64,
    effective_absorption: f64,
    max_efficiency: f64,
    max_efficiency_time_s: f64,
}

fn efficiency_curve(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let curve = EfficiencyCurve::from_model(&cfg.comb, &cfg.efficiency.times_s)?;
    let t: Vec<f64> = curve.points.iter().map(|p| p.t_s).collect();
    let eta: Vec<f64> = curve.points.iter().map(|p| p.eta).collect();
    let err: Vec<f64> = curve.points.iter().map(|p| p.stderr).collect();
    dir.write_columns("efficiency.csv", &EFFICIENCY_HEADER, &[&t, &eta, &err])?;
    let best = curve.points.iter().max_by(|a, b| a.eta.total_cmp(&b.eta)).expect("non-empty");
    dir.write_json(
        "summary.json",
        &EfficiencySummary {
            finesse: cfg.comb.finesse(),
            effective_absorption: effective_absorption(cfg.comb.peak_optical_depth, cfg.comb.finesse())?,
            max_efficiency: best.eta,
            max_efficiency_time_s: best.t_s,
        },
    )?;
    let mut notes = Vec::new();
    if cfg.efficiency.cross_validate {
        // ensemble emission at the echo times inside the requested range
        let period = 1.0 / cfg.comb.spacing_hz;
        let tmax = t.iter().cloned().fold(0.0, f64::max);
        let times: Vec<f64> = (1..).map(|m| m as f64 * period).take_while(|&x| x <= tmax).collect();
        if !times.is_empty() {
            let ens = sample_ensemble(&cfg.comb, cfg.ensemble.n_ions, cfg.seed, &cfg.ensemble.sampling)?;
            let step = period / (8.0 * cfg.comb.peak_count as f64);
            let grid = UniformGrid::span(0.0, tmax, step)?;
            let engine = EmissionEngine::new(&ens, &grid, &cfg.material, &cfg.ensemble.engine.without_attrition())?;
            let sim = engine.intensity_at(&StarkTimeline::empty(), &times);
            dir.write_columns("ensemble.csv", &["t_s", "eta"], &[&times, &sim])?;
            notes.push("ensemble.csv: ensemble emission at the echo times, attrition disabled".into());
        }
    }
    Ok(notes)
}

#[derive(Serialize)]
struct EchoIndexLine<'a> {
    delay_s: f64,
    trace: &'a str,
    histogram: Option<&'a str>,
    peak_time_s: f64,
    peak_intensity: f64,
}

fn echo_map_cmd(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let delays = cfg.echo_map.delays()?;
    let grid = cfg.echo_map.grid()?;
    let ens = sample_ensemble(&cfg.comb, cfg.ensemble.n_ions, cfg.seed, &cfg.ensemble.sampling)?;
    let template = cfg.stark.template(&cfg.material);
    let traces = echo_map(&ens, &delays, &template, cfg.stark.first_start_s, &grid, &cfg.material, &cfg.ensemble.engine)?;
    let times = grid.to_vec();
    let mut index = Vec::new();
    for (k, (delay, tr)) in delays.iter().zip(&traces).enumerate() {
        let trace_name = format!("traces/delay_{k:04}.csv");
        dir.write_columns(&trace_name, &TRACE_HEADER, &[&times, &tr.intensity])?;
        let hist_name = format!("histograms/delay_{k:04}.csv");
        let histogram = if cfg.echo_map.mode == DetectionMode::WeakCoherent {
            // one independent stream family per delay
            let seed = cfg.seed.wrapping_add((k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let h = simulate_detection(&cfg.plan, tr, &cfg.detector, seed)?;
            dir.write_with(&hist_name, |buf| Ok(h.write_csv(buf)?))?;
            Some(hist_name.as_str())
        } else {
            None
        };
        let (pk, peak) = tr.max_in(grid.start, grid.end()).unwrap_or((0, 0.0));
        let line = EchoIndexLine { delay_s: *delay, trace: &trace_name, histogram, peak_time_s: grid.at(pk), peak_intensity: peak };
        index.push(serde_json::to_string(&line).map_err(std::io::Error::from)?);
    }
    dir.write_with("index.jsonl", |buf| {
        for l in &index {
            buf.extend_from_slice(l.as_bytes());
            buf.push(b'\n');
        }
        Ok(())
    })?;
    Ok(vec![format!("{} delays; intensities relative to the input pulse peak", delays.len())])
}

#[derive(Serialize)]
struct PeakSummary {
    center_hz: f64,
    optical_depth: f64,
}

fn write_profile(dir: &mut OutputDir, name: &str, p: &AbsorptionProfile) -> Result<(), CliError> {
    let f = p.grid.to_vec();
    dir.write_columns(name, &PROFILE_HEADER, &[&f, &p.optical_depth])
}

fn prepare_comb(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let scheme = cfg.prep.level_scheme()?;
    let seq = cfg.prep.sequence()?;
    let (_, profile) = run_sequence(&seq, &scheme, &cfg.prep.settings)?;
    write_profile(dir, "profile.csv", &profile)?;
    let w = cfg.prep.settings.window;
    let peaks: Vec<PeakSummary> = dominant_peaks(&profile, cfg.prep.report_peaks, w.start_hz, w.start_hz + w.width_hz)
        .into_iter()
        .map(|(c, h)| PeakSummary { center_hz: c, optical_depth: h })
        .collect();
    dir.write_json("peaks.json", &peaks)?;
    Ok(vec![format!("{} burn pulses", seq.pulses.len())])
}

#[derive(Serialize)]
struct ReadoutSummary {
    compensated: bool,
    peaks: Vec<afc_core::readout::PeakFit>,
    sse: f64,
}

fn readout(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let ro = &cfg.readout;
    let truth = build_comb_profile(&ro.structure, &ro.profile_grid()?)?;
    write_profile(dir, "truth.csv", &truth)?;
    let raw = chirp_forward(&truth, &ro.chirp, ForwardMethod::Convolution)?;
    let times = raw.grid.to_vec();
    dir.write_columns("trace.csv", &TRACE_HEADER, &[&times, &raw.intensity])?;
    let det = ro.detector()?;
    let detected = apply_detector(&raw, &det)?;
    dir.write_columns("detected.csv", &TRACE_HEADER, &[&times, &detected.intensity])?;
    let comp = if ro.compensate { Some(&det) } else { None };
    let recovered = deconvolve_profile(&detected, &ro.chirp, comp, &ro.deconvolution)?;
    write_profile(dir, "recovered.csv", &recovered)?;
    let mut notes = vec!["linear-response slab model; no nonlinear or pumping effects".to_string()];
    // depths below the regularization floor are bias of the inverse, not structure
    if ro.fit_peaks > 0 && recovered.max() > ro.deconvolution.regularization {
        let fit = fit_peaks(&recovered, ro.fit_peaks)?;
        dir.write_json("peaks.json", &ReadoutSummary { compensated: ro.compensate, peaks: fit.peaks, sse: fit.sse })?;
    } else {
        notes.push("no absorption recovered; peak fit skipped".into());
    }
    Ok(notes)
}

#[derive(Serialize)]
struct CavitySummary {
    best_finesse: f64,
    best_efficiency: f64,
    storage_time_s: f64,
}

fn cavity_design(cfg: &RunConfig, dir: &mut OutputDir) -> Result<Vec<String>, CliError> {
    let c = &cfg.cavity;
    let scan = cavity_finesse_scan(c.peak_optical_depth, c.peak_fwhm_hz, &c.cavity(), c.storage_time_s, c.finesse_min, c.finesse_max, c.points)?;
    let f: Vec<f64> = scan.points.iter().map(|p| p.finesse).collect();
    let e: Vec<f64> = scan.points.iter().map(|p| p.efficiency).collect();
    dir.write_columns("cavity.csv", &["finesse", "eta"], &[&f, &e])?;
    dir.write_json(
        "summary.json",
        &CavitySummary { best_finesse: scan.best.finesse, best_efficiency: scan.best.efficiency, storage_time_s: c.storage_time_s },
    )?;
    Ok(Vec::new())
}
