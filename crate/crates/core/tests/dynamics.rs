use std::f64::consts::{LN_2, PI};

use afc_core::dynamics::*;
use afc_core::spectra::CombSpec;
use afc_core::UniformGrid;
use num_complex::Complex64;

fn comb() -> CombSpec {
    CombSpec::new(4, 2.3e6, 140e3, 45.0).unwrap()
}

fn material() -> MaterialSpec {
    MaterialSpec::default()
}

fn period() -> f64 {
    1.0 / 2.3e6
}

/// 54 V over 6 mm, 23 ns FWHM Gaussian.
fn lab_pulse(start: f64) -> StarkPulse {
    StarkPulse::gaussian(start, 23e-9, material().field_from_voltage(54.0))
}

/// Direct term-by-term evaluation: one complex exponential per ion per time.
fn brute_force(ens: &IonEnsemble, timeline: &StarkTimeline, times: &[f64], kick_threshold_s: f64) -> Vec<f64> {
    let class_phase = |t: f64| -> f64 {
        let mut phi = 0.0;
        for p in &timeline.pulses {
            let omega = material().dipole_difference_hz_per_v_per_m * p.field_v_per_m * material().dipole_angle_deg.to_radians().cos();
            let full = match p.shape {
                PulseShape::Square => 2.0 * PI * omega * p.duration_s,
                PulseShape::Gaussian => 2.0 * PI * omega * p.duration_s * (PI / (4.0 * LN_2)).sqrt(),
            };
            assert!(p.duration_s < kick_threshold_s, "oracle only models kicks");
            if t >= p.start_s + p.duration_s / 2.0 {
                phi += full;
            }
        }
        phi
    };
    let field = |t: f64, phi: f64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 0..ens.len() {
            let s = ens.class[j] as f64;
            let arg = 2.0 * PI * ens.detuning_hz[j] * t + s * phi + ens.kz[j] - ens.kz[j];
            acc += ens.weight[j] * Complex64::new(arg.cos(), arg.sin());
        }
        acc
    };
    let t1 = period();
    let alpha_eff = 45.0 / (2.3e6 / 140e3) * (PI / (4.0 * LN_2)).sqrt();
    let gamma_t = 2.0 * PI * 140e3 / (8.0 * LN_2).sqrt();
    let eta1 = alpha_eff * alpha_eff * (-alpha_eff).exp() * (-(t1 * gamma_t).powi(2)).exp();
    let scale = eta1 / field(t1, 0.0).norm_sqr();
    times.iter().map(|&t| scale * field(t, class_phase(t)).norm_sqr()).collect()
}

fn rel_max_diff(a: &[f64], b: &[f64]) -> f64 {
    let m = b.iter().cloned().fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / m
}

#[test]
fn engine_matches_brute_force_oracle() {
    let opts = EngineOptions::default().without_attrition();
    for (n, seed) in [(8usize, 1u64), (257, 2), (1000, 3)] {
        let ens = sample_ensemble(&comb(), n, seed, &SampleOptions::default()).unwrap();
        let grid = UniformGrid::new(0.0, 1e-9, 2200).unwrap();
        let times = grid.to_vec();
        for tl in [
            StarkTimeline::empty(),
            StarkTimeline::new(vec![lab_pulse(100e-9)]).unwrap(),
            two_pulse_timeline(&lab_pulse(0.0), 100e-9, 1.2e-6).unwrap(),
        ] {
            let trace = emission_trace(&ens, &tl, &grid, &material(), &opts).unwrap();
            let oracle = brute_force(&ens, &tl, &times, 0.1 * period());
            let err = rel_max_diff(&trace.intensity, &oracle);
            assert!(err < 1e-12, "n={n}: relative error {err:e}");
        }
    }
}

#[test]
fn free_echoes_at_multiples_of_inverse_spacing() {
    let ens = sample_ensemble(&comb(), 20_000, 11, &SampleOptions::default()).unwrap();
    // the Gaussian envelope pulls the m-th maximum ~0.25 m ns early, so use a step above that
    let step = 4e-9;
    let grid = UniformGrid::new(0.0, step, 550).unwrap();
    let trace = emission_trace(&ens, &StarkTimeline::empty(), &grid, &material(), &EngineOptions::default()).unwrap();
    for m in 1..=4 {
        let c = m as f64 * period();
        let (k, _) = trace.max_in(c - 0.5 * period(), c + 0.5 * period()).unwrap();
        assert!((grid.at(k) - c).abs() <= step, "echo {m} at {}", grid.at(k));
    }
}

#[test]
fn first_free_echo_is_anchored_to_analytic_efficiency() {
    let ens = sample_ensemble(&comb(), 5000, 5, &SampleOptions::default()).unwrap();
    let grid = UniformGrid::new(0.0, 1e-9, 1000).unwrap();
    let engine = EmissionEngine::new(&ens, &grid, &material(), &EngineOptions::default()).unwrap();
    let v = engine.intensity_at(&StarkTimeline::empty(), &[period()])[0];
    let expect = afc_core::spectra::efficiency_forward(&comb(), period()).unwrap();
    assert!((v - expect).abs() < 1e-12 * expect);
}

#[test]
fn adding_two_pi_to_every_pulse_changes_nothing() {
    let ens = sample_ensemble(&comb(), 3000, 9, &SampleOptions::default()).unwrap();
    let grid = UniformGrid::new(0.0, 2e-9, 1500).unwrap();
    let opts = EngineOptions::default();
    let kicks = two_pulse_timeline(&lab_pulse(0.0), 100e-9, 1.0e-6).unwrap();
    let base = emission_trace(&ens, &kicks, &grid, &material(), &opts).unwrap();
    let shifted = emission_trace(&ens, &kicks.with_extra_phase(2.0 * PI, &material()), &grid, &material(), &opts).unwrap();
    assert!(rel_max_diff(&shifted.intensity, &base.intensity) < 1e-9);

    // integrated square pulses: equal outside the pulses themselves
    let sq = quarter_wave_pulse(PulseShape::Square, 120e-9, &material()).unwrap();
    let tl = two_pulse_timeline(&sq, 100e-9, 1.0e-6).unwrap();
    let a = emission_trace(&ens, &tl, &grid, &material(), &opts).unwrap();
    let b = emission_trace(&ens, &tl.with_extra_phase(2.0 * PI, &material()), &grid, &material(), &opts).unwrap();
    let m = a.intensity.iter().cloned().fold(0.0, f64::max);
    for k in 0..grid.len {
        let t = grid.at(k);
        if tl.pulses.iter().any(|p| t >= p.start_s && t <= p.end()) {
            continue;
        }
        assert!((a.intensity[k] - b.intensity[k]).abs() <= 1e-9 * m, "t={t}");
    }
}

#[test]
fn class_exchange_with_negated_field_is_identical() {
    let ens = sample_ensemble(&comb(), 4000, 13, &SampleOptions::default()).unwrap();
    let grid = UniformGrid::new(0.0, 2e-9, 1500).unwrap();
    let tl = two_pulse_timeline(&lab_pulse(0.0), 100e-9, 1.5e-6).unwrap();
    let opts = EngineOptions::default();
    let a = emission_trace(&ens, &tl, &grid, &material(), &opts).unwrap();
    let b = emission_trace(&ens.swapped_classes(), &tl.negated(), &grid, &material(), &opts).unwrap();
    assert_eq!(a.intensity, b.intensity);
}

#[test]
fn spatial_phase_does_not_affect_forward_emission() {
    let ens = sample_ensemble(&comb(), 2000, 17, &SampleOptions::default()).unwrap();
    let grid = UniformGrid::new(0.0, 2e-9, 800).unwrap();
    let tl = StarkTimeline::new(vec![lab_pulse(100e-9)]).unwrap();
    let opts = EngineOptions::default();
    let a = emission_trace(&ens, &tl, &grid, &material(), &opts).unwrap();
    let zero = ens.with_kz(vec![0.0; ens.len()]).unwrap();
    let b = emission_trace(&zero, &tl, &grid, &material(), &opts).unwrap();
    assert!(rel_max_diff(&a.intensity, &b.intensity) < 1e-12);
}

#[test]
fn echoes_are_discrete_for_a_gaussian_input_pulse() {
    let tau = 150e-9;
    // the input pulse itself falls to 1 % at this distance from its peak
    let half_width = tau * ((100.0f64).ln() / (4.0 * LN_2)).sqrt();
    for fwhm in [140e3, 230e3] {
        let spec = CombSpec::new(4, 2.3e6, fwhm, 45.0).unwrap();
        assert!(spec.finesse() >= 10.0);
        let ens = sample_ensemble(&spec, 200_000, 21, &SampleOptions { input_pulse_fwhm_s: Some(tau) }).unwrap();
        let grid = UniformGrid::new(0.0, 2e-9, 2200).unwrap();
        let tr = emission_trace(&ens, &StarkTimeline::empty(), &grid, &material(), &EngineOptions::default().without_attrition()).unwrap();
        let t = grid.to_vec();
        for k in 0..grid.len {
            if t[k] < 0.5 * period() {
                continue; // transmitted input pulse, not an echo
            }
            let m = (t[k] / period()).round();
            if (t[k] - m * period()).abs() < half_width {
                continue;
            }
            let peak = tr.max_in(m * period() - grid.step, m * period() + grid.step).unwrap().1;
            assert!(tr.intensity[k] < 0.01 * peak, "t={} I={} peak={}", t[k], tr.intensity[k], peak);
        }
    }
}

#[test]
fn free_echo_peaks_follow_gaussian_envelope() {
    let ens = sample_ensemble(&comb(), 1_000_000, 23, &SampleOptions::default()).unwrap();
    let times: Vec<f64> = (1..=6).map(|m| m as f64 * period()).collect();
    let grid = UniformGrid::new(0.0, 5e-9, 600).unwrap();
    let engine = EmissionEngine::new(&ens, &grid, &material(), &EngineOptions::default().without_attrition()).unwrap();
    let i = engine.intensity_at(&StarkTimeline::empty(), &times);
    let gt = 2.0 * PI * 140e3 / (8.0 * LN_2).sqrt();
    for (t, v) in times.iter().zip(&i) {
        let expect = (-(t * gt).powi(2)).exp() / (-(period() * gt).powi(2)).exp();
        assert!((v / i[0] - expect).abs() / expect < 0.05, "t={t}");
    }
}

#[test]
fn mirrored_ensemble_cancels_exactly() {
    let ens = sample_mirrored_ensemble(&comb(), 100_000, 4, &SampleOptions::default()).unwrap();
    let tl = StarkTimeline::new(vec![lab_pulse(100e-9)]).unwrap();
    let q = StarkTimeline::new(vec![quarter_wave_pulse(PulseShape::Gaussian, 23e-9, &material()).unwrap().shifted(100e-9)]).unwrap();
    let r = suppression_ratio(&ens, &q, &material(), &EngineOptions::default()).unwrap();
    assert!(r < 1e-28, "{r:e}");
    // the 54 V lab pulse is slightly off a quarter wave: the residual is cos²φ
    let r = suppression_ratio(&ens, &tl, &material(), &EngineOptions::default()).unwrap();
    let phi = stark_phase(&tl.pulses[0], &material()).0;
    assert!((r - phi.cos().powi(2)).abs() < 1e-15, "{r:e}");
}

#[test]
fn random_ensemble_suppression_is_at_sampling_floor() {
    let q = StarkTimeline::new(vec![quarter_wave_pulse(PulseShape::Gaussian, 23e-9, &material()).unwrap().shifted(100e-9)]).unwrap();
    let mut worst: f64 = 0.0;
    for seed in 0..10 {
        let ens = sample_ensemble(&comb(), 100_000, seed, &SampleOptions::default()).unwrap();
        worst = worst.max(suppression_ratio(&ens, &q, &material(), &EngineOptions::default()).unwrap());
    }
    // floor ~ 1/N = 1e-5
    assert!(worst < 1e-3, "{worst:e}");
}

#[test]
fn suppression_requires_single_early_pulse() {
    let ens = sample_ensemble(&comb(), 100, 0, &SampleOptions::default()).unwrap();
    let two = two_pulse_timeline(&lab_pulse(0.0), 100e-9, 200e-9).unwrap();
    assert!(suppression_ratio(&ens, &two, &material(), &EngineOptions::default()).is_err());
    let late = StarkTimeline::new(vec![lab_pulse(500e-9)]).unwrap();
    assert!(suppression_ratio(&ens, &late, &material(), &EngineOptions::default()).is_err());
}

#[test]
fn grid_resolution_is_enforced() {
    let ens = sample_ensemble(&comb(), 100, 0, &SampleOptions::default()).unwrap();
    let coarse = UniformGrid::new(0.0, 1.0 / (4.0 * 4.0 * 2.3e6) * 1.01, 100).unwrap();
    let r = emission_trace(&ens, &StarkTimeline::empty(), &coarse, &material(), &EngineOptions::default());
    assert!(matches!(r, Err(afc_core::Error::UnderResolvedGrid(_))));
}

#[test]
fn echo_map_staircase() {
    let ens = sample_ensemble(&comb(), 50_000, 31, &SampleOptions::default()).unwrap();
    let grid = UniformGrid::new(0.0, 5e-9, 1000).unwrap();
    let delays: Vec<f64> = (1..=9).map(|i| i as f64 * 0.45e-6).collect();
    let first = 100e-9;
    let map = echo_map(&ens, &delays, &lab_pulse(0.0), first, &grid, &material(), &EngineOptions::default()).unwrap();
    assert_eq!(map.len(), delays.len());
    for (d, tr) in delays.iter().zip(&map) {
        let second_center = first + d + 11.5e-9;
        let n = (second_center / period()).ceil();
        let dominant = tr.echoes.iter().max_by(|a, b| a.efficiency.total_cmp(&b.efficiency)).unwrap();
        assert_eq!(dominant.index as f64, n, "delay {d}");
    }
}

#[test]
fn zero_delay_merges_pulses() {
    let ens = sample_ensemble(&comb(), 20_000, 3, &SampleOptions::default()).unwrap();
    let grid = UniformGrid::new(0.0, 5e-9, 500).unwrap();
    let opts = EngineOptions::default().without_attrition();
    let map = echo_map(&ens, &[0.0], &quarter_wave_pulse(PulseShape::Gaussian, 23e-9, &material()).unwrap(), 100e-9, &grid, &material(), &opts).unwrap();
    let free = emission_trace(&ens, &StarkTimeline::empty(), &grid, &material(), &opts).unwrap();
    for (e, f) in map[0].echoes.iter().zip(&free.echoes) {
        assert!((e.efficiency - f.efficiency).abs() <= 1e-12 * f.efficiency.max(1e-300));
    }
    assert!(echo_map(&ens, &[5e-9], &lab_pulse(0.0), 100e-9, &grid, &material(), &opts).is_err());
    assert!(echo_map(&ens, &[2e-7, 1e-7], &lab_pulse(0.0), 100e-9, &grid, &material(), &opts).is_err());
}

#[test]
fn attrition_never_creates_energy() {
    let ens = sample_ensemble(&comb(), 50_000, 37, &SampleOptions::default()).unwrap();
    let grid = UniformGrid::new(0.0, 5e-9, 1000).unwrap();
    let opts = EngineOptions::default();
    let free = emission_trace(&ens, &StarkTimeline::empty(), &grid, &material(), &opts).unwrap();
    let delays: Vec<f64> = (0..20).map(|i| if i == 0 { 0.0 } else { 0.1e-6 + i as f64 * 0.2e-6 }).collect();
    let q = quarter_wave_pulse(PulseShape::Gaussian, 23e-9, &material()).unwrap();
    let map = echo_map(&ens, &delays, &q, 100e-9, &grid, &material(), &opts).unwrap();
    for tr in &map {
        assert!(tr.total_emitted() <= free.total_emitted() * (1.0 + 1e-9), "{} vs {}: {:?}", tr.total_emitted(), free.total_emitted(), tr.echoes.iter().map(|e| e.efficiency).collect::<Vec<_>>());
    }
}

#[test]
fn on_demand_recall_positions_and_attrition_gain() {
    let ens = sample_ensemble(&comb(), 200_000, 41, &SampleOptions::default()).unwrap();
    let tpl = lab_pulse(0.0);
    let step = 2e-9;
    let r2 = on_demand_recall(&ens, 2, &tpl, 100e-9, step, &material(), &EngineOptions::default()).unwrap();
    assert!((r2.echo_time_s - 2.0 * period()).abs() <= step);
    assert!((r2.echo_time_s - 869.6e-9).abs() < 2e-9);

    // n = 1 with pulses back to back matches the free first echo
    let opts = EngineOptions::default().without_attrition();
    let q = quarter_wave_pulse(PulseShape::Gaussian, 23e-9, &material()).unwrap();
    let r1 = on_demand_recall(&ens, 1, &q, 100e-9, step, &material(), &opts).unwrap();
    let eta1 = afc_core::spectra::efficiency_forward(&comb(), period()).unwrap();
    assert!((r1.efficiency - eta1).abs() / eta1 < 1e-3);

    // with attrition, the recalled 10th echo beats the free-running 10th by > 10x
    let r10 = on_demand_recall(&ens, 10, &tpl, 100e-9, step, &material(), &EngineOptions::default()).unwrap();
    let grid = UniformGrid::new(0.0, 5e-9, 1000).unwrap();
    let free = emission_trace(&ens, &StarkTimeline::empty(), &grid, &material(), &EngineOptions::default()).unwrap();
    let tenth = free.echoes[9].efficiency;
    assert!(r10.efficiency > 10.0 * tenth, "{} vs {}", r10.efficiency, tenth);
}

#[test]
fn class_balance_over_seeds() {
    let n = 100_000usize;
    for seed in 0..100 {
        let e = sample_ensemble(&CombSpec::new(1, 2.3e6, 140e3, 1.0).unwrap(), n, seed, &SampleOptions::default()).unwrap();
        let (p, m) = e.class_counts();
        assert!((p as f64 - m as f64).abs() <= 5.0 * (n as f64).sqrt());
    }
}

#[test]
fn sampled_width_matches_fwhm() {
    let spec = CombSpec::new(1, 2.3e6, 140e3, 1.0).unwrap();
    let n = 1_000_000;
    let e = sample_ensemble(&spec, n, 99, &SampleOptions::default()).unwrap();
    let mean = e.detuning_hz.iter().sum::<f64>() / n as f64;
    let var = e.detuning_hz.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let fwhm = var.sqrt() * (8.0 * LN_2).sqrt();
    assert!((fwhm - 140e3).abs() / 140e3 < 0.01);
    let sigma = 140e3 / (8.0 * LN_2).sqrt();
    assert!(mean.abs() < 5.0 * sigma / (n as f64).sqrt());
}
