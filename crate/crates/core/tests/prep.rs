use afc_core::prep::*;
use afc_core::spectra::AbsorptionProfile;

fn scheme() -> LevelScheme {
    LevelScheme::default()
}

fn half_max_width(p: &AbsorptionProfile, center: f64) -> f64 {
    let k = p.grid.nearest(center);
    let v = &p.optical_depth;
    let half = 0.5 * v[k];
    let mut lo = k;
    while lo > 0 && v[lo] > half {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < v.len() && v[hi] > half {
        hi += 1;
    }
    let x = |i: usize, j: usize| p.grid.at(i) + (half - v[i]) / (v[j] - v[i]) * (p.grid.at(j) - p.grid.at(i));
    x(hi - 1, hi) - x(lo, lo + 1)
}

#[test]
fn default_sequence_builds_four_peak_comb() {
    let settings = PrepSettings::default();
    let (_, prof) = run_sequence(&BurnSequence::default(), &scheme(), &settings).unwrap();
    let peaks = dominant_peaks(&prof, 4, 0.0, 18e6);
    assert_eq!(peaks.len(), 4);
    for w in peaks.windows(2) {
        assert!((w[1].0 - w[0].0 - 2.3e6).abs() <= settings.output_step_hz, "{peaks:?}");
    }
    assert!(peaks[0].1.min(peaks[1].1) > peaks[2].1.max(peaks[3].1), "{peaks:?}");
    assert!(prof.optical_depth.iter().all(|v| *v >= 0.0));
}

#[test]
fn peak_positions_converge_under_grid_refinement() {
    let mut positions = Vec::new();
    for step in [20e3, 10e3, 5e3] {
        let s = PrepSettings { class_step_hz: step, output_step_hz: step, ..Default::default() };
        let (_, prof) = run_sequence(&BurnSequence::default(), &scheme(), &s).unwrap();
        let peaks = dominant_peaks(&prof, 4, 0.0, 18e6);
        assert!(peaks[0].1.min(peaks[1].1) > peaks[2].1.max(peaks[3].1), "step {step}: {peaks:?}");
        positions.push((step, peaks));
    }
    for w in positions.windows(2) {
        let (coarse, a) = &w[0];
        for (p, q) in a.iter().zip(&w[1].1) {
            assert!((p.0 - q.0).abs() <= *coarse);
        }
    }
}

#[test]
fn window_is_transparent_to_residual_level() {
    let s = PrepSettings::default();
    let state = burn_window(&PopulationState::thermal(s.class_grid().unwrap()), &scheme(), &s.window).unwrap();
    let prof = absorption_profile(&state, &scheme(), &s.output_grid().unwrap(), s.linewidth(), s.background_optical_depth).unwrap();
    let margin = 8.0 * s.linewidth();
    let flat: Vec<f64> = (0..prof.grid.len)
        .filter(|&k| prof.grid.at(k) > margin && prof.grid.at(k) < 18e6 - margin)
        .map(|k| prof.optical_depth[k])
        .collect();
    assert!(!flat.is_empty());
    let bound = s.window.residual * s.background_optical_depth;
    assert!(flat.iter().all(|v| *v <= bound * (1.0 + 1e-9)), "max {}", flat.iter().cloned().fold(0.0, f64::max));
    // unburnt far region keeps the background depth
    let thermal = absorption_profile(
        &PopulationState::thermal(s.class_grid().unwrap()),
        &scheme(),
        &s.output_grid().unwrap(),
        s.linewidth(),
        s.background_optical_depth,
    )
    .unwrap();
    assert!((thermal.at(9e6) - 1.0).abs() < 1e-9);
}

#[test]
fn population_is_conserved_by_every_pulse() {
    let s = PrepSettings { class_step_hz: 20e3, ..Default::default() };
    let mut state = burn_window(&PopulationState::thermal(s.class_grid().unwrap()), &scheme(), &s.window).unwrap();
    for p in &BurnSequence::default().pulses {
        let before = state.totals();
        state = apply_pulse(&state, p, &scheme()).unwrap();
        state.validate().unwrap();
        for (a, b) in before.iter().zip(state.totals()) {
            assert!((a - b).abs() <= 1e-12, "{}: {a} -> {b}", p.name);
        }
    }
}

#[test]
fn single_burnback_gives_pair_split_by_excited_splitting() {
    let seq = BurnSequence::new(vec![BurnSequence::default().pulses[0].clone()]).unwrap();
    let s = PrepSettings::default();
    let (_, prof) = run_sequence(&seq, &scheme(), &s).unwrap();
    let peaks = dominant_peaks(&prof, 2, 0.0, 18e6);
    assert_eq!(peaks.len(), 2);
    assert!((peaks[1].0 - peaks[0].0 - 4.6e6).abs() <= s.output_step_hz, "{peaks:?}");
}

#[test]
fn wider_burnback_pulses_give_broader_peaks() {
    let s = PrepSettings::default();
    let base = BurnSequence::default();
    let mut wide = base.clone();
    for p in wide.pulses.iter_mut().filter(|p| p.name.starts_with("Burnback")) {
        p.width_hz = 0.5e6;
    }
    let (_, a) = run_sequence(&base, &scheme(), &s).unwrap();
    let (_, b) = run_sequence(&wide, &scheme(), &s).unwrap();
    let pa = dominant_peaks(&a, 4, 0.0, 18e6);
    let pb = dominant_peaks(&b, 4, 0.0, 18e6);
    assert!(half_max_width(&b, pb[0].0) > 1.5 * half_max_width(&a, pa[0].0));
}

#[test]
fn missing_scheme_file_is_an_error() {
    assert!(LevelScheme::load("/nonexistent/levels.toml").is_err());
    assert!(BurnSequence::load("/nonexistent/seq.csv").is_err());
}
