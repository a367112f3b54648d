//! Acceptance suite. Every test prints one `PASS` or `FAIL` line, written
//! straight to stdout so it shows up even when output is captured.

use std::io::Write;
use std::time::{Duration, Instant};

use nlhr_core::beamform::{
    bandpass_2f0, beamform_grid, mas_beamform, multiplication_count, resample_rf, Beamformer,
    MasMode, Side,
};
use nlhr_core::clutter::{CasoratiMatrix, ClutterProjector};
use nlhr_core::dsp::{power_spectrum, spectral_centroid, wrap_degrees};
use nlhr_core::experiment::{self, BubbleSpec, ExperimentSpec};
use nlhr_core::phantom::{simulate_rf, synth_pulse, RfWindow, ScattererField, Spreading};
use nlhr_core::velocity::{dcc_shift, kasai_frequency, tac_estimate, tac_forward};
use nlhr_core::{ImagingGrid, Point};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn report(n: u32, name: &str, pass: bool, detail: &str) {
    let line = format!(
        "criterion {n:>2} {}: {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(line.as_bytes());
    let _ = out.flush();
    assert!(pass, "criterion {n} failed: {detail}");
}

#[test]
fn criterion_01_mas_algebraic_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=128);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut pairwise = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                pairwise += a[i] * a[j];
            }
        }
        let fast = mas_beamform(&a, MasMode::Product).unwrap();
        // Relative to the magnitude of the summed products, so that
        // near-cancelling sums are not judged against a tiny denominator.
        let scale: f64 = {
            let s: f64 = a.iter().map(|v| v.abs()).sum();
            (s * s - a.iter().map(|v| v * v).sum::<f64>()) / 2.0
        };
        worst = worst.max((fast - pairwise).abs() / scale.max(f64::MIN_POSITIVE));
    }
    let count = multiplication_count(128).unwrap();
    let elapsed = start.elapsed();
    report(
        1,
        "multiply-and-sum identity",
        worst < 1e-9 && count == 8128 && elapsed < Duration::from_secs(1),
        &format!("max relative error {worst:.2e}, multiplications(128) = {count}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_spectral_doubling() {
    let start = Instant::now();
    let mut spec = ExperimentSpec::desk();
    spec.acquisition.num_frames = 2;
    let acq = &spec.acquisition;
    let array = spec.transducer().unwrap();
    let lambda = acq.wavelength();
    let target = Point::new(0.0, 0.025);
    let dz = lambda / 16.0;
    let grid = ImagingGrid::uniform((0.0, 0.0), lambda, (0.0235, 0.0265), dz).unwrap();
    let field = ScattererField {
        positions: vec![target],
        amplitudes: vec![1.0],
        rng_seed: 0,
        density: 0.0,
    };
    let traj = vec![field; acq.num_frames];
    let window = RfWindow::covering(&array, &grid, acq, &synth_pulse(acq), 1e-6);
    let rf = simulate_rf(&traj, &array, acq, window, Spreading::None).unwrap();
    let rf = resample_rf(&rf, 2, 1).unwrap();
    let ens = beamform_grid(&rf, &array, acq, &grid, &[Beamformer::Das, Beamformer::Mas(MasMode::Product)]).unwrap();
    let nlhr = bandpass_2f0(&ens[1], &grid, acq).unwrap();
    let f_axial = acq.sound_speed / (2.0 * dz);
    let line = |e: &nlhr_core::beamform::SubApertureEnsemble| -> Vec<f64> {
        (0..grid.nz()).map(|iz| e.series(iz, 0, Side::Left)[0]).collect()
    };
    let f0 = acq.center_frequency;
    let das_c = spectral_centroid(&line(&ens[0]), f_axial);
    let nlhr_c = spectral_centroid(&line(&nlhr), f_axial);
    // Before the band-pass, the raw product must already carry its energy
    // near 2 f0 rather than near f0.
    let (freqs, power) = power_spectrum(&line(&ens[1]), f_axial, 4096);
    let band = |lo: f64, hi: f64| -> f64 {
        freqs.iter().zip(&power).filter(|(f, _)| **f >= lo * f0 && **f < hi * f0).map(|(_, p)| p).sum()
    };
    let (near_2f0, near_f0) = (band(1.5, 2.5), band(0.5, 1.5));
    let elapsed = start.elapsed();
    let pass = (nlhr_c / (2.0 * f0) - 1.0).abs() <= 0.10
        && (das_c / f0 - 1.0).abs() <= 0.10
        && near_2f0 > near_f0
        && elapsed < Duration::from_secs(30);
    report(
        2,
        "spectral doubling",
        pass,
        &format!(
            "NLHR centroid {:.3} f0, DAS centroid {:.3} f0, raw product band power 2f0/f0 = {:.1}, {elapsed:.2?}",
            nlhr_c / f0,
            das_c / f0,
            near_2f0 / near_f0
        ),
    );
}

#[test]
fn criterion_03_kasai() {
    let prf = 20e3;
    let series = |f: f64| -> Vec<Complex64> {
        (0..64)
            .map(|n| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f * n as f64 / prf))
            .collect()
    };
    let mut worst = 0.0f64;
    for k in 1..=100 {
        for sign in [-1.0, 1.0] {
            let f = sign * 0.45 * prf * k as f64 / 100.0;
            let est = kasai_frequency(&series(f), prf).unwrap();
            worst = worst.max((est - f).abs() / prf);
        }
    }
    let aliased = kasai_frequency(&series(0.6 * prf), prf).unwrap();
    let wrap_ok = (aliased + 0.4 * prf).abs() / prf < 0.005;
    report(
        3,
        "lag-one autocorrelation frequency",
        worst < 0.005 && wrap_ok,
        &format!("max error {:.2e} prf, 0.6 prf reads {:.4} prf", worst, aliased / prf),
    );
}

#[test]
fn criterion_04_tac_round_trip() {
    let c = 1540.0;
    let (mut worst_v, mut worst_a) = (0.0f64, 0.0f64);
    for f_prime in [8e6, 16e6] {
        for alpha in [6.0, 9.0, 12.0, 15.0] {
            for iv in 1..=10 {
                let v = 0.05 * iv as f64;
                for it in 0..36 {
                    let theta = 10.0 * it as f64;
                    let (vx, vz) = (v * theta.to_radians().sin(), v * theta.to_radians().cos());
                    let (fl, fr) = tac_forward(vz, vx, alpha, f_prime, c);
                    let (axial, lateral) = tac_estimate(fl, fr, alpha, f_prime, c);
                    let speed = axial.hypot(lateral);
                    let angle = lateral.atan2(axial).to_degrees();
                    worst_v = worst_v.max((speed - v).abs() / v);
                    worst_a = worst_a.max(wrap_degrees(angle - theta).abs());
                }
            }
        }
    }
    report(
        4,
        "triangulation round trip",
        worst_v < 1e-6 && worst_a < 1e-4,
        &format!("max speed error {worst_v:.2e} relative, max angle error {worst_a:.2e} deg"),
    );
}

#[test]
fn criterion_05_dcc_shift_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Band-limited texture: random-phase tones between 0.05 and 0.25
    // cycles per sample.
    let tones: Vec<(f64, f64, f64)> = (0..24)
        .map(|_| {
            (
                rng.random_range(0.05..0.25),
                rng.random_range(0.0..std::f64::consts::TAU),
                rng.random_range(0.5..1.0),
            )
        })
        .collect();
    let texture = |x: f64| -> f64 {
        tones.iter().map(|(f, p, a)| a * (std::f64::consts::TAU * f * x + p).cos()).sum()
    };
    let (support, max_shift) = (201usize, 10usize);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let d: f64 = rng.random_range(-3.0..3.0);
        let lines: Vec<Vec<f64>> = (0..8)
            .map(|frame| {
                (0..support + 2 * max_shift)
                    .map(|i| texture(i as f64 - frame as f64 * d))
                    .collect()
            })
            .collect();
        let refs: Vec<&[f64]> = lines.iter().map(|l| l.as_slice()).collect();
        let est = dcc_shift(&refs, 1, max_shift).unwrap();
        worst = worst.max((est - d).abs());
    }
    report(
        5,
        "cross-correlation shift recovery",
        worst <= 0.25,
        &format!("max error {worst:.3} samples over 200 shifts in [-3, 3]"),
    );
}

fn profile_run(spec: &ExperimentSpec) -> experiment::Manifest {
    let dir = tempfile::tempdir().unwrap();
    experiment::run(spec, dir.path()).unwrap()
}

#[test]
fn criterion_06_transverse_vessel() {
    let start = Instant::now();
    let mut lines = Vec::new();
    let mut pass = true;
    for b in [experiment::BeamformerChoice::Das, experiment::BeamformerChoice::Nlhr] {
        let mut spec = ExperimentSpec::desk();
        spec.beamformer = b;
        let m = profile_run(&spec);
        let s = m.metrics.unwrap();
        pass &= s.median_bias.abs() <= 20.0 && s.sd <= 15.0 && s.median_bias <= 0.0;
        lines.push(format!("{} bias {:.2}% sd {:.2}%", m.beamformer, s.median_bias, s.sd));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    report(
        6,
        "transverse vessel, TAC",
        pass,
        &format!("{}, {elapsed:.1?}", lines.join(", ")),
    );
}

#[test]
fn criterion_07_inclined_vessels() {
    let mut lines = Vec::new();
    let mut pass = true;
    for incl in [-20.0, -10.0, 0.0, 10.0, 20.0] {
        let mut spec = ExperimentSpec::desk();
        spec.set_axis("inclination", incl).unwrap();
        let s = profile_run(&spec).metrics.unwrap();
        pass &= s.median_angle_bias.abs() <= 10.0 && s.angle_sd <= 15.0;
        lines.push(format!("{incl:+} deg: {:+.2}/{:.2}", s.median_angle_bias, s.angle_sd));
    }
    report(
        7,
        "inclined vessels, NLHR angle bias/sd",
        pass,
        &lines.join(", "),
    );
}

#[test]
fn criterion_08_svd_clutter() {
    let (rows, frames) = (400, 128);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut gauss = || Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let clutter_rows: Vec<Complex64> = (0..rows).map(|_| gauss()).collect();
    let flow_rows: Vec<Complex64> = (0..rows).map(|_| gauss()).collect();
    let clutter_amp = 100.0; // 40 dB in power
    let f = 0.2;
    let clutter: Vec<Complex64> = (0..rows * frames).map(|i| clutter_rows[i / frames] * clutter_amp).collect();
    let flow: Vec<Complex64> = (0..rows * frames)
        .map(|i| flow_rows[i / frames] * Complex64::from_polar(1.0, std::f64::consts::TAU * f * (i % frames) as f64))
        .collect();
    let mixed: Vec<Complex64> = clutter.iter().zip(&flow).map(|(a, b)| a + b).collect();
    let m = |v: Vec<Complex64>| CasoratiMatrix::from_rows(rows, frames, v).unwrap();
    let (clutter, flow, mixed) = (m(clutter), m(flow), m(mixed));
    // The filter is linear once the basis is fixed, so each part can be
    // pushed through the projector learned from the mixture.
    let proj = ClutterProjector::factorize(&mixed);
    let (c_out, f_out) = (proj.apply(&clutter, 1), proj.apply(&flow, 1));
    let db = |x: f64| 10.0 * x.log10();
    let cfr_before = db(clutter.frobenius_sq() / flow.frobenius_sq());
    let cfr_after = db(c_out.frobenius_sq() / f_out.frobenius_sq());
    let flow_loss = db(flow.frobenius_sq() / f_out.frobenius_sq());
    let reduction = cfr_before - cfr_after;
    report(
        8,
        "rank-one clutter removal",
        reduction >= 20.0 && flow_loss < 1.0,
        &format!("clutter-to-flow {cfr_before:.1} dB -> {cfr_after:.1} dB, flow loss {flow_loss:.3} dB"),
    );
}

#[test]
fn criterion_09_bubble_transient() {
    let mut spec = ExperimentSpec::desk();
    spec.bubble = Some(BubbleSpec::default());
    spec.estimator.hop = Some(1.0 / (spec.acquisition.prf * spec.resample.temporal as f64));
    let traces = experiment::transient_traces(
        &spec,
        &[
            Beamformer::Das,
            Beamformer::Mas(MasMode::Product),
            Beamformer::Mas(MasMode::SignedSqrt),
        ],
    )
    .unwrap();
    let ms = |i: usize| traces[i].fwhm.map_or(f64::NAN, |w| w * 1e3);
    let (das, nlhr, signed) = (ms(0), ms(1), ms(2));
    report(
        9,
        "bubble transient width",
        nlhr <= das,
        &format!("FWHM DAS {das:.3} ms, NLHR {nlhr:.3} ms (signed-sqrt variant {signed:.3} ms)"),
    );
}

#[test]
fn criterion_10_determinism() {
    let spec = ExperimentSpec::desk();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let read = |spec: &ExperimentSpec| -> Vec<u8> {
        let dir = tempfile::tempdir().unwrap();
        pool.install(|| experiment::run(spec, dir.path())).unwrap();
        std::fs::read(dir.path().join("manifest.json")).unwrap()
    };
    let (a, b) = (read(&spec), read(&spec));
    report(
        10,
        "byte-identical manifests",
        a == b && !a.is_empty(),
        &format!("{} manifest bytes, identical = {}", a.len(), a == b),
    );
}
