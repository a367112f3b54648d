use rustfft::FftPlanner;

use crate::dsp::{fft_upsample, kaiser, sinc};
use crate::error::{Error, Result};
use crate::phantom::RFFrameSet;

const SLOW_HALF_WIDTH: usize = 8;
const SLOW_BETA: f64 = 6.0;

/// Upsamples fast time by FFT zero-padding and slow time by Kaiser-windowed
/// sinc interpolation. Sample rate and frame rate scale with the factors.
pub fn resample_rf(rf: &RFFrameSet, axial_factor: usize, temporal_factor: usize) -> Result<RFFrameSet> {
    if axial_factor == 0 || temporal_factor == 0 {
        return Err(Error::invalid("resampling factors must be at least 1"));
    }
    let fast = upsample_fast_time(rf, axial_factor);
    Ok(upsample_slow_time(&fast, temporal_factor))
}

fn upsample_fast_time(rf: &RFFrameSet, factor: usize) -> RFFrameSet {
    if factor == 1 {
        return rf.clone();
    }
    let ns = rf.n_samples * factor;
    let mut out = RFFrameSet::zeros(
        rf.n_channels,
        ns,
        rf.n_frames,
        rf.sampling_frequency * factor as f64,
        rf.start_time,
        rf.prf_effective,
    );
    let traces: Vec<Vec<f64>> = crate::par::map_range(rf.n_channels * rf.n_frames, |k| {
        let (ch, f) = (k / rf.n_frames, k % rf.n_frames);
        let mut planner = FftPlanner::new();
        fft_upsample(&rf.trace(ch, f), factor, &mut planner)
    });
    for (k, tr) in traces.iter().enumerate() {
        let (ch, f) = (k / rf.n_frames, k % rf.n_frames);
        for (s, &v) in tr.iter().enumerate() {
            let i = out.index(ch, s, f);
            out.samples[i] = v;
        }
    }
    out
}

/// Interpolation taps for output frame `m`: `(first input frame, taps)`.
fn slow_time_taps(m: usize, factor: usize, n_in: usize) -> (usize, Vec<f64>) {
    if m.is_multiple_of(factor) {
        return (m / factor, vec![1.0]);
    }
    let t = m as f64 / factor as f64;
    let hw = SLOW_HALF_WIDTH as f64;
    let lo = (t.floor() as isize - SLOW_HALF_WIDTH as isize + 1).max(0) as usize;
    let hi = ((t.floor() as usize) + SLOW_HALF_WIDTH).min(n_in - 1);
    let mut taps: Vec<f64> = (lo..=hi)
        .map(|k| {
            let d = t - k as f64;
            sinc(d) * kaiser(d / hw, SLOW_BETA)
        })
        .collect();
    let s: f64 = taps.iter().sum();
    if s.abs() > 1e-12 {
        taps.iter_mut().for_each(|w| *w /= s);
    }
    (lo, taps)
}

fn upsample_slow_time(rf: &RFFrameSet, factor: usize) -> RFFrameSet {
    if factor == 1 {
        return rf.clone();
    }
    let nf_in = rf.n_frames;
    let nf = nf_in * factor;
    let plan: Vec<(usize, Vec<f64>)> = (0..nf).map(|m| slow_time_taps(m, factor, nf_in)).collect();
    let mut out = RFFrameSet::zeros(
        rf.n_channels,
        rf.n_samples,
        nf,
        rf.sampling_frequency,
        rf.start_time,
        rf.prf_effective * factor as f64,
    );
    let rows = rf.n_channels * rf.n_samples;
    crate::par::for_each_chunk(&mut out.samples, nf, |row, dst| {
        let src = &rf.samples[row * nf_in..(row + 1) * nf_in];
        for (m, (lo, taps)) in plan.iter().enumerate() {
            dst[m] = taps.iter().zip(&src[*lo..]).map(|(w, v)| w * v).sum();
        }
    });
    debug_assert_eq!(out.samples.len(), rows * nf);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::spectral_peak;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn frame_set(n_ch: usize, ns: usize, nf: usize, f: impl Fn(usize, usize, usize) -> f64) -> RFFrameSet {
        let mut rf = RFFrameSet::zeros(n_ch, ns, nf, 40e6, 1e-5, 10e3);
        for c in 0..n_ch {
            for s in 0..ns {
                for k in 0..nf {
                    let i = rf.index(c, s, k);
                    rf.samples[i] = f(c, s, k);
                }
            }
        }
        rf
    }

    #[test]
    fn unit_factors_are_identity() {
        let rf = frame_set(2, 16, 4, |c, s, k| (c * 100 + s * 10 + k) as f64);
        assert_eq!(resample_rf(&rf, 1, 1).unwrap(), rf);
        assert!(resample_rf(&rf, 0, 1).is_err());
    }

    #[test]
    fn fast_time_tone_survives_at_doubled_rate() {
        let f0 = 8e6;
        let rf = frame_set(1, 256, 2, |_, s, _| (2.0 * PI * f0 * s as f64 / 40e6).cos());
        let up = resample_rf(&rf, 2, 1).unwrap();
        assert_eq!(up.n_samples, 512);
        assert_eq!(up.sampling_frequency, 80e6);
        let peak = spectral_peak(&up.trace(0, 1), up.sampling_frequency);
        assert!((peak - f0).abs() / f0 < 0.01, "{peak}");
        for s in 0..256 {
            assert!((up.get(0, 2 * s, 0) - rf.get(0, s, 0)).abs() < 1e-9);
        }
    }

    #[test]
    fn slow_time_exponential_keeps_its_frequency() {
        // Oracle: lag-one phase of the interpolated complex series at the
        // doubled frame rate, away from the edges.
        let fd = 1500.0;
        let prf = 10e3;
        let re = frame_set(1, 1, 64, |_, _, k| (2.0 * PI * fd * k as f64 / prf).cos());
        let im = frame_set(1, 1, 64, |_, _, k| (2.0 * PI * fd * k as f64 / prf).sin());
        let (ur, ui) = (resample_rf(&re, 1, 2).unwrap(), resample_rf(&im, 1, 2).unwrap());
        assert_eq!(ur.n_frames, 128);
        assert_eq!(ur.prf_effective, 2.0 * prf);
        let z: Vec<Complex64> = (0..128)
            .map(|k| Complex64::new(ur.get(0, 0, k), ui.get(0, 0, k)))
            .collect();
        let r1: Complex64 = (20..107).map(|k| z[k].conj() * z[k + 1]).sum();
        let est = r1.arg() * ur.prf_effective / (2.0 * PI);
        assert!((est / fd - 1.0).abs() < 0.01, "{est}");
    }
}
