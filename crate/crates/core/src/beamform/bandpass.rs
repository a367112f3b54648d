use num_complex::Complex64;
use rustfft::FftPlanner;

use super::kernel::{Beamformer, Side, SubApertureEnsemble};
use crate::dsp::{analytic_signal, FirFilter};
use crate::error::{Error, Result};
use crate::geometry::{AcquisitionConfig, ImagingGrid};

/// Stopband attenuation per pass; forward-backward filtering doubles it.
const STOPBAND_DB: f64 = 50.0;

/// Band-pass around `2 f0` for data sampled along depth at spacing `dz`.
/// Depth samples map to round-trip time, so the effective rate is `c / (2 dz)`.
pub fn nlhr_bandpass_filter(f0: f64, dz: f64, c: f64) -> Result<FirFilter> {
    let fs = c / (2.0 * dz);
    let (lo, hi, tr) = (1.5 * f0, 2.5 * f0, 0.5 * f0);
    if hi + tr / 2.0 >= fs / 2.0 {
        return Err(Error::config(
            "grid.dz",
            format!(
                "axial spacing {dz:.3e} m samples at {:.2} MHz, too coarse for a band-pass up to {:.2} MHz",
                fs / 1e6,
                (hi + tr / 2.0) / 1e6
            ),
        ));
    }
    Ok(FirFilter::kaiser_bandpass(lo, hi, tr, STOPBAND_DB, fs))
}

/// Contiguous runs `[start, end)` of valid entries.
fn valid_runs(valid: impl Iterator<Item = bool>) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    let mut n = 0;
    for (i, v) in valid.enumerate() {
        match (v, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
        n = i + 1;
    }
    if let Some(s) = start {
        runs.push((s, n));
    }
    runs
}

fn check_grid(ens: &SubApertureEnsemble, grid: &ImagingGrid) -> Result<(usize, usize)> {
    match ens.grid_shape {
        Some(shape) if shape == (grid.nx(), grid.nz()) => Ok(shape),
        Some(shape) => Err(Error::Shape(format!(
            "ensemble grid {shape:?} does not match grid {}x{}",
            grid.nx(),
            grid.nz()
        ))),
        None => Err(Error::Shape(
            "axial processing needs an ensemble beamformed on a grid".into(),
        )),
    }
}

/// Applies `f` to every valid axial run of every (column, angle, side,
/// frame) trace of a point-major ensemble layout, in place.
fn for_each_axial_run<T: Copy + Default + Send>(
    data: &mut [T],
    valid: &[bool],
    nz: usize,
    n_alpha: usize,
    n_frames: usize,
    f: impl Fn(&[T]) -> Vec<T> + Sync + Send,
) {
    let block = n_alpha * 2 * n_frames;
    crate::par::for_each_chunk(data, nz * block, |ix, column| {
        let mut trace = Vec::with_capacity(nz);
        for a in 0..n_alpha {
            for s in 0..2 {
                let slot = a * 2 + s;
                let runs = valid_runs(
                    (0..nz).map(|iz| valid[(ix * nz + iz) * n_alpha * 2 + slot]),
                );
                for (r0, r1) in runs {
                    for fr in 0..n_frames {
                        trace.clear();
                        trace.extend((r0..r1).map(|iz| column[iz * block + slot * n_frames + fr]));
                        let out = f(&trace);
                        for (k, iz) in (r0..r1).enumerate() {
                            column[iz * block + slot * n_frames + fr] = out[k];
                        }
                    }
                }
            }
        }
    });
}

/// Forward-backward band-pass of a multiply-and-sum ensemble along depth,
/// passband `[1.5 f0, 2.5 f0]`. Masked pixels split the depth axis into
/// independently filtered runs.
pub fn bandpass_2f0(
    ens: &SubApertureEnsemble,
    grid: &ImagingGrid,
    cfg: &AcquisitionConfig,
) -> Result<SubApertureEnsemble> {
    if !ens.beamformer.is_nonlinear() {
        return Err(Error::invalid("the 2f0 band-pass applies to multiply-and-sum output only"));
    }
    let (_, nz) = check_grid(ens, grid)?;
    let dz = grid
        .uniform_dz()
        .ok_or_else(|| Error::config("grid.dz", "axial filtering needs uniform depth spacing"))?;
    let filter = nlhr_bandpass_filter(cfg.center_frequency, dz, cfg.sound_speed)?;
    let mut out = ens.clone();
    for_each_axial_run(
        &mut out.values,
        &ens.valid,
        nz,
        ens.n_alpha(),
        ens.n_frames,
        |x| filter.filtfilt(x),
    );
    Ok(out)
}

/// Complex slow-time series per (point, angle, side), demodulated by the
/// analytic signal along depth.
#[derive(Debug, Clone, PartialEq)]
pub struct SlowTimeEnsemble {
    pub beamformer: Beamformer,
    pub alphas: Vec<f64>,
    pub n_points: usize,
    pub n_frames: usize,
    pub grid_shape: Option<(usize, usize)>,
    /// Carrier the Doppler shift is referenced to (`f0` or `2 f0`).
    pub reference_frequency: f64,
    pub prf_effective: f64,
    /// Same layout as [`SubApertureEnsemble::values`].
    pub values: Vec<Complex64>,
    pub valid: Vec<bool>,
}

impl SlowTimeEnsemble {
    pub fn n_alpha(&self) -> usize {
        self.alphas.len()
    }

    #[inline]
    pub fn slot(&self, point: usize, alpha: usize, side: Side) -> usize {
        (point * self.alphas.len() + alpha) * 2 + side.index()
    }

    pub fn series(&self, point: usize, alpha: usize, side: Side) -> &[Complex64] {
        let i = self.slot(point, alpha, side) * self.n_frames;
        &self.values[i..i + self.n_frames]
    }

    pub fn series_mut(&mut self, point: usize, alpha: usize, side: Side) -> &mut [Complex64] {
        let i = self.slot(point, alpha, side) * self.n_frames;
        &mut self.values[i..i + self.n_frames]
    }

    pub fn is_valid(&self, point: usize, alpha: usize, side: Side) -> bool {
        self.valid[self.slot(point, alpha, side)]
    }
}

/// Analytic signal along depth for every frame, conjugated so that motion
/// away from the array (lengthening path) gives a positive slow-time
/// frequency.
pub fn to_slowtime_ensemble(ens: &SubApertureEnsemble, grid: &ImagingGrid) -> Result<SlowTimeEnsemble> {
    let (_, nz) = check_grid(ens, grid)?;
    let mut values: Vec<Complex64> = ens.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    for_each_axial_run(&mut values, &ens.valid, nz, ens.n_alpha(), ens.n_frames, |x| {
        let re: Vec<f64> = x.iter().map(|v| v.re).collect();
        let mut planner = FftPlanner::new();
        analytic_signal(&re, &mut planner)
            .into_iter()
            .map(|v| v.conj())
            .collect()
    });
    for (slot, &ok) in ens.valid.iter().enumerate() {
        if !ok {
            let i = slot * ens.n_frames;
            values[i..i + ens.n_frames]
                .iter_mut()
                .for_each(|v| *v = Complex64::new(0.0, 0.0));
        }
    }
    Ok(SlowTimeEnsemble {
        beamformer: ens.beamformer,
        alphas: ens.alphas.clone(),
        n_points: ens.n_points,
        n_frames: ens.n_frames,
        grid_shape: ens.grid_shape,
        reference_frequency: ens.center_frequency_out,
        prf_effective: ens.prf_effective,
        values,
        valid: ens.valid.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::MasMode;
    use crate::dsp::{spectral_peak, power_spectrum};
    use std::f64::consts::PI;

    const C: f64 = 1540.0;
    const F0: f64 = 8e6;

    fn column_ensemble(
        bf: Beamformer,
        nz: usize,
        dz: f64,
        f: impl Fn(usize) -> f64,
    ) -> (SubApertureEnsemble, ImagingGrid, AcquisitionConfig) {
        let grid = ImagingGrid::uniform((0.0, 0.0), 1.0, (0.02, 0.02 + (nz - 1) as f64 * dz), dz).unwrap();
        assert_eq!(grid.nz(), nz);
        let mut cfg = AcquisitionConfig::table_simulation();
        cfg.alpha_set = vec![10.0];
        let mut values = vec![0.0; nz * 2];
        for iz in 0..nz {
            values[iz * 2] = f(iz);
            values[iz * 2 + 1] = f(iz);
        }
        let ens = SubApertureEnsemble {
            beamformer: bf,
            alphas: vec![10.0],
            n_points: nz,
            n_frames: 1,
            grid_shape: Some((1, nz)),
            center_frequency_out: bf.output_frequency(F0),
            prf_effective: 1e3,
            values,
            valid: vec![true; nz * 2],
        };
        (ens, grid, cfg)
    }

    fn axial_rate(dz: f64) -> f64 {
        C / (2.0 * dz)
    }

    fn lambda() -> f64 {
        C / F0
    }

    #[test]
    fn filter_response_oracle() {
        let dz = lambda() / 16.0;
        let fs = axial_rate(dz);
        let h = nlhr_bandpass_filter(F0, dz, C).unwrap();
        // Forward-backward response is the squared single-pass magnitude.
        for k in 0..=20 {
            let f = 1.5 * F0 + k as f64 * 0.05 * F0;
            let db = 20.0 * (h.magnitude_at(f, fs).powi(2)).log10();
            assert!(db.abs() <= 1.0, "{f} {db}");
        }
        let dc = 20.0 * (h.magnitude_at(0.0, fs).powi(2)).log10();
        assert!(dc <= -40.0, "{dc}");
        assert!(20.0 * (h.magnitude_at(0.5 * F0, fs).powi(2)).log10() <= -40.0);
    }

    #[test]
    fn coarse_axial_spacing_is_a_config_error() {
        let err = nlhr_bandpass_filter(F0, lambda() / 2.0, C).unwrap_err();
        assert!(err.is_config());
    }

    #[test]
    fn tone_at_2f0_passes_and_dc_is_removed() {
        let dz = lambda() / 16.0;
        let fs = axial_rate(dz);
        let nz = 600;
        let bf = Beamformer::Mas(MasMode::Product);
        let (ens, grid, cfg) = column_ensemble(bf, nz, dz, |iz| (2.0 * PI * 2.0 * F0 * iz as f64 / fs).cos());
        let out = bandpass_2f0(&ens, &grid, &cfg).unwrap();
        let mid: Vec<f64> = (200..400).map(|iz| out.series(iz, 0, Side::Left)[0]).collect();
        let amp = mid.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((20.0 * amp.log10()).abs() <= 1.0, "{amp}");

        let (ens, grid, cfg) = column_ensemble(bf, nz, dz, |_| 1.0);
        let out = bandpass_2f0(&ens, &grid, &cfg).unwrap();
        let mid = (200..400).map(|iz| out.series(iz, 0, Side::Right)[0].abs()).fold(0.0, f64::max);
        assert!(20.0 * mid.log10() <= -40.0, "{mid}");
    }

    #[test]
    fn product_of_f0_tones_lands_at_2f0() {
        // cos^2 = 1/2 + cos(2x)/2: the filter keeps the 2 f0 half.
        let dz = lambda() / 16.0;
        let fs = axial_rate(dz);
        let nz = 512;
        let bf = Beamformer::Mas(MasMode::Product);
        let (ens, grid, cfg) =
            column_ensemble(bf, nz, dz, |iz| (2.0 * PI * F0 * iz as f64 / fs).cos().powi(2));
        let out = bandpass_2f0(&ens, &grid, &cfg).unwrap();
        let trace: Vec<f64> = (0..nz).map(|iz| out.series(iz, 0, Side::Left)[0]).collect();
        let peak = spectral_peak(&trace, fs);
        assert!((peak / (2.0 * F0) - 1.0).abs() < 0.02, "{peak}");
        let mean = trace[100..400].iter().sum::<f64>() / 300.0;
        assert!(mean.abs() < 1e-3);
        let (freqs, power) = power_spectrum(&trace, fs, 4096);
        let dc = power[0];
        let at_peak = freqs
            .iter()
            .zip(&power)
            .filter(|(f, _)| (**f - 2.0 * F0).abs() < 0.1 * F0)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        assert!(dc < 1e-4 * at_peak);
    }

    #[test]
    fn das_input_is_rejected() {
        let (ens, grid, cfg) = column_ensemble(Beamformer::Das, 64, lambda() / 16.0, |_| 0.0);
        assert!(bandpass_2f0(&ens, &grid, &cfg).is_err());
    }

    #[test]
    fn masked_pixels_split_runs() {
        assert_eq!(
            valid_runs([true, true, false, true, false, false, true].into_iter()),
            vec![(0, 2), (3, 4), (6, 7)]
        );
        assert!(valid_runs([false, false].into_iter()).is_empty());
    }

    #[test]
    fn analytic_magnitude_is_flat_and_zero_stays_zero() {
        let dz = lambda() / 16.0;
        let fs = axial_rate(dz);
        let (ens, grid, _) = column_ensemble(Beamformer::Das, 400, dz, |iz| {
            (2.0 * PI * F0 * iz as f64 / fs).cos()
        });
        let st = to_slowtime_ensemble(&ens, &grid).unwrap();
        assert_eq!(st.reference_frequency, F0);
        for iz in 50..350 {
            assert!((st.series(iz, 0, Side::Left)[0].norm() - 1.0).abs() < 0.02);
        }
        let (ens, grid, _) = column_ensemble(Beamformer::Das, 64, dz, |_| 0.0);
        let st = to_slowtime_ensemble(&ens, &grid).unwrap();
        assert!(st.values.iter().all(|v| v.norm() == 0.0));
    }
}
