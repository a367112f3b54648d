//! Browser bindings: point-target lines, their axial spectra and the
//! sub-aperture apodization, all on a 64-element linear array at 8 MHz.
//!
//! Arrays are returned flat; each function documents its layout.

use nlhr_core::beamform::{
    bandpass_2f0, beamform_grid, resample_rf, subaperture_weights, ApodizationProfile, Beamformer,
    MasMode, Side,
};
use nlhr_core::dsp::power_spectrum;
use nlhr_core::experiment::ExperimentSpec;
use nlhr_core::phantom::{simulate_rf, synth_pulse, RfWindow, ScattererField, Spreading};
use nlhr_core::{ImagingGrid, Point, TransducerArray};
use wasm_bindgen::prelude::*;

fn js(e: nlhr_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

struct Lines {
    z: Vec<f64>,
    das: Vec<f64>,
    product: Vec<f64>,
    nlhr: Vec<f64>,
    axial_rate: f64,
    f0: f64,
}

/// Beamforms the axial line through a point target at `(0, depth)` for one
/// steering angle (left sub-aperture).
fn point_target(depth_mm: f64, f_number: f64, alpha_deg: f64, signed_sqrt: bool) -> Result<Lines, JsError> {
    let mut spec = ExperimentSpec::desk();
    spec.acquisition.num_frames = 2;
    spec.acquisition.f_number = f_number;
    spec.acquisition.alpha_set = vec![alpha_deg];
    spec.acquisition.clone().validate().map_err(|v| js(nlhr_core::Error::Config(v)))?;
    let acq = &spec.acquisition;
    let array = spec.transducer().map_err(js)?;
    let depth = depth_mm * 1e-3;
    let dz = acq.wavelength() / 16.0;
    let grid = ImagingGrid::uniform((0.0, 0.0), 1.0, (depth - 1.5e-3, depth + 1.5e-3), dz).map_err(js)?;
    let field = ScattererField {
        positions: vec![Point::new(0.0, depth)],
        amplitudes: vec![1.0],
        rng_seed: 0,
        density: 0.0,
    };
    let window = RfWindow::covering(&array, &grid, acq, &synth_pulse(acq), 1e-6);
    let rf = simulate_rf(&vec![field; 2], &array, acq, window, Spreading::None).map_err(js)?;
    let rf = resample_rf(&rf, 2, 1).map_err(js)?;
    let mode = if signed_sqrt { MasMode::SignedSqrt } else { MasMode::Product };
    let ens = beamform_grid(&rf, &array, acq, &grid, &[Beamformer::Das, Beamformer::Mas(mode)]).map_err(js)?;
    let filtered = bandpass_2f0(&ens[1], &grid, acq).map_err(js)?;
    let line = |e: &nlhr_core::beamform::SubApertureEnsemble| -> Vec<f64> {
        (0..grid.nz()).map(|iz| e.series(iz, 0, Side::Left)[0]).collect()
    };
    Ok(Lines {
        z: grid.z_coords().iter().map(|z| z * 1e3).collect(),
        das: line(&ens[0]),
        product: line(&ens[1]),
        nlhr: line(&filtered),
        axial_rate: acq.sound_speed / (2.0 * dz),
        f0: acq.center_frequency,
    })
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    v.iter().map(|x| if m > 0.0 { x / m } else { 0.0 }).collect()
}

/// Axial RF lines through a point target, each scaled to unit peak.
/// Layout: `[depth_mm; n] ++ [das; n] ++ [nlhr; n]`.
#[wasm_bindgen]
pub fn point_spread(depth_mm: f64, f_number: f64, alpha_deg: f64, signed_sqrt: bool) -> Result<Vec<f64>, JsError> {
    let l = point_target(depth_mm, f_number, alpha_deg, signed_sqrt)?;
    let mut out = l.z;
    out.extend(normalized(&l.das));
    out.extend(normalized(&l.nlhr));
    Ok(out)
}

/// Axial power spectra in dB relative to each line's peak, on frequencies in
/// units of the center frequency. The raw product is shown before the 2 f0
/// band-pass. Layout: `[freq; n] ++ [das; n] ++ [product; n] ++ [nlhr; n]`.
#[wasm_bindgen]
pub fn axial_spectrum(depth_mm: f64, f_number: f64, alpha_deg: f64, signed_sqrt: bool) -> Result<Vec<f64>, JsError> {
    let l = point_target(depth_mm, f_number, alpha_deg, signed_sqrt)?;
    let db = |x: &[f64]| -> (Vec<f64>, Vec<f64>) {
        let (f, p) = power_spectrum(x, l.axial_rate, 1024);
        let peak = p.iter().cloned().fold(f64::MIN_POSITIVE, f64::max);
        (f, p.iter().map(|v| 10.0 * (v / peak).max(1e-12).log10()).collect())
    };
    let (freqs, das) = db(&l.das);
    let mut out: Vec<f64> = freqs.iter().map(|f| f / l.f0).collect();
    out.extend(das);
    out.extend(db(&l.product).1);
    out.extend(db(&l.nlhr).1);
    Ok(out)
}

/// Left and right sub-aperture weights over the array for a pixel.
/// Layout: `[element_x_mm; n] ++ [left; n] ++ [right; n]`; a side whose
/// center falls off the array is all zeros.
#[wasm_bindgen]
pub fn subaperture_apodization(
    num_elements: usize,
    pitch_mm: f64,
    f_number: f64,
    x_mm: f64,
    z_mm: f64,
    alpha_deg: f64,
) -> Result<Vec<f64>, JsError> {
    let array = TransducerArray::new(num_elements, pitch_mm * 1e-3).map_err(js)?;
    let profile = ApodizationProfile::new(&array, f_number);
    let p = Point::new(x_mm * 1e-3, z_mm * 1e-3);
    let t = alpha_deg.to_radians().tan();
    let mut out: Vec<f64> = array.element_x().iter().map(|x| x * 1e3).collect();
    for side in Side::BOTH {
        let w = subaperture_weights(&profile, &array, t, side, p);
        out.extend((0..num_elements).map(|j| w.as_ref().map_or(0.0, |w| w.at(j))));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts() {
        let ps = point_spread(25.0, 12.0, 9.0, false).unwrap_or_else(|_| panic!("point_spread"));
        assert_eq!(ps.len() % 3, 0);
        let n = ps.len() / 3;
        assert!(ps[n..].iter().all(|v| v.abs() <= 1.0));
        let spec = axial_spectrum(25.0, 12.0, 9.0, false).unwrap_or_else(|_| panic!("axial_spectrum"));
        assert_eq!(spec.len() % 4, 0);
        let apod = subaperture_apodization(64, 0.1925, 12.0, 0.0, 25.0, 9.0).unwrap_or_else(|_| panic!("apodization"));
        assert_eq!(apod.len(), 3 * 64);
        let left: f64 = apod[64..128].iter().sum();
        assert!((left - 1.0).abs() < 1e-12);
    }
}
