use nlhr_core::beamform::{bandpass_2f0, beamform_grid, resample_rf, Beamformer, MasMode, Side};
use nlhr_core::dsp::spectral_centroid;
use nlhr_core::experiment::ExperimentSpec;
use nlhr_core::phantom::{simulate_rf, synth_pulse, RfWindow, ScattererField, Spreading};
use nlhr_core::{ImagingGrid, Point};
use proptest::prelude::*;

/// Axial spectral centroids `(DAS, band-passed NLHR)` of the line through a
/// single point target, in units of the center frequency.
fn centroids(target: Point) -> (f64, f64) {
    let mut spec = ExperimentSpec::desk();
    spec.acquisition.num_frames = 2;
    spec.acquisition.alpha_set = vec![6.0];
    let acq = &spec.acquisition;
    let array = spec.transducer().unwrap();
    let dz = acq.wavelength() / 16.0;
    let grid = ImagingGrid::uniform((target.x, target.x), 1.0, (target.z - 1.5e-3, target.z + 1.5e-3), dz).unwrap();
    let field = ScattererField {
        positions: vec![target],
        amplitudes: vec![1.0],
        rng_seed: 0,
        density: 0.0,
    };
    let window = RfWindow::covering(&array, &grid, acq, &synth_pulse(acq), 1e-6);
    let rf = simulate_rf(&vec![field; 2], &array, acq, window, Spreading::None).unwrap();
    let rf = resample_rf(&rf, 2, 1).unwrap();
    let ens = beamform_grid(&rf, &array, acq, &grid, &[Beamformer::Das, Beamformer::Mas(MasMode::Product)]).unwrap();
    let nlhr = bandpass_2f0(&ens[1], &grid, acq).unwrap();
    let fs = acq.sound_speed / (2.0 * dz);
    let line = |e: &nlhr_core::beamform::SubApertureEnsemble| -> Vec<f64> {
        (0..grid.nz()).map(|iz| e.series(iz, 0, Side::Left)[0]).collect()
    };
    let f0 = acq.center_frequency;
    (spectral_centroid(&line(&ens[0]), fs) / f0, spectral_centroid(&line(&nlhr), fs) / f0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]
    #[test]
    fn nlhr_doubles_the_axial_frequency(x in -1e-3f64..1e-3, z in 0.018f64..0.03) {
        let (das, nlhr) = centroids(Point::new(x, z));
        prop_assert!((das - 1.0).abs() <= 0.1, "DAS centroid {das} f0");
        prop_assert!((nlhr - 2.0).abs() <= 0.2, "NLHR centroid {nlhr} f0");
    }
}
