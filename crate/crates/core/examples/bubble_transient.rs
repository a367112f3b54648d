//! Speed transient caused by a strong scatterer crossing the vessel.
//!
//! `cargo run --release --example bubble_transient -- [--signed-sqrt] [--trace] [seed]`

use nlhr_core::beamform::{Beamformer, MasMode};
use nlhr_core::experiment::{transient_traces, BubbleSpec, ExperimentSpec};

fn main() -> nlhr_core::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let flag = |f: &str| args.iter().any(|a| a == f);
    let mut spec = ExperimentSpec::desk();
    if let Some(seed) = args.iter().find_map(|a| a.parse().ok()) {
        spec.seed = seed;
    }
    spec.bubble = Some(BubbleSpec::default());
    spec.estimator.hop = Some(1.0 / (spec.acquisition.prf * spec.resample.temporal as f64));
    let mode = if flag("--signed-sqrt") {
        MasMode::SignedSqrt
    } else {
        MasMode::Product
    };
    for t in transient_traces(&spec, &[Beamformer::Das, Beamformer::Mas(mode)])? {
        let peak = t.deviation.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
        println!(
            "{}: pixel ({:.3} mm, {:.3} mm) peak deviation {:.4} m/s, FWHM {} ms",
            t.beamformer,
            t.pixel.x * 1e3,
            t.pixel.z * 1e3,
            peak,
            t.fwhm.map_or("n/a".into(), |w| format!("{:.3}", w * 1e3))
        );
        if flag("--trace") {
            print!("{}", t.to_csv());
        }
    }
    Ok(())
}
