//! Receive chain: resampling, delay tables, channel-directive beams,
//! left/right sub-apertures, DAS and multiply-and-sum combination, and the
//! band-pass plus demodulation that feed the velocity estimators.
//!
//! The per-pixel chain is fused in [`beamform_points`] so the full
//! channel-beam cube never has to be held in memory; the step-by-step
//! functions ([`channel_directive_beams`], [`form_subapertures`]) exist for
//! inspection and testing on small problems.

mod apodization;
mod bandpass;
mod combine;
mod delays;
mod kernel;
mod resample;

pub use apodization::{ApodizationProfile, GaussianWeights};
pub use bandpass::{bandpass_2f0, nlhr_bandpass_filter, to_slowtime_ensemble, SlowTimeEnsemble};
pub use combine::{das_beamform, mas_beamform, multiplication_count, MasMode};
pub use delays::{compute_delays, plane_wave_delay, DelayTable};
pub use kernel::{
    beamform_grid, beamform_points, channel_directive_beams, form_subapertures, subaperture_weights, Beamformer,
    ChannelBeamCube, Side, SubApertureEnsemble, SubAperturePair, WeightedChannels,
};
pub use resample::resample_rf;
