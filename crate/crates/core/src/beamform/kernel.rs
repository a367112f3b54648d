use serde::{Deserialize, Serialize};

use super::apodization::{ApodizationProfile, GaussianWeights};
use super::combine::{signed_sqrt, MasMode};
use super::delays::{plane_wave_delay, DelayTable};
use crate::error::{Error, Result};
use crate::geometry::{AcquisitionConfig, ImagingGrid, Point, TransducerArray};
use crate::phantom::RFFrameSet;

/// Sub-aperture side. The left aperture is centered at `x - z tan(alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn index(self) -> usize {
        match self {
            Side::Left => 0,
            Side::Right => 1,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Side::Left => -1.0,
            Side::Right => 1.0,
        }
    }
}

/// How the weighted sub-aperture channels are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Beamformer {
    Das,
    Mas(MasMode),
}

impl Beamformer {
    pub fn is_nonlinear(self) -> bool {
        matches!(self, Beamformer::Mas(_))
    }

    pub fn tag(self) -> &'static str {
        match self {
            Beamformer::Das => "das",
            Beamformer::Mas(_) => "nlhr",
        }
    }

    /// Carrier of the beamformed output: `f0` for DAS, `2 f0` for MAS.
    pub fn output_frequency(self, f0: f64) -> f64 {
        if self.is_nonlinear() {
            2.0 * f0
        } else {
            f0
        }
    }
}

/// Per-pixel channel-directive beams `s_i(p)` for every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBeamCube {
    pub n_channels: usize,
    pub n_pixels: usize,
    pub n_frames: usize,
    /// `values[(channel * n_pixels + pixel) * n_frames + frame]`.
    pub values: Vec<f64>,
}

impl ChannelBeamCube {
    pub fn series(&self, channel: usize, pixel: usize) -> &[f64] {
        let i = (channel * self.n_pixels + pixel) * self.n_frames;
        &self.values[i..i + self.n_frames]
    }
}

/// Sub-aperture weighted channel signals `A_i` of one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedChannels {
    pub first_channel: usize,
    pub n_channels: usize,
    pub n_frames: usize,
    /// `values[channel_offset * n_frames + frame]`.
    pub values: Vec<f64>,
}

impl WeightedChannels {
    /// The channel vector of one frame.
    pub fn frame(&self, frame: usize) -> Vec<f64> {
        (0..self.n_channels)
            .map(|c| self.values[c * self.n_frames + frame])
            .collect()
    }
}

/// Left and right sub-aperture signals per pixel; `None` marks a pixel whose
/// sub-aperture center falls outside the array.
#[derive(Debug, Clone, PartialEq)]
pub struct SubAperturePair {
    pub left: Vec<Option<WeightedChannels>>,
    pub right: Vec<Option<WeightedChannels>>,
}

/// Beamformed left/right sub-aperture series for every steering angle.
#[derive(Debug, Clone, PartialEq)]
pub struct SubApertureEnsemble {
    pub beamformer: Beamformer,
    pub alphas: Vec<f64>,
    pub n_points: usize,
    pub n_frames: usize,
    /// `(nx, nz)` when the points are an [`ImagingGrid`] in its pixel order.
    pub grid_shape: Option<(usize, usize)>,
    pub center_frequency_out: f64,
    pub prf_effective: f64,
    /// Point-major: `values[((point * n_alpha + alpha) * 2 + side) * n_frames + frame]`.
    pub values: Vec<f64>,
    /// `valid[(point * n_alpha + alpha) * 2 + side]`.
    pub valid: Vec<bool>,
}

impl SubApertureEnsemble {
    pub fn n_alpha(&self) -> usize {
        self.alphas.len()
    }

    #[inline]
    pub fn slot(&self, point: usize, alpha: usize, side: Side) -> usize {
        (point * self.alphas.len() + alpha) * 2 + side.index()
    }

    pub fn series(&self, point: usize, alpha: usize, side: Side) -> &[f64] {
        let i = self.slot(point, alpha, side) * self.n_frames;
        &self.values[i..i + self.n_frames]
    }

    pub fn series_mut(&mut self, point: usize, alpha: usize, side: Side) -> &mut [f64] {
        let i = self.slot(point, alpha, side) * self.n_frames;
        &mut self.values[i..i + self.n_frames]
    }

    pub fn is_valid(&self, point: usize, alpha: usize, side: Side) -> bool {
        self.valid[self.slot(point, alpha, side)]
    }
}

/// Linearly interpolated samples of channel `ch` at delay `tau`, all frames.
fn fetch(rf: &RFFrameSet, ch: usize, tau: f64, out: &mut [f64]) {
    let u = (tau - rf.start_time) * rf.sampling_frequency;
    let last = rf.n_samples as f64 - 1.0;
    if !(u >= 0.0 && u <= last) {
        out.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let s0 = u.floor() as usize;
    let w = u - s0 as f64;
    let a = rf.frames(ch, s0);
    if s0 + 1 >= rf.n_samples {
        out.copy_from_slice(a);
        return;
    }
    let b = rf.frames(ch, s0 + 1);
    for ((o, &x), &y) in out.iter_mut().zip(a).zip(b) {
        *o = x + (y - x) * w;
    }
}

fn directive_weights(profile: &ApodizationProfile, array: &TransducerArray, i: usize, p: Point) -> GaussianWeights {
    profile.weights(i, (array.element_x()[i] - p.x).hypot(p.z))
}

/// Gaussian weights of the left or right sub-aperture seen from `p` at
/// steering `tan_alpha`, centered on the element nearest `x -/+ z tan(alpha)`.
/// `None` when that center falls outside the array.
pub fn subaperture_weights(
    profile: &ApodizationProfile,
    array: &TransducerArray,
    tan_alpha: f64,
    side: Side,
    p: Point,
) -> Option<GaussianWeights> {
    let center = array.nearest_element(p.x + side.sign() * p.z * tan_alpha)?;
    Some(profile.weights(center, (array.element_x()[center] - p.x).hypot(p.z)))
}

/// Computes `s_i(p) = sum_j W_{i,p}(j) e_j(tau_{j,p})` for every pixel of
/// the delay table.
pub fn channel_directive_beams(
    rf: &RFFrameSet,
    delays: &DelayTable,
    array: &TransducerArray,
    f_number: f64,
) -> Result<ChannelBeamCube> {
    let nc = array.num_elements();
    if rf.n_channels != nc || delays.n_channels() != nc {
        return Err(Error::Shape(format!(
            "channel count mismatch: rf {}, delays {}, array {nc}",
            rf.n_channels,
            delays.n_channels()
        )));
    }
    let profile = ApodizationProfile::new(array, f_number);
    let (np, nf) = (delays.n_pixels(), rf.n_frames);
    let mut values = vec![0.0; nc * np * nf];
    let mut row = vec![0.0; nf];
    for p in 0..np {
        let pt = delays.points()[p];
        for i in 0..nc {
            let w = directive_weights(&profile, array, i, pt);
            let dst = (i * np + p) * nf;
            for j in w.range() {
                fetch(rf, j, delays.get(j, p), &mut row);
                let wj = w.at(j);
                for (d, r) in values[dst..dst + nf].iter_mut().zip(&row) {
                    *d += wj * r;
                }
            }
        }
    }
    Ok(ChannelBeamCube {
        n_channels: nc,
        n_pixels: np,
        n_frames: nf,
        values,
    })
}

/// Applies the left and right sub-aperture Gaussian weights for steering
/// angle `alpha` (degrees) to the directive beams of every pixel.
pub fn form_subapertures(
    cube: &ChannelBeamCube,
    alpha: f64,
    grid: &ImagingGrid,
    array: &TransducerArray,
    f_number: f64,
) -> SubAperturePair {
    let profile = ApodizationProfile::new(array, f_number);
    let t = alpha.to_radians().tan();
    let nf = cube.n_frames;
    let build = |side: Side| -> Vec<Option<WeightedChannels>> {
        (0..grid.num_pixels())
            .map(|p| {
                let w = subaperture_weights(&profile, array, t, side, grid.pixel(p))?;
                let mut values = Vec::with_capacity(w.len() * nf);
                for (k, i) in w.range().enumerate() {
                    values.extend(cube.series(i, p).iter().map(|v| w.weights[k] * v));
                }
                Some(WeightedChannels {
                    first_channel: w.first,
                    n_channels: w.len(),
                    n_frames: nf,
                    values,
                })
            })
            .collect()
    };
    SubAperturePair {
        left: build(Side::Left),
        right: build(Side::Right),
    }
}

struct Kernel<'a> {
    rf: &'a RFFrameSet,
    array: &'a TransducerArray,
    profile: ApodizationProfile,
    c: f64,
    tan_alpha: Vec<f64>,
    beamformers: &'a [Beamformer],
}

struct PointOutput {
    /// One block `[alpha][side][frame]` per beamformer.
    values: Vec<Vec<f64>>,
    valid: Vec<Vec<bool>>,
}

impl Kernel<'_> {
    fn run(&self, p: Point) -> PointOutput {
        let nf = self.rf.n_frames;
        let nc = self.array.num_elements();
        let na = self.tan_alpha.len();
        let nb = self.beamformers.len();
        let mut out = PointOutput {
            values: vec![vec![0.0; na * 2 * nf]; nb],
            valid: vec![vec![false; na * 2]; nb],
        };
        if !(p.z > 0.0) {
            return out;
        }

        let subs: Vec<Option<GaussianWeights>> = self
            .tan_alpha
            .iter()
            .flat_map(|&t| {
                Side::BOTH
                    .map(|side| subaperture_weights(&self.profile, self.array, t, side, p))
            })
            .collect();

        let mut need_beam = vec![false; nc];
        for w in subs.iter().flatten() {
            need_beam[w.range()].iter_mut().for_each(|v| *v = true);
        }
        let beams: Vec<Option<GaussianWeights>> = (0..nc)
            .map(|i| need_beam[i].then(|| directive_weights(&self.profile, self.array, i, p)))
            .collect();
        let mut need_channel = vec![false; nc];
        for w in beams.iter().flatten() {
            need_channel[w.range()].iter_mut().for_each(|v| *v = true);
        }

        let mut echoes = vec![0.0; nc * nf];
        for j in (0..nc).filter(|&j| need_channel[j]) {
            let tau = plane_wave_delay(self.array.element_x()[j], p, self.c);
            fetch(self.rf, j, tau, &mut echoes[j * nf..(j + 1) * nf]);
        }
        let mut s = vec![0.0; nc * nf];
        for (i, w) in beams.iter().enumerate() {
            let Some(w) = w else { continue };
            let dst = &mut s[i * nf..(i + 1) * nf];
            for (k, j) in w.range().enumerate() {
                let wj = w.weights[k];
                for (d, e) in dst.iter_mut().zip(&echoes[j * nf..(j + 1) * nf]) {
                    *d += wj * e;
                }
            }
        }

        let mut sum = vec![0.0; nf];
        let mut sum_sq = vec![0.0; nf];
        for (slot, w) in subs.iter().enumerate() {
            let Some(w) = w else { continue };
            for (b, bf) in self.beamformers.iter().enumerate() {
                let transform = match bf {
                    Beamformer::Das | Beamformer::Mas(MasMode::Product) => None,
                    Beamformer::Mas(MasMode::SignedSqrt) => Some(signed_sqrt as fn(f64) -> f64),
                };
                sum.iter_mut().for_each(|v| *v = 0.0);
                sum_sq.iter_mut().for_each(|v| *v = 0.0);
                for (k, i) in w.range().enumerate() {
                    let wi = w.weights[k];
                    let si = &s[i * nf..(i + 1) * nf];
                    for f in 0..nf {
                        let a = wi * si[f];
                        let a = match transform {
                            Some(t) => t(a),
                            None => a,
                        };
                        sum[f] += a;
                        sum_sq[f] += a * a;
                    }
                }
                let dst = &mut out.values[b][slot * nf..(slot + 1) * nf];
                match bf {
                    Beamformer::Das => {
                        dst.copy_from_slice(&sum);
                        out.valid[b][slot] = true;
                    }
                    Beamformer::Mas(_) => {
                        if w.len() >= 2 {
                            for f in 0..nf {
                                dst[f] = 0.5 * (sum[f] * sum[f] - sum_sq[f]);
                            }
                            out.valid[b][slot] = true;
                        }
                    }
                }
            }
        }
        out
    }
}

const POINT_BATCH: usize = 256;

/// Fused receive chain evaluated at arbitrary points: directive beams,
/// sub-apertures for every configured angle, and each requested combiner.
/// Returns one ensemble per entry of `beamformers`, sharing the directive
/// beam computation.
pub fn beamform_points(
    rf: &RFFrameSet,
    array: &TransducerArray,
    cfg: &AcquisitionConfig,
    points: &[Point],
    beamformers: &[Beamformer],
) -> Result<Vec<SubApertureEnsemble>> {
    if rf.n_channels != array.num_elements() {
        return Err(Error::Shape(format!(
            "rf has {} channels, array has {}",
            rf.n_channels,
            array.num_elements()
        )));
    }
    let kernel = Kernel {
        rf,
        array,
        profile: ApodizationProfile::new(array, cfg.f_number),
        c: cfg.sound_speed,
        tan_alpha: cfg.alpha_radians().iter().map(|a| a.tan()).collect(),
        beamformers,
    };
    let na = cfg.alpha_set.len();
    let nf = rf.n_frames;
    let block = na * 2 * nf;
    let mut ensembles: Vec<SubApertureEnsemble> = beamformers
        .iter()
        .map(|&bf| SubApertureEnsemble {
            beamformer: bf,
            alphas: cfg.alpha_set.clone(),
            n_points: points.len(),
            n_frames: nf,
            grid_shape: None,
            center_frequency_out: bf.output_frequency(cfg.center_frequency),
            prf_effective: rf.prf_effective,
            values: vec![0.0; points.len() * block],
            valid: vec![false; points.len() * na * 2],
        })
        .collect();
    for start in (0..points.len()).step_by(POINT_BATCH) {
        let end = (start + POINT_BATCH).min(points.len());
        let batch = crate::par::map_range(end - start, |k| kernel.run(points[start + k]));
        for (k, po) in batch.into_iter().enumerate() {
            let p = start + k;
            for (b, ens) in ensembles.iter_mut().enumerate() {
                ens.values[p * block..(p + 1) * block].copy_from_slice(&po.values[b]);
                ens.valid[p * na * 2..(p + 1) * na * 2].copy_from_slice(&po.valid[b]);
            }
        }
    }
    Ok(ensembles)
}

/// [`beamform_points`] over every pixel of `grid`, remembering the grid shape
/// for the axial filtering stages.
pub fn beamform_grid(
    rf: &RFFrameSet,
    array: &TransducerArray,
    cfg: &AcquisitionConfig,
    grid: &ImagingGrid,
    beamformers: &[Beamformer],
) -> Result<Vec<SubApertureEnsemble>> {
    let mut out = beamform_points(rf, array, cfg, &grid.points(), beamformers)?;
    for e in &mut out {
        e.grid_shape = Some((grid.nx(), grid.nz()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::{compute_delays, das_beamform, mas_beamform};
    use crate::phantom::{simulate_rf, RfWindow, ScattererField, Spreading};

    fn small_setup(n_elements: usize) -> (TransducerArray, AcquisitionConfig) {
        let array = TransducerArray::new(n_elements, 0.1925e-3).unwrap();
        let mut cfg = AcquisitionConfig::table_simulation();
        cfg.sampling_frequency = 80e6;
        cfg.num_frames = 3;
        cfg.f_number = 4.0;
        cfg.alpha_set = vec![10.0];
        (array, cfg)
    }

    fn point_rf(array: &TransducerArray, cfg: &AcquisitionConfig, target: Point) -> RFFrameSet {
        let field = ScattererField {
            positions: vec![target],
            amplitudes: vec![1.0],
            rng_seed: 0,
            density: 1.0,
        };
        let traj = vec![field; cfg.num_frames];
        let window = RfWindow {
            start_time: 2.0 * 0.004 / cfg.sound_speed,
            n_samples: 900,
        };
        simulate_rf(&traj, array, cfg, window, Spreading::None).unwrap()
    }

    #[test]
    fn single_channel_beam_is_the_delayed_echo() {
        let array = TransducerArray::single_element(0.2e-3);
        let mut rf = RFFrameSet::zeros(1, 100, 2, 10e6, 0.0, 1e3);
        for s in 0..100 {
            for f in 0..2 {
                let i = rf.index(0, s, f);
                rf.samples[i] = s as f64 + 100.0 * f as f64;
            }
        }
        let grid = ImagingGrid::new(vec![0.0], vec![0.001]).unwrap();
        let delays = compute_delays(&array, &grid, 1540.0);
        let cube = channel_directive_beams(&rf, &delays, &array, 1.0).unwrap();
        let u = delays.get(0, 0) * 10e6;
        assert!((cube.series(0, 0)[0] - u).abs() < 1e-9);
        assert!((cube.series(0, 0)[1] - u - 100.0).abs() < 1e-9);
    }

    #[test]
    fn constant_signal_gives_weight_sum_times_value() {
        let array = TransducerArray::new(16, 0.2e-3).unwrap();
        let mut rf = RFFrameSet::zeros(16, 400, 2, 20e6, 0.0, 1e3);
        rf.samples.iter_mut().for_each(|v| *v = 2.5);
        let grid = ImagingGrid::uniform((-1e-3, 1e-3), 0.5e-3, (4e-3, 6e-3), 1e-3).unwrap();
        let delays = compute_delays(&array, &grid, 1540.0);
        let cube = channel_directive_beams(&rf, &delays, &array, 1.25).unwrap();
        assert!(cube.values.iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn delays_beyond_window_contribute_zero() {
        let array = TransducerArray::new(4, 0.2e-3).unwrap();
        let mut rf = RFFrameSet::zeros(4, 10, 2, 20e6, 0.0, 1e3);
        rf.samples.iter_mut().for_each(|v| *v = 1.0);
        let grid = ImagingGrid::new(vec![0.0], vec![0.05]).unwrap();
        let delays = compute_delays(&array, &grid, 1540.0);
        let cube = channel_directive_beams(&rf, &delays, &array, 1.25).unwrap();
        assert!(cube.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn point_target_beam_envelope_peaks_at_target_depth() {
        // A single-cycle excitation keeps the envelope sharply peaked.
        let (array, mut cfg) = small_setup(32);
        cfg.num_tx_cycles = 1;
        let target = Point::new(0.0, 0.006);
        let rf = point_rf(&array, &cfg, target);
        let lambda = cfg.wavelength();
        let dz = lambda / 16.0;
        let zs: Vec<f64> = (-64..=64).map(|k| target.z + k as f64 * dz).collect();
        let grid = ImagingGrid::new(vec![0.0], zs).unwrap();
        let delays = compute_delays(&array, &grid, cfg.sound_speed);
        let cube = channel_directive_beams(&rf, &delays, &array, cfg.f_number).unwrap();
        let mut planner = rustfft::FftPlanner::new();
        for i in 0..32 {
            let line: Vec<f64> = (0..grid.num_pixels()).map(|p| cube.series(i, p)[0]).collect();
            let env = crate::dsp::analytic_signal(&line, &mut planner);
            let best = (0..env.len())
                .max_by(|&a, &b| env[a].norm().partial_cmp(&env[b].norm()).unwrap())
                .unwrap();
            assert!((grid.pixel(best).z - target.z).abs() <= 2.0 * dz + 1e-12, "beam {i} best {best}");
        }
    }

    #[test]
    fn subaperture_center_geometry_and_masking() {
        let array = TransducerArray::new(64, 0.2e-3).unwrap();
        let z: f64 = 0.01;
        // z tan(alpha) = 3 pitch
        let alpha = (3.0 * 0.2e-3 / z).atan().to_degrees();
        let x = array.element_x()[30];
        let grid = ImagingGrid::new(vec![x, array.element_x()[63]], vec![z]).unwrap();
        let mut rf = RFFrameSet::zeros(64, 10, 1, 20e6, 0.0, 1e3);
        rf.samples.iter_mut().for_each(|v| *v = 1.0);
        let delays = compute_delays(&array, &grid, 1540.0);
        let cube = channel_directive_beams(&rf, &delays, &array, 100.0).unwrap();
        let pair = form_subapertures(&cube, alpha, &grid, &array, 100.0);
        // F_n 100 makes the sub-aperture a single element: its center.
        assert_eq!(pair.left[0].as_ref().unwrap().first_channel, 27);
        assert_eq!(pair.right[0].as_ref().unwrap().first_channel, 33);
        let big = form_subapertures(&cube, 40.0, &grid, &array, 1.25);
        assert!(big.right[1].is_none());
        assert!(big.left[1].is_some());
    }

    #[test]
    fn centered_pixel_has_mirrored_weights() {
        let array = TransducerArray::new(64, 0.2e-3).unwrap();
        let profile = ApodizationProfile::new(&array, 1.25);
        let p = Point::new(0.0, 0.01);
        let t = 12f64.to_radians().tan();
        let l = subaperture_weights(&profile, &array, t, Side::Left, p).unwrap();
        let r = subaperture_weights(&profile, &array, t, Side::Right, p).unwrap();
        assert_eq!(l.len(), r.len());
        for (a, b) in l.range().zip(r.range().rev()) {
            assert_eq!(a, 63 - b);
            assert!((l.at(a) - r.at(b)).abs() < 1e-15);
        }
    }

    #[test]
    fn fused_kernel_matches_step_by_step_chain() {
        let (array, mut cfg) = small_setup(24);
        cfg.alpha_set = vec![6.0, 15.0];
        let rf = point_rf(&array, &cfg, Point::new(0.2e-3, 0.006));
        let grid = ImagingGrid::uniform((-0.6e-3, 0.6e-3), 0.3e-3, (0.0058, 0.0062), 0.05e-3).unwrap();
        let delays = compute_delays(&array, &grid, cfg.sound_speed);
        let cube = channel_directive_beams(&rf, &delays, &array, cfg.f_number).unwrap();
        let kinds = [
            Beamformer::Das,
            Beamformer::Mas(MasMode::Product),
            Beamformer::Mas(MasMode::SignedSqrt),
        ];
        let fused = beamform_grid(&rf, &array, &cfg, &grid, &kinds).unwrap();
        for (ai, &alpha) in cfg.alpha_set.iter().enumerate() {
            let pair = form_subapertures(&cube, alpha, &grid, &array, cfg.f_number);
            for side in Side::BOTH {
                let chans = if side == Side::Left { &pair.left } else { &pair.right };
                for (p, chan) in chans.iter().enumerate() {
                    for (b, ens) in fused.iter().enumerate() {
                        assert_eq!(ens.is_valid(p, ai, side), chan.is_some());
                        let Some(wc) = chan else { continue };
                        for f in 0..cfg.num_frames {
                            let a = wc.frame(f);
                            let expect = match kinds[b] {
                                Beamformer::Das => das_beamform(&a),
                                Beamformer::Mas(m) => mas_beamform(&a, m).unwrap(),
                            };
                            let got = ens.series(p, ai, side)[f];
                            assert!((got - expect).abs() <= 1e-9 * expect.abs().max(1e-6), "{got} {expect}");
                        }
                    }
                }
            }
        }
    }
}
