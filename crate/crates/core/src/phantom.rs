//! Moving point-scatterer phantoms and a plane-wave pulse-echo RF simulator.
//!
//! The forward model is single scattering with no attenuation and no element
//! directivity: every scatterer contributes `amplitude * pulse(t - tau)` to
//! every channel, where `tau` is the plane-wave transmit plus element receive
//! travel time. Sub-sample delays are placed with an 8-tap Kaiser windowed
//! sinc, tabulated over 1024 fractional offsets.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dsp::fractional_delay_taps;
use crate::error::{Error, Result};
use crate::geometry::{AcquisitionConfig, ImagingGrid, Point, TransducerArray};
use crate::par;

/// Analytic flow field driving scatterer motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowFieldSpec {
    /// Poiseuille flow `V_P (1 - r^2 / R^2)` along a straight vessel.
    /// `inclination` is the axis angle from the lateral axis in degrees,
    /// positive tilting toward depth for increasing `x`.
    ParabolicVessel {
        center_depth: f64,
        #[serde(default)]
        center_x: f64,
        radius: f64,
        peak_velocity: f64,
        inclination: f64,
    },
    /// Rigid rotation with angular velocity in rad/s (counter-clockwise in
    /// the `(x, z)` frame).
    RotatingDisk {
        center: (f64, f64),
        radius: f64,
        angular_velocity: f64,
    },
    /// Constant vector; `angle` in degrees from the lateral axis toward depth.
    UniformFlow { speed: f64, angle: f64 },
}

impl FlowFieldSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            FlowFieldSpec::ParabolicVessel {
                radius,
                peak_velocity,
                center_depth,
                ..
            } => {
                let mut errs = Vec::new();
                if !(radius > 0.0) {
                    errs.push(crate::error::ConfigViolation::new("radius", "must be positive"));
                }
                if !(peak_velocity >= 0.0) {
                    errs.push(crate::error::ConfigViolation::new(
                        "peak_velocity",
                        "must be non-negative",
                    ));
                }
                if !(center_depth > 0.0) {
                    errs.push(crate::error::ConfigViolation::new(
                        "center_depth",
                        "must be positive",
                    ));
                }
                if errs.is_empty() {
                    Ok(())
                } else {
                    Err(Error::Config(errs))
                }
            }
            FlowFieldSpec::RotatingDisk { radius, .. } => {
                if radius > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("radius", "must be positive"))
                }
            }
            FlowFieldSpec::UniformFlow { speed, .. } => {
                if speed >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("speed", "must be non-negative"))
                }
            }
        }
    }

    /// Unit vector along the vessel axis, if this is a vessel.
    pub fn vessel_axis(&self) -> Option<Point> {
        match *self {
            FlowFieldSpec::ParabolicVessel { inclination, .. } => {
                let b = inclination.to_radians();
                Some(Point::new(b.cos(), b.sin()))
            }
            _ => None,
        }
    }

    pub fn vessel_center(&self) -> Option<Point> {
        match *self {
            FlowFieldSpec::ParabolicVessel {
                center_depth,
                center_x,
                ..
            } => Some(Point::new(center_x, center_depth)),
            _ => None,
        }
    }

    /// Signed perpendicular distance from the vessel axis.
    pub fn radial_position(&self, p: Point) -> Option<f64> {
        let (c, u) = (self.vessel_center()?, self.vessel_axis()?);
        let d = p - c;
        Some(d.z * u.x - d.x * u.z)
    }

    /// Flow direction at `p` in degrees from the depth axis toward `+x`
    /// (the convention of [`crate::velocity::VelocityField`]).
    pub fn flow_angle_at(&self, p: Point) -> f64 {
        let v = flow_velocity_at(self, p);
        if v.norm() > 0.0 {
            v.x.atan2(v.z).to_degrees()
        } else {
            match self.vessel_axis() {
                Some(u) => u.x.atan2(u.z).to_degrees(),
                None => 0.0,
            }
        }
    }
}

/// Velocity vector `(vx, vz)` in m/s at `p`. Points outside the flow region
/// get the zero vector.
pub fn flow_velocity_at(spec: &FlowFieldSpec, p: Point) -> Point {
    match *spec {
        FlowFieldSpec::ParabolicVessel {
            radius,
            peak_velocity,
            ..
        } => {
            let r = spec.radial_position(p).unwrap_or(f64::INFINITY);
            if r.abs() <= radius {
                let speed = peak_velocity * (1.0 - (r * r) / (radius * radius));
                spec.vessel_axis().unwrap_or_default().scale(speed)
            } else {
                Point::default()
            }
        }
        FlowFieldSpec::RotatingDisk {
            center,
            radius,
            angular_velocity,
        } => {
            let d = p - Point::new(center.0, center.1);
            if d.norm() <= radius {
                Point::new(-angular_velocity * d.z, angular_velocity * d.x)
            } else {
                Point::default()
            }
        }
        FlowFieldSpec::UniformFlow { speed, angle } => {
            let a = angle.to_radians();
            Point::new(speed * a.cos(), speed * a.sin())
        }
    }
}

/// Region in which scatterers are seeded, and how they wrap when they leave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhantomRegion {
    /// Vessel lumen of finite length; scatterers wrap periodically along the
    /// axis, keeping their radial offset.
    VesselSegment {
        center: Point,
        axis: Point,
        radius: f64,
        length: f64,
    },
    Disk { center: Point, radius: f64 },
    /// Axis-aligned box; positions wrap periodically in both directions.
    Rect { x0: f64, x1: f64, z0: f64, z1: f64 },
}

impl PhantomRegion {
    /// Region matching a flow spec. `segment_length` sets the vessel length
    /// (or the box extent for uniform flow).
    pub fn for_flow(spec: &FlowFieldSpec, segment_length: f64) -> Self {
        match *spec {
            FlowFieldSpec::ParabolicVessel { radius, .. } => PhantomRegion::VesselSegment {
                center: spec.vessel_center().unwrap_or_default(),
                axis: spec.vessel_axis().unwrap_or_default(),
                radius,
                length: segment_length,
            },
            FlowFieldSpec::RotatingDisk { center, radius, .. } => PhantomRegion::Disk {
                center: Point::new(center.0, center.1),
                radius,
            },
            FlowFieldSpec::UniformFlow { .. } => PhantomRegion::Rect {
                x0: -segment_length / 2.0,
                x1: segment_length / 2.0,
                z0: 0.0,
                z1: segment_length,
            },
        }
    }

    pub fn area(&self) -> f64 {
        match *self {
            PhantomRegion::VesselSegment { radius, length, .. } => 2.0 * radius * length,
            PhantomRegion::Disk { radius, .. } => PI * radius * radius,
            PhantomRegion::Rect { x0, x1, z0, z1 } => (x1 - x0).max(0.0) * (z1 - z0).max(0.0),
        }
    }

    pub fn contains(&self, p: Point) -> bool {
        match *self {
            PhantomRegion::VesselSegment {
                center,
                axis,
                radius,
                length,
            } => {
                let d = p - center;
                let along = d.dot(axis);
                let across = d.z * axis.x - d.x * axis.z;
                along.abs() <= length / 2.0 + 1e-15 && across.abs() <= radius + 1e-15
            }
            PhantomRegion::Disk { center, radius } => (p - center).norm() <= radius + 1e-15,
            PhantomRegion::Rect { x0, x1, z0, z1 } => {
                p.x >= x0 && p.x <= x1 && p.z >= z0 && p.z <= z1
            }
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Point {
        match *self {
            PhantomRegion::VesselSegment {
                center,
                axis,
                radius,
                length,
            } => {
                let along = (rng.random::<f64>() - 0.5) * length;
                let across = (rng.random::<f64>() - 0.5) * 2.0 * radius;
                let normal = Point::new(-axis.z, axis.x);
                center + axis.scale(along) + normal.scale(across)
            }
            PhantomRegion::Disk { center, radius } => {
                let r = radius * rng.random::<f64>().sqrt();
                let phi = 2.0 * PI * rng.random::<f64>();
                center + Point::new(r * phi.cos(), r * phi.sin())
            }
            PhantomRegion::Rect { x0, x1, z0, z1 } => Point::new(
                x0 + (x1 - x0) * rng.random::<f64>(),
                z0 + (z1 - z0) * rng.random::<f64>(),
            ),
        }
    }

    /// Maps a position that left the region back inside it.
    pub fn wrap(&self, p: Point) -> Point {
        match *self {
            PhantomRegion::VesselSegment {
                center,
                axis,
                length,
                ..
            } => {
                let d = p - center;
                let along = d.dot(axis);
                let wrapped = along - length * ((along + length / 2.0) / length).floor();
                p + axis.scale(wrapped - along)
            }
            PhantomRegion::Disk { .. } => p,
            PhantomRegion::Rect { x0, x1, z0, z1 } => {
                let w = |v: f64, lo: f64, hi: f64| {
                    let span = hi - lo;
                    if span <= 0.0 {
                        v
                    } else {
                        lo + (v - lo).rem_euclid(span)
                    }
                };
                Point::new(w(p.x, x0, x1), w(p.z, z0, z1))
            }
        }
    }
}

/// A snapshot of point scatterers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScattererField {
    pub positions: Vec<Point>,
    pub amplitudes: Vec<f64>,
    pub rng_seed: u64,
    /// Scatterers per cubic wavelength (with a one-wavelength slab thickness).
    pub density: f64,
}

impl ScattererField {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn rms_amplitude(&self) -> f64 {
        if self.amplitudes.is_empty() {
            return 0.0;
        }
        (self.amplitudes.iter().map(|a| a * a).sum::<f64>() / self.amplitudes.len() as f64).sqrt()
    }

    /// Union of two fields (amplitudes and positions concatenated).
    pub fn union(&self, other: &ScattererField) -> ScattererField {
        let mut out = self.clone();
        out.positions.extend_from_slice(&other.positions);
        out.amplitudes.extend_from_slice(&other.amplitudes);
        out
    }
}

/// Seeds `round(density * area / lambda^2)` scatterers uniformly in `region`
/// with standard-normal amplitudes.
pub fn seed_scatterers(
    region: &PhantomRegion,
    density: f64,
    wavelength: f64,
    seed: u64,
) -> Result<ScattererField> {
    if !(density > 0.0) {
        return Err(Error::config("density", "must be positive"));
    }
    let area = region.area();
    if !(area > 0.0) {
        return Err(Error::config("region", "phantom region is empty"));
    }
    let count = (density * area / (wavelength * wavelength)).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions = Vec::with_capacity(count);
    let mut amplitudes = Vec::with_capacity(count);
    for _ in 0..count {
        positions.push(region.sample(&mut rng));
        amplitudes.push(rng.sample::<f64, _>(StandardNormal));
    }
    Ok(ScattererField {
        positions,
        amplitudes,
        rng_seed: seed,
        density,
    })
}

/// Moves every scatterer by `flow_velocity_at(position) * dt` and wraps it
/// back into `region`.
pub fn advance_scatterers(
    field: &ScattererField,
    spec: &FlowFieldSpec,
    region: &PhantomRegion,
    dt: f64,
) -> ScattererField {
    let positions = field
        .positions
        .iter()
        .map(|&p| region.wrap(p + flow_velocity_at(spec, p).scale(dt)))
        .collect();
    ScattererField {
        positions,
        ..field.clone()
    }
}

/// A single strong scatterer moving on a straight line at constant velocity,
/// standing in for an air bubble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    pub start: Point,
    pub velocity: Point,
    pub amplitude: f64,
}

impl Bubble {
    pub fn position_at(&self, t: f64) -> Point {
        self.start + self.velocity.scale(t)
    }
}

/// Builds `num_frames` snapshots, one per pulse emission at `1/prf`
/// intervals. The optional bubble is appended as the last scatterer.
pub fn scatterer_trajectory(
    initial: &ScattererField,
    spec: &FlowFieldSpec,
    region: &PhantomRegion,
    num_frames: usize,
    prf: f64,
    bubble: Option<&Bubble>,
) -> Vec<ScattererField> {
    let dt = 1.0 / prf;
    let mut out = Vec::with_capacity(num_frames);
    let mut current = initial.clone();
    for f in 0..num_frames {
        if f > 0 {
            current = advance_scatterers(&current, spec, region, dt);
        }
        let mut snap = current.clone();
        if let Some(b) = bubble {
            snap.positions.push(b.position_at(f as f64 * dt));
            snap.amplitudes.push(b.amplitude);
        }
        out.push(snap);
    }
    out
}

/// Shape of the receive/transmit impulse response.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ImpulseResponse {
    /// Hanning-weighted single cycle at the center frequency.
    #[default]
    HanningCycle,
    /// Unit impulse (no transducer filtering).
    Delta,
}

/// Two-way pulse sampled at `f_s`, peak-normalized to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Pulse {
    pub samples: Vec<f64>,
    pub sampling_frequency: f64,
}

impl Pulse {
    /// Sample index of the pulse's time reference (its midpoint).
    pub fn center(&self) -> f64 {
        (self.samples.len() as f64 - 1.0) / 2.0
    }

    pub fn half_duration(&self) -> f64 {
        self.samples.len() as f64 / (2.0 * self.sampling_frequency)
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Excitation of `num_tx_cycles` cycles at `f0`, convolved with the transmit
/// and receive impulse responses.
pub fn synth_pulse(cfg: &AcquisitionConfig) -> Pulse {
    synth_pulse_with(cfg, ImpulseResponse::HanningCycle)
}

pub fn synth_pulse_with(cfg: &AcquisitionConfig, ir: ImpulseResponse) -> Pulse {
    let fs = cfg.sampling_frequency;
    let f0 = cfg.center_frequency;
    let per_cycle = fs / f0;
    let n_exc = (cfg.num_tx_cycles as f64 * per_cycle).round() as usize;
    let excitation: Vec<f64> = (0..n_exc)
        .map(|n| (2.0 * PI * f0 * n as f64 / fs).sin())
        .collect();
    let samples = match ir {
        ImpulseResponse::Delta => excitation,
        ImpulseResponse::HanningCycle => {
            let n_ir = per_cycle.round() as usize;
            let h: Vec<f64> = (0..n_ir)
                .map(|n| {
                    let w = 0.5 - 0.5 * (2.0 * PI * (n as f64 + 0.5) / n_ir as f64).cos();
                    w * (2.0 * PI * f0 * n as f64 / fs).sin()
                })
                .collect();
            convolve(&convolve(&excitation, &h), &h)
        }
    };
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let samples = if peak > 0.0 {
        samples.iter().map(|v| v / peak).collect()
    } else {
        samples
    };
    Pulse {
        samples,
        sampling_frequency: fs,
    }
}

/// Raw or resampled channel data laid out as (channel, sample, frame) with
/// frames fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct RFFrameSet {
    pub samples: Vec<f64>,
    pub n_channels: usize,
    pub n_samples: usize,
    pub n_frames: usize,
    pub sampling_frequency: f64,
    /// Time of fast-time sample 0 relative to transmit.
    pub start_time: f64,
    /// Frame rate of the (possibly resampled) slow-time axis.
    pub prf_effective: f64,
}

impl RFFrameSet {
    pub fn zeros(
        n_channels: usize,
        n_samples: usize,
        n_frames: usize,
        sampling_frequency: f64,
        start_time: f64,
        prf_effective: f64,
    ) -> Self {
        Self {
            samples: vec![0.0; n_channels * n_samples * n_frames],
            n_channels,
            n_samples,
            n_frames,
            sampling_frequency,
            start_time,
            prf_effective,
        }
    }

    #[inline]
    pub fn index(&self, channel: usize, sample: usize, frame: usize) -> usize {
        (channel * self.n_samples + sample) * self.n_frames + frame
    }

    #[inline]
    pub fn get(&self, channel: usize, sample: usize, frame: usize) -> f64 {
        self.samples[self.index(channel, sample, frame)]
    }

    /// All frames of one fast-time sample of one channel.
    #[inline]
    pub fn frames(&self, channel: usize, sample: usize) -> &[f64] {
        let i = self.index(channel, sample, 0);
        &self.samples[i..i + self.n_frames]
    }

    /// Fast-time trace of one channel in one frame.
    pub fn trace(&self, channel: usize, frame: usize) -> Vec<f64> {
        (0..self.n_samples)
            .map(|s| self.get(channel, s, frame))
            .collect()
    }

    pub fn end_time(&self) -> f64 {
        self.start_time + self.n_samples as f64 / self.sampling_frequency
    }
}

/// Fast-time acquisition window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RfWindow {
    pub start_time: f64,
    pub n_samples: usize,
}

impl RfWindow {
    /// Window covering every element-to-pixel round trip of `grid`, padded by
    /// the pulse half duration plus `margin` seconds on both ends.
    pub fn covering(
        array: &TransducerArray,
        grid: &ImagingGrid,
        cfg: &AcquisitionConfig,
        pulse: &Pulse,
        margin: f64,
    ) -> Self {
        Self::covering_points(array, &grid.points(), cfg, pulse, margin)
    }

    pub fn covering_points(
        array: &TransducerArray,
        points: &[Point],
        cfg: &AcquisitionConfig,
        pulse: &Pulse,
        margin: f64,
    ) -> Self {
        let c = cfg.sound_speed;
        let mut lo = f64::INFINITY;
        let mut hi: f64 = 0.0;
        for p in points {
            for &xe in array.element_x() {
                let tau = (p.z + (xe - p.x).hypot(p.z)) / c;
                lo = lo.min(tau);
                hi = hi.max(tau);
            }
        }
        let pad = pulse.half_duration() + margin;
        let start_time = (lo - pad).max(0.0);
        let fs = cfg.sampling_frequency;
        let n_samples = ((hi + pad - start_time) * fs).ceil() as usize + 1;
        Self {
            start_time,
            n_samples,
        }
    }
}

/// Geometric spreading applied on receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spreading {
    #[default]
    None,
    /// Amplitude scaled by `1 / r` (r in meters) on the receive path.
    InverseDistance,
}

const FRAC_STEPS: usize = 1024;
const FD_HALF_WIDTH: usize = 4;
const FD_BETA: f64 = 5.0;

/// Pulse pre-shifted by every tabulated fractional offset.
struct ShiftedPulses {
    len: usize,
    table: Vec<f64>,
}

impl ShiftedPulses {
    fn new(pulse: &Pulse) -> Self {
        let lp = pulse.samples.len();
        let len = lp + 2 * FD_HALF_WIDTH - 1;
        let mut table = vec![0.0; FRAC_STEPS * len];
        for q in 0..FRAC_STEPS {
            let frac = q as f64 / FRAC_STEPS as f64;
            let taps = fractional_delay_taps(frac, FD_HALF_WIDTH, FD_BETA);
            // y[n0 + j] = sum_m pulse[m] * tap[k] with j = m + k - (hw - 1)
            let row = &mut table[q * len..(q + 1) * len];
            for (m, &pv) in pulse.samples.iter().enumerate() {
                for (k, &t) in taps.iter().enumerate() {
                    row[m + k] += pv * t;
                }
            }
        }
        Self { len, table }
    }

    /// Returns the shifted pulse and the offset of its first sample relative
    /// to the integer part of the delay.
    fn row(&self, frac: f64) -> &[f64] {
        let q = ((frac * FRAC_STEPS as f64).round() as usize).min(FRAC_STEPS - 1);
        &self.table[q * self.len..(q + 1) * self.len]
    }
}

/// Simulates one non-steered plane-wave emission per snapshot.
pub fn simulate_rf(
    trajectory: &[ScattererField],
    array: &TransducerArray,
    cfg: &AcquisitionConfig,
    window: RfWindow,
    spreading: Spreading,
) -> Result<RFFrameSet> {
    if trajectory.len() != cfg.num_frames {
        return Err(Error::Shape(format!(
            "trajectory has {} snapshots, config expects {} frames",
            trajectory.len(),
            cfg.num_frames
        )));
    }
    let pulse = synth_pulse(cfg);
    simulate_rf_with_pulse(trajectory, array, cfg, window, spreading, &pulse)
}

pub fn simulate_rf_with_pulse(
    trajectory: &[ScattererField],
    array: &TransducerArray,
    cfg: &AcquisitionConfig,
    window: RfWindow,
    spreading: Spreading,
    pulse: &Pulse,
) -> Result<RFFrameSet> {
    let nc = array.num_elements();
    let ns = window.n_samples;
    let nf = trajectory.len();
    let fs = cfg.sampling_frequency;
    let c = cfg.sound_speed;
    let shifted = ShiftedPulses::new(pulse);
    let center = pulse.center();
    let lead = FD_HALF_WIDTH as isize - 1;

    let frames: Vec<Vec<f64>> = par::map_range(nf, |f| {
        let snap = &trajectory[f];
        let mut buf = vec![0.0; nc * ns];
        for (pos, &amp) in snap.positions.iter().zip(&snap.amplitudes) {
            if amp == 0.0 || pos.z <= 0.0 {
                continue;
            }
            for (ch, &xe) in array.element_x().iter().enumerate() {
                let r_rx = (xe - pos.x).hypot(pos.z);
                let tau = (pos.z + r_rx) / c;
                let a = match spreading {
                    Spreading::None => amp,
                    Spreading::InverseDistance => amp / r_rx,
                };
                let t = (tau - window.start_time) * fs - center;
                let n0 = t.floor();
                let frac = t - n0;
                let first = n0 as isize - lead;
                let row = shifted.row(frac);
                let lo = (-first).max(0) as usize;
                let hi = ((ns as isize - first).min(shifted.len as isize)).max(0) as usize;
                if lo >= hi {
                    continue;
                }
                let out = &mut buf[ch * ns..(ch + 1) * ns];
                let base = (first + lo as isize) as usize;
                for (o, v) in out[base..base + (hi - lo)].iter_mut().zip(&row[lo..hi]) {
                    *o += a * v;
                }
            }
        }
        buf
    });

    let mut rf = RFFrameSet::zeros(nc, ns, nf, fs, window.start_time, cfg.prf);
    for (f, buf) in frames.iter().enumerate() {
        for ch in 0..nc {
            for s in 0..ns {
                let i = rf.index(ch, s, f);
                rf.samples[i] = buf[ch * ns + s];
            }
        }
    }
    Ok(rf)
}
