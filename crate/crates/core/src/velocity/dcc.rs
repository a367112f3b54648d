use super::tac::windows;
use super::{EstimatorConfig, VelocityField};
use crate::beamform::{beamform_points, Beamformer, Side};
use crate::error::{Error, Result};
use crate::geometry::{AcquisitionConfig, ImagingGrid, Point, TransducerArray};
use crate::phantom::RFFrameSet;

/// Number of samples on a directional line of `l_window` wavelengths at
/// `spacing` wavelengths: `2 round(L / 2 / spacing) + 1`.
pub fn line_length(l_window: f64, spacing: f64) -> usize {
    2 * ((l_window / 2.0 / spacing).round() as usize) + 1
}

/// Sample points centered on `center` along `flow_angle_deg` (measured from
/// the depth axis toward `+x`), ordered downstream.
pub fn directional_line(
    center: Point,
    flow_angle_deg: f64,
    l_window: f64,
    spacing: f64,
    wavelength: f64,
) -> Vec<Point> {
    let n = line_length(l_window, spacing);
    let half = (n / 2) as f64;
    let t = flow_angle_deg.to_radians();
    let step = Point::new(t.sin(), t.cos()).scale(spacing * wavelength);
    (0..n)
        .map(|k| center + step.scale(k as f64 - half))
        .collect()
}

/// Pearson correlation of two equal-length sequences; `None` when either has
/// zero variance.
pub fn normalized_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    let d = (saa * sbb).sqrt();
    (d > 0.0).then(|| sab / d)
}

/// Correlation as a function of shift `-max_shift..=max_shift`, averaged
/// over every frame pair `lag` apart. Each line holds the correlation support
/// plus `max_shift` margin samples on both ends; the earlier frame is always
/// read over the central support.
pub fn correlation_function(lines: &[&[f64]], lag: usize, max_shift: usize) -> Option<Vec<f64>> {
    let len = lines.first()?.len();
    if lag == 0 || len <= 2 * max_shift + 1 || lines.iter().any(|l| l.len() != len) {
        return None;
    }
    let support = len - 2 * max_shift;
    let ns = 2 * max_shift + 1;
    let mut acc = vec![0.0; ns];
    let mut count = vec![0usize; ns];
    for f in 0..lines.len().saturating_sub(lag) {
        let a = &lines[f][max_shift..max_shift + support];
        for s in 0..ns {
            let b = &lines[f + lag][s..s + support];
            if let Some(r) = normalized_correlation(a, b) {
                acc[s] += r;
                count[s] += 1;
            }
        }
    }
    if count.contains(&0) {
        return None;
    }
    Some(acc.iter().zip(&count).map(|(a, &c)| a / c as f64).collect())
}

/// Sub-sample position of the maximum by three-point parabolic fit. A
/// correlation of exactly one is already a perfect match and is not refined.
pub fn parabolic_peak(values: &[f64]) -> Option<f64> {
    let (k, _) = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))?;
    if k == 0 || k + 1 == values.len() {
        return Some(k as f64);
    }
    let (ym, y0, yp) = (values[k - 1], values[k], values[k + 1]);
    if y0 >= 1.0 - 1e-12 {
        return Some(k as f64);
    }
    let denom = ym - 2.0 * y0 + yp;
    let delta = if denom.abs() > 0.0 {
        0.5 * (ym - yp) / denom
    } else {
        0.0
    };
    Some(k as f64 + delta.clamp(-0.5, 0.5))
}

/// Displacement in samples between lines `lag` frames apart.
pub fn dcc_shift(lines: &[&[f64]], lag: usize, max_shift: usize) -> Option<f64> {
    let corr = correlation_function(lines, lag, max_shift)?;
    Some(parabolic_peak(&corr)? - max_shift as f64)
}

/// Velocity along the line direction: `shift * spacing * prf / lag`.
pub fn dcc_estimate(
    lines: &[&[f64]],
    lag: usize,
    max_shift: usize,
    spacing_m: f64,
    prf_effective: f64,
) -> Option<f64> {
    Some(dcc_shift(lines, lag, max_shift)? * spacing_m * prf_effective / lag as f64)
}

/// Region outside which directional-line samples are treated as missing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineBounds {
    pub x_min: f64,
    pub x_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

impl LineBounds {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.z >= self.z_min && p.z <= self.z_max
    }
}

const PIXEL_BATCH: usize = 16;

/// Directional cross-correlation velocity at the selected grid pixels.
///
/// Each pixel gets a line along its flow angle, beamformed point by point
/// with the same receive chain as the image. Correlation functions are
/// averaged over the frame pairs of each window; the velocity of each
/// (angle, side) line set is averaged into the pixel estimate. Pixels not in
/// `pixels` stay invalid.
#[allow(clippy::too_many_arguments)]
pub fn dcc_field(
    rf: &RFFrameSet,
    array: &TransducerArray,
    acq: &AcquisitionConfig,
    grid: &ImagingGrid,
    pixels: &[usize],
    flow_angles: &[f64],
    beamformer: Beamformer,
    cfg: &EstimatorConfig,
    bounds: LineBounds,
) -> Result<VelocityField> {
    if pixels.len() != flow_angles.len() {
        return Err(Error::Shape("one flow angle per selected pixel is required".into()));
    }
    cfg.validate()?;
    let prf = rf.prf_effective;
    let (starts, len) = windows(cfg, rf.n_frames, prf)?;
    let lambda = acq.wavelength();
    let ms = cfg.dcc_max_shift;
    let n_core = line_length(cfg.l_window, cfg.dcc_spacing);
    let n_line = n_core + 2 * ms;
    let l_ext = cfg.l_window + 2.0 * ms as f64 * cfg.dcc_spacing;
    let spacing_m = cfg.dcc_spacing * lambda;
    let na = acq.alpha_set.len();

    let mut field = VelocityField::empty(
        grid,
        starts.iter().map(|&s| (s as f64 + len as f64 / 2.0) / prf).collect(),
    );
    for batch in pixels.chunks(PIXEL_BATCH).zip(flow_angles.chunks(PIXEL_BATCH)) {
        let (px, angles) = batch;
        let mut points = Vec::with_capacity(px.len() * n_line);
        for (&p, &a) in px.iter().zip(angles) {
            points.extend(directional_line(grid.pixel(p), a, l_ext, cfg.dcc_spacing, lambda));
        }
        debug_assert_eq!(points.len(), px.len() * n_line);
        let ens = beamform_points(rf, array, acq, &points, &[beamformer])?.remove(0);
        let results = crate::par::map_range(px.len(), |b| {
            let base = b * n_line;
            let inside = (0..n_line).all(|k| bounds.contains(points[base + k]));
            let mut per_window = vec![(0.0, 0usize); starts.len()];
            if !inside {
                return per_window;
            }
            let mut lines = vec![vec![0.0; n_line]; len];
            for a in 0..na {
                for side in Side::BOTH {
                    if !(0..n_line).all(|k| ens.is_valid(base + k, a, side)) {
                        continue;
                    }
                    for (w, &s0) in starts.iter().enumerate() {
                        for (f, line) in lines.iter_mut().enumerate() {
                            for (k, v) in line.iter_mut().enumerate() {
                                *v = ens.series(base + k, a, side)[s0 + f];
                            }
                        }
                        let refs: Vec<&[f64]> = lines.iter().map(|l| l.as_slice()).collect();
                        if let Some(v) = dcc_estimate(&refs, cfg.dcc_lag, ms, spacing_m, prf) {
                            per_window[w].0 += v;
                            per_window[w].1 += 1;
                        }
                    }
                }
            }
            per_window
        });
        for ((&p, &angle), res) in px.iter().zip(angles).zip(results) {
            let t = angle.to_radians();
            for (w, (sum, n)) in res.into_iter().enumerate() {
                if n > 0 {
                    let v = sum / n as f64;
                    field.set(p, w, v * t.sin(), v * t.cos());
                }
            }
        }
    }
    Ok(field)
}
