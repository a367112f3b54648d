use num_complex::Complex64;

use super::kasai::frequency_from_r1;
use super::{EstimatorConfig, VelocityField};
use crate::beamform::{Side, SlowTimeEnsemble};
use crate::error::{Error, Result};
use crate::geometry::ImagingGrid;

/// Inverts the left/right Doppler pair of one steering angle into
/// `(axial, lateral)` velocity. Axial is positive with depth, lateral
/// positive toward increasing `x`.
pub fn tac_estimate(f_left: f64, f_right: f64, alpha_deg: f64, f_prime: f64, c: f64) -> (f64, f64) {
    let a = alpha_deg.to_radians();
    let scale = c / (2.0 * f_prime);
    let axial = (f_left + f_right) / (1.0 + a.cos()) * scale;
    let lateral = (f_left - f_right) / a.sin() * scale;
    (axial, lateral)
}

/// Left and right Doppler frequencies that a velocity produces at one
/// steering angle (the forward model [`tac_estimate`] inverts).
pub fn tac_forward(axial: f64, lateral: f64, alpha_deg: f64, f_prime: f64, c: f64) -> (f64, f64) {
    let a = alpha_deg.to_radians();
    let k = f_prime / c;
    let common = axial * (1.0 + a.cos());
    let diff = lateral * a.sin();
    ((common + diff) * k, (common - diff) * k)
}

/// Window start frames and length for an estimator config.
pub(crate) fn windows(cfg: &EstimatorConfig, n_frames: usize, prf: f64) -> Result<(Vec<usize>, usize)> {
    let len = cfg.window_frames(prf);
    if len < 2 {
        return Err(Error::config(
            "estimator.k_window",
            format!("window covers {len} frames at {prf} Hz, need at least 2"),
        ));
    }
    if len > n_frames {
        return Err(Error::config(
            "estimator.k_window",
            format!("window of {len} frames exceeds the {n_frames} acquired"),
        ));
    }
    let hop = cfg.hop_frames(prf);
    Ok(((0..=n_frames - len).step_by(hop).collect(), len))
}

/// Triangulated lag-one autocorrelation velocity over the grid.
///
/// For every (angle, side) the lag-one autocorrelation is accumulated over
/// the `k_window` frames and over an axial segment `L_window` wavelengths
/// long centered on the pixel, then turned into a Doppler frequency. Each
/// angle's left/right pair gives a velocity vector and the vectors are
/// averaged component-wise over the angles available at the pixel.
pub fn tac_field(
    st: &SlowTimeEnsemble,
    grid: &ImagingGrid,
    cfg: &EstimatorConfig,
    sound_speed: f64,
    wavelength: f64,
) -> Result<VelocityField> {
    let (nx, nz) = match st.grid_shape {
        Some(s) if s == (grid.nx(), grid.nz()) => s,
        _ => return Err(Error::Shape("slow-time ensemble does not match the grid".into())),
    };
    cfg.validate()?;
    let prf = st.prf_effective;
    let (starts, len) = windows(cfg, st.n_frames, prf)?;
    let nw = starts.len();
    let f_prime = cfg.f_prime.unwrap_or(st.reference_frequency);
    let half_seg = grid
        .uniform_dz()
        .map(|dz| ((cfg.l_window * wavelength / 2.0) / dz + 1e-9).floor() as usize)
        .unwrap_or(0);
    let na = st.n_alpha();
    let nf = st.n_frames;

    // Per column: components [iz][window] accumulated over angles.
    let columns = crate::par::map_range(nx, |ix| {
        let mut sum_axial = vec![0.0; nz * nw];
        let mut sum_lateral = vec![0.0; nz * nw];
        let mut count = vec![0u32; nz * nw];
        let mut lag_prefix = vec![Complex64::new(0.0, 0.0); nf];
        // r1[side][iz * nw + w], with prefix sums over iz
        let mut seg = [vec![Complex64::new(0.0, 0.0); (nz + 1) * nw], vec![Complex64::new(0.0, 0.0); (nz + 1) * nw]];
        let mut seg_valid = [vec![0u32; nz + 1], vec![0u32; nz + 1]];
        for a in 0..na {
            for side in Side::BOTH {
                let s = side.index();
                for iz in 0..nz {
                    let p = grid.index(ix, iz);
                    let ok = st.is_valid(p, a, side);
                    seg_valid[s][iz + 1] = seg_valid[s][iz] + ok as u32;
                    let y = st.series(p, a, side);
                    lag_prefix[0] = Complex64::new(0.0, 0.0);
                    for n in 1..nf {
                        lag_prefix[n] = lag_prefix[n - 1] + y[n - 1].conj() * y[n];
                    }
                    for (w, &s0) in starts.iter().enumerate() {
                        let r1 = if ok {
                            lag_prefix[s0 + len - 1] - lag_prefix[s0]
                        } else {
                            Complex64::new(0.0, 0.0)
                        };
                        seg[s][(iz + 1) * nw + w] = seg[s][iz * nw + w] + r1;
                    }
                }
            }
            for iz in 0..nz {
                let p = grid.index(ix, iz);
                if !(st.is_valid(p, a, Side::Left) && st.is_valid(p, a, Side::Right)) {
                    continue;
                }
                let lo = iz.saturating_sub(half_seg);
                let hi = (iz + half_seg + 1).min(nz);
                if seg_valid[0][hi] == seg_valid[0][lo] || seg_valid[1][hi] == seg_valid[1][lo] {
                    continue;
                }
                for w in 0..nw {
                    let rl = seg[0][hi * nw + w] - seg[0][lo * nw + w];
                    let rr = seg[1][hi * nw + w] - seg[1][lo * nw + w];
                    let (Some(fl), Some(fr)) = (frequency_from_r1(rl, prf), frequency_from_r1(rr, prf)) else {
                        continue;
                    };
                    let (ax, lat) = tac_estimate(fl, fr, st.alphas[a], f_prime, sound_speed);
                    sum_axial[iz * nw + w] += ax;
                    sum_lateral[iz * nw + w] += lat;
                    count[iz * nw + w] += 1;
                }
            }
        }
        (sum_axial, sum_lateral, count)
    });

    let mut field = VelocityField::empty(grid, starts.iter().map(|&s| (s as f64 + len as f64 / 2.0) / prf).collect());
    for (ix, (ax, lat, cnt)) in columns.into_iter().enumerate() {
        for iz in 0..nz {
            let p = grid.index(ix, iz);
            for w in 0..nw {
                let k = iz * nw + w;
                if cnt[k] > 0 {
                    let n = cnt[k] as f64;
                    field.set(p, w, lat[k] / n, ax[k] / n);
                }
            }
        }
    }
    Ok(field)
}
