//! Velocity estimators: Kasai lag-one autocorrelation, triangulation over
//! left/right sub-apertures (TAC) and directional cross-correlation (DCC).
//!
//! Sign conventions: a Doppler frequency is positive when the round-trip path
//! lengthens. Velocity angles are measured from the depth axis toward `+x`,
//! so flow along `+x` has angle 90 degrees.

mod dcc;
mod kasai;
mod tac;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

pub use dcc::{
    correlation_function, dcc_estimate, dcc_field, dcc_shift, directional_line, line_length,
    normalized_correlation, parabolic_peak, LineBounds,
};
pub use kasai::{frequency_from_r1, kasai_frequency, lag_one_autocorrelation};
pub use tac::{tac_estimate, tac_field, tac_forward};

use crate::dsp::wrap_degrees;
use crate::error::{ConfigViolation, Error, Result};
use crate::geometry::{ImagingGrid, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    #[default]
    Tac,
    Dcc,
}

/// Where DCC takes its line direction from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DccAngleSource {
    /// The phantom's known flow direction.
    #[default]
    Known,
    /// The TAC angle estimated at the pixel (first window).
    Tac,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub estimator: EstimatorKind,
    /// Slow-time averaging window in seconds.
    pub k_window: f64,
    /// Spatial window in wavelengths: the TAC axial averaging segment and
    /// the DCC correlation length.
    pub l_window: f64,
    /// DCC line sample spacing in wavelengths.
    pub dcc_spacing: f64,
    /// Window hop in seconds; defaults to the window length.
    pub hop: Option<f64>,
    pub dcc_lag: usize,
    /// Largest DCC shift searched, in line samples.
    pub dcc_max_shift: usize,
    pub dcc_angle: DccAngleSource,
    /// Overrides the carrier the Doppler shift is referenced to.
    pub f_prime: Option<f64>,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            estimator: EstimatorKind::Tac,
            k_window: 0.8e-3,
            l_window: 20.0,
            dcc_spacing: 0.1,
            hop: None,
            dcc_lag: 1,
            dcc_max_shift: 10,
            dcc_angle: DccAngleSource::Known,
            f_prime: None,
        }
    }
}

impl EstimatorConfig {
    pub fn window_frames(&self, prf_effective: f64) -> usize {
        (self.k_window * prf_effective).round() as usize
    }

    pub fn hop_frames(&self, prf_effective: f64) -> usize {
        match self.hop {
            Some(h) => ((h * prf_effective).round() as usize).max(1),
            None => self.window_frames(prf_effective).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.k_window > 0.0) {
            errs.push(ConfigViolation::new("estimator.k_window", "must be positive"));
        }
        if !(self.l_window > 0.0) {
            errs.push(ConfigViolation::new("estimator.l_window", "must be positive"));
        }
        if !(self.dcc_spacing > 0.0) {
            errs.push(ConfigViolation::new("estimator.dcc_spacing", "must be positive"));
        }
        if self.dcc_lag == 0 {
            errs.push(ConfigViolation::new("estimator.dcc_lag", "must be at least 1"));
        }
        if let Some(h) = self.hop {
            if !(h > 0.0) {
                errs.push(ConfigViolation::new("estimator.hop", "must be positive"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

/// Velocity vectors per grid pixel per time window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocityField {
    pub grid: ImagingGrid,
    /// Center time of each window, seconds from the first frame.
    pub window_times: Vec<f64>,
    /// Lateral component, `[pixel * n_windows + window]`.
    pub vx: Vec<f64>,
    /// Axial (depth-positive) component.
    pub vz: Vec<f64>,
    pub valid: Vec<bool>,
}

impl VelocityField {
    pub fn empty(grid: &ImagingGrid, window_times: Vec<f64>) -> Self {
        let n = grid.num_pixels() * window_times.len();
        Self {
            grid: grid.clone(),
            window_times,
            vx: vec![0.0; n],
            vz: vec![0.0; n],
            valid: vec![false; n],
        }
    }

    pub fn n_windows(&self) -> usize {
        self.window_times.len()
    }

    #[inline]
    fn idx(&self, pixel: usize, window: usize) -> usize {
        pixel * self.window_times.len() + window
    }

    pub fn set(&mut self, pixel: usize, window: usize, vx: f64, vz: f64) {
        let i = self.idx(pixel, window);
        self.vx[i] = vx;
        self.vz[i] = vz;
        self.valid[i] = vx.is_finite() && vz.is_finite();
    }

    pub fn velocity(&self, pixel: usize, window: usize) -> Option<Point> {
        let i = self.idx(pixel, window);
        self.valid[i].then(|| Point::new(self.vx[i], self.vz[i]))
    }

    pub fn magnitude(&self, pixel: usize, window: usize) -> Option<f64> {
        self.velocity(pixel, window).map(|v| v.norm())
    }

    /// Angle from the depth axis toward `+x`, in `(-180, 180]` degrees.
    pub fn angle(&self, pixel: usize, window: usize) -> Option<f64> {
        self.velocity(pixel, window)
            .map(|v| wrap_degrees(v.x.atan2(v.z).to_degrees()))
    }

    /// Rows `x,z,t_window,v,theta,valid` in pixel-then-window order.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,z,t_window,v,theta,valid\n");
        for p in 0..self.grid.num_pixels() {
            let pt = self.grid.pixel(p);
            for w in 0..self.n_windows() {
                let (v, th, ok) = match (self.magnitude(p, w), self.angle(p, w)) {
                    (Some(v), Some(th)) => (format!("{v:.9}"), format!("{th:.6}"), 1),
                    _ => ("nan".into(), "nan".into(), 0),
                };
                let _ = writeln!(
                    s,
                    "{:.9},{:.9},{:.9},{v},{th},{ok}",
                    pt.x, pt.z, self.window_times[w]
                );
            }
        }
        s
    }

    /// Window-averaged vectors as rows `x,z,vx,vz` for quiver plots.
    pub fn quiver_csv(&self) -> String {
        let mut s = String::from("x,z,vx,vz\n");
        for p in 0..self.grid.num_pixels() {
            let vs: Vec<Point> = (0..self.n_windows()).filter_map(|w| self.velocity(p, w)).collect();
            if vs.is_empty() {
                continue;
            }
            let n = vs.len() as f64;
            let (vx, vz) = vs.iter().fold((0.0, 0.0), |a, v| (a.0 + v.x, a.1 + v.z));
            let pt = self.grid.pixel(p);
            let _ = writeln!(s, "{:.9},{:.9},{:.9},{:.9}", pt.x, pt.z, vx / n, vz / n);
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_angles_and_csv() {
        let grid = ImagingGrid::new(vec![0.0], vec![0.01, 0.02]).unwrap();
        let mut f = VelocityField::empty(&grid, vec![0.5e-3]);
        f.set(0, 0, 0.3, 0.0);
        assert_eq!(f.angle(0, 0), Some(90.0));
        assert!((f.magnitude(0, 0).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(f.velocity(1, 0), None);
        let csv = f.to_csv();
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.lines().nth(2).unwrap().ends_with(",0"));
        assert_eq!(f.quiver_csv().lines().count(), 2);
    }

    #[test]
    fn window_sizes() {
        let cfg = EstimatorConfig::default();
        assert_eq!(cfg.window_frames(20e3), 16);
        assert_eq!(cfg.hop_frames(20e3), 16);
        let bad = EstimatorConfig {
            l_window: 0.0,
            dcc_spacing: -1.0,
            ..Default::default()
        };
        match bad.validate() {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("{other:?}"),
        }
    }
}
