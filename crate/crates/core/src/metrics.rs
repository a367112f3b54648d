//! Bias and spread statistics of velocity estimates along a vessel profile.
//!
//! Velocity statistics are normalized by the peak velocity and reported in
//! percent; angle statistics are in degrees after wrapping the error around
//! the true direction. Spread is the population standard deviation over the
//! repeated time windows at one position. Profile summaries take the median
//! over positions inside 90% of the vessel radius.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dsp::{mean, median, std_pop, wrap_degrees};
use crate::error::{Error, Result};
use crate::phantom::{flow_velocity_at, FlowFieldSpec};
use crate::velocity::VelocityField;

/// Fraction of the vessel radius kept for statistics.
pub const INNER_FRACTION: f64 = 0.9;

/// `(mean(measured - truth) / v_peak, std(measured) / v_peak)`, both in percent.
pub fn velocity_bias_sd(measured: &[f64], truth: &[f64], v_peak: f64) -> Result<(f64, f64)> {
    if measured.is_empty() {
        return Err(Error::invalid("no velocity samples"));
    }
    if measured.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} measured vs {} true velocities",
            measured.len(),
            truth.len()
        )));
    }
    if !(v_peak > 0.0) {
        return Err(Error::invalid("peak velocity must be positive"));
    }
    let diff: Vec<f64> = measured.iter().zip(truth).map(|(m, t)| m - t).collect();
    Ok((
        mean(&diff) / v_peak * 100.0,
        std_pop(measured) / v_peak * 100.0,
    ))
}

/// Angle bias and spread in degrees, with every error wrapped into
/// `(-180, 180]` around the truth.
pub fn angle_bias_sd(measured: &[f64], truth: f64) -> Result<(f64, f64)> {
    if measured.is_empty() {
        return Err(Error::invalid("no angle samples"));
    }
    let d: Vec<f64> = measured.iter().map(|m| wrap_degrees(m - truth)).collect();
    Ok((mean(&d), std_pop(&d)))
}

/// Statistics at one depth of the profile line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub z: f64,
    /// Signed distance from the vessel axis.
    pub radial: f64,
    pub v_true: f64,
    pub theta_true: f64,
    pub v_mean: Option<f64>,
    pub theta_mean: Option<f64>,
    pub v_bias_pct: Option<f64>,
    pub v_sd_pct: Option<f64>,
    pub a_bias_deg: Option<f64>,
    pub a_sd_deg: Option<f64>,
    pub n_windows: usize,
    pub inner: bool,
}

/// Medians over the inner positions that have estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSummary {
    pub median_bias: f64,
    pub sd: f64,
    pub median_angle_bias: f64,
    pub angle_sd: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub x: f64,
    pub peak_velocity: f64,
    pub points: Vec<ProfilePoint>,
    pub summary: ProfileSummary,
}

impl ProfileReport {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|v| format!("{v:.6}")).unwrap_or_else(|| "nan".into());
        let mut s = String::from(
            "z,radial,v_true,v_mean,theta_true,theta_mean,v_bias_pct,v_sd_pct,a_bias_deg,a_sd_deg,n_windows,inner\n",
        );
        for p in &self.points {
            let _ = writeln!(
                s,
                "{:.9},{:.9},{:.6},{},{:.6},{},{},{},{},{},{},{}",
                p.z,
                p.radial,
                p.v_true,
                opt(p.v_mean),
                p.theta_true,
                opt(p.theta_mean),
                opt(p.v_bias_pct),
                opt(p.v_sd_pct),
                opt(p.a_bias_deg),
                opt(p.a_sd_deg),
                p.n_windows,
                p.inner as u8
            );
        }
        s
    }
}

/// Compares the field along the grid column nearest the vessel center with
/// the parabolic truth.
pub fn extract_profile(field: &VelocityField, vessel: &FlowFieldSpec) -> Result<ProfileReport> {
    let FlowFieldSpec::ParabolicVessel {
        center_x,
        radius,
        peak_velocity,
        ..
    } = *vessel
    else {
        return Err(Error::invalid("profiles need a parabolic vessel"));
    };
    if !(peak_velocity > 0.0) {
        return Err(Error::invalid("profiles need a positive peak velocity"));
    }
    let grid = &field.grid;
    let ix = grid.nearest_column(center_x);
    let xs = grid.x_coords();
    let half_dx = if xs.len() > 1 { (xs[1] - xs[0]).abs() / 2.0 } else { 0.0 };
    if (xs[ix] - center_x).abs() > half_dx + 1e-12 {
        return Err(Error::invalid(format!(
            "vessel center x = {center_x} lies outside the grid columns"
        )));
    }
    let mut points = Vec::with_capacity(grid.nz());
    for iz in 0..grid.nz() {
        let p = grid.index(ix, iz);
        let pt = grid.pixel(p);
        let radial = vessel.radial_position(pt).unwrap_or(f64::INFINITY);
        let v_true = flow_velocity_at(vessel, pt).norm();
        let theta_true = vessel.flow_angle_at(pt);
        let mags: Vec<f64> = (0..field.n_windows()).filter_map(|w| field.magnitude(p, w)).collect();
        let angs: Vec<f64> = (0..field.n_windows()).filter_map(|w| field.angle(p, w)).collect();
        let truth = vec![v_true; mags.len()];
        let vel = velocity_bias_sd(&mags, &truth, peak_velocity).ok();
        let ang = angle_bias_sd(&angs, theta_true).ok();
        points.push(ProfilePoint {
            z: pt.z,
            radial,
            v_true,
            theta_true,
            v_mean: (!mags.is_empty()).then(|| mean(&mags)),
            theta_mean: ang.map(|(b, _)| wrap_degrees(theta_true + b)),
            v_bias_pct: vel.map(|v| v.0),
            v_sd_pct: vel.map(|v| v.1),
            a_bias_deg: ang.map(|a| a.0),
            a_sd_deg: ang.map(|a| a.1),
            n_windows: mags.len(),
            inner: radial.abs() <= INNER_FRACTION * radius,
        });
    }
    let inner: Vec<&ProfilePoint> = points
        .iter()
        .filter(|p| p.inner && p.n_windows > 0)
        .collect();
    let med = |f: &dyn Fn(&ProfilePoint) -> Option<f64>| {
        let v: Vec<f64> = inner.iter().filter_map(|p| f(p)).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            median(&v)
        }
    };
    let summary = ProfileSummary {
        median_bias: med(&|p| p.v_bias_pct),
        sd: med(&|p| p.v_sd_pct),
        median_angle_bias: med(&|p| p.a_bias_deg),
        angle_sd: med(&|p| p.a_sd_deg),
        n: inner.len(),
    };
    Ok(ProfileReport {
        x: xs[ix],
        peak_velocity,
        points,
        summary,
    })
}
