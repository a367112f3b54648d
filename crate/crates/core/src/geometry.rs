//! Transducer geometry, acquisition parameters and the imaging grid.
//!
//! All types are plain immutable values once constructed. Angles are degrees
//! at the API surface; lengths are meters, frequencies Hz.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigViolation, Error, Result};

/// A point in the imaging plane: lateral `x`, depth `z` (meters, `z` grows
/// away from the array).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub z: f64,
}

impl Point {
    pub const fn new(x: f64, z: f64) -> Self {
        Self { x, z }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.z)
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.x * s, self.z * s)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.z * o.z
    }
}

impl std::ops::Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.z + o.z)
    }
}

impl std::ops::Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.z - o.z)
    }
}

/// Uniform linear array lying on `z = 0`, centered laterally on `x = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransducerArray {
    pitch: f64,
    element_x: Vec<f64>,
}

impl TransducerArray {
    /// Builds a centered uniform linear array.
    pub fn new(num_elements: usize, pitch: f64) -> Result<Self> {
        let mut errs = Vec::new();
        if num_elements < 2 {
            errs.push(ConfigViolation::new(
                "num_elements",
                format!("need at least 2 elements, got {num_elements}"),
            ));
        }
        if !(pitch > 0.0 && pitch.is_finite()) {
            errs.push(ConfigViolation::new(
                "pitch",
                format!("must be positive, got {pitch}"),
            ));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        Ok(Self::centered(num_elements, pitch))
    }

    fn centered(num_elements: usize, pitch: f64) -> Self {
        let half = (num_elements as f64 - 1.0) / 2.0;
        let element_x = (0..num_elements)
            .map(|i| (i as f64 - half) * pitch)
            .collect();
        Self { pitch, element_x }
    }

    /// Single-element "array" used to exercise degenerate beamforming paths.
    #[doc(hidden)]
    pub fn single_element(pitch: f64) -> Self {
        Self::centered(1, pitch)
    }

    pub fn num_elements(&self) -> usize {
        self.element_x.len()
    }

    pub fn pitch(&self) -> f64 {
        self.pitch
    }

    pub fn element_x(&self) -> &[f64] {
        &self.element_x
    }

    /// Element depth; always zero for this array model.
    pub fn element_z(&self) -> f64 {
        0.0
    }

    /// Fractional element index of a lateral position (0 at the first element).
    pub fn fractional_index(&self, x: f64) -> f64 {
        (x - self.element_x[0]) / self.pitch
    }

    /// Index of the element laterally nearest `x`, or `None` when the nearest
    /// integer index falls outside the aperture.
    pub fn nearest_element(&self, x: f64) -> Option<usize> {
        let idx = self.fractional_index(x).round();
        if idx < 0.0 || idx >= self.num_elements() as f64 {
            None
        } else {
            Some(idx as usize)
        }
    }

    /// Nearest element with the index clamped into the aperture.
    pub fn nearest_element_clamped(&self, x: f64) -> usize {
        let idx = self.fractional_index(x).round();
        idx.clamp(0.0, (self.num_elements() - 1) as f64) as usize
    }

    pub fn aperture_half_width(&self) -> f64 {
        self.element_x[self.element_x.len() - 1]
    }
}

/// Acquisition and receive-beamforming parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub center_frequency: f64,
    pub sampling_frequency: f64,
    pub prf: f64,
    pub sound_speed: f64,
    pub num_frames: usize,
    pub num_tx_cycles: usize,
    pub f_number: f64,
    /// Transmit-receive angles in degrees.
    pub alpha_set: Vec<f64>,
}

impl AcquisitionConfig {
    pub fn wavelength(&self) -> f64 {
        self.sound_speed / self.center_frequency
    }

    /// Transmit-receive angles converted to radians.
    pub fn alpha_radians(&self) -> Vec<f64> {
        self.alpha_set.iter().map(|a| a.to_radians()).collect()
    }

    /// Returns the config unchanged when every invariant holds, otherwise the
    /// complete list of violations.
    pub fn validate(self) -> std::result::Result<Self, Vec<ConfigViolation>> {
        let mut errs = Vec::new();
        let positive = |name: &str, v: f64, errs: &mut Vec<ConfigViolation>| {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(ConfigViolation::new(name, format!("must be positive, got {v}")));
            }
        };
        positive("center_frequency", self.center_frequency, &mut errs);
        positive("sampling_frequency", self.sampling_frequency, &mut errs);
        positive("prf", self.prf, &mut errs);
        positive("sound_speed", self.sound_speed, &mut errs);
        positive("f_number", self.f_number, &mut errs);
        if self.sampling_frequency < 4.0 * self.center_frequency {
            errs.push(ConfigViolation::new(
                "sampling_frequency",
                format!(
                    "must be at least 4 x center_frequency ({} Hz), got {} Hz",
                    4.0 * self.center_frequency,
                    self.sampling_frequency
                ),
            ));
        }
        if self.num_frames < 2 {
            errs.push(ConfigViolation::new("num_frames", "need at least 2 frames"));
        }
        if self.num_tx_cycles == 0 {
            errs.push(ConfigViolation::new("num_tx_cycles", "must be at least 1"));
        }
        if self.alpha_set.is_empty() {
            errs.push(ConfigViolation::new("alpha_set", "must not be empty"));
        }
        for (i, a) in self.alpha_set.iter().enumerate() {
            if !(*a > 0.0 && *a < 45.0) {
                errs.push(ConfigViolation::new(
                    format!("alpha_set[{i}]"),
                    format!("angle must lie in (0, 45) degrees, got {a}"),
                ));
            }
        }
        if errs.is_empty() {
            Ok(self)
        } else {
            Err(errs)
        }
    }

    /// Simulation column of the parameter table (128 elements, 8 MHz).
    pub fn table_simulation() -> Self {
        Self {
            center_frequency: 8e6,
            sampling_frequency: 100e6,
            prf: 10e3,
            sound_speed: 1540.0,
            num_frames: 128,
            num_tx_cycles: 5,
            f_number: 1.25,
            alpha_set: vec![6.0, 9.0, 12.0, 15.0],
        }
    }
}

/// Dense rectangular pixel lattice. Pixel `p = ix * nz + iz`, so depth runs
/// fastest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagingGrid {
    x_coords: Vec<f64>,
    z_coords: Vec<f64>,
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] > w[0])
}

impl ImagingGrid {
    pub fn new(x_coords: Vec<f64>, z_coords: Vec<f64>) -> Result<Self> {
        let mut errs = Vec::new();
        if x_coords.is_empty() {
            errs.push(ConfigViolation::new("x_coords", "must not be empty"));
        }
        if z_coords.is_empty() {
            errs.push(ConfigViolation::new("z_coords", "must not be empty"));
        }
        if !strictly_increasing(&x_coords) {
            errs.push(ConfigViolation::new("x_coords", "must be strictly increasing"));
        }
        if !strictly_increasing(&z_coords) {
            errs.push(ConfigViolation::new("z_coords", "must be strictly increasing"));
        }
        if z_coords.iter().any(|&z| !(z > 0.0)) {
            errs.push(ConfigViolation::new("z_coords", "depths must be positive"));
        }
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        Ok(Self { x_coords, z_coords })
    }

    /// Uniform lattice covering `[x0, x1] x [z0, z1]` (inclusive of the start
    /// edges) with the given spacings.
    pub fn uniform(x_range: (f64, f64), dx: f64, z_range: (f64, f64), dz: f64) -> Result<Self> {
        if !(dx > 0.0) || !(dz > 0.0) {
            return Err(Error::config("grid", "spacings must be positive"));
        }
        let axis = |lo: f64, hi: f64, d: f64| -> Vec<f64> {
            let n = ((hi - lo) / d + 1e-9).floor() as usize + 1;
            (0..n).map(|i| lo + i as f64 * d).collect()
        };
        Self::new(axis(x_range.0, x_range.1, dx), axis(z_range.0, z_range.1, dz))
    }

    pub fn x_coords(&self) -> &[f64] {
        &self.x_coords
    }

    pub fn z_coords(&self) -> &[f64] {
        &self.z_coords
    }

    pub fn nx(&self) -> usize {
        self.x_coords.len()
    }

    pub fn nz(&self) -> usize {
        self.z_coords.len()
    }

    pub fn num_pixels(&self) -> usize {
        self.nx() * self.nz()
    }

    pub fn index(&self, ix: usize, iz: usize) -> usize {
        ix * self.nz() + iz
    }

    pub fn pixel(&self, p: usize) -> Point {
        let nz = self.nz();
        Point::new(self.x_coords[p / nz], self.z_coords[p % nz])
    }

    pub fn points(&self) -> Vec<Point> {
        (0..self.num_pixels()).map(|p| self.pixel(p)).collect()
    }

    /// Axial spacing if the depth axis is uniform to 1e-9 relative.
    pub fn uniform_dz(&self) -> Option<f64> {
        if self.nz() < 2 {
            return None;
        }
        let dz = self.z_coords[1] - self.z_coords[0];
        let ok = self
            .z_coords
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dz).abs() <= 1e-9 * dz.abs().max(1e-12));
        ok.then_some(dz)
    }

    pub fn nearest_column(&self, x: f64) -> usize {
        nearest(&self.x_coords, x)
    }

    pub fn nearest_row(&self, z: f64) -> usize {
        nearest(&self.z_coords, z)
    }

    pub fn contains(&self, p: Point) -> bool {
        let (x0, x1) = (self.x_coords[0], self.x_coords[self.nx() - 1]);
        let (z0, z1) = (self.z_coords[0], self.z_coords[self.nz() - 1]);
        p.x >= x0 - 1e-12 && p.x <= x1 + 1e-12 && p.z >= z0 - 1e-12 && p.z <= z1 + 1e-12
    }

    pub fn max_depth(&self) -> f64 {
        self.z_coords[self.nz() - 1]
    }

    pub fn min_depth(&self) -> f64 {
        self.z_coords[0]
    }

    pub fn lateral_extent(&self) -> f64 {
        self.x_coords[self.nx() - 1] - self.x_coords[0]
    }
}

fn nearest(v: &[f64], x: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (i, &c) in v.iter().enumerate() {
        let d = (c - x).abs();
        if d < dist {
            dist = d;
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_array_spans_expected_aperture() {
        let a = TransducerArray::new(128, 0.1925e-3).unwrap();
        let half = 127.0 / 2.0 * 0.1925e-3;
        assert!((a.element_x()[0] + half).abs() < 1e-15);
        assert!((a.element_x()[127] - half).abs() < 1e-15);
    }

    #[test]
    fn two_and_three_element_arrays() {
        let a = TransducerArray::new(2, 1e-3).unwrap();
        assert_eq!(a.element_x(), &[-0.5e-3, 0.5e-3]);
        let b = TransducerArray::new(3, 0.3e-3).unwrap();
        assert!((b.element_x()[0] + 0.3e-3).abs() < 1e-18);
        assert_eq!(b.element_x()[1], 0.0);
        assert!((b.element_x()[2] - 0.3e-3).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_arrays() {
        assert!(TransducerArray::new(1, 1e-3).is_err());
        assert!(TransducerArray::new(8, 0.0).is_err());
        match TransducerArray::new(0, -1.0) {
            Err(Error::Config(v)) => assert_eq!(v.len(), 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn table_config_is_valid_with_expected_wavelength() {
        let cfg = AcquisitionConfig::table_simulation().validate().unwrap();
        assert!((cfg.wavelength() - 0.1925e-3).abs() < 1e-15);
    }

    #[test]
    fn undersampled_config_rejected() {
        let mut cfg = AcquisitionConfig::table_simulation();
        cfg.sampling_frequency = 16e6;
        let errs = cfg.validate().unwrap_err();
        assert!(errs.iter().any(|e| e.field == "sampling_frequency"));
    }

    #[test]
    fn empty_alpha_set_rejected_with_all_violations() {
        let mut cfg = AcquisitionConfig::table_simulation();
        cfg.alpha_set.clear();
        cfg.prf = 0.0;
        let errs = cfg.validate().unwrap_err();
        assert!(errs.iter().any(|e| e.field == "alpha_set"));
        assert!(errs.iter().any(|e| e.field == "prf"));
    }

    #[test]
    fn grid_ordering_is_depth_major() {
        let g = ImagingGrid::new(vec![-1e-3, 0.0, 1e-3], vec![0.02, 0.021]).unwrap();
        assert_eq!(g.num_pixels(), 6);
        assert_eq!(g.pixel(1), Point::new(-1e-3, 0.021));
        assert_eq!(g.pixel(2), Point::new(0.0, 0.02));
        assert!(ImagingGrid::new(vec![0.0], vec![0.0]).is_err());
        assert!(ImagingGrid::new(vec![1.0, 0.0], vec![0.01]).is_err());
    }

    proptest! {
        #[test]
        fn array_mirror_symmetry(n in 2usize..200, pitch in 1e-5f64..1e-3) {
            let a = TransducerArray::new(n, pitch).unwrap();
            let mirrored: Vec<f64> = a.element_x().iter().rev().map(|x| -x).collect();
            for (m, x) in mirrored.iter().zip(a.element_x()) {
                prop_assert!((m - x).abs() <= 1e-15);
            }
            let mean = a.element_x().iter().sum::<f64>() / n as f64;
            prop_assert!(mean.abs() < 1e-12);
            for w in a.element_x().windows(2) {
                prop_assert!((w[1] - w[0] - pitch).abs() < 1e-12 * pitch.max(1.0));
            }
        }

        #[test]
        fn wavelength_times_frequency_is_sound_speed(c in 1000f64..2000.0, f0 in 1e6f64..20e6) {
            let mut cfg = AcquisitionConfig::table_simulation();
            cfg.sound_speed = c;
            cfg.center_frequency = f0;
            prop_assert!((cfg.wavelength() * f0 - c).abs() <= 4.0 * f64::EPSILON * c);
        }
    }
}
