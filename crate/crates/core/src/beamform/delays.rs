use serde::{Deserialize, Serialize};

use crate::geometry::{ImagingGrid, Point, TransducerArray};

/// Transmit-plus-receive travel time of a non-steered plane wave to `p` and
/// back to the element at lateral position `element_x`.
#[inline]
pub fn plane_wave_delay(element_x: f64, p: Point, c: f64) -> f64 {
    (p.z + (element_x - p.x).hypot(p.z)) / c
}

/// Round-trip delays for every (element, pixel) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayTable {
    n_channels: usize,
    sound_speed: f64,
    element_x: Vec<f64>,
    points: Vec<Point>,
    n_pixels: usize,
    /// Element-major: `tau[channel * n_pixels + pixel]`.
    tau: Vec<f64>,
}

impl DelayTable {
    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    #[inline]
    pub fn get(&self, channel: usize, pixel: usize) -> f64 {
        self.tau[channel * self.n_pixels + pixel]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.tau
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn sound_speed(&self) -> f64 {
        self.sound_speed
    }

    /// Element-to-pixel (receive path) distance.
    pub fn receive_distance(&self, channel: usize, pixel: usize) -> f64 {
        let p = self.points[pixel];
        (self.element_x[channel] - p.x).hypot(p.z)
    }
}

pub fn compute_delays(array: &TransducerArray, grid: &ImagingGrid, c: f64) -> DelayTable {
    let points = grid.points();
    let n_pixels = points.len();
    let mut tau = Vec::with_capacity(array.num_elements() * n_pixels);
    for &xe in array.element_x() {
        tau.extend(points.iter().map(|&p| plane_wave_delay(xe, p, c)));
    }
    DelayTable {
        n_channels: array.num_elements(),
        sound_speed: c,
        element_x: array.element_x().to_vec(),
        points,
        n_pixels,
        tau,
    }
}
