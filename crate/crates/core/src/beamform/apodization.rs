use serde::{Deserialize, Serialize};

use crate::geometry::TransducerArray;

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

/// Gaussian weights over a contiguous run of elements starting at `first`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianWeights {
    pub first: usize,
    pub weights: Vec<f64>,
}

impl GaussianWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.first..self.first + self.weights.len()
    }

    /// Weight of element `j` (zero outside the support).
    pub fn at(&self, j: usize) -> f64 {
        if j >= self.first && j < self.first + self.weights.len() {
            self.weights[j - self.first]
        } else {
            0.0
        }
    }
}

/// Receive apodization whose Gaussian width grows with the receive distance:
/// full width at half maximum `distance / f_number`, expressed in elements.
/// Weights are cut at three standard deviations, clipped to the aperture and
/// normalized to unit sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApodizationProfile {
    pub f_number: f64,
    pub pitch: f64,
    pub num_elements: usize,
}

impl ApodizationProfile {
    pub fn new(array: &TransducerArray, f_number: f64) -> Self {
        Self {
            f_number,
            pitch: array.pitch(),
            num_elements: array.num_elements(),
        }
    }

    pub fn fwhm_elements(&self, distance: f64) -> f64 {
        distance / (self.f_number * self.pitch)
    }

    pub fn weights(&self, center: usize, distance: f64) -> GaussianWeights {
        let sigma = self.fwhm_elements(distance) / FWHM_PER_SIGMA;
        let n = self.num_elements;
        if !(sigma > 1e-9) || n == 0 {
            return GaussianWeights {
                first: center.min(n.saturating_sub(1)),
                weights: vec![1.0],
            };
        }
        let reach = (3.0 * sigma).floor() as usize;
        let first = center.saturating_sub(reach);
        let last = (center + reach).min(n - 1);
        let mut weights: Vec<f64> = (first..=last)
            .map(|j| {
                let d = j as f64 - center as f64;
                (-0.5 * d * d / (sigma * sigma)).exp()
            })
            .collect();
        let s: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= s);
        GaussianWeights { first, weights }
    }
}
