use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pairwise term used by the multiply-and-sum beamformer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MasMode {
    /// `sum_{i<j} A_i A_j`.
    #[default]
    Product,
    /// `sum_{i<j} sign(A_i A_j) sqrt(|A_i A_j|)`, which keeps the output in
    /// the units of the input.
    SignedSqrt,
}

#[inline]
pub(crate) fn signed_sqrt(a: f64) -> f64 {
    a.signum() * a.abs().sqrt()
}

/// Delay-and-sum of already delayed and weighted channel values.
pub fn das_beamform(a: &[f64]) -> f64 {
    a.iter().sum()
}

/// Multiply-and-sum over all distinct channel pairs, evaluated through
/// `((sum a)^2 - sum a^2) / 2`. Returns `None` for fewer than two channels.
pub fn mas_beamform(a: &[f64], mode: MasMode) -> Option<f64> {
    if a.len() < 2 {
        return None;
    }
    let (mut s, mut s2) = (0.0, 0.0);
    for &v in a {
        let t = match mode {
            MasMode::Product => v,
            MasMode::SignedSqrt => signed_sqrt(v),
        };
        s += t;
        s2 += t * t;
    }
    Some(0.5 * (s * s - s2))
}

/// Number of pairwise products a multiply-and-sum over `n` channels needs.
pub fn multiplication_count(n: usize) -> Result<usize> {
    if n < 2 {
        return Err(Error::invalid(format!(
            "multiply-and-sum needs at least 2 channels, got {n}"
        )));
    }
    Ok((n * n - n) / 2)
}
