use std::f64::consts::PI;

use num_complex::Complex64;

/// `sum_n conj(y_n) y_{n+1}` over the series.
pub fn lag_one_autocorrelation(series: &[Complex64]) -> Complex64 {
    series.windows(2).map(|w| w[0].conj() * w[1]).sum()
}

/// Mean Doppler frequency `prf / (2 pi) * arg(R1)`; `None` when the lag-one
/// autocorrelation vanishes (e.g. an all-zero window).
pub fn frequency_from_r1(r1: Complex64, prf_effective: f64) -> Option<f64> {
    if r1.norm() > 0.0 && r1.re.is_finite() && r1.im.is_finite() {
        Some(prf_effective / (2.0 * PI) * r1.arg())
    } else {
        None
    }
}

/// Lag-one autocorrelation (Kasai) frequency estimate of a slow-time window.
pub fn kasai_frequency(series: &[Complex64], prf_effective: f64) -> Option<f64> {
    if series.len() < 2 {
        return None;
    }
    frequency_from_r1(lag_one_autocorrelation(series), prf_effective)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(f: f64, prf: f64, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|k| Complex64::from_polar(1.0, 2.0 * PI * f * k as f64 / prf))
            .collect()
    }

    #[test]
    fn examples() {
        let prf = 20e3;
        let f = kasai_frequency(&tone(0.1 * prf, prf, 16), prf).unwrap();
        assert!((f - 0.1 * prf).abs() < 1e-9 * prf);
        let constant = vec![Complex64::new(0.7, 0.0); 10];
        assert_eq!(kasai_frequency(&constant, prf), Some(0.0));
        let aliased = kasai_frequency(&tone(0.6 * prf, prf, 16), prf).unwrap();
        assert!((aliased + 0.4 * prf).abs() < 1e-6 * prf);
        assert_eq!(kasai_frequency(&[Complex64::new(0.0, 0.0); 8], prf), None);
        assert_eq!(kasai_frequency(&tone(1.0, prf, 1), prf), None);
    }

    proptest! {
        #[test]
        fn recovers_unaliased_tones(frac in -0.45f64..0.45, n in 2usize..64) {
            let prf = 5e3;
            let f = kasai_frequency(&tone(frac * prf, prf, n), prf).unwrap();
            prop_assert!((f - frac * prf).abs() < 1e-9 * prf);
        }
    }
}
