//! Small signal-processing toolbox: FFT helpers, analytic signals, Kaiser
//! windowed-sinc kernels and a zero-phase FIR band-pass.

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

/// Zeroth-order modified Bessel function of the first kind (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Kaiser window evaluated at normalized position `u` in `[-1, 1]`.
pub fn kaiser(u: f64, beta: f64) -> f64 {
    if u.abs() > 1.0 {
        return 0.0;
    }
    bessel_i0(beta * (1.0 - u * u).sqrt()) / bessel_i0(beta)
}

pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Taps of a Kaiser-windowed sinc interpolator that evaluates a band-limited
/// sequence at `base + frac`, `frac` in `[0, 1)`. Tap `k` multiplies sample
/// `base - half_width + 1 + k`. Taps are normalized to unit DC gain.
pub fn fractional_delay_taps(frac: f64, half_width: usize, beta: f64) -> Vec<f64> {
    let hw = half_width as f64;
    let mut taps: Vec<f64> = (0..2 * half_width)
        .map(|k| {
            let offset = k as f64 - hw + 1.0 - frac;
            sinc(offset) * kaiser(offset / hw, beta)
        })
        .collect();
    let s: f64 = taps.iter().sum();
    if s.abs() > 1e-12 {
        taps.iter_mut().for_each(|t| *t /= s);
    }
    taps
}

/// In-place forward FFT.
pub fn fft(buf: &mut [Complex64]) {
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(buf.len()).process(buf);
}

/// In-place inverse FFT, normalized by `1/n`.
pub fn ifft(buf: &mut [Complex64]) {
    let n = buf.len();
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n).process(buf);
    let s = 1.0 / n as f64;
    buf.iter_mut().for_each(|v| *v *= s);
}

/// Band-limited upsampling of a real sequence by zero-padding its spectrum.
/// Output has `factor * x.len()` samples; every `factor`-th output equals the
/// input sample. The Nyquist bin of even-length input is split evenly.
pub fn fft_upsample(x: &[f64], factor: usize, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let n = x.len();
    if factor <= 1 || n == 0 {
        return x.to_vec();
    }
    let m = n * factor;
    let mut spec: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut spec);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    let half = n / 2;
    if n.is_multiple_of(2) {
        out[..half].copy_from_slice(&spec[..half]);
        for k in 1..half {
            out[m - k] = spec[n - k];
        }
        let nyq = spec[half] * 0.5;
        out[half] = nyq;
        out[m - half] = nyq;
    } else {
        out[..=half].copy_from_slice(&spec[..=half]);
        for k in 1..=half {
            out[m - k] = spec[n - k];
        }
    }
    planner.plan_fft_inverse(m).process(&mut out);
    // forward (unnormalized) then inverse of length m: divide by n to keep amplitude
    let s = 1.0 / n as f64;
    out.iter().map(|v| v.re * s).collect()
}

/// Analytic signal `x + i H{x}` of a real sequence. The input is zero-padded
/// to twice its length so that the two ends do not wrap into each other.
pub fn analytic_signal(x: &[f64], planner: &mut FftPlanner<f64>) -> Vec<Complex64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let m = 2 * n;
    let mut buf = vec![Complex64::new(0.0, 0.0); m];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    planner.plan_fft_forward(m).process(&mut buf);
    // m is even: keep DC and Nyquist, double positive, zero negative
    for v in buf.iter_mut().take(m / 2).skip(1) {
        *v *= 2.0;
    }
    for v in buf.iter_mut().skip(m / 2 + 1) {
        *v = Complex64::new(0.0, 0.0);
    }
    planner.plan_fft_inverse(m).process(&mut buf);
    let s = 1.0 / m as f64;
    buf.truncate(n);
    buf.iter_mut().for_each(|v| *v *= s);
    buf
}

/// Power spectrum of a real sequence on `[0, fs/2]` after zero-padding to
/// `nfft`. Returns `(frequencies, power)`.
pub fn power_spectrum(x: &[f64], fs: f64, nfft: usize) -> (Vec<f64>, Vec<f64>) {
    let nfft = nfft.max(x.len());
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for (b, &v) in buf.iter_mut().zip(x) {
        b.re = v;
    }
    fft(&mut buf);
    let nb = nfft / 2 + 1;
    let freqs = (0..nb).map(|k| k as f64 * fs / nfft as f64).collect();
    let power = buf[..nb].iter().map(|v| v.norm_sqr()).collect();
    (freqs, power)
}

/// Power-weighted mean frequency of a real sequence.
pub fn spectral_centroid(x: &[f64], fs: f64) -> f64 {
    let nfft = (4 * x.len()).next_power_of_two();
    let (f, p) = power_spectrum(x, fs, nfft);
    let total: f64 = p.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    f.iter().zip(&p).map(|(f, p)| f * p).sum::<f64>() / total
}

/// Frequency of the largest bin of the one-sided power spectrum.
pub fn spectral_peak(x: &[f64], fs: f64) -> f64 {
    let nfft = (8 * x.len()).next_power_of_two();
    let (f, p) = power_spectrum(x, fs, nfft);
    let (k, _) = p
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc });
    f[k]
}

/// Linear-phase FIR filter with odd, symmetric taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    taps: Vec<f64>,
}

impl FirFilter {
    pub fn from_taps(taps: Vec<f64>) -> Self {
        assert!(taps.len() % 2 == 1, "linear-phase FIR needs an odd tap count");
        Self { taps }
    }

    /// Kaiser-window band-pass with passband `[f_lo, f_hi]`, transition width
    /// `transition` on both sides and at least `atten_db` stopband attenuation
    /// per pass.
    pub fn kaiser_bandpass(f_lo: f64, f_hi: f64, transition: f64, atten_db: f64, fs: f64) -> Self {
        let dw = 2.0 * PI * transition / fs;
        let n = ((atten_db - 7.95) / (2.285 * dw)).ceil() as usize + 1;
        let n = n | 1;
        let beta = if atten_db > 50.0 {
            0.1102 * (atten_db - 8.7)
        } else if atten_db >= 21.0 {
            0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
        } else {
            0.0
        };
        let c_lo = (f_lo - transition / 2.0) / fs;
        let c_hi = (f_hi + transition / 2.0) / fs;
        let mid = (n / 2) as f64;
        let taps = (0..n)
            .map(|k| {
                let t = k as f64 - mid;
                let ideal = 2.0 * c_hi * sinc(2.0 * c_hi * t) - 2.0 * c_lo * sinc(2.0 * c_lo * t);
                ideal * kaiser(t / mid, beta)
            })
            .collect();
        Self { taps }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// Centered (zero-phase) convolution with zero extension at the ends.
    pub fn apply_centered(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let half = self.taps.len() / 2;
        let mut y = vec![0.0; n];
        for (i, yi) in y.iter_mut().enumerate() {
            let k0 = half.saturating_sub(i);
            let k1 = self.taps.len().min(n + half - i);
            let mut acc = 0.0;
            for k in k0..k1 {
                acc += self.taps[k] * x[i + k - half];
            }
            *yi = acc;
        }
        y
    }

    /// Forward-backward filtering: the squared magnitude response with zero
    /// net phase.
    pub fn filtfilt(&self, x: &[f64]) -> Vec<f64> {
        let mut fwd = self.apply_centered(x);
        fwd.reverse();
        let mut back = self.apply_centered(&fwd);
        back.reverse();
        back
    }

    /// Magnitude of a single pass at frequency `f`.
    pub fn magnitude_at(&self, f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        let mid = (self.taps.len() / 2) as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &h) in self.taps.iter().enumerate() {
            acc += Complex64::from_polar(h, -w * (k as f64 - mid));
        }
        acc.norm()
    }
}

pub fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_pop(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn median(x: &[f64]) -> f64 {
    if x.is_empty() {
        return f64::NAN;
    }
    let mut v = x.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Wraps an angle in degrees into `(-180, 180]`.
pub fn wrap_degrees(a: f64) -> f64 {
    let mut w = a % 360.0;
    if w <= -180.0 {
        w += 360.0;
    } else if w > 180.0 {
        w -= 360.0;
    }
    w
}

/// Full width at half maximum of the peak of `y` sampled at `t`, with
/// linearly interpolated crossings. A peak that has not fallen to half on
/// one side is measured up to the end of the record. NaN samples are ignored.
pub fn full_width_half_max(t: &[f64], y: &[f64]) -> Option<f64> {
    let n = t.len().min(y.len());
    let (peak, max) = (0..n)
        .filter(|&i| y[i].is_finite())
        .map(|i| (i, y[i]))
        .max_by(|a, b| a.1.total_cmp(&b.1))?;
    if !(max > 0.0) {
        return None;
    }
    let half = max / 2.0;
    let crossing = |i: usize, j: usize| t[i] + (t[j] - t[i]) * (y[i] - half) / (y[i] - y[j]);
    let mut left = t[0];
    let mut i = peak;
    while i > 0 {
        if y[i - 1].is_finite() && y[i - 1] < half {
            left = crossing(i, i - 1);
            break;
        }
        i -= 1;
    }
    let mut right = t[n - 1];
    let mut i = peak;
    while i + 1 < n {
        if y[i + 1].is_finite() && y[i + 1] < half {
            right = crossing(i, i + 1);
            break;
        }
        i += 1;
    }
    Some(right - left)
}
