//! Persistence: flat little-endian `f32` cubes with JSON sidecars, 8-bit PGM
//! heatmaps and SHA-256 content hashes.
//!
//! Masked entries of beamformed and velocity cubes are stored as NaN.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::beamform::{Beamformer, MasMode, SubApertureEnsemble};
use crate::error::{Error, Result};
use crate::geometry::ImagingGrid;
use crate::phantom::RFFrameSet;
use crate::velocity::VelocityField;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn f32_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values
        .into_iter()
        .flat_map(|v| (v as f32).to_le_bytes())
        .collect()
}

pub fn read_f32(bytes: &[u8]) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Shape(format!(
            "{} bytes is not a whole number of f32 values",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect())
}

fn check_len(values: &[f64], dims: &[usize]) -> Result<()> {
    let n: usize = dims.iter().product();
    if values.len() != n {
        return Err(Error::Shape(format!(
            "{} values do not fill dims {dims:?}",
            values.len()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfSidecar {
    /// `[channels, samples, frames]`, frames fastest.
    pub dims: [usize; 3],
    pub f_s: f64,
    pub f0: f64,
    pub prf: f64,
    pub c: f64,
    pub seed: u64,
    pub start_time: f64,
    pub prf_effective: f64,
}

impl RfSidecar {
    pub fn describe(rf: &RFFrameSet, f0: f64, prf: f64, c: f64, seed: u64) -> Self {
        Self {
            dims: [rf.n_channels, rf.n_samples, rf.n_frames],
            f_s: rf.sampling_frequency,
            f0,
            prf,
            c,
            seed,
            start_time: rf.start_time,
            prf_effective: rf.prf_effective,
        }
    }
}

pub fn rf_bytes(rf: &RFFrameSet) -> Vec<u8> {
    f32_bytes(rf.samples.iter().copied())
}

pub fn rf_from_bytes(bytes: &[u8], meta: &RfSidecar) -> Result<RFFrameSet> {
    let samples = read_f32(bytes)?;
    check_len(&samples, &meta.dims)?;
    Ok(RFFrameSet {
        samples,
        n_channels: meta.dims[0],
        n_samples: meta.dims[1],
        n_frames: meta.dims[2],
        sampling_frequency: meta.f_s,
        start_time: meta.start_time,
        prf_effective: meta.prf_effective,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSidecar {
    /// `[points, alphas, sides, frames]`, frames fastest; sides are
    /// `[left, right]`.
    pub dims: [usize; 4],
    pub beamformer_tag: String,
    pub mas_mode: Option<MasMode>,
    pub alpha: Vec<f64>,
    pub side: [String; 2],
    pub center_frequency_out: f64,
    pub prf_effective: f64,
    pub grid_shape: Option<(usize, usize)>,
}

impl EnsembleSidecar {
    pub fn describe(ens: &SubApertureEnsemble) -> Self {
        Self {
            dims: [ens.n_points, ens.n_alpha(), 2, ens.n_frames],
            beamformer_tag: ens.beamformer.tag().into(),
            mas_mode: match ens.beamformer {
                Beamformer::Das => None,
                Beamformer::Mas(m) => Some(m),
            },
            alpha: ens.alphas.clone(),
            side: ["left".into(), "right".into()],
            center_frequency_out: ens.center_frequency_out,
            prf_effective: ens.prf_effective,
            grid_shape: ens.grid_shape,
        }
    }
}

pub fn ensemble_bytes(ens: &SubApertureEnsemble) -> Vec<u8> {
    let nf = ens.n_frames;
    f32_bytes(
        ens.values
            .iter()
            .enumerate()
            .map(|(i, &v)| if ens.valid[i / nf] { v } else { f64::NAN }),
    )
}

pub fn ensemble_from_bytes(bytes: &[u8], meta: &EnsembleSidecar) -> Result<SubApertureEnsemble> {
    let mut values = read_f32(bytes)?;
    check_len(&values, &meta.dims)?;
    let beamformer = match (meta.beamformer_tag.as_str(), meta.mas_mode) {
        ("das", _) => Beamformer::Das,
        ("nlhr", m) => Beamformer::Mas(m.unwrap_or_default()),
        (t, _) => return Err(Error::invalid(format!("unknown beamformer tag {t:?}"))),
    };
    let nf = meta.dims[3];
    let valid: Vec<bool> = values.chunks(nf.max(1)).map(|c| c.iter().all(|v| !v.is_nan())).collect();
    values.iter_mut().for_each(|v| {
        if v.is_nan() {
            *v = 0.0
        }
    });
    Ok(SubApertureEnsemble {
        beamformer,
        alphas: meta.alpha.clone(),
        n_points: meta.dims[0],
        n_frames: nf,
        grid_shape: meta.grid_shape,
        center_frequency_out: meta.center_frequency_out,
        prf_effective: meta.prf_effective,
        values,
        valid,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VelocitySidecar {
    /// `[pixels, windows, 2]` with components `(vx, vz)`.
    pub dims: [usize; 3],
    pub components: [String; 2],
    pub grid: ImagingGrid,
    pub window_times: Vec<f64>,
}

pub fn velocity_bytes(field: &VelocityField) -> Vec<u8> {
    f32_bytes((0..field.valid.len()).flat_map(|i| {
        if field.valid[i] {
            [field.vx[i], field.vz[i]]
        } else {
            [f64::NAN, f64::NAN]
        }
    }))
}

pub fn velocity_sidecar(field: &VelocityField) -> VelocitySidecar {
    VelocitySidecar {
        dims: [field.grid.num_pixels(), field.n_windows(), 2],
        components: ["vx".into(), "vz".into()],
        grid: field.grid.clone(),
        window_times: field.window_times.clone(),
    }
}

pub fn velocity_from_bytes(bytes: &[u8], meta: &VelocitySidecar) -> Result<VelocityField> {
    let v = read_f32(bytes)?;
    check_len(&v, &meta.dims)?;
    let mut field = VelocityField::empty(&meta.grid, meta.window_times.clone());
    let nw = meta.dims[1];
    for i in 0..meta.dims[0] * nw {
        let (vx, vz) = (v[2 * i], v[2 * i + 1]);
        if !vx.is_nan() && !vz.is_nan() {
            field.set(i / nw, i % nw, vx, vz);
        }
    }
    Ok(field)
}

/// Linear 8-bit mapping of `[lo, hi]`; NaN maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub quantity: String,
    pub unit: String,
    pub range: [f64; 2],
    pub width: usize,
    pub height: usize,
    /// Rows run with depth, columns with lateral position.
    pub x_coords: Vec<f64>,
    pub z_coords: Vec<f64>,
}

/// Binary (P5) PGM of a row-major `width x height` image.
pub fn pgm(width: usize, height: usize, values: &[f64], lo: f64, hi: f64) -> Result<Vec<u8>> {
    if values.len() != width * height {
        return Err(Error::Shape(format!(
            "{} values for a {width}x{height} image",
            values.len()
        )));
    }
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    let span = hi - lo;
    out.extend(values.iter().map(|&v| {
        if v.is_nan() || !(span > 0.0) {
            0
        } else {
            (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8
        }
    }));
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, &bytes)?;
    Ok(bytes)
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f32_round_trip_and_hash() {
        let v = [1.5, -2.25, 0.0, f64::NAN];
        let b = f32_bytes(v.iter().copied());
        assert_eq!(b.len(), 16);
        assert_eq!(&b[..4], &1.5f32.to_le_bytes());
        let back = read_f32(&b).unwrap();
        assert_eq!(&back[..3], &v[..3]);
        assert!(back[3].is_nan());
        assert!(read_f32(&b[..3]).is_err());
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn rf_round_trip() {
        let mut rf = RFFrameSet::zeros(2, 3, 4, 80e6, 1e-5, 20e3);
        rf.samples.iter_mut().enumerate().for_each(|(i, v)| *v = i as f64 * 0.5);
        let meta = RfSidecar::describe(&rf, 8e6, 10e3, 1540.0, 7);
        let json = serde_json::to_string(&meta).unwrap();
        let meta: RfSidecar = serde_json::from_str(&json).unwrap();
        assert_eq!(rf_from_bytes(&rf_bytes(&rf), &meta).unwrap(), rf);
    }

    #[test]
    fn ensemble_round_trip_keeps_mask() {
        let ens = SubApertureEnsemble {
            beamformer: Beamformer::Mas(MasMode::SignedSqrt),
            alphas: vec![6.0],
            n_points: 2,
            n_frames: 3,
            grid_shape: Some((1, 2)),
            center_frequency_out: 16e6,
            prf_effective: 20e3,
            values: vec![1.0, 2.0, 3.0, 0.0, 0.0, 0.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0],
            valid: vec![true, false, true, true],
        };
        let meta = EnsembleSidecar::describe(&ens);
        assert_eq!(meta.beamformer_tag, "nlhr");
        let back = ensemble_from_bytes(&ensemble_bytes(&ens), &meta).unwrap();
        assert_eq!(back, ens);
    }

    #[test]
    fn velocity_round_trip() {
        let grid = ImagingGrid::new(vec![0.0, 1e-3], vec![0.01]).unwrap();
        let mut f = VelocityField::empty(&grid, vec![1e-3, 2e-3]);
        f.set(0, 1, 0.25, -0.5);
        f.set(1, 0, 0.125, 0.0);
        let back = velocity_from_bytes(&velocity_bytes(&f), &velocity_sidecar(&f)).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn pgm_layout() {
        let img = pgm(2, 1, &[0.0, 1.0], 0.0, 1.0).unwrap();
        assert_eq!(&img[..11], b"P5\n2 1\n255\n");
        assert_eq!(&img[11..], &[0, 255]);
        assert_eq!(pgm(1, 1, &[f64::NAN], 0.0, 1.0).unwrap()[11], 0);
        assert!(pgm(2, 2, &[0.0], 0.0, 1.0).is_err());
    }
}
