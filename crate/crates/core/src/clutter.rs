//! Truncated-SVD clutter rejection on pixel-by-frame (Casorati) matrices.
//!
//! Singular vectors come from the eigen-decomposition of the smaller Gram
//! matrix (`M^H M` or `M M^H`), which for a few hundred frames is far cheaper
//! than a full SVD of a tall matrix. The Gram product itself is formed with
//! real matrix multiplies.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::beamform::{Side, SlowTimeEnsemble};
use crate::error::{Error, Result};
use crate::velocity::kasai_frequency;

/// Unmasked pixels (rows) by frames (columns), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CasoratiMatrix {
    pub n_rows: usize,
    pub n_frames: usize,
    pub values: Vec<Complex64>,
    /// Ensemble point index of every row.
    pub pixel_index: Vec<usize>,
    /// `(beamformer tag, alpha, side)` the matrix was taken from.
    pub source: Option<(String, f64, Side)>,
}

impl CasoratiMatrix {
    pub fn from_rows(n_rows: usize, n_frames: usize, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != n_rows * n_frames {
            return Err(Error::Shape(format!(
                "{} values for a {n_rows}x{n_frames} matrix",
                values.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_frames,
            values,
            pixel_index: (0..n_rows).collect(),
            source: None,
        })
    }

    /// Gathers the valid pixels of one (angle, side) cube.
    pub fn from_ensemble(ens: &SlowTimeEnsemble, alpha: usize, side: Side) -> Self {
        let pixel_index: Vec<usize> = (0..ens.n_points)
            .filter(|&p| ens.is_valid(p, alpha, side))
            .collect();
        let mut values = Vec::with_capacity(pixel_index.len() * ens.n_frames);
        for &p in &pixel_index {
            values.extend_from_slice(ens.series(p, alpha, side));
        }
        Self {
            n_rows: pixel_index.len(),
            n_frames: ens.n_frames,
            values,
            pixel_index,
            source: Some((ens.beamformer.tag().to_string(), ens.alphas[alpha], side)),
        }
    }

    /// Writes rows back into the cube they came from.
    pub fn scatter_into(&self, ens: &mut SlowTimeEnsemble, alpha: usize, side: Side) {
        for (r, &p) in self.pixel_index.iter().enumerate() {
            ens.series_mut(p, alpha, side)
                .copy_from_slice(&self.values[r * self.n_frames..(r + 1) * self.n_frames]);
        }
    }

    pub fn row(&self, r: usize) -> &[Complex64] {
        &self.values[r * self.n_frames..(r + 1) * self.n_frames]
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum()
    }

    fn real_parts(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let re = DMatrix::from_row_iterator(self.n_rows, self.n_frames, self.values.iter().map(|v| v.re));
        let im = DMatrix::from_row_iterator(self.n_rows, self.n_frames, self.values.iter().map(|v| v.im));
        (re, im)
    }
}

/// Which side of the matrix the eigenvectors live on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Basis {
    /// Right singular vectors (frames), from `M^H M`.
    Temporal,
    /// Left singular vectors (pixels), from `M M^H`.
    Spatial,
}

/// Singular values and the leading singular vectors of a Casorati matrix.
#[derive(Debug, Clone)]
pub struct ClutterProjector {
    basis: Basis,
    /// Descending singular values.
    pub singular_values: Vec<f64>,
    /// Column `k` is the singular vector of component `k` on the smaller side.
    vectors: DMatrix<Complex64>,
}

impl ClutterProjector {
    pub fn factorize(m: &CasoratiMatrix) -> Self {
        let (re, im) = m.real_parts();
        let basis = if m.n_frames <= m.n_rows {
            Basis::Temporal
        } else {
            Basis::Spatial
        };
        // M^H M = (A^T A + B^T B) + i (A^T B - B^T A) for M = A + iB;
        // M M^H = (A A^T + B B^T) + i (B A^T - A B^T).
        let (g_re, g_im) = match basis {
            Basis::Temporal => {
                let at = re.transpose();
                let bt = im.transpose();
                (&at * &re + &bt * &im, &at * &im - &bt * &re)
            }
            Basis::Spatial => {
                let at = re.transpose();
                let bt = im.transpose();
                (&re * &at + &im * &bt, &im * &at - &re * &bt)
            }
        };
        let n = g_re.nrows();
        let gram = DMatrix::from_fn(n, n, |i, j| Complex64::new(g_re[(i, j)], g_im[(i, j)]));
        let eig = SymmetricEigen::new(gram);
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let singular_values = order
            .iter()
            .map(|&k| eig.eigenvalues[k].max(0.0).sqrt())
            .collect();
        let vectors = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, order[k])]);
        Self {
            basis,
            singular_values,
            vectors,
        }
    }

    pub fn rank_bound(&self) -> usize {
        self.singular_values.len()
    }

    /// Temporal signature of component `k`: the frame-domain row of
    /// `sigma_k u_k v_k^H`, normalized to unit norm.
    pub fn temporal_signature(&self, m: &CasoratiMatrix, k: usize) -> Vec<Complex64> {
        match self.basis {
            Basis::Temporal => self.vectors.column(k).iter().map(|v| v.conj()).collect(),
            Basis::Spatial => {
                let mut w = vec![Complex64::new(0.0, 0.0); m.n_frames];
                for r in 0..m.n_rows {
                    let u = self.vectors[(r, k)].conj();
                    for (wf, x) in w.iter_mut().zip(m.row(r)) {
                        *wf += u * x;
                    }
                }
                let norm = w.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
                if norm > 0.0 {
                    w.iter_mut().for_each(|v| *v /= norm);
                }
                w
            }
        }
    }

    /// Removes the `k_remove` largest components from `m`.
    pub fn apply(&self, m: &CasoratiMatrix, k_remove: usize) -> CasoratiMatrix {
        let mut out = m.clone();
        if k_remove == 0 {
            return out;
        }
        let nf = m.n_frames;
        match self.basis {
            Basis::Temporal => {
                for r in 0..m.n_rows {
                    let row = m.row(r);
                    let dst = &mut out.values[r * nf..(r + 1) * nf];
                    for k in 0..k_remove {
                        let v = self.vectors.column(k);
                        let proj: Complex64 = row.iter().zip(v.iter()).map(|(x, vk)| x * vk).sum();
                        for (d, vk) in dst.iter_mut().zip(v.iter()) {
                            *d -= proj * vk.conj();
                        }
                    }
                }
            }
            Basis::Spatial => {
                for k in 0..k_remove {
                    let u = self.vectors.column(k);
                    let mut w = vec![Complex64::new(0.0, 0.0); nf];
                    for r in 0..m.n_rows {
                        let uc = u[r].conj();
                        for (wf, x) in w.iter_mut().zip(m.row(r)) {
                            *wf += uc * x;
                        }
                    }
                    for r in 0..m.n_rows {
                        let ur = u[r];
                        for (d, wf) in out.values[r * nf..(r + 1) * nf].iter_mut().zip(&w) {
                            *d -= ur * wf;
                        }
                    }
                }
            }
        }
        out
    }
}

/// Zeroes the `k_remove` largest singular components.
pub fn svd_filter(m: &CasoratiMatrix, k_remove: usize) -> Result<CasoratiMatrix> {
    let bound = m.n_rows.min(m.n_frames);
    if k_remove == 0 {
        return Ok(m.clone());
    }
    if k_remove >= bound {
        return Err(Error::config(
            "k_remove",
            format!("{k_remove} components requested, matrix rank bound is {bound}"),
        ));
    }
    Ok(ClutterProjector::factorize(m).apply(m, k_remove))
}

/// Singular spectrum with the dominant slow-time frequency of each component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvdReport {
    pub singular_values: Vec<f64>,
    /// `20 log10(sigma_k / sigma_0)`; `-inf` when the matrix is zero.
    pub db: Vec<f64>,
    /// Lag-one autocorrelation frequency of each temporal singular vector.
    pub frequency_hz: Vec<Option<f64>>,
}

impl SvdReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,value_db,frequency_hz\n");
        for (k, (db, f)) in self.db.iter().zip(&self.frequency_hz).enumerate() {
            let f = f.map(|v| format!("{v:.6}")).unwrap_or_else(|| "nan".into());
            let db = if db.is_finite() {
                format!("{db:.6}")
            } else {
                "-inf".into()
            };
            let _ = writeln!(s, "{k},{db},{f}");
        }
        s
    }

    /// Number of components before the largest drop in the dB spectrum,
    /// searched over the first half of the components.
    pub fn auto_rank(&self) -> usize {
        let n = self.db.len();
        if n < 2 || !self.db[0].is_finite() {
            return 0;
        }
        let mut best = (0, f64::NEG_INFINITY);
        for k in 1..=(n / 2).max(1) {
            let gap = self.db[k - 1] - self.db[k];
            if gap.is_finite() && gap > best.1 {
                best = (k, gap);
            }
        }
        best.0
    }
}

pub fn sv_report(m: &CasoratiMatrix, prf_effective: f64) -> SvdReport {
    if m.n_rows == 0 || m.n_frames == 0 {
        return SvdReport {
            singular_values: Vec::new(),
            db: Vec::new(),
            frequency_hz: Vec::new(),
        };
    }
    let proj = ClutterProjector::factorize(m);
    let s0 = proj.singular_values[0];
    let db = proj
        .singular_values
        .iter()
        .map(|&s| {
            if s0 > 0.0 {
                20.0 * (s / s0).log10()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let frequency_hz = (0..proj.rank_bound())
        .map(|k| {
            if proj.singular_values[k] > 0.0 {
                kasai_frequency(&proj.temporal_signature(m, k), prf_effective)
            } else {
                None
            }
        })
        .collect();
    SvdReport {
        singular_values: proj.singular_values,
        db,
        frequency_hz,
    }
}
