//! End-to-end experiments: configuration, pipeline stages, artifact output
//! and parameter sweeps.
//!
//! Every stage is a plain function of the spec and the previous stage's
//! output, so the CLI can run stages separately from persisted files. All
//! parallel loops map indices to independent values, which makes outputs
//! bit-identical for any thread count.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beamform::{
    bandpass_2f0, beamform_grid, resample_rf, to_slowtime_ensemble, Beamformer, MasMode, Side,
    SubApertureEnsemble,
};
use crate::clutter::{sv_report, svd_filter, CasoratiMatrix, SvdReport};
use crate::dsp::{full_width_half_max, wrap_degrees};
use crate::error::{ConfigViolation, Error, Result};
use crate::geometry::{AcquisitionConfig, ImagingGrid, Point, TransducerArray};
use crate::io;
use crate::metrics::{extract_profile, ProfileReport, ProfileSummary};
use crate::phantom::{
    scatterer_trajectory, seed_scatterers, simulate_rf, synth_pulse, Bubble, FlowFieldSpec,
    PhantomRegion, RFFrameSet, RfWindow, Spreading,
};
use crate::velocity::{
    dcc_field, tac_field, DccAngleSource, EstimatorConfig, EstimatorKind, LineBounds,
    VelocityField,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BeamformerChoice {
    Das,
    #[default]
    Nlhr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArraySpec {
    pub num_elements: usize,
    pub pitch: f64,
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self {
            num_elements: 64,
            pitch: 0.1925e-3,
        }
    }
}

/// Uniform imaging grid; ranges and spacings in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub x_range: [f64; 2],
    pub z_range: [f64; 2],
    pub dx: f64,
    pub dz: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        let lambda = 1540.0 / 8e6;
        Self {
            x_range: [-10.0 * lambda / 2.0, 10.0 * lambda / 2.0],
            z_range: [0.0195, 0.0305],
            dx: lambda / 2.0,
            dz: lambda / 16.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScattererSpec {
    /// Scatterers per cubic wavelength in a one-wavelength-thick slab.
    pub density: f64,
    /// Vessel segment (or box) length; defaults to 1.5 times the array
    /// aperture.
    pub segment_length: Option<f64>,
    pub spreading: Spreading,
    /// Extra fast-time margin recorded on both sides of the grid's echoes.
    pub window_margin: f64,
}

impl Default for ScattererSpec {
    fn default() -> Self {
        Self {
            density: 2.0,
            segment_length: None,
            spreading: Spreading::None,
            window_margin: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResampleSpec {
    pub axial: usize,
    pub temporal: usize,
}

impl Default for ResampleSpec {
    fn default() -> Self {
        Self {
            axial: 2,
            temporal: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClutterSpec {
    pub k_remove: usize,
    /// Picks the rank at the largest gap of the singular spectrum instead.
    pub auto: bool,
}

/// Strong scatterer crossing the field on the vessel axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BubbleSpec {
    /// Amplitude relative to the background RMS amplitude.
    pub amplitude_factor: f64,
    /// Speed along the vessel axis; defaults to twice the peak velocity so
    /// the bubble stands out from the flow it is carried in.
    pub speed: Option<f64>,
    /// Start position along the axis relative to the vessel center; by
    /// default the bubble passes the center mid-acquisition.
    pub start_offset: Option<f64>,
    /// Offset across the axis.
    pub radial_offset: f64,
}

impl Default for BubbleSpec {
    fn default() -> Self {
        Self {
            amplitude_factor: 20.0,
            speed: None,
            start_offset: None,
            radial_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub directory: Option<PathBuf>,
    /// Also write the RF and beamformed cubes.
    pub save_intermediates: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub seed: u64,
    pub phantom: FlowFieldSpec,
    pub acquisition: AcquisitionConfig,
    pub array: ArraySpec,
    pub grid: GridSpec,
    pub scatterers: ScattererSpec,
    pub resample: ResampleSpec,
    pub beamformer: BeamformerChoice,
    pub mas_mode: MasMode,
    pub clutter: ClutterSpec,
    pub estimator: EstimatorConfig,
    pub bubble: Option<BubbleSpec>,
    /// Axial stride between DCC pixels on the profile column.
    pub dcc_pixel_stride: usize,
    pub outputs: OutputSpec,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self::desk()
    }
}

impl ExperimentSpec {
    /// Small transverse-vessel profile that runs in well under a minute.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            seed: 1,
            phantom: FlowFieldSpec::ParabolicVessel {
                center_depth: 0.025,
                center_x: 0.0,
                radius: 0.005,
                peak_velocity: 0.25,
                inclination: 0.0,
            },
            acquisition: AcquisitionConfig {
                center_frequency: 8e6,
                sampling_frequency: 40e6,
                prf: 10e3,
                sound_speed: 1540.0,
                num_frames: 128,
                num_tx_cycles: 5,
                f_number: 12.0,
                alpha_set: vec![6.0, 9.0, 12.0, 15.0],
            },
            array: ArraySpec::default(),
            grid: GridSpec::default(),
            scatterers: ScattererSpec::default(),
            resample: ResampleSpec::default(),
            beamformer: BeamformerChoice::Nlhr,
            mas_mode: MasMode::Product,
            clutter: ClutterSpec::default(),
            estimator: EstimatorConfig::default(),
            bubble: None,
            dcc_pixel_stride: 8,
            outputs: OutputSpec::default(),
        }
    }

    /// Full-size acquisition: 128 elements, 100 MHz sampling, F-number 1.25.
    pub fn table_profile() -> Self {
        let mut s = Self::desk();
        s.name = "table".into();
        s.acquisition = AcquisitionConfig::table_simulation();
        s.array.num_elements = 128;
        s.grid.x_range = [-2.5e-3, 2.5e-3];
        s
    }

    pub fn beamformer(&self) -> Beamformer {
        match self.beamformer {
            BeamformerChoice::Das => Beamformer::Das,
            BeamformerChoice::Nlhr => Beamformer::Mas(self.mas_mode),
        }
    }

    pub fn transducer(&self) -> Result<TransducerArray> {
        TransducerArray::new(self.array.num_elements, self.array.pitch)
    }

    pub fn imaging_grid(&self) -> Result<ImagingGrid> {
        let g = &self.grid;
        ImagingGrid::uniform((g.x_range[0], g.x_range[1]), g.dx, (g.z_range[0], g.z_range[1]), g.dz)
    }

    pub fn segment_length(&self) -> f64 {
        self.scatterers
            .segment_length
            .unwrap_or(1.5 * self.array.num_elements as f64 * self.array.pitch)
    }

    /// Checks every section and reports all violations together.
    pub fn validate(&self) -> Result<()> {
        let mut errs: Vec<ConfigViolation> = Vec::new();
        let mut absorb = |r: Result<()>, prefix: &str| {
            if let Err(e) = r {
                match e {
                    Error::Config(v) => errs.extend(v.into_iter().map(|c| {
                        ConfigViolation::new(format!("{prefix}{}", c.field), c.message)
                    })),
                    other => errs.push(ConfigViolation::new(prefix.trim_end_matches('.'), other.to_string())),
                }
            }
        };
        absorb(
            self.acquisition.clone().validate().map(|_| ()).map_err(Error::Config),
            "acquisition.",
        );
        absorb(self.transducer().map(|_| ()), "array.");
        absorb(self.imaging_grid().map(|_| ()), "grid.");
        absorb(self.phantom.validate(), "phantom.");
        absorb(self.estimator.validate().map_err(strip_prefix("estimator.")), "estimator.");
        if !(self.scatterers.density > 0.0) {
            errs.push(ConfigViolation::new("scatterers.density", "must be positive"));
        }
        if self.resample.axial == 0 || self.resample.temporal == 0 {
            errs.push(ConfigViolation::new("resample", "factors must be at least 1"));
        }
        if self.dcc_pixel_stride == 0 {
            errs.push(ConfigViolation::new("dcc_pixel_stride", "must be at least 1"));
        }
        if self.beamformer == BeamformerChoice::Nlhr && self.grid.dz > 0.0 {
            let r = crate::beamform::nlhr_bandpass_filter(
                self.acquisition.center_frequency,
                self.grid.dz,
                self.acquisition.sound_speed,
            )
            .map(|_| ());
            if let Err(Error::Config(v)) = r {
                errs.extend(v);
            }
        }
        let prf_eff = self.acquisition.prf * self.resample.temporal.max(1) as f64;
        let frames = self.acquisition.num_frames * self.resample.temporal.max(1);
        let win = self.estimator.window_frames(prf_eff);
        if win < 2 || win > frames {
            errs.push(ConfigViolation::new(
                "estimator.k_window",
                format!("window of {win} frames does not fit 2..={frames}"),
            ));
        }
        if self.clutter.k_remove > 0 && self.clutter.k_remove >= frames {
            errs.push(ConfigViolation::new("clutter.k_remove", "exceeds the frame count"));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Sets one numeric field by name (used by sweeps and CLI overrides).
    pub fn set_axis(&mut self, axis: &str, value: f64) -> Result<()> {
        let as_count = |v: f64| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::config(axis.to_string(), format!("{v} is not a whole number")))
            }
        };
        match axis {
            "k_window" => self.estimator.k_window = value,
            "l_window" | "L_window" => self.estimator.l_window = value,
            "hop" => self.estimator.hop = Some(value),
            "dcc_lag" => self.estimator.dcc_lag = as_count(value)?,
            "k_remove" => self.clutter.k_remove = as_count(value)?,
            "f_number" => self.acquisition.f_number = value,
            "num_frames" => self.acquisition.num_frames = as_count(value)?,
            "prf" => self.acquisition.prf = value,
            "density" => self.scatterers.density = value,
            "seed" => self.seed = as_count(value)? as u64,
            "num_elements" => self.array.num_elements = as_count(value)?,
            "peak_velocity" | "inclination" | "center_depth" | "radius" => {
                let FlowFieldSpec::ParabolicVessel {
                    center_depth,
                    radius,
                    peak_velocity,
                    inclination,
                    ..
                } = &mut self.phantom
                else {
                    return Err(Error::config(axis.to_string(), "needs a parabolic vessel phantom"));
                };
                match axis {
                    "peak_velocity" => *peak_velocity = value,
                    "inclination" => *inclination = value,
                    "center_depth" => *center_depth = value,
                    _ => *radius = value,
                }
            }
            "bubble_speed" => self.bubble.get_or_insert_with(BubbleSpec::default).speed = Some(value),
            _ => {
                return Err(Error::config(
                    "axis",
                    format!("unknown sweep axis {axis:?}; expected one of {}", SWEEP_AXES.join(", ")),
                ))
            }
        }
        Ok(())
    }
}

fn strip_prefix(prefix: &'static str) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Config(v) => Error::Config(
            v.into_iter()
                .map(|c| ConfigViolation::new(c.field.trim_start_matches(prefix).to_string(), c.message))
                .collect(),
        ),
        other => other,
    }
}

/// Names accepted by [`ExperimentSpec::set_axis`].
pub const SWEEP_AXES: &[&str] = &[
    "k_window",
    "l_window",
    "hop",
    "dcc_lag",
    "k_remove",
    "f_number",
    "num_frames",
    "prf",
    "density",
    "seed",
    "num_elements",
    "peak_velocity",
    "inclination",
    "center_depth",
    "radius",
    "bubble_speed",
];

/// Raw RF plus what is needed to reproduce it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub rf: RFFrameSet,
    pub phantom_hash: String,
    pub n_scatterers: usize,
    pub bubble: Option<Bubble>,
}

fn hash_f64s(values: impl IntoIterator<Item = f64>) -> String {
    let bytes: Vec<u8> = values.into_iter().flat_map(|v| v.to_le_bytes()).collect();
    io::sha256_hex(&bytes)
}

/// Bubble trajectory implied by the spec, if any.
pub fn bubble_for(spec: &ExperimentSpec, background_rms: f64) -> Option<Bubble> {
    let b = spec.bubble.as_ref()?;
    let axis = spec.phantom.vessel_axis().unwrap_or(Point::new(1.0, 0.0));
    let center = spec
        .phantom
        .vessel_center()
        .unwrap_or(Point::new(0.0, (spec.grid.z_range[0] + spec.grid.z_range[1]) / 2.0));
    let speed = b.speed.unwrap_or(match spec.phantom {
        FlowFieldSpec::ParabolicVessel { peak_velocity, .. } => 2.0 * peak_velocity,
        _ => 0.0,
    });
    let duration = spec.acquisition.num_frames as f64 / spec.acquisition.prf;
    let offset = b.start_offset.unwrap_or(-speed * duration / 2.0);
    let normal = Point::new(-axis.z, axis.x);
    Some(Bubble {
        start: center + axis.scale(offset) + normal.scale(b.radial_offset),
        velocity: axis.scale(speed),
        amplitude: b.amplitude_factor * background_rms,
    })
}

pub fn simulate(spec: &ExperimentSpec) -> Result<Simulation> {
    let run = || -> Result<Simulation> {
        let acq = &spec.acquisition;
        let array = spec.transducer()?;
        let grid = spec.imaging_grid()?;
        let region = PhantomRegion::for_flow(&spec.phantom, spec.segment_length());
        let field = seed_scatterers(&region, spec.scatterers.density, acq.wavelength(), spec.seed)?;
        let bubble = bubble_for(spec, field.rms_amplitude());
        let traj = scatterer_trajectory(&field, &spec.phantom, &region, acq.num_frames, acq.prf, bubble.as_ref());
        let pulse = synth_pulse(acq);
        let window = RfWindow::covering(&array, &grid, acq, &pulse, spec.scatterers.window_margin);
        let rf = simulate_rf(&traj, &array, acq, window, spec.scatterers.spreading)?;
        let mut hashed: Vec<f64> = field.positions.iter().flat_map(|p| [p.x, p.z]).collect();
        hashed.extend_from_slice(&field.amplitudes);
        if let Some(b) = &bubble {
            hashed.extend([b.start.x, b.start.z, b.velocity.x, b.velocity.z, b.amplitude]);
        }
        Ok(Simulation {
            rf,
            phantom_hash: hash_f64s(hashed),
            n_scatterers: field.len(),
            bubble,
        })
    };
    run().map_err(|e| e.in_stage("simulate"))
}

/// Resamples raw RF by the spec's factors.
pub fn resample(spec: &ExperimentSpec, rf: &RFFrameSet) -> Result<RFFrameSet> {
    resample_rf(rf, spec.resample.axial, spec.resample.temporal).map_err(|e| e.in_stage("resample"))
}

/// Beamforms resampled RF with each requested beamformer, band-passing the
/// multiply-and-sum outputs around `2 f0`.
pub fn beamform(
    spec: &ExperimentSpec,
    rf: &RFFrameSet,
    beamformers: &[Beamformer],
) -> Result<Vec<SubApertureEnsemble>> {
    let run = || -> Result<Vec<SubApertureEnsemble>> {
        let array = spec.transducer()?;
        let grid = spec.imaging_grid()?;
        let raw = beamform_grid(rf, &array, &spec.acquisition, &grid, beamformers)?;
        raw.into_iter()
            .map(|e| {
                if e.beamformer.is_nonlinear() {
                    bandpass_2f0(&e, &grid, &spec.acquisition)
                } else {
                    Ok(e)
                }
            })
            .collect()
    };
    run().map_err(|e| e.in_stage("beamform"))
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub field: VelocityField,
    pub sv_spectrum: SvdReport,
    pub k_removed: usize,
}

/// Singular spectrum of the first angle's left sub-aperture.
pub fn sv_spectrum(spec: &ExperimentSpec, ens: &SubApertureEnsemble) -> Result<SvdReport> {
    let grid = spec.imaging_grid()?;
    let st = to_slowtime_ensemble(ens, &grid).map_err(|e| e.in_stage("sv-spectrum"))?;
    Ok(sv_report(&CasoratiMatrix::from_ensemble(&st, 0, Side::Left), st.prf_effective))
}

/// Pixels DCC is evaluated at: the profile column (or every column for
/// non-vessel phantoms) at the configured axial stride.
pub fn dcc_pixels(spec: &ExperimentSpec, grid: &ImagingGrid) -> Vec<usize> {
    let stride = spec.dcc_pixel_stride.max(1);
    let columns: Vec<usize> = match spec.phantom.vessel_center() {
        Some(c) => vec![grid.nearest_column(c.x)],
        None => (0..grid.nx()).collect(),
    };
    columns
        .into_iter()
        .flat_map(|ix| (0..grid.nz()).step_by(stride).map(move |iz| grid.index(ix, iz)))
        .collect()
}

/// Slow-time demodulation, optional clutter filtering and velocity
/// estimation. DCC also needs the resampled RF to beamform its lines.
pub fn estimate(
    spec: &ExperimentSpec,
    ens: &SubApertureEnsemble,
    rf: Option<&RFFrameSet>,
) -> Result<Estimate> {
    let run = || -> Result<Estimate> {
        let grid = spec.imaging_grid()?;
        let acq = &spec.acquisition;
        let mut st = to_slowtime_ensemble(ens, &grid)?;
        let sv = sv_report(&CasoratiMatrix::from_ensemble(&st, 0, Side::Left), st.prf_effective);
        let k = if spec.clutter.auto {
            sv.auto_rank()
        } else {
            spec.clutter.k_remove
        };
        if k > 0 {
            for a in 0..st.n_alpha() {
                for side in Side::BOTH {
                    let m = CasoratiMatrix::from_ensemble(&st, a, side);
                    if m.n_rows > k {
                        svd_filter(&m, k)?.scatter_into(&mut st, a, side);
                    }
                }
            }
        }
        let tac = || tac_field(&st, &grid, &spec.estimator, acq.sound_speed, acq.wavelength());
        let field = match spec.estimator.estimator {
            EstimatorKind::Tac => tac()?,
            EstimatorKind::Dcc => {
                let rf = rf.ok_or_else(|| Error::invalid("DCC needs the resampled RF"))?;
                let array = spec.transducer()?;
                let mut pixels = dcc_pixels(spec, &grid);
                let angles: Vec<f64> = match spec.estimator.dcc_angle {
                    DccAngleSource::Known => pixels
                        .iter()
                        .map(|&p| spec.phantom.flow_angle_at(grid.pixel(p)))
                        .collect(),
                    DccAngleSource::Tac => {
                        let t = tac()?;
                        pixels.retain(|&p| t.angle(p, 0).is_some());
                        pixels.iter().map(|&p| t.angle(p, 0).unwrap_or(0.0)).collect()
                    }
                };
                let half = array.aperture_half_width() + array.pitch() / 2.0;
                let bounds = LineBounds {
                    x_min: -half,
                    x_max: half,
                    z_min: 0.0,
                    z_max: f64::INFINITY,
                };
                dcc_field(rf, &array, acq, &grid, &pixels, &angles, ens.beamformer, &spec.estimator, bounds)?
            }
        };
        Ok(Estimate {
            field,
            sv_spectrum: sv,
            k_removed: k,
        })
    };
    run().map_err(|e| e.in_stage("estimate"))
}

/// Profile statistics for vessel phantoms.
pub fn evaluate(spec: &ExperimentSpec, field: &VelocityField) -> Result<Option<ProfileReport>> {
    match spec.phantom {
        FlowFieldSpec::ParabolicVessel { .. } => extract_profile(field, &spec.phantom)
            .map(Some)
            .map_err(|e| e.in_stage("evaluate")),
        _ => Ok(None),
    }
}

/// Speed over time at the pixel the bubble passes mid-acquisition, with and
/// without the bubble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransientTrace {
    pub beamformer: String,
    pub pixel: Point,
    pub times: Vec<f64>,
    pub baseline: Vec<f64>,
    pub with_bubble: Vec<f64>,
    /// `|with_bubble - baseline|`, NaN where either estimate is missing.
    pub deviation: Vec<f64>,
    pub fwhm: Option<f64>,
}

impl TransientTrace {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,baseline,with_bubble,deviation\n");
        for i in 0..self.times.len() {
            let _ = writeln!(
                s,
                "{:.9},{:.6},{:.6},{:.6}",
                self.times[i], self.baseline[i], self.with_bubble[i], self.deviation[i]
            );
        }
        s
    }
}

/// Runs the spec with and without its bubble and compares the speed traces
/// for each beamformer. The background scatterers are identical in both runs.
pub fn transient_traces(spec: &ExperimentSpec, beamformers: &[Beamformer]) -> Result<Vec<TransientTrace>> {
    if spec.bubble.is_none() {
        return Err(Error::config("bubble", "a transient trace needs a bubble"));
    }
    spec.validate()?;
    let mut quiet = spec.clone();
    quiet.bubble = None;
    let grid = spec.imaging_grid()?;
    let loud_sim = simulate(spec)?;
    let bubble = loud_sim.bubble.expect("bubble requested");
    let mid = spec.acquisition.num_frames as f64 / 2.0 / spec.acquisition.prf;
    let at = bubble.position_at(mid);
    let pixel = grid.index(grid.nearest_column(at.x), grid.nearest_row(at.z));
    let fields = |sim: Simulation| -> Result<Vec<VelocityField>> {
        let rf = resample(spec, &sim.rf)?;
        beamform(spec, &rf, beamformers)?
            .iter()
            .map(|e| estimate(spec, e, Some(&rf)).map(|est| est.field))
            .collect()
    };
    let loud = fields(loud_sim)?;
    let calm = fields(simulate(&quiet)?)?;
    let speed = |f: &VelocityField| -> Vec<f64> {
        (0..f.n_windows()).map(|w| f.magnitude(pixel, w).unwrap_or(f64::NAN)).collect()
    };
    Ok(beamformers
        .iter()
        .zip(loud.iter().zip(&calm))
        .map(|(b, (l, c))| {
            let with_bubble = speed(l);
            let baseline = speed(c);
            let deviation: Vec<f64> = with_bubble.iter().zip(&baseline).map(|(a, b)| (a - b).abs()).collect();
            let times = l.window_times.clone();
            TransientTrace {
                beamformer: b.tag().into(),
                pixel: grid.pixel(pixel),
                fwhm: full_width_half_max(&times, &deviation),
                times,
                baseline,
                with_bubble,
                deviation,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Content hashes of in-memory pipeline products.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StageHashes {
    pub spec: String,
    pub phantom: Option<String>,
    pub rf: Option<String>,
    pub beamformed: Option<String>,
    pub velocity: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub name: String,
    pub seed: u64,
    pub beamformer: String,
    pub estimator: EstimatorKind,
    pub k_removed: Option<usize>,
    pub hashes: StageHashes,
    pub metrics: Option<ProfileSummary>,
    pub files: Vec<FileEntry>,
}

/// Writes files into one directory and records their hashes.
pub struct ArtifactWriter {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl ArtifactWriter {
    pub fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<String> {
        std::fs::write(self.dir.join(name), bytes)?;
        let sha = io::sha256_hex(bytes);
        self.files.push(FileEntry {
            name: name.into(),
            sha256: sha.clone(),
            bytes: bytes.len(),
        });
        Ok(sha)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<String> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    pub fn files(&self) -> &[FileEntry] {
        &self.files
    }

    /// Writes `manifest.json` (which does not list itself).
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest> {
        manifest.files = self.files;
        io::write_json(&self.dir.join("manifest.json"), &manifest)?;
        Ok(manifest)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfStage {
    pub sidecar: io::RfSidecar,
    pub phantom_hash: String,
}

pub fn write_rf(w: &mut ArtifactWriter, spec: &ExperimentSpec, sim: &Simulation) -> Result<String> {
    let acq = &spec.acquisition;
    let sha = w.write("rf.bin", &io::rf_bytes(&sim.rf))?;
    w.write_json(
        "rf.json",
        &RfStage {
            sidecar: io::RfSidecar::describe(&sim.rf, acq.center_frequency, acq.prf, acq.sound_speed, spec.seed),
            phantom_hash: sim.phantom_hash.clone(),
        },
    )?;
    Ok(sha)
}

pub fn read_rf(dir: &Path) -> Result<(RFFrameSet, RfStage)> {
    let meta: RfStage = io::read_json(&dir.join("rf.json"))?;
    let rf = io::rf_from_bytes(&std::fs::read(dir.join("rf.bin"))?, &meta.sidecar)?;
    Ok((rf, meta))
}

pub fn write_beamformed(w: &mut ArtifactWriter, ens: &SubApertureEnsemble) -> Result<String> {
    let sha = w.write("beamformed.bin", &io::ensemble_bytes(ens))?;
    w.write_json("beamformed.json", &io::EnsembleSidecar::describe(ens))?;
    Ok(sha)
}

pub fn read_beamformed(dir: &Path) -> Result<SubApertureEnsemble> {
    let meta: io::EnsembleSidecar = io::read_json(&dir.join("beamformed.json"))?;
    io::ensemble_from_bytes(&std::fs::read(dir.join("beamformed.bin"))?, &meta)
}

pub fn read_velocity(dir: &Path) -> Result<VelocityField> {
    let meta: io::VelocitySidecar = io::read_json(&dir.join("velocity.json"))?;
    io::velocity_from_bytes(&std::fs::read(dir.join("velocity.bin"))?, &meta)
}

/// Window-averaged speed and direction images, rows running with depth.
fn heatmaps(field: &VelocityField) -> (Vec<f64>, Vec<f64>) {
    let (nx, nz) = (field.grid.nx(), field.grid.nz());
    let mut speed = vec![f64::NAN; nx * nz];
    let mut angle = vec![f64::NAN; nx * nz];
    for ix in 0..nx {
        for iz in 0..nz {
            let p = field.grid.index(ix, iz);
            let vs: Vec<Point> = (0..field.n_windows()).filter_map(|w| field.velocity(p, w)).collect();
            if vs.is_empty() {
                continue;
            }
            let n = vs.len() as f64;
            let m = vs.iter().fold(Point::default(), |a, &v| a + v).scale(1.0 / n);
            speed[iz * nx + ix] = m.norm();
            angle[iz * nx + ix] = wrap_degrees(m.x.atan2(m.z).to_degrees());
        }
    }
    (speed, angle)
}

/// Velocity-stage artifacts: cube, CSVs and heatmaps.
pub fn write_velocity(w: &mut ArtifactWriter, spec: &ExperimentSpec, field: &VelocityField) -> Result<String> {
    let sha = w.write("velocity.bin", &io::velocity_bytes(field))?;
    w.write_json("velocity.json", &io::velocity_sidecar(field))?;
    w.write("velocity.csv", field.to_csv().as_bytes())?;
    w.write("quiver.csv", field.quiver_csv().as_bytes())?;
    let (nx, nz) = (field.grid.nx(), field.grid.nz());
    let (speed, angle) = heatmaps(field);
    let v_max = match spec.phantom {
        FlowFieldSpec::ParabolicVessel { peak_velocity, .. } => 1.25 * peak_velocity,
        _ => speed.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max),
    };
    w.write("speed.pgm", &io::pgm(nx, nz, &speed, 0.0, v_max)?)?;
    w.write("angle.pgm", &io::pgm(nx, nz, &angle, -180.0, 180.0)?)?;
    let side = |quantity: &str, unit: &str, range: [f64; 2]| io::HeatmapSidecar {
        quantity: quantity.into(),
        unit: unit.into(),
        range,
        width: nx,
        height: nz,
        x_coords: field.grid.x_coords().to_vec(),
        z_coords: field.grid.z_coords().to_vec(),
    };
    w.write_json(
        "heatmaps.json",
        &[side("speed", "m/s", [0.0, v_max]), side("angle", "deg", [-180.0, 180.0])],
    )?;
    Ok(sha)
}

/// Profile CSV plus `metrics.json` (`null` statistics for non-vessel phantoms).
pub fn write_profile(w: &mut ArtifactWriter, report: Option<&ProfileReport>) -> Result<()> {
    if let Some(r) = report {
        w.write("profile.csv", r.to_csv().as_bytes())?;
    }
    w.write_json("metrics.json", &report.map(|r| &r.summary))?;
    Ok(())
}

/// Runs every stage and writes all artifacts into `out`.
pub fn run(spec: &ExperimentSpec, out: &Path) -> Result<Manifest> {
    spec.validate()?;
    let mut w = ArtifactWriter::new(out)?;
    let spec_sha = w.write_json("spec.json", spec)?;
    let sim = simulate(spec)?;
    let rf_sha = io::sha256_hex(&io::rf_bytes(&sim.rf));
    if spec.outputs.save_intermediates {
        write_rf(&mut w, spec, &sim)?;
    }
    let rf = resample(spec, &sim.rf)?;
    drop(sim.rf);
    let ens = beamform(spec, &rf, &[spec.beamformer()])?.remove(0);
    let bf_sha = io::sha256_hex(&io::ensemble_bytes(&ens));
    if spec.outputs.save_intermediates {
        write_beamformed(&mut w, &ens)?;
    }
    let est = estimate(spec, &ens, Some(&rf))?;
    drop(ens);
    w.write("sv_spectrum.csv", est.sv_spectrum.to_csv().as_bytes())?;
    let vel_sha = write_velocity(&mut w, spec, &est.field)?;
    let report = evaluate(spec, &est.field)?;
    write_profile(&mut w, report.as_ref())?;
    w.finish(Manifest {
        name: spec.name.clone(),
        seed: spec.seed,
        beamformer: spec.beamformer().tag().into(),
        estimator: spec.estimator.estimator,
        k_removed: Some(est.k_removed),
        hashes: StageHashes {
            spec: spec_sha,
            phantom: Some(sim.phantom_hash),
            rf: Some(rf_sha),
            beamformed: Some(bf_sha),
            velocity: Some(vel_sha),
        },
        metrics: report.map(|r| r.summary),
        files: Vec::new(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    pub axis: String,
    pub values: Vec<f64>,
    pub manifests: Vec<Manifest>,
}

fn value_label(v: f64) -> String {
    let s = format!("{v}");
    s.replace('-', "m")
}

/// One full run per value in `out/<axis>=<value>/` plus `comparison.csv`.
pub fn sweep(template: &ExperimentSpec, axis: &str, values: &[f64], out: &Path) -> Result<SweepOutcome> {
    if values.is_empty() {
        return Err(Error::config("values", "a sweep needs at least one value"));
    }
    // Reject unknown axes before running anything.
    let mut probe = template.clone();
    probe.set_axis(axis, values[0])?;
    let mut manifests = Vec::with_capacity(values.len());
    let mut csv = String::from("axis,value,beamformer,median_bias,sd,median_angle_bias,angle_sd,n,velocity_sha256\n");
    for &v in values {
        let mut spec = template.clone();
        spec.set_axis(axis, v)?;
        spec.name = format!("{}-{axis}={}", template.name, value_label(v));
        let m = run(&spec, &out.join(format!("{axis}={}", value_label(v))))?;
        let s = m.metrics.clone();
        let f = |x: Option<f64>| x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "nan".into());
        let _ = writeln!(
            csv,
            "{axis},{v},{},{},{},{},{},{},{}",
            m.beamformer,
            f(s.as_ref().map(|s| s.median_bias)),
            f(s.as_ref().map(|s| s.sd)),
            f(s.as_ref().map(|s| s.median_angle_bias)),
            f(s.as_ref().map(|s| s.angle_sd)),
            s.as_ref().map(|s| s.n).unwrap_or(0),
            m.hashes.velocity.clone().unwrap_or_default()
        );
        manifests.push(m);
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("comparison.csv"), csv)?;
    Ok(SweepOutcome {
        axis: axis.into(),
        values: values.to_vec(),
        manifests,
    })
}
