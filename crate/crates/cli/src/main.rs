//! `nlhr`: runs vector flow experiments end to end or stage by stage.
//!
//! Exit codes: 0 on success, 2 for invalid configuration or usage, 3 when a
//! pipeline stage fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nlhr_core::beamform::MasMode;
use nlhr_core::experiment::{self, ArtifactWriter, BeamformerChoice, ExperimentSpec, Manifest, StageHashes};
use nlhr_core::velocity::EstimatorKind;
use nlhr_core::{io, Error, Result};

#[derive(Parser)]
#[command(name = "nlhr", version, about = "Plane-wave vector flow imaging with NLHR beamforming")]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run single-threaded. Outputs are identical either way; this only
    /// removes scheduling as a variable.
    #[arg(long, global = true)]
    deterministic: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum BeamformerArg {
    Das,
    Nlhr,
}

#[derive(Clone, Copy, ValueEnum)]
enum MasModeArg {
    Product,
    SignedSqrt,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Tac,
    Dcc,
}

#[derive(Args)]
struct SpecArgs {
    /// Experiment JSON; missing fields take the preset's values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base profile used when no config is given.
    #[arg(long, value_enum, default_value = "desk")]
    preset: Preset,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    beamformer: Option<BeamformerArg>,
    #[arg(long, value_enum)]
    mas_mode: Option<MasModeArg>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    /// Number of singular components removed before estimation.
    #[arg(long)]
    k_remove: Option<usize>,
}

impl SpecArgs {
    fn load(&self) -> Result<ExperimentSpec> {
        let mut spec = match &self.config {
            Some(path) => {
                let text = std::fs::read(path)?;
                serde_json::from_slice(&text).map_err(|e| Error::config("config", e.to_string()))?
            }
            None => match self.preset {
                Preset::Desk => ExperimentSpec::desk(),
                Preset::Table => ExperimentSpec::table_profile(),
            },
        };
        if let Some(s) = self.seed {
            spec.seed = s;
        }
        if let Some(b) = self.beamformer {
            spec.beamformer = match b {
                BeamformerArg::Das => BeamformerChoice::Das,
                BeamformerArg::Nlhr => BeamformerChoice::Nlhr,
            };
        }
        if let Some(m) = self.mas_mode {
            spec.mas_mode = match m {
                MasModeArg::Product => MasMode::Product,
                MasModeArg::SignedSqrt => MasMode::SignedSqrt,
            };
        }
        if let Some(e) = self.estimator {
            spec.estimator.estimator = match e {
                EstimatorArg::Tac => EstimatorKind::Tac,
                EstimatorArg::Dcc => EstimatorKind::Dcc,
            };
        }
        if let Some(k) = self.k_remove {
            spec.clutter.k_remove = k;
            spec.clutter.auto = false;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Simulate raw RF and write `rf.bin` / `rf.json`.
    Simulate {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Resample and beamform a simulated RF directory.
    Beamform {
        #[command(flatten)]
        spec: SpecArgs,
        /// Directory written by `simulate`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate velocities from a beamformed directory.
    Estimate {
        #[command(flatten)]
        spec: SpecArgs,
        /// Directory written by `beamform`.
        #[arg(long)]
        input: PathBuf,
        /// RF directory; required by DCC, which beamforms its own lines.
        #[arg(long)]
        rf: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare a velocity directory against the phantom's profile.
    Evaluate {
        #[command(flatten)]
        spec: SpecArgs,
        /// Directory written by `estimate`.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// All stages in one go.
    Run {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write RF and beamformed cubes.
        #[arg(long)]
        save_intermediates: bool,
    },
    /// Repeat `run` over values of one parameter.
    Sweep {
        #[command(flatten)]
        spec: SpecArgs,
        /// Parameter name, e.g. k_window, l_window, peak_velocity.
        #[arg(long)]
        axis: String,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Singular value spectrum of a beamformed directory.
    SvSpectrum {
        #[command(flatten)]
        spec: SpecArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn manifest(spec: &ExperimentSpec, hashes: StageHashes) -> Manifest {
    Manifest {
        name: spec.name.clone(),
        seed: spec.seed,
        beamformer: spec.beamformer().tag().into(),
        estimator: spec.estimator.estimator,
        k_removed: None,
        hashes,
        metrics: None,
        files: Vec::new(),
    }
}

fn start(spec: &ExperimentSpec, out: &Path) -> Result<(ArtifactWriter, String)> {
    let mut w = ArtifactWriter::new(out)?;
    let sha = w.write_json("spec.json", spec)?;
    Ok((w, sha))
}

fn load_rf(spec: &ExperimentSpec, dir: &Path) -> Result<(nlhr_core::phantom::RFFrameSet, String)> {
    let (rf, meta) = experiment::read_rf(dir)?;
    let acq = &spec.acquisition;
    if meta.sidecar.f_s != acq.sampling_frequency || meta.sidecar.prf != acq.prf || meta.sidecar.f0 != acq.center_frequency {
        return Err(Error::config(
            "acquisition",
            format!("RF in {} was recorded with a different acquisition", dir.display()),
        ));
    }
    Ok((experiment::resample(spec, &rf)?, meta.phantom_hash))
}

fn execute(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { spec, out } => {
            let spec = spec.load()?;
            let (mut w, spec_sha) = start(&spec, &out)?;
            let sim = experiment::simulate(&spec)?;
            let rf_sha = experiment::write_rf(&mut w, &spec, &sim)?;
            w.finish(manifest(
                &spec,
                StageHashes {
                    spec: spec_sha,
                    phantom: Some(sim.phantom_hash),
                    rf: Some(rf_sha),
                    ..Default::default()
                },
            ))?;
        }
        Command::Beamform { spec, input, out } => {
            let spec = spec.load()?;
            let (rf, phantom) = load_rf(&spec, &input)?;
            let (mut w, spec_sha) = start(&spec, &out)?;
            let ens = experiment::beamform(&spec, &rf, &[spec.beamformer()])?.remove(0);
            let bf_sha = experiment::write_beamformed(&mut w, &ens)?;
            w.finish(manifest(
                &spec,
                StageHashes {
                    spec: spec_sha,
                    phantom: Some(phantom),
                    beamformed: Some(bf_sha),
                    ..Default::default()
                },
            ))?;
        }
        Command::Estimate { spec, input, rf, out } => {
            let spec = spec.load()?;
            let ens = experiment::read_beamformed(&input)?;
            if ens.beamformer.tag() != spec.beamformer().tag() {
                return Err(Error::config(
                    "beamformer",
                    format!("{} holds {} data", input.display(), ens.beamformer.tag()),
                ));
            }
            let rf = rf.map(|d| load_rf(&spec, &d)).transpose()?;
            let (mut w, spec_sha) = start(&spec, &out)?;
            let est = experiment::estimate(&spec, &ens, rf.as_ref().map(|r| &r.0))?;
            w.write("sv_spectrum.csv", est.sv_spectrum.to_csv().as_bytes())?;
            let vel_sha = experiment::write_velocity(&mut w, &spec, &est.field)?;
            let mut m = manifest(
                &spec,
                StageHashes {
                    spec: spec_sha,
                    velocity: Some(vel_sha),
                    ..Default::default()
                },
            );
            m.k_removed = Some(est.k_removed);
            w.finish(m)?;
        }
        Command::Evaluate { spec, input, out } => {
            let spec = spec.load()?;
            let field = experiment::read_velocity(&input)?;
            let (mut w, spec_sha) = start(&spec, &out)?;
            let report = experiment::evaluate(&spec, &field)?;
            experiment::write_profile(&mut w, report.as_ref())?;
            let mut m = manifest(
                &spec,
                StageHashes {
                    spec: spec_sha,
                    velocity: Some(io::sha256_hex(&io::velocity_bytes(&field))),
                    ..Default::default()
                },
            );
            m.metrics = report.map(|r| r.summary);
            if let Some(s) = &m.metrics {
                println!(
                    "median bias {:.2}%  sd {:.2}%  angle bias {:.2} deg  angle sd {:.2} deg  ({} depths)",
                    s.median_bias, s.sd, s.median_angle_bias, s.angle_sd, s.n
                );
            }
            w.finish(m)?;
        }
        Command::Run {
            spec,
            out,
            save_intermediates,
        } => {
            let mut spec = spec.load()?;
            spec.outputs.save_intermediates |= save_intermediates;
            let m = experiment::run(&spec, &out)?;
            if let Some(s) = &m.metrics {
                println!(
                    "{}: median bias {:.2}%  sd {:.2}%  angle bias {:.2} deg  angle sd {:.2} deg",
                    m.beamformer, s.median_bias, s.sd, s.median_angle_bias, s.angle_sd
                );
            }
        }
        Command::Sweep {
            spec,
            axis,
            values,
            out,
        } => {
            let spec = spec.load()?;
            experiment::sweep(&spec, &axis, &values, &out)?;
            print!("{}", std::fs::read_to_string(out.join("comparison.csv"))?);
        }
        Command::SvSpectrum { spec, input, out } => {
            let spec = spec.load()?;
            let ens = experiment::read_beamformed(&input)?;
            let report = experiment::sv_spectrum(&spec, &ens)?;
            let (mut w, spec_sha) = start(&spec, &out)?;
            w.write("sv_spectrum.csv", report.to_csv().as_bytes())?;
            w.finish(manifest(
                &spec,
                StageHashes {
                    spec: spec_sha,
                    ..Default::default()
                },
            ))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(3);
        }
    }
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
