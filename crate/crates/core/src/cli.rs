//! Command-line front end.
//!
//! Exit codes: 0 success, 2 input error (unreadable or malformed files,
//! invalid configuration, label mismatches), 3 numeric failure (degenerate
//! fit, singular filter), 64 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::{Matrix2, Vector2};

use crate::error::{Error, Result};
use crate::geometry::Position;
use crate::kalman::{KalmanParams, KalmanState};
use crate::metrics::{
    error_2d, error_3d, mean_pairwise_error_2d, mean_pairwise_error_3d, ConfusionMatrix3,
};
use crate::particle::{LocalizationEngine, LocalizerMode, PfConfig};
use crate::pathloss::{fit_path_loss, fmt_num, FittedModel, PathLossModel};
use crate::proximity::{ProximityMode, ProximityPipeline};
use crate::simulator::{self, NoiseSpec, Trajectory};
use crate::trace_io::{self, ReportFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Parser)]
#[command(
    name = "beaconloc",
    version,
    about = "BLE beacon ranging, proximity and localization toolkit"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormatArg {
    Csv,
    Markdown,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Markdown => ReportFormat::Markdown,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Baseline,
    Sra,
    Skf,
}

impl From<ModeArg> for ProximityMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Baseline => ProximityMode::Baseline,
            ModeArg::Sra => ProximityMode::Sra,
            ModeArg::Skf => ProximityMode::Skf,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LocalizerArg {
    Pf,
    Kfpf,
}

impl From<LocalizerArg> for LocalizerMode {
    fn from(m: LocalizerArg) -> Self {
        match m {
            LocalizerArg::Pf => LocalizerMode::Pf,
            LocalizerArg::Kfpf => LocalizerMode::Kfpf,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalKind {
    Zones,
    Position2d,
    Position3d,
}

#[derive(Debug, Clone, clap::Args)]
pub struct KalmanArgs {
    #[arg(long, default_value_t = 0.2)]
    pub dt: f64,
    /// Process-noise variance (both diagonal entries).
    #[arg(long, default_value_t = 0.001)]
    pub q: f64,
    /// Measurement-noise variance.
    #[arg(long, default_value_t = 0.10)]
    pub r: f64,
    /// Initial error variance (both diagonal entries).
    #[arg(long, default_value_t = 100.0)]
    pub p0: f64,
}

impl KalmanArgs {
    fn params(&self) -> Result<KalmanParams> {
        let params = KalmanParams {
            dt: self.dt,
            q: Matrix2::from_diagonal(&Vector2::new(self.q, self.q)),
            r: self.r,
            p0: Matrix2::from_diagonal(&Vector2::new(self.p0, self.p0)),
        };
        params.validate()?;
        Ok(params)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a path-loss model to calibration points (`distance_m,rssi_dbm`).
    Fit {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        d0: f64,
        /// Also write the model record to this file.
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Kalman-smooth every beacon stream of a trace.
    Smooth {
        #[arg(long, short)]
        input: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        kalman: KalmanArgs,
    },
    /// Classify proximity zones per beacon stream.
    Classify {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, short)]
        input: PathBuf,
        /// Model record written by `fit`; defaults to the first office environment.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        kalman: KalmanArgs,
    },
    /// Track a target from a trace with the particle filter.
    Localize {
        #[arg(long, short)]
        input: PathBuf,
        /// Deployment JSON, or a scenario JSON whose deployment is used.
        #[arg(long)]
        deployment: PathBuf,
        #[arg(long, value_enum, default_value = "kfpf")]
        mode: LocalizerArg,
        #[arg(long, default_value_t = 1000)]
        particles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.25)]
        motion_sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        likelihood_sigma: f64,
        #[arg(long, default_value_t = 0.5)]
        ess_threshold: f64,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        kalman: KalmanArgs,
    },
    /// Generate a synthetic RSSI trace from a scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Overrides the scenario's noise seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the scenario's noise sigma (dB).
        #[arg(long)]
        sigma: Option<f64>,
        /// Stationary target `x,y[,z]` used when the scenario has no trajectory.
        #[arg(long, value_delimiter = ',')]
        target: Option<Vec<f64>>,
        #[arg(long, default_value_t = 10_000)]
        duration_ms: u64,
        /// Also write the true position at every tick (`t_ms,x_m,y_m[,z_m]`).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Compare predicted zones or positions against ground truth.
    Evaluate {
        #[arg(long, value_enum)]
        kind: EvalKind,
        #[arg(long)]
        actual: PathBuf,
        #[arg(long)]
        predicted: PathBuf,
        /// Column label for the method in zone reports.
        #[arg(long, default_value = "method")]
        method: String,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Run the particles x beacons sweep of a scenario, PF against KFPF.
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Overrides both the noise and the sweep seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads; the output does not depend on this.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long, value_enum, default_value = "csv")]
        format: FormatArg,
    },
    /// Run the three proximity pipelines at fixed distances and report zone metrics.
    Experiment {
        /// Model record written by `fit`; defaults to the first office environment
        #[arg(long)]
        model: Option<PathBuf>,
        /// Noise standard deviation (dB)
        #[arg(long, default_value_t = 3.0)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Decisions recorded per distance
        #[arg(long, default_value_t = 20)]
        samples: usize,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            if code == EXIT_OK {
                let _ = write!(stdout, "{}", e.render());
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    match execute(cli.command, stdout) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::DegenerateFit(_) | Error::SingularInnovation(_) => EXIT_NUMERIC,
        _ => EXIT_INPUT,
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn with_output<F>(path: Option<&Path>, stdout: &mut dyn Write, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            let mut w = BufWriter::new(file);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => f(stdout),
    }
}

fn load_model(path: Option<&Path>) -> Result<PathLossModel> {
    match path {
        None => Ok(PathLossModel::environment_one()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
            Ok(text.parse::<FittedModel>()?.model)
        }
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

fn execute(command: Command, stdout: &mut dyn Write) -> Result<()> {
    match command {
        Command::Fit { input, d0, output } => {
            let points = trace_io::read_calibration(open(&input)?)?;
            if points.is_empty() {
                return Err(Error::EmptyInput("calibration file has no rows".into()));
            }
            let fitted = fit_path_loss(&points, d0)?;
            writeln!(stdout, "{fitted}")?;
            if let Some(path) = output {
                std::fs::write(
                    &path,
                    format!("# format_version={}\n{fitted}\n", trace_io::FORMAT_VERSION),
                )?;
            }
            Ok(())
        }
        Command::Smooth {
            input,
            output,
            kalman,
        } => {
            let params = kalman.params()?;
            let trace = trace_io::read_trace(open(&input)?)?;
            let mut filters: BTreeMap<String, KalmanState> = BTreeMap::new();
            with_output(output.as_deref(), stdout, |w| {
                writeln!(w, "# format_version={}", trace_io::FORMAT_VERSION)?;
                let mut wtr = csv::Writer::from_writer(w);
                wtr.write_record(["t_ms", "beacon_id", "rssi_dbm", "rssi_filtered_dbm"])
                    .map_err(csv_err)?;
                for s in &trace.samples {
                    let state = match filters.get(&s.beacon_id) {
                        Some(state) => state.step(&params, s.rssi)?,
                        None => KalmanState::new(&params, s.rssi),
                    };
                    filters.insert(s.beacon_id.clone(), state);
                    wtr.write_record([
                        s.t_ms.to_string(),
                        s.beacon_id.clone(),
                        fmt_num(s.rssi),
                        fmt_num(state.rssi()),
                    ])
                    .map_err(csv_err)?;
                }
                wtr.flush()?;
                Ok(())
            })
        }
        Command::Classify {
            mode,
            input,
            model,
            output,
            kalman,
        } => {
            let model = load_model(model.as_deref())?;
            let params = kalman.params()?;
            let trace = trace_io::read_trace(open(&input)?)?;
            let mut pipelines: BTreeMap<String, ProximityPipeline> = BTreeMap::new();
            with_output(output.as_deref(), stdout, |w| {
                writeln!(w, "# format_version={}", trace_io::FORMAT_VERSION)?;
                let mut wtr = csv::Writer::from_writer(w);
                wtr.write_record([
                    "t_ms",
                    "beacon_id",
                    "inst_zone",
                    "decided_zone",
                    "est_distance_m",
                ])
                .map_err(csv_err)?;
                for s in &trace.samples {
                    let pipeline = match pipelines.get_mut(&s.beacon_id) {
                        Some(p) => p,
                        None => pipelines
                            .entry(s.beacon_id.clone())
                            .or_insert(ProximityPipeline::with_kalman(mode.into(), model, params)?),
                    };
                    let d = pipeline.step(s.rssi)?;
                    wtr.write_record([
                        s.t_ms.to_string(),
                        s.beacon_id.clone(),
                        d.instantaneous_zone.to_string(),
                        d.decided_zone.to_string(),
                        fmt_num(d.est_distance),
                    ])
                    .map_err(csv_err)?;
                }
                wtr.flush()?;
                Ok(())
            })
        }
        Command::Localize {
            input,
            deployment,
            mode,
            particles,
            seed,
            motion_sigma,
            likelihood_sigma,
            ess_threshold,
            output,
            kalman,
        } => {
            let deployment = trace_io::read_deployment_or_scenario(open(&deployment)?)?;
            let trace = trace_io::read_trace(open(&input)?)?;
            let config = PfConfig {
                n_particles: particles,
                bounds: deployment.bounds,
                dim: deployment.dim,
                motion_sigma,
                likelihood_sigma,
                ess_threshold,
                seed,
            };
            let mut engine = LocalizationEngine::new(
                config,
                deployment.positions(),
                deployment.models(),
                kalman.params()?,
            )?;
            let mut estimates = Vec::new();
            for (t, snap) in simulator::snapshots(&trace.samples) {
                estimates.push((t, engine.step(mode.into(), &snap)?.estimate));
            }
            with_output(output.as_deref(), stdout, |w| {
                trace_io::write_estimates(&estimates, deployment.dim, w)
            })
        }
        Command::Simulate {
            scenario,
            output,
            seed,
            sigma,
            target,
            duration_ms,
            truth,
        } => {
            let scenario = trace_io::read_scenario(open(&scenario)?)?;
            let mut noise: NoiseSpec = scenario.noise;
            if let Some(seed) = seed {
                noise.seed = seed;
            }
            if let Some(sigma) = sigma {
                noise.sigma = sigma;
            }
            let trajectory = match (scenario.trajectory, target) {
                (_, Some(t)) => {
                    let dim = scenario.deployment.dim;
                    if t.len() != dim.axes() {
                        return Err(Error::InvalidParams(format!(
                            "--target needs {} coordinates",
                            dim.axes()
                        )));
                    }
                    let pos = Position::new(t[0], t[1], t.get(2).copied().unwrap_or(0.0));
                    Trajectory::stationary(pos, duration_ms)
                }
                (Some(traj), None) => traj,
                (None, None) => {
                    return Err(Error::InvalidParams(
                        "scenario has no trajectory; pass --target".into(),
                    ))
                }
            };
            let trace = simulator::generate_trace(
                &scenario.deployment,
                &trajectory,
                &noise,
                scenario.period_ms,
            )?;
            if let Some(path) = truth {
                let ticks = (trajectory.start_ms()..=trajectory.end_ms())
                    .step_by(scenario.period_ms as usize);
                let positions: Vec<_> = ticks.map(|t| (t, trajectory.position_at(t))).collect();
                with_output(Some(&path), stdout, |w| {
                    trace_io::write_estimates(&positions, scenario.deployment.dim, w)
                })?;
            }
            with_output(output.as_deref(), stdout, |w| {
                trace_io::write_trace(&trace, w)
            })
        }
        Command::Evaluate {
            kind,
            actual,
            predicted,
            method,
            format,
            output,
        } => match kind {
            EvalKind::Zones => {
                let a = trace_io::read_zone_labels(open(&actual)?)?;
                let p = trace_io::read_zone_labels(open(&predicted)?)?;
                let cm = ConfusionMatrix3::build(&a, &p)?;
                with_output(output.as_deref(), stdout, |w| {
                    trace_io::write_zone_report(&[(method.as_str(), cm)], w, format.into())
                })
            }
            EvalKind::Position2d | EvalKind::Position3d => {
                let (_, a) = trace_io::read_positions(open(&actual)?)?;
                let (_, p) = trace_io::read_positions(open(&predicted)?)?;
                let rows = if matches!(kind, EvalKind::Position2d) {
                    let a: Vec<_> = a.iter().map(|v| v.xy()).collect();
                    let p: Vec<_> = p.iter().map(|v| v.xy()).collect();
                    vec![
                        ("e2d", Some(error_2d(&a, &p)?)),
                        ("e2d_per_sample_mean", mean_pairwise_error_2d(&a, &p).ok()),
                    ]
                } else {
                    vec![
                        ("e3d", Some(error_3d(&a, &p)?)),
                        ("e3d_per_sample_mean", mean_pairwise_error_3d(&a, &p).ok()),
                    ]
                };
                with_output(output.as_deref(), stdout, |w| {
                    write_metric_rows(&rows, w, format.into())
                })
            }
        },
        Command::Sweep {
            scenario,
            output,
            seed,
            jobs,
            format,
        } => {
            if jobs == 0 {
                return Err(Error::InvalidParams("--jobs must be >= 1".into()));
            }
            let scenario = trace_io::read_scenario(open(&scenario)?)?;
            let mut sweep = scenario.sweep.clone().ok_or_else(|| Error::Config {
                path: "sweep".into(),
                message: "scenario has no sweep section".into(),
            })?;
            let mut noise = scenario.noise;
            if let Some(seed) = seed {
                sweep.seed = seed;
                noise.seed = seed;
            }
            let result =
                simulator::run_sweep(&scenario.deployment, &sweep, &noise, &scenario.kalman, jobs)?;
            with_output(output.as_deref(), stdout, |w| {
                trace_io::write_report(&result, w, format.into())
            })
        }
        Command::Experiment {
            model,
            sigma,
            seed,
            samples,
            format,
            output,
        } => {
            let model = load_model(model.as_deref())?;
            let noise = NoiseSpec {
                sigma,
                seed,
                ..NoiseSpec::default()
            };
            let exp = simulator::proximity_experiment(
                &model,
                &simulator::PROXIMITY_DISTANCES_M,
                samples,
                &noise,
            )?;
            let methods: Vec<(&str, ConfusionMatrix3)> = ProximityMode::ALL
                .iter()
                .map(|&m| (m.as_str(), *exp.get(m)))
                .collect();
            with_output(output.as_deref(), stdout, |w| {
                trace_io::write_zone_report(&methods, w, format.into())
            })
        }
    }
}

fn write_metric_rows(
    rows: &[(&str, Option<f64>)],
    w: &mut dyn Write,
    format: ReportFormat,
) -> Result<()> {
    let cell = |v: Option<f64>| {
        v.map(fmt_num)
            .unwrap_or_else(|| trace_io::UNDEFINED.to_string())
    };
    match format {
        ReportFormat::Csv => {
            writeln!(w, "# format_version={}", trace_io::FORMAT_VERSION)?;
            writeln!(w, "metric,value_m")?;
            for (name, v) in rows {
                writeln!(w, "{name},{}", cell(*v))?;
            }
        }
        ReportFormat::Markdown => {
            writeln!(w, "| metric | value_m |")?;
            writeln!(w, "|---|---|")?;
            for (name, v) in rows {
                writeln!(w, "| {name} | {} |", cell(*v))?;
            }
        }
    }
    Ok(())
}
