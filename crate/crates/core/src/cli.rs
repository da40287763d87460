//! Command-line front end.
//!
//! Thin, single-threaded orchestration: parse a problem file, run one of
//! validate / synthesize / simulate / sweep, and write CSV/JSON artifacts.
//! Every run echoes the problem digest and any seeds so results can be
//! reproduced from the log alone. Files are written atomically (temp +
//! rename). Exit codes: 0 success, 1 validation failure, 2 parse error,
//! 3 numerical failure.

use crate::dynamics::{
    propagate_deterministic, propagate_gaussian, propagate_viscous, sample_initial,
    MeasureSnapshot, MeasureTrajectory, ViscousOptions,
};
use crate::error::Error;
use crate::lab::{self, format_float, Representation, SweepConfig};
use crate::matkit::Mat;
use crate::problem::{validate, InitialMeasure, ProblemSpec};
use crate::synthesis::{synthesize, AffineFeedback, MatCurve, SynthesisSolution, TimeGrid, VecCurve};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "mflq", version, about = "Mean-field LQ control toolkit")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum ControlChoice {
    Optimal,
    Zero,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing assumptions of a problem file.
    Validate {
        problem: PathBuf,
    },
    /// Solve the Riccati cascade and dump the synthesis curves.
    Synthesize {
        problem: PathBuf,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        #[arg(long)]
        output: PathBuf,
    },
    /// Propagate the measure flow at one viscosity and dump the trajectory.
    Simulate {
        problem: PathBuf,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        #[arg(long, default_value_t = 0.0)]
        eps: f64,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "optimal")]
        control: ControlChoice,
        /// Force the Gaussian closed-form representation.
        #[arg(long, conflicts_with = "particles")]
        gaussian: bool,
        /// Force the particle-ensemble representation.
        #[arg(long)]
        particles: bool,
        #[arg(long)]
        output: PathBuf,
    },
    /// Vanishing-viscosity sweep: CSV report plus JSON sidecar.
    Sweep {
        problem: PathBuf,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
        /// Comma-separated viscosities, strictly decreasing.
        #[arg(long, value_delimiter = ',', required = true)]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, conflicts_with = "particles")]
        gaussian: bool,
        #[arg(long)]
        particles: bool,
        /// Omit the wall-clock field so reruns are byte-identical.
        #[arg(long)]
        no_timestamp: bool,
        #[arg(long)]
        output: PathBuf,
    },
}

fn classify(err: &Error) -> (i32, &'static str) {
    match err {
        Error::Parse { .. } | Error::ShapeMismatch { .. } | Error::InvalidConfig { .. } => {
            (2, "parse")
        }
        _ => (3, "numerical"),
    }
}

fn fail(err: &Error) -> i32 {
    let (code, kind) = classify(err);
    eprintln!("error kind={kind} exit={code} msg=\"{err}\"");
    code
}

fn load_spec(path: &Path) -> Result<ProblemSpec, Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Parse { msg: format!("cannot read {}: {e}", path.display()) })?;
    ProblemSpec::from_json_str(&text)
}

/// Write via a sibling temp file and rename, so readers never observe a
/// partial artifact.
fn write_atomic(path: &Path, contents: &str) -> Result<(), Error> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = dir.join(format!(
        ".{}.tmp{}",
        path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default(),
        std::process::id()
    ));
    let io = |e: std::io::Error| Error::Parse { msg: format!("cannot write {}: {e}", path.display()) };
    std::fs::write(&tmp, contents).map_err(io)?;
    std::fs::rename(&tmp, path).map_err(io)
}

fn representation(spec: &ProblemSpec, gaussian: bool, particles: bool, samples: usize) -> Representation {
    let default_gaussian = matches!(spec.initial, InitialMeasure::Gaussian { .. });
    if gaussian || (default_gaussian && !particles) {
        Representation::Gaussian
    } else {
        Representation::Empirical { samples }
    }
}

fn matrix_header(out: &mut String, name: &str, rows: usize, cols: usize) {
    for i in 0..rows {
        for j in 0..cols {
            out.push_str(&format!(",{name}_{i}_{j}"));
        }
    }
}

fn push_matrix(out: &mut String, m: &Mat) {
    for v in m.data() {
        out.push(',');
        out.push_str(&format_float(*v));
    }
}

fn push_vector(out: &mut String, v: &[f64]) {
    for x in v {
        out.push(',');
        out.push_str(&format_float(*x));
    }
}

/// Synthesis dump: one row per node with t, row-major Sigma, P, K, then
/// p, k, xbar, ybar.
pub fn synthesis_csv(solution: &SynthesisSolution, feedback: &AffineFeedback, d: usize) -> String {
    let mut out = String::from("t");
    matrix_header(&mut out, "Sigma", d, d);
    matrix_header(&mut out, "P", d, d);
    matrix_header(&mut out, "K", d, d);
    for name in ["p", "k", "xbar", "ybar"] {
        for i in 0..d {
            out.push_str(&format!(",{name}_{i}"));
        }
    }
    out.push('\n');
    for i in 0..=solution.grid.steps() {
        out.push_str(&format_float(solution.grid.node(i)));
        push_matrix(&mut out, &solution.sigma.values[i]);
        push_matrix(&mut out, &solution.riccati_p.values[i]);
        push_matrix(&mut out, feedback.gain_at_node(i));
        push_vector(&mut out, &solution.offset_p.values[i]);
        push_vector(&mut out, feedback.offset_at_node(i));
        push_vector(&mut out, &solution.xbar.values[i]);
        push_vector(&mut out, &solution.ybar[i]);
        out.push('\n');
    }
    out
}

/// Trajectory dump: `t,particle,x_0..` for ensembles, `t,m_0..,C_0_0..` for
/// Gaussian flows.
pub fn trajectory_csv(traj: &MeasureTrajectory) -> String {
    let d = traj.snapshots[0].dimension();
    let mut out = String::from("t");
    match &traj.snapshots[0] {
        MeasureSnapshot::Empirical { .. } => {
            out.push_str(",particle");
            for i in 0..d {
                out.push_str(&format!(",x_{i}"));
            }
            out.push('\n');
            for (i, snap) in traj.snapshots.iter().enumerate() {
                let t = format_float(traj.grid.node(i));
                if let MeasureSnapshot::Empirical { points } = snap {
                    for (p, x) in points.iter().enumerate() {
                        out.push_str(&format!("{t},{p}"));
                        push_vector(&mut out, x);
                        out.push('\n');
                    }
                }
            }
        }
        MeasureSnapshot::Gaussian { .. } => {
            for i in 0..d {
                out.push_str(&format!(",m_{i}"));
            }
            matrix_header(&mut out, "C", d, d);
            out.push('\n');
            for (i, snap) in traj.snapshots.iter().enumerate() {
                out.push_str(&format_float(traj.grid.node(i)));
                if let MeasureSnapshot::Gaussian { mean, cov } = snap {
                    push_vector(&mut out, mean);
                    push_matrix(&mut out, cov);
                }
                out.push('\n');
            }
        }
    }
    out
}

fn zero_feedback(d: usize, grid: TimeGrid) -> AffineFeedback {
    let nodes = grid.steps() + 1;
    AffineFeedback {
        gain: MatCurve {
            grid,
            values: vec![Mat::zeros(d, d); nodes],
            slopes: vec![Mat::zeros(d, d); nodes],
        },
        offset: VecCurve { grid, values: vec![vec![0.0; d]; nodes], slopes: vec![vec![0.0; d]; nodes] },
    }
}

fn run_command(cmd: Command) -> Result<i32, Error> {
    match cmd {
        Command::Validate { problem } => {
            let spec = load_spec(&problem)?;
            let report = validate(&spec)?;
            println!("digest {}", spec.digest());
            if report.ok() {
                println!("ok");
                Ok(0)
            } else {
                for v in &report.violations {
                    println!("violation {} at {} magnitude {:.6e}", v.condition, v.at, v.magnitude);
                }
                eprintln!(
                    "error kind=validation exit=1 msg=\"{} violated at {}\"",
                    report.violations[0].condition, report.violations[0].at
                );
                Ok(1)
            }
        }
        Command::Synthesize { problem, grid, output } => {
            let spec = load_spec(&problem)?;
            require_valid(&spec)?;
            let tg = TimeGrid::new(grid, spec.horizon);
            let (solution, feedback) = synthesize(&spec, tg)?;
            write_atomic(&output, &synthesis_csv(&solution, &feedback, spec.dimension))?;
            println!("digest {}", spec.digest());
            println!("grid {grid}");
            println!("wrote {}", output.display());
            Ok(0)
        }
        Command::Simulate {
            problem,
            grid,
            eps,
            samples,
            seed,
            control,
            gaussian,
            particles,
            output,
        } => {
            let spec = load_spec(&problem)?;
            require_valid(&spec)?;
            if eps < 0.0 {
                return Err(Error::InvalidConfig { msg: "eps must be nonnegative".into() });
            }
            let tg = TimeGrid::new(grid, spec.horizon);
            let fb = match control {
                ControlChoice::Optimal => synthesize(&spec, tg)?.1,
                ControlChoice::Zero => zero_feedback(spec.dimension, tg),
            };
            let traj = match representation(&spec, gaussian, particles, samples) {
                Representation::Gaussian => {
                    let init = match &spec.initial {
                        InitialMeasure::Gaussian { mean, cov } => {
                            MeasureSnapshot::Gaussian { mean: mean.clone(), cov: cov.clone() }
                        }
                        _ => {
                            return Err(Error::InvalidConfig {
                                msg: "--gaussian requires a Gaussian initial measure".into(),
                            })
                        }
                    };
                    propagate_gaussian(&spec, &fb, &init, eps, tg)?
                }
                Representation::Empirical { samples } => {
                    let init = sample_initial(&spec.initial, samples, seed)?;
                    if eps > 0.0 {
                        let opts = ViscousOptions { eps, samples, seed };
                        propagate_viscous(&spec, &fb, &init, &opts, tg)?
                    } else {
                        propagate_deterministic(&spec, &fb, &init, tg)?
                    }
                }
            };
            write_atomic(&output, &trajectory_csv(&traj))?;
            println!("digest {}", spec.digest());
            println!("grid {grid} eps {} seed {seed}", format_float(eps));
            println!("wrote {}", output.display());
            Ok(0)
        }
        Command::Sweep {
            problem,
            grid,
            eps,
            samples,
            seed,
            gaussian,
            particles,
            no_timestamp,
            output,
        } => {
            let spec = load_spec(&problem)?;
            require_valid(&spec)?;
            let cfg = SweepConfig {
                eps_list: eps,
                grid_steps: grid,
                representation: representation(&spec, gaussian, particles, samples),
                seed,
                perturbations: 0,
            };
            let report = lab::epsilon_sweep(&spec, &cfg)?;
            write_atomic(&output, &lab::sweep_csv(&report))?;
            let timestamp = if no_timestamp {
                None
            } else {
                Some(
                    std::time::SystemTime::now()
                        .duration_since(std::time::UNIX_EPOCH)
                        .map(|d| d.as_secs())
                        .unwrap_or(0),
                )
            };
            let sidecar_path = sidecar_of(&output);
            let sidecar = lab::sweep_sidecar(&report, timestamp);
            write_atomic(&sidecar_path, &format!("{:#}\n", sidecar))?;
            println!("digest {}", report.spec_digest);
            println!("grid {grid} seed {seed}");
            for (i, s) in report.eps_seeds.iter().enumerate() {
                println!("eps_seed {i} {s}");
            }
            println!("wrote {}", output.display());
            println!("wrote {}", sidecar_path.display());
            Ok(0)
        }
    }
}

fn require_valid(spec: &ProblemSpec) -> Result<(), Error> {
    let report = validate(spec)?;
    if report.ok() {
        return Ok(());
    }
    let v = &report.violations[0];
    Err(Error::InvalidConfig { msg: format!("{} violated at {}", v.condition, v.at) })
}

fn sidecar_of(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Parse arguments and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // clap handles --help/--version by "erroring" with exit 0.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run_command(cli.command) {
        Ok(code) => code,
        Err(err) => {
            // A validation failure surfaced as InvalidConfig from a
            // subcommand other than `validate` still exits 1.
            if let Error::InvalidConfig { msg } = &err {
                if msg.contains("violated at") {
                    eprintln!("error kind=validation exit=1 msg=\"{msg}\"");
                    return 1;
                }
            }
            fail(&err)
        }
    }
}
