//! `impdmp` — learn variable-impedance skills from demonstration files,
//! generalize them to new goals, validate them in simulation, and export
//! plot-ready data.
//!
//! Subcommands: `learn`, `generalize`, `simulate`, `export`. Set `IMPDMP_LOG`
//! (e.g. `info`, `debug`) to control log verbosity. Exit codes: 0 on success,
//! 1 for invalid inputs, 2 for malformed files or arguments, 3 for numerical
//! failures.

mod csv;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::{Vector3, Vector6};

use impdmp_core::bundle::{ModelLayout, PipelineConfig, SkillBundle, VarianceSource};
use impdmp_core::dmp::{GoalOverride, Trajectory};
use impdmp_core::error::{Error, Result};
use impdmp_core::pipeline::{bundle_reference, generalize, learn_skill};
use impdmp_core::preprocess::{load_demonstration_file, Demonstration};
use impdmp_core::quaternion::UnitQuaternion;
use impdmp_core::vic::{
    load_disturbances, simulate, with_constant_stiffness, Pose, SimBody, SimOptions,
};

#[derive(Parser)]
#[command(
    name = "impdmp",
    about = "Variable-impedance skill learning from demonstrations",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a skill bundle from a directory of demonstration CSV files.
    Learn(LearnArgs),
    /// Roll out a learned skill, optionally with new goals or duration.
    Generalize(GeneralizeArgs),
    /// Track a reference in the impedance-controlled rigid-body simulator.
    Simulate(SimulateArgs),
    /// Write a bundle's plot-ready CSV views (trajectory, stiffness, bases).
    Export(ExportArgs),
}

#[derive(Args)]
struct ConfigFlags {
    /// Common duration all demonstrations are aligned to, seconds.
    #[arg(long = "T", value_name = "SECONDS")]
    t_scale: Option<f64>,
    /// Grid samples after alignment.
    #[arg(long = "M", value_name = "COUNT")]
    samples: Option<usize>,
    /// Mixture components.
    #[arg(long = "H", value_name = "COUNT")]
    components: Option<usize>,
    /// Basis functions per forcing dimension.
    #[arg(long = "S", value_name = "COUNT")]
    basis_count: Option<usize>,
    /// Seed for mixture initialization.
    #[arg(long)]
    seed: Option<u64>,
    /// Minimal translational stiffness, N/m.
    #[arg(long = "k-min-t", value_name = "N_PER_M")]
    k_min_t: Option<f64>,
    /// Maximal translational stiffness, N/m.
    #[arg(long = "k-max-t", value_name = "N_PER_M")]
    k_max_t: Option<f64>,
    /// Minimal rotational stiffness, N·m/rad.
    #[arg(long = "k-min-r", value_name = "NM_PER_RAD")]
    k_min_r: Option<f64>,
    /// Maximal rotational stiffness, N·m/rad.
    #[arg(long = "k-max-r", value_name = "NM_PER_RAD")]
    k_max_r: Option<f64>,
    /// Where the spread driving stiffness comes from.
    #[arg(long, value_enum)]
    variance_source: Option<VarianceSourceFlag>,
    /// One joint 7-D mixture, or separate position/orientation mixtures.
    #[arg(long, value_enum)]
    model_layout: Option<ModelLayoutFlag>,
    /// Moving-average window over the spread series; 0 disables.
    #[arg(long, value_name = "SAMPLES")]
    smoothing_window: Option<usize>,
}

impl ConfigFlags {
    fn apply(&self, mut config: PipelineConfig) -> PipelineConfig {
        if let Some(v) = self.t_scale {
            config.t_scale = v;
        }
        if let Some(v) = self.samples {
            config.samples = v;
        }
        if let Some(v) = self.components {
            config.components = v;
        }
        if let Some(v) = self.basis_count {
            config.basis_count = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.k_min_t {
            config.bounds.translational.min = v;
        }
        if let Some(v) = self.k_max_t {
            config.bounds.translational.max = v;
        }
        if let Some(v) = self.k_min_r {
            config.bounds.rotational.min = v;
        }
        if let Some(v) = self.k_max_r {
            config.bounds.rotational.max = v;
        }
        if let Some(v) = self.variance_source {
            config.variance_source = v.into();
        }
        if let Some(v) = self.model_layout {
            config.model_layout = v.into();
        }
        if let Some(v) = self.smoothing_window {
            config.smoothing_window = v;
        }
        config
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum VarianceSourceFlag {
    /// Conditional variance regressed through the mixture.
    Gmr,
    /// Across-demonstration sample standard deviation per grid point.
    Empirical,
}

impl From<VarianceSourceFlag> for VarianceSource {
    fn from(v: VarianceSourceFlag) -> Self {
        match v {
            VarianceSourceFlag::Gmr => VarianceSource::Gmr,
            VarianceSourceFlag::Empirical => VarianceSource::Empirical,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelLayoutFlag {
    Joint,
    Separate,
}

impl From<ModelLayoutFlag> for ModelLayout {
    fn from(v: ModelLayoutFlag) -> Self {
        match v {
            ModelLayoutFlag::Joint => ModelLayout::Joint,
            ModelLayoutFlag::Separate => ModelLayout::Separate,
        }
    }
}

#[derive(Args)]
struct LearnArgs {
    /// Directory containing one CSV file per demonstration.
    demos: PathBuf,
    /// Output bundle path.
    #[arg(long, default_value = "bundle.json")]
    out: PathBuf,
    #[command(flatten)]
    config: ConfigFlags,
}

#[derive(Args)]
struct GeneralizeArgs {
    /// Skill bundle produced by `learn`.
    bundle: PathBuf,
    /// Output trajectory CSV path.
    #[arg(long, default_value = "trajectory.csv")]
    out: PathBuf,
    /// New position goal as `x,y,z` (meters).
    #[arg(long, value_parser = parse_vector3, value_name = "X,Y,Z")]
    goal_pos: Option<Vector3<f64>>,
    /// New orientation goal as `w,x,y,z` (normalized on input).
    #[arg(long, value_parser = parse_quat, value_name = "W,X,Y,Z")]
    goal_quat: Option<UnitQuaternion>,
    /// New stiffness goal as six comma-separated values
    /// `kx,ky,kz,krx,kry,krz`; must respect the learned bounds.
    #[arg(long, value_parser = parse_vector6, value_name = "K1,..,K6")]
    goal_stiffness: Option<Vector6<f64>>,
    /// Duration multiplier: 2.0 plays the skill at half speed.
    #[arg(long, value_name = "FACTOR")]
    tau: Option<f64>,
    /// Integration step, seconds.
    #[arg(long, default_value_t = 1e-3, value_name = "SECONDS")]
    dt: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum StiffnessMode {
    /// The stiffness carried by the reference itself.
    Variable,
    /// Constant minimum stiffness (softest).
    Min,
    /// Constant maximum stiffness (stiffest).
    Max,
}

#[derive(Args)]
struct SimulateArgs {
    /// Skill bundle (`.json`) or trajectory CSV from `generalize`.
    input: PathBuf,
    /// Output trace CSV path.
    #[arg(long, default_value = "trace.csv")]
    out: PathBuf,
    /// Stiffness schedule to track with.
    #[arg(long, value_enum, default_value_t = StiffnessMode::Variable)]
    stiffness_mode: StiffnessMode,
    /// JSON list of `{"t_on", "t_off", "force": [..], "torque": [..]}`.
    #[arg(long, value_name = "FILE")]
    disturbances: Option<PathBuf>,
    /// Target integration step, seconds; snapped to the nearest value that
    /// divides the reference grid step evenly.
    #[arg(long, default_value_t = 1e-3, value_name = "SECONDS")]
    dt: f64,
}

#[derive(Args)]
struct ExportArgs {
    /// Skill bundle produced by `learn`.
    bundle: PathBuf,
    /// Directory the CSV files are written into.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn parse_floats(text: &str, expected: usize) -> std::result::Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != expected {
        return Err(format!(
            "expected {expected} comma-separated numbers, got {}",
            parts.len()
        ));
    }
    parts
        .iter()
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| format!("bad number `{}`: {e}", p.trim()))
        })
        .collect()
}

fn parse_vector3(text: &str) -> std::result::Result<Vector3<f64>, String> {
    let v = parse_floats(text, 3)?;
    Ok(Vector3::new(v[0], v[1], v[2]))
}

fn parse_vector6(text: &str) -> std::result::Result<Vector6<f64>, String> {
    let v = parse_floats(text, 6)?;
    Ok(Vector6::new(v[0], v[1], v[2], v[3], v[4], v[5]))
}

fn parse_quat(text: &str) -> std::result::Result<UnitQuaternion, String> {
    let v = parse_floats(text, 4)?;
    UnitQuaternion::new(v[0], v[1], v[2], v[3]).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("IMPDMP_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Learn(args) => cmd_learn(&args),
        Command::Generalize(args) => cmd_generalize(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Export(args) => cmd_export(&args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

/// Loads every `.csv` file in `dir`, sorted by file name so repeat runs see
/// the demonstrations in the same order.
fn load_demo_dir(dir: &Path) -> Result<Vec<Demonstration>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|entry| entry.path())
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Validation(format!(
            "no .csv demonstration files found in {}",
            dir.display()
        )));
    }
    log::info!("loading {} demonstration files from {}", paths.len(), dir.display());
    paths.iter().map(|p| load_demonstration_file(p)).collect()
}

fn cmd_learn(args: &LearnArgs) -> Result<()> {
    let demos = load_demo_dir(&args.demos)?;
    if demos.len() < 2 {
        return Err(Error::Validation(format!(
            "learning needs at least 2 demonstrations, found {} in {}",
            demos.len(),
            args.demos.display()
        )));
    }
    let config = args.config.apply(PipelineConfig::default());
    let bundle = learn_skill(&demos, &config)?;
    bundle.save(&args.out)?;

    let s = &bundle.summary;
    println!("learned from {} demonstrations -> {}", s.demo_count, args.out.display());
    for em in &s.em {
        println!(
            "  em[{}]: {} iterations, converged: {}, mean log-likelihood {:.6}",
            em.name, em.iterations, em.converged, em.final_log_likelihood
        );
    }
    println!("  axis      spread min   spread max   k start    k goal");
    for (a, label) in ["px", "py", "pz", "rx", "ry", "rz"].iter().enumerate() {
        println!(
            "  {label}    {:12.6} {:12.6} {:9.2} {:9.2}",
            s.stddev_min[a], s.stddev_max[a], s.stiffness_start[a], s.stiffness_goal[a]
        );
    }
    if !s.degenerate_axes.is_empty() {
        println!("  degenerate axes (held at mid-bounds): {:?}", s.degenerate_axes);
    }
    let r = &s.reproduction;
    println!(
        "  reproduction: position rmse {:.6} m ({:.2}% of extent), orientation rmse {:.6} rad, stiffness rmse {:.2}% of range",
        r.position_rmse,
        100.0 * r.position_rmse / r.position_extent.max(f64::MIN_POSITIVE),
        r.orientation_rmse,
        100.0 * r.stiffness_rmse_ratio
    );
    Ok(())
}

fn cmd_generalize(args: &GeneralizeArgs) -> Result<()> {
    let bundle = SkillBundle::load(&args.bundle)?;
    let mut overrides = GoalOverride {
        position: args.goal_pos,
        orientation: args.goal_quat,
        stiffness: args.goal_stiffness,
        tau: None,
    };
    if let Some(factor) = args.tau {
        if !(factor.is_finite() && factor > 0.0) {
            return Err(Error::Validation(format!(
                "duration factor must be positive, got {factor}"
            )));
        }
        overrides.tau = Some(factor * bundle.config.t_scale);
    }
    let traj = generalize(&bundle, &overrides, args.dt)?;
    csv::write_trajectory(&args.out, &traj)?;
    let p = traj.positions.last().unwrap();
    println!(
        "wrote {} rows to {} (final position {:.4}, {:.4}, {:.4})",
        traj.len(),
        args.out.display(),
        p.x,
        p.y,
        p.z
    );
    Ok(())
}

/// Snaps `target` to the nearest step that divides `grid_step` an integer
/// number of times, as the simulator requires.
fn divisible_dt(grid_step: f64, target: f64) -> Result<f64> {
    if !(target.is_finite() && target > 0.0) {
        return Err(Error::Validation(format!(
            "integration step must be positive, got {target}"
        )));
    }
    let substeps = (grid_step / target).round().max(1.0);
    Ok(grid_step / substeps)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let is_bundle = args
        .input
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let (reference, bounds) = if is_bundle {
        let bundle = SkillBundle::load(&args.input)?;
        (bundle_reference(&bundle)?, Some(bundle.config.bounds))
    } else {
        (csv::read_trajectory(&args.input)?, None)
    };

    // Constant modes use the learned bounds when available; a bare CSV
    // carries no bounds, so its own per-axis extremes stand in.
    let reference = match args.stiffness_mode {
        StiffnessMode::Variable => reference,
        StiffnessMode::Min => {
            let k = bounds.map(|b| b.min_vector()).unwrap_or_else(|| {
                fold_stiffness(&reference, |a, b| a.min(b))
            });
            with_constant_stiffness(&reference, k)
        }
        StiffnessMode::Max => {
            let k = bounds.map(|b| b.max_vector()).unwrap_or_else(|| {
                fold_stiffness(&reference, |a, b| a.max(b))
            });
            with_constant_stiffness(&reference, k)
        }
    };

    let disturbances = match &args.disturbances {
        Some(path) => load_disturbances(path)?,
        None => Vec::new(),
    };
    let body = SimBody::at_rest(Pose {
        position: reference.positions[0],
        orientation: reference.quaternions[0],
    });
    let grid_step = reference.t[1] - reference.t[0];
    let dt = divisible_dt(grid_step, args.dt)?;
    log::info!("integration step {dt} s ({} per grid interval)", (grid_step / dt).round());
    let options = SimOptions {
        dt,
        ..Default::default()
    };
    let trace = simulate(&reference, &body, &disturbances, &options)?;
    csv::write_trace(&args.out, &trace)?;

    let errors = trace.mean_abs_error_between(trace.t[0], *trace.t.last().unwrap());
    println!("wrote {} rows to {}", trace.len(), args.out.display());
    println!("mean |error| per axis over the whole run:");
    for (a, label) in ["px (m)", "py (m)", "pz (m)", "rx (rad)", "ry (rad)", "rz (rad)"]
        .iter()
        .enumerate()
    {
        println!("  {label:9} {:.6}", errors[a]);
    }
    Ok(())
}

fn fold_stiffness(traj: &Trajectory, pick: fn(f64, f64) -> f64) -> Vector6<f64> {
    let mut out = traj.stiffness[0];
    for k in &traj.stiffness {
        for a in 0..6 {
            out[a] = pick(out[a], k[a]);
        }
    }
    out
}

fn cmd_export(args: &ExportArgs) -> Result<()> {
    let bundle = SkillBundle::load(&args.bundle)?;
    let distribution = bundle.distribution()?;
    let profile = bundle.profile()?;
    let model = bundle.model()?;
    fs::create_dir_all(&args.out_dir)?;

    let m = distribution.grid.len();
    let mut mean = String::from("t,px,py,pz,qw,qx,qy,qz,sx,sy,sz,srx,sry,srz\n");
    for i in 0..m {
        let p = distribution.mean_positions[i];
        let q = distribution.mean_quaternions[i];
        let s = distribution.stddev[i];
        mean.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            distribution.grid[i],
            p.x,
            p.y,
            p.z,
            q.w,
            q.x,
            q.y,
            q.z,
            s[0],
            s[1],
            s[2],
            s[3],
            s[4],
            s[5]
        ));
    }
    let mean_path = args.out_dir.join("mean_trajectory.csv");
    fs::write(&mean_path, mean)?;

    let mut stiff = String::from("t,kx,ky,kz,krx,kry,krz\n");
    for i in 0..m {
        let k = profile.stiffness[i];
        stiff.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            profile.grid[i], k[0], k[1], k[2], k[3], k[4], k[5]
        ));
    }
    let stiff_path = args.out_dir.join("stiffness_profile.csv");
    fs::write(&stiff_path, stiff)?;

    // Basis activations along the same grid, driven by the phase variable
    // each grid instant maps to.
    let mut basis = String::from("t,x");
    for s in 1..=model.basis.len() {
        basis.push_str(&format!(",psi{s}"));
    }
    basis.push('\n');
    let alpha_x = model.gains.alpha_x;
    for i in 0..m {
        let t = profile.grid[i];
        let x = (-alpha_x * t / model.tau).exp();
        basis.push_str(&format!("{t},{x}"));
        for psi in model.basis.activations(x) {
            basis.push_str(&format!(",{psi}"));
        }
        basis.push('\n');
    }
    let basis_path = args.out_dir.join("basis_activations.csv");
    fs::write(&basis_path, basis)?;

    println!(
        "wrote {}, {}, {} ({} rows each)",
        mean_path.display(),
        stiff_path.display(),
        basis_path.display(),
        m
    );
    Ok(())
}
