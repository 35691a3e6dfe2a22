//! Command-line front end: tensile pulls, law calibration, excavation
//! trials, pile detection on stored frames, and condition comparison.
//! Every run is a pure function of (config, seed), and every output file
//! embeds the effective config hash and master seed so results stay
//! traceable to their inputs.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tangledig_core::config::{self, RunConfig};
use tangledig_core::harness::{self, compare_conditions, ConditionStats, TrialLog};
use tangledig_core::media::{mean_tensile_force, PrepMode};
use tangledig_core::rig::{fit_constitutive, run_tensile_trial, CalibrationTargets, RigProtocol};
use tangledig_core::rng::SeedFanout;
use tangledig_core::sensors::{detect_piles, GrayImage};
use tangledig_core::stats::mean_std;
use tangledig_core::{Result, SimError};

#[derive(Debug, Parser)]
#[command(name = "tangledig", version, about = "Excavation simulator for entangled granular media")]
struct Cli {
    /// Overrides file, `key = value` per line on top of built-in defaults.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Pull tensile samples at one compression distance and write the curves.
    Tensile {
        /// Compression distance applied before the pull, meters.
        #[arg(long, value_name = "M")]
        distance_m: f64,
        /// Pulls to run at this setting.
        #[arg(long, default_value_t = 3)]
        trials: u32,
        /// Master seed; the config's when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for curve and summary CSVs.
        #[arg(long, value_name = "DIR", default_value = ".")]
        out: PathBuf,
    },
    /// Fit the tensile law to bench targets and print params plus residuals.
    Calibrate {
        /// Targets CSV (`c,strain,mean_N,std_N[,label]`); the built-in bench
        /// dataset when omitted.
        #[arg(long, value_name = "PATH")]
        targets: Option<PathBuf>,
    },
    /// Run seeded excavation trials; write event logs and a summary table.
    Simulate {
        /// Bed preparation.
        #[arg(long, value_enum)]
        mode: ModeArg,
        /// Trials to run; the config's when omitted.
        #[arg(long)]
        trials: Option<u32>,
        /// Trial duration in hours; the config's when omitted.
        #[arg(long)]
        hours: Option<f64>,
        /// Master seed; the config's when omitted.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for per-trial JSONL logs and summary.csv.
        #[arg(long, value_name = "DIR")]
        out: PathBuf,
    },
    /// Detect piles in a stored PGM frame and print the column spans.
    Vision {
        /// Input image, binary or ASCII PGM.
        #[arg(long = "in", value_name = "PATH")]
        input: PathBuf,
    },
    /// Compare two simulate summaries and print the comparison as JSON.
    Report {
        /// Summary CSV for the first condition.
        a: PathBuf,
        /// Summary CSV for the second condition (the ratio denominator).
        b: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Scattered,
    Pushed,
}

impl From<ModeArg> for PrepMode {
    fn from(m: ModeArg) -> PrepMode {
        match m {
            ModeArg::Scattered => PrepMode::Scattered,
            ModeArg::Pushed => PrepMode::Pushed,
        }
    }
}

fn mode_str(mode: PrepMode) -> &'static str {
    match mode {
        PrepMode::Scattered => "scattered",
        PrepMode::Pushed => "pushed",
    }
}

fn main() -> ExitCode {
    ExitCode::from(dispatch(std::env::args_os()))
}

/// Exit 0 on success, 2 on usage errors, 3 on a bad config, 1 otherwise.
/// Failures print one JSON object on stderr.
fn dispatch<I, T>(argv: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version surface here too; they exit 0.
            let code = u8::try_from(e.exit_code()).unwrap_or(2);
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load_config(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{}", error_json("config", &e));
            return 3;
        }
    };
    match run(cli.command, &cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_json("run", &e));
            1
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => config::parse(&fs::read_to_string(p)?),
    }
}

fn error_json(stage: &str, err: &SimError) -> String {
    serde_json::json!({ "stage": stage, "error": err.to_string() }).to_string()
}

fn parse_err(e: impl std::fmt::Display) -> SimError {
    SimError::Parse(e.to_string())
}

fn run(cmd: Command, cfg: &RunConfig) -> Result<()> {
    match cmd {
        Command::Tensile {
            distance_m,
            trials,
            seed,
            out,
        } => cmd_tensile(cfg, distance_m, trials, seed, &out),
        Command::Calibrate { targets } => cmd_calibrate(cfg, targets.as_deref()),
        Command::Simulate {
            mode,
            trials,
            hours,
            seed,
            out,
        } => cmd_simulate(cfg, mode.into(), trials, hours, seed, &out),
        Command::Vision { input } => cmd_vision(cfg, &input),
        Command::Report { a, b } => cmd_report(&a, &b),
    }
}

fn cmd_tensile(
    cfg: &RunConfig,
    distance_m: f64,
    trials: u32,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    if trials == 0 {
        return Err(SimError::domain("tensile needs at least one trial"));
    }
    let protocol = RigProtocol::default();
    let compression = protocol.compression_history(distance_m)?;
    let master = seed.unwrap_or(cfg.master_seed);
    let effective = RunConfig {
        master_seed: master,
        experiment: cfg.experiment.clone(),
    };
    let hash = config::config_sha256(&effective);
    let meta = vec![
        format!("config_sha256={hash}"),
        format!("master_seed={master}"),
        format!("compression_distance_m={distance_m}"),
        format!("compression_history={compression}"),
    ];
    fs::create_dir_all(out)?;
    let fan = SeedFanout::new(master);
    let mut curves = Vec::with_capacity(trials as usize);
    for i in 0..trials {
        let trial_seed = fan.child("tensile", u64::from(i)).master();
        let curve = run_tensile_trial(
            &protocol,
            &effective.experiment.constitutive,
            distance_m,
            trial_seed,
        )?;
        let mut w = BufWriter::new(File::create(out.join(format!("curve_{}.csv", i + 1)))?);
        let mut lines = meta.clone();
        lines.push(format!("trial_seed={trial_seed}"));
        curve.write_csv(&mut w, &lines)?;
        w.flush()?;
        curves.push(curve);
    }
    let mut w = BufWriter::new(File::create(out.join("summary.csv"))?);
    for line in &meta {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "# trials={trials}")?;
    writeln!(w, "strain,mean_N,std_N")?;
    for (j, &strain) in curves[0].strains.iter().enumerate() {
        let forces: Vec<f64> = curves.iter().map(|c| c.forces_n[j]).collect();
        let (mean, std) = mean_std(&forces).unwrap();
        let std = std.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{strain},{mean},{std}")?;
    }
    w.flush()?;
    println!("wrote {trials} curves and summary.csv to {}", out.display());
    Ok(())
}

fn cmd_calibrate(cfg: &RunConfig, targets_path: Option<&Path>) -> Result<()> {
    let targets: CalibrationTargets<f64> = match targets_path {
        Some(p) => CalibrationTargets::from_csv(BufReader::new(File::open(p)?))?,
        None => CalibrationTargets::builtin(),
    };
    let fitted = fit_constitutive(&targets, &cfg.experiment.constitutive)?;
    let mut residuals = Vec::with_capacity(targets.rows.len());
    for row in &targets.rows {
        let predicted = mean_tensile_force(row.strain, row.compression, &fitted)?;
        residuals.push(serde_json::json!({
            "label": row.label,
            "compression": row.compression,
            "strain": row.strain,
            "target_n": row.mean_force_n,
            "predicted_n": predicted,
            "error_n": predicted - row.mean_force_n,
            "within_std": (predicted - row.mean_force_n).abs() <= row.std_force_n,
        }));
    }
    let report = serde_json::json!({
        "config_sha256": config::config_sha256(cfg),
        "master_seed": cfg.master_seed,
        "params": fitted,
        "residuals": residuals,
    });
    println!("{report:#}");
    Ok(())
}

fn cmd_simulate(
    cfg: &RunConfig,
    mode: PrepMode,
    trials: Option<u32>,
    hours: Option<f64>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let mut effective = RunConfig {
        master_seed: seed.unwrap_or(cfg.master_seed),
        experiment: cfg.experiment.clone(),
    };
    if let Some(h) = hours {
        if !h.is_finite() || h <= 0.0 {
            return Err(SimError::domain(format!("duration {h} hours")));
        }
        effective.experiment.harness.duration_s = h * 3600.0;
    }
    if let Some(n) = trials {
        effective.experiment.harness.n_trials = n;
    }
    effective.validate()?;
    let master = effective.master_seed;
    let n_trials = effective.experiment.harness.n_trials;
    let hash = config::config_sha256(&effective);

    let logs = harness::run_trials(&effective.experiment, mode, n_trials, master)?;
    let seeds = harness::trial_seeds(master, mode, n_trials);
    fs::create_dir_all(out)?;
    for (i, (log, trial_seed)) in logs.iter().zip(&seeds).enumerate() {
        write_trial_jsonl(out, i + 1, log, *trial_seed, master, &hash)?;
    }

    let mut f = File::create(out.join("summary.csv"))?;
    writeln!(f, "# config_sha256={hash}")?;
    writeln!(f, "# master_seed={master}")?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(["mode", "trial", "success_rate", "mean_cycle_min", "mass_kg"])
        .map_err(parse_err)?;
    for (i, log) in logs.iter().enumerate() {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            mode_str(mode).to_string(),
            (i + 1).to_string(),
            opt(log.success_rate()),
            opt(log.mean_cycle_min()),
            log.total_transported_kg.to_string(),
        ])
        .map_err(parse_err)?;
    }
    w.flush()?;
    println!(
        "wrote {n_trials} {} trials to {}",
        mode_str(mode),
        out.display()
    );
    Ok(())
}

fn write_trial_jsonl(
    out: &Path,
    trial: usize,
    log: &TrialLog,
    trial_seed: u64,
    master: u64,
    hash: &str,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(out.join(format!("trial_{trial}.jsonl")))?);
    let meta = serde_json::json!({ "meta": {
        "mode": mode_str(log.prep_mode),
        "trial": trial,
        "trial_seed": trial_seed,
        "master_seed": master,
        "config_sha256": hash,
    }});
    writeln!(w, "{meta}")?;
    for event in &log.events {
        writeln!(w, "{}", serde_json::to_string(event).map_err(parse_err)?)?;
    }
    let tail = serde_json::json!({ "summary": {
        "cycles": log.cycles,
        "success_rate": log.success_rate(),
        "mean_cycle_min": log.mean_cycle_min(),
        "total_transported_kg": log.total_transported_kg,
    }});
    writeln!(w, "{tail}")?;
    w.flush()?;
    Ok(())
}

fn cmd_vision(cfg: &RunConfig, input: &Path) -> Result<()> {
    let img = GrayImage::read_pgm(BufReader::new(File::open(input)?))?;
    let detection = detect_piles(&img, &cfg.experiment.sensors.vision);
    println!("{}", serde_json::to_string(&detection).map_err(parse_err)?);
    Ok(())
}

fn cmd_report(a: &Path, b: &Path) -> Result<()> {
    let a = read_summary(a)?;
    let b = read_summary(b)?;
    let report = compare_conditions(&a, &b)?;
    println!("{}", serde_json::to_string(&report).map_err(parse_err)?);
    Ok(())
}

/// Rebuild condition statistics from a simulate summary file. Only the
/// per-trial columns exist there, so the pooled cycle sample is the per-trial
/// means and the failure count is unavailable; the comparison reads neither.
fn read_summary(path: &Path) -> Result<ConditionStats> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(BufReader::new(File::open(path)?));
    {
        let head = rdr.headers().map_err(parse_err)?;
        let want = ["mode", "trial", "success_rate", "mean_cycle_min", "mass_kg"];
        if head.len() != want.len() || head.iter().zip(want).any(|(h, w)| h.trim() != w) {
            return Err(SimError::Parse(format!(
                "{}: header `{}`, want `{}`",
                path.display(),
                head.iter().collect::<Vec<_>>().join(","),
                want.join(",")
            )));
        }
    }
    let mut mode: Option<PrepMode> = None;
    let mut success = Vec::new();
    let mut cycle_min = Vec::new();
    let mut mass = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(parse_err)?;
        let field = |j: usize| rec.get(j).map(str::trim).unwrap_or_default();
        let num = |j: usize| -> Result<f64> {
            field(j)
                .parse()
                .map_err(|e| SimError::Parse(format!("{}: row {i}: {e}", path.display())))
        };
        let row_mode = match field(0) {
            "scattered" => PrepMode::Scattered,
            "pushed" => PrepMode::Pushed,
            other => {
                return Err(SimError::Parse(format!(
                    "{}: row {i}: mode `{other}`",
                    path.display()
                )))
            }
        };
        if *mode.get_or_insert(row_mode) != row_mode {
            return Err(SimError::Parse(format!(
                "{}: mixes preparation modes",
                path.display()
            )));
        }
        if field(2).is_empty() {
            return Err(SimError::InsufficientData(format!(
                "{}: trial {} completed no cycles",
                path.display(),
                field(1)
            )));
        }
        success.push(num(2)?);
        cycle_min.push(num(3)?);
        mass.push(num(4)?);
    }
    let Some(mode) = mode else {
        return Err(SimError::InsufficientData(format!(
            "{}: no data rows",
            path.display()
        )));
    };
    let (success_rate_mean, success_rate_std) = mean_std(&success).unwrap();
    let (cycle_time_mean_min, cycle_time_std_min) = mean_std(&cycle_min).unwrap();
    let (mass_mean_kg, mass_std_kg) = mean_std(&mass).unwrap();
    Ok(ConditionStats {
        prep_mode: mode,
        n_trials: success.len(),
        success_rate_mean,
        success_rate_std,
        cycle_time_mean_min,
        cycle_time_std_min,
        mass_mean_kg,
        mass_std_kg,
        failures: 0,
        per_trial_success_rate: success,
        per_trial_mean_cycle_min: cycle_min.clone(),
        per_trial_mass_kg: mass,
        cycle_times_min: cycle_min,
    })
}
