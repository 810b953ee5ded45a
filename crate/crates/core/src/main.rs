//! Command-line interface for the annihilation-pair polarimetry toolkit.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use aqpol::analysis::ThetaWindows;
use aqpol::config::RunConfig;
use aqpol::error::{Error, Result};
use aqpol::io;
use aqpol::physics;
use aqpol::pipeline;
use aqpol::sampling::{StreamSpec, STREAM_MIXING};

#[derive(Parser)]
#[command(
    name = "aqpol",
    about = "Monte Carlo simulation and modulation-factor analysis for annihilation-pair Compton polarimetry",
    version
)]
struct Cli {
    /// Configuration file (INI-style; omit for the built-in bench defaults)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override rng.master_seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override output.prefix from the config
    #[arg(long, global = true)]
    out_prefix: Option<String>,
    /// Suppress progress output
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Emit theory tables: kinematic factors, analyzing powers, modulation grids
    Predict(PredictArgs),
    /// Run the deterministic finite-acceptance oracle
    Oracle(OracleArgs),
    /// Generate and digitize events into a CSV file
    Simulate,
    /// Apply the event selection to an event file
    Select(SelectArgs),
    /// Histogram, acceptance-correct and fit a selected-event file
    Analyze(AnalyzeArgs),
    /// Full pipeline: simulate, select, analyze, write the manifest
    Run(RunArgs),
}

#[derive(Args)]
struct PredictArgs {
    /// Polar angle grid in degrees: a single value or min:max:step
    #[arg(long, default_value = "0:180:1")]
    theta: String,
    /// Second-arm polar grid for the modulation table (defaults to --theta)
    #[arg(long)]
    theta2: Option<String>,
    /// Second-photon energy in keV (first is always 511)
    #[arg(long, default_value_t = 511.0)]
    energy: f64,
    /// Correlation retention in [0, 1]
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long, default_value_t = 72.0)]
    theta1_min: f64,
    #[arg(long, default_value_t = 90.0)]
    theta1_max: f64,
    #[arg(long, default_value_t = 72.0)]
    theta2_min: f64,
    #[arg(long, default_value_t = 90.0)]
    theta2_max: f64,
    #[arg(long, default_value_t = 511.0)]
    e1: f64,
    #[arg(long, default_value_t = 511.0)]
    e2: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa: f64,
    #[arg(long, default_value_t = 24)]
    bins: usize,
}

#[derive(Args)]
struct SelectArgs {
    /// Input event CSV
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Input selected-event CSV
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    theta1_min: Option<f64>,
    #[arg(long)]
    theta1_max: Option<f64>,
    #[arg(long)]
    theta2_min: Option<f64>,
    #[arg(long)]
    theta2_max: Option<f64>,
    #[arg(long)]
    bins: Option<usize>,
    /// Mixed partners per event
    #[arg(long)]
    mix: Option<usize>,
    /// Also report the polar-window systematic for this sigma_theta (degrees)
    #[arg(long)]
    systematic_sigma: Option<f64>,
}

#[derive(Args)]
struct RunArgs {
    /// Re-run from a previous manifest instead of a config
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || Error::config(format!("bad angle grid '{spec}' (want value or min:max:step)"));
    match parts.as_slice() {
        [single] => Ok(vec![single.trim().parse().map_err(|_| bad())?]),
        [min, max, step] => {
            let (min, max, step): (f64, f64, f64) = (
                min.trim().parse().map_err(|_| bad())?,
                max.trim().parse().map_err(|_| bad())?,
                step.trim().parse().map_err(|_| bad())?,
            );
            if step <= 0.0 || max < min {
                return Err(bad());
            }
            let mut grid = Vec::new();
            let mut t = min;
            while t <= max + 1e-9 {
                grid.push(t.min(max));
                t += step;
            }
            Ok(grid)
        }
        _ => Err(bad()),
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::from_ini_file(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.rng.master_seed = seed;
    }
    if let Some(prefix) = &cli.out_prefix {
        cfg.output.prefix = prefix.clone();
    }
    Ok(cfg)
}

fn ensure_parent(prefix: &str) -> Result<()> {
    if let Some(parent) = std::path::Path::new(prefix).parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(())
}

fn cmd_predict(cli: &Cli, args: &PredictArgs) -> Result<()> {
    if !(0.0..=1.0).contains(&args.kappa) {
        return Err(Error::config("--kappa must be in [0, 1]"));
    }
    let grid1 = parse_grid(&args.theta)?;
    let grid2 = match &args.theta2 {
        Some(spec) => parse_grid(spec)?,
        None => grid1.clone(),
    };

    // per-angle table along the diagonal theta1 = theta2 = theta
    let mut fga = String::from("theta_deg,F,G,A_511,A_E2,mu,R\n");
    for &t in &grid1 {
        let k = physics::kinematic_factors(t)?;
        let a511 = physics::analyzing_power(511.0, t);
        let a_e2 = physics::analyzing_power(args.energy, t);
        let p = physics::theory_modulation(511.0, t, args.energy, t, args.kappa);
        fga.push_str(&format!(
            "{t:.4},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}\n",
            k.f, k.g, a511, a_e2, p.mu, p.r
        ));
    }

    // full (theta1, theta2) modulation grid
    let mut mur = String::from("theta1_deg,theta2_deg,mu,R\n");
    for &t1 in &grid1 {
        for &t2 in &grid2 {
            let p = physics::theory_modulation(511.0, t1, args.energy, t2, args.kappa);
            mur.push_str(&format!("{t1:.4},{t2:.4},{:.6},{:.6}\n", p.mu, p.r));
        }
    }

    match &cli.out_prefix {
        Some(prefix) => {
            ensure_parent(prefix)?;
            std::fs::write(format!("{prefix}_fga.csv"), fga)?;
            std::fs::write(format!("{prefix}_modulation.csv"), mur)?;
            if !cli.quiet {
                eprintln!("wrote {prefix}_fga.csv and {prefix}_modulation.csv");
            }
        }
        None => {
            print!("{fga}");
            if args.theta2.is_some() {
                print!("{mur}");
            }
        }
    }
    Ok(())
}

fn cmd_oracle(cli: &Cli, args: &OracleArgs) -> Result<()> {
    let table = physics::integrate_acceptance(
        (args.theta1_min, args.theta1_max),
        (args.theta2_min, args.theta2_max),
        args.e1,
        args.e2,
        args.kappa,
        args.bins,
    )?;
    let mut csv = String::from("bin_low_deg,bin_high_deg,probability\n");
    for i in 0..table.bin_prob.len() {
        csv.push_str(&format!(
            "{:.1},{:.1},{:.8}\n",
            table.bin_edges[i],
            table.bin_edges[i + 1],
            table.bin_prob[i]
        ));
    }
    println!(
        "mu = {:.6}  R = {:.6}  (A1 = {:.6}, A2 = {:.6})",
        table.prediction.mu, table.prediction.r, table.a_mean[0], table.a_mean[1]
    );
    if let Some(prefix) = &cli.out_prefix {
        ensure_parent(prefix)?;
        std::fs::write(format!("{prefix}_oracle.csv"), csv)?;
        if !cli.quiet {
            eprintln!("wrote {prefix}_oracle.csv");
        }
    } else {
        print!("{csv}");
    }
    Ok(())
}

fn cmd_simulate(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    ensure_parent(&cfg.output.prefix)?;
    let path = PathBuf::from(format!("{}_events.csv", cfg.output.prefix));
    let n = pipeline::simulate_to_file(&cfg, &path)?;
    if !cli.quiet {
        eprintln!("simulated {n} pairs -> {}", path.display());
    }
    Ok(())
}

fn cmd_select(cli: &Cli, args: &SelectArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    ensure_parent(&cfg.output.prefix)?;
    let selected = PathBuf::from(format!("{}_selected.csv", cfg.output.prefix));
    let cutflow = PathBuf::from(format!("{}_cutflow.txt", cfg.output.prefix));
    let flow = pipeline::select_file(
        &cfg.selection_config(),
        &args.input,
        &selected,
        &cutflow,
        cfg.output.write_truth,
    )?;
    if !cli.quiet {
        eprintln!(
            "selected {} / {} events -> {}",
            flow.accepted,
            flow.total,
            selected.display()
        );
    }
    Ok(())
}

fn cmd_analyze(cli: &Cli, args: &AnalyzeArgs) -> Result<()> {
    let cfg = load_config(cli)?;
    ensure_parent(&cfg.output.prefix)?;
    let defaults = cfg.theta_windows();
    let windows = ThetaWindows::new(
        (
            args.theta1_min.unwrap_or(defaults.theta1.0),
            args.theta1_max.unwrap_or(defaults.theta1.1),
        ),
        (
            args.theta2_min.unwrap_or(defaults.theta2.0),
            args.theta2_max.unwrap_or(defaults.theta2.1),
        ),
    );
    let request = pipeline::AnalysisRequest {
        windows,
        bins: args.bins.unwrap_or(cfg.analysis.bins),
        mix: args.mix.unwrap_or(cfg.analysis.mix),
        mix_seed: cfg.rng.master_seed,
    };
    let pairs = pipeline::reconstruct_file(&args.input)?;
    let (hist, fit) = pipeline::analyze_reconstructed(&pairs, &request)?;
    let hist_path = format!("{}_histogram.csv", cfg.output.prefix);
    let fit_path = format!("{}_fit.json", cfg.output.prefix);
    io::write_histogram_csv(&hist_path, &hist)?;
    io::write_fit_report(&fit_path, &fit, hist.raw_total())?;
    if !cli.quiet {
        eprintln!(
            "fit: mu = {:.4} +- {:.4}, R = {:.4} +- {:.4}, chi2/ndf = {:.2}/{}",
            fit.mu, fit.sigma_mu, fit.r, fit.sigma_r, fit.chi2, fit.ndf
        );
    }
    if let Some(sigma) = args.systematic_sigma {
        let mut rng = StreamSpec::new(cfg.rng.master_seed, STREAM_MIXING).rng();
        let rel = aqpol::analysis::estimate_theta_systematic(
            &pairs,
            &windows,
            sigma,
            request.bins,
            request.mix,
            &mut rng,
        )?;
        println!("theta_systematic_relative = {rel:.6}");
    }
    Ok(())
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> Result<()> {
    let out = match &args.from_manifest {
        Some(manifest) => pipeline::rerun_from_manifest(manifest, cli.out_prefix.as_deref())?,
        None => {
            let cfg = load_config(cli)?;
            pipeline::run_pipeline(&cfg)?
        }
    };
    if !cli.quiet {
        eprintln!(
            "generated {}  selected {}  fitted {} events",
            out.n_generated,
            out.n_selected,
            out.histogram.raw_total()
        );
        eprintln!(
            "fit: mu = {:.4} +- {:.4}, R = {:.4} +- {:.4}, chi2/ndf = {:.2}/{}",
            out.fit.mu, out.fit.sigma_mu, out.fit.r, out.fit.sigma_r, out.fit.chi2, out.fit.ndf
        );
        eprintln!("manifest: {}", out.paths.manifest.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Predict(args) => cmd_predict(&cli, args),
        Command::Oracle(args) => cmd_oracle(&cli, args),
        Command::Simulate => cmd_simulate(&cli),
        Command::Select(args) => cmd_select(&cli, args),
        Command::Analyze(args) => cmd_analyze(&cli, args),
        Command::Run(args) => cmd_run(&cli, args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
