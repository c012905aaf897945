use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fracwave::config::{load_config, SimConfig};
use fracwave::gibbs::sample_gibbs_rejection;
use fracwave::inflation::{period_quadrature, solve_profile, DEFAULT_DT_ODE};
use fracwave::random::{Ensemble, RngStream};
use fracwave::spectral::{default_grid_points, load_fwf1, to_grid};
use fracwave::{experiments, Error, Result};

/// Pseudospectral experiments for fractional nonlinear wave equations on the torus.
#[derive(Debug, Parser)]
#[command(name = "fracwave", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the experiment named in a config file; exit 2 if any verdict fails.
    Run {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Draw an ensemble and write it to a directory.
    Sample {
        config: PathBuf,
        /// Number of members (defaults to `samples`).
        #[arg(long)]
        count: Option<usize>,
        /// Target directory (defaults to `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Rejection-sample the truncated Gibbs measure instead of the Gaussian one.
        #[arg(long)]
        gibbs: bool,
        #[arg(long, default_value_t = 100_000)]
        max_tries: usize,
    },
    /// Compare integrated ODE profile periods with the quadrature formula.
    OdeCheck {
        #[arg(long, value_delimiter = ',', default_values_t = vec![0u32, 1, 2, 3])]
        k: Vec<u32>,
        #[arg(long, default_value_t = 1.0)]
        v0: f64,
        #[arg(long, default_value_t = DEFAULT_DT_ODE)]
        dt_ode: f64,
    },
    /// Convert an FWF1 field to grid values in CSV.
    FieldDump {
        input: PathBuf,
        /// Grid points per axis (defaults to 4K + 4).
        #[arg(long)]
        points: Option<usize>,
        /// Output CSV (defaults to stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn init_threads(config_threads: usize) {
    let threads = std::env::var("FRACWAVE_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .unwrap_or(config_threads);
    if threads > 0 {
        // A second initialization in the same process is harmless to ignore.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
}

fn cmd_run(config: &Path, output_dir: Option<PathBuf>) -> Result<bool> {
    let mut cfg = load_config(config)?;
    if let Some(dir) = output_dir {
        cfg.output_dir = dir;
    }
    init_threads(cfg.threads);
    println!("running {} from {}", cfg.experiment, config.display());
    let report = experiments::run(&cfg)?;
    report.write(&cfg.output_dir)?;
    for v in &report.verdicts {
        println!("{v}");
    }
    for n in &report.notes {
        println!("note: {n}");
    }
    println!(
        "{} in {:.2} s, report in {}",
        if report.all_passed() { "all verdicts pass" } else { "verdicts failed" },
        report.wall_time_s,
        cfg.output_dir.display()
    );
    Ok(report.all_passed())
}

fn gibbs_ensemble(cfg: &SimConfig, count: usize, max_tries: usize) -> Result<Ensemble> {
    use rayon::prelude::*;
    let draws = (0..count as u64)
        .into_par_iter()
        .map(|i| sample_gibbs_rejection(cfg, cfg.n_cut, cfg.potential, &RngStream::new(cfg.seed, i), max_tries))
        .collect::<Result<Vec<_>>>()?;
    let tries: usize = draws.iter().map(|d| d.tries).sum();
    let mut ens = Ensemble {
        members: draws.iter().map(|d| d.point.clone()).collect(),
        config: cfg.clone(),
        seeds: (0..count as u64).collect(),
        weights: None,
        metadata: Default::default(),
    };
    ens.metadata.insert("potential".into(), cfg.potential.to_string());
    if let Some(k) = cfg.k() {
        ens.metadata.insert("k".into(), k.to_string());
    }
    ens.metadata
        .insert("acceptance-rate".into(), (count as f64 / tries.max(1) as f64).to_string());
    Ok(ens)
}

fn cmd_sample(config: &Path, count: Option<usize>, out: Option<PathBuf>, gibbs: bool, max_tries: usize) -> Result<()> {
    let cfg = load_config(config)?;
    init_threads(cfg.threads);
    let count = count.unwrap_or(cfg.samples);
    let dir = out.unwrap_or_else(|| cfg.output_dir.clone());
    let ens = if gibbs {
        gibbs_ensemble(&cfg, count, max_tries)?
    } else {
        Ensemble::sample_mu(&cfg, count)
    };
    ens.save(&dir)?;
    println!("wrote {} members to {}", ens.len(), dir.display());
    Ok(())
}

fn cmd_ode_check(ks: &[u32], v0: f64, dt_ode: f64) -> Result<()> {
    println!("{:>3} {:>22} {:>22} {:>10} {:>10}", "k", "period (ODE)", "period (quadrature)", "|diff|", "drift");
    for &k in ks {
        let prof = solve_profile(k, v0, dt_ode)?;
        let q = period_quadrature(k, v0);
        println!(
            "{k:>3} {:>22.15} {:>22.15} {:>10.2e} {:>10.2e}",
            prof.period,
            q,
            (prof.period - q).abs(),
            prof.first_integral_error()
        );
    }
    Ok(())
}

fn cmd_field_dump(input: &Path, points: Option<usize>, out: Option<PathBuf>) -> Result<()> {
    let field = load_fwf1(input)?;
    let points = points.unwrap_or_else(|| default_grid_points(field.maxmode()));
    let grid = to_grid(&field, points)?;
    let mut text = String::new();
    if field.dim() == 1 {
        text.push_str("x,value\n");
    } else {
        text.push_str("x,y,value\n");
    }
    for (i, v) in grid.values().iter().enumerate() {
        let x = grid.node(i);
        let coords: Vec<String> = x[..field.dim()].iter().map(|c| c.to_string()).collect();
        let _ = writeln!(text, "{},{v}", coords.join(","));
    }
    match out {
        Some(path) => std::fs::write(&path, text).map_err(|source| Error::Io { path, source })?,
        None => print!("{text}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Run { config, output_dir } => cmd_run(&config, output_dir),
        Command::Sample {
            config,
            count,
            out,
            gibbs,
            max_tries,
        } => cmd_sample(&config, count, out, gibbs, max_tries).map(|_| true),
        Command::OdeCheck { k, v0, dt_ode } => cmd_ode_check(&k, v0, dt_ode).map(|_| true),
        Command::FieldDump { input, points, out } => cmd_field_dump(&input, points, out).map(|_| true),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
