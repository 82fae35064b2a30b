use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dtn_compress::harness::{compute_grid, run_experiment, ExperimentConfig, ExperimentId};
use dtn_compress::operators::count_real_poles;

#[derive(Parser)]
#[command(
    name = "dtn-compress",
    version,
    about = "Rational compression of layered-waveguide DtN maps into finite-difference grids"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write a JSON report (plus CSV curves).
    Run {
        #[arg(long, value_enum)]
        experiment: ExperimentId,
        /// Degree range `A..B` or a single degree.
        #[arg(long, value_parser = parse_degrees)]
        degrees: Option<(usize, usize)>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Significant digits of the grid conversion.
        #[arg(long, default_value_t = 40)]
        digits: u32,
        /// Target error of the minimal-degree search.
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        /// Layer thickness for the layered experiments (all tabulated values when omitted).
        #[arg(long)]
        thickness: Option<f64>,
        /// Skip the grid conversion of every fit.
        #[arg(long)]
        no_grids: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Use a 50 x 50 transverse grid for the 2D experiments.
        #[arg(long)]
        small: bool,
    },
    /// Fit one degree and export the finite-difference grid as CSV.
    Grid {
        #[arg(long, value_enum)]
        experiment: ExperimentId,
        #[arg(long)]
        degree: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 40)]
        digits: u32,
        #[arg(long)]
        thickness: Option<f64>,
        #[arg(long)]
        small: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Count the real poles of the one-layer DtN function.
    Poles {
        #[arg(long)]
        thickness: f64,
        #[arg(long, allow_hyphen_values = true)]
        offset: f64,
    },
}

fn parse_degrees(s: &str) -> Result<(usize, usize), String> {
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|e| format!("{t:?}: {e}"));
    match s.split_once("..") {
        Some((a, b)) => {
            let b = b.strip_prefix('=').unwrap_or(b);
            Ok((parse(a)?, parse(b)?))
        }
        None => {
            let n = parse(s)?;
            Ok((n, n))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            experiment,
            degrees,
            seed,
            digits,
            tol,
            thickness,
            no_grids,
            out,
            small,
        } => {
            let mut cfg = ExperimentConfig::new(experiment);
            if let Some((a, b)) = degrees {
                cfg.min_degree = a;
                cfg.max_degree = b;
            }
            cfg.seed = seed;
            cfg.digits = digits;
            cfg.tol = tol;
            cfg.small = small;
            cfg.thickness = thickness;
            cfg.check_grids = !no_grids;
            let report = run_experiment(&cfg)?;
            for r in &report.rates {
                if let Some(t) = r.thickness {
                    print!("T={t} ");
                }
                println!(
                    "predicted rate {} fitted rate {} sqrt exponent {}",
                    fmt_opt(r.predicted_rate),
                    fmt_opt(r.fitted_geometric_rate),
                    fmt_opt(r.fitted_sqrt_rate)
                );
            }
            for d in &report.degrees {
                let grid = d.grid.as_ref().map_or("-".to_string(), |g| {
                    format!("{} ({:.1e})", if g.passed { "ok" } else { "FAILED" }, g.roundtrip_error)
                });
                println!(
                    "{}n={:<3} misfit {} test {} iters {} grid {}{}",
                    d.thickness.map_or(String::new(), |t| format!("T={t} ")),
                    d.degree,
                    fmt_opt(d.training_misfit),
                    fmt_opt(d.test_error),
                    d.iterations,
                    grid,
                    d.failure.as_ref().map_or(String::new(), |f| format!(" [{f}]"))
                );
            }
            for row in &report.nyquist {
                println!(
                    "T={} nyquist {} (with 1/pi: {:.2}) sem {:.1} vc61 {} (reference {}) vc62 {} (reference {})",
                    row.thickness,
                    row.nyquist_table,
                    row.nyquist_with_pi,
                    row.sem,
                    row.vc61_degree.map_or("-".into(), |n| n.to_string()),
                    row.reference_vc61,
                    row.vc62_degree.map_or("-".into(), |n| n.to_string()),
                    row.reference_vc62
                );
            }
            for p in &report.pole_counts {
                println!("T={} c={} poles {} (floor {})", p.thickness, p.offset, p.count, p.floor);
            }
            if let Some(path) = out {
                report.save(&path)?;
            }
        }
        Command::Grid {
            experiment,
            degree,
            seed,
            digits,
            thickness,
            small,
            out,
        } => {
            let mut cfg = ExperimentConfig::new(experiment);
            cfg.seed = seed;
            cfg.digits = digits;
            cfg.small = small;
            cfg.thickness = thickness;
            let (grid, record) = compute_grid(&cfg, degree)?;
            let file = std::fs::File::create(&out)?;
            grid.write_csv(file)?;
            println!(
                "n={} test error {} written to {}",
                degree,
                fmt_opt(record.test_error),
                out.display()
            );
        }
        Command::Poles { thickness, offset } => {
            let pc = count_real_poles(thickness, offset)?;
            println!("{} real poles (lower bound {})", pc.count, pc.floor);
            for r in &pc.roots {
                println!("{r:.12e}");
            }
        }
    }
    Ok(())
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or("-".into(), |v| format!("{v:.3e}"))
}
