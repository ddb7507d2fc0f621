use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ncc_ofdma::error::Error;
use ncc_ofdma::experiment::{self, ExperimentSpec, Fig2Settings};
use ncc_ofdma::montecarlo::mix_seed;
use ncc_ofdma::protocol::simulate_frame;
use ncc_ofdma::{db_to_linear, Engine};

/// Outage experiments for network-coded cooperative OFDMA.
///
/// Set NCC_OFDMA_WORKERS to cap the number of Monte Carlo worker threads.
#[derive(Parser)]
#[command(name = "ncc-ofdma", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment file and write one CSV per (mode, engine).
    Run {
        spec: PathBuf,
        /// Print per-frame traces for the first N trials of every MC point.
        #[arg(long, value_name = "N")]
        trace: Option<u64>,
        /// Per-point progress on stderr.
        #[arg(long)]
        progress: bool,
    },
    /// Fit the diversity slope of a CSV curve.
    Slope {
        csv: PathBuf,
        /// SNR window in dB, `a:b`.
        #[arg(long)]
        window: Option<String>,
        #[arg(long)]
        json: bool,
    },
    /// Check the matching against the brute-force oracle.
    Selftest {
        #[arg(long, default_value_t = 10_000)]
        graphs: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// P = M = 2, R0 = 1, L ∈ {1, 2, 4}, both modes.
    Fig2 {
        #[arg(long, value_enum, default_value_t = EngineArg::Analytic)]
        engine: EngineArg,
        #[arg(long, default_value = "fig2")]
        out: PathBuf,
        /// Trials per point for the Monte Carlo engine.
        #[arg(long, default_value_t = 200_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// SNR (dB) at which the realistic/optimistic ratio is reported.
        #[arg(long, default_value_t = 10.0)]
        ratio_db: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Analytic,
    Mc,
}

fn exit_for(err: &Error) -> ExitCode {
    match err {
        Error::Config { .. } | Error::Parse { .. } => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            spec,
            trace,
            progress,
        } => {
            let mut spec = match ExperimentSpec::load(&spec) {
                Ok(s) => s,
                Err(e @ Error::Io(_)) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(1);
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit_for(&e);
                }
            };
            spec.estimator.progress = progress;
            if let Some(n) = trace {
                print_traces(&spec, n);
            }
            match experiment::run(&spec) {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Slope { csv, window, json } => {
            let report = std::fs::read_to_string(&csv)
                .map_err(Error::from)
                .and_then(|text| {
                    let w = window
                        .as_deref()
                        .map(experiment::parse_window)
                        .transpose()?;
                    experiment::slope_report(&text, w)
                });
            match report {
                Ok(r) => {
                    if json {
                        println!("{}", r.to_json());
                    } else {
                        print!("{}", r.to_text());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(2)
                }
            }
        }
        Command::Selftest { graphs, seed } => match experiment::selftest(graphs, seed) {
            Ok(r) => {
                println!(
                    "selftest ok: {} random graphs ({} satisfy Hall), four-user relay example reproduced",
                    r.graphs, r.hall_holds
                );
                ExitCode::SUCCESS
            }
            Err(case) => {
                eprintln!("selftest failed: {case}");
                ExitCode::from(3)
            }
        },
        Command::Fig2 {
            engine,
            out,
            trials,
            seed,
            ratio_db,
        } => {
            let settings = match engine {
                EngineArg::Analytic => Ok(Fig2Settings::analytic()),
                EngineArg::Mc => Fig2Settings::monte_carlo(trials, seed),
            };
            let result = settings
                .and_then(|s| experiment::fig2(&s))
                .and_then(|curves| {
                    experiment::write_fig2(&curves, &out).map(|paths| (curves, paths))
                });
            match result {
                Ok((curves, paths)) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    print!("{}", experiment::fig2_summary(&curves, ratio_db));
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    exit_for(&e)
                }
            }
        }
    }
}

fn print_traces(spec: &ExperimentSpec, n: u64) {
    if !spec.engines.contains(&Engine::MonteCarlo) {
        return;
    }
    for &mode in &spec.modes {
        let config = spec.network.clone().with_mode(mode);
        for (i, db) in spec.snr_db_grid().into_iter().enumerate() {
            let point_seed = mix_seed(spec.estimator.master_seed, i as u64);
            for t in 0..n {
                let seed = mix_seed(point_seed, t);
                if let Ok(out) = simulate_frame(&config, db_to_linear(db), seed) {
                    eprintln!("{mode} snr_db={db} {}", out.trace_line(seed));
                }
            }
        }
    }
}
