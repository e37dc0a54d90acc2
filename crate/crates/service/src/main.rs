use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use diva_core::evaluation::{ExperimentGrid, SynthConfig, MODERATE_NOISE};
use diva_service::{api, commands, Advisor, AdvisorConfig, Store};

#[derive(Parser)]
#[command(
    name = "diva",
    version,
    about = "Case-based movie advisor over partial-order preferences"
)]
struct Cli {
    /// Directory holding accounts, catalog and case base.
    #[arg(long, global = true, env = "DIVA_DATA_DIR", default_value = "data")]
    data_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load a movies CSV and a ratings CSV into the data directory.
    Ingest {
        #[arg(long)]
        ratings: PathBuf,
        #[arg(long)]
        movies: PathBuf,
        #[arg(long, default_value_t = 20)]
        min_ratings: usize,
    },
    /// Generate a synthetic catalog and case base.
    Synth {
        #[arg(long, default_value_t = 200)]
        users: usize,
        #[arg(long, default_value_t = 300)]
        movies: usize,
        #[arg(long, default_value_t = 3)]
        dims: usize,
        #[arg(long, default_value_t = MODERATE_NOISE)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the extensions x iterations experiment grid.
    Eval {
        #[arg(long, value_delimiter = ',', default_value = "10,30,50")]
        extensions: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "50,100,150")]
        iterations: Vec<u64>,
        #[arg(long, default_value_t = 10)]
        test_users: usize,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long, default_value_t = 100)]
        top_k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate the GroupLens baseline (and a random list) only.
    BaselineEval {
        #[arg(long, default_value_t = 10)]
        test_users: usize,
        #[arg(long, default_value_t = 100)]
        runs: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Serve the HTTP/JSON API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: std::net::IpAddr,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 30)]
        extensions: usize,
        #[arg(long, default_value_t = 100)]
        iterations: u64,
    },
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let dir = cli.data_dir;
    match cli.command {
        Command::Ingest {
            ratings,
            movies,
            min_ratings,
        } => {
            let r = commands::ingest(&ratings, &movies, min_ratings, &dir)?;
            println!(
                "{} movies, {} users kept, {} users below {min_ratings} ratings",
                r.movies, r.users, r.dropped_users
            );
            for (line, reason) in &r.rejected {
                eprintln!("{}:{line}: {reason}", ratings.display());
            }
        }
        Command::Synth {
            users,
            movies,
            dims,
            noise,
            seed,
        } => {
            let cfg = SynthConfig {
                population: users,
                catalog_size: movies,
                taste_dims: dims,
                noise,
                seed,
                ..Default::default()
            };
            commands::synth(&cfg, &dir)?;
            println!(
                "wrote {users} users and {movies} movies to {}",
                dir.display()
            );
        }
        Command::Eval {
            extensions,
            iterations,
            test_users,
            runs,
            top_k,
            out,
            seed,
        } => {
            let grid = ExperimentGrid {
                extensions_axis: extensions,
                iterations_axis: iterations,
                runs_per_cell: runs,
                test_user_count: test_users,
                seed,
                top_k,
            };
            let result = commands::eval(&dir, &grid, out.as_deref())?;
            print!("{}", result.summary());
        }
        Command::BaselineEval {
            test_users,
            runs,
            out,
            seed,
        } => {
            let result = commands::baseline_eval(&dir, runs, test_users, seed, out.as_deref())?;
            for method in diva_core::evaluation::Method::ALL {
                if let Some(m) = result.method_mean(method) {
                    let recall = m
                        .recall
                        .map_or_else(|| "-".into(), |r| format!("{:.1}%", r * 100.0));
                    println!(
                        "{method}: precision {:.1}%, recall {recall} over {} lists",
                        m.precision * 100.0,
                        m.count
                    );
                }
            }
        }
        Command::Serve {
            port,
            host,
            seed,
            extensions,
            iterations,
        } => {
            let store = Store::load(&dir)?;
            let config = AdvisorConfig {
                seed,
                num_extensions: extensions,
                num_iterations: iterations,
                ..Default::default()
            };
            let advisor = Arc::new(Advisor::new(store, Some(dir), config));
            let addr = SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                println!("listening on http://{addr}");
                axum::serve(listener, api::router(advisor)).await
            })?;
        }
    }
    Ok(())
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
