use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pde_greedy::cli::{self, ExperimentConfig};

#[derive(Parser)]
#[command(name = "pde-greedy", version, about = "Greedy kernel collocation for parametric PDEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one surrogate (after an optional grid search) and write all artifacts.
    Run(Common),
    /// Train one surrogate per selection exponent on shared candidates.
    CompareBeta {
        #[command(flatten)]
        common: Common,
        /// Comma-separated exponents; overrides `[compare] betas`.
        #[arg(long, value_delimiter = ',')]
        betas: Option<Vec<f64>>,
    },
    /// Write the Cartesian parameter x position test grid.
    ExportTestset(Common),
    /// Run the consecutive 1D grid search only.
    Search(Common),
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Only report errors.
    #[arg(long)]
    quiet: bool,
}

fn load(common: &Common, betas: Option<Vec<f64>>) -> pde_greedy::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    cli::apply_overrides(&mut cfg, common.seed, common.out.clone(), betas)?;
    Ok(cfg)
}

fn execute(command: Command) -> pde_greedy::Result<()> {
    match command {
        Command::Run(common) => {
            let cfg = load(&common, None)?;
            let r = cli::cmd_run(&cfg)?;
            if !common.quiet {
                let error = r.linf_test_error.map_or("n/a".to_string(), |e| format!("{e:.6e}"));
                println!(
                    "{}: n = {} ({} interior, {} boundary), stop = {}, max training residual = {:.6e}, \
                     test error = {error}, {:.3} s -> {}",
                    r.experiment,
                    r.n,
                    r.n_interior,
                    r.n_boundary,
                    r.stop_cause,
                    r.max_training_residual,
                    r.train_time_s,
                    cfg.out_dir.display()
                );
            }
        }
        Command::CompareBeta { common, betas } => {
            let cfg = load(&common, betas)?;
            let rows = cli::cmd_compare_beta(&cfg)?;
            if !common.quiet {
                println!("{:>8} {:>6} {:>8} {:>10} {:>14}", "beta", "n", "r_bnd", "stop", "L_inf error");
                for r in rows {
                    println!(
                        "{:>8} {:>6} {:>8.4} {:>10} {:>14.6e}",
                        r.beta, r.n, r.r_bnd, r.stop_cause, r.linf_error
                    );
                }
            }
        }
        Command::ExportTestset(common) => {
            let cfg = load(&common, None)?;
            let rows = cli::cmd_export_testset(&cfg)?;
            if !common.quiet {
                println!("wrote {rows} test points to {}", cfg.out_dir.join("testset.csv").display());
            }
        }
        Command::Search(common) => {
            let cfg = load(&common, None)?;
            let result = cli::cmd_search(&cfg)?;
            if !common.quiet {
                for (param, _) in &cfg.search.as_ref().expect("search section").spec.stages {
                    println!("{param} = {:.6e}", result.best.get(*param));
                }
                println!("validation loss = {:.6e}", result.best_loss);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let quiet = match &cli.command {
        Command::Run(c) | Command::ExportTestset(c) | Command::Search(c) => c.quiet,
        Command::CompareBeta { common, .. } => common.quiet,
    };
    let level = if quiet { "error" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(cli::exit_code(&err) as u8)
        }
    }
}
