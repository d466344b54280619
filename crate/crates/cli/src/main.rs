use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use twocultures_cli::config::ExperimentConfig;
use twocultures_cli::run::{effective_config, load_dataset, run_experiment, RunOptions};
use twocultures_cli::{fetch, report, varstudy, CliError};

/// Econometric and machine-learning models compared on shared folds.
#[derive(Parser)]
#[command(name = "twocultures", version, about)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cross-validate every model of a config; write the table, JSON report
    /// and ROC curves.
    Run {
        config: PathBuf,
        /// Fold seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Number of folds (overrides the config).
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Compare forward stepwise, lasso entry order and forest importance.
    Varstudy {
        config: PathBuf,
        /// Forest seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out_dir: PathBuf,
    },
    /// Download a dataset (or convert a local copy) into the data directory.
    Fetch {
        /// Dataset key, or `all`.
        dataset: String,
        /// Convert this local raw file instead of downloading.
        #[arg(long)]
        from: Option<PathBuf>,
    },
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let data_dir = fetch::data_dir();
    match cli.command {
        Command::Run { config, seed, folds, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = RunOptions { seed, folds, out_dir, data_dir };
            let cfg = effective_config(&cfg, &opts)?;
            let ds = load_dataset(&cfg, &config_dir(&config), &opts.data_dir)?;
            let rep = run_experiment(&cfg, &ds)?;
            let written = report::write_outputs(&cfg, &rep, &opts.out_dir)?;
            print!("{}", report::render_table(&rep));
            eprint!("{}", report::render_timings(&rep));
            for p in written {
                eprintln!("wrote {}", p.display());
            }
        }
        Command::Varstudy { config, seed, out_dir } => {
            let cfg = ExperimentConfig::load(&config)?;
            let opts = RunOptions { seed, folds: None, out_dir, data_dir };
            let cfg = effective_config(&cfg, &opts)?;
            let ds = load_dataset(&cfg, &config_dir(&config), &opts.data_dir)?;
            let study = varstudy::variable_study(&cfg, &ds)?;
            let md = varstudy::render(&study);
            std::fs::create_dir_all(&opts.out_dir)
                .map_err(|e| CliError::Io(format!("cannot create {}: {e}", opts.out_dir.display())))?;
            let md_path = opts.out_dir.join(format!("{}_varstudy.md", cfg.name));
            let json_path = opts.out_dir.join(format!("{}_varstudy.json", cfg.name));
            write_file(&md_path, &md)?;
            let json = serde_json::to_string_pretty(&study).map_err(|e| CliError::Io(e.to_string()))?;
            write_file(&json_path, &json)?;
            print!("{md}");
            eprintln!("wrote {}\nwrote {}", md_path.display(), json_path.display());
        }
        Command::Fetch { dataset, from } => {
            let names: Vec<&str> = if dataset == "all" {
                if from.is_some() {
                    return Err(CliError::Usage("--from needs a single dataset".into()));
                }
                fetch::SOURCES.iter().map(|s| s.name).collect()
            } else {
                vec![dataset.as_str()]
            };
            for name in names {
                let path = fetch::fetch(name, from.as_deref(), &data_dir)?;
                eprintln!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
