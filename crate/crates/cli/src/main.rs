use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use loopcascade_cli::config::RunConfig;
use loopcascade_cli::spec::{parse_grid, parse_sweep};
use loopcascade_cli::{cmd_analyze, cmd_model, cmd_simulate, cmd_sweep, cmd_verify_fock, CliError, TagFormat};

#[derive(Parser)]
#[command(name = "loopcascade", version, about = "Switchable-loop cascaded down-conversion: model, simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Amplification curve with its uncertainty band, as CSV.
    Model {
        #[arg(long)]
        config: Option<PathBuf>,
        /// lo:hi:step or a comma list of loop efficiencies.
        #[arg(long, default_value = "0:0.99:0.01")]
        grid: String,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte Carlo run: tag stream, truth log and manifest.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TagFormat::Bin)]
        format: TagFormat,
    },
    /// Triplets, delay histogram, peaks and the amplification estimate.
    Analyze {
        /// Tag stream, binary or CSV.
        tags: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Simulate and analyze one point per value, then compare to the model.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        /// field=lo:hi:step or field=a,b,c
        #[arg(long)]
        sweep: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Also write each point's tag stream in this format.
        #[arg(long, value_enum)]
        format: Option<TagFormat>,
    },
    /// Print the triplet amplitudes of the truncated Fock-space cascade.
    VerifyFock {
        #[arg(long, default_value_t = 6)]
        passes: u32,
        #[arg(long, default_value_t = 0.05)]
        g1_alpha: f64,
        #[arg(long, default_value_t = 0.01)]
        g2: f64,
        #[arg(long, default_value_t = 0.81)]
        beta: f64,
    },
}

fn load(path: Option<&PathBuf>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load_or_default(path.map(PathBuf::as_path))?;
    if let Some(s) = seed {
        cfg.sim.seed = s;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Model { config, grid, out } => {
            let cfg = load(config.as_ref(), None)?;
            cmd_model(&cfg, &parse_grid(&grid)?, out.as_deref())
        }
        Command::Simulate {
            config,
            seed,
            out,
            format,
        } => {
            let cfg = load(config.as_ref(), seed)?;
            let s = cmd_simulate(&cfg, &out, format)?;
            println!(
                "{} heralds, {} conversions, {} tags written to {}",
                s.heralds,
                s.converted,
                s.tags.iter().sum::<u64>(),
                out.display()
            );
            Ok(())
        }
        Command::Analyze { tags, config, out } => {
            let cfg = load(config.as_ref(), None)?;
            let r = cmd_analyze(&cfg, config.is_some(), &tags, &out)?;
            match r.a_exp {
                Some(a) => println!("{} triplets, A_exp = {:.4} +- {:.4}", r.triplets, a.value, a.err),
                None => println!("{} triplets, no estimate: {}", r.triplets, r.note.unwrap_or_default()),
            }
            Ok(())
        }
        Command::Sweep {
            config,
            sweep,
            seed,
            out,
            format,
        } => {
            let cfg = load(config.as_ref(), seed)?;
            let (field, values) = parse_sweep(&sweep)?;
            let report = cmd_sweep(&cfg, &field, &values, &out, format)?;
            for row in &report.rows {
                match row.comparison {
                    Some(c) => println!(
                        "{field}={}: A_exp = {:.4} +- {:.4}, model {:.4} [{:.4}, {:.4}], {:+.2} sigma",
                        row.value, c.a_exp, c.a_err, c.a_model, c.a_model_lo, c.a_model_hi, c.residual_sigma
                    ),
                    None => println!("{field}={}: no estimate", row.value),
                }
            }
            Ok(())
        }
        Command::VerifyFock {
            passes,
            g1_alpha,
            g2,
            beta,
        } => cmd_verify_fock(passes, g1_alpha, g2, beta, &mut std::io::stdout().lock()).map(drop),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
