use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fstta_cli::{cmd_forgetting, cmd_pretrain, cmd_run, compare, HarnessError, Result, RunConfig};

#[derive(Parser)]
#[command(name = "fstta", version, about = "Fast-slow test-time adaptation on a synthetic navigation benchmark")]
struct Cli {
    /// TOML config file; missing keys take their defaults.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set fast_lr=0.05`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the policy on seen scenes and save its parameters.
    Pretrain,
    /// Run every strategy on every stream and shuffle.
    Run,
    /// Evaluate seen-stream retention after adapting on unseen streams.
    Forgetting,
    /// Merge results files into one table.
    Compare {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Also write the merged table as CSV.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn load(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    cfg.apply_overrides(&cli.overrides)?;
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Pretrain => {
            let cfg = load(&cli)?;
            let out = cmd_pretrain(&cfg)?;
            println!(
                "saved {} (sha256 {})\nheld-out step accuracy {:.4} (chance {:.4}), final loss {:.4}",
                out.params_path.display(),
                out.checksum,
                out.report.heldout_accuracy,
                out.report.chance_accuracy,
                out.report.epoch_loss.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Run => {
            let cfg = load(&cli)?;
            let out = cmd_run(&cfg)?;
            let failed = out.rows.iter().filter(|r| !r.is_aggregate() && !r.is_ok()).count();
            print!("{}", compare(&[&out.results_path])?.render_text());
            println!("wrote {}", out.results_path.display());
            if failed > 0 {
                eprintln!("warning: {failed} cell(s) failed; see the status column");
            }
        }
        Command::Forgetting => {
            let cfg = load(&cli)?;
            let out = cmd_forgetting(&cfg)?;
            println!("{:<6} {:>3} {:>14} {:>14} {:>7} {:>7}", "cond", "n", "SR", "SPL", "TL", "NE");
            for r in &out.rows {
                println!(
                    "{:<6} {:>3} {:>14} {:>14} {:>7.2} {:>7.2}",
                    r.condition,
                    r.n,
                    format!("{:.2}±{:.2}", r.sr, r.sr_std),
                    format!("{:.2}±{:.2}", r.spl, r.spl_std),
                    r.tl,
                    r.ne
                );
            }
            println!("wrote {}", out.path.display());
        }
        Command::Compare { files, out } => {
            let cmp = compare(files)?;
            print!("{}", cmp.render_text());
            if let Some(path) = out {
                cmp.write_csv(path)?;
            }
        }
        Command::Config => print!("{}", load(&cli)?.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {}", e.category(), strip_category(&e));
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn strip_category(e: &HarnessError) -> String {
    match e {
        HarnessError::Config(m) | HarnessError::Data(m) | HarnessError::Numerical(m) => m.clone(),
    }
}
