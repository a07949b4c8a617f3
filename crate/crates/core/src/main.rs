use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wigner_smith::config::{ExperimentConfig, ExperimentKind};
use wigner_smith::experiments::{exit_code_for, run};

#[derive(Parser)]
#[command(name = "wigner-smith", version, about = "Time-delay matrix experiments for disordered wires")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config.
    Run {
        config: PathBuf,
        /// Overrides `sim.master_seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `output.dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; results do not depend on it.
        #[arg(long)]
        workers: Option<usize>,
    },
    /// List available experiments.
    List {
        #[arg(long)]
        json: bool,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::List { json } => {
            if json {
                let infos: Vec<_> = ExperimentKind::ALL.iter().map(|k| k.info()).collect();
                println!("{}", serde_json::to_string_pretty(&infos).expect("serializable"));
            } else {
                for k in ExperimentKind::ALL {
                    println!("{:<22} {:<12} {}", k.name(), k.module(), k.description());
                }
            }
            ExitCode::SUCCESS
        }
        Command::Run { config, seed, out, workers } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {e}");
                    return ExitCode::from(exit_code_for(&e) as u8);
                }
            };
            if let Some(s) = seed {
                cfg.sim.master_seed = s;
            }
            if let Some(d) = out {
                cfg.output.dir = d;
            }
            if workers == Some(0) {
                eprintln!("error: --workers must be positive");
                return ExitCode::from(2);
            }
            let (code, res) = run(&cfg, workers);
            match res {
                Ok(r) => {
                    for c in &r.checks {
                        let tag = if c.pass { "PASS" } else { "FAIL" };
                        println!("{tag} {} value={:.6e} target={:.6e} stat={:.3e} tol={:.3e}", c.name, c.value, c.target, c.stat, c.tolerance);
                    }
                    println!("{} {}", r.experiment.name(), if r.passed() { "passed" } else { "failed" });
                }
                Err(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(code as u8)
        }
    }
}
