use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use nonconvex_da_cli::config::parse_seeds;
use nonconvex_da_cli::{build_report, read_summary, run, write_outputs, ConfigError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "ncda", version, about = "Dual averaging on continuous domains: regret experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config and write CSVs.
    Run {
        config: PathBuf,
        /// Seed override, `a..b` (half-open) or a comma list.
        #[arg(long)]
        seeds: Option<String>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Align summary CSVs and print a comparison table.
    Report {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

fn run_command(config: PathBuf, seeds: Option<String>, out: Option<PathBuf>, threads: Option<usize>) -> Result<()> {
    let text = std::fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
    let mut cfg = ExperimentConfig::parse(&text).map_err(|e| anyhow::Error::new(e).context(config.display().to_string()))?;
    if let Some(s) = seeds {
        cfg.seeds = parse_seeds(&s).map_err(|m| anyhow::anyhow!("--seeds: {m}"))?;
    }
    if let Some(o) = out {
        cfg.output = o;
    }
    if threads == Some(0) {
        anyhow::bail!("--threads must be at least 1");
    }
    let exp = run(&cfg, threads)?;
    let floor = exp.floor_rounds();
    if floor > 0 {
        eprintln!(
            "warning: kernel radius held at its floor (twice the cell diameter) in {floor} rounds across {} seeds",
            exp.seeds.len()
        );
    }
    for s in &exp.seeds {
        if let Some(d) = &s.diagnostics {
            if d.recursion_violations + d.telescoped_violations > 0 {
                eprintln!(
                    "warning: seed {}: {} recursion and {} telescoped energy violations",
                    s.seed, d.recursion_violations, d.telescoped_violations
                );
            }
        }
        for w in s.windows.iter().filter(|w| !w.holds) {
            eprintln!("warning: seed {}: window decomposition fails at window {}", s.seed, w.window);
        }
    }
    let written = write_outputs(&exp, &cfg.output)?;
    if let Some(last) = exp.summary.last() {
        let slope = last.slope.map_or("unavailable".to_string(), |s| format!("{s:.4}"));
        println!(
            "{}: {} seeds, T = {}, mean regret {:.6}, std {:.6}, slope {slope}",
            last.algorithm,
            exp.seeds.len(),
            last.t,
            last.mean_regret,
            last.std_regret
        );
    }
    println!("wrote {} files to {}", written.len(), cfg.output.display());
    Ok(())
}

fn report_command(summaries: Vec<PathBuf>, csv: Option<PathBuf>) -> Result<()> {
    let loaded = summaries.iter().map(|p| read_summary(p)).collect::<Result<Vec<_>>>()?;
    let report = build_report(&loaded)?;
    print!("{}", report.to_text());
    if let Some(path) = csv {
        report.write_csv(&path)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seeds, out, threads } => run_command(config, seeds, out, threads),
        Command::Report { summaries, csv } => report_command(summaries, csv),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
