use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cqed_thermo::sweep::{run_convergence, run_sweep, summary, Axis, ConvergenceTables, Format, RunConfig};
use cqed_thermo::Error;

#[derive(Parser)]
#[command(version, about = "Steady-state thermodynamics of driven-dissipative cavity QED models")]
struct Cli {
    /// Override the cavity cutoff of the config
    #[arg(long, global = true, value_name = "N")]
    cutoff: Option<usize>,

    /// Override the sweep axis of the config (n_H or g_ratio)
    #[arg(long, global = true)]
    axis: Option<Axis>,

    /// Suppress progress output on stderr
    #[arg(long, short, global = true)]
    quiet: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a parameter sweep and write one row per point and model
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        format: Option<Format>,
    },
    /// Check cavity-cutoff and semi-classical-limit convergence
    Converge {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

const EXIT_PARTIAL: u8 = 2;

fn open_output(path: Option<&PathBuf>) -> Result<Box<dyn Write>, Error> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn report_convergence(t: &ConvergenceTables) {
    for c in &t.cutoffs {
        let diff = c.rel_diff.map(|d| format!("{d:.2e}")).unwrap_or_else(|| "-".into());
        eprintln!("  cutoff {:>3}: J_C = {:.6e}  rel diff {diff}  edge {:.1e}", c.cutoff, c.j_c, c.edge_population);
    }
    if let Some(e) = &t.cutoff_error {
        eprintln!("  cutoff check failed: {e}");
    }
    eprintln!("  cutoff convergence: {}", if t.cutoff_pass { "pass" } else { "FAIL" });
    for s in &t.scales {
        eprintln!("  scale {:>4}: |J_C - J_C^sc| = {:.4e}", s.scale, s.gap);
    }
    if let Some(e) = &t.scale_error {
        eprintln!("  limit-family check failed: {e}");
    }
    eprintln!("  semi-classical limit: {}", if t.scale_pass { "pass" } else { "FAIL" });
}

fn run(cli: Cli) -> Result<u8, Error> {
    let (config, output) = match &cli.command {
        Command::Run { config, output, .. } | Command::Converge { config, output } => (config, output),
    };
    let mut cfg = RunConfig::load(config)?;
    if let Some(n) = cli.cutoff {
        cfg = cfg.with_cutoff(n);
    }
    if let Some(axis) = cli.axis {
        cfg = cfg.with_axis(axis);
    }
    cfg.validate()?;

    match cli.command {
        Command::Run { format, .. } => {
            let format = format.unwrap_or(cfg.output.format);
            let path = output.clone().or_else(|| cfg.output.path.clone());
            // open before solving so an unwritable path fails fast
            let mut out = open_output(path.as_ref())?;
            if !cli.quiet {
                eprintln!("sweeping {} over {} points", cfg.sweep.axis.label(), cfg.sweep.points()?.len());
            }
            let table = run_sweep(&cfg)?;
            match format {
                Format::Csv => table.write_csv(&mut out)?,
                Format::Json => table.write_json(&cfg, &mut out)?,
            }
            out.flush()?;
            let counts = summary(&table);
            if !cli.quiet {
                eprintln!("{} rows, {} failed, {} with undefined Q", counts["rows"], counts["failed"], counts["q_undefined"]);
                for row in table.rows.iter().filter(|r| r.failed()) {
                    eprintln!("  {} at {}: {}", row.model.label(), row.sweep_value, row.error.as_deref().unwrap_or(""));
                }
            }
            let mut code = if counts["failed"] > 0 { EXIT_PARTIAL } else { 0 };
            if cfg.convergence.enabled {
                let t = run_convergence(&cfg)?;
                if !cli.quiet {
                    eprintln!("convergence checks:");
                    report_convergence(&t);
                }
                if !t.passed() {
                    code = EXIT_PARTIAL;
                }
            }
            Ok(code)
        }
        Command::Converge { .. } => {
            let mut out = open_output(output.as_ref())?;
            let t = run_convergence(&cfg)?;
            t.write_csv(&mut out)?;
            out.flush()?;
            if !cli.quiet {
                report_convergence(&t);
            }
            Ok(if t.passed() { 0 } else { EXIT_PARTIAL })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
