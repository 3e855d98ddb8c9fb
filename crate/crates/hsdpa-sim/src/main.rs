use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use hsdpa_sim::config::{Policy, RunConfig};
use hsdpa_sim::experiment::{
    emit_plot_scripts, evaluate_orderings, read_summaries, render_report, run_matrix,
    write_outputs, SweepSpec,
};

/// Sweep buffer-management policies, cell loads and seeds of the HSDPA cell
/// simulator; write per-run CSVs and evaluate the comparative orderings.
#[derive(Debug, Parser)]
#[command(name = "hsdpa-sim", version)]
struct Args {
    /// Flat `key = value` config file applied to every run.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Buffer-management policies to sweep.
    #[arg(long, value_delimiter = ',', default_value = "fifo,tsp,etsp")]
    policies: Vec<Policy>,

    /// Cell user counts (test user included).
    #[arg(long, value_delimiter = ',', default_value = "1,5,10,20,30")]
    users: Vec<u32>,

    /// Master seeds, one run per seed.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,

    /// Output directory for summary and series CSVs.
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out: PathBuf,

    /// Summarize an existing results directory instead of running.
    #[arg(long, value_name = "DIR")]
    summarize: Option<PathBuf>,

    /// Write gnuplot scripts for the comparison figures next to the CSVs.
    #[arg(long)]
    emit_plots: bool,

    /// Exit with status 2 when any ordering verdict fails.
    #[arg(long)]
    check: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(args) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(args: Args) -> Result<ExitCode, String> {
    if let Some(dir) = &args.summarize {
        let summaries = read_summaries(dir).map_err(|e| format!("reading {dir:?}: {e}"))?;
        print!("{}", render_report(&summaries));
        if args.emit_plots {
            emit_plot_scripts(dir, &summaries).map_err(|e| e.to_string())?;
        }
        return Ok(check_code(&args, &summaries));
    }

    let base = match &args.config {
        Some(path) => RunConfig::load(path).map_err(|e| e.to_string())?,
        None => RunConfig::default(),
    };
    std::fs::create_dir_all(&args.out)
        .map_err(|e| format!("output directory {:?} is not writable: {e}", args.out))?;

    let spec = SweepSpec {
        base,
        policies: args.policies.clone(),
        user_counts: args.users.clone(),
        seeds: args.seeds.clone(),
    };
    eprintln!(
        "running {} simulations ({} policies x {} loads x {} seeds) ...",
        spec.cells().len(),
        spec.policies.len(),
        spec.user_counts.len(),
        spec.seeds.len()
    );
    let outputs = run_matrix(&spec);
    write_outputs(&args.out, &outputs).map_err(|e| e.to_string())?;
    eprintln!("wrote {:?}", args.out.join("summary.csv"));

    let summaries: Vec<_> = outputs.into_iter().map(|o| o.summary).collect();
    print!("{}", render_report(&summaries));
    if args.emit_plots {
        emit_plot_scripts(&args.out, &summaries).map_err(|e| e.to_string())?;
    }
    Ok(check_code(&args, &summaries))
}

fn check_code(args: &Args, summaries: &[hsdpa_sim::RunSummary]) -> ExitCode {
    if args.check
        && evaluate_orderings(summaries)
            .iter()
            .any(|v| v.pass == Some(false))
    {
        return ExitCode::from(2);
    }
    ExitCode::SUCCESS
}
