use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use hoferlab::cli::{self, emit, to_json, ExperimentParams, ExperimentReport, Tolerances, ALL_FORMATS, CATALOG};

#[derive(Parser)]
#[command(name = "hoferlab", version, about = "Numerical laboratory for Hofer geometry on surfaces")]
struct Args {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario file
    Run {
        scenario: PathBuf,
        /// Output directory; overrides the scenario's `outputs.dir`
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named experiment from the catalog
    Experiment {
        name: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resolution override; meaning depends on the experiment (see `list`)
        #[arg(long)]
        grid: Option<usize>,
        /// Tolerance override; meaning depends on the experiment (see `list`)
        #[arg(long)]
        tol: Option<f64>,
    },
    /// List catalog experiments
    List,
    /// Run the invariant suite twice and compare outputs
    Check {
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn summary(reports: &[ExperimentReport]) {
    for r in reports {
        let status = if r.pass { "pass" } else { "FAIL" };
        eprintln!("{status:4}  {}  ({:.2}s)", r.id, r.runtime_secs);
        for c in r.failed_checks() {
            eprintln!("      failed: {} = {:e} (bound {:e})", c.name, c.value, c.bound);
        }
        if let Some(e) = &r.error {
            eprintln!("      error: {e}");
        }
    }
}

fn run(cmd: Cmd) -> Result<bool, cli::CliError> {
    match cmd {
        Cmd::Run { scenario, out } => {
            let (sc, reports) = cli::run_scenario(&scenario)?;
            let (dir, formats) = match (&out, &sc.outputs) {
                (Some(d), o) => (Some(d.clone()), o.as_ref().map_or(ALL_FORMATS.to_vec(), |o| o.formats.clone())),
                (None, Some(o)) => (Some(o.dir.clone()), o.formats.clone()),
                (None, None) => (None, ALL_FORMATS.to_vec()),
            };
            match dir {
                Some(d) => {
                    emit(&reports, &formats, &d)?;
                }
                None => print!("{}", to_json(&reports)),
            }
            summary(&reports);
            Ok(reports.iter().all(|r| r.pass))
        }
        Cmd::Experiment { name, out, grid, tol } => {
            let params = ExperimentParams {
                grid,
                tol,
                tolerances: Tolerances::default(),
            };
            let report = cli::experiment(&name, &params)?;
            let reports = [report];
            print!("{}", to_json(&reports));
            if let Some(d) = out {
                emit(&reports, &ALL_FORMATS, &d)?;
            }
            summary(&reports);
            Ok(reports[0].pass)
        }
        Cmd::List => {
            for e in CATALOG {
                println!("{}\n    {}\n    --grid: {}\n    --tol:  {}", e.name, e.summary, e.grid, e.tol);
            }
            Ok(true)
        }
        Cmd::Check { out } => {
            let outcome = cli::run_check(&Tolerances::default());
            if let Some(d) = out {
                emit(&outcome.reports, &ALL_FORMATS, &d)?;
            }
            summary(&outcome.reports);
            println!(
                "check: {} ({} reports, deterministic: {})",
                if outcome.pass { "pass" } else { "FAIL" },
                outcome.reports.len(),
                outcome.deterministic
            );
            Ok(outcome.pass)
        }
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let start = Instant::now();
    let res = run(args.cmd);
    eprintln!("runtime: {:.2}s", start.elapsed().as_secs_f64());
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
