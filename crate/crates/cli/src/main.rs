use clap::{Parser, Subcommand};
use fibrelab_core::labyrinth::BuildConfig;
use fibrelab_core::run::{self, LabyrinthJob, RunConfig, RunError};
use fibrelab_core::verify::PathSearchConfig;
use num_complex::Complex64;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

/// Labyrinth-guided polynomial submersions of the unit ball and their verification.
#[derive(Parser, Debug)]
#[command(name = "fibrelab", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the inductive construction into a run directory.
    Construct {
        /// TOML or JSON configuration; optional with --resume.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
        /// Continue an existing run, keeping its accepted steps.
        #[arg(long)]
        resume: bool,
    },
    /// Re-check the last map of a run and write verify.json.
    Verify {
        #[arg(long)]
        run: PathBuf,
        /// Search for band paths across shell j_lambda for every configured band.
        #[arg(long)]
        band: bool,
        /// Search for crossings avoiding each labyrinth; writes paths.csv.
        #[arg(long)]
        paths: bool,
    },
    /// Trace a fiber of a map of the run; writes trace.json and trace.csv.
    Trace {
        #[arg(long)]
        run: PathBuf,
        /// Fiber value as `re,im`.
        #[arg(long, value_parser = parse_complex, allow_hyphen_values = true)]
        c: Complex64,
        /// Real coordinates of a point near the fiber, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        start: Vec<f64>,
        /// Index of the map to trace; defaults to the last accepted one.
        #[arg(long)]
        map: Option<usize>,
    },
    /// Build and certify a single labyrinth.
    Labyrinth {
        #[arg(long)]
        inner: f64,
        #[arg(long)]
        outer: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        eta: Option<f64>,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 100)]
        restarts: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Component budget of the builder.
        #[arg(long)]
        max_components: Option<usize>,
        /// Output directory for labyrinth.json and paths.csv.
        #[arg(long)]
        out: PathBuf,
    },
    /// Consolidate a run into report.json, ray.csv and histogram.csv.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

/// Prints a line to stdout, ignoring a closed pipe.
macro_rules! say {
    ($($arg:tt)*) => {
        let _ = writeln!(std::io::stdout(), $($arg)*);
    };
}

fn parse_complex(s: &str) -> Result<Complex64, String> {
    let parts: Vec<&str> = s.split(',').collect();
    let [re, im] = parts.as_slice() else {
        return Err(format!("expected `re,im`, got `{s}`"));
    };
    let p = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok(Complex64::new(p(re)?, p(im)?))
}

fn configure_threads() -> Result<(), RunError> {
    let Ok(v) = std::env::var("FIBRELAB_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .map_err(|_| RunError::Config(format!("FIBRELAB_THREADS={v} is not a thread count")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| RunError::Config(e.to_string()))
}

fn execute(cli: Cli) -> Result<(), RunError> {
    configure_threads()?;
    match cli.command {
        Command::Construct {
            config,
            out,
            resume,
        } => {
            let cfg = config.as_deref().map(RunConfig::load).transpose()?;
            let o = run::construct(cfg.as_ref(), &out, resume)?;
            say!(
                "accepted {}/{} steps ({} run now) in {}",
                o.accepted,
                o.scheduled,
                o.ran,
                out.display()
            );
        }
        Command::Verify { run, band, paths } => {
            let r = run::verify(&run, paths, band)?;
            say!(
                "verified {} accepted step(s): no counterexample found",
                r.accepted_steps
            );
        }
        Command::Trace { run, c, start, map } => {
            let t = run::trace(&run, c, &start, map)?;
            say!(
                "traced F_{} = {c}: length {}, residual {}",
                t.map,
                t.ledger.length,
                t.ledger.residual
            );
            for s in &t.ledger.per_shell {
                say!(
                    "  shell {} [{}, {}]: {}",
                    s.shell,
                    s.inner,
                    s.outer,
                    s.length
                );
            }
        }
        Command::Labyrinth {
            inner,
            outer,
            delta,
            eta,
            n,
            restarts,
            seed,
            max_components,
            out,
        } => {
            let defaults = BuildConfig::default();
            let job = LabyrinthJob {
                inner,
                outer,
                delta,
                eta,
                n,
                build: BuildConfig {
                    seed,
                    max_components: max_components.unwrap_or(defaults.max_components),
                    ..defaults
                },
                paths: PathSearchConfig {
                    restarts,
                    seed,
                    ..PathSearchConfig::default()
                },
            };
            let o = run::labyrinth_job(&job, &out)?;
            say!(
                "{} components, max diameter {}, shortest crossing {:?}",
                o.labyrinth.len(),
                o.max_diameter,
                o.best_length
            );
        }
        Command::Report { run } => {
            let r = run::report(&run)?;
            say!(
                "report for {} accepted step(s) written to {}",
                r.manifest.acceptance.accepted,
                run.join("report.json").display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
