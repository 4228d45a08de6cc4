//! `spread run | report | problems`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use spread_cli::spec::{Mode, Seeds};
use spread_cli::{report, run, CliResult, Failure, RunSpec};
use spread_core::guidance::Variant;
use spread_core::problems::{Objective, Problem, REGISTRY};

#[derive(Parser)]
#[command(name = "spread", version, about = "Diffusion-guided multi-objective optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a spec file (TOML), optionally overriding fields from the command line.
    Run(RunArgs),
    /// Compare finished run directories.
    Report {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// List the benchmark problems.
    Problems,
}

#[derive(Args)]
struct RunArgs {
    /// Spec file; without one, --mode is required.
    spec: Option<PathBuf>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// `1000,2000`, `1000..5000` (step 1000) or `a..b:step`.
    #[arg(long)]
    seeds: Option<Seeds>,
    /// Output directory; relative paths go under $SPREAD_OUTPUT_ROOT when set.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[arg(long)]
    checkpoint: Option<String>,
    /// Number of solutions.
    #[arg(long)]
    n: Option<usize>,
    /// Diffusion timesteps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    zeta: Option<f64>,
    #[arg(long)]
    eta0: Option<f64>,
    /// full, no_diversity, no_repulsion or no_perturbation.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|_| format!("unknown variant `{s}`"))
}

impl RunArgs {
    fn into_spec(self) -> CliResult<RunSpec> {
        let mut spec = match (&self.spec, self.mode) {
            (Some(p), _) => RunSpec::from_file(p)?,
            (None, Some(m)) => RunSpec::new(m),
            (None, None) => return Err(Failure::user("mode: give a spec file or --mode")),
        };
        if let Some(m) = self.mode {
            spec.mode = m;
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if self.$f.is_some() { spec.$f = self.$f; } )* };
        }
        set!(problem, dataset, output, label, checkpoint, n, steps, epochs, nu, rho, zeta, eta0, variant);
        if let Some(s) = self.seeds {
            spec.seeds = s;
        }
        Ok(spec)
    }
}

fn problems() -> String {
    let mut out = format!("{:<8} {:>3} {:>3}  reference point\n", "name", "d", "m");
    for name in REGISTRY {
        let p = Problem::from_name(name).expect("registry names parse");
        let r: Vec<String> = p.ref_point().iter().map(|v| format!("{v}")).collect();
        out.push_str(&format!("{name:<8} {:>3} {:>3}  [{}]\n", p.n_var(), p.n_obj(), r.join(", ")));
    }
    out.push_str("\nZDT and DTLZ accept -mM / -dD suffixes, e.g. dtlz2-m3-d20.\n");
    out
}

fn dispatch(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Run(args) => {
            let dir = run::run(args.into_spec()?)?;
            println!("{}", dir.display());
        }
        Command::Report { dirs, csv } => {
            let rows = report::build(&dirs)?;
            print!("{}", report::to_text(&rows));
            if let Some(p) = csv {
                std::fs::write(&p, report::to_csv(&rows)).map_err(|e| Failure::user(format!("cannot write {}: {e}", p.display())))?;
            }
        }
        Command::Problems => print!("{}", problems()),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.exit_code())
        }
    }
}
