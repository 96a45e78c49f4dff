//! The `cect` command line: argument parsing, configuration resolution and
//! one handler per subcommand. [`run`] returns the process exit code.

mod commands;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use cect::{CectError, ErrorClass};
use clap::{Args, Parser, Subcommand};

pub use settings::{load_settings, Settings, Sources};

pub const EXIT_OK: i32 = 0;
/// Bad arguments, configuration or input data.
pub const EXIT_VALIDATION: i32 = 1;
/// Numeric failure during computation.
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "cect",
    version,
    about = "Train and evaluate controllable-ensemble CNN/transformer classifiers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct Common {
    /// Config file (`key = value` lines) or a preset name.
    #[arg(long, global = true, value_name = "PATH|PRESET")]
    config: Option<String>,
    /// Output directory for every artifact.
    #[arg(long, global = true, env = "CECT_OUT", default_value = "cect-out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// reference, tiny or micro.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Worker threads for parallel kernels (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override one config key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Suppress progress output on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model, select on validation and evaluate on test.
    Train {
        /// Continue from the last checkpoint in the run directory.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate a checkpoint on the validation and test subsets.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and test one model per coefficient group.
    Sweep,
    /// Train and test the block/scale ablation rows.
    Ablate,
    /// Export penultimate features and their t-SNE projection.
    Embed {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Write a deterministic synthetic dataset into the output directory.
    Synth {
        /// Images per class.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Compare analytic and finite-difference gradients of the model.
    Gradcheck,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Train { .. } => "train",
            Command::Eval { .. } => "eval",
            Command::Sweep => "sweep",
            Command::Ablate => "ablate",
            Command::Embed { .. } => "embed",
            Command::Synth { .. } => "synth",
            Command::Gradcheck => "gradcheck",
        }
    }
}

pub fn exit_code(e: &CectError) -> i32 {
    match e.class() {
        ErrorClass::Validation => EXIT_VALIDATION,
        ErrorClass::Runtime => EXIT_RUNTIME,
        ErrorClass::Io => EXIT_IO,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// exit code. Errors are printed to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn execute(cli: Cli) -> cect::Result<()> {
    let mut overrides = cli.common.overrides;
    if let Command::Synth { n: Some(n) } = &cli.command {
        overrides.push(format!("synth.n={n}"));
    }
    let settings = load_settings(&Sources {
        config: cli.common.config,
        preset: cli.common.preset,
        overrides,
        seed: cli.common.seed,
    })?;
    let ctx = commands::Ctx::new(cli.command.name(), settings, cli.common.out, cli.common.quiet)?;
    let dispatch = || match cli.command {
        Command::Train { resume } => commands::train(&ctx, resume),
        Command::Eval { checkpoint } => commands::eval(&ctx, checkpoint),
        Command::Sweep => commands::sweep(&ctx),
        Command::Ablate => commands::ablate(&ctx),
        Command::Embed { checkpoint } => commands::embed(&ctx, checkpoint),
        Command::Synth { .. } => commands::synth(&ctx),
        Command::Gradcheck => commands::gradcheck(&ctx),
    };
    match cli.common.threads {
        None => dispatch(),
        Some(0) => Err(CectError::Config("--threads must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CectError::Config(format!("cannot build a {n}-thread pool: {e}")))?
            .install(dispatch),
    }
}
