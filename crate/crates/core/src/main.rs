use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use dualgraph::cli::{self, Preset, RunConfig};
use dualgraph::Error;

#[derive(Parser)]
#[command(name = "dualgraph", version, about = "Foreground/background separation for static-camera video")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Solver parameter preset (exp1, exp2, exp3); config keys override it.
    #[arg(long)]
    preset: Option<Preset>,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Random seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Foreground threshold, overriding `fg_threshold`.
    #[arg(long)]
    fg_threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Separate a video into background and foreground.
    Detect {
        #[command(flatten)]
        common: Common,
        /// Validate the config and build the graphs without solving or writing.
        #[arg(long)]
        dry_run: bool,
    },
    /// Score the artifacts of a previous detect run against known truth.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// Write a synthetic video with its truth background and masks.
    Synth {
        /// Synthetic video description; the builtin benchmark when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, default_value = "synthetic")]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Describe the spatial and temporal graphs of the configured input.
    GraphInfo {
        #[command(flatten)]
        common: Common,
        /// Also write the Laplacians as triplet files to the output directory.
        #[arg(long)]
        export: bool,
    },
}

fn resolve(common: &Common) -> Result<RunConfig, Error> {
    let mut base = RunConfig::default();
    if let Some(p) = common.preset {
        base.solver = p.solver_config();
    }
    let mut cfg = match &common.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.clone(),
                source: e,
            })?;
            cli::parse_config_str(&text, base)?
        }
        None => base,
    };
    if let Some(o) = &common.output {
        cfg.output_dir = o.clone();
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(t) = common.fg_threshold {
        cfg.fg_threshold = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(command: Command) -> Result<i32, Error> {
    match command {
        Command::Detect { common, dry_run } => {
            let cfg = resolve(&common)?;
            let outcome = cli::cmd_detect(&cfg, dry_run)?;
            if let Some(r) = &outcome.report {
                print!("{r}");
            }
            Ok(outcome.exit_code())
        }
        Command::Eval { common } => {
            let cfg = resolve(&common)?;
            print!("{}", cli::cmd_eval(&cfg)?);
            Ok(cli::EXIT_OK)
        }
        Command::Synth { spec, output, seed } => {
            let out = cli::cmd_synth(spec.as_deref(), &output, seed)?;
            println!("frames={} output={}", out.frames.len(), output.display());
            Ok(cli::EXIT_OK)
        }
        Command::GraphInfo { common, export } => {
            let cfg = resolve(&common)?;
            let (_, text) = cli::cmd_graph_info(&cfg, export)?;
            print!("{text}");
            Ok(cli::EXIT_OK)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Cli::parse();
    let code = match run(args.command) {
        Ok(code) => code,
        Err(e) => {
            error!("{e}");
            cli::exit_code(&e)
        }
    };
    ExitCode::from(code as u8)
}
