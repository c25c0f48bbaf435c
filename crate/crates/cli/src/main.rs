//! `mvhuman`: simulate scenes, run the pipeline, score results.
//!
//! Exit codes: 0 success, 2 configuration error, 3 pipeline or input error,
//! 4 evaluation error.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use mvhuman::config::PipelineConfig;
use mvhuman::error::Error;
use mvhuman::io::{Document, ResultDocument};
use mvhuman::pipeline::{ablation_csv, evaluate, run, run_ablation, Evaluation};
use mvhuman::synth::{generate, Scenario, SynthConfig};

const EXIT_CONFIG: u8 = 2;
const EXIT_PIPELINE: u8 = 3;
const EXIT_EVALUATION: u8 = 4;

#[derive(Parser)]
#[command(name = "mvhuman", version, about = "Multi-view multi-person human reconstruction on synthetic scenes")]
struct Cli {
    /// Worker threads; 0 uses every core. Output does not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scenario with ground truth.
    Simulate {
        /// TOML scenario config; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Track, associate, rescale and fuse the observations of a scenario or observations file.
    Pipeline {
        #[arg(long, short)]
        input: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score a result file against the scenario it came from.
    Evaluate {
        #[arg(long)]
        result: PathBuf,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum, default_value_t = Protocol::All)]
        protocol: Protocol,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run every ablation variant on a scenario and write one CSV row each.
    Ablate {
        #[arg(long)]
        scenario: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Print the default configuration as TOML.
    DescribeConfig {
        #[arg(long, value_enum, default_value_t = ConfigKind::Pipeline)]
        kind: ConfigKind,
    },
}

#[derive(Args)]
struct Overrides {
    /// `key=value` override, applied after the config file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML pipeline config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Clone, Copy, ValueEnum)]
enum Protocol {
    /// Per-person sequence metrics: WA-MPJPE, W-MPJPE, RTE.
    Sequence,
    /// Per-frame multi-person metrics: W-MPJPE dagger, GA-MPJPE, PA-MPJPE.
    Multiview,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConfigKind {
    Pipeline,
    Scenario,
}

struct Failure {
    code: u8,
    message: String,
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code() as u8,
            message: e.to_string(),
        }
    }
}

fn fail(code: u8, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

fn read(path: &Path, code: u8) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| fail(code, format!("cannot read {}: {e}", path.display())))
}

fn write(path: Option<&Path>, text: &str, code: u8) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| fail(code, format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_pipeline_config(args: &ConfigArgs) -> Result<PipelineConfig, Failure> {
    let text = match &args.config {
        Some(p) => read(p, EXIT_CONFIG)?,
        None => String::new(),
    };
    Ok(PipelineConfig::from_toml_with(&text, &args.overrides.set)?)
}

fn load_document(path: &Path, code: u8) -> Result<Document, Failure> {
    let text = read(path, code)?;
    Document::from_json(&text).map_err(|e| fail(code, format!("{}: {e}", path.display())))
}

fn load_scenario(path: &Path, code: u8) -> Result<Scenario, Failure> {
    match load_document(path, code)? {
        Document::Scenario(s) => Ok(s),
        other => Err(fail(code, format!("{}: expected a scenario file, got `{}`", path.display(), other.kind()))),
    }
}

fn restrict(mut e: Evaluation, protocol: Protocol) -> Evaluation {
    let m = &mut e.metrics;
    match protocol {
        Protocol::All => {}
        Protocol::Sequence => {
            (m.w_mpjpe_dagger, m.ga_mpjpe, m.pa_mpjpe) = (None, None, None);
        }
        Protocol::Multiview => {
            (m.wa_mpjpe, m.w_mpjpe, m.rte) = (None, None, None);
            m.rte_static = false;
            m.alignments.clear();
        }
    }
    e
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, overrides, out } => {
            let text = match &config {
                Some(p) => read(p, EXIT_CONFIG)?,
                None => String::new(),
            };
            let cfg = SynthConfig::from_toml_with(&text, &overrides.set)?;
            let scenario = generate(&cfg)?;
            log::info!("simulated {} observations", scenario.observations.len());
            write(Some(&out), &Document::Scenario(scenario).to_json(), EXIT_PIPELINE)
        }
        Command::Pipeline { input, config, out } => {
            let cfg = load_pipeline_config(&config)?;
            let input = load_document(&input, EXIT_PIPELINE)?
                .into_pipeline_input()
                .map_err(|e| fail(EXIT_PIPELINE, e.to_string()))?;
            let result = run(&input, &cfg)?;
            for w in &result.warnings {
                log::warn!("{w}");
            }
            log::info!("{} identities", result.humans.len());
            write(Some(&out), &Document::Result(ResultDocument { config: cfg, result }).to_json(), EXIT_PIPELINE)
        }
        Command::Evaluate { result, scenario, protocol, out } => {
            let result = match load_document(&result, EXIT_EVALUATION)? {
                Document::Result(r) => r.result,
                other => return Err(fail(EXIT_EVALUATION, format!("expected a result file, got `{}`", other.kind()))),
            };
            let scenario = load_scenario(&scenario, EXIT_EVALUATION)?;
            let eval = evaluate(&result, &scenario).map_err(|e| fail(EXIT_EVALUATION, e.to_string()))?;
            write(out.as_deref(), &Document::Metrics(restrict(eval, protocol)).to_json(), EXIT_EVALUATION)
        }
        Command::Ablate { scenario, config, out } => {
            let cfg = load_pipeline_config(&config)?;
            let scenario = load_scenario(&scenario, EXIT_PIPELINE)?;
            let rows = run_ablation(&scenario, &cfg)?;
            write(out.as_deref(), &ablation_csv(&rows), EXIT_PIPELINE)
        }
        Command::DescribeConfig { kind } => {
            let text = match kind {
                ConfigKind::Pipeline => PipelineConfig::describe(),
                ConfigKind::Scenario => SynthConfig::describe(),
            };
            write(None, &text, EXIT_CONFIG)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHROMM_LOG", "warn")).init();
    let cli = Cli::parse();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        log::warn!("thread pool already initialised: {e}");
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code)
        }
    }
}
