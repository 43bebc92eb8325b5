use std::io::Read as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ddgen::generator::{self, GenerationConfig, NGramModel};
use ddgen::metrics;
use ddgen::pipeline::{self, PipelineConfig, PipelineError};
use ddgen::repair::{self, RepairStatus, SanitizeConfig};

const EXIT_USAGE: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_GATE: u8 = 4;

fn long_version() -> &'static str {
    // pipeline artifact and file-format schema versions, surfaced so runs
    // can be matched to the code that produced them
    concat!(
        env!("CARGO_PKG_VERSION"),
        "\npipeline schema: 1\nmodel format: 1\nassessment schema: 1"
    )
}

#[derive(Parser)]
#[command(name = "ddgen", version, long_version = long_version(), about = "Domain-model JSON generator pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Pipeline config file (JSON).
    #[arg(long, short)]
    config: PathBuf,
    /// Override a config field, e.g. --set tuning.n_trials=30.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus into the output directory.
    Synth(ConfigArgs),
    /// Anonymize, tokenize, chunk, and split the corpus into a dataset.
    Preprocess(ConfigArgs),
    /// Train the generator on the train split and save model.json.
    Train(ConfigArgs),
    /// Random-search study over the generator hyperparameters.
    Tune(ConfigArgs),
    /// Permutation importance of hyperparameters over the study trials.
    Importance(ConfigArgs),
    /// Sample prompts, repair and classify the outputs, write the assessment.
    Assess(ConfigArgs),
    /// Fold all stage manifests into report.md and the root manifest.
    Report(ConfigArgs),
    /// Run every stage in order.
    Run(ConfigArgs),
    /// Generate a continuation for a prompt using a saved model.
    Generate {
        /// Saved model file.
        #[arg(long)]
        model: PathBuf,
        /// Prompt text; generation continues from its tokens.
        #[arg(long, default_value = "{")]
        prompt: String,
        #[arg(long, default_value_t = 256)]
        max_tokens: usize,
        #[arg(long, default_value_t = 0.7)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Repair stdin into valid JSON on stdout.
    /// Exit codes: 0 valid as-is, 1 repaired, 2 unrepairable.
    Repair {
        /// Write the edit log (sanitized positions, cut offset, closers) here.
        #[arg(long)]
        edits: Option<PathBuf>,
    },
    /// Strictly validate a JSON document from a file or stdin.
    /// On failure prints `offset:expected` and exits 1.
    Validate {
        file: Option<PathBuf>,
    },
    /// Score a candidate token file against a reference token file
    /// (each file: one JSON array of token strings).
    Score {
        candidate: PathBuf,
        reference: PathBuf,
    },
}

fn read_input(file: &Option<PathBuf>) -> std::io::Result<String> {
    match file {
        Some(path) => std::fs::read_to_string(path),
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            Ok(buf)
        }
    }
}

fn pipeline_exit(err: &PipelineError) -> u8 {
    if err.is_gate_failure() {
        EXIT_GATE
    } else if matches!(err, PipelineError::BadConfig(_)) {
        EXIT_USAGE
    } else {
        EXIT_DATA
    }
}

fn run_stage(
    args: &ConfigArgs,
    stage: fn(&PipelineConfig) -> Result<pipeline::StageManifest, PipelineError>,
) -> ExitCode {
    let config = match pipeline::load_config(&args.config, &args.overrides) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(pipeline_exit(&err));
        }
    };
    match stage(&config) {
        Ok(manifest) => {
            println!(
                "{}: wrote {}",
                manifest.stage,
                manifest.outputs.join(", ")
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(pipeline_exit(&err))
        }
    }
}

fn run_all(args: &ConfigArgs) -> ExitCode {
    let config = match pipeline::load_config(&args.config, &args.overrides) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(pipeline_exit(&err));
        }
    };
    match pipeline::run_all(&config) {
        Ok(manifests) => {
            for manifest in &manifests {
                println!(
                    "{}: wrote {}",
                    manifest.stage,
                    manifest.outputs.join(", ")
                );
            }
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(pipeline_exit(&err))
        }
    }
}

fn cmd_generate(
    model: &PathBuf,
    prompt: &str,
    max_tokens: usize,
    temperature: f64,
    seed: u64,
) -> ExitCode {
    let model = match NGramModel::load(model) {
        Ok(model) => model,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    let tokens = ddgen::corpus::tokenize(prompt).tokens;
    let config = GenerationConfig {
        max_tokens,
        temperature,
        seed,
        ..Default::default()
    };
    let (continuation, _) = generator::generate(&model, &tokens, &config);
    println!("{}{}", prompt, ddgen::corpus::detokenize(&continuation));
    ExitCode::SUCCESS
}

fn cmd_repair(edits: &Option<PathBuf>) -> ExitCode {
    let input = match read_input(&None) {
        Ok(input) => input,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    let outcome = match repair::repair(&input, &SanitizeConfig::default()) {
        Ok(outcome) => outcome,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    if let Some(path) = edits {
        let json = serde_json::to_string_pretty(&outcome.edits).expect("edit log json");
        if let Err(err) = std::fs::write(path, json + "\n") {
            eprintln!("error: {}: {err}", path.display());
            return ExitCode::from(EXIT_DATA);
        }
    }
    if let Some(output) = &outcome.output {
        println!("{output}");
    }
    match outcome.status {
        RepairStatus::ValidAsIs => ExitCode::SUCCESS,
        RepairStatus::Repaired => ExitCode::from(1),
        RepairStatus::Unrepairable => ExitCode::from(2),
    }
}

fn cmd_validate(file: &Option<PathBuf>) -> ExitCode {
    let input = match read_input(file) {
        Ok(input) => input,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    match repair::validate(&input) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            println!("{err}");
            ExitCode::from(1)
        }
    }
}

fn cmd_score(candidate: &PathBuf, reference: &PathBuf) -> ExitCode {
    let load = |path: &PathBuf| -> Result<Vec<String>, String> {
        let raw = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&raw).map_err(|e| format!("{}: {e}", path.display()))
    };
    let (cand, reference) = match (load(candidate), load(reference)) {
        (Ok(c), Ok(r)) => (c, r),
        (Err(e), _) | (_, Err(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_DATA);
        }
    };
    let report = metrics::score_pair(
        &metrics::content_tokens(&cand),
        &metrics::content_tokens(&reference),
    );
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("score json")
    );
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Synth(args) => run_stage(args, pipeline::stage_synth),
        Command::Preprocess(args) => run_stage(args, pipeline::stage_preprocess),
        Command::Train(args) => run_stage(args, pipeline::stage_train),
        Command::Tune(args) => run_stage(args, pipeline::stage_tune),
        Command::Importance(args) => run_stage(args, pipeline::stage_importance),
        Command::Assess(args) => run_stage(args, pipeline::stage_assess),
        Command::Report(args) => run_stage(args, pipeline::stage_report),
        Command::Run(args) => run_all(args),
        Command::Generate {
            model,
            prompt,
            max_tokens,
            temperature,
            seed,
        } => cmd_generate(model, prompt, *max_tokens, *temperature, *seed),
        Command::Repair { edits } => cmd_repair(edits),
        Command::Validate { file } => cmd_validate(file),
        Command::Score {
            candidate,
            reference,
        } => cmd_score(candidate, reference),
    }
}
