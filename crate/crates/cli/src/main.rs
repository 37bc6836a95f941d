//! `plangen`: decode plans, build verifier data, curate, generate data,
//! evaluate in the household environment, run self-checks and serve the
//! mock scorer.
//!
//! Every flag can also be set through an environment variable named
//! `PLANGEN_` followed by the flag in upper snake case, for example
//! `PLANGEN_SEED` or `PLANGEN_SCORER`. Exit status is 0 on success, 2 for
//! invalid configuration or inputs, and 1 when a module fails at run time;
//! failures print a JSON report on stderr.

mod commands;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use plangen_core::curation::TupleKind;

#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Failure::Config(_) => "config",
            Failure::Runtime(_) => "runtime",
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Config(e) | Failure::Runtime(e) => format!("{e:#}"),
        }
    }
}

#[derive(Parser, Debug, Clone, Serialize, Deserialize)]
#[command(name = "plangen", version, about = "Verifier-guided plan decoding and data tooling")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct Global {
    /// Parent directory of the per-run output directories.
    #[arg(long, global = true, env = "PLANGEN_OUT_DIR", default_value = "runs")]
    pub out_dir: PathBuf,
    /// Global seed; overrides seeds from config files.
    #[arg(long, global = true, env = "PLANGEN_SEED")]
    pub seed: Option<u64>,
    /// Worker threads. Results do not depend on it.
    #[arg(long, global = true, env = "PLANGEN_PARALLELISM", default_value_t = 4)]
    pub parallelism: usize,
    /// Re-run the configuration recorded in a manifest.json.
    #[arg(long, global = true, value_name = "MANIFEST")]
    #[serde(skip)]
    pub replay: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Decode plans with verifier-guided step-wise beam search.
    Decode(DecodeArgs),
    /// Build positive and pseudo-negative verifier training pairs.
    GenNegatives(GenNegativesArgs),
    /// Accept or reject generated tuples by critic score.
    Curate(CurateArgs),
    /// Teacher-side data generation over a completion backend.
    Datagen {
        #[command(subcommand)]
        task: DatagenTask,
    },
    /// Translate plans to actions and score executability and LCS.
    EvalEmbodied(EvalArgs),
    /// Self-check suites against exhaustive enumeration.
    Bench(BenchArgs),
    /// Serve a mock world over the scorer wire protocol.
    ServeMock(ServeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Decode(_) => "decode",
            Command::GenNegatives(_) => "gen-negatives",
            Command::Curate(_) => "curate",
            Command::Datagen { .. } => "datagen",
            Command::EvalEmbodied(_) => "eval-embodied",
            Command::Bench(_) => "bench",
            Command::ServeMock(_) => "serve-mock",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ScorerArgs {
    /// `mock:<world.json>` or an http(s) URL of a scorer service.
    #[arg(long, env = "PLANGEN_SCORER")]
    pub scorer: String,
    /// Per-request timeout for remote scorers.
    #[arg(long, env = "PLANGEN_TIMEOUT_MS", default_value_t = 30_000)]
    pub timeout_ms: u64,
    /// Attempts per remote request, including the first.
    #[arg(long, env = "PLANGEN_RETRIES", default_value_t = 3)]
    pub retries: u32,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub scorer: ScorerArgs,
    /// TOML file with decode parameters.
    #[arg(long, env = "PLANGEN_CONFIG")]
    pub config: Option<PathBuf>,
    /// Line-delimited instance records.
    #[arg(long, env = "PLANGEN_INSTANCES")]
    pub instances: Option<PathBuf>,
    /// Goal to plan for; repeatable.
    #[arg(long)]
    pub goal: Vec<String>,
    #[arg(long, env = "PLANGEN_ALPHA")]
    pub alpha: Option<f64>,
    /// Beam size.
    #[arg(long = "k", visible_alias = "beam-k", env = "PLANGEN_BEAM_K")]
    pub beam_k: Option<usize>,
    /// Candidates per hypothesis; the method mix is split evenly when its
    /// counts do not add up to this.
    #[arg(long = "n", visible_alias = "candidates-n", env = "PLANGEN_CANDIDATES_N")]
    pub candidates_n: Option<usize>,
    #[arg(long, env = "PLANGEN_MAX_STEPS")]
    pub max_steps: Option<usize>,
    #[arg(long, env = "PLANGEN_EPSILON")]
    pub epsilon: Option<f64>,
    /// Skip traces.jsonl.
    #[arg(long)]
    pub no_trace: bool,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
#[group(skip)]
#[command(group = clap::ArgGroup::new("source").required(true).multiple(false))]
pub struct GenNegativesArgs {
    /// Instance records carrying a `plan`.
    #[arg(long, group = "source")]
    pub plans: Option<PathBuf>,
    /// Generate this many synthetic plans instead.
    #[arg(long, group = "source")]
    pub synthetic: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub min_len: usize,
    #[arg(long, default_value_t = 10)]
    pub max_len: usize,
    /// Comma-separated perturbation kinds; all by default.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<String>,
    #[arg(long, env = "PLANGEN_PER_KIND", default_value_t = 2)]
    pub per_kind: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct CurateArgs {
    /// Line-delimited curation records.
    #[arg(long)]
    pub records: PathBuf,
    /// Only curate records of this kind.
    #[arg(long)]
    pub kind: Option<TupleKind>,
    #[arg(long, env = "PLANGEN_TAU_PLAN")]
    pub tau_plan: Option<f64>,
    #[arg(long, env = "PLANGEN_TAU_CONDITION")]
    pub tau_condition: Option<f64>,
    #[arg(long, env = "PLANGEN_TAU_COUNTERFACTUAL")]
    pub tau_counterfactual: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SamplingArgs {
    #[arg(long)]
    pub top_p: Option<f64>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatagenTask {
    /// Assemble randomized few-shot prompts; with a scorer, also complete
    /// them and parse plans.
    Prompts {
        /// Instance records with a `plan`, used as in-context examples.
        #[arg(long)]
        exemplars: PathBuf,
        /// Target goals, one per line.
        #[arg(long)]
        goals: PathBuf,
        /// Exemplars per prompt.
        #[arg(long, default_value_t = 2)]
        shots: usize,
        #[arg(long)]
        scorer: Option<String>,
        #[arg(long, default_value_t = 30_000)]
        timeout_ms: u64,
        #[arg(long, default_value_t = 3)]
        retries: u32,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Grow a goal pool by prompting with sampled goals.
    Goals {
        /// Seed goals, one per line.
        #[arg(long)]
        seed_goals: PathBuf,
        #[command(flatten)]
        scorer: ScorerArgs,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        #[arg(long, default_value_t = 5)]
        exemplars: usize,
        #[arg(long, default_value_t = 4)]
        prompts_per_round: usize,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Sample conditions for (goal, plan) pairs.
    Conditions {
        /// Instance records with a `plan`.
        #[arg(long)]
        plans: PathBuf,
        #[command(flatten)]
        scorer: ScorerArgs,
        /// Prompt template with {goal} and {plan} slots.
        #[arg(long)]
        template: Option<PathBuf>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
    /// Revise plans under their conditions.
    Counterfactuals {
        /// Instance records with `condition` and `plan`.
        #[arg(long)]
        records: PathBuf,
        #[command(flatten)]
        scorer: ScorerArgs,
        /// Prompt template with {goal}, {condition} and {plan} slots.
        #[arg(long)]
        template: Option<PathBuf>,
        #[command(flatten)]
        sampling: SamplingArgs,
    },
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalArgs {
    /// Instance records whose `id` is a gold goal id and which carry a `plan`.
    #[arg(long, required_unless_present = "identity")]
    pub plans: Option<PathBuf>,
    /// Evaluate the gold programs' own surface forms.
    #[arg(long, conflicts_with = "plans")]
    pub identity: bool,
    /// Environment JSON; the bundled household by default.
    #[arg(long)]
    pub env: Option<PathBuf>,
    /// Gold programs; the bundled set by default.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// `{"text", "vector"}` lines to use instead of token cosine.
    #[arg(long)]
    pub vectors: Option<PathBuf>,
    #[arg(long, env = "PLANGEN_MIN_SIMILARITY", default_value_t = 0.0)]
    pub min_similarity: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Oracle,
    Determinism,
    All,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub suite: Suite,
    /// Random worlds per suite (200 oracle, 50 determinism by default).
    #[arg(long)]
    pub cases: Option<usize>,
    #[arg(long, default_value_t = 0.75)]
    pub alpha: f64,
    /// Also check every `*.json` world in this directory against enumeration.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ServeArgs {
    /// Mock world fixture.
    #[arg(long)]
    pub world: PathBuf,
    #[arg(long, env = "PLANGEN_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: String,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

fn report(f: &Failure, run_dir: Option<&std::path::Path>) {
    let mut r = json!({
        "error": f.kind(),
        "message": f.message(),
        "exit_code": f.code(),
    });
    if let Some(d) = run_dir {
        r["run_dir"] = json!(d.display().to_string());
    }
    eprintln!("{r}");
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let f = Failure::Config(anyhow::anyhow!("{}", e.render().to_string().trim()));
            report(&f, None);
            return ExitCode::from(f.code());
        }
    };
    let (cli, command) = match resolve(cli) {
        Ok(x) => x,
        Err(f) => {
            report(&f, None);
            return ExitCode::from(f.code());
        }
    };
    let mut run = run::Run::new(command.name());
    let result = commands::execute(&command, &cli.global, &mut run, &cli);
    if let Err(f @ Failure::Config(_)) = &result {
        report(f, None);
        return ExitCode::from(f.code());
    }
    let error = result.as_ref().err().map(Failure::message);
    let config = serde_json::to_value(&cli).expect("config serialises");
    match run.finish(&cli.global.out_dir, config, error) {
        Ok(dir) => match result {
            Ok(()) => {
                eprintln!("{}", json!({ "run_dir": dir.display().to_string() }));
                ExitCode::SUCCESS
            }
            Err(f) => {
                report(&f, Some(&dir));
                ExitCode::from(f.code())
            }
        },
        Err(e) => {
            let f = Failure::Runtime(e);
            report(&f, None);
            ExitCode::from(f.code())
        }
    }
}

/// Applies `--replay`: the recorded configuration replaces the command
/// line, except for the output directory.
fn resolve(cli: Cli) -> Result<(Cli, Command), Failure> {
    match &cli.global.replay {
        Some(path) => {
            if cli.command.is_some() {
                return Err(Failure::Config(anyhow::anyhow!("--replay cannot be combined with a subcommand")));
            }
            let manifest = run::load_for_replay(path)?;
            let mut recorded: Cli = serde_json::from_value(manifest.config)
                .map_err(|e| Failure::Config(anyhow::anyhow!("manifest config does not parse: {e}")))?;
            recorded.global.out_dir = cli.global.out_dir.clone();
            let command = recorded
                .command
                .clone()
                .ok_or_else(|| Failure::Config(anyhow::anyhow!("manifest has no command")))?;
            Ok((recorded, command))
        }
        None => {
            let command = cli
                .command
                .clone()
                .ok_or_else(|| Failure::Config(anyhow::anyhow!("a subcommand is required")))?;
            Ok((cli, command))
        }
    }
}
