//! Subcommands behind the `apca` binary.
//!
//! Settings come from an optional TOML file (`--config`) with command-line
//! flags taking precedence. Relative paths in the file resolve against the
//! file's directory.
//!
//! Exit codes: 0 success, 1 output written but some samples unresolved,
//! 2 usage or configuration error, 3 transport failure.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::client::{self, EndpointClient, EndpointConfig, MockScript, MockServer};
use crate::corpus::{dataset_stats, kfold_split, kfold_split_stratified, load_dataset, FoldAssignment, Verdict};
use crate::error::{Error, Result};
use crate::eval::{
    cross_dataset_run, crossval_run, evaluate, Assessor, ConstantAssessor, EvalOptions, EvalReport, OracleAssessor,
    RecordsAssessor, ScoreMode, ToyAssessor, UnresolvedPolicy,
};
use crate::grpo::Checkpoint;
use crate::prompt::{default_template, PromptTemplate};
use crate::toy::{train_toy, ToyPolicy, ToyTrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_UNRESOLVED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_TRANSPORT: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "apca", version, about = "Patch correctness assessment with reasoning models")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print correct, overfitting and total counts of a dataset.
    Stats {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Write a k-fold assignment file.
    Split {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Deal each label class separately.
        #[arg(long)]
        stratified: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assess every sample against a chat-completion endpoint; writes JSON Lines records.
    Assess {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        endpoint_config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        parallelism: Option<usize>,
    },
    /// Train the toy policy with GRPO; writes checkpoint.json and metrics.jsonl.
    TrainToy {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate records, a toy checkpoint or a reference assessor; writes an EvalReport.
    Eval {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Training set for the cross-dataset protocol; `--dataset` is the test set.
        #[arg(long)]
        train_dataset: Option<PathBuf>,
        #[arg(long)]
        records: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, value_enum)]
        assessor: Option<AssessorKind>,
        #[arg(long)]
        folds: Option<PathBuf>,
        /// Cross-validate with a fresh split when no fold file is given.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        score_mode: Option<ScoreMode>,
        #[arg(long)]
        unresolved_policy: Option<UnresolvedPolicy>,
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve a scripted chat-completion endpoint until killed.
    MockServe {
        #[arg(long)]
        script: PathBuf,
        #[arg(long, default_value_t = 0)]
        port: u16,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssessorKind {
    Records,
    Checkpoint,
    Toy,
    Oracle,
    ConstantCorrect,
    ConstantOverfitting,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k: Option<usize>,
    pub seed: Option<u64>,
    pub score_mode: Option<ScoreMode>,
    pub unresolved_policy: Option<UnresolvedPolicy>,
}

/// Merged run configuration. Serialized into the report's config hash.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub train_dataset: Option<PathBuf>,
    pub template: Option<PathBuf>,
    pub endpoint_config: Option<PathBuf>,
    pub folds: Option<PathBuf>,
    pub records: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub eval: EvalSection,
    pub toy: ToyTrainConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.dataset,
            &mut cfg.train_dataset,
            &mut cfg.template,
            &mut cfg.endpoint_config,
            &mut cfg.folds,
            &mut cfg.records,
            &mut cfg.checkpoint,
            &mut cfg.out,
        ] {
            if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
                *p = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }
}

fn override_with<T>(slot: &mut Option<T>, flag: Option<T>) {
    if flag.is_some() {
        *slot = flag;
    }
}

fn required<'a, T>(v: &'a Option<T>, flag: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| Error::invalid(format!("missing --{flag} (or `{}` in the config file)", flag.replace('-', "_"))))
}

/// Maps an error to its process exit code.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Transport(_) | Error::Http { .. } | Error::Protocol(_) => EXIT_TRANSPORT,
        Error::Fold { source, .. } => exit_code(source),
        _ => EXIT_USAGE,
    }
}

fn write_output(path: Option<&PathBuf>, text: &str) -> Result<()> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            std::fs::write(p, text).map_err(|e| Error::io(p, e))
        }
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).map_err(|e| Error::io("<stdout>", e))
        }
    }
}

fn load_template(path: Option<&PathBuf>) -> Result<PromptTemplate> {
    path.map_or_else(|| Ok(default_template()), PromptTemplate::load)
}

/// Runs a parsed command line and returns the process exit code. Errors are
/// reported on stderr.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Parses `args` (including the program name) and runs it.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Stats { dataset } => {
            override_with(&mut cfg.dataset, dataset);
            cmd_stats(required(&cfg.dataset, "dataset")?)
        }
        Command::Split {
            dataset,
            k,
            seed,
            stratified,
            out,
        } => {
            override_with(&mut cfg.dataset, dataset);
            override_with(&mut cfg.eval.k, k);
            override_with(&mut cfg.eval.seed, seed);
            override_with(&mut cfg.out, out);
            cmd_split(
                required(&cfg.dataset, "dataset")?,
                cfg.eval.k.unwrap_or(5),
                cfg.eval.seed.unwrap_or(0),
                stratified,
                cfg.out.as_ref(),
            )
        }
        Command::Assess {
            dataset,
            template,
            endpoint_config,
            out,
            parallelism,
        } => {
            override_with(&mut cfg.dataset, dataset);
            override_with(&mut cfg.template, template);
            override_with(&mut cfg.endpoint_config, endpoint_config);
            override_with(&mut cfg.out, out);
            override_with(&mut cfg.parallelism, parallelism);
            cmd_assess(
                required(&cfg.dataset, "dataset")?,
                cfg.template.as_ref(),
                required(&cfg.endpoint_config, "endpoint-config")?,
                cfg.out.as_ref(),
                cfg.parallelism.unwrap_or(4),
            )
        }
        Command::TrainToy { seed, epochs, out } => {
            if let Some(s) = seed {
                cfg.toy.grpo.seed = s;
            }
            if let Some(e) = epochs {
                cfg.toy.grpo.epochs = e;
            }
            override_with(&mut cfg.out, out);
            cmd_train_toy(&cfg.toy, required(&cfg.out, "out")?)
        }
        Command::Eval {
            dataset,
            train_dataset,
            records,
            checkpoint,
            assessor,
            folds,
            k,
            seed,
            score_mode,
            unresolved_policy,
            template,
            out,
        } => {
            override_with(&mut cfg.dataset, dataset);
            override_with(&mut cfg.train_dataset, train_dataset);
            override_with(&mut cfg.records, records);
            override_with(&mut cfg.checkpoint, checkpoint);
            override_with(&mut cfg.folds, folds);
            override_with(&mut cfg.eval.k, k);
            override_with(&mut cfg.eval.seed, seed);
            override_with(&mut cfg.eval.score_mode, score_mode);
            override_with(&mut cfg.eval.unresolved_policy, unresolved_policy);
            override_with(&mut cfg.template, template);
            override_with(&mut cfg.out, out);
            cmd_eval(&cfg, assessor)
        }
        Command::MockServe { script, port } => cmd_mock_serve(&script, port),
    }
}

pub fn cmd_stats(dataset: &Path) -> Result<i32> {
    let samples = load_dataset(dataset)?;
    println!("{}", dataset_stats(&samples));
    Ok(EXIT_OK)
}

pub fn cmd_split(dataset: &Path, k: usize, seed: u64, stratified: bool, out: Option<&PathBuf>) -> Result<i32> {
    let samples = load_dataset(dataset)?;
    let folds = if stratified {
        kfold_split_stratified(&samples, k, seed)?
    } else {
        let ids: Vec<&str> = samples.iter().map(|s| s.id.as_str()).collect();
        kfold_split(&ids, k, seed)?
    };
    write_output(out, &folds.to_json()?)?;
    if out.is_some() {
        eprintln!("fold sizes: {:?}", folds.fold_sizes());
    }
    Ok(EXIT_OK)
}

pub fn cmd_assess(
    dataset: &Path,
    template: Option<&PathBuf>,
    endpoint_config: &Path,
    out: Option<&PathBuf>,
    parallelism: usize,
) -> Result<i32> {
    let samples = load_dataset(dataset)?;
    let template = load_template(template)?;
    let client = EndpointClient::new(EndpointConfig::load(endpoint_config)?)?;
    let records = client::assess_batch(&client, &samples, &template, parallelism)?;
    write_output(out, &client::records_to_jsonl(&records)?)?;
    let unresolved = records.iter().filter(|r| r.unresolved).count();
    let unreachable = records.iter().filter(|r| r.transport_failed()).count();
    eprintln!(
        "assessed {} samples: {} resolved, {unresolved} unresolved",
        records.len(),
        records.len() - unresolved
    );
    Ok(if unreachable > 0 {
        eprintln!("{unreachable} samples never reached the endpoint");
        EXIT_TRANSPORT
    } else if unresolved > 0 {
        EXIT_UNRESOLVED
    } else {
        EXIT_OK
    })
}

pub fn cmd_train_toy(cfg: &ToyTrainConfig, out_dir: &Path) -> Result<i32> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let metrics_path = out_dir.join("metrics.jsonl");
    let mut log = String::new();
    let outcome = train_toy(cfg, |m, _| {
        log.push_str(&serde_json::to_string(m)?);
        log.push('\n');
        Ok(())
    })?;
    std::fs::write(&metrics_path, log).map_err(|e| Error::io(&metrics_path, e))?;
    outcome.checkpoint.save(out_dir.join("checkpoint.json"))?;
    if let Some(last) = outcome.epochs.last() {
        println!(
            "epochs {} steps {} mean_reward {:.4} mean_format_reward {:.4}",
            outcome.epochs.len(),
            outcome.steps.len(),
            last.mean_reward,
            last.mean_format_reward
        );
    } else {
        println!("epochs 0 steps 0");
    }
    Ok(EXIT_OK)
}

fn build_assessor(cfg: &RunConfig, kind: Option<AssessorKind>) -> Result<Box<dyn Assessor>> {
    let kind = match kind {
        Some(k) => k,
        None if cfg.records.is_some() => AssessorKind::Records,
        None if cfg.checkpoint.is_some() => AssessorKind::Checkpoint,
        None => return Err(Error::invalid("give --records, --checkpoint or --assessor")),
    };
    Ok(match kind {
        AssessorKind::Records => Box::new(RecordsAssessor::new(client::load_records(required(&cfg.records, "records")?)?)),
        AssessorKind::Checkpoint => {
            let ckpt = Checkpoint::load(required(&cfg.checkpoint, "checkpoint")?)?;
            let policy = ToyPolicy::from_checkpoint(&ckpt)?;
            Box::new(ToyAssessor::frozen(policy, ckpt.config))
        }
        AssessorKind::Toy => Box::new(ToyAssessor::new(cfg.toy.grpo.clone(), cfg.toy.shape)?),
        AssessorKind::Oracle => Box::new(OracleAssessor),
        AssessorKind::ConstantCorrect => Box::new(ConstantAssessor(Verdict::Correct)),
        AssessorKind::ConstantOverfitting => Box::new(ConstantAssessor(Verdict::Overfitting)),
    })
}

pub fn cmd_eval(cfg: &RunConfig, kind: Option<AssessorKind>) -> Result<i32> {
    let dataset = load_dataset(required(&cfg.dataset, "dataset")?)?;
    let opts = EvalOptions {
        score_mode: cfg.eval.score_mode.unwrap_or_default(),
        unresolved_policy: cfg.eval.unresolved_policy.unwrap_or_default(),
    };
    let mut assessor = build_assessor(cfg, kind)?;
    let seed = cfg.eval.seed.unwrap_or(0);
    let mut report: EvalReport = if let Some(train_path) = &cfg.train_dataset {
        let train = load_dataset(train_path)?;
        cross_dataset_run(&train, &dataset, assessor.as_mut(), &opts)?
    } else if let Some(folds_path) = &cfg.folds {
        let text = std::fs::read_to_string(folds_path).map_err(|e| Error::io(folds_path, e))?;
        crossval_run(&dataset, &FoldAssignment::from_json(&text)?, assessor.as_mut(), &opts)?
    } else if let Some(k) = cfg.eval.k {
        let ids: Vec<&str> = dataset.iter().map(|s| s.id.as_str()).collect();
        crossval_run(&dataset, &kfold_split(&ids, k, seed)?, assessor.as_mut(), &opts)?
    } else {
        evaluate(&dataset, assessor.as_ref(), &opts)?
    };
    let template_id = match &cfg.template {
        Some(p) => PromptTemplate::load(p)?.id,
        None => default_template().id,
    };
    report.metadata.describe_run(Some(&template_id), Some(seed), cfg)?;
    write_output(cfg.out.as_ref(), &report.to_json()?)?;
    Ok(if report.overall.unresolved_count > 0 {
        EXIT_UNRESOLVED
    } else {
        EXIT_OK
    })
}

pub fn cmd_mock_serve(script: &Path, port: u16) -> Result<i32> {
    let server = MockServer::start(MockScript::load(script)?, port)?;
    println!("listening on {}", server.base_url());
    std::io::stdout().flush().map_err(|e| Error::io("<stdout>", e))?;
    server.join();
    Ok(EXIT_OK)
}
