//! Run configuration and the commands behind the `prefinetune` binary.
//!
//! A run lives in one output directory:
//!
//! ```text
//! <out>/data/<corpus>/        manifest + features of each generated corpus
//! <out>/checkpoints/          config-NN.ckpt and manifest.json
//! <out>/grid/plan.jsonl       the trial plan
//! <out>/grid/store.jsonl      the results store
//! <out>/reports/              curves, contributions, incl_excl, stratified (.csv + .md)
//! ```
//!
//! Settings come from an optional TOML file; command-line flags win over the
//! file. The output root defaults to `$PREFINETUNE_OUT`, then
//! `prefinetune-out`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::analysis::{write_reports, Weighting};
use crate::data::{downstream_speakers, generate_suite, load_corpus, save_corpus, Corpus, Split, SynthSpec};
use crate::experiments::{
    enumerate_powerset, load_models, load_store, plan_grid, prefinetune_all, read_plan, run_grid, run_trial,
    verify_checkpoints, write_plan, CorpusConfig, FinetuneSettings, GridContext, GridDims, GridPlan, RunOptions,
    TrialSpec,
};
use crate::sampler::{hex_digest, trial_seed, FEW_SHOT_KS};
use crate::training::{OptimConfig, PrefinetuneSpec};
use crate::{Error, Result};

pub const OUTPUT_ENV: &str = "PREFINETUNE_OUT";
pub const DEFAULT_OUTPUT: &str = "prefinetune-out";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden_dim: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { hidden_dim: 32 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrefinetuneSettings {
    pub max_epochs: usize,
    pub patience: usize,
    pub optim: OptimConfig,
}

impl Default for PrefinetuneSettings {
    fn default() -> Self {
        PrefinetuneSettings {
            max_epochs: 200,
            patience: 3,
            optim: OptimConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub ks: Vec<usize>,
    pub trials: usize,
    /// Empty means every downstream speaker.
    pub speakers: Vec<String>,
    /// Empty means every downstream emotion.
    pub emotions: Vec<String>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            ks: FEW_SHOT_KS.to_vec(),
            trials: 3,
            speakers: Vec::new(),
            emotions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub weighting: Weighting,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// The one seed every random draw is derived from, including the
    /// synthetic corpora (it overrides `synth.seed`).
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    /// Worker threads; 0 uses every available core.
    pub parallelism: usize,
    pub synth: SynthSpec,
    pub model: ModelConfig,
    pub prefinetune: PrefinetuneSettings,
    pub finetune: FinetuneSettings,
    pub grid: GridConfig,
    pub report: ReportConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth = SynthSpec::default();
        RunConfig {
            seed: synth.seed,
            output_dir: None,
            parallelism: 0,
            synth,
            model: ModelConfig::default(),
            prefinetune: PrefinetuneSettings::default(),
            finetune: FinetuneSettings::default(),
            grid: GridConfig::default(),
            report: ReportConfig::default(),
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}

impl RunConfig {
    /// Parses and validates a TOML config. Unknown keys are rejected.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| invalid("<file>", e.message()))?;
        let synth_seed = raw.get("synth").and_then(|s| s.get("seed")).cloned();
        let mut config: RunConfig = toml::from_str(text).map_err(|e| invalid("<file>", e.message()))?;
        if synth_seed.is_some_and(|s| s.as_integer() != Some(config.seed as i64)) {
            return Err(invalid("synth.seed", "set the top-level `seed` instead"));
        }
        config.synth.seed = config.seed;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        if self.synth.seed != self.seed {
            return Err(invalid("synth.seed", "must equal the top-level seed"));
        }
        self.synth.validate()?;
        if self.model.hidden_dim == 0 {
            return Err(invalid("model.hidden_dim", "must be positive"));
        }
        for (name, max_epochs, optim) in [
            ("prefinetune", self.prefinetune.max_epochs, &self.prefinetune.optim),
            ("finetune", self.finetune.max_epochs, &self.finetune.optim),
        ] {
            if max_epochs == 0 {
                return Err(invalid(&format!("{name}.max_epochs"), "must be positive"));
            }
            optim
                .validate()
                .map_err(|e| invalid(&format!("{name}.optim"), e.to_string()))?;
        }
        if self.grid.ks.is_empty() {
            return Err(invalid("grid.ks", "must not be empty"));
        }
        if let Some(k) = self.grid.ks.iter().find(|k| !FEW_SHOT_KS.contains(k)) {
            return Err(invalid("grid.ks", format!("{k} is not one of {FEW_SHOT_KS:?}")));
        }
        if self.grid.trials == 0 {
            return Err(invalid("grid.trials", "must be positive"));
        }
        let speakers: Vec<String> = downstream_speakers(&self.synth.downstream)
            .into_iter()
            .map(|(s, _)| s)
            .collect();
        if let Some(s) = self.grid.speakers.iter().find(|s| !speakers.contains(s)) {
            return Err(invalid("grid.speakers", format!("unknown speaker `{s}`")));
        }
        if let Some(e) = self
            .grid
            .emotions
            .iter()
            .find(|e| !self.synth.downstream.emotions.contains(e))
        {
            return Err(invalid("grid.emotions", format!("unknown emotion `{e}`")));
        }
        Ok(())
    }

    /// Digest of every setting that affects results (not the output
    /// directory, not the thread count).
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            output_dir: None,
            parallelism: 0,
            ..self.clone()
        };
        hex_digest(&serde_json::to_vec(&canonical).expect("config serialises"))
    }

    pub fn threads(&self) -> usize {
        if self.parallelism > 0 {
            self.parallelism
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }

    pub fn output_root(&self) -> PathBuf {
        self.output_dir
            .clone()
            .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT))
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.output_root())
    }

    pub fn corpus_names(&self) -> Vec<String> {
        self.synth.corpora.iter().map(|c| c.name.clone()).collect()
    }

    pub fn configs(&self) -> Result<Vec<CorpusConfig>> {
        enumerate_powerset(&self.corpus_names())
    }

    /// Pre-finetuning template shared by every config.
    pub fn prefinetune_template(&self) -> PrefinetuneSpec {
        PrefinetuneSpec {
            input_dim: self.synth.dim,
            hidden_dim: self.model.hidden_dim,
            max_epochs: self.prefinetune.max_epochs,
            patience: self.prefinetune.patience,
            optim: self.prefinetune.optim,
            ..PrefinetuneSpec::new(0, Vec::new(), self.seed)
        }
    }

    pub fn grid_dims(&self) -> GridDims {
        let speakers = if self.grid.speakers.is_empty() {
            downstream_speakers(&self.synth.downstream)
                .into_iter()
                .map(|(s, _)| s)
                .collect()
        } else {
            self.grid.speakers.clone()
        };
        let emotions = if self.grid.emotions.is_empty() {
            self.synth.downstream.emotions.clone()
        } else {
            self.grid.emotions.clone()
        };
        GridDims {
            speakers,
            emotions,
            ks: self.grid.ks.clone(),
            trials: self.grid.trials,
        }
    }

    /// The full trial plan; needs no generated data.
    pub fn plan(&self) -> Result<GridPlan> {
        plan_grid(&self.configs()?, &self.grid_dims(), self.seed)
    }
}

/// File locations inside one output root.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn corpus_dir(&self, name: &str) -> PathBuf {
        self.data_dir().join(name)
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn plan_path(&self) -> PathBuf {
        self.root.join("grid").join("plan.jsonl")
    }

    pub fn store_path(&self) -> PathBuf {
        self.root.join("grid").join("store.jsonl")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("reports")
    }
}

#[derive(Debug, Parser)]
#[command(name = "prefinetune", version, about = "Multi-task pre-finetuning and few-shot trial grids")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root (default: $PREFINETUNE_OUT, then ./prefinetune-out).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub parallelism: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus suite.
    GenData {
        /// Overwrite an existing data directory.
        #[arg(long)]
        force: bool,
    },
    /// Pre-finetune one encoder per corpus subset.
    Prefinetune,
    /// Run a single downstream trial and print its record.
    Finetune(FinetuneArgs),
    /// Plan, run and report the downstream trial grid.
    Grid {
        #[command(subcommand)]
        command: GridCommand,
    },
}

#[derive(Debug, Clone, Args)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub config_id: usize,
    #[arg(long)]
    pub speaker: String,
    #[arg(long)]
    pub emotion: String,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub trial: usize,
}

#[derive(Debug, Clone, Default, Args)]
pub struct GridArgs {
    /// Few-shot sizes, e.g. `2,8,32`.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub speakers: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    pub emotions: Option<Vec<String>>,
}

#[derive(Debug, Subcommand)]
pub enum GridCommand {
    /// Write the trial plan and print its size.
    Plan(GridArgs),
    /// Execute every pending trial of the plan.
    Run {
        #[command(flatten)]
        grid: GridArgs,
        /// Stop after this many new trials.
        #[arg(long)]
        limit: Option<usize>,
    },
    /// Aggregate the results store into reports.
    Report {
        #[arg(long, value_enum)]
        weighting: Option<WeightingArg>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightingArg {
    Cell,
    Record,
}

impl From<WeightingArg> for Weighting {
    fn from(w: WeightingArg) -> Self {
        match w {
            WeightingArg::Cell => Weighting::Cell,
            WeightingArg::Record => Weighting::Record,
        }
    }
}

/// Loads the config file (if any) and applies flag overrides.
pub fn resolve_config(global: &GlobalArgs, grid: Option<&GridArgs>) -> Result<RunConfig> {
    let mut config = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &global.output_dir {
        config.output_dir = Some(dir.clone());
    }
    if let Some(seed) = global.seed {
        config.seed = seed;
        config.synth.seed = seed;
    }
    if let Some(p) = global.parallelism {
        config.parallelism = p;
    }
    if let Some(g) = grid {
        if let Some(ks) = &g.ks {
            config.grid.ks = ks.clone();
        }
        if let Some(t) = g.trials {
            config.grid.trials = t;
        }
        if let Some(s) = &g.speakers {
            config.grid.speakers = s.clone();
        }
        if let Some(e) = &g.emotions {
            config.grid.emotions = e.clone();
        }
    }
    config.validate()?;
    Ok(config)
}

/// Runs a parsed command line, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let grid_args = match &cli.command {
        Command::Grid {
            command: GridCommand::Plan(g),
        }
        | Command::Grid {
            command: GridCommand::Run { grid: g, .. },
        } => Some(g),
        _ => None,
    };
    let config = resolve_config(&cli.global, grid_args)?;
    say(out, format!("config hash: {}", config.hash()))?;
    match &cli.command {
        Command::GenData { force } => cmd_gen_data(&config, *force, out),
        Command::Prefinetune => cmd_prefinetune(&config, out),
        Command::Finetune(args) => cmd_finetune(&config, args, out),
        Command::Grid { command } => match command {
            GridCommand::Plan(_) => cmd_grid_plan(&config, out).map(|_| ()),
            GridCommand::Run { limit, .. } => cmd_grid_run(&config, *limit, out),
            GridCommand::Report { weighting } => {
                let weighting = weighting.map(Weighting::from).unwrap_or(config.report.weighting);
                cmd_grid_report(&config, weighting, out)
            }
        },
    }
}

fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| Error::io("<stdout>", e))
}

fn is_non_empty_dir(path: &Path) -> bool {
    fs::read_dir(path).is_ok_and(|mut d| d.next().is_some())
}

pub fn cmd_gen_data(config: &RunConfig, force: bool, out: &mut dyn Write) -> Result<()> {
    let layout = config.layout();
    let data = layout.data_dir();
    if is_non_empty_dir(&data) {
        if !force {
            return Err(Error::OutputExists(data));
        }
        fs::remove_dir_all(&data).map_err(|e| Error::io(&data, e))?;
    }
    let suite = generate_suite(&config.synth)?;
    for corpus in suite.pretraining.iter().chain(std::iter::once(&suite.downstream)) {
        let dir = layout.corpus_dir(corpus.name());
        save_corpus(corpus, &dir)?;
        say(out, corpus_summary(corpus))?;
        say(out, format!("  -> {}", dir.display()))?;
    }
    Ok(())
}

pub fn corpus_summary(corpus: &Corpus) -> String {
    format!(
        "{}: {} labels [{}], {} speakers, train {} / validation {} / test {}",
        corpus.name(),
        corpus.n_labels(),
        corpus.label_space().names().join(", "),
        corpus.speakers().len(),
        corpus.split_len(Split::Train),
        corpus.split_len(Split::Validation),
        corpus.split_len(Split::Test),
    )
}

fn load_named(layout: &Layout, name: &str) -> Result<Corpus> {
    let dir = layout.corpus_dir(name);
    if !dir.is_dir() {
        return Err(Error::MissingCorpus {
            name: name.into(),
            path: dir,
        });
    }
    load_corpus(&dir)
}

fn load_pretraining(config: &RunConfig, layout: &Layout) -> Result<Vec<Corpus>> {
    config.corpus_names().iter().map(|n| load_named(layout, n)).collect()
}

pub fn cmd_prefinetune(config: &RunConfig, out: &mut dyn Write) -> Result<()> {
    let layout = config.layout();
    let corpora = load_pretraining(config, &layout)?;
    let configs = config.configs()?;
    let dir = layout.checkpoint_dir();
    let summary = prefinetune_all(&configs, &corpora, &config.prefinetune_template(), &dir, config.threads())?;
    for entry in &summary.manifest.entries {
        let label = configs
            .iter()
            .find(|c| c.config_id == entry.config_id)
            .map(CorpusConfig::label)
            .unwrap_or_default();
        say(
            out,
            format!(
                "config {:>2} [{label}]: best epoch {} of {} -> {}",
                entry.config_id,
                entry.best_epoch,
                entry.epochs_run,
                dir.join(&entry.file).display()
            ),
        )?;
    }
    say(
        out,
        format!(
            "{} checkpoints ({} trained, {} reused) in {}",
            summary.manifest.entries.len(),
            summary.trained.len(),
            summary.skipped.len(),
            dir.display()
        ),
    )
}

pub fn cmd_finetune(config: &RunConfig, args: &FinetuneArgs, out: &mut dyn Write) -> Result<()> {
    let layout = config.layout();
    let configs = config.configs()?;
    let corpus_config = configs
        .iter()
        .find(|c| c.config_id == args.config_id)
        .ok_or_else(|| Error::InvalidArgument(format!("no config with id {}", args.config_id)))?;
    let downstream = load_named(&layout, &config.synth.downstream.name)?;
    verify_checkpoints(
        &layout.checkpoint_dir(),
        std::slice::from_ref(corpus_config),
        &load_pretraining(config, &layout)?,
        &config.prefinetune_template(),
    )?;
    let models = load_models(&layout.checkpoint_dir(), [args.config_id])?;
    let spec = TrialSpec {
        config_id: args.config_id,
        speaker: args.speaker.clone(),
        emotion: args.emotion.clone(),
        k: args.k,
        trial_index: args.trial,
        seed: trial_seed(config.seed, args.config_id, &args.speaker, &args.emotion, args.k, args.trial),
    };
    let ctx = GridContext {
        downstream: &downstream,
        models: &models,
        finetune: config.finetune,
    };
    let record = run_trial(&spec, &corpus_config.corpora, &ctx);
    say(out, serde_json::to_string(&record)?)?;
    match (record.macro_f1, record.baseline_f1, &record.error) {
        (Some(f1), Some(base), _) => say(
            out,
            format!("macro F1 {f1:.4} (constant baseline {base:.4}) after {} epochs", record.epochs),
        ),
        (_, _, Some(e)) => Err(Error::InvalidArgument(e.clone())),
        _ => Ok(()),
    }
}

pub fn cmd_grid_plan(config: &RunConfig, out: &mut dyn Write) -> Result<GridPlan> {
    let plan = config.plan()?;
    let path = config.layout().plan_path();
    write_plan(&path, &plan)?;
    say(out, format!("trials: {}", plan.len()))?;
    say(out, format!("configs: {}", plan.configs.len()))?;
    say(out, format!("plan hash: {}", plan.hash))?;
    say(out, format!("plan written to {}", path.display()))?;
    Ok(plan)
}

pub fn cmd_grid_run(config: &RunConfig, limit: Option<usize>, out: &mut dyn Write) -> Result<()> {
    let layout = config.layout();
    let plan = config.plan()?;
    let plan_path = layout.plan_path();
    if plan_path.exists() {
        let written = read_plan(&plan_path)?;
        if written.hash != plan.hash {
            log::info!("plan at {} is out of date, rewriting", plan_path.display());
            write_plan(&plan_path, &plan)?;
        }
    } else {
        write_plan(&plan_path, &plan)?;
    }
    let downstream = load_named(&layout, &config.synth.downstream.name)?;
    let ckpt_dir = layout.checkpoint_dir();
    let used: Vec<CorpusConfig> = plan
        .configs
        .iter()
        .filter(|c| plan.trials.iter().any(|t| t.config_id == c.config_id))
        .cloned()
        .collect();
    verify_checkpoints(
        &ckpt_dir,
        &used,
        &load_pretraining(config, &layout)?,
        &config.prefinetune_template(),
    )?;
    let models = load_models(&ckpt_dir, used.iter().map(|c| c.config_id))?;
    let ctx = GridContext {
        downstream: &downstream,
        models: &models,
        finetune: config.finetune,
    };
    let store = layout.store_path();
    let summary = run_grid(
        &plan,
        &ctx,
        &store,
        RunOptions {
            parallelism: config.threads(),
            max_new_trials: limit,
        },
    )?;
    say(
        out,
        format!(
            "planned {}, already done {}, executed {} ({} failed), pending {}",
            summary.planned,
            summary.skipped,
            summary.executed,
            summary.failed,
            summary.planned - summary.skipped - summary.executed
        ),
    )?;
    say(out, format!("store: {}", store.display()))
}

pub fn cmd_grid_report(config: &RunConfig, weighting: Weighting, out: &mut dyn Write) -> Result<()> {
    let layout = config.layout();
    let snapshot = load_store(&layout.store_path())?;
    let set = write_reports(&snapshot.records, &layout.report_dir(), weighting)?;
    say(
        out,
        format!(
            "{} ok records, {} failed",
            snapshot.ok_records().count(),
            snapshot.failed_records().count()
        ),
    )?;
    if !set.warnings.is_empty() {
        say(out, format!("{} warnings (see log)", set.warnings.len()))?;
    }
    for path in &set.written {
        say(out, format!("wrote {}", path.display()))?;
    }
    Ok(())
}
