//! The `hemorisk` command line: cohort generation, training, evaluation and
//! grid search, driven by a TOML run configuration plus flags.
//!
//! Every command needs an explicit seed (flag or config); nothing is ever
//! seeded from the clock. Worker threads are capped by `HEMORISK_THREADS`;
//! without it everything runs sequentially. Outputs are identical either way.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use hemorisk::cohort::{generate_cohort, summarize, CohortSpec};
use hemorisk::dataset::{load_dataset, LoadOptions, DATASET_FORMAT};
use hemorisk::eval::grid::GridSpec;
use hemorisk::eval::report::{comparison_table, DatasetSummary, REPORT_FORMAT};
use hemorisk::eval::{grid_search, run_protocol, stratified_split, ProtocolConfig, ProtocolMode, Report};
use hemorisk::exec::Exec;
use hemorisk::model::fit_classifier;
use hemorisk::model_io::save_classifier;
use hemorisk::rng::{derive_seed, streams};
use hemorisk::schema::load_schema;
use hemorisk::{Dataset, FeatureSchema, Hyperparams, ModelKind};

pub const TRAIN_TRACE_FORMAT: &str = "hemorisk-train/1";
pub const ROC_FORMAT: &str = "hemorisk-roc/1";
pub const CV_FORMAT: &str = "hemorisk-cv/1";
pub const PARAMS_FORMAT: &str = "hemorisk-params/1";

#[derive(Debug, Parser)]
#[command(name = "hemorisk", version, about = "Hemorrhage-risk classifiers: generate, train, evaluate, grid search")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort CSV.
    Generate(CommonArgs),
    /// Train on the whole dataset and write model files.
    Train(CommonArgs),
    /// Run the evaluation protocol and write the report.
    Evaluate(CommonArgs),
    /// Cross-validate a hyperparameter grid on the training split.
    Gridsearch(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// ann, svm, forest or all.
    #[arg(long)]
    pub model: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Dataset CSV; overrides the config.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Feature schema (TOML); defaults to the built-in schema.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Fill missing cells (median / mode) instead of failing.
    #[arg(long)]
    pub impute: bool,
    /// fold-on-test or retrain-bootstrap.
    #[arg(long)]
    pub protocol: Option<String>,
}

/// Contents of a `--config` file. Relative paths resolve against the file's
/// directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub model: Option<String>,
    /// Dataset CSV.
    pub dataset: Option<PathBuf>,
    /// Cohort spec (TOML) to generate the data from instead.
    pub cohort: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub impute: bool,
    pub protocol: ProtocolConfig,
    pub ann: Option<hemorisk::ann::AnnHyperparams>,
    pub svm: Option<hemorisk::svm::SvmHyperparams>,
    pub forest: Option<hemorisk::forest::ForestHyperparams>,
    /// Grid per model kind, e.g. `[grid.svm] c = [1, 10]`.
    pub grid: BTreeMap<String, toml::Value>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.dataset, &mut cfg.cohort, &mut cfg.schema].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    fn hyperparams(&self, kind: ModelKind) -> Hyperparams {
        match kind {
            ModelKind::Ann => self.ann.clone().map(Hyperparams::Ann),
            ModelKind::Svm => self.svm.clone().map(Hyperparams::Svm),
            ModelKind::Forest => self.forest.clone().map(Hyperparams::Forest),
        }
        .unwrap_or_else(|| Hyperparams::default_for(kind))
    }

    fn grid(&self, kind: ModelKind) -> Result<Option<GridSpec>> {
        let Some(value) = self.grid.get(kind.as_str()) else {
            return Ok(None);
        };
        let mut table = toml::Table::new();
        table.insert(kind.as_str().to_string(), value.clone());
        let spec: GridSpec = table
            .try_into()
            .with_context(|| format!("invalid grid for {kind}"))?;
        Ok(Some(spec))
    }
}

/// Fully resolved settings for one invocation.
#[derive(Debug, Clone)]
pub struct Run {
    pub config: RunConfig,
    pub seed: u64,
    pub kinds: Vec<ModelKind>,
    pub out: PathBuf,
}

/// What gets echoed into reports: everything that affects results, and
/// nothing that varies between otherwise identical runs (such as paths).
#[derive(Serialize)]
struct Echo<'a> {
    seed: u64,
    models: Vec<&'static str>,
    impute: bool,
    protocol: &'a ProtocolConfig,
    hyperparams: BTreeMap<&'static str, Hyperparams>,
    grid: &'a BTreeMap<String, toml::Value>,
}

pub fn parse_kinds(s: &str) -> Result<Vec<ModelKind>> {
    if s.trim().eq_ignore_ascii_case("all") {
        return Ok(ModelKind::ALL.to_vec());
    }
    s.parse::<ModelKind>()
        .map(|k| vec![k])
        .map_err(|_| anyhow!("unknown model kind `{s}` (expected ann, svm, forest or all)"))
}

impl Run {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let mut config = match &args.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(d) = &args.data {
            config.dataset = Some(d.clone());
            config.cohort = None;
        }
        if let Some(s) = &args.schema {
            config.schema = Some(s.clone());
        }
        if args.impute {
            config.impute = true;
        }
        if let Some(p) = &args.protocol {
            config.protocol.mode = p.parse::<ProtocolMode>()?;
        }
        if let Some(m) = &args.model {
            config.model = Some(m.clone());
        }
        let seed = args
            .seed
            .or(config.seed)
            .ok_or_else(|| anyhow!("a seed is required (--seed N or `seed` in the config)"))?;
        config.seed = Some(seed);
        let kinds = parse_kinds(config.model.as_deref().unwrap_or("all"))?;
        Ok(Self {
            config,
            seed,
            kinds,
            out: args.out.clone(),
        })
    }

    fn schema(&self) -> Result<Arc<FeatureSchema>> {
        let text = match &self.config.schema {
            Some(p) => Some(fs::read_to_string(p).with_context(|| format!("reading schema {}", p.display()))?),
            None => None,
        };
        Ok(Arc::new(load_schema(text.as_deref())?))
    }

    fn cohort_spec(&self) -> Result<CohortSpec> {
        match &self.config.cohort {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading cohort spec {}", p.display()))?;
                Ok(CohortSpec::from_toml(&text)?)
            }
            None => Ok(CohortSpec::default_moyamoya(self.seed)),
        }
    }

    /// Loads the dataset named by the config, or generates it from a cohort
    /// spec (the built-in one when neither is given).
    pub fn dataset(&self) -> Result<Dataset> {
        let schema = self.schema()?;
        match (&self.config.dataset, &self.config.cohort) {
            (Some(_), Some(_)) => bail!("give either `dataset` or `cohort`, not both"),
            (Some(path), None) => {
                let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
                let options = LoadOptions {
                    impute: self.config.impute,
                };
                let (data, imputed) = load_dataset(file, schema, &options)?;
                if !imputed.is_empty() {
                    log::warn!("imputed {} missing cells", imputed.len());
                }
                Ok(data)
            }
            // No source at all means the default cohort, seeded by the run.
            (None, _) => Ok(generate_cohort(&self.cohort_spec()?, schema)?),
        }
    }

    fn echo(&self) -> Result<String> {
        let echo = Echo {
            seed: self.seed,
            models: self.kinds.iter().map(ModelKind::as_str).collect(),
            impute: self.config.impute,
            protocol: &self.config.protocol,
            hyperparams: self
                .kinds
                .iter()
                .map(|&k| (k.as_str(), self.config.hyperparams(k)))
                .collect(),
            grid: &self.config.grid,
        };
        Ok(toml::to_string(&echo)?)
    }

    fn output(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        Ok(self.out.join(name))
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(text)
}

/// Writes `dataset.csv` from the configured (or default) cohort spec.
pub fn cmd_generate(run: &Run) -> Result<()> {
    if run.config.dataset.is_some() {
        bail!("generate takes a cohort spec, not a dataset");
    }
    let mut spec = run.cohort_spec()?;
    // An explicit seed always wins over the spec's own.
    spec.seed = run.seed;
    let data = generate_cohort(&spec, run.schema()?)?;
    let path = run.output("dataset.csv")?;
    let mut out = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
    data.write_csv(&mut out)?;
    drop(out);

    println!(
        "wrote {} ({} rows, {} positive, {} negative; format {DATASET_FORMAT})",
        path.display(),
        data.n_rows(),
        data.positives(),
        data.n_rows() - data.positives()
    );
    println!("{:<28} {:>10} {:>10}", "feature", "positive", "negative");
    for s in summarize(&data) {
        println!("{:<28} {:>10.3} {:>10.3}", s.name, s.positive_mean, s.negative_mean);
    }
    Ok(())
}

#[derive(Serialize)]
struct TrainTraceDoc<'a> {
    format_version: &'static str,
    kind: ModelKind,
    seed: u64,
    hyperparams: &'a Hyperparams,
    training: &'a hemorisk::model::TrainSummary,
}

/// Trains each requested model on every row and writes
/// `model-<kind>.hmrk` plus `train-<kind>.json`.
pub fn cmd_train(run: &Run, exec: &Exec) -> Result<()> {
    let data = run.dataset()?;
    for &kind in &run.kinds {
        let hp = run.config.hyperparams(kind);
        let (clf, training) = fit_classifier(&data, &hp, derive_seed(run.seed, streams::MODEL), exec)
            .with_context(|| format!("training {kind}"))?;
        let model_path = run.output(&format!("model-{kind}.hmrk"))?;
        save_classifier(&clf, &model_path)?;
        let trace = TrainTraceDoc {
            format_version: TRAIN_TRACE_FORMAT,
            kind,
            seed: run.seed,
            hyperparams: &hp,
            training: &training,
        };
        write(&run.output(&format!("train-{kind}.json"))?, &to_json(&trace)?)?;

        let mut line = format!("{kind}: trained on {} rows -> {}", data.n_rows(), model_path.display());
        if let Some(loss) = training.final_loss {
            line.push_str(&format!("; final loss {loss:.5}"));
        }
        if let Some(n) = training.support_vectors {
            line.push_str(&format!("; {n} support vectors"));
        }
        if let Some(n) = training.trees {
            line.push_str(&format!("; {n} trees"));
        }
        println!("{line}");
    }
    Ok(())
}

fn grid_cells(run: &Run, kind: ModelKind) -> Result<Option<Vec<Hyperparams>>> {
    Ok(run
        .config
        .grid(kind)?
        .map(|spec| spec.cells(&run.config.hyperparams(kind))))
}

/// Builds the full report without writing anything.
pub fn evaluate_report(run: &Run, exec: &Exec) -> Result<Report> {
    let data = run.dataset()?;
    let mut models = Vec::new();
    for &kind in &run.kinds {
        let hp = run.config.hyperparams(kind);
        let cells = grid_cells(run, kind)?;
        let report = run_protocol(&data, &hp, cells.as_deref(), &run.config.protocol, run.seed, exec)
            .with_context(|| format!("evaluating {kind}"))?;
        models.push(report);
    }
    Ok(Report {
        format_version: REPORT_FORMAT,
        seed: run.seed,
        config: run.echo()?,
        dataset: DatasetSummary::of(&data),
        protocol: run.config.protocol.clone(),
        models,
    })
}

/// Writes `report.json`, `roc-<kind>.csv` per model and `table.txt`.
pub fn cmd_evaluate(run: &Run, exec: &Exec) -> Result<()> {
    let report = evaluate_report(run, exec)?;
    write(&run.output("report.json")?, &to_json(&report)?)?;
    for m in &report.models {
        let csv = format!("# format: {ROC_FORMAT}\n{}", m.roc.to_csv());
        write(&run.output(&format!("roc-{}.csv", m.kind))?, &csv)?;
    }
    let table = comparison_table(&report.models);
    write(&run.output("table.txt")?, &table)?;
    print!("{table}");
    for m in &report.models {
        println!("{} AUC (fold-mean scores): {:.3}", m.kind.display_name(), m.roc.auc);
    }
    Ok(())
}

/// Grid search on the training part of the stratified split; writes
/// `cv-<kind>.csv` and `best-<kind>.toml`.
pub fn cmd_gridsearch(run: &Run, exec: &Exec) -> Result<()> {
    let data = run.dataset()?;
    let plan = stratified_split(
        data.labels(),
        run.config.protocol.test_fraction,
        derive_seed(run.seed, streams::SPLIT),
    )?;
    let train = data.subset(&plan.train);
    for &kind in &run.kinds {
        let cells = match grid_cells(run, kind)? {
            Some(cells) => cells,
            None => GridSpec::default_for(kind).cells(&run.config.hyperparams(kind)),
        };
        if cells.is_empty() {
            bail!("grid for {kind} is empty");
        }
        let result = grid_search(
            &train,
            &cells,
            run.config.protocol.k,
            derive_seed(run.seed, streams::GRID),
            exec,
        )?;

        let mut csv = format!("# format: {CV_FORMAT}\ncell,fold,accuracy,hyperparams\n");
        for e in &result.table {
            let acc = e.accuracy.map_or_else(|| "diverged".to_string(), |a| a.to_string());
            csv.push_str(&format!(
                "{},{},{},\"{}\"\n",
                e.cell,
                e.fold,
                acc,
                result.cells[e.cell].hyperparams.describe()
            ));
        }
        write(&run.output(&format!("cv-{kind}.csv"))?, &csv)?;

        let best = &result.cells[result.best];
        let params = format!(
            "# format: {PARAMS_FORMAT}\n# cell {} of {}, mean CV accuracy {}\n{}",
            result.best,
            cells.len(),
            best.mean_accuracy.unwrap_or(f64::NAN),
            toml::to_string(&result.best_hyperparams)?
        );
        write(&run.output(&format!("best-{kind}.toml"))?, &params)?;
        let flagged = result.cells.iter().filter(|c| c.flagged).count();
        println!(
            "{kind}: best of {} cells is #{} ({}) with mean CV accuracy {:.4}{}",
            cells.len(),
            result.best,
            best.hyperparams.describe(),
            best.mean_accuracy.unwrap_or(f64::NAN),
            if flagged > 0 {
                format!("; {flagged} cells diverged on some folds")
            } else {
                String::new()
            }
        );
    }
    Ok(())
}

pub fn execute(cli: &Cli, exec: &Exec) -> Result<()> {
    match &cli.command {
        Command::Generate(args) => cmd_generate(&Run::resolve(args)?),
        Command::Train(args) => cmd_train(&Run::resolve(args)?, exec),
        Command::Evaluate(args) => cmd_evaluate(&Run::resolve(args)?, exec),
        Command::Gridsearch(args) => cmd_gridsearch(&Run::resolve(args)?, exec),
    }
}
