//! Command-line front end.
//!
//! Every subcommand reads the same settings: a `key = value` config file
//! (`--config`) overridden by flags of the same name.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::data::{self, Corpus, PlantedCorpus, PlantedSpec};
use crate::decompose;
use crate::error::{Error, Result};
use crate::eval::{self, Selections};
use crate::model::{self, FittedModel};
use crate::pipeline::{self, OutputPaths, PipelineConfig};
use crate::rank::{self, Component, RankOutcome, TargetComponents};
use crate::select;
use crate::series::TARGET_ID;

#[derive(Debug, Parser)]
#[command(name = "gatecast", version, about = "Seasonal-gated candidate selection and nowcasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a planted synthetic corpus with its labels.
    Synth(Flags),
    /// Dump the decomposition of the target or of one candidate as JSON.
    Decompose(Flags),
    /// Score and rank candidates on the training weeks.
    Rank(Flags),
    /// Forward selection over a ranked file.
    Select(Flags),
    /// Fit the final model from selection traces.
    Fit(Flags),
    /// Predict the weeks after training with a saved model.
    Predict(Flags),
    /// Compare predictions with the target.
    Evaluate(Flags),
    /// Rank, select, fit, predict and evaluate in one go.
    Pipeline(Flags),
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Flags {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    #[arg(long)]
    pub ranked: Option<PathBuf>,
    #[arg(long)]
    pub trace_trend: Option<PathBuf>,
    #[arg(long)]
    pub trace_irregular: Option<PathBuf>,
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Candidate to decompose instead of the target.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long)]
    pub phi: Option<usize>,
    #[arg(long)]
    pub cycle: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub lambda_grid: Option<bool>,
    #[arg(long)]
    pub max_candidates: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub svg: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_weeks: Option<usize>,
    #[arg(long)]
    pub n_related: Option<usize>,
    #[arg(long)]
    pub n_decoy: Option<usize>,
    #[arg(long)]
    pub n_gate_decoy: Option<usize>,
    #[arg(long)]
    pub n_noise: Option<usize>,
    #[arg(long)]
    pub lead_weeks: Option<usize>,
}

/// Settings after merging the config file and flags.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub target: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub ranked: Option<PathBuf>,
    pub trace_trend: Option<PathBuf>,
    pub trace_irregular: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub id: Option<String>,
    pub pipeline: PipelineConfig,
    pub threads: Option<usize>,
    pub svg: bool,
    pub planted: PlantedSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            target: None,
            candidates: None,
            labels: None,
            model: None,
            output_dir: PathBuf::from("."),
            ranked: None,
            trace_trend: None,
            trace_irregular: None,
            predictions: None,
            id: None,
            pipeline: PipelineConfig::default(),
            threads: None,
            svg: false,
            planted: PlantedSpec::default(),
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (k, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", k + 1)))?;
        let key = key.trim().replace('-', "_");
        if out.insert(key.clone(), value.trim().to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key `{key}`", k + 1)));
        }
    }
    Ok(out)
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

impl RunConfig {
    /// Applies config-file entries; relative paths resolve against `base`.
    pub fn apply_file(&mut self, entries: &BTreeMap<String, String>, base: &Path) -> Result<()> {
        let path = |v: &str| base.join(v);
        for (key, v) in entries {
            let k = key.as_str();
            match k {
                "target" => self.target = Some(path(v)),
                "candidates" => self.candidates = Some(path(v)),
                "labels" => self.labels = Some(path(v)),
                "model" => self.model = Some(path(v)),
                "output_dir" => self.output_dir = path(v),
                "ranked" => self.ranked = Some(path(v)),
                "trace_trend" => self.trace_trend = Some(path(v)),
                "trace_irregular" => self.trace_irregular = Some(path(v)),
                "predictions" => self.predictions = Some(path(v)),
                "id" => self.id = Some(v.clone()),
                "phi" => self.pipeline.phi = parse_value(k, v)?,
                "cycle" => {
                    self.pipeline.cycle = parse_value(k, v)?;
                    self.planted.cycle = self.pipeline.cycle;
                }
                "lambda" => self.pipeline.lambda = parse_value(k, v)?,
                "lambda_grid" => self.pipeline.lambda_grid = parse_value(k, v)?,
                "max_candidates" => self.pipeline.max_candidates = parse_value(k, v)?,
                "patience" => self.pipeline.patience = parse_value(k, v)?,
                "folds" => self.pipeline.folds = parse_value(k, v)?,
                "train_fraction" => self.pipeline.train_fraction = parse_value(k, v)?,
                "threads" => self.threads = Some(parse_value(k, v)?),
                "svg" => self.svg = parse_value(k, v)?,
                "seed" => self.planted.seed = parse_value(k, v)?,
                "n_weeks" => self.planted.n_weeks = parse_value(k, v)?,
                "n_related" => self.planted.n_related = parse_value(k, v)?,
                "n_decoy" => self.planted.n_decoy = parse_value(k, v)?,
                "n_gate_decoy" => self.planted.n_gate_decoy = parse_value(k, v)?,
                "n_noise" => self.planted.n_noise = parse_value(k, v)?,
                "lead_weeks" => self.planted.lead_weeks = parse_value(k, v)?,
                other => return Err(Error::Config(format!("unknown key `{other}`"))),
            }
        }
        Ok(())
    }

    pub fn apply_flags(&mut self, f: &Flags) {
        fn set<T: Clone>(dst: &mut T, src: &Option<T>) {
            if let Some(v) = src {
                *dst = v.clone();
            }
        }
        fn set_opt<T: Clone>(dst: &mut Option<T>, src: &Option<T>) {
            if src.is_some() {
                dst.clone_from(src);
            }
        }
        set_opt(&mut self.target, &f.target);
        set_opt(&mut self.candidates, &f.candidates);
        set_opt(&mut self.labels, &f.labels);
        set_opt(&mut self.model, &f.model);
        set(&mut self.output_dir, &f.output_dir);
        set_opt(&mut self.ranked, &f.ranked);
        set_opt(&mut self.trace_trend, &f.trace_trend);
        set_opt(&mut self.trace_irregular, &f.trace_irregular);
        set_opt(&mut self.predictions, &f.predictions);
        set_opt(&mut self.id, &f.id);
        set(&mut self.pipeline.phi, &f.phi);
        if let Some(c) = f.cycle {
            self.pipeline.cycle = c;
            self.planted.cycle = c;
        }
        set(&mut self.pipeline.lambda, &f.lambda);
        set(&mut self.pipeline.lambda_grid, &f.lambda_grid);
        set(&mut self.pipeline.max_candidates, &f.max_candidates);
        set(&mut self.pipeline.patience, &f.patience);
        set(&mut self.pipeline.folds, &f.folds);
        set(&mut self.pipeline.train_fraction, &f.train_fraction);
        set_opt(&mut self.threads, &f.threads);
        set(&mut self.svg, &f.svg);
        set(&mut self.planted.seed, &f.seed);
        set(&mut self.planted.n_weeks, &f.n_weeks);
        set(&mut self.planted.n_related, &f.n_related);
        set(&mut self.planted.n_decoy, &f.n_decoy);
        set(&mut self.planted.n_gate_decoy, &f.n_gate_decoy);
        set(&mut self.planted.n_noise, &f.n_noise);
        set(&mut self.planted.lead_weeks, &f.lead_weeks);
    }

    pub fn resolve(flags: &Flags) -> Result<Self> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &flags.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.apply_file(&parse_config(&text)?, base)?;
        }
        cfg.apply_flags(flags);
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let p = &self.pipeline;
        if !(p.train_fraction > 0.0 && p.train_fraction < 1.0) {
            return Err(Error::Config("train_fraction must lie in (0, 1)".into()));
        }
        if !(p.lambda.is_finite() && p.lambda >= 0.0) {
            return Err(Error::Config("lambda must be finite and >= 0".into()));
        }
        if p.cycle < 2 || p.folds < 2 || p.max_candidates == 0 {
            return Err(Error::Config("cycle and folds must be >= 2, max_candidates >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be >= 1".into()));
        }
        Ok(())
    }

    fn required<'a>(&self, v: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        v.as_deref()
            .ok_or_else(|| Error::Config(format!("`{key}` is required")))
    }

    fn or_output(&self, v: &Option<PathBuf>, name: &str) -> PathBuf {
        v.clone().unwrap_or_else(|| self.output_dir.join(name))
    }

    fn corpus(&self) -> Result<Corpus> {
        data::load_corpus(
            self.required(&self.target, "target")?,
            self.required(&self.candidates, "candidates")?,
        )
    }
}

/// Runs the CLI on `args` (including the program name); returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            1
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    let flags = match &command {
        Command::Synth(f)
        | Command::Decompose(f)
        | Command::Rank(f)
        | Command::Select(f)
        | Command::Fit(f)
        | Command::Predict(f)
        | Command::Evaluate(f)
        | Command::Pipeline(f) => f,
    };
    let cfg = RunConfig::resolve(flags)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    pool.install(|| match command {
        Command::Synth(_) => synth(&cfg),
        Command::Decompose(_) => decompose_cmd(&cfg),
        Command::Rank(_) => rank_cmd(&cfg),
        Command::Select(_) => select_cmd(&cfg),
        Command::Fit(_) => fit_cmd(&cfg),
        Command::Predict(_) => predict_cmd(&cfg),
        Command::Evaluate(_) => evaluate_cmd(&cfg),
        Command::Pipeline(_) => pipeline_cmd(&cfg),
    })
}

fn report_skips(outcome: &RankOutcome) {
    let mut err = std::io::stderr().lock();
    for s in &outcome.skipped {
        let _ = writeln!(err, "SKIP {} {}", s.id, s.reason);
    }
}

fn synth(cfg: &RunConfig) -> Result<()> {
    let planted = PlantedCorpus::new(cfg.planted.clone())?;
    let corpus = planted.materialize()?;
    let dir = &cfg.output_dir;
    let target = cfg.or_output(&cfg.target, "target.csv");
    let candidates = cfg.or_output(&cfg.candidates, "candidates.csv");
    let labels = cfg.or_output(&cfg.labels, "labels.csv");
    data::write_corpus(&corpus, &target, &candidates)?;
    data::write_labels(File::create(&labels)?, &planted.ground_truth().labels())?;
    println!(
        "wrote {} candidates over {} weeks to {}",
        corpus.candidates().len(),
        corpus.target.len(),
        dir.display()
    );
    Ok(())
}

fn decompose_cmd(cfg: &RunConfig) -> Result<()> {
    let series = match &cfg.id {
        Some(id) => {
            let all = data::read_candidates(File::open(cfg.required(&cfg.candidates, "candidates")?)?)?;
            all.into_iter()
                .find(|c| c.id() == id)
                .ok_or_else(|| Error::MissingCandidate(id.clone()))?
        }
        None => data::read_target(File::open(cfg.required(&cfg.target, "target")?)?, TARGET_ID)?,
    };
    let d = decompose::decompose(&series, cfg.pipeline.cycle)?;
    let path = cfg.output_dir.join("decomposition.json");
    let f = std::io::BufWriter::new(File::create(&path)?);
    serde_json::to_writer_pretty(f, &d).map_err(|e| Error::Io(e.to_string()))?;
    Ok(())
}

fn training_target(cfg: &RunConfig, corpus: &Corpus) -> Result<(data::SplitRanges, TargetComponents)> {
    let ranges = data::split_ranges(&corpus.target, &cfg.pipeline.split_spec())?;
    let tc = TargetComponents::new(
        &ranges.train_target(&corpus.target),
        cfg.pipeline.cycle,
        cfg.pipeline.phi,
    )?;
    Ok((ranges, tc))
}

fn rank_cmd(cfg: &RunConfig) -> Result<()> {
    let corpus = cfg.corpus()?;
    let (_, _, outcome) = pipeline::rank_training(&corpus.target, &corpus, &cfg.pipeline)?;
    report_skips(&outcome);
    let path = cfg.or_output(&cfg.ranked, "ranked.csv");
    rank::write_ranked(
        File::create(path)?,
        &outcome.ranked(Component::Trend),
        &outcome.ranked(Component::Irregular),
    )
}

fn select_cmd(cfg: &RunConfig) -> Result<()> {
    let corpus = cfg.corpus()?;
    let (ranges, tc) = training_target(cfg, &corpus)?;
    let ranked = File::open(cfg.or_output(&cfg.ranked, "ranked.csv"))?;
    let (rt, ri) = rank::read_ranked(ranked, cfg.pipeline.phi)?;
    let (st, si) = pipeline::select_training(&tc, &ranges, &corpus, &rt, &ri, &cfg.pipeline)?;
    select::write_trace(File::create(cfg.or_output(&cfg.trace_trend, "trace_trend.csv"))?, &st)?;
    select::write_trace(
        File::create(cfg.or_output(&cfg.trace_irregular, "trace_irregular.csv"))?,
        &si,
    )
}

fn fit_cmd(cfg: &RunConfig) -> Result<()> {
    let corpus = cfg.corpus()?;
    let (ranges, tc) = training_target(cfg, &corpus)?;
    let st = select::read_trace(File::open(cfg.or_output(&cfg.trace_trend, "trace_trend.csv"))?)?;
    let si = select::read_trace(File::open(
        cfg.or_output(&cfg.trace_irregular, "trace_irregular.csv"),
    )?)?;
    let m = pipeline::fit_training(&tc, &ranges, &corpus, &st.selected_ids, &si.selected_ids, &cfg.pipeline)?;
    m.save(&cfg.or_output(&cfg.model, "model.bin"))
}

fn predict_cmd(cfg: &RunConfig) -> Result<()> {
    let corpus = cfg.corpus()?;
    let m = FittedModel::load(&cfg.or_output(&cfg.model, "model.bin"))?;
    let weeks = if m.candidates.is_empty() {
        pipeline::prediction_weeks(&m, &corpus, Some(&corpus.target))?
    } else {
        pipeline::prediction_weeks(&m, &corpus, None)?
    };
    let preds = m.predict(&corpus, weeks)?;
    model::write_predictions(
        File::create(cfg.or_output(&cfg.predictions, "predictions.csv"))?,
        &preds,
        Some(&corpus.target),
    )
}

fn evaluate_cmd(cfg: &RunConfig) -> Result<()> {
    let target = data::read_target(File::open(cfg.required(&cfg.target, "target")?)?, TARGET_ID)?;
    let rows = model::read_predictions(File::open(cfg.or_output(&cfg.predictions, "predictions.csv"))?)?;
    let pred = model::series_from_rows(&rows)?;
    let fitted = match &cfg.model {
        Some(p) => Some(FittedModel::load(p)?),
        None => None,
    };
    let labels = cfg.labels.as_deref().map(data::load_labels).transpose()?;
    let selections = fitted.as_ref().map(|m| Selections {
        trend: m.selected_ids(Component::Trend).to_vec(),
        irregular: m.selected_ids(Component::Irregular).to_vec(),
    });
    let phi = fitted.as_ref().map_or(cfg.pipeline.phi, |m| m.phi);
    let report = eval::evaluate(&pred, &target, phi, selections.as_ref(), labels.as_ref())?;
    let paths = OutputPaths::in_dir(&cfg.output_dir);
    eval::write_report(File::create(&paths.report)?, &report)?;
    eval::write_summary(File::create(&paths.summary)?, &report)?;
    if cfg.svg {
        std::fs::write(&paths.chart, eval::render_svg(&report))?;
    }
    println!("pearson={} smape={}", report.pearson, report.smape);
    Ok(())
}

fn pipeline_cmd(cfg: &RunConfig) -> Result<()> {
    let corpus = cfg.corpus()?;
    let labels = cfg.labels.as_deref().map(data::load_labels).transpose()?;
    let run = pipeline::run(&corpus.target, &corpus, &cfg.pipeline, labels.as_ref())?;
    report_skips(&run.outcome);
    let paths = OutputPaths::in_dir(&cfg.output_dir);
    pipeline::write_outputs(&run, &corpus.target, &paths, cfg.model.as_deref(), cfg.svg)?;
    println!(
        "pearson={} smape={} trend={} irregular={}",
        run.report.pearson,
        run.report.smape,
        run.selection_t.selected_ids.len(),
        run.selection_i.selected_ids.len()
    );
    Ok(())
}
