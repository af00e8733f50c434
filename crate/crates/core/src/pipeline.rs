//! End-to-end run: split, rank, select, fit, predict, evaluate.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{self, CandidateSource, Labels, SplitRanges, SplitSpec};
use crate::decompose::DEFAULT_CYCLE;
use crate::error::{Error, Result};
use crate::eval::{self, EvalReport, Selections};
use crate::model::{self, FitConfig, FittedModel, Prediction, TrainingColumns};
use crate::rank::{self, Component, RankOutcome, RankedList, TargetComponents};
use crate::regress::{DEFAULT_FOLDS, DEFAULT_LAMBDA};
use crate::select::{self, SelectConfig, SelectionResult};
use crate::series::RateSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub phi: usize,
    pub cycle: usize,
    pub lambda: f64,
    pub lambda_grid: bool,
    pub max_candidates: usize,
    pub patience: usize,
    pub folds: usize,
    pub train_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            phi: 0,
            cycle: DEFAULT_CYCLE,
            lambda: DEFAULT_LAMBDA,
            lambda_grid: false,
            max_candidates: 1000,
            patience: 5,
            folds: DEFAULT_FOLDS,
            train_fraction: 0.8,
        }
    }
}

impl PipelineConfig {
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            cycle: self.cycle,
        }
    }

    pub fn select_config(&self) -> SelectConfig {
        SelectConfig {
            lambda: self.lambda,
            max_candidates: self.max_candidates,
            patience: self.patience,
            folds: self.folds,
        }
    }

    pub fn fit_config(&self) -> FitConfig {
        FitConfig {
            lambda: self.lambda,
            lambda_grid: self.lambda_grid,
            folds: self.folds,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub ranges: SplitRanges,
    pub outcome: RankOutcome,
    pub ranked_t: RankedList,
    pub ranked_i: RankedList,
    pub selection_t: SelectionResult,
    pub selection_i: SelectionResult,
    pub model: FittedModel,
    pub predictions: Vec<Prediction>,
    pub report: EvalReport,
}

impl PipelineRun {
    pub fn selections(&self) -> Selections {
        Selections {
            trend: self.selection_t.selected_ids.clone(),
            irregular: self.selection_i.selected_ids.clone(),
        }
    }
}

/// Scores every candidate on the training weeks.
pub fn rank_training<S: CandidateSource + ?Sized>(
    target: &RateSeries,
    source: &S,
    cfg: &PipelineConfig,
) -> Result<(SplitRanges, TargetComponents, RankOutcome)> {
    let ranges = data::split_ranges(target, &cfg.split_spec())?;
    let tc = TargetComponents::new(&ranges.train_target(target), cfg.cycle, cfg.phi)?;
    let outcome = rank::score_corpus(&tc, &ranges.train_view(source))?;
    Ok((ranges, tc, outcome))
}

/// Forward selection for both components on the training weeks.
pub fn select_training<S: CandidateSource + ?Sized>(
    tc: &TargetComponents,
    ranges: &SplitRanges,
    source: &S,
    ranked_t: &RankedList,
    ranked_i: &RankedList,
    cfg: &PipelineConfig,
) -> Result<(SelectionResult, SelectionResult)> {
    let columns = TrainingColumns::new(source, ranges.first, ranges.boundary, cfg.cycle, cfg.phi);
    let (t, i) = select::select_both(
        ranked_t,
        ranked_i,
        tc,
        columns.rows(),
        &columns.provider(Component::Trend),
        &columns.provider(Component::Irregular),
        &cfg.select_config(),
    );
    Ok((t?, i?))
}

/// Final model on the training weeks for the given selections.
pub fn fit_training<S: CandidateSource + ?Sized>(
    tc: &TargetComponents,
    ranges: &SplitRanges,
    source: &S,
    trend_ids: &[String],
    irregular_ids: &[String],
    cfg: &PipelineConfig,
) -> Result<FittedModel> {
    let columns = TrainingColumns::new(source, ranges.first, ranges.boundary, cfg.cycle, cfg.phi);
    model::fit_final(tc, &columns, trend_ids, irregular_ids, &cfg.fit_config())
}

pub fn run<S: CandidateSource + ?Sized>(
    target: &RateSeries,
    source: &S,
    cfg: &PipelineConfig,
    labels: Option<&Labels>,
) -> Result<PipelineRun> {
    let (ranges, tc, outcome) = rank_training(target, source, cfg)?;
    let ranked_t = outcome.ranked(Component::Trend);
    let ranked_i = outcome.ranked(Component::Irregular);
    let (selection_t, selection_i) = select_training(&tc, &ranges, source, &ranked_t, &ranked_i, cfg)?;
    let model = fit_training(
        &tc,
        &ranges,
        source,
        &selection_t.selected_ids,
        &selection_i.selected_ids,
        cfg,
    )?;
    let predictions = model.predict(source, ranges.boundary..ranges.end)?;
    let selections = Selections {
        trend: selection_t.selected_ids.clone(),
        irregular: selection_i.selected_ids.clone(),
    };
    let report = eval::evaluate(
        &model::prediction_series(&predictions)?,
        &ranges.test_target(target),
        cfg.phi,
        Some(&selections),
        labels,
    )?;
    Ok(PipelineRun {
        ranges,
        outcome,
        ranked_t,
        ranked_i,
        selection_t,
        selection_i,
        model,
        predictions,
        report,
    })
}

/// File names written by [`write_outputs`].
pub struct OutputPaths {
    pub ranked: PathBuf,
    pub trace_trend: PathBuf,
    pub trace_irregular: PathBuf,
    pub model: PathBuf,
    pub predictions: PathBuf,
    pub report: PathBuf,
    pub summary: PathBuf,
    pub chart: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            ranked: dir.join("ranked.csv"),
            trace_trend: dir.join("trace_trend.csv"),
            trace_irregular: dir.join("trace_irregular.csv"),
            model: dir.join("model.bin"),
            predictions: dir.join("predictions.csv"),
            report: dir.join("report.csv"),
            summary: dir.join("summary.csv"),
            chart: dir.join("chart.svg"),
        }
    }
}

pub fn write_outputs(
    run: &PipelineRun,
    target: &RateSeries,
    paths: &OutputPaths,
    model_path: Option<&Path>,
    svg: bool,
) -> Result<()> {
    rank::write_ranked(File::create(&paths.ranked)?, &run.ranked_t, &run.ranked_i)?;
    select::write_trace(File::create(&paths.trace_trend)?, &run.selection_t)?;
    select::write_trace(File::create(&paths.trace_irregular)?, &run.selection_i)?;
    run.model.save(model_path.unwrap_or(&paths.model))?;
    model::write_predictions(File::create(&paths.predictions)?, &run.predictions, Some(target))?;
    eval::write_report(File::create(&paths.report)?, &run.report)?;
    eval::write_summary(File::create(&paths.summary)?, &run.report)?;
    if svg {
        std::fs::write(&paths.chart, eval::render_svg(&run.report))?;
    }
    Ok(())
}

/// Prediction range for a model: the weeks after training, up to the end
/// of `target` when given, otherwise as far as candidate data allows.
pub fn prediction_weeks<S: CandidateSource + ?Sized>(
    model: &FittedModel,
    source: &S,
    target: Option<&RateSeries>,
) -> Result<std::ops::Range<i64>> {
    let start = model.train_end;
    if let Some(t) = target {
        return Ok(start..t.end_week());
    }
    let mut end: Option<i64> = None;
    for id in model.candidates.keys() {
        let idx = source
            .index_of(id)
            .ok_or_else(|| Error::MissingCandidate(id.clone()))?;
        let e = source.candidate(idx)?.end_week() + model.phi as i64;
        end = Some(end.map_or(e, |x: i64| x.min(e)));
    }
    end.map(|e| start..e.max(start))
        .ok_or_else(|| Error::Config("model has no candidates; pass a target to set the range".into()))
}
