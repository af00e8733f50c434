//! Component-wise scoring of candidates against the target and the two
//! sorted candidate lists used by the wrapper selection.
//!
//! Every trend and irregular score is multiplied by the clamped seasonal
//! correlation, so a candidate whose yearly pattern does not match the
//! target's cannot rank high on short-term or long-term co-movement alone.

use std::io::{BufWriter, Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::CandidateSource;
use crate::decompose::{self, Decomposition, SeasonalPattern};
use crate::error::{Error, Result};
use crate::series::{self, LogitSeries, RateSeries};

/// Gaps tried for the differenced trend correlation.
pub const EPSILONS: [usize; 3] = [1, 2, 3];

/// Correlations over fewer points are treated as zero.
pub const MIN_OVERLAP: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Component {
    Trend,
    Irregular,
}

impl Component {
    pub fn as_str(self) -> &'static str {
        match self {
            Component::Trend => "trend",
            Component::Irregular => "irregular",
        }
    }
}

impl std::str::FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "trend" => Ok(Component::Trend),
            "irregular" => Ok(Component::Irregular),
            other => Err(Error::Config(format!("unknown component `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermScore {
    pub id: String,
    pub score_s: f64,
    pub score_t: f64,
    pub score_i: f64,
    pub best_epsilon: u8,
}

impl TermScore {
    pub fn score(&self, component: Component) -> f64 {
        match component {
            Component::Trend => self.score_t,
            Component::Irregular => self.score_i,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub component: Component,
    pub phi: usize,
    pub entries: Vec<TermScore>,
}

impl RankedList {
    /// Sorts descending by the component score; ties go to the smaller id.
    pub fn new(component: Component, phi: usize, mut entries: Vec<TermScore>) -> Self {
        entries.sort_by(|a, b| {
            b.score(component)
                .total_cmp(&a.score(component))
                .then_with(|| a.id.cmp(&b.id))
        });
        Self {
            component,
            phi,
            entries,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.id.as_str())
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.entries.iter().position(|e| e.id == id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Target components used for scoring at lag `phi`.
///
/// The seasonal pattern comes from the unshifted target. Trend and
/// irregular come from the target relabelled `phi` weeks earlier, so the
/// value at week `t` is the target at `t + phi` and lines up with
/// candidate data available at `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetComponents {
    pub cycle: usize,
    pub phi: usize,
    pub seasonal: SeasonalPattern,
    pub lagged: Decomposition,
}

impl TargetComponents {
    pub fn new(target: &RateSeries, cycle: usize, phi: usize) -> Result<Self> {
        let base = decompose::decompose(target, cycle)?;
        let lagged = if phi == 0 {
            base.clone()
        } else {
            let logits = series::logit(&series::replace_zeros(target)?)?;
            decompose::decompose_logit(&logits.shifted_back(phi as i64), cycle)?
        };
        Ok(Self {
            cycle,
            phi,
            seasonal: base.seasonal,
            lagged,
        })
    }

    pub fn trend(&self) -> &LogitSeries {
        &self.lagged.trend
    }

    pub fn irregular(&self) -> &LogitSeries {
        &self.lagged.irregular
    }
}

fn common<'a>(a: &'a LogitSeries, b: &'a LogitSeries) -> Option<(&'a [f64], &'a [f64])> {
    let first = a.start_week.max(b.start_week);
    let end = a.end_week().min(b.end_week());
    if first >= end {
        return None;
    }
    Some((a.slice(first, end)?, b.slice(first, end)?))
}

fn gated(corr: f64, gate: f64) -> f64 {
    if gate == 0.0 {
        0.0
    } else {
        corr * gate
    }
}

pub fn score_seasonal(target: &SeasonalPattern, cand: &Decomposition) -> Result<f64> {
    if target.cycle() != cand.seasonal.cycle() {
        return Err(Error::CycleMismatch {
            left: target.cycle(),
            right: cand.seasonal.cycle(),
        });
    }
    Ok(series::pearson(target.values(), cand.seasonal.values())?.max(0.0))
}

/// Best signed correlation of the differenced trends over the gaps in
/// [`EPSILONS`], times the seasonal gate. Returns the score and the gap.
pub fn score_trend(target_trend: &LogitSeries, cand: &Decomposition, s_score: f64) -> Result<(f64, u8)> {
    let (a, b) = common(target_trend, &cand.trend).unwrap_or((&[], &[]));
    if a.len() < MIN_OVERLAP + 1 {
        return Err(Error::InsufficientOverlap {
            len: a.len().saturating_sub(1),
            needed: MIN_OVERLAP,
        });
    }
    let mut best: Option<(f64, u8)> = None;
    for eps in EPSILONS {
        let corr = if a.len() - eps < MIN_OVERLAP {
            0.0
        } else {
            let da = series::diff_values(a, eps)?;
            let db = series::diff_values(b, eps)?;
            series::pearson(&da, &db)?
        };
        if best.is_none_or(|(c, _)| corr > c) {
            best = Some((corr, eps as u8));
        }
    }
    let (corr, eps) = best.expect("non-empty epsilon set");
    Ok((gated(corr, s_score), eps))
}

pub fn score_irregular(target_irr: &LogitSeries, cand: &Decomposition, s_score: f64) -> Result<f64> {
    let (a, b) = common(target_irr, &cand.irregular).unwrap_or((&[], &[]));
    if a.len() < MIN_OVERLAP {
        return Err(Error::InsufficientOverlap {
            len: a.len(),
            needed: MIN_OVERLAP,
        });
    }
    Ok(gated(series::pearson(a, b)?, s_score))
}

/// All three scores of an already decomposed candidate. Too-short overlaps
/// score zero.
pub fn score_decomposition(target: &TargetComponents, cand: &Decomposition) -> Result<TermScore> {
    let score_s = score_seasonal(&target.seasonal, cand)?;
    let (score_t, best_epsilon) = match score_trend(target.trend(), cand, score_s) {
        Ok(v) => v,
        Err(Error::InsufficientOverlap { .. }) => (0.0, 1),
        Err(e) => return Err(e),
    };
    let score_i = match score_irregular(target.irregular(), cand, score_s) {
        Ok(v) => v,
        Err(Error::InsufficientOverlap { .. }) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(TermScore {
        id: cand.source_id.clone(),
        score_s,
        score_t,
        score_i,
        best_epsilon,
    })
}

pub fn score_candidate(target: &TargetComponents, cand: &RateSeries) -> Result<TermScore> {
    let d = decompose::decompose(cand, target.cycle)?;
    score_decomposition(target, &d)
}

/// A candidate excluded from ranking and why.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skip {
    pub id: String,
    pub reason: &'static str,
}

/// Scores of every surviving candidate plus the skip log.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOutcome {
    pub phi: usize,
    /// In corpus order.
    pub scores: Vec<TermScore>,
    pub skipped: Vec<Skip>,
}

impl RankOutcome {
    pub fn ranked(&self, component: Component) -> RankedList {
        RankedList::new(component, self.phi, self.scores.clone())
    }

    /// Skip counts per reason, sorted by reason.
    pub fn skip_counts(&self) -> Vec<(&'static str, usize)> {
        let mut counts: std::collections::BTreeMap<&'static str, usize> = Default::default();
        for s in &self.skipped {
            *counts.entry(s.reason).or_default() += 1;
        }
        counts.into_iter().collect()
    }
}

/// Scores every candidate of `source` in parallel. Only the scores are
/// retained, so memory grows with the candidate count, not with
/// count times series length.
pub fn score_corpus<S: CandidateSource + ?Sized>(
    target: &TargetComponents,
    source: &S,
) -> Result<RankOutcome> {
    if source.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let results: Vec<std::result::Result<TermScore, Skip>> = (0..source.len())
        .into_par_iter()
        .map(|i| {
            source
                .candidate(i)
                .and_then(|c| score_candidate(target, &c))
                .map_err(|e| Skip {
                    id: source.id(i).into_owned(),
                    reason: e.kind(),
                })
        })
        .collect();
    let mut scores = Vec::with_capacity(results.len());
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(s) => scores.push(s),
            Err(s) => skipped.push(s),
        }
    }
    Ok(RankOutcome {
        phi: target.phi,
        scores,
        skipped,
    })
}

pub fn rank_corpus<S: CandidateSource + ?Sized>(
    target: &TargetComponents,
    source: &S,
    component: Component,
) -> Result<RankedList> {
    Ok(score_corpus(target, source)?.ranked(component))
}

pub const RANKED_HEADER: &str = "id,score_s,score_t,score_i,best_epsilon,rank_t,rank_i";

/// Writes scores in trend-rank order with both 1-based ranks.
pub fn write_ranked<W: Write>(w: W, trend: &RankedList, irregular: &RankedList) -> Result<()> {
    let rank_i: std::collections::HashMap<&str, usize> = irregular
        .ids()
        .enumerate()
        .map(|(k, id)| (id, k + 1))
        .collect();
    let mut w = BufWriter::new(w);
    writeln!(w, "{RANKED_HEADER}")?;
    for (k, e) in trend.entries.iter().enumerate() {
        let ri = rank_i
            .get(e.id.as_str())
            .ok_or_else(|| Error::MissingCandidate(e.id.clone()))?;
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            e.id,
            e.score_s,
            e.score_t,
            e.score_i,
            e.best_epsilon,
            k + 1,
            ri
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a ranked-scores file back into the trend and irregular lists.
pub fn read_ranked<R: Read>(r: R, phi: usize) -> Result<(RankedList, RankedList)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header = rdr
        .headers()
        .map_err(|e| Error::FormatError(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != RANKED_HEADER {
        return Err(Error::ParseError {
            line: 1,
            message: format!("expected header `{RANKED_HEADER}`"),
        });
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::ParseError {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let bad = |i: usize| Error::ParseError {
            line,
            message: format!("bad field {}", i + 1),
        };
        let f = |i: usize| -> Result<f64> { rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad(i)) };
        let u = |i: usize| -> Result<usize> { rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| bad(i)) };
        let score = TermScore {
            id: rec.get(0).ok_or_else(|| bad(0))?.to_string(),
            score_s: f(1)?,
            score_t: f(2)?,
            score_i: f(3)?,
            best_epsilon: u(4)? as u8,
        };
        rows.push((u(5)?, u(6)?, score));
    }
    let mut by_t: Vec<_> = rows.iter().map(|(t, _, s)| (*t, s.clone())).collect();
    by_t.sort_by_key(|(t, _)| *t);
    let mut by_i: Vec<_> = rows.into_iter().map(|(_, i, s)| (i, s)).collect();
    by_i.sort_by_key(|(i, _)| *i);
    let trend = RankedList {
        component: Component::Trend,
        phi,
        entries: by_t.into_iter().map(|(_, s)| s).collect(),
    };
    let irregular = RankedList {
        component: Component::Irregular,
        phi,
        entries: by_i.into_iter().map(|(_, s)| s).collect(),
    };
    Ok((trend, irregular))
}
