//! Wrapper forward selection over a ranked candidate list.
//!
//! Candidates are visited once, in rank order. A candidate joins the
//! selected set only if the blocked cross-validated MSE of the enlarged
//! ridge model is strictly lower than that of the current set; the scan
//! ends after `patience` consecutive rejections. Improvements smaller than
//! [`MIN_RELATIVE_GAIN`] of the current score count as ties, so a column
//! collinear with the selected set is never accepted on rounding noise.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rank::{Component, RankedList, TargetComponents};
use crate::regress::{self, DEFAULT_FOLDS, DEFAULT_LAMBDA};

pub const MIN_RELATIVE_GAIN: f64 = 1e-12;

/// True when `candidate` beats `current` by more than rounding noise.
pub fn improves(candidate: f64, current: f64) -> bool {
    candidate < current - MIN_RELATIVE_GAIN * current.abs()
}

/// Candidate columns aligned with the response rows.
pub trait ColumnProvider {
    fn column(&self, id: &str) -> Result<Vec<f64>>;
}

impl ColumnProvider for HashMap<String, Vec<f64>> {
    fn column(&self, id: &str) -> Result<Vec<f64>> {
        self.get(id)
            .cloned()
            .ok_or_else(|| Error::MissingCandidate(id.to_string()))
    }
}

impl ColumnProvider for BTreeMap<String, Vec<f64>> {
    fn column(&self, id: &str) -> Result<Vec<f64>> {
        self.get(id)
            .cloned()
            .ok_or_else(|| Error::MissingCandidate(id.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectConfig {
    pub lambda: f64,
    pub max_candidates: usize,
    pub patience: usize,
    pub folds: usize,
}

impl Default for SelectConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            max_candidates: 1000,
            patience: 5,
            folds: DEFAULT_FOLDS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// `patience` rejections in a row.
    ConsecutiveFailures,
    CandidatesExhausted,
    /// `max_candidates` evaluations done with candidates left.
    MaxCandidates,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::ConsecutiveFailures => "ConsecutiveFailures",
            StopReason::CandidatesExhausted => "CandidatesExhausted",
            StopReason::MaxCandidates => "MaxCandidates",
        }
    }
}

impl std::str::FromStr for StopReason {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ConsecutiveFailures" => Ok(StopReason::ConsecutiveFailures),
            "CandidatesExhausted" => Ok(StopReason::CandidatesExhausted),
            "MaxCandidates" => Ok(StopReason::MaxCandidates),
            other => Err(Error::FormatError(format!("unknown stop reason `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub candidate_id: String,
    pub cv_before: f64,
    /// `inf` when the enlarged design could not be fitted.
    pub cv_after: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub component: Component,
    /// Accepted candidates in scan order.
    pub selected_ids: Vec<String>,
    /// CV score of the intercept-only model.
    pub baseline_cv: f64,
    pub trace: Vec<TraceEntry>,
    pub stop_reason: StopReason,
}

impl SelectionResult {
    /// CV score of the final selected set.
    pub fn final_cv(&self) -> f64 {
        self.trace
            .iter()
            .rev()
            .find(|e| e.accepted)
            .map_or(self.baseline_cv, |e| e.cv_after)
    }
}

fn evaluate(columns: &[Vec<f64>], y: &[f64], cfg: &SelectConfig) -> Result<f64> {
    let x = regress::design_from_columns(columns, y.len())?;
    Ok(regress::cv_score(&x, y, cfg.lambda, cfg.folds)?.mean_mse)
}

pub fn forward_select<P: ColumnProvider + ?Sized>(
    ranked: &RankedList,
    columns: &P,
    y: &[f64],
    cfg: &SelectConfig,
) -> Result<SelectionResult> {
    if ranked.is_empty() {
        return Err(Error::EmptyRankedList);
    }
    if cfg.max_candidates == 0 {
        return Err(Error::Config("max_candidates must be at least 1".into()));
    }
    let baseline_cv = regress::cv_score(
        &DMatrix::zeros(y.len(), 0),
        y,
        cfg.lambda,
        cfg.folds,
    )?
    .mean_mse;
    let mut current = baseline_cv;
    let mut active: Vec<Vec<f64>> = Vec::new();
    let mut selected_ids = Vec::new();
    let mut trace = Vec::new();
    let mut failures = 0usize;
    let mut stop_reason = StopReason::CandidatesExhausted;

    for (k, entry) in ranked.entries.iter().enumerate() {
        if k == cfg.max_candidates {
            stop_reason = StopReason::MaxCandidates;
            break;
        }
        let column = match columns.column(&entry.id) {
            Ok(c) if c.len() == y.len() => Some(c),
            Ok(c) => {
                return Err(Error::LengthMismatch {
                    left: y.len(),
                    right: c.len(),
                })
            }
            Err(_) => None,
        };
        let cv_after = match column {
            Some(c) => {
                active.push(c);
                let r = evaluate(&active, y, cfg);
                let c = active.pop().expect("just pushed");
                match r {
                    Ok(v) => Some((v, c)),
                    Err(Error::DegenerateDesign { .. } | Error::TooFewRows { .. }) => None,
                    Err(e) => return Err(e),
                }
            }
            None => None,
        };
        let accepted = matches!(&cv_after, Some((v, _)) if improves(*v, current));
        let after = cv_after.as_ref().map_or(f64::INFINITY, |(v, _)| *v);
        trace.push(TraceEntry {
            candidate_id: entry.id.clone(),
            cv_before: current,
            cv_after: after,
            accepted,
        });
        if accepted {
            let (v, c) = cv_after.expect("accepted implies a score");
            active.push(c);
            selected_ids.push(entry.id.clone());
            current = v;
            failures = 0;
        } else {
            failures += 1;
            if failures >= cfg.patience.max(1) {
                stop_reason = StopReason::ConsecutiveFailures;
                break;
            }
        }
    }
    Ok(SelectionResult {
        component: ranked.component,
        selected_ids,
        baseline_cv,
        trace,
        stop_reason,
    })
}

/// Target component values over `rows`.
pub fn response(target: &TargetComponents, component: Component, rows: Range<i64>) -> Result<Vec<f64>> {
    let s = match component {
        Component::Trend => target.trend(),
        Component::Irregular => target.irregular(),
    };
    s.slice(rows.start, rows.end)
        .map(<[f64]>::to_vec)
        .ok_or(Error::InsufficientOverlap {
            len: s.len(),
            needed: (rows.end - rows.start).max(0) as usize,
        })
}

/// Independent selections for the trend and irregular models.
pub fn select_both<P, Q>(
    ranked_t: &RankedList,
    ranked_i: &RankedList,
    target: &TargetComponents,
    rows: Range<i64>,
    trend_columns: &P,
    irregular_columns: &Q,
    cfg: &SelectConfig,
) -> (Result<SelectionResult>, Result<SelectionResult>)
where
    P: ColumnProvider + ?Sized,
    Q: ColumnProvider + ?Sized,
{
    let t = response(target, Component::Trend, rows.clone())
        .and_then(|y| forward_select(ranked_t, trend_columns, &y, cfg));
    let i = response(target, Component::Irregular, rows)
        .and_then(|y| forward_select(ranked_i, irregular_columns, &y, cfg));
    (t, i)
}

pub fn write_trace<W: Write>(w: W, s: &SelectionResult) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(
        w,
        "# component={} stop_reason={} baseline_cv={}",
        s.component.as_str(),
        s.stop_reason.as_str(),
        s.baseline_cv
    )?;
    writeln!(w, "candidate_id,cv_before,cv_after,accepted")?;
    for e in &s.trace {
        writeln!(
            w,
            "{},{},{},{}",
            e.candidate_id, e.cv_before, e.cv_after, e.accepted
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(r: R) -> Result<SelectionResult> {
    let mut lines = BufReader::new(r).lines();
    let bad = |line: u64, m: &str| Error::ParseError {
        line,
        message: m.to_string(),
    };
    let meta = lines.next().transpose()?.ok_or_else(|| bad(1, "empty file"))?;
    let meta = meta
        .strip_prefix("# ")
        .ok_or_else(|| bad(1, "missing metadata line"))?;
    let mut fields: HashMap<&str, &str> = HashMap::new();
    for kv in meta.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| bad(1, "bad metadata"))?;
        fields.insert(k, v);
    }
    let get = |k: &str| fields.get(k).copied().ok_or_else(|| bad(1, "missing metadata key"));
    let component: Component = get("component")?.parse()?;
    let stop_reason: StopReason = get("stop_reason")?.parse()?;
    let baseline_cv: f64 = get("baseline_cv")?
        .parse()
        .map_err(|_| bad(1, "bad baseline_cv"))?;
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != "candidate_id,cv_before,cv_after,accepted" {
        return Err(bad(2, "bad header"));
    }
    let mut trace = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let no = k as u64 + 3;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(bad(no, "expected 4 fields"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(no, "bad number"));
        trace.push(TraceEntry {
            candidate_id: parts[0].to_string(),
            cv_before: num(parts[1])?,
            cv_after: num(parts[2])?,
            accepted: parts[3].parse().map_err(|_| bad(no, "bad flag"))?,
        });
    }
    let selected_ids = trace
        .iter()
        .filter(|e| e.accepted)
        .map(|e| e.candidate_id.clone())
        .collect();
    Ok(SelectionResult {
        component,
        selected_ids,
        baseline_cv,
        trace,
        stop_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rank::TermScore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn list(ids: &[&str]) -> RankedList {
        RankedList {
            component: Component::Irregular,
            phi: 0,
            entries: ids
                .iter()
                .map(|id| TermScore {
                    id: id.to_string(),
                    score_s: 1.0,
                    score_t: 0.0,
                    score_i: 0.0,
                    best_epsilon: 1,
                })
                .collect(),
        }
    }

    fn noise(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, 1.0).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn perfect_predictor_then_noise() {
        let n = 120;
        let y = noise(1, n);
        let mut cols = HashMap::new();
        cols.insert("perfect".to_string(), y.iter().map(|v| 2.0 * v + 1.0).collect());
        let mut ids = vec!["perfect".to_string()];
        for k in 0..10 {
            let id = format!("n{k}");
            cols.insert(id.clone(), noise(100 + k, n));
            ids.push(id);
        }
        let ranked = list(&ids.iter().map(String::as_str).collect::<Vec<_>>());
        let r = forward_select(&ranked, &cols, &y, &SelectConfig::default()).unwrap();
        assert_eq!(r.selected_ids[0], "perfect");
        assert!(r.trace.len() <= 11);

        // step-by-step replay of the greedy rule over the recorded trace
        let mut active: Vec<Vec<f64>> = Vec::new();
        let mut current = r.baseline_cv;
        let mut streak = 0;
        for e in &r.trace {
            let mut trial = active.clone();
            trial.push(cols[&e.candidate_id].clone());
            let x = regress::design_from_columns(&trial, n).unwrap();
            let cv = regress::cv_score(&x, &y, 0.1, 5).unwrap().mean_mse;
            assert_eq!(e.cv_before, current);
            assert_eq!(e.cv_after, cv);
            assert_eq!(e.accepted, improves(cv, current));
            if improves(cv, current) {
                active = trial;
                current = cv;
                streak = 0;
            } else {
                streak += 1;
            }
        }
        if r.stop_reason == StopReason::ConsecutiveFailures {
            assert_eq!(streak, 5);
        } else {
            assert_eq!(r.trace.len(), 11);
        }
    }

    #[test]
    fn single_identical_candidate() {
        let y = noise(2, 60);
        let mut cols = HashMap::new();
        cols.insert("same".to_string(), y.clone());
        let r = forward_select(&list(&["same"]), &cols, &y, &SelectConfig::default()).unwrap();
        assert_eq!(r.selected_ids, vec!["same"]);
        assert_eq!(r.stop_reason, StopReason::CandidatesExhausted);
    }

    #[test]
    fn constant_candidates_are_rejected() {
        let y = noise(3, 60);
        let ids: Vec<String> = (0..8).map(|k| format!("c{k}")).collect();
        let cols: HashMap<String, Vec<f64>> =
            ids.iter().map(|id| (id.clone(), vec![0.5; 60])).collect();
        let ranked = list(&ids.iter().map(String::as_str).collect::<Vec<_>>());
        let r = forward_select(&ranked, &cols, &y, &SelectConfig::default()).unwrap();
        assert!(r.selected_ids.is_empty());
        assert_eq!(r.trace.len(), 5);
        assert!(r.trace.iter().all(|e| e.cv_after.is_infinite()));
        assert_eq!(r.stop_reason, StopReason::ConsecutiveFailures);
    }

    #[test]
    fn missing_columns_reject_and_empty_list_errors() {
        let y = noise(4, 60);
        let cols: HashMap<String, Vec<f64>> = HashMap::new();
        let r = forward_select(&list(&["ghost"]), &cols, &y, &SelectConfig::default()).unwrap();
        assert!(!r.trace[0].accepted);
        assert_eq!(
            forward_select(&list(&[]), &cols, &y, &SelectConfig::default()).unwrap_err(),
            Error::EmptyRankedList
        );
    }

    #[test]
    fn patience_zero_keeps_improving_prefix() {
        let n = 100;
        let a = noise(10, n);
        let b = noise(11, n);
        let y: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u + v).collect();
        let mut cols = HashMap::new();
        cols.insert("a".to_string(), a);
        cols.insert("junk".to_string(), noise(12, n));
        cols.insert("b".to_string(), b);
        let cfg = SelectConfig {
            patience: 0,
            ..Default::default()
        };
        let r = forward_select(&list(&["a", "junk", "b"]), &cols, &y, &cfg).unwrap();
        assert_eq!(r.selected_ids, vec!["a"]);
        assert_eq!(r.trace.len(), 2);
        assert_eq!(r.stop_reason, StopReason::ConsecutiveFailures);
    }

    #[test]
    fn max_candidates_caps_the_scan() {
        let n = 80;
        let y = noise(20, n);
        let ids: Vec<String> = (0..6).map(|k| format!("x{k}")).collect();
        let cols: HashMap<String, Vec<f64>> = ids
            .iter()
            .enumerate()
            .map(|(k, id)| (id.clone(), y.iter().zip(noise(30 + k as u64, n)).map(|(a, b)| a + 3.0 * b).collect()))
            .collect();
        let cfg = SelectConfig {
            max_candidates: 2,
            patience: 10,
            ..Default::default()
        };
        let r = forward_select(
            &list(&ids.iter().map(String::as_str).collect::<Vec<_>>()),
            &cols,
            &y,
            &cfg,
        )
        .unwrap();
        assert_eq!(r.trace.len(), 2);
        assert_eq!(r.stop_reason, StopReason::MaxCandidates);
    }

    #[test]
    fn trace_file_roundtrip() {
        let y = noise(5, 60);
        let mut cols = HashMap::new();
        cols.insert("a".to_string(), y.clone());
        cols.insert("b".to_string(), vec![1.0; 60]);
        let r = forward_select(&list(&["a", "b"]), &cols, &y, &SelectConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_trace(&mut buf, &r).unwrap();
        assert_eq!(read_trace(buf.as_slice()).unwrap(), r);
        assert!(read_trace("candidate_id\n".as_bytes()).is_err());
    }
}
