//! The recomposed nowcast/forecast model.
//!
//! The target trend and irregular, read `phi` weeks ahead, are each
//! regressed on the matching components of the selected candidates. A
//! prediction for week `u` multiplies the target's seasonal factor at `u`
//! with the two regression outputs computed from candidate data up to week
//! `u - phi`, and maps the product back through the logistic.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::CandidateSource;
use crate::decompose::{self, Decomposition, SeasonalPattern};
use crate::error::{Error, Result};
use crate::rank::{Component, TargetComponents};
use crate::regress::{self, RidgeModel, Standardization, DEFAULT_FOLDS, DEFAULT_LAMBDA, LAMBDA_GRID};
use crate::select::{self, ColumnProvider};
use crate::series::{self, RateSeries};

const MAGIC: &[u8; 8] = b"GATECAST";
pub const FORMAT_VERSION: u32 = 1;

/// Frozen training-period state of one selected candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateState {
    pub seasonal: SeasonalPattern,
    /// Replacement for zero rates, taken from the training weeks.
    pub zero_floor: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub phi: usize,
    pub cycle: usize,
    /// Training weeks `train_first..train_end`.
    pub train_first: i64,
    pub train_end: i64,
    /// Target seasonal pattern indexed by original week labels.
    pub target_seasonal: SeasonalPattern,
    pub trend: RidgeModel,
    pub irregular: RidgeModel,
    pub candidates: BTreeMap<String, CandidateState>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    /// Target week being predicted.
    pub week: i64,
    pub rate: f64,
    pub logit: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub lambda: f64,
    /// Pick lambda from the grid by CV instead of using `lambda`.
    pub lambda_grid: bool,
    pub folds: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            lambda_grid: false,
            folds: DEFAULT_FOLDS,
        }
    }
}

/// Rows shared by the lagged target components and candidate components
/// estimated on the training weeks `first..end`.
pub fn training_rows(first: i64, end: i64, cycle: usize, phi: usize) -> Range<i64> {
    (first + cycle as i64)..(end - phi as i64)
}

/// Candidate decompositions over a fixed training window, computed on
/// demand and cached.
pub struct TrainingColumns<'a, S: CandidateSource + ?Sized> {
    source: &'a S,
    cycle: usize,
    first: i64,
    end: i64,
    rows: Range<i64>,
    cache: RefCell<HashMap<String, Decomposition>>,
}

impl<'a, S: CandidateSource + ?Sized> TrainingColumns<'a, S> {
    pub fn new(source: &'a S, first: i64, end: i64, cycle: usize, phi: usize) -> Self {
        Self {
            source,
            cycle,
            first,
            end,
            rows: training_rows(first, end, cycle, phi),
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn rows(&self) -> Range<i64> {
        self.rows.clone()
    }

    pub fn history(&self, id: &str) -> Result<RateSeries> {
        let s = self.source.window(id, self.first, self.end)?;
        if s.start_week() != self.first || s.end_week() != self.end {
            return Err(Error::InsufficientHistory {
                id: id.to_string(),
                week: if s.start_week() != self.first { self.first } else { s.end_week() },
            });
        }
        Ok(s)
    }

    pub fn decomposition(&self, id: &str) -> Result<Decomposition> {
        if let Some(d) = self.cache.borrow().get(id) {
            return Ok(d.clone());
        }
        let d = decompose::decompose(&self.history(id)?, self.cycle)?;
        self.cache.borrow_mut().insert(id.to_string(), d.clone());
        Ok(d)
    }

    pub fn column(&self, id: &str, component: Component) -> Result<Vec<f64>> {
        let d = self.decomposition(id)?;
        let s = match component {
            Component::Trend => &d.trend,
            Component::Irregular => &d.irregular,
        };
        s.slice(self.rows.start, self.rows.end)
            .map(<[f64]>::to_vec)
            .ok_or(Error::InsufficientOverlap {
                len: s.len(),
                needed: (self.rows.end - self.rows.start).max(0) as usize,
            })
    }

    pub fn provider(&self, component: Component) -> ComponentColumns<'_, 'a, S> {
        ComponentColumns {
            columns: self,
            component,
        }
    }
}

/// One component's view of [`TrainingColumns`].
pub struct ComponentColumns<'c, 'a, S: CandidateSource + ?Sized> {
    columns: &'c TrainingColumns<'a, S>,
    component: Component,
}

impl<S: CandidateSource + ?Sized> ColumnProvider for ComponentColumns<'_, '_, S> {
    fn column(&self, id: &str) -> Result<Vec<f64>> {
        self.columns.column(id, self.component)
    }
}

fn fit_component<S: CandidateSource + ?Sized>(
    target: &TargetComponents,
    columns: &TrainingColumns<'_, S>,
    component: Component,
    ids: &[String],
    cfg: &FitConfig,
) -> Result<RidgeModel> {
    let y = select::response(target, component, columns.rows())?;
    let cols = ids
        .iter()
        .map(|id| columns.column(id, component))
        .collect::<Result<Vec<_>>>()?;
    let x = regress::design_from_columns(&cols, y.len())?;
    let lambda = if cfg.lambda_grid && !ids.is_empty() {
        regress::select_lambda(&x, &y, &LAMBDA_GRID, cfg.folds)?.0
    } else {
        cfg.lambda
    };
    regress::fit_named(&x, &y, lambda, ids.to_vec())
}

/// Fits the final model on the training weeks `first..end` of `source`.
/// `target` must be built from the same training weeks of the target.
pub fn fit_final<S: CandidateSource + ?Sized>(
    target: &TargetComponents,
    columns: &TrainingColumns<'_, S>,
    trend_ids: &[String],
    irregular_ids: &[String],
    cfg: &FitConfig,
) -> Result<FittedModel> {
    let trend = fit_component(target, columns, Component::Trend, trend_ids, cfg)?;
    let irregular = fit_component(target, columns, Component::Irregular, irregular_ids, cfg)?;
    let mut candidates = BTreeMap::new();
    for id in trend_ids.iter().chain(irregular_ids) {
        if candidates.contains_key(id) {
            continue;
        }
        let history = columns.history(id)?;
        let zero_floor = history
            .min_nonzero()
            .ok_or_else(|| Error::AllZeroSeries(id.clone()))?;
        let seasonal = columns.decomposition(id)?.seasonal;
        candidates.insert(id.clone(), CandidateState { seasonal, zero_floor });
    }
    Ok(FittedModel {
        phi: target.phi,
        cycle: target.cycle,
        train_first: columns.first,
        train_end: columns.end,
        target_seasonal: target.lagged.seasonal.rotated(target.phi as i64),
        trend,
        irregular,
        candidates,
    })
}

impl FittedModel {
    /// Trend and irregular of candidate `id` at week `t`, using only
    /// weeks `t - cycle ..= t`.
    pub fn candidate_components<S: CandidateSource + ?Sized>(
        &self,
        source: &S,
        id: &str,
        t: i64,
    ) -> Result<(f64, f64)> {
        let state = self
            .candidates
            .get(id)
            .ok_or_else(|| Error::MissingCandidate(id.to_string()))?;
        let m = self.cycle as i64;
        let raw = source.window(id, t - m, t + 1)?;
        if raw.start_week() != t - m || raw.end_week() != t + 1 {
            return Err(Error::InsufficientHistory {
                id: id.to_string(),
                week: t,
            });
        }
        let logits = series::logit(&series::replace_zeros_with(&raw, state.zero_floor))?;
        let v = &logits.values;
        let trend = v[..self.cycle].iter().sum::<f64>() / self.cycle as f64;
        let irr = decompose::irregular_value(v[self.cycle], trend, state.seasonal.at(t), t)?;
        Ok((trend, irr))
    }

    /// Prediction for target week `week`, from candidate data up to
    /// `week - phi`.
    pub fn predict_week<S: CandidateSource + ?Sized>(&self, source: &S, week: i64) -> Result<Prediction> {
        let t = week - self.phi as i64;
        let mut cache: HashMap<&str, (f64, f64)> = HashMap::new();
        let mut feature = |id: &str, pick: fn((f64, f64)) -> f64| -> Result<f64> {
            if let Some(&c) = cache.get(id) {
                return Ok(pick(c));
            }
            let (key, _) = self.candidates.get_key_value(id).ok_or_else(|| Error::MissingCandidate(id.to_string()))?;
            let c = self.candidate_components(source, id, t)?;
            cache.insert(key.as_str(), c);
            Ok(pick(c))
        };
        let xt = self
            .trend
            .feature_ids
            .iter()
            .map(|id| feature(id, |c| c.0))
            .collect::<Result<Vec<_>>>()?;
        let xi = self
            .irregular
            .feature_ids
            .iter()
            .map(|id| feature(id, |c| c.1))
            .collect::<Result<Vec<_>>>()?;
        let logit = self.target_seasonal.at(week) * self.trend.predict_row(&xt)? * self.irregular.predict_row(&xi)?;
        Ok(Prediction {
            week,
            rate: series::logistic(logit),
            logit,
        })
    }

    pub fn predict<S: CandidateSource + ?Sized>(&self, source: &S, weeks: Range<i64>) -> Result<Vec<Prediction>> {
        weeks.map(|w| self.predict_week(source, w)).collect()
    }

    pub fn selected_ids(&self, component: Component) -> &[String] {
        match component {
            Component::Trend => &self.trend.feature_ids,
            Component::Irregular => &self.irregular.feature_ids,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_from(BufReader::new(f))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_to(&mut out).expect("writing to memory");
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read_from(bytes)
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        let header = Header {
            phi: self.phi,
            cycle: self.cycle,
            train_first: self.train_first,
            train_end: self.train_end,
            trend_ids: self.trend.feature_ids.clone(),
            irregular_ids: self.irregular.feature_ids.clone(),
            candidate_ids: self.candidates.keys().cloned().collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::FormatError(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        write_section(w, b"TSEA", self.target_seasonal.values())?;
        write_section(w, b"TRND", &ridge_values(&self.trend))?;
        write_section(w, b"IRRG", &ridge_values(&self.irregular))?;
        let seas: Vec<f64> = self
            .candidates
            .values()
            .flat_map(|c| c.seasonal.values().iter().copied())
            .collect();
        write_section(w, b"CSEA", &seas)?;
        let floors: Vec<f64> = self.candidates.values().map(|c| c.zero_floor).collect();
        write_section(w, b"CFLR", &floors)?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        let mut cur = Cursor { bytes: &bytes, pos: 0 };
        if cur.take(MAGIC.len())? != MAGIC {
            return Err(Error::FormatError("bad magic".into()));
        }
        let version = cur.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch(version));
        }
        let hlen = cur.u32()? as usize;
        let header: Header = serde_json::from_slice(cur.take(hlen)?)
            .map_err(|e| Error::FormatError(format!("header: {e}")))?;
        let m = header.cycle;
        let k = header.candidate_ids.len();
        let tsea = cur.section(b"TSEA", Some(m))?;
        let trend = cur.section(b"TRND", Some(2 + 3 * header.trend_ids.len()))?;
        let irr = cur.section(b"IRRG", Some(2 + 3 * header.irregular_ids.len()))?;
        let csea = cur.section(b"CSEA", Some(k * m))?;
        let cflr = cur.section(b"CFLR", Some(k))?;
        if cur.pos != bytes.len() {
            return Err(Error::FormatError("trailing bytes".into()));
        }
        let known = |ids: &[String]| ids.iter().all(|id| header.candidate_ids.contains(id));
        if !known(&header.trend_ids) || !known(&header.irregular_ids) {
            return Err(Error::FormatError("feature without candidate state".into()));
        }
        let candidates = header
            .candidate_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                Ok((
                    id.clone(),
                    CandidateState {
                        seasonal: SeasonalPattern::new(csea[i * m..(i + 1) * m].to_vec())?,
                        zero_floor: cflr[i],
                    },
                ))
            })
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(FittedModel {
            phi: header.phi,
            cycle: m,
            train_first: header.train_first,
            train_end: header.train_end,
            target_seasonal: SeasonalPattern::new(tsea)?,
            trend: ridge_from(&trend, header.trend_ids),
            irregular: ridge_from(&irr, header.irregular_ids),
            candidates,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    phi: usize,
    cycle: usize,
    train_first: i64,
    train_end: i64,
    trend_ids: Vec<String>,
    irregular_ids: Vec<String>,
    candidate_ids: Vec<String>,
}

// [intercept, lambda, (coef, mean, scale)...]
fn ridge_values(m: &RidgeModel) -> Vec<f64> {
    let mut v = vec![m.intercept, m.lambda];
    for (b, s) in m.coefficients.iter().zip(&m.standardization) {
        v.extend([*b, s.mean, s.scale]);
    }
    v
}

fn ridge_from(v: &[f64], ids: Vec<String>) -> RidgeModel {
    let (coefficients, standardization) = v[2..]
        .chunks_exact(3)
        .map(|c| (c[0], Standardization { mean: c[1], scale: c[2] }))
        .unzip();
    RidgeModel {
        intercept: v[0],
        coefficients,
        lambda: v[1],
        feature_ids: ids,
        standardization,
    }
}

fn write_section<W: Write>(w: &mut W, tag: &[u8; 4], values: &[f64]) -> Result<()> {
    w.write_all(tag)?;
    w.write_all(&(values.len() as u32).to_le_bytes())?;
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::FormatError("truncated model file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn section(&mut self, tag: &[u8; 4], expected: Option<usize>) -> Result<Vec<f64>> {
        if self.take(4)? != tag {
            return Err(Error::FormatError(format!(
                "expected section {}",
                String::from_utf8_lossy(tag)
            )));
        }
        let n = self.u32()? as usize;
        if expected.is_some_and(|e| e != n) {
            return Err(Error::FormatError(format!(
                "section {} has {n} values",
                String::from_utf8_lossy(tag)
            )));
        }
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::FormatError("oversized section".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub const PREDICTION_HEADER: &str = "week_index,predicted_rate";

/// Writes `week_index,predicted_rate[,actual_rate]`.
pub fn write_predictions<W: Write>(w: W, preds: &[Prediction], actual: Option<&RateSeries>) -> Result<()> {
    let mut w = BufWriter::new(w);
    match actual {
        Some(_) => writeln!(w, "{PREDICTION_HEADER},actual_rate")?,
        None => writeln!(w, "{PREDICTION_HEADER}")?,
    }
    for p in preds {
        match actual.and_then(|a| a.at(p.week)) {
            Some(a) => writeln!(w, "{},{},{}", p.week, p.rate, a)?,
            None if actual.is_some() => writeln!(w, "{},{},", p.week, p.rate)?,
            None => writeln!(w, "{},{}", p.week, p.rate)?,
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a prediction file back as `(week, rate)` pairs.
pub fn read_predictions<R: Read>(r: R) -> Result<Vec<(i64, f64)>> {
    let mut out = Vec::new();
    for (k, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let no = k as u64 + 1;
        if k == 0 {
            if !line.starts_with(PREDICTION_HEADER) {
                return Err(Error::ParseError {
                    line: 1,
                    message: "bad header".into(),
                });
            }
            continue;
        }
        let mut parts = line.split(',');
        let bad = |m: &str| Error::ParseError {
            line: no,
            message: m.to_string(),
        };
        let week = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad week"))?;
        let rate = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("bad rate"))?;
        out.push((week, rate));
    }
    Ok(out)
}

/// Predicted rates as a series; weeks must be consecutive.
pub fn prediction_series(preds: &[Prediction]) -> Result<RateSeries> {
    let first = preds.first().map_or(0, |p| p.week);
    if preds.iter().enumerate().any(|(k, p)| p.week != first + k as i64) {
        return Err(Error::FormatError("prediction weeks are not consecutive".into()));
    }
    RateSeries::new("prediction", first, preds.iter().map(|p| p.rate).collect())
}

/// Series from `(week, rate)` rows read back from a prediction file.
pub fn series_from_rows(rows: &[(i64, f64)]) -> Result<RateSeries> {
    let first = rows.first().map_or(0, |r| r.0);
    if rows.iter().enumerate().any(|(k, r)| r.0 != first + k as i64) {
        return Err(Error::FormatError("prediction weeks are not consecutive".into()));
    }
    RateSeries::new("prediction", first, rows.iter().map(|r| r.1).collect())
}
