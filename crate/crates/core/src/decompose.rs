//! Multiplicative seasonal adjustment of a logit series:
//! `logit(y_t) = trend_t * seasonal_t * irregular_t`.
//!
//! The trend is the trailing moving average over one cycle, the seasonal
//! pattern is the per-position mean of the detrended series and the
//! irregular component is whatever the other two leave unexplained.
//!
//! Logit values of small rates are negative, so the trend is negative and
//! the ratios `logit / trend` sit around 1. A seasonal value below 1 means
//! a *less* negative logit, i.e. a higher rate.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{self, LogitSeries, RateSeries};

pub const DEFAULT_CYCLE: usize = 52;

/// Divisors smaller than this in magnitude are rejected.
pub const DIVISION_GUARD: f64 = 1e-12;

/// One value per cycle position; position `p` covers every week `w` with
/// `w mod cycle == p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeasonalPattern {
    values: Vec<f64>,
}

impl SeasonalPattern {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::SeriesTooShort { len: 0, needed: 1 });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::FormatError("non-finite seasonal value".into()));
        }
        Ok(Self { values })
    }

    pub fn cycle(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn position(&self, week: i64) -> usize {
        week.rem_euclid(self.values.len() as i64) as usize
    }

    pub fn at(&self, week: i64) -> f64 {
        self.values[self.position(week)]
    }

    /// Pattern re-indexed so that position `p` holds this pattern's value
    /// at `p - by`. Used to read a pattern estimated on series relabelled
    /// `by` weeks earlier at the original week labels.
    pub fn rotated(&self, by: i64) -> SeasonalPattern {
        let m = self.values.len() as i64;
        let values = (0..m)
            .map(|p| self.values[(p - by).rem_euclid(m) as usize])
            .collect();
        SeasonalPattern { values }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub source_id: String,
    pub cycle: usize,
    pub trend: LogitSeries,
    pub seasonal: SeasonalPattern,
    pub irregular: LogitSeries,
}

impl Decomposition {
    /// `trend * seasonal * irregular` at `week`, where defined.
    pub fn reconstruct(&self, week: i64) -> Option<f64> {
        let t = self.trend.at(week)?;
        let i = self.irregular.at(week)?;
        Some(t * self.seasonal.at(week) * i)
    }

    pub fn first_week(&self) -> i64 {
        self.trend.start_week
    }

    pub fn end_week(&self) -> i64 {
        self.trend.end_week()
    }
}

pub fn trend(s: &LogitSeries, cycle: usize) -> Result<LogitSeries> {
    series::moving_average(s, cycle)
}

/// Per-position mean of the detrended series `s / trend` over the weeks
/// where the trend is defined.
pub fn seasonal(s: &LogitSeries, trend: &LogitSeries, cycle: usize) -> Result<SeasonalPattern> {
    if cycle == 0 || trend.len() < cycle {
        return Err(Error::SeriesTooShort {
            len: trend.len(),
            needed: cycle,
        });
    }
    let mut sums = vec![0.0; cycle];
    let mut counts = vec![0usize; cycle];
    for (k, &tv) in trend.values.iter().enumerate() {
        let week = trend.start_week + k as i64;
        let sv = s.at(week).ok_or(Error::SeriesTooShort {
            len: s.len(),
            needed: trend.len(),
        })?;
        if tv.abs() < DIVISION_GUARD {
            return Err(Error::DivisionByNearZero { week });
        }
        let p = week.rem_euclid(cycle as i64) as usize;
        sums[p] += sv / tv;
        counts[p] += 1;
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| s / c as f64)
        .collect();
    SeasonalPattern::new(values)
}

/// `s / (trend * pattern)` over the weeks where the trend is defined.
pub fn irregular(
    s: &LogitSeries,
    trend: &LogitSeries,
    pattern: &SeasonalPattern,
) -> Result<LogitSeries> {
    let values = trend
        .values
        .iter()
        .enumerate()
        .map(|(k, &tv)| {
            let week = trend.start_week + k as i64;
            let sv = s.at(week).ok_or(Error::SeriesTooShort {
                len: s.len(),
                needed: trend.len(),
            })?;
            irregular_value(sv, tv, pattern.at(week), week)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LogitSeries::new(s.id.clone(), trend.start_week, values))
}

pub(crate) fn irregular_value(logit: f64, trend: f64, seasonal: f64, week: i64) -> Result<f64> {
    if trend.abs() < DIVISION_GUARD || seasonal.abs() < DIVISION_GUARD {
        return Err(Error::DivisionByNearZero { week });
    }
    Ok(logit / (trend * seasonal))
}

/// Zero replacement, logit, then the three components.
pub fn decompose(s: &RateSeries, cycle: usize) -> Result<Decomposition> {
    check_length(s.len(), cycle)?;
    let cleaned = series::replace_zeros(s)?;
    let logits = series::logit(&cleaned)?;
    decompose_logit(&logits, cycle)
}

/// Decomposition of an already logit-transformed series.
pub fn decompose_logit(s: &LogitSeries, cycle: usize) -> Result<Decomposition> {
    check_length(s.len(), cycle)?;
    let trend = trend(s, cycle)?;
    let seasonal = seasonal(s, &trend, cycle)?;
    let irregular = irregular(s, &trend, &seasonal)?;
    Ok(Decomposition {
        source_id: s.id.clone(),
        cycle,
        trend,
        seasonal,
        irregular,
    })
}

fn check_length(len: usize, cycle: usize) -> Result<()> {
    // warm-up cycle for the trend plus one full cycle for the pattern
    if cycle == 0 || len < 2 * cycle {
        return Err(Error::SeriesTooShort {
            len,
            needed: 2 * cycle,
        });
    }
    Ok(())
}
