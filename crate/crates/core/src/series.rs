//! Weekly series types and the numeric primitives shared by every stage:
//! zero replacement, logit/logistic, trailing moving average, gap
//! differencing and Pearson correlation.
//!
//! Week indices are plain integers. Rate series always start at a
//! non-negative week; derived real-valued series may be relabelled to
//! negative weeks (a lagged target is shifted backwards in time).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Identifier reserved for the target series.
pub const TARGET_ID: &str = "__target__";

/// A weekly series of rates in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSeries {
    id: String,
    start_week: i64,
    values: Vec<f64>,
}

impl RateSeries {
    pub fn new(id: impl Into<String>, start_week: i64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::SeriesTooShort { len: 0, needed: 0 });
        }
        if start_week < 0 {
            return Err(Error::Config(format!("negative start week {start_week}")));
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::DomainError { index, value });
        }
        Ok(Self {
            id: id.into(),
            start_week,
            values,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn start_week(&self) -> i64 {
        self.start_week
    }

    /// One past the last week.
    pub fn end_week(&self) -> i64 {
        self.start_week + self.values.len() as i64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, week: i64) -> Option<f64> {
        index_of(self.start_week, self.values.len(), week).map(|i| self.values[i])
    }

    /// Copy of the weeks `first..end` intersected with this series.
    pub fn window(&self, first: i64, end: i64) -> Option<RateSeries> {
        let lo = first.max(self.start_week);
        let hi = end.min(self.end_week());
        if lo >= hi {
            return None;
        }
        let a = (lo - self.start_week) as usize;
        let b = (hi - self.start_week) as usize;
        Some(RateSeries {
            id: self.id.clone(),
            start_week: lo,
            values: self.values[a..b].to_vec(),
        })
    }

    /// Smallest non-zero value, if any.
    pub fn min_nonzero(&self) -> Option<f64> {
        self.values
            .iter()
            .copied()
            .filter(|v| *v > 0.0)
            .min_by(f64::total_cmp)
    }
}

/// Real-valued weekly series (logit values or a decomposition component).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitSeries {
    pub id: String,
    pub start_week: i64,
    pub values: Vec<f64>,
}

impl LogitSeries {
    pub fn new(id: impl Into<String>, start_week: i64, values: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            start_week,
            values,
        }
    }

    pub fn end_week(&self) -> i64 {
        self.start_week + self.values.len() as i64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn at(&self, week: i64) -> Option<f64> {
        index_of(self.start_week, self.values.len(), week).map(|i| self.values[i])
    }

    /// Values over `first..end`, which must lie inside the series.
    pub fn slice(&self, first: i64, end: i64) -> Option<&[f64]> {
        if first < self.start_week || end > self.end_week() || first > end {
            return None;
        }
        let a = (first - self.start_week) as usize;
        let b = (end - self.start_week) as usize;
        Some(&self.values[a..b])
    }

    /// Same values relabelled `by` weeks earlier.
    pub fn shifted_back(&self, by: i64) -> LogitSeries {
        LogitSeries {
            id: self.id.clone(),
            start_week: self.start_week - by,
            values: self.values.clone(),
        }
    }
}

/// `values[t] = s[t + epsilon] - s[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffSeries {
    pub values: Vec<f64>,
    pub epsilon: usize,
    pub start_week: i64,
}

fn index_of(start: i64, len: usize, week: i64) -> Option<usize> {
    if week < start {
        return None;
    }
    let i = (week - start) as usize;
    (i < len).then_some(i)
}

/// Replaces every zero with the smallest non-zero value of the series.
pub fn replace_zeros(s: &RateSeries) -> Result<RateSeries> {
    let floor = s
        .min_nonzero()
        .ok_or_else(|| Error::AllZeroSeries(s.id.clone()))?;
    Ok(replace_zeros_with(s, floor))
}

/// Zero replacement against a floor fixed elsewhere (e.g. frozen from the
/// training period so that prediction never peeks at future weeks).
pub fn replace_zeros_with(s: &RateSeries, floor: f64) -> RateSeries {
    RateSeries {
        id: s.id.clone(),
        start_week: s.start_week,
        values: s
            .values
            .iter()
            .map(|&v| if v == 0.0 { floor } else { v })
            .collect(),
    }
}

pub fn logit_value(v: f64) -> f64 {
    (v / (1.0 - v)).ln()
}

pub fn logit(s: &RateSeries) -> Result<LogitSeries> {
    let values = s
        .values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if v > 0.0 && v < 1.0 {
                Ok(logit_value(v))
            } else {
                Err(Error::DomainError { index, value: v })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LogitSeries::new(s.id.clone(), s.start_week, values))
}

pub fn logistic(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Trailing mean over weeks `t - width .. t` (week `t` itself excluded).
pub fn moving_average(s: &LogitSeries, width: usize) -> Result<LogitSeries> {
    let n = s.values.len();
    if width == 0 || n <= width {
        return Err(Error::SeriesTooShort {
            len: n,
            needed: width,
        });
    }
    let w = width as f64;
    // Per-window sums: identical results whatever the series start week.
    let values = (width..n)
        .map(|t| s.values[t - width..t].iter().sum::<f64>() / w)
        .collect();
    Ok(LogitSeries::new(
        s.id.clone(),
        s.start_week + width as i64,
        values,
    ))
}

pub fn diff(s: &LogitSeries, epsilon: usize) -> Result<DiffSeries> {
    diff_values(&s.values, epsilon).map(|values| DiffSeries {
        values,
        epsilon,
        start_week: s.start_week,
    })
}

pub(crate) fn diff_values(values: &[f64], epsilon: usize) -> Result<Vec<f64>> {
    if epsilon == 0 || epsilon >= values.len() {
        return Err(Error::SeriesTooShort {
            len: values.len(),
            needed: epsilon,
        });
    }
    Ok(values
        .iter()
        .zip(&values[epsilon..])
        .map(|(a, b)| b - a)
        .collect())
}

/// Pearson correlation; zero-variance input yields 0.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.len() < 2 {
        return Err(Error::SeriesTooShort {
            len: a.len(),
            needed: 1,
        });
    }
    if is_constant(a) || is_constant(b) {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(0.0);
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

fn is_constant(v: &[f64]) -> bool {
    v.iter().all(|x| *x == v[0])
}
