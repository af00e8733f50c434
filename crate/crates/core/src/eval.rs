//! Accuracy metrics, relevance ratio and the evaluation report.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::{Labels, Relevance};
use crate::error::{Error, Result};
use crate::series::{self, RateSeries};

/// Symmetric MAPE in percent, in `[0, 200]`.
pub fn smape(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    if forecast.len() != actual.len() {
        return Err(Error::LengthMismatch {
            left: forecast.len(),
            right: actual.len(),
        });
    }
    if forecast.is_empty() {
        return Err(Error::SeriesTooShort { len: 0, needed: 1 });
    }
    let mut total = 0.0;
    for (i, (f, a)) in forecast.iter().zip(actual).enumerate() {
        let denom = f.abs() + a.abs();
        if denom == 0.0 {
            return Err(Error::BothZero(i));
        }
        total += 2.0 * (f - a).abs() / denom;
    }
    Ok(100.0 * total / forecast.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRatio {
    pub ratio: f64,
    pub related: usize,
    pub total: usize,
}

pub fn relevance_ratio<S: AsRef<str>>(selected: &[S], labels: &Labels) -> Result<RelevanceRatio> {
    if selected.is_empty() {
        return Err(Error::UndefinedRatio);
    }
    let mut related = 0;
    for id in selected {
        let id = id.as_ref();
        match labels.get(id) {
            Some(Relevance::Related) => related += 1,
            Some(Relevance::Unrelated) => {}
            None => return Err(Error::MissingLabel(id.to_string())),
        }
    }
    Ok(RelevanceRatio {
        ratio: related as f64 / selected.len() as f64,
        related,
        total: selected.len(),
    })
}

/// Selected ids of both component models.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Selections {
    pub trend: Vec<String>,
    pub irregular: Vec<String>,
}

impl Selections {
    /// Distinct ids over both components, sorted.
    pub fn union(&self) -> Vec<String> {
        self.trend
            .iter()
            .chain(&self.irregular)
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeekRow {
    pub week: i64,
    pub predicted: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub phi: usize,
    pub pearson: f64,
    pub smape: f64,
    pub relevance_t: Option<RelevanceRatio>,
    pub relevance_i: Option<RelevanceRatio>,
    /// Over the union of both selections.
    pub relevance_all: Option<RelevanceRatio>,
    pub weeks: Vec<WeekRow>,
}

impl EvalReport {
    pub fn first_week(&self) -> i64 {
        self.weeks.first().map_or(0, |r| r.week)
    }

    pub fn end_week(&self) -> i64 {
        self.weeks.last().map_or(0, |r| r.week + 1)
    }
}

fn optional_ratio<S: AsRef<str>>(ids: &[S], labels: &Labels) -> Result<Option<RelevanceRatio>> {
    match relevance_ratio(ids, labels) {
        Ok(r) => Ok(Some(r)),
        Err(Error::UndefinedRatio) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Compares `pred` with `actual` on their common weeks.
pub fn evaluate(
    pred: &RateSeries,
    actual: &RateSeries,
    phi: usize,
    selections: Option<&Selections>,
    labels: Option<&Labels>,
) -> Result<EvalReport> {
    let first = pred.start_week().max(actual.start_week());
    let end = pred.end_week().min(actual.end_week());
    if first >= end {
        return Err(Error::NoOverlap);
    }
    let weeks: Vec<WeekRow> = (first..end)
        .map(|w| WeekRow {
            week: w,
            predicted: pred.at(w).expect("inside overlap"),
            actual: actual.at(w).expect("inside overlap"),
        })
        .collect();
    let p: Vec<f64> = weeks.iter().map(|r| r.predicted).collect();
    let a: Vec<f64> = weeks.iter().map(|r| r.actual).collect();
    let pearson = if p.len() < 2 { 0.0 } else { series::pearson(&p, &a)? };
    let smape = smape(&p, &a)?;
    let (relevance_t, relevance_i, relevance_all) = match (selections, labels) {
        (Some(s), Some(l)) => (
            optional_ratio(&s.trend, l)?,
            optional_ratio(&s.irregular, l)?,
            optional_ratio(&s.union(), l)?,
        ),
        _ => (None, None, None),
    };
    Ok(EvalReport {
        phi,
        pearson,
        smape,
        relevance_t,
        relevance_i,
        relevance_all,
        weeks,
    })
}

pub const REPORT_HEADER: &str = "week_index,predicted_rate,actual_rate,residual";
pub const SUMMARY_HEADER: &str = "phi,first_week,end_week,n,pearson,smape,\
relevance_t,related_t,total_t,relevance_i,related_i,total_i,relevance_all,related_all,total_all";

pub fn write_report<W: Write>(w: W, r: &EvalReport) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{REPORT_HEADER}")?;
    for row in &r.weeks {
        writeln!(
            w,
            "{},{},{},{}",
            row.week,
            row.predicted,
            row.actual,
            row.predicted - row.actual
        )?;
    }
    w.flush()?;
    Ok(())
}

fn ratio_fields(r: &Option<RelevanceRatio>) -> String {
    match r {
        Some(r) => format!("{},{},{}", r.ratio, r.related, r.total),
        None => ",,".to_string(),
    }
}

pub fn write_summary<W: Write>(w: W, r: &EvalReport) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "{SUMMARY_HEADER}")?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{}",
        r.phi,
        r.first_week(),
        r.end_week(),
        r.weeks.len(),
        r.pearson,
        r.smape,
        ratio_fields(&r.relevance_t),
        ratio_fields(&r.relevance_i),
        ratio_fields(&r.relevance_all)
    )?;
    w.flush()?;
    Ok(())
}

fn parse_err(line: u64, m: &str) -> Error {
    Error::ParseError {
        line,
        message: m.to_string(),
    }
}

fn parse_ratio(f: &[&str]) -> Result<Option<RelevanceRatio>> {
    if f.iter().all(|s| s.is_empty()) {
        return Ok(None);
    }
    let bad = || parse_err(2, "bad relevance fields");
    Ok(Some(RelevanceRatio {
        ratio: f[0].parse().map_err(|_| bad())?,
        related: f[1].parse().map_err(|_| bad())?,
        total: f[2].parse().map_err(|_| bad())?,
    }))
}

/// Reads a report back from its per-week and summary files.
pub fn read_report<R1: Read, R2: Read>(per_week: R1, summary: R2) -> Result<EvalReport> {
    let mut lines = BufReader::new(summary).lines();
    if lines.next().transpose()?.as_deref() != Some(SUMMARY_HEADER) {
        return Err(parse_err(1, "bad summary header"));
    }
    let line = lines.next().transpose()?.ok_or_else(|| parse_err(2, "missing summary"))?;
    let f: Vec<&str> = line.split(',').collect();
    if f.len() != 15 {
        return Err(parse_err(2, "expected 15 summary fields"));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(2, "bad number"));
    let phi = f[0].parse().map_err(|_| parse_err(2, "bad phi"))?;
    let pearson = num(f[4])?;
    let smape = num(f[5])?;

    let mut weeks = Vec::new();
    for (k, line) in BufReader::new(per_week).lines().enumerate() {
        let line = line?;
        let no = k as u64 + 1;
        if k == 0 {
            if line != REPORT_HEADER {
                return Err(parse_err(1, "bad report header"));
            }
            continue;
        }
        let p: Vec<&str> = line.split(',').collect();
        if p.len() != 4 {
            return Err(parse_err(no, "expected 4 fields"));
        }
        let v = |s: &str| s.parse::<f64>().map_err(|_| parse_err(no, "bad number"));
        weeks.push(WeekRow {
            week: p[0].parse().map_err(|_| parse_err(no, "bad week"))?,
            predicted: v(p[1])?,
            actual: v(p[2])?,
        });
    }
    Ok(EvalReport {
        phi,
        pearson,
        smape,
        relevance_t: parse_ratio(&f[6..9])?,
        relevance_i: parse_ratio(&f[9..12])?,
        relevance_all: parse_ratio(&f[12..15])?,
        weeks,
    })
}

/// Line chart of predicted (red) against actual (black) rates.
pub fn render_svg(r: &EvalReport) -> String {
    let (w, h, pad) = (800.0, 400.0, 40.0);
    let n = r.weeks.len().max(2) as f64;
    let top = r
        .weeks
        .iter()
        .flat_map(|x| [x.predicted, x.actual])
        .fold(0.0f64, f64::max)
        .max(f64::MIN_POSITIVE);
    let line = |pick: fn(&WeekRow) -> f64| {
        let mut s = String::new();
        for (k, row) in r.weeks.iter().enumerate() {
            let x = pad + (w - 2.0 * pad) * k as f64 / (n - 1.0);
            let y = h - pad - (h - 2.0 * pad) * pick(row) / top;
            let _ = write!(s, "{x:.2},{y:.2} ");
        }
        s.trim_end().to_string()
    };
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <polyline fill=\"none\" stroke=\"black\" stroke-width=\"1.5\" points=\"{}\"/>\n\
         <polyline fill=\"none\" stroke=\"red\" stroke-width=\"1.5\" points=\"{}\"/>\n\
         <text x=\"{pad}\" y=\"20\" font-family=\"sans-serif\" font-size=\"12\">\
         weeks {}..{}  pearson {:.4}  smape {:.2}</text>\n</svg>\n",
        line(|r| r.actual),
        line(|r| r.predicted),
        r.first_week(),
        r.end_week(),
        r.pearson,
        r.smape
    )
}
