//! Corpus ingestion, the temporal train/test split, relevance labels and
//! the seeded planted-model generator used as a stand-in for real search
//! logs.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{self, RateSeries, TARGET_ID};

/// Indexed access to candidate series, shared by ranking, selection and
/// prediction. Implementations must be safe to read from many threads.
pub trait CandidateSource: Sync {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn id(&self, index: usize) -> Cow<'_, str>;

    fn candidate(&self, index: usize) -> Result<Cow<'_, RateSeries>>;

    fn index_of(&self, id: &str) -> Option<usize>;

    /// Weeks `first..end` of candidate `id`.
    fn window(&self, id: &str, first: i64, end: i64) -> Result<RateSeries> {
        let index = self
            .index_of(id)
            .ok_or_else(|| Error::MissingCandidate(id.to_string()))?;
        self.candidate(index)?
            .window(first, end)
            .ok_or_else(|| Error::InsufficientHistory {
                id: id.to_string(),
                week: first,
            })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SourceManifest {
    pub target_path: Option<PathBuf>,
    pub candidates_path: Option<PathBuf>,
    pub target_rows: usize,
    pub candidate_rows: usize,
}

/// A target series plus an in-memory candidate collection.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub target: RateSeries,
    candidates: Vec<RateSeries>,
    by_id: HashMap<String, usize>,
    pub manifest: SourceManifest,
}

impl Corpus {
    pub fn new(target: RateSeries, candidates: Vec<RateSeries>) -> Result<Self> {
        let mut by_id = HashMap::with_capacity(candidates.len());
        for (i, c) in candidates.iter().enumerate() {
            if c.id() == TARGET_ID || by_id.insert(c.id().to_string(), i).is_some() {
                return Err(Error::DuplicateId(c.id().to_string()));
            }
        }
        let manifest = SourceManifest {
            target_rows: target.len(),
            candidate_rows: candidates.iter().map(RateSeries::len).sum(),
            ..Default::default()
        };
        Ok(Self {
            target,
            candidates,
            by_id,
            manifest,
        })
    }

    pub fn candidates(&self) -> &[RateSeries] {
        &self.candidates
    }

    /// Target week interval `first..end`.
    pub fn week_range(&self) -> (i64, i64) {
        (self.target.start_week(), self.target.end_week())
    }
}

impl CandidateSource for Corpus {
    fn len(&self) -> usize {
        self.candidates.len()
    }

    fn id(&self, index: usize) -> Cow<'_, str> {
        Cow::Borrowed(self.candidates[index].id())
    }

    fn candidate(&self, index: usize) -> Result<Cow<'_, RateSeries>> {
        Ok(Cow::Borrowed(&self.candidates[index]))
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }
}

/// Read-only view of a source restricted to weeks `first..end`.
#[derive(Debug, Clone, Copy)]
pub struct WeekWindow<'a, S: CandidateSource + ?Sized> {
    inner: &'a S,
    pub first: i64,
    pub end: i64,
}

impl<'a, S: CandidateSource + ?Sized> WeekWindow<'a, S> {
    pub fn new(inner: &'a S, first: i64, end: i64) -> Self {
        Self { inner, first, end }
    }
}

impl<S: CandidateSource + ?Sized> CandidateSource for WeekWindow<'_, S> {
    fn len(&self) -> usize {
        self.inner.len()
    }

    fn id(&self, index: usize) -> Cow<'_, str> {
        self.inner.id(index)
    }

    fn candidate(&self, index: usize) -> Result<Cow<'_, RateSeries>> {
        let full = self.inner.candidate(index)?;
        full.window(self.first, self.end)
            .map(Cow::Owned)
            .ok_or(Error::SeriesTooShort { len: 0, needed: 1 })
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        self.inner.index_of(id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub cycle: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            cycle: crate::decompose::DEFAULT_CYCLE,
        }
    }
}

/// Week boundaries of a temporal split: train `first..boundary`,
/// test `boundary..end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub first: i64,
    pub boundary: i64,
    pub end: i64,
}

impl SplitRanges {
    pub fn train_len(&self) -> usize {
        (self.boundary - self.first) as usize
    }

    pub fn test_len(&self) -> usize {
        (self.end - self.boundary) as usize
    }

    pub fn train_target(&self, target: &RateSeries) -> RateSeries {
        target.window(self.first, self.boundary).expect("validated split")
    }

    pub fn test_target(&self, target: &RateSeries) -> RateSeries {
        target.window(self.boundary, self.end).expect("validated split")
    }

    pub fn train_view<'a, S: CandidateSource + ?Sized>(&self, source: &'a S) -> WeekWindow<'a, S> {
        WeekWindow::new(source, self.first, self.boundary)
    }

    /// Candidate history up to the end of the test range. Pre-boundary weeks
    /// are only read as trailing-average warm-up.
    pub fn test_view<'a, S: CandidateSource + ?Sized>(&self, source: &'a S) -> WeekWindow<'a, S> {
        WeekWindow::new(source, i64::MIN / 4, self.end)
    }
}

/// Splits the target's week range: the first `floor(fraction * T)` weeks
/// train, the rest test.
pub fn split_ranges(target: &RateSeries, spec: &SplitSpec) -> Result<SplitRanges> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let total = target.len();
    let train = (spec.train_fraction * total as f64).floor() as usize;
    let test = total - train;
    // training needs a warm-up cycle plus one full seasonal cycle
    if train < 2 * spec.cycle || test < spec.cycle {
        return Err(Error::DegenerateSplit {
            train,
            test,
            cycle: spec.cycle,
        });
    }
    let first = target.start_week();
    Ok(SplitRanges {
        first,
        boundary: first + train as i64,
        end: first + total as i64,
    })
}

/// Non-copying train and test views of a corpus.
pub fn split<'a>(
    c: &'a Corpus,
    spec: &SplitSpec,
) -> Result<(SplitRanges, WeekWindow<'a, Corpus>, WeekWindow<'a, Corpus>)> {
    let ranges = split_ranges(&c.target, spec)?;
    Ok((ranges, ranges.train_view(c), ranges.test_view(c)))
}

fn csv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

fn parse_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(io) => Error::Io(io.to_string()),
        _ => Error::ParseError {
            line,
            message: e.to_string(),
        },
    }
}

fn expect_header<R: Read>(rdr: &mut csv::Reader<R>, want: &[&str]) -> Result<()> {
    let headers = rdr.headers().map_err(parse_err)?;
    if headers.iter().ne(want.iter().copied()) {
        return Err(Error::ParseError {
            line: 1,
            message: format!("expected header `{}`", want.join(",")),
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::ParseError {
            line,
            message: format!("bad field {}", i + 1),
        })
}

fn rate_field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<f64> {
    let v: f64 = field(rec, i, line)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::RangeError { line });
    }
    Ok(v)
}

/// Reads a `week,rate` file.
pub fn read_target<R: Read>(r: R, id: &str) -> Result<RateSeries> {
    let mut rdr = csv_reader(r);
    expect_header(&mut rdr, &["week", "rate"])?;
    let mut start = None;
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(parse_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let week: i64 = field(&rec, 0, line)?;
        let rate = rate_field(&rec, 1, line)?;
        let first = *start.get_or_insert(week);
        if week < 0 || week != first + values.len() as i64 {
            return Err(Error::ParseError {
                line,
                message: format!("week {week} out of sequence"),
            });
        }
        values.push(rate);
    }
    let start = start.ok_or(Error::ParseError {
        line: 1,
        message: "no rows".into(),
    })?;
    RateSeries::new(id, start, values)
}

/// Reads a long-format `term_id,week,rate` file, rows grouped by term.
pub fn read_candidates<R: Read>(r: R) -> Result<Vec<RateSeries>> {
    let mut rdr = csv_reader(r);
    expect_header(&mut rdr, &["term_id", "week", "rate"])?;
    let mut out: Vec<RateSeries> = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    let mut current: Option<(String, i64, Vec<f64>)> = None;
    let flush = |cur: Option<(String, i64, Vec<f64>)>, out: &mut Vec<RateSeries>| -> Result<()> {
        if let Some((id, start, values)) = cur {
            out.push(RateSeries::new(id, start, values)?);
        }
        Ok(())
    };
    for rec in rdr.records() {
        let rec = rec.map_err(parse_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id = rec.get(0).unwrap_or_default();
        if id.is_empty() {
            return Err(Error::ParseError {
                line,
                message: "empty term_id".into(),
            });
        }
        let week: i64 = field(&rec, 1, line)?;
        let rate = rate_field(&rec, 2, line)?;
        match &mut current {
            Some((cid, start, values)) if cid == id => {
                if week != *start + values.len() as i64 {
                    return Err(Error::ParseError {
                        line,
                        message: format!("week {week} out of sequence for `{id}`"),
                    });
                }
                values.push(rate);
            }
            _ => {
                if seen.insert(id.to_string(), ()).is_some() || id == TARGET_ID {
                    return Err(Error::DuplicateId(id.to_string()));
                }
                if week < 0 {
                    return Err(Error::ParseError {
                        line,
                        message: "negative week".into(),
                    });
                }
                flush(current.take(), &mut out)?;
                current = Some((id.to_string(), week, vec![rate]));
            }
        }
    }
    flush(current, &mut out)?;
    Ok(out)
}

pub fn load_corpus(target_path: &Path, candidates_path: &Path) -> Result<Corpus> {
    let target = read_target(File::open(target_path)?, TARGET_ID)?;
    let candidates = read_candidates(File::open(candidates_path)?)?;
    let mut corpus = Corpus::new(target, candidates)?;
    corpus.manifest.target_path = Some(target_path.to_path_buf());
    corpus.manifest.candidates_path = Some(candidates_path.to_path_buf());
    Ok(corpus)
}

pub fn write_target<W: Write>(w: W, s: &RateSeries) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "week,rate")?;
    for (i, v) in s.values().iter().enumerate() {
        writeln!(w, "{},{}", s.start_week() + i as i64, v)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_candidates<'a, W: Write>(
    w: W,
    candidates: impl IntoIterator<Item = &'a RateSeries>,
) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "term_id,week,rate")?;
    for c in candidates {
        for (i, v) in c.values().iter().enumerate() {
            writeln!(w, "{},{},{}", c.id(), c.start_week() + i as i64, v)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_corpus(c: &Corpus, target_path: &Path, candidates_path: &Path) -> Result<()> {
    write_target(File::create(target_path)?, &c.target)?;
    write_candidates(File::create(candidates_path)?, c.candidates())
}

/// Optional `term_id,display` sidecar naming each term.
pub fn read_display_names<R: Read>(r: R) -> Result<BTreeMap<String, String>> {
    let mut rdr = csv_reader(r);
    expect_header(&mut rdr, &["term_id", "display"])?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec.map_err(parse_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id: String = field(&rec, 0, line)?;
        let name: String = field(&rec, 1, line)?;
        out.insert(id, name);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relevance {
    Related,
    Unrelated,
}

impl Relevance {
    pub fn as_str(self) -> &'static str {
        match self {
            Relevance::Related => "related",
            Relevance::Unrelated => "unrelated",
        }
    }
}

pub type Labels = BTreeMap<String, Relevance>;

pub fn read_labels<R: Read>(r: R) -> Result<Labels> {
    let mut buf = String::new();
    let mut r = r;
    r.read_to_string(&mut buf)?;
    if buf.trim().is_empty() {
        return Ok(Labels::new());
    }
    let mut rdr = csv_reader(buf.as_bytes());
    expect_header(&mut rdr, &["term_id", "label"])?;
    let mut out = Labels::new();
    for rec in rdr.records() {
        let rec = rec.map_err(parse_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let id: String = field(&rec, 0, line)?;
        let label = match rec.get(1) {
            Some("related") => Relevance::Related,
            Some("unrelated") => Relevance::Unrelated,
            other => {
                return Err(Error::ParseError {
                    line,
                    message: format!("unknown label {:?}", other.unwrap_or_default()),
                })
            }
        };
        out.insert(id, label);
    }
    Ok(out)
}

pub fn load_labels(path: &Path) -> Result<Labels> {
    read_labels(File::open(path)?)
}

pub fn write_labels<W: Write>(w: W, labels: &Labels) -> Result<()> {
    let mut w = BufWriter::new(w);
    writeln!(w, "term_id,label")?;
    for (id, l) in labels {
        writeln!(w, "{},{}", id, l.as_str())?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Planted generator
// ---------------------------------------------------------------------------

/// Parameters of the synthetic corpus. Components are generated in logit
/// space as `trend * seasonal * irregular`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub seed: u64,
    pub n_weeks: usize,
    pub cycle: usize,
    /// Share the target's trend, seasonal and irregular up to noise.
    pub n_related: usize,
    /// Share the target's seasonal pattern only.
    pub n_decoy: usize,
    /// Share the target's trend and irregular but follow an orthogonal
    /// seasonal pattern.
    pub n_gate_decoy: usize,
    /// Independent in every component.
    pub n_noise: usize,
    /// Related candidates lead the target by this many weeks.
    pub lead_weeks: usize,
    pub base_rate: f64,
    /// Standard deviation of the weekly random-walk step of the logit trend.
    pub trend_step: f64,
    /// Peak relative deviation of the seasonal factor from 1.
    pub seasonal_amplitude: f64,
    /// Standard deviation of the irregular factor around 1.
    pub irregular_sd: f64,
    pub irregular_ar: f64,
    /// Random-walk step of the private trend drift of related candidates.
    pub related_trend_noise: f64,
    /// Irregular noise added to related candidates.
    pub related_irregular_noise: f64,
    /// Irregular noise added to gate decoys.
    pub gate_irregular_noise: f64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        Self {
            seed: 42,
            n_weeks: 416,
            cycle: 52,
            n_related: 5,
            n_decoy: 20,
            n_gate_decoy: 0,
            n_noise: 200,
            lead_weeks: 0,
            base_rate: 0.01,
            trend_step: 0.01,
            seasonal_amplitude: 0.25,
            irregular_sd: 0.03,
            irregular_ar: 0.3,
            related_trend_noise: 0.002,
            related_irregular_noise: 0.015,
            gate_irregular_noise: 0.003,
        }
    }
}

impl PlantedSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidSpec(m.to_string()));
        if self.cycle < 2 {
            return bad("cycle must be at least 2");
        }
        if self.n_weeks <= 2 * self.cycle {
            return bad("n_weeks must exceed two cycles");
        }
        if !(self.base_rate > 0.0 && self.base_rate < 0.5) {
            return bad("base_rate must lie in (0, 0.5)");
        }
        let nonneg = [
            self.trend_step,
            self.irregular_sd,
            self.related_trend_noise,
            self.related_irregular_noise,
            self.gate_irregular_noise,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("noise levels must be finite and non-negative");
        }
        if !(0.0..0.9).contains(&self.seasonal_amplitude) {
            return bad("seasonal_amplitude must lie in [0, 0.9)");
        }
        if !(0.0..1.0).contains(&self.irregular_ar) {
            return bad("irregular_ar must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn n_candidates(&self) -> usize {
        self.n_related + self.n_decoy + self.n_gate_decoy + self.n_noise
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantedRole {
    Related,
    Decoy,
    GateDecoy,
    Noise,
}

impl PlantedRole {
    pub fn relevance(self) -> Relevance {
        match self {
            PlantedRole::Related => Relevance::Related,
            _ => Relevance::Unrelated,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlantedRole::Related => "related",
            PlantedRole::Decoy => "decoy",
            PlantedRole::GateDecoy => "gatedecoy",
            PlantedRole::Noise => "noise",
        }
    }
}

/// Generator-side truth about each candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub roles: BTreeMap<String, PlantedRole>,
}

impl GroundTruth {
    pub fn labels(&self) -> Labels {
        self.roles
            .iter()
            .map(|(id, r)| (id.clone(), r.relevance()))
            .collect()
    }

    pub fn ids_with(&self, role: PlantedRole) -> Vec<String> {
        self.roles
            .iter()
            .filter(|(_, r)| **r == role)
            .map(|(id, _)| id.clone())
            .collect()
    }
}

/// Lazily generated planted corpus: each candidate is regenerated from its
/// own RNG stream on demand, so arbitrarily large corpora stream in O(T)
/// memory per reader.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    spec: PlantedSpec,
    /// Target components on weeks `0..n_weeks + lead_weeks`.
    trend: Vec<f64>,
    irregular: Vec<f64>,
    target: RateSeries,
}

const ROLE_PREFIXES: [(&str, PlantedRole); 4] = [
    ("rel", PlantedRole::Related),
    ("dec", PlantedRole::Decoy),
    ("gate", PlantedRole::GateDecoy),
    ("noise", PlantedRole::Noise),
];

impl PlantedCorpus {
    pub fn new(spec: PlantedSpec) -> Result<Self> {
        spec.validate()?;
        let span = spec.n_weeks + spec.lead_weeks;
        let mut rng = stream_rng(spec.seed, 0);
        let base = series::logit_value(spec.base_rate);
        let trend = random_walk(&mut rng, span, base, spec.trend_step);
        let irregular = ar_factor(&mut rng, span, spec.irregular_sd, spec.irregular_ar);
        let values = (0..spec.n_weeks)
            .map(|w| {
                let l = trend[w] * target_seasonal(&spec, w as i64) * irregular[w];
                series::logistic(l)
            })
            .collect();
        let target = RateSeries::new(TARGET_ID, 0, values)?;
        Ok(Self {
            spec,
            trend,
            irregular,
            target,
        })
    }

    pub fn spec(&self) -> &PlantedSpec {
        &self.spec
    }

    pub fn target(&self) -> &RateSeries {
        &self.target
    }

    pub fn role(&self, index: usize) -> PlantedRole {
        self.locate(index).0
    }

    fn locate(&self, index: usize) -> (PlantedRole, usize) {
        let s = &self.spec;
        let counts = [s.n_related, s.n_decoy, s.n_gate_decoy, s.n_noise];
        let mut rest = index;
        for ((_, role), n) in ROLE_PREFIXES.iter().zip(counts) {
            if rest < n {
                return (*role, rest);
            }
            rest -= n;
        }
        panic!("candidate index {index} out of range");
    }

    pub fn ground_truth(&self) -> GroundTruth {
        GroundTruth {
            roles: (0..self.len())
                .map(|i| (self.id(i).into_owned(), self.role(i)))
                .collect(),
        }
    }

    fn generate(&self, index: usize) -> Result<RateSeries> {
        let s = &self.spec;
        let (role, _) = self.locate(index);
        let mut rng = stream_rng(s.seed, index as u64 + 1);
        let n = s.n_weeks;
        let lead = s.lead_weeks;
        let base = series::logit_value(s.base_rate);
        // candidate level offset in logit units; keeps logits well below 0
        let offset: f64 = rng.random_range(-0.8..0.8);
        let logits: Vec<f64> = match role {
            PlantedRole::Related => {
                let drift = random_walk(&mut rng, n, 0.0, s.related_trend_noise);
                let noise = white(&mut rng, n, s.related_irregular_noise);
                (0..n)
                    .map(|w| {
                        let src = w + lead;
                        (self.trend[src] + offset + drift[w])
                            * target_seasonal(s, src as i64)
                            * (self.irregular[src] + noise[w])
                    })
                    .collect()
            }
            PlantedRole::Decoy => {
                let trend = random_walk(&mut rng, n, base + offset, s.trend_step);
                let irr = ar_factor(&mut rng, n, s.irregular_sd, s.irregular_ar);
                (0..n)
                    .map(|w| trend[w] * target_seasonal(s, w as i64) * irr[w])
                    .collect()
            }
            PlantedRole::GateDecoy => {
                let noise = white(&mut rng, n, s.gate_irregular_noise);
                (0..n)
                    .map(|w| {
                        (self.trend[w] + offset)
                            * orthogonal_seasonal(s, w as i64)
                            * (self.irregular[w] + noise[w])
                    })
                    .collect()
            }
            PlantedRole::Noise => {
                let trend = random_walk(&mut rng, n, base + offset, s.trend_step);
                let irr = ar_factor(&mut rng, n, s.irregular_sd, s.irregular_ar);
                let harmonic = rng.random_range(1..=3) as f64;
                let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let amp = s.seasonal_amplitude * rng.random_range(0.2..1.0);
                let m = s.cycle as f64;
                (0..n)
                    .map(|w| {
                        let x = std::f64::consts::TAU * harmonic * w as f64 / m + phase;
                        trend[w] * (1.0 + amp * x.cos()) * irr[w]
                    })
                    .collect()
            }
        };
        RateSeries::new(
            self.id(index),
            0,
            logits.into_iter().map(series::logistic).collect(),
        )
    }

    /// Generates every candidate into an in-memory corpus.
    pub fn materialize(&self) -> Result<Corpus> {
        let candidates = (0..self.len())
            .map(|i| self.generate(i))
            .collect::<Result<Vec<_>>>()?;
        Corpus::new(self.target.clone(), candidates)
    }
}

impl CandidateSource for PlantedCorpus {
    fn len(&self) -> usize {
        self.spec.n_candidates()
    }

    fn id(&self, index: usize) -> Cow<'_, str> {
        let (role, k) = self.locate(index);
        let prefix = ROLE_PREFIXES
            .iter()
            .find(|(_, r)| *r == role)
            .map(|(p, _)| *p)
            .unwrap_or("x");
        Cow::Owned(format!("{prefix}_{k:06}"))
    }

    fn candidate(&self, index: usize) -> Result<Cow<'_, RateSeries>> {
        self.generate(index).map(Cow::Owned)
    }

    fn index_of(&self, id: &str) -> Option<usize> {
        let (prefix, num) = id.split_once('_')?;
        let k: usize = num.parse().ok()?;
        let s = &self.spec;
        let counts = [s.n_related, s.n_decoy, s.n_gate_decoy, s.n_noise];
        let mut offset = 0;
        for ((p, _), n) in ROLE_PREFIXES.iter().zip(counts) {
            if *p == prefix {
                return (k < n && self.id(offset + k) == id).then_some(offset + k);
            }
            offset += n;
        }
        None
    }
}

/// Materialized planted corpus plus its ground truth.
pub fn generate_planted(spec: &PlantedSpec) -> Result<(Corpus, GroundTruth)> {
    let planted = PlantedCorpus::new(spec.clone())?;
    Ok((planted.materialize()?, planted.ground_truth()))
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_walk(rng: &mut ChaCha8Rng, n: usize, start: f64, step: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, step.max(0.0)).expect("finite step");
    let mut x = start;
    (0..n)
        .map(|_| {
            let v = x;
            x += normal.sample(rng);
            v
        })
        .collect()
}

fn white(rng: &mut ChaCha8Rng, n: usize, sd: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sd.max(0.0)).expect("finite sd");
    (0..n).map(|_| normal.sample(rng)).collect()
}

/// `1 + e_t` with `e` a stationary AR(1) process of standard deviation `sd`.
fn ar_factor(rng: &mut ChaCha8Rng, n: usize, sd: f64, ar: f64) -> Vec<f64> {
    let innovation = Normal::new(0.0, sd * (1.0 - ar * ar).sqrt()).expect("finite sd");
    let mut e = Normal::new(0.0, sd).expect("finite sd").sample(rng);
    (0..n)
        .map(|_| {
            let v = 1.0 + e;
            e = ar * e + innovation.sample(rng);
            v
        })
        .collect()
}

/// First two harmonics, peak deviation equal to the amplitude.
fn target_seasonal(spec: &PlantedSpec, week: i64) -> f64 {
    let x = std::f64::consts::TAU * week.rem_euclid(spec.cycle as i64) as f64 / spec.cycle as f64;
    let h = x.cos() + 0.5 * (2.0 * x - 0.8).cos();
    1.0 + spec.seasonal_amplitude * h / 1.45
}

/// Third harmonic: uncorrelated with the first two over a full cycle.
fn orthogonal_seasonal(spec: &PlantedSpec, week: i64) -> f64 {
    let x = std::f64::consts::TAU * week.rem_euclid(spec.cycle as i64) as f64 / spec.cycle as f64;
    1.0 + spec.seasonal_amplitude * (3.0 * x).sin()
}
