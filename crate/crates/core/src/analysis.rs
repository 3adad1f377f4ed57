//! Controlled aggregations over a results store and their CSV / markdown
//! renderings.
//!
//! All aggregations read ok records only. Values inside a group are summed
//! in sorted order, so the output does not depend on record order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Language;
use crate::experiments::TrialRecord;
use crate::metrics::mean_and_stderr;
use crate::{Error, Result};

pub const CURVES_CSV: &str = "curves.csv";
pub const CONTRIBUTIONS_CSV: &str = "contributions.csv";
pub const INCL_EXCL_CSV: &str = "incl_excl.csv";
pub const STRATIFIED_CSV: &str = "stratified.csv";

/// Rows plus the warnings raised for cells that had to be left out.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate<T> {
    pub rows: Vec<T>,
    pub warnings: Vec<String>,
}

impl<T> Aggregate<T> {
    fn new(rows: Vec<T>, warnings: Vec<String>) -> Self {
        for w in &warnings {
            log::warn!("{w}");
        }
        Aggregate { rows, warnings }
    }
}

/// How controlled differentials are averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Every (speaker, emotion) cell counts once.
    #[default]
    Cell,
    /// Every record counts once.
    Record,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub k: usize,
    pub n_corpora: usize,
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContributionRow {
    pub k: usize,
    pub corpus: String,
    pub delta: f64,
    /// Records with the corpus in their pre-finetuning set.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InclusionExclusionRow {
    pub k: usize,
    pub corpus: String,
    pub f1_in: f64,
    pub f1_ex: f64,
    delta: f64,
}

impl InclusionExclusionRow {
    pub fn new(k: usize, corpus: impl Into<String>, f1_in: f64, f1_ex: f64) -> Self {
        InclusionExclusionRow {
            k,
            corpus: corpus.into(),
            f1_in,
            f1_ex,
            delta: f1_in - f1_ex,
        }
    }

    /// `f1_in − f1_ex`.
    pub fn delta(&self) -> f64 {
        self.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PftGroup {
    NoPft,
    AllPft,
}

impl fmt::Display for PftGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PftGroup::NoPft => "No PFT",
            PftGroup::AllPft => "All PFT",
        })
    }
}

impl FromStr for PftGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "No PFT" => Ok(PftGroup::NoPft),
            "All PFT" => Ok(PftGroup::AllPft),
            other => Err(Error::InvalidArgument(format!("unknown config group `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StratifiedPoint {
    pub language: Language,
    pub emotion: String,
    pub config: PftGroup,
    pub k: usize,
    pub mean: f64,
    pub count: usize,
}

fn ok_records(records: &[TrialRecord]) -> Result<Vec<(&TrialRecord, f64)>> {
    let ok: Vec<_> = records.iter().filter_map(|r| r.f1().map(|f| (r, f))).collect();
    if ok.is_empty() {
        return Err(Error::NoOkRecords);
    }
    Ok(ok)
}

fn sorted_set(corpora: &[String]) -> Vec<String> {
    let set: BTreeSet<&String> = corpora.iter().collect();
    set.into_iter().cloned().collect()
}

fn universe(ok: &[(&TrialRecord, f64)]) -> Vec<String> {
    let all: BTreeSet<&String> = ok.iter().flat_map(|(r, _)| &r.corpora).collect();
    all.into_iter().cloned().collect()
}

fn mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

fn label(corpora: &[String]) -> String {
    if corpora.is_empty() {
        "none".into()
    } else {
        corpora.join("+")
    }
}

type Cell = (String, String);

/// Mean and standard error per `(k, number of corpora)`, pooled over every
/// record in the cell. Cells with no records are left out with a warning.
pub fn n_corpora_curves(records: &[TrialRecord]) -> Result<Aggregate<CurvePoint>> {
    let ok = ok_records(records)?;
    let max_n = universe(&ok).len();
    let mut groups: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (r, f) in &ok {
        groups.entry((r.k, sorted_set(&r.corpora).len())).or_default().push(*f);
    }
    let ks: BTreeSet<usize> = ok.iter().map(|(r, _)| r.k).collect();
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &k in &ks {
        for n in 0..=max_n {
            match groups.remove(&(k, n)) {
                Some(mut v) => {
                    v.sort_by(f64::total_cmp);
                    let (mean, stderr) = mean_and_stderr(&v)?;
                    rows.push(CurvePoint {
                        k,
                        n_corpora: n,
                        mean,
                        stderr,
                        count: v.len(),
                    });
                }
                None => warnings.push(format!("curves: no records for k={k} with {n} corpora")),
            }
        }
    }
    Ok(Aggregate::new(rows, warnings))
}

/// Controlled gain from each corpus: within every (speaker, emotion, k) cell,
/// the mean F1 of records whose pre-finetuning set contains the corpus minus
/// the mean F1 of the baseline records in the same cell, averaged across
/// cells (or records, see [`Weighting`]).
pub fn corpus_contributions(records: &[TrialRecord], weighting: Weighting) -> Result<Aggregate<ContributionRow>> {
    let ok = ok_records(records)?;
    let corpora = universe(&ok);
    let mut baseline: BTreeMap<(usize, Cell), Vec<f64>> = BTreeMap::new();
    for (r, f) in ok.iter().filter(|(r, _)| r.corpora.is_empty()) {
        baseline
            .entry((r.k, (r.speaker.clone(), r.emotion.clone())))
            .or_default()
            .push(*f);
    }
    let baseline: BTreeMap<(usize, Cell), f64> = baseline.into_iter().map(|(key, v)| (key, mean(v))).collect();
    let ks: BTreeSet<usize> = ok.iter().map(|(r, _)| r.k).collect();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    if corpora.is_empty() {
        warnings.push("contributions: store holds baseline records only".to_string());
    }
    for &k in &ks {
        for c in &corpora {
            let mut cells: BTreeMap<Cell, Vec<f64>> = BTreeMap::new();
            for (r, f) in ok.iter().filter(|(r, _)| r.k == k && r.corpora.contains(c)) {
                cells.entry((r.speaker.clone(), r.emotion.clone())).or_default().push(*f);
            }
            if cells.is_empty() {
                warnings.push(format!("contributions: no records for k={k} containing {c}"));
                continue;
            }
            let mut diffs = Vec::new();
            let mut count = 0;
            for (cell, values) in cells {
                let base = *baseline.get(&(k, cell.clone())).ok_or_else(|| Error::MissingBaseline {
                    k,
                    speaker: cell.0.clone(),
                    emotion: cell.1.clone(),
                })?;
                count += values.len();
                match weighting {
                    Weighting::Cell => diffs.push(mean(values) - base),
                    Weighting::Record => diffs.extend(values.into_iter().map(|v| v - base)),
                }
            }
            rows.push(ContributionRow {
                k,
                corpus: c.clone(),
                delta: mean(diffs),
                count,
            });
        }
    }
    Ok(Aggregate::new(rows, warnings))
}

/// For each corpus `c` and each k: controlled mean F1 of the config `{c}`
/// against the config holding every other corpus.
pub fn inclusion_exclusion(records: &[TrialRecord]) -> Result<Aggregate<InclusionExclusionRow>> {
    let ok = ok_records(records)?;
    let corpora = universe(&ok);
    let mut groups: BTreeMap<(usize, Vec<String>), BTreeMap<Cell, Vec<f64>>> = BTreeMap::new();
    for (r, f) in &ok {
        groups
            .entry((r.k, sorted_set(&r.corpora)))
            .or_default()
            .entry((r.speaker.clone(), r.emotion.clone()))
            .or_default()
            .push(*f);
    }
    let ks: BTreeSet<usize> = ok.iter().map(|(r, _)| r.k).collect();
    let empty = BTreeMap::new();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for &k in &ks {
        for c in &corpora {
            let included = vec![c.clone()];
            let excluded: Vec<String> = corpora.iter().filter(|x| *x != c).cloned().collect();
            let cells_in = groups.get(&(k, included.clone())).unwrap_or(&empty);
            let cells_ex = groups.get(&(k, excluded.clone())).unwrap_or(&empty);
            if cells_in.is_empty() && cells_ex.is_empty() {
                warnings.push(format!("inclusion/exclusion: no records for k={k} around {c}"));
                continue;
            }
            for (have, other, config) in [(cells_in, cells_ex, &excluded), (cells_ex, cells_in, &included)] {
                if let Some((speaker, emotion)) = have.keys().find(|cell| !other.contains_key(*cell)) {
                    return Err(Error::MissingConfig {
                        config: label(config),
                        k,
                        speaker: speaker.clone(),
                        emotion: emotion.clone(),
                    });
                }
            }
            let controlled = |cells: &BTreeMap<Cell, Vec<f64>>| mean(cells.values().map(|v| mean(v.clone())).collect());
            rows.push(InclusionExclusionRow::new(k, c.clone(), controlled(cells_in), controlled(cells_ex)));
        }
    }
    Ok(Aggregate::new(rows, warnings))
}

/// Mean F1 per (language, emotion, k) for the baseline and for the config
/// with every corpus. Missing strata are left out with a warning.
pub fn stratified_curves(records: &[TrialRecord]) -> Result<Aggregate<StratifiedPoint>> {
    let ok = ok_records(records)?;
    let full = universe(&ok);
    let mut groups: BTreeMap<(Language, String, PftGroup, usize), Vec<f64>> = BTreeMap::new();
    for (r, f) in &ok {
        let set = sorted_set(&r.corpora);
        let group = if set.is_empty() {
            PftGroup::NoPft
        } else if set == full {
            PftGroup::AllPft
        } else {
            continue;
        };
        groups
            .entry((r.language, r.emotion.clone(), group, r.k))
            .or_default()
            .push(*f);
    }
    let emotions: BTreeSet<&String> = ok.iter().map(|(r, _)| &r.emotion).collect();
    let ks: BTreeSet<usize> = ok.iter().map(|(r, _)| r.k).collect();
    let present: BTreeSet<Language> = ok.iter().map(|(r, _)| r.language).collect();

    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    if full.is_empty() {
        warnings.push("stratified: store holds baseline records only, no All PFT strata".to_string());
    }
    for language in [Language::English, Language::Mandarin] {
        if !present.contains(&language) {
            warnings.push(format!("stratified: no records for {language} speakers, strata omitted"));
            continue;
        }
        for emotion in &emotions {
            for group in [PftGroup::NoPft, PftGroup::AllPft] {
                if group == PftGroup::AllPft && full.is_empty() {
                    continue;
                }
                for &k in &ks {
                    let key = (language, (*emotion).clone(), group, k);
                    match groups.remove(&key) {
                        Some(v) => rows.push(StratifiedPoint {
                            language,
                            emotion: (*emotion).clone(),
                            config: group,
                            k,
                            count: v.len(),
                            mean: mean(v),
                        }),
                        None => warnings.push(format!("stratified: no records for {language}, {emotion}, {group}, k={k}")),
                    }
                }
            }
        }
    }
    Ok(Aggregate::new(rows, warnings))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

/// A row type with a fixed CSV schema and a markdown table layout.
pub trait ReportRow: Sized {
    const NAME: &'static str;
    const CSV_HEADER: &'static [&'static str];
    const MARKDOWN_HEADER: &'static [&'static str];

    fn csv_fields(&self) -> Vec<String>;

    fn markdown_fields(&self) -> Vec<String> {
        self.csv_fields()
    }

    fn from_csv_fields(fields: &[&str]) -> std::result::Result<Self, String>;
}

/// Four decimals, without a negative zero.
pub fn fmt4(x: f64) -> String {
    let s = format!("{x:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn parse<T: FromStr>(field: &str, name: &str) -> std::result::Result<T, String> {
    field.parse().map_err(|_| format!("bad {name} `{field}`"))
}

impl ReportRow for CurvePoint {
    const NAME: &'static str = "curves";
    const CSV_HEADER: &'static [&'static str] = &["k", "n_corpora", "mean", "stderr", "count"];
    const MARKDOWN_HEADER: &'static [&'static str] = &["k", "Corpora", "Mean F1", "Std. err.", "Trials"];

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.n_corpora.to_string(),
            fmt4(self.mean),
            fmt4(self.stderr),
            self.count.to_string(),
        ]
    }

    fn from_csv_fields(f: &[&str]) -> std::result::Result<Self, String> {
        Ok(CurvePoint {
            k: parse(f[0], "k")?,
            n_corpora: parse(f[1], "n_corpora")?,
            mean: parse(f[2], "mean")?,
            stderr: parse(f[3], "stderr")?,
            count: parse(f[4], "count")?,
        })
    }
}

impl ReportRow for ContributionRow {
    const NAME: &'static str = "contributions";
    const CSV_HEADER: &'static [&'static str] = &["k", "corpus", "delta", "count"];
    const MARKDOWN_HEADER: &'static [&'static str] = &["k", "Corpus", "ΔF1", "Trials"];

    fn csv_fields(&self) -> Vec<String> {
        vec![self.k.to_string(), self.corpus.clone(), fmt4(self.delta), self.count.to_string()]
    }

    fn markdown_fields(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.corpus.clone(),
            format!("{:+.4}", self.delta),
            self.count.to_string(),
        ]
    }

    fn from_csv_fields(f: &[&str]) -> std::result::Result<Self, String> {
        Ok(ContributionRow {
            k: parse(f[0], "k")?,
            corpus: f[1].to_string(),
            delta: parse(f[2], "delta")?,
            count: parse(f[3], "count")?,
        })
    }
}

impl ReportRow for InclusionExclusionRow {
    const NAME: &'static str = "inclusion/exclusion";
    const CSV_HEADER: &'static [&'static str] = &["k", "corpus", "f1_in", "f1_ex", "delta"];
    const MARKDOWN_HEADER: &'static [&'static str] = &["k", "Corpus", "F1_in", "F1_ex", "Δ"];

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.corpus.clone(),
            fmt4(self.f1_in),
            fmt4(self.f1_ex),
            fmt4(self.delta),
        ]
    }

    fn markdown_fields(&self) -> Vec<String> {
        vec![
            self.k.to_string(),
            self.corpus.clone(),
            fmt4(self.f1_in),
            fmt4(self.f1_ex),
            format!("{:+.4}", self.delta),
        ]
    }

    /// The delta column is recomputed from the two F1 columns; a file whose
    /// delta disagrees beyond rounding is rejected.
    fn from_csv_fields(f: &[&str]) -> std::result::Result<Self, String> {
        let row = InclusionExclusionRow::new(parse(f[0], "k")?, f[1], parse(f[2], "f1_in")?, parse(f[3], "f1_ex")?);
        let written: f64 = parse(f[4], "delta")?;
        if (written - row.delta).abs() > 1.5e-4 {
            return Err(format!("delta {written} does not match f1_in - f1_ex = {}", row.delta));
        }
        Ok(row)
    }
}

impl ReportRow for StratifiedPoint {
    const NAME: &'static str = "stratified";
    const CSV_HEADER: &'static [&'static str] = &["language", "emotion", "config", "k", "mean", "count"];
    const MARKDOWN_HEADER: &'static [&'static str] = &["Language", "Emotion", "Config", "k", "Mean F1", "Trials"];

    fn csv_fields(&self) -> Vec<String> {
        vec![
            self.language.to_string(),
            self.emotion.clone(),
            self.config.to_string(),
            self.k.to_string(),
            fmt4(self.mean),
            self.count.to_string(),
        ]
    }

    fn from_csv_fields(f: &[&str]) -> std::result::Result<Self, String> {
        Ok(StratifiedPoint {
            language: parse(f[0], "language")?,
            emotion: f[1].to_string(),
            config: parse(f[2], "config")?,
            k: parse(f[3], "k")?,
            mean: parse(f[4], "mean")?,
            count: parse(f[5], "count")?,
        })
    }
}

pub fn render_csv<R: ReportRow>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(R::CSV_HEADER)?;
    for r in rows {
        w.write_record(r.csv_fields())?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn render_markdown<R: ReportRow>(rows: &[R]) -> String {
    let line = |cells: Vec<String>| format!("| {} |\n", cells.join(" | "));
    let mut out = line(R::MARKDOWN_HEADER.iter().map(|s| s.to_string()).collect());
    out.push_str(&line(R::MARKDOWN_HEADER.iter().map(|_| "---".to_string()).collect()));
    for r in rows {
        out.push_str(&line(r.markdown_fields()));
    }
    out
}

/// Parses CSV written by [`render_csv`]; `origin` only labels errors.
pub fn parse_csv<R: ReportRow>(text: &str, origin: &Path) -> Result<Vec<R>> {
    let what = "report csv";
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != R::CSV_HEADER {
        return Err(Error::format(
            what,
            origin,
            format!("expected columns {:?}, found {header:?}", R::CSV_HEADER),
        ));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let fields: Vec<&str> = rec.iter().collect();
            R::from_csv_fields(&fields).map_err(|e| Error::format(what, origin, format!("row {}: {e}", i + 1)))
        })
        .collect()
}

/// Writes `rows` to `path`. Empty input is an error and writes nothing.
pub fn emit_report<R: ReportRow>(rows: &[R], format: ReportFormat, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyReport(R::NAME));
    }
    let text = match format {
        ReportFormat::Csv => render_csv(rows)?,
        ReportFormat::Markdown => render_markdown(rows),
    };
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_report<R: ReportRow>(path: &Path) -> Result<Vec<R>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReportSet {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn emit_both<R: ReportRow>(rows: &[R], dir: &Path, csv_name: &str, set: &mut ReportSet) -> Result<()> {
    if rows.is_empty() {
        set.warnings.push(format!("{} report skipped: no rows", R::NAME));
        return Ok(());
    }
    let csv_path = dir.join(csv_name);
    let md_path = csv_path.with_extension("md");
    emit_report(rows, ReportFormat::Csv, &csv_path)?;
    emit_report(rows, ReportFormat::Markdown, &md_path)?;
    set.written.extend([csv_path, md_path]);
    Ok(())
}

/// Writes all four reports as CSV plus a markdown table each. A report whose
/// controlled cells are incomplete (a partial grid) is skipped with a
/// warning; a store without ok records is an error.
pub fn write_reports(records: &[TrialRecord], dir: &Path, weighting: Weighting) -> Result<ReportSet> {
    ok_records(records)?;
    let mut set = ReportSet::default();
    let keep = |agg: Result<Vec<String>>, set: &mut ReportSet| -> Result<()> {
        match agg {
            Ok(w) => set.warnings.extend(w),
            Err(e @ (Error::MissingBaseline { .. } | Error::MissingConfig { .. })) => {
                log::warn!("report skipped: {e}");
                set.warnings.push(format!("report skipped: {e}"));
            }
            Err(e) => return Err(e),
        }
        Ok(())
    };

    let curves = n_corpora_curves(records)?;
    emit_both(&curves.rows, dir, CURVES_CSV, &mut set)?;
    keep(Ok(curves.warnings), &mut set)?;

    let contributions = corpus_contributions(records, weighting);
    if let Ok(agg) = &contributions {
        emit_both(&agg.rows, dir, CONTRIBUTIONS_CSV, &mut set)?;
    }
    keep(contributions.map(|a| a.warnings), &mut set)?;

    let incl_excl = inclusion_exclusion(records);
    if let Ok(agg) = &incl_excl {
        emit_both(&agg.rows, dir, INCL_EXCL_CSV, &mut set)?;
    }
    keep(incl_excl.map(|a| a.warnings), &mut set)?;

    let stratified = stratified_curves(records)?;
    emit_both(&stratified.rows, dir, STRATIFIED_CSV, &mut set)?;
    keep(Ok(stratified.warnings), &mut set)?;
    Ok(set)
}
