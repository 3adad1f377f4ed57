mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use common::oracles::{naive_aggregate, naive_contributions, naive_inclusion_exclusion};
use common::{all_configs, corpus_names, dims, fixture_record, incl_excl_fixture, run_small_grid};
use prefinetune::analysis::{
    corpus_contributions, emit_report, inclusion_exclusion, n_corpora_curves, parse_csv, read_report, render_csv,
    render_markdown, stratified_curves, write_reports, ContributionRow, CurvePoint, InclusionExclusionRow, PftGroup,
    ReportFormat, ReportRow, StratifiedPoint, Weighting, CONTRIBUTIONS_CSV, CURVES_CSV, INCL_EXCL_CSV, STRATIFIED_CSV,
};
use prefinetune::experiments::{TrialRecord, TrialStatus};
use prefinetune::Error;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TOL: f64 = 1e-12;

/// Every config, one English and one Mandarin speaker, two emotions, two k.
fn grid() -> &'static [TrialRecord] {
    static GRID: OnceLock<Vec<TrialRecord>> = OnceLock::new();
    GRID.get_or_init(|| run_small_grid(&all_configs(), &dims(&["eng-03", "man-06"], &["Happy", "Sad"], &[2, 8], 2), 1))
}

#[test]
fn curves_match_the_group_by_oracle() {
    let agg = n_corpora_curves(grid()).unwrap();
    let want = naive_aggregate(grid(), |r| Some((r.k, r.corpora.len()))).value;
    assert_eq!(agg.rows.len(), want.len());
    assert!(agg.warnings.is_empty(), "{:?}", agg.warnings);
    for p in &agg.rows {
        let w = want[&(p.k, p.n_corpora)];
        assert!((p.mean - w.mean).abs() < TOL && (p.stderr - w.stderr).abs() < TOL);
        assert_eq!(p.count, w.count);
    }
    // 1, 4, 6, 4, 1 configs × 2 speakers × 2 emotions × 2 trials
    let counts: Vec<usize> = agg.rows.iter().filter(|p| p.k == 2).map(|p| p.count).collect();
    assert_eq!(counts, [8, 32, 48, 32, 8]);
}

#[test]
fn contributions_match_the_oracle() {
    let agg = corpus_contributions(grid(), Weighting::Cell).unwrap();
    let want = naive_contributions(grid()).value;
    assert_eq!(agg.rows.len(), want.len());
    assert_eq!(agg.rows.len(), 2 * 4);
    for r in &agg.rows {
        assert!((r.delta - want[&(r.k, r.corpus.clone())]).abs() < TOL);
        // 8 of the 16 configs contain each corpus
        assert_eq!(r.count, 8 * 2 * 2 * 2);
    }
}

#[test]
fn record_weighting_equals_cell_weighting_on_a_balanced_grid() {
    let cell = corpus_contributions(grid(), Weighting::Cell).unwrap().rows;
    let record = corpus_contributions(grid(), Weighting::Record).unwrap().rows;
    for (a, b) in cell.iter().zip(&record) {
        assert_eq!((a.k, &a.corpus), (b.k, &b.corpus));
        assert!((a.delta - b.delta).abs() < 1e-9);
    }
}

#[test]
fn record_weighting_counts_records_on_an_unbalanced_grid() {
    let mut rs = vec![
        fixture_record(&[], "eng-01", "Happy", 2, 0, 0.5),
        fixture_record(&[], "eng-02", "Happy", 2, 0, 0.5),
        fixture_record(&["A"], "eng-01", "Happy", 2, 0, 0.9),
    ];
    for t in 0..3 {
        rs.push(fixture_record(&["A"], "eng-02", "Happy", 2, t, 0.6));
    }
    let cell = corpus_contributions(&rs, Weighting::Cell).unwrap().rows;
    let record = corpus_contributions(&rs, Weighting::Record).unwrap().rows;
    assert!((cell[0].delta - 0.25).abs() < TOL);
    assert!((record[0].delta - 0.175).abs() < TOL);
    assert_eq!(cell[0].count, 4);
}

#[test]
fn inclusion_exclusion_matches_the_oracle() {
    let agg = inclusion_exclusion(grid()).unwrap();
    let want = naive_inclusion_exclusion(grid(), &corpus_names()).value;
    assert_eq!(agg.rows.len(), want.len());
    for r in &agg.rows {
        let (f_in, f_ex) = want[&(r.k, r.corpus.clone())];
        assert!((r.f1_in - f_in).abs() < TOL && (r.f1_ex - f_ex).abs() < TOL);
        assert!((r.delta() - (f_in - f_ex)).abs() < TOL);
    }
}

#[test]
fn stratified_matches_the_oracle() {
    let agg = stratified_curves(grid()).unwrap();
    let full = {
        let mut v = corpus_names();
        v.sort();
        v
    };
    let want = naive_aggregate(grid(), |r| {
        let mut set = r.corpora.clone();
        set.sort();
        let group = if set.is_empty() {
            PftGroup::NoPft
        } else if set == full {
            PftGroup::AllPft
        } else {
            return None;
        };
        Some((r.language, r.emotion.clone(), group, r.k))
    })
    .value;
    assert_eq!(agg.rows.len(), 2 * 2 * 2 * 2);
    for p in &agg.rows {
        let w = want[&(p.language, p.emotion.clone(), p.config, p.k)];
        assert!((p.mean - w.mean).abs() < TOL);
        assert_eq!(p.count, w.count);
    }
}

#[test]
fn failed_records_are_ignored() {
    let mut rs = grid().to_vec();
    for r in grid().iter().take(20) {
        let mut bad = r.clone();
        bad.trial_index += 100;
        bad.status = TrialStatus::Failed;
        bad.macro_f1 = None;
        bad.per_class_f1 = None;
        bad.error = Some("boom".into());
        rs.push(bad);
    }
    assert_eq!(n_corpora_curves(&rs).unwrap(), n_corpora_curves(grid()).unwrap());
    assert_eq!(inclusion_exclusion(&rs).unwrap(), inclusion_exclusion(grid()).unwrap());
    let failed: Vec<TrialRecord> = rs.into_iter().filter(|r| !r.is_ok()).collect();
    assert!(matches!(n_corpora_curves(&failed), Err(Error::NoOkRecords)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn aggregates_ignore_record_order(seed in any::<u64>()) {
        let mut rs = grid().to_vec();
        rs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert_eq!(n_corpora_curves(&rs).unwrap(), n_corpora_curves(grid()).unwrap());
        prop_assert_eq!(
            corpus_contributions(&rs, Weighting::Cell).unwrap(),
            corpus_contributions(grid(), Weighting::Cell).unwrap()
        );
        prop_assert_eq!(inclusion_exclusion(&rs).unwrap(), inclusion_exclusion(grid()).unwrap());
        prop_assert_eq!(stratified_curves(&rs).unwrap(), stratified_curves(grid()).unwrap());
    }
}

fn round_trip<R: ReportRow + std::fmt::Debug>(rows: &[R]) -> Vec<R> {
    let text = render_csv(rows).unwrap();
    let back: Vec<R> = parse_csv(&text, Path::new("mem.csv")).unwrap();
    assert_eq!(render_csv(&back).unwrap(), text);
    back
}

#[test]
fn csv_round_trips_at_four_decimals() {
    let curves = n_corpora_curves(grid()).unwrap().rows;
    for (a, b) in curves.iter().zip(round_trip(&curves)) {
        assert!((a.mean - b.mean).abs() <= 5e-5 && a.count == b.count);
    }
    round_trip(&corpus_contributions(grid(), Weighting::Cell).unwrap().rows);
    round_trip(&inclusion_exclusion(grid()).unwrap().rows);
    round_trip(&stratified_curves(grid()).unwrap().rows);
    assert_eq!(CurvePoint::CSV_HEADER, ["k", "n_corpora", "mean", "stderr", "count"]);
    assert_eq!(ContributionRow::CSV_HEADER, ["k", "corpus", "delta", "count"]);
    assert_eq!(InclusionExclusionRow::CSV_HEADER, ["k", "corpus", "f1_in", "f1_ex", "delta"]);
    assert_eq!(StratifiedPoint::CSV_HEADER, ["language", "emotion", "config", "k", "mean", "count"]);
    assert!(parse_csv::<CurvePoint>("k,mean\n2,0.5\n", Path::new("x.csv")).is_err());
    assert!(parse_csv::<InclusionExclusionRow>("k,corpus,f1_in,f1_ex,delta\n2,A,0.6,0.5,0.3\n", Path::new("x.csv")).is_err());
}

#[test]
fn empty_reports_are_errors_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curves.csv");
    let err = emit_report::<CurvePoint>(&[], ReportFormat::Csv, &path).unwrap_err();
    assert!(matches!(err, Error::EmptyReport("curves")), "{err}");
    assert!(!path.exists());
    assert!(matches!(write_reports(&[], dir.path(), Weighting::Cell), Err(Error::NoOkRecords)));
}

#[test]
fn known_inclusion_exclusion_rows() {
    let rows = inclusion_exclusion(&incl_excl_fixture()).unwrap();
    let by: BTreeMap<String, &InclusionExclusionRow> = rows.rows.iter().map(|r| (r.corpus.clone(), r)).collect();
    let pod = by["MSP-PODCAST"];
    assert!((pod.f1_in - 0.6150).abs() < 1e-9 && (pod.f1_ex - 0.6272).abs() < 1e-9);
    assert!((pod.delta() + 0.0122).abs() < 1e-9);
    let iem = by["IEMOCAP"];
    assert!((iem.f1_in - 0.7010).abs() < 1e-9 && (iem.f1_ex - 0.6990).abs() < 1e-9);
    assert!((iem.delta() - 0.0020).abs() < 1e-9);
    assert_eq!(rows.rows.len(), 2);
    assert_eq!(rows.warnings.len(), 2);

    let md = render_markdown(&rows.rows);
    let lines: Vec<&str> = md.lines().collect();
    assert_eq!(lines[0], "| k | Corpus | F1_in | F1_ex | Δ |");
    assert_eq!(lines[1], "| --- | --- | --- | --- | --- |");
    assert!(lines.contains(&"| 2 | MSP-PODCAST | 0.6150 | 0.6272 | -0.0122 |"), "{md}");
    assert!(lines.contains(&"| 2 | IEMOCAP | 0.7010 | 0.6990 | +0.0020 |"), "{md}");
    let csv = render_csv(&rows.rows).unwrap();
    assert!(csv.contains("2,MSP-PODCAST,0.6150,0.6272,-0.0122\n"), "{csv}");
}

#[test]
fn write_reports_emits_every_table() {
    let dir = tempfile::tempdir().unwrap();
    let set = write_reports(grid(), dir.path(), Weighting::Cell).unwrap();
    assert_eq!(set.written.len(), 8);
    for name in [CURVES_CSV, CONTRIBUTIONS_CSV, INCL_EXCL_CSV, STRATIFIED_CSV] {
        assert!(dir.path().join(name).exists());
        assert!(dir.path().join(name).with_extension("md").exists());
    }
    let back: Vec<CurvePoint> = read_report(&dir.path().join(CURVES_CSV)).unwrap();
    assert_eq!(back.len(), 10);

    // a grid without the baseline config can't produce contributions
    let partial: Vec<TrialRecord> = grid().iter().filter(|r| !r.corpora.is_empty()).cloned().collect();
    let dir = tempfile::tempdir().unwrap();
    let set = write_reports(&partial, dir.path(), Weighting::Cell).unwrap();
    assert!(!dir.path().join(CONTRIBUTIONS_CSV).exists());
    assert!(set.warnings.iter().any(|w| w.contains("report skipped")));
}
