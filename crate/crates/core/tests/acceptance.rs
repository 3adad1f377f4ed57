//! One test per acceptance criterion. `cargo test --test acceptance` prints
//! a pass/fail line for each; `-- --nocapture` adds the measured values.

mod common;

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::time::Instant;

use common::oracles::{exhaustive_constant_baseline, finite_difference, naive_aggregate, naive_macro_f1};
use common::{all_configs, check_fewshot_contract, context, dims, incl_excl_fixture, suite, train_models};
use prefinetune::analysis::{fmt4, inclusion_exclusion, n_corpora_curves, render_markdown};
use prefinetune::cli::RunConfig;
use prefinetune::data::{generate_suite, Corpus, Language, LabelSpace, Split, Utterance};
use prefinetune::experiments::{
    load_models, load_store, plan_grid, prefinetune_all, run_grid, RunOptions, TrialRecord, TrialStatus,
};
use prefinetune::kernel::{backward, grad_check, EncoderParams, GradSample, HeadParams, Matrix, ModelState, TaskId, Vector};
use prefinetune::metrics::{constant_baseline, macro_f1};
use prefinetune::sampler::{trial_seed, FEW_SHOT_KS};
use prefinetune::training::{scaled_loss, validation_loss};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EXACT: f64 = 1e-12;
const GRAD_REL: f64 = 1e-4;
const TREND_GAIN_K2: f64 = 0.05;
const BASELINE_RANGE: (f64, f64) = (0.40, 0.65);

#[test]
fn c1_plan_count_exactness() {
    let config = RunConfig::default();
    let start = Instant::now();
    let plan = config.plan().unwrap();
    let secs = start.elapsed().as_secs_f64();
    println!("c1: {} trials planned in {secs:.3}s", plan.len());
    assert_eq!(plan.len(), 33_600);
    assert!(secs < 1.0, "planning took {secs}s");

    let configs = config.configs().unwrap();
    let data = generate_suite(&config.synth).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = prefinetune_all(&configs, &data.pretraining, &config.prefinetune_template(), dir.path(), config.threads()).unwrap();
    let files = std::fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "ckpt"))
        .count();
    println!("c1: {} checkpoints, {files} files", summary.manifest.entries.len());
    assert_eq!(summary.manifest.entries.len(), 16);
    assert_eq!(files, 16);
}

#[test]
fn c2_scaled_loss_exactness() {
    let one = scaled_loss(2f64.ln(), 2).unwrap();
    assert_eq!(one, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = rng.random_range(0.0..20.0);
        let n = rng.random_range(2..64usize);
        worst = worst.max((scaled_loss(x, n).unwrap() - x / (n as f64).ln()).abs());
    }
    println!("c2: scaled_loss(ln 2, 2) = {one}, worst deviation over 100 cases {worst:e}");
    assert!(worst < EXACT);
}

fn random_model(rng: &mut ChaCha8Rng, input: usize, hidden: usize, n: usize) -> ModelState {
    let mut vals = |len: usize| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<f64>>();
    let enc = EncoderParams::new(
        Matrix::new(hidden, input, vals(hidden * input)).unwrap(),
        Vector::new(vals(hidden)).unwrap(),
    )
    .unwrap();
    let mut model = ModelState::new(enc);
    let head = HeadParams::new(TaskId::new("t"), Matrix::new(n, hidden, vals(n * hidden)).unwrap(), Vector::new(vals(n)).unwrap());
    model.insert_head(head.unwrap()).unwrap();
    model
}

#[test]
fn c3_gradient_correctness() {
    let start = Instant::now();
    let mut worst_oracle = 0.0f64;
    let mut worst_check = 0.0f64;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let input = rng.random_range(1..=8);
        let hidden = rng.random_range(1..=8);
        let n = [2, 4, 5, 9][seed as usize % 4];
        let model = random_model(&mut rng, input, hidden, n);
        let x: Vec<f64> = (0..input).map(|_| rng.random_range(-1.0..1.0)).collect();
        let label = rng.random_range(0..n);
        let task = TaskId::new("t");
        let grads = backward(&model, &task, &x, label).unwrap();
        let numeric = finite_difference(&model, "t", &x, label, 1e-5).value;
        for (a, b) in grads.tensors().iter().zip(&numeric) {
            for (a, b) in a.iter().zip(b) {
                let scale = a.abs().max(b.abs());
                if scale > 1e-12 {
                    worst_oracle = worst_oracle.max((a - b).abs() / scale);
                }
            }
        }
        let report = grad_check(&model, &[GradSample { task, x, label }]).unwrap();
        worst_check = worst_check.max(report.max_relative_error);
    }
    let secs = start.elapsed().as_secs_f64();
    println!("c3: worst relative error {worst_oracle:e} (oracle), {worst_check:e} (grad_check), {secs:.2}s");
    assert!(worst_oracle < GRAD_REL && worst_check < GRAD_REL);
    assert!(secs < 30.0);
}

#[test]
fn c4_metric_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    let mut baseline_mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..100);
        let p = rng.random_range(0.0..1.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_bool(p) as usize).collect();
        let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
        worst = worst.max((macro_f1(&preds, &labels).unwrap().macro_f1 - naive_macro_f1(&preds, &labels).value).abs());
        if constant_baseline(&labels).unwrap() != exhaustive_constant_baseline(&labels).value {
            baseline_mismatches += 1;
        }
    }
    println!("c4: worst macro F1 deviation {worst:e}, {baseline_mismatches} baseline mismatches");
    assert!(worst < EXACT);
    assert_eq!(baseline_mismatches, 0);
}

#[test]
fn c5_inclusion_exclusion_fixture() {
    let rows = inclusion_exclusion(&incl_excl_fixture()).unwrap().rows;
    let by: BTreeMap<&str, _> = rows.iter().map(|r| (r.corpus.as_str(), r)).collect();
    let md = render_markdown(&rows);
    print!("c5:\n{md}");
    for (corpus, f_in, f_ex, delta, shown) in [
        ("MSP-PODCAST", 0.6150, 0.6272, -0.0122, "-0.0122"),
        ("IEMOCAP", 0.7010, 0.6990, 0.0020, "+0.0020"),
    ] {
        let r = by[corpus];
        // the fixture's cell averages carry ~1e-16 of float error
        assert!((r.f1_in - f_in).abs() < EXACT && (r.f1_ex - f_ex).abs() < EXACT);
        assert!((r.delta() - delta).abs() < EXACT, "{corpus}: {}", r.delta());
        assert!(md.contains(&format!("| 2 | {corpus} | {} | {} | {shown} |", fmt4(f_in), fmt4(f_ex))));
    }
}

fn rigged_corpus(name: &str, n_labels: usize, copies: usize) -> Corpus {
    let labels = LabelSpace::new((0..n_labels).map(|i| format!("l{i}"))).unwrap();
    let u = |x: f64, label, split| Utterance {
        features: Vector::new(vec![x, 1.0 - x]).unwrap(),
        label,
        speaker_id: "s".into(),
        language: Language::English,
        split,
    };
    let mut us: Vec<Utterance> = (0..n_labels).map(|l| u(l as f64, l, Split::Train)).collect();
    for _ in 0..copies {
        us.extend((0..4).map(|i| u(i as f64 * 0.5, 0, Split::Validation)));
    }
    Corpus::new(name, labels, 2, us).unwrap()
}

#[test]
fn c6_validation_averaging() {
    let enc = EncoderParams::new(Matrix::new(3, 2, vec![0.2; 6]).unwrap(), Vector::new(vec![0.0; 3]).unwrap()).unwrap();
    let mut model = ModelState::new(enc);
    let biases = [("a", vec![0.4, -0.1]), ("b", vec![0.0, 1.0, -2.0, 0.5, 0.3])];
    let mut expected = Vec::new();
    for (task, b) in &biases {
        let head = HeadParams::new(TaskId::new(*task), Matrix::zeros(b.len(), 3), Vector::new(b.clone()).unwrap()).unwrap();
        model.insert_head(head).unwrap();
        let z: f64 = b.iter().map(|v| v.exp()).sum();
        expected.push((z.ln() - b[0]) / (b.len() as f64).ln());
    }
    let (a, b) = (expected[0], expected[1]);
    let v = validation_loss(&model, &[rigged_corpus("a", 2, 1), rigged_corpus("b", 5, 1)]).unwrap();
    let dup = validation_loss(&model, &[rigged_corpus("a", 2, 6), rigged_corpus("b", 5, 1)]).unwrap();
    println!("c6: a = {a:.6}, b = {b:.6}, validation loss {v:.6}, with task a sextupled {dup:.6}");
    assert!((v - (a + b) / 2.0).abs() < EXACT);
    assert!((dup - v).abs() < EXACT);
}

fn sorted(records: Vec<TrialRecord>) -> Vec<TrialRecord> {
    let mut v: Vec<TrialRecord> = records.iter().map(TrialRecord::without_timing).collect();
    v.sort_by_key(|r| r.key());
    v
}

#[test]
fn c7_determinism_and_parallel_safety() {
    let configs = &all_configs()[..5];
    let dir = tempfile::tempdir().unwrap();
    let models = train_models(configs, &dir.path().join("ckpt"));
    let ctx = context(&models);
    let plan = plan_grid(configs, &dims(&["eng-05", "man-08"], &["Angry", "Neutral"], &[2, 16], 1), 77).unwrap();
    assert_eq!(plan.len(), 40);

    let run = |name: &str, parallelism: usize, limit: Option<usize>| {
        let path = dir.path().join(name);
        run_grid(&plan, &ctx, &path, RunOptions { parallelism, max_new_trials: limit }).unwrap();
        path
    };
    let serial = load_store(&run("p1.jsonl", 1, None)).unwrap().records;
    let parallel = load_store(&run("p8.jsonl", 8, None)).unwrap().records;

    let resumed = run("resumed.jsonl", 8, Some(13));
    let mut f = OpenOptions::new().append(true).open(&resumed).unwrap();
    f.write_all(b"{\"config_id\":3,\"spea").unwrap();
    drop(f);
    run("resumed.jsonl", 8, None);
    let resumed = load_store(&resumed).unwrap().records;

    println!(
        "c7: {} records serial, {} parallel, {} after crash and resume",
        serial.len(),
        parallel.len(),
        resumed.len()
    );
    assert_eq!(serial.len(), 40);
    assert!(serial.iter().all(|r| r.status == TrialStatus::Ok));
    let serial = sorted(serial);
    assert_eq!(serial, sorted(parallel));
    assert_eq!(serial, sorted(resumed));
}

#[test]
fn c8_trend_reproduction_on_the_desk_grid() {
    let mut config = RunConfig::default();
    config.grid.speakers = ["eng-01", "eng-02", "man-01", "man-02"].iter().map(|s| s.to_string()).collect();
    config.grid.ks = vec![2, 8, 32];
    config.grid.trials = 2;
    config.validate().unwrap();
    let start = Instant::now();
    let data = generate_suite(&config.synth).unwrap();
    let configs = config.configs().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("ckpt");
    prefinetune_all(&configs, &data.pretraining, &config.prefinetune_template(), &ckpt, config.threads()).unwrap();
    let models = load_models(&ckpt, configs.iter().map(|c| c.config_id)).unwrap();
    let plan = config.plan().unwrap();
    assert_eq!(plan.len(), 1_920);
    let ctx = prefinetune::experiments::GridContext {
        downstream: &data.downstream,
        models: &models,
        finetune: config.finetune,
    };
    let store = dir.path().join("store.jsonl");
    let opts = RunOptions {
        parallelism: config.threads(),
        max_new_trials: None,
    };
    run_grid(&plan, &ctx, &store, opts).unwrap();
    let records = load_store(&store).unwrap().records;
    assert_eq!(records.iter().filter(|r| r.is_ok()).count(), 1_920);

    let curves = n_corpora_curves(&records).unwrap().rows;
    let oracle = naive_aggregate(&records, |r| Some((r.k, r.corpora.len()))).value;
    let mean = |k: usize, n: usize| {
        let p = curves.iter().find(|p| p.k == k && p.n_corpora == n).unwrap();
        assert!((p.mean - oracle[&(k, n)].mean).abs() < EXACT);
        p.mean
    };
    let gain = |k| mean(k, 4) - mean(k, 0);
    println!("c8: {:.1}s for 1,920 trials", start.elapsed().as_secs_f64());
    for k in [2, 8, 32] {
        println!("c8: k={k:2} No PFT {:.4}  All PFT {:.4}  gain {:+.4}", mean(k, 0), mean(k, 4), gain(k));
    }
    assert!(gain(2) >= TREND_GAIN_K2, "8a: gain at k=2 is {:.4}", gain(2));
    assert!(gain(2) >= gain(32), "8b: gain at k=2 {:.4} < gain at k=32 {:.4}", gain(2), gain(32));
    let base = mean(2, 0);
    assert!((BASELINE_RANGE.0..=BASELINE_RANGE.1).contains(&base), "8c: baseline at k=2 is {base:.4}");
}

#[test]
fn c9_few_shot_sampler_contract() {
    let d = &suite().downstream;
    let mut checked = 0;
    for speaker in d.speakers() {
        for emotion in d.label_space().names() {
            for k in FEW_SHOT_KS {
                for trial in 0..3 {
                    let seed = trial_seed(20230601, 16, &speaker, emotion, k, trial);
                    check_fewshot_contract(d, &speaker, emotion, k, trial, seed).unwrap();
                    checked += 1;
                }
            }
        }
    }
    println!("c9: {checked} draws over {} speakers × {} emotions × {} k", d.speakers().len(), d.label_space().len(), FEW_SHOT_KS.len());
    assert_eq!(checked, 20 * 5 * 7 * 3);
}
