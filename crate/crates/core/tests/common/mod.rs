#![allow(dead_code)]

pub mod oracles;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use prefinetune::data::{generate_suite, Suite, SynthSpec};
use prefinetune::experiments::{
    enumerate_powerset, load_models, prefinetune_all, CorpusConfig, FinetuneSettings, GridContext, GridDims,
};
use prefinetune::kernel::ModelState;
use prefinetune::training::PrefinetuneSpec;

/// The default synthetic suite, generated once per test binary.
pub fn suite() -> &'static Suite {
    static SUITE: OnceLock<Suite> = OnceLock::new();
    SUITE.get_or_init(|| generate_suite(&SynthSpec::default()).expect("default suite"))
}

pub fn corpus_names() -> Vec<String> {
    suite().pretraining.iter().map(|c| c.name().to_string()).collect()
}

pub fn all_configs() -> Vec<CorpusConfig> {
    enumerate_powerset(&corpus_names()).unwrap()
}

pub fn template(seed: u64) -> PrefinetuneSpec {
    PrefinetuneSpec::new(0, Vec::new(), seed)
}

/// Pre-finetunes `configs` into `dir` and loads the resulting encoders.
pub fn train_models(configs: &[CorpusConfig], dir: &Path) -> BTreeMap<usize, ModelState> {
    prefinetune_all(configs, &suite().pretraining, &template(7), dir, 4).unwrap();
    load_models(dir, configs.iter().map(|c| c.config_id)).unwrap()
}

pub fn context(models: &BTreeMap<usize, ModelState>) -> GridContext<'_> {
    GridContext {
        downstream: &suite().downstream,
        models,
        finetune: FinetuneSettings::default(),
    }
}

pub fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn dims(speakers: &[&str], emotions: &[&str], ks: &[usize], trials: usize) -> GridDims {
    GridDims {
        speakers: strings(speakers),
        emotions: strings(emotions),
        ks: ks.to_vec(),
        trials,
    }
}

/// Checks one few-shot draw: k/2 per side, all from the speaker's train
/// split, labels matching the corpus, no repeats, and identical on a redraw.
pub fn check_fewshot_contract(
    corpus: &prefinetune::data::Corpus,
    speaker: &str,
    emotion: &str,
    k: usize,
    trial: usize,
    seed: u64,
) -> Result<(), String> {
    use prefinetune::data::Split;
    use prefinetune::sampler::{sample_fewshot, FewShotSpec};
    let spec = FewShotSpec::new(speaker, emotion, k, trial, seed).map_err(|e| e.to_string())?;
    let s = sample_fewshot(corpus, &spec).map_err(|e| e.to_string())?;
    let positives = s.labels.iter().filter(|&&l| l == 1).count();
    if s.len() != k || positives != k / 2 {
        return Err(format!("{speaker}/{emotion}/k={k}: {positives} positives of {}", s.len()));
    }
    let target = corpus.label_space().index_of(emotion).unwrap();
    let mut seen = std::collections::BTreeSet::new();
    for ((&i, &label), features) in s.indices.iter().zip(&s.labels).zip(&s.features) {
        let u = &corpus.utterances()[i];
        if u.split != Split::Train || u.speaker_id != speaker {
            return Err(format!("{speaker}/{emotion}/k={k}: utterance {i} not in the speaker's train split"));
        }
        if usize::from(u.label == target) != label || u.features.as_slice() != features.as_slice() {
            return Err(format!("{speaker}/{emotion}/k={k}: utterance {i} mislabelled"));
        }
        if !seen.insert(i) {
            return Err(format!("{speaker}/{emotion}/k={k}: utterance {i} drawn twice"));
        }
    }
    let again = sample_fewshot(corpus, &spec).map_err(|e| e.to_string())?;
    if again != s {
        return Err(format!("{speaker}/{emotion}/k={k}: redraw differs"));
    }
    Ok(())
}

/// Pre-finetunes `configs` and runs the `dims` grid over them in a temp
/// directory; returns the stored records sorted by trial key.
pub fn run_small_grid(configs: &[CorpusConfig], dims: &GridDims, parallelism: usize) -> Vec<prefinetune::experiments::TrialRecord> {
    use prefinetune::experiments::{load_store, plan_grid, run_grid, RunOptions};
    let dir = tempfile::tempdir().unwrap();
    let models = train_models(configs, &dir.path().join("checkpoints"));
    let plan = plan_grid(configs, dims, 1).unwrap();
    let store = dir.path().join("store.jsonl");
    let opts = RunOptions {
        parallelism,
        max_new_trials: None,
    };
    run_grid(&plan, &context(&models), &store, opts).unwrap();
    let mut records = load_store(&store).unwrap().records;
    records.sort_by_key(|r| r.key());
    records
}

/// A hand-made ok record for report fixtures.
pub fn fixture_record(corpora: &[&str], speaker: &str, emotion: &str, k: usize, trial: usize, f1: f64) -> prefinetune::experiments::TrialRecord {
    use prefinetune::data::Language;
    use prefinetune::experiments::{TrialRecord, TrialStatus};
    TrialRecord {
        config_id: 0,
        speaker: speaker.into(),
        emotion: emotion.into(),
        k,
        trial_index: trial,
        seed: 0,
        corpora: strings(corpora),
        language: if speaker.starts_with("man") {
            Language::Mandarin
        } else {
            Language::English
        },
        status: TrialStatus::Ok,
        macro_f1: Some(f1),
        per_class_f1: Some([f1, f1]),
        baseline_f1: Some(0.4444),
        epochs: 1,
        wall_ms: 0,
        error: None,
    }
}

/// Records whose inclusion/exclusion table has two known rows at k = 2:
/// MSP-PODCAST (0.6150 in, 0.6272 out) and IEMOCAP (0.7010 in, 0.6990 out).
pub fn incl_excl_fixture() -> Vec<prefinetune::experiments::TrialRecord> {
    let rows: [(&[&str], f64, f64); 4] = [
        (&["MSP-PODCAST"], 0.6000, 0.6300),
        (&["IEMOCAP", "MSP-IMPROV", "Mandarin-AS"], 0.6200, 0.6344),
        (&["IEMOCAP"], 0.7100, 0.6920),
        (&["MSP-IMPROV", "MSP-PODCAST", "Mandarin-AS"], 0.7000, 0.6980),
    ];
    let mut out = Vec::new();
    for (corpora, a, b) in rows {
        // two cells; the second has two trials averaging to `b`
        out.push(fixture_record(corpora, "eng-01", "Happy", 2, 0, a));
        out.push(fixture_record(corpora, "man-02", "Sad", 2, 0, b - 0.01));
        out.push(fixture_record(corpora, "man-02", "Sad", 2, 1, b + 0.01));
    }
    out
}
