//! Runs a small grid over every corpus subset and prints the four reports.

use prefinetune::analysis::{
    corpus_contributions, inclusion_exclusion, n_corpora_curves, render_markdown, stratified_curves, Weighting,
};
use prefinetune::data::{generate_suite, SynthSpec};
use prefinetune::experiments::{
    enumerate_powerset, load_models, load_store, plan_grid, prefinetune_all, run_grid, FinetuneSettings, GridContext,
    GridDims, RunOptions,
};
use prefinetune::training::PrefinetuneSpec;

fn main() -> prefinetune::Result<()> {
    let suite = generate_suite(&SynthSpec::default())?;
    let names: Vec<String> = suite.pretraining.iter().map(|c| c.name().to_string()).collect();
    let configs = enumerate_powerset(&names)?;
    let dir = tempfile::tempdir().expect("temp dir");
    let ckpt = dir.path().join("checkpoints");
    prefinetune_all(&configs, &suite.pretraining, &PrefinetuneSpec::new(0, Vec::new(), 7), &ckpt, 0)?;
    let models = load_models(&ckpt, configs.iter().map(|c| c.config_id))?;

    let dims = GridDims {
        speakers: vec!["eng-01".into(), "man-01".into()],
        emotions: vec!["Angry".into(), "Sad".into()],
        ks: vec![2, 32],
        trials: 2,
    };
    let plan = plan_grid(&configs, &dims, 3)?;
    let ctx = GridContext {
        downstream: &suite.downstream,
        models: &models,
        finetune: FinetuneSettings::default(),
    };
    let store = dir.path().join("store.jsonl");
    run_grid(&plan, &ctx, &store, RunOptions::default())?;
    let records = load_store(&store)?.records;
    println!("{} trials\n", records.len());

    println!("{}", render_markdown(&n_corpora_curves(&records)?.rows));
    println!("{}", render_markdown(&corpus_contributions(&records, Weighting::Cell)?.rows));
    println!("{}", render_markdown(&inclusion_exclusion(&records)?.rows));
    println!("{}", render_markdown(&stratified_curves(&records)?.rows));
    Ok(())
}
