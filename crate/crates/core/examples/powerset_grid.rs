//! Enumerates the corpus power set and sizes the full and reduced grids.

use prefinetune::data::{generate_suite, SynthSpec, DOWNSTREAM_EMOTIONS};
use prefinetune::experiments::{enumerate_powerset, plan_grid, GridDims};
use prefinetune::sampler::FEW_SHOT_KS;

fn main() -> prefinetune::Result<()> {
    let suite = generate_suite(&SynthSpec::default())?;
    let names: Vec<String> = suite.pretraining.iter().map(|c| c.name().to_string()).collect();
    let configs = enumerate_powerset(&names)?;
    for c in &configs {
        println!("{:>2}  {}", c.config_id, c.label());
    }
    let emotions: Vec<String> = DOWNSTREAM_EMOTIONS.iter().map(|s| s.to_string()).collect();
    let full = GridDims {
        speakers: suite.downstream.speakers(),
        emotions: emotions.clone(),
        ks: FEW_SHOT_KS.to_vec(),
        trials: 3,
    };
    let reduced = GridDims {
        speakers: ["eng-01", "eng-02", "man-01", "man-02"].map(String::from).to_vec(),
        emotions,
        ks: vec![2, 8, 32],
        trials: 2,
    };
    for (name, dims) in [("full", full), ("reduced", reduced)] {
        let plan = plan_grid(&configs, &dims, 20230601)?;
        println!("{name} grid: {} trials, plan hash {}", plan.len(), &plan.hash[..16]);
    }
    Ok(())
}
