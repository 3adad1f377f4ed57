//! Draws balanced few-shot training sets for one speaker and emotion.

use prefinetune::data::{generate_suite, SynthSpec};
use prefinetune::sampler::{binary_test_set, sample_fewshot, trial_seed, FewShotSpec, FEW_SHOT_KS};

fn main() -> prefinetune::Result<()> {
    let suite = generate_suite(&SynthSpec::default())?;
    let esd = &suite.downstream;
    let (speaker, emotion) = ("man-04", "Surprised");
    for k in FEW_SHOT_KS {
        for trial in 0..2 {
            let seed = trial_seed(1, 1, speaker, emotion, k, trial);
            let sample = sample_fewshot(esd, &FewShotSpec::new(speaker, emotion, k, trial, seed)?)?;
            let positives = sample.labels.iter().filter(|&&l| l == 1).count();
            let head: Vec<usize> = sample.indices.iter().take(6).copied().collect();
            println!("k={k:2} trial {trial}: {positives} positive / {} negative, first indices {head:?}", k - positives);
        }
    }
    let (x, y) = binary_test_set(esd, speaker, emotion)?;
    println!("test set: {} utterances, {} positive", x.len(), y.iter().sum::<usize>());
    Ok(())
}
