//! Fine-tunes a fresh encoder and a pre-finetuned one on the same few-shot
//! draws and compares their macro F1.

use prefinetune::data::{generate_suite, SynthSpec};
use prefinetune::metrics::constant_baseline;
use prefinetune::sampler::{binary_test_set, sample_fewshot, trial_seed, FewShotSpec};
use prefinetune::training::{evaluate, finetune, prefinetune, FinetuneSpec, PrefinetuneSpec};

fn main() -> prefinetune::Result<()> {
    let suite = generate_suite(&SynthSpec::default())?;
    let names: Vec<String> = suite.pretraining.iter().map(|c| c.name().to_string()).collect();
    let fresh = PrefinetuneSpec::new(1, Vec::new(), 7).initial_model();
    let (pretrained, _) = prefinetune(&PrefinetuneSpec::new(16, names, 7), &suite.pretraining)?;

    let esd = &suite.downstream;
    for (speaker, emotion) in [("eng-03", "Angry"), ("man-05", "Happy")] {
        let (test_x, test_y) = binary_test_set(esd, speaker, emotion)?;
        println!("{speaker} {emotion}: constant baseline {:.4}", constant_baseline(&test_y)?);
        for k in [2, 8, 32] {
            let seed = trial_seed(1, 0, speaker, emotion, k, 0);
            let few = FewShotSpec::new(speaker, emotion, k, 0, seed)?;
            let sample = sample_fewshot(esd, &few)?;
            let spec = FinetuneSpec::new(few);
            let (a, _) = finetune(&fresh, &sample, &spec)?;
            let (b, _) = finetune(&pretrained, &sample, &spec)?;
            println!(
                "  k={k:2}  no pre-finetuning {:.4}  all corpora {:.4}",
                evaluate(&a, &test_x, &test_y)?.macro_f1,
                evaluate(&b, &test_x, &test_y)?.macro_f1
            );
        }
    }
    Ok(())
}
