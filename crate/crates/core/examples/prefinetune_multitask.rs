//! Pre-finetunes one encoder on all four corpora and prints its validation curve.

use prefinetune::data::{generate_suite, SynthSpec};
use prefinetune::training::{prefinetune, PrefinetuneSpec};

fn main() -> prefinetune::Result<()> {
    let suite = generate_suite(&SynthSpec::default())?;
    let names: Vec<String> = suite.pretraining.iter().map(|c| c.name().to_string()).collect();
    let spec = PrefinetuneSpec::new(16, names.clone(), 7);
    let (model, state) = prefinetune(&spec, &suite.pretraining)?;
    println!("tasks: {}", names.join(", "));
    for e in &state.curve {
        let train = e.train_loss.map_or("-".to_string(), |l| format!("{l:.4}"));
        println!("epoch {:>3}  train {train:>7}  validation {:.4}", e.epoch, e.monitored_loss);
    }
    println!(
        "stopped after {} epochs, best epoch {} ({:.4}), {} parameters",
        state.epochs_run,
        state.best_epoch,
        state.best_loss,
        model.num_params()
    );
    Ok(())
}
