//! Generates the synthetic corpus suite and prints a summary of each corpus.

use prefinetune::cli::corpus_summary;
use prefinetune::data::{generate_suite, SynthSpec};

fn main() -> prefinetune::Result<()> {
    let spec = SynthSpec::default();
    let suite = generate_suite(&spec)?;
    println!("feature dim {}, shared subspace {}, seed {}", spec.dim, spec.shared_dim, spec.seed);
    for corpus in &suite.pretraining {
        println!("{}", corpus_summary(corpus));
    }
    println!("{}", corpus_summary(&suite.downstream));
    println!("downstream fingerprint {}", suite.downstream.fingerprint());
    Ok(())
}
