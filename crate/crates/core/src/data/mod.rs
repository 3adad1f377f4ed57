//! Corpus schema, on-disk format, and the synthetic corpus generator.

pub mod corpus;
pub mod io;
pub mod synth;

pub use corpus::{Corpus, LabelSpace, Language, Split, Utterance};
pub use io::{load_corpus, save_corpus};
pub use synth::{
    canonical_emotion, class_means, default_corpus_templates, downstream_speakers, generate_suite, CorpusTemplate,
    DownstreamTemplate, Suite, SynthSpec, DOWNSTREAM_EMOTIONS,
};
