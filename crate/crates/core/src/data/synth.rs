//! Synthetic stand-ins for four emotional-speech pre-finetuning corpora and
//! one per-speaker downstream corpus.
//!
//! Every emotion owns a latent prototype in a `shared_dim`-dimensional
//! subspace of feature space. A corpus's class mean is
//! `transfer_strength·prototype + (1 − transfer_strength)·private_offset`, so
//! corpora share structure only through prototypes; label indices are never
//! shared. An utterance is `class mean + language offset + speaker offset +
//! noise`, where the Gaussian noise is `noise_scale` in every direction plus
//! `nuisance_scale` in the directions orthogonal to the prototype subspace.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, LabelSpace, Language, Split, Utterance};
use crate::kernel::Vector;
use crate::sampler::SeedDeriver;
use crate::{Error, Result};

pub const DOWNSTREAM_EMOTIONS: [&str; 5] = ["Happy", "Sad", "Surprised", "Angry", "Neutral"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusTemplate {
    pub name: String,
    pub labels: Vec<String>,
    pub n_speakers: usize,
    pub n_utterances: usize,
    /// Share of speakers whose language is Mandarin.
    pub mandarin_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DownstreamTemplate {
    pub name: String,
    pub emotions: Vec<String>,
    pub english_speakers: usize,
    pub mandarin_speakers: usize,
    pub train_per_emotion: usize,
    pub test_per_emotion: usize,
}

impl Default for DownstreamTemplate {
    fn default() -> Self {
        DownstreamTemplate {
            name: "ESD".into(),
            emotions: DOWNSTREAM_EMOTIONS.iter().map(|s| s.to_string()).collect(),
            english_speakers: 10,
            mandarin_speakers: 10,
            train_per_emotion: 80,
            test_per_emotion: 40,
        }
    }
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Label spaces follow the source corpora; utterance counts are the source
/// counts divided by 40, speaker counts are desk-scale choices.
pub fn default_corpus_templates() -> Vec<CorpusTemplate> {
    vec![
        CorpusTemplate {
            name: "MSP-IMPROV".into(),
            labels: labels(&["happy", "sadness", "anger", "neutral"]),
            n_speakers: 12,
            n_utterances: 211,
            mandarin_fraction: 0.0,
        },
        CorpusTemplate {
            name: "MSP-PODCAST".into(),
            labels: labels(&[
                "anger", "happiness", "sadness", "disgust", "surprised", "fear", "contempt", "neutral", "other",
            ]),
            n_speakers: 50,
            n_utterances: 1554,
            mandarin_fraction: 0.0,
        },
        CorpusTemplate {
            name: "Mandarin-AS".into(),
            labels: labels(&["anger", "elation", "neutral", "panic", "sadness"]),
            n_speakers: 68,
            n_utterances: 641,
            mandarin_fraction: 1.0,
        },
        CorpusTemplate {
            name: "IEMOCAP".into(),
            labels: labels(&[
                "anger", "happiness", "excitement", "sadness", "frustration", "fear", "surprise", "other", "neutral",
            ]),
            n_speakers: 10,
            n_utterances: 251,
            mandarin_fraction: 0.0,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    pub dim: usize,
    pub shared_dim: usize,
    pub transfer_strength: f64,
    pub noise_scale: f64,
    /// Extra noise confined to the complement of the prototype subspace.
    pub nuisance_scale: f64,
    pub signal_scale: f64,
    pub speaker_scale: f64,
    pub corpora: Vec<CorpusTemplate>,
    pub downstream: DownstreamTemplate,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 20230601,
            dim: 16,
            shared_dim: 4,
            transfer_strength: 0.8,
            noise_scale: 0.08,
            nuisance_scale: 0.5,
            signal_scale: 0.5,
            speaker_scale: 0.05,
            corpora: default_corpus_templates(),
            downstream: DownstreamTemplate::default(),
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::InvalidConfig {
        field: field.to_string(),
        reason: reason.into(),
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.transfer_strength) {
            return Err(invalid(
                "transfer_strength",
                format!("must be in [0, 1], got {}", self.transfer_strength),
            ));
        }
        for (field, v) in [
            ("noise_scale", self.noise_scale),
            ("nuisance_scale", self.nuisance_scale),
            ("signal_scale", self.signal_scale),
            ("speaker_scale", self.speaker_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(field, format!("must be finite and >= 0, got {v}")));
            }
        }
        if self.dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        if self.shared_dim == 0 || self.shared_dim > self.dim {
            return Err(invalid("shared_dim", format!("must be in 1..={}", self.dim)));
        }
        for c in &self.corpora {
            LabelSpace::new(c.labels.clone()).map_err(|e| invalid("corpora.labels", e.to_string()))?;
            if c.n_speakers == 0 {
                return Err(invalid("corpora.n_speakers", format!("`{}` needs at least one speaker", c.name)));
            }
            if c.n_utterances < 3 * c.labels.len() {
                return Err(invalid(
                    "corpora.n_utterances",
                    format!("`{}` needs at least 3 utterances per label", c.name),
                ));
            }
            if !(0.0..=1.0).contains(&c.mandarin_fraction) {
                return Err(invalid("corpora.mandarin_fraction", "must be in [0, 1]"));
            }
        }
        let mut names: Vec<&str> = self.corpora.iter().map(|c| c.name.as_str()).collect();
        names.push(&self.downstream.name);
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(invalid("corpora.name", "corpus names must be unique"));
        }
        let d = &self.downstream;
        LabelSpace::new(d.emotions.clone()).map_err(|e| invalid("downstream.emotions", e.to_string()))?;
        if d.english_speakers + d.mandarin_speakers == 0 {
            return Err(invalid("downstream", "needs at least one speaker"));
        }
        if d.train_per_emotion == 0 || d.test_per_emotion == 0 {
            return Err(invalid("downstream", "per-emotion train and test counts must be positive"));
        }
        Ok(())
    }
}

/// Canonical prototype key for a label name; synonyms across corpora share a
/// prototype.
pub fn canonical_emotion(label: &str) -> String {
    let l = label.to_lowercase();
    match l.as_str() {
        "happy" | "happiness" | "elation" => "happy",
        "sad" | "sadness" => "sad",
        "angry" | "anger" => "angry",
        "surprise" | "surprised" => "surprised",
        "fear" | "panic" => "fear",
        _ => return l,
    }
    .to_string()
}

pub struct Suite {
    pub pretraining: Vec<Corpus>,
    pub downstream: Corpus,
}

struct Geometry<'a> {
    spec: &'a SynthSpec,
    /// dim × shared_dim, orthonormal columns, stored column-major
    basis: Vec<Vec<f64>>,
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

fn rng_for(d: SeedDeriver) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(d.finish())
}

impl<'a> Geometry<'a> {
    fn new(spec: &'a SynthSpec) -> Self {
        let mut rng = rng_for(SeedDeriver::new(spec.seed).str("basis"));
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(spec.shared_dim);
        while basis.len() < spec.shared_dim {
            let mut v = gaussian(&mut rng, spec.dim);
            for b in &basis {
                let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-6 {
                v.iter_mut().for_each(|x| *x /= norm);
                basis.push(v);
            }
        }
        Geometry { spec, basis }
    }

    fn seed(&self) -> SeedDeriver {
        SeedDeriver::new(self.spec.seed)
    }

    fn prototype(&self, emotion: &str) -> Vec<f64> {
        let mut rng = rng_for(self.seed().str("prototype").str(&canonical_emotion(emotion)));
        let z = gaussian(&mut rng, self.spec.shared_dim);
        // a random direction with the expected norm of a N(0, signal² I) draw
        let scale = self.spec.signal_scale * (self.spec.shared_dim as f64).sqrt()
            / z.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        let mut out = vec![0.0; self.spec.dim];
        for (zi, b) in z.iter().zip(&self.basis) {
            out.iter_mut().zip(b).for_each(|(o, bj)| *o += scale * zi * bj);
        }
        out
    }

    /// Same expected norm as a prototype, but spread over all dimensions.
    fn private_offset(&self, corpus: &str, label: &str) -> Vec<f64> {
        let mut rng = rng_for(self.seed().str("private").str(corpus).str(label));
        let s = self.spec.signal_scale * (self.spec.shared_dim as f64 / self.spec.dim as f64).sqrt();
        gaussian(&mut rng, self.spec.dim).into_iter().map(|v| v * s).collect()
    }

    fn class_mean(&self, corpus: &str, label: &str) -> Vec<f64> {
        let t = self.spec.transfer_strength;
        let proto = self.prototype(label);
        let private = self.private_offset(corpus, label);
        proto.iter().zip(&private).map(|(p, q)| t * p + (1.0 - t) * q).collect()
    }

    fn offset(&self, tag: &str, key: &str) -> Vec<f64> {
        let mut rng = rng_for(self.seed().str(tag).str(key));
        gaussian(&mut rng, self.spec.dim)
            .into_iter()
            .map(|v| v * self.spec.speaker_scale)
            .collect()
    }

    fn speaker_shift(&self, corpus: &str, speaker: &str, language: Language) -> Vec<f64> {
        let lang = self.offset("language", &language.to_string());
        let spk = self.offset("speaker", &format!("{corpus}/{speaker}"));
        lang.iter().zip(&spk).map(|(a, b)| a + b).collect()
    }

    fn utterance(&self, mean: &[f64], shift: &[f64], rng: &mut impl Rng) -> Vector {
        let mut noise: Vec<f64> = gaussian(rng, self.spec.dim)
            .into_iter()
            .map(|n| self.spec.noise_scale * n)
            .collect();
        if self.spec.nuisance_scale > 0.0 {
            let mut nuisance = gaussian(rng, self.spec.dim);
            for b in &self.basis {
                let proj: f64 = nuisance.iter().zip(b).map(|(x, y)| x * y).sum();
                nuisance.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
            }
            noise
                .iter_mut()
                .zip(nuisance)
                .for_each(|(n, v)| *n += self.spec.nuisance_scale * v);
        }
        let features = mean
            .iter()
            .zip(shift)
            .zip(noise)
            .map(|((m, s), n)| m + s + n)
            .collect();
        Vector::new(features).expect("finite synthetic features")
    }
}

fn pretraining_corpus(geo: &Geometry<'_>, t: &CorpusTemplate) -> Result<Corpus> {
    let label_space = LabelSpace::new(t.labels.clone())?;
    let mut rng = rng_for(geo.seed().str("utterances").str(&t.name));
    let n_mandarin = (t.mandarin_fraction * t.n_speakers as f64).round() as usize;
    let slug = t.name.to_lowercase();
    let speakers: Vec<(String, Language, Vec<f64>)> = (0..t.n_speakers)
        .map(|i| {
            let id = format!("{slug}-spk{i:03}");
            let lang = if i < n_mandarin { Language::Mandarin } else { Language::English };
            let shift = geo.speaker_shift(&t.name, &id, lang);
            (id, lang, shift)
        })
        .collect();
    let means: Vec<Vec<f64>> = t.labels.iter().map(|l| geo.class_mean(&t.name, l)).collect();

    let mut utterances = Vec::with_capacity(t.n_utterances);
    let mut by_label: Vec<Vec<usize>> = vec![Vec::new(); t.labels.len()];
    for i in 0..t.n_utterances {
        let label = i % t.labels.len();
        let (id, lang, shift) = &speakers[rng.random_range(0..speakers.len())];
        by_label[label].push(i);
        utterances.push(Utterance {
            features: geo.utterance(&means[label], shift, &mut rng),
            label,
            speaker_id: id.clone(),
            language: *lang,
            split: Split::Train,
        });
    }
    // 80/10/10 per label, at least one validation and one test utterance each
    for idx in &mut by_label {
        idx.shuffle(&mut rng);
        let n_held = ((idx.len() as f64 * 0.1).round() as usize).max(1);
        for &i in &idx[..n_held] {
            utterances[i].split = Split::Validation;
        }
        for &i in &idx[n_held..2 * n_held] {
            utterances[i].split = Split::Test;
        }
    }
    Corpus::new(t.name.clone(), label_space, geo.spec.dim, utterances)
}

/// Speaker ids of the downstream corpus, English first.
pub fn downstream_speakers(t: &DownstreamTemplate) -> Vec<(String, Language)> {
    (1..=t.english_speakers)
        .map(|i| (format!("eng-{i:02}"), Language::English))
        .chain((1..=t.mandarin_speakers).map(|i| (format!("man-{i:02}"), Language::Mandarin)))
        .collect()
}

fn downstream_corpus(geo: &Geometry<'_>, t: &DownstreamTemplate) -> Result<Corpus> {
    let label_space = LabelSpace::new(t.emotions.clone())?;
    let mut rng = rng_for(geo.seed().str("utterances").str(&t.name));
    let means: Vec<Vec<f64>> = t.emotions.iter().map(|e| geo.class_mean(&t.name, e)).collect();
    let mut utterances = Vec::new();
    for (id, lang) in downstream_speakers(t) {
        let shift = geo.speaker_shift(&t.name, &id, lang);
        for (label, mean) in means.iter().enumerate() {
            for j in 0..t.train_per_emotion + t.test_per_emotion {
                utterances.push(Utterance {
                    features: geo.utterance(mean, &shift, &mut rng),
                    label,
                    speaker_id: id.clone(),
                    language: lang,
                    split: if j < t.train_per_emotion { Split::Train } else { Split::Test },
                });
            }
        }
    }
    Corpus::new(t.name.clone(), label_space, geo.spec.dim, utterances)
}

/// Four pre-finetuning corpora (in template order) and the downstream corpus.
/// A pure function of `spec`.
pub fn generate_suite(spec: &SynthSpec) -> Result<Suite> {
    spec.validate()?;
    let geo = Geometry::new(spec);
    let pretraining = spec
        .corpora
        .iter()
        .map(|t| pretraining_corpus(&geo, t))
        .collect::<Result<Vec<_>>>()?;
    let downstream = downstream_corpus(&geo, &spec.downstream)?;
    Ok(Suite {
        pretraining,
        downstream,
    })
}

/// Class means of one corpus as generated (before speaker shift and noise).
pub fn class_means(spec: &SynthSpec, corpus: &str, labels: &[String]) -> Vec<Vec<f64>> {
    let geo = Geometry::new(spec);
    labels.iter().map(|l| geo.class_mean(corpus, l)).collect()
}
