use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::kernel::Vector;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Language {
    English,
    Mandarin,
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Language::English => "English",
            Language::Mandarin => "Mandarin",
        })
    }
}

impl std::str::FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "english" => Ok(Language::English),
            "mandarin" => Ok(Language::Mandarin),
            _ => Err(Error::InvalidArgument(format!("unknown language `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// Ordered, duplicate-free label names; `len() >= 2`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct LabelSpace(Vec<String>);

impl LabelSpace {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        if names.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "label space needs at least 2 labels, got {}",
                names.len()
            )));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::InvalidArgument(format!("duplicate label names in {names:?}")));
        }
        Ok(LabelSpace(names))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn name(&self, index: usize) -> Option<&str> {
        self.0.get(index).map(String::as_str)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|n| n == name)
    }
}

impl TryFrom<Vec<String>> for LabelSpace {
    type Error = Error;

    fn try_from(names: Vec<String>) -> Result<Self> {
        LabelSpace::new(names)
    }
}

impl From<LabelSpace> for Vec<String> {
    fn from(ls: LabelSpace) -> Self {
        ls.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub features: Vector,
    pub label: usize,
    pub speaker_id: String,
    pub language: Language,
    pub split: Split,
}

/// A named set of labelled, speaker-attributed feature vectors. Each
/// utterance belongs to exactly one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    name: String,
    label_space: LabelSpace,
    dim: usize,
    utterances: Vec<Utterance>,
}

impl Corpus {
    pub fn new(name: impl Into<String>, label_space: LabelSpace, dim: usize, utterances: Vec<Utterance>) -> Result<Self> {
        let name = name.into();
        if dim == 0 {
            return Err(Error::InvalidArgument("feature dimension must be positive".into()));
        }
        let mut in_train = vec![false; label_space.len()];
        for u in &utterances {
            if u.features.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "utterance features",
                    expected: dim,
                    found: u.features.len(),
                });
            }
            if u.label >= label_space.len() {
                return Err(Error::LabelOutOfRange {
                    label: u.label,
                    n_labels: label_space.len(),
                });
            }
            if u.split == Split::Train {
                in_train[u.label] = true;
            }
        }
        if let Some(missing) = in_train.iter().position(|&seen| !seen) {
            return Err(Error::InvalidArgument(format!(
                "corpus `{name}`: label `{}` never appears in the train split",
                label_space.names()[missing]
            )));
        }
        Ok(Corpus {
            name,
            label_space,
            dim,
            utterances,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn label_space(&self) -> &LabelSpace {
        &self.label_space
    }

    pub fn n_labels(&self) -> usize {
        self.label_space.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn utterances(&self) -> &[Utterance] {
        &self.utterances
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> + '_ {
        self.utterances.iter().filter(move |u| u.split == split)
    }

    pub fn split_len(&self, split: Split) -> usize {
        self.split(split).count()
    }

    /// Sorted distinct speaker ids.
    pub fn speakers(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.utterances.iter().map(|u| u.speaker_id.as_str()).collect();
        set.into_iter().map(str::to_string).collect()
    }

    pub fn speaker_language(&self, speaker: &str) -> Option<Language> {
        self.utterances
            .iter()
            .find(|u| u.speaker_id == speaker)
            .map(|u| u.language)
    }

    /// Content digest (16 hex chars) over names, labels and feature bits.
    pub fn fingerprint(&self) -> String {
        let mut d = crate::sampler::SeedDeriver::new(0).str(&self.name).u64(self.dim as u64);
        for l in self.label_space.names() {
            d = d.str(l);
        }
        for u in &self.utterances {
            d = d
                .str(&u.speaker_id)
                .u64(u.label as u64)
                .u64(u.language as u64)
                .u64(u.split as u64);
            for v in u.features.as_slice() {
                d = d.u64(v.to_bits());
            }
        }
        format!("{:016x}", d.finish())
    }
}
