use std::fmt;
use std::str::FromStr;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::propagation::UncertainEmbedding;

/// Embeddings keyed by utterance id, in insertion order.
pub type EmbeddingSet = IndexMap<String, UncertainEmbedding>;

/// Builds an [`EmbeddingSet`], rejecting duplicate ids and mixed dimensions.
pub fn embedding_set(
    embeddings: impl IntoIterator<Item = UncertainEmbedding>,
) -> Result<EmbeddingSet> {
    let mut set = EmbeddingSet::new();
    let mut dim = None;
    for e in embeddings {
        let d = *dim.get_or_insert(e.dim());
        if e.dim() != d {
            return Err(Error::DimensionMismatch {
                context: "embedding set",
                expected: d,
                found: e.dim(),
            });
        }
        if set.contains_key(&e.id) {
            return Err(Error::Config(format!("duplicate embedding id {}", e.id)));
        }
        set.insert(e.id.clone(), e);
    }
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Target,
    Nontarget,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Target => "target",
            Label::Nontarget => "nontarget",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "target" => Ok(Label::Target),
            "nontarget" => Ok(Label::Nontarget),
            other => Err(Error::Config(format!("unknown trial label {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub enrol: String,
    pub test: String,
    pub label: Option<Label>,
}

impl Trial {
    pub fn new(enrol: impl Into<String>, test: impl Into<String>, label: Option<Label>) -> Self {
        Self {
            enrol: enrol.into(),
            test: test.into(),
            label,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub enrol_id: String,
    pub test_id: String,
    pub score: f64,
    pub alpha_e: Option<f64>,
    pub alpha_t: Option<f64>,
}

impl TrialScore {
    pub fn alpha_product(&self) -> Option<f64> {
        Some(self.alpha_e? * self.alpha_t?)
    }
}
