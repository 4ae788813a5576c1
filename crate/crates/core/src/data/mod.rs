//! Corpora, feature utilities and synthetic sequence tasks.

pub mod archive;
mod features;
mod synth;

pub use archive::{read_archive, write_archive};
pub use features::{append_constant, mean_var_normalize, splice, FeatureStats};
pub use synth::{gen_delayed_recall, gen_future_recall, gen_parity};

use std::collections::HashSet;

use crate::error::{Error, Result};
use crate::numerics::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    /// `T x d`, one frame per row.
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
}

impl Utterance {
    pub fn frames(&self) -> usize {
        self.features.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub utterances: Vec<Utterance>,
    pub feature_dim: usize,
    /// 0 for unlabeled corpora.
    pub num_classes: usize,
}

impl Corpus {
    /// Validates the utterances and infers the feature dimension from the
    /// first one (0 for an empty corpus).
    pub fn new(utterances: Vec<Utterance>, num_classes: usize) -> Result<Self> {
        let feature_dim = utterances.first().map_or(0, |u| u.features.cols());
        let corpus = Self {
            utterances,
            feature_dim,
            num_classes,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    pub fn validate(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for u in &self.utterances {
            if !ids.insert(u.id.as_str()) {
                return Err(Error::Format(format!("duplicate utterance id `{}`", u.id)));
            }
            if u.features.cols() != self.feature_dim {
                return Err(Error::Format(format!(
                    "utterance `{}` has {} features, corpus has {}",
                    u.id,
                    u.features.cols(),
                    self.feature_dim
                )));
            }
            if let Some(labels) = &u.labels {
                if labels.len() != u.frames() {
                    return Err(Error::Format(format!(
                        "utterance `{}` has {} labels for {} frames",
                        u.id,
                        labels.len(),
                        u.frames()
                    )));
                }
                if let Some((t, &l)) = labels
                    .iter()
                    .enumerate()
                    .find(|(_, &l)| l >= self.num_classes)
                {
                    return Err(Error::Label {
                        frame: t,
                        label: l,
                        classes: self.num_classes,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.utterances.iter().map(Utterance::frames).sum()
    }

    /// Reverses every utterance in time (features and labels).
    pub fn time_reversed(&self) -> Corpus {
        let utterances = self
            .utterances
            .iter()
            .map(|u| {
                let t = u.frames();
                let mut features = Matrix::zeros(t, u.features.cols());
                for r in 0..t {
                    features.row_mut(r).copy_from_slice(u.features.row(t - 1 - r));
                }
                Utterance {
                    id: u.id.clone(),
                    features,
                    labels: u.labels.as_ref().map(|l| l.iter().rev().copied().collect()),
                }
            })
            .collect();
        Corpus {
            utterances,
            feature_dim: self.feature_dim,
            num_classes: self.num_classes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn utt(id: &str, t: usize, d: usize, labels: Option<Vec<usize>>) -> Utterance {
        Utterance {
            id: id.into(),
            features: Matrix::zeros(t, d),
            labels,
        }
    }

    #[test]
    fn corpus_invariants() {
        assert!(Corpus::new(vec![utt("a", 2, 3, None), utt("b", 1, 3, None)], 0).is_ok());
        assert!(Corpus::new(vec![utt("a", 2, 3, None), utt("a", 1, 3, None)], 0).is_err());
        assert!(Corpus::new(vec![utt("a", 2, 3, None), utt("b", 1, 2, None)], 0).is_err());
        assert!(Corpus::new(vec![utt("a", 2, 3, Some(vec![0]))], 2).is_err());
        assert!(matches!(
            Corpus::new(vec![utt("a", 2, 3, Some(vec![0, 2]))], 2),
            Err(Error::Label { frame: 1, .. })
        ));
    }
}
