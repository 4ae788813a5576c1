use super::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Concatenates frames `t-left ..= t+right` into row `t`, replicating the
/// first/last frame beyond the sequence edges.
pub fn splice(features: &Matrix, left: usize, right: usize) -> Matrix {
    let (t, d) = features.shape();
    let width = left + 1 + right;
    if width == 1 {
        return features.clone();
    }
    let mut out = Matrix::zeros(t, d * width);
    if t == 0 {
        return out;
    }
    for r in 0..t {
        let row = out.row_mut(r);
        for (k, chunk) in row.chunks_mut(d).enumerate() {
            let src = (r + k).saturating_sub(left).min(t - 1);
            chunk.copy_from_slice(features.row(src));
        }
    }
    out
}

/// Appends the same vector to every frame (e.g. a per-speaker embedding).
pub fn append_constant(features: &Matrix, v: &[f64]) -> Matrix {
    let (t, d) = features.shape();
    let mut out = Matrix::zeros(t, d + v.len());
    for r in 0..t {
        let row = out.row_mut(r);
        row[..d].copy_from_slice(features.row(r));
        row[d..].copy_from_slice(v);
    }
    out
}

/// Per-dimension corpus mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FeatureStats {
    pub fn from_corpus(corpus: &Corpus) -> Result<Self> {
        let n = corpus.total_frames();
        if n < 2 {
            return Err(Error::Input(format!(
                "normalisation needs at least 2 frames, corpus has {n}"
            )));
        }
        let d = corpus.feature_dim;
        let mut mean = vec![0.0; d];
        for u in &corpus.utterances {
            for t in 0..u.frames() {
                for (m, v) in mean.iter_mut().zip(u.features.row(t)) {
                    *m += v;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0; d];
        for u in &corpus.utterances {
            for t in 0..u.frames() {
                for ((s, v), m) in var.iter_mut().zip(u.features.row(t)).zip(&mean) {
                    *s += (v - m) * (v - m);
                }
            }
        }
        let std = var.iter().map(|s| (s / n as f64).sqrt()).collect();
        Ok(Self { mean, std })
    }

    /// Centres every dimension and scales those with non-zero spread.
    pub fn apply(&self, corpus: &Corpus) -> Corpus {
        let utterances = corpus
            .utterances
            .iter()
            .map(|u| {
                let mut features = u.features.clone();
                for t in 0..features.rows() {
                    for ((v, m), s) in features.row_mut(t).iter_mut().zip(&self.mean).zip(&self.std) {
                        *v -= m;
                        if *s > 0.0 {
                            *v /= s;
                        }
                    }
                }
                Utterance {
                    features,
                    ..u.clone()
                }
            })
            .collect();
        Corpus {
            utterances,
            ..corpus.clone()
        }
    }
}

/// Global zero-mean, unit-variance normalisation per feature dimension.
pub fn mean_var_normalize(corpus: &Corpus) -> Result<Corpus> {
    Ok(FeatureStats::from_corpus(corpus)?.apply(corpus))
}
