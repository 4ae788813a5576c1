//! Synthetic frame-labelling tasks whose difficulty is purely temporal.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

fn one_hot_frames(classes: usize, frames: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, Matrix) {
    let ids: Vec<usize> = (0..frames).map(|_| rng.random_range(0..classes)).collect();
    let mut m = Matrix::zeros(frames, classes);
    for (t, &c) in ids.iter().enumerate() {
        m.set(t, c, 1.0);
    }
    (ids, m)
}

fn recall(
    classes: usize,
    delay: usize,
    frames: usize,
    n_utts: usize,
    seed: u64,
    label_of: impl Fn(&[usize], usize) -> Option<usize>,
) -> Result<Corpus> {
    if classes == 0 {
        return Err(Error::Input("need at least one class".into()));
    }
    if delay >= frames {
        return Err(Error::Input(format!(
            "delay {delay} must be shorter than the utterance ({frames} frames)"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utterances = (0..n_utts)
        .map(|i| {
            let (ids, features) = one_hot_frames(classes, frames, &mut rng);
            let labels = (0..frames)
                .map(|t| label_of(&ids, t).unwrap_or(classes))
                .collect();
            Utterance {
                id: format!("utt{i:05}"),
                features,
                labels: Some(labels),
            }
        })
        .collect();
    Corpus::new(utterances, classes + 1)
}

/// One-hot frames over `classes` symbols; frame `t` is labelled with the
/// symbol seen `delay` frames earlier, or with the extra null class `classes`
/// when there is no such frame.
pub fn gen_delayed_recall(
    classes: usize,
    delay: usize,
    frames: usize,
    n_utts: usize,
    seed: u64,
) -> Result<Corpus> {
    recall(classes, delay, frames, n_utts, seed, |ids, t| {
        t.checked_sub(delay).map(|s| ids[s])
    })
}

/// Mirror of [`gen_delayed_recall`]: frame `t` is labelled with the symbol
/// `delay` frames ahead.
pub fn gen_future_recall(
    classes: usize,
    delay: usize,
    frames: usize,
    n_utts: usize,
    seed: u64,
) -> Result<Corpus> {
    recall(classes, delay, frames, n_utts, seed, |ids, t| {
        ids.get(t + delay).copied()
    })
}

/// ±1 frames; label is the parity of the number of `+1` frames among the
/// last `window` frames (fewer at the start of the utterance).
pub fn gen_parity(window: usize, frames: usize, n_utts: usize, seed: u64) -> Result<Corpus> {
    if window == 0 {
        return Err(Error::Input("parity window must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let utterances = (0..n_utts)
        .map(|i| {
            let signs: Vec<bool> = (0..frames).map(|_| rng.random_bool(0.5)).collect();
            let data = signs.iter().map(|&p| if p { 1.0 } else { -1.0 }).collect();
            let labels = parity_labels(&signs, window);
            Utterance {
                id: format!("utt{i:05}"),
                features: Matrix::from_vec(frames, 1, data).expect("shape"),
                labels: Some(labels),
            }
        })
        .collect();
    Corpus::new(utterances, 2)
}

/// Running parity of `true` frames over a sliding window.
pub(crate) fn parity_labels(positive: &[bool], window: usize) -> Vec<usize> {
    let mut labels = Vec::with_capacity(positive.len());
    let mut count = 0usize;
    for t in 0..positive.len() {
        count += positive[t] as usize;
        if t >= window {
            count -= positive[t - window] as usize;
        }
        labels.push(count % 2);
    }
    labels
}
