use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::Corpus;

/// A span of one utterance that contributes loss to a minibatch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchItem {
    pub utt: usize,
    pub frames: Range<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Batch {
    pub items: Vec<BatchItem>,
}

impl Batch {
    pub fn frames(&self) -> usize {
        self.items.iter().map(|i| i.frames.len()).sum()
    }
}

/// Splits `0..len` into consecutive pieces of at most `chunk` frames.
pub fn chunk_ranges(len: usize, chunk: Option<usize>) -> Vec<Range<usize>> {
    match chunk {
        None | Some(0) => vec![0..len],
        Some(c) => (0..len).step_by(c).map(|s| s..(s + c).min(len)).collect(),
    }
}

/// Shuffles utterances by `seed` and groups them `max_utts` at a time.
///
/// Without truncation each group is one batch. With a truncation chunk the
/// group's utterances advance in lockstep: batch `j` of the group holds
/// chunk `j` of every utterance that has one.
pub fn make_minibatches(
    corpus: &Corpus,
    max_utts: usize,
    truncation_chunk: Option<usize>,
    seed: u64,
) -> Vec<Batch> {
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut batches = Vec::new();
    for group in order.chunks(max_utts.max(1)) {
        let chunks: Vec<Vec<Range<usize>>> = group
            .iter()
            .map(|&u| chunk_ranges(corpus.utterances[u].frames(), truncation_chunk))
            .collect();
        let steps = chunks.iter().map(Vec::len).max().unwrap_or(0);
        for step in 0..steps {
            let items = group
                .iter()
                .zip(&chunks)
                .filter_map(|(&utt, c)| {
                    c.get(step).map(|frames| BatchItem {
                        utt,
                        frames: frames.clone(),
                    })
                })
                .collect();
            batches.push(Batch { items });
        }
    }
    batches
}
