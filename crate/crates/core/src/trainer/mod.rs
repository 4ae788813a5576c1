//! Frame-level cross-entropy training and evaluation.

mod batch;
mod schedule;
mod sgd;

pub use batch::{chunk_ranges, make_minibatches, Batch, BatchItem};
pub use schedule::lr_for_epoch;
pub use sgd::sgd_step;

use std::time::Instant;

use crate::data::Corpus;
use crate::error::{Error, Result};
use crate::model::{backward_into, context_window, forward, streaming_forward, Gradients, Model};
use crate::numerics::{softmax_xent_rows, Matrix};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    RampThenHalve,
    ConstantThenHalve,
}

impl std::str::FromStr for Schedule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ramp_then_halve" => Ok(Schedule::RampThenHalve),
            "constant_then_halve" => Ok(Schedule::ConstantThenHalve),
            _ => Err(Error::Config(format!(
                "unknown schedule `{s}` (ramp_then_halve|constant_then_halve)"
            ))),
        }
    }
}

impl std::fmt::Display for Schedule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Schedule::RampThenHalve => "ramp_then_halve",
            Schedule::ConstantThenHalve => "constant_then_halve",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub schedule: Schedule,
    pub base_lr: f64,
    pub peak_lr: f64,
    pub ramp_epochs: usize,
    pub halve_factor: f64,
    pub momentum: f64,
    pub l2: f64,
    pub max_utts_per_batch: usize,
    /// Frames per truncation chunk; `None` trains on whole utterances.
    pub truncation_chunk: Option<usize>,
    pub max_epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// The unidirectional regimen: 0.2 ramping to 1.0 over four epochs,
    /// momentum 0.9, L2 1e-5, 10 utterances of 256-frame chunks per batch.
    fn default() -> Self {
        Self {
            schedule: Schedule::RampThenHalve,
            base_lr: 0.2,
            peak_lr: 1.0,
            ramp_epochs: 4,
            halve_factor: 0.5,
            momentum: 0.9,
            l2: 1e-5,
            max_utts_per_batch: 10,
            truncation_chunk: Some(256),
            max_epochs: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The bidirectional regimen: a fixed 0.000095 start with halving.
    pub fn bidirectional() -> Self {
        Self {
            schedule: Schedule::ConstantThenHalve,
            base_lr: 0.000095,
            peak_lr: 0.000095,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum {} not in [0, 1)", self.momentum)));
        }
        if self.l2 < 0.0 || !self.l2.is_finite() {
            return Err(Error::Config(format!("l2 {} must be >= 0", self.l2)));
        }
        if !(self.halve_factor > 0.0 && self.halve_factor < 1.0) {
            return Err(Error::Config(format!(
                "halve_factor {} not in (0, 1)",
                self.halve_factor
            )));
        }
        // zero is allowed: an lr=0 run only measures the untrained model
        if !(self.base_lr >= 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr {} must be >= 0", self.base_lr)));
        }
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) {
            return Err(Error::Config(format!("peak_lr {} must be >= 0", self.peak_lr)));
        }
        if self.max_utts_per_batch == 0 {
            return Err(Error::Config("max_utts_per_batch must be at least 1".into()));
        }
        if self.truncation_chunk == Some(0) {
            return Err(Error::Config("truncation_chunk must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Nats per frame.
    pub train_ce: f64,
    pub valid_ce: f64,
    pub train_fer: f64,
    pub valid_fer: f64,
    pub wall_seconds: f64,
}

impl EpochStats {
    pub const CSV_HEADER: &'static str = "epoch,lr,train_ce,valid_ce,train_fer,valid_fer,wall_seconds";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:.3}",
            self.epoch,
            self.lr,
            self.train_ce,
            self.valid_ce,
            self.train_fer,
            self.valid_fer,
            self.wall_seconds
        )
    }
}

/// Cross-entropy and frame error rate over the scored frames of a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalStats {
    pub ce: f64,
    pub fer: f64,
    pub frames: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    ce: f64,
    errors: usize,
    frames: usize,
}

impl Tally {
    fn add(&mut self, other: Tally) {
        self.ce += other.ce;
        self.errors += other.errors;
        self.frames += other.frames;
    }

    fn stats(self) -> EvalStats {
        if self.frames == 0 {
            return EvalStats::default();
        }
        EvalStats {
            ce: self.ce / self.frames as f64,
            fer: self.errors as f64 / self.frames as f64,
            frames: self.frames,
        }
    }
}

/// First index of the largest value.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn tally(
    logits: &Matrix,
    labels: &[usize],
    rows: std::ops::Range<usize>,
    exclude: Option<usize>,
) -> Result<Tally> {
    let mut t = Tally::default();
    for r in rows {
        if exclude == Some(labels[r]) {
            continue;
        }
        let (ce, _) = softmax_xent_rows(logits, labels, r..r + 1, 0.0)?;
        t.ce += ce;
        t.errors += (argmax(logits.row(r)) != labels[r]) as usize;
        t.frames += 1;
    }
    Ok(t)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct EvalOptions {
    /// Frames whose label equals this class are not scored.
    pub exclude_class: Option<usize>,
    /// `(chunk_size, lookahead)` for bounded-latency evaluation.
    pub stream: Option<(usize, usize)>,
}

fn check_corpus(model: &Model, corpus: &Corpus, what: &str) -> Result<()> {
    let c = &model.config;
    if !corpus.is_empty() && corpus.feature_dim != c.raw_input_dim() {
        return Err(Error::Config(format!(
            "{what} corpus has {} features, model expects {}",
            corpus.feature_dim,
            c.raw_input_dim()
        )));
    }
    if corpus.num_classes != c.num_classes {
        return Err(Error::Config(format!(
            "{what} corpus has {} classes, model has {}",
            corpus.num_classes, c.num_classes
        )));
    }
    if let Some(u) = corpus.utterances.iter().find(|u| u.labels.is_none()) {
        return Err(Error::Config(format!("{what} utterance `{}` has no labels", u.id)));
    }
    Ok(())
}

/// Mean cross-entropy and frame error rate; argmax ties go to the lowest
/// class index. Utterances are evaluated independently and reduced in
/// corpus order.
pub fn evaluate(model: &Model, corpus: &Corpus) -> Result<EvalStats> {
    evaluate_with(model, corpus, EvalOptions::default(), Exec::default())
}

pub fn evaluate_with(
    model: &Model,
    corpus: &Corpus,
    opts: EvalOptions,
    exec: Exec,
) -> Result<EvalStats> {
    check_corpus(model, corpus, "evaluation")?;
    let per_utt = exec.map(&corpus.utterances, |u| -> Result<Tally> {
        if u.frames() == 0 {
            return Ok(Tally::default());
        }
        let x = model.prepare_input(&u.features)?;
        let logits = match opts.stream {
            Some((chunk, lookahead)) => {
                streaming_forward(&model.params, &model.config, &x, chunk, lookahead)?
            }
            None => forward(&model.params, &model.config, &x)?.1,
        };
        let labels = u.labels.as_deref().expect("checked");
        tally(&logits, labels, 0..u.frames(), opts.exclude_class)
    });
    let mut total = Tally::default();
    for t in per_utt {
        total.add(t?);
    }
    Ok(total.stats())
}

/// Trains `model` in place with the default execution strategy.
pub fn fit(
    model: &mut Model,
    train: &Corpus,
    valid: &Corpus,
    config: &TrainConfig,
) -> Result<Vec<EpochStats>> {
    fit_with(model, train, valid, config, Exec::default(), |_, _| Ok(()))
}

/// Trains `model` in place, calling `on_epoch` after every epoch.
///
/// Each batch item is differentiated into its own gradient buffer and the
/// buffers are summed in batch order, so results do not depend on `exec`.
/// Training stops after `max_epochs` or once the learning rate falls below
/// `base_lr / 64`.
pub fn fit_with<F>(
    model: &mut Model,
    train: &Corpus,
    valid: &Corpus,
    config: &TrainConfig,
    exec: Exec,
    mut on_epoch: F,
) -> Result<Vec<EpochStats>>
where
    F: FnMut(&EpochStats, &Model) -> Result<()>,
{
    config.validate()?;
    model.config.validate()?;
    model.params.check_shapes(&model.config)?;
    check_corpus(model, train, "training")?;
    check_corpus(model, valid, "validation")?;
    if train.total_frames() == 0 {
        return Err(Error::Config("training corpus has no frames".into()));
    }

    let inputs: Vec<Matrix> = train
        .utterances
        .iter()
        .map(|u| model.prepare_input(&u.features))
        .collect::<Result<_>>()?;
    let lookahead = model.config.model_future_reach();

    let mut history = Vec::new();
    let mut valid_ce = Vec::new();
    for epoch in 1..=config.max_epochs {
        let lr = lr_for_epoch(config, epoch, &valid_ce);
        if lr < config.base_lr / 64.0 {
            break;
        }
        let started = Instant::now();
        let seed = config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ epoch as u64;
        let batches = make_minibatches(train, config.max_utts_per_batch, config.truncation_chunk, seed);
        let mut train_tally = Tally::default();
        for batch in &batches {
            let n = batch.frames();
            if n == 0 {
                continue;
            }
            let scale = 1.0 / n as f64;
            let (cfg, params) = (&model.config, &model.params);
            let results = exec.map(&batch.items, |item| -> Result<(Gradients, Tally)> {
                let x = &inputs[item.utt];
                let labels = train.utterances[item.utt].labels.as_deref().expect("checked");
                let window = context_window(cfg, x.rows(), &item.frames, lookahead);
                let (xs, ls) = if window == (0..x.rows()) {
                    (x.clone(), labels.to_vec())
                } else {
                    (x.slice_rows(window.start, window.end), labels[window.clone()].to_vec())
                };
                let rows = item.frames.start - window.start..item.frames.end - window.start;
                let (cache, logits) = forward(params, cfg, &xs)?;
                let mut grads = Gradients::zeros_like(params);
                backward_into(params, cfg, &cache, &ls, rows.clone(), scale, &mut grads)?;
                Ok((grads, tally(&logits, &ls, rows, None)?))
            });
            for r in results {
                let (grads, t) = r?;
                model.params.accumulate(&grads)?;
                train_tally.add(t);
            }
            sgd_step(&mut model.params, lr, config.momentum, config.l2)
                .map_err(|e| Error::Numeric(format!("epoch {epoch}: {e}")))?;
        }
        let v = evaluate_with(model, valid, EvalOptions::default(), exec)?;
        let t = train_tally.stats();
        valid_ce.push(v.ce);
        let stats = EpochStats {
            epoch,
            lr,
            train_ce: t.ce,
            valid_ce: v.ce,
            train_fer: t.fer,
            valid_fer: v.fer,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&stats, model)?;
        history.push(stats);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_delayed_recall, Utterance};
    use crate::model::RMNConfig;

    fn small_model(classes: usize, feats: usize) -> Model {
        Model::new(
            RMNConfig {
                input_dim: feats,
                wide_dim: 6,
                memory_dim: 4,
                num_memory_layers: 2,
                num_classes: classes,
                ..RMNConfig::default()
            },
            3,
        )
        .unwrap()
    }

    fn labelled(id: &str, logits: Matrix, labels: Vec<usize>) -> (Matrix, Utterance) {
        let t = labels.len();
        (
            logits,
            Utterance {
                id: id.into(),
                features: Matrix::zeros(t, 1),
                labels: Some(labels),
            },
        )
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[0.0, 0.0]), 0);
    }

    #[test]
    fn tally_examples() {
        // one-hot logits predicting every label: no errors
        let (l, u) = labelled("a", Matrix::from_rows(&[[9.0, 0.0], [0.0, 9.0]]), vec![0, 1]);
        let t = tally(&l, u.labels.as_ref().unwrap(), 0..2, None).unwrap().stats();
        assert_eq!(t.fer, 0.0);

        // uniform logits: CE = ln K, every non-zero label is an error
        let (l, u) = labelled("b", Matrix::zeros(4, 4), vec![0, 1, 2, 3]);
        let t = tally(&l, u.labels.as_ref().unwrap(), 0..4, None).unwrap().stats();
        assert!((t.ce - 4f64.ln()).abs() < 1e-12);
        assert_eq!(t.fer, 0.75);

        // hand-counted: argmaxes [0, 2, 1] vs labels [0, 2, 2]
        let logits = Matrix::from_rows(&[[3.0, 1.0, 0.0], [0.0, 1.0, 2.0], [0.0, 5.0, 4.0]]);
        let t = tally(&logits, &[0, 2, 2], 0..3, None).unwrap().stats();
        assert_eq!(t.fer, 1.0 / 3.0);
        let t = tally(&logits, &[0, 2, 2], 0..3, Some(0)).unwrap().stats();
        assert_eq!((t.frames, t.fer), (2, 0.5));
    }

    #[test]
    fn config_validation() {
        TrainConfig::default().validate().unwrap();
        TrainConfig::bidirectional().validate().unwrap();
        for bad in [
            TrainConfig { momentum: 1.0, ..TrainConfig::default() },
            TrainConfig { l2: -1.0, ..TrainConfig::default() },
            TrainConfig { halve_factor: 1.0, ..TrainConfig::default() },
            TrainConfig { base_lr: -0.1, ..TrainConfig::default() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn training_lowers_training_loss() {
        let train = gen_delayed_recall(3, 1, 12, 8, 0).unwrap();
        let mut model = small_model(4, 3);
        let before = evaluate(&model, &train).unwrap();
        let cfg = TrainConfig {
            schedule: Schedule::ConstantThenHalve,
            base_lr: 0.05,
            max_utts_per_batch: 2,
            max_epochs: 5,
            ..TrainConfig::default()
        };
        let stats = fit(&mut model, &train, &train, &cfg).unwrap();
        assert_eq!(stats.len(), 5);
        assert!(evaluate(&model, &train).unwrap().ce < before.ce);
    }

    #[test]
    fn dimension_mismatch_is_a_config_error() {
        let train = gen_delayed_recall(3, 1, 12, 2, 0).unwrap();
        let mut model = small_model(4, 5);
        let err = fit(&mut model, &train, &train, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let mut model = small_model(3, 3);
        let err = fit(&mut model, &train, &train, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn csv_row_layout() {
        let s = EpochStats {
            epoch: 3,
            lr: 0.5,
            train_ce: 1.25,
            valid_ce: 1.5,
            train_fer: 0.25,
            valid_fer: 0.5,
            wall_seconds: 1.23456,
        };
        assert_eq!(s.csv_row(), "3,0.5,1.25,1.5,0.25,0.5,1.235");
        assert_eq!(EpochStats::CSV_HEADER.split(',').count(), 7);
    }
}
