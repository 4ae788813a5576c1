//! Naive per-frame reference network used as an oracle. Generic over the
//! scalar so that forward-mode dual numbers give exact directional
//! derivatives, and each memory layer owns its own copy of the delayed-tap
//! weights so that per-copy derivatives can be summed.
#![allow(dead_code)]

use std::ops::{Add, Mul, Sub};

use rmn::model::{Direction, ModelParams, RMNConfig, SharedWeightForm};
use rmn::numerics::Matrix;

pub trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> {
    fn c(v: f64) -> Self;
    fn re(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
}

impl Scalar for f64 {
    fn c(v: f64) -> Self {
        v
    }
    fn re(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub re: f64,
    pub du: f64,
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { re: self.re + o.re, du: self.du + o.du }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { re: self.re - o.re, du: self.du - o.du }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { re: self.re * o.re, du: self.du * o.re + self.re * o.du }
    }
}

impl Scalar for Dual {
    fn c(v: f64) -> Self {
        Dual { re: v, du: 0.0 }
    }
    fn re(self) -> f64 {
        self.re
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual { re: e, du: self.du * e }
    }
    fn ln(self) -> Self {
        Dual { re: self.re.ln(), du: self.du / self.re }
    }
}

fn relu<S: Scalar>(v: S) -> S {
    if v.re() > 0.0 {
        v
    } else {
        S::c(0.0)
    }
}

#[derive(Debug, Clone)]
pub struct Layer<S> {
    /// `w[i][j]` maps input `i` to output `j`.
    pub w: Vec<Vec<S>>,
    pub b: Vec<S>,
}

impl<S: Scalar> Layer<S> {
    fn from(w: &Matrix, b: &Matrix) -> Self {
        Layer {
            w: (0..w.rows()).map(|i| w.row(i).iter().map(|&v| S::c(v)).collect()).collect(),
            b: b.as_slice().iter().map(|&v| S::c(v)).collect(),
        }
    }

    fn apply(&self, x: &[S]) -> Vec<S> {
        (0..self.b.len())
            .map(|j| {
                let mut s = self.b[j];
                for (i, xi) in x.iter().enumerate() {
                    s = s + *xi * self.w[i][j];
                }
                s
            })
            .collect()
    }
}

/// Delayed-tap weight: `diag` for the diagonal form, `full[i][j]` otherwise.
#[derive(Debug, Clone)]
pub enum Tap<S> {
    Diag(Vec<S>),
    Full(Vec<Vec<S>>),
}

impl<S: Scalar> Tap<S> {
    fn from(m: &Matrix, form: SharedWeightForm) -> Self {
        match form {
            SharedWeightForm::Diagonal => Tap::Diag(m.as_slice().iter().map(|&v| S::c(v)).collect()),
            SharedWeightForm::Full => Tap::Full(
                (0..m.rows()).map(|i| m.row(i).iter().map(|&v| S::c(v)).collect()).collect(),
            ),
        }
    }

    fn apply(&self, x: &[S]) -> Vec<S> {
        match self {
            Tap::Diag(d) => x.iter().zip(d).map(|(a, b)| *a * *b).collect(),
            Tap::Full(w) => (0..x.len())
                .map(|j| {
                    let mut s = S::c(0.0);
                    for (i, xi) in x.iter().enumerate() {
                        s = s + *xi * w[i][j];
                    }
                    s
                })
                .collect(),
        }
    }

    fn entries_mut(&mut self) -> Vec<&mut S> {
        match self {
            Tap::Diag(d) => d.iter_mut().collect(),
            Tap::Full(w) => w.iter_mut().flatten().collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reference<S> {
    pub config: RMNConfig,
    pub input: Layer<S>,
    pub projection: Layer<S>,
    pub memory: Vec<Layer<S>>,
    /// One past tap per memory layer.
    pub past: Vec<Tap<S>>,
    /// One future tap per memory layer (bidirectional only).
    pub future: Vec<Tap<S>>,
    pub hidden: Layer<S>,
    pub output: Layer<S>,
}

impl<S: Scalar> Reference<S> {
    /// Unties the shared weights into one identical copy per layer.
    pub fn from_params(params: &ModelParams, config: &RMNConfig) -> Self {
        let form = config.shared_weight_form;
        let l = config.num_memory_layers;
        let d = |p: &rmn::model::Dense<rmn::numerics::Parameter>| Layer::from(&p.weight.value, &p.bias.value);
        Reference {
            config: config.clone(),
            input: d(&params.input_block),
            projection: d(&params.projection),
            memory: params.memory_layers.iter().map(d).collect(),
            past: (0..l).map(|_| Tap::from(&params.shared_past.value, form)).collect(),
            future: match &params.shared_future {
                Some(p) => (0..l).map(|_| Tap::from(&p.value, form)).collect(),
                None => Vec::new(),
            },
            hidden: d(&params.output_hidden),
            output: d(&params.output),
        }
    }

    /// Every scalar paired with the flat index of the tied parameter it
    /// came from (the order of `ModelParams::flat_values`).
    pub fn slots_mut(&mut self) -> Vec<(usize, &mut S)> {
        fn dense<'a, S>(l: &'a mut Layer<S>, out: &mut Vec<(usize, &'a mut S)>, next: &mut usize) {
            for v in l.w.iter_mut().flatten().chain(l.b.iter_mut()) {
                out.push((*next, v));
                *next += 1;
            }
        }
        let mut out = Vec::new();
        let mut next = 0;
        dense(&mut self.input, &mut out, &mut next);
        dense(&mut self.projection, &mut out, &mut next);
        for m in &mut self.memory {
            dense(m, &mut out, &mut next);
        }
        for group in [&mut self.past, &mut self.future] {
            let mut width = 0;
            for tap in group.iter_mut() {
                let entries = tap.entries_mut();
                width = entries.len();
                for (k, v) in entries.into_iter().enumerate() {
                    out.push((next + k, v));
                }
            }
            next += width;
        }
        dense(&mut self.hidden, &mut out, &mut next);
        dense(&mut self.output, &mut out, &mut next);
        out
    }

    /// Logits for every frame, evaluated one frame and one unit at a time.
    pub fn logits(&self, x: &Matrix) -> Vec<Vec<S>> {
        let c = &self.config;
        let t_len = x.rows();
        let frames: Vec<Vec<S>> = (0..t_len)
            .map(|t| x.row(t).iter().map(|&v| S::c(v)).collect())
            .collect();
        let mut v: Vec<Vec<S>> = frames
            .iter()
            .map(|f| {
                let u: Vec<S> = self.input.apply(f).into_iter().map(relu).collect();
                self.projection.apply(&u).into_iter().map(relu).collect()
            })
            .collect();
        let mut outs = vec![v.clone()];
        let big_l = c.num_memory_layers;
        for l in 1..=big_l {
            let m = big_l - l + 1;
            let h: Vec<Vec<S>> = v.iter().map(|f| self.memory[l - 1].apply(f)).collect();
            let mut next = Vec::with_capacity(t_len);
            for t in 0..t_len {
                let mut z = h[t].clone();
                if c.delay_enabled {
                    if t >= m {
                        for (a, b) in z.iter_mut().zip(self.past[l - 1].apply(&h[t - m])) {
                            *a = *a + b;
                        }
                    }
                    if c.direction == Direction::Bi && t + m < t_len {
                        for (a, b) in z.iter_mut().zip(self.future[l - 1].apply(&h[t + m])) {
                            *a = *a + b;
                        }
                    }
                }
                let mut y: Vec<S> = z.into_iter().map(relu).collect();
                if let Some(r) = c.residual_interval {
                    if l % r == 0 {
                        for (a, b) in y.iter_mut().zip(&outs[l - r][t]) {
                            *a = *a + *b;
                        }
                    }
                }
                next.push(y);
            }
            outs.push(next.clone());
            v = next;
        }
        v.iter()
            .map(|f| {
                let h: Vec<S> = self.hidden.apply(f).into_iter().map(relu).collect();
                self.output.apply(&h)
            })
            .collect()
    }

    /// Mean per-frame cross-entropy.
    pub fn loss(&self, x: &Matrix, labels: &[usize]) -> S {
        let logits = self.logits(x);
        let mut total = S::c(0.0);
        for (row, &y) in logits.iter().zip(labels) {
            let mx = row.iter().map(|v| v.re()).fold(f64::NEG_INFINITY, f64::max);
            let mut z = S::c(0.0);
            for v in row {
                z = z + (*v - S::c(mx)).exp();
            }
            total = total + (z.ln() + S::c(mx) - row[y]);
        }
        total * S::c(1.0 / labels.len() as f64)
    }
}

/// Exact derivative of the mean loss w.r.t. every untied scalar, returned as
/// `(tied flat index, derivative)` pairs.
pub fn untied_derivatives(
    params: &ModelParams,
    config: &RMNConfig,
    x: &Matrix,
    labels: &[usize],
) -> Vec<(usize, f64)> {
    let base = Reference::<Dual>::from_params(params, config);
    let count = base.clone().slots_mut().len();
    (0..count)
        .map(|k| {
            let mut r = base.clone();
            let mut slots = r.slots_mut();
            let idx = slots[k].0;
            slots[k].1.du = 1.0;
            drop(slots);
            (idx, r.loss(x, labels).du)
        })
        .collect()
}

/// Tiny configurations spanning both directions, both shared-weight forms
/// and residual on/off.
pub fn tiny_configs() -> Vec<RMNConfig> {
    let mut out = Vec::new();
    for direction in [Direction::Uni, Direction::Bi] {
        for form in [SharedWeightForm::Diagonal, SharedWeightForm::Full] {
            for residual in [Some(2), None] {
                out.push(RMNConfig {
                    input_dim: 6,
                    wide_dim: 8,
                    memory_dim: 5,
                    num_memory_layers: 3,
                    num_classes: 4,
                    direction,
                    shared_weight_form: form,
                    residual_interval: residual,
                    ..RMNConfig::default()
                });
            }
        }
    }
    out
}

pub fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}
