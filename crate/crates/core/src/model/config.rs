use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Uni,
    Bi,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SharedWeightForm {
    /// One scale per memory unit.
    Diagonal,
    /// A dense `memory_dim x memory_dim` transform.
    Full,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Uni => "uni",
            Direction::Bi => "bi",
        })
    }
}

impl FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uni" => Ok(Direction::Uni),
            "bi" => Ok(Direction::Bi),
            _ => Err(Error::Config(format!("unknown direction `{s}` (uni|bi)"))),
        }
    }
}

impl fmt::Display for SharedWeightForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SharedWeightForm::Diagonal => "diagonal",
            SharedWeightForm::Full => "full",
        })
    }
}

impl FromStr for SharedWeightForm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diagonal" | "diag" => Ok(SharedWeightForm::Diagonal),
            "full" => Ok(SharedWeightForm::Full),
            _ => Err(Error::Config(format!(
                "unknown shared_weight_form `{s}` (diagonal|full)"
            ))),
        }
    }
}

/// Architecture of a residual memory network.
///
/// The network is `input -> wide -> memory x L -> wide -> classes`. Every
/// memory layer is `memory_dim -> memory_dim` and adds a shared transform of
/// its own delayed pre-activation (and, for [`Direction::Bi`], of its
/// look-ahead pre-activation) before the relu.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RMNConfig {
    /// Input dimension after splicing.
    pub input_dim: usize,
    pub wide_dim: usize,
    pub memory_dim: usize,
    pub num_memory_layers: usize,
    pub num_classes: usize,
    pub direction: Direction,
    pub shared_weight_form: SharedWeightForm,
    /// Number of memory layers spanned by each identity shortcut.
    pub residual_interval: Option<usize>,
    pub delay_enabled: bool,
    pub splice_left: usize,
    pub splice_right: usize,
}

impl Default for RMNConfig {
    /// The 440-1024-[512 x 18]-1024-4006 unidirectional network.
    fn default() -> Self {
        Self {
            input_dim: 440,
            wide_dim: 1024,
            memory_dim: 512,
            num_memory_layers: 18,
            num_classes: 4006,
            direction: Direction::Uni,
            shared_weight_form: SharedWeightForm::Diagonal,
            residual_interval: Some(3),
            delay_enabled: true,
            splice_left: 0,
            splice_right: 0,
        }
    }
}

impl RMNConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("input_dim", self.input_dim),
            ("wide_dim", self.wide_dim),
            ("memory_dim", self.memory_dim),
            ("num_memory_layers", self.num_memory_layers),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if self.residual_interval == Some(0) {
            return Err(Error::Config("residual_interval must be at least 1".into()));
        }
        if self.direction == Direction::Bi && !self.delay_enabled {
            return Err(Error::Config(
                "bidirectional networks require delay_enabled".into(),
            ));
        }
        if self.input_dim % self.splice_width() != 0 {
            return Err(Error::Config(format!(
                "input_dim {} is not a multiple of the splice width {}",
                self.input_dim,
                self.splice_width()
            )));
        }
        Ok(())
    }

    pub fn splice_width(&self) -> usize {
        self.splice_left + 1 + self.splice_right
    }

    /// Feature dimension before splicing.
    pub fn raw_input_dim(&self) -> usize {
        self.input_dim / self.splice_width()
    }

    pub fn delay_schedule(&self) -> DelaySchedule {
        DelaySchedule::new(self.num_memory_layers, self.direction)
    }

    /// How many frames back the memory stack alone can see: `L(L+1)/2`, or 0
    /// without delays.
    pub fn model_past_reach(&self) -> usize {
        if self.delay_enabled {
            self.delay_schedule().total_past()
        } else {
            0
        }
    }

    pub fn model_future_reach(&self) -> usize {
        if self.delay_enabled && self.direction == Direction::Bi {
            self.delay_schedule().total_past()
        } else {
            0
        }
    }

    /// `true` when layer `l` (1-based) ends a residual block.
    pub fn is_shortcut_end(&self, layer: usize) -> bool {
        matches!(self.residual_interval, Some(r) if layer % r == 0)
    }
}

/// Per-layer delays: layer `l` of `L` looks `L − l + 1` frames back (and, for
/// bidirectional networks, the same distance ahead).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelaySchedule {
    past: Vec<usize>,
    future: Option<Vec<usize>>,
}

impl DelaySchedule {
    pub fn new(layers: usize, direction: Direction) -> Self {
        let past: Vec<usize> = (1..=layers).map(|l| layers - l + 1).collect();
        let future = (direction == Direction::Bi).then(|| past.clone());
        Self { past, future }
    }

    /// Past delay of layer `l` (1-based).
    pub fn past(&self, layer: usize) -> usize {
        self.past[layer - 1]
    }

    pub fn future(&self, layer: usize) -> Option<usize> {
        self.future.as_ref().map(|f| f[layer - 1])
    }

    pub fn past_delays(&self) -> &[usize] {
        &self.past
    }

    pub fn total_past(&self) -> usize {
        self.past.iter().sum()
    }
}
