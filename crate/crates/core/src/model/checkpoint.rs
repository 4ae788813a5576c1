//! Text checkpoint format.
//!
//! ```text
//! rmn-checkpoint 1
//! input_dim 440
//! ...                       (one `key value` line per configuration field)
//! tensor input_block.weight 440 1024
//! <one line of space-separated values per row>
//! tensor input_block.bias 1 1024
//! ...
//! end
//! ```
//!
//! Tensors appear in declared order and values are written with 17
//! significant digits, so a save/load round trip is value-exact. Gradient
//! and momentum buffers are not stored.

use std::fs;
use std::path::Path;

use super::config::RMNConfig;
use super::params::ModelParams;
use super::Model;
use crate::data::archive::format_real;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

const MAGIC: &str = "rmn-checkpoint 1";

pub fn to_string(model: &Model) -> String {
    let c = &model.config;
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let residual = c
        .residual_interval
        .map_or_else(|| "none".to_string(), |r| r.to_string());
    let fields = [
        ("input_dim", c.input_dim.to_string()),
        ("wide_dim", c.wide_dim.to_string()),
        ("memory_dim", c.memory_dim.to_string()),
        ("num_memory_layers", c.num_memory_layers.to_string()),
        ("num_classes", c.num_classes.to_string()),
        ("direction", c.direction.to_string()),
        ("shared_weight_form", c.shared_weight_form.to_string()),
        ("residual_interval", residual),
        ("delay_enabled", c.delay_enabled.to_string()),
        ("splice_left", c.splice_left.to_string()),
        ("splice_right", c.splice_right.to_string()),
    ];
    for (k, v) in fields {
        out.push_str(&format!("{k} {v}\n"));
    }
    for (name, p) in model.params.names().iter().zip(model.params.iter()) {
        let m = &p.value;
        out.push_str(&format!("tensor {name} {} {}\n", m.rows(), m.cols()));
        for r in 0..m.rows() {
            let line: Vec<String> = m.row(r).iter().map(|&v| format_real(v)).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, to_string(model))?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    from_str(&fs::read_to_string(path)?)
}

pub fn from_str(text: &str) -> Result<Model> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let perr = |line: usize, msg: String| Error::Parse { line, msg };

    match lines.next() {
        Some((_, MAGIC)) => {}
        Some((n, other)) => return Err(perr(n, format!("expected `{MAGIC}`, found `{other}`"))),
        None => return Err(perr(1, "empty checkpoint".into())),
    }

    let mut config = RMNConfig::default();
    let keys = [
        "input_dim",
        "wide_dim",
        "memory_dim",
        "num_memory_layers",
        "num_classes",
        "direction",
        "shared_weight_form",
        "residual_interval",
        "delay_enabled",
        "splice_left",
        "splice_right",
    ];
    for key in keys {
        let (n, line) = lines
            .next()
            .ok_or_else(|| perr(0, format!("missing `{key}`")))?;
        let (k, v) = line
            .split_once(' ')
            .ok_or_else(|| perr(n, format!("expected `{key} <value>`")))?;
        if k != key {
            return Err(perr(n, format!("expected `{key}`, found `{k}`")));
        }
        let bad = |e: String| perr(n, format!("bad value for {key}: {e}"));
        let count = |v: &str| v.parse::<usize>().map_err(|e| bad(e.to_string()));
        match key {
            "input_dim" => config.input_dim = count(v)?,
            "wide_dim" => config.wide_dim = count(v)?,
            "memory_dim" => config.memory_dim = count(v)?,
            "num_memory_layers" => config.num_memory_layers = count(v)?,
            "num_classes" => config.num_classes = count(v)?,
            "direction" => config.direction = v.parse().map_err(|e: Error| bad(e.to_string()))?,
            "shared_weight_form" => {
                config.shared_weight_form = v.parse().map_err(|e: Error| bad(e.to_string()))?
            }
            "residual_interval" => {
                config.residual_interval = if v == "none" { None } else { Some(count(v)?) }
            }
            "delay_enabled" => {
                config.delay_enabled = v.parse().map_err(|e: std::str::ParseBoolError| bad(e.to_string()))?
            }
            "splice_left" => config.splice_left = count(v)?,
            "splice_right" => config.splice_right = count(v)?,
            _ => unreachable!(),
        }
    }
    config.validate()?;

    let mut values = Vec::new();
    loop {
        let (n, line) = lines
            .next()
            .ok_or_else(|| perr(0, "missing `end`".into()))?;
        if line == "end" {
            break;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "tensor" {
            return Err(perr(n, format!("expected `tensor <name> <rows> <cols>`, found `{line}`")));
        }
        let rows: usize = parts[2].parse().map_err(|_| perr(n, "bad row count".into()))?;
        let cols: usize = parts[3].parse().map_err(|_| perr(n, "bad column count".into()))?;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (n, row) = lines
                .next()
                .ok_or_else(|| perr(0, format!("tensor {} truncated", parts[1])))?;
            let before = data.len();
            for tok in row.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|_| perr(n, format!("bad number `{tok}`")))?,
                );
            }
            if data.len() - before != cols {
                return Err(perr(
                    n,
                    format!("expected {cols} values, found {}", data.len() - before),
                ));
            }
        }
        values.push(Matrix::from_vec(rows, cols, data)?);
    }
    let params = ModelParams::from_values(&config, values)?;
    Ok(Model { config, params })
}
