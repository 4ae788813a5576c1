//! Text matrix archive.
//!
//! ```text
//! <utt-id> [ K
//!  r11 r12 ... r1d
//!  ...
//!  rT1 ... rTd ]
//! labels <utt-id> l1 l2 ... lT
//! ```
//!
//! `K` is the corpus class count (0 when unlabeled). The labels line is
//! optional and keyed by utterance id. Reals carry 17 significant digits.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::{Corpus, Utterance};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Formats `v` like C's `%.17g`: shortest of fixed or exponent notation,
/// trailing zeros removed. Parsing the result yields `v` exactly.
pub fn format_real(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0" } else { "0" }.into();
    }
    let sci = format!("{v:.16e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    fn trim(s: &str) -> &str {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.')
        } else {
            s
        }
    }
    if !(-5..17).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{sign}{:02}", trim(mantissa), exp.abs())
    } else {
        let decimals = (16 - exp) as usize;
        trim(&format!("{v:.decimals$}")).to_string()
    }
}

pub fn write_archive(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, archive_to_string(corpus)?)?;
    Ok(())
}

pub fn archive_to_string(corpus: &Corpus) -> Result<String> {
    corpus.validate()?;
    let mut out = String::new();
    for u in &corpus.utterances {
        if u.id.is_empty() || u.id == "labels" || u.id.chars().any(char::is_whitespace) {
            return Err(Error::Format(format!("utterance id `{}` cannot be archived", u.id)));
        }
        out.push_str(&format!("{} [ {}\n", u.id, corpus.num_classes));
        let t = u.frames();
        if t == 0 {
            out.push_str(" ]\n");
        }
        for r in 0..t {
            for v in u.features.row(r) {
                out.push(' ');
                out.push_str(&format_real(*v));
            }
            out.push_str(if r + 1 == t { " ]\n" } else { "\n" });
        }
        if let Some(labels) = &u.labels {
            out.push_str("labels ");
            out.push_str(&u.id);
            for l in labels {
                out.push_str(&format!(" {l}"));
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn read_archive(path: impl AsRef<Path>) -> Result<Corpus> {
    parse_archive(&fs::read_to_string(path)?)
}

fn finish(
    block: Block,
    dim: usize,
    utterances: &mut Vec<Utterance>,
    index: &mut HashMap<String, usize>,
) -> Result<()> {
    if index.contains_key(&block.id) {
        return Err(Error::Format(format!(
            "duplicate utterance id `{}` (line {})",
            block.id, block.line
        )));
    }
    let features = Matrix::from_vec(block.frames, dim, block.rows)?;
    index.insert(block.id.clone(), utterances.len());
    utterances.push(Utterance {
        id: block.id,
        features,
        labels: None,
    });
    Ok(())
}

struct Block {
    id: String,
    rows: Vec<f64>,
    frames: usize,
    line: usize,
}

pub fn parse_archive(text: &str) -> Result<Corpus> {
    let perr = |line: usize, msg: String| Error::Parse { line, msg };
    let mut utterances: Vec<Utterance> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut feature_dim: Option<usize> = None;
    let mut num_classes: Option<usize> = None;
    let mut open: Option<Block> = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut tokens: Vec<&str> = raw.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }

        if let Some(block) = open.as_mut() {
            let closes = tokens.last() == Some(&"]");
            if closes {
                tokens.pop();
            }
            if !tokens.is_empty() {
                match feature_dim {
                    Some(d) if d != tokens.len() => {
                        return Err(perr(
                            line,
                            format!("expected {d} columns, found {}", tokens.len()),
                        ))
                    }
                    None => feature_dim = Some(tokens.len()),
                    _ => {}
                }
                for tok in &tokens {
                    let v = tok
                        .parse::<f64>()
                        .map_err(|_| perr(line, format!("bad number `{tok}`")))?;
                    block.rows.push(v);
                }
                block.frames += 1;
            }
            if closes {
                let block = open.take().expect("open block");
                finish(block, feature_dim.unwrap_or(0), &mut utterances, &mut index)?;
            }
            continue;
        }

        if tokens[0] == "labels" {
            let id = tokens
                .get(1)
                .ok_or_else(|| perr(line, "labels line without an utterance id".into()))?;
            let &u = index
                .get(*id)
                .ok_or_else(|| perr(line, format!("labels for unknown utterance `{id}`")))?;
            let utt = &mut utterances[u];
            if utt.labels.is_some() {
                return Err(perr(line, format!("second labels line for `{id}`")));
            }
            let labels = tokens[2..]
                .iter()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| perr(line, "labels must be non-negative integers".into()))?;
            if labels.len() != utt.frames() {
                return Err(perr(
                    line,
                    format!("{} labels for {} frames", labels.len(), utt.frames()),
                ));
            }
            let classes = num_classes.unwrap_or(0);
            if let Some(bad) = labels.iter().find(|&&l| l >= classes) {
                return Err(perr(line, format!("label {bad} outside [0, {classes})")));
            }
            utt.labels = Some(labels);
            continue;
        }

        // header: <id> [ K   (optionally followed by `]` for an empty utterance)
        let empty = tokens.len() == 4 && tokens[3] == "]";
        if !(tokens.len() == 3 || empty) || tokens[1] != "[" {
            return Err(perr(line, format!("expected `<utt-id> [ K`, found `{}`", raw.trim())));
        }
        let classes: usize = tokens[2]
            .parse()
            .map_err(|_| perr(line, format!("bad class count `{}`", tokens[2])))?;
        match num_classes {
            Some(k) if k != classes => {
                return Err(perr(line, format!("class count {classes} differs from {k}")))
            }
            _ => num_classes = Some(classes),
        }
        let block = Block {
            id: tokens[0].to_string(),
            rows: Vec::new(),
            frames: 0,
            line,
        };
        if empty {
            finish(block, feature_dim.unwrap_or(0), &mut utterances, &mut index)?;
        } else {
            open = Some(block);
        }
    }
    if let Some(block) = open {
        return Err(perr(block.line, format!("utterance `{}` is not closed", block.id)));
    }
    let feature_dim = feature_dim.unwrap_or(0);
    // empty utterances seen before the first row were sized with width 0
    for u in utterances.iter_mut().filter(|u| u.frames() == 0) {
        u.features = Matrix::zeros(0, feature_dim);
    }
    let corpus = Corpus {
        utterances,
        feature_dim,
        num_classes: num_classes.unwrap_or(0),
    };
    corpus.validate()?;
    Ok(corpus)
}
