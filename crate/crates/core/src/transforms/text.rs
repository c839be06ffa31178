//! `Kind(M,P)` text form joined by `&`, e.g. `Cutout(L,1)&EraseObject(H,2/3)`.

use super::{
    AugmentationSequence, Magnitude, Probability, SequenceError, TransformKind, TransformSpec,
};
use std::fmt::Write;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("parse error at byte {position} near {token:?}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub token: String,
    pub message: String,
}

pub(super) fn render(seq: &AugmentationSequence) -> String {
    if seq.is_empty() {
        return "none".to_string();
    }
    let mut out = String::new();
    for (i, s) in seq.specs().iter().enumerate() {
        if i > 0 {
            out.push('&');
        }
        let m = match s.magnitude {
            Magnitude::Low => "L",
            Magnitude::High => "H",
        };
        let p = match s.probability {
            Probability::OneThird => "1/3",
            Probability::TwoThirds => "2/3",
            Probability::One => "1",
        };
        write!(out, "{}({m},{p})", s.kind.name()).unwrap();
    }
    out
}

fn kind_from_name(name: &str) -> Option<TransformKind> {
    if name == "EdgeNoise" {
        return Some(TransformKind::BoundaryNoise);
    }
    TransformKind::ALL.into_iter().find(|k| k.name() == name)
}

pub(super) fn parse(input: &str) -> Result<AugmentationSequence, ParseError> {
    let trimmed = input.trim();
    if trimmed.is_empty() || trimmed == "none" {
        return Ok(AugmentationSequence::empty());
    }
    let mut specs = Vec::new();
    let mut start = 0usize;
    for piece in input.split('&') {
        let lead = piece.len() - piece.trim_start().len();
        specs.push(parse_spec(piece.trim(), start + lead)?);
        start += piece.len() + 1;
    }
    AugmentationSequence::new(specs).map_err(|e| {
        let SequenceError::DuplicateKind { kind, .. } = &e else {
            unreachable!("no length limit at parse time")
        };
        let token = kind.name().to_string();
        let position = input.rfind(kind.name()).unwrap_or(0);
        ParseError {
            position,
            token,
            message: e.to_string(),
        }
    })
}

fn parse_spec(tok: &str, at: usize) -> Result<TransformSpec, ParseError> {
    let err = |offset: usize, token: &str, message: &str| ParseError {
        position: at + offset,
        token: token.to_string(),
        message: message.to_string(),
    };
    let open = tok
        .find('(')
        .ok_or_else(|| err(0, tok, "expected Kind(M,P)"))?;
    if !tok.ends_with(')') {
        return Err(err(tok.len(), tok, "missing closing parenthesis"));
    }
    let name = tok[..open].trim();
    let kind = kind_from_name(name).ok_or_else(|| err(0, name, "unknown transform kind"))?;
    let args = &tok[open + 1..tok.len() - 1];
    let (m, p) = args
        .split_once(',')
        .ok_or_else(|| err(open + 1, args, "expected two arguments"))?;
    let magnitude = match m.trim() {
        "L" => Magnitude::Low,
        "H" => Magnitude::High,
        other => return Err(err(open + 1, other, "magnitude must be L or H")),
    };
    let p_at = open + 2 + m.len();
    let probability = match p.trim() {
        "1/3" => Probability::OneThird,
        "2/3" => Probability::TwoThirds,
        "1" => Probability::One,
        other => return Err(err(p_at, other, "probability must be 1/3, 2/3 or 1")),
    };
    Ok(TransformSpec::new(kind, magnitude, probability))
}
