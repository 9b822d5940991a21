//! Alpha-vector policy files.
//!
//! ```text
//! # states: 3
//! 0
//! -200 -200 -200
//!
//! ```
//!
//! Each record is an action line, a coefficient line and a blank line. The
//! `# states:` header is optional on input. Parameterized actions are written
//! as `@ p1 p2 ...`.

use std::fmt::Write as _;

use super::number::format_g17;
use crate::continuous::ActionParams;
use crate::error::{Error, ParseError, Result};
use crate::value::{AlphaVector, ValueFunction};

/// An action label that can be written on one line of a policy file.
pub trait PolicyAction: Sized {
    fn write_label(&self) -> String;
    fn parse_label(line: &str) -> std::result::Result<Self, String>;
}

impl PolicyAction for usize {
    fn write_label(&self) -> String {
        self.to_string()
    }

    fn parse_label(line: &str) -> std::result::Result<Self, String> {
        line.parse().map_err(|_| format!("expected an action index, found '{line}'"))
    }
}

impl PolicyAction for ActionParams {
    fn write_label(&self) -> String {
        let mut out = String::from("@");
        for p in self.values() {
            out.push(' ');
            out.push_str(&format_g17(*p));
        }
        out
    }

    fn parse_label(line: &str) -> std::result::Result<Self, String> {
        let rest = line
            .strip_prefix('@')
            .ok_or_else(|| format!("expected '@' followed by action parameters, found '{line}'"))?;
        rest.split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()).ok_or_else(|| format!("bad parameter '{t}'")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(ActionParams::new)
    }
}

pub fn write_policy<A: PolicyAction>(vf: &ValueFunction<A>) -> Result<String> {
    let n = vf.num_states().ok_or(Error::EmptyValueFunction)?;
    let mut out = format!("# states: {n}\n");
    for v in &vf.vectors {
        let coeffs: Vec<String> = v.coefficients.iter().map(|&c| format_g17(c)).collect();
        let _ = writeln!(out, "{}\n{}\n", v.action.write_label(), coeffs.join(" "));
    }
    Ok(out)
}

pub fn read_policy<A: PolicyAction>(text: &str) -> Result<ValueFunction<A>> {
    let perr = |line: usize, message: String| {
        Error::Parse(ParseError {
            line: line + 1,
            column: 1,
            message,
        })
    };
    let mut declared: Option<usize> = None;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut vectors = Vec::new();
    while let Some((i, line)) = lines.next() {
        if let Some(comment) = line.strip_prefix('#') {
            if let Some(n) = comment.trim().strip_prefix("states:") {
                let n = n.trim().parse().map_err(|_| perr(i, format!("bad states header '{line}'")))?;
                declared = Some(n);
            }
            continue;
        }
        let action = A::parse_label(line).map_err(|m| perr(i, m))?;
        let (j, coeff_line) = lines
            .next()
            .ok_or_else(|| perr(i, "action without a coefficient line".into()))?;
        let coefficients = coeff_line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| perr(j, format!("bad coefficient line '{coeff_line}'")))?;
        let expected = declared.or(vectors.first().map(AlphaVector::len));
        if let Some(expected) = expected.filter(|&e| e != coefficients.len()) {
            return Err(Error::DimensionMismatch {
                expected,
                found: coefficients.len(),
            });
        }
        vectors.push(AlphaVector::new(coefficients, action));
    }
    if vectors.is_empty() {
        return Err(perr(0, "policy file contains no vectors".into()));
    }
    Ok(ValueFunction::new(vectors))
}
