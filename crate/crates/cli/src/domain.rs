//! Resolving `--model` and `--domain` into something a solver can use.

use std::path::Path;

use perseus::continuous::ActionModelGenerator;
use perseus::domains::tag::{tagged_states, TagLayout};
use perseus::domains::{build_continuous_nav, build_tag, build_tiny, ContinuousNav};
use perseus::eval::Termination;
use perseus::format::parse_pomdp;
use perseus::Pomdp;

use crate::{read_input, CliError, CliResult};

/// Headings of the discretized Continuous Navigation model.
pub const NAV_HEADINGS: usize = 8;
/// Distances of the discretized Continuous Navigation model.
pub const NAV_DISTANCES: [f64; 2] = [1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DomainName {
    Tag,
    Cnav,
    Tiny(String),
}

impl DomainName {
    pub fn parse(name: &str) -> CliResult<Self> {
        match name {
            "tag" => Ok(Self::Tag),
            "cnav" => Ok(Self::Cnav),
            _ => match name.strip_prefix("tiny:") {
                Some(fixture) => Ok(Self::Tiny(fixture.to_string())),
                None => Err(CliError::Usage(format!(
                    "unknown domain '{name}' (expected tag, cnav or tiny:NAME)"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub enum Domain {
    Model(Pomdp),
    Tag(Pomdp),
    Nav(ContinuousNav),
}

impl Domain {
    pub fn build(name: DomainName, seed: u64) -> CliResult<Self> {
        Ok(match name {
            DomainName::Tag => Self::Tag(build_tag()),
            DomainName::Cnav => Self::Nav(build_continuous_nav(seed)),
            DomainName::Tiny(fixture) => {
                Self::Model(build_tiny(&fixture).map_err(|e| CliError::Usage(e.to_string()))?)
            }
        })
    }

    pub fn from_file(path: &Path) -> CliResult<Self> {
        let text = read_input(path)?;
        parse_pomdp(&text).map(Self::Model).map_err(|e| match e {
            perseus::Error::Parse(p) => CliError::Usage(format!("{}:{p}", path.display())),
            other => CliError::Usage(format!("{}: {other}", path.display())),
        })
    }

    pub fn num_states(&self) -> usize {
        match self {
            Self::Model(m) | Self::Tag(m) => m.num_states(),
            Self::Nav(nav) => nav.num_states(),
        }
    }

    /// The finite model; Continuous Navigation is discretized.
    pub fn discrete(&self) -> CliResult<Pomdp> {
        Ok(match self {
            Self::Model(m) | Self::Tag(m) => m.clone(),
            Self::Nav(nav) => nav.discretize(NAV_HEADINGS, &NAV_DISTANCES),
        })
    }

    /// Tag episodes end once the opponent is tagged; navigation episodes end
    /// after acting in the goal cell.
    pub fn termination(&self) -> Termination {
        match self {
            Self::Model(_) => Termination::Never,
            Self::Tag(m) => Termination::on_entry(m.num_states(), &tagged_states(&TagLayout::standard())),
            Self::Nav(nav) => Termination::after_acting(nav.num_states(), &[nav.goal()]),
        }
    }
}

/// Reads `x,y` lines as written by [`ContinuousNav::centers_csv`].
pub fn parse_centers_csv(text: &str) -> CliResult<Vec<(f64, f64)>> {
    let mut centers = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let parsed = line
            .split_once(',')
            .and_then(|(x, y)| Some((x.trim().parse::<f64>().ok()?, y.trim().parse::<f64>().ok()?)))
            .filter(|(x, y)| x.is_finite() && y.is_finite());
        match parsed {
            Some(c) => centers.push(c),
            None => return Err(CliError::Usage(format!("centers line {}: expected 'x,y', found '{line}'", i + 1))),
        }
    }
    if centers.is_empty() {
        return Err(CliError::Usage("centers file is empty".into()));
    }
    Ok(centers)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn domain_names() {
        assert_eq!(DomainName::parse("tag").unwrap(), DomainName::Tag);
        assert_eq!(DomainName::parse("tiny:1s1a1o").unwrap(), DomainName::Tiny("1s1a1o".into()));
        assert!(DomainName::parse("maze").is_err());
        assert!(Domain::build(DomainName::Tiny("nope".into()), 0).is_err());
    }

    #[test]
    fn centers_round_trip() {
        let nav = build_continuous_nav(11);
        let back = parse_centers_csv(&nav.centers_csv()).unwrap();
        assert_eq!(back, nav.centers());
        assert!(parse_centers_csv("1,2\nx\n").is_err());
        assert!(parse_centers_csv("").is_err());
    }

    #[test]
    fn tag_termination_marks_tagged_states() {
        let d = Domain::build(DomainName::Tag, 0).unwrap();
        match d.termination() {
            Termination::OnEntry(set) => assert_eq!(set.iter().filter(|&&t| t).count(), 29),
            other => panic!("{other:?}"),
        }
    }
}
