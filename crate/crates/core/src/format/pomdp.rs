//! Cassandra `.pomdp` subset: preamble keywords, `start:`, single entries,
//! row and matrix blocks, `uniform`, `identity`, `*` wildcards and `#`
//! comments.
//!
//! Rewards of the form `R: a : s : s' : o` are reduced to `r(s,a)` by taking
//! the expectation over `s'` and `o`. Later entries overwrite earlier ones.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use super::number::format_g17;
use crate::error::{ParseError, Result};
use crate::model::{ActionModel, Belief, Names, Pomdp, SparseRows, ValuesKind};

#[derive(Debug, Clone)]
struct Token {
    text: String,
    line: usize,
    column: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for (li, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        let mut start: Option<usize> = None;
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let push = |from: usize, to: usize, tokens: &mut Vec<Token>| {
            let column = line[..from].chars().count() + 1;
            tokens.push(Token {
                text: line[from..to].to_string(),
                line: li + 1,
                column,
            });
        };
        for &(i, c) in &chars {
            if c.is_whitespace() || c == ':' {
                if let Some(s) = start.take() {
                    push(s, i, &mut tokens);
                }
                if c == ':' {
                    push(i, i + 1, &mut tokens);
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            push(s, line.len(), &mut tokens);
        }
    }
    tokens
}

/// Upper bound on dense table cells held while parsing.
const MAX_TABLE_CELLS: usize = 1 << 28;

const KEYWORDS: [&str; 9] = ["discount", "values", "states", "actions", "observations", "start", "T", "O", "R"];

#[derive(Clone, Copy)]
enum Kind {
    State,
    Action,
    Observation,
}

impl Kind {
    fn label(self) -> &'static str {
        match self {
            Kind::State => "state",
            Kind::Action => "action",
            Kind::Observation => "observation",
        }
    }
}

struct Declared {
    count: usize,
    names: Option<Vec<String>>,
}

/// `R` rows per `(a, s)`: a base value for every `(s', o)` plus overrides.
#[derive(Clone, Default)]
struct RewardCell {
    base: f64,
    overrides: BTreeMap<(usize, usize), f64>,
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    discount: Option<f64>,
    values: ValuesKind,
    states: Option<Declared>,
    actions: Option<Declared>,
    observations: Option<Declared>,
    start: Option<Vec<f64>>,
    transition: Vec<Vec<f64>>,
    observation: Vec<Vec<f64>>,
    reward: Vec<RewardCell>,
}

type PResult<T> = std::result::Result<T, ParseError>;

impl Parser {
    fn error_at(&self, pos: usize, message: impl Into<String>) -> ParseError {
        let (line, column) = match self.tokens.get(pos) {
            Some(t) => (t.line, t.column),
            None => self
                .tokens
                .last()
                .map_or((1, 1), |t| (t.line, t.column + t.text.chars().count())),
        };
        ParseError {
            line,
            column,
            message: message.into(),
        }
    }

    fn error(&self, message: impl Into<String>) -> ParseError {
        self.error_at(self.pos, message)
    }

    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(|t| t.text.as_str())
    }

    fn peek_at(&self, offset: usize) -> Option<&str> {
        self.tokens.get(self.pos + offset).map(|t| t.text.as_str())
    }

    fn next(&mut self) -> PResult<String> {
        let t = self.tokens.get(self.pos).ok_or_else(|| self.error("unexpected end of input"))?;
        self.pos += 1;
        Ok(t.text.clone())
    }

    fn expect_colon(&mut self) -> PResult<()> {
        match self.peek() {
            Some(":") => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error("expected ':'")),
        }
    }

    fn number(&mut self) -> PResult<f64> {
        let pos = self.pos;
        let text = self.next()?;
        text.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| self.error_at(pos, format!("expected a number, found '{text}'")))
    }

    fn at_section_start(&self) -> bool {
        match self.peek() {
            Some(k) if KEYWORDS.contains(&k) => {
                matches!(self.peek_at(1), Some(":")) || (k == "start" && matches!(self.peek_at(1), Some("include" | "exclude")))
            }
            _ => false,
        }
    }

    fn declared(&self, kind: Kind) -> PResult<&Declared> {
        let d = match kind {
            Kind::State => &self.states,
            Kind::Action => &self.actions,
            Kind::Observation => &self.observations,
        };
        d.as_ref()
            .ok_or_else(|| self.error(format!("{}s must be declared before use", kind.label())))
    }

    fn count(&self, kind: Kind) -> PResult<usize> {
        self.declared(kind).map(|d| d.count)
    }

    /// Resolves a name, an index or `*`.
    fn spec(&mut self, kind: Kind) -> PResult<Vec<usize>> {
        let pos = self.pos;
        let text = self.next()?;
        let decl = self.declared(kind)?;
        if text == "*" {
            return Ok((0..decl.count).collect());
        }
        if let Some(i) = decl.names.as_ref().and_then(|n| n.iter().position(|x| *x == text)) {
            return Ok(vec![i]);
        }
        match text.parse::<usize>() {
            Ok(i) if i < decl.count => Ok(vec![i]),
            _ => Err(self.error_at(pos, format!("undeclared {} '{text}'", kind.label()))),
        }
    }

    fn parse(&mut self) -> PResult<()> {
        while let Some(tok) = self.peek() {
            let pos = self.pos;
            match tok {
                "discount" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    let g = self.number()?;
                    if !(0.0..1.0).contains(&g) {
                        return Err(self.error_at(pos + 2, format!("discount {g} outside [0, 1)")));
                    }
                    self.discount = Some(g);
                }
                "values" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    let v = self.next()?;
                    self.values = match v.as_str() {
                        "reward" => ValuesKind::Reward,
                        "cost" => ValuesKind::Cost,
                        _ => return Err(self.error_at(pos + 2, format!("values must be reward or cost, found '{v}'"))),
                    };
                }
                "states" | "actions" | "observations" => {
                    let which = tok.to_string();
                    self.pos += 1;
                    self.expect_colon()?;
                    let decl = self.declaration()?;
                    let slot = match which.as_str() {
                        "states" => &mut self.states,
                        "actions" => &mut self.actions,
                        _ => &mut self.observations,
                    };
                    if slot.is_some() {
                        return Err(self.error_at(pos, format!("{which} declared twice")));
                    }
                    *slot = Some(decl);
                    self.allocate().map_err(|m| self.error_at(pos, m))?;
                }
                "start" => {
                    self.pos += 1;
                    if matches!(self.peek(), Some("include" | "exclude")) {
                        return Err(self.error("'start include' and 'start exclude' are not supported"));
                    }
                    self.expect_colon()?;
                    self.start_distribution()?;
                }
                "T" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    self.transition_entry()?;
                }
                "O" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    self.observation_entry()?;
                }
                "R" => {
                    self.pos += 1;
                    self.expect_colon()?;
                    self.reward_entry()?;
                }
                other => return Err(self.error(format!("unexpected '{other}'"))),
            }
        }
        Ok(())
    }

    fn declaration(&mut self) -> PResult<Declared> {
        let pos = self.pos;
        let first = self.next()?;
        if let Ok(n) = first.parse::<usize>() {
            if self.at_section_start() || self.peek().is_none() {
                if n == 0 {
                    return Err(self.error_at(pos, "count must be positive"));
                }
                return Ok(Declared { count: n, names: None });
            }
        }
        let mut names = vec![first];
        while self.peek().is_some() && !self.at_section_start() {
            names.push(self.next()?);
        }
        for (i, n) in names.iter().enumerate() {
            if n == "*" || names[..i].contains(n) {
                return Err(self.error_at(pos + i, format!("invalid or repeated name '{n}'")));
            }
        }
        Ok(Declared {
            count: names.len(),
            names: Some(names),
        })
    }

    fn allocate(&mut self) -> std::result::Result<(), String> {
        if let (Some(s), Some(a), Some(o)) = (&self.states, &self.actions, &self.observations) {
            let (ns, na, no) = (s.count, a.count, o.count);
            let cells = ns
                .checked_mul(ns.max(no))
                .and_then(|x| x.checked_mul(na))
                .filter(|&x| x <= MAX_TABLE_CELLS);
            if cells.is_none() {
                return Err(format!("model with {ns} states, {na} actions and {no} observations is too large"));
            }
            if self.transition.is_empty() {
                self.transition = vec![vec![0.0; ns * ns]; na];
                self.observation = vec![vec![0.0; ns * no]; na];
                self.reward = vec![RewardCell::default(); na * ns];
            }
        }
        Ok(())
    }

    fn require_tables(&self) -> PResult<()> {
        if self.transition.is_empty() {
            Err(self.error("states, actions and observations must be declared before entries"))
        } else {
            Ok(())
        }
    }

    fn start_distribution(&mut self) -> PResult<()> {
        let ns = self.count(Kind::State)?;
        if self.peek() == Some("uniform") {
            self.pos += 1;
            self.start = Some(vec![1.0 / ns as f64; ns]);
            return Ok(());
        }
        let pos = self.pos;
        let mut numbers = Vec::new();
        while numbers.len() < ns {
            match self.peek().map(str::parse::<f64>) {
                Some(Ok(x)) if !self.at_section_start() => {
                    numbers.push(x);
                    self.pos += 1;
                }
                _ => break,
            }
        }
        // With one state, `start: 0` names the state rather than giving it mass 0.
        let names_state_zero = ns == 1 && self.tokens.get(pos).is_some_and(|t| t.text == "0");
        if numbers.len() == ns && !names_state_zero {
            self.start = Some(numbers);
            return Ok(());
        }
        self.pos = pos;
        let s = self.spec(Kind::State)?;
        if s.len() != 1 {
            return Err(self.error_at(pos, "start must name a single state, a distribution or 'uniform'"));
        }
        let mut b = vec![0.0; ns];
        b[s[0]] = 1.0;
        self.start = Some(b);
        Ok(())
    }

    /// Reads `len` numbers, or `uniform` for an evenly spread row.
    fn row(&mut self, len: usize) -> PResult<Vec<f64>> {
        if self.peek() == Some("uniform") {
            self.pos += 1;
            return Ok(vec![1.0 / len as f64; len]);
        }
        (0..len).map(|_| self.number()).collect()
    }

    fn transition_entry(&mut self) -> PResult<()> {
        self.require_tables()?;
        let ns = self.count(Kind::State)?;
        let actions = self.spec(Kind::Action)?;
        if self.peek() != Some(":") {
            let matrix = match self.peek() {
                Some("identity") => {
                    self.pos += 1;
                    (0..ns * ns).map(|k| if k / ns == k % ns { 1.0 } else { 0.0 }).collect()
                }
                Some("uniform") => {
                    self.pos += 1;
                    vec![1.0 / ns as f64; ns * ns]
                }
                _ => (0..ns * ns).map(|_| self.number()).collect::<PResult<Vec<_>>>()?,
            };
            for a in actions {
                self.transition[a].copy_from_slice(&matrix);
            }
            return Ok(());
        }
        self.pos += 1;
        let from = self.spec(Kind::State)?;
        if self.peek() != Some(":") {
            let row = self.row(ns)?;
            for &a in &actions {
                for &s in &from {
                    self.transition[a][s * ns..(s + 1) * ns].copy_from_slice(&row);
                }
            }
            return Ok(());
        }
        self.pos += 1;
        let to = self.spec(Kind::State)?;
        let p = self.number()?;
        for &a in &actions {
            for &s in &from {
                for &s2 in &to {
                    self.transition[a][s * ns + s2] = p;
                }
            }
        }
        Ok(())
    }

    fn observation_entry(&mut self) -> PResult<()> {
        self.require_tables()?;
        let ns = self.count(Kind::State)?;
        let no = self.count(Kind::Observation)?;
        let actions = self.spec(Kind::Action)?;
        if self.peek() != Some(":") {
            let matrix = if self.peek() == Some("uniform") {
                self.pos += 1;
                vec![1.0 / no as f64; ns * no]
            } else {
                (0..ns * no).map(|_| self.number()).collect::<PResult<Vec<_>>>()?
            };
            for a in actions {
                self.observation[a].copy_from_slice(&matrix);
            }
            return Ok(());
        }
        self.pos += 1;
        let states = self.spec(Kind::State)?;
        if self.peek() != Some(":") {
            let row = self.row(no)?;
            for &a in &actions {
                for &s2 in &states {
                    self.observation[a][s2 * no..(s2 + 1) * no].copy_from_slice(&row);
                }
            }
            return Ok(());
        }
        self.pos += 1;
        let obs = self.spec(Kind::Observation)?;
        let p = self.number()?;
        for &a in &actions {
            for &s2 in &states {
                for &o in &obs {
                    self.observation[a][s2 * no + o] = p;
                }
            }
        }
        Ok(())
    }

    fn reward_entry(&mut self) -> PResult<()> {
        self.require_tables()?;
        let ns = self.count(Kind::State)?;
        let no = self.count(Kind::Observation)?;
        let actions = self.spec(Kind::Action)?;
        self.expect_colon()?;
        let from = self.spec(Kind::State)?;
        // (s' spec, o spec, value) assignments applied to every (a, s).
        let mut writes: Vec<(Option<usize>, Option<usize>, f64)> = Vec::new();
        if self.peek() != Some(":") {
            for s2 in 0..ns {
                for o in 0..no {
                    writes.push((Some(s2), Some(o), self.number()?));
                }
            }
        } else {
            self.pos += 1;
            let next_wild = self.peek() == Some("*");
            let to = self.spec(Kind::State)?;
            let to_spec = |s2: usize| if next_wild { None } else { Some(s2) };
            if self.peek() != Some(":") {
                let row: Vec<f64> = (0..no).map(|_| self.number()).collect::<PResult<_>>()?;
                for &s2 in &to {
                    for (o, &v) in row.iter().enumerate() {
                        writes.push((Some(s2), Some(o), v));
                    }
                }
            } else {
                self.pos += 1;
                let obs_wild = self.peek() == Some("*");
                let obs = self.spec(Kind::Observation)?;
                let v = self.number()?;
                let targets: Vec<Option<usize>> = if next_wild { vec![None] } else { to.iter().map(|&s2| to_spec(s2)).collect() };
                for t in targets {
                    if obs_wild {
                        writes.push((t, None, v));
                    } else {
                        writes.extend(obs.iter().map(|&o| (t, Some(o), v)));
                    }
                }
            }
        }
        for &a in &actions {
            for &s in &from {
                let cell = &mut self.reward[a * ns + s];
                for &(s2, o, v) in &writes {
                    match (s2, o) {
                        (None, None) => {
                            cell.base = v;
                            cell.overrides.clear();
                        }
                        (Some(s2), Some(o)) => {
                            cell.overrides.insert((s2, o), v);
                        }
                        (Some(s2), None) => {
                            for o in 0..no {
                                cell.overrides.insert((s2, o), v);
                            }
                        }
                        (None, Some(o)) => {
                            for s2 in 0..ns {
                                cell.overrides.insert((s2, o), v);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn finish(self) -> Result<Pomdp> {
        let discount = self.discount.ok_or_else(|| self.error("missing 'discount:'"))?;
        let ns = self.count(Kind::State)?;
        let na = self.count(Kind::Action)?;
        let no = self.count(Kind::Observation)?;
        let start = self.start.clone().unwrap_or_else(|| vec![1.0 / ns as f64; ns]);
        let sign = match self.values {
            ValuesKind::Reward => 1.0,
            ValuesKind::Cost => -1.0,
        };

        let mut models = Vec::with_capacity(na);
        let mut shared: Option<(usize, Arc<SparseRows>)> = None;
        for a in 0..na {
            let t = &self.transition[a];
            let o = &self.observation[a];
            let transition = SparseRows::from_rows(
                (0..ns).map(|s| (0..ns).map(move |s2| (s2, t[s * ns + s2])).filter(|(_, p)| *p != 0.0)),
                ns,
            );
            let observation = match &shared {
                Some((prev, arc)) if self.observation[*prev] == *o => Arc::clone(arc),
                _ => {
                    let arc = Arc::new(SparseRows::from_rows(
                        (0..ns).map(|s2| (0..no).map(move |k| (k, o[s2 * no + k])).filter(|(_, p)| *p != 0.0)),
                        no,
                    ));
                    shared = Some((a, Arc::clone(&arc)));
                    arc
                }
            };
            let reward: Vec<f64> = (0..ns)
                .map(|s| {
                    let cell = &self.reward[a * ns + s];
                    let mut r = cell.base;
                    for (&(s2, ob), &v) in &cell.overrides {
                        let p = t[s * ns + s2] * o[s2 * no + ob];
                        r += p * (v - cell.base);
                    }
                    sign * r
                })
                .collect();
            models.push(ActionModel {
                transition,
                observation,
                reward: reward.into(),
            });
        }
        let b0 = Belief::new(start)?;
        let names = Names {
            states: self.states.and_then(|d| d.names),
            actions: self.actions.and_then(|d| d.names),
            observations: self.observations.and_then(|d| d.names),
        };
        let mut model = Pomdp::new(models, discount, b0)?.with_names(names);
        model.values_kind = self.values;
        Ok(model)
    }
}

/// Parses a `.pomdp` document into a validated model.
pub fn parse_pomdp(text: &str) -> Result<Pomdp> {
    let mut parser = Parser {
        tokens: tokenize(text),
        pos: 0,
        discount: None,
        values: ValuesKind::Reward,
        states: None,
        actions: None,
        observations: None,
        start: None,
        transition: Vec::new(),
        observation: Vec::new(),
        reward: Vec::new(),
    };
    parser.parse()?;
    if parser.states.is_none() || parser.actions.is_none() || parser.observations.is_none() {
        return Err(parser.error("states, actions and observations must all be declared").into());
    }
    parser.finish()
}

fn label(names: &Option<Vec<String>>, i: usize) -> String {
    match names {
        Some(n) => n[i].clone(),
        None => i.to_string(),
    }
}

fn declaration(out: &mut String, key: &str, count: usize, names: &Option<Vec<String>>) {
    match names {
        Some(n) => {
            let _ = writeln!(out, "{key}: {}", n.join(" "));
        }
        None => {
            let _ = writeln!(out, "{key}: {count}");
        }
    }
}

/// Canonical document: preamble, start distribution, then nonzero `T`, `O`
/// and `R` entries in index order.
pub fn serialize_pomdp(model: &Pomdp) -> String {
    let names = &model.names;
    let mut out = String::new();
    let _ = writeln!(out, "discount: {}", format_g17(model.discount()));
    let (kind, sign) = match model.values_kind {
        ValuesKind::Reward => ("reward", 1.0),
        ValuesKind::Cost => ("cost", -1.0),
    };
    let _ = writeln!(out, "values: {kind}");
    declaration(&mut out, "states", model.num_states(), &names.states);
    declaration(&mut out, "actions", model.num_actions(), &names.actions);
    declaration(&mut out, "observations", model.num_observations(), &names.observations);
    let start: Vec<String> = model.initial_belief().probs().iter().map(|&p| format_g17(p)).collect();
    let _ = writeln!(out, "start: {}", start.join(" "));
    out.push('\n');

    let st = |i| label(&names.states, i);
    let ac = |i| label(&names.actions, i);
    let ob = |i| label(&names.observations, i);
    for (a, am) in model.actions().iter().enumerate() {
        for s in 0..model.num_states() {
            for (s2, p) in am.transition.row(s) {
                let _ = writeln!(out, "T: {} : {} : {} {}", ac(a), st(s), st(s2), format_g17(p));
            }
        }
    }
    out.push('\n');
    for (a, am) in model.actions().iter().enumerate() {
        for s2 in 0..model.num_states() {
            for (o, p) in am.observation.row(s2) {
                let _ = writeln!(out, "O: {} : {} : {} {}", ac(a), st(s2), ob(o), format_g17(p));
            }
        }
    }
    out.push('\n');
    for (a, am) in model.actions().iter().enumerate() {
        for (s, &r) in am.reward.iter().enumerate() {
            if r != 0.0 {
                let _ = writeln!(out, "R: {} : {} : * : * {}", ac(a), st(s), format_g17(sign * r));
            }
        }
    }
    out
}
