//! Discrete POMDP model and belief-state machinery.
//!
//! A [`Pomdp`] stores one [`ActionModel`] per action. Each action model holds
//! the transition rows `p(s'|s,a)`, the observation rows `p(o|s',a)` and the
//! reward column `r(·,a)`. Continuous-action domains produce the same
//! [`ActionModel`] on demand, so belief updates and backups share one code
//! path for both regimes.
//!
//! Beliefs are dense probability vectors. Each [`Belief`] also records the
//! indices of its nonzero entries; inner products iterate that support in
//! increasing index order, which gives bit-identical results to the dense sum.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Row sums of stochastic tables must be within this distance of 1.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

pub type ActionIndex = usize;

/// Compressed sparse rows of nonnegative weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseRows {
    offsets: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
    num_cols: usize,
}

impl SparseRows {
    /// Builds from dense rows, dropping exact zeros.
    pub fn from_dense(rows: &[Vec<f64>], num_cols: usize) -> Self {
        Self::from_rows(
            rows.iter().map(|row| {
                row.iter()
                    .enumerate()
                    .filter(|(_, p)| **p != 0.0)
                    .map(|(j, p)| (j, *p))
            }),
            num_cols,
        )
    }

    /// Builds from per-row `(column, value)` iterators. Columns within a row
    /// must be strictly increasing.
    pub fn from_rows<R, I>(rows: R, num_cols: usize) -> Self
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator<Item = (usize, f64)>,
    {
        let mut offsets = vec![0];
        let mut indices = Vec::new();
        let mut values = Vec::new();
        for row in rows {
            let mut last = None;
            for (j, v) in row {
                assert!(j < num_cols, "column {j} out of range {num_cols}");
                assert!(last.map_or(true, |l| j > l), "columns must increase");
                last = Some(j);
                indices.push(j as u32);
                values.push(v);
            }
            offsets.push(indices.len());
        }
        Self {
            offsets,
            indices,
            values,
            num_cols,
        }
    }

    pub fn num_rows(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_cols(&self) -> usize {
        self.num_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[r]..self.offsets[r + 1];
        self.indices[span.clone()]
            .iter()
            .zip(&self.values[span])
            .map(|(&j, &v)| (j as usize, v))
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.offsets[r]..self.offsets[r + 1];
        match self.indices[span.clone()].binary_search(&(c as u32)) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sum(&self, r: usize) -> f64 {
        self.row(r).map(|(_, v)| v).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.num_rows())
            .map(|r| {
                let mut dense = vec![0.0; self.num_cols];
                for (j, v) in self.row(r) {
                    dense[j] = v;
                }
                dense
            })
            .collect()
    }

    /// Rescales each row whose sum is within `tol` of 1 so that it sums to 1.
    /// Rows already within rounding noise of 1 are left alone.
    fn renormalize_rows(&mut self, tol: f64) {
        for r in 0..self.num_rows() {
            let span = self.offsets[r]..self.offsets[r + 1];
            let sum: f64 = self.values[span.clone()].iter().sum();
            let noise = f64::EPSILON * span.len() as f64;
            if (sum - 1.0).abs() > noise && (sum - 1.0).abs() <= tol {
                for v in &mut self.values[span] {
                    *v /= sum;
                }
            }
        }
    }
}

/// Everything the planner needs to know about one action.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionModel {
    /// Row `s` holds `p(s'|s,a)` over `s'`.
    pub transition: SparseRows,
    /// Row `s'` holds `p(o|s',a)` over `o`. Shared when observations do not
    /// depend on the action.
    pub observation: Arc<SparseRows>,
    /// `r(s,a)` indexed by `s`.
    pub reward: Arc<[f64]>,
}

impl ActionModel {
    pub fn num_states(&self) -> usize {
        self.transition.num_rows()
    }

    pub fn num_observations(&self) -> usize {
        self.observation.num_cols()
    }

    /// Predicted next-state distribution `Σ_s p(s'|s,a) b(s)`, written densely
    /// into `out`. Returns the touched indices in increasing order.
    pub(crate) fn predict_into(&self, b: &Belief, out: &mut Vec<f64>, touched: &mut Vec<usize>) {
        out.clear();
        out.resize(self.num_states(), 0.0);
        touched.clear();
        for (s, bs) in b.iter_support() {
            for (s2, p) in self.transition.row(s) {
                out[s2] += p * bs;
            }
        }
        touched.extend((0..out.len()).filter(|&s2| out[s2] != 0.0));
    }

    /// Bayes update after observing `o`; `None` when `p(o|a,b) = 0`.
    pub fn update(&self, b: &Belief, o: usize) -> Option<Belief> {
        let mut predicted = Vec::new();
        let mut touched = Vec::new();
        self.predict_into(b, &mut predicted, &mut touched);
        let mut next = vec![0.0; self.num_states()];
        let mut norm = 0.0;
        for &s2 in &touched {
            let v = self.observation.get(s2, o) * predicted[s2];
            next[s2] = v;
            norm += v;
        }
        if !(norm > 0.0) {
            return None;
        }
        for &s2 in &touched {
            next[s2] /= norm;
        }
        Some(Belief::from_probs(next))
    }

    fn observation_likelihood(&self, predicted: &[f64], touched: &[usize], o: usize) -> f64 {
        touched
            .iter()
            .map(|&s2| self.observation.get(s2, o) * predicted[s2])
            .sum()
    }

    /// Checks stochasticity of the tables against `num_states`/`num_observations`.
    pub fn check(&self, action: usize, num_states: usize, num_observations: usize) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.transition.num_rows() != num_states
            || self.transition.num_cols() != num_states
            || self.observation.num_rows() != num_states
            || self.observation.num_cols() != num_observations
            || self.reward.len() != num_states
        {
            out.push(Violation::Shape { action });
            return out;
        }
        check_rows(&self.transition, |row, col, value, sum| match (col, value) {
            (Some(col), Some(value)) => out.push(Violation::Probability {
                table: Table::Transition,
                action,
                row,
                col,
                value,
            }),
            _ => out.push(Violation::RowSum {
                table: Table::Transition,
                action,
                row,
                sum,
            }),
        });
        check_rows(&self.observation, |row, col, value, sum| match (col, value) {
            (Some(col), Some(value)) => out.push(Violation::Probability {
                table: Table::Observation,
                action,
                row,
                col,
                value,
            }),
            _ => out.push(Violation::RowSum {
                table: Table::Observation,
                action,
                row,
                sum,
            }),
        });
        for (s, &r) in self.reward.iter().enumerate() {
            if !r.is_finite() {
                out.push(Violation::NonFiniteReward { action, state: s });
            }
        }
        out
    }
}

fn check_rows(rows: &SparseRows, mut report: impl FnMut(usize, Option<usize>, Option<f64>, f64)) {
    for r in 0..rows.num_rows() {
        for (c, v) in rows.row(r) {
            if !(0.0..=1.0).contains(&v) {
                report(r, Some(c), Some(v), f64::NAN);
            }
        }
        let sum = rows.row_sum(r);
        if !((sum - 1.0).abs() <= ROW_SUM_TOLERANCE) {
            report(r, None, None, sum);
        }
    }
}

fn dense_dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// A probability distribution over states.
#[derive(Debug, Clone, PartialEq)]
pub struct Belief {
    probs: Vec<f64>,
    support: Vec<u32>,
}

impl Belief {
    /// Validates that entries are nonnegative and sum to 1 within 1e-9.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBelief("no states".into()));
        }
        if let Some((s, p)) = probs.iter().enumerate().find(|(_, p)| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::InvalidBelief(format!("entry {s} is {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidBelief(format!("entries sum to {sum}")));
        }
        Ok(Self::from_probs(probs))
    }

    /// Scales a nonnegative vector with positive mass onto the simplex.
    pub fn normalized(mut weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidBelief(format!("cannot normalize weights with sum {sum}")));
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(Self::from_probs(weights))
    }

    pub fn uniform(num_states: usize) -> Self {
        Self::from_probs(vec![1.0 / num_states as f64; num_states])
    }

    pub fn corner(num_states: usize, state: usize) -> Self {
        let mut probs = vec![0.0; num_states];
        probs[state] = 1.0;
        Self::from_probs(probs)
    }

    fn from_probs(probs: Vec<f64>) -> Self {
        let support = (0..probs.len())
            .filter(|&s| probs[s] != 0.0)
            .map(|s| s as u32)
            .collect();
        Self { probs, support }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Number of states with nonzero probability.
    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    #[inline]
    pub fn iter_support(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support
            .iter()
            .map(|&s| (s as usize, self.probs[s as usize]))
    }

    /// Inner product with `coeffs`. Panics on length mismatch.
    #[inline]
    pub fn dot(&self, coeffs: &[f64]) -> f64 {
        assert_eq!(coeffs.len(), self.probs.len(), "dimension mismatch");
        if 2 * self.support.len() >= self.probs.len() {
            return dense_dot(&self.probs, coeffs);
        }
        let mut acc = 0.0;
        for &s in &self.support {
            acc += self.probs[s as usize] * coeffs[s as usize];
        }
        acc
    }

    /// Draws a state index.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(self.iter_support(), rng)
    }

    pub fn is_corner(&self) -> bool {
        self.support.len() == 1
    }
}

/// Samples from `(index, weight)` pairs whose weights sum to ~1. Falls back to
/// the last positive entry when roundoff leaves the draw above the total.
pub(crate) fn sample_index<R, I>(weights: I, rng: &mut R) -> usize
where
    R: rand::Rng + ?Sized,
    I: IntoIterator<Item = (usize, f64)>,
{
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = None;
    for (i, w) in weights {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last = Some(i);
        if u < acc {
            return i;
        }
    }
    last.expect("sampling from an empty distribution")
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Names {
    pub states: Option<Vec<String>>,
    pub actions: Option<Vec<String>>,
    pub observations: Option<Vec<String>>,
}

/// How rewards were stated in the source document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ValuesKind {
    #[default]
    Reward,
    /// Costs were negated into rewards at load time.
    Cost,
}

/// A finite POMDP with discount and initial belief.
#[derive(Debug, Clone)]
pub struct Pomdp {
    num_states: usize,
    num_observations: usize,
    actions: Vec<Arc<ActionModel>>,
    discount: f64,
    initial_belief: Belief,
    pub names: Names,
    pub values_kind: ValuesKind,
}

impl Pomdp {
    /// Assembles a model, renormalizing rows that are within tolerance of
    /// stochastic and rejecting anything that fails [`validate`].
    pub fn new(
        actions: Vec<ActionModel>,
        discount: f64,
        initial_belief: Belief,
    ) -> Result<Self> {
        let actions = actions
            .into_iter()
            .map(|mut a| {
                a.transition.renormalize_rows(ROW_SUM_TOLERANCE);
                let mut obs = (*a.observation).clone();
                obs.renormalize_rows(ROW_SUM_TOLERANCE);
                if obs != *a.observation {
                    a.observation = Arc::new(obs);
                }
                a
            })
            .collect();
        let model = Self::new_unchecked(actions, discount, initial_belief);
        let report = validate(&model);
        if report.is_ok() {
            Ok(model)
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    /// Assembles without checks; use [`validate`] to inspect the result.
    pub fn new_unchecked(actions: Vec<ActionModel>, discount: f64, initial_belief: Belief) -> Self {
        let num_states = initial_belief.len();
        let num_observations = actions.first().map_or(0, |a| a.num_observations());
        Self {
            num_states,
            num_observations,
            actions: actions.into_iter().map(Arc::new).collect(),
            discount,
            initial_belief,
            names: Names::default(),
            values_kind: ValuesKind::Reward,
        }
    }

    pub fn with_names(mut self, names: Names) -> Self {
        self.names = names;
        self
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn num_observations(&self) -> usize {
        self.num_observations
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_belief(&self) -> &Belief {
        &self.initial_belief
    }

    pub fn action(&self, a: ActionIndex) -> &ActionModel {
        &self.actions[a]
    }

    pub fn action_arc(&self, a: ActionIndex) -> &Arc<ActionModel> {
        &self.actions[a]
    }

    pub fn actions(&self) -> &[Arc<ActionModel>] {
        &self.actions
    }

    /// `p(s'|s,a)`
    pub fn p_transition(&self, s: usize, a: ActionIndex, s2: usize) -> f64 {
        self.actions[a].transition.get(s, s2)
    }

    /// `p(o|s',a)`
    pub fn p_observation(&self, a: ActionIndex, s2: usize, o: usize) -> f64 {
        self.actions[a].observation.get(s2, o)
    }

    /// `r(s,a)`
    pub fn reward(&self, s: usize, a: ActionIndex) -> f64 {
        self.actions[a].reward[s]
    }

    pub fn min_reward(&self) -> f64 {
        self.actions
            .iter()
            .flat_map(|a| a.reward.iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    fn check_action(&self, a: ActionIndex) -> Result<()> {
        check_index("action", a, self.num_actions())
    }

    fn check_belief(&self, b: &Belief) -> Result<()> {
        if b.len() != self.num_states {
            return Err(Error::DimensionMismatch {
                expected: self.num_states,
                found: b.len(),
            });
        }
        Ok(())
    }
}

pub(crate) fn check_index(what: &'static str, index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { what, index, len })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Table {
    Transition,
    Observation,
}

/// A single failed model check.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    RowSum {
        table: Table,
        action: usize,
        row: usize,
        sum: f64,
    },
    Probability {
        table: Table,
        action: usize,
        row: usize,
        col: usize,
        value: f64,
    },
    NonFiniteReward {
        action: usize,
        state: usize,
    },
    Shape {
        action: usize,
    },
    Discount(f64),
    NoActions,
    InitialBelief(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RowSum {
                table: Table::Transition,
                action,
                row,
                sum,
            } => write!(f, "p(.|s{row},a{action}) sums to {sum}"),
            Violation::RowSum {
                table: Table::Observation,
                action,
                row,
                sum,
            } => write!(f, "p(.|s'{row},a{action}) sums to {sum}"),
            Violation::Probability {
                table,
                action,
                row,
                col,
                value,
            } => write!(
                f,
                "{table:?} entry (a{action}, row {row}, col {col}) = {value} is not a probability"
            ),
            Violation::NonFiniteReward { action, state } => {
                write!(f, "r(s{state},a{action}) is not finite")
            }
            Violation::Shape { action } => write!(f, "action {action} tables have the wrong shape"),
            Violation::Discount(g) => write!(f, "discount {g} outside [0,1)"),
            Violation::NoActions => write!(f, "model has no actions"),
            Violation::InitialBelief(msg) => write!(f, "initial belief: {msg}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Checks row sums, entry ranges, discount and initial belief.
pub fn validate(model: &Pomdp) -> ValidationReport {
    let mut violations = Vec::new();
    if !(0.0..1.0).contains(&model.discount) {
        violations.push(Violation::Discount(model.discount));
    }
    if model.actions.is_empty() {
        violations.push(Violation::NoActions);
    }
    if model.num_states == 0 || model.num_observations == 0 {
        violations.push(Violation::InitialBelief("empty state or observation set".into()));
    }
    let b0 = model.initial_belief.probs();
    let sum: f64 = b0.iter().sum();
    if b0.iter().any(|p| !(*p >= 0.0)) || (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        violations.push(Violation::InitialBelief(format!("entries sum to {sum}")));
    }
    for (a, am) in model.actions.iter().enumerate() {
        violations.extend(am.check(a, model.num_states, model.num_observations));
    }
    ValidationReport { violations }
}

/// `p(o|a,b) = Σ_{s'} p(o|s',a) Σ_s p(s'|s,a) b(s)`
pub fn observation_prob(model: &Pomdp, b: &Belief, a: ActionIndex, o: usize) -> Result<f64> {
    model.check_action(a)?;
    check_index("observation", o, model.num_observations())?;
    model.check_belief(b)?;
    let mut predicted = Vec::new();
    let mut touched = Vec::new();
    model.actions[a].predict_into(b, &mut predicted, &mut touched);
    Ok(model.actions[a].observation_likelihood(&predicted, &touched, o))
}

/// Bayes update of `b` after taking `a` and observing `o`.
pub fn belief_update(model: &Pomdp, b: &Belief, a: ActionIndex, o: usize) -> Result<Belief> {
    model.check_action(a)?;
    check_index("observation", o, model.num_observations())?;
    model.check_belief(b)?;
    model.actions[a]
        .update(b, o)
        .ok_or_else(|| Error::ImpossibleObservation {
            action: a.to_string(),
            observation: o,
        })
}

/// `Σ_s r(s,a) b(s)`
pub fn belief_reward(model: &Pomdp, b: &Belief, a: ActionIndex) -> Result<f64> {
    model.check_action(a)?;
    model.check_belief(b)?;
    Ok(b.dot(&model.actions[a].reward))
}

/// Dense tables for small hand-built models.
///
/// `transition[a][s][s']`, `observation[a][s'][o]`, `reward[a][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseModel {
    pub transition: Vec<Vec<Vec<f64>>>,
    pub observation: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub discount: f64,
    pub initial_belief: Vec<f64>,
}

impl DenseModel {
    fn action_models(&self) -> Vec<ActionModel> {
        let n = self.initial_belief.len();
        self.transition
            .iter()
            .zip(&self.observation)
            .zip(&self.reward)
            .map(|((t, o), r)| {
                let num_obs = o.first().map_or(0, Vec::len);
                ActionModel {
                    transition: SparseRows::from_dense(t, n),
                    observation: Arc::new(SparseRows::from_dense(o, num_obs)),
                    reward: r.clone().into(),
                }
            })
            .collect()
    }

    pub fn build(&self) -> Result<Pomdp> {
        let b0 = Belief::new(self.initial_belief.clone())?;
        Pomdp::new(self.action_models(), self.discount, b0)
    }

    /// Builds without validation. The initial belief is taken verbatim.
    pub fn build_unchecked(&self) -> Pomdp {
        let b0 = Belief::from_probs(self.initial_belief.clone());
        Pomdp::new_unchecked(self.action_models(), self.discount, b0)
    }
}

impl Pomdp {
    /// Dense copy of the tables.
    pub fn to_dense(&self) -> DenseModel {
        DenseModel {
            transition: self.actions.iter().map(|a| a.transition.to_dense()).collect(),
            observation: self.actions.iter().map(|a| a.observation.to_dense()).collect(),
            reward: self.actions.iter().map(|a| a.reward.to_vec()).collect(),
            discount: self.discount,
            initial_belief: self.initial_belief.probs().to_vec(),
        }
    }
}
