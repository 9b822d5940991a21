//! Piecewise-linear convex value functions and the point-based backup.
//!
//! A [`ValueFunction`] is an ordered list of [`AlphaVector`]s; its value at a
//! belief is the largest inner product. Vectors are generic over the action
//! label so the same machinery serves discrete actions (`usize`) and
//! parameterized continuous actions.
//!
//! Every arg max in this module breaks ties toward the lowest index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionIndex, ActionModel, Belief, Pomdp};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaVector<A = ActionIndex> {
    pub coefficients: Vec<f64>,
    pub action: A,
}

impl<A> AlphaVector<A> {
    pub fn new(coefficients: Vec<f64>, action: A) -> Self {
        Self {
            coefficients,
            action,
        }
    }

    pub fn len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coefficients.is_empty()
    }

    #[inline]
    pub fn value_at(&self, b: &Belief) -> f64 {
        b.dot(&self.coefficients)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueFunction<A = ActionIndex> {
    pub vectors: Vec<AlphaVector<A>>,
}

impl<A> Default for ValueFunction<A> {
    fn default() -> Self {
        Self {
            vectors: Vec::new(),
        }
    }
}

impl<A> ValueFunction<A> {
    pub fn new(vectors: Vec<AlphaVector<A>>) -> Self {
        Self { vectors }
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Dimension of the vectors, if any.
    pub fn num_states(&self) -> Option<usize> {
        self.vectors.first().map(AlphaVector::len)
    }

    fn check(&self, b: &Belief) -> Result<()> {
        let first = self.vectors.first().ok_or(Error::EmptyValueFunction)?;
        if let Some(v) = self.vectors.iter().find(|v| v.len() != b.len()) {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                found: v.len(),
            });
        }
        debug_assert_eq!(first.len(), b.len());
        Ok(())
    }

    /// `max_i b·α_i`
    pub fn evaluate(&self, b: &Belief) -> Result<f64> {
        self.check(b)?;
        Ok(self.argmax_unchecked(b).1)
    }

    /// Index and vector maximizing `b·α`; ties go to the lowest index.
    pub fn best_vector(&self, b: &Belief) -> Result<(usize, &AlphaVector<A>)> {
        self.check(b)?;
        let (i, _) = self.argmax_unchecked(b);
        Ok((i, &self.vectors[i]))
    }

    /// Action attached to the maximizing vector.
    pub fn policy_action(&self, b: &Belief) -> Result<&A> {
        self.best_vector(b).map(|(_, v)| &v.action)
    }

    /// Sum of values over a set of beliefs; 0 for an empty set.
    pub fn value_sum<'a, I>(&self, beliefs: I) -> Result<f64>
    where
        I: IntoIterator<Item = &'a Belief>,
    {
        let mut total = 0.0;
        for b in beliefs {
            total += self.evaluate(b)?;
        }
        Ok(total)
    }

    #[inline]
    pub(crate) fn argmax_unchecked(&self, b: &Belief) -> (usize, f64) {
        let mut best = (0, f64::NEG_INFINITY);
        for (i, v) in self.vectors.iter().enumerate() {
            let x = b.dot(&v.coefficients);
            if x > best.1 {
                best = (i, x);
            }
        }
        best
    }
}

/// `V₀`: one vector with every coefficient `min_{s,a} r(s,a) / (1-γ)`,
/// tagged with action 0.
pub fn initial_value_function(model: &Pomdp) -> ValueFunction {
    ValueFunction::new(vec![AlphaVector::new(
        vec![lower_bound_value(model.min_reward(), model.discount()); model.num_states()],
        0,
    )])
}

pub(crate) fn lower_bound_value(min_reward: f64, discount: f64) -> f64 {
    min_reward / (1.0 - discount)
}

/// Result of backing up one belief over a list of candidate actions.
#[derive(Debug, Clone)]
pub(crate) struct Backup {
    pub coefficients: Vec<f64>,
    /// Position of the winning candidate in the list passed in.
    pub candidate: usize,
}

/// Scratch buffers reused across backups.
#[derive(Debug, Default)]
pub(crate) struct BackupScratch {
    predicted: Vec<f64>,
    touched: Vec<usize>,
    scores: Vec<f64>,
    best_score: Vec<f64>,
    best_index: Vec<usize>,
    choice: Vec<usize>,
    mixed: Vec<f64>,
    weighted: Vec<f64>,
}

/// Point-based backup restricted to `candidates`.
///
/// For each candidate action the term `b·g_{a,o}^i` equals `Σ_{s'} p(o|s',a)
/// τ(s') α_i(s')` with `τ = Σ_s p(s'|s,a) b(s)`, so the per-observation
/// arg max is found without materializing any `g` vector. Only the winning
/// action's `g_a^b` is built.
pub(crate) fn backup_over<'m, A, I>(
    candidates: I,
    discount: f64,
    vf: &ValueFunction<A>,
    b: &Belief,
    scratch: &mut BackupScratch,
) -> Backup
where
    I: IntoIterator<Item = &'m ActionModel>,
{
    let mut best: Option<(usize, f64)> = None;
    let mut best_choice: Vec<usize> = Vec::new();
    let mut winner: Option<&ActionModel> = None;

    for (k, model) in candidates.into_iter().enumerate() {
        let no = model.num_observations();
        model.predict_into(b, &mut scratch.predicted, &mut scratch.touched);

        scratch.best_score.clear();
        scratch.best_score.resize(no, f64::NEG_INFINITY);
        scratch.best_index.clear();
        scratch.best_index.resize(no, 0);
        let nnz: usize = scratch.touched.iter().map(|&s2| model.observation.row(s2).count()).sum();
        // Dense observation rows: one contiguous block of τ(s')·p(o|s') per touched state.
        let dense = 2 * nnz >= no * scratch.touched.len();
        if dense {
            scratch.weighted.clear();
            scratch.weighted.resize(no * scratch.touched.len(), 0.0);
            for (t, &s2) in scratch.touched.iter().enumerate() {
                let block = &mut scratch.weighted[t * no..(t + 1) * no];
                for (o, p) in model.observation.row(s2) {
                    block[o] = p * scratch.predicted[s2];
                }
            }
        }
        for (i, alpha) in vf.vectors.iter().enumerate() {
            scratch.scores.clear();
            scratch.scores.resize(no, 0.0);
            if dense {
                for (t, &s2) in scratch.touched.iter().enumerate() {
                    let a = alpha.coefficients[s2];
                    let block = &scratch.weighted[t * no..(t + 1) * no];
                    for (score, w) in scratch.scores.iter_mut().zip(block) {
                        *score += a * w;
                    }
                }
            } else {
                for &s2 in &scratch.touched {
                    let w = scratch.predicted[s2] * alpha.coefficients[s2];
                    for (o, p) in model.observation.row(s2) {
                        scratch.scores[o] += p * w;
                    }
                }
            }
            for o in 0..no {
                if scratch.scores[o] > scratch.best_score[o] {
                    scratch.best_score[o] = scratch.scores[o];
                    scratch.best_index[o] = i;
                }
            }
        }

        let future: f64 = scratch.best_score.iter().sum();
        let value = b.dot(&model.reward) + discount * future;
        if best.map_or(true, |(_, v)| value > v) {
            best = Some((k, value));
            best_choice.clone_from(&scratch.best_index);
            winner = Some(model);
        }
    }

    let (candidate, _) = best.expect("backup needs at least one candidate action");
    let model = winner.expect("winner set with best");
    scratch.choice = best_choice;
    let coefficients = build_g(model, discount, vf, &scratch.choice, &mut scratch.mixed);
    Backup {
        coefficients,
        candidate,
    }
}

/// `g_a^b(s) = r(s,a) + γ Σ_{s'} p(s'|s,a) Σ_o p(o|s',a) α_{choice[o]}(s')`
fn build_g<A>(
    model: &ActionModel,
    discount: f64,
    vf: &ValueFunction<A>,
    choice: &[usize],
    mixed: &mut Vec<f64>,
) -> Vec<f64> {
    let n = model.num_states();
    mixed.clear();
    mixed.resize(n, 0.0);
    for (s2, m) in mixed.iter_mut().enumerate() {
        for (o, p) in model.observation.row(s2) {
            *m += p * vf.vectors[choice[o]].coefficients[s2];
        }
    }
    (0..n)
        .map(|s| {
            let future: f64 = model.transition.row(s).map(|(s2, p)| p * mixed[s2]).sum();
            model.reward[s] + discount * future
        })
        .collect()
}

/// The vector of `H V` that is maximal at `b`, tagged with its action.
///
/// Action ties go to the lowest action index; per-observation ties to the
/// lowest vector index.
pub fn backup(model: &Pomdp, vf: &ValueFunction, b: &Belief) -> Result<AlphaVector> {
    vf.check(b)?;
    let mut scratch = BackupScratch::default();
    Ok(backup_with_scratch(model, vf, b, &mut scratch))
}

pub(crate) fn backup_with_scratch(
    model: &Pomdp,
    vf: &ValueFunction,
    b: &Belief,
    scratch: &mut BackupScratch,
) -> AlphaVector {
    let out = backup_over(
        model.actions().iter().map(|a| a.as_ref()),
        model.discount(),
        vf,
        b,
        scratch,
    );
    AlphaVector::new(out.coefficients, out.candidate)
}

/// `g_{a,o}^i(s) = Σ_{s'} p(o|s',a) p(s'|s,a) α_i(s')`, computed literally.
pub fn g_vector(model: &ActionModel, alpha: &[f64], o: usize) -> Vec<f64> {
    (0..model.num_states())
        .map(|s| {
            model
                .transition
                .row(s)
                .map(|(s2, p)| model.observation.get(s2, o) * p * alpha[s2])
                .sum()
        })
        .collect()
}
