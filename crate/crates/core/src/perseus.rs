//! Randomized point-based value iteration over a fixed set of reachable
//! beliefs.
//!
//! A backup stage builds `V_{n+1}` from `V_n` so that no belief in the set
//! loses value. Beliefs are sampled from the not-yet-improved subset and
//! backed up; when a backup fails to reach the old value the old maximizing
//! vector is copied instead. Either way the sampled belief leaves the
//! pending set, so a stage performs at most `|B|` backups.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_index, ActionModel, Belief, Pomdp};
use crate::value::{backup_with_scratch, initial_value_function, AlphaVector, BackupScratch, ValueFunction};

/// Slack on the "backup improved b" test. A backup of the maximizing belief
/// reproduces its own value only up to roundoff.
pub const IMPROVEMENT_SLACK: f64 = 1e-12;

/// The belief set `B` with cached values under the current value function.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSet {
    beliefs: Vec<Belief>,
    values: Vec<f64>,
    best_index: Vec<usize>,
}

impl BeliefSet {
    pub fn new(beliefs: Vec<Belief>) -> Self {
        let n = beliefs.len();
        Self {
            beliefs,
            values: vec![f64::NAN; n],
            best_index: vec![0; n],
        }
    }

    pub fn beliefs(&self) -> &[Belief] {
        &self.beliefs
    }

    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    /// `V(b)` for each belief under the last value function evaluated.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn best_indices(&self) -> &[usize] {
        &self.best_index
    }

    pub fn push(&mut self, b: Belief) {
        self.beliefs.push(b);
        self.values.push(f64::NAN);
        self.best_index.push(0);
    }

    /// Refreshes the cached values and maximizing indices.
    pub fn evaluate<A>(&mut self, vf: &ValueFunction<A>) -> Result<()> {
        for (k, b) in self.beliefs.iter().enumerate() {
            let (i, _) = vf.best_vector(b)?;
            let v = b.dot(&vf.vectors[i].coefficients);
            self.values[k] = v;
            self.best_index[k] = i;
        }
        Ok(())
    }
}

impl std::ops::Index<usize> for BeliefSet {
    type Output = Belief;

    fn index(&self, i: usize) -> &Belief {
        &self.beliefs[i]
    }
}

/// How the value-difference and policy-change criteria combine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    /// Stop as soon as any configured criterion holds.
    Any,
    /// Stop only when every configured criterion holds.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// Stop when `max_{b∈B} V_{n+1}(b) - V_n(b) <= ε`.
    pub value_diff: Option<f64>,
    /// Stop after this many consecutive stages without policy changes on `B`.
    pub policy_stable_stages: Option<usize>,
    pub combine: Combine,
}

impl Default for Convergence {
    fn default() -> Self {
        Self {
            value_diff: Some(1e-4),
            policy_stable_stages: Some(5),
            combine: Combine::Any,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub belief_count: usize,
    /// Belief-collection trajectories restart from `b₀` after this many steps.
    pub trajectory_horizon: usize,
    pub max_stages: usize,
    pub wallclock_limit: Option<Duration>,
    pub convergence: Convergence,
    pub rng_seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            belief_count: 1000,
            trajectory_horizon: 100,
            max_stages: 1000,
            wallclock_limit: None,
            convergence: Convergence::default(),
            rng_seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn check(&self) -> Result<()> {
        if self.belief_count == 0 || self.trajectory_horizon == 0 || self.max_stages == 0 {
            return Err(Error::InvalidArgument(
                "belief_count, trajectory_horizon and max_stages must be positive".into(),
            ));
        }
        if self.convergence.value_diff.is_some_and(|e| !(e >= 0.0)) {
            return Err(Error::InvalidArgument("value-difference ε must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageStats {
    /// 1-based stage index; stage n produces `V_n`.
    pub stage: usize,
    pub num_vectors: usize,
    pub value_sum: f64,
    pub policy_changes: usize,
    pub max_value_diff: f64,
    pub backups: usize,
    pub improved: usize,
    /// Wall-clock seconds since the solver started.
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxStages,
    Wallclock,
}

#[derive(Debug, Clone)]
pub struct Solution<A = usize> {
    pub value_function: ValueFunction<A>,
    pub stats: Vec<StageStats>,
    pub beliefs: BeliefSet,
    pub stop_reason: StopReason,
}

/// Gathers `config.belief_count` beliefs by random exploration from `b₀`.
///
/// `b₀` is element 0. Each step picks an action uniformly at random, samples
/// the successor state and observation from the model and applies the Bayes
/// update. Trajectories restart every `trajectory_horizon` steps.
pub fn collect_beliefs<R: Rng + ?Sized>(model: &Pomdp, config: &SolverConfig, rng: &mut R) -> BeliefSet {
    let na = model.num_actions();
    collect_with(model.initial_belief(), config, rng, |rng| {
        Ok(model.action_arc(rng.random_range(0..na)).clone())
    })
    .expect("discrete action models never fail")
}

/// Belief collection with actions drawn by `draw_action`.
pub(crate) fn collect_with<R, F>(
    b0: &Belief,
    config: &SolverConfig,
    rng: &mut R,
    mut draw_action: F,
) -> Result<BeliefSet>
where
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> Result<std::sync::Arc<ActionModel>>,
{
    let mut beliefs = Vec::with_capacity(config.belief_count);
    beliefs.push(b0.clone());
    let mut state = b0.sample(rng);
    let mut b = b0.clone();
    let mut t = 0;
    while beliefs.len() < config.belief_count {
        if t == config.trajectory_horizon {
            state = b0.sample(rng);
            b = b0.clone();
            t = 0;
        }
        let model = draw_action(rng)?;
        let next = sample_index(model.transition.row(state), rng);
        let o = sample_index(model.observation.row(next), rng);
        match model.update(&b, o) {
            Some(updated) => {
                b = updated;
                state = next;
                t += 1;
                beliefs.push(b.clone());
            }
            // Only reachable through underflow of the true state's mass.
            None => t = config.trajectory_horizon,
        }
    }
    Ok(BeliefSet::new(beliefs))
}

/// Per-backup record: the tag returned by the backup closure, and whether
/// the backed-up vector improved the sampled belief.
pub(crate) type BackupLog<P> = Vec<(P, bool)>;

/// One backup stage. `beliefs` must hold values under `prev` on entry and
/// holds values under the returned function on exit.
pub(crate) fn run_stage<A, P, R, F>(
    prev: &ValueFunction<A>,
    beliefs: &mut BeliefSet,
    rng: &mut R,
    deadline: Option<Instant>,
    mut backup: F,
) -> Result<(ValueFunction<A>, StageStats, BackupLog<P>)>
where
    A: Clone + PartialEq,
    R: Rng + ?Sized,
    F: FnMut(&mut R, usize, &Belief) -> Result<(AlphaVector<A>, P)>,
{
    let n = beliefs.len();
    let old_values = beliefs.values.clone();
    let old_best = beliefs.best_index.clone();
    let mut new_values = vec![f64::NEG_INFINITY; n];
    let mut new_best = vec![usize::MAX; n];
    let mut pending: Vec<usize> = (0..n).collect();
    let mut next: Vec<AlphaVector<A>> = Vec::new();
    let mut log = Vec::new();
    let mut improved = 0;

    while !pending.is_empty() {
        if deadline.is_some_and(|d| Instant::now() >= d) {
            return Err(Error::Interrupted);
        }
        let k = pending[rng.random_range(0..pending.len())];
        let b = &beliefs.beliefs[k];
        let (alpha, tag) = backup(rng, k, b)?;
        let gain = alpha.value_at(b) >= old_values[k] - IMPROVEMENT_SLACK;
        log.push((tag, gain));
        if gain {
            improved += 1;
            next.push(alpha);
        } else {
            next.push(prev.vectors[old_best[k]].clone());
        }
        let idx = next.len() - 1;
        let coeffs = &next[idx].coefficients;
        for (j, b) in beliefs.beliefs.iter().enumerate() {
            let v = b.dot(coeffs);
            if v > new_values[j] {
                new_values[j] = v;
                new_best[j] = idx;
            }
        }
        pending.retain(|&j| new_values[j] < old_values[j] - IMPROVEMENT_SLACK);
    }

    let backups = next.len();
    let (vf, remap) = dedup_with_map(next);
    for best in &mut new_best {
        *best = remap[*best];
    }

    let mut policy_changes = 0;
    let mut max_diff = f64::NEG_INFINITY;
    for j in 0..n {
        if prev.vectors[old_best[j]].action != vf.vectors[new_best[j]].action {
            policy_changes += 1;
        }
        max_diff = max_diff.max(new_values[j] - old_values[j]);
    }
    let stats = StageStats {
        stage: 0,
        num_vectors: vf.len(),
        value_sum: new_values.iter().sum(),
        policy_changes,
        max_value_diff: max_diff,
        backups,
        improved,
        elapsed_s: 0.0,
    };
    beliefs.values = new_values;
    beliefs.best_index = new_best;
    Ok((vf, stats, log))
}

/// One backup stage on `beliefs`, starting from `vf`.
///
/// Returns `V_{n+1}` with `V_{n+1}(b) >= V_n(b)` for every belief in the set
/// and `|V_{n+1}| <= |B|`. The set's cached values are refreshed.
pub fn backup_stage<R: Rng + ?Sized>(
    model: &Pomdp,
    vf: &ValueFunction,
    beliefs: &mut BeliefSet,
    rng: &mut R,
) -> Result<(ValueFunction, StageStats)> {
    beliefs.evaluate(vf)?;
    let mut scratch = BackupScratch::default();
    let (next, stats, _) = run_stage(vf, beliefs, rng, None, |_, _, b| {
        Ok((backup_with_scratch(model, vf, b, &mut scratch), ()))
    })?;
    Ok((next, stats))
}

/// Removes exact duplicates (same coefficient bits and action), keeping the
/// first occurrence.
pub fn deduplicate_vectors<A: Clone + PartialEq>(vf: &ValueFunction<A>) -> ValueFunction<A> {
    dedup_with_map(vf.vectors.clone()).0
}

/// Returns the deduplicated function and, for each input index, its index in
/// the output.
fn dedup_with_map<A: PartialEq>(vectors: Vec<AlphaVector<A>>) -> (ValueFunction<A>, Vec<usize>) {
    let mut buckets: HashMap<Vec<u64>, Vec<usize>> = HashMap::new();
    let mut kept: Vec<AlphaVector<A>> = Vec::with_capacity(vectors.len());
    let mut remap = Vec::with_capacity(vectors.len());
    for v in vectors {
        let key: Vec<u64> = v.coefficients.iter().map(|c| c.to_bits()).collect();
        let bucket = buckets.entry(key).or_default();
        match bucket.iter().find(|&&i| kept[i].action == v.action) {
            Some(&i) => remap.push(i),
            None => {
                bucket.push(kept.len());
                remap.push(kept.len());
                kept.push(v);
            }
        }
    }
    (ValueFunction::new(kept), remap)
}

/// Stage loop shared by the discrete and continuous solvers.
pub(crate) fn run_stages<A, R, F>(
    initial: ValueFunction<A>,
    mut beliefs: BeliefSet,
    config: &SolverConfig,
    rng: &mut R,
    mut stage: F,
) -> Result<Solution<A>>
where
    A: Clone + PartialEq,
    R: Rng + ?Sized,
    F: FnMut(&ValueFunction<A>, &mut BeliefSet, &mut R, Option<Instant>) -> Result<(ValueFunction<A>, StageStats)>,
{
    config.check()?;
    let start = Instant::now();
    let deadline = config.wallclock_limit.map(|limit| start + limit);
    beliefs.evaluate(&initial)?;
    let mut vf = initial;
    let mut stats = Vec::new();
    let mut stable = 0;
    let stop_reason = loop {
        let (next, mut s) = match stage(&vf, &mut beliefs, rng, deadline) {
            Err(Error::Interrupted) => break StopReason::Wallclock,
            other => other?,
        };
        s.stage = stats.len() + 1;
        s.elapsed_s = start.elapsed().as_secs_f64();
        stable = if s.policy_changes == 0 { stable + 1 } else { 0 };
        let conv = &config.convergence;
        let checks: Vec<bool> = [
            conv.value_diff.map(|eps| s.max_value_diff <= eps),
            conv.policy_stable_stages.map(|k| stable >= k),
        ]
        .into_iter()
        .flatten()
        .collect();
        let converged = !checks.is_empty()
            && match conv.combine {
                Combine::Any => checks.iter().any(|c| *c),
                Combine::All => checks.iter().all(|c| *c),
            };
        vf = next;
        stats.push(s);
        if converged {
            break StopReason::Converged;
        }
        if stats.len() >= config.max_stages {
            break StopReason::MaxStages;
        }
        if config.wallclock_limit.is_some_and(|limit| start.elapsed() >= limit) {
            break StopReason::Wallclock;
        }
    };
    Ok(Solution {
        value_function: vf,
        stats,
        beliefs,
        stop_reason,
    })
}

/// Collects beliefs and runs backup stages from `V₀` until the configured
/// criterion holds. All randomness comes from `config.rng_seed`.
pub fn solve(model: &Pomdp, config: &SolverConfig) -> Result<Solution> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    solve_with_rng(model, config, &mut rng)
}

pub fn solve_with_rng<R: Rng + ?Sized>(model: &Pomdp, config: &SolverConfig, rng: &mut R) -> Result<Solution> {
    config.check()?;
    let beliefs = collect_beliefs(model, config, rng);
    solve_on(model, config, beliefs, rng)
}

/// Runs backup stages on a caller-supplied belief set.
pub fn solve_on<R: Rng + ?Sized>(
    model: &Pomdp,
    config: &SolverConfig,
    beliefs: BeliefSet,
    rng: &mut R,
) -> Result<Solution> {
    if beliefs.is_empty() {
        return Err(Error::InvalidArgument("empty belief set".into()));
    }
    let mut scratch = BackupScratch::default();
    run_stages(initial_value_function(model), beliefs, config, rng, |vf, beliefs, rng, deadline| {
        let (next, stats, _) = run_stage(vf, beliefs, rng, deadline, |_, _, b| {
            Ok((backup_with_scratch(model, vf, b, &mut scratch), ()))
        })?;
        Ok((next, stats))
    })
}
