//! Monte-Carlo policy evaluation.
//!
//! Start states are drawn from `b₀`; the agent's belief always starts at
//! `b₀`. Every trajectory has its own generator seeded from
//! `(run seed, start index, trajectory index)`, so results do not depend on
//! the order in which trajectories are run.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuous::{ActionCache, ActionModelGenerator, ActionParams, ParamBounds};
use crate::error::{Error, Result};
use crate::format::{format_g17, PolicyAction};
use crate::model::{check_index, sample_index, ActionModel, Belief, Pomdp};
use crate::perseus::BeliefSet;
use crate::seed::{derive_path, rng, EVAL_STREAM};
use crate::value::ValueFunction;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub n_starts: usize,
    pub n_trajectories_per_start: usize,
    pub max_steps: usize,
    pub rng_seed: u64,
}

impl Default for EvalConfig {
    /// 100 start states × 10 trajectories of at most 100 steps.
    fn default() -> Self {
        Self {
            n_starts: 100,
            n_trajectories_per_start: 10,
            max_steps: 100,
            rng_seed: 0,
        }
    }
}

impl EvalConfig {
    pub fn check(&self) -> Result<()> {
        if self.n_starts == 0 || self.n_trajectories_per_start == 0 || self.max_steps == 0 {
            return Err(Error::InvalidArgument(
                "starts, trajectories per start and max steps must all be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean discounted return.
    pub mean: f64,
    /// Sample standard deviation of the discounted returns.
    pub std: f64,
    pub count: usize,
    pub mean_steps: f64,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "mean,std,count,mean_steps";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            format_g17(self.mean),
            format_g17(self.std),
            self.count,
            format_g17(self.mean_steps)
        )
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std / (self.count as f64).sqrt()
    }
}

/// When a trajectory ends before `max_steps`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum Termination {
    #[default]
    Never,
    /// Stop as soon as the hidden state is in the set (absorbing states).
    OnEntry(Vec<bool>),
    /// Stop right after acting in a state of the set (goal states).
    AfterActing(Vec<bool>),
}

impl Termination {
    pub fn on_entry(num_states: usize, states: &[usize]) -> Self {
        Self::OnEntry(mask(num_states, states))
    }

    pub fn after_acting(num_states: usize, states: &[usize]) -> Self {
        Self::AfterActing(mask(num_states, states))
    }
}

fn mask(num_states: usize, states: &[usize]) -> Vec<bool> {
    let mut m = vec![false; num_states];
    for &s in states {
        m[s] = true;
    }
    m
}

/// Chooses actions from beliefs.
pub trait Policy<A> {
    fn action(&self, b: &Belief, rng: &mut ChaCha8Rng) -> Result<A>;
}

impl<A: Clone> Policy<A> for ValueFunction<A> {
    fn action(&self, b: &Belief, _: &mut ChaCha8Rng) -> Result<A> {
        self.policy_action(b).cloned()
    }
}

/// Uniformly random discrete actions.
#[derive(Debug, Clone, Copy)]
pub struct RandomPolicy {
    pub num_actions: usize,
}

impl Policy<usize> for RandomPolicy {
    fn action(&self, _: &Belief, rng: &mut ChaCha8Rng) -> Result<usize> {
        Ok(rng.random_range(0..self.num_actions))
    }
}

/// Uniformly random action parameters.
#[derive(Debug, Clone)]
pub struct RandomParams {
    pub bounds: ParamBounds,
}

impl Policy<ActionParams> for RandomParams {
    fn action(&self, _: &Belief, rng: &mut ChaCha8Rng) -> Result<ActionParams> {
        Ok(self.bounds.sample_uniform(rng))
    }
}

/// What a simulator needs from a model.
pub trait Dynamics<A> {
    fn num_states(&self) -> usize;
    fn discount(&self) -> f64;
    fn initial_belief(&self) -> &Belief;
    fn model(&self, action: &A) -> Result<Arc<ActionModel>>;
}

impl Dynamics<usize> for Pomdp {
    fn num_states(&self) -> usize {
        Pomdp::num_states(self)
    }

    fn discount(&self) -> f64 {
        Pomdp::discount(self)
    }

    fn initial_belief(&self) -> &Belief {
        Pomdp::initial_belief(self)
    }

    fn model(&self, action: &usize) -> Result<Arc<ActionModel>> {
        check_index("action", *action, self.num_actions())?;
        Ok(Arc::clone(self.action_arc(*action)))
    }
}

/// Generator-backed dynamics. Up to `CACHE_LIMIT` action models are kept,
/// enough for every action of a solved value function.
pub struct GeneratedDynamics<'g, G: ?Sized> {
    generator: &'g G,
    cache: ActionCache,
}

impl<'g, G: ActionModelGenerator + ?Sized> GeneratedDynamics<'g, G> {
    pub const CACHE_LIMIT: usize = 4096;

    pub fn new(generator: &'g G) -> Self {
        Self {
            generator,
            cache: ActionCache::default(),
        }
    }
}

impl<G: ActionModelGenerator + ?Sized> Dynamics<ActionParams> for GeneratedDynamics<'_, G> {
    fn num_states(&self) -> usize {
        self.generator.num_states()
    }

    fn discount(&self) -> f64 {
        self.generator.discount()
    }

    fn initial_belief(&self) -> &Belief {
        self.generator.initial_belief()
    }

    fn model(&self, action: &ActionParams) -> Result<Arc<ActionModel>> {
        let model = self.cache.fetch(self.generator, action)?;
        if self.cache.len() < Self::CACHE_LIMIT {
            self.cache.insert(action, Arc::clone(&model));
        }
        Ok(model)
    }
}

/// Runs one trajectory from hidden state `start` with the agent believing
/// `belief`. Returns the discounted return and the number of actions taken.
pub fn simulate_trajectory<A, D, P>(
    dynamics: &D,
    policy: &P,
    start: usize,
    belief: &Belief,
    rng: &mut ChaCha8Rng,
    max_steps: usize,
    termination: &Termination,
) -> Result<(f64, usize)>
where
    A: PolicyAction,
    D: Dynamics<A> + ?Sized,
    P: Policy<A> + ?Sized,
{
    check_index("state", start, dynamics.num_states())?;
    let gamma = dynamics.discount();
    let mut state = start;
    let mut b = belief.clone();
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut steps = 0;
    while steps < max_steps {
        if matches!(termination, Termination::OnEntry(set) if set[state]) {
            break;
        }
        let action = policy.action(&b, rng)?;
        let model = dynamics.model(&action)?;
        total += weight * model.reward[state];
        steps += 1;
        if matches!(termination, Termination::AfterActing(set) if set[state]) {
            break;
        }
        let next = sample_index(model.transition.row(state), rng);
        let o = sample_index(model.observation.row(next), rng);
        b = model.update(&b, o).ok_or_else(|| Error::ImpossibleObservation {
            action: action.write_label(),
            observation: o,
        })?;
        state = next;
        weight *= gamma;
    }
    Ok((total, steps))
}

/// `n_starts` start states drawn from `b₀`, each followed by
/// `n_trajectories_per_start` trajectories.
pub fn evaluate_policy<A, D, P>(dynamics: &D, policy: &P, config: &EvalConfig, termination: &Termination) -> Result<EvalReport>
where
    A: PolicyAction,
    D: Dynamics<A> + ?Sized,
    P: Policy<A> + ?Sized,
{
    config.check()?;
    if let Termination::OnEntry(set) | Termination::AfterActing(set) = termination {
        if set.len() != dynamics.num_states() {
            return Err(Error::DimensionMismatch {
                expected: dynamics.num_states(),
                found: set.len(),
            });
        }
    }
    let b0 = dynamics.initial_belief();
    let mut returns = Vec::with_capacity(config.n_starts * config.n_trajectories_per_start);
    let mut steps = 0usize;
    for i in 0..config.n_starts {
        let mut start_rng = rng(derive_path(config.rng_seed, &[EVAL_STREAM, i as u64]));
        let start = b0.sample(&mut start_rng);
        for j in 0..config.n_trajectories_per_start {
            let mut traj_rng = rng(derive_path(config.rng_seed, &[EVAL_STREAM, i as u64, j as u64 + 1]));
            let (ret, n) = simulate_trajectory(dynamics, policy, start, b0, &mut traj_rng, config.max_steps, termination)?;
            returns.push(ret);
            steps += n;
        }
    }
    let count = returns.len();
    let mean = returns.iter().sum::<f64>() / count as f64;
    let var = if count > 1 {
        returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (count - 1) as f64
    } else {
        0.0
    };
    Ok(EvalReport {
        mean,
        std: var.sqrt(),
        count,
        mean_steps: steps as f64 / count as f64,
    })
}

/// Number of beliefs whose greedy action differs between the two functions.
pub fn policy_changes<A: PartialEq>(prev: &ValueFunction<A>, next: &ValueFunction<A>, beliefs: &BeliefSet) -> Result<usize> {
    let mut changes = 0;
    for b in beliefs.beliefs() {
        if prev.policy_action(b)? != next.policy_action(b)? {
            changes += 1;
        }
    }
    Ok(changes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::tiny::build_tiny;
    use crate::model::DenseModel;
    use crate::perseus::{solve, SolverConfig};
    use crate::testutil::noisy_sensor;
    use crate::value::AlphaVector;

    #[test]
    fn constant_reward_matches_partial_geometric_sum() {
        let m = build_tiny("1s1a1o").unwrap();
        let vf = ValueFunction::new(vec![AlphaVector::new(vec![0.0], 0)]);
        let mut r = rng(1);
        let (ret, steps) = simulate_trajectory(&m, &vf, 0, m.initial_belief(), &mut r, 100, &Termination::Never).unwrap();
        assert_eq!(steps, 100);
        assert!((ret - (1.0 - 0.95f64.powi(100)) / 0.05).abs() < 1e-9);
    }

    #[test]
    fn zero_reward_gives_zero() {
        let mut dense = noisy_sensor().to_dense();
        dense.reward = vec![vec![0.0, 0.0]];
        let m = dense.build().unwrap();
        let report = evaluate_policy(&m, &RandomPolicy { num_actions: 1 }, &EvalConfig::default(), &Termination::Never).unwrap();
        assert_eq!(report.mean, 0.0);
        assert_eq!(report.count, 1000);
    }

    #[test]
    fn deterministic_model_and_policy_have_zero_spread() {
        let m = DenseModel {
            transition: vec![vec![vec![0.0, 1.0], vec![1.0, 0.0]]],
            observation: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            reward: vec![vec![1.0, -1.0]],
            discount: 0.9,
            initial_belief: vec![1.0, 0.0],
        }
        .build()
        .unwrap();
        let vf = ValueFunction::new(vec![AlphaVector::new(vec![0.0, 0.0], 0)]);
        let config = EvalConfig {
            n_starts: 5,
            n_trajectories_per_start: 3,
            max_steps: 7,
            rng_seed: 3,
        };
        let report = evaluate_policy(&m, &vf, &config, &Termination::Never).unwrap();
        assert!(report.std < 1e-12);
        assert_eq!(report.count, 15);
        assert_eq!(report.mean_steps, 7.0);
    }

    #[test]
    fn evaluation_is_reproducible() {
        let m = build_tiny("2s-symmetric").unwrap();
        let config = EvalConfig {
            rng_seed: 9,
            ..EvalConfig::default()
        };
        let policy = RandomPolicy { num_actions: 3 };
        let a = evaluate_policy(&m, &policy, &config, &Termination::Never).unwrap();
        let b = evaluate_policy(&m, &policy, &config, &Termination::Never).unwrap();
        assert_eq!(a, b);
        let mut r1 = rng(4);
        let mut r2 = rng(4);
        let t1 = simulate_trajectory(&m, &policy, 1, m.initial_belief(), &mut r1, 50, &Termination::Never).unwrap();
        let t2 = simulate_trajectory(&m, &policy, 1, m.initial_belief(), &mut r2, 50, &Termination::Never).unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn termination_rules() {
        let m = build_tiny("1s1a1o").unwrap();
        let vf = ValueFunction::new(vec![AlphaVector::new(vec![0.0], 0)]);
        let mut r = rng(0);
        let entry = Termination::on_entry(1, &[0]);
        assert_eq!(simulate_trajectory(&m, &vf, 0, m.initial_belief(), &mut r, 10, &entry).unwrap(), (0.0, 0));
        let after = Termination::after_acting(1, &[0]);
        assert_eq!(simulate_trajectory(&m, &vf, 0, m.initial_belief(), &mut r, 10, &after).unwrap(), (1.0, 1));
        assert!(evaluate_policy(&m, &vf, &EvalConfig::default(), &Termination::on_entry(2, &[])).is_err());
    }

    #[test]
    fn policy_change_counts() {
        let m = noisy_sensor();
        let sol = solve(&m, &SolverConfig { belief_count: 20, ..SolverConfig::default() }).unwrap();
        let vf = &sol.value_function;
        assert_eq!(policy_changes(vf, vf, &sol.beliefs).unwrap(), 0);
        let a = ValueFunction::new(vec![AlphaVector::new(vec![0.0, 0.0], 0usize)]);
        let b = ValueFunction::new(vec![AlphaVector::new(vec![0.0, 0.0], 1usize)]);
        assert_eq!(policy_changes(&a, &b, &sol.beliefs).unwrap(), 20);
    }

    #[test]
    fn report_csv() {
        let r = EvalReport {
            mean: -6.5,
            std: 0.25,
            count: 1000,
            mean_steps: 12.0,
        };
        assert_eq!(r.csv_row(), "-6.5,0.25,1000,12");
    }
}
