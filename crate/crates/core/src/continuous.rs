//! Perseus for parameterized (continuous) action spaces.
//!
//! Instead of maximizing over every action, the backup maximizes over a
//! small sampled set `A'_b`: uniform draws from the parameter box, Gaussian
//! draws around the action currently best at `b`, and that action itself.
//! Action models are produced on demand by an [`ActionModelGenerator`].

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActionModel, Belief, Pomdp, ValidationReport};
use crate::perseus::{
    collect_with, run_stage, run_stages, BeliefSet, Solution, SolverConfig, StageStats, IMPROVEMENT_SLACK,
};
use crate::value::{backup_over, lower_bound_value, AlphaVector, BackupScratch, ValueFunction};

/// Real-valued action parameters, e.g. `(θ, d)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionParams(Vec<f64>);

impl ActionParams {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    /// Cache key: every component rounded to 12 decimal places.
    pub fn key(&self) -> Vec<i64> {
        self.0.iter().map(|x| (x * 1e12).round() as i64).collect()
    }
}

/// Axis-aligned parameter box. Periodic components live in
/// `[lower, upper)` and wrap; the others are clipped to `[lower, upper]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub periodic: Vec<bool>,
}

impl ParamBounds {
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, p: &ActionParams) -> bool {
        p.values().len() == self.dim()
            && p.values().iter().enumerate().all(|(i, &x)| {
                x >= self.lower[i] && if self.periodic[i] { x < self.upper[i] } else { x <= self.upper[i] }
            })
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionParams {
        ActionParams::new(
            (0..self.dim())
                .map(|i| {
                    let u: f64 = rng.random();
                    let x = self.lower[i] + u * (self.upper[i] - self.lower[i]);
                    self.fold(i, x)
                })
                .collect(),
        )
    }

    /// Wraps or clips component `i`.
    fn fold(&self, i: usize, x: f64) -> f64 {
        let (lo, hi) = (self.lower[i], self.upper[i]);
        if self.periodic[i] {
            let y = lo + (x - lo).rem_euclid(hi - lo);
            if y >= hi {
                lo
            } else {
                y
            }
        } else {
            x.clamp(lo, hi)
        }
    }
}

/// A family of action models over fixed state and observation sets.
pub trait ActionModelGenerator {
    fn num_states(&self) -> usize;
    fn num_observations(&self) -> usize;
    fn bounds(&self) -> &ParamBounds;
    fn discount(&self) -> f64;
    fn initial_belief(&self) -> &Belief;
    /// A lower bound on `r(s,a)` over all states and parameters.
    fn min_reward(&self) -> f64;
    /// Must be deterministic in `params`.
    fn generate(&self, params: &ActionParams) -> ActionModel;

    /// Action attached to the initial vector.
    fn default_action(&self) -> ActionParams {
        ActionParams::new(self.bounds().lower.clone())
    }
}

/// A finite model seen as a generator with one integer parameter.
#[derive(Debug, Clone)]
pub struct FiniteActions {
    model: Pomdp,
    bounds: ParamBounds,
}

impl FiniteActions {
    pub fn new(model: Pomdp) -> Self {
        let bounds = ParamBounds {
            lower: vec![0.0],
            upper: vec![(model.num_actions() - 1) as f64],
            periodic: vec![false],
        };
        Self { model, bounds }
    }

    pub fn params(a: usize) -> ActionParams {
        ActionParams::new(vec![a as f64])
    }

    /// Every action of the model, in index order.
    pub fn all_actions(&self) -> Vec<ActionParams> {
        (0..self.model.num_actions()).map(Self::params).collect()
    }
}

impl ActionModelGenerator for FiniteActions {
    fn num_states(&self) -> usize {
        self.model.num_states()
    }

    fn num_observations(&self) -> usize {
        self.model.num_observations()
    }

    fn bounds(&self) -> &ParamBounds {
        &self.bounds
    }

    fn discount(&self) -> f64 {
        self.model.discount()
    }

    fn initial_belief(&self) -> &Belief {
        self.model.initial_belief()
    }

    fn min_reward(&self) -> f64 {
        self.model.min_reward()
    }

    fn generate(&self, params: &ActionParams) -> ActionModel {
        let a = params.values()[0].round().clamp(0.0, self.bounds.upper[0]) as usize;
        self.model.action(a).clone()
    }
}

/// Generated action models keyed by quantized parameters.
#[derive(Debug)]
pub struct ActionCache {
    enabled: bool,
    map: Mutex<HashMap<Vec<i64>, Arc<ActionModel>>>,
}

impl Default for ActionCache {
    fn default() -> Self {
        Self::new(true)
    }
}

impl ActionCache {
    pub fn new(enabled: bool) -> Self {
        Self {
            enabled,
            map: Mutex::new(HashMap::new()),
        }
    }

    pub fn len(&self) -> usize {
        self.map.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, params: &ActionParams) -> Option<Arc<ActionModel>> {
        if !self.enabled {
            return None;
        }
        self.map.lock().expect("cache lock").get(&params.key()).cloned()
    }

    pub fn insert(&self, params: &ActionParams, model: Arc<ActionModel>) {
        if self.enabled {
            self.map.lock().expect("cache lock").insert(params.key(), model);
        }
    }

    /// Keeps only the entries for `keep`.
    pub fn retain(&self, keep: &[ActionParams]) {
        let keys: std::collections::HashSet<Vec<i64>> = keep.iter().map(ActionParams::key).collect();
        self.map.lock().expect("cache lock").retain(|k, _| keys.contains(k));
    }

    /// Cached model, or a freshly generated and checked one (not inserted).
    pub fn fetch<G: ActionModelGenerator + ?Sized>(&self, generator: &G, params: &ActionParams) -> Result<Arc<ActionModel>> {
        if let Some(m) = self.get(params) {
            return Ok(m);
        }
        generate_checked(generator, params).map(Arc::new)
    }
}

fn generate_checked<G: ActionModelGenerator + ?Sized>(generator: &G, params: &ActionParams) -> Result<ActionModel> {
    let model = generator.generate(params);
    let violations = model.check(0, generator.num_states(), generator.num_observations());
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(Error::InvalidModel(ValidationReport { violations }))
    }
}

/// Where a candidate action came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Source {
    Uniform,
    Gauss,
    Old,
    /// Supplied explicitly rather than sampled.
    Listed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingScheme {
    pub n_uniform: usize,
    pub n_gauss: usize,
    pub include_old: bool,
    /// Per-parameter standard deviations of the Gaussian draws.
    pub gauss_std: Vec<f64>,
}

impl SamplingScheme {
    /// Scheme with the Continuous Navigation deviations `σ_θ = π/5`, `σ_d = 0.1`.
    pub fn new(n_uniform: usize, n_gauss: usize, include_old: bool) -> Self {
        Self {
            n_uniform,
            n_gauss,
            include_old,
            gauss_std: vec![PI / 5.0, 0.1],
        }
    }

    pub fn check(&self, bounds: &ParamBounds) -> Result<()> {
        if self.n_uniform + self.n_gauss + usize::from(self.include_old) == 0 {
            return Err(Error::InvalidArgument("sampling scheme draws no actions".into()));
        }
        if self.n_gauss > 0 && self.gauss_std.len() != bounds.dim() {
            return Err(Error::DimensionMismatch {
                expected: bounds.dim(),
                found: self.gauss_std.len(),
            });
        }
        if self.gauss_std.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument("Gaussian deviations must be finite and >= 0".into()));
        }
        Ok(())
    }
}

/// `⌈ln δ / ln(1 − ε)⌉`: uniform draws needed so that, with probability at
/// least `1 − δ`, one of them is among the best `ε` fraction of actions.
pub fn sample_bound(epsilon: f64, delta: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) || !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "sample bound needs 0 < ε < 1 and 0 < δ < 1, got ε = {epsilon}, δ = {delta}"
        )));
    }
    Ok((delta.ln() / (1.0 - epsilon).ln()).ceil() as usize)
}

/// `A'_b`: `n_uniform` uniform draws, then `n_gauss` draws around the action
/// of the best vector at `b`, then (optionally) that action itself.
pub fn sample_action_set<R: Rng + ?Sized>(
    scheme: &SamplingScheme,
    b: &Belief,
    vf: &ValueFunction<ActionParams>,
    bounds: &ParamBounds,
    rng: &mut R,
) -> Result<Vec<(ActionParams, Source)>> {
    scheme.check(bounds)?;
    let mut out = Vec::with_capacity(scheme.n_uniform + scheme.n_gauss + 1);
    for _ in 0..scheme.n_uniform {
        out.push((bounds.sample_uniform(rng), Source::Uniform));
    }
    if scheme.n_gauss > 0 || scheme.include_old {
        let best = vf.policy_action(b)?.clone();
        for _ in 0..scheme.n_gauss {
            let params = (0..bounds.dim())
                .map(|i| {
                    let sd = scheme.gauss_std[i];
                    let x = if sd > 0.0 {
                        Normal::new(best.values()[i], sd).expect("finite deviation").sample(rng)
                    } else {
                        best.values()[i]
                    };
                    bounds.fold(i, x)
                })
                .collect();
            out.push((ActionParams::new(params), Source::Gauss));
        }
        if scheme.include_old {
            out.push((best, Source::Old));
        }
    }
    Ok(out)
}

/// Result of [`backup_prime`].
#[derive(Debug, Clone)]
pub struct PrimeBackup {
    pub vector: AlphaVector<ActionParams>,
    /// Position of the winning action in the candidate list.
    pub candidate: usize,
    pub model: Arc<ActionModel>,
}

/// `arg max_{g_a^b, a ∈ A'_b} b·g_a^b`. Ties go to the earliest candidate.
pub fn backup_prime<G: ActionModelGenerator + ?Sized>(
    generator: &G,
    vf: &ValueFunction<ActionParams>,
    b: &Belief,
    actions: &[ActionParams],
    cache: &ActionCache,
) -> Result<PrimeBackup> {
    let mut scratch = BackupScratch::default();
    backup_prime_with(generator, vf, b, actions, cache, &mut scratch)
}

fn backup_prime_with<G: ActionModelGenerator + ?Sized>(
    generator: &G,
    vf: &ValueFunction<ActionParams>,
    b: &Belief,
    actions: &[ActionParams],
    cache: &ActionCache,
    scratch: &mut BackupScratch,
) -> Result<PrimeBackup> {
    if actions.is_empty() {
        return Err(Error::InvalidArgument("backup over an empty action set".into()));
    }
    if vf.is_empty() {
        return Err(Error::EmptyValueFunction);
    }
    let models = actions
        .iter()
        .map(|p| cache.fetch(generator, p))
        .collect::<Result<Vec<_>>>()?;
    let out = backup_over(models.iter().map(|m| m.as_ref()), generator.discount(), vf, b, scratch);
    Ok(PrimeBackup {
        vector: AlphaVector::new(out.coefficients, actions[out.candidate].clone()),
        candidate: out.candidate,
        model: Arc::clone(&models[out.candidate]),
    })
}

/// How the candidate set `A'_b` is formed for each backup.
#[derive(Debug, Clone, PartialEq)]
pub enum ActionSource {
    /// Freshly sampled for every backup.
    Sampled(SamplingScheme),
    /// The same list every time.
    Fixed(Vec<ActionParams>),
}

/// Per-stage tally of which candidate produced each backup result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub improved_uniform: usize,
    pub improved_gauss: usize,
    pub improved_old: usize,
    pub improved_listed: usize,
    pub not_improved: usize,
}

impl Provenance {
    pub fn total(&self) -> usize {
        self.improved_uniform + self.improved_gauss + self.improved_old + self.improved_listed + self.not_improved
    }

    /// `[uniform, gauss, old, not improved]` as fractions of all backups.
    pub fn frequencies(&self) -> [f64; 4] {
        let n = self.total().max(1) as f64;
        [
            self.improved_uniform as f64 / n,
            self.improved_gauss as f64 / n,
            self.improved_old as f64 / n,
            self.not_improved as f64 / n,
        ]
    }

    fn record(&mut self, source: Source, improved: bool) {
        let slot = match (improved, source) {
            (false, _) => &mut self.not_improved,
            (true, Source::Uniform) => &mut self.improved_uniform,
            (true, Source::Gauss) => &mut self.improved_gauss,
            (true, Source::Old) => &mut self.improved_old,
            (true, Source::Listed) => &mut self.improved_listed,
        };
        *slot += 1;
    }
}

#[derive(Debug, Clone)]
pub struct ContinuousSolution {
    pub solution: Solution<ActionParams>,
    /// One entry per stage, aligned with `solution.stats`.
    pub provenance: Vec<Provenance>,
}

/// `V₀`: the lower-bound vector tagged with the generator's default action.
pub fn initial_continuous_value_function<G: ActionModelGenerator + ?Sized>(generator: &G) -> ValueFunction<ActionParams> {
    ValueFunction::new(vec![AlphaVector::new(
        vec![lower_bound_value(generator.min_reward(), generator.discount()); generator.num_states()],
        generator.default_action(),
    )])
}

/// Belief collection with actions drawn uniformly from the parameter box.
pub fn collect_continuous_beliefs<G, R>(generator: &G, config: &SolverConfig, rng: &mut R) -> Result<BeliefSet>
where
    G: ActionModelGenerator + ?Sized,
    R: Rng + ?Sized,
{
    collect_with(generator.initial_belief(), config, rng, |rng| {
        let params = generator.bounds().sample_uniform(rng);
        generate_checked(generator, &params).map(Arc::new)
    })
}

/// Collects beliefs and solves; all randomness comes from `config.rng_seed`.
pub fn perseus_solve_continuous<G: ActionModelGenerator + ?Sized>(
    generator: &G,
    source: &ActionSource,
    config: &SolverConfig,
    cache: &ActionCache,
) -> Result<ContinuousSolution> {
    config.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let beliefs = collect_continuous_beliefs(generator, config, &mut rng)?;
    perseus_solve_continuous_on(generator, source, config, beliefs, cache, &mut rng)
}

/// One backup stage with `backup'`. `beliefs` is re-evaluated under `vf`
/// first. Models of actions that end up attached to the returned vectors
/// are kept in `cache`; everything else is evicted.
pub fn continuous_backup_stage<G, R>(
    generator: &G,
    source: &ActionSource,
    vf: &ValueFunction<ActionParams>,
    beliefs: &mut BeliefSet,
    cache: &ActionCache,
    rng: &mut R,
) -> Result<(ValueFunction<ActionParams>, StageStats, Provenance)>
where
    G: ActionModelGenerator + ?Sized,
    R: Rng + ?Sized,
{
    beliefs.evaluate(vf)?;
    let mut scratch = BackupScratch::default();
    stage_on(generator, source, vf, beliefs, cache, rng, &mut scratch, None)
}

fn stage_on<G, R>(
    generator: &G,
    source: &ActionSource,
    vf: &ValueFunction<ActionParams>,
    beliefs: &mut BeliefSet,
    cache: &ActionCache,
    rng: &mut R,
    scratch: &mut BackupScratch,
    deadline: Option<Instant>,
) -> Result<(ValueFunction<ActionParams>, StageStats, Provenance)>
where
    G: ActionModelGenerator + ?Sized,
    R: Rng + ?Sized,
{
    let (next, stats, log) = run_stage(vf, beliefs, rng, deadline, |rng, _, b| {
        let candidates: Vec<(ActionParams, Source)> = match source {
            ActionSource::Sampled(scheme) => sample_action_set(scheme, b, vf, generator.bounds(), rng)?,
            ActionSource::Fixed(list) => list.iter().map(|p| (p.clone(), Source::Listed)).collect(),
        };
        let (params, sources): (Vec<_>, Vec<_>) = candidates.into_iter().unzip();
        let out = backup_prime_with(generator, vf, b, &params, cache, scratch)?;
        if out.vector.value_at(b) >= vf.argmax_unchecked(b).1 - IMPROVEMENT_SLACK {
            cache.insert(&out.vector.action, out.model);
        }
        Ok((out.vector, sources[out.candidate]))
    })?;
    let mut tally = Provenance::default();
    for (source, improved) in log {
        tally.record(source, improved);
    }
    let keep: Vec<ActionParams> = next.vectors.iter().map(|v| v.action.clone()).collect();
    cache.retain(&keep);
    Ok((next, stats, tally))
}

/// Backup stages with `backup'` on a caller-supplied belief set.
pub fn perseus_solve_continuous_on<G, R>(
    generator: &G,
    source: &ActionSource,
    config: &SolverConfig,
    beliefs: BeliefSet,
    cache: &ActionCache,
    rng: &mut R,
) -> Result<ContinuousSolution>
where
    G: ActionModelGenerator + ?Sized,
    R: Rng + ?Sized,
{
    if beliefs.is_empty() {
        return Err(Error::InvalidArgument("empty belief set".into()));
    }
    match source {
        ActionSource::Sampled(scheme) => scheme.check(generator.bounds())?,
        ActionSource::Fixed(list) if list.is_empty() => {
            return Err(Error::InvalidArgument("empty action list".into()));
        }
        ActionSource::Fixed(_) => {}
    }
    let mut provenance = Vec::new();
    let mut scratch = BackupScratch::default();
    let initial = initial_continuous_value_function(generator);
    let solution = run_stages(initial, beliefs, config, rng, |vf, beliefs, rng, deadline| {
        let (next, stats, tally) = stage_on(generator, source, vf, beliefs, cache, rng, &mut scratch, deadline)?;
        provenance.push(tally);
        Ok((next, stats))
    })?;
    Ok(ContinuousSolution { solution, provenance })
}
