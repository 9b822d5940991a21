//! Exact value iteration by Monahan enumeration with pruning.
//!
//! Only meant for tiny models: the enumerated set grows as
//! `|A|·|V|^{|O|}` and every backup refuses to run above a cap.

use microlp::{ComparisonOp, OptimizationDirection, Problem};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::domains::random::random_belief;
use crate::error::{Error, Result};
use crate::model::{ActionIndex, Belief, Pomdp};
use crate::value::{g_vector, initial_value_function, AlphaVector, ValueFunction};

/// Default upper bound on `|A|·|V|^{|O|}` for one exact backup.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;
/// A candidate whose best margin over the other vectors is at most this is
/// pruned by the LP test.
pub const LP_SLACK: f64 = 1e-9;
/// Number of random probe beliefs used for the value-iteration residual.
pub const PROBE_COUNT: usize = 10_000;
const PROBE_SEED: u64 = 0x5eed_0f_9e0be;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PruneMode {
    /// Remove vectors dominated componentwise by another vector.
    PointwiseDominance,
    /// Pointwise dominance followed by an LP test per survivor.
    #[default]
    ExactLp,
}

/// `{p + q : p ∈ left, q ∈ right}` in `p`-major order; actions come from
/// `left`.
pub fn cross_sum<A: Clone>(left: &[AlphaVector<A>], right: &[AlphaVector<A>]) -> Result<Vec<AlphaVector<A>>> {
    let dim = left.first().or(right.first()).map_or(0, AlphaVector::len);
    if let Some(v) = left.iter().chain(right).find(|v| v.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: v.len(),
        });
    }
    let mut out = Vec::with_capacity(left.len() * right.len());
    for p in left {
        for q in right {
            let coefficients = p.coefficients.iter().zip(&q.coefficients).map(|(x, y)| x + y).collect();
            out.push(AlphaVector::new(coefficients, p.action.clone()));
        }
    }
    Ok(out)
}

/// Removes vectors that are nowhere (or, for the LP test, only within
/// [`LP_SLACK`]) maximal. Survivors keep their relative order.
pub fn prune<A: Clone>(vectors: Vec<AlphaVector<A>>, mode: PruneMode) -> Result<Vec<AlphaVector<A>>> {
    let kept = pointwise_prune(vectors);
    match mode {
        PruneMode::PointwiseDominance => Ok(kept),
        PruneMode::ExactLp => lp_prune(kept),
    }
}

fn dominates(u: &[f64], v: &[f64]) -> bool {
    u.iter().zip(v).all(|(a, b)| a >= b)
}

/// `v_i` is removed when some `u_j ≥ v_i` componentwise with `u_j ≠ v_i`, or
/// `u_j = v_i` and `j < i`.
fn pointwise_prune<A>(vectors: Vec<AlphaVector<A>>) -> Vec<AlphaVector<A>> {
    let n = vectors.len();
    let mut removed = vec![false; n];
    for i in 0..n {
        let vi = &vectors[i].coefficients;
        for j in 0..n {
            if i == j || removed[j] {
                continue;
            }
            let uj = &vectors[j].coefficients;
            if dominates(uj, vi) && (j < i || uj != vi) {
                removed[i] = true;
                break;
            }
        }
    }
    vectors
        .into_iter()
        .zip(removed)
        .filter_map(|(v, r)| (!r).then_some(v))
        .collect()
}

/// Filters against a growing set of confirmed vectors: each candidate is
/// tested by one LP against the vectors kept so far. A positive margin yields
/// a belief whose best remaining vector is confirmed; otherwise the candidate
/// is dropped.
fn lp_prune<A>(vectors: Vec<AlphaVector<A>>) -> Result<Vec<AlphaVector<A>>> {
    let n = vectors.len();
    if n <= 1 {
        return Ok(vectors);
    }
    let dim = vectors[0].len();
    let mut remaining: Vec<usize> = (0..n).collect();
    let mut kept: Vec<usize> = Vec::new();
    let confirm = |b: &[f64], remaining: &mut Vec<usize>, kept: &mut Vec<usize>| {
        let pos = best_at(&vectors, remaining, b);
        let value = dot(b, &vectors[remaining[pos]].coefficients);
        let wins = kept.iter().all(|&k| value - dot(b, &vectors[k].coefficients) > LP_SLACK);
        if wins {
            kept.push(remaining.swap_remove(pos));
        }
        wins
    };
    for s in 0..=dim {
        if remaining.is_empty() {
            break;
        }
        let b = if s < dim {
            let mut e = vec![0.0; dim];
            e[s] = 1.0;
            e
        } else {
            vec![1.0 / dim as f64; dim]
        };
        confirm(&b, &mut remaining, &mut kept);
    }
    while let Some(&i) = remaining.last() {
        let (delta, b) = max_margin(&vectors, i, &kept).map_err(|message| Error::Lp { candidate: i, message })?;
        if delta > LP_SLACK {
            if !confirm(&b, &mut remaining, &mut kept) {
                kept.push(i);
                remaining.pop();
            }
        } else {
            remaining.pop();
        }
    }
    kept.sort_unstable();
    let mut alive = vec![false; n];
    for i in kept {
        alive[i] = true;
    }
    Ok(vectors
        .into_iter()
        .zip(alive)
        .filter_map(|(v, a)| a.then_some(v))
        .collect())
}

/// Position in `candidates` of the best vector at `b`; near-ties go to the
/// lexicographically larger coefficients.
fn best_at<A>(vectors: &[AlphaVector<A>], candidates: &[usize], b: &[f64]) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (pos, &i) in candidates.iter().enumerate() {
        let value = dot(b, &vectors[i].coefficients);
        let better = if (value - best_value).abs() <= 1e-12 {
            let (u, w) = (&vectors[i].coefficients, &vectors[candidates[best]].coefficients);
            u.iter().zip(w).find(|(x, y)| x != y).is_some_and(|(x, y)| x > y)
        } else {
            value > best_value
        };
        if better {
            best = pos;
            best_value = value;
        }
    }
    best
}

fn dot(b: &[f64], v: &[f64]) -> f64 {
    b.iter().zip(v).map(|(x, y)| x * y).sum()
}

/// `max δ` s.t. `b·(v_i − v_j) ≥ δ` for every `j` in `others`, `b ∈ Δ`.
fn max_margin<A>(vectors: &[AlphaVector<A>], i: usize, others: &[usize]) -> std::result::Result<(f64, Vec<f64>), String> {
    let v = &vectors[i].coefficients;
    let mut problem = Problem::new(OptimizationDirection::Maximize);
    let delta = problem.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    let b: Vec<_> = (0..v.len()).map(|_| problem.add_var(0.0, (0.0, 1.0))).collect();
    for &j in others {
        let u = &vectors[j].coefficients;
        let mut terms: Vec<_> = b.iter().enumerate().map(|(s, &var)| (var, v[s] - u[s])).collect();
        terms.push((delta, -1.0));
        problem.add_constraint(terms, ComparisonOp::Ge, 0.0);
    }
    problem.add_constraint(b.iter().map(|&var| (var, 1.0)).collect::<Vec<_>>(), ComparisonOp::Eq, 1.0);
    let outcome = problem.solve().map_err(|e| e.to_string())?;
    let solution = outcome
        .into_solution()
        .map_err(|_| "solver interrupted".to_string())?;
    let point = b.iter().map(|&var| solution.var_value(var)).collect();
    Ok((solution.objective(), point))
}

/// `|A|·|V|^{|O|}`, saturating.
pub fn enumeration_size(model: &Pomdp, vf_len: usize) -> u128 {
    let per_action = (vf_len as u128).checked_pow(model.num_observations() as u32).unwrap_or(u128::MAX);
    per_action.saturating_mul(model.num_actions() as u128)
}

fn check_cap(model: &Pomdp, vf: &ValueFunction, cap: u128) -> Result<()> {
    if vf.is_empty() {
        return Err(Error::EmptyValueFunction);
    }
    if let Some(n) = vf.num_states().filter(|&n| n != model.num_states()) {
        return Err(Error::DimensionMismatch {
            expected: model.num_states(),
            found: n,
        });
    }
    let required = enumeration_size(model, vf.len());
    if required > cap {
        return Err(Error::EnumerationCap { required, cap });
    }
    Ok(())
}

/// `{ r_a/|O| + γ g_{a,o}^i : i }` for each observation of action `a`.
fn projections(model: &Pomdp, vf: &ValueFunction, a: ActionIndex) -> Vec<Vec<AlphaVector>> {
    let am = model.action(a);
    let share = 1.0 / model.num_observations() as f64;
    (0..model.num_observations())
        .map(|o| {
            vf.vectors
                .iter()
                .map(|alpha| {
                    let g = g_vector(am, &alpha.coefficients, o);
                    let coefficients = g
                        .iter()
                        .zip(am.reward.iter())
                        .map(|(gs, r)| share * r + model.discount() * gs)
                        .collect();
                    AlphaVector::new(coefficients, a)
                })
                .collect()
        })
        .collect()
}

/// The full, unpruned `H V = ∪_a ⊕_o {r_a/|O| + γ g_{a,o}^i}`.
pub fn monahan_enumerate(model: &Pomdp, vf: &ValueFunction, cap: u128) -> Result<ValueFunction> {
    check_cap(model, vf, cap)?;
    let mut out = Vec::new();
    for a in 0..model.num_actions() {
        let mut parts = projections(model, vf, a).into_iter();
        let mut acc = parts.next().expect("at least one observation");
        for part in parts {
            acc = cross_sum(&acc, &part)?;
        }
        out.extend(acc);
    }
    Ok(ValueFunction::new(out))
}

/// Exact backup with incremental pruning after every cross-sum, using the
/// default enumeration cap.
pub fn monahan_backup(model: &Pomdp, vf: &ValueFunction, mode: PruneMode) -> Result<ValueFunction> {
    monahan_backup_capped(model, vf, mode, DEFAULT_ENUMERATION_CAP)
}

pub fn monahan_backup_capped(model: &Pomdp, vf: &ValueFunction, mode: PruneMode, cap: u128) -> Result<ValueFunction> {
    check_cap(model, vf, cap)?;
    let mut out = Vec::new();
    for a in 0..model.num_actions() {
        let mut parts = projections(model, vf, a).into_iter();
        let mut acc = prune(parts.next().expect("at least one observation"), mode)?;
        for part in parts {
            acc = prune(cross_sum(&acc, &prune(part, mode)?)?, mode)?;
        }
        out.extend(acc);
    }
    Ok(ValueFunction::new(prune(out, mode)?))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    pub prune: PruneMode,
    pub enumeration_cap: u128,
    pub probe_count: usize,
    pub probe_seed: u64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            prune: PruneMode::ExactLp,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
            probe_count: PROBE_COUNT,
            probe_seed: PROBE_SEED,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ExactSolution {
    pub value_function: ValueFunction,
    pub iterations: usize,
    /// `max_b |V_{n+1}(b) − V_n(b)|` over the probe set at the last iteration.
    pub residual: f64,
    /// `residual·γ/(1−γ)`
    pub error_bound: f64,
}

/// Simplex corners followed by `count` seeded random beliefs.
pub fn probe_beliefs(num_states: usize, count: usize, seed: u64) -> Vec<Belief> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_states)
        .map(|s| Belief::corner(num_states, s))
        .chain((0..count).map(|_| random_belief(&mut rng, num_states)))
        .collect()
}

pub fn exact_value_iteration(model: &Pomdp, residual_tol: f64, max_iters: usize) -> Result<ExactSolution> {
    exact_value_iteration_with(model, residual_tol, max_iters, &ExactOptions::default())
}

pub fn exact_value_iteration_with(
    model: &Pomdp,
    residual_tol: f64,
    max_iters: usize,
    options: &ExactOptions,
) -> Result<ExactSolution> {
    if !(residual_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("residual tolerance {residual_tol} must be >= 0")));
    }
    let probes = probe_beliefs(model.num_states(), options.probe_count, options.probe_seed);
    let values = |vf: &ValueFunction| -> Vec<f64> { probes.iter().map(|b| vf.argmax_unchecked(b).1).collect() };

    let mut vf = initial_value_function(model);
    let mut current = values(&vf);
    let mut residual = f64::INFINITY;
    for iteration in 1..=max_iters {
        let next = monahan_backup_capped(model, &vf, options.prune, options.enumeration_cap)?;
        let next_values = values(&next);
        residual = current
            .iter()
            .zip(&next_values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        vf = next;
        current = next_values;
        if residual <= residual_tol {
            let g = model.discount();
            return Ok(ExactSolution {
                value_function: vf,
                iterations: iteration,
                residual,
                error_bound: residual * g / (1.0 - g),
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual,
    })
}
