//! Seeded random models, beliefs and value functions for property tests and
//! oracle comparisons.

use rand::Rng;

use crate::model::{Belief, DenseModel, Pomdp};
use crate::value::{AlphaVector, ValueFunction};

/// Random stochastic row of length `n`. About a third of the entries are
/// zeroed (never all of them) to exercise sparse paths.
fn random_row<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let keep = rng.random_range(0..n);
    let mut row: Vec<f64> = (0..n)
        .map(|j| {
            if j != keep && rng.random_bool(1.0 / 3.0) {
                0.0
            } else {
                rng.random_range(0.05..1.0)
            }
        })
        .collect();
    let sum: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= sum);
    row
}

/// Random valid model with rewards in [-10, 10], γ = 0.95 and a random
/// full-support initial belief.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
) -> Pomdp {
    random_dense_model(rng, num_states, num_actions, num_observations)
        .build()
        .expect("random model is valid")
}

pub fn random_dense_model<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    num_observations: usize,
) -> DenseModel {
    let transition = (0..num_actions)
        .map(|_| (0..num_states).map(|_| random_row(rng, num_states)).collect())
        .collect();
    let observation = (0..num_actions)
        .map(|_| (0..num_states).map(|_| random_row(rng, num_observations)).collect())
        .collect();
    let reward = (0..num_actions)
        .map(|_| (0..num_states).map(|_| rng.random_range(-10.0..10.0)).collect())
        .collect();
    let mut b0: Vec<f64> = (0..num_states).map(|_| rng.random_range(0.1..1.0)).collect();
    let sum: f64 = b0.iter().sum();
    b0.iter_mut().for_each(|p| *p /= sum);
    DenseModel {
        transition,
        observation,
        reward,
        discount: 0.95,
        initial_belief: b0,
    }
}

/// Random point of the simplex. One draw in five is a sparse belief.
pub fn random_belief<R: Rng + ?Sized>(rng: &mut R, num_states: usize) -> Belief {
    let sparse = rng.random_bool(0.2);
    let w: Vec<f64> = (0..num_states)
        .map(|_| {
            let x: f64 = rng.random();
            // -ln(u) gives a uniform draw on the simplex after normalization.
            let e = -(1.0 - x).ln();
            if sparse && rng.random_bool(0.5) {
                0.0
            } else {
                e
            }
        })
        .collect();
    if w.iter().sum::<f64>() > 0.0 {
        Belief::normalized(w).expect("positive weights")
    } else {
        Belief::corner(num_states, rng.random_range(0..num_states))
    }
}

/// `count` vectors with coefficients in [-20, 20] and random actions.
pub fn random_value_function<R: Rng + ?Sized>(
    rng: &mut R,
    num_states: usize,
    count: usize,
    num_actions: usize,
) -> ValueFunction {
    ValueFunction::new(
        (0..count)
            .map(|_| {
                AlphaVector::new(
                    (0..num_states).map(|_| rng.random_range(-20.0..20.0)).collect(),
                    rng.random_range(0..num_actions),
                )
            })
            .collect(),
    )
}
