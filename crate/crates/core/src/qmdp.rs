//! Q_MDP: solve the fully observable MDP and act greedily on `b·Q(·,a)`.

use crate::error::{Error, Result};
use crate::model::Pomdp;
use crate::value::{AlphaVector, ValueFunction};

/// `Q(s,a)` stored per action: `q[a][s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    pub q: Vec<Vec<f64>>,
    /// Bellman residual `max |Q_{k+1} − Q_k|` after each sweep.
    pub residuals: Vec<f64>,
    /// `residual·γ/(1−γ)` for the final residual.
    pub error_bound: f64,
}

impl QTable {
    pub fn num_actions(&self) -> usize {
        self.q.len()
    }

    pub fn value(&self, s: usize) -> f64 {
        self.q.iter().map(|qa| qa[s]).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Sweep cap for [`solve_mdp`]; with γ < 1 the residual shrinks by at least
/// a factor γ per sweep, so this is only hit for γ very close to 1.
pub const MAX_SWEEPS: usize = 1_000_000;

/// Value iteration on `Q(s,a) = r(s,a) + γ Σ_{s'} p(s'|s,a) max_{a'} Q(s',a')`
/// from `Q = 0` until the residual is at most `residual_tol`.
pub fn solve_mdp(model: &Pomdp, residual_tol: f64) -> Result<QTable> {
    if !(residual_tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("residual tolerance {residual_tol} must be >= 0")));
    }
    let ns = model.num_states();
    let na = model.num_actions();
    let g = model.discount();
    let mut q = vec![vec![0.0; ns]; na];
    let mut v = vec![0.0; ns];
    let mut residuals = Vec::new();
    for _ in 0..MAX_SWEEPS {
        let next: Vec<Vec<f64>> = model
            .actions()
            .iter()
            .map(|am| {
                (0..ns)
                    .map(|s| am.reward[s] + g * am.transition.row(s).map(|(s2, p)| p * v[s2]).sum::<f64>())
                    .collect()
            })
            .collect();
        let residual = next
            .iter()
            .zip(&q)
            .flat_map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        q = next;
        for (s, vs) in v.iter_mut().enumerate() {
            *vs = q.iter().map(|qa| qa[s]).fold(f64::NEG_INFINITY, f64::max);
        }
        residuals.push(residual);
        if residual <= residual_tol {
            break;
        }
    }
    let last = residuals.last().copied().unwrap_or(0.0);
    if last > residual_tol {
        return Err(Error::NotConverged {
            iterations: residuals.len(),
            residual: last,
        });
    }
    Ok(QTable {
        q,
        residuals,
        error_bound: last * g / (1.0 - g),
    })
}

/// One vector per action with coefficients `Q(·,a)`, in action order.
pub fn qmdp_value_function(q: &QTable) -> ValueFunction {
    ValueFunction::new(
        q.q.iter()
            .enumerate()
            .map(|(a, qa)| AlphaVector::new(qa.clone(), a))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::tiny::{tiny_dense, FIXTURES};
    use crate::exact::exact_value_iteration;
    use crate::model::{Belief, DenseModel};
    use crate::testutil::{random_belief, random_model};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_action_single_state() -> Pomdp {
        DenseModel {
            transition: vec![vec![vec![1.0]], vec![vec![1.0]]],
            observation: vec![vec![vec![1.0]], vec![vec![1.0]]],
            reward: vec![vec![1.0], vec![0.0]],
            discount: 0.95,
            initial_belief: vec![1.0],
        }
        .build()
        .unwrap()
    }

    #[test]
    fn single_state_closed_form() {
        let q = solve_mdp(&two_action_single_state(), 1e-12).unwrap();
        assert!((q.q[0][0] - 20.0).abs() < 1e-9);
        assert!((q.q[1][0] - 19.0).abs() < 1e-9);
        assert!(q.error_bound <= 1e-12 * 19.0 + 1e-15);
    }

    #[test]
    fn zero_rewards_zero_q() {
        let mut dense = tiny_dense("3s-chain").unwrap();
        dense.reward.iter_mut().for_each(|r| r.iter_mut().for_each(|x| *x = 0.0));
        let q = solve_mdp(&dense.build().unwrap(), 0.0).unwrap();
        assert!(q.q.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn deterministic_chain_matches_backward_induction() {
        // 0 -> 1 -> 2 (absorbing), reward 5 for "go" taken in state 1; "stay" pays 0.
        let n = 3;
        let go = vec![vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 1.0]];
        let stay = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        let model = DenseModel {
            transition: vec![go, stay],
            observation: vec![vec![vec![1.0]; n]; 2],
            reward: vec![vec![0.0, 5.0, 0.0], vec![0.0; n]],
            discount: 0.9,
            initial_belief: vec![1.0, 0.0, 0.0],
        }
        .build()
        .unwrap();
        let q = solve_mdp(&model, 1e-12).unwrap();
        // Backward induction: V(2)=0, V(1)=5, V(0)=0.9·5.
        let expect_go = [0.9 * 5.0, 5.0, 0.0];
        let expect_stay = [0.9 * 0.9 * 5.0, 0.9 * 5.0, 0.0];
        for s in 0..n {
            assert!((q.q[0][s] - expect_go[s]).abs() < 1e-9);
            assert!((q.q[1][s] - expect_stay[s]).abs() < 1e-9);
        }
    }

    #[test]
    fn value_function_realizes_rule() {
        let q = solve_mdp(&two_action_single_state(), 1e-12).unwrap();
        let vf = qmdp_value_function(&q);
        assert_eq!(vf.len(), 2);
        assert_eq!(*vf.policy_action(&Belief::uniform(1)).unwrap(), 0);

        let model = crate::domains::tiny::build_tiny("3s-chain").unwrap();
        let q = solve_mdp(&model, 1e-12).unwrap();
        let vf = qmdp_value_function(&q);
        for s in 0..model.num_states() {
            let expect = (0..q.num_actions())
                .fold((0, f64::NEG_INFINITY), |best, a| if q.q[a][s] > best.1 { (a, q.q[a][s]) } else { best })
                .0;
            assert_eq!(*vf.policy_action(&Belief::corner(model.num_states(), s)).unwrap(), expect);
        }
    }

    #[test]
    fn upper_bounds_exact_value_on_fixtures() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for name in FIXTURES {
            let model = crate::domains::tiny::build_tiny(name).unwrap();
            let vf = qmdp_value_function(&solve_mdp(&model, 1e-12).unwrap());
            let exact = exact_value_iteration(&model, 1e-8, 5000).unwrap().value_function;
            for _ in 0..200 {
                let b = random_belief(&mut rng, model.num_states());
                assert!(vf.evaluate(&b).unwrap() >= exact.evaluate(&b).unwrap() - 1e-6, "{name}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn residuals_decrease(seed in any::<u64>(), ns in 1usize..8, na in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let model = random_model(&mut rng, ns, na, 2);
            let q = solve_mdp(&model, 1e-10).unwrap();
            prop_assert!(q.residuals.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        }
    }
}
