//! Hand-specified oracle-scale models.
//!
//! | name           | S | A | O | notes                                              |
//! |----------------|---|---|---|----------------------------------------------------|
//! | `1s1a1o`       | 1 | 1 | 1 | r = 1, so V = 1/(1-γ) = 20                         |
//! | `2s-noisy`     | 2 | 2 | 2 | stay/switch with 0.7 success; p(o₀|s₀)=0.8, p(o₀|s₁)=0.4 |
//! | `2s-symmetric` | 2 | 3 | 2 | listen/open-left/open-right, invariant under swapping states and the two open actions |
//! | `3s-chain`     | 3 | 2 | 2 | left/right moves with 0.8 success, goal at the right end |
//!
//! All fixtures use γ = 0.95 and a uniform initial belief.

use crate::error::{Error, Result};
use crate::model::{DenseModel, Pomdp};

pub const FIXTURES: [&str; 4] = ["1s1a1o", "2s-noisy", "2s-symmetric", "3s-chain"];

pub fn build_tiny(name: &str) -> Result<Pomdp> {
    tiny_dense(name)?.build()
}

pub fn tiny_dense(name: &str) -> Result<DenseModel> {
    let model = match name {
        "1s1a1o" => DenseModel {
            transition: vec![vec![vec![1.0]]],
            observation: vec![vec![vec![1.0]]],
            reward: vec![vec![1.0]],
            discount: 0.95,
            initial_belief: vec![1.0],
        },
        "2s-noisy" => {
            let sensor = vec![vec![0.8, 0.2], vec![0.4, 0.6]];
            DenseModel {
                transition: vec![
                    vec![vec![0.7, 0.3], vec![0.3, 0.7]],
                    vec![vec![0.3, 0.7], vec![0.7, 0.3]],
                ],
                observation: vec![sensor.clone(), sensor],
                reward: vec![vec![1.0, 0.0], vec![0.9, -0.1]],
                discount: 0.95,
                initial_belief: vec![0.5, 0.5],
            }
        }
        "2s-symmetric" => {
            let listen = vec![vec![0.85, 0.15], vec![0.15, 0.85]];
            let blind = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
            let reset = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
            DenseModel {
                transition: vec![
                    vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                    reset.clone(),
                    reset,
                ],
                observation: vec![listen, blind.clone(), blind],
                // Opening the door on the side of state s is bad in state s.
                reward: vec![vec![-1.0, -1.0], vec![-100.0, 10.0], vec![10.0, -100.0]],
                discount: 0.95,
                initial_belief: vec![0.5, 0.5],
            }
        }
        "3s-chain" => DenseModel {
            transition: vec![
                vec![
                    vec![1.0, 0.0, 0.0],
                    vec![0.8, 0.2, 0.0],
                    vec![0.0, 0.8, 0.2],
                ],
                vec![
                    vec![0.2, 0.8, 0.0],
                    vec![0.0, 0.2, 0.8],
                    vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
                ],
            ],
            observation: vec![
                vec![vec![0.9, 0.1], vec![0.9, 0.1], vec![0.2, 0.8]];
                2
            ],
            reward: vec![vec![0.0, 0.0, 0.0], vec![0.0, 0.0, 5.0]],
            discount: 0.95,
            initial_belief: vec![1.0 / 3.0; 3],
        },
        other => return Err(Error::UnknownFixture(other.to_string())),
    };
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::validate;

    #[test]
    fn every_fixture_validates() {
        for name in FIXTURES {
            let m = build_tiny(name).unwrap();
            assert!(validate(&m).is_ok(), "{name}");
            assert_eq!(m.discount(), 0.95);
        }
    }

    #[test]
    fn minimal_fixture_shape() {
        let m = build_tiny("1s1a1o").unwrap();
        assert_eq!((m.num_states(), m.num_actions(), m.num_observations()), (1, 1, 1));
    }

    #[test]
    fn symmetric_fixture_is_swap_invariant() {
        let d = tiny_dense("2s-symmetric").unwrap();
        let swap = |s: usize| 1 - s;
        // Action permutation: listen stays, the two open actions trade places.
        let act = |a: usize| [0, 2, 1][a];
        for a in 0..3 {
            for s in 0..2 {
                assert_eq!(d.reward[a][s], d.reward[act(a)][swap(s)]);
                for s2 in 0..2 {
                    assert_eq!(d.transition[a][s][s2], d.transition[act(a)][swap(s)][swap(s2)]);
                }
                for o in 0..2 {
                    assert_eq!(d.observation[a][s][o], d.observation[act(a)][swap(s)][1 - o]);
                }
            }
        }
    }

    #[test]
    fn unknown_name_errors() {
        assert!(matches!(build_tiny("nope"), Err(Error::UnknownFixture(_))));
    }
}
