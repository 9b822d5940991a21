//! POMDP planning with randomized point-based value iteration.
//!
//! The crate provides:
//!
//! * [`model`]: discrete POMDP models, beliefs and Bayes updates.
//! * [`format`]: the Cassandra `.pomdp` text format and alpha-vector policy files.
//! * [`value`]: alpha-vector value functions and the point-based backup.
//! * [`perseus`]: the randomized backup-stage solver.
//! * [`exact`]: exact value iteration by enumeration and pruning, for tiny models.
//! * [`qmdp`]: the Q_MDP baseline.
//! * [`continuous`]: sampled-action backups for parameterized action spaces.
//! * [`domains`]: Tag, Continuous Navigation and small fixtures.
//! * [`eval`]: Monte-Carlo policy evaluation.

pub mod continuous;
pub mod domains;
pub mod error;
pub mod eval;
pub mod exact;
pub mod format;
pub mod model;
pub mod perseus;
pub mod qmdp;
pub mod seed;
pub mod value;

pub use error::{Error, ParseError, Result};
pub use model::{
    belief_reward, belief_update, observation_prob, validate, ActionIndex, ActionModel, Belief, DenseModel, Pomdp,
};
pub use perseus::{solve, BeliefSet, SolverConfig, StageStats};
pub use value::{backup, initial_value_function, AlphaVector, ValueFunction};
