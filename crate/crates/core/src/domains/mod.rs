//! Benchmark and fixture model generators.

pub mod cnav;
pub mod random;
pub mod tag;
pub mod tiny;

pub use cnav::{build_continuous_nav, ContinuousNav};
pub use random::{random_belief, random_model, random_value_function};
pub use tag::build_tag;
pub use tiny::build_tiny;
