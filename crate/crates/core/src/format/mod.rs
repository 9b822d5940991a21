//! Text formats: Cassandra `.pomdp` models and alpha-vector policy files.

mod number;
mod policy;
mod pomdp;

pub use number::format_g17;
pub use policy::{read_policy, write_policy, PolicyAction};
pub use pomdp::{parse_pomdp, serialize_pomdp};
