//! Driving noise: Q-cylindrical fractional Brownian motion and a
//! finite-activity compensated Poisson random measure.

pub mod fbm;
pub mod field;
pub mod jumps;
pub mod path;
pub mod rng;
pub mod validate;

pub use fbm::{fbm_covariance, fbm_increments, increment_autocovariance, FbmGenerator};
pub use field::{Basis, FbmSpec, FieldProjector};
pub use jumps::{compensated_increment, sample_jump_path, JumpEvent, JumpLaw, JumpSpec, MarkLaw};
pub use path::{NoisePath, NoiseSampler, TimeGrid};
