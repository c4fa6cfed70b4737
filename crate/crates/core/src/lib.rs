//! Signaling schemes for second-price auctions: optimal and sampled public
//! schemes with known valuations, tail pooling with Bayesian valuations,
//! private schemes with worst-equilibrium guarantees, and brute-force
//! oracles to check them against.

pub mod auction;
pub mod bvs_pool;
pub mod cli;
pub mod error;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod private;
pub mod public_exact;
pub mod public_mc;
pub mod rng;
pub mod scheme;

pub use error::{Error, Result};
pub use model::{BvsInstance, FeaturePrior, FeatureVector, Instance, KvsInstance, KvsState, ValueDistribution};
pub use rng::Estimate;
pub use scheme::{ExplicitScheme, PublicScheme, Signal};
