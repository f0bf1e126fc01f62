//! Multi-user 360-degree video streaming over multi-AP terahertz links.

pub mod baselines;
pub mod env;
pub mod fusion;
pub mod harness;
pub mod hddpg;
pub mod headpred;
pub mod phy;
pub mod policy;
pub mod predictor;
pub mod replay;
pub mod saliency;
pub mod streaming;
pub mod traces;

mod error;

pub use error::CoreError;

pub type Result<T> = std::result::Result<T, CoreError>;
