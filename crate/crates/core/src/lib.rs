//! Option-critic: end-to-end learning of options (intra-option policies,
//! termination functions and a policy over options) with linear function
//! approximation, plus an exact oracle for the policy-gradient theorems on
//! small finite MDPs.

pub mod actor;
pub mod agent;
pub mod checkpoint;
pub mod config;
pub mod critic;
pub mod env;
pub mod error;
pub mod experiment;
pub mod features;
pub mod mdp;
pub mod oracle;
pub mod policy;
pub mod rng;
pub mod verify;

pub use agent::{Agent, AgentConfig, EpisodeLog, Environment, OptionCritic};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use features::{FeatureMap, FeatureVec};
pub use mdp::TabularMdp;
pub use rng::RngStream;
