//! Age-of-information optimized MDP laboratory.
//!
//! The crate models observation delay as signal delay: an agent acts on an
//! observation that is `Y` steps stale, may wait `Z` steps before its next
//! observation request, and is penalized by the time-averaged age of its
//! information.
//!
//! - [`aoi`]: sawtooth accounting and the closed-form time average.
//! - [`estimation`]: replica-correlation delay and periodogram heading estimators.
//! - [`delay`]: delay models (estimator-in-the-loop and parametric).
//! - [`env`]: multi-AUV data-collection environment and its MDP views.
//! - [`rl`]: tabular Q-learning, evaluation and the comparison runner.
//! - [`config`], [`output`], [`cli`]: experiment configuration, CSV/manifest
//!   output and the command-line front end.

pub mod aoi;
pub mod cli;
pub mod config;
pub mod delay;
pub mod env;
pub mod estimation;
pub mod experiment;
pub mod output;
pub mod rl;
pub mod rng;
