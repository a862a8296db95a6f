//! Thompson sampling for one-parameter exponential-family bandits.
//!
//! The crate is organized bottom-up:
//!
//! - [`family`]: mean-parameterized exponential-family models (variance
//!   function, KL divergence, reward sampling) and bandit instances.
//! - [`sampler`]: the anytime sampling distribution built from scaled KL
//!   tails, with exact inverse-CDF sampling.
//! - [`policy`]: bandit policies (KL-tail sampling, Gaussian/Bernoulli
//!   Thompson sampling, their greedy-mixture variants, and index baselines).
//! - [`simulate`]: deterministic Monte Carlo episodes, regret traces and
//!   concentration checks.
//! - [`config`]: experiment configuration parsing and validation.
//! - [`report`]: CSV/JSON experiment outputs.
//! - [`suites`]: self-contained verification suites shared by the CLI and
//!   the integration tests.

pub mod config;
pub mod family;
pub mod policy;
pub mod report;
pub mod sampler;
pub mod simulate;
pub mod suites;
