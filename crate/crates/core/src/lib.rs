//! Latent exploration decoding (LED) and its supporting machinery.
//!
//! LED samples the next token from early-exit posteriors of the last `d`
//! layers of a decoder: the posteriors are gathered at the final layer's
//! top-k candidates, accumulated from the final layer downwards, and the
//! accumulated distribution with the highest entropy becomes the exploration
//! target. A Bernoulli gate driven by the final layer's top-1 probability
//! chooses between that target and ordinary top-k sampling.
//!
//! Modules:
//! - [`prob`]: softmax, entropy, top-k and a counter-based random stream.
//! - [`led`]: the LED step pipeline and its trace record.
//! - [`baselines`]: standard top-k/top-p sampling, greedy and DoLa-low.
//! - [`sampler`]: a closed set of samplers sharing one per-step rng budget.
//! - [`toy`]: a tiny seeded decoder-only transformer with early exits.
//! - [`synthetic`]: memoryless scenarios with exact success probabilities.
//! - [`analysis`]: layerwise statistics and pass@n metrics.

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod led;
pub mod prob;
pub mod sampler;
pub mod synthetic;
pub mod toy;

pub use error::{LedError, Result};
