//! Transformer policy over gate tokens, its optimizer, and the search loops
//! that train it against effective-rank rewards.

pub mod adam;
pub mod search;
pub mod transformer;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use search::{
    prefix_rewards, random_search, random_sequence, run_search, run_search_with, sample_sequence, sample_with,
    Evaluator, KappaEvaluator, RandomSearchConfig, RewardCache, RngState, RoundRecord, SearchConfig,
    SearchOutcome, SearchSnapshot, SearchState,
};
pub use transformer::{softmax, Policy, PolicyConfig};
