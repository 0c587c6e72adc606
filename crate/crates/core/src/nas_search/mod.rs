//! Predictor-guided architecture search against a metered oracle, and a
//! random-search baseline.

mod history;
mod oracle;
mod search;

pub use history::{Incumbent, Refit, SearchHistory, StepRecord};
pub use oracle::{synthetic_oracle, tabular_oracle, Oracle, ENUMERATION_LIMIT};
pub use search::{
    predictor_search, predictor_search_with, random_search, SearchConfig, SearchFailure,
    SearchResult,
};
