//! Leave-one-out ranking metrics, split evaluation and early stopping.

mod early_stop;
mod evaluate;
mod metrics;

pub use early_stop::{EarlyStopState, EarlyStopStep, DEFAULT_MAX_EPOCHS, DEFAULT_PATIENCE};
pub use evaluate::{evaluate_split, evaluate_users, EvalOptions, Scorer};
pub use metrics::{hr_at_k, ndcg_at_k, rank_from_scores, rank_target, MetricsRow};
