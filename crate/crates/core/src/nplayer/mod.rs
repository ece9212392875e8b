//! Exact `N`-player computations on the count-compressed joint chain.

pub mod counts;
pub mod exact;

pub use counts::{enumerate_count_states, JointStateIndex, DEFAULT_STATE_CAP};
pub use exact::{
    best_response, best_response_cost, cost_under_symmetric_feedback, nash_gap, nash_gap_table, BestResponse,
    DeviationPolicy, NashGapReport, NashGapTable,
};
