//! Closed-form cost machinery: dominance gaps, overflow terms, the optimal
//! mean-level mechanism, cost bounds and the worst-case instance.

mod bounds;
mod lift;
mod period;

pub use bounds::{
    cost_bounds, period_optima, random_game_gap_estimate, worst_case_instance, worst_case_lower_bound, CostBoundsReport, GapEstimate, Interval,
    PeriodSandwich,
};
pub use lift::{lift_cell, lift_mle_to_rewards};
pub use period::{
    atk_mechanism, clipped_separation, delta_h, dominance_gaps, mean_level_cost, overflow_terms, DeltaBreakdown, GroupValue, PeriodInstance,
};
