//! Day-ahead linear programme, its dense simplex solver, demonstrator
//! extraction and the reference rollouts (baseline, marginal reward).

mod day_lp;
mod demonstrations;
mod lp;
mod simplex;

pub use day_lp::{
    build_day_lp, day_lp_variable_count, decode_day, flex_pair_count, DayLp, DayLpIndex,
    DaySchedule,
};
pub use demonstrations::{
    baseline_day, baseline_rollout, extract_demonstrations, marginal_reward, solve_day,
    Demonstration, BASELINE_ACTION, REPLAY_TOL,
};
pub use lp::{Constraint, LinearProgram, LpSolution, LpStatus, RowKind, Variable};
pub use simplex::solve_lp;
