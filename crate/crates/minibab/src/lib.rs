//! Branch-and-bound verification of feed-forward ReLU networks with conflict
//! reuse across refinement-ordered verification queries.
//!
//! The solver explores ReLU phase splits depth-first, pruning nodes with
//! interval bound propagation and deciding fully-split leaves with an exact
//! LP feasibility check. Infeasible phase combinations are recorded as
//! conflicts in a pool keyed by query id; a query may inherit the conflicts
//! of any query it refines (smaller input box, contained output region) and
//! a small SAT core then prunes and propagates with them during the search.
//!
//! Three task drivers generate such refinement-ordered query families:
//! robustness-radius bracketing, input-split verification, and minimal
//! sufficient feature set extraction. A brute-force oracle provides ground
//! truth for desk-scale networks, and the `minibab` binary wires everything
//! to JSON documents on disk.
//!
//! See the guide under `book/` for a walk-through of the concepts; its code
//! snippets are compiled and run as doctests.

// Index-based loops are clearer than iterators for the matrix/tableau code.
#![allow(clippy::needless_range_loop)]
// Positivity guards use !(x > 0) so that NaN budgets are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bab;
pub mod cli;
mod error;
pub mod ica;
pub mod lp;
pub mod model;
pub mod oracle;
pub mod propagation;
pub mod query;
pub mod satcore;
pub mod tasks;

pub use bab::{
    choose_split, extract_conflict, solve, SolveConfig, SolveResult, SolveStats, Verdict,
};
pub use error::{Error, Result};
pub use ica::{ConflictClause, ConflictPool, IcaState, IcaStatus, RecordOutcome};
pub use lp::{lp_feasible, Feasibility, LpProblem};
pub use model::{load_network, Activation, Layer, Network, NeuronId};
pub use oracle::{
    brute_force_verify, exhaustive_sufficiency, OracleReport, OracleVerdict, Sufficiency,
};
pub use propagation::{propagate, BoundsState, Interval, PhaseAssignment, PropagateStatus};
pub use query::{
    check_refinement, ConstraintStack, Hyperbox, LinearConstraint, Refinement, Relation,
    Tightening, VerificationQuery,
};
pub use satcore::{Clause, Phase, PhaseLiteral, SatOutcome, SatState};
pub use tasks::{
    input_split_verify, msfs_extract, robustness_radius, AggregateStats, ImportanceOrdering,
    MsfsOutcome, MsfsTask, RadiusOutcome, RadiusTask, RunOptions, SplitOutcome, SplitTask,
};
