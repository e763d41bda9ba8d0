//! Recursive input splitting with a growing timeout schedule.
//!
//! A query that times out is split at the midpoint of its widest input
//! dimension and both halves are verified with the timeout scaled by the
//! growth factor. Children refine their parent, so they inherit every
//! ancestor's conflicts. SAT in either half is SAT overall; both halves
//! UNSAT is UNSAT; anything else is TIMEOUT.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::bab::{solve, SolveConfig, SolveResult, SolveStats, Verdict};
use crate::error::{Error, Result};
use crate::ica::IcaState;
use crate::query::{ConstraintStack, Hyperbox, Tightening, VerificationQuery};

use super::{validated_inherit, AggregateStats, RunOptions};

/// An input-split task: the base query, the initial per-query timeout, the
/// timeout growth factor, and the overall budget.
#[derive(Debug, Clone)]
pub struct SplitTask {
    pub query: VerificationQuery,
    pub t0_s: f64,
    pub alpha: f64,
    pub global_timeout_s: f64,
}

impl SplitTask {
    pub fn new(
        query: VerificationQuery,
        t0_s: f64,
        alpha: f64,
        global_timeout_s: f64,
    ) -> Result<Self> {
        if !(t0_s > 0.0) {
            return Err(Error::InvalidConfig(
                "initial timeout must be positive".into(),
            ));
        }
        if !(alpha >= 1.0) {
            return Err(Error::InvalidConfig(
                "timeout factor must be at least 1".into(),
            ));
        }
        if !(global_timeout_s > 0.0) {
            return Err(Error::InvalidConfig(
                "global timeout must be positive".into(),
            ));
        }
        Ok(SplitTask {
            query,
            t0_s,
            alpha,
            global_timeout_s,
        })
    }
}

#[derive(Debug)]
pub struct SplitOutcome {
    /// Compositional verdict with stats summed over every sub-query.
    pub result: SolveResult,
    pub stats: AggregateStats,
}

/// The widest dimension of a box, ties broken by the lowest index.
pub(crate) fn widest_dimension(input: &Hyperbox) -> (usize, f64) {
    let mut best = (0, input.width(0));
    for d in 1..input.dim() {
        let w = input.width(d);
        if w > best.1 {
            best = (d, w);
        }
    }
    best
}

/// The timeout handed to the children of a node verified with timeout `t`.
pub(crate) fn next_timeout(t: f64, alpha: f64) -> f64 {
    alpha * t
}

struct Driver<'a> {
    task: &'a SplitTask,
    ica: &'a mut IcaState,
    cfg: &'a SolveConfig,
    opts: &'a RunOptions,
    start: Instant,
    next_id: u64,
    issued: BTreeMap<u64, VerificationQuery>,
    stats: AggregateStats,
    solve_stats: SolveStats,
    events: Vec<crate::bab::IcaEvent>,
}

impl Driver<'_> {
    fn remaining(&self) -> f64 {
        self.task.global_timeout_s - self.start.elapsed().as_secs_f64()
    }

    fn search(
        &mut self,
        stack: &mut ConstraintStack,
        timeout: f64,
        inherit: &BTreeSet<u64>,
    ) -> Result<Verdict> {
        let remaining = self.remaining();
        if remaining <= 0.0 {
            return Ok(Verdict::Timeout);
        }

        let id = self.next_id;
        self.next_id += 1;
        let q = stack.active().clone().with_id(id);

        let inherit_here = if self.opts.incremental {
            let mut set = validated_inherit(
                &q,
                inherit
                    .iter()
                    .filter_map(|i| self.issued.get(i).map(|old| (*i, old))),
                self.cfg.trusted_refinement,
            );
            set.extend(self.opts.preload.iter().copied());
            set
        } else {
            BTreeSet::new()
        };

        let cfg = SolveConfig {
            timeout_s: timeout.min(remaining),
            ..self.cfg.clone()
        };
        let res = solve(&q, id, &inherit_here, self.ica, &cfg)?;
        self.stats.absorb(&res.stats, self.ica.clauses_loaded());
        self.solve_stats.absorb(&res.stats);
        self.events.extend(res.events);
        self.issued.insert(id, q);
        if res.verdict.is_conclusive() {
            return Ok(res.verdict);
        }

        let (dim, width) = widest_dimension(stack.active().input());
        if width == 0.0 {
            return Err(Error::ZeroWidthTimeout(dim));
        }
        let lo = stack.active().input().lower()[dim];
        let hi = stack.active().input().upper()[dim];
        let mid = 0.5 * (lo + hi);
        let child_timeout = next_timeout(timeout, self.task.alpha);
        let mut child_inherit = inherit.clone();
        child_inherit.insert(id);

        stack.push_frame(
            &[Tightening {
                dim,
                lower: lo,
                upper: mid,
            }],
            &[],
        )?;
        let left = self.search(stack, child_timeout, &child_inherit)?;
        stack.pop_frame()?;
        if matches!(left, Verdict::Sat(_)) {
            return Ok(left);
        }

        stack.push_frame(
            &[Tightening {
                dim,
                lower: mid,
                upper: hi,
            }],
            &[],
        )?;
        let right = self.search(stack, child_timeout, &child_inherit)?;
        stack.pop_frame()?;
        if matches!(right, Verdict::Sat(_)) {
            return Ok(right);
        }

        if left == Verdict::Unsat && right == Verdict::Unsat {
            Ok(Verdict::Unsat)
        } else {
            Ok(Verdict::Timeout)
        }
    }
}

/// Verifies the task's query, recursively splitting the input box whenever a
/// sub-query times out.
pub fn input_split_verify(
    task: &SplitTask,
    ica: &mut IcaState,
    cfg: &SolveConfig,
    opts: &RunOptions,
) -> Result<SplitOutcome> {
    let start = Instant::now();
    let mut driver = Driver {
        task,
        ica,
        cfg,
        opts,
        start,
        next_id: opts.first_id,
        issued: BTreeMap::new(),
        stats: AggregateStats::default(),
        solve_stats: SolveStats::default(),
        events: Vec::new(),
    };
    let mut stack = ConstraintStack::new(task.query.clone());
    let verdict = driver.search(&mut stack, task.t0_s, &BTreeSet::new())?;
    let mut stats = driver.stats;
    let mut solve_stats = driver.solve_stats;
    stats.time_s = start.elapsed().as_secs_f64();
    solve_stats.time_s = stats.time_s;
    Ok(SplitOutcome {
        result: SolveResult {
            verdict,
            stats: solve_stats,
            events: driver.events,
        },
        stats,
    })
}
