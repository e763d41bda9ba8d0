//! Certified bracketing of the local robustness radius.
//!
//! The radius at a reference input is the infimum perturbation magnitude (in
//! the max norm) at which some competing class scores at least as high as
//! the predicted one. The driver maintains a certified bracket
//! `[eps_lower, eps_upper]` and shrinks it with verification queries: UNSAT
//! raises the lower bound, SAT lowers the upper bound to the counterexample's
//! distance, and timeouts adapt the probe position without moving either
//! bound. Queries at smaller radii inherit the conflicts of earlier queries
//! at strictly larger radii of the same competing class.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use crate::bab::Verdict;
use crate::bab::{solve, SolveConfig};
use crate::error::{Error, Result};
use crate::ica::IcaState;
use crate::model::Network;
use crate::query::{Hyperbox, VerificationQuery};

use super::{class_query, validated_inherit, AggregateStats, RunOptions};

/// A robustness-radius task: bracket `[eps_min, eps_max]` around the radius
/// at `x0`, target precision `delta`, an overall time budget, and a per-query
/// timeout.
#[derive(Debug, Clone)]
pub struct RadiusTask {
    pub network: Arc<Network>,
    pub x0: Vec<f64>,
    pub class: usize,
    pub eps_min: f64,
    pub eps_max: f64,
    pub delta: f64,
    pub budget_s: f64,
    pub query_timeout_s: f64,
}

impl RadiusTask {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        network: Arc<Network>,
        x0: Vec<f64>,
        class: usize,
        eps_min: f64,
        eps_max: f64,
        delta: f64,
        budget_s: f64,
        query_timeout_s: f64,
    ) -> Result<Self> {
        if x0.len() != network.input_dim() {
            return Err(Error::DimensionMismatch("reference input".into()));
        }
        if class >= network.output_dim() {
            return Err(Error::InvalidConfig(format!("class {class} out of range")));
        }
        if !(eps_min < eps_max) {
            return Err(Error::InvalidConfig("eps_min must be below eps_max".into()));
        }
        if !(delta > 0.0) {
            return Err(Error::InvalidConfig("delta must be positive".into()));
        }
        if !(budget_s > 0.0) || !(query_timeout_s > 0.0) {
            return Err(Error::InvalidConfig("time budgets must be positive".into()));
        }
        let y0 = network.evaluate(&x0)?;
        let argmax = crate::oracle::argmax_unique(&y0)?;
        if argmax != class {
            return Err(Error::InvalidConfig(format!(
                "class {class} is not the prediction at x0 (argmax {argmax})"
            )));
        }
        Ok(RadiusTask {
            network,
            x0,
            class,
            eps_min,
            eps_max,
            delta,
            budget_s,
            query_timeout_s,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadiusOutcome {
    pub eps_lower: f64,
    pub eps_upper: f64,
    pub stats: AggregateStats,
}

impl RadiusOutcome {
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.stats.to_json();
        v["eps_lower"] = serde_json::json!(self.eps_lower);
        v["eps_upper"] = serde_json::json!(self.eps_upper);
        v
    }
}

enum ProbeOutcome {
    Unsat,
    Sat(Vec<f64>),
    Timeout,
}

#[derive(Clone, Copy, PartialEq)]
enum Direction {
    Down,
    Up,
}

struct Driver<'a> {
    task: &'a RadiusTask,
    ica: &'a mut IcaState,
    cfg: SolveConfig,
    opts: &'a RunOptions,
    next_id: u64,
    /// Per competing class: the (id, radius, query) triples issued so far.
    issued: Vec<Vec<(u64, f64, VerificationQuery)>>,
    stats: AggregateStats,
}

impl<'a> Driver<'a> {
    fn new(
        task: &'a RadiusTask,
        ica: &'a mut IcaState,
        cfg: &SolveConfig,
        opts: &'a RunOptions,
    ) -> Self {
        let cfg = SolveConfig {
            timeout_s: task.query_timeout_s,
            ..cfg.clone()
        };
        Driver {
            task,
            ica,
            cfg,
            opts,
            next_id: opts.first_id,
            issued: vec![Vec::new(); task.network.output_dim()],
            stats: AggregateStats::default(),
        }
    }

    /// Issues one query per competing class at radius `eps`. SAT for any
    /// class decides the probe; otherwise a timeout in any class makes the
    /// probe inconclusive.
    fn probe(&mut self, eps: f64) -> Result<ProbeOutcome> {
        let net = &self.task.network;
        let mut timed_out = false;
        for class in 0..net.output_dim() {
            if class == self.task.class {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let input = Hyperbox::ball(&self.task.x0, eps)?;
            let q = class_query(net, input, class, self.task.class, id)?;

            let inherit = if self.opts.incremental {
                let mut set = validated_inherit(
                    &q,
                    self.issued[class]
                        .iter()
                        .filter(|(_, e, _)| *e > eps)
                        .map(|(i, _, old)| (*i, old)),
                    self.cfg.trusted_refinement,
                );
                set.extend(self.opts.preload.iter().copied());
                set
            } else {
                BTreeSet::new()
            };

            let res = solve(&q, id, &inherit, self.ica, &self.cfg)?;
            self.stats.absorb(&res.stats, self.ica.clauses_loaded());
            self.issued[class].push((id, eps, q));
            match res.verdict {
                Verdict::Sat(witness) => return Ok(ProbeOutcome::Sat(witness)),
                Verdict::Unsat => {}
                Verdict::Timeout => timed_out = true,
            }
        }
        Ok(if timed_out {
            ProbeOutcome::Timeout
        } else {
            ProbeOutcome::Unsat
        })
    }

    /// The bracket refinement loop. Assumes the bracket is valid; returns the
    /// certified bounds when the width reaches the precision or the budget
    /// runs out.
    fn search(&mut self, start: Instant) -> Result<(f64, f64)> {
        let mut lower = self.task.eps_min;
        let mut upper = self.task.eps_max;
        let mut step_ratio = 0.5;
        let mut direction = Direction::Down;

        while upper - lower > self.task.delta && start.elapsed().as_secs_f64() < self.task.budget_s
        {
            let width = upper - lower;
            let eps = match direction {
                Direction::Down => upper - step_ratio * width,
                Direction::Up => lower + step_ratio * width,
            };
            match self.probe(eps)? {
                ProbeOutcome::Unsat => {
                    lower = eps;
                    step_ratio = 0.5;
                    direction = Direction::Down;
                }
                ProbeOutcome::Sat(witness) => {
                    upper = linf_distance(&witness, &self.task.x0);
                    step_ratio = 0.5;
                    direction = Direction::Down;
                }
                ProbeOutcome::Timeout => match direction {
                    Direction::Down => {
                        step_ratio /= 2.0;
                        direction = Direction::Up;
                    }
                    Direction::Up => direction = Direction::Down,
                },
            }
        }
        Ok((lower, upper))
    }
}

fn linf_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Computes a certified robustness-radius bracket of width at most
/// `task.delta` (budget permitting). The initial bracket must be valid: the
/// query at `eps_min` UNSAT and the query at `eps_max` SAT; both checks are
/// issued as ordinary queries, so their conflicts seed the inheritance
/// chains.
pub fn robustness_radius(
    task: &RadiusTask,
    ica: &mut IcaState,
    cfg: &SolveConfig,
    opts: &RunOptions,
) -> Result<RadiusOutcome> {
    let start = Instant::now();
    let mut driver = Driver::new(task, ica, cfg, opts);

    // eps_max first, so the eps_min check already inherits from it.
    match driver.probe(task.eps_max)? {
        ProbeOutcome::Sat(_) => {}
        other => {
            return Err(Error::InvalidBracket(format!(
                "query at eps_max {} is not SAT ({})",
                task.eps_max,
                probe_name(&other)
            )))
        }
    }
    match driver.probe(task.eps_min)? {
        ProbeOutcome::Unsat => {}
        other => {
            return Err(Error::InvalidBracket(format!(
                "query at eps_min {} is not UNSAT ({})",
                task.eps_min,
                probe_name(&other)
            )))
        }
    }

    let (eps_lower, eps_upper) = driver.search(start)?;
    let mut stats = driver.stats.clone();
    stats.time_s = start.elapsed().as_secs_f64();
    Ok(RadiusOutcome {
        eps_lower,
        eps_upper,
        stats,
    })
}

fn probe_name(p: &ProbeOutcome) -> &'static str {
    match p {
        ProbeOutcome::Unsat => "unsat",
        ProbeOutcome::Sat(_) => "sat",
        ProbeOutcome::Timeout => "timeout",
    }
}
