//! Minimal sufficient feature set extraction.
//!
//! Starting from all features fixed to the reference input, the driver
//! binary-searches over candidate groups of features to free. Verifying a
//! candidate asks, per competing class, whether any input that fixes the
//! non-candidate features can flip the prediction: all-UNSAT certifies the
//! whole group freeable, SAT or TIMEOUT splits the group. Failed tests make
//! every query below them a refinement, which is where conflict inheritance
//! applies. The procedure is anytime: when the budget runs out, unresolved
//! candidates are conservatively kept fixed.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;
use std::time::Instant;

use crate::bab::{solve, SolveConfig, Verdict};
use crate::error::{Error, Result};
use crate::ica::IcaState;
use crate::model::Network;
use crate::propagation::{forward_intervals, PhaseAssignment};
use crate::query::{Hyperbox, VerificationQuery};

use super::{class_query, validated_inherit, AggregateStats, RunOptions};

/// How the feature universe is ordered before the binary search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ImportanceOrdering {
    /// Ascending single-feature sensitivity: the width of the interval of
    /// the predicted-class margin when only that feature ranges over its
    /// domain, one interval propagation per feature. Least sensitive
    /// features are candidates to free first.
    #[default]
    Sensitivity,
    /// Plain index order; handy for deterministic fixtures.
    Index,
}

/// A feature-set extraction task over the full input `domain`; features are
/// 0-based input indices.
#[derive(Debug, Clone)]
pub struct MsfsTask {
    pub network: Arc<Network>,
    pub x0: Vec<f64>,
    pub domain: Hyperbox,
    pub query_timeout_s: f64,
    pub budget_s: f64,
    pub ordering: ImportanceOrdering,
}

impl MsfsTask {
    pub fn new(
        network: Arc<Network>,
        x0: Vec<f64>,
        domain: Hyperbox,
        query_timeout_s: f64,
        budget_s: f64,
        ordering: ImportanceOrdering,
    ) -> Result<Self> {
        if x0.len() != network.input_dim() || domain.dim() != network.input_dim() {
            return Err(Error::DimensionMismatch("reference input or domain".into()));
        }
        if !domain.contains(&x0, 0.0) {
            return Err(Error::InvalidConfig("x0 lies outside the domain".into()));
        }
        if !(query_timeout_s > 0.0) || !(budget_s > 0.0) {
            return Err(Error::InvalidConfig("time budgets must be positive".into()));
        }
        Ok(MsfsTask {
            network,
            x0,
            domain,
            query_timeout_s,
            budget_s,
            ordering,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MsfsOutcome {
    /// Features that must keep their reference values, ascending.
    pub fixed: Vec<usize>,
    /// Features certified freeable, ascending.
    pub freed: Vec<usize>,
    pub stats: AggregateStats,
    /// (elapsed seconds, fixed-set size) after each classification step.
    pub trace: Vec<(f64, usize)>,
}

impl MsfsOutcome {
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = self.stats.to_json();
        v["fixed"] = serde_json::json!(self.fixed);
        v["freed"] = serde_json::json!(self.freed);
        v["explanation_size"] = serde_json::json!(self.fixed.len());
        v["anytime_trace"] = serde_json::json!(self.trace);
        v
    }
}

/// Per-competing-class inheritance sets; chains are kept separate because
/// each class has its own output constraint.
type Inherit = BTreeMap<usize, BTreeSet<u64>>;

struct Driver<'a> {
    task: &'a MsfsTask,
    ica: &'a mut IcaState,
    cfg: SolveConfig,
    opts: &'a RunOptions,
    predicted: usize,
    start: Instant,
    next_id: u64,
    fixed: BTreeSet<usize>,
    freed: BTreeSet<usize>,
    issued: BTreeMap<u64, VerificationQuery>,
    stats: AggregateStats,
    trace: Vec<(f64, usize)>,
}

impl Driver<'_> {
    fn budget_exhausted(&self) -> bool {
        self.start.elapsed().as_secs_f64() >= self.task.budget_s
    }

    fn trace_point(&mut self) {
        self.trace
            .push((self.start.elapsed().as_secs_f64(), self.fixed.len()));
    }

    /// Verifies whether the union of the already-freed set and `candidate`
    /// can be freed. Returns whether every class query was UNSAT, plus the
    /// (class, id) pairs issued.
    fn verify(
        &mut self,
        candidate: &[usize],
        inherit: &Inherit,
    ) -> Result<(bool, Vec<(usize, u64)>)> {
        let net = &self.task.network;
        let mut freeing = self.freed.clone();
        freeing.extend(candidate.iter().copied());

        let mut lo = Vec::with_capacity(net.input_dim());
        let mut hi = Vec::with_capacity(net.input_dim());
        for i in 0..net.input_dim() {
            if freeing.contains(&i) {
                lo.push(self.task.domain.lower()[i]);
                hi.push(self.task.domain.upper()[i]);
            } else {
                lo.push(self.task.x0[i]);
                hi.push(self.task.x0[i]);
            }
        }
        let input = Hyperbox::new(lo, hi)?;

        let mut issued = Vec::new();
        let mut failed = false;
        for class in 0..net.output_dim() {
            if class == self.predicted {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let q = class_query(net, input.clone(), class, self.predicted, id)?;
            let inherit_here = if self.opts.incremental {
                let empty = BTreeSet::new();
                let ancestors = inherit.get(&class).unwrap_or(&empty);
                let mut set = validated_inherit(
                    &q,
                    ancestors
                        .iter()
                        .filter_map(|i| self.issued.get(i).map(|old| (*i, old))),
                    self.cfg.trusted_refinement,
                );
                set.extend(self.opts.preload.iter().copied());
                set
            } else {
                BTreeSet::new()
            };
            let res = solve(&q, id, &inherit_here, self.ica, &self.cfg)?;
            self.stats.absorb(&res.stats, self.ica.clauses_loaded());
            self.issued.insert(id, q);
            issued.push((class, id));
            match res.verdict {
                Verdict::Sat(_) => return Ok((false, issued)),
                // TIMEOUT is conservatively treated like SAT: the candidate
                // is not certified freeable.
                Verdict::Timeout => failed = true,
                Verdict::Unsat => {}
            }
        }
        Ok((!failed, issued))
    }

    fn extended(&self, inherit: &Inherit, issued: &[(usize, u64)]) -> Inherit {
        let mut out = inherit.clone();
        for (class, id) in issued {
            out.entry(*class).or_default().insert(*id);
        }
        out
    }

    /// Recursive binary sufficiency search over one ordered candidate group.
    fn search(&mut self, candidate: &[usize], inherit: &Inherit) -> Result<()> {
        if self.budget_exhausted() {
            self.fixed.extend(candidate.iter().copied());
            self.trace_point();
            return Ok(());
        }
        if candidate.len() == 1 {
            let (unsat, _) = self.verify(candidate, inherit)?;
            if unsat {
                self.freed.insert(candidate[0]);
            } else {
                self.fixed.insert(candidate[0]);
            }
            self.trace_point();
            return Ok(());
        }

        let mid = candidate.len().div_ceil(2);
        let (left, right) = candidate.split_at(mid);

        let (left_unsat, left_issued) = self.verify(left, inherit)?;
        if left_unsat {
            self.freed.extend(left.iter().copied());
            self.trace_point();
            if self.budget_exhausted() {
                self.fixed.extend(right.iter().copied());
                self.trace_point();
                return Ok(());
            }
            let (right_unsat, right_issued) = self.verify(right, inherit)?;
            if right_unsat {
                self.freed.extend(right.iter().copied());
                self.trace_point();
            } else {
                let inherit = self.extended(inherit, &right_issued);
                self.search(right, &inherit)?;
            }
        } else {
            if left.len() == 1 {
                self.fixed.insert(left[0]);
                self.trace_point();
            } else {
                let left_inherit = self.extended(inherit, &left_issued);
                self.search(left, &left_inherit)?;
            }
            // The right sibling does not refine the failed left test, only
            // the common ancestors; it keeps the incoming inheritance.
            self.search(right, inherit)?;
        }
        Ok(())
    }
}

/// Ascending importance order over all features.
fn importance_order(task: &MsfsTask, predicted: usize) -> Vec<usize> {
    let n = task.network.input_dim();
    let mut order: Vec<usize> = (0..n).collect();
    if task.ordering == ImportanceOrdering::Index {
        return order;
    }
    let mut scores = vec![0.0_f64; n];
    for (i, score) in scores.iter_mut().enumerate() {
        let mut lo = task.x0.clone();
        let mut hi = task.x0.clone();
        lo[i] = task.domain.lower()[i];
        hi[i] = task.domain.upper()[i];
        let single = Hyperbox::new(lo, hi).expect("domain bounds are ordered");
        let mut pi = PhaseAssignment::new(&task.network);
        let (bounds, empty) = forward_intervals(&task.network, &single, &mut pi);
        if empty {
            continue;
        }
        let out = bounds.output();
        let mut max_hi = f64::NEG_INFINITY;
        let mut max_lo = f64::NEG_INFINITY;
        for (j, iv) in out.iter().enumerate() {
            if j != predicted {
                max_hi = max_hi.max(iv.hi);
                max_lo = max_lo.max(iv.lo);
            }
        }
        // Margin interval of y_c - max competing score; its width is the
        // feature's sensitivity.
        let margin_lo = out[predicted].lo - max_hi;
        let margin_hi = out[predicted].hi - max_lo;
        *score = margin_hi - margin_lo;
    }
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    order
}

/// Partitions the features into a fixed set sufficient to preserve the
/// prediction and a freed set, with anytime behavior under the budget.
pub fn msfs_extract(
    task: &MsfsTask,
    ica: &mut IcaState,
    cfg: &SolveConfig,
    opts: &RunOptions,
) -> Result<MsfsOutcome> {
    let start = Instant::now();
    let y0 = task.network.evaluate(&task.x0)?;
    let predicted = crate::oracle::argmax_unique(&y0)?;
    let order = importance_order(task, predicted);

    let mut driver = Driver {
        task,
        ica,
        cfg: SolveConfig {
            timeout_s: task.query_timeout_s,
            ..cfg.clone()
        },
        opts,
        predicted,
        start,
        next_id: opts.first_id,
        fixed: BTreeSet::new(),
        freed: BTreeSet::new(),
        issued: BTreeMap::new(),
        stats: AggregateStats::default(),
        trace: Vec::new(),
    };
    if !order.is_empty() {
        driver.search(&order, &Inherit::new())?;
    }

    let mut stats = driver.stats.clone();
    stats.time_s = start.elapsed().as_secs_f64();
    Ok(MsfsOutcome {
        fixed: driver.fixed.iter().copied().collect(),
        freed: driver.freed.iter().copied().collect(),
        stats,
        trace: driver.trace,
    })
}
