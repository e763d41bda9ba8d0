//! Branch-and-bound search over ReLU phases with incremental conflict reuse.
//!
//! Each node runs numeric propagation first. A concrete witness ends the
//! whole search; a numerically infeasible node records the conflict built
//! from its decision literals and is pruned; an inconclusive node is checked
//! against the inherited conflicts, then split on the widest undecided ReLU.
//! The search is a deterministic DFS: the inactive child of a split is
//! explored first.

use std::collections::BTreeSet;
use std::time::Instant;

use serde_json::json;

use crate::error::{Error, Result};
use crate::ica::{ConflictClause, IcaState, IcaStatus, RecordOutcome};
use crate::model::{Network, NeuronId};
use crate::propagation::{propagate, BoundsState, PhaseAssignment, PropagateStatus};
use crate::query::VerificationQuery;
use crate::satcore::PhaseLiteral;

/// Split selection strategy. Kept as an enum so alternative heuristics can be
/// added without touching the search loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitHeuristic {
    /// Widest pre-activation interval among phase-straddling neurons,
    /// lexicographic tie-break.
    #[default]
    WidestInterval,
}

/// Solver knobs for one `solve` call.
#[derive(Debug, Clone)]
pub struct SolveConfig {
    /// Wall-clock budget in seconds. Checked at node boundaries, so at least
    /// one node is always examined.
    pub timeout_s: f64,
    pub heuristic: SplitHeuristic,
    /// Extra concrete points tried as witnesses at every node, in addition
    /// to the box center.
    pub witness_candidates: Vec<Vec<f64>>,
    /// When set, task drivers skip enforcing their refinement checks before
    /// inheriting (the checks are still logged).
    pub trusted_refinement: bool,
    /// Abort with TIMEOUT once this many nodes have been explored.
    pub node_cap: Option<u64>,
    /// Run the complete SAT check at each inconclusive node; when false,
    /// only unit propagation is invoked, which is cheaper per node but
    /// prunes later.
    pub sat_full_solve: bool,
    /// Collect per-node conflict-reasoning events (used by soundness tests).
    pub record_events: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            timeout_s: 300.0,
            heuristic: SplitHeuristic::WidestInterval,
            witness_candidates: Vec::new(),
            trusted_refinement: false,
            node_cap: None,
            sat_full_solve: true,
            record_events: false,
        }
    }
}

impl SolveConfig {
    pub fn with_timeout(timeout_s: f64) -> Self {
        SolveConfig {
            timeout_s,
            ..Default::default()
        }
    }
}

/// Final verdict of a solve.
#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Sat(Vec<f64>),
    Unsat,
    Timeout,
}

impl Verdict {
    pub fn is_conclusive(&self) -> bool {
        !matches!(self, Verdict::Timeout)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Sat(_) => "sat",
            Verdict::Unsat => "unsat",
            Verdict::Timeout => "timeout",
        }
    }
}

/// Search counters for one solve.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveStats {
    pub nodes: u64,
    pub numeric_prunes: u64,
    pub ica_prunes: u64,
    pub ica_propagations: u64,
    pub conflicts_recorded: u64,
    pub time_s: f64,
}

impl SolveStats {
    pub fn absorb(&mut self, other: &SolveStats) {
        self.nodes += other.nodes;
        self.numeric_prunes += other.numeric_prunes;
        self.ica_prunes += other.ica_prunes;
        self.ica_propagations += other.ica_propagations;
        self.conflicts_recorded += other.conflicts_recorded;
        self.time_s += other.time_s;
    }
}

/// A conflict-reasoning event observed during the search, recorded only when
/// `SolveConfig::record_events` is set.
#[derive(Debug, Clone)]
pub enum IcaEvent {
    /// A node with these fixed phases was pruned by the SAT side.
    Prune { fixed: Vec<PhaseLiteral> },
    /// `literal` was implied at a node whose fixed phases were `fixed`.
    Implied {
        fixed: Vec<PhaseLiteral>,
        literal: PhaseLiteral,
    },
}

#[derive(Debug)]
pub struct SolveResult {
    pub verdict: Verdict,
    pub stats: SolveStats,
    pub events: Vec<IcaEvent>,
}

impl SolveResult {
    /// The per-solve stats document.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "verdict": self.verdict.name(),
            "nodes": self.stats.nodes,
            "numeric_prunes": self.stats.numeric_prunes,
            "ica_prunes": self.stats.ica_prunes,
            "ica_propagations": self.stats.ica_propagations,
            "conflicts_recorded": self.stats.conflicts_recorded,
            "time_s": self.stats.time_s,
        });
        if let Verdict::Sat(w) = &self.verdict {
            v["witness"] = json!(w);
        }
        v
    }
}

/// The decision literals of an infeasible trail, as a conflict clause.
/// Implied literals are consequences of the query and the decisions, so they
/// are deliberately excluded. An empty trail yields the empty clause: the
/// query itself is UNSAT.
pub fn extract_conflict(pi: &PhaseAssignment) -> ConflictClause {
    ConflictClause::new(pi.decisions().iter().copied())
        .expect("decision trails never repeat a neuron")
}

/// Picks the undecided ReLU with the widest phase-straddling pre-activation
/// interval (`lo < 0 < hi`), breaking ties lexicographically. Returns `None`
/// when every neuron is fixed, which can only happen after conflict
/// reasoning implied the last open phase.
pub fn choose_split(bounds: &BoundsState, pi: &PhaseAssignment, net: &Network) -> Option<NeuronId> {
    let mut best: Option<(f64, NeuronId)> = None;
    for (pos, &id) in net.relu_neurons().iter().enumerate() {
        if pi.phase(pos).is_some() {
            continue;
        }
        let iv = bounds.pre_of(id);
        if iv.lo < 0.0 && iv.hi > 0.0 {
            let width = iv.width();
            if best.is_none_or(|(w, _)| width > w) {
                best = Some((width, id));
            }
        }
    }
    best.map(|(_, id)| id)
}

/// Verifies `q` with the conflicts of `inherit` active, recording new
/// conflicts under `id`.
pub fn solve(
    q: &VerificationQuery,
    id: u64,
    inherit: &BTreeSet<u64>,
    ica: &mut IcaState,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    if !(cfg.timeout_s > 0.0) {
        return Err(Error::InvalidConfig("timeout must be positive".into()));
    }
    let start = Instant::now();
    let net = q.network().clone();

    ica.begin_query(inherit);

    let mut stats = SolveStats::default();
    let mut events = Vec::new();
    let mut stack = vec![PhaseAssignment::new(&net)];

    let verdict = 'search: loop {
        let Some(mut pi) = stack.pop() else {
            break Verdict::Unsat;
        };
        stats.nodes += 1;

        let (mut status, mut bounds) = propagate(q, &mut pi, &cfg.witness_candidates)?;

        if status == PropagateStatus::Unknown {
            match ica.ica_propagate(&mut bounds, &mut pi, &net, cfg.sat_full_solve)? {
                IcaStatus::Unsat => {
                    if cfg.record_events {
                        events.push(IcaEvent::Prune {
                            fixed: pi.fixed_literals(),
                        });
                    }
                    // Pruned by inherited knowledge, not by numeric
                    // reasoning: nothing new to record.
                    if !check_budget(start, &mut stats, cfg, &stack) {
                        break Verdict::Timeout;
                    }
                    continue;
                }
                IcaStatus::Consistent { applied } => {
                    if cfg.record_events && !applied.is_empty() {
                        let mut fixed = pi.fixed_literals();
                        fixed.retain(|l| !applied.contains(l));
                        for lit in &applied {
                            events.push(IcaEvent::Implied {
                                fixed: fixed.clone(),
                                literal: *lit,
                            });
                        }
                    }
                    match choose_split(&bounds, &pi, &net) {
                        Some(neuron) => {
                            let mut active = pi.clone();
                            active.decide(&net, PhaseLiteral::active(neuron))?;
                            let mut inactive = pi;
                            inactive.decide(&net, PhaseLiteral::inactive(neuron))?;
                            stack.push(active);
                            stack.push(inactive); // popped first
                            if !check_budget(start, &mut stats, cfg, &stack) {
                                break Verdict::Timeout;
                            }
                            continue;
                        }
                        None => {
                            // Conflict reasoning fixed the last open phase:
                            // re-run propagation, which now dispatches the
                            // leaf LP and is conclusive.
                            let (s2, _) = propagate(q, &mut pi, &cfg.witness_candidates)?;
                            debug_assert_ne!(s2, PropagateStatus::Unknown);
                            status = s2;
                        }
                    }
                }
            }
        }

        match status {
            PropagateStatus::Sat(witness) => {
                debug_assert!(q.witness_valid(&witness, crate::propagation::SAT_TOL)?);
                break 'search Verdict::Sat(witness);
            }
            PropagateStatus::Unsat => {
                stats.numeric_prunes += 1;
                let clause = extract_conflict(&pi);
                if let RecordOutcome::Added { .. } = ica.record_conflict(id, clause) {
                    stats.conflicts_recorded += 1;
                }
                if !check_budget(start, &mut stats, cfg, &stack) {
                    break Verdict::Timeout;
                }
            }
            PropagateStatus::Unknown => unreachable!("handled above"),
        }
    };

    stats.ica_prunes = ica.prunes();
    stats.ica_propagations = ica.propagations();
    stats.time_s = start.elapsed().as_secs_f64();
    Ok(SolveResult {
        verdict,
        stats,
        events,
    })
}

/// Budget checks happen between nodes: returns false when the search should
/// stop with TIMEOUT. A conclusive verdict already reached is never
/// overridden.
fn check_budget(
    start: Instant,
    stats: &mut SolveStats,
    cfg: &SolveConfig,
    stack: &[PhaseAssignment],
) -> bool {
    if stack.is_empty() {
        return true; // next iteration concludes UNSAT
    }
    if start.elapsed().as_secs_f64() >= cfg.timeout_s {
        return false;
    }
    if cfg.node_cap.is_some_and(|cap| stats.nodes >= cap) {
        return false;
    }
    true
}
