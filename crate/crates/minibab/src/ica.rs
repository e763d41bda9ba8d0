//! The incremental conflict analyser: a pool of learned conflicts keyed by
//! query id, a SAT instance holding the conflicts active for the current
//! query, SAT-based pruning and propagation, and conflict recording with a
//! subsumption guard.
//!
//! A conflict is a set of phase literals whose conjunction with its
//! originating query is infeasible; it is asserted to the SAT side as the CNF
//! clause of the negated literals. Conflicts recorded for a query remain
//! valid for every refinement of that query, which is what makes pooled reuse
//! across a task run sound.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Network, NeuronId};
use crate::propagation::{apply_implied_literals, ApplyOutcome, BoundsState, PhaseAssignment};
use crate::satcore::{Clause, Phase, PhaseLiteral, SatOutcome, SatState};

/// An infeasible combination of phase literals, stored in canonical (layer,
/// neuron) order. The empty conflict means the originating query itself is
/// UNSAT.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConflictClause {
    lits: Vec<PhaseLiteral>,
}

impl ConflictClause {
    pub fn new(lits: impl IntoIterator<Item = PhaseLiteral>) -> Result<Self> {
        let mut lits: Vec<PhaseLiteral> = lits.into_iter().collect();
        lits.sort();
        lits.dedup();
        for pair in lits.windows(2) {
            if pair[0].neuron == pair[1].neuron {
                return Err(Error::TautologicalClause(
                    pair[0].neuron.layer,
                    pair[0].neuron.neuron,
                ));
            }
        }
        Ok(ConflictClause { lits })
    }

    pub fn literals(&self) -> &[PhaseLiteral] {
        &self.lits
    }

    pub fn is_empty(&self) -> bool {
        self.lits.is_empty()
    }

    pub fn len(&self) -> usize {
        self.lits.len()
    }

    /// True when every literal of `self` occurs in `other`.
    pub fn subsumes(&self, other: &ConflictClause) -> bool {
        let mut it = other.lits.iter();
        self.lits.iter().all(|l| it.any(|o| o == l))
    }

    /// The CNF clause forbidding this combination.
    pub(crate) fn as_cnf(&self) -> Clause {
        Clause::new(self.lits.iter().map(|l| l.negated()))
            .expect("negation preserves neuron uniqueness")
    }
}

impl std::fmt::Display for ConflictClause {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::from("{");
        for (i, l) in self.lits.iter().enumerate() {
            if i > 0 {
                s.push_str(", ");
            }
            let _ = write!(s, "{l}");
        }
        s.push('}');
        f.write_str(&s)
    }
}

#[derive(Serialize, Deserialize)]
struct LiteralDoc {
    layer: usize,
    neuron: usize,
    phase: Phase,
}

#[derive(Serialize, Deserialize)]
struct PoolDoc {
    queries: BTreeMap<String, Vec<Vec<LiteralDoc>>>,
}

/// Conflicts learned so far, keyed by the id of the query that recorded them.
#[derive(Debug, Clone, Default)]
pub struct ConflictPool {
    queries: BTreeMap<u64, Vec<ConflictClause>>,
}

impl ConflictPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.queries.keys().copied()
    }

    pub fn clauses(&self, id: u64) -> &[ConflictClause] {
        self.queries.get(&id).map_or(&[], |v| v.as_slice())
    }

    pub fn total_clauses(&self) -> usize {
        self.queries.values().map(Vec::len).sum()
    }

    pub fn max_id(&self) -> Option<u64> {
        self.queries.keys().next_back().copied()
    }

    /// Inserts unless an existing clause of the same id subsumes `c`.
    /// Returns whether the clause was added.
    fn insert_guarded(&mut self, id: u64, c: ConflictClause) -> bool {
        let set = self.queries.entry(id).or_default();
        if set.iter().any(|existing| existing.subsumes(&c)) {
            return false;
        }
        set.push(c);
        true
    }

    pub fn to_json(&self) -> String {
        let doc = PoolDoc {
            queries: self
                .queries
                .iter()
                .map(|(id, clauses)| {
                    (
                        id.to_string(),
                        clauses
                            .iter()
                            .map(|c| {
                                c.literals()
                                    .iter()
                                    .map(|l| LiteralDoc {
                                        layer: l.neuron.layer,
                                        neuron: l.neuron.neuron,
                                        phase: l.phase,
                                    })
                                    .collect()
                            })
                            .collect(),
                    )
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("pool serialization cannot fail")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: PoolDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("pool document: {e}")))?;
        let mut pool = ConflictPool::new();
        for (id, clauses) in doc.queries {
            let id: u64 = id
                .parse()
                .map_err(|_| Error::Parse(format!("pool id {id:?} is not an integer")))?;
            let entry = pool.queries.entry(id).or_default();
            for lits in clauses {
                entry.push(ConflictClause::new(lits.into_iter().map(|l| {
                    PhaseLiteral::new(NeuronId::new(l.layer, l.neuron), l.phase)
                }))?);
            }
        }
        Ok(pool)
    }
}

/// Outcome of recording one conflict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordOutcome {
    /// Added to the pool and to the live SAT database. `query_unsat` is set
    /// for the empty conflict, which certifies the whole query infeasible.
    Added { query_unsat: bool },
    /// An existing clause subsumed the new one; nothing changed.
    Subsumed,
}

/// Status returned by SAT-based conflict reasoning at a node.
#[derive(Debug, Clone, PartialEq)]
pub enum IcaStatus {
    /// The fixed phases violate an active conflict; prune the node.
    Unsat,
    /// Consistent; `applied` lists the implied literals that were fixed.
    Consistent { applied: Vec<PhaseLiteral> },
}

/// The analyser shared by all queries of a task run: the pool, the per-query
/// SAT instance, and per-query effect counters.
pub struct IcaState {
    pool: ConflictPool,
    sat: SatState,
    prunes: u64,
    propagations: u64,
    clauses_loaded: u64,
}

impl Default for IcaState {
    fn default() -> Self {
        Self::new()
    }
}

impl IcaState {
    pub fn new() -> Self {
        IcaState {
            pool: ConflictPool::new(),
            sat: SatState::new(),
            prunes: 0,
            propagations: 0,
            clauses_loaded: 0,
        }
    }

    pub fn with_pool(pool: ConflictPool) -> Self {
        IcaState {
            pool,
            ..Self::new()
        }
    }

    pub fn pool(&self) -> &ConflictPool {
        &self.pool
    }

    /// Nodes pruned by SAT reasoning since the last `begin_query`.
    pub fn prunes(&self) -> u64 {
        self.prunes
    }

    /// Implied literals applied since the last `begin_query`.
    pub fn propagations(&self) -> u64 {
        self.propagations
    }

    /// Clauses inherited into the live database at the last `begin_query`.
    pub fn clauses_loaded(&self) -> u64 {
        self.clauses_loaded
    }

    /// Resets the SAT instance, loads the conflicts of every inherited id,
    /// and zeroes the per-query counters. Unknown ids are warned about and
    /// treated as empty sets.
    pub fn begin_query(&mut self, inherit: &BTreeSet<u64>) {
        self.sat.reset();
        self.prunes = 0;
        self.propagations = 0;
        self.clauses_loaded = 0;
        for &id in inherit {
            if !self.pool.queries.contains_key(&id) {
                log::warn!("inheriting unknown query id {id}; treating as empty");
                continue;
            }
            for clause in self.pool.clauses(id) {
                self.sat.add_clause(&clause.as_cnf());
                self.clauses_loaded += 1;
            }
        }
    }

    /// SAT reasoning at an inconclusive node: assume all fixed phases, prune
    /// on UNSAT, otherwise apply the unit-implied literals to the bounds and
    /// the assignment. A contradiction during application counts as a prune.
    ///
    /// `full_solve` selects between a complete satisfiability check and a
    /// cheaper unit-propagation-only check; both prune soundly, the full
    /// check just prunes more.
    pub fn ica_propagate(
        &mut self,
        bounds: &mut BoundsState,
        pi: &mut PhaseAssignment,
        net: &Network,
        full_solve: bool,
    ) -> Result<IcaStatus> {
        let assumptions = pi.fixed_literals();
        let outcome = if full_solve {
            self.sat.solve_under_assumptions(&assumptions)
        } else {
            self.sat.propagate_under_assumptions(&assumptions)
        };
        if outcome == SatOutcome::Unsat {
            self.prunes += 1;
            return Ok(IcaStatus::Unsat);
        }
        let implied = self.sat.implied_literals()?;
        match apply_implied_literals(bounds, pi, net, &implied)? {
            ApplyOutcome::Applied(n) => {
                self.propagations += n as u64;
                Ok(IcaStatus::Consistent { applied: implied })
            }
            ApplyOutcome::Contradiction => {
                self.prunes += 1;
                Ok(IcaStatus::Unsat)
            }
        }
    }

    /// Records a conflict for `id` unless an existing clause of that id
    /// subsumes it; an added clause also joins the live SAT database, so it
    /// prunes within the same query.
    pub fn record_conflict(&mut self, id: u64, c: ConflictClause) -> RecordOutcome {
        let empty = c.is_empty();
        if empty {
            log::debug!("query {id} recorded the empty conflict: the query is UNSAT");
        }
        let cnf = c.as_cnf();
        if self.pool.insert_guarded(id, c) {
            self.sat.add_clause(&cnf);
            RecordOutcome::Added { query_unsat: empty }
        } else {
            RecordOutcome::Subsumed
        }
    }

    /// Serializes the pool to the given sink.
    pub fn save_pool<W: std::io::Write>(&self, mut sink: W) -> Result<()> {
        sink.write_all(self.pool.to_json().as_bytes())?;
        Ok(())
    }

    /// Reads a pool from the given source.
    pub fn load_pool<R: std::io::Read>(mut source: R) -> Result<ConflictPool> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        ConflictPool::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Activation, Layer};
    use crate::query::{Hyperbox, LinearConstraint, VerificationQuery};
    use crate::satcore::Phase;
    use std::sync::Arc;

    fn lit(i: usize, phase: Phase) -> PhaseLiteral {
        PhaseLiteral::new(NeuronId::new(1, i), phase)
    }

    fn conflict(lits: Vec<PhaseLiteral>) -> ConflictClause {
        ConflictClause::new(lits).unwrap()
    }

    fn two_relu_setup() -> (
        Arc<Network>,
        VerificationQuery,
        PhaseAssignment,
        BoundsState,
    ) {
        let net = Arc::new(
            Network::new(vec![
                Layer {
                    weights: vec![vec![1.0], vec![-1.0]],
                    bias: vec![0.0, 0.0],
                    activation: Activation::Relu,
                },
                Layer {
                    weights: vec![vec![1.0, 1.0]],
                    bias: vec![0.0],
                    activation: Activation::Linear,
                },
            ])
            .unwrap(),
        );
        let q = VerificationQuery::new(
            net.clone(),
            Hyperbox::new(vec![-1.0], vec![1.0]).unwrap(),
            vec![LinearConstraint::ge(vec![1.0], 0.5).unwrap()],
            0,
        )
        .unwrap();
        let mut pi = PhaseAssignment::new(&net);
        let (bounds, empty) = crate::propagation::forward_intervals(&net, q.input(), &mut pi);
        assert!(!empty);
        (net, q, pi, bounds)
    }

    #[test]
    fn begin_query_with_empty_set_loads_nothing() {
        let mut ica = IcaState::new();
        ica.begin_query(&BTreeSet::new());
        assert_eq!(ica.clauses_loaded(), 0);
    }

    #[test]
    fn inherited_clause_prunes_matching_assumptions() {
        let (net, _q, mut pi, mut bounds) = two_relu_setup();
        let mut ica = IcaState::new();
        ica.record_conflict(7, conflict(vec![lit(1, Phase::Active)]));
        ica.begin_query(&BTreeSet::from([7]));
        assert_eq!(ica.clauses_loaded(), 1);
        pi.decide(&net, lit(1, Phase::Active)).unwrap();
        let status = ica.ica_propagate(&mut bounds, &mut pi, &net, true).unwrap();
        assert_eq!(status, IcaStatus::Unsat);
        assert_eq!(ica.prunes(), 1);
    }

    #[test]
    fn begin_query_twice_is_idempotent() {
        let mut ica = IcaState::new();
        ica.record_conflict(7, conflict(vec![lit(1, Phase::Active)]));
        ica.begin_query(&BTreeSet::from([7]));
        let first = ica.clauses_loaded();
        ica.begin_query(&BTreeSet::from([7]));
        assert_eq!(ica.clauses_loaded(), first);
    }

    #[test]
    fn unknown_inherited_id_is_an_empty_set() {
        let mut ica = IcaState::new();
        ica.begin_query(&BTreeSet::from([42]));
        assert_eq!(ica.clauses_loaded(), 0);
    }

    #[test]
    fn unit_propagation_forces_phase() {
        let (net, _q, mut pi, mut bounds) = two_relu_setup();
        let mut ica = IcaState::new();
        // Conflict {r1 active, r2 active}: with r1 decided active, the CNF
        // clause forces r2 inactive.
        ica.record_conflict(
            3,
            conflict(vec![lit(1, Phase::Active), lit(2, Phase::Active)]),
        );
        ica.begin_query(&BTreeSet::from([3]));
        pi.decide(&net, lit(1, Phase::Active)).unwrap();
        let status = ica.ica_propagate(&mut bounds, &mut pi, &net, true).unwrap();
        match status {
            IcaStatus::Consistent { applied } => {
                assert_eq!(applied, vec![lit(2, Phase::Inactive)]);
            }
            other => panic!("expected consistency, got {other:?}"),
        }
        assert_eq!(ica.propagations(), 1);
        assert_eq!(
            pi.phase_of(&net, NeuronId::new(1, 2)).unwrap(),
            Some(Phase::Inactive)
        );
        assert_eq!(
            bounds.post[0][1],
            crate::propagation::Interval::new(0.0, 0.0)
        );
    }

    #[test]
    fn no_clauses_means_no_change() {
        let (net, _q, mut pi, mut bounds) = two_relu_setup();
        let mut ica = IcaState::new();
        ica.begin_query(&BTreeSet::new());
        let status = ica.ica_propagate(&mut bounds, &mut pi, &net, true).unwrap();
        assert_eq!(status, IcaStatus::Consistent { applied: vec![] });
        assert_eq!(ica.prunes() + ica.propagations(), 0);
    }

    #[test]
    fn subsumption_guard_skips_supersets() {
        let mut ica = IcaState::new();
        assert_eq!(
            ica.record_conflict(0, conflict(vec![lit(1, Phase::Active)])),
            RecordOutcome::Added { query_unsat: false }
        );
        assert_eq!(
            ica.record_conflict(
                0,
                conflict(vec![lit(1, Phase::Active), lit(2, Phase::Active)])
            ),
            RecordOutcome::Subsumed
        );
        assert_eq!(ica.pool().clauses(0).len(), 1);
    }

    #[test]
    fn guard_checks_existing_subset_of_new_only() {
        let mut ica = IcaState::new();
        ica.record_conflict(
            0,
            conflict(vec![lit(1, Phase::Active), lit(2, Phase::Active)]),
        );
        ica.record_conflict(0, conflict(vec![lit(1, Phase::Active)]));
        // The reverse direction is not pruned: both clauses stay.
        assert_eq!(ica.pool().clauses(0).len(), 2);
    }

    #[test]
    fn recorded_conflicts_join_the_live_database() {
        let (net, _q, mut pi, mut bounds) = two_relu_setup();
        let mut ica = IcaState::new();
        ica.begin_query(&BTreeSet::new());
        ica.record_conflict(0, conflict(vec![lit(1, Phase::Active)]));
        pi.decide(&net, lit(1, Phase::Active)).unwrap();
        let status = ica.ica_propagate(&mut bounds, &mut pi, &net, true).unwrap();
        assert_eq!(status, IcaStatus::Unsat);
    }

    #[test]
    fn empty_conflict_flags_query_unsat() {
        let mut ica = IcaState::new();
        let out = ica.record_conflict(5, ConflictClause::new(vec![]).unwrap());
        assert_eq!(out, RecordOutcome::Added { query_unsat: true });
        // Any later conflict for the same id is subsumed by the empty clause.
        assert_eq!(
            ica.record_conflict(5, conflict(vec![lit(1, Phase::Active)])),
            RecordOutcome::Subsumed
        );
    }

    #[test]
    fn pool_round_trips_through_json() {
        let mut ica = IcaState::new();
        ica.record_conflict(
            1,
            conflict(vec![lit(1, Phase::Active), lit(2, Phase::Inactive)]),
        );
        ica.record_conflict(1, conflict(vec![lit(3, Phase::Inactive)]));
        ica.record_conflict(9, conflict(vec![lit(2, Phase::Active)]));
        let json = ica.pool().to_json();
        let back = ConflictPool::from_json(&json).unwrap();
        assert_eq!(back.total_clauses(), 3);
        assert_eq!(back.clauses(1), ica.pool().clauses(1));
        assert_eq!(back.clauses(9), ica.pool().clauses(9));
        // Exactly three clause arrays appear in the document.
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        let count: usize = v["queries"]
            .as_object()
            .unwrap()
            .values()
            .map(|c| c.as_array().unwrap().len())
            .sum();
        assert_eq!(count, 3);
    }

    #[test]
    fn empty_document_loads_empty_pool() {
        let pool = ConflictPool::from_json(r#"{ "queries": {} }"#).unwrap();
        assert_eq!(pool.total_clauses(), 0);
    }

    #[test]
    fn save_then_load_pool_via_io() {
        let mut ica = IcaState::new();
        ica.record_conflict(2, conflict(vec![lit(1, Phase::Inactive)]));
        let mut buf = Vec::new();
        ica.save_pool(&mut buf).unwrap();
        let pool = IcaState::load_pool(buf.as_slice()).unwrap();
        assert_eq!(pool.clauses(2), ica.pool().clauses(2));
    }
}
