//! A minimal clause database with assumption-based solving and
//! unit-implied-literal extraction.
//!
//! This plays the role of the external SAT solver in the incremental conflict
//! analyser: databases stay small (tens to hundreds of clauses over at most a
//! few dozen phase variables), so a plain DPLL with unit propagation and
//! chronological backtracking is enough. Branching is deterministic:
//! ascending variable index, false first.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NeuronId;

/// A decided ReLU phase: active clamps the pre-activation to `>= 0`,
/// inactive to `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Active,
    Inactive,
}

impl Phase {
    pub fn opposite(self) -> Phase {
        match self {
            Phase::Active => Phase::Inactive,
            Phase::Inactive => Phase::Active,
        }
    }
}

/// A phase literal: `phase == Active` is the positive literal of the
/// neuron's Boolean phase variable, `Inactive` its negation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PhaseLiteral {
    pub neuron: NeuronId,
    pub phase: Phase,
}

impl PhaseLiteral {
    pub fn new(neuron: NeuronId, phase: Phase) -> Self {
        PhaseLiteral { neuron, phase }
    }

    pub fn active(neuron: NeuronId) -> Self {
        PhaseLiteral::new(neuron, Phase::Active)
    }

    pub fn inactive(neuron: NeuronId) -> Self {
        PhaseLiteral::new(neuron, Phase::Inactive)
    }

    pub fn negated(self) -> Self {
        PhaseLiteral::new(self.neuron, self.phase.opposite())
    }
}

impl std::fmt::Display for PhaseLiteral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.phase {
            Phase::Active => write!(f, "r{}", self.neuron),
            Phase::Inactive => write!(f, "!r{}", self.neuron),
        }
    }
}

/// A CNF clause: a disjunction of phase literals in canonical (layer, neuron)
/// order, at most one literal per neuron.
///
/// The empty clause is representable and means "unconditionally false"; it
/// arises as the negation of an empty conflict (a query that is UNSAT with no
/// phase decisions at all).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Clause {
    lits: Vec<PhaseLiteral>,
}

impl Clause {
    /// Builds a clause, rejecting duplicate variables (and hence
    /// tautologies).
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
        Ok(Clause { lits })
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
}

/// Outcome of an assumption solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SatOutcome {
    /// The database together with the assumptions is propositionally
    /// satisfiable.
    Consistent,
    /// No total assignment extends the assumptions.
    Unsat,
}

type Lit = (usize, bool); // (variable index, positive?)

/// Clause database plus the state of the most recent assumption solve.
pub struct SatState {
    neurons: Vec<NeuronId>,
    index: HashMap<NeuronId, usize>,
    clauses: Vec<Vec<Lit>>,
    has_empty: bool,
    implied: Vec<PhaseLiteral>,
    last: Option<SatOutcome>,
}

impl Default for SatState {
    fn default() -> Self {
        Self::new()
    }
}

impl SatState {
    pub fn new() -> Self {
        SatState {
            neurons: Vec::new(),
            index: HashMap::new(),
            clauses: Vec::new(),
            has_empty: false,
            implied: Vec::new(),
            last: None,
        }
    }

    /// Empties the clause database and the solve state. Variable numbering is
    /// kept stable across resets.
    pub fn reset(&mut self) {
        self.clauses.clear();
        self.has_empty = false;
        self.implied.clear();
        self.last = None;
    }

    pub fn clause_count(&self) -> usize {
        self.clauses.len() + usize::from(self.has_empty)
    }

    fn var(&mut self, neuron: NeuronId) -> usize {
        if let Some(&v) = self.index.get(&neuron) {
            return v;
        }
        let v = self.neurons.len();
        self.neurons.push(neuron);
        self.index.insert(neuron, v);
        v
    }

    /// Adds a clause; it stays active for all subsequent solves until
    /// `reset`. An empty clause makes every future solve UNSAT.
    pub fn add_clause(&mut self, clause: &Clause) {
        if clause.is_empty() {
            self.has_empty = true;
            return;
        }
        let lits = clause
            .literals()
            .iter()
            .map(|l| (self.var(l.neuron), l.phase == Phase::Active))
            .collect();
        self.clauses.push(lits);
    }

    /// Complete satisfiability check of database ∧ assumptions.
    ///
    /// On `Consistent`, the implied-literal buffer is refreshed with exactly
    /// the unit-propagation consequences of the assumptions (assumptions
    /// themselves excluded). Complementary assumptions yield `Unsat` rather
    /// than an error.
    pub fn solve_under_assumptions(&mut self, assumptions: &[PhaseLiteral]) -> SatOutcome {
        let outcome = match self.assume_and_propagate(assumptions) {
            None => SatOutcome::Unsat,
            Some(mut assign) => {
                if self.search(&mut assign) {
                    SatOutcome::Consistent
                } else {
                    SatOutcome::Unsat
                }
            }
        };
        self.last = Some(outcome);
        outcome
    }

    /// Propagation-only consistency check: unit propagation from the
    /// assumptions, no search. An `Unsat` answer is still definitive; a
    /// `Consistent` answer is weaker than the full solve's, so pruning may
    /// happen later in the search instead.
    pub fn propagate_under_assumptions(&mut self, assumptions: &[PhaseLiteral]) -> SatOutcome {
        let outcome = match self.assume_and_propagate(assumptions) {
            None => SatOutcome::Unsat,
            Some(_) => SatOutcome::Consistent,
        };
        self.last = Some(outcome);
        outcome
    }

    /// Asserts the assumptions and propagates units to fixpoint, refreshing
    /// the implied-literal buffer. Returns the assignment, or `None` on a
    /// complementary pair, an empty clause, or a propagation conflict.
    fn assume_and_propagate(&mut self, assumptions: &[PhaseLiteral]) -> Option<Vec<Option<bool>>> {
        self.implied.clear();
        self.last = None;

        let assumption_lits: Vec<Lit> = assumptions
            .iter()
            .map(|l| (self.var(l.neuron), l.phase == Phase::Active))
            .collect();

        let nvars = self.neurons.len();
        let mut assign: Vec<Option<bool>> = vec![None; nvars];
        for &(v, val) in &assumption_lits {
            match assign[v] {
                Some(prev) if prev != val => {
                    log::debug!("complementary assumptions on {}", self.neurons[v]);
                    return None;
                }
                _ => assign[v] = Some(val),
            }
        }
        if self.has_empty {
            return None;
        }

        let mut derived = Vec::new();
        if !self.unit_propagate(&mut assign, Some(&mut derived)) {
            return None;
        }
        self.implied = derived
            .into_iter()
            .map(|(v, val)| {
                PhaseLiteral::new(
                    self.neurons[v],
                    if val { Phase::Active } else { Phase::Inactive },
                )
            })
            .collect();
        Some(assign)
    }

    /// The unit-propagation consequences of the last consistent solve's
    /// assumptions, in derivation order.
    pub fn implied_literals(&self) -> Result<Vec<PhaseLiteral>> {
        match self.last {
            Some(SatOutcome::Consistent) => Ok(self.implied.clone()),
            _ => Err(Error::NoImpliedLiterals),
        }
    }

    /// Propagates units to fixpoint. Returns false on conflict. Newly fixed
    /// literals are appended to `record` when given.
    fn unit_propagate(
        &self,
        assign: &mut [Option<bool>],
        mut record: Option<&mut Vec<Lit>>,
    ) -> bool {
        loop {
            let mut changed = false;
            for clause in &self.clauses {
                let mut unassigned = None;
                let mut satisfied = false;
                let mut unassigned_count = 0;
                for &(v, pos) in clause {
                    match assign[v] {
                        Some(val) if val == pos => {
                            satisfied = true;
                            break;
                        }
                        Some(_) => {}
                        None => {
                            unassigned_count += 1;
                            unassigned = Some((v, pos));
                        }
                    }
                }
                if satisfied {
                    continue;
                }
                match unassigned_count {
                    0 => return false,
                    1 => {
                        let (v, pos) = unassigned.expect("count one implies a stored literal");
                        assign[v] = Some(pos);
                        if let Some(rec) = record.as_deref_mut() {
                            rec.push((v, pos));
                        }
                        changed = true;
                    }
                    _ => {}
                }
            }
            if !changed {
                return true;
            }
        }
    }

    /// Full DPLL search with chronological backtracking over the variables
    /// left unassigned after root propagation.
    fn search(&self, assign: &mut [Option<bool>]) -> bool {
        let Some(var) = assign.iter().position(|a| a.is_none()) else {
            return true; // total and conflict-free: all clauses satisfied
        };
        for val in [false, true] {
            let mut trial = assign.to_vec();
            trial[var] = Some(val);
            if self.unit_propagate(&mut trial, None) && self.search(&mut trial) {
                return true;
            }
        }
        false
    }

    /// Debug dump of the clause database: variable `i` maps to the DIMACS
    /// variable `i + 1`, inactive literals carry a negative sign.
    pub fn dump_dimacs(&self) -> String {
        let mut out = format!("p cnf {} {}\n", self.neurons.len(), self.clause_count());
        if self.has_empty {
            out.push_str("0\n");
        }
        for clause in &self.clauses {
            for &(v, pos) in clause {
                let n = (v + 1) as i64;
                out.push_str(&format!("{} ", if pos { n } else { -n }));
            }
            out.push_str("0\n");
        }
        out
    }
}
