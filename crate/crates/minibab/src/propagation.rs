//! Numeric bound propagation under a partial phase assignment.
//!
//! One forward interval pass per search node: affine images by interval
//! arithmetic, ReLU intervals intersected with the assigned phase, implied
//! phases recorded for one-sided intervals, an output-interval infeasibility
//! certificate, concrete witness candidates, and - once every phase is fixed -
//! an exact LP feasibility check over the input variables.

use crate::error::{Error, Result};
use crate::lp::{lp_feasible, Feasibility, LpProblem};
use crate::model::{Activation, Network, NeuronId};
use crate::query::{LinearConstraint, Relation, VerificationQuery};
use crate::satcore::{Phase, PhaseLiteral};

/// Intervals narrower than this (negatively) are treated as empty.
pub const EMPTY_TOL: f64 = 1e-9;
/// Tolerance for constraint satisfaction checks.
pub const SAT_TOL: f64 = 1e-7;

/// A closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }
}

/// Tri-state phase map plus the ordered decision trail and the literals fixed
/// by propagation or conflict reasoning.
///
/// Decisions and implied literals are disjoint; no neuron appears twice
/// across them.
#[derive(Debug, Clone)]
pub struct PhaseAssignment {
    phases: Vec<Option<Phase>>,
    decisions: Vec<PhaseLiteral>,
    implied: Vec<PhaseLiteral>,
}

impl PhaseAssignment {
    pub fn new(net: &Network) -> Self {
        PhaseAssignment {
            phases: vec![None; net.relu_count()],
            decisions: Vec::new(),
            implied: Vec::new(),
        }
    }

    pub fn phase(&self, position: usize) -> Option<Phase> {
        self.phases[position]
    }

    pub fn phase_of(&self, net: &Network, id: NeuronId) -> Result<Option<Phase>> {
        let pos = net
            .relu_position(id)
            .ok_or(Error::UnknownNeuron(id.layer, id.neuron))?;
        Ok(self.phases[pos])
    }

    /// Appends a case-split decision. The neuron must be undecided.
    pub fn decide(&mut self, net: &Network, lit: PhaseLiteral) -> Result<()> {
        let pos = net
            .relu_position(lit.neuron)
            .ok_or(Error::UnknownNeuron(lit.neuron.layer, lit.neuron.neuron))?;
        if self.phases[pos].is_some() {
            return Err(Error::Internal(format!(
                "decision on already-fixed neuron {}",
                lit.neuron
            )));
        }
        self.phases[pos] = Some(lit.phase);
        self.decisions.push(lit);
        Ok(())
    }

    fn record_implied(&mut self, position: usize, lit: PhaseLiteral) {
        debug_assert!(self.phases[position].is_none());
        self.phases[position] = Some(lit.phase);
        self.implied.push(lit);
    }

    pub fn decisions(&self) -> &[PhaseLiteral] {
        &self.decisions
    }

    pub fn implied(&self) -> &[PhaseLiteral] {
        &self.implied
    }

    /// All fixed phases: decisions first, then implied literals, in the order
    /// they were fixed. This is the partial assignment handed to the SAT
    /// side.
    pub fn fixed_literals(&self) -> Vec<PhaseLiteral> {
        let mut out = self.decisions.clone();
        out.extend_from_slice(&self.implied);
        out
    }

    pub fn all_fixed(&self) -> bool {
        self.phases.iter().all(|p| p.is_some())
    }

    pub fn undecided_count(&self) -> usize {
        self.phases.iter().filter(|p| p.is_none()).count()
    }
}

/// Per-input, per-neuron (pre and post activation), and per-output intervals
/// computed by one propagation pass.
#[derive(Debug, Clone)]
pub struct BoundsState {
    pub input: Vec<Interval>,
    /// Pre-activation intervals, indexed `[layer][neuron]` (0-based).
    pub pre: Vec<Vec<Interval>>,
    /// Post-activation intervals, same indexing. For linear layers post
    /// equals pre; for ReLU neurons the lower bound is never negative.
    pub post: Vec<Vec<Interval>>,
    /// Set when some phase constraint emptied an interval.
    pub infeasible: bool,
}

impl BoundsState {
    fn with_shape(net: &Network, input: Vec<Interval>) -> Self {
        let pre = net
            .layers()
            .iter()
            .map(|l| vec![Interval::new(0.0, 0.0); l.output_dim()])
            .collect::<Vec<_>>();
        BoundsState {
            input,
            pre: pre.clone(),
            post: pre,
            infeasible: false,
        }
    }

    pub fn output(&self) -> &[Interval] {
        self.post.last().expect("network has at least one layer")
    }

    pub fn pre_of(&self, id: NeuronId) -> Interval {
        self.pre[id.layer - 1][id.neuron - 1]
    }
}

/// Verdict of one propagation pass.
#[derive(Debug, Clone, PartialEq)]
pub enum PropagateStatus {
    /// A concrete witness inside the box satisfying every output constraint.
    Sat(Vec<f64>),
    /// No input consistent with the assignment can satisfy the query.
    Unsat,
    /// Inconclusive; the node needs conflict reasoning or a split.
    Unknown,
}

/// Signal (not an error) that a literal contradicts the current state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApplyOutcome {
    /// Number of literals newly fixed.
    Applied(usize),
    Contradiction,
}

fn affine_interval(row: &[f64], bias: f64, inputs: &[Interval]) -> Interval {
    let mut lo = bias;
    let mut hi = bias;
    for (w, iv) in row.iter().zip(inputs) {
        if *w >= 0.0 {
            lo += w * iv.lo;
            hi += w * iv.hi;
        } else {
            lo += w * iv.hi;
            hi += w * iv.lo;
        }
    }
    Interval::new(lo, hi)
}

/// Interval forward pass under the assignment. Newly one-sided ReLU intervals
/// are recorded as implied phases in `pi`. Returns the bounds and whether a
/// phase constraint emptied some interval.
pub fn forward_intervals(
    net: &Network,
    input: &crate::query::Hyperbox,
    pi: &mut PhaseAssignment,
) -> (BoundsState, bool) {
    let input_ivs: Vec<Interval> = input
        .lower()
        .iter()
        .zip(input.upper())
        .map(|(&l, &u)| Interval::new(l, u))
        .collect();
    let mut bounds = BoundsState::with_shape(net, input_ivs.clone());
    let mut cur = input_ivs;
    for (li, layer) in net.layers().iter().enumerate() {
        let mut next = Vec::with_capacity(layer.output_dim());
        for (j, (row, &b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
            let mut pre = affine_interval(row, b, &cur);
            let post = match layer.activation {
                Activation::Linear => pre,
                Activation::Relu => {
                    let id = NeuronId::new(li + 1, j + 1);
                    let pos = net.relu_position(id).expect("relu ids cover relu layers");
                    match pi.phase(pos) {
                        None => {
                            if pre.lo >= 0.0 {
                                pi.record_implied(pos, PhaseLiteral::active(id));
                                pre
                            } else if pre.hi <= 0.0 {
                                pi.record_implied(pos, PhaseLiteral::inactive(id));
                                Interval::new(0.0, 0.0)
                            } else {
                                Interval::new(0.0, pre.hi)
                            }
                        }
                        Some(Phase::Active) => {
                            if pre.hi < -EMPTY_TOL {
                                bounds.infeasible = true;
                                bounds.pre[li][j] = pre;
                                return (bounds, true);
                            }
                            pre = Interval::new(pre.lo.max(0.0), pre.hi.max(0.0));
                            pre
                        }
                        Some(Phase::Inactive) => {
                            if pre.lo > EMPTY_TOL {
                                bounds.infeasible = true;
                                bounds.pre[li][j] = pre;
                                return (bounds, true);
                            }
                            pre = Interval::new(pre.lo.min(0.0), pre.hi.min(0.0));
                            Interval::new(0.0, 0.0)
                        }
                    }
                }
            };
            bounds.pre[li][j] = pre;
            bounds.post[li][j] = post;
            next.push(post);
        }
        cur = next;
    }
    (bounds, false)
}

fn constraint_interval(c: &LinearConstraint, output: &[Interval]) -> Interval {
    let mut lo = 0.0;
    let mut hi = 0.0;
    for (a, iv) in c.coeffs.iter().zip(output) {
        if *a >= 0.0 {
            lo += a * iv.lo;
            hi += a * iv.hi;
        } else {
            lo += a * iv.hi;
            hi += a * iv.lo;
        }
    }
    Interval::new(lo, hi)
}

/// The phase-constrained LP over the input variables: with every ReLU phase
/// fixed the network is affine, so phase rows plus output rows decide the
/// node exactly.
pub(crate) fn phase_fixed_lp(q: &VerificationQuery, pi: &PhaseAssignment) -> Result<LpProblem> {
    let net = q.network();
    let n = net.input_dim();
    // (coefficients over the input, constant) per neuron of the current layer
    let mut exprs: Vec<(Vec<f64>, f64)> = (0..n)
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            (e, 0.0)
        })
        .collect();
    let mut constraints = Vec::new();
    for (li, layer) in net.layers().iter().enumerate() {
        let mut next = Vec::with_capacity(layer.output_dim());
        for (j, (row, &b)) in layer.weights.iter().zip(&layer.bias).enumerate() {
            let mut coef = vec![0.0; n];
            let mut konst = b;
            for (w, (ecoef, ekonst)) in row.iter().zip(&exprs) {
                for (c, e) in coef.iter_mut().zip(ecoef) {
                    *c += w * e;
                }
                konst += w * ekonst;
            }
            match layer.activation {
                Activation::Linear => next.push((coef, konst)),
                Activation::Relu => {
                    let id = NeuronId::new(li + 1, j + 1);
                    let pos = net.relu_position(id).expect("relu ids cover relu layers");
                    match pi.phase(pos) {
                        Some(Phase::Active) => {
                            constraints.push(LinearConstraint::ge(coef.clone(), -konst)?);
                            next.push((coef, konst));
                        }
                        Some(Phase::Inactive) => {
                            constraints.push(LinearConstraint::le(coef.clone(), -konst)?);
                            next.push((vec![0.0; n], 0.0));
                        }
                        None => {
                            return Err(Error::Internal(format!(
                                "phase-fixed LP requested with undecided neuron {id}"
                            )))
                        }
                    }
                }
            }
        }
        exprs = next;
    }
    for c in q.output() {
        let mut coef = vec![0.0; n];
        let mut shift = 0.0;
        for (a, (ecoef, ekonst)) in c.coeffs.iter().zip(&exprs) {
            for (cc, e) in coef.iter_mut().zip(ecoef) {
                *cc += a * e;
            }
            shift += a * ekonst;
        }
        constraints.push(LinearConstraint::new(coef, c.relation, c.rhs - shift)?);
    }
    Ok(LpProblem {
        boxes: q.input().clone(),
        constraints,
    })
}

/// One propagation pass: interval forward sweep, implied phases, output
/// certificate, witness search at the box center and any extra candidate
/// points, and the leaf LP once every phase is fixed.
pub fn propagate(
    q: &VerificationQuery,
    pi: &mut PhaseAssignment,
    extra_witnesses: &[Vec<f64>],
) -> Result<(PropagateStatus, BoundsState)> {
    let net = q.network().clone();
    if pi.phases.len() != net.relu_count() {
        return Err(Error::DimensionMismatch(
            "phase assignment does not match the network".into(),
        ));
    }

    let (bounds, empty) = forward_intervals(&net, q.input(), pi);
    if empty {
        return Ok((PropagateStatus::Unsat, bounds));
    }

    for c in q.output() {
        let iv = constraint_interval(c, bounds.output());
        let impossible = match c.relation {
            Relation::Le => iv.lo > c.rhs + SAT_TOL,
            Relation::Ge => iv.hi < c.rhs - SAT_TOL,
        };
        if impossible {
            return Ok((PropagateStatus::Unsat, bounds));
        }
    }

    let center = q.input().center();
    if q.witness_valid(&center, SAT_TOL)? {
        return Ok((PropagateStatus::Sat(center), bounds));
    }
    for cand in extra_witnesses {
        if cand.len() == net.input_dim() && q.witness_valid(cand, SAT_TOL)? {
            return Ok((PropagateStatus::Sat(cand.clone()), bounds));
        }
    }

    if pi.all_fixed() {
        let lp = phase_fixed_lp(q, pi)?;
        return match lp_feasible(&lp)? {
            Feasibility::Feasible(w) => {
                if q.witness_valid(&w, SAT_TOL)? {
                    Ok((PropagateStatus::Sat(w), bounds))
                } else {
                    Err(Error::Internal(
                        "leaf LP witness failed re-validation".into(),
                    ))
                }
            }
            Feasibility::Infeasible => Ok((PropagateStatus::Unsat, bounds)),
        };
    }

    Ok((PropagateStatus::Unknown, bounds))
}

/// Fixes each literal's phase in the implied set and tightens the neuron's
/// own pre/post intervals, exactly as the propagation pass would. A literal
/// contradicting an already-fixed phase, or one whose interval intersection
/// is empty, yields `Contradiction`.
pub fn apply_implied_literals(
    bounds: &mut BoundsState,
    pi: &mut PhaseAssignment,
    net: &Network,
    lits: &[PhaseLiteral],
) -> Result<ApplyOutcome> {
    let mut applied = 0;
    for lit in lits {
        let pos = net
            .relu_position(lit.neuron)
            .ok_or(Error::UnknownNeuron(lit.neuron.layer, lit.neuron.neuron))?;
        match pi.phase(pos) {
            Some(p) if p == lit.phase => continue,
            Some(_) => return Ok(ApplyOutcome::Contradiction),
            None => {}
        }
        let (li, j) = (lit.neuron.layer - 1, lit.neuron.neuron - 1);
        let pre = bounds.pre[li][j];
        match lit.phase {
            Phase::Active => {
                if pre.hi < -EMPTY_TOL {
                    return Ok(ApplyOutcome::Contradiction);
                }
                let tightened = Interval::new(pre.lo.max(0.0), pre.hi.max(0.0));
                bounds.pre[li][j] = tightened;
                bounds.post[li][j] = tightened;
            }
            Phase::Inactive => {
                if pre.lo > EMPTY_TOL {
                    return Ok(ApplyOutcome::Contradiction);
                }
                bounds.pre[li][j] = Interval::new(pre.lo.min(0.0), pre.hi.min(0.0));
                bounds.post[li][j] = Interval::new(0.0, 0.0);
            }
        }
        pi.record_implied(pos, *lit);
        applied += 1;
    }
    Ok(ApplyOutcome::Applied(applied))
}
