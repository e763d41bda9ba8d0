//! Verification queries: input boxes, output constraints, refinement
//! checking, and push-pop constraint frames.
//!
//! A query `(X, Y)` asks whether some input in the box `X` drives the network
//! output into the region `Y`, given as a conjunction of linear constraints.
//! The query is SAT exactly when such a witness exists.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Network;

/// Tolerance for per-dimension interval containment in refinement checks.
pub const CONTAINMENT_TOL: f64 = 1e-9;
/// Tolerance for coefficient-wise constraint matching in refinement checks.
pub const COEFF_TOL: f64 = 1e-12;

/// An axis-aligned box: per-dimension closed intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperbox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Hyperbox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch(format!(
                "box has {} lower and {} upper bounds",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() {
                return Err(Error::NonFinite(format!("box bound in dimension {i}")));
            }
            if lo > hi {
                return Err(Error::DimensionMismatch(format!(
                    "box dimension {i} has lower {lo} > upper {hi}"
                )));
            }
        }
        Ok(Hyperbox { lower, upper })
    }

    /// The box `[center - radius, center + radius]^n`.
    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        Hyperbox::new(
            center.iter().map(|c| c - radius).collect(),
            center.iter().map(|c| c + radius).collect(),
        )
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| 0.5 * (l + u))
            .collect()
    }

    pub fn width(&self, dim: usize) -> f64 {
        self.upper[dim] - self.lower[dim]
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol)
    }

    /// Per-dimension containment of `self` in `other`, within `tol`.
    pub fn contained_in(&self, other: &Hyperbox, tol: f64) -> bool {
        self.dim() == other.dim()
            && (0..self.dim()).all(|i| {
                self.lower[i] >= other.lower[i] - tol && self.upper[i] <= other.upper[i] + tol
            })
    }

    pub(crate) fn set_dim(&mut self, dim: usize, lo: f64, hi: f64) {
        self.lower[dim] = lo;
        self.upper[dim] = hi;
    }
}

/// Direction of a linear constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
}

/// A closed halfspace `coeffs . y <= rhs` or `coeffs . y >= rhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) || !rhs.is_finite() {
            return Err(Error::NonFinite("constraint coefficient".into()));
        }
        Ok(LinearConstraint {
            coeffs,
            relation,
            rhs,
        })
    }

    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Result<Self> {
        Self::new(coeffs, Relation::Le, rhs)
    }

    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Result<Self> {
        Self::new(coeffs, Relation::Ge, rhs)
    }

    pub fn eval(&self, y: &[f64]) -> f64 {
        self.coeffs.iter().zip(y).map(|(c, v)| c * v).sum()
    }

    pub fn satisfied_at(&self, y: &[f64], tol: f64) -> bool {
        let v = self.eval(y);
        match self.relation {
            Relation::Le => v <= self.rhs + tol,
            Relation::Ge => v >= self.rhs - tol,
        }
    }

    fn matches(&self, other: &LinearConstraint, tol: f64) -> bool {
        self.relation == other.relation
            && self.coeffs.len() == other.coeffs.len()
            && (self.rhs - other.rhs).abs() <= tol
            && self
                .coeffs
                .iter()
                .zip(&other.coeffs)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

#[derive(Serialize, Deserialize)]
struct QueryDoc {
    input_lower: Vec<f64>,
    input_upper: Vec<f64>,
    output_constraints: Vec<LinearConstraint>,
}

/// A verification query: network, input box, conjunction of output
/// constraints, and a run-unique identifier.
///
/// The query is SAT iff some `x` in the box satisfies every output
/// constraint at `f(x)`.
#[derive(Debug, Clone)]
pub struct VerificationQuery {
    network: Arc<Network>,
    input: Hyperbox,
    output: Vec<LinearConstraint>,
    id: u64,
}

impl VerificationQuery {
    pub fn new(
        network: Arc<Network>,
        input: Hyperbox,
        output: Vec<LinearConstraint>,
        id: u64,
    ) -> Result<Self> {
        if input.dim() != network.input_dim() {
            return Err(Error::DimensionMismatch(format!(
                "query box has {} dimensions, network expects {}",
                input.dim(),
                network.input_dim()
            )));
        }
        for (i, c) in output.iter().enumerate() {
            if c.coeffs.len() != network.output_dim() {
                return Err(Error::DimensionMismatch(format!(
                    "output constraint {i} has {} coefficients, network has {} outputs",
                    c.coeffs.len(),
                    network.output_dim()
                )));
            }
        }
        Ok(VerificationQuery {
            network,
            input,
            output,
            id,
        })
    }

    /// Parses the query JSON document against a network.
    pub fn from_json(network: Arc<Network>, text: &str, id: u64) -> Result<Self> {
        let doc: QueryDoc =
            serde_json::from_str(text).map_err(|e| Error::Parse(format!("query document: {e}")))?;
        let input = Hyperbox::new(doc.input_lower, doc.input_upper)?;
        for c in &doc.output_constraints {
            if c.coeffs.iter().any(|v| !v.is_finite()) || !c.rhs.is_finite() {
                return Err(Error::NonFinite("query constraint".into()));
            }
        }
        VerificationQuery::new(network, input, doc.output_constraints, id)
    }

    pub fn to_json(&self) -> String {
        let doc = QueryDoc {
            input_lower: self.input.lower().to_vec(),
            input_upper: self.input.upper().to_vec(),
            output_constraints: self.output.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("query serialization cannot fail")
    }

    pub fn network(&self) -> &Arc<Network> {
        &self.network
    }

    pub fn input(&self) -> &Hyperbox {
        &self.input
    }

    pub fn output(&self) -> &[LinearConstraint] {
        &self.output
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn with_id(mut self, id: u64) -> Self {
        self.id = id;
        self
    }

    /// True when `x` lies in the box and all output constraints hold at
    /// `f(x)` within `tol`.
    pub fn witness_valid(&self, x: &[f64], tol: f64) -> Result<bool> {
        if !self.input.contains(x, 0.0) {
            return Ok(false);
        }
        let y = self.network.evaluate(x)?;
        Ok(self.output.iter().all(|c| c.satisfied_at(&y, tol)))
    }
}

/// Result of a refinement check between two queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Refinement {
    Refines,
    NotRefines,
    Unknown,
}

/// Checks whether `q2` refines `q1`: same network, input box contained, and
/// output region contained.
///
/// Box containment is decided per dimension within `CONTAINMENT_TOL`. Output
/// containment is decided syntactically: every constraint of `q1` must appear
/// in `q2` coefficient-wise within `COEFF_TOL`. When box containment holds but
/// the syntactic match fails, the semantic question is left open and
/// `Unknown` is returned.
pub fn check_refinement(q2: &VerificationQuery, q1: &VerificationQuery) -> Result<Refinement> {
    if !Arc::ptr_eq(&q2.network, &q1.network) && q2.network != q1.network {
        return Err(Error::DifferentNetwork);
    }
    if !q2.input.contained_in(&q1.input, CONTAINMENT_TOL) {
        return Ok(Refinement::NotRefines);
    }
    for c1 in &q1.output {
        if !q2.output.iter().any(|c2| c2.matches(c1, COEFF_TOL)) {
            return Ok(Refinement::Unknown);
        }
    }
    Ok(Refinement::Refines)
}

/// A per-dimension bound update. Frames may only shrink intervals.
#[derive(Debug, Clone, Copy)]
pub struct Tightening {
    pub dim: usize,
    pub lower: f64,
    pub upper: f64,
}

struct Frame {
    saved_bounds: Vec<(usize, f64, f64)>,
    constraints_added: usize,
}

/// Push-pop management of input tightenings and added output constraints.
///
/// The active query is the base query with all frames applied; popping a
/// frame restores exactly the bounds and constraints present before the
/// matching push. The network encoding inside the query is never rebuilt.
pub struct ConstraintStack {
    active: VerificationQuery,
    frames: Vec<Frame>,
}

impl ConstraintStack {
    pub fn new(base: VerificationQuery) -> Self {
        ConstraintStack {
            active: base,
            frames: Vec::new(),
        }
    }

    pub fn active(&self) -> &VerificationQuery {
        &self.active
    }

    pub fn depth(&self) -> usize {
        self.frames.len()
    }

    /// Applies a frame of tightenings and added constraints, returning the
    /// new active query view. Rejects tightenings that would enlarge an
    /// interval.
    pub fn push_frame(
        &mut self,
        tightenings: &[Tightening],
        added: &[LinearConstraint],
    ) -> Result<&VerificationQuery> {
        for t in tightenings {
            if t.dim >= self.active.input.dim() {
                return Err(Error::DimensionMismatch(format!(
                    "tightening names dimension {} of a {}-dimensional box",
                    t.dim,
                    self.active.input.dim()
                )));
            }
            if !t.lower.is_finite() || !t.upper.is_finite() {
                return Err(Error::NonFinite(format!(
                    "tightening for dimension {}",
                    t.dim
                )));
            }
            let (lo, hi) = (
                self.active.input.lower()[t.dim],
                self.active.input.upper()[t.dim],
            );
            if t.lower < lo || t.upper > hi || t.lower > t.upper {
                return Err(Error::WideningFrame(t.dim));
            }
        }
        for c in added {
            if c.coeffs.len() != self.active.network.output_dim() {
                return Err(Error::DimensionMismatch(
                    "added constraint does not match network output dimension".into(),
                ));
            }
        }
        let mut saved = Vec::with_capacity(tightenings.len());
        for t in tightenings {
            let (lo, hi) = (
                self.active.input.lower()[t.dim],
                self.active.input.upper()[t.dim],
            );
            saved.push((t.dim, lo, hi));
            self.active.input.set_dim(t.dim, t.lower, t.upper);
        }
        self.active.output.extend_from_slice(added);
        self.frames.push(Frame {
            saved_bounds: saved,
            constraints_added: added.len(),
        });
        Ok(&self.active)
    }

    /// Removes the most recent frame, restoring the prior bounds and
    /// constraints exactly.
    pub fn pop_frame(&mut self) -> Result<&VerificationQuery> {
        let frame = self.frames.pop().ok_or(Error::EmptyStack)?;
        let keep = self.active.output.len() - frame.constraints_added;
        self.active.output.truncate(keep);
        // Restore in reverse so repeated tightenings of one dimension unwind
        // to the exact pre-push bits.
        for &(dim, lo, hi) in frame.saved_bounds.iter().rev() {
            self.active.input.set_dim(dim, lo, hi);
        }
        Ok(&self.active)
    }
}
