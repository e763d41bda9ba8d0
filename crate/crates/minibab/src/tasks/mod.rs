//! Task drivers that generate refinement-ordered query families and wire
//! conflict inheritance: robustness radius, input-split verification, and
//! minimal sufficient feature set extraction.

use std::collections::BTreeSet;
use std::sync::Arc;

use serde::Deserialize;

use crate::bab::SolveStats;
use crate::error::{Error, Result};
use crate::model::Network;
use crate::query::{
    check_refinement, Hyperbox, LinearConstraint, Refinement, Relation, VerificationQuery,
};

mod msfs;
mod radius;
mod split;

pub use msfs::{msfs_extract, ImportanceOrdering, MsfsOutcome, MsfsTask};
pub use radius::{robustness_radius, RadiusOutcome, RadiusTask};
pub use split::{input_split_verify, SplitOutcome, SplitTask};

/// Counters summed over every query a driver issues.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AggregateStats {
    pub queries: u64,
    pub nodes: u64,
    pub numeric_prunes: u64,
    pub ica_prunes: u64,
    pub ica_propagations: u64,
    pub conflicts_recorded: u64,
    pub inherited_clauses: u64,
    pub time_s: f64,
}

impl AggregateStats {
    pub(crate) fn absorb(&mut self, stats: &SolveStats, inherited_clauses: u64) {
        self.queries += 1;
        self.nodes += stats.nodes;
        self.numeric_prunes += stats.numeric_prunes;
        self.ica_prunes += stats.ica_prunes;
        self.ica_propagations += stats.ica_propagations;
        self.conflicts_recorded += stats.conflicts_recorded;
        self.inherited_clauses += inherited_clauses;
        self.time_s += stats.time_s;
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "queries": self.queries,
            "nodes": self.nodes,
            "numeric_prunes": self.numeric_prunes,
            "ica_prunes": self.ica_prunes,
            "ica_propagations": self.ica_propagations,
            "conflicts_recorded": self.conflicts_recorded,
            "inherited_clauses": self.inherited_clauses,
            "time_s": self.time_s,
        })
    }
}

/// Driver-level switches: inheritance on/off, externally loaded pool ids to
/// inherit everywhere, and the first fresh query id.
#[derive(Debug, Clone)]
pub struct RunOptions {
    /// When false, every query runs with an empty inheritance set.
    pub incremental: bool,
    /// Pool ids loaded from an earlier run; the caller asserts that their
    /// conflicts apply to every query of this run.
    pub preload: BTreeSet<u64>,
    /// Query ids are assigned starting here.
    pub first_id: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            incremental: true,
            preload: BTreeSet::new(),
            first_id: 0,
        }
    }
}

/// The misclassification query for one competing class: does some input in
/// `input` score class `competing` at least as high as class `predicted`?
pub(crate) fn class_query(
    net: &Arc<Network>,
    input: Hyperbox,
    competing: usize,
    predicted: usize,
    id: u64,
) -> Result<VerificationQuery> {
    let mut coeffs = vec![0.0; net.output_dim()];
    coeffs[competing] = 1.0;
    coeffs[predicted] = -1.0;
    VerificationQuery::new(
        net.clone(),
        input,
        vec![LinearConstraint::new(coeffs, Relation::Ge, 0.0)?],
        id,
    )
}

/// Runs the refinement check for each candidate ancestor, logging the
/// result. Candidates that fail the check are dropped unless `trusted` is
/// set; the chains constructed by the drivers satisfy the check by
/// construction, so drops indicate a wiring bug.
pub(crate) fn validated_inherit<'a>(
    new_query: &VerificationQuery,
    candidates: impl Iterator<Item = (u64, &'a VerificationQuery)>,
    trusted: bool,
) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    for (id, old) in candidates {
        let check = check_refinement(new_query, old);
        log::debug!(
            "refinement check of query {} against {id}: {check:?}",
            new_query.id()
        );
        match check {
            Ok(Refinement::Refines) => {
                out.insert(id);
            }
            other => {
                if trusted {
                    out.insert(id);
                } else {
                    log::warn!("dropping inherited id {id}: refinement check returned {other:?}");
                }
            }
        }
    }
    out
}

/// Radius task configuration document. `class` defaults to the argmax at the
/// reference input and is validated against it when given.
#[derive(Debug, Deserialize)]
pub struct RadiusConfig {
    pub x0: Vec<f64>,
    #[serde(default)]
    pub class: Option<usize>,
    pub eps_min: f64,
    pub eps_max: f64,
    pub delta: f64,
    pub budget_s: f64,
    pub query_timeout_s: f64,
}

impl RadiusConfig {
    pub fn into_task(self, network: Arc<Network>) -> Result<RadiusTask> {
        let y0 = network.evaluate(&self.x0)?;
        let argmax = crate::oracle::argmax_unique(&y0)?;
        if let Some(c) = self.class {
            if c != argmax {
                return Err(Error::InvalidConfig(format!(
                    "declared class {c} but the network predicts {argmax} at x0"
                )));
            }
        }
        RadiusTask::new(
            network,
            self.x0,
            argmax,
            self.eps_min,
            self.eps_max,
            self.delta,
            self.budget_s,
            self.query_timeout_s,
        )
    }
}

/// Input-split task configuration document; `query` is a query document as
/// accepted by `VerificationQuery::from_json`.
#[derive(Debug, Deserialize)]
pub struct SplitConfig {
    pub query: serde_json::Value,
    pub t0_s: f64,
    pub alpha: f64,
    pub global_timeout_s: f64,
}

impl SplitConfig {
    pub fn into_task(self, network: Arc<Network>) -> Result<SplitTask> {
        let query = VerificationQuery::from_json(network, &self.query.to_string(), 0)?;
        SplitTask::new(query, self.t0_s, self.alpha, self.global_timeout_s)
    }
}

/// Feature-set task configuration document.
#[derive(Debug, Deserialize)]
pub struct MsfsConfig {
    pub x0: Vec<f64>,
    pub domain_lower: Vec<f64>,
    pub domain_upper: Vec<f64>,
    pub query_timeout_s: f64,
    pub budget_s: f64,
    #[serde(default)]
    pub ordering: Option<String>,
}

impl MsfsConfig {
    pub fn into_task(self, network: Arc<Network>) -> Result<MsfsTask> {
        let ordering = match self.ordering.as_deref() {
            None | Some("sensitivity") => ImportanceOrdering::Sensitivity,
            Some("index") => ImportanceOrdering::Index,
            Some(other) => {
                return Err(Error::InvalidConfig(format!(
                    "unknown importance ordering {other:?}"
                )))
            }
        };
        MsfsTask::new(
            network,
            self.x0,
            Hyperbox::new(self.domain_lower, self.domain_upper)?,
            self.query_timeout_s,
            self.budget_s,
            ordering,
        )
    }
}
