//! Command execution behind the `minibab` binary: file loading, conflict
//! pool persistence, and stats emission.
//!
//! Exit status convention: 0 means the command completed (whatever the
//! verdict), 1 is a usage or input error, 2 an internal error.

use std::collections::BTreeSet;
use std::fs;
use std::path::PathBuf;
use std::sync::Arc;

use crate::bab::{solve, SolveConfig};
use crate::error::{Error, Result};
use crate::ica::{ConflictPool, IcaState};
use crate::model::load_network;
use crate::oracle::{brute_force_verify, OracleVerdict};
use crate::query::VerificationQuery;
use crate::tasks::{
    input_split_verify, msfs_extract, robustness_radius, MsfsConfig, RadiusConfig, RunOptions,
    SplitConfig,
};

/// Default solve timeout for `verify` when no override is given.
const DEFAULT_VERIFY_TIMEOUT_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    Radius,
    Split,
    Explain,
    Oracle,
}

/// Everything one invocation needs. `timeout_s` overrides the per-query
/// timeout of the selected command (the initial timeout for `split`).
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: Command,
    pub network: PathBuf,
    pub config: PathBuf,
    pub pool_in: Option<PathBuf>,
    pub pool_out: Option<PathBuf>,
    pub stats_out: Option<PathBuf>,
    pub timeout_s: Option<f64>,
    pub trusted_refinement: bool,
}

/// Exit status for an error, per the convention above.
pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Parse(_)
        | Error::Io(_)
        | Error::DimensionMismatch(_)
        | Error::NonFinite(_)
        | Error::InvalidConfig(_)
        | Error::InvalidBracket(_)
        | Error::NonUniqueArgmax
        | Error::OracleCap(_) => 1,
        _ => 2,
    }
}

/// Executes the manifest and returns the stats document (also written to
/// `stats_out`, or stdout when omitted).
pub fn run(manifest: &RunManifest) -> Result<serde_json::Value> {
    let network = Arc::new(load_network(&fs::read_to_string(&manifest.network)?)?);
    let config_text = fs::read_to_string(&manifest.config)?;

    // Conflicts loaded from an earlier run are inherited by every query of
    // this run; supplying a pool asserts that this run's queries refine the
    // pool's originating queries.
    let (pool, preload, first_id) = match &manifest.pool_in {
        Some(path) => {
            let pool = ConflictPool::from_json(&fs::read_to_string(path)?)?;
            let preload: BTreeSet<u64> = pool.ids().collect();
            let first_id = pool.max_id().map_or(0, |id| id + 1);
            (pool, preload, first_id)
        }
        None => (ConflictPool::new(), BTreeSet::new(), 0),
    };
    let mut ica = IcaState::with_pool(pool);
    let opts = RunOptions {
        incremental: true,
        preload: preload.clone(),
        first_id,
    };
    let base_cfg = SolveConfig {
        trusted_refinement: manifest.trusted_refinement,
        ..SolveConfig::default()
    };

    let stats = match manifest.command {
        Command::Verify => {
            let q = VerificationQuery::from_json(network, &config_text, first_id)?;
            let cfg = SolveConfig {
                timeout_s: manifest.timeout_s.unwrap_or(DEFAULT_VERIFY_TIMEOUT_S),
                ..base_cfg
            };
            solve(&q, first_id, &preload, &mut ica, &cfg)?.to_json()
        }
        Command::Oracle => {
            let q = VerificationQuery::from_json(network, &config_text, first_id)?;
            let report = brute_force_verify(&q)?;
            let mut v = serde_json::json!({
                "verdict": match report.verdict { OracleVerdict::Sat(_) => "sat", OracleVerdict::Unsat => "unsat" },
                "patterns_examined": report.patterns_examined,
            });
            if let OracleVerdict::Sat(w) = &report.verdict {
                v["witness"] = serde_json::json!(w);
            }
            v
        }
        Command::Radius => {
            let config: RadiusConfig = serde_json::from_str(&config_text)
                .map_err(|e| Error::Parse(format!("radius config: {e}")))?;
            let mut task = config.into_task(network)?;
            if let Some(t) = manifest.timeout_s {
                task.query_timeout_s = t;
            }
            robustness_radius(&task, &mut ica, &base_cfg, &opts)?.to_json()
        }
        Command::Split => {
            let config: SplitConfig = serde_json::from_str(&config_text)
                .map_err(|e| Error::Parse(format!("split config: {e}")))?;
            let mut task = config.into_task(network)?;
            if let Some(t) = manifest.timeout_s {
                task.t0_s = t;
            }
            input_split_verify(&task, &mut ica, &base_cfg, &opts)?
                .result
                .to_json()
        }
        Command::Explain => {
            let config: MsfsConfig = serde_json::from_str(&config_text)
                .map_err(|e| Error::Parse(format!("explain config: {e}")))?;
            let mut task = config.into_task(network)?;
            if let Some(t) = manifest.timeout_s {
                task.query_timeout_s = t;
            }
            msfs_extract(&task, &mut ica, &base_cfg, &opts)?.to_json()
        }
    };

    if let Some(path) = &manifest.pool_out {
        fs::write(path, ica.pool().to_json())?;
    }
    let rendered = serde_json::to_string_pretty(&stats).expect("stats serialize");
    match &manifest.stats_out {
        Some(path) => fs::write(path, &rendered)?,
        None => println!("{rendered}"),
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> PathBuf {
        let path = dir.path().join(name);
        let mut f = fs::File::create(&path).unwrap();
        f.write_all(content.as_bytes()).unwrap();
        path
    }

    fn relu_net_json() -> &'static str {
        r#"{ "layers": [
            { "weights": [[1.0]], "bias": [0.0], "activation": "relu" },
            { "weights": [[1.0]], "bias": [0.0], "activation": "linear" }
        ] }"#
    }

    fn manifest(command: Command, network: PathBuf, config: PathBuf) -> RunManifest {
        RunManifest {
            command,
            network,
            config,
            pool_in: None,
            pool_out: None,
            stats_out: None,
            timeout_s: None,
            trusted_refinement: false,
        }
    }

    #[test]
    fn verify_reports_root_certificate_unsat() {
        let dir = tempfile::tempdir().unwrap();
        let net = write_file(&dir, "net.json", relu_net_json());
        let query = write_file(
            &dir,
            "query.json",
            r#"{ "input_lower": [1.0], "input_upper": [2.0],
                 "output_constraints": [ { "coeffs": [1.0], "relation": "<=", "rhs": 0.0 } ] }"#,
        );
        let mut m = manifest(Command::Verify, net, query);
        m.stats_out = Some(dir.path().join("stats.json"));
        let stats = run(&m).unwrap();
        assert_eq!(stats["verdict"], "unsat");
        assert_eq!(stats["nodes"], 1);
        assert!(m.stats_out.as_ref().unwrap().exists());
    }

    #[test]
    fn radius_brackets_the_crossing_network() {
        let dir = tempfile::tempdir().unwrap();
        let net = write_file(
            &dir,
            "net.json",
            r#"{ "layers": [ { "weights": [[-1.0],[1.0]], "bias": [1.0, 0.0], "activation": "linear" } ] }"#,
        );
        let config = write_file(
            &dir,
            "radius.json",
            r#"{ "x0": [0.0], "eps_min": 0.1, "eps_max": 1.0, "delta": 0.001,
                 "budget_s": 30.0, "query_timeout_s": 5.0 }"#,
        );
        let m = RunManifest {
            stats_out: Some(dir.path().join("stats.json")),
            ..manifest(Command::Radius, net, config)
        };
        let stats = run(&m).unwrap();
        let lo = stats["eps_lower"].as_f64().unwrap();
        let hi = stats["eps_upper"].as_f64().unwrap();
        assert!(lo <= 0.5 && 0.5 <= hi);
        assert!(hi - lo <= 0.001);
    }

    #[test]
    fn pool_round_trips_between_runs() {
        let dir = tempfile::tempdir().unwrap();
        let net = write_file(
            &dir,
            "net.json",
            r#"{ "layers": [
                { "weights": [[-1.0, 0.0],[0.0, 1.0],[0.5, 0.5]], "bias": [0.5, 0.0, -0.2], "activation": "relu" },
                { "weights": [[1.0, -1.0, 0.5],[-0.5, 1.0, 0.25]], "bias": [0.25, 0.0], "activation": "linear" }
            ] }"#,
        );
        let config = write_file(
            &dir,
            "explain.json",
            r#"{ "x0": [0.1, 0.1], "domain_lower": [-1.0, -1.0], "domain_upper": [1.0, 1.0],
                 "query_timeout_s": 10.0, "budget_s": 60.0 }"#,
        );
        let pool_path = dir.path().join("pool.json");
        let m1 = RunManifest {
            pool_out: Some(pool_path.clone()),
            stats_out: Some(dir.path().join("s1.json")),
            ..manifest(Command::Explain, net.clone(), config.clone())
        };
        let s1 = run(&m1).unwrap();
        assert!(pool_path.exists());

        // A refined config: one more feature pinned by shrinking the domain
        // to the reference value.
        let config2 = write_file(
            &dir,
            "explain2.json",
            r#"{ "x0": [0.1, 0.1], "domain_lower": [0.1, -1.0], "domain_upper": [0.1, 1.0],
                 "query_timeout_s": 10.0, "budget_s": 60.0 }"#,
        );
        let m2 = RunManifest {
            pool_in: Some(pool_path.clone()),
            pool_out: Some(dir.path().join("pool2.json")),
            stats_out: Some(dir.path().join("s2.json")),
            ..manifest(Command::Explain, net, config2)
        };
        let s2 = run(&m2).unwrap();
        if s1["conflicts_recorded"].as_u64().unwrap() > 0 {
            assert!(s2["inherited_clauses"].as_u64().unwrap() > 0);
        }
        let p1 = ConflictPool::from_json(&fs::read_to_string(&pool_path).unwrap()).unwrap();
        let p2 =
            ConflictPool::from_json(&fs::read_to_string(dir.path().join("pool2.json")).unwrap())
                .unwrap();
        assert!(p2.total_clauses() >= p1.total_clauses());
    }

    #[test]
    fn rerun_stats_are_byte_identical_modulo_time() {
        let dir = tempfile::tempdir().unwrap();
        let net = write_file(&dir, "net.json", relu_net_json());
        let query = write_file(
            &dir,
            "query.json",
            r#"{ "input_lower": [-1.0], "input_upper": [1.0],
                 "output_constraints": [ { "coeffs": [1.0], "relation": ">=", "rhs": 0.5 } ] }"#,
        );
        let m = manifest(Command::Verify, net, query);
        let mut a = run(&m).unwrap();
        let mut b = run(&m).unwrap();
        a["time_s"] = serde_json::json!(0);
        b["time_s"] = serde_json::json!(0);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn missing_network_is_an_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let config = write_file(&dir, "q.json", "{}");
        let m = manifest(Command::Verify, dir.path().join("absent.json"), config);
        let err = run(&m).unwrap_err();
        assert_eq!(exit_code_for(&err), 1);
    }

    #[test]
    fn oracle_command_reports_patterns() {
        let dir = tempfile::tempdir().unwrap();
        let net = write_file(&dir, "net.json", relu_net_json());
        let query = write_file(
            &dir,
            "query.json",
            r#"{ "input_lower": [-1.0], "input_upper": [1.0],
                 "output_constraints": [ { "coeffs": [1.0], "relation": ">=", "rhs": 0.5 } ] }"#,
        );
        let m = manifest(Command::Oracle, net, query);
        let stats = run(&m).unwrap();
        assert_eq!(stats["verdict"], "sat");
        assert!(stats["patterns_examined"].as_u64().unwrap() >= 1);
    }
}
