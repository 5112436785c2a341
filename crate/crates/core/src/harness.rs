//! Deterministic experiment harness: run DSM, JUR, and LHM on identical
//! inputs, sweep the user load, and emit plot-data CSVs with a hashed
//! manifest.
//!
//! Each comparison shares one scenario and one bid table across the three
//! algorithms (their content hashes go into the manifest), and solver wall
//! time excludes that common setup. Output files are written atomically.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::jur::{solve_dsm, solve_jur_bnb, Association, JurOpts};
use crate::lhm::{agreement_with_jur, solve_lhm, LhmOpts};
use crate::pricing::{build_bid_table, BidTable};
use crate::scenario::{generate_scenario, Scenario, ScenarioConfig, ScenarioError};
use crate::svm::SvmModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Algorithm {
    Dsm,
    Jur,
    Lhm,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Dsm => "DSM",
            Algorithm::Jur => "JUR",
            Algorithm::Lhm => "LHM",
        }
    }
}

/// Run-level aggregates of one algorithm on one scenario.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub algorithm: Algorithm,
    pub running_time_s: f64,
    pub avg_cost_per_user: f64,
    pub service_rate: f64,
    pub offloaded_count: usize,
    pub scenario_seed: u64,
    pub n_users: usize,
    pub total_cost: f64,
    /// Failed-row marker: set when the solver reported infeasibility.
    pub error: Option<String>,
}

impl Metrics {
    fn failed(algorithm: Algorithm, scenario: &Scenario, msg: String, elapsed: f64) -> Self {
        Self {
            algorithm,
            running_time_s: elapsed,
            avg_cost_per_user: 0.0,
            service_rate: 0.0,
            offloaded_count: 0,
            scenario_seed: scenario.seed,
            n_users: scenario.users.len(),
            total_cost: 0.0,
            error: Some(msg),
        }
    }

    fn from_solution(
        algorithm: Algorithm,
        scenario: &Scenario,
        association: &Association,
        total_cost: f64,
        elapsed: f64,
    ) -> Self {
        let served = association.served_count();
        Self {
            algorithm,
            running_time_s: elapsed,
            avg_cost_per_user: if served > 0 {
                total_cost / served as f64
            } else {
                0.0
            },
            service_rate: served as f64 / scenario.users.len() as f64,
            offloaded_count: association.offloaded_count(),
            scenario_seed: scenario.seed,
            n_users: scenario.users.len(),
            total_cost,
            error: None,
        }
    }
}

/// Per-user cost row backing the per-user cost comparison plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerUserCost {
    pub user_id: u32,
    pub algorithm: Algorithm,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonResult {
    pub metrics: Vec<Metrics>,
    pub per_user: Vec<PerUserCost>,
    pub scenario_hash: String,
    pub bids_hash: String,
    pub lhm_agreement: Option<f64>,
    pub scenario_seed: u64,
}

#[derive(Debug, Clone, Default)]
pub struct HarnessOpts {
    pub jur: JurOpts,
    pub lhm: LhmOpts,
}

fn per_user_costs(
    scenario: &Scenario,
    algorithm: Algorithm,
    association: &Association,
    resources: &crate::cro::CroSolution,
    bids: &BidTable,
) -> Vec<PerUserCost> {
    association
        .entries
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let cost = if !entry.served {
                0.0
            } else if entry.mbs_served {
                resources
                    .allocs
                    .iter()
                    .find(|a| a.user_id == entry.user_id)
                    .map(|a| scenario.mbs.c_p * a.p + scenario.mbs.gamma * scenario.mbs.c_w * a.w)
                    .unwrap_or(0.0)
            } else {
                bids.best_for(i).map(|b| b.total).unwrap_or(0.0)
            };
            PerUserCost {
                user_id: entry.user_id.0,
                algorithm,
                cost,
            }
        })
        .collect()
}

/// Run DSM, JUR, and LHM on the identical scenario and bid table; wall time
/// covers the solver alone.
pub fn run_comparison(
    scenario: &Scenario,
    model: &SvmModel,
    opts: &HarnessOpts,
) -> ComparisonResult {
    let bids = build_bid_table(scenario);
    let scenario_hash = sha256_hex(scenario.to_json().as_bytes());
    let bids_hash = sha256_hex(bids.to_csv().as_bytes());

    let mut metrics = Vec::new();
    let mut per_user = Vec::new();

    let t = Instant::now();
    let dsm = solve_dsm(scenario);
    metrics.push(Metrics::from_solution(
        Algorithm::Dsm,
        scenario,
        &dsm.association,
        dsm.total_cost,
        t.elapsed().as_secs_f64(),
    ));
    per_user.extend(per_user_costs(
        scenario,
        Algorithm::Dsm,
        &dsm.association,
        &dsm.resources,
        &bids,
    ));

    let t = Instant::now();
    let jur = solve_jur_bnb(scenario, &bids, &opts.jur);
    let jur = match jur {
        Ok(sol) => {
            metrics.push(Metrics::from_solution(
                Algorithm::Jur,
                scenario,
                &sol.association,
                sol.total_cost,
                t.elapsed().as_secs_f64(),
            ));
            per_user.extend(per_user_costs(
                scenario,
                Algorithm::Jur,
                &sol.association,
                &sol.resources,
                &bids,
            ));
            Some(sol)
        }
        Err(e) => {
            metrics.push(Metrics::failed(
                Algorithm::Jur,
                scenario,
                e.to_string(),
                t.elapsed().as_secs_f64(),
            ));
            None
        }
    };

    let t = Instant::now();
    let mut lhm_agreement = None;
    match solve_lhm(scenario, model, &bids, &opts.lhm) {
        Ok(mut sol) => {
            if let Some(jur) = &jur {
                let agreement = agreement_with_jur(&sol, jur);
                sol.svm_agreement = Some(agreement);
                lhm_agreement = Some(agreement);
            }
            metrics.push(Metrics::from_solution(
                Algorithm::Lhm,
                scenario,
                &sol.association,
                sol.total_cost,
                t.elapsed().as_secs_f64(),
            ));
            per_user.extend(per_user_costs(
                scenario,
                Algorithm::Lhm,
                &sol.association,
                &sol.resources,
                &bids,
            ));
        }
        Err(e) => {
            metrics.push(Metrics::failed(
                Algorithm::Lhm,
                scenario,
                e.to_string(),
                t.elapsed().as_secs_f64(),
            ));
        }
    }

    ComparisonResult {
        metrics,
        per_user,
        scenario_hash,
        bids_hash,
        lhm_agreement,
        scenario_seed: scenario.seed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub n_users: usize,
    pub algorithm: Algorithm,
    pub service_rate: f64,
    pub avg_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("empty or non-ascending load grid")]
    BadGrid,
    #[error("nothing to emit: {0}")]
    Empty(String),
    #[error("scenario generation failed: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Service rate and average cost per algorithm over a rising user count.
///
/// Every grid point regenerates the scenario from the same seed, so smaller
/// loads are exact prefixes of larger ones and saturation trends are not
/// confounded by resampling.
pub fn sweep_load(
    base: &ScenarioConfig,
    n_grid: &[usize],
    model: &SvmModel,
    seed: u64,
    opts: &HarnessOpts,
) -> Result<SweepResult, HarnessError> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(HarnessError::BadGrid);
    }
    let mut rows = Vec::new();
    for &n in n_grid {
        let cfg = ScenarioConfig {
            n_users: n,
            ..base.clone()
        };
        let scenario = generate_scenario(&cfg, seed)?;
        let comparison = run_comparison(&scenario, model, opts);
        for m in &comparison.metrics {
            rows.push(SweepRow {
                n_users: n,
                algorithm: m.algorithm,
                service_rate: if m.error.is_some() {
                    0.0
                } else {
                    m.service_rate
                },
                avg_cost: m.avg_cost_per_user,
            });
        }
    }
    Ok(SweepResult { rows, seed })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EmitOpts {
    /// Write the running-time column as zero so repeated runs produce
    /// byte-identical files; wall clocks are the one non-deterministic input.
    pub normalize_times: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ManifestFile {
    pub name: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub scenario_seed: u64,
    pub scenario_hash: String,
    pub bids_hash: String,
    pub files: Vec<ManifestFile>,
    pub failures: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex::encode(hasher.finalize())
}

/// Write via a temp file in the same directory, then rename into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let tmp = path.with_extension("tmp");
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)
}

fn table1_csv(metrics: &[Metrics], normalize_times: bool) -> String {
    let mut out =
        String::from("algorithm,running_time_s,avg_cost_per_user,service_rate,offloaded\n");
    for m in metrics.iter().filter(|m| m.error.is_none()) {
        let t = if normalize_times {
            0.0
        } else {
            m.running_time_s
        };
        out.push_str(&format!(
            "{},{:.3},{},{},{}\n",
            m.algorithm.as_str(),
            t,
            m.avg_cost_per_user,
            m.service_rate,
            m.offloaded_count
        ));
    }
    out
}

fn fig2_csv(per_user: &[PerUserCost]) -> String {
    let mut out = String::from("user_id,algorithm,cost\n");
    for row in per_user {
        out.push_str(&format!(
            "{},{},{}\n",
            row.user_id,
            row.algorithm.as_str(),
            row.cost
        ));
    }
    out
}

fn fig3_csv(sweep: &SweepResult) -> String {
    let mut out = String::from("n_users,algorithm,service_rate\n");
    for row in &sweep.rows {
        out.push_str(&format!(
            "{},{},{}\n",
            row.n_users,
            row.algorithm.as_str(),
            row.service_rate
        ));
    }
    out
}

/// Write `table1.csv`, `fig2_cost.csv`, optionally `fig3_service.csv`, and a
/// `manifest.json` listing every file with its content hash.
pub fn emit_plot_data(
    comparison: &ComparisonResult,
    sweep: Option<&SweepResult>,
    out_dir: &Path,
    opts: &EmitOpts,
) -> Result<Manifest, HarnessError> {
    if comparison.metrics.is_empty() {
        return Err(HarnessError::Empty("comparison produced no metrics".into()));
    }
    if let Some(s) = sweep {
        if s.rows.is_empty() {
            return Err(HarnessError::Empty("sweep produced no rows".into()));
        }
    }
    let mut files = Vec::new();
    let mut write = |name: &str, contents: String| -> Result<(), HarnessError> {
        let path = out_dir.join(name);
        atomic_write(&path, contents.as_bytes()).map_err(|source| HarnessError::Io {
            path: path.clone(),
            source,
        })?;
        files.push(ManifestFile {
            name: name.to_string(),
            sha256: sha256_hex(contents.as_bytes()),
        });
        Ok(())
    };

    write(
        "table1.csv",
        table1_csv(&comparison.metrics, opts.normalize_times),
    )?;
    write("fig2_cost.csv", fig2_csv(&comparison.per_user))?;
    if let Some(s) = sweep {
        write("fig3_service.csv", fig3_csv(s))?;
    }

    let manifest = Manifest {
        scenario_seed: comparison.scenario_seed,
        scenario_hash: comparison.scenario_hash.clone(),
        bids_hash: comparison.bids_hash.clone(),
        files,
        failures: comparison
            .metrics
            .iter()
            .filter_map(|m| {
                m.error
                    .as_ref()
                    .map(|e| format!("{}: {e}", m.algorithm.as_str()))
            })
            .collect(),
    };
    let manifest_json =
        serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n";
    let path = out_dir.join("manifest.json");
    atomic_write(&path, manifest_json.as_bytes())
        .map_err(|source| HarnessError::Io { path, source })?;
    Ok(manifest)
}
