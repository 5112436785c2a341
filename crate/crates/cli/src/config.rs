//! Run configuration: one JSON document driving every subcommand.

use serde::{Deserialize, Serialize};

use hetnet_core::cro::BarrierOpts;
use hetnet_core::scenario::ScenarioConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub jur_node_budget: u64,
    pub barrier: BarrierOpts,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            jur_node_budget: 1_000_000,
            barrier: BarrierOpts::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub kernel_gamma: f64,
    pub tol: f64,
    pub max_passes: usize,
    pub cv_folds: usize,
    pub cv_grid_c: Vec<f64>,
    pub cv_grid_gamma: Vec<f64>,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            kernel_gamma: 0.1,
            tol: 1e-3,
            max_passes: 50,
            cv_folds: 5,
            cv_grid_c: vec![0.1, 1.0, 10.0, 100.0],
            cv_grid_gamma: vec![0.01, 0.1, 1.0],
        }
    }
}

/// Default corpus for `train --from-scenarios`: per listed seed, one scenario
/// of `users_per_scenario` users labeled by the exact solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub users_per_scenario: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            users_per_scenario: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub solver: SolverConfig,
    pub svm: SvmConfig,
    pub training: TrainingConfig,
    pub master_seed: u64,
    pub out_dir: String,
}

impl RunConfig {
    pub fn print_default() -> String {
        let cfg = RunConfig {
            master_seed: 1,
            out_dir: "out".to_string(),
            ..Default::default()
        };
        serde_json::to_string_pretty(&cfg).expect("default config serializes")
    }
}
