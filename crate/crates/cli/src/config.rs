//! Experiment configuration (TOML) and its hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::canon;
use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub algebraic: f64,
    pub geometric: f64,
    pub class_threshold: f64,
    /// Default relative tolerance for recorded goldens.
    pub golden_relative: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { algebraic: 1e-9, geometric: 1e-3, class_threshold: 0.1, golden_relative: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Budgets {
    pub slack_budget: f64,
    pub horizon: usize,
    pub max_len: usize,
    pub slack_cap: f64,
    pub word_cap: u64,
    pub value_cap: usize,
    /// Search steps allowed per path enumeration.
    pub work_cap: u64,
    pub edge_cap: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Self {
            slack_budget: 8.0,
            horizon: 500,
            max_len: 8,
            slack_cap: 6.0,
            word_cap: 20_000_000,
            value_cap: 2_000_000,
            work_cap: 1 << 27,
            edge_cap: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub bundle: String,
    pub goldens: String,
}

impl Default for Inputs {
    fn default() -> Self {
        Self { bundle: "data/genus2-octagon.json".into(), goldens: "goldens.json".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BruhatParams {
    pub samples: usize,
    pub entry_range: f64,
    pub min_entry: f64,
    pub frames: usize,
    pub perturbation: f64,
    pub flow_time: f64,
}

impl Default for BruhatParams {
    fn default() -> Self {
        Self { samples: 10_000, entry_range: 5.0, min_entry: 0.1, frames: 16, perturbation: 1e-3, flow_time: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectorParams {
    pub oracle_step: f64,
    pub min_count: usize,
    pub families: usize,
    pub family_candidates: usize,
    pub family_k_max: i64,
    pub residual_tol: f64,
    pub graph_cap: f64,
    pub subadditivity_budget: f64,
}

impl Default for ConnectorParams {
    fn default() -> Self {
        Self {
            oracle_step: 1e-3,
            min_count: 20,
            families: 8,
            family_candidates: 40,
            family_k_max: 20,
            residual_tol: 1e-8,
            graph_cap: 3.0,
            subadditivity_budget: 8.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessParams {
    pub trials: usize,
    pub segments: usize,
    pub min_length: f64,
    pub max_length: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub sample_step: f64,
    pub excursion_trials: usize,
    pub excursion_epsilon0: f64,
}

impl Default for HarnessParams {
    fn default() -> Self {
        Self {
            trials: 1000,
            segments: 10,
            min_length: 1.0,
            max_length: 2.0,
            eps_min: 1e-4,
            eps_max: 1e-1,
            sample_step: 0.02,
            excursion_trials: 2000,
            excursion_epsilon0: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphParams {
    pub random_graphs: usize,
    pub max_vertices: usize,
    pub max_edges: usize,
    pub max_budget_factor: f64,
    pub ray_budget: f64,
    pub census_budget: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self {
            random_graphs: 10,
            max_vertices: 3,
            max_edges: 4,
            max_budget_factor: 20.0,
            ray_budget: 5.0,
            census_budget: 4.0,
        }
    }
}

/// Twist-family graph for the filtration check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FiltrationParams {
    pub loop_slack: f64,
    pub n_param: f64,
    pub u_param: f64,
    pub step: f64,
    pub budget: f64,
    pub tol: f64,
    pub h0: f64,
    pub gamma: f64,
    pub levels: usize,
    pub min_cluster: usize,
}

impl Default for FiltrationParams {
    fn default() -> Self {
        Self {
            loop_slack: 1.0,
            n_param: 0.83,
            u_param: 1.21,
            step: 2.5,
            budget: 6.0,
            tol: 1e-13,
            h0: 0.2,
            gamma: 150.0,
            levels: 4,
            min_cluster: 3,
        }
    }
}

/// Twist closure of the shipped bundle for the depth check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DepthParams {
    pub per_pair: usize,
    pub base_cap: f64,
    pub budget: f64,
    pub tol: f64,
    pub h0: f64,
    pub gamma: f64,
    pub levels: usize,
    pub min_cluster: usize,
    pub source: String,
    pub target: String,
    pub top_fraction: f64,
}

impl Default for DepthParams {
    fn default() -> Self {
        Self {
            per_pair: 1,
            base_cap: 1.5,
            budget: 7.0,
            tol: 1e-13,
            h0: 1e-2,
            gamma: 100.0,
            levels: 4,
            min_cluster: 2,
            source: "x0".into(),
            target: "x1".into(),
            top_fraction: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RotationParams {
    pub n: usize,
    pub alpha: f64,
    pub probes: usize,
    pub probe_spacing: usize,
}

impl Default for RotationParams {
    fn default() -> Self {
        Self { n: 1000, alpha: std::f64::consts::SQRT_2 - 1.0, probes: 9, probe_spacing: 111 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DoublingParams {
    pub n: usize,
    pub horizon: usize,
    pub jitter: f64,
    pub bound: f64,
}

impl Default for DoublingParams {
    fn default() -> Self {
        Self { n: 1 << 14, horizon: 20, jitter: 0.3, bound: 1.0 / 512.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LaminarParams {
    pub samples: usize,
    pub alphas: Vec<f64>,
    pub separation: f64,
    pub orbits: usize,
    pub gap_length: f64,
    pub gap_rate: f64,
    pub class_factor: f64,
    pub horizon: usize,
}

impl Default for LaminarParams {
    fn default() -> Self {
        Self {
            samples: 300,
            alphas: vec![0.381966, 0.2928932],
            separation: 0.3,
            orbits: 6,
            gap_length: 0.02,
            gap_rate: 0.5,
            class_factor: 3.0,
            horizon: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RecurrenceParams {
    pub periodic_n: usize,
    pub periodic_alpha: f64,
    pub periodic_b: f64,
    pub periodic_eps: f64,
    pub absorbing_points: usize,
    pub first_step: f64,
    pub growth: f64,
    pub gap: f64,
    pub absorbing_b: f64,
    pub absorbing_eps: f64,
    pub horizon: usize,
}

impl Default for RecurrenceParams {
    fn default() -> Self {
        Self {
            periodic_n: 40,
            periodic_alpha: 0.25,
            periodic_b: 3.0,
            periodic_eps: 1e-6,
            absorbing_points: 12,
            first_step: 0.2,
            growth: 1.2,
            gap: 0.5,
            absorbing_b: 1.0,
            absorbing_eps: 0.15,
            horizon: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McShaneParams {
    pub domain: usize,
    pub query_pairs: usize,
    pub alternatives: usize,
    pub alternative_queries: usize,
}

impl Default for McShaneParams {
    fn default() -> Self {
        Self { domain: 200, query_pairs: 10_000, alternatives: 100, alternative_queries: 200 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Mandatory for randomized harnesses.
    pub seed: Option<u64>,
    pub output_dir: String,
    pub tolerances: Tolerances,
    pub budgets: Budgets,
    pub inputs: Inputs,
    pub bruhat: BruhatParams,
    pub connectors: ConnectorParams,
    pub harness: HarnessParams,
    pub graphs: GraphParams,
    pub filtration: FiltrationParams,
    pub depth: DepthParams,
    pub rotation: RotationParams,
    pub doubling: DoublingParams,
    pub laminar: LaminarParams,
    pub recurrence: RecurrenceParams,
    pub mcshane: McShaneParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            output_dir: "horolab-out".into(),
            tolerances: Tolerances::default(),
            budgets: Budgets::default(),
            inputs: Inputs::default(),
            bruhat: BruhatParams::default(),
            connectors: ConnectorParams::default(),
            harness: HarnessParams::default(),
            graphs: GraphParams::default(),
            filtration: FiltrationParams::default(),
            depth: DepthParams::default(),
            rotation: RotationParams::default(),
            doubling: DoublingParams::default(),
            laminar: LaminarParams::default(),
            recurrence: RecurrenceParams::default(),
            mcshane: McShaneParams::default(),
        }
    }
}

/// A parsed configuration with the directory its relative paths refer to.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn defaults() -> Self {
        Self { config: ExperimentConfig::default(), base_dir: PathBuf::from(".") }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: ExperimentConfig =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
        Ok(Self { config, base_dir })
    }

    pub fn resolve(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn hash(&self) -> String {
        self.config.hash()
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        if !(self.tolerances.algebraic > 0.0
            && self.tolerances.geometric > 0.0
            && self.tolerances.class_threshold > 0.0)
        {
            return bad("tolerances must be positive");
        }
        if !(self.budgets.slack_budget > 0.0 && self.budgets.slack_cap > 0.0) || self.budgets.horizon == 0 {
            return bad("budgets must be positive");
        }
        if self.laminar.alphas.is_empty() {
            return bad("laminar model needs at least one component");
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config("a seed is required for randomized harnesses".into()))
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        canon::sha256_hex(canon::to_canonical(self).expect("config serializes").as_bytes())
    }
}
