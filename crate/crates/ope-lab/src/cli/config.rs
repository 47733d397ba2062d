//! Experiment configuration: one TOML file, unknown keys rejected, CLI flags
//! override file values, and the resolved merge is written next to the
//! outputs of every run.

use serde::{Deserialize, Serialize};

use crate::env::{BanditSpec, CartPoleSpec, EnvSpec, TabularMdpSpec};
use crate::error::{OpeError, Result};
use crate::policy::{Policy, PolicyClass, PolicyFeatures, TabularPolicy};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub environment: EnvironmentSection,
    #[serde(default)]
    pub policy: PolicySection,
    #[serde(default)]
    pub estimators: EstimatorsSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub select: SelectSection,
    #[serde(default)]
    pub dataset: DatasetSection,
    #[serde(default)]
    pub truth: TruthSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    /// One of: `bandit-example`, `reference-mdp`, `cartpole`, `bandit`,
    /// `tabular`. The last two read the matching inline table.
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandit: Option<BanditSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularEnvConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cartpole: Option<CartPoleSpec>,
}

impl Default for EnvironmentSection {
    fn default() -> Self {
        Self { kind: "reference-mdp".into(), bandit: None, tabular: None, cartpole: None }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularEnvConfig {
    pub spec: TabularMdpSpec,
    /// Behavior policy rows pi_b(a | s).
    pub behavior: Vec<Vec<f64>>,
    /// Target policy rows pi_e(a | s).
    pub target: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicySection {
    /// History lengths fitted by sweeps.
    pub k_list: Vec<usize>,
    pub floor_mix: f64,
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Polynomial degree for continuous-state policy classes (0 uses raw
    /// coordinates).
    pub degree: usize,
}

impl Default for PolicySection {
    fn default() -> Self {
        Self { k_list: vec![0, 1, 2], floor_mix: 1e-3, grad_tol: 1e-8, max_iter: 500, degree: 0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorsSection {
    /// Subset of "ois", "sis", "dr", "mis".
    pub kinds: Vec<String>,
    pub include_oracle: bool,
    /// Q-function for DR: "zero", "exact", or "offset".
    pub q_mode: String,
    pub q_offset: f64,
    /// Ridge for the MIS moment inversions.
    pub ridge: f64,
}

impl Default for EstimatorsSection {
    fn default() -> Self {
        Self {
            kinds: vec!["ois".into(), "sis".into()],
            include_oracle: true,
            q_mode: "exact".into(),
            q_offset: 0.0,
            ridge: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub n_list: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Monte Carlo episodes for ground truth when no closed form exists.
    pub truth_episodes: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { n_list: vec![250, 1000], replications: 1000, seed: 20240601, truth_episodes: 200_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SelectSection {
    pub candidates: Vec<usize>,
    /// "ois", "sis", "dr", or "mis".
    pub estimator: String,
    /// "bootstrap" or "sampling-formula".
    pub variance: String,
    pub bootstrap_b: usize,
}

impl Default for SelectSection {
    fn default() -> Self {
        Self {
            candidates: vec![0, 1, 2],
            estimator: "ois".into(),
            variance: "bootstrap".into(),
            bootstrap_b: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSection {
    /// Trajectories to generate (simulate / select-history without a path).
    pub n: usize,
    /// When non-empty, select-history loads this CSV instead of generating.
    pub path: String,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self { n: 1000, path: String::new() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TruthSection {
    pub episodes: usize,
}

impl Default for TruthSection {
    fn default() -> Self {
        Self { episodes: 100_000 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<String>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: "out".into(), formats: vec!["csv".into(), "json".into()] }
    }
}

/// A fully resolved environment: the spec plus behavior/target policies and
/// the default policy class for behavior fitting.
pub struct ResolvedEnvironment {
    pub env: EnvSpec,
    pub behavior: Box<dyn Policy>,
    pub target: Box<dyn Policy>,
    pub policy_class: PolicyClass,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| OpeError::InvalidConfig(format!("config parse error: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn resolve_environment(&self) -> Result<ResolvedEnvironment> {
        let section = &self.environment;
        let (env, behavior, target): (EnvSpec, Box<dyn Policy>, Box<dyn Policy>) =
            match section.kind.as_str() {
                "bandit-example" => {
                    let spec = BanditSpec::example_two_context();
                    let (b, t) = (spec.behavior_policy(), spec.target_policy());
                    (EnvSpec::Bandit(spec), Box::new(b), Box::new(t))
                }
                "bandit" => {
                    let spec = section.bandit.clone().ok_or_else(|| {
                        OpeError::InvalidConfig("kind = \"bandit\" needs an [environment.bandit] table".into())
                    })?;
                    let (b, t) = (spec.behavior_policy(), spec.target_policy());
                    (EnvSpec::Bandit(spec), Box::new(b), Box::new(t))
                }
                "reference-mdp" => {
                    let (spec, b, t) = TabularMdpSpec::reference();
                    (EnvSpec::Tabular(spec), Box::new(b), Box::new(t))
                }
                "tabular" => {
                    let cfg = section.tabular.clone().ok_or_else(|| {
                        OpeError::InvalidConfig("kind = \"tabular\" needs an [environment.tabular] table".into())
                    })?;
                    let b = TabularPolicy::context_dependent(cfg.behavior)?;
                    let t = TabularPolicy::context_dependent(cfg.target)?;
                    (EnvSpec::Tabular(cfg.spec), Box::new(b), Box::new(t))
                }
                "cartpole" => {
                    let spec = section.cartpole.clone().unwrap_or_default();
                    let (b, t) = (spec.behavior_policy(), spec.target_policy());
                    (EnvSpec::CartPole(spec), Box::new(b), Box::new(t))
                }
                other => {
                    return Err(OpeError::InvalidConfig(format!(
                        "unknown environment kind {other:?} (expected bandit-example, bandit, reference-mdp, tabular, or cartpole)"
                    )))
                }
            };
        env.validate()?;
        let features = match &env {
            EnvSpec::Bandit(s) => PolicyFeatures::TabularBlocks {
                num_states: s.num_contexts(),
                num_actions: s.num_actions(),
            },
            EnvSpec::Tabular(s) => PolicyFeatures::TabularBlocks {
                num_states: s.num_states,
                num_actions: s.num_actions,
            },
            EnvSpec::CartPole(_) => {
                if self.policy.degree > 0 {
                    PolicyFeatures::PolynomialBlocks {
                        state_dim: 4,
                        num_actions: 2,
                        degree: self.policy.degree,
                    }
                } else {
                    PolicyFeatures::DenseBlocks { state_dim: 4, num_actions: 2 }
                }
            }
        };
        Ok(ResolvedEnvironment {
            env,
            behavior,
            target,
            policy_class: PolicyClass::new(features, self.policy.floor_mix),
        })
    }

    pub fn fit_options(&self) -> crate::policy::FitOptions {
        crate::policy::FitOptions {
            grad_tol: self.policy.grad_tol,
            max_iter: self.policy.max_iter,
            warm_start: None,
        }
    }
}
