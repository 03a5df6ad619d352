//! Experiment configuration files.

use std::path::Path;

use llnlab_core::conditions::NormalizerSpec;
use llnlab_core::montecarlo::{EventSpec, Probe};
use llnlab_core::FamilyDescriptor;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::assertions::Assertion;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Simulate,
    Check,
    Proof,
    Integrate,
    Oracle,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Simulate => "simulate",
            TaskKind::Check => "check",
            TaskKind::Proof => "proof",
            TaskKind::Integrate => "integrate",
            TaskKind::Oracle => "oracle",
        }
    }
}

/// Wire form of a config file. `task_params` is decoded per task in
/// [`ExperimentConfig::params`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub task: TaskKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyDescriptor>,
    /// Runs the task once per family; results land under `results`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub families: Vec<FamilyDescriptor>,
    #[serde(default = "linear")]
    pub normalizer: NormalizerSpec<f64>,
    pub task_params: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assertions: Vec<Assertion>,
}

fn linear() -> NormalizerSpec<f64> {
    NormalizerSpec::Linear
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "operation", rename_all = "snake_case", deny_unknown_fields)]
pub enum SimulateParams {
    Lln {
        checkpoints: Vec<u64>,
        replications: u64,
        tolerance: f64,
    },
    Events {
        n: u64,
        samples: u64,
        events: Vec<NamedEvent>,
    },
    Dependence {
        i: u64,
        j: u64,
        probe: Probe,
        samples: u64,
    },
    Chebyshev {
        ns: Vec<u64>,
        deltas: Vec<f64>,
        samples: u64,
    },
    PospartMc {
        pairs: u64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedEvent {
    pub name: String,
    pub event: EventSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "snake_case", deny_unknown_fields)]
pub enum CheckParams {
    Kolmogorov {
        horizon: usize,
    },
    /// Pair covariances on `1..=max_index` plus the variance ratio.
    Uncorrelation {
        max_index: u64,
        n_grid: Vec<u64>,
        replications: u64,
    },
    QuasiUncorrelation {
        n_grid: Vec<u64>,
        replications: u64,
    },
    ScaledMean {
        horizon: usize,
        #[serde(default)]
        fallback_replications: Option<u64>,
    },
    CgTail {
        t_max: f64,
        tolerance: f64,
        sup_horizons: Vec<u64>,
    },
    MeanAbsDeviation {
        horizon: usize,
        replications: u64,
    },
    Truncation {
        horizon: usize,
        replications: u64,
    },
    Basel {
        k_max: u64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlackPath {
    /// `alpha = 1 + 1/m` for `m = 1..=m_max`.
    pub m_max: u64,
    /// `epsilon = 1/k` for `k = 1..=k_max`.
    pub k_max: u64,
    /// Scaled-mean bound entering the slacks.
    pub a: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirectChebyshev {
    pub ns: Vec<u64>,
    pub deltas: Vec<f64>,
    pub samples: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "operation", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProofParams {
    Index {
        alphas: Vec<f64>,
        epsilons: Vec<f64>,
        horizons: Vec<usize>,
    },
    Kappa {
        alphas: Vec<f64>,
        epsilon: f64,
        horizon: usize,
        j_max: u64,
    },
    Sandwich {
        alphas: Vec<f64>,
        epsilons: Vec<f64>,
        horizon: usize,
        seed_count: u64,
        #[serde(default)]
        slack_path: Option<SlackPath>,
    },
    Chebyshev {
        alphas: Vec<f64>,
        epsilons: Vec<f64>,
        horizon: usize,
        deltas: Vec<f64>,
        replications: u64,
        #[serde(default)]
        direct: Option<DirectChebyshev>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "target", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntegrateParams {
    Pospart {
        #[serde(default)]
        monte_carlo_pairs: Option<u64>,
        #[serde(default)]
        nested: bool,
    },
    Cosine {
        max_index: u64,
    },
    Builtin {
        function: BuiltinFunction,
        tolerance: f64,
    },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinFunction {
    /// `e^{-t}` on `[0, ∞)`.
    ExpDecay,
    /// Standard normal density on `(−∞, ∞)`.
    NormalDensity,
    /// `0` on `[0, 1]`.
    Zero,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloOracle {
    pub n: u64,
    pub samples: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleParams {
    #[serde(default)]
    pub n: Option<u64>,
    #[serde(default)]
    pub n_range: Option<[u64; 2]>,
    #[serde(default)]
    pub monte_carlo: Option<MonteCarloOracle>,
}

#[derive(Debug, Clone)]
pub enum TaskParams {
    Simulate(SimulateParams),
    Check(CheckParams),
    Proof(ProofParams),
    Integrate(IntegrateParams),
    Oracle(OracleParams),
}

fn decode<P: for<'de> Deserialize<'de>>(v: &Value, task: TaskKind) -> Result<P, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::Config(format!("task_params for {}: {e}", task.as_str())))
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn params(&self) -> Result<TaskParams, CliError> {
        let v = &self.task_params;
        Ok(match self.task {
            TaskKind::Simulate => TaskParams::Simulate(decode(v, self.task)?),
            TaskKind::Check => TaskParams::Check(decode(v, self.task)?),
            TaskKind::Proof => TaskParams::Proof(decode(v, self.task)?),
            TaskKind::Integrate => TaskParams::Integrate(decode(v, self.task)?),
            TaskKind::Oracle => TaskParams::Oracle(decode(v, self.task)?),
        })
    }

    /// The families the task runs over, in order.
    pub fn family_list(&self) -> Result<Vec<FamilyDescriptor>, CliError> {
        match (&self.family, self.families.is_empty()) {
            (Some(_), false) => Err(CliError::Config("give either `family` or `families`, not both".into())),
            (Some(f), true) => Ok(vec![f.clone()]),
            (None, _) => Ok(self.families.clone()),
        }
    }

    /// Field-level validation that does not need the task to run.
    pub fn validate(&self) -> Result<TaskParams, CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::Config(format!(
                "name `{}` must be non-empty without path separators",
                self.name
            )));
        }
        let params = self.params()?;
        let families = self.family_list()?;
        for f in &families {
            f.validate().map_err(|e| CliError::Config(format!("family: {e}")))?;
        }
        self.normalizer
            .validate()
            .map_err(|e| CliError::Config(format!("normalizer: {e}")))?;
        let needs_family = !matches!(params, TaskParams::Integrate(_) | TaskParams::Oracle(_))
            && !matches!(params, TaskParams::Check(CheckParams::Basel { .. }))
            && !matches!(params, TaskParams::Simulate(SimulateParams::PospartMc { .. }));
        if needs_family && families.is_empty() {
            return Err(CliError::Config(format!(
                "task {} needs `family` or `families`",
                self.task.as_str()
            )));
        }
        if let TaskParams::Oracle(p) = &params {
            if p.n.is_none() && p.n_range.is_none() {
                return Err(CliError::Config("oracle needs `n` or `n_range`".into()));
            }
            if let Some([lo, hi]) = p.n_range {
                if lo > hi {
                    return Err(CliError::Config(format!("n_range [{lo}, {hi}] is empty")));
                }
            }
            if families.iter().any(|f| *f != FamilyDescriptor::step()) {
                return Err(CliError::Config("the exact oracle covers the step family only".into()));
            }
        }
        if let TaskParams::Simulate(SimulateParams::Events { events, .. }) = &params {
            for e in events {
                e.event
                    .validate()
                    .map_err(|err| CliError::Config(format!("event `{}`: {err}", e.name)))?;
            }
        }
        for a in &self.assertions {
            a.validate()?;
        }
        Ok(params)
    }
}
