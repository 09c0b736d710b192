use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::context::AgentContext;
use super::AgentError;
use crate::bus::{Structured, Value};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub action: String,
    #[serde(default)]
    pub args: Structured,
    #[serde(default)]
    pub rationale: String,
}

impl PlanStep {
    pub fn new(action: &str, rationale: &str) -> Self {
        Self {
            action: action.to_string(),
            args: Structured::new(),
            rationale: rationale.to_string(),
        }
    }

    pub fn arg(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.args.insert(name.to_string(), value.into());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub situation_summary: String,
    pub steps: Vec<PlanStep>,
    pub contingency: Option<String>,
}

impl Plan {
    pub fn hold(summary: &str) -> Self {
        Self {
            situation_summary: summary.to_string(),
            steps: vec![PlanStep::new(
                "holdAndMonitor",
                "nothing relevant has changed",
            )],
            contingency: None,
        }
    }

    /// Checks every step names an available action.
    pub fn validate(&self, available: &BTreeSet<String>) -> Result<(), AgentError> {
        if self.steps.is_empty() {
            return Err(AgentError::PlanValidation("plan has no steps".into()));
        }
        match self.steps.iter().find(|s| !available.contains(&s.action)) {
            Some(bad) => Err(AgentError::PlanValidation(bad.action.clone())),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum BackendIdentity {
    Scripted(String),
    External(String),
    SingleCall,
    Random(u64),
}

pub trait ReasonerBackend: Send {
    fn identity(&self) -> BackendIdentity;
    /// Whether the agent should fill the memories section for this backend.
    fn reads_memory(&self) -> bool {
        true
    }
    fn generate(&mut self, context: &AgentContext) -> Result<Plan, AgentError>;
}

/// One planning call per step with no memory: wraps another backend and
/// hands it contexts whose memories section is blank.
pub struct SingleCall<B> {
    inner: B,
}

impl<B: ReasonerBackend> SingleCall<B> {
    pub fn new(inner: B) -> Self {
        Self { inner }
    }
}

impl<B: ReasonerBackend> ReasonerBackend for SingleCall<B> {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::SingleCall
    }

    fn reads_memory(&self) -> bool {
        false
    }

    fn generate(&mut self, context: &AgentContext) -> Result<Plan, AgentError> {
        let mut blind = context.clone();
        blind.memories = Default::default();
        self.inner.generate(&blind)
    }
}

/// Uniformly random single-step plans over the available actions.
pub struct RandomBackend {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomBackend {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

const RANDOM_REPORTS: [&str; 5] = [
    "fire and smoke ahead",
    "1 trapped person here",
    "2 trapped people here",
    "3 trapped people here",
    "turbine status nominal",
];
const SENSORS: [&str; 4] = ["Depth", "Infrared", "Lidar", "Down"];

impl ReasonerBackend for RandomBackend {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::Random(self.seed)
    }

    fn reads_memory(&self) -> bool {
        false
    }

    fn generate(&mut self, context: &AgentContext) -> Result<Plan, AgentError> {
        let names: Vec<&str> = context
            .embodied_capabilities
            .iter()
            .filter_map(|c| c.split('(').next())
            .collect();
        if names.is_empty() {
            return Err(AgentError::BackendUnavailable(
                "no actions available".into(),
            ));
        }
        let name = names[self.rng.random_range(0..names.len())];
        let rng = &mut self.rng;
        let step = PlanStep::new(name, "random choice");
        let step = match name {
            "moveToPosition" => {
                let proximity = [5.0, 15.0, 30.0][rng.random_range(0..3)];
                step.arg("bearing_deg", rng.random_range(0.0..360.0_f64).round())
                    .arg("distance", proximity)
            }
            "moveRelative" => step
                .arg("dx", rng.random_range(-5.0..=5.0_f64).round())
                .arg("dy", rng.random_range(-5.0..=5.0_f64).round())
                .arg("dz", rng.random_range(-5.0..=5.0_f64).round()),
            "broadcastReassurance" => step.arg("text", "stay calm, help is coming"),
            "reportToCommand" => step.arg(
                "text",
                RANDOM_REPORTS[rng.random_range(0..RANDOM_REPORTS.len())],
            ),
            "dropEmergencyKit" => step.arg("count", f64::from(rng.random_range(1..=3u32))),
            "activeObserve" => step.arg("sensor", SENSORS[rng.random_range(0..SENSORS.len())]),
            _ => step,
        };
        Ok(Plan {
            situation_summary: "random exploration".into(),
            steps: vec![step],
            contingency: None,
        })
    }
}
