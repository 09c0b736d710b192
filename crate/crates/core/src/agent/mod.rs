//! The planning loop: observe, reflect into memory, plan, act.

mod backend;
mod context;
mod external;
mod scripted;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use backend::{BackendIdentity, Plan, PlanStep, RandomBackend, ReasonerBackend, SingleCall};
pub use context::{
    build_context, memory_query, AgentContext, MemorySection, DEFAULT_PROMPT, RECENT_OPERATIONS,
    RETRIEVAL_K,
};
pub use external::{parse_response, ExternalBackend, PlanRequest, PlanResponse, ENDPOINT_ENV};
pub use scripted::{SceneView, ScriptedBackend, SeenEntity};

use crate::actions::{execute_flow, ActionError, ActionLibrary, PayloadConfiguration};
use crate::bus::{QueueConfig, Structured, Value};
use crate::controller::POSE_TOPIC;
use crate::memory::{MemoryDb, MultimodalPayload, OperationRecord, Outcome};
use crate::roschain::{Command, CommandCategory, Perception, Roschain, RoschainError};

/// Topic carrying the structured scene.
pub const SCENE_TOPIC: &str = "camera/scene";
/// Topic carrying the camera frame.
pub const IMAGE_TOPIC: &str = "camera/image";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("plan names an unavailable action: {0}")]
    PlanValidation(String),
    #[error("reasoner unavailable: {0}")]
    BackendUnavailable(String),
    #[error(transparent)]
    Action(#[from] ActionError),
    #[error(transparent)]
    Roschain(#[from] RoschainError),
}

/// True iff an entity appeared, disappeared or changed state between scenes.
pub fn replan_trigger(previous: Option<&Structured>, current: Option<&Structured>) -> bool {
    let states =
        |s: Option<&Structured>| s.and_then(SceneView::from_structured).map(|v| v.states());
    states(previous) != states(current)
}

/// Plain-language description of a scene, used as the memory label.
pub fn describe_scene(scene: &Structured) -> String {
    let Some(view) = SceneView::from_structured(scene) else {
        return String::new();
    };
    let mut parts = Vec::new();
    for e in view.entities.values() {
        let kind = match e.kind.as_str() {
            "fire_source" if e.state == "burning" => "fire",
            "fire_source" => "smoke",
            "trapped_group" => "trapped survivors",
            "turbine" => "wind turbine",
            other => other,
        };
        let mut part = format!("{kind} {} at bearing {:.0}", e.id, e.bearing_deg);
        if let Some(phase) = e.number("phase_deg") {
            part.push_str(&format!(" blade {phase:.0} deg"));
        }
        if let Some(size) = e.number("size") {
            part.push_str(&format!(" size {size:.0}"));
        }
        parts.push(part);
    }
    parts.join("; ")
}

/// Static description of a mission.
#[derive(Debug, Clone)]
pub struct AgentConfig {
    pub task: String,
    pub prompt: String,
    pub payloads: PayloadConfiguration,
    pub keywords: Vec<String>,
}

/// Probability of corrupting a command's first emission.
#[derive(Debug, Clone)]
pub struct RetryModel {
    pub probability: f64,
    rng: ChaCha8Rng,
}

impl RetryModel {
    pub fn new(probability: f64, seed: u64) -> Self {
        Self {
            probability,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

#[derive(Debug, Clone)]
struct ActivePlan {
    plan: Plan,
    next: usize,
    /// A controller command still being flown.
    in_flight: Option<Command>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: u64,
    pub command: Option<Command>,
    pub outcome: Outcome,
    pub replanned: bool,
}

/// Flight modes in which the last controller command is still executing.
const TRANSIENT_MODES: [&str; 4] = ["TakingOff", "MovingTo", "Landing", "FailsafeLanding"];

pub struct Agent {
    roschain: Roschain,
    library: ActionLibrary,
    config: AgentConfig,
    memory: MemoryDb,
    backend: Box<dyn ReasonerBackend>,
    active: Option<ActivePlan>,
    contingencies: Vec<String>,
    previous_scene: Option<Structured>,
    step_count: u64,
    retry: Option<RetryModel>,
    pending_retry: Option<Command>,
    trace: Vec<String>,
}

impl Agent {
    pub fn new(
        roschain: Roschain,
        library: ActionLibrary,
        config: AgentConfig,
        backend: Box<dyn ReasonerBackend>,
    ) -> Result<Self, AgentError> {
        for topic in [SCENE_TOPIC, IMAGE_TOPIC, POSE_TOPIC] {
            roschain.subscriber(topic, QueueConfig::default())?;
        }
        let memory = MemoryDb::new().with_keywords(&config.keywords);
        Ok(Self {
            roschain,
            library,
            config,
            memory,
            backend,
            active: None,
            contingencies: Vec::new(),
            previous_scene: None,
            step_count: 0,
            retry: None,
            pending_retry: None,
            trace: Vec::new(),
        })
    }

    /// Corrupts first emissions with the given model.
    pub fn with_retry_model(mut self, model: RetryModel) -> Self {
        self.retry = Some(model);
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn memory(&self) -> &MemoryDb {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut MemoryDb {
        &mut self.memory
    }

    pub fn contingencies(&self) -> &[String] {
        &self.contingencies
    }

    pub fn backend_identity(&self) -> BackendIdentity {
        self.backend.identity()
    }

    /// Rendered commands the agent published or requested, in order.
    pub fn command_trace(&self) -> &[String] {
        &self.trace
    }

    pub fn current_plan(&self) -> Option<&Plan> {
        self.active.as_ref().map(|a| &a.plan)
    }

    fn available(&self) -> BTreeSet<String> {
        self.library
            .lookup(&self.config.payloads)
            .into_iter()
            .map(|a| a.name.clone())
            .collect()
    }

    /// Context for the current observations.
    pub fn build_context(&self, observations: Vec<Perception>) -> AgentContext {
        let actions = self.library.lookup(&self.config.payloads);
        let memory = self
            .backend
            .reads_memory()
            .then_some((&self.memory, self.contingencies.as_slice()));
        build_context(
            &self.config.task,
            &actions,
            observations,
            memory,
            &self.config.prompt,
        )
    }

    pub fn generate_plan(&mut self, context: &AgentContext) -> Result<Plan, AgentError> {
        let plan = self.backend.generate(context)?;
        plan.validate(&self.available())?;
        Ok(plan)
    }

    fn move_in_progress(&self) -> bool {
        self.roschain
            .latest_payload(POSE_TOPIC)
            .and_then(|p| {
                p.as_structured().and_then(|m| {
                    m.get("flight_mode")
                        .and_then(Value::as_text)
                        .map(str::to_string)
                })
            })
            .is_some_and(|mode| TRANSIENT_MODES.contains(&mode.as_str()))
    }

    /// One observe-plan-act cycle. The step counter advances by exactly one
    /// whatever happens.
    pub fn step(&mut self) -> StepOutcome {
        let (command, outcome, replanned) = self.cycle();
        let record = OperationRecord {
            tick: self.step_count,
            operation: command.as_ref().map(|c| c.operation.name.clone()),
            config: command
                .as_ref()
                .map(|c| c.parameters.clone())
                .unwrap_or_default(),
            outcome: outcome.clone(),
        };
        self.memory.record_operation(record);
        let out = StepOutcome {
            step: self.step_count,
            command,
            outcome,
            replanned,
        };
        self.step_count += 1;
        out
    }

    fn cycle(&mut self) -> (Option<Command>, Outcome, bool) {
        let observations = self.roschain.perceptions();
        let scene = self
            .roschain
            .latest_payload(SCENE_TOPIC)
            .and_then(|p| p.as_structured().cloned());
        if let Some(scene) = &scene {
            let image_b64 = observations
                .iter()
                .find(|p| p.topic == IMAGE_TOPIC)
                .map(|p| p.text.clone());
            let tick = scene.get("tick").and_then(Value::as_f64).unwrap_or(0.0) as u64;
            let narrative = describe_scene(scene);
            self.memory.reflect(
                MultimodalPayload {
                    image_b64,
                    scene: Some(scene.clone()),
                },
                &narrative,
                tick,
            );
        }

        if let Some(cmd) = self.pending_retry.take() {
            let outcome = self.emit(&cmd, false);
            return (Some(cmd), outcome, false);
        }

        let moving = self.move_in_progress();
        if let Some(active) = &mut self.active {
            if active.in_flight.is_some() && !moving {
                active.in_flight = None;
            }
            if active.in_flight.is_none() && active.next >= active.plan.steps.len() {
                if let Some(note) = active.plan.contingency.take() {
                    self.contingencies.push(note);
                }
                self.active = None;
            }
        }

        let triggered = replan_trigger(self.previous_scene.as_ref(), scene.as_ref());
        self.previous_scene = scene;
        let mut replanned = false;
        if triggered || self.active.is_none() {
            let context = self.build_context(observations);
            match self.generate_plan(&context) {
                Ok(plan) => {
                    self.active = Some(ActivePlan {
                        plan,
                        next: 0,
                        in_flight: None,
                    });
                    replanned = true;
                }
                Err(e) => {
                    self.active = None;
                    return (None, Outcome::Rejected(e.to_string()), false);
                }
            }
        } else if let Some(cmd) = self.active.as_ref().and_then(|a| a.in_flight.clone()) {
            let outcome = self.emit(&cmd, false);
            return (Some(cmd), outcome, false);
        }

        let active = self.active.as_mut().expect("a plan is active here");
        let step = active.plan.steps[active.next].clone();
        active.next += 1;
        let action = self
            .library
            .get(&step.action)
            .expect("validated plans name library actions")
            .clone();
        let command = match execute_flow(&action, &step.args, &self.roschain) {
            Ok(c) => c,
            Err(e) => return (None, Outcome::Rejected(e.to_string()), replanned),
        };
        let outcome = self.emit(&command, true);
        (Some(command), outcome, replanned)
    }

    /// Sends a command: active observations are requested, everything else
    /// is published. Controller commands other than `Idle` stay in flight
    /// until the vehicle settles.
    fn emit(&mut self, command: &Command, first: bool) -> Outcome {
        if first {
            if let Some(retry) = &mut self.retry {
                if retry.rng.random::<f64>() < retry.probability {
                    self.pending_retry = Some(command.clone());
                    return Outcome::Rejected(format!(
                        "malformed command: {}",
                        command.operation.name
                    ));
                }
            }
        }
        let outcome = match command.operation.category {
            CommandCategory::ActiveObserve => match self.roschain.request_observation(command) {
                Ok(p) => Outcome::ServiceResult(p.text),
                Err(e) => Outcome::Rejected(e.to_string()),
            },
            _ => match self.roschain.publish_command(command) {
                Ok(_) => Outcome::Accepted,
                Err(e) => Outcome::Rejected(e.to_string()),
            },
        };
        if outcome.is_accepted() {
            self.trace.push(command.render());
            let holds = command.operation.category == CommandCategory::ControllerCommand
                && !matches!(command.operation.name.as_str(), "Idle" | "Arm" | "Disarm");
            if let Some(active) = &mut self.active {
                active.in_flight = holds.then(|| command.clone());
            }
        }
        outcome
    }

    pub fn roschain(&self) -> &Roschain {
        &self.roschain
    }
}
