//! Experiment runner: wires the bus, controller, agent and a scenario world,
//! steps them together and scores the run.

pub mod bridge;
mod compare;
pub mod nodes;

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use compare::{compare, default_configs, ComparisonRow, ComparisonTable};

use crate::actions::{ActionLibrary, PayloadConfiguration};
use crate::agent::{
    Agent, AgentConfig, AgentError, ExternalBackend, RandomBackend, ReasonerBackend, RetryModel,
    ScriptedBackend, SingleCall, DEFAULT_PROMPT,
};
use crate::bus::{Bus, BusError};
use crate::controller::{ControllerNode, EstimatorNode, VehicleState};
use crate::roschain::{Roschain, RoschainError};
use crate::scenarios::{Layout, RewardLedger, ScenarioId, World, MOVE_BOUND};
use bridge::scored_actions;
use nodes::{ActuatorNode, CameraNode, SensorNode};

pub const DEFAULT_MAX_STEPS: u64 = 200;
pub const DEFAULT_TICK_DT: f64 = 1.0;
/// Probability that a command is malformed on first emission without the
/// command adapter.
pub const NO_ROSCHAIN_RETRY_PROBABILITY: f64 = 0.3;
/// Seeds every scenario is evaluated on.
pub const SHIPPED_SEEDS: std::ops::Range<u64> = 0..10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ScriptedFull,
    ScriptedNoRoschain,
    SingleCall,
    RandomBaseline,
    External,
}

impl BackendKind {
    /// Backends that run without network access, in table order.
    pub const OFFLINE: [BackendKind; 4] = [
        BackendKind::ScriptedFull,
        BackendKind::ScriptedNoRoschain,
        BackendKind::SingleCall,
        BackendKind::RandomBaseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BackendKind::ScriptedFull => "scripted_full",
            BackendKind::ScriptedNoRoschain => "scripted_no_roschain",
            BackendKind::SingleCall => "single_call",
            BackendKind::RandomBaseline => "random_baseline",
            BackendKind::External => "external",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::OFFLINE
            .into_iter()
            .chain([BackendKind::External])
            .find(|b| b.name() == name)
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Bus(#[from] BusError),
    #[error(transparent)]
    Roschain(#[from] RoschainError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioId,
    pub backend: BackendKind,
    pub seed: u64,
    pub max_steps: u64,
    /// Seconds of simulated time per step.
    pub tick_dt: f64,
    pub max_speed: f64,
    /// Perturb scene bearings and distances.
    pub noise: bool,
    /// Publish from several threads on the thread-safe bus.
    pub concurrent: bool,
    /// Layout file replacing the shipped one.
    pub layout: Option<PathBuf>,
    /// Directory receiving the run artifacts.
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(scenario: ScenarioId, backend: BackendKind, seed: u64) -> Self {
        Self {
            scenario,
            backend,
            seed,
            max_steps: DEFAULT_MAX_STEPS,
            tick_dt: DEFAULT_TICK_DT,
            max_speed: crate::controller::DEFAULT_MAX_SPEED,
            noise: false,
            concurrent: false,
            layout: None,
            out_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.max_steps < 1 {
            return bad("max_steps must be at least 1".into());
        }
        if !(self.tick_dt.is_finite() && self.tick_dt > 0.0) {
            return bad(format!("tick_dt must be positive, got {}", self.tick_dt));
        }
        if !(self.max_speed.is_finite() && self.max_speed > 0.0) {
            return bad(format!(
                "max_speed must be positive, got {}",
                self.max_speed
            ));
        }
        if self.max_speed * self.tick_dt > MOVE_BOUND + 1e-9 {
            return bad(format!(
                "max_speed * tick_dt = {} exceeds the per-step move bound {MOVE_BOUND}",
                self.max_speed * self.tick_dt
            ));
        }
        Ok(())
    }
}

/// One line of the trajectory log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEntry {
    pub step: u64,
    pub pose: [f64; 3],
    /// Scored action labels; inadmissible ones are prefixed with `invalid:`.
    pub action: Vec<String>,
    pub reward_delta: f64,
    pub cumulative_normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: ScenarioId,
    pub backend: BackendKind,
    pub seed: u64,
    #[serde(rename = "TR")]
    pub tr: f64,
    #[serde(rename = "AR")]
    pub ar: f64,
    pub step_count: u64,
    pub ledger: RewardLedger,
    /// SHA-256 of the newline-joined command trace.
    pub command_trace_digest: String,
    pub command_trace: Vec<String>,
    #[serde(skip)]
    pub trajectory: Vec<TrajectoryEntry>,
    #[serde(skip)]
    pub bus_trace: String,
}

impl RunReport {
    pub fn trajectory_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.trajectory {
            out.push_str(&serde_json::to_string(e).expect("trajectory entries serialize"));
            out.push('\n');
        }
        out
    }
}

pub fn digest(lines: &[String]) -> String {
    hex::encode(Sha256::digest(lines.join("\n").as_bytes()))
}

fn make_backend(
    config: &RunConfig,
) -> Result<(Box<dyn ReasonerBackend>, Option<RetryModel>), HarnessError> {
    let scripted = ScriptedBackend::new(config.scenario);
    Ok(match config.backend {
        BackendKind::ScriptedFull => (Box::new(scripted), None),
        BackendKind::ScriptedNoRoschain => (
            Box::new(scripted),
            Some(RetryModel::new(NO_ROSCHAIN_RETRY_PROBABILITY, config.seed)),
        ),
        BackendKind::SingleCall => (Box::new(SingleCall::new(scripted)), None),
        BackendKind::RandomBaseline => (Box::new(RandomBackend::new(config.seed)), None),
        BackendKind::External => (Box::new(ExternalBackend::from_env()?), None),
    })
}

/// Runs one episode until the world reports done or the step budget is spent.
pub fn run(config: &RunConfig) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let layout = match &config.layout {
        Some(path) => Layout::from_file(path).map_err(|e| HarnessError::Config(e.to_string()))?,
        None => Layout::shipped(config.scenario),
    };
    if layout.scenario != config.scenario {
        return Err(HarnessError::Config(format!(
            "layout is for {}, not {}",
            layout.scenario, config.scenario
        )));
    }
    let (backend, retry) = make_backend(config)?;

    let bus = if config.out_dir.is_some() {
        Bus::with_tracing()
    } else {
        Bus::new()
    };
    let world = Arc::new(Mutex::new(World::from_layout(
        layout,
        config.seed,
        config.noise,
    )));
    let start = world.lock().unwrap_or_else(|p| p.into_inner()).start();
    let mut initial = VehicleState::hovering(start);
    initial.max_speed = config.max_speed;
    let controller = ControllerNode::attach(&bus, "controller", initial)?;
    let _estimator = EstimatorNode::attach(&bus, "estimator")?;
    let camera = CameraNode::attach(&bus, "camera")?;
    let events = Arc::new(Mutex::new(Vec::new()));
    let _sensor = SensorNode::attach(&bus, "sensor", world.clone(), events.clone())?;
    let actuator = ActuatorNode::attach(&bus, "actuator", events)?;

    let roschain = Roschain::new(bus.clone(), "agent")?;
    let agent_config = AgentConfig {
        task: config.scenario.task().to_string(),
        prompt: DEFAULT_PROMPT.to_string(),
        payloads: PayloadConfiguration::new(config.scenario.payloads().iter().copied())
            .map_err(|e| HarnessError::Config(e.to_string()))?,
        keywords: config
            .scenario
            .keywords()
            .iter()
            .map(|k| k.to_string())
            .collect(),
    };
    let mut agent = Agent::new(roschain, ActionLibrary::shipped(), agent_config, backend)?;
    if let Some(model) = retry {
        agent = agent.with_retry_model(model);
    }

    controller.publish_state()?;
    bus.spin_once();

    let lock =
        |w: &Arc<Mutex<World>>| -> World { w.lock().unwrap_or_else(|p| p.into_inner()).clone() };
    let mut trajectory = Vec::new();
    let mut steps = 0;
    while steps < config.max_steps {
        bus.advance_clock();
        let obs = lock(&world).observe();
        if config.concurrent {
            std::thread::scope(|s| -> Result<(), BusError> {
                let image = s.spawn(|| camera.publish_image(&obs));
                camera.publish_scene(&obs)?;
                image.join().expect("camera thread")?;
                Ok(())
            })?;
        } else {
            camera.publish_scene(&obs)?;
            camera.publish_image(&obs)?;
        }
        bus.spin_once();

        let outcome = agent.step();
        bus.spin_once();

        let before = controller.state();
        let after = if config.concurrent {
            std::thread::scope(|s| {
                s.spawn(|| controller.tick(config.tick_dt))
                    .join()
                    .expect("controller thread")
            })?
        } else {
            controller.tick(config.tick_dt)?
        };

        let mut w = world.lock().unwrap_or_else(|p| p.into_inner());
        let node_events = actuator.drain();
        let mut labels = Vec::new();
        let mut delta = 0.0;
        for action in scored_actions(config.scenario, &before, &after, w.drone, &node_events) {
            match w.apply_action(&action) {
                Ok(points) => {
                    delta += points;
                    labels.push(action.label());
                }
                Err(_) => labels.push(format!("invalid:{}", action.label())),
            }
        }
        w.set_yaw(after.yaw);
        w.tick();
        trajectory.push(TrajectoryEntry {
            step: outcome.step,
            pose: [w.drone.x, w.drone.y, w.drone.z],
            action: labels,
            reward_delta: delta,
            cumulative_normalized: w.ledger().normalized(),
        });
        steps += 1;
        if w.is_done() {
            break;
        }
    }

    let w = lock(&world);
    let tr = w.ledger().normalized();
    let report = RunReport {
        scenario: config.scenario,
        backend: config.backend,
        seed: config.seed,
        tr,
        ar: tr / steps as f64,
        step_count: steps,
        ledger: w.ledger().clone(),
        command_trace_digest: digest(agent.command_trace()),
        command_trace: agent.command_trace().to_vec(),
        trajectory,
        bus_trace: bus.trace_jsonl(),
    };
    if let Some(dir) = &config.out_dir {
        write_artifacts(&report, dir)?;
    }
    Ok(report)
}

/// Same policy with every command passing through the malformed-command retry loop.
pub fn ablation_no_roschain(config: &RunConfig) -> Result<RunReport, HarnessError> {
    let mut c = config.clone();
    c.backend = BackendKind::ScriptedNoRoschain;
    run(&c)
}

pub fn emit_trajectory(report: &RunReport, path: &Path) -> Result<(), HarnessError> {
    std::fs::write(path, report.trajectory_jsonl())?;
    Ok(())
}

/// Writes report.json, ledger.csv, trajectory.jsonl and bus_trace.jsonl.
pub fn write_artifacts(report: &RunReport, dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)?;
    let mut f = std::fs::File::create(dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut f, report)?;
    writeln!(f)?;
    std::fs::write(dir.join("ledger.csv"), report.ledger.to_csv())?;
    emit_trajectory(report, &dir.join("trajectory.jsonl"))?;
    std::fs::write(dir.join("bus_trace.jsonl"), &report.bus_trace)?;
    Ok(())
}
