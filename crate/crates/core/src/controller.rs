//! The flight controller: a safety state machine over the controller
//! commands plus first-order kinematics toward the active target.

use std::fmt;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::bus::{Bus, BusError, NodeHandle, Payload, QueueConfig, Structured, Value};
use crate::geometry::Vec3;
use crate::roschain::{Command, CommandRegistry, CommandTarget, COMMAND_TOPIC};

pub const ARRIVAL_EPSILON: f64 = 0.1;
pub const DEFAULT_MAX_SPEED: f64 = 5.0;
pub const DEFAULT_TAKEOFF_ALTITUDE: f64 = 10.0;
/// Topic the controller publishes its state on after every tick.
pub const POSE_TOPIC: &str = "pose";
/// Service answering with the latest estimated vehicle state.
pub const ESTIMATOR_SERVICE: &str = "estimator/pose";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("command rejected: {reason}")]
pub struct Rejection {
    pub reason: String,
}

impl Rejection {
    fn new(reason: impl Into<String>) -> Self {
        Self {
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArmState {
    Disarmed,
    Armed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlightMode {
    OnGround,
    TakingOff {
        altitude: f64,
    },
    Hovering,
    MovingTo(Vec3),
    Landing,
    FailsafeLanding,
    /// Hovering with the target cleared.
    Idle,
}

impl FlightMode {
    pub fn name(&self) -> &'static str {
        match self {
            FlightMode::OnGround => "OnGround",
            FlightMode::TakingOff { .. } => "TakingOff",
            FlightMode::Hovering => "Hovering",
            FlightMode::MovingTo(_) => "MovingTo",
            FlightMode::Landing => "Landing",
            FlightMode::FailsafeLanding => "FailsafeLanding",
            FlightMode::Idle => "Idle",
        }
    }

    pub fn is_airborne(&self) -> bool {
        !matches!(self, FlightMode::OnGround)
    }

    /// Modes that still have a target to reach.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            FlightMode::TakingOff { .. }
                | FlightMode::MovingTo(_)
                | FlightMode::Landing
                | FlightMode::FailsafeLanding
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub arm_state: ArmState,
    pub flight_mode: FlightMode,
    pub pose: Vec3,
    /// Heading in radians, counter-clockwise from east.
    pub yaw: f64,
    pub velocity: Vec3,
    pub max_speed: f64,
}

impl VehicleState {
    pub fn on_ground(pose: Vec3) -> Self {
        Self {
            arm_state: ArmState::Disarmed,
            flight_mode: FlightMode::OnGround,
            pose: Vec3::new(pose.x, pose.y, 0.0),
            yaw: 0.0,
            velocity: Vec3::ZERO,
            max_speed: DEFAULT_MAX_SPEED,
        }
    }

    /// Armed and hovering at `pose`.
    pub fn hovering(pose: Vec3) -> Self {
        Self {
            arm_state: ArmState::Armed,
            flight_mode: FlightMode::Hovering,
            pose,
            yaw: 0.0,
            velocity: Vec3::ZERO,
            max_speed: DEFAULT_MAX_SPEED,
        }
    }

    pub fn is_airborne(&self) -> bool {
        self.flight_mode.is_airborne()
    }

    /// The position the vehicle is currently flying toward, if any.
    pub fn target(&self) -> Option<Vec3> {
        match self.flight_mode {
            FlightMode::TakingOff { altitude } => {
                Some(Vec3::new(self.pose.x, self.pose.y, altitude))
            }
            FlightMode::MovingTo(t) => Some(t),
            FlightMode::Landing | FlightMode::FailsafeLanding => {
                Some(Vec3::new(self.pose.x, self.pose.y, 0.0))
            }
            _ => None,
        }
    }

    pub fn to_structured(&self) -> Structured {
        let mut m = Structured::new();
        let arm = match self.arm_state {
            ArmState::Armed => "Armed",
            ArmState::Disarmed => "Disarmed",
        };
        m.insert("arm_state".into(), Value::Text(arm.into()));
        m.insert(
            "flight_mode".into(),
            Value::Text(self.flight_mode.name().into()),
        );
        m.insert("x".into(), Value::Number(self.pose.x));
        m.insert("y".into(), Value::Number(self.pose.y));
        m.insert("z".into(), Value::Number(self.pose.z));
        m.insert("yaw".into(), Value::Number(self.yaw));
        m.insert("vx".into(), Value::Number(self.velocity.x));
        m.insert("vy".into(), Value::Number(self.velocity.y));
        m.insert("vz".into(), Value::Number(self.velocity.z));
        m.insert("max_speed".into(), Value::Number(self.max_speed));
        if let Some(t) = self.target() {
            m.insert("target_x".into(), Value::Number(t.x));
            m.insert("target_y".into(), Value::Number(t.y));
            m.insert("target_z".into(), Value::Number(t.z));
        }
        m
    }
}

/// Reads the pose fields written by [`VehicleState::to_structured`].
pub fn pose_from_structured(m: &Structured) -> Option<(Vec3, f64)> {
    let get = |k: &str| m.get(k).and_then(Value::as_f64);
    Some((
        Vec3::new(get("x")?, get("y")?, get("z")?),
        get("yaw").unwrap_or(0.0),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControllerCommand {
    MoveEnu(Vec3),
    MoveBody(Vec3),
    Takeoff { altitude: f64 },
    Land,
    Arm,
    Disarm,
    FailsafeLand,
    Idle,
}

impl ControllerCommand {
    pub fn name(&self) -> &'static str {
        match self {
            ControllerCommand::MoveEnu(_) => "Move_ENU",
            ControllerCommand::MoveBody(_) => "Move_Body",
            ControllerCommand::Takeoff { .. } => "Takeoff",
            ControllerCommand::Land => "Land",
            ControllerCommand::Arm => "Arm",
            ControllerCommand::Disarm => "Disarm",
            ControllerCommand::FailsafeLand => "Failsafe_land",
            ControllerCommand::Idle => "Idle",
        }
    }

    pub fn from_command(cmd: &Command) -> Result<Self, Rejection> {
        if cmd.target != CommandTarget::Controller {
            return Err(Rejection::new(format!(
                "{} is not a controller command",
                cmd.operation.name
            )));
        }
        let xyz = || -> Result<Vec3, Rejection> {
            match (cmd.param_f64("x"), cmd.param_f64("y"), cmd.param_f64("z")) {
                (Some(x), Some(y), Some(z)) => Ok(Vec3::new(x, y, z)),
                _ => Err(Rejection::new("missing x/y/z")),
            }
        };
        Ok(match cmd.operation.name.as_str() {
            "Move_ENU" => ControllerCommand::MoveEnu(xyz()?),
            "Move_Body" => ControllerCommand::MoveBody(xyz()?),
            "Takeoff" => ControllerCommand::Takeoff {
                altitude: cmd
                    .param_f64("altitude_m")
                    .unwrap_or(DEFAULT_TAKEOFF_ALTITUDE),
            },
            "Land" => ControllerCommand::Land,
            "Arm" => ControllerCommand::Arm,
            "Disarm" => ControllerCommand::Disarm,
            "Failsafe_land" => ControllerCommand::FailsafeLand,
            "Idle" => ControllerCommand::Idle,
            other => {
                return Err(Rejection::new(format!(
                    "unknown controller command {other}"
                )))
            }
        })
    }
}

/// Rotates a body-frame offset by the current yaw into an ENU target.
pub fn resolve_body_frame(
    state: &VehicleState,
    dx: f64,
    dy: f64,
    dz: f64,
) -> Result<Vec3, Rejection> {
    if !state.is_airborne() {
        return Err(Rejection::new("body-frame moves need an airborne vehicle"));
    }
    let (s, c) = state.yaw.sin_cos();
    Ok(Vec3::new(
        state.pose.x + c * dx - s * dy,
        state.pose.y + s * dx + c * dy,
        state.pose.z + dz,
    ))
}

fn move_target(target: Vec3) -> Result<Vec3, Rejection> {
    if !target.is_finite() {
        return Err(Rejection::new("target is not finite"));
    }
    Ok(Vec3::new(target.x, target.y, target.z.max(0.0)))
}

/// Applies one command to the state machine.
pub fn handle_command(
    state: &VehicleState,
    cmd: &ControllerCommand,
) -> Result<VehicleState, Rejection> {
    use FlightMode::*;
    let mut next = *state;
    let mode = state.flight_mode;
    if mode == FailsafeLanding && *cmd != ControllerCommand::FailsafeLand {
        return Err(Rejection::new("failsafe landing in progress"));
    }
    match *cmd {
        ControllerCommand::Arm => {
            if state.arm_state != ArmState::Disarmed || mode != OnGround {
                return Err(Rejection::new(
                    "arm requires a disarmed vehicle on the ground",
                ));
            }
            next.arm_state = ArmState::Armed;
        }
        ControllerCommand::Disarm => {
            if mode != OnGround {
                return Err(Rejection::new("disarm requires the vehicle on the ground"));
            }
            next.arm_state = ArmState::Disarmed;
        }
        ControllerCommand::Takeoff { altitude } => {
            if state.arm_state != ArmState::Armed || mode != OnGround {
                return Err(Rejection::new(
                    "takeoff requires an armed vehicle on the ground",
                ));
            }
            if !(altitude.is_finite() && altitude > ARRIVAL_EPSILON) {
                return Err(Rejection::new("takeoff altitude must be positive"));
            }
            next.flight_mode = TakingOff { altitude };
        }
        ControllerCommand::MoveEnu(t) => {
            if !matches!(mode, Hovering | MovingTo(_) | Idle) {
                return Err(Rejection::new(format!("cannot move while {}", mode.name())));
            }
            next.flight_mode = MovingTo(move_target(t)?);
        }
        ControllerCommand::MoveBody(off) => {
            if !matches!(mode, Hovering | MovingTo(_) | Idle) {
                return Err(Rejection::new(format!("cannot move while {}", mode.name())));
            }
            let t = resolve_body_frame(state, off.x, off.y, off.z)?;
            next.flight_mode = MovingTo(move_target(t)?);
        }
        ControllerCommand::Land => {
            if !mode.is_airborne() {
                return Err(Rejection::new("already on the ground"));
            }
            next.flight_mode = Landing;
        }
        ControllerCommand::FailsafeLand => {
            if !mode.is_airborne() {
                return Err(Rejection::new("already on the ground"));
            }
            next.flight_mode = FailsafeLanding;
        }
        ControllerCommand::Idle => {
            if mode.is_airborne() {
                next.flight_mode = Idle;
                next.velocity = Vec3::ZERO;
            }
        }
    }
    Ok(next)
}

/// Advances the kinematics by `dt` seconds. Non-positive `dt` is a no-op.
pub fn tick(state: &VehicleState, dt: f64) -> VehicleState {
    let mut next = *state;
    if !(dt > 0.0) {
        return next;
    }
    let Some(target) = state.target() else {
        next.velocity = Vec3::ZERO;
        return next;
    };
    let delta = target - state.pose;
    let distance = delta.norm();
    let reach = state.max_speed * dt;
    if distance <= reach {
        next.pose = target;
        next.velocity = if distance > 0.0 {
            delta * (1.0 / dt)
        } else {
            Vec3::ZERO
        };
    } else {
        let step = delta * (reach / distance);
        next.pose = state.pose + step;
        next.velocity = step * (1.0 / dt);
    }
    if next.pose.distance(target) <= ARRIVAL_EPSILON {
        next.flight_mode = match state.flight_mode {
            FlightMode::Landing | FlightMode::FailsafeLanding => FlightMode::OnGround,
            _ if target.z <= ARRIVAL_EPSILON => FlightMode::OnGround,
            _ => FlightMode::Hovering,
        };
        if next.flight_mode == FlightMode::OnGround {
            next.pose.z = next.pose.z.max(0.0);
        }
    }
    next
}

/// Controller node: applies controller commands from the command topic to a
/// shared [`VehicleState`] and publishes the state on [`POSE_TOPIC`] each tick.
#[derive(Clone)]
pub struct ControllerNode {
    bus: Bus,
    node: NodeHandle,
    state: Arc<Mutex<VehicleState>>,
    log: Arc<Mutex<Vec<ControllerEvent>>>,
}

impl fmt::Debug for ControllerNode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControllerNode")
            .field("state", &self.state())
            .finish_non_exhaustive()
    }
}

/// Outcome of one command delivered to the controller.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerEvent {
    pub tick: u64,
    pub command: String,
    pub result: Result<(), Rejection>,
}

impl ControllerNode {
    pub fn attach(bus: &Bus, node_id: &str, initial: VehicleState) -> Result<Self, BusError> {
        let node = bus.register_node(node_id)?;
        let state = Arc::new(Mutex::new(initial));
        let log = Arc::new(Mutex::new(Vec::new()));
        let registry = CommandRegistry::standard();
        let (s, l) = (state.clone(), log.clone());
        bus.subscribe(&node, COMMAND_TOPIC, QueueConfig::default(), move |env| {
            let Ok(cmd) = Command::from_payload(&env.payload, &registry) else {
                return;
            };
            if cmd.target != CommandTarget::Controller {
                return;
            }
            let mut state = s.lock().unwrap_or_else(|e| e.into_inner());
            let result = ControllerCommand::from_command(&cmd)
                .and_then(|c| handle_command(&state, &c))
                .map(|next| *state = next);
            l.lock()
                .unwrap_or_else(|e| e.into_inner())
                .push(ControllerEvent {
                    tick: env.timestamp,
                    command: cmd.operation.name.clone(),
                    result,
                });
        })?;
        Ok(Self {
            bus: bus.clone(),
            node,
            state,
            log,
        })
    }

    pub fn state(&self) -> VehicleState {
        *self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn set_state(&self, state: VehicleState) {
        *self.state.lock().unwrap_or_else(|e| e.into_inner()) = state;
    }

    pub fn events(&self) -> Vec<ControllerEvent> {
        self.log.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Advances the kinematics and publishes the new state.
    pub fn tick(&self, dt: f64) -> Result<VehicleState, BusError> {
        let next = {
            let mut state = self.state.lock().unwrap_or_else(|e| e.into_inner());
            *state = tick(&state, dt);
            *state
        };
        self.publish_state()?;
        Ok(next)
    }

    pub fn publish_state(&self) -> Result<(), BusError> {
        let state = self.state();
        self.bus.publish(
            &self.node,
            POSE_TOPIC,
            Payload::Structured(state.to_structured()),
        )?;
        Ok(())
    }
}

/// Estimator node: caches the controller's latest published state and serves
/// it on [`ESTIMATOR_SERVICE`].
#[derive(Debug, Clone)]
pub struct EstimatorNode {
    latest: Arc<Mutex<Option<Structured>>>,
}

impl EstimatorNode {
    pub fn attach(bus: &Bus, node_id: &str) -> Result<Self, BusError> {
        let node = bus.register_node(node_id)?;
        let latest: Arc<Mutex<Option<Structured>>> = Arc::new(Mutex::new(None));
        let sink = latest.clone();
        bus.subscribe(&node, POSE_TOPIC, QueueConfig::default(), move |env| {
            if let Some(m) = env.payload.as_structured() {
                *sink.lock().unwrap_or_else(|e| e.into_inner()) = Some(m.clone());
            }
        })?;
        let source = latest.clone();
        bus.advertise_service(&node, ESTIMATOR_SERVICE, move |_| {
            source
                .lock()
                .unwrap_or_else(|e| e.into_inner())
                .clone()
                .map(Payload::Structured)
                .ok_or_else(|| "no pose estimate yet".to_string())
        })?;
        Ok(Self { latest })
    }

    pub fn latest(&self) -> Option<Structured> {
        self.latest
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .clone()
    }
}
