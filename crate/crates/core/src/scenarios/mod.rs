//! Deterministic symbolic worlds for the four evaluation scenarios.
//!
//! A [`World`] holds the entity layout, the mirrored drone pose and the
//! [`RewardLedger`]. The harness feeds it [`ScoredAction`]s derived from what
//! actually happened on the bus (pose changes, reports, kit drops) and reads
//! back [`Observation`]s.

mod layout;
mod render;
mod scoring;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bus::{Structured, Value};
use crate::geometry::Vec3;
use crate::roschain::CommandTarget;

pub use layout::{Entity, EntityKind, Layout, LayoutError};
pub use render::{render_scene, IMAGE_SIDE};
pub use scoring::{
    approach_reward, landing_reward, match_score, point_in_polygon, FaultDescription, LedgerItem,
    RewardLedger,
};

/// Horizontal distance within which fire details become visible.
pub const FIRE_DETAIL_RANGE: f64 = 30.0;
/// Horizontal distance within which people on the ground are visible.
pub const PERSON_RANGE: f64 = 20.0;
/// Approach credit saturates at this horizontal distance from the fire.
pub const APPROACH_FULL_CREDIT_DISTANCE: f64 = 3.0;
pub const BUILDING_RANGE: f64 = 60.0;
/// Altitude below which a drone inside a footprint counts as having entered.
pub const ENTRY_ALTITUDE: f64 = 3.0;
/// Footprints smaller than this are not safe to enter.
pub const MIN_ENTRY_AREA: f64 = 50.0;
/// Per-axis bound on one tick's displacement.
pub const MOVE_BOUND: f64 = 5.0;
/// Blade phase advance per tick for a rotating turbine.
pub const TURBINE_PHASE_STEP: f64 = 45.0;
pub const DOWNWARD_RANGE: f64 = 15.0;
pub const INFRARED_RANGE: f64 = 40.0;
pub const MAX_KIT_OPTION: u32 = 3;
pub const MAX_TRAPPED_OPTION: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Wildfire,
    Landing,
    Inspection,
    #[serde(rename = "safenav")]
    SafeNav,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 4] = [
        ScenarioId::Wildfire,
        ScenarioId::Landing,
        ScenarioId::Inspection,
        ScenarioId::SafeNav,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Wildfire => "wildfire",
            ScenarioId::Landing => "landing",
            ScenarioId::Inspection => "inspection",
            ScenarioId::SafeNav => "safenav",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }

    /// Maximum raw score of the scenario.
    pub fn raw_max(self) -> f64 {
        match self {
            ScenarioId::Wildfire => 68.0,
            ScenarioId::Landing => 20.0,
            ScenarioId::Inspection => 10.0,
            ScenarioId::SafeNav => 90.0,
        }
    }

    /// Mission statement given to the agent.
    pub fn task(self) -> &'static str {
        match self {
            ScenarioId::Wildfire => {
                "A wildfire is burning in the forest ahead. Locate the fire, keep the ground \
                 command informed, and help anyone trapped near it."
            }
            ScenarioId::Landing => "Land on the helipad below, as close to its center as possible.",
            ScenarioId::Inspection => {
                "Inspect each wind turbine on the farm and report any fault to the ground command."
            }
            ScenarioId::SafeNav => {
                "Explore the industrial complex and enter as many buildings as can be entered safely."
            }
        }
    }

    /// Payload tags mounted for the mission.
    pub fn payloads(self) -> &'static [&'static str] {
        match self {
            ScenarioId::Wildfire => &[
                "loudspeaker",
                "manipulator",
                "radio_link",
                "infrared_camera",
                "downward_camera",
            ],
            ScenarioId::Landing => &["downward_camera", "depth_camera"],
            ScenarioId::Inspection => &["radio_link", "downward_camera"],
            ScenarioId::SafeNav => &["lidar", "depth_camera"],
        }
    }

    /// Keywords added to the memory salience list for this scenario.
    pub fn keywords(self) -> &'static [&'static str] {
        match self {
            ScenarioId::Inspection => &["turbine"],
            _ => &[],
        }
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("action {action} is not admissible in {scenario}: {reason}")]
    InvalidAction {
        scenario: ScenarioId,
        action: String,
        reason: String,
    },
    #[error(transparent)]
    Layout(#[from] LayoutError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Proximity {
    Close,
    Medium,
    Distant,
}

/// Scenario-level interpretation of something the drone did during one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScoredAction {
    /// Displacement over one tick.
    Move {
        delta: Vec3,
    },
    /// Discrete navigation choice; scored through the resulting moves.
    Navigate {
        proximity: Proximity,
    },
    ReportIgnition,
    ReportTrapped {
        count: u32,
    },
    EstablishCommunication,
    DispatchKits {
        count: u32,
    },
    ActivateSensor {
        sensor: CommandTarget,
    },
    /// Free-text report to the ground (inspection).
    Report {
        text: String,
    },
    Touchdown,
    Hold,
}

impl ScoredAction {
    pub fn kind(&self) -> ActionKind {
        match self {
            ScoredAction::Move { .. } => ActionKind::Move,
            ScoredAction::Navigate { .. } => ActionKind::Navigate,
            ScoredAction::ReportIgnition => ActionKind::ReportIgnition,
            ScoredAction::ReportTrapped { .. } => ActionKind::ReportTrapped,
            ScoredAction::EstablishCommunication => ActionKind::EstablishCommunication,
            ScoredAction::DispatchKits { .. } => ActionKind::DispatchKits,
            ScoredAction::ActivateSensor { .. } => ActionKind::ActivateSensor,
            ScoredAction::Report { .. } => ActionKind::Report,
            ScoredAction::Touchdown => ActionKind::Touchdown,
            ScoredAction::Hold => ActionKind::Hold,
        }
    }

    pub fn label(&self) -> String {
        match self {
            ScoredAction::Move { delta } => {
                format!("move({:.3},{:.3},{:.3})", delta.x, delta.y, delta.z)
            }
            ScoredAction::Navigate { proximity } => format!("navigate({proximity:?})"),
            ScoredAction::ReportIgnition => "report_ignition".into(),
            ScoredAction::ReportTrapped { count } => format!("report_trapped({count})"),
            ScoredAction::EstablishCommunication => "establish_communication".into(),
            ScoredAction::DispatchKits { count } => format!("dispatch_kits({count})"),
            ScoredAction::ActivateSensor { sensor } => {
                format!("activate_sensor({})", sensor.name())
            }
            ScoredAction::Report { text } => format!("report({text})"),
            ScoredAction::Touchdown => "touchdown".into(),
            ScoredAction::Hold => "hold".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActionKind {
    Move,
    Navigate,
    ReportIgnition,
    ReportTrapped,
    EstablishCommunication,
    DispatchKits,
    ActivateSensor,
    Report,
    Touchdown,
    Hold,
}

/// What a scenario accepts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibleSet {
    pub kinds: Vec<ActionKind>,
    /// Per-axis bound on a move.
    pub move_bound: f64,
}

impl AdmissibleSet {
    pub fn allows(&self, kind: ActionKind) -> bool {
        self.kinds.contains(&kind)
    }
}

pub fn admissible_actions(id: ScenarioId) -> AdmissibleSet {
    use ActionKind::*;
    let kinds = match id {
        ScenarioId::Wildfire => vec![
            Move,
            Navigate,
            ReportIgnition,
            ReportTrapped,
            EstablishCommunication,
            DispatchKits,
            ActivateSensor,
            Hold,
        ],
        ScenarioId::Landing | ScenarioId::SafeNav => vec![Move, ActivateSensor, Touchdown, Hold],
        ScenarioId::Inspection => vec![Move, Report, ActivateSensor, Hold],
    };
    AdmissibleSet {
        kinds,
        move_bound: MOVE_BOUND,
    }
}

/// Per-entity mutable state.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityFlags {
    pub reported: bool,
    pub reassured: bool,
    pub kits_received: u32,
    pub entered: bool,
    pub phase_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityState {
    pub entity: Entity,
    pub flags: EntityFlags,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Progress {
    approach: f64,
    ignition_reported: bool,
    trapped: f64,
    communication: f64,
    kits: f64,
    inspection: f64,
    touchdown: Option<Vec3>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub tick: u64,
    pub drone: Vec3,
    pub scene: Structured,
    pub image: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub scenario: ScenarioId,
    pub entities: Vec<EntityState>,
    pub tick: u64,
    pub rng_seed: u64,
    pub noise: bool,
    pub drone: Vec3,
    pub drone_yaw: f64,
    start: Vec3,
    start_fire_distance: f64,
    progress: Progress,
    ledger: RewardLedger,
}

impl World {
    /// Fresh world from the shipped layout, noise off.
    pub fn reset(scenario: ScenarioId, seed: u64) -> Self {
        Self::from_layout(Layout::shipped(scenario), seed, false)
    }

    pub fn from_layout(layout: Layout, seed: u64, noise: bool) -> Self {
        let scenario = layout.scenario;
        let entities: Vec<EntityState> = layout
            .entities
            .into_iter()
            .map(|entity| EntityState {
                flags: EntityFlags::default(),
                entity,
            })
            .collect();
        let start_fire_distance = entities
            .iter()
            .find(|e| matches!(e.entity.kind, EntityKind::FireSource))
            .map(|e| layout.start.horizontal_distance(e.entity.position))
            .unwrap_or(0.0);
        let mut world = Self {
            scenario,
            entities,
            tick: 0,
            rng_seed: seed,
            noise,
            drone: layout.start,
            drone_yaw: 0.0,
            start: layout.start,
            start_fire_distance,
            progress: Progress::default(),
            ledger: RewardLedger::new(scenario.raw_max()),
        };
        world.update_position_credit();
        world
    }

    pub fn start(&self) -> Vec3 {
        self.start
    }

    pub fn ledger(&self) -> &RewardLedger {
        &self.ledger
    }

    pub fn touched_down(&self) -> bool {
        self.progress.touchdown.is_some()
    }

    pub fn entity(&self, id: &str) -> Option<&EntityState> {
        self.entities.iter().find(|e| e.entity.id == id)
    }

    /// Mirrors the controller's yaw.
    pub fn set_yaw(&mut self, yaw: f64) {
        self.drone_yaw = yaw;
    }

    /// Advances world time by one tick.
    pub fn tick(&mut self) {
        self.tick += 1;
        for e in &mut self.entities {
            if let EntityKind::Turbine { rotating: true, .. } = e.entity.kind {
                e.flags.phase_deg = (e.flags.phase_deg + TURBINE_PHASE_STEP) % 360.0;
            }
        }
    }

    fn visible(&self, e: &EntityState) -> bool {
        let d = self.drone.horizontal_distance(e.entity.position);
        match e.entity.kind {
            EntityKind::TrappedGroup { .. } | EntityKind::Firefighter => d < PERSON_RANGE,
            EntityKind::Building { .. } => d < BUILDING_RANGE,
            EntityKind::Obstacle { radius } => d < PERSON_RANGE + radius,
            EntityKind::FireSource | EntityKind::Helipad { .. } | EntityKind::Turbine { .. } => {
                true
            }
        }
    }

    fn state_word(&self, e: &EntityState) -> &'static str {
        match e.entity.kind {
            EntityKind::FireSource => {
                if self.drone.horizontal_distance(e.entity.position) < FIRE_DETAIL_RANGE {
                    "burning"
                } else {
                    "obscured"
                }
            }
            EntityKind::TrappedGroup { .. } => "waving",
            EntityKind::Firefighter => "working",
            EntityKind::Helipad { .. } => "marked",
            EntityKind::Turbine { .. } => "standing",
            EntityKind::Building { .. } => "standing",
            EntityKind::Obstacle { .. } => "static",
        }
    }

    /// Current observation. Identical world states give identical bytes.
    pub fn observe(&self) -> Observation {
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.rng_seed ^ self.tick.wrapping_mul(0x9e37_79b9_7f4a_7c15),
        );
        let mut scene = Structured::new();
        let num = |v: f64| Value::Number(round3(v));
        scene.insert("drone.x".into(), num(self.drone.x));
        scene.insert("drone.y".into(), num(self.drone.y));
        scene.insert("drone.z".into(), num(self.drone.z));
        scene.insert("drone.yaw".into(), num(self.drone_yaw));
        scene.insert("tick".into(), Value::Number(self.tick as f64));
        for e in self.entities.iter().filter(|e| self.visible(e)) {
            let p = e.entity.position;
            let mut bearing = self.drone.bearing_to(p);
            let mut distance = self.drone.horizontal_distance(p);
            if self.noise {
                bearing = (bearing + rng.random_range(-1.0..=1.0) + 360.0) % 360.0;
                distance *= 1.0 + rng.random_range(-0.02..=0.02);
            }
            let key = |k: &str| format!("entity.{}.{k}", e.entity.id);
            scene.insert(key("kind"), Value::Text(e.entity.kind.name().into()));
            scene.insert(key("bearing_deg"), num(bearing));
            scene.insert(key("distance"), num(distance));
            scene.insert(key("state"), Value::Text(self.state_word(e).into()));
            match &e.entity.kind {
                EntityKind::TrappedGroup { size } => {
                    scene.insert(key("size"), Value::Number(f64::from(*size)));
                }
                EntityKind::Helipad { radius } | EntityKind::Obstacle { radius } => {
                    scene.insert(key("radius"), num(*radius));
                }
                EntityKind::Turbine { side, .. } => {
                    scene.insert(key("side"), Value::Text(side.clone()));
                    scene.insert(key("phase_deg"), num(e.flags.phase_deg));
                }
                EntityKind::Building { .. } => {
                    scene.insert(key("area"), num(e.entity.kind.footprint_area()));
                }
                EntityKind::FireSource | EntityKind::Firefighter => {}
            }
        }
        Observation {
            tick: self.tick,
            drone: self.drone,
            image: render_scene(self),
            scene,
        }
    }

    /// Response of an active-observation sensor.
    pub fn sense(&self, sensor: CommandTarget) -> Structured {
        let mut out = Structured::new();
        out.insert("sensor".into(), Value::Text(sensor.name().into()));
        out.insert("tick".into(), Value::Number(self.tick as f64));
        for e in &self.entities {
            let p = e.entity.position;
            let h = self.drone.horizontal_distance(p);
            let key = |k: &str| format!("entity.{}.{k}", e.entity.id);
            match sensor {
                CommandTarget::DownwardCamera if h < DOWNWARD_RANGE => {
                    out.insert(key("kind"), Value::Text(e.entity.kind.name().into()));
                    out.insert(key("dx"), Value::Number(round3(p.x - self.drone.x)));
                    out.insert(key("dy"), Value::Number(round3(p.y - self.drone.y)));
                }
                CommandTarget::DepthCamera if self.visible(e) => {
                    out.insert(key("range"), Value::Number(round3(self.drone.distance(p))));
                }
                CommandTarget::InfraredCamera if h < INFRARED_RANGE => {
                    let heat = match e.entity.kind {
                        EntityKind::FireSource => "flame",
                        EntityKind::TrappedGroup { .. } | EntityKind::Firefighter => "body",
                        _ => continue,
                    };
                    out.insert(key("heat"), Value::Text(heat.into()));
                    out.insert(
                        key("bearing_deg"),
                        Value::Number(round3(self.drone.bearing_to(p))),
                    );
                    out.insert(key("distance"), Value::Number(round3(h)));
                }
                CommandTarget::Lidar if self.visible(e) => {
                    out.insert(key("range"), Value::Number(round3(self.drone.distance(p))));
                }
                _ => {}
            }
        }
        out
    }

    fn invalid(&self, action: &ScoredAction, reason: impl Into<String>) -> ScenarioError {
        ScenarioError::InvalidAction {
            scenario: self.scenario,
            action: action.label(),
            reason: reason.into(),
        }
    }

    fn credit(&mut self, label: String, points: f64) -> f64 {
        if points != 0.0 {
            self.ledger.push(label, points);
        }
        points
    }

    /// Nearest trapped group or firefighter within person range, by index.
    fn nearest_person(&self) -> Option<usize> {
        self.entities
            .iter()
            .enumerate()
            .filter(|(_, e)| {
                matches!(
                    e.entity.kind,
                    EntityKind::TrappedGroup { .. } | EntityKind::Firefighter
                )
            })
            .map(|(i, e)| (i, self.drone.horizontal_distance(e.entity.position)))
            .filter(|(_, d)| *d < PERSON_RANGE)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .map(|(i, _)| i)
    }

    fn update_position_credit(&mut self) -> f64 {
        let mut gained = 0.0;
        match self.scenario {
            ScenarioId::Wildfire => {
                if let Some(fire) = self
                    .entities
                    .iter()
                    .find(|e| matches!(e.entity.kind, EntityKind::FireSource))
                {
                    let d = self.drone.horizontal_distance(fire.entity.position);
                    let value = scoring::approach_reward(d, self.start_fire_distance);
                    if value > self.progress.approach {
                        let delta = value - self.progress.approach;
                        self.progress.approach = value;
                        gained += self.credit("approach fire".into(), delta);
                    }
                }
            }
            ScenarioId::SafeNav if self.drone.z < ENTRY_ALTITUDE => {
                let drone = self.drone;
                let mut entered = Vec::new();
                for e in &mut self.entities {
                    if let EntityKind::Building { footprint } = &e.entity.kind {
                        if !e.flags.entered
                            && scoring::point_in_polygon(drone.x, drone.y, footprint)
                        {
                            e.flags.entered = true;
                            entered.push(e.entity.id.clone());
                        }
                    }
                }
                for id in entered {
                    gained += self.credit(format!("enter {id}"), 10.0);
                }
            }
            _ => {}
        }
        gained
    }

    /// Applies one scored action and returns the raw reward change.
    pub fn apply_action(&mut self, action: &ScoredAction) -> Result<f64, ScenarioError> {
        let admissible = admissible_actions(self.scenario);
        if !admissible.allows(action.kind()) {
            return Err(self.invalid(action, "not in the scenario's action set"));
        }
        match action {
            ScoredAction::Move { delta } => {
                if !delta.is_finite() || delta.max_abs_component() > admissible.move_bound + 1e-9 {
                    return Err(self.invalid(
                        action,
                        format!("each axis must lie in [-{0}, {0}]", admissible.move_bound),
                    ));
                }
                self.drone = self.drone + *delta;
                self.drone.z = self.drone.z.max(0.0);
                Ok(self.update_position_credit())
            }
            ScoredAction::Navigate { .. }
            | ScoredAction::Hold
            | ScoredAction::ActivateSensor { .. } => Ok(0.0),
            ScoredAction::ReportIgnition => {
                let near = self.entities.iter().any(|e| {
                    matches!(e.entity.kind, EntityKind::FireSource)
                        && self.drone.horizontal_distance(e.entity.position) < FIRE_DETAIL_RANGE
                });
                if near && !self.progress.ignition_reported {
                    self.progress.ignition_reported = true;
                    Ok(self.credit("report ignition".into(), 10.0))
                } else {
                    Ok(0.0)
                }
            }
            ScoredAction::ReportTrapped { count } => {
                if !(1..=MAX_TRAPPED_OPTION).contains(count) {
                    return Err(self.invalid(action, "count must be 1 to 3"));
                }
                let Some(i) = self.nearest_person() else {
                    return Ok(0.0);
                };
                let id = self.entities[i].entity.id.clone();
                match self.entities[i].entity.kind {
                    EntityKind::Firefighter => Ok(self.credit(format!("misidentified {id}"), -1.0)),
                    EntityKind::TrappedGroup { size } => {
                        if self.entities[i].flags.reported || size != *count {
                            return Ok(0.0);
                        }
                        self.entities[i].flags.reported = true;
                        let pts = (2.0 * f64::from(size)).min(16.0 - self.progress.trapped);
                        self.progress.trapped += pts;
                        Ok(self.credit(format!("report {id}"), pts))
                    }
                    _ => Ok(0.0),
                }
            }
            ScoredAction::EstablishCommunication => {
                let Some(i) = self.nearest_person() else {
                    return Ok(0.0);
                };
                let EntityKind::TrappedGroup { size } = self.entities[i].entity.kind else {
                    return Ok(0.0);
                };
                if self.entities[i].flags.reassured {
                    return Ok(0.0);
                }
                self.entities[i].flags.reassured = true;
                let id = self.entities[i].entity.id.clone();
                let pts = (2.0 * f64::from(size)).min(16.0 - self.progress.communication);
                self.progress.communication += pts;
                Ok(self.credit(format!("reassure {id}"), pts))
            }
            ScoredAction::DispatchKits { count } => {
                if !(1..=MAX_KIT_OPTION).contains(count) {
                    return Err(self.invalid(action, "count must be 1 to 3"));
                }
                let Some(i) = self.nearest_person() else {
                    return Ok(0.0);
                };
                let EntityKind::TrappedGroup { size } = self.entities[i].entity.kind else {
                    return Ok(0.0);
                };
                let useful = (*count).min(size - self.entities[i].flags.kits_received.min(size));
                self.entities[i].flags.kits_received += useful;
                let id = self.entities[i].entity.id.clone();
                let pts = (2.0 * f64::from(useful)).min(16.0 - self.progress.kits);
                self.progress.kits += pts;
                Ok(self.credit(format!("kits to {id}"), pts))
            }
            ScoredAction::Report { text } => {
                let fault = self.entities.iter().find_map(|e| match &e.entity.kind {
                    EntityKind::Turbine {
                        side,
                        rotating: false,
                    } => Some(FaultDescription::stationary_turbine(side)),
                    _ => None,
                });
                let Some(fault) = fault else {
                    return Ok(0.0);
                };
                let score = match_score(text, &fault);
                if score > self.progress.inspection {
                    let delta = score - self.progress.inspection;
                    self.progress.inspection = score;
                    Ok(self.credit("fault report".into(), delta))
                } else {
                    Ok(0.0)
                }
            }
            ScoredAction::Touchdown => {
                if self.progress.touchdown.is_some() {
                    return Ok(0.0);
                }
                self.drone.z = 0.0;
                self.progress.touchdown = Some(self.drone);
                if self.scenario != ScenarioId::Landing {
                    return Ok(self.update_position_credit());
                }
                let pad = self.entities.iter().find_map(|e| match e.entity.kind {
                    EntityKind::Helipad { radius } => Some((e.entity.position, radius)),
                    _ => None,
                });
                let Some((center, radius)) = pad else {
                    return Ok(0.0);
                };
                let d = self.drone.horizontal_distance(center);
                Ok(self.credit(
                    format!("touchdown at {d:.3} m"),
                    scoring::landing_reward(d, radius),
                ))
            }
        }
    }

    fn saturated(&self) -> bool {
        match self.scenario {
            ScenarioId::Wildfire => {
                let p = &self.progress;
                p.approach >= 10.0 - 1e-9
                    && p.ignition_reported
                    && p.trapped >= 16.0
                    && p.communication >= 16.0
                    && p.kits >= 16.0
            }
            ScenarioId::Landing => self.touched_down(),
            ScenarioId::Inspection => self.progress.inspection >= 10.0,
            ScenarioId::SafeNav => self
                .entities
                .iter()
                .all(|e| !matches!(e.entity.kind, EntityKind::Building { .. }) || e.flags.entered),
        }
    }

    /// True once the mission is over: touchdown where it ends the run, or
    /// every reward item saturated. The step budget is enforced by the caller.
    pub fn is_done(&self) -> bool {
        let landed = matches!(self.scenario, ScenarioId::Landing | ScenarioId::SafeNav)
            && self.touched_down();
        landed || self.saturated()
    }
}

fn round3(v: f64) -> f64 {
    let r = (v * 1000.0).round() / 1000.0;
    if r == 0.0 {
        0.0
    } else {
        r
    }
}
