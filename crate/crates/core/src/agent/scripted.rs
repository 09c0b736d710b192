//! Rule tables standing in for a multimodal reasoner. Each table is a pure
//! function of the context.

use std::collections::BTreeMap;

use super::backend::{BackendIdentity, Plan, PlanStep, ReasonerBackend};
use super::context::AgentContext;
use super::{AgentError, SCENE_TOPIC};
use crate::bus::{Structured, Value};
use crate::geometry::Vec3;
use crate::roschain::parse_canonical;
use crate::scenarios::{ScenarioId, MIN_ENTRY_AREA};

pub const CRUISE_ALTITUDE: f64 = 10.0;
pub const LANDING_APPROACH_ALTITUDE: f64 = 5.0;
/// Altitude flown inside a building.
pub const ENTRY_FLIGHT_ALTITUDE: f64 = 2.0;
pub const SEARCH_RING_RADIUS: f64 = 35.0;
pub const SEARCH_WAYPOINTS: usize = 8;

pub const FIRE_REPORTED: &str = "fire reported";
pub const FAULT_REPORTED: &str = "fault reported";

/// An entity as seen in the scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SeenEntity {
    pub id: String,
    pub kind: String,
    pub state: String,
    pub bearing_deg: f64,
    pub distance: f64,
    pub attrs: Structured,
}

impl SeenEntity {
    pub fn number(&self, key: &str) -> Option<f64> {
        self.attrs.get(key).and_then(Value::as_f64)
    }

    pub fn text(&self, key: &str) -> Option<&str> {
        self.attrs.get(key).and_then(Value::as_text)
    }
}

/// Structured view of a scene payload.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneView {
    pub tick: u64,
    pub drone: Vec3,
    pub entities: BTreeMap<String, SeenEntity>,
}

impl SceneView {
    pub fn from_structured(scene: &Structured) -> Option<Self> {
        let num = |k: &str| scene.get(k).and_then(Value::as_f64);
        let drone = Vec3::new(num("drone.x")?, num("drone.y")?, num("drone.z")?);
        let mut grouped: BTreeMap<String, Structured> = BTreeMap::new();
        for (k, v) in scene {
            if let Some((id, field)) = k.strip_prefix("entity.").and_then(|r| r.split_once('.')) {
                grouped
                    .entry(id.to_string())
                    .or_default()
                    .insert(field.to_string(), v.clone());
            }
        }
        let entities = grouped
            .into_iter()
            .filter_map(|(id, attrs)| {
                let text = |k: &str| attrs.get(k).and_then(Value::as_text).map(str::to_string);
                let num = |k: &str| attrs.get(k).and_then(Value::as_f64);
                let e = SeenEntity {
                    kind: text("kind")?,
                    state: text("state").unwrap_or_default(),
                    bearing_deg: num("bearing_deg")?,
                    distance: num("distance")?,
                    id: id.clone(),
                    attrs,
                };
                Some((id, e))
            })
            .collect();
        Some(Self {
            tick: num("tick").unwrap_or(0.0) as u64,
            drone,
            entities,
        })
    }

    pub fn from_context(ctx: &AgentContext) -> Option<Self> {
        let p = ctx.perception(SCENE_TOPIC)?;
        Self::from_structured(&parse_canonical(&p.text).ok()?)
    }

    /// Ground position of a seen entity.
    pub fn locate(&self, e: &SeenEntity) -> Vec3 {
        let p =
            Vec3::new(self.drone.x, self.drone.y, 0.0).offset_by_bearing(e.bearing_deg, e.distance);
        Vec3::new(round3(p.x), round3(p.y), 0.0)
    }

    pub fn of_kind<'a>(&'a self, kind: &'a str) -> impl Iterator<Item = &'a SeenEntity> + 'a {
        self.entities.values().filter(move |e| e.kind == kind)
    }

    /// Entity ids mapped to their state word; what replanning compares.
    pub fn states(&self) -> BTreeMap<String, String> {
        self.entities
            .iter()
            .map(|(id, e)| (id.clone(), e.state.clone()))
            .collect()
    }
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

fn move_step(to: Vec3, z: f64, why: &str) -> PlanStep {
    PlanStep::new("moveToPosition", why)
        .arg("x", to.x)
        .arg("y", to.y)
        .arg("z", z)
}

/// Scripted reasoner with one rule table per scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScriptedBackend {
    pub scenario: ScenarioId,
}

impl ScriptedBackend {
    pub fn new(scenario: ScenarioId) -> Self {
        Self { scenario }
    }

    pub fn plan(&self, ctx: &AgentContext) -> Plan {
        let Some(scene) = SceneView::from_context(ctx) else {
            return Plan::hold("no scene received yet");
        };
        match self.scenario {
            ScenarioId::Wildfire => wildfire(ctx, &scene),
            ScenarioId::Landing => landing(&scene),
            ScenarioId::Inspection => inspection(ctx, &scene),
            ScenarioId::SafeNav => safenav(ctx, &scene),
        }
    }
}

impl ReasonerBackend for ScriptedBackend {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::Scripted(self.scenario.name().to_string())
    }

    fn generate(&mut self, context: &AgentContext) -> Result<Plan, AgentError> {
        Ok(self.plan(context))
    }
}

fn wildfire(ctx: &AgentContext, scene: &SceneView) -> Plan {
    let Some(fire) = scene.of_kind("fire_source").next() else {
        return Plan::hold("no smoke or fire in view");
    };
    let fire_pos = scene.locate(fire);
    let memory = &ctx.memories;
    if !memory.has_contingency(FIRE_REPORTED) {
        if fire.state != "burning" {
            return Plan {
                situation_summary: format!(
                    "smoke rising {:.0} m away at bearing {:.0}; the fire itself is hidden",
                    fire.distance, fire.bearing_deg
                ),
                steps: vec![move_step(
                    fire_pos,
                    CRUISE_ALTITUDE,
                    "close in to see the fire",
                )],
                contingency: Some("approached fire".into()),
            };
        }
        return Plan {
            situation_summary: "the ignition point is in view".into(),
            steps: vec![
                move_step(fire_pos, CRUISE_ALTITUDE, "hold over the ignition point"),
                PlanStep::new("reportToCommand", "keep the ground command informed").arg(
                    "text",
                    format!(
                        "Fire ignition point confirmed at ({:.1}, {:.1})",
                        fire_pos.x, fire_pos.y
                    ),
                ),
            ],
            contingency: Some(FIRE_REPORTED.into()),
        };
    }
    let waiting = scene
        .of_kind("trapped_group")
        .filter(|g| !memory.has_contingency(&format!("assisted {}", g.id)))
        .min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
    if let Some(group) = waiting {
        let size = group.number("size").unwrap_or(1.0).round().max(1.0);
        let at = scene.locate(group);
        return Plan {
            situation_summary: format!("{size} people trapped near ({:.1}, {:.1})", at.x, at.y),
            steps: vec![
                move_step(at, CRUISE_ALTITUDE, "get over the group"),
                PlanStep::new("reportToCommand", "report who needs rescue").arg(
                    "text",
                    format!(
                        "{size} trapped people located at ({:.1}, {:.1})",
                        at.x, at.y
                    ),
                ),
                PlanStep::new("broadcastReassurance", "calm the group")
                    .arg("text", "Stay where you are, rescue teams are on the way."),
                PlanStep::new("dropEmergencyKit", "one kit per person").arg("count", size),
            ],
            contingency: Some(format!("assisted {}", group.id)),
        };
    }
    for k in 0..SEARCH_WAYPOINTS {
        let note = format!("searched waypoint {k}");
        if memory.has_contingency(&note) {
            continue;
        }
        let bearing = 360.0 * k as f64 / SEARCH_WAYPOINTS as f64;
        let wp = fire_pos.offset_by_bearing(bearing, SEARCH_RING_RADIUS);
        return Plan {
            situation_summary: "searching the fire perimeter for trapped people".into(),
            steps: vec![move_step(
                Vec3::new(round3(wp.x), round3(wp.y), 0.0),
                CRUISE_ALTITUDE,
                "next search point",
            )],
            contingency: Some(note),
        };
    }
    Plan::hold("perimeter searched")
}

fn landing(scene: &SceneView) -> Plan {
    let Some(pad) = scene.of_kind("helipad").next() else {
        return Plan::hold("no helipad in view");
    };
    let at = scene.locate(pad);
    Plan {
        situation_summary: format!("helipad {:.1} m away", pad.distance),
        steps: vec![
            PlanStep::new("activeObserve", "check the pad markings").arg("sensor", "Down"),
            move_step(at, LANDING_APPROACH_ALTITUDE, "line up over the pad center"),
            PlanStep::new("land", "touch down"),
        ],
        contingency: Some("landed".into()),
    }
}

/// Blade phase per turbine side in a scene.
fn phases(scene: &SceneView) -> BTreeMap<String, f64> {
    scene
        .of_kind("turbine")
        .filter_map(|t| Some((t.text("side")?.to_string(), t.number("phase_deg")?)))
        .collect()
}

fn inspection(ctx: &AgentContext, scene: &SceneView) -> Plan {
    if ctx.memories.has_contingency(FAULT_REPORTED) {
        return Plan::hold("fault already reported; monitoring");
    }
    let now = phases(scene);
    let previous = ctx
        .memories
        .retrieval
        .records
        .iter()
        .filter(|r| r.tick < scene.tick)
        .max_by_key(|r| r.tick)
        .and_then(|r| r.payload.scene.as_ref())
        .and_then(SceneView::from_structured);
    let Some(previous) = previous else {
        return Plan {
            situation_summary: "first look at the turbines; keeping this frame for comparison"
                .into(),
            steps: vec![PlanStep::new(
                "holdAndMonitor",
                "compare against the next frame",
            )],
            contingency: None,
        };
    };
    let before = phases(&previous);
    let stopped: Vec<&String> = now
        .iter()
        .filter(|(side, phase)| before.get(*side) == Some(phase))
        .map(|(side, _)| side)
        .collect();
    match stopped.first() {
        Some(side) => Plan {
            situation_summary: format!("the {side} turbine blades did not move between frames"),
            steps: vec![PlanStep::new("reportToCommand", "report the fault")
                .arg("text", format!("the {side} turbine has stopped rotation"))],
            contingency: Some(FAULT_REPORTED.into()),
        },
        None => Plan::hold("all turbines rotating"),
    }
}

fn safenav(ctx: &AgentContext, scene: &SceneView) -> Plan {
    let target = scene
        .of_kind("building")
        .filter(|b| b.number("area").unwrap_or(0.0) >= MIN_ENTRY_AREA)
        .filter(|b| !ctx.memories.has_contingency(&format!("entered {}", b.id)))
        .min_by(|a, b| a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id)));
    let Some(b) = target else {
        return Plan {
            situation_summary: "no unexplored building in view".into(),
            steps: vec![PlanStep::new("land", "exploration finished")],
            contingency: None,
        };
    };
    let c = scene.locate(b);
    Plan {
        situation_summary: format!("{} is the closest unexplored building", b.id),
        steps: vec![
            move_step(c, CRUISE_ALTITUDE, "fly over the building"),
            move_step(c, ENTRY_FLIGHT_ALTITUDE, "descend inside"),
            move_step(c, CRUISE_ALTITUDE, "climb back out"),
        ],
        contingency: Some(format!("entered {}", b.id)),
    }
}
