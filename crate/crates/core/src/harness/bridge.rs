//! Turns bus traffic and vehicle motion into scored scenario actions.

use crate::controller::{FlightMode, VehicleState};
use crate::roschain::{Command, CommandTarget};
use crate::scenarios::{ScenarioId, ScoredAction};

/// Something an actuator or sensor node received during a step.
#[derive(Debug, Clone, PartialEq)]
pub enum NodeEvent {
    /// Ground-channel message.
    GroundReport(String),
    /// Loudspeaker broadcast to people nearby.
    Broadcast(String),
    KitRelease(f64),
    SensorRequest(CommandTarget),
}

impl NodeEvent {
    /// Classifies a command delivered to an actuator; controller commands
    /// and sensors are not actuator events.
    pub fn from_command(command: &Command) -> Option<Self> {
        match command.target {
            CommandTarget::Loudspeaker => {
                let text = command
                    .param_text("message_text")
                    .unwrap_or_default()
                    .to_string();
                Some(if command.is_ground_report() {
                    NodeEvent::GroundReport(text)
                } else {
                    NodeEvent::Broadcast(text)
                })
            }
            CommandTarget::Manipulator => Some(NodeEvent::KitRelease(
                command.param_f64("payload_index").unwrap_or(0.0),
            )),
            _ => None,
        }
    }
}

/// Count written directly before the word "trapped", as in "3 trapped people".
pub fn trapped_count(text: &str) -> Option<u32> {
    let words: Vec<String> = text
        .split(|c: char| !c.is_ascii_alphanumeric() && c != '.')
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect();
    words.windows(2).find_map(|w| {
        (w[1] == "trapped")
            .then(|| w[0].parse::<f64>().ok())
            .flatten()
            .filter(|n| n.fract() == 0.0 && *n >= 0.0 && *n <= f64::from(u32::MAX))
            .map(|n| n as u32)
    })
}

/// Scored interpretation of a ground report for the given scenario.
pub fn classify_report(scenario: ScenarioId, text: &str) -> ScoredAction {
    if scenario == ScenarioId::Inspection {
        return ScoredAction::Report {
            text: text.to_string(),
        };
    }
    if let Some(count) = trapped_count(text) {
        return ScoredAction::ReportTrapped { count };
    }
    let lower = text.to_ascii_lowercase();
    if lower.contains("fire") || lower.contains("ignition") {
        ScoredAction::ReportIgnition
    } else {
        ScoredAction::Report {
            text: text.to_string(),
        }
    }
}

/// Scored actions for one step: motion first, then touchdown, then node events
/// in arrival order. A step with none of these is a hold.
pub fn scored_actions(
    scenario: ScenarioId,
    before: &VehicleState,
    after: &VehicleState,
    world_drone: crate::geometry::Vec3,
    events: &[NodeEvent],
) -> Vec<ScoredAction> {
    let mut out = Vec::new();
    let delta = after.pose - world_drone;
    if delta.norm() > 1e-12 {
        out.push(ScoredAction::Move { delta });
    }
    if before.flight_mode.is_airborne() && after.flight_mode == FlightMode::OnGround {
        out.push(ScoredAction::Touchdown);
    }
    for e in events {
        out.push(match e {
            NodeEvent::GroundReport(text) => classify_report(scenario, text),
            NodeEvent::Broadcast(_) => ScoredAction::EstablishCommunication,
            NodeEvent::KitRelease(n) => ScoredAction::DispatchKits {
                count: n.round().clamp(0.0, f64::from(u32::MAX)) as u32,
            },
            NodeEvent::SensorRequest(sensor) => ScoredAction::ActivateSensor { sensor: *sensor },
        });
    }
    if out.is_empty() {
        out.push(ScoredAction::Hold);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    #[test]
    fn trapped_counts_are_read_from_text() {
        assert_eq!(
            trapped_count("3 trapped people located at (1.0, 2.0)"),
            Some(3)
        );
        assert_eq!(trapped_count("1 Trapped person here"), Some(1));
        assert_eq!(trapped_count("people trapped"), None);
        assert_eq!(trapped_count("2.5 trapped"), None);
    }

    #[test]
    fn reports_map_to_scenario_actions() {
        assert_eq!(
            classify_report(
                ScenarioId::Wildfire,
                "Fire ignition point confirmed at (0.0, 100.0)"
            ),
            ScoredAction::ReportIgnition
        );
        assert_eq!(
            classify_report(ScenarioId::Wildfire, "2 trapped people located at (1, 2)"),
            ScoredAction::ReportTrapped { count: 2 }
        );
        assert_eq!(
            classify_report(
                ScenarioId::Inspection,
                "the left turbine has stopped rotation"
            ),
            ScoredAction::Report {
                text: "the left turbine has stopped rotation".into()
            }
        );
    }

    #[test]
    fn landing_yields_move_then_touchdown() {
        let before = VehicleState::hovering(Vec3::new(0.0, 0.0, 3.0));
        let mut after = VehicleState::on_ground(Vec3::ZERO);
        after.arm_state = before.arm_state;
        let acts = scored_actions(ScenarioId::Landing, &before, &after, before.pose, &[]);
        assert_eq!(acts.len(), 2);
        assert!(matches!(acts[0], ScoredAction::Move { delta } if delta.z == -3.0));
        assert_eq!(acts[1], ScoredAction::Touchdown);
        let idle = scored_actions(ScenarioId::Landing, &before, &before, before.pose, &[]);
        assert_eq!(idle, vec![ScoredAction::Hold]);
    }
}
