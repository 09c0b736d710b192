//! Simulation-side bus nodes: camera, active-observation sensors and actuators.

use std::sync::{Arc, Mutex};

use super::bridge::NodeEvent;
use crate::agent::{IMAGE_TOPIC, SCENE_TOPIC};
use crate::bus::{Bus, BusError, NodeHandle, Payload, QueueConfig};
use crate::roschain::{
    Command, CommandRegistry, CommandTarget, COMMAND_TOPIC, GROUND_REPORT_TOPIC,
};
use crate::scenarios::{Observation, World};

type EventLog = Arc<Mutex<Vec<NodeEvent>>>;

fn push(log: &EventLog, e: NodeEvent) {
    log.lock().unwrap_or_else(|p| p.into_inner()).push(e);
}

/// Publishes the world's scene and camera frame.
pub struct CameraNode {
    bus: Bus,
    node: NodeHandle,
}

impl CameraNode {
    pub fn attach(bus: &Bus, node_id: &str) -> Result<Self, BusError> {
        Ok(Self {
            bus: bus.clone(),
            node: bus.register_node(node_id)?,
        })
    }

    pub fn publish_scene(&self, obs: &Observation) -> Result<u64, BusError> {
        self.bus.publish(
            &self.node,
            SCENE_TOPIC,
            Payload::Structured(obs.scene.clone()),
        )
    }

    pub fn publish_image(&self, obs: &Observation) -> Result<u64, BusError> {
        self.bus
            .publish(&self.node, IMAGE_TOPIC, Payload::Blob(obs.image.clone()))
    }
}

/// Serves the four active-observation services from the shared world.
pub struct SensorNode;

impl SensorNode {
    pub fn attach(
        bus: &Bus,
        node_id: &str,
        world: Arc<Mutex<World>>,
        log: EventLog,
    ) -> Result<Self, BusError> {
        let node = bus.register_node(node_id)?;
        for sensor in CommandTarget::ALL.into_iter().filter(|t| t.is_sensor()) {
            let (world, log) = (world.clone(), log.clone());
            bus.advertise_service(&node, &sensor.observation_service(), move |_| {
                push(&log, NodeEvent::SensorRequest(sensor));
                let world = world.lock().unwrap_or_else(|p| p.into_inner());
                Ok(Payload::Structured(world.sense(sensor)))
            })?;
        }
        Ok(Self)
    }
}

/// Loudspeaker and manipulator: listens on the command and ground-report topics.
pub struct ActuatorNode {
    log: EventLog,
}

impl ActuatorNode {
    pub fn attach(bus: &Bus, node_id: &str, log: EventLog) -> Result<Self, BusError> {
        let node = bus.register_node(node_id)?;
        let registry = Arc::new(CommandRegistry::standard());
        for topic in [COMMAND_TOPIC, GROUND_REPORT_TOPIC] {
            let (log, registry) = (log.clone(), registry.clone());
            bus.subscribe(&node, topic, QueueConfig::default(), move |env| {
                if let Some(e) = Command::from_payload(&env.payload, &registry)
                    .ok()
                    .as_ref()
                    .and_then(NodeEvent::from_command)
                {
                    push(&log, e);
                }
            })?;
        }
        Ok(Self { log })
    }

    /// Events received since the last drain, in arrival order. Includes
    /// sensor requests logged by a [`SensorNode`] sharing the same log.
    pub fn drain(&self) -> Vec<NodeEvent> {
        std::mem::take(&mut *self.log.lock().unwrap_or_else(|p| p.into_inner()))
    }
}
