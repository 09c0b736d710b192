//! Adapter between agent semantics and bus mechanics.
//!
//! [`Roschain`] wraps incoming sensor payloads into text the reasoner can
//! read, translates `(operation, config)` pairs into [`Command`]s using the
//! fixed [`CommandRegistry`], and publishes or requests them on the bus.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use crate::bus::{Bus, BusError, Envelope, NodeHandle, Payload, QueueConfig, Structured, Value};

/// Topic carrying every published command.
pub const COMMAND_TOPIC: &str = "command";
/// Topic carrying reports relayed to the ground command center.
pub const GROUND_REPORT_TOPIC: &str = "ground_report";
/// Value of the Loudspeaker `channel` parameter that routes a message to the ground link.
pub const GROUND_CHANNEL: &str = "ground";
/// Timeout applied to active-observation requests.
pub const DEFAULT_SERVICE_TIMEOUT_TICKS: u64 = 5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RoschainError {
    #[error("payload cannot be wrapped: {0}")]
    UnsupportedPayload(String),
    #[error("unknown operation '{0}'")]
    UnknownOperation(String),
    #[error("operation '{operation}' is missing parameter '{parameter}'")]
    IncompleteConfig {
        operation: String,
        parameter: String,
    },
    #[error("operation '{operation}' does not take parameter '{parameter}'")]
    UnexpectedParameter {
        operation: String,
        parameter: String,
    },
    #[error("parameter '{parameter}' of '{operation}' has the wrong type")]
    ParameterType {
        operation: String,
        parameter: String,
    },
    #[error("operation '{operation}' is a {category} command, not an active observation")]
    CategoryMismatch {
        operation: String,
        category: CommandCategory,
    },
    #[error("malformed command payload: {0}")]
    MalformedCommand(String),
    #[error("base64 decode failed: {0}")]
    Decode(String),
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandCategory {
    ControllerCommand,
    ExecutionCommand,
    ActiveObserve,
}

impl CommandCategory {
    fn table_label(self) -> &'static str {
        match self {
            CommandCategory::ControllerCommand => "Controller Command",
            CommandCategory::ExecutionCommand => "Execution Command",
            CommandCategory::ActiveObserve => "Active Observe",
        }
    }
}

impl fmt::Display for CommandCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.table_label())
    }
}

/// Node that serves a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CommandTarget {
    Controller,
    Loudspeaker,
    Manipulator,
    DepthCamera,
    InfraredCamera,
    Lidar,
    DownwardCamera,
}

impl CommandTarget {
    pub const ALL: [CommandTarget; 7] = [
        CommandTarget::Controller,
        CommandTarget::Loudspeaker,
        CommandTarget::Manipulator,
        CommandTarget::DepthCamera,
        CommandTarget::InfraredCamera,
        CommandTarget::Lidar,
        CommandTarget::DownwardCamera,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CommandTarget::Controller => "Controller",
            CommandTarget::Loudspeaker => "Loudspeaker",
            CommandTarget::Manipulator => "Manipulator",
            CommandTarget::DepthCamera => "Depth Camera",
            CommandTarget::InfraredCamera => "Infrared Camera",
            CommandTarget::Lidar => "Lidar",
            CommandTarget::DownwardCamera => "Downward Camera",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.name() == name)
    }

    pub fn is_sensor(self) -> bool {
        matches!(
            self,
            CommandTarget::DepthCamera
                | CommandTarget::InfraredCamera
                | CommandTarget::Lidar
                | CommandTarget::DownwardCamera
        )
    }

    /// Service name an active-observation sensor answers on.
    pub fn observation_service(self) -> String {
        let slug = self.name().to_ascii_lowercase().replace(' ', "_");
        format!("active_observation/{slug}")
    }
}

impl fmt::Display for CommandTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Number,
    Text,
}

impl ParamKind {
    fn accepts(self, value: &Value) -> bool {
        matches!(
            (self, value),
            (ParamKind::Number, Value::Number(_)) | (ParamKind::Text, Value::Text(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    /// Preinitialized value from the parameter module, if any.
    pub default: Option<Value>,
}

impl ParamSpec {
    fn required(name: &'static str, kind: ParamKind) -> Self {
        Self {
            name,
            kind,
            default: None,
        }
    }

    fn preinit(name: &'static str, kind: ParamKind, default: Value) -> Self {
        Self {
            name,
            kind,
            default: Some(default),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Operation {
    pub name: String,
    pub category: CommandCategory,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistryRow {
    pub operation: Operation,
    pub target: CommandTarget,
    pub schema: Vec<ParamSpec>,
}

/// The fixed command table: 8 controller commands, 2 execution commands and
/// 4 active observations.
#[derive(Debug, Clone)]
pub struct CommandRegistry {
    rows: Vec<RegistryRow>,
}

impl Default for CommandRegistry {
    fn default() -> Self {
        Self::standard()
    }
}

impl CommandRegistry {
    pub fn standard() -> Self {
        use CommandCategory::*;
        use CommandTarget::*;
        use ParamKind::*;
        let xyz = || {
            vec![
                ParamSpec::required("x", Number),
                ParamSpec::required("y", Number),
                ParamSpec::required("z", Number),
            ]
        };
        let row = |name: &str, category, target, schema| RegistryRow {
            operation: Operation {
                name: name.to_string(),
                category,
            },
            target,
            schema,
        };
        let rows = vec![
            row("Move_ENU", ControllerCommand, Controller, xyz()),
            row("Move_Body", ControllerCommand, Controller, xyz()),
            row(
                "Takeoff",
                ControllerCommand,
                Controller,
                vec![ParamSpec::preinit(
                    "altitude_m",
                    Number,
                    Value::Number(10.0),
                )],
            ),
            row("Land", ControllerCommand, Controller, vec![]),
            row("Arm", ControllerCommand, Controller, vec![]),
            row("Disarm", ControllerCommand, Controller, vec![]),
            row("Failsafe_land", ControllerCommand, Controller, vec![]),
            row("Idle", ControllerCommand, Controller, vec![]),
            row(
                "Loudspeaker",
                ExecutionCommand,
                Loudspeaker,
                vec![
                    ParamSpec::required("message_text", Text),
                    ParamSpec::preinit("channel", Text, Value::Text("speaker".into())),
                ],
            ),
            row(
                "Manipulator",
                ExecutionCommand,
                Manipulator,
                vec![
                    ParamSpec::preinit("action_id", Text, Value::Text("release_kit".into())),
                    ParamSpec::required("payload_index", Number),
                ],
            ),
            row("Depth_Observe", ActiveObserve, DepthCamera, vec![]),
            row("Infrared_Observe", ActiveObserve, InfraredCamera, vec![]),
            row("Lidar_Observe", ActiveObserve, Lidar, vec![]),
            row("Down_Observe", ActiveObserve, DownwardCamera, vec![]),
        ];
        Self { rows }
    }

    pub fn rows(&self) -> &[RegistryRow] {
        &self.rows
    }

    pub fn row(&self, name: &str) -> Result<&RegistryRow, RoschainError> {
        self.rows
            .iter()
            .find(|r| r.operation.name == name)
            .ok_or_else(|| RoschainError::UnknownOperation(name.to_string()))
    }

    pub fn operation(&self, name: &str) -> Result<Operation, RoschainError> {
        self.row(name).map(|r| r.operation.clone())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.row(name).is_ok()
    }

    /// `(operation, category, target)` triples in table order.
    pub fn listing(&self) -> Vec<(Operation, CommandCategory, CommandTarget)> {
        self.rows
            .iter()
            .map(|r| (r.operation.clone(), r.operation.category, r.target))
            .collect()
    }

    /// Plain-text table: Command Type | Command | Publish/Client | Subscribe/Server.
    pub fn dump_table(&self) -> String {
        let header = [
            "Command Type",
            "Command",
            "Publish/Client",
            "Subscribe/Server",
        ];
        let body: Vec<[String; 4]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.operation.category.table_label().to_string(),
                    r.operation.name.clone(),
                    "Agent".to_string(),
                    r.target.name().to_string(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for cells in &body {
            for (w, c) in widths.iter_mut().zip(cells) {
                *w = (*w).max(c.len());
            }
        }
        let line = |cells: [&str; 4]| {
            let padded: Vec<String> = cells
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            format!("| {} |\n", padded.join(" | "))
        };
        let rule = format!(
            "|{}|\n",
            widths
                .iter()
                .map(|w| "-".repeat(w + 2))
                .collect::<Vec<_>>()
                .join("|")
        );
        let mut out = line(header);
        out.push_str(&rule);
        for cells in &body {
            out.push_str(&line([&cells[0], &cells[1], &cells[2], &cells[3]]));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamSource {
    Preinitialized,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEntry {
    pub value: Value,
    pub source: ParamSource,
}

/// Parameters supplied for one operation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CommandConfig {
    pub parameters: BTreeMap<String, ConfigEntry>,
}

impl CommandConfig {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a resolved parameter.
    pub fn with(mut self, name: &str, value: impl Into<Value>) -> Self {
        self.set(name, value.into(), ParamSource::Resolved);
        self
    }

    pub fn set(&mut self, name: &str, value: Value, source: ParamSource) {
        self.parameters
            .insert(name.to_string(), ConfigEntry { value, source });
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.parameters.get(name).map(|e| &e.value)
    }

    pub fn values(&self) -> Structured {
        self.parameters
            .iter()
            .map(|(k, e)| (k.clone(), e.value.clone()))
            .collect()
    }
}

/// A translated command ready to publish.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub operation: Operation,
    pub target: CommandTarget,
    pub parameters: Structured,
}

impl Command {
    pub fn param_f64(&self, name: &str) -> Option<f64> {
        self.parameters.get(name).and_then(Value::as_f64)
    }

    pub fn param_text(&self, name: &str) -> Option<&str> {
        self.parameters.get(name).and_then(Value::as_text)
    }

    pub fn is_ground_report(&self) -> bool {
        self.operation.name == "Loudspeaker" && self.param_text("channel") == Some(GROUND_CHANNEL)
    }

    /// One-line rendering used in command traces.
    pub fn render(&self) -> String {
        let params: Vec<String> = self
            .parameters
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        format!(
            "{} -> {} {{{}}}",
            self.operation.name,
            self.target.name(),
            params.join(", ")
        )
    }

    pub fn to_payload(&self) -> Payload {
        let mut map = Structured::new();
        map.insert("operation".into(), Value::Text(self.operation.name.clone()));
        map.insert("target".into(), Value::Text(self.target.name().to_string()));
        for (k, v) in &self.parameters {
            map.insert(format!("param.{k}"), v.clone());
        }
        Payload::Structured(map)
    }

    pub fn from_payload(
        payload: &Payload,
        registry: &CommandRegistry,
    ) -> Result<Self, RoschainError> {
        let map = payload.as_structured().ok_or_else(|| {
            RoschainError::MalformedCommand("expected a structured payload".into())
        })?;
        let name = map
            .get("operation")
            .and_then(Value::as_text)
            .ok_or_else(|| RoschainError::MalformedCommand("missing operation".into()))?;
        let row = registry.row(name)?;
        let target = map
            .get("target")
            .and_then(Value::as_text)
            .and_then(CommandTarget::from_name)
            .ok_or_else(|| RoschainError::MalformedCommand("missing or unknown target".into()))?;
        if target != row.target {
            return Err(RoschainError::MalformedCommand(format!(
                "{name} must target {}",
                row.target
            )));
        }
        let parameters = map
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("param.").map(|p| (p.to_string(), v.clone())))
            .collect();
        Ok(Self {
            operation: row.operation.clone(),
            target,
            parameters,
        })
    }
}

/// Deterministic translation of `(operation, config)` into a [`Command`].
pub fn translate(
    registry: &CommandRegistry,
    operation: &str,
    config: &CommandConfig,
) -> Result<Command, RoschainError> {
    let row = registry.row(operation)?;
    for name in config.parameters.keys() {
        if !row.schema.iter().any(|p| p.name == name) {
            return Err(RoschainError::UnexpectedParameter {
                operation: operation.to_string(),
                parameter: name.clone(),
            });
        }
    }
    let mut parameters = Structured::new();
    for spec in &row.schema {
        let value = config
            .get(spec.name)
            .or(spec.default.as_ref())
            .ok_or_else(|| RoschainError::IncompleteConfig {
                operation: operation.to_string(),
                parameter: spec.name.to_string(),
            })?;
        if !spec.kind.accepts(value) {
            return Err(RoschainError::ParameterType {
                operation: operation.to_string(),
                parameter: spec.name.to_string(),
            });
        }
        parameters.insert(spec.name.to_string(), value.clone());
    }
    Ok(Command {
        operation: row.operation.clone(),
        target: row.target,
        parameters,
    })
}

/// Canonical text form of a structured payload: keys in lexicographic order,
/// one `key=value` line per key.
pub fn canonical_text(map: &Structured) -> Result<String, RoschainError> {
    let mut out = String::new();
    for (k, v) in map {
        if k.contains(['=', '\n']) {
            return Err(RoschainError::UnsupportedPayload(format!(
                "key '{}' cannot be rendered on one line",
                k.escape_debug()
            )));
        }
        let rendered = v.to_string();
        if rendered.contains('\n') {
            return Err(RoschainError::UnsupportedPayload(format!(
                "value of '{k}' spans several lines"
            )));
        }
        out.push_str(k);
        out.push('=');
        out.push_str(&rendered);
        out.push('\n');
    }
    Ok(out)
}

/// Inverse of [`canonical_text`]. Finite numeric-looking values come back as numbers.
pub fn parse_canonical(text: &str) -> Result<Structured, RoschainError> {
    let mut map = Structured::new();
    for line in text.lines().filter(|l| !l.is_empty()) {
        let (k, v) = line.split_once('=').ok_or_else(|| {
            RoschainError::UnsupportedPayload(format!("line without '=': {line}"))
        })?;
        let value = match v.parse::<f64>() {
            Ok(n) if n.is_finite() && !v.is_empty() => Value::Number(n),
            _ => Value::Text(v.to_string()),
        };
        map.insert(k.to_string(), value);
    }
    Ok(map)
}

/// Agent-readable text for a payload.
pub fn wrap_payload(payload: &Payload) -> Result<String, RoschainError> {
    match payload {
        Payload::Text(t) => Ok(t.clone()),
        Payload::Blob(b) => Ok(BASE64.encode(b)),
        Payload::Structured(m) => canonical_text(m),
    }
}

pub fn unwrap_blob(text: &str) -> Result<Vec<u8>, RoschainError> {
    BASE64
        .decode(text)
        .map_err(|e| RoschainError::Decode(e.to_string()))
}

/// A wrapped sensory message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Perception {
    pub topic: String,
    pub format: String,
    pub text: String,
}

pub fn wrap_message(envelope: &Envelope) -> Result<Perception, RoschainError> {
    Ok(Perception {
        topic: envelope.topic.clone(),
        format: envelope.payload.tag().to_string(),
        text: wrap_payload(&envelope.payload)?,
    })
}

#[derive(Debug, Default)]
struct Inbox {
    latest: BTreeMap<String, (Perception, Arc<Payload>)>,
    errors: Vec<String>,
}

/// The agent-side adapter bound to one bus node.
#[derive(Clone)]
pub struct Roschain {
    bus: Bus,
    node: NodeHandle,
    registry: Arc<CommandRegistry>,
    inbox: Arc<Mutex<Inbox>>,
    service_timeout: u64,
}

impl fmt::Debug for Roschain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Roschain")
            .field("node", &self.node.id())
            .finish_non_exhaustive()
    }
}

impl Roschain {
    pub fn new(bus: Bus, node_name: &str) -> Result<Self, RoschainError> {
        let node = bus.register_node(node_name)?;
        Ok(Self {
            bus,
            node,
            registry: Arc::new(CommandRegistry::standard()),
            inbox: Arc::new(Mutex::new(Inbox::default())),
            service_timeout: DEFAULT_SERVICE_TIMEOUT_TICKS,
        })
    }

    pub fn bus(&self) -> &Bus {
        &self.bus
    }

    pub fn node(&self) -> &NodeHandle {
        &self.node
    }

    pub fn registry(&self) -> &CommandRegistry {
        &self.registry
    }

    pub fn set_service_timeout(&mut self, ticks: u64) {
        self.service_timeout = ticks;
    }

    /// Subscribes to `topic`; each delivery is wrapped and kept as the latest
    /// perception for that topic.
    pub fn subscriber(&self, topic: &str, queue: QueueConfig) -> Result<(), RoschainError> {
        let inbox = self.inbox.clone();
        self.bus.subscribe(&self.node, topic, queue, move |env| {
            let mut inbox = inbox.lock().unwrap_or_else(|e| e.into_inner());
            match wrap_message(env) {
                Ok(p) => {
                    inbox
                        .latest
                        .insert(env.topic.clone(), (p, env.payload.clone()));
                }
                Err(e) => inbox.errors.push(e.to_string()),
            }
        })?;
        Ok(())
    }

    /// Latest wrapped perception per subscribed topic, ordered by topic.
    pub fn perceptions(&self) -> Vec<Perception> {
        let inbox = self.inbox.lock().unwrap_or_else(|e| e.into_inner());
        inbox.latest.values().map(|(p, _)| p.clone()).collect()
    }

    /// Latest raw payload received on `topic`.
    pub fn latest_payload(&self, topic: &str) -> Option<Arc<Payload>> {
        let inbox = self.inbox.lock().unwrap_or_else(|e| e.into_inner());
        inbox.latest.get(topic).map(|(_, p)| p.clone())
    }

    pub fn wrap_errors(&self) -> Vec<String> {
        self.inbox
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .errors
            .clone()
    }

    pub fn translate(
        &self,
        operation: &str,
        config: &CommandConfig,
    ) -> Result<Command, RoschainError> {
        translate(&self.registry, operation, config)
    }

    /// Publishes the command on the command topic, or on the ground-report
    /// topic for ground-channel loudspeaker messages.
    pub fn publish_command(&self, command: &Command) -> Result<u64, RoschainError> {
        let row = self.registry.row(&command.operation.name)?;
        if row.target != command.target {
            return Err(RoschainError::MalformedCommand(format!(
                "{} must target {}",
                command.operation.name, row.target
            )));
        }
        let topic = if command.is_ground_report() {
            GROUND_REPORT_TOPIC
        } else {
            COMMAND_TOPIC
        };
        Ok(self.bus.publish(&self.node, topic, command.to_payload())?)
    }

    /// Synchronous call to the sensor serving an active-observation command.
    pub fn request_active_observation(
        &self,
        operation: &str,
        config: &CommandConfig,
    ) -> Result<Perception, RoschainError> {
        let command = self.translate(operation, config)?;
        self.request_observation(&command)
    }

    pub fn request_observation(&self, command: &Command) -> Result<Perception, RoschainError> {
        if command.operation.category != CommandCategory::ActiveObserve {
            return Err(RoschainError::CategoryMismatch {
                operation: command.operation.name.clone(),
                category: command.operation.category,
            });
        }
        let service = command.target.observation_service();
        let response = self.bus.call_service(
            &self.node,
            &service,
            &command.to_payload(),
            self.service_timeout,
        )?;
        Ok(Perception {
            topic: service,
            format: response.tag().to_string(),
            text: wrap_payload(&response)?,
        })
    }

    /// Generic service request used by operation flows.
    pub fn request(&self, service: &str, request: &Payload) -> Result<Payload, RoschainError> {
        Ok(self
            .bus
            .call_service(&self.node, service, request, self.service_timeout)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_has_fourteen_rows_in_table_order() {
        let reg = CommandRegistry::standard();
        let names: Vec<_> = reg
            .rows()
            .iter()
            .map(|r| r.operation.name.as_str())
            .collect();
        assert_eq!(
            names,
            [
                "Move_ENU",
                "Move_Body",
                "Takeoff",
                "Land",
                "Arm",
                "Disarm",
                "Failsafe_land",
                "Idle",
                "Loudspeaker",
                "Manipulator",
                "Depth_Observe",
                "Infrared_Observe",
                "Lidar_Observe",
                "Down_Observe"
            ]
        );
        let count = |c| {
            reg.rows()
                .iter()
                .filter(|r| r.operation.category == c)
                .count()
        };
        assert_eq!(count(CommandCategory::ControllerCommand), 8);
        assert_eq!(count(CommandCategory::ExecutionCommand), 2);
        assert_eq!(count(CommandCategory::ActiveObserve), 4);
    }

    #[test]
    fn translate_targets() {
        let reg = CommandRegistry::standard();
        let c = translate(
            &reg,
            "Takeoff",
            &CommandConfig::new().with("altitude_m", 10.0),
        )
        .unwrap();
        assert_eq!(c.target, CommandTarget::Controller);
        assert_eq!(c.param_f64("altitude_m"), Some(10.0));
        let c = translate(&reg, "Down_Observe", &CommandConfig::new()).unwrap();
        assert_eq!(c.target, CommandTarget::DownwardCamera);
        assert_eq!(
            translate(&reg, "Teleport", &CommandConfig::new()),
            Err(RoschainError::UnknownOperation("Teleport".into()))
        );
    }

    #[test]
    fn translate_fills_preinitialized_defaults() {
        let reg = CommandRegistry::standard();
        let c = translate(&reg, "Takeoff", &CommandConfig::new()).unwrap();
        assert_eq!(c.param_f64("altitude_m"), Some(10.0));
        let c = translate(
            &reg,
            "Loudspeaker",
            &CommandConfig::new().with("message_text", "hi"),
        )
        .unwrap();
        assert_eq!(c.param_text("channel"), Some("speaker"));
        assert!(!c.is_ground_report());
    }

    #[test]
    fn translate_validates_config() {
        let reg = CommandRegistry::standard();
        assert!(matches!(
            translate(&reg, "Move_ENU", &CommandConfig::new().with("x", 1.0)),
            Err(RoschainError::IncompleteConfig { .. })
        ));
        assert!(matches!(
            translate(&reg, "Land", &CommandConfig::new().with("x", 1.0)),
            Err(RoschainError::UnexpectedParameter { .. })
        ));
        assert!(matches!(
            translate(
                &reg,
                "Loudspeaker",
                &CommandConfig::new().with("message_text", 3.0)
            ),
            Err(RoschainError::ParameterType { .. })
        ));
    }

    #[test]
    fn observe_targets_are_sensors() {
        for (op, cat, target) in CommandRegistry::standard().listing() {
            if cat == CommandCategory::ActiveObserve {
                assert!(target.is_sensor(), "{}", op.name);
                assert_ne!(target, CommandTarget::Controller);
            }
        }
    }

    #[test]
    fn wraps_payload_variants() {
        assert_eq!(wrap_payload(&Payload::Blob(vec![0, 1, 2])).unwrap(), "AAEC");
        assert_eq!(
            wrap_payload(&Payload::Text("hello".into())).unwrap(),
            "hello"
        );
        let mut m = Structured::new();
        m.insert("b".into(), Value::Number(2.5));
        m.insert("a".into(), Value::Text("fire".into()));
        assert_eq!(
            wrap_payload(&Payload::Structured(m.clone())).unwrap(),
            "a=fire\nb=2.5\n"
        );
        assert_eq!(parse_canonical("a=fire\nb=2.5\n").unwrap(), m);
    }

    #[test]
    fn multiline_structured_values_are_unsupported() {
        let mut m = Structured::new();
        m.insert("note".into(), Value::Text("two\nlines".into()));
        assert!(matches!(
            wrap_payload(&Payload::Structured(m)),
            Err(RoschainError::UnsupportedPayload(_))
        ));
    }

    #[test]
    fn command_payload_round_trip() {
        let reg = CommandRegistry::standard();
        let c = translate(
            &reg,
            "Move_ENU",
            &CommandConfig::new()
                .with("x", 1.0)
                .with("y", -2.0)
                .with("z", 10.0),
        )
        .unwrap();
        assert_eq!(Command::from_payload(&c.to_payload(), &reg).unwrap(), c);
        assert_eq!(c.render(), "Move_ENU -> Controller {x=1, y=-2, z=10}");
    }

    #[test]
    fn publish_command_routes_by_channel() {
        let bus = Bus::new();
        let rc = Roschain::new(bus.clone(), "Agent").unwrap();
        let listener = bus.register_node("Listener").unwrap();
        let seen = Arc::new(Mutex::new(Vec::new()));
        for topic in [COMMAND_TOPIC, GROUND_REPORT_TOPIC] {
            let s = seen.clone();
            bus.subscribe(&listener, topic, QueueConfig::default(), move |e| {
                s.lock().unwrap().push(e.topic.clone())
            })
            .unwrap();
        }
        let speak = rc
            .translate(
                "Loudspeaker",
                &CommandConfig::new().with("message_text", "stay calm"),
            )
            .unwrap();
        let report = rc
            .translate(
                "Loudspeaker",
                &CommandConfig::new()
                    .with("message_text", "fire located")
                    .with("channel", GROUND_CHANNEL),
            )
            .unwrap();
        rc.publish_command(&speak).unwrap();
        rc.publish_command(&report).unwrap();
        bus.spin_once();
        assert_eq!(*seen.lock().unwrap(), [COMMAND_TOPIC, GROUND_REPORT_TOPIC]);
    }

    #[test]
    fn active_observation_requests() {
        let bus = Bus::new();
        let rc = Roschain::new(bus.clone(), "Agent").unwrap();
        let cam = bus.register_node("Camera").unwrap();
        bus.advertise_service(
            &cam,
            &CommandTarget::DownwardCamera.observation_service(),
            |_| Ok(Payload::Blob(vec![0, 1, 2])),
        )
        .unwrap();
        let p = rc
            .request_active_observation("Down_Observe", &CommandConfig::new())
            .unwrap();
        assert_eq!(p.text, "AAEC");
        assert_eq!(p.topic, "active_observation/downward_camera");
        assert!(matches!(
            rc.request_active_observation("Lidar_Observe", &CommandConfig::new()),
            Err(RoschainError::Bus(BusError::Timeout { .. }))
        ));
        assert!(matches!(
            rc.request_active_observation("Idle", &CommandConfig::new()),
            Err(RoschainError::CategoryMismatch { .. })
        ));
    }

    #[test]
    fn subscriber_keeps_latest_wrapped_perception() {
        let bus = Bus::new();
        let rc = Roschain::new(bus.clone(), "Agent").unwrap();
        let cam = bus.register_node("Camera").unwrap();
        rc.subscriber("camera/image", QueueConfig::default())
            .unwrap();
        bus.publish(&cam, "camera/image", Payload::Blob(vec![9]))
            .unwrap();
        bus.publish(&cam, "camera/image", Payload::Blob(vec![0, 1, 2]))
            .unwrap();
        bus.spin_once();
        let ps = rc.perceptions();
        assert_eq!(ps.len(), 1);
        assert_eq!(ps[0].text, "AAEC");
        assert_eq!(ps[0].format, "Blob");
    }
}
