//! The embodied action library.
//!
//! An [`ActionFunction`] names the payloads it needs and an ordered
//! [`FlowStep`] list. Executing an action runs the flow to bind every command
//! parameter (querying services and topics on the way) and ends by translating
//! exactly one command.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bus::{BusError, Payload, Structured, Value};
use crate::geometry::Vec3;
use crate::roschain::{
    Command, CommandConfig, CommandRegistry, ParamKind, ParamSource, Roschain, RoschainError,
};

const SHIPPED_LIBRARY: &str = include_str!("../data/library.toml");

/// Payload tags an action may require.
pub const PAYLOAD_TAGS: [&str; 7] = [
    "loudspeaker",
    "manipulator",
    "downward_camera",
    "depth_camera",
    "infrared_camera",
    "lidar",
    "radio_link",
];

/// Prefix of bindings that come from the plan step's arguments.
pub const ARG_PREFIX: &str = "arg.";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ActionError {
    #[error("no action named '{0}'")]
    UnknownAction(String),
    #[error("action '{action}' could not bind '{parameter}'")]
    UnresolvedParameter { action: String, parameter: String },
    #[error("action '{action}' timed out waiting for '{service}'")]
    FlowServiceTimeout { action: String, service: String },
    #[error("service '{service}' failed for action '{action}': {reason}")]
    FlowServiceFault {
        action: String,
        service: String,
        reason: String,
    },
    #[error("action '{action}': {source}")]
    Translate {
        action: String,
        source: RoschainError,
    },
    #[error("invalid library: {0}")]
    Library(String),
    #[error("unknown payload tag '{0}'")]
    UnknownPayload(String),
    #[error("payload configuration must not be empty")]
    EmptyPayloadConfiguration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resolution {
    /// Taken directly from the plan step's arguments.
    Plan,
    /// Produced by a flow step.
    Flow,
    /// A literal or the registry default.
    Preinitialized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaParam {
    pub name: String,
    pub kind: ParamKind,
    pub source: Resolution,
}

/// Source of one emitted command parameter.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamBinding {
    Ref { name: String, optional: bool },
    Literal(Value),
}

impl ParamBinding {
    fn parse(v: &toml::Value) -> Result<Self, ActionError> {
        match v {
            toml::Value::String(s) => match s.strip_prefix('$') {
                Some(r) => {
                    let (name, optional) = match r.strip_suffix('?') {
                        Some(n) => (n, true),
                        None => (r, false),
                    };
                    if name.is_empty() {
                        return Err(ActionError::Library("empty binding reference".into()));
                    }
                    Ok(ParamBinding::Ref {
                        name: name.to_string(),
                        optional,
                    })
                }
                None => Ok(ParamBinding::Literal(Value::Text(s.clone()))),
            },
            toml::Value::Integer(i) => Ok(ParamBinding::Literal(Value::Number(*i as f64))),
            toml::Value::Float(f) => Ok(ParamBinding::Literal(Value::Number(*f))),
            other => Err(ActionError::Library(format!(
                "unsupported parameter value {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FlowStep {
    QueryService {
        service: String,
        bind: String,
    },
    ReadTopic {
        topic: String,
        bind: String,
    },
    Compute {
        function: ComputeFn,
        inputs: Vec<String>,
        bind: String,
    },
    /// `operation` may contain `${binding}` placeholders.
    EmitCommand {
        operation: String,
        params: BTreeMap<String, ParamBinding>,
    },
}

/// Named pure functions available to `compute` steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComputeFn {
    /// Target from `arg.x/y/z` or `arg.bearing_deg` + `arg.distance`, with
    /// `arg.altitude` overriding z; missing coordinates keep the input pose.
    ResolvePosition,
    /// Body offset from `arg.dx/dy/dz`, each defaulting to zero.
    ResolveOffset,
}

impl ComputeFn {
    fn from_name(name: &str) -> Option<Self> {
        match name {
            "resolve_position" => Some(ComputeFn::ResolvePosition),
            "resolve_offset" => Some(ComputeFn::ResolveOffset),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ComputeFn::ResolvePosition => "resolve_position",
            ComputeFn::ResolveOffset => "resolve_offset",
        }
    }

    fn arity(self) -> usize {
        match self {
            ComputeFn::ResolvePosition => 1,
            ComputeFn::ResolveOffset => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OperationFlow {
    pub steps: Vec<FlowStep>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionFunction {
    pub name: String,
    pub description: String,
    pub required_payloads: BTreeSet<String>,
    pub parameter_schema: Vec<SchemaParam>,
    pub flow: OperationFlow,
}

impl ActionFunction {
    fn emit(&self) -> (&str, &BTreeMap<String, ParamBinding>) {
        match self.flow.steps.last() {
            Some(FlowStep::EmitCommand { operation, params }) => (operation, params),
            _ => unreachable!("validated actions end with an emit step"),
        }
    }

    /// Plan arguments the flow reads.
    pub fn arguments(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        let (operation, params) = self.emit();
        for p in params.values() {
            if let ParamBinding::Ref { name, .. } = p {
                if let Some(a) = name.strip_prefix(ARG_PREFIX) {
                    out.insert(a.to_string());
                }
            }
        }
        for (_, name) in placeholders(operation) {
            if let Some(a) = name.strip_prefix(ARG_PREFIX) {
                out.insert(a.to_string());
            }
        }
        for step in &self.flow.steps {
            if let FlowStep::Compute { function, .. } = step {
                let implicit: &[&str] = match function {
                    ComputeFn::ResolvePosition => {
                        &["x", "y", "z", "bearing_deg", "distance", "altitude"]
                    }
                    ComputeFn::ResolveOffset => &["dx", "dy", "dz"],
                };
                out.extend(implicit.iter().map(|s| s.to_string()));
            }
        }
        out
    }

    /// One-line summary used in the capabilities section of the agent context.
    pub fn summary(&self) -> String {
        let args: Vec<String> = self.arguments().into_iter().collect();
        let payloads: Vec<&str> = self.required_payloads.iter().map(String::as_str).collect();
        format!(
            "{}({}): {} [needs: {}]",
            self.name,
            args.join(", "),
            self.description,
            if payloads.is_empty() {
                "-".to_string()
            } else {
                payloads.join(", ")
            }
        )
    }
}

/// Payload tags mounted on the vehicle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PayloadConfiguration(BTreeSet<String>);

impl PayloadConfiguration {
    pub fn new<I, S>(tags: I) -> Result<Self, ActionError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = tags.into_iter().map(Into::into).collect();
        if set.is_empty() {
            return Err(ActionError::EmptyPayloadConfiguration);
        }
        if let Some(bad) = set.iter().find(|t| !PAYLOAD_TAGS.contains(&t.as_str())) {
            return Err(ActionError::UnknownPayload(bad.clone()));
        }
        Ok(Self(set))
    }

    pub fn all() -> Self {
        Self(PAYLOAD_TAGS.iter().map(|t| t.to_string()).collect())
    }

    pub fn tags(&self) -> &BTreeSet<String> {
        &self.0
    }

    pub fn contains(&self, tag: &str) -> bool {
        self.0.contains(tag)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ActionLibrary {
    actions: Vec<ActionFunction>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LibraryFile {
    #[serde(default)]
    action: Vec<ActionDecl>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionDecl {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    payloads: Vec<String>,
    #[serde(default)]
    schema: Vec<SchemaParam>,
    steps: Vec<StepDecl>,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum StepDecl {
    QueryService {
        service: String,
        bind: String,
    },
    ReadTopic {
        topic: String,
        bind: String,
    },
    Compute {
        function: String,
        #[serde(default)]
        inputs: Vec<String>,
        bind: String,
    },
    Emit {
        operation: String,
        #[serde(default)]
        params: toml::Table,
    },
}

/// `${name}` placeholders in an operation template as (range, name).
fn placeholders(template: &str) -> Vec<(std::ops::Range<usize>, &str)> {
    let mut out = Vec::new();
    let mut rest = 0;
    while let Some(start) = template[rest..].find("${").map(|i| i + rest) {
        let Some(end) = template[start..].find('}').map(|i| i + start) else {
            break;
        };
        out.push((start..end + 1, &template[start + 2..end]));
        rest = end + 1;
    }
    out
}

fn binding_known(name: &str, bound: &BTreeSet<String>) -> bool {
    name.starts_with(ARG_PREFIX)
        || bound.contains(name)
        || name
            .split_once('.')
            .is_some_and(|(prefix, _)| bound.contains(prefix))
}

impl ActionLibrary {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn shipped() -> Self {
        Self::from_toml_str(SHIPPED_LIBRARY).expect("shipped library is valid")
    }

    pub fn from_file(path: &Path) -> Result<Self, ActionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ActionError::Library(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ActionError> {
        let file: LibraryFile =
            toml::from_str(text).map_err(|e| ActionError::Library(e.to_string()))?;
        let mut lib = Self::empty();
        for decl in file.action {
            lib.add(Self::build(decl)?)?;
        }
        Ok(lib)
    }

    /// Adds an action, replacing none; duplicate names are rejected.
    pub fn add(&mut self, action: ActionFunction) -> Result<(), ActionError> {
        if self.get(&action.name).is_some() {
            return Err(ActionError::Library(format!(
                "duplicate action '{}'",
                action.name
            )));
        }
        validate(&action)?;
        self.actions.push(action);
        Ok(())
    }

    /// Merges actions declared in another library file.
    pub fn extend_from_toml_str(&mut self, text: &str) -> Result<(), ActionError> {
        for action in Self::from_toml_str(text)?.actions {
            self.add(action)?;
        }
        Ok(())
    }

    fn build(decl: ActionDecl) -> Result<ActionFunction, ActionError> {
        let mut steps = Vec::with_capacity(decl.steps.len());
        for s in decl.steps {
            steps.push(match s {
                StepDecl::QueryService { service, bind } => {
                    FlowStep::QueryService { service, bind }
                }
                StepDecl::ReadTopic { topic, bind } => FlowStep::ReadTopic { topic, bind },
                StepDecl::Compute {
                    function,
                    inputs,
                    bind,
                } => FlowStep::Compute {
                    function: ComputeFn::from_name(&function).ok_or_else(|| {
                        ActionError::Library(format!("unknown function '{function}'"))
                    })?,
                    inputs,
                    bind,
                },
                StepDecl::Emit { operation, params } => FlowStep::EmitCommand {
                    operation,
                    params: params
                        .iter()
                        .map(|(k, v)| Ok((k.clone(), ParamBinding::parse(v)?)))
                        .collect::<Result<_, ActionError>>()?,
                },
            });
        }
        Ok(ActionFunction {
            name: decl.name,
            description: decl.description,
            required_payloads: decl.payloads.into_iter().collect(),
            parameter_schema: decl.schema,
            flow: OperationFlow { steps },
        })
    }

    pub fn actions(&self) -> &[ActionFunction] {
        &self.actions
    }

    pub fn get(&self, name: &str) -> Option<&ActionFunction> {
        self.actions.iter().find(|a| a.name == name)
    }

    /// Actions whose required payloads are all mounted.
    pub fn lookup(&self, config: &PayloadConfiguration) -> Vec<&ActionFunction> {
        self.actions
            .iter()
            .filter(|a| a.required_payloads.iter().all(|p| config.contains(p)))
            .collect()
    }
}

fn validate(action: &ActionFunction) -> Result<(), ActionError> {
    let err = |m: String| Err(ActionError::Library(format!("{}: {m}", action.name)));
    if action.name.is_empty() {
        return err("empty name".into());
    }
    if let Some(bad) = action
        .required_payloads
        .iter()
        .find(|t| !PAYLOAD_TAGS.contains(&t.as_str()))
    {
        return Err(ActionError::UnknownPayload(bad.clone()));
    }
    let Some((last, body)) = action.flow.steps.split_last() else {
        return err("no steps".into());
    };
    let FlowStep::EmitCommand { operation, params } = last else {
        return err("the last step must emit a command".into());
    };
    let registry = CommandRegistry::standard();
    if placeholders(operation).is_empty() && !registry.contains(operation) {
        return err(format!("'{operation}' is not a registered operation"));
    }
    // Each bind name is produced by exactly one step, and steps only read
    // names bound before them.
    let mut bound = BTreeSet::new();
    for step in body {
        let bind = match step {
            FlowStep::QueryService { bind, .. } | FlowStep::ReadTopic { bind, .. } => bind,
            FlowStep::Compute {
                function,
                inputs,
                bind,
            } => {
                if inputs.len() != function.arity() {
                    return err(format!(
                        "{} takes {} input(s)",
                        function.name(),
                        function.arity()
                    ));
                }
                if let Some(i) = inputs.iter().find(|i| !bound.contains(*i)) {
                    return err(format!("compute reads '{i}' before it is bound"));
                }
                bind
            }
            FlowStep::EmitCommand { .. } => return err("only the last step may emit".into()),
        };
        if bind.is_empty() || bind.contains('.') || !bound.insert(bind.clone()) {
            return err(format!("invalid or repeated binding '{bind}'"));
        }
    }
    for (name, p) in params {
        if let ParamBinding::Ref { name: r, .. } = p {
            if !binding_known(r, &bound) {
                return err(format!("parameter '{name}' reads unbound '{r}'"));
            }
        }
    }
    for (_, r) in placeholders(operation) {
        if !binding_known(r, &bound) {
            return err(format!("operation template reads unbound '{r}'"));
        }
    }
    for s in &action.parameter_schema {
        let Some(p) = params.get(&s.name) else {
            return err(format!("schema parameter '{}' is never emitted", s.name));
        };
        let ok = match (s.source, p) {
            (Resolution::Plan, ParamBinding::Ref { name, .. }) => name.starts_with(ARG_PREFIX),
            (Resolution::Flow, ParamBinding::Ref { name, .. }) => !name.starts_with(ARG_PREFIX),
            (Resolution::Preinitialized, ParamBinding::Literal(_)) => true,
            (Resolution::Preinitialized, ParamBinding::Ref { optional, .. }) => *optional,
            _ => false,
        };
        if !ok {
            return err(format!(
                "schema parameter '{}' does not match its source",
                s.name
            ));
        }
    }
    Ok(())
}

/// Bindings accumulated while running a flow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bindings(BTreeMap<String, Value>);

impl Bindings {
    pub fn from_args(args: &Structured) -> Self {
        Self(
            args.iter()
                .map(|(k, v)| (format!("{ARG_PREFIX}{k}"), v.clone()))
                .collect(),
        )
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.0.get(name)
    }

    fn number(&self, name: &str) -> Option<f64> {
        self.get(name).and_then(Value::as_f64)
    }

    fn has_prefix(&self, prefix: &str) -> bool {
        let p = format!("{prefix}.");
        self.0.contains_key(prefix) || self.0.keys().any(|k| k.starts_with(&p))
    }

    fn insert_payload(&mut self, bind: &str, payload: &Payload) {
        match payload {
            Payload::Structured(m) => {
                for (k, v) in m {
                    self.0.insert(format!("{bind}.{k}"), v.clone());
                }
            }
            Payload::Text(t) => {
                self.0.insert(bind.to_string(), Value::Text(t.clone()));
            }
            Payload::Blob(b) => {
                self.0.insert(
                    bind.to_string(),
                    Value::Text(
                        crate::roschain::wrap_payload(&Payload::Blob(b.clone()))
                            .unwrap_or_default(),
                    ),
                );
            }
        }
    }

    fn insert_vec(&mut self, bind: &str, v: Vec3) {
        self.0.insert(format!("{bind}.x"), Value::Number(v.x));
        self.0.insert(format!("{bind}.y"), Value::Number(v.y));
        self.0.insert(format!("{bind}.z"), Value::Number(v.z));
    }
}

impl fmt::Display for Bindings {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (k, v)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        Ok(())
    }
}

fn compute(
    action: &str,
    function: ComputeFn,
    inputs: &[String],
    env: &Bindings,
) -> Result<Vec3, ActionError> {
    let unresolved = |p: &str| ActionError::UnresolvedParameter {
        action: action.to_string(),
        parameter: p.to_string(),
    };
    match function {
        ComputeFn::ResolvePosition => {
            let base = &inputs[0];
            let coord = |c: &str| {
                let key = format!("{base}.{c}");
                env.number(&key).ok_or_else(|| unresolved(&key))
            };
            let pose = Vec3::new(coord("x")?, coord("y")?, coord("z")?);
            let arg = |c: &str| env.number(&format!("{ARG_PREFIX}{c}"));
            let mut target = match (arg("bearing_deg"), arg("distance")) {
                (Some(b), Some(d)) => pose.offset_by_bearing(b, d),
                (Some(_), None) => return Err(unresolved("arg.distance")),
                (None, Some(_)) => return Err(unresolved("arg.bearing_deg")),
                (None, None) => Vec3::new(
                    arg("x").unwrap_or(pose.x),
                    arg("y").unwrap_or(pose.y),
                    arg("z").unwrap_or(pose.z),
                ),
            };
            if let Some(alt) = arg("altitude") {
                target.z = alt;
            }
            Ok(target)
        }
        ComputeFn::ResolveOffset => {
            let arg = |c: &str| env.number(&format!("{ARG_PREFIX}{c}")).unwrap_or(0.0);
            Ok(Vec3::new(arg("dx"), arg("dy"), arg("dz")))
        }
    }
}

/// Runs the action's flow with the plan step's `args` and returns the
/// translated command. Nothing is published.
pub fn execute_flow(
    action: &ActionFunction,
    args: &Structured,
    roschain: &Roschain,
) -> Result<Command, ActionError> {
    let mut env = Bindings::from_args(args);
    let name = action.name.as_str();
    let unresolved = |p: &str| ActionError::UnresolvedParameter {
        action: name.to_string(),
        parameter: p.to_string(),
    };
    for step in &action.flow.steps {
        match step {
            FlowStep::QueryService { service, bind } => {
                let response = roschain
                    .request(service, &Payload::Text(String::new()))
                    .map_err(|e| match e {
                        RoschainError::Bus(BusError::Timeout { .. }) => {
                            ActionError::FlowServiceTimeout {
                                action: name.to_string(),
                                service: service.clone(),
                            }
                        }
                        other => ActionError::FlowServiceFault {
                            action: name.to_string(),
                            service: service.clone(),
                            reason: other.to_string(),
                        },
                    })?;
                env.insert_payload(bind, &response);
            }
            FlowStep::ReadTopic { topic, bind } => {
                let payload = roschain
                    .latest_payload(topic)
                    .ok_or_else(|| unresolved(bind))?;
                env.insert_payload(bind, &payload);
            }
            FlowStep::Compute {
                function,
                inputs,
                bind,
            } => {
                if let Some(missing) = inputs.iter().find(|i| !env.has_prefix(i)) {
                    return Err(unresolved(missing));
                }
                let v = compute(name, *function, inputs, &env)?;
                if !v.is_finite() {
                    return Err(unresolved(bind));
                }
                env.insert_vec(bind, v);
            }
            FlowStep::EmitCommand { operation, params } => {
                let mut op = operation.clone();
                for (range, key) in placeholders(operation).into_iter().rev() {
                    let v = env.get(key).ok_or_else(|| unresolved(key))?;
                    op.replace_range(range, &v.to_string());
                }
                let mut config = CommandConfig::new();
                for (param, binding) in params {
                    match binding {
                        ParamBinding::Literal(v) => {
                            config.set(param, v.clone(), ParamSource::Preinitialized)
                        }
                        ParamBinding::Ref { name: r, optional } => match env.get(r) {
                            Some(v) => config.set(param, v.clone(), ParamSource::Resolved),
                            None if *optional => {}
                            None => return Err(unresolved(param)),
                        },
                    }
                }
                return roschain.translate(&op, &config).map_err(|e| match e {
                    RoschainError::IncompleteConfig { parameter, .. } => unresolved(&parameter),
                    source => ActionError::Translate {
                        action: name.to_string(),
                        source,
                    },
                });
            }
        }
    }
    Err(ActionError::Library(format!(
        "{name}: flow has no emit step"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bus::Bus;
    use crate::controller::{ControllerNode, EstimatorNode, VehicleState};

    fn names(v: &[&ActionFunction]) -> Vec<String> {
        v.iter().map(|a| a.name.clone()).collect()
    }

    fn setup() -> (Bus, Roschain, ControllerNode) {
        let bus = Bus::new();
        let agent = Roschain::new(bus.clone(), "Agent").unwrap();
        let ctrl = ControllerNode::attach(
            &bus,
            "Controller",
            VehicleState::hovering(Vec3::new(1.0, 2.0, 10.0)),
        )
        .unwrap();
        EstimatorNode::attach(&bus, "Estimator").unwrap();
        ctrl.publish_state().unwrap();
        bus.spin_once();
        (bus, agent, ctrl)
    }

    fn args(pairs: &[(&str, Value)]) -> Structured {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.clone()))
            .collect()
    }

    #[test]
    fn shipped_library_loads() {
        let lib = ActionLibrary::shipped();
        assert_eq!(lib.actions().len(), 10);
    }

    #[test]
    fn lookup_by_payloads() {
        let lib = ActionLibrary::shipped();
        let found = names(&lib.lookup(&PayloadConfiguration::new(["loudspeaker"]).unwrap()));
        assert!(found.contains(&"broadcastReassurance".to_string()));
        assert!(!found.contains(&"dropEmergencyKit".to_string()));
        assert_eq!(
            lib.lookup(&PayloadConfiguration::all()).len(),
            lib.actions().len()
        );
        assert!(ActionLibrary::empty()
            .lookup(&PayloadConfiguration::all())
            .is_empty());
        assert!(PayloadConfiguration::new(Vec::<String>::new()).is_err());
    }

    #[test]
    fn move_to_position_queries_pose() {
        let (_bus, agent, _) = setup();
        let lib = ActionLibrary::shipped();
        let cmd = execute_flow(
            lib.get("moveToPosition").unwrap(),
            &args(&[("x", Value::Number(5.0)), ("y", Value::Number(6.0))]),
            &agent,
        )
        .unwrap();
        assert_eq!(cmd.operation.name, "Move_ENU");
        assert_eq!(cmd.param_f64("x"), Some(5.0));
        assert_eq!(cmd.param_f64("y"), Some(6.0));
        assert_eq!(cmd.param_f64("z"), Some(10.0));

        let cmd = execute_flow(
            lib.get("moveToPosition").unwrap(),
            &args(&[
                ("bearing_deg", Value::Number(90.0)),
                ("distance", Value::Number(4.0)),
                ("altitude", Value::Number(3.0)),
            ]),
            &agent,
        )
        .unwrap();
        assert!((cmd.param_f64("x").unwrap() - 5.0).abs() < 1e-9);
        assert!((cmd.param_f64("y").unwrap() - 2.0).abs() < 1e-9);
        assert_eq!(cmd.param_f64("z"), Some(3.0));
    }

    #[test]
    fn missing_estimator_times_out() {
        let bus = Bus::new();
        let agent = Roschain::new(bus, "Agent").unwrap();
        let lib = ActionLibrary::shipped();
        let err = execute_flow(
            lib.get("moveToPosition").unwrap(),
            &Structured::new(),
            &agent,
        )
        .unwrap_err();
        assert!(matches!(err, ActionError::FlowServiceTimeout { .. }));
    }

    #[test]
    fn text_actions_translate() {
        let (_bus, agent, _) = setup();
        let lib = ActionLibrary::shipped();
        let cmd = execute_flow(
            lib.get("broadcastReassurance").unwrap(),
            &args(&[("text", Value::Text("help is coming".into()))]),
            &agent,
        )
        .unwrap();
        assert_eq!(cmd.operation.name, "Loudspeaker");
        assert!(!cmd.is_ground_report());
        let cmd = execute_flow(
            lib.get("reportToCommand").unwrap(),
            &args(&[("text", Value::Text("fire spotted".into()))]),
            &agent,
        )
        .unwrap();
        assert!(cmd.is_ground_report());
        let err = execute_flow(
            lib.get("broadcastReassurance").unwrap(),
            &Structured::new(),
            &agent,
        )
        .unwrap_err();
        assert!(matches!(err, ActionError::UnresolvedParameter { .. }));
    }

    #[test]
    fn templated_observe_and_defaults() {
        let (_bus, agent, _) = setup();
        let lib = ActionLibrary::shipped();
        let cmd = execute_flow(
            lib.get("activeObserve").unwrap(),
            &args(&[("sensor", Value::Text("Down".into()))]),
            &agent,
        )
        .unwrap();
        assert_eq!(cmd.operation.name, "Down_Observe");
        let cmd = execute_flow(lib.get("takeoff").unwrap(), &Structured::new(), &agent).unwrap();
        assert_eq!(cmd.param_f64("altitude_m"), Some(10.0));
        let cmd = execute_flow(
            lib.get("dropEmergencyKit").unwrap(),
            &args(&[("count", Value::Number(2.0))]),
            &agent,
        )
        .unwrap();
        assert_eq!(cmd.param_text("action_id"), Some("release_kit"));
    }

    #[test]
    fn invalid_libraries_are_rejected() {
        let compute_before_bind = r#"
            [[action]]
            name = "bad"
            steps = [
              { kind = "compute", function = "resolve_position", inputs = ["pose"], bind = "t" },
              { kind = "emit", operation = "Move_ENU", params = { x = "$t.x", y = "$t.y", z = "$t.z" } },
            ]
        "#;
        assert!(ActionLibrary::from_toml_str(compute_before_bind).is_err());
        let unknown_op = r#"
            [[action]]
            name = "bad"
            steps = [{ kind = "emit", operation = "Teleport" }]
        "#;
        assert!(ActionLibrary::from_toml_str(unknown_op).is_err());
        let no_emit = r#"
            [[action]]
            name = "bad"
            steps = [{ kind = "query_service", service = "estimator/pose", bind = "pose" }]
        "#;
        assert!(ActionLibrary::from_toml_str(no_emit).is_err());
    }

    #[test]
    fn libraries_extend_without_code_changes() {
        let mut lib = ActionLibrary::shipped();
        lib.extend_from_toml_str(
            r#"
            [[action]]
            name = "climbFive"
            steps = [{ kind = "emit", operation = "Move_Body", params = { x = 0, y = 0, z = 5 } }]
        "#,
        )
        .unwrap();
        assert!(lib.get("climbFive").is_some());
        assert!(lib
            .extend_from_toml_str(
                r#"
            [[action]]
            name = "land"
            steps = [{ kind = "emit", operation = "Land" }]
        "#
            )
            .is_err());
    }
}
