//! HTTP reasoner: POSTs the five context sections to `<endpoint>/plan`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::backend::{BackendIdentity, Plan, PlanStep, ReasonerBackend};
use super::context::AgentContext;
use super::AgentError;
use crate::bus::Structured;

/// Environment variable holding the reasoner base URL.
pub const ENDPOINT_ENV: &str = "EMBODIED_REASONER_ENDPOINT";
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Serialize)]
pub struct PlanRequest {
    pub sections: [String; 5],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanResponse {
    pub summary: String,
    pub steps: Vec<ResponseStep>,
    #[serde(default)]
    pub contingency: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseStep {
    pub action: String,
    #[serde(default)]
    pub args: Structured,
    #[serde(default)]
    pub rationale: String,
}

impl From<PlanResponse> for Plan {
    fn from(r: PlanResponse) -> Self {
        Plan {
            situation_summary: r.summary,
            steps: r
                .steps
                .into_iter()
                .map(|s| PlanStep {
                    action: s.action,
                    args: s.args,
                    rationale: s.rationale,
                })
                .collect(),
            contingency: r.contingency.filter(|c| !c.is_empty()),
        }
    }
}

/// Parses a response body; schema violations map to `BackendUnavailable`.
pub fn parse_response(body: &str) -> Result<Plan, AgentError> {
    serde_json::from_str::<PlanResponse>(body)
        .map(Plan::from)
        .map_err(|e| AgentError::BackendUnavailable(format!("bad response: {e}")))
}

pub struct ExternalBackend {
    url: String,
    agent: ureq::Agent,
}

impl ExternalBackend {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        Self {
            url: format!("{}/plan", endpoint.trim_end_matches('/')),
            agent,
        }
    }

    pub fn from_env() -> Result<Self, AgentError> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| AgentError::BackendUnavailable(format!("{ENDPOINT_ENV} is not set")))?;
        Ok(Self::new(&endpoint, DEFAULT_TIMEOUT))
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl ReasonerBackend for ExternalBackend {
    fn identity(&self) -> BackendIdentity {
        BackendIdentity::External(self.url.clone())
    }

    fn generate(&mut self, context: &AgentContext) -> Result<Plan, AgentError> {
        let request = PlanRequest {
            sections: context.sections(),
        };
        let unavailable = |e: ureq::Error| AgentError::BackendUnavailable(e.to_string());
        let body = self
            .agent
            .post(&self.url)
            .send_json(&request)
            .map_err(unavailable)?
            .body_mut()
            .read_to_string()
            .map_err(unavailable)?;
        parse_response(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plan_responses() {
        let plan = parse_response(
            r#"{"summary":"s","steps":[{"action":"land","args":{},"rationale":"r"}],"contingency":""}"#,
        )
        .unwrap();
        assert_eq!(plan.steps[0].action, "land");
        assert_eq!(plan.contingency, None);
        assert!(matches!(
            parse_response(r#"{"steps":[]}"#),
            Err(AgentError::BackendUnavailable(_))
        ));
    }

    #[test]
    fn unreachable_endpoint_is_unavailable() {
        let mut b = ExternalBackend::new("http://127.0.0.1:9", Duration::from_millis(500));
        let ctx = AgentContext {
            structured_prompt: String::new(),
            task_description: String::new(),
            embodied_capabilities: vec![],
            observations: vec![],
            memories: Default::default(),
        };
        assert!(matches!(
            b.generate(&ctx),
            Err(AgentError::BackendUnavailable(_))
        ));
    }
}
