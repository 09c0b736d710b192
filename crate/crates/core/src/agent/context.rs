use serde::{Deserialize, Serialize};

use crate::actions::ActionFunction;
use crate::memory::{tokenize, MemoryDb, OperationRecord, Outcome, RetrievalResult};
use crate::roschain::{canonical_text, Perception};

/// Records retrieved per context build.
pub const RETRIEVAL_K: usize = 4;
/// Operation records included per context build.
pub const RECENT_OPERATIONS: usize = 5;

pub const DEFAULT_PROMPT: &str = "\
You are the planning layer of an aerial robot. Read the task, the actions you \
can call, the current observations and your memories. Describe the situation \
in one sentence, then give an ordered list of action calls with arguments and \
a short rationale for each. Use only the listed actions. Add a contingency \
note describing what to watch for next. Prefer holding position and \
monitoring when nothing relevant has changed.";

/// Memories section of the context.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MemorySection {
    pub retrieval: RetrievalResult,
    pub operations: Vec<OperationRecord>,
    /// Contingency notes of completed plans, oldest first.
    pub contingencies: Vec<String>,
}

impl MemorySection {
    pub fn is_empty(&self) -> bool {
        self.retrieval.is_empty() && self.operations.is_empty() && self.contingencies.is_empty()
    }

    pub fn has_contingency(&self, note: &str) -> bool {
        self.contingencies.iter().any(|c| c == note)
    }
}

/// The five inputs of one planning call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentContext {
    pub structured_prompt: String,
    pub task_description: String,
    pub embodied_capabilities: Vec<String>,
    pub observations: Vec<Perception>,
    pub memories: MemorySection,
}

/// Query used to retrieve memories: the task's tokens that are salience keywords.
pub fn memory_query(task: &str, memory: &MemoryDb) -> String {
    let mut seen = std::collections::BTreeSet::new();
    tokenize(task)
        .filter(|t| memory.keywords().contains(t) && seen.insert(t.clone()))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Assembles the context. `memory` is `None` for backends that plan without
/// memory; the memories section is then left empty.
pub fn build_context(
    task: &str,
    actions: &[&ActionFunction],
    observations: Vec<Perception>,
    memory: Option<(&MemoryDb, &[String])>,
    prompt_template: &str,
) -> AgentContext {
    let memories = match memory {
        Some((db, contingencies)) => {
            let query = memory_query(task, db);
            let retrieval = if query.is_empty() {
                RetrievalResult::default()
            } else {
                db.retrieve(&query, RETRIEVAL_K).unwrap_or_default()
            };
            MemorySection {
                retrieval,
                operations: db.recent_operations(RECENT_OPERATIONS).to_vec(),
                contingencies: contingencies.to_vec(),
            }
        }
        None => MemorySection::default(),
    };
    AgentContext {
        structured_prompt: prompt_template.to_string(),
        task_description: task.to_string(),
        embodied_capabilities: actions.iter().map(|a| a.summary()).collect(),
        observations,
        memories,
    }
}

fn outcome_text(o: &Outcome) -> String {
    match o {
        Outcome::Accepted => "accepted".into(),
        Outcome::Rejected(r) => format!("rejected: {r}"),
        Outcome::ServiceResult(t) => format!("result: {}", t.replace('\n', "; ")),
    }
}

impl AgentContext {
    /// The five sections as text, in order.
    pub fn sections(&self) -> [String; 5] {
        let capabilities = self.embodied_capabilities.join("\n");
        let observations = self
            .observations
            .iter()
            .map(|p| format!("[{}] ({})\n{}", p.topic, p.format, p.text))
            .collect::<Vec<_>>()
            .join("\n");
        let mut memories = String::new();
        if !self.memories.retrieval.records.is_empty() {
            memories.push_str(&format!("query: {}\n", self.memories.retrieval.query));
        }
        for r in &self.memories.retrieval.records {
            memories.push_str(&format!(
                "episode tick={} similarity={:.6} label={}\n",
                r.tick, r.similarity, r.label
            ));
            if let Some(scene) = &r.payload.scene {
                if let Ok(text) = canonical_text(scene) {
                    for line in text.lines() {
                        memories.push_str(&format!("  {line}\n"));
                    }
                }
            }
            if let Some(img) = &r.payload.image_b64 {
                memories.push_str(&format!("  image={img}\n"));
            }
        }
        for op in &self.memories.operations {
            memories.push_str(&format!(
                "operation tick={} {} -> {}\n",
                op.tick,
                op.operation.as_deref().unwrap_or("none"),
                outcome_text(&op.outcome)
            ));
        }
        for c in &self.memories.contingencies {
            memories.push_str(&format!("completed: {c}\n"));
        }
        [
            self.structured_prompt.clone(),
            self.task_description.clone(),
            capabilities,
            observations,
            memories.trim_end().to_string(),
        ]
    }

    /// Deterministic text form with numbered section headers.
    pub fn serialize(&self) -> String {
        const TITLES: [&str; 5] = [
            "Structured prompt",
            "Task",
            "Capabilities",
            "Observations",
            "Memories",
        ];
        let mut out = String::new();
        for (i, (title, body)) in TITLES.iter().zip(self.sections()).enumerate() {
            out.push_str(&format!("### ({}) {title}\n{body}\n", i + 1));
        }
        out
    }

    pub fn perception(&self, topic: &str) -> Option<&Perception> {
        self.observations.iter().find(|p| p.topic == topic)
    }
}
