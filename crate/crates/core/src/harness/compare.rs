use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{run, BackendKind, HarnessError, RunConfig, RunReport};
use crate::scenarios::ScenarioId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonCell {
    #[serde(rename = "TR")]
    pub tr: f64,
    #[serde(rename = "AR")]
    pub ar: f64,
    pub step_count: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub backend: BackendKind,
    pub cells: BTreeMap<ScenarioId, ComparisonCell>,
}

/// Rows are backends, columns are (TR, AR) per scenario.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub scenarios: Vec<ScenarioId>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    pub fn cell(&self, backend: BackendKind, scenario: ScenarioId) -> Option<&ComparisonCell> {
        self.rows
            .iter()
            .find(|r| r.backend == backend)
            .and_then(|r| r.cells.get(&scenario))
    }

    /// CSV with TR and AR to one decimal place; missing cells are blank.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["backend".to_string()];
        for s in &self.scenarios {
            header.push(format!("{}_TR", s.name()));
            header.push(format!("{}_AR", s.name()));
        }
        w.write_record(&header).expect("in-memory write");
        for row in &self.rows {
            let mut rec = vec![row.backend.name().to_string()];
            for s in &self.scenarios {
                match row.cells.get(s) {
                    Some(c) => {
                        rec.push(format!("{:.1}", c.tr));
                        rec.push(format!("{:.1}", c.ar));
                    }
                    None => rec.extend([String::new(), String::new()]),
                }
            }
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }
}

/// Every offline backend on every scenario with one seed.
pub fn default_configs(seed: u64) -> Vec<RunConfig> {
    BackendKind::OFFLINE
        .into_iter()
        .flat_map(|b| {
            ScenarioId::ALL
                .into_iter()
                .map(move |s| RunConfig::new(s, b, seed))
        })
        .collect()
}

/// Runs each config and tabulates the reports. Backends keep first-seen order.
pub fn compare(configs: &[RunConfig]) -> Result<(ComparisonTable, Vec<RunReport>), HarnessError> {
    let mut table = ComparisonTable::default();
    let mut reports = Vec::new();
    for c in configs {
        let r = run(c)?;
        if !table.scenarios.contains(&c.scenario) {
            table.scenarios.push(c.scenario);
        }
        let idx = match table.rows.iter().position(|row| row.backend == c.backend) {
            Some(i) => i,
            None => {
                table.rows.push(ComparisonRow {
                    backend: c.backend,
                    cells: BTreeMap::new(),
                });
                table.rows.len() - 1
            }
        };
        table.rows[idx].cells.insert(
            c.scenario,
            ComparisonCell {
                tr: r.tr,
                ar: r.ar,
                step_count: r.step_count,
                seed: r.seed,
            },
        );
        reports.push(r);
    }
    Ok((table, reports))
}
