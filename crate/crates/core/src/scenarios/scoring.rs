use serde::{Deserialize, Serialize};

use super::APPROACH_FULL_CREDIT_DISTANCE;
use crate::memory::tokenize;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerItem {
    pub label: String,
    pub points: f64,
}

/// Itemized raw score of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardLedger {
    pub items: Vec<LedgerItem>,
    pub raw_max: f64,
}

impl RewardLedger {
    pub fn new(raw_max: f64) -> Self {
        Self {
            items: Vec::new(),
            raw_max,
        }
    }

    pub fn push(&mut self, label: String, points: f64) {
        self.items.push(LedgerItem { label, points });
    }

    pub fn raw_total(&self) -> f64 {
        self.items.iter().fold(0.0, |acc, i| acc + i.points)
    }

    /// Raw total clamped to `[0, raw_max]` and scaled to 0..100.
    pub fn normalized(&self) -> f64 {
        100.0 * self.raw_total().clamp(0.0, self.raw_max) / self.raw_max
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["label", "points"])
            .expect("in-memory write");
        for item in &self.items {
            w.write_record([item.label.as_str(), &format!("{}", item.points)])
                .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }
}

/// `10 * clamp(1 - (d - 3) / (d0 - 3), 0, 1)`.
pub fn approach_reward(d: f64, d0: f64) -> f64 {
    let span = d0 - APPROACH_FULL_CREDIT_DISTANCE;
    if span <= 0.0 {
        return if d <= APPROACH_FULL_CREDIT_DISTANCE {
            10.0
        } else {
            0.0
        };
    }
    10.0 * (1.0 - (d - APPROACH_FULL_CREDIT_DISTANCE) / span).clamp(0.0, 1.0)
}

/// 10 for touching the pad plus a linear bonus of up to 10 toward the center.
pub fn landing_reward(d: f64, radius: f64) -> f64 {
    if d <= radius {
        10.0 + 10.0 * (1.0 - d / radius)
    } else {
        0.0
    }
}

/// Keyword slots a fault report is judged against; a slot is hit when any of
/// its words appears in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultDescription {
    pub slots: Vec<Vec<String>>,
}

impl FaultDescription {
    pub fn stationary_turbine(side: &str) -> Self {
        let slot = |ws: &[&str]| ws.iter().map(|w| w.to_string()).collect();
        Self {
            slots: vec![
                slot(&[side]),
                slot(&["turbine"]),
                slot(&["stationary", "stopped", "ceases"]),
                slot(&["rotation"]),
            ],
        }
    }
}

/// `10 * hits / slots`, rounded to the nearest integer.
pub fn match_score(report: &str, fault: &FaultDescription) -> f64 {
    if fault.slots.is_empty() {
        return 0.0;
    }
    let tokens: std::collections::BTreeSet<String> = tokenize(report).collect();
    let hits = fault
        .slots
        .iter()
        .filter(|slot| slot.iter().any(|w| tokens.contains(w)))
        .count();
    (10.0 * hits as f64 / fault.slots.len() as f64).round()
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(x: f64, y: f64, poly: &[[f64; 2]]) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}
