use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ScenarioId;
use crate::geometry::Vec3;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LayoutError {
    #[error("layout parse error: {0}")]
    Parse(String),
    #[error("layout io error: {0}")]
    Io(String),
    #[error("invalid layout: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum EntityKind {
    FireSource,
    TrappedGroup {
        size: u32,
    },
    Firefighter,
    Helipad {
        radius: f64,
    },
    Turbine {
        side: String,
        rotating: bool,
    },
    /// Footprint polygon in absolute ground coordinates.
    Building {
        footprint: Vec<[f64; 2]>,
    },
    Obstacle {
        radius: f64,
    },
}

impl EntityKind {
    pub fn name(&self) -> &'static str {
        match self {
            EntityKind::FireSource => "fire_source",
            EntityKind::TrappedGroup { .. } => "trapped_group",
            EntityKind::Firefighter => "firefighter",
            EntityKind::Helipad { .. } => "helipad",
            EntityKind::Turbine { .. } => "turbine",
            EntityKind::Building { .. } => "building",
            EntityKind::Obstacle { .. } => "obstacle",
        }
    }

    /// Shoelace area of a building footprint; zero for other kinds.
    pub fn footprint_area(&self) -> f64 {
        let EntityKind::Building { footprint } = self else {
            return 0.0;
        };
        let n = footprint.len();
        let twice: f64 = (0..n)
            .map(|i| {
                let [x1, y1] = footprint[i];
                let [x2, y2] = footprint[(i + 1) % n];
                x1 * y2 - x2 * y1
            })
            .sum();
        twice.abs() / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub kind: EntityKind,
    pub position: Vec3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub scenario: ScenarioId,
    pub start: Vec3,
    pub entities: Vec<Entity>,
}

impl Layout {
    pub fn shipped(scenario: ScenarioId) -> Self {
        let text = match scenario {
            ScenarioId::Wildfire => include_str!("../../data/layouts/wildfire.json"),
            ScenarioId::Landing => include_str!("../../data/layouts/landing.json"),
            ScenarioId::Inspection => include_str!("../../data/layouts/inspection.json"),
            ScenarioId::SafeNav => include_str!("../../data/layouts/safenav.json"),
        };
        Self::from_json(text).expect("shipped layouts are valid")
    }

    pub fn from_json(text: &str) -> Result<Self, LayoutError> {
        let layout: Layout =
            serde_json::from_str(text).map_err(|e| LayoutError::Parse(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn from_file(path: &Path) -> Result<Self, LayoutError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LayoutError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), LayoutError> {
        if !self.start.is_finite() || self.start.z < 0.0 {
            return Err(LayoutError::Invalid(
                "start must be finite with z >= 0".into(),
            ));
        }
        let mut ids = std::collections::BTreeSet::new();
        for e in &self.entities {
            if e.id.is_empty() || e.id.contains(|c: char| c == '.' || c.is_whitespace()) {
                return Err(LayoutError::Invalid(format!("bad entity id '{}'", e.id)));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(LayoutError::Invalid(format!(
                    "duplicate entity id '{}'",
                    e.id
                )));
            }
            if !e.position.is_finite() {
                return Err(LayoutError::Invalid(format!(
                    "{} has a non-finite position",
                    e.id
                )));
            }
            match &e.kind {
                EntityKind::TrappedGroup { size } if *size == 0 => {
                    return Err(LayoutError::Invalid(format!("{} has size 0", e.id)));
                }
                EntityKind::Helipad { radius } | EntityKind::Obstacle { radius }
                    if !(*radius > 0.0) =>
                {
                    return Err(LayoutError::Invalid(format!(
                        "{} needs a positive radius",
                        e.id
                    )));
                }
                EntityKind::Building { footprint } if footprint.len() < 3 => {
                    return Err(LayoutError::Invalid(format!(
                        "{} needs at least 3 corners",
                        e.id
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_layouts_hold_their_invariants() {
        let wf = Layout::shipped(ScenarioId::Wildfire);
        let sizes: Vec<u32> = wf
            .entities
            .iter()
            .filter_map(|e| match e.kind {
                EntityKind::TrappedGroup { size } => Some(size),
                _ => None,
            })
            .collect();
        assert_eq!(sizes, [2, 1, 3, 2]);
        assert_eq!(
            wf.entities
                .iter()
                .filter(|e| e.kind == EntityKind::Firefighter)
                .count(),
            3
        );
        let fire = wf
            .entities
            .iter()
            .find(|e| e.kind == EntityKind::FireSource)
            .unwrap();
        assert_eq!(wf.start.horizontal_distance(fire.position), 100.0);

        let sn = Layout::shipped(ScenarioId::SafeNav);
        assert_eq!(
            sn.entities
                .iter()
                .filter(|e| matches!(e.kind, EntityKind::Building { .. }))
                .count(),
            9
        );

        let ins = Layout::shipped(ScenarioId::Inspection);
        let right = ins
            .entities
            .iter()
            .find(|e| matches!(&e.kind, EntityKind::Turbine { side, .. } if side == "right"))
            .unwrap();
        assert!(matches!(
            right.kind,
            EntityKind::Turbine {
                rotating: false,
                ..
            }
        ));

        let land = Layout::shipped(ScenarioId::Landing);
        assert!(matches!(land.entities[0].kind, EntityKind::Helipad { radius } if radius == 5.0));
    }

    #[test]
    fn footprint_area() {
        let k = EntityKind::Building {
            footprint: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0]],
        };
        assert_eq!(k.footprint_area(), 12.0);
    }

    #[test]
    fn rejects_duplicate_ids() {
        let text = r#"{"scenario":"landing","start":{"x":0,"y":0,"z":5},"entities":[
            {"id":"a","kind":{"type":"firefighter"},"position":{"x":0,"y":0,"z":0}},
            {"id":"a","kind":{"type":"firefighter"},"position":{"x":1,"y":0,"z":0}}]}"#;
        assert!(Layout::from_json(text).is_err());
    }
}
