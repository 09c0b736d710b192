use embodied_core::geometry::Vec3;
use embodied_core::roschain::CommandTarget;
use embodied_core::scenarios::{landing_reward, ScenarioId, ScoredAction, World, MOVE_BOUND};
use proptest::prelude::*;

fn wildfire_action() -> impl Strategy<Value = ScoredAction> {
    prop_oneof![
        4 => (-MOVE_BOUND..=MOVE_BOUND, -MOVE_BOUND..=MOVE_BOUND, -1.0f64..=1.0)
            .prop_map(|(x, y, z)| ScoredAction::Move { delta: Vec3::new(x, y, z) }),
        1 => Just(ScoredAction::ReportIgnition),
        1 => (1u32..=3).prop_map(|count| ScoredAction::ReportTrapped { count }),
        1 => Just(ScoredAction::EstablishCommunication),
        1 => (1u32..=3).prop_map(|count| ScoredAction::DispatchKits { count }),
        1 => Just(ScoredAction::ActivateSensor { sensor: CommandTarget::InfraredCamera }),
        1 => Just(ScoredAction::Hold),
    ]
}

/// Moves the drone to `target` in admissible steps.
fn fly(w: &mut World, target: Vec3) {
    for _ in 0..1000 {
        let d = target - w.drone;
        let step = Vec3::new(
            d.x.clamp(-MOVE_BOUND, MOVE_BOUND),
            d.y.clamp(-MOVE_BOUND, MOVE_BOUND),
            d.z.clamp(-MOVE_BOUND, MOVE_BOUND),
        );
        if step.norm() < 1e-12 {
            return;
        }
        w.apply_action(&ScoredAction::Move { delta: step }).unwrap();
    }
}

proptest! {
    #[test]
    fn wildfire_score_stays_in_range(actions in prop::collection::vec(wildfire_action(), 1..200)) {
        let mut w = World::reset(ScenarioId::Wildfire, 1);
        for a in &actions {
            w.apply_action(a).unwrap();
            let n = w.ledger().normalized();
            prop_assert!((0.0..=100.0).contains(&n));
        }
    }

    #[test]
    fn safenav_score_never_drops(moves in prop::collection::vec((-5.0f64..=5.0, -5.0f64..=5.0, -5.0f64..=5.0), 1..300)) {
        let mut w = World::reset(ScenarioId::SafeNav, 0);
        let mut last = 0.0;
        for (x, y, z) in moves {
            w.apply_action(&ScoredAction::Move { delta: Vec3::new(x, y, z) }).unwrap();
            let n = w.ledger().normalized();
            prop_assert!(n >= last && n <= 100.0);
            last = n;
        }
    }

    #[test]
    fn landing_reward_decreases_with_distance(a in 0.0f64..5.0, b in 0.0f64..5.0, outside in 5.0001f64..100.0) {
        let (near, far) = if a < b { (a, b) } else { (b, a) };
        prop_assume!(far - near > 1e-9);
        prop_assert!(landing_reward(near, 5.0) > landing_reward(far, 5.0));
        prop_assert_eq!(landing_reward(outside, 5.0), 0.0);
    }

    #[test]
    fn out_of_range_moves_are_rejected(x in 5.001f64..50.0) {
        let mut w = World::reset(ScenarioId::Landing, 0);
        let east = w.apply_action(&ScoredAction::Move { delta: Vec3::new(x, 0.0, 0.0) });
        let south = w.apply_action(&ScoredAction::Move { delta: Vec3::new(0.0, -x, 0.0) });
        prop_assert!(east.is_err() && south.is_err());
    }
}

#[test]
fn reentering_a_building_earns_nothing() {
    let mut w = World::reset(ScenarioId::SafeNav, 0);
    fly(&mut w, Vec3::new(0.0, 40.0, 10.0));
    fly(&mut w, Vec3::new(0.0, 40.0, 2.0));
    let once = w.ledger().raw_total();
    assert_eq!(once, 10.0);
    fly(&mut w, Vec3::new(0.0, 40.0, 10.0));
    fly(&mut w, Vec3::new(0.0, 40.0, 1.0));
    assert_eq!(w.ledger().raw_total(), once);
}

#[test]
fn kit_rewards_saturate_at_sixteen() {
    let mut w = World::reset(ScenarioId::Wildfire, 0);
    let groups: Vec<Vec3> = w
        .entities
        .iter()
        .filter(|e| e.entity.kind.name() == "trapped_group")
        .map(|e| e.entity.position)
        .collect();
    for g in groups {
        fly(&mut w, Vec3::new(g.x, g.y, 10.0));
        for _ in 0..5 {
            w.apply_action(&ScoredAction::DispatchKits { count: 3 })
                .unwrap();
        }
    }
    let kits: f64 = w
        .ledger()
        .items
        .iter()
        .filter(|i| i.label.starts_with("kits"))
        .map(|i| i.points)
        .sum();
    assert_eq!(kits, 16.0);
}

#[test]
fn observations_are_reproducible() {
    for s in ScenarioId::ALL {
        let run = || {
            let mut w = World::reset(s, 9);
            w.noise = true;
            let mut frames = Vec::new();
            for _ in 0..5 {
                frames.push(serde_json::to_string(&w.observe()).unwrap());
                w.apply_action(&ScoredAction::Move {
                    delta: Vec3::new(1.0, 1.0, 0.0),
                })
                .unwrap();
                w.tick();
            }
            frames
        };
        assert_eq!(run(), run());
    }
}
