//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use embodied_core::bus::{Bus, Payload, QueueConfig, Value};
use embodied_core::controller::{handle_command, tick, ArmState, ControllerCommand, VehicleState};
use embodied_core::geometry::Vec3;
use embodied_core::harness::{ablation_no_roschain, run, BackendKind, RunConfig, SHIPPED_SEEDS};
use embodied_core::memory::{EpisodicRecord, MemoryDb, MultimodalPayload};
use embodied_core::roschain::{unwrap_blob, wrap_payload};
use embodied_core::scenarios::{ScenarioId, ScoredAction, World, MOVE_BOUND};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn scripted(
    scenario: ScenarioId,
    backend: BackendKind,
) -> Result<embodied_core::harness::RunReport, String> {
    run(&RunConfig::new(scenario, backend, 0)).map_err(|e| e.to_string())
}

fn wildfire_tr() -> Check {
    let t0 = Instant::now();
    let full = scripted(ScenarioId::Wildfire, BackendKind::ScriptedFull)?;
    let elapsed = t0.elapsed();
    let single = scripted(ScenarioId::Wildfire, BackendKind::SingleCall)?;
    ensure((full.tr - 100.0).abs() <= 0.05, || {
        format!("scripted_full TR {}", full.tr)
    })?;
    // 20 of 68 raw points: approach plus fire report.
    let expected_single = format!("{:.1}", 20.0 / 68.0 * 100.0);
    ensure(format!("{:.1}", single.tr) == expected_single, || {
        format!(
            "single_call TR {:.3}, expected {expected_single}",
            single.tr
        )
    })?;
    ensure(elapsed < Duration::from_secs(5), || {
        format!("runtime {elapsed:?}")
    })?;
    Ok(format!(
        "scripted_full {:.1} in {} steps ({:.0} ms), single_call {:.1}",
        full.tr,
        full.step_count,
        elapsed.as_secs_f64() * 1000.0,
        single.tr
    ))
}

fn safenav_tr() -> Check {
    let full = scripted(ScenarioId::SafeNav, BackendKind::ScriptedFull)?;
    let first_only = scripted(ScenarioId::SafeNav, BackendKind::SingleCall)?;
    let entered = |r: &embodied_core::harness::RunReport| {
        r.ledger
            .items
            .iter()
            .filter(|i| i.label.starts_with("enter "))
            .count()
    };
    ensure(
        format!("{:.1}", full.tr) == format!("{:.1}", 8.0 / 9.0 * 100.0),
        || format!("scripted_full TR {}", full.tr),
    )?;
    ensure(entered(&full) == 8, || {
        format!("scripted_full entered {}", entered(&full))
    })?;
    ensure(
        format!("{:.1}", first_only.tr) == format!("{:.1}", 100.0 / 9.0),
        || format!("first-building-only TR {}", first_only.tr),
    )?;
    ensure(entered(&first_only) == 1, || {
        "first-building-only entered more than one".into()
    })?;
    Ok(format!(
        "scripted_full {:.1}, first-building-only {:.1}",
        full.tr, first_only.tr
    ))
}

/// Moves the world drone in admissible steps to `target` (horizontal only), then touches down.
fn touchdown_at(target: Vec3) -> Result<f64, String> {
    let mut w = World::reset(ScenarioId::Landing, 0);
    for _ in 0..1000 {
        let d = target - w.drone;
        let step = Vec3::new(
            d.x.clamp(-MOVE_BOUND, MOVE_BOUND),
            d.y.clamp(-MOVE_BOUND, MOVE_BOUND),
            0.0,
        );
        if step.norm() < 1e-12 {
            break;
        }
        w.apply_action(&ScoredAction::Move { delta: step })
            .map_err(|e| e.to_string())?;
    }
    w.apply_action(&ScoredAction::Touchdown)
        .map_err(|e| e.to_string())?;
    Ok(w.ledger().normalized())
}

fn landing() -> Check {
    let pad = Vec3::ZERO;
    let radius = 5.0;
    let center = touchdown_at(pad)?;
    let boundary = touchdown_at(Vec3::new(radius, 0.0, 0.0))?;
    let outside = touchdown_at(Vec3::new(0.0, radius + 0.5, 0.0))?;
    ensure((center - 100.0).abs() < 1e-9, || format!("center {center}"))?;
    ensure((boundary - 50.0).abs() < 1e-9, || {
        format!("boundary {boundary}")
    })?;
    ensure(outside == 0.0, || format!("outside {outside}"))?;
    let mut prev = f64::INFINITY;
    for i in 0..100 {
        let d = radius * i as f64 / 99.0;
        let r = touchdown_at(Vec3::new(d * 0.6, -d * 0.8, 0.0))?;
        ensure(r < prev, || {
            format!("not strictly decreasing at d={d}: {r} >= {prev}")
        })?;
        prev = r;
    }
    let flown = scripted(ScenarioId::Landing, BackendKind::ScriptedFull)?;
    ensure((flown.tr - 100.0).abs() < 1e-9, || {
        format!("scripted landing TR {}", flown.tr)
    })?;
    Ok(format!("center {center:.1}, boundary {boundary:.1}, outside {outside:.1}, 100 distances decreasing"))
}

fn inspection() -> Check {
    let report = |text: &str| -> Result<f64, String> {
        let mut w = World::reset(ScenarioId::Inspection, 0);
        w.apply_action(&ScoredAction::Report { text: text.into() })
            .map_err(|e| e.to_string())?;
        Ok(w.ledger().normalized())
    };
    let exact = report("the right turbine has stopped rotation")?;
    let empty = report("")?;
    let full = scripted(ScenarioId::Inspection, BackendKind::ScriptedFull)?;
    let single = scripted(ScenarioId::Inspection, BackendKind::SingleCall)?;
    ensure(exact == 100.0, || format!("exact report {exact}"))?;
    ensure(empty == 0.0, || format!("empty report {empty}"))?;
    ensure(full.tr == 100.0, || format!("scripted_full TR {}", full.tr))?;
    ensure(single.tr == 0.0 && single.ar == 0.0, || {
        format!("single_call TR {} AR {}", single.tr, single.ar)
    })?;
    Ok(format!(
        "exact {exact:.1}, empty {empty:.1}, scripted_full {:.1}/{:.1}, single_call {:.1}/{:.1}",
        full.tr, full.ar, single.tr, single.ar
    ))
}

fn ar_identity_and_ablation() -> Check {
    let mut runs = 0;
    for scenario in ScenarioId::ALL {
        for seed in SHIPPED_SEEDS {
            let mut reports = Vec::new();
            for backend in BackendKind::OFFLINE {
                let r = run(&RunConfig::new(scenario, backend, seed)).map_err(|e| e.to_string())?;
                ensure((r.ar - r.tr / r.step_count as f64).abs() < 1e-9, || {
                    format!("{scenario}/{backend}/{seed}: AR {} vs TR/steps", r.ar)
                })?;
                runs += 1;
                reports.push(r);
            }
            let direct = &reports[0];
            let ablated =
                ablation_no_roschain(&RunConfig::new(scenario, BackendKind::ScriptedFull, seed))
                    .map_err(|e| e.to_string())?;
            ensure(ablated.tr == direct.tr, || {
                format!(
                    "{scenario}/{seed}: ablation TR {} differs from {}",
                    ablated.tr, direct.tr
                )
            })?;
            ensure(
                ablated.step_count >= direct.step_count && direct.ar >= ablated.ar,
                || {
                    format!(
                        "{scenario}/{seed}: AR {} (steps {}) < ablation AR {} (steps {})",
                        direct.ar, direct.step_count, ablated.ar, ablated.step_count
                    )
                },
            )?;
            let random = &reports[3];
            ensure(random.tr <= direct.tr, || {
                format!(
                    "{scenario}/{seed}: random TR {} > scripted {}",
                    random.tr, direct.tr
                )
            })?;
        }
    }
    Ok(format!(
        "{runs} runs, ablation ordering holds on 4 scenarios x 10 seeds"
    ))
}

fn bus_suite() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0xb05);
    // Per-publisher FIFO under randomized interleavings.
    for trial in 0..1000 {
        let bus = Bus::new();
        let pubs: Vec<_> = (0..3)
            .map(|i| bus.register_node(&format!("p{i}")).unwrap())
            .collect();
        let sub = bus.register_node("sub").unwrap();
        let seen: Arc<Mutex<Vec<(String, String, f64)>>> = Arc::default();
        for topic in ["a", "b"] {
            let s = seen.clone();
            bus.subscribe(&sub, topic, QueueConfig::new(4096).unwrap(), move |env| {
                let v = env
                    .payload
                    .as_structured()
                    .and_then(|m| m.get("n"))
                    .and_then(Value::as_f64)
                    .unwrap();
                s.lock()
                    .unwrap()
                    .push((env.publisher_id.clone(), env.topic.clone(), v));
            })
            .unwrap();
        }
        let mut sent: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for n in 0..rng.random_range(1..120) {
            let p = &pubs[rng.random_range(0..pubs.len())];
            let topic = ["a", "b"][rng.random_range(0..2)];
            let mut m = embodied_core::bus::Structured::new();
            m.insert("n".into(), Value::Number(n as f64));
            bus.publish(p, topic, Payload::Structured(m)).unwrap();
            sent.entry((p.id().to_string(), topic.to_string()))
                .or_default()
                .push(n as f64);
            if rng.random_bool(0.2) {
                bus.spin_once();
            }
        }
        bus.spin_once();
        let mut got: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
        for (p, t, v) in seen.lock().unwrap().iter() {
            got.entry((p.clone(), t.clone())).or_default().push(*v);
        }
        ensure(got == sent, || {
            format!("FIFO violated in interleaving {trial}")
        })?;
    }
    // Drop-oldest keeps exactly the newest `capacity` envelopes.
    for capacity in 1..=8usize {
        for n in 0..=20usize {
            let bus = Bus::new();
            let p = bus.register_node("p").unwrap();
            let s = bus.register_node("s").unwrap();
            let seen: Arc<Mutex<Vec<u64>>> = Arc::default();
            let sink = seen.clone();
            bus.subscribe(&s, "t", QueueConfig::new(capacity).unwrap(), move |env| {
                sink.lock().unwrap().push(env.sequence)
            })
            .unwrap();
            for _ in 0..n {
                bus.publish(&p, "t", Payload::Text("x".into())).unwrap();
            }
            bus.spin_once();
            let kept = n.min(capacity);
            let expected: Vec<u64> = ((n - kept + 1) as u64..=n as u64).collect();
            ensure(*seen.lock().unwrap() == expected, || {
                format!("drop-oldest cap {capacity} n {n}")
            })?;
            ensure(bus.dropped_count() == (n - kept) as u64, || {
                "dropped count".into()
            })?;
        }
    }
    // Nothing published before subscribing is delivered.
    let bus = Bus::new();
    let p = bus.register_node("p").unwrap();
    let s = bus.register_node("s").unwrap();
    for _ in 0..5 {
        bus.publish(&p, "t", Payload::Text("early".into())).unwrap();
    }
    let seen: Arc<Mutex<Vec<String>>> = Arc::default();
    let sink = seen.clone();
    bus.subscribe(&s, "t", QueueConfig::default(), move |env| {
        if let Payload::Text(t) = env.payload.as_ref() {
            sink.lock().unwrap().push(t.clone());
        }
    })
    .unwrap();
    bus.publish(&p, "t", Payload::Text("late".into())).unwrap();
    bus.spin_once();
    ensure(*seen.lock().unwrap() == vec!["late".to_string()], || {
        "pre-subscription delivery".into()
    })?;
    // Each service call invokes the responder exactly once.
    let calls = Arc::new(Mutex::new(0u64));
    let counter = calls.clone();
    bus.advertise_service(&s, "echo", move |req| {
        *counter.lock().unwrap() += 1;
        Ok(req.clone())
    })
    .unwrap();
    for i in 0..100 {
        let req = Payload::Text(format!("r{i}"));
        let resp = bus
            .call_service(&p, "echo", &req, 5)
            .map_err(|e| e.to_string())?;
        ensure(resp == req, || "service echoed a different payload".into())?;
    }
    ensure(*calls.lock().unwrap() == 100, || {
        format!("{} responder calls", calls.lock().unwrap())
    })?;
    Ok(
        "FIFO over 1000 interleavings, drop-oldest, no early delivery, exactly-once services"
            .into(),
    )
}

// Independent retrieval oracle: sparse token counts hashed with its own FNV-1a.
fn oracle_vector(text: &str) -> BTreeMap<usize, f64> {
    let mut v = BTreeMap::new();
    for tok in text
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let tok = tok.to_lowercase();
        let mut h: u64 = 14695981039346656037;
        for b in tok.bytes() {
            h = (h ^ b as u64).wrapping_mul(1099511628211);
        }
        *v.entry((h % 256) as usize).or_insert(0.0) += 1.0;
    }
    v
}

fn oracle_cosine(a: &BTreeMap<usize, f64>, b: &BTreeMap<usize, f64>) -> f64 {
    let na = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.iter()
        .map(|(k, x)| x * b.get(k).unwrap_or(&0.0))
        .sum::<f64>()
        / (na * nb)
}

const VOCAB: [&str; 24] = [
    "fire", "smoke", "survivor", "trapped", "gate", "north", "south", "ridge", "river", "helipad",
    "roof", "turbine", "blade", "stopped", "group", "three", "two", "near", "building", "door",
    "east", "west", "road", "tower",
];

fn memory_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x3e3);
    for db_index in 0..200 {
        let n = rng.random_range(1..=1000);
        let mut db = MemoryDb::new();
        let mut labels = Vec::with_capacity(n);
        for t in 0..n {
            let words = rng.random_range(1..6);
            let label: Vec<&str> = (0..words)
                .map(|_| VOCAB[rng.random_range(0..VOCAB.len())])
                .collect();
            let label = label.join(" ");
            db.insert_episodic(EpisodicRecord {
                label: label.clone(),
                payload: MultimodalPayload::default(),
                tick: t as u64,
                salience: 1.0,
            })
            .map_err(|e| e.to_string())?;
            labels.push(label);
        }
        let pick = rng.random_range(0..n);
        let queries = [
            labels[pick].clone(),
            VOCAB[rng.random_range(0..VOCAB.len())].to_string(),
            format!(
                "{} {}",
                VOCAB[rng.random_range(0..VOCAB.len())],
                VOCAB[rng.random_range(0..VOCAB.len())]
            ),
        ];
        for (qi, q) in queries.iter().enumerate() {
            let k = rng.random_range(1..=10);
            let got = db.retrieve(q, k).map_err(|e| e.to_string())?;
            let qv = oracle_vector(q);
            let mut scan: Vec<(f64, usize)> = labels
                .iter()
                .enumerate()
                .map(|(i, l)| (oracle_cosine(&qv, &oracle_vector(l)), i))
                .collect();
            scan.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.cmp(&a.1)));
            scan.truncate(k);
            ensure(got.records.len() == scan.len(), || {
                format!("db {db_index}: wrong result count")
            })?;
            let kth = scan.last().map(|s| s.0).unwrap_or(0.0);
            for (r, (sim, _)) in got.records.iter().zip(&scan) {
                ensure((r.similarity - sim).abs() < 1e-9, || {
                    format!(
                        "db {db_index} query {qi}: similarity {} vs oracle {sim}",
                        r.similarity
                    )
                })?;
                let own = oracle_cosine(&qv, &oracle_vector(&labels[r.id]));
                ensure(own >= kth - 1e-9, || {
                    format!("db {db_index}: record {} outside the top {k}", r.id)
                })?;
            }
            if qi == 0 {
                let top = &got.records[0];
                ensure((top.similarity - 1.0).abs() < 1e-9, || {
                    format!("db {db_index}: exact label similarity {}", top.similarity)
                })?;
            }
        }
    }
    Ok("200 databases match the brute-force scan; exact labels score 1.0".into())
}

fn controller_safety() -> Check {
    let t0 = Instant::now();
    let commands = [
        ControllerCommand::MoveEnu(Vec3::new(3.0, 4.0, 6.0)),
        ControllerCommand::MoveBody(Vec3::new(2.0, -1.0, 1.0)),
        ControllerCommand::Takeoff { altitude: 10.0 },
        ControllerCommand::Land,
        ControllerCommand::Arm,
        ControllerCommand::Disarm,
        ControllerCommand::FailsafeLand,
        ControllerCommand::Idle,
    ];
    let unsafe_state = |s: &VehicleState| s.is_airborne() && s.arm_state == ArmState::Disarmed;
    let mut visited = 0u64;
    let mut full_length = 0u64;
    fn walk(
        state: VehicleState,
        depth: usize,
        commands: &[ControllerCommand],
        unsafe_state: &dyn Fn(&VehicleState) -> bool,
        visited: &mut u64,
        full_length: &mut u64,
    ) -> Result<(), String> {
        if depth == 6 {
            *full_length += 1;
            return Ok(());
        }
        for c in commands {
            let next = handle_command(&state, c).unwrap_or(state);
            *visited += 1;
            if unsafe_state(&next) {
                return Err(format!(
                    "{} reached airborne disarmed from {:?}",
                    c.name(),
                    state.flight_mode
                ));
            }
            let ticked = tick(&next, 1.0);
            if unsafe_state(&ticked) {
                return Err(format!("tick after {} reached airborne disarmed", c.name()));
            }
            walk(
                ticked,
                depth + 1,
                commands,
                unsafe_state,
                visited,
                full_length,
            )?;
        }
        Ok(())
    }
    let starts = [
        VehicleState::on_ground(Vec3::ZERO),
        VehicleState::hovering(Vec3::new(0.0, 0.0, 10.0)),
    ];
    for s in starts {
        walk(
            s,
            0,
            &commands,
            &unsafe_state,
            &mut visited,
            &mut full_length,
        )?;
    }
    let elapsed = t0.elapsed();
    ensure(full_length == 2 * 8u64.pow(6), || {
        format!("enumerated {full_length} sequences")
    })?;
    ensure(elapsed < Duration::from_secs(60), || {
        format!("took {elapsed:?}")
    })?;
    Ok(format!(
        "{full_length} sequences from 2 start states in {:.2} s",
        elapsed.as_secs_f64()
    ))
}

fn base64_round_trip() -> Check {
    let golden = wrap_payload(&Payload::Blob(vec![0, 1, 2])).map_err(|e| e.to_string())?;
    ensure(golden == "AAEC", || format!("golden encodes to {golden}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(0xb64);
    let mut total = 0usize;
    for i in 0..1000 {
        let len = if i < 3 {
            [0, 1, 1 << 20][i]
        } else {
            rng.random_range(0..=(1usize << 20))
        };
        let mut blob = vec![0u8; len];
        rng.fill_bytes(&mut blob);
        let text = wrap_payload(&Payload::Blob(blob.clone())).map_err(|e| e.to_string())?;
        let back = unwrap_blob(&text).map_err(|e| e.to_string())?;
        ensure(back == blob, || {
            format!("blob {i} of {len} bytes did not round-trip")
        })?;
        total += len;
    }
    Ok(format!(
        "1000 blobs, {:.0} MiB total; [0,1,2] -> AAEC",
        total as f64 / (1 << 20) as f64
    ))
}

fn determinism() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = 0;
    for scenario in ScenarioId::ALL {
        for backend in BackendKind::OFFLINE {
            let mut outputs = Vec::new();
            for rep in 0..2 {
                let mut c = RunConfig::new(scenario, backend, 7);
                c.noise = true;
                c.out_dir = Some(dir.path().join(format!("{scenario}-{backend}-{rep}")));
                run(&c).map_err(|e| e.to_string())?;
                let out = c.out_dir.unwrap();
                let read = |f: &str| std::fs::read(out.join(f)).map_err(|e| e.to_string());
                outputs.push((
                    read("trajectory.jsonl")?,
                    read("ledger.csv")?,
                    read("report.json")?,
                ));
            }
            ensure(outputs[0] == outputs[1], || {
                format!("{scenario}/{backend} artifacts differ")
            })?;
            runs += 1;
        }
    }
    Ok(format!(
        "{runs} configs reproduced byte-identical trajectories, ledgers and reports"
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("wildfire_total_reward", wildfire_tr),
        ("safenav_total_reward", safenav_tr),
        ("landing_reward", landing),
        ("inspection_reward", inspection),
        (
            "ar_identity_and_ablation_ordering",
            ar_identity_and_ablation,
        ),
        ("bus_properties", bus_suite),
        ("memory_oracle_equivalence", memory_oracle),
        ("controller_safety_enumeration", controller_safety),
        ("base64_round_trip", base64_round_trip),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
