//! Top-down synthetic camera frame: 64x64 grayscale, one meter per pixel,
//! centered on the drone with north up.

use super::{EntityKind, World};

pub const IMAGE_SIDE: usize = 64;
const BACKGROUND: u8 = 24;

fn intensity(kind: &EntityKind) -> u8 {
    match kind {
        EntityKind::FireSource => 250,
        EntityKind::TrappedGroup { .. } => 200,
        EntityKind::Firefighter => 170,
        EntityKind::Helipad { .. } => 120,
        EntityKind::Turbine { .. } => 150,
        EntityKind::Building { .. } => 90,
        EntityKind::Obstacle { .. } => 60,
    }
}

fn disk(img: &mut [u8], cx: f64, cy: f64, r: f64, value: u8) {
    let half = IMAGE_SIDE as f64 / 2.0;
    for row in 0..IMAGE_SIDE {
        for col in 0..IMAGE_SIDE {
            // Pixel centers in meters relative to the drone; row 0 is north.
            let px = col as f64 + 0.5 - half;
            let py = half - (row as f64 + 0.5);
            if (px - cx).powi(2) + (py - cy).powi(2) <= r * r {
                img[row * IMAGE_SIDE + col] = value;
            }
        }
    }
}

pub fn render_scene(world: &World) -> Vec<u8> {
    let mut img = vec![BACKGROUND; IMAGE_SIDE * IMAGE_SIDE];
    for e in &world.entities {
        let dx = e.entity.position.x - world.drone.x;
        let dy = e.entity.position.y - world.drone.y;
        let value = intensity(&e.entity.kind);
        match &e.entity.kind {
            EntityKind::Building { footprint } => {
                let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
                for [x, y] in footprint {
                    x0 = x0.min(*x);
                    y0 = y0.min(*y);
                    x1 = x1.max(*x);
                    y1 = y1.max(*y);
                }
                let r = ((x1 - x0).min(y1 - y0) / 2.0).max(1.0);
                disk(&mut img, dx, dy, r, value);
            }
            EntityKind::Helipad { radius } => disk(&mut img, dx, dy, *radius, value),
            EntityKind::Turbine { .. } => {
                disk(&mut img, dx, dy, 2.0, value);
                let a = e.flags.phase_deg.to_radians();
                disk(&mut img, dx + 5.0 * a.sin(), dy + 5.0 * a.cos(), 1.0, 255);
            }
            EntityKind::FireSource => disk(&mut img, dx, dy, 4.0, value),
            EntityKind::Obstacle { radius } => disk(&mut img, dx, dy, *radius, value),
            EntityKind::TrappedGroup { .. } | EntityKind::Firefighter => {
                disk(&mut img, dx, dy, 1.5, value)
            }
        }
    }
    img
}
