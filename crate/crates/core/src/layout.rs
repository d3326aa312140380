//! Schematic coordinates for the standard 68-point facial landmark scheme.
//!
//! Index groups: jaw contour 0-16 (8 is the chin apex), brows 17-26, nose
//! 27-35, eyes 36-47, outer lip 48-59, inner lip 60-67. Coordinates are in a
//! face-centred frame with x to the subject's left, y up, z towards the
//! camera, roughly spanning [-1, 1].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

pub const LANDMARK_COUNT: usize = 68;

/// Chin apex; the default landmark for jaw movement signals.
pub const JAW_TIP: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Jaw,
    RightBrow,
    LeftBrow,
    NoseBridge,
    Nostrils,
    RightEye,
    LeftEye,
    OuterLip,
    InnerLip,
}

pub fn region(id: usize) -> Region {
    match id {
        0..=16 => Region::Jaw,
        17..=21 => Region::RightBrow,
        22..=26 => Region::LeftBrow,
        27..=30 => Region::NoseBridge,
        31..=35 => Region::Nostrils,
        36..=41 => Region::RightEye,
        42..=47 => Region::LeftEye,
        48..=59 => Region::OuterLip,
        _ => Region::InnerLip,
    }
}

fn ellipse(cx: f64, cy: f64, rx: f64, ry: f64, n: usize, i: usize) -> (f64, f64) {
    // Starts at the leftmost point and runs clockwise in image terms (over the top first).
    let t = PI - 2.0 * PI * i as f64 / n as f64;
    (cx + rx * t.cos(), cy + ry * t.sin())
}

fn depth(x: f64, y: f64) -> f64 {
    0.6 * (1.0 - 0.7 * x * x - 0.2 * y * y).max(0.0).sqrt()
}

/// Schematic 3D position of landmark `id`.
pub fn schematic_point(id: usize) -> [f64; 3] {
    assert!(id < LANDMARK_COUNT, "landmark id {id} out of range");
    let (x, y, dz) = match id {
        0..=16 => {
            let phi = PI + PI * id as f64 / 16.0;
            (0.9 * phi.cos(), 0.1 + 0.9 * phi.sin(), -0.15)
        }
        17..=21 => {
            let u = (id - 17) as f64 / 4.0;
            (-0.75 + 0.6 * u, 0.45 + 0.08 * (PI * u).sin(), 0.0)
        }
        22..=26 => {
            let u = (id - 22) as f64 / 4.0;
            (0.15 + 0.6 * u, 0.45 + 0.08 * (PI * u).sin(), 0.0)
        }
        27..=30 => {
            let u = (id - 27) as f64 / 3.0;
            (0.0, 0.35 - 0.4 * u, 0.1 + 0.25 * u)
        }
        31..=35 => {
            let u = (id - 31) as f64 / 4.0;
            (-0.2 + 0.4 * u, -0.12 - 0.04 * (PI * u).sin(), 0.15)
        }
        36..=41 => {
            let (x, y) = ellipse(-0.4, 0.25, 0.15, 0.06, 6, id - 36);
            (x, y, 0.0)
        }
        42..=47 => {
            let (x, y) = ellipse(0.4, 0.25, 0.15, 0.06, 6, id - 42);
            (x, y, 0.0)
        }
        48..=59 => {
            let (x, y) = ellipse(0.0, -0.4, 0.35, 0.15, 12, id - 48);
            (x, y, 0.05)
        }
        _ => {
            let (x, y) = ellipse(0.0, -0.4, 0.25, 0.07, 8, id - 60);
            (x, y, 0.03)
        }
    };
    [x, y, depth(x, y) + dz]
}

/// All 68 schematic points in landmark order.
pub fn schematic_face() -> Vec<[f64; 3]> {
    (0..LANDMARK_COUNT).map(schematic_point).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chin_is_lowest_jaw_point() {
        let face = schematic_face();
        let chin = face[JAW_TIP][1];
        assert!(face[..17].iter().all(|p| p[1] >= chin));
    }

    #[test]
    fn points_are_distinct_and_not_coplanar() {
        let face = schematic_face();
        for i in 0..LANDMARK_COUNT {
            for j in i + 1..LANDMARK_COUNT {
                let d: f64 = (0..3).map(|c| (face[i][c] - face[j][c]).powi(2)).sum();
                assert!(d > 1e-6, "{i} and {j} coincide");
            }
        }
        let zs: Vec<f64> = face.iter().map(|p| p[2]).collect();
        let spread = zs.iter().cloned().fold(f64::MIN, f64::max) - zs.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread > 0.1);
    }

    #[test]
    fn regions_cover_the_scheme() {
        assert_eq!(region(8), Region::Jaw);
        assert_eq!(region(30), Region::NoseBridge);
        assert_eq!(region(67), Region::InnerLip);
    }
}
