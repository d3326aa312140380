#![allow(dead_code)]

use nns_core::AffineCamera;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Pixel-scale affine camera: rotation, anisotropic scale, shear and shift.
pub fn random_camera(rng: &mut impl Rng) -> AffineCamera {
    loop {
        let r0: [f64; 4] = [
            rng.random_range(-200.0..200.0),
            rng.random_range(-200.0..200.0),
            rng.random_range(-200.0..200.0),
            rng.random_range(0.0..640.0),
        ];
        let r1: [f64; 4] = [
            rng.random_range(-200.0..200.0),
            rng.random_range(-200.0..200.0),
            rng.random_range(-200.0..200.0),
            rng.random_range(0.0..480.0),
        ];
        // Keep the two projection rows well away from parallel.
        let cross = [
            r0[1] * r1[2] - r0[2] * r1[1],
            r0[2] * r1[0] - r0[0] * r1[2],
            r0[0] * r1[1] - r0[1] * r1[0],
        ];
        let area = cross.iter().map(|c| c * c).sum::<f64>().sqrt();
        if area > 5000.0 {
            return AffineCamera::from_rows(r0, r1).unwrap();
        }
    }
}

/// Rigid head pose (yaw/pitch/roll in degrees) scaled and shifted into pixels.
pub fn pose_camera(yaw: f64, pitch: f64, roll: f64, scale: f64, shift: [f64; 2]) -> AffineCamera {
    let (y, p, r) = (yaw.to_radians(), pitch.to_radians(), roll.to_radians());
    let ry = [[y.cos(), 0.0, y.sin()], [0.0, 1.0, 0.0], [-y.sin(), 0.0, y.cos()]];
    let rx = [[1.0, 0.0, 0.0], [0.0, p.cos(), -p.sin()], [0.0, p.sin(), p.cos()]];
    let rz = [[r.cos(), -r.sin(), 0.0], [r.sin(), r.cos(), 0.0], [0.0, 0.0, 1.0]];
    let mul = |a: [[f64; 3]; 3], b: [[f64; 3]; 3]| {
        let mut c = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                c[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        c
    };
    let m = mul(rz, mul(rx, ry));
    AffineCamera::from_rows(
        [scale * m[0][0], scale * m[0][1], scale * m[0][2], shift[0]],
        [-scale * m[1][0], -scale * m[1][1], -scale * m[1][2], shift[1]],
    )
    .unwrap()
}

pub fn max_abs_diff(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter()
        .zip(b)
        .flat_map(|(p, q)| (0..3).map(move |d| (p[d] - q[d]).abs()))
        .fold(0.0, f64::max)
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

pub mod oracles;
