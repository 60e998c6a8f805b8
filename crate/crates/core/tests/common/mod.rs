#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqvox::{Voxel, VoxelPointCloud};

/// Uniform random voxels filling about `density` of the grid.
pub fn random_cloud(rng: &mut impl Rng, r: u32, density: f64) -> VoxelPointCloud {
    let side = 1u32 << r;
    let n = ((f64::from(side).powi(3) * density) as usize).max(1);
    let pts = (0..n).map(|_| [0; 3].map(|_: u32| rng.gen_range(0..side))).collect();
    VoxelPointCloud::new(r, pts).unwrap()
}

/// Voxels within half a voxel of a sphere's surface.
pub fn sphere(r: u32, center: [f64; 3], radius: f64) -> VoxelPointCloud {
    let side = 1u32 << r;
    let mut pts = Vec::new();
    for x in 0..side {
        for y in 0..side {
            for z in 0..side {
                let d = [x, y, z]
                    .iter()
                    .zip(center)
                    .map(|(&a, c)| (f64::from(a) - c).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if (d - radius).abs() <= 0.5 {
                    pts.push([x, y, z]);
                }
            }
        }
    }
    VoxelPointCloud::new(r, pts).unwrap()
}

/// A tilted plane, one voxel thick along z.
pub fn plane(r: u32, a: f64, b: f64, c: f64) -> VoxelPointCloud {
    let side = 1u32 << r;
    let mut pts = Vec::new();
    for x in 0..side {
        for y in 0..side {
            let z = (a * f64::from(x) + b * f64::from(y) + c).round();
            if z >= 0.0 && z < f64::from(side) {
                pts.push([x, y, z as u32]);
            }
        }
    }
    VoxelPointCloud::new(r, pts).unwrap()
}

/// Height field whose heights follow a random walk along x and y.
pub fn random_walk_surface(rng: &mut impl Rng, r: u32) -> VoxelPointCloud {
    let side = 1i64 << r;
    let mut row: Vec<i64> = vec![side / 2; side as usize];
    let mut pts: Vec<Voxel> = Vec::new();
    for x in 0..side {
        for y in 0..side as usize {
            let prev = if y > 0 { row[y - 1] } else { row[y] };
            let h = ((row[y] + prev) / 2 + rng.gen_range(-1..=1)).clamp(0, side - 1);
            row[y] = h;
            pts.push([x as u32, y as u32, h as u32]);
        }
    }
    VoxelPointCloud::new(r, pts).unwrap()
}

/// Frame `t` of a slowly deforming solid blob: a filled star-shaped body
/// whose radius wobbles with direction and drifts with time.
pub fn dense_blob(r: u32, t: usize) -> VoxelPointCloud {
    let side = 1u32 << r;
    let s = f64::from(side);
    let tf = t as f64;
    let c = [s * 0.5 + 0.6 * tf.sin(), s * 0.5 + 0.05 * tf, s * 0.45];
    let base = s * 0.33;
    let mut pts = Vec::new();
    for x in 0..side {
        for y in 0..side {
            for z in 0..side {
                let d = [f64::from(x) - c[0], f64::from(y) - c[1], (f64::from(z) - c[2]) * 1.4];
                let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                if len < 1e-9 {
                    pts.push([x, y, z]);
                    continue;
                }
                let theta = d[1].atan2(d[0]);
                let phi = (d[2] / len).acos();
                let wobble = 1.0
                    + 0.12 * (3.0 * theta + 0.15 * tf).sin() * (2.0 * phi).cos()
                    + 0.06 * (5.0 * phi - 0.1 * tf).sin();
                if len <= base * wobble {
                    pts.push([x, y, z]);
                }
            }
        }
    }
    VoxelPointCloud::new(r, pts).unwrap()
}

pub fn dense_blob_sequence(r: u32, frames: usize) -> Vec<VoxelPointCloud> {
    (0..frames).map(|t| dense_blob(r, t)).collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
