//! Fixtures shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use seqvox::VoxelPointCloud;

/// Thin spherical shell of radius `side / 3` centred in the grid.
pub fn sphere_shell(resolution_bits: u32) -> VoxelPointCloud {
    let side = 1i64 << resolution_bits;
    let c = side / 2;
    let r = side / 3;
    let mut pts = Vec::new();
    for x in 0..side {
        for y in 0..side {
            for z in 0..side {
                let d = (x - c).pow(2) + (y - c).pow(2) + (z - c).pow(2);
                if (d - r * r).abs() <= r {
                    pts.push([x as u32, y as u32, z as u32]);
                }
            }
        }
    }
    VoxelPointCloud::new(resolution_bits, pts).unwrap()
}

/// `n` uniformly random voxels.
pub fn random_cloud(resolution_bits: u32, n: usize, seed: u64) -> VoxelPointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = 1u32 << resolution_bits;
    let pts = (0..n).map(|_| [0; 3].map(|_: u32| rng.gen_range(0..side))).collect();
    VoxelPointCloud::new(resolution_bits, pts).unwrap()
}
