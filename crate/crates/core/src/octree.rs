//! Resolution-level pipeline. Octree levels are kept as voxel sets: level
//! `r - 1` is level `r` with coordinates halved, and the candidates of level
//! `r` are the eight children of every occupied voxel of level `r - 1`.

use crate::cloud::{Voxel, VoxelPointCloud};
use crate::error::{Error, Result};

/// Resolution of the level written verbatim as a 64-bit word.
pub const BASE_RESOLUTION_BITS: u32 = 2;

/// Parent level: every coordinate halved, duplicates merged.
pub fn downsample(cloud: &VoxelPointCloud) -> Result<VoxelPointCloud> {
    let r = cloud.resolution_bits();
    if r < BASE_RESOLUTION_BITS + 1 {
        return Err(Error::InvalidResolution {
            bits: r,
            min: BASE_RESOLUTION_BITS + 1,
            max: crate::cloud::MAX_RESOLUTION_BITS,
        });
    }
    let mut points: Vec<Voxel> = cloud.points().iter().map(|p| p.map(|c| c >> 1)).collect();
    points.sort_unstable();
    points.dedup();
    Ok(VoxelPointCloud::from_sorted_unchecked(r - 1, points))
}

/// Candidate voxels at `r`: the eight children of each voxel of `parent`.
pub fn upsample_candidates(parent: &VoxelPointCloud) -> Result<VoxelPointCloud> {
    let r = parent.resolution_bits() + 1;
    crate::cloud::check_resolution(r)?;
    let mut points = Vec::with_capacity(parent.len() * 8);
    for &[x, y, z] in parent.points() {
        for child in 0..8u32 {
            points.push([2 * x + (child >> 2), 2 * y + ((child >> 1) & 1), 2 * z + (child & 1)]);
        }
    }
    // Children of distinct parents never collide.
    points.sort_unstable();
    Ok(VoxelPointCloud::from_sorted_unchecked(r, points))
}

/// Every level from `BASE_RESOLUTION_BITS` up to the cloud's own resolution.
/// Index `k` holds resolution `BASE_RESOLUTION_BITS + k`.
pub fn level_stack(cloud: &VoxelPointCloud) -> Result<Vec<VoxelPointCloud>> {
    let mut levels = vec![cloud.clone()];
    while levels.last().unwrap().resolution_bits() > BASE_RESOLUTION_BITS {
        let next = downsample(levels.last().unwrap())?;
        levels.push(next);
    }
    levels.reverse();
    Ok(levels)
}

#[inline]
fn base_bit(&[x, y, z]: &Voxel) -> u32 {
    x * 16 + y * 4 + z
}

/// Packs a 4x4x4 cloud into a word, bit `x*16 + y*4 + z` per voxel.
pub fn base_level_to_bits(cloud: &VoxelPointCloud) -> Result<u64> {
    check_base(cloud.resolution_bits())?;
    Ok(cloud.points().iter().fold(0u64, |w, p| w | 1u64 << base_bit(p)))
}

pub fn bits_to_base_level(word: u64) -> VoxelPointCloud {
    let points = (0..64u32)
        .filter(|b| word >> b & 1 == 1)
        .map(|b| [b >> 4, (b >> 2) & 3, b & 3])
        .collect();
    VoxelPointCloud::from_sorted_unchecked(BASE_RESOLUTION_BITS, points)
}

fn check_base(bits: u32) -> Result<()> {
    if bits != BASE_RESOLUTION_BITS {
        return Err(Error::InvalidResolution {
            bits,
            min: BASE_RESOLUTION_BITS,
            max: BASE_RESOLUTION_BITS,
        });
    }
    Ok(())
}
