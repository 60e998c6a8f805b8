//! Voxelized point clouds: a set of occupied integer voxels at a fixed
//! number of bits per dimension.

use crate::error::{Error, Result};

/// Voxel coordinate `[x, y, z]`.
pub type Voxel = [u32; 3];

pub const MIN_RESOLUTION_BITS: u32 = 2;
pub const MAX_RESOLUTION_BITS: u32 = 30;

/// A set of occupied voxels in `[0, 2^r)^3`.
///
/// Points are kept sorted lexicographically and free of duplicates, so two
/// clouds holding the same set compare equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VoxelPointCloud {
    resolution_bits: u32,
    points: Vec<Voxel>,
}

impl VoxelPointCloud {
    /// Builds a cloud, validating every coordinate and removing duplicates.
    pub fn new(resolution_bits: u32, mut points: Vec<Voxel>) -> Result<Self> {
        check_resolution(resolution_bits)?;
        let limit = 1u64 << resolution_bits;
        if let Some(p) = points.iter().find(|p| p.iter().any(|&c| u64::from(c) >= limit)) {
            return Err(Error::CoordinateOutOfRange {
                coord: p.map(i64::from),
                bits: resolution_bits,
            });
        }
        points.sort_unstable();
        points.dedup();
        Ok(Self {
            resolution_bits,
            points,
        })
    }

    pub fn empty(resolution_bits: u32) -> Result<Self> {
        Self::new(resolution_bits, Vec::new())
    }

    /// Caller guarantees sorted, deduplicated, in-range points.
    pub(crate) fn from_sorted_unchecked(resolution_bits: u32, points: Vec<Voxel>) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(points
            .iter()
            .all(|p| p.iter().all(|&c| u64::from(c) < (1u64 << resolution_bits))));
        Self {
            resolution_bits,
            points,
        }
    }

    pub fn resolution_bits(&self) -> u32 {
        self.resolution_bits
    }

    /// Grid side length `2^r`.
    pub fn side(&self) -> u64 {
        1u64 << self.resolution_bits
    }

    pub fn points(&self) -> &[Voxel] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Voxel> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, voxel: &Voxel) -> bool {
        self.points.binary_search(voxel).is_ok()
    }

    /// Inclusive per-axis bounds `(min, max)`, or `None` for an empty cloud.
    pub fn bounding_box(&self) -> Option<(Voxel, Voxel)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(mut lo, mut hi), p| {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a]);
                hi[a] = hi[a].max(p[a]);
            }
            (lo, hi)
        }))
    }

    /// True when every point of `self` is also in `other` (resolutions must agree).
    pub fn is_subset_of(&self, other: &VoxelPointCloud) -> bool {
        self.resolution_bits == other.resolution_bits && self.points.iter().all(|p| other.contains(p))
    }

    /// Smallest resolution able to hold every point, never below the minimum.
    pub fn required_bits(points: &[Voxel]) -> u32 {
        let max = points.iter().flat_map(|p| p.iter()).copied().max().unwrap_or(0);
        let bits = u32::BITS - max.leading_zeros();
        bits.max(MIN_RESOLUTION_BITS)
    }
}

pub(crate) fn check_resolution(bits: u32) -> Result<()> {
    if !(MIN_RESOLUTION_BITS..=MAX_RESOLUTION_BITS).contains(&bits) {
        return Err(Error::InvalidResolution {
            bits,
            min: MIN_RESOLUTION_BITS,
            max: MAX_RESOLUTION_BITS,
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dedups_and_sorts() {
        let c = VoxelPointCloud::new(2, vec![[1, 2, 3], [0, 0, 0], [1, 2, 3]]).unwrap();
        assert_eq!(c.points(), &[[0, 0, 0], [1, 2, 3]]);
    }

    #[test]
    fn rejects_out_of_range() {
        let err = VoxelPointCloud::new(2, vec![[4, 0, 0]]).unwrap_err();
        assert!(matches!(
            err,
            Error::CoordinateOutOfRange {
                coord: [4, 0, 0],
                bits: 2
            }
        ));
    }

    #[test]
    fn rejects_bad_resolution() {
        assert!(VoxelPointCloud::new(1, vec![]).is_err());
        assert!(VoxelPointCloud::new(31, vec![]).is_err());
    }

    #[test]
    fn bounding_box_and_bits() {
        let c = VoxelPointCloud::new(5, vec![[3, 9, 1], [7, 2, 30]]).unwrap();
        assert_eq!(c.bounding_box(), Some(([3, 2, 1], [7, 9, 30])));
        assert_eq!(VoxelPointCloud::required_bits(c.points()), 5);
        assert_eq!(VoxelPointCloud::required_bits(&[[0, 0, 0]]), 2);
        assert_eq!(VoxelPointCloud::required_bits(&[[8, 0, 0]]), 4);
    }
}
