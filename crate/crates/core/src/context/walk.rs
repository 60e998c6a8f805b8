use std::collections::BTreeMap;

use super::{frame_geometry, mixing_image, plane_image, planes_of, InputStack, Phase, PhaseMode};
use crate::cloud::{Voxel, VoxelPointCloud};
use crate::error::{Error, Result};
use crate::image::{BinaryImage, ImageGeometry};
use crate::octree::upsample_candidates;

/// Where in the traversal a batch of blocks is being resolved.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SectionSite {
    pub resolution_bits: u32,
    pub z: u32,
    /// Phase whose selector picked the blocks; phase 1 in single-phase mode.
    pub phase: Phase,
    pub mode: PhaseMode,
    pub geometry: ImageGeometry,
}

/// Supplies the occupancy pattern of every selected block of one phase.
///
/// The encoder reads patterns from `truth` and codes them, the decoder
/// decodes them, and training-set collection records them with their
/// contexts.
pub trait BlockResolver {
    fn resolve(
        &mut self,
        site: &SectionSite,
        stack: &InputStack,
        blocks: &[(usize, usize)],
        truth: Option<&BinaryImage>,
    ) -> Result<Vec<u8>>;
}

/// Reconstructs level `r = parents.r + 1` section by section.
///
/// Sections run over ascending sweep coordinate, skipping planes without
/// candidates. Within a phase blocks are listed `n` outer, `m` inner, and
/// only blocks holding at least one candidate are listed. `truth`, when
/// given, must be the level being coded; it is handed to the resolver and
/// otherwise unused, so encoder and decoder build identical contexts.
pub fn walk_level<R: BlockResolver + ?Sized>(
    parents: &VoxelPointCloud,
    truth: Option<&VoxelPointCloud>,
    mode: PhaseMode,
    resolver: &mut R,
) -> Result<VoxelPointCloud> {
    let resolution_bits = parents.resolution_bits() + 1;
    let candidates = upsample_candidates(parents)?;
    if let Some(t) = truth {
        if t.resolution_bits() != resolution_bits {
            return Err(Error::InvalidResolution {
                bits: t.resolution_bits(),
                min: resolution_bits,
                max: resolution_bits,
            });
        }
    }
    let Some(geometry) = frame_geometry(&candidates) else {
        return VoxelPointCloud::empty(resolution_bits);
    };

    let cand_planes: BTreeMap<u32, Vec<[u32; 2]>> = planes_of(&candidates).into_iter().collect();
    let truth_planes = truth.map(planes_of);
    let (bw, bh) = geometry.blocks();

    let mut recent: Vec<(u32, BinaryImage)> = Vec::with_capacity(3);
    let mut out: Vec<Voxel> = Vec::new();
    let zeros = BinaryImage::zeros(geometry);

    for (&z, points) in &cand_planes {
        let cand = BinaryImage::from_points(geometry, points);
        let cand_next = cand_planes
            .get(&(z + 1))
            .map_or_else(|| zeros.clone(), |p| BinaryImage::from_points(geometry, p));
        let prev = |dz: u32| {
            recent
                .iter()
                .find(|(rz, _)| z >= dz && *rz == z - dz)
                .map(|(_, img)| img)
                .unwrap_or(&zeros)
        };
        let truth_img = truth_planes.as_ref().map(|t| plane_image(t, z.into(), geometry));

        // candidate mask per block, computed once for all phases
        let masks: Vec<u8> = (0..bh)
            .flat_map(|n| (0..bw).map(move |m| (m, n)))
            .map(|(m, n)| cand.block_pattern_unchecked(m, n))
            .collect();

        let mut recon = BinaryImage::zeros(geometry);
        let passes: &[Phase] = match mode {
            PhaseMode::FourPhase => &Phase::ALL,
            PhaseMode::SinglePhase => &Phase::ALL[..1],
        };
        for &phase in passes {
            let blocks: Vec<(usize, usize)> = (0..bh)
                .flat_map(|n| (0..bw).map(move |m| (m, n)))
                .filter(|&(m, n)| {
                    masks[n * bw + m] != 0 && (mode == PhaseMode::SinglePhase || phase.selects_block(m, n))
                })
                .collect();
            if blocks.is_empty() {
                continue;
            }
            let mixing = mixing_image(&cand, &recon, phase)?;
            let stack = InputStack::new(prev(2), prev(1), &mixing, &cand_next)?;
            let site = SectionSite {
                resolution_bits,
                z,
                phase,
                mode,
                geometry,
            };
            let patterns = resolver.resolve(&site, &stack, &blocks, truth_img.as_ref())?;
            if patterns.len() != blocks.len() {
                return Err(Error::CorruptPayload(format!(
                    "resolver returned {} patterns for {} blocks",
                    patterns.len(),
                    blocks.len()
                )));
            }
            for (&(m, n), &q) in blocks.iter().zip(&patterns) {
                let mask = masks[n * bw + m];
                if q > 15 || q & !mask != 0 {
                    return Err(Error::CorruptPayload(format!(
                        "pattern {q} at block ({m}, {n}) of plane {z} occupies non-candidate voxels (mask {mask})"
                    )));
                }
                recon.set_block(m, n, q)?;
            }
        }

        out.extend(recon.set_pixels().map(|[x, y]| [x, y, z]));
        recent.push((z, recon));
        if recent.len() > 2 {
            recent.remove(0);
        }
    }

    out.sort_unstable();
    Ok(VoxelPointCloud::from_sorted_unchecked(resolution_bits, out))
}
