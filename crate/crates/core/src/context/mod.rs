//! Everything between voxel sets and the network input: sweep-axis
//! handling, section images, phase selectors, mixing images, input stacks
//! and the 4x6x6 block contexts.

mod store;
mod walk;

pub use store::{collect_training_set, CollectionConfig, ContextHistogramStore, ContextSampling, Histogram};
pub use walk::{walk_level, BlockResolver, SectionSite};

use std::collections::HashMap;

use crate::cloud::{Voxel, VoxelPointCloud};
use crate::error::{Error, Result};
use crate::image::{BinaryImage, ImageGeometry, MixingImage};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    X = 0,
    Y = 1,
    Z = 2,
}

impl Axis {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: u8) -> Option<Self> {
        match i {
            0 => Some(Self::X),
            1 => Some(Self::Y),
            2 => Some(Self::Z),
            _ => None,
        }
    }

    /// Maps a voxel so that this axis becomes the sweep (third) coordinate.
    /// The two remaining axes keep their relative order.
    pub fn to_sweep_frame(self, [x, y, z]: Voxel) -> Voxel {
        match self {
            Self::X => [y, z, x],
            Self::Y => [x, z, y],
            Self::Z => [x, y, z],
        }
    }

    pub fn from_sweep_frame(self, [a, b, c]: Voxel) -> Voxel {
        match self {
            Self::X => [c, a, b],
            Self::Y => [a, c, b],
            Self::Z => [a, b, c],
        }
    }

    pub fn permute_cloud(self, cloud: &VoxelPointCloud) -> VoxelPointCloud {
        remap(cloud, |p| self.to_sweep_frame(p))
    }

    pub fn unpermute_cloud(self, cloud: &VoxelPointCloud) -> VoxelPointCloud {
        remap(cloud, |p| self.from_sweep_frame(p))
    }
}

fn remap(cloud: &VoxelPointCloud, f: impl Fn(Voxel) -> Voxel) -> VoxelPointCloud {
    let mut pts: Vec<Voxel> = cloud.points().iter().map(|&p| f(p)).collect();
    pts.sort_unstable();
    VoxelPointCloud::from_sorted_unchecked(cloud.resolution_bits(), pts)
}

/// Axis with the smallest bounding-box extent; ties go to the lower axis.
pub fn choose_sweep_axis(first_frame: &VoxelPointCloud) -> Result<Axis> {
    let (lo, hi) = first_frame.bounding_box().ok_or(Error::EmptyCloud)?;
    let extent = |a: usize| hi[a] - lo[a];
    let best = (0..3).min_by_key(|&a| (extent(a), a)).unwrap();
    Ok(Axis::from_index(best as u8).unwrap())
}

/// Even-aligned x/y bounding box shared by every section of one resolution.
pub fn frame_geometry(candidates: &VoxelPointCloud) -> Option<ImageGeometry> {
    let (lo, hi) = candidates.bounding_box()?;
    let x0 = lo[0] & !1;
    let y0 = lo[1] & !1;
    let x1 = hi[0] | 1;
    let y1 = hi[1] | 1;
    Some(ImageGeometry::new((x1 - x0 + 1) as usize, (y1 - y0 + 1) as usize, [x0, y0]).unwrap())
}

/// Points of a cloud grouped by their sweep coordinate.
pub type PlaneMap = HashMap<u32, Vec<[u32; 2]>>;

pub fn planes_of(cloud: &VoxelPointCloud) -> PlaneMap {
    let mut map: PlaneMap = HashMap::new();
    for &[x, y, z] in cloud.points() {
        map.entry(z).or_default().push([x, y]);
    }
    map
}

/// Binary image of plane `z`; planes outside the grid or without points are all-zero.
pub fn plane_image(planes: &PlaneMap, z: i64, geometry: ImageGeometry) -> BinaryImage {
    match u32::try_from(z).ok().and_then(|z| planes.get(&z)) {
        Some(points) => BinaryImage::from_points(geometry, points),
        None => BinaryImage::zeros(geometry),
    }
}

/// The section images around plane `z0` at one resolution.
#[derive(Clone, Debug)]
pub struct SectionImages {
    pub occupancy: BinaryImage,
    pub occupancy_prev: BinaryImage,
    pub occupancy_prev2: BinaryImage,
    pub candidates: BinaryImage,
    pub candidates_next: BinaryImage,
}

/// Clips `occupied` (P_r) and `candidates` (P^C_r) to `geometry` around `z0`.
pub fn section_images(
    occupied: &VoxelPointCloud,
    candidates: &VoxelPointCloud,
    z0: u32,
    geometry: ImageGeometry,
) -> SectionImages {
    let occ = planes_of(occupied);
    let cand = planes_of(candidates);
    let z = i64::from(z0);
    SectionImages {
        occupancy: plane_image(&occ, z, geometry),
        occupancy_prev: plane_image(&occ, z - 1, geometry),
        occupancy_prev2: plane_image(&occ, z - 2, geometry),
        candidates: plane_image(&cand, z, geometry),
        candidates_next: plane_image(&cand, z + 1, geometry),
    }
}

/// One of the four quarter-samplings of the 2x2 block grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Phase(u8);

impl Phase {
    pub const ALL: [Phase; 4] = [Phase(1), Phase(2), Phase(3), Phase(4)];

    pub fn new(phase: u8) -> Option<Self> {
        (1..=4).contains(&phase).then_some(Self(phase))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Phase in which block `(m, n)` is coded: `B(2k,2l)` in phase 1,
    /// `B(2k,2l+1)` in 2, `B(2k+1,2l)` in 3 and `B(2k+1,2l+1)` in 4.
    #[inline]
    pub fn of_block(m: usize, n: usize) -> Self {
        Self(1 + 2 * (m % 2) as u8 + (n % 2) as u8)
    }

    #[inline]
    pub fn selects_block(self, m: usize, n: usize) -> bool {
        Self::of_block(m, n) == self
    }

    /// Selector mask `Omega_phase` as a pixel predicate.
    #[inline]
    pub fn selects_pixel(self, i: usize, j: usize) -> bool {
        self.selects_block(i / 2, j / 2)
    }

    /// `Omega^s_{phase}`: pixels coded in this phase or an earlier one.
    #[inline]
    pub fn covers_pixel(self, i: usize, j: usize) -> bool {
        Self::of_block(i / 2, j / 2) <= self
    }

    pub fn mask(self, geometry: ImageGeometry) -> BinaryImage {
        let mut img = BinaryImage::zeros(geometry);
        for i in 0..geometry.width() {
            for j in 0..geometry.height() {
                img.set(i, j, self.selects_pixel(i, j));
            }
        }
        img
    }
}

/// Four phases per section, or all blocks at once with the phase-1 context.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum PhaseMode {
    #[default]
    FourPhase,
    SinglePhase,
}

impl PhaseMode {
    pub fn passes(self) -> usize {
        match self {
            Self::FourPhase => 4,
            Self::SinglePhase => 1,
        }
    }
}

/// `M(phase) = 2C (1 - Omega^s_{phase-1}) + (2R + 1) Omega^s_{phase-1}`.
pub fn mixing_image(candidates: &BinaryImage, reconstructed: &BinaryImage, phase: Phase) -> Result<MixingImage> {
    let g = candidates.geometry();
    if reconstructed.geometry() != g {
        return Err(Error::ShapeMismatch("candidate and reconstructed images differ".into()));
    }
    let c = candidates.as_slice();
    let r = reconstructed.as_slice();
    let mut values = Vec::with_capacity(g.pixel_count());
    for i in 0..g.width() {
        let row = i * g.height();
        for j in 0..g.height() {
            let k = row + j;
            let coded = phase.get() > 1 && Phase::of_block(i / 2, j / 2).get() < phase.get();
            values.push(if coded { 2 * r[k] + 1 } else { 2 * c[k] });
        }
    }
    Ok(MixingImage::from_values(g, values))
}

pub const STACK_CHANNELS: usize = 4;
pub const CONTEXT_SIDE: usize = 6;
pub const CONTEXT_LEN: usize = STACK_CHANNELS * CONTEXT_SIDE * CONTEXT_SIDE;
/// Channel of the input stack holding the mixing image.
pub const MIXING_CHANNEL: usize = 2;

/// The 4 x W x H network input. Channel order is fixed:
/// `[O(z0-2), O(z0-1), M(z0, phase), C(z0+1)]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InputStack {
    geometry: ImageGeometry,
    channels: [Vec<u8>; STACK_CHANNELS],
}

impl InputStack {
    pub fn new(
        occupancy_prev2: &BinaryImage,
        occupancy_prev: &BinaryImage,
        mixing: &MixingImage,
        candidates_next: &BinaryImage,
    ) -> Result<Self> {
        let geometry = mixing.geometry();
        for (name, g) in [
            ("O(z0-2)", occupancy_prev2.geometry()),
            ("O(z0-1)", occupancy_prev.geometry()),
            ("C(z0+1)", candidates_next.geometry()),
        ] {
            if g != geometry {
                return Err(Error::ShapeMismatch(format!(
                    "{name} is {g:?}, mixing image is {geometry:?}"
                )));
            }
        }
        Ok(Self {
            geometry,
            channels: [
                occupancy_prev2.as_slice().to_vec(),
                occupancy_prev.as_slice().to_vec(),
                mixing.as_slice().to_vec(),
                candidates_next.as_slice().to_vec(),
            ],
        })
    }

    /// Builds a stack from raw channel values (used by tests and benches).
    pub fn from_channels(geometry: ImageGeometry, channels: [Vec<u8>; STACK_CHANNELS]) -> Result<Self> {
        for (c, ch) in channels.iter().enumerate() {
            if ch.len() != geometry.pixel_count() {
                return Err(Error::ShapeMismatch(format!("channel {c} has {} values", ch.len())));
            }
            let max = if c == MIXING_CHANNEL { 3 } else { 1 };
            if ch.iter().any(|&v| v > max) {
                return Err(Error::ShapeMismatch(format!("channel {c} holds values above {max}")));
            }
        }
        Ok(Self { geometry, channels })
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn channel(&self, c: usize) -> &[u8] {
        &self.channels[c]
    }

    /// Pixel value, zero outside the image.
    #[inline]
    pub fn get(&self, c: usize, i: isize, j: isize) -> u8 {
        let (w, h) = (self.geometry.width() as isize, self.geometry.height() as isize);
        if i < 0 || j < 0 || i >= w || j >= h {
            0
        } else {
            self.channels[c][i as usize * h as usize + j as usize]
        }
    }
}

/// The 4x6x6 window of an input stack that determines the pmf of one block,
/// laid out `[channel][x][y]`. Values are 0..=3 in the mixing channel and
/// 0..=1 elsewhere.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Context(pub [u8; CONTEXT_LEN]);

impl Context {
    pub fn zeros() -> Self {
        Self([0; CONTEXT_LEN])
    }

    #[inline]
    pub fn get(&self, c: usize, di: usize, dj: usize) -> u8 {
        self.0[(c * CONTEXT_SIDE + di) * CONTEXT_SIDE + dj]
    }

    pub fn values(&self) -> &[u8; CONTEXT_LEN] {
        &self.0
    }

    /// Packs to 180 bits: one bit per binary pixel, two per mixing pixel.
    pub fn key(&self) -> ContextKey {
        let mut words = [0u64; 3];
        let mut bit = 0usize;
        for (k, &v) in self.0.iter().enumerate() {
            let width = if k / (CONTEXT_SIDE * CONTEXT_SIDE) == MIXING_CHANNEL {
                2
            } else {
                1
            };
            words[bit / 64] |= u64::from(v) << (bit % 64);
            bit += width;
        }
        ContextKey(words)
    }

    pub fn from_key(key: ContextKey) -> Self {
        let mut values = [0u8; CONTEXT_LEN];
        let mut bit = 0usize;
        for (k, v) in values.iter_mut().enumerate() {
            let width = if k / (CONTEXT_SIDE * CONTEXT_SIDE) == MIXING_CHANNEL {
                2
            } else {
                1
            };
            *v = (key.0[bit / 64] >> (bit % 64) & ((1 << width) - 1)) as u8;
            bit += width;
        }
        Self(values)
    }

    pub fn is_valid(&self) -> bool {
        self.0.iter().enumerate().all(|(k, &v)| {
            let max = if k / (CONTEXT_SIDE * CONTEXT_SIDE) == MIXING_CHANNEL {
                3
            } else {
                1
            };
            v <= max
        })
    }
}

/// Compact hashable form of a [`Context`]. The two-bit fields start at even
/// bit offsets, so none straddles a word.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContextKey(pub [u64; 3]);

/// Window `x in [2m-2, 2m+3]`, `y in [2n-2, 2n+3]` over all channels.
pub fn extract_context(stack: &InputStack, m: usize, n: usize) -> Context {
    let mut ctx = [0u8; CONTEXT_LEN];
    let i0 = 2 * m as isize - 2;
    let j0 = 2 * n as isize - 2;
    let (w, h) = (stack.geometry.width() as isize, stack.geometry.height() as isize);
    let interior = i0 >= 0 && j0 >= 0 && i0 + 6 <= w && j0 + 6 <= h;
    for c in 0..STACK_CHANNELS {
        for di in 0..CONTEXT_SIDE {
            let out = &mut ctx[(c * CONTEXT_SIDE + di) * CONTEXT_SIDE..][..CONTEXT_SIDE];
            if interior {
                let start = (i0 as usize + di) * h as usize + j0 as usize;
                out.copy_from_slice(&stack.channels[c][start..start + CONTEXT_SIDE]);
            } else {
                for (dj, v) in out.iter_mut().enumerate() {
                    *v = stack.get(c, i0 + di as isize, j0 + dj as isize);
                }
            }
        }
    }
    Context(ctx)
}
