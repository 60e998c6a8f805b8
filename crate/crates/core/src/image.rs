//! Section images: binary occupancy/candidate images and the four-valued
//! mixing image.
//!
//! Pixel `(i, j)` addresses absolute voxel `(origin[0] + i, origin[1] + j)`.
//! The first index runs along x and the second along y.

use crate::error::{Error, Result};

/// Size and placement of a section image. Width, height and both origin
/// coordinates are even, so 2x2 blocks line up with absolute coordinates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ImageGeometry {
    width: usize,
    height: usize,
    origin: [u32; 2],
}

impl ImageGeometry {
    pub fn new(width: usize, height: usize, origin: [u32; 2]) -> Result<Self> {
        if !width.is_multiple_of(2) || !height.is_multiple_of(2) {
            return Err(Error::ShapeMismatch(format!(
                "image dimensions {width}x{height} must be even"
            )));
        }
        if !origin[0].is_multiple_of(2) || !origin[1].is_multiple_of(2) {
            return Err(Error::ShapeMismatch(format!("image origin {origin:?} must be even")));
        }
        Ok(Self { width, height, origin })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn origin(&self) -> [u32; 2] {
        self.origin
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Number of 2x2 blocks along x and along y.
    pub fn blocks(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }

    #[inline]
    pub(crate) fn index(&self, i: usize, j: usize) -> usize {
        i * self.height + j
    }

    /// Image pixel of an absolute (x, y), if it lies inside.
    pub fn locate(&self, x: u32, y: u32) -> Option<(usize, usize)> {
        let i = x.checked_sub(self.origin[0])? as usize;
        let j = y.checked_sub(self.origin[1])? as usize;
        (i < self.width && j < self.height).then_some((i, j))
    }

    fn check_block(&self, m: usize, n: usize) -> Result<()> {
        let (bw, bh) = self.blocks();
        if m >= bw || n >= bh {
            return Err(Error::BlockOutOfRange {
                m,
                n,
                width: self.width,
                height: self.height,
            });
        }
        Ok(())
    }
}

/// Binary W x H image (`O`, `C` or `R`).
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BinaryImage {
    geometry: ImageGeometry,
    bits: Vec<u8>,
}

impl BinaryImage {
    pub fn zeros(geometry: ImageGeometry) -> Self {
        Self {
            geometry,
            bits: vec![0; geometry.pixel_count()],
        }
    }

    /// Rasterizes the `(x, y)` pairs that fall inside the geometry.
    pub fn from_points<'a>(geometry: ImageGeometry, points: impl IntoIterator<Item = &'a [u32; 2]>) -> Self {
        let mut img = Self::zeros(geometry);
        for &[x, y] in points {
            if let Some((i, j)) = geometry.locate(x, y) {
                img.bits[geometry.index(i, j)] = 1;
            }
        }
        img
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[self.geometry.index(i, j)] != 0
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: bool) {
        let k = self.geometry.index(i, j);
        self.bits[k] = u8::from(value);
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|&&b| b != 0).count()
    }

    /// Occupancy pattern of block `(m, n)`:
    /// `O(2m,2n) + 2 O(2m,2n+1) + 4 O(2m+1,2n) + 8 O(2m+1,2n+1)`.
    pub fn block_pattern(&self, m: usize, n: usize) -> Result<u8> {
        self.geometry.check_block(m, n)?;
        Ok(self.block_pattern_unchecked(m, n))
    }

    #[inline]
    pub(crate) fn block_pattern_unchecked(&self, m: usize, n: usize) -> u8 {
        let (i, j) = (2 * m, 2 * n);
        u8::from(self.get(i, j))
            | u8::from(self.get(i, j + 1)) << 1
            | u8::from(self.get(i + 1, j)) << 2
            | u8::from(self.get(i + 1, j + 1)) << 3
    }

    /// Writes pattern `q` into block `(m, n)`; inverse of [`Self::block_pattern`].
    pub fn set_block(&mut self, m: usize, n: usize, q: u8) -> Result<()> {
        self.geometry.check_block(m, n)?;
        let (i, j) = (2 * m, 2 * n);
        self.set(i, j, q & 1 != 0);
        self.set(i, j + 1, q & 2 != 0);
        self.set(i + 1, j, q & 4 != 0);
        self.set(i + 1, j + 1, q & 8 != 0);
        Ok(())
    }

    /// Absolute `(x, y)` of every set pixel, in pixel order.
    pub fn set_pixels(&self) -> impl Iterator<Item = [u32; 2]> + '_ {
        let g = self.geometry;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b != 0)
            .map(move |(k, _)| {
                let (i, j) = (k / g.height, k % g.height);
                [g.origin[0] + i as u32, g.origin[1] + j as u32]
            })
    }

    /// Pointwise `self <= other`.
    pub fn is_covered_by(&self, other: &BinaryImage) -> bool {
        self.geometry == other.geometry && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a <= b)
    }
}

/// Four-valued image combining candidacy and already-coded occupancy:
/// 0/2 for uncoded non-candidate/candidate pixels, 1/3 for coded empty/occupied.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct MixingImage {
    geometry: ImageGeometry,
    values: Vec<u8>,
}

impl MixingImage {
    pub(crate) fn from_values(geometry: ImageGeometry, values: Vec<u8>) -> Self {
        debug_assert_eq!(values.len(), geometry.pixel_count());
        debug_assert!(values.iter().all(|&v| v <= 3));
        Self { geometry, values }
    }

    pub fn geometry(&self) -> ImageGeometry {
        self.geometry
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.values
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> u8 {
        self.values[self.geometry.index(i, j)]
    }
}
