use std::collections::HashMap;
use std::io::{Read, Write};

use rayon::prelude::*;

use super::{
    extract_context, walk_level, BlockResolver, Context, ContextKey, InputStack, PhaseMode, SectionSite, CONTEXT_LEN,
};
use crate::cloud::VoxelPointCloud;
use crate::coder::ALPHABET_SIZE;
use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::octree::{downsample, BASE_RESOLUTION_BITS};

pub type Histogram = [u32; ALPHABET_SIZE];

/// Pattern histograms `h(q | C)` keyed by context.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ContextHistogramStore {
    map: HashMap<ContextKey, Histogram>,
}

const DUMP_MAGIC: &[u8; 4] = b"CTXS";

impl ContextHistogramStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, context: &Context, pattern: u8) {
        self.insert_key(context.key(), pattern);
    }

    pub fn insert_key(&mut self, key: ContextKey, pattern: u8) {
        self.map.entry(key).or_insert([0; ALPHABET_SIZE])[usize::from(pattern)] += 1;
    }

    pub fn merge(&mut self, other: ContextHistogramStore) {
        for (key, h) in other.map {
            let slot = self.map.entry(key).or_insert([0; ALPHABET_SIZE]);
            for (a, b) in slot.iter_mut().zip(h) {
                *a += b;
            }
        }
    }

    /// Number of distinct contexts.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn get(&self, context: &Context) -> Option<&Histogram> {
        self.map.get(&context.key())
    }

    /// Sum of all counts, i.e. the number of blocks recorded.
    pub fn total_count(&self) -> u64 {
        self.map.values().flatten().map(|&c| u64::from(c)).sum()
    }

    /// Entries in ascending key order, independent of hashing.
    pub fn sorted_entries(&self) -> Vec<(ContextKey, Histogram)> {
        let mut v: Vec<_> = self.map.iter().map(|(k, h)| (*k, *h)).collect();
        v.sort_unstable_by_key(|e| e.0);
        v
    }

    /// Debug dump: `"CTXS"`, u32 entry count, then per entry a u16 context
    /// length, the context values and 16 u32 counts. Little-endian.
    pub fn write_dump(&self, mut w: impl Write) -> Result<()> {
        let entries = self.sorted_entries();
        w.write_all(DUMP_MAGIC)?;
        w.write_all(&(entries.len() as u32).to_le_bytes())?;
        for (key, h) in entries {
            w.write_all(&(CONTEXT_LEN as u16).to_le_bytes())?;
            w.write_all(Context::from_key(key).values())?;
            for c in h {
                w.write_all(&c.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_dump(mut r: impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != DUMP_MAGIC {
            return Err(Error::Format("not a context store dump".into()));
        }
        let mut u32buf = [0u8; 4];
        r.read_exact(&mut u32buf)?;
        let count = u32::from_le_bytes(u32buf);
        let mut store = Self::new();
        for _ in 0..count {
            let mut lenbuf = [0u8; 2];
            r.read_exact(&mut lenbuf)?;
            if usize::from(u16::from_le_bytes(lenbuf)) != CONTEXT_LEN {
                return Err(Error::Format("unexpected context length in dump".into()));
            }
            let mut values = [0u8; CONTEXT_LEN];
            r.read_exact(&mut values)?;
            let ctx = Context(values);
            if !ctx.is_valid() {
                return Err(Error::Format("context value out of range in dump".into()));
            }
            let mut h = [0u32; ALPHABET_SIZE];
            for c in h.iter_mut() {
                r.read_exact(&mut u32buf)?;
                *c = u32::from_le_bytes(u32buf);
            }
            store.map.insert(ctx.key(), h);
        }
        Ok(store)
    }
}

/// Which coded blocks contribute to the training set.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ContextSampling {
    #[default]
    AllPhases,
    FirstPhaseOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct CollectionConfig {
    pub phase_mode: PhaseMode,
    pub sampling: ContextSampling,
}

struct Collector {
    store: ContextHistogramStore,
    sampling: ContextSampling,
    final_bits: u32,
}

impl BlockResolver for Collector {
    fn resolve(
        &mut self,
        site: &SectionSite,
        stack: &InputStack,
        blocks: &[(usize, usize)],
        truth: Option<&BinaryImage>,
    ) -> Result<Vec<u8>> {
        let truth = truth.expect("collection always walks with the true level");
        let record = site.resolution_bits == self.final_bits
            && (self.sampling == ContextSampling::AllPhases || site.phase.get() == 1);
        let mut out = Vec::with_capacity(blocks.len());
        for &(m, n) in blocks {
            let q = truth.block_pattern_unchecked(m, n);
            if record {
                self.store.insert(&extract_context(stack, m, n), q);
            }
            out.push(q);
        }
        Ok(out)
    }
}

/// Runs the encoder's traversal over the final resolution of every frame,
/// using true occupancies, and counts each candidate block's pattern under
/// its context. Frames are processed in parallel; the result does not
/// depend on the thread count.
pub fn collect_training_set(frames: &[VoxelPointCloud], config: CollectionConfig) -> Result<ContextHistogramStore> {
    let stores: Vec<ContextHistogramStore> = frames
        .par_iter()
        .map(|frame| {
            let bits = frame.resolution_bits();
            let mut collector = Collector {
                store: ContextHistogramStore::new(),
                sampling: config.sampling,
                final_bits: bits,
            };
            if bits > BASE_RESOLUTION_BITS && !frame.is_empty() {
                let parents = downsample(frame)?;
                walk_level(&parents, Some(frame), config.phase_mode, &mut collector)?;
            }
            Ok(collector.store)
        })
        .collect::<Result<_>>()?;
    let mut merged = ContextHistogramStore::new();
    for s in stores {
        merged.merge(s);
    }
    Ok(merged)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::frame_geometry;
    use crate::octree::upsample_candidates;

    #[test]
    fn repeated_context_merges() {
        let mut s = ContextHistogramStore::new();
        let ctx = Context::zeros();
        s.insert(&ctx, 3);
        s.insert(&ctx, 3);
        assert_eq!(s.len(), 1);
        assert_eq!(s.get(&ctx).unwrap()[3], 2);
        let mut other = Context::zeros();
        other.0[0] = 1;
        s.insert(&other, 0);
        assert_eq!(s.len(), 2);
        assert_eq!(s.total_count(), 3);
    }

    fn frame() -> VoxelPointCloud {
        let pts = (0..32u32)
            .flat_map(|x| (0..32u32).map(move |y| [x, y, (x * x + y * 3) % 11 + 10]))
            .collect();
        VoxelPointCloud::new(5, pts).unwrap()
    }

    fn candidate_blocks(frame: &VoxelPointCloud) -> u64 {
        let cand = upsample_candidates(&downsample(frame).unwrap()).unwrap();
        let g = frame_geometry(&cand).unwrap();
        let planes = super::super::planes_of(&cand);
        let mut total = 0;
        for pts in planes.values() {
            let img = BinaryImage::from_points(g, pts);
            let (bw, bh) = g.blocks();
            for m in 0..bw {
                for n in 0..bh {
                    total += u64::from(img.block_pattern(m, n).unwrap() != 0);
                }
            }
        }
        total
    }

    #[test]
    fn counts_equal_candidate_blocks() {
        let f = frame();
        for mode in [PhaseMode::FourPhase, PhaseMode::SinglePhase] {
            let cfg = CollectionConfig {
                phase_mode: mode,
                sampling: ContextSampling::AllPhases,
            };
            let s = collect_training_set(std::slice::from_ref(&f), cfg).unwrap();
            assert_eq!(s.total_count(), candidate_blocks(&f));
        }
        let two = collect_training_set(&[f.clone(), f.clone()], CollectionConfig::default()).unwrap();
        assert_eq!(two.total_count(), 2 * candidate_blocks(&f));
        let first = collect_training_set(
            std::slice::from_ref(&f),
            CollectionConfig {
                phase_mode: PhaseMode::FourPhase,
                sampling: ContextSampling::FirstPhaseOnly,
            },
        )
        .unwrap();
        assert!(first.total_count() < candidate_blocks(&f));
    }

    #[test]
    fn collection_is_thread_count_independent() {
        let frames = vec![frame(), VoxelPointCloud::new(5, vec![[1, 2, 3], [4, 5, 6]]).unwrap()];
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| collect_training_set(&frames, CollectionConfig::default()).unwrap())
        };
        assert_eq!(run(1).sorted_entries(), run(3).sorted_entries());
    }

    #[test]
    fn dump_round_trip() {
        let s = collect_training_set(&[frame()], CollectionConfig::default()).unwrap();
        let mut bytes = Vec::new();
        s.write_dump(&mut bytes).unwrap();
        assert_eq!(bytes.len(), 8 + s.len() * (2 + CONTEXT_LEN + 64));
        assert_eq!(ContextHistogramStore::read_dump(bytes.as_slice()).unwrap(), s);
        bytes[0] = b'X';
        assert!(ContextHistogramStore::read_dump(bytes.as_slice()).is_err());
    }

    #[test]
    fn empty_and_base_frames_contribute_nothing() {
        let frames = vec![
            VoxelPointCloud::empty(6).unwrap(),
            VoxelPointCloud::new(2, vec![[1, 1, 1]]).unwrap(),
        ];
        assert!(collect_training_set(&frames, CollectionConfig::default())
            .unwrap()
            .is_empty());
    }
}
