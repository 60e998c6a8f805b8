use crate::cloud::VoxelPointCloud;
use crate::cnn::CnnModel;
use crate::coder::{quantize_pmf_f32, QuantizedPmf, RangeDecoder, RangeEncoder};
use crate::context::{extract_context, walk_level, BlockResolver, Context, InputStack, PhaseMode, SectionSite};
use crate::error::{Error, Result};
use crate::image::BinaryImage;
use crate::octree::{base_level_to_bits, bits_to_base_level, level_stack};

/// Bytes of the verbatim base level at the start of every frame payload.
pub const BASE_WORD_BYTES: usize = 8;

/// One coded block, as seen by an observer.
#[derive(Debug)]
pub struct BlockEvent<'a> {
    pub site: &'a SectionSite,
    pub m: usize,
    pub n: usize,
    pub context: &'a Context,
    pub pmf: &'a QuantizedPmf,
    pub pattern: u8,
}

/// Receives every block in coding order.
pub trait FrameObserver {
    fn block(&mut self, event: &BlockEvent<'_>);
}

/// Observer that ignores everything.
pub struct NoObserver;

impl FrameObserver for NoObserver {
    fn block(&mut self, _: &BlockEvent<'_>) {}
}

/// Coded blocks and their ideal codelength, per resolution.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LevelStats {
    /// `(resolution_bits, blocks, bits)`, ascending resolution.
    pub levels: Vec<(u32, u64, f64)>,
}

impl LevelStats {
    pub fn total_blocks(&self) -> u64 {
        self.levels.iter().map(|l| l.1).sum()
    }

    pub fn total_bits(&self) -> f64 {
        self.levels.iter().map(|l| l.2).sum()
    }

    pub fn merge(&mut self, other: &LevelStats) {
        for &(r, b, bits) in &other.levels {
            match self.levels.iter_mut().find(|l| l.0 == r) {
                Some(l) => {
                    l.1 += b;
                    l.2 += bits;
                }
                None => self.levels.push((r, b, bits)),
            }
        }
        self.levels.sort_by_key(|l| l.0);
    }
}

impl FrameObserver for LevelStats {
    fn block(&mut self, e: &BlockEvent<'_>) {
        let r = e.site.resolution_bits;
        let bits = e.pmf.cost_bits(e.pattern);
        match self.levels.last_mut() {
            Some(l) if l.0 == r => {
                l.1 += 1;
                l.2 += bits;
            }
            _ => self.levels.push((r, 1, bits)),
        }
    }
}

struct Modeler<'a> {
    model: &'a CnnModel,
    bufs: [Vec<f32>; 2],
}

impl Modeler<'_> {
    fn pmf(&mut self, ctx: &Context) -> QuantizedPmf {
        let p = self.model.forward_context_with(ctx, &mut self.bufs);
        quantize_pmf_f32(&p).expect("softmax output is a valid pmf")
    }
}

struct Encoder<'a, O: ?Sized> {
    modeler: Modeler<'a>,
    coder: RangeEncoder,
    observer: &'a mut O,
}

impl<O: FrameObserver + ?Sized> BlockResolver for Encoder<'_, O> {
    fn resolve(
        &mut self,
        site: &SectionSite,
        stack: &InputStack,
        blocks: &[(usize, usize)],
        truth: Option<&BinaryImage>,
    ) -> Result<Vec<u8>> {
        let truth = truth.expect("the encoder walks with the true level");
        let mut out = Vec::with_capacity(blocks.len());
        for &(m, n) in blocks {
            let context = extract_context(stack, m, n);
            let pmf = self.modeler.pmf(&context);
            let pattern = truth.block_pattern_unchecked(m, n);
            self.coder.encode(pattern, &pmf)?;
            self.observer.block(&BlockEvent {
                site,
                m,
                n,
                context: &context,
                pmf: &pmf,
                pattern,
            });
            out.push(pattern);
        }
        Ok(out)
    }
}

struct Decoder<'a, O: ?Sized> {
    modeler: Modeler<'a>,
    coder: RangeDecoder<'a>,
    observer: &'a mut O,
}

impl<O: FrameObserver + ?Sized> BlockResolver for Decoder<'_, O> {
    fn resolve(
        &mut self,
        site: &SectionSite,
        stack: &InputStack,
        blocks: &[(usize, usize)],
        _: Option<&BinaryImage>,
    ) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(blocks.len());
        for &(m, n) in blocks {
            let context = extract_context(stack, m, n);
            let pmf = self.modeler.pmf(&context);
            let pattern = self.coder.decode(&pmf)?;
            self.observer.block(&BlockEvent {
                site,
                m,
                n,
                context: &context,
                pmf: &pmf,
                pattern,
            });
            out.push(pattern);
        }
        Ok(out)
    }
}

/// Frame payload: the base level as a little-endian 64-bit word, then one
/// range-coder stream holding every block of every higher level.
pub fn encode_frame(cloud: &VoxelPointCloud, model: &CnnModel, mode: PhaseMode) -> Result<Vec<u8>> {
    encode_frame_observed(cloud, model, mode, &mut NoObserver)
}

pub fn encode_frame_observed<O: FrameObserver + ?Sized>(
    cloud: &VoxelPointCloud,
    model: &CnnModel,
    mode: PhaseMode,
    observer: &mut O,
) -> Result<Vec<u8>> {
    let levels = level_stack(cloud)?;
    let mut out = base_level_to_bits(&levels[0])?.to_le_bytes().to_vec();
    let mut enc = Encoder {
        modeler: Modeler {
            model,
            bufs: Default::default(),
        },
        coder: RangeEncoder::new(),
        observer,
    };
    for pair in levels.windows(2) {
        walk_level(&pair[0], Some(&pair[1]), mode, &mut enc)?;
    }
    out.extend(enc.coder.finish());
    Ok(out)
}

/// Inverse of [`encode_frame`]; `resolution_bits` is the frame's final level.
pub fn decode_frame(
    payload: &[u8],
    model: &CnnModel,
    mode: PhaseMode,
    resolution_bits: u32,
) -> Result<VoxelPointCloud> {
    decode_frame_observed(payload, model, mode, resolution_bits, &mut NoObserver)
}

pub fn decode_frame_observed<O: FrameObserver + ?Sized>(
    payload: &[u8],
    model: &CnnModel,
    mode: PhaseMode,
    resolution_bits: u32,
    observer: &mut O,
) -> Result<VoxelPointCloud> {
    crate::cloud::check_resolution(resolution_bits)?;
    if payload.len() < BASE_WORD_BYTES {
        return Err(Error::TruncatedStream);
    }
    let (word, body) = payload.split_at(BASE_WORD_BYTES);
    let mut level = bits_to_base_level(u64::from_le_bytes(word.try_into().unwrap()));
    let mut dec = Decoder {
        modeler: Modeler {
            model,
            bufs: Default::default(),
        },
        coder: RangeDecoder::new(body)?,
        observer,
    };
    while level.resolution_bits() < resolution_bits {
        level = walk_level(&level, None, mode, &mut dec)?;
    }
    dec.coder.finish()?;
    Ok(level)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::CnnArchitecture;
    use crate::context::MIXING_CHANNEL;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut impl Rng, r: u32, n: usize) -> VoxelPointCloud {
        let side = 1u32 << r;
        let pts = (0..n).map(|_| [0; 3].map(|_: u32| rng.gen_range(0..side))).collect();
        VoxelPointCloud::new(r, pts).unwrap()
    }

    #[test]
    fn base_level_frame_is_eight_bytes() {
        let m = CnnModel::zeros(CnnArchitecture::light());
        let c = VoxelPointCloud::new(2, vec![[1, 2, 3], [0, 0, 0]]).unwrap();
        let p = encode_frame(&c, &m, PhaseMode::FourPhase).unwrap();
        assert_eq!(p.len(), 8);
        assert_eq!(u64::from_le_bytes(p[..8].try_into().unwrap()), 1 | 1 << 27);
        assert_eq!(decode_frame(&p, &m, PhaseMode::FourPhase, 2).unwrap(), c);
    }

    #[test]
    fn round_trips_random_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let m = CnnModel::init_random(CnnArchitecture::light(), 4);
        for r in 3..=6 {
            for mode in [PhaseMode::FourPhase, PhaseMode::SinglePhase] {
                let n = rng.gen_range(1..400);
                let c = random_cloud(&mut rng, r, n);
                let p = encode_frame(&c, &m, mode).unwrap();
                assert_eq!(decode_frame(&p, &m, mode, r).unwrap(), c, "r={r} {mode:?}");
            }
        }
    }

    #[test]
    fn single_voxel_codes_only_candidate_blocks() {
        let m = CnnModel::zeros(CnnArchitecture::light());
        let c = VoxelPointCloud::new(5, vec![[17, 4, 30]]).unwrap();
        let mut stats = LevelStats::default();
        let mut masks_ok = true;
        struct Check<'a>(&'a mut bool, &'a mut LevelStats);
        impl FrameObserver for Check<'_> {
            fn block(&mut self, e: &BlockEvent<'_>) {
                // the block's own mixing pixels are uncoded: 2 on candidates, 0 elsewhere
                let own = [(2, 2), (2, 3), (3, 2), (3, 3)].map(|(i, j)| e.context.get(MIXING_CHANNEL, i, j));
                *self.0 &= own.iter().all(|&v| v == 0 || v == 2) && own.contains(&2);
                self.1.block(e);
            }
        }
        let p = encode_frame_observed(&c, &m, PhaseMode::FourPhase, &mut Check(&mut masks_ok, &mut stats)).unwrap();
        assert!(masks_ok);
        // each of the 3 coded levels has one parent: two planes of one block each
        assert_eq!(stats.levels.iter().map(|l| l.1).collect::<Vec<_>>(), vec![2, 2, 2]);
        assert_eq!(decode_frame(&p, &m, PhaseMode::FourPhase, 5).unwrap(), c);
    }

    #[test]
    fn uniform_model_costs_four_bits_per_block() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = CnnModel::zeros(CnnArchitecture::baseline());
        let c = random_cloud(&mut rng, 6, 3000);
        let mut stats = LevelStats::default();
        let p = encode_frame_observed(&c, &m, PhaseMode::FourPhase, &mut stats).unwrap();
        let blocks = stats.total_blocks() as f64;
        assert_eq!(stats.total_bits(), 4.0 * blocks);
        let coded = ((p.len() - 8) * 8) as f64;
        assert!(coded >= 4.0 * blocks && coded <= 4.0 * blocks + 32.0);
    }

    #[test]
    fn encoder_and_decoder_see_identical_pmfs() {
        #[derive(Default)]
        struct Log(Vec<(Context, [u32; 16], u8)>);
        impl FrameObserver for Log {
            fn block(&mut self, e: &BlockEvent<'_>) {
                let mut f = [0; 16];
                f.copy_from_slice(e.pmf.frequencies());
                self.0.push((*e.context, f, e.pattern));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = CnnModel::init_random(CnnArchitecture::baseline(), 1);
        let c = random_cloud(&mut rng, 5, 500);
        let (mut a, mut b) = (Log::default(), Log::default());
        let p = encode_frame_observed(&c, &m, PhaseMode::FourPhase, &mut a).unwrap();
        decode_frame_observed(&p, &m, PhaseMode::FourPhase, 5, &mut b).unwrap();
        assert!(!a.0.is_empty());
        assert_eq!(a.0, b.0);
    }

    #[test]
    fn damaged_payloads_are_detected_or_differ() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = CnnModel::init_random(CnnArchitecture::light(), 1);
        let c = random_cloud(&mut rng, 5, 300);
        let p = encode_frame(&c, &m, PhaseMode::FourPhase).unwrap();
        for i in [0, 8, p.len() / 2, p.len() - 1] {
            let mut bad = p.clone();
            bad[i] ^= 0x5A;
            if let Ok(d) = decode_frame(&bad, &m, PhaseMode::FourPhase, 5) {
                assert_ne!(d, c, "byte {i}");
            }
        }
        assert!(decode_frame(&p[..5], &m, PhaseMode::FourPhase, 5).is_err());
        if let Ok(d) = decode_frame(&p[..p.len() - 6], &m, PhaseMode::FourPhase, 5) {
            assert_ne!(d, c);
        }
    }
}
