mod common;

use proptest::prelude::*;
use rand::Rng;
use seqvox::codec::{decode_frame, encode_frame, encode_frame_observed, BlockEvent, FrameObserver};
use seqvox::context::{Context, CONTEXT_LEN, MIXING_CHANNEL};
use seqvox::*;

fn arb_cloud(min_r: u32, max_r: u32, max_points: usize) -> impl Strategy<Value = VoxelPointCloud> {
    (min_r..=max_r).prop_flat_map(move |r| {
        let side = 1u32 << r;
        prop::collection::vec([0..side, 0..side, 0..side], 0..max_points)
            .prop_map(move |pts| VoxelPointCloud::new(r, pts).unwrap())
    })
}

fn arb_context() -> impl Strategy<Value = Context> {
    prop::collection::vec(0u8..4, CONTEXT_LEN).prop_map(|v| {
        let mut a = [0u8; CONTEXT_LEN];
        for (k, (x, y)) in a.iter_mut().zip(v).enumerate() {
            *x = if k / 36 == MIXING_CHANNEL { y } else { y & 1 };
        }
        Context(a)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ply_save_then_load_is_identity(c in arb_cloud(2, 12, 400)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.ply");
        ply::save_voxelized_cloud(&c, &path).unwrap();
        prop_assert_eq!(ply::load_voxelized_cloud(&path, c.resolution_bits()).unwrap(), c);
    }

    #[test]
    fn frame_round_trip_with_random_models(
        c in arb_cloud(3, 6, 300),
        seed in any::<u64>(),
        single in any::<bool>(),
        light in any::<bool>(),
    ) {
        prop_assume!(!c.is_empty());
        let arch = if light { CnnArchitecture::light() } else { CnnArchitecture::baseline() };
        let model = CnnModel::init_random(arch, seed);
        let mode = if single { PhaseMode::SinglePhase } else { PhaseMode::FourPhase };
        let payload = encode_frame(&c, &model, mode).unwrap();
        prop_assert_eq!(decode_frame(&payload, &model, mode, c.resolution_bits()).unwrap(), c);
    }

    #[test]
    fn output_pmfs_sum_to_one(ctx in arb_context(), seed in any::<u64>()) {
        let model = CnnModel::init_random(CnnArchitecture::baseline(), seed);
        let p = model.forward_context(&ctx);
        let sum: f64 = p.iter().map(|&x| f64::from(x)).sum();
        prop_assert!((sum - 1.0).abs() < 1e-6, "sum {}", sum);
        prop_assert!(p.iter().all(|&x| x > 0.0));
    }
}

#[test]
fn ten_training_frames_round_trip() {
    let mut rng = common::rng(11);
    let frames: Vec<_> = (0..12)
        .map(|i| {
            if i % 3 == 0 {
                common::random_walk_surface(&mut rng, 5)
            } else {
                common::random_cloud(&mut rng, 5, 0.02)
            }
        })
        .collect();
    let cfg = CodecConfig {
        training_frames: 10,
        architecture: CnnArchitecture::light(),
        training: TrainingConfig {
            max_epochs: Some(1),
            ..TrainingConfig::default()
        },
        ..CodecConfig::default()
    };
    let (bytes, report) = encode_sequence(&frames, &cfg).unwrap();
    assert_eq!(report.training_frames.len(), 10);
    assert_eq!(decode_sequence(&bytes).unwrap(), frames);
}

#[test]
fn large_ply_round_trip() {
    let mut rng = common::rng(12);
    let pts: Vec<Voxel> = (0..100_000)
        .map(|_| [0; 3].map(|_: u32| rng.gen_range(0..1024)))
        .collect();
    let c = VoxelPointCloud::new(10, pts).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("big.ply");
    ply::save_voxelized_cloud(&c, &path).unwrap();
    assert_eq!(ply::load_voxelized_cloud(&path, 10).unwrap(), c);
}

/// `(z, phase, m, n, context, frequencies, pattern)`
type Event = (u32, u8, usize, usize, Context, [u32; 16], u8);

#[derive(Default)]
struct Recorder {
    resolution: u32,
    last_z: u32,
    events: Vec<Event>,
}

impl FrameObserver for Recorder {
    fn block(&mut self, e: &BlockEvent<'_>) {
        if e.site.resolution_bits == self.resolution && e.site.z <= self.last_z {
            self.events.push((
                e.site.z,
                e.site.phase.get(),
                e.m,
                e.n,
                *e.context,
                *e.pmf.frequencies(),
                e.pattern,
            ));
        }
    }
}

/// Coding section `z0` at the finest level only looks at `O(z0-1)`,
/// `O(z0-2)`, `C(z0)` and `C(z0+1)`: changing voxels further ahead leaves
/// every event up to `z0` unchanged.
#[test]
fn sections_do_not_look_ahead() {
    let mut rng = common::rng(13);
    let r = 5;
    let z0 = 16;
    let mut pts: Vec<Voxel> = Vec::new();
    for x in 0..32 {
        for y in 0..32 {
            pts.push([x, y, 4]);
            if rng.gen_bool(0.3) {
                pts.push([x, y, rng.gen_range(5..=z0)]);
            }
        }
    }
    let base = VoxelPointCloud::new(r, pts.clone()).unwrap();
    // C(z0 + 1) shares its parent plane with z0, so changes start at z0 + 2
    pts.extend((0..400).map(|_| [rng.gen_range(0..32), rng.gen_range(0..32), rng.gen_range(z0 + 2..32)]));
    let ahead = VoxelPointCloud::new(r, pts).unwrap();

    let model = CnnModel::init_random(CnnArchitecture::baseline(), 5);
    for mode in [PhaseMode::FourPhase, PhaseMode::SinglePhase] {
        let mut a = Recorder {
            resolution: r,
            last_z: z0,
            ..Recorder::default()
        };
        let mut b = Recorder {
            resolution: r,
            last_z: z0,
            ..Recorder::default()
        };
        let pa = encode_frame_observed(&base, &model, mode, &mut a).unwrap();
        let pb = encode_frame_observed(&ahead, &model, mode, &mut b).unwrap();
        assert_ne!(pa, pb);
        assert!(a.events.iter().any(|e| e.0 == z0));
        assert_eq!(a.events, b.events);
    }
}
