//! The three-stage pipeline: collect contexts from a few frames, train the
//! model, then code every frame with it.

mod bitstream;
mod frame;

pub use bitstream::{
    write_bitstream, Bitstream, ByteAccounting, FrameRecord, SequenceHeader, FIXED_HEADER_BYTES, MAGIC, OFFSET_BYTES,
    RECORD_HEADER_BYTES, VERSION,
};
pub use frame::{
    decode_frame, decode_frame_observed, encode_frame, encode_frame_observed, BlockEvent, FrameObserver, LevelStats,
    NoObserver, BASE_WORD_BYTES,
};

use std::time::{Duration, Instant};

use rayon::prelude::*;

use crate::cloud::VoxelPointCloud;
use crate::cnn::{train, CnnArchitecture, CnnModel, TrainingConfig, TrainingReport};
use crate::context::{choose_sweep_axis, collect_training_set, Axis, CollectionConfig, ContextSampling, PhaseMode};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CodecConfig {
    /// Number of equidistant frames the model is trained on.
    pub training_frames: usize,
    pub phase_mode: PhaseMode,
    pub architecture: CnnArchitecture,
    pub training: TrainingConfig,
    pub sampling: ContextSampling,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            training_frames: 5,
            phase_mode: PhaseMode::FourPhase,
            architecture: CnnArchitecture::baseline(),
            training: TrainingConfig::default(),
            sampling: ContextSampling::AllPhases,
        }
    }
}

impl CodecConfig {
    /// All blocks of a section coded at once.
    pub fn single_phase() -> Self {
        Self {
            phase_mode: PhaseMode::SinglePhase,
            ..Self::default()
        }
    }

    /// The reduced-width network.
    pub fn light() -> Self {
        Self {
            architecture: CnnArchitecture::light(),
            ..Self::default()
        }
    }
}

/// `floor(i * F / K)` for `i < K`, with `K` capped at `F`.
pub fn training_frame_indices(frame_count: usize, k: usize) -> Vec<usize> {
    let k = k.min(frame_count);
    (0..k).map(|i| i * frame_count / k).collect()
}

#[derive(Clone, Debug)]
pub struct EncodeReport {
    pub axis: Axis,
    pub training_frames: Vec<usize>,
    /// Distinct contexts in the training store.
    pub distinct_contexts: usize,
    /// Blocks recorded in the training store.
    pub training_blocks: u64,
    /// `None` when the store was empty and the uniform model was used.
    pub training: Option<TrainingReport>,
    pub training_time: Duration,
    pub encode_time: Duration,
}

/// Encodes a sequence into a complete file.
pub fn encode_sequence(frames: &[VoxelPointCloud], cfg: &CodecConfig) -> Result<(Vec<u8>, EncodeReport)> {
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    let axis = match frames.iter().find(|f| !f.is_empty()) {
        Some(f) => choose_sweep_axis(f)?,
        None => Axis::Z,
    };
    let t0 = Instant::now();
    let picked = training_frame_indices(frames.len(), cfg.training_frames);
    let train_set: Vec<VoxelPointCloud> = picked.iter().map(|&i| axis.permute_cloud(&frames[i])).collect();
    let store = collect_training_set(
        &train_set,
        CollectionConfig {
            phase_mode: cfg.phase_mode,
            sampling: cfg.sampling,
        },
    )?;
    let (model, training) = if store.is_empty() {
        (CnnModel::zeros(cfg.architecture.clone()), None)
    } else {
        let (m, r) = train(&store, &cfg.architecture, &cfg.training)?;
        (m, Some(r))
    };
    let training_time = t0.elapsed();

    let t1 = Instant::now();
    let records = frames
        .par_iter()
        .map(|f| {
            let payload = if f.is_empty() {
                None
            } else {
                Some(encode_frame(&axis.permute_cloud(f), &model, cfg.phase_mode)?)
            };
            Ok(FrameRecord {
                resolution_bits: f.resolution_bits(),
                payload,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let header = SequenceHeader {
        phase_mode: cfg.phase_mode,
        axis,
        model,
    };
    let bytes = write_bitstream(&header, &records);
    let report = EncodeReport {
        axis,
        training_frames: picked,
        distinct_contexts: store.len(),
        training_blocks: store.total_count(),
        training,
        training_time,
        encode_time: t1.elapsed(),
    };
    Ok((bytes, report))
}

pub fn decode_sequence(bytes: &[u8]) -> Result<Vec<VoxelPointCloud>> {
    Bitstream::parse(bytes)?.decode_all()
}

/// Decodes frame `index` alone.
pub fn decode_sequence_frame(bytes: &[u8], index: usize) -> Result<VoxelPointCloud> {
    Bitstream::parse(bytes)?.decode_frame(index)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameBitrate {
    /// `CL_f`: payload bits.
    pub payload_bits: u64,
    pub points: usize,
    /// `(CL_f + CL_m / F) / n`.
    pub bpp: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BitrateReport {
    pub frames: Vec<FrameBitrate>,
    /// `CL_m`: weight bits.
    pub model_bits: u64,
    /// Header, architecture, offset table and record headers.
    pub framing_bits: u64,
    pub file_bits: u64,
}

impl BitrateReport {
    /// Mean of the per-frame rates.
    pub fn average_bpp(&self) -> f64 {
        self.frames.iter().map(|f| f.bpp).sum::<f64>() / self.frames.len() as f64
    }

    /// All bits over all points.
    pub fn pooled_bpp(&self) -> f64 {
        self.file_bits as f64 / self.frames.iter().map(|f| f.points).sum::<usize>() as f64
    }
}

/// `(CL_f + CL_m / F) / n` for a frame of `n` points coded in `cl_f` bits,
/// in a file of `frame_count` frames sharing `cl_m` model bits.
pub fn bits_per_point(cl_f: u64, cl_m: u64, frame_count: usize, points: usize) -> Option<f64> {
    (points > 0 && frame_count > 0).then(|| (cl_f as f64 + cl_m as f64 / frame_count as f64) / points as f64)
}

/// Bits per point of every frame of a file, given the decoded frames.
pub fn bitrate_report(bytes: &[u8], frames: &[VoxelPointCloud]) -> Result<BitrateReport> {
    let acc = Bitstream::parse(bytes)?.accounting();
    if frames.len() != acc.payloads.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} frames given for a file of {}",
            frames.len(),
            acc.payloads.len()
        )));
    }
    let model_bits = 8 * acc.weights as u64;
    let per_frame = frames
        .iter()
        .zip(&acc.payloads)
        .enumerate()
        .map(|(i, (f, &p))| {
            let payload_bits = 8 * p as u64;
            let bpp = bits_per_point(payload_bits, model_bits, frames.len(), f.len()).ok_or(Error::ZeroPoints(i))?;
            Ok(FrameBitrate {
                payload_bits,
                points: f.len(),
                bpp,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BitrateReport {
        frames: per_frame,
        model_bits,
        framing_bits: 8 * acc.framing() as u64,
        file_bits: 8 * bytes.len() as u64,
    })
}
