//! Sequence container. All integers little-endian.
//!
//! ```text
//! "SNOC" | u8 version | u8 flags | u8 sweep axis | u32 frame count F
//! architecture block: u8 stages, then per stage u8 K, u8 S, u16 C
//! weights: f32 per parameter
//! offset table: F x u64, absolute offset of each frame record
//! frame record: u8 flags | u8 resolution bits | u32 payload length | payload
//! ```
//!
//! Header flag bit 0 selects single-phase coding; frame flag bit 0 marks
//! an empty frame, which carries no payload. Frame records follow the
//! table back to back and end exactly at the end of the file.

use rayon::prelude::*;

use super::frame::decode_frame;
use crate::cloud::{check_resolution, VoxelPointCloud};
use crate::cnn::{CnnArchitecture, CnnModel};
use crate::context::{Axis, PhaseMode};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SNOC";
pub const VERSION: u8 = 1;
/// Magic, version, flags, axis and frame count.
pub const FIXED_HEADER_BYTES: usize = 11;
pub const OFFSET_BYTES: usize = 8;
/// Flags, resolution and payload length of one frame record.
pub const RECORD_HEADER_BYTES: usize = 6;

const FLAG_SINGLE_PHASE: u8 = 1;
const FRAME_EMPTY: u8 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceHeader {
    pub phase_mode: PhaseMode,
    pub axis: Axis,
    pub model: CnnModel,
}

/// One frame as stored: resolution and payload, or an empty marker.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FrameRecord {
    pub resolution_bits: u32,
    /// `None` for an empty frame.
    pub payload: Option<Vec<u8>>,
}

pub fn write_bitstream(header: &SequenceHeader, frames: &[FrameRecord]) -> Vec<u8> {
    let arch = header.model.architecture().to_bytes();
    let weights = header.model.serialize();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(if header.phase_mode == PhaseMode::SinglePhase {
        FLAG_SINGLE_PHASE
    } else {
        0
    });
    out.push(header.axis.index() as u8);
    out.extend_from_slice(&(frames.len() as u32).to_le_bytes());
    out.extend_from_slice(&arch);
    out.extend_from_slice(&weights);
    let mut offset = (out.len() + OFFSET_BYTES * frames.len()) as u64;
    for f in frames {
        out.extend_from_slice(&offset.to_le_bytes());
        offset += (RECORD_HEADER_BYTES + f.payload.as_ref().map_or(0, Vec::len)) as u64;
    }
    for f in frames {
        out.push(if f.payload.is_none() { FRAME_EMPTY } else { 0 });
        out.push(f.resolution_bits as u8);
        let payload = f.payload.as_deref().unwrap_or(&[]);
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(payload);
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct RecordSpan {
    resolution_bits: u32,
    empty: bool,
    payload_start: usize,
    payload_len: usize,
}

/// Byte counts of every part of a file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ByteAccounting {
    pub fixed_header: usize,
    pub architecture: usize,
    pub weights: usize,
    pub offset_table: usize,
    pub record_headers: usize,
    pub payloads: Vec<usize>,
}

impl ByteAccounting {
    /// Everything except weights and payloads.
    pub fn framing(&self) -> usize {
        self.fixed_header + self.architecture + self.offset_table + self.record_headers
    }

    pub fn total(&self) -> usize {
        self.framing() + self.weights + self.payloads.iter().sum::<usize>()
    }
}

/// A parsed, validated file with random access to its frames.
#[derive(Clone, Debug)]
pub struct Bitstream<'a> {
    bytes: &'a [u8],
    header: SequenceHeader,
    arch_len: usize,
    records: Vec<RecordSpan>,
}

fn format(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read<const N: usize>(bytes: &[u8], at: usize) -> Result<[u8; N]> {
    bytes
        .get(at..at + N)
        .map(|s| s.try_into().unwrap())
        .ok_or_else(|| format(format!("file ends inside a field at byte {at}")))
}

impl<'a> Bitstream<'a> {
    pub fn parse(bytes: &'a [u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != MAGIC {
            return Err(format("bad magic"));
        }
        let [version, flags, axis] = read::<3>(bytes, 4)?;
        if version != VERSION {
            return Err(format(format!("unsupported version {version}")));
        }
        if flags & !FLAG_SINGLE_PHASE != 0 {
            return Err(format(format!("unknown header flags {flags:#04x}")));
        }
        let phase_mode = if flags & FLAG_SINGLE_PHASE != 0 {
            PhaseMode::SinglePhase
        } else {
            PhaseMode::FourPhase
        };
        let axis = Axis::from_index(axis).ok_or_else(|| format(format!("bad sweep axis {axis}")))?;
        let count = u32::from_le_bytes(read::<4>(bytes, 7)?) as usize;
        let (arch, arch_len) = CnnArchitecture::from_bytes(&bytes[FIXED_HEADER_BYTES..])?;
        let w_start = FIXED_HEADER_BYTES + arch_len;
        let w_len = 4 * arch.param_count();
        let weights = bytes
            .get(w_start..w_start + w_len)
            .ok_or_else(|| format("file ends inside the weights"))?;
        let model = CnnModel::deserialize(weights, arch)?;

        let table = w_start + w_len;
        let table_len = count
            .checked_mul(OFFSET_BYTES)
            .filter(|&l| table + l <= bytes.len())
            .ok_or_else(|| format("file ends inside the offset table"))?;
        let mut expected = table + table_len;
        let mut records = Vec::with_capacity(count);
        for i in 0..count {
            let offset = u64::from_le_bytes(read::<8>(bytes, table + OFFSET_BYTES * i)?);
            if offset != expected as u64 {
                return Err(format(format!(
                    "frame {i} offset {offset} does not follow the previous record"
                )));
            }
            let [fflags, bits] = read::<2>(bytes, expected)?;
            let len = u32::from_le_bytes(read::<4>(bytes, expected + 2)?) as usize;
            if fflags & !FRAME_EMPTY != 0 {
                return Err(format(format!("frame {i}: unknown flags {fflags:#04x}")));
            }
            let empty = fflags & FRAME_EMPTY != 0;
            if empty && len != 0 {
                return Err(format(format!("frame {i}: empty frame with a payload")));
            }
            check_resolution(u32::from(bits))?;
            let payload_start = expected + RECORD_HEADER_BYTES;
            if payload_start + len > bytes.len() {
                return Err(format(format!("frame {i}: payload runs past the end of the file")));
            }
            records.push(RecordSpan {
                resolution_bits: u32::from(bits),
                empty,
                payload_start,
                payload_len: len,
            });
            expected = payload_start + len;
        }
        if expected != bytes.len() {
            return Err(format(format!(
                "{} unexpected bytes after the last frame",
                bytes.len() - expected
            )));
        }
        Ok(Self {
            bytes,
            header: SequenceHeader {
                phase_mode,
                axis,
                model,
            },
            arch_len,
            records,
        })
    }

    pub fn header(&self) -> &SequenceHeader {
        &self.header
    }

    pub fn frame_count(&self) -> usize {
        self.records.len()
    }

    fn record(&self, index: usize) -> Result<&RecordSpan> {
        self.records.get(index).ok_or(Error::FrameIndex {
            index,
            count: self.records.len(),
        })
    }

    pub fn resolution_bits(&self, index: usize) -> Result<u32> {
        Ok(self.record(index)?.resolution_bits)
    }

    /// Payload bytes of a frame; empty for an empty frame.
    pub fn payload(&self, index: usize) -> Result<&'a [u8]> {
        let r = self.record(index)?;
        Ok(&self.bytes[r.payload_start..r.payload_start + r.payload_len])
    }

    /// Decodes one frame without touching any other.
    pub fn decode_frame(&self, index: usize) -> Result<VoxelPointCloud> {
        let r = *self.record(index)?;
        if r.empty {
            return VoxelPointCloud::empty(r.resolution_bits);
        }
        let h = &self.header;
        let cloud = decode_frame(self.payload(index)?, &h.model, h.phase_mode, r.resolution_bits)?;
        Ok(h.axis.unpermute_cloud(&cloud))
    }

    /// Decodes all frames, in parallel.
    pub fn decode_all(&self) -> Result<Vec<VoxelPointCloud>> {
        (0..self.frame_count())
            .into_par_iter()
            .map(|i| self.decode_frame(i))
            .collect()
    }

    pub fn accounting(&self) -> ByteAccounting {
        ByteAccounting {
            fixed_header: FIXED_HEADER_BYTES,
            architecture: self.arch_len,
            weights: self.header.model.serialize().len(),
            offset_table: OFFSET_BYTES * self.records.len(),
            record_headers: RECORD_HEADER_BYTES * self.records.len(),
            payloads: self.records.iter().map(|r| r.payload_len).collect(),
        }
    }
}
