//! Bitrate reports in text, CSV and JSON.

use std::io;

use clap::ValueEnum;
use seqvox::cloud::VoxelPointCloud;
use seqvox::codec::{bits_per_point, Bitstream, EncodeReport};
use serde::Serialize;

use crate::{CliResult, Failure};

#[derive(Clone, Copy, ValueEnum)]
pub enum OutputFormat {
    Text,
    Csv,
    Json,
}

#[derive(Serialize)]
pub struct FrameRow {
    pub frame: usize,
    pub points: usize,
    pub payload_bits: u64,
    /// Absent for frames without points.
    pub bpp: Option<f64>,
}

#[derive(Serialize)]
pub struct EncodeTimes {
    pub training_frames: Vec<usize>,
    pub distinct_contexts: usize,
    pub epochs: usize,
    pub training_seconds: f64,
    pub encode_seconds: f64,
    pub encode_seconds_per_frame: f64,
}

impl EncodeTimes {
    pub fn from(r: &EncodeReport, frames: usize) -> Self {
        let encode_seconds = r.encode_time.as_secs_f64();
        Self {
            training_frames: r.training_frames.clone(),
            distinct_contexts: r.distinct_contexts,
            epochs: r.training.as_ref().map_or(0, |t| t.epochs),
            training_seconds: r.training_time.as_secs_f64(),
            encode_seconds,
            encode_seconds_per_frame: encode_seconds / frames as f64,
        }
    }
}

#[derive(Serialize)]
pub struct StoreSize {
    pub training_frames: Vec<usize>,
    pub distinct_contexts: usize,
    pub blocks: u64,
}

#[derive(Serialize)]
pub struct LevelRow {
    pub resolution_bits: u32,
    pub blocks: u64,
    /// Sum of `-log2 p` over the level's blocks.
    pub ideal_bits: f64,
}

#[derive(Serialize)]
pub struct Report {
    pub phases: usize,
    pub axis: String,
    pub channels: Vec<u16>,
    pub param_count: usize,
    pub model_bits: u64,
    pub framing_bits: u64,
    pub file_bits: u64,
    /// Mean bpp over frames with points.
    pub average_bpp: Option<f64>,
    pub frames: Vec<FrameRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encode: Option<EncodeTimes>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub context_store: Option<StoreSize>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelRow>,
}

impl Report {
    pub fn from_file(bytes: &[u8], frames: &[VoxelPointCloud]) -> CliResult<Self> {
        let stream = Bitstream::parse(bytes)?;
        let acc = stream.accounting();
        let header = stream.header();
        let model_bits = 8 * acc.weights as u64;
        let rows: Vec<FrameRow> = frames
            .iter()
            .zip(&acc.payloads)
            .enumerate()
            .map(|(i, (f, &p))| FrameRow {
                frame: i,
                points: f.len(),
                payload_bits: 8 * p as u64,
                bpp: bits_per_point(8 * p as u64, model_bits, frames.len(), f.len()),
            })
            .collect();
        let rates: Vec<f64> = rows.iter().filter_map(|r| r.bpp).collect();
        let arch = header.model.architecture();
        Ok(Self {
            phases: header.phase_mode.passes(),
            axis: format!("{:?}", header.axis),
            channels: arch.stages().iter().map(|s| s.channels).collect(),
            param_count: arch.param_count(),
            model_bits,
            framing_bits: 8 * acc.framing() as u64,
            file_bits: 8 * bytes.len() as u64,
            average_bpp: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
            frames: rows,
            encode: None,
            context_store: None,
            levels: Vec::new(),
        })
    }

    pub fn print(&self, format: OutputFormat) -> CliResult<()> {
        match format {
            OutputFormat::Text => self.print_text(),
            OutputFormat::Json => {
                let s = serde_json::to_string_pretty(self).map_err(|e| Failure::Io(e.to_string()))?;
                println!("{s}");
            }
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(io::stdout());
                for r in &self.frames {
                    w.serialize(r).map_err(|e| Failure::Io(e.to_string()))?;
                }
                w.flush()?;
            }
        }
        Ok(())
    }

    fn print_text(&self) {
        for r in &self.frames {
            match r.bpp {
                Some(b) => println!(
                    "frame {:>5}: {:>9} points {:>10} bits {b:.4} bpp",
                    r.frame, r.points, r.payload_bits
                ),
                None => println!("frame {:>5}: empty", r.frame),
            }
        }
        if let Some(b) = self.average_bpp {
            println!("average: {b:.4} bpp");
        }
        println!(
            "model: {} parameters, channels {:?}, {} bits",
            self.param_count, self.channels, self.model_bits
        );
        println!(
            "file: {} bits ({} framing), {} phase(s), sweep axis {}",
            self.file_bits, self.framing_bits, self.phases, self.axis
        );
        if let Some(e) = &self.encode {
            println!(
                "training: frames {:?}, {} contexts, {} epochs, {:.3} s",
                e.training_frames, e.distinct_contexts, e.epochs, e.training_seconds
            );
            println!(
                "encoding: {:.3} s ({:.4} s per frame)",
                e.encode_seconds, e.encode_seconds_per_frame
            );
        }
        if let Some(s) = &self.context_store {
            println!(
                "context store: {} distinct contexts, {} blocks from frames {:?}",
                s.distinct_contexts, s.blocks, s.training_frames
            );
        }
        for l in &self.levels {
            println!(
                "level r={:>2}: {:>9} blocks {:>12.1} bits",
                l.resolution_bits, l.blocks, l.ideal_bits
            );
        }
    }
}
