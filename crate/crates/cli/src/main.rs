//! `seqvox` command-line front end.

mod report;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use seqvox::cloud::VoxelPointCloud;
use seqvox::codec::{
    decode_frame_observed, encode_sequence, training_frame_indices, Bitstream, CodecConfig, EncodeReport, LevelStats,
};
use seqvox::context::{collect_training_set, CollectionConfig};
use seqvox::{ply, CnnArchitecture, PhaseMode, TrainingConfig};

use report::{OutputFormat, Report};

#[derive(Parser)]
#[command(
    name = "seqvox",
    version,
    about = "Lossless geometry codec for voxelized point-cloud sequences"
)]
struct Cli {
    /// Worker threads for the parallel stages (defaults to all cores).
    #[arg(long, global = true, env = "SEQVOX_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the sequence and code every frame.
    Encode(EncodeArgs),
    /// Decode a file to one PLY per frame.
    Decode(DecodeArgs),
    /// Encode and decode in memory and compare every frame.
    Verify(VerifyArgs),
    /// Bitrate, model size and per-resolution report of a coded file.
    Stats(StatsArgs),
}

#[derive(Args)]
struct SequenceArgs {
    /// Directory of .ply frames or a glob pattern; frames are ordered by path.
    #[arg(long)]
    input: String,

    /// Bits per coordinate; inferred from the largest coordinate when omitted.
    #[arg(long)]
    resolution: Option<u32>,
}

#[derive(Args)]
struct CodecArgs {
    /// Number of equidistant frames used for training.
    #[arg(long, default_value_t = 5)]
    train_frames: usize,

    #[arg(long, default_value = "4", value_parser = ["4", "1"])]
    phases: String,

    #[arg(long, value_enum, default_value_t = Preset::Baseline)]
    preset: Preset,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 1e-3)]
    lr: f32,

    #[arg(long, default_value_t = 10_000)]
    batch_size: usize,

    #[arg(long, default_value_t = 20)]
    patience: usize,

    /// Stop after this many epochs even if the loss is still improving.
    #[arg(long)]
    max_epochs: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Baseline,
    Lm,
}

#[derive(Args)]
struct EncodeArgs {
    #[command(flatten)]
    sequence: SequenceArgs,

    #[arg(long)]
    output: PathBuf,

    #[command(flatten)]
    codec: CodecArgs,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

#[derive(Args)]
struct DecodeArgs {
    #[arg(long)]
    input: PathBuf,

    /// Directory for `frame_NNNNN.ply` files.
    #[arg(long)]
    output: PathBuf,

    /// Decode only this frame.
    #[arg(long)]
    frame: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    sequence: SequenceArgs,

    #[command(flatten)]
    codec: CodecArgs,

    /// Flip one byte of the first coded payload before decoding.
    #[arg(long)]
    inject_corruption: bool,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    input: PathBuf,

    /// Training-frame count used at encode time, to rebuild the context store.
    #[arg(long, default_value_t = 5)]
    train_frames: usize,

    #[arg(long, value_enum, default_value_t = OutputFormat::Text)]
    format: OutputFormat,
}

/// Failure classes with their process exit codes.
#[derive(Debug)]
enum Failure {
    Io(String),
    Usage(String),
    Format(String),
    Verify(usize),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Format(_) => 3,
            Failure::Verify(_) => 4,
        }
    }
}

impl From<seqvox::Error> for Failure {
    fn from(e: seqvox::Error) -> Self {
        use seqvox::Error as E;
        match e {
            E::Io(_) => Failure::Io(e.to_string()),
            E::FrameIndex { .. } | E::EmptySequence => Failure::Usage(e.to_string()),
            _ => Failure::Format(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Encode(a) => cmd_encode(a),
        Command::Decode(a) => cmd_decode(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Stats(a) => cmd_stats(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Io(m) | Failure::Usage(m) | Failure::Format(m) => eprintln!("error: {m}"),
                Failure::Verify(n) => eprintln!("verification failed for {n} frame(s)"),
            }
            ExitCode::from(f.code())
        }
    }
}

/// Frame paths in sequence order.
fn frame_paths(input: &str) -> CliResult<Vec<PathBuf>> {
    let dir = Path::new(input);
    let mut paths: Vec<PathBuf> = if dir.is_dir() {
        fs::read_dir(dir)?
            .map(|e| e.map(|e| e.path()))
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("ply")))
            .collect()
    } else {
        glob::glob(input)
            .map_err(|e| Failure::Usage(format!("bad pattern {input:?}: {e}")))?
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| Failure::Io(e.to_string()))?
    };
    paths.sort();
    if paths.is_empty() {
        return Err(Failure::Usage(format!("no frames found at {input:?}")));
    }
    Ok(paths)
}

fn load_sequence(args: &SequenceArgs) -> CliResult<(Vec<PathBuf>, Vec<VoxelPointCloud>)> {
    let paths = frame_paths(&args.input)?;
    let points = paths.iter().map(ply::load_points).collect::<Result<Vec<_>, _>>()?;
    let bits = match args.resolution {
        Some(r) => r,
        None => points
            .iter()
            .map(|p| VoxelPointCloud::required_bits(p))
            .max()
            .unwrap_or(2),
    };
    let frames = points
        .into_iter()
        .map(|p| VoxelPointCloud::new(bits, p))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((paths, frames))
}

fn codec_config(args: &CodecArgs) -> CodecConfig {
    CodecConfig {
        training_frames: args.train_frames,
        phase_mode: if args.phases == "1" {
            PhaseMode::SinglePhase
        } else {
            PhaseMode::FourPhase
        },
        architecture: match args.preset {
            Preset::Baseline => CnnArchitecture::baseline(),
            Preset::Lm => CnnArchitecture::light(),
        },
        training: TrainingConfig {
            batch_size: args.batch_size,
            learning_rate: args.lr,
            patience: args.patience,
            seed: args.seed,
            max_epochs: args.max_epochs,
            ..TrainingConfig::default()
        },
        ..CodecConfig::default()
    }
}

fn encode(frames: &[VoxelPointCloud], args: &CodecArgs) -> CliResult<(Vec<u8>, EncodeReport)> {
    if args.train_frames == 0 {
        return Err(Failure::Usage("--train-frames must be at least 1".into()));
    }
    if args.batch_size == 0 {
        return Err(Failure::Usage("--batch-size must be at least 1".into()));
    }
    Ok(encode_sequence(frames, &codec_config(args))?)
}

fn cmd_encode(args: EncodeArgs) -> CliResult<()> {
    let (_, frames) = load_sequence(&args.sequence)?;
    let (bytes, enc) = encode(&frames, &args.codec)?;
    fs::write(&args.output, &bytes)?;
    let mut rep = Report::from_file(&bytes, &frames)?;
    rep.encode = Some(report::EncodeTimes::from(&enc, frames.len()));
    rep.print(args.format)
}

fn write_frame(dir: &Path, index: usize, cloud: &VoxelPointCloud) -> CliResult<()> {
    Ok(ply::save_voxelized_cloud(
        cloud,
        dir.join(format!("frame_{index:05}.ply")),
    )?)
}

fn cmd_decode(args: DecodeArgs) -> CliResult<()> {
    let bytes = fs::read(&args.input)?;
    let stream = Bitstream::parse(&bytes)?;
    fs::create_dir_all(&args.output)?;
    let t0 = Instant::now();
    match args.frame {
        Some(i) => {
            let cloud = stream.decode_frame(i)?;
            write_frame(&args.output, i, &cloud)?;
        }
        None => {
            let frames = stream.decode_all()?;
            for (i, f) in frames.iter().enumerate() {
                write_frame(&args.output, i, f)?;
            }
        }
    }
    let n = args.frame.map_or(stream.frame_count(), |_| 1);
    println!("decoded {n} frame(s) in {:.3} s", t0.elapsed().as_secs_f64());
    Ok(())
}

fn cmd_verify(args: VerifyArgs) -> CliResult<()> {
    let (paths, frames) = load_sequence(&args.sequence)?;
    let (mut bytes, _) = encode(&frames, &args.codec)?;
    if args.inject_corruption {
        corrupt_first_payload(&mut bytes)?;
    }
    let stream = Bitstream::parse(&bytes)?;
    let mut failed = 0;
    for (i, (path, frame)) in paths.iter().zip(&frames).enumerate() {
        let verdict = match stream.decode_frame(i) {
            Ok(d) if &d == frame => "PASS".to_string(),
            Ok(d) => format!("FAIL ({} decoded points, {} expected)", d.len(), frame.len()),
            Err(e) => format!("FAIL ({e})"),
        };
        if verdict != "PASS" {
            failed += 1;
        }
        println!("frame {i} {}: {verdict}", path.display());
    }
    if failed > 0 {
        return Err(Failure::Verify(failed));
    }
    println!("all {} frames PASS", frames.len());
    Ok(())
}

/// Flips a byte inside the coder stream of the first non-empty frame.
fn corrupt_first_payload(bytes: &mut [u8]) -> CliResult<()> {
    let stream = Bitstream::parse(bytes)?;
    let payload = (0..stream.frame_count())
        .filter_map(|i| stream.payload(i).ok())
        .find(|p| !p.is_empty())
        .ok_or_else(|| Failure::Usage("every frame is empty, nothing to corrupt".into()))?;
    let start = payload.as_ptr() as usize - bytes.as_ptr() as usize;
    // past the base-level word when there is a coder stream
    let base = seqvox::codec::BASE_WORD_BYTES;
    let at = if payload.len() > base {
        start + base + (payload.len() - base) / 2
    } else {
        start
    };
    bytes[at] ^= 0x5a;
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> CliResult<()> {
    let bytes = fs::read(&args.input)?;
    let stream = Bitstream::parse(&bytes)?;
    let header = stream.header();
    let mut levels = LevelStats::default();
    let mut frames = Vec::with_capacity(stream.frame_count());
    for i in 0..stream.frame_count() {
        let r = stream.resolution_bits(i)?;
        let payload = stream.payload(i)?;
        let frame = if payload.is_empty() {
            VoxelPointCloud::empty(r)?
        } else {
            let mut st = LevelStats::default();
            let f = decode_frame_observed(payload, &header.model, header.phase_mode, r, &mut st)?;
            levels.merge(&st);
            header.axis.unpermute_cloud(&f)
        };
        frames.push(frame);
    }
    let mut rep = Report::from_file(&bytes, &frames)?;
    let picked = training_frame_indices(frames.len(), args.train_frames);
    let train_set: Vec<_> = picked.iter().map(|&i| header.axis.permute_cloud(&frames[i])).collect();
    let store = collect_training_set(
        &train_set,
        CollectionConfig {
            phase_mode: header.phase_mode,
            ..CollectionConfig::default()
        },
    )?;
    rep.context_store = Some(report::StoreSize {
        training_frames: picked,
        distinct_contexts: store.len(),
        blocks: store.total_count(),
    });
    levels.levels.sort_by_key(|l| l.0);
    rep.levels = levels
        .levels
        .iter()
        .map(|&(r, blocks, bits)| report::LevelRow {
            resolution_bits: r,
            blocks,
            ideal_bits: bits,
        })
        .collect();
    rep.print(args.format)
}
