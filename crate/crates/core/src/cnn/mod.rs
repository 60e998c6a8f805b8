//! The probability model: a four-stage convolutional network mapping an
//! input stack to one 16-bin pmf per 2x2 block.

mod net;
mod train;

pub use net::leaky_relu;
pub use train::{gradients, gradients_f64, loss, loss_f64, train, TrainingConfig, TrainingReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coder::ALPHABET_SIZE;
use crate::context::{Context, InputStack, CONTEXT_SIDE, STACK_CHANNELS};
use crate::error::{Error, Result};
use net::Net;

pub const LEAKY_SLOPE: f64 = 0.01;
pub const STAGES: usize = 4;
/// Zero border added around a section image before the full forward pass.
pub const PADDING: usize = 2;

/// One convolution stage: `kernel x kernel` taps, `stride`, `channels` outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StageSpec {
    pub kernel: u8,
    pub stride: u8,
    pub channels: u16,
}

impl StageSpec {
    pub const fn new(kernel: u8, stride: u8, channels: u16) -> Self {
        Self {
            kernel,
            stride,
            channels,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CnnArchitecture {
    stages: Vec<StageSpec>,
}

impl CnnArchitecture {
    /// Checks the stage count, channel endpoints, a 6x6 receptive field and
    /// a composite stride of 2.
    pub fn new(stages: Vec<StageSpec>) -> Result<Self> {
        let bad = |m: String| Err(Error::InvalidArchitecture(m));
        if stages.len() != STAGES {
            return bad(format!("{} stages, expected {STAGES}", stages.len()));
        }
        if stages.iter().any(|s| s.kernel == 0 || s.stride == 0 || s.channels == 0) {
            return bad("zero kernel, stride or channel count".into());
        }
        if usize::from(stages[STAGES - 1].channels) != ALPHABET_SIZE {
            return bad(format!(
                "last stage has {} channels, expected {ALPHABET_SIZE}",
                stages[STAGES - 1].channels
            ));
        }
        let (mut field, mut jump) = (1usize, 1usize);
        for s in &stages {
            field += (usize::from(s.kernel) - 1) * jump;
            jump *= usize::from(s.stride);
        }
        if field != CONTEXT_SIDE || jump != 2 {
            return bad(format!(
                "receptive field {field} and stride {jump}, expected {CONTEXT_SIDE} and 2"
            ));
        }
        let arch = Self { stages };
        // a 6x6 input must reduce to exactly one output position
        let mut side = CONTEXT_SIDE;
        for s in &arch.stages {
            let (k, st) = (usize::from(s.kernel), usize::from(s.stride));
            if side < k || !(side - k).is_multiple_of(st) {
                return bad("stages do not tile the 6x6 window".into());
            }
            side = (side - k) / st + 1;
        }
        if side != 1 {
            return bad("stages do not reduce the window to one position".into());
        }
        Ok(arch)
    }

    pub fn baseline() -> Self {
        Self::with_channels(40, 40, 80)
    }

    /// The reduced-width preset.
    pub fn light() -> Self {
        Self::with_channels(20, 20, 40)
    }

    pub fn with_channels(c1: u16, c2: u16, c3: u16) -> Self {
        Self::new(vec![
            StageSpec::new(4, 2, c1),
            StageSpec::new(2, 1, c2),
            StageSpec::new(1, 1, c3),
            StageSpec::new(1, 1, ALPHABET_SIZE as u16),
        ])
        .expect("preset architectures are valid")
    }

    pub fn stages(&self) -> &[StageSpec] {
        &self.stages
    }

    pub fn param_count(&self) -> usize {
        let mut cin = STACK_CHANNELS;
        let mut total = 0;
        for s in &self.stages {
            let (k, c) = (usize::from(s.kernel), usize::from(s.channels));
            total += c * cin * k * k + c;
            cin = c;
        }
        total
    }

    /// `u8` stage count, then `u8` kernel, `u8` stride, `u16` channels per stage.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = vec![self.stages.len() as u8];
        for s in &self.stages {
            out.push(s.kernel);
            out.push(s.stride);
            out.extend_from_slice(&s.channels.to_le_bytes());
        }
        out
    }

    /// Parses a descriptor from the front of `bytes`; returns it and the bytes used.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, usize)> {
        let short = || Error::Format("truncated architecture block".into());
        let n = usize::from(*bytes.first().ok_or_else(short)?);
        let used = 1 + 4 * n;
        if bytes.len() < used {
            return Err(short());
        }
        let stages = bytes[1..used]
            .chunks_exact(4)
            .map(|c| StageSpec::new(c[0], c[1], u16::from_le_bytes([c[2], c[3]])))
            .collect();
        Ok((Self::new(stages)?, used))
    }
}

impl Default for CnnArchitecture {
    fn default() -> Self {
        Self::baseline()
    }
}

/// Architecture plus flat weights: per stage the kernels, ordered
/// `[out][in][dx][dy]`, then the biases.
#[derive(Clone, Debug)]
pub struct CnnModel {
    arch: CnnArchitecture,
    weights: Vec<f32>,
    net: Net<f32>,
}

impl PartialEq for CnnModel {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch
            && self
                .weights
                .iter()
                .map(|w| w.to_bits())
                .eq(other.weights.iter().map(|w| w.to_bits()))
    }
}

impl CnnModel {
    pub fn from_weights(arch: CnnArchitecture, weights: Vec<f32>) -> Result<Self> {
        let expected = arch.param_count();
        if weights.len() != expected {
            return Err(Error::WeightLength {
                expected,
                actual: weights.len(),
            });
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::InvalidArchitecture("non-finite weight".into()));
        }
        let net = Net::new(&arch, &weights);
        Ok(Self { arch, weights, net })
    }

    /// All weights zero: every pmf is uniform.
    pub fn zeros(arch: CnnArchitecture) -> Self {
        let n = arch.param_count();
        Self::from_weights(arch, vec![0.0; n]).unwrap()
    }

    /// Kernels uniform in `+-sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn init_random(arch: CnnArchitecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut weights = Vec::with_capacity(arch.param_count());
        let mut cin = STACK_CHANNELS;
        for s in arch.stages() {
            let (k, c) = (usize::from(s.kernel), usize::from(s.channels));
            let fan_in = cin * k * k;
            let fan_out = c * k * k;
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
            weights.extend((0..c * fan_in).map(|_| rng.gen_range(-bound..=bound)));
            weights.extend(std::iter::repeat_n(0.0, c));
            cin = c;
        }
        Self::from_weights(arch, weights).unwrap()
    }

    pub fn architecture(&self) -> &CnnArchitecture {
        &self.arch
    }

    pub fn weights(&self) -> &[f32] {
        &self.weights
    }

    pub fn param_count(&self) -> usize {
        self.weights.len()
    }

    /// Pmf of the block whose receptive field is `ctx`.
    pub fn forward_context(&self, ctx: &Context) -> [f32; ALPHABET_SIZE] {
        let mut bufs = [Vec::new(), Vec::new()];
        self.forward_context_with(ctx, &mut bufs)
    }

    /// As [`forward_context`](Self::forward_context), reusing scratch buffers.
    pub fn forward_context_with(&self, ctx: &Context, bufs: &mut [Vec<f32>; 2]) -> [f32; ALPHABET_SIZE] {
        let logits = self.net.context_logits(ctx, bufs);
        let mut p = [0.0; ALPHABET_SIZE];
        net::softmax(&logits, &mut p);
        p
    }

    /// Pmfs of every block of the stack.
    pub fn forward(&self, stack: &InputStack) -> Result<OutputStack> {
        let g = stack.geometry();
        let (w, h) = (g.width(), g.height());
        let (pw, ph) = (w + 2 * PADDING, h + 2 * PADDING);
        let mut input = vec![0.0f32; pw * ph * STACK_CHANNELS];
        for c in 0..STACK_CHANNELS {
            let ch = stack.channel(c);
            for x in 0..w {
                for y in 0..h {
                    input[((x + PADDING) * ph + y + PADDING) * STACK_CHANNELS + c] = f32::from(ch[x * h + y]);
                }
            }
        }
        let mut bufs = [Vec::new(), Vec::new()];
        let (ow, oh, cur) = self.net.run(&input, pw, ph, &mut bufs);
        if (ow, oh) != (w / 2, h / 2) {
            return Err(Error::ShapeMismatch(format!(
                "network produced {ow}x{oh} outputs for a {w}x{h} stack"
            )));
        }
        let logits = &bufs[cur];
        let mut probs = vec![0.0f32; logits.len()];
        for (l, p) in logits
            .chunks_exact(ALPHABET_SIZE)
            .zip(probs.chunks_exact_mut(ALPHABET_SIZE))
        {
            net::softmax(l, p);
        }
        Ok(OutputStack {
            blocks_x: ow,
            blocks_y: oh,
            probs,
        })
    }

    /// Weight body: 4 little-endian bytes per weight, in canonical order.
    pub fn serialize(&self) -> Vec<u8> {
        self.weights.iter().flat_map(|w| w.to_le_bytes()).collect()
    }

    pub fn deserialize(bytes: &[u8], arch: CnnArchitecture) -> Result<Self> {
        let expected = arch.param_count();
        if bytes.len() != 4 * expected {
            return Err(Error::WeightLength {
                expected,
                actual: bytes.len() / 4,
            });
        }
        let weights = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Self::from_weights(arch, weights)
    }
}

/// `16 x (W/2) x (H/2)` pmfs, one per block.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputStack {
    blocks_x: usize,
    blocks_y: usize,
    probs: Vec<f32>,
}

impl OutputStack {
    pub fn blocks(&self) -> (usize, usize) {
        (self.blocks_x, self.blocks_y)
    }

    pub fn pmf(&self, m: usize, n: usize) -> &[f32] {
        assert!(
            m < self.blocks_x && n < self.blocks_y,
            "block ({m}, {n}) outside output stack"
        );
        &self.probs[(m * self.blocks_y + n) * ALPHABET_SIZE..][..ALPHABET_SIZE]
    }

    pub fn probability(&self, q: usize, m: usize, n: usize) -> f32 {
        self.pmf(m, n)[q]
    }
}
