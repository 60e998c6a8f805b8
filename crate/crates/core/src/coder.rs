//! Deterministic pmf quantization and a 16-symbol range coder.
//!
//! The coder keeps a 32-bit range and a 64-bit low register whose bit 32
//! carries into already-buffered output bytes. Frequencies total `2^16`.
//! Output is byte aligned; the decoder reads missing bytes past the end of
//! the stream as zeros, which lets the encoder flush with as few bytes as
//! possible.

use crate::error::{Error, Result};

pub const ALPHABET_SIZE: usize = 16;
pub const FREQ_BITS: u32 = 16;
pub const FREQ_TOTAL: u32 = 1 << FREQ_BITS;

const TOP: u32 = 1 << 24;

/// Integer pmf over the 16 block patterns. Every frequency is at least 1 and
/// they sum to `FREQ_TOTAL`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct QuantizedPmf {
    freqs: [u32; ALPHABET_SIZE],
    cum: [u32; ALPHABET_SIZE + 1],
}

impl QuantizedPmf {
    pub fn from_frequencies(freqs: [u32; ALPHABET_SIZE]) -> Result<Self> {
        if freqs.contains(&0) {
            return Err(Error::InvalidPmf("zero frequency".into()));
        }
        let mut cum = [0u32; ALPHABET_SIZE + 1];
        for (s, &f) in freqs.iter().enumerate() {
            cum[s + 1] = cum[s]
                .checked_add(f)
                .ok_or_else(|| Error::InvalidPmf("frequency overflow".into()))?;
        }
        if cum[ALPHABET_SIZE] != FREQ_TOTAL {
            return Err(Error::InvalidPmf(format!(
                "frequencies sum to {} instead of {FREQ_TOTAL}",
                cum[ALPHABET_SIZE]
            )));
        }
        Ok(Self { freqs, cum })
    }

    pub fn uniform() -> Self {
        Self::from_frequencies([FREQ_TOTAL / ALPHABET_SIZE as u32; ALPHABET_SIZE]).unwrap()
    }

    pub fn frequencies(&self) -> &[u32; ALPHABET_SIZE] {
        &self.freqs
    }

    pub fn frequency(&self, symbol: u8) -> u32 {
        self.freqs[symbol as usize]
    }

    /// Probability of each symbol as `f / 2^16`.
    pub fn probabilities(&self) -> [f64; ALPHABET_SIZE] {
        self.freqs.map(|f| f64::from(f) / f64::from(FREQ_TOTAL))
    }

    /// Ideal code length of `symbol` in bits.
    pub fn cost_bits(&self, symbol: u8) -> f64 {
        f64::from(FREQ_BITS) - f64::from(self.frequency(symbol)).log2()
    }

    fn symbol_for(&self, target: u32) -> usize {
        // cum[0] = 0 <= target < FREQ_TOTAL = cum[16]
        self.cum[1..].partition_point(|&c| c <= target)
    }
}

/// Largest-remainder apportionment of `p` to `FREQ_TOTAL` with a floor of 1.
///
/// Symbols whose share would fall below one unit are pinned at 1 and the
/// rest of the budget is apportioned among the others, repeating until no
/// more symbols are pinned. Leftover units go to the largest fractional
/// remainders, ties to the lower symbol index. Exact dyadic inputs `f/2^16`
/// with every `f >= 1` come back unchanged.
pub fn quantize_pmf(p: &[f64; ALPHABET_SIZE]) -> Result<QuantizedPmf> {
    if p.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::InvalidPmf(format!(
            "entries must be finite and non-negative: {p:?}"
        )));
    }
    if p.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidPmf("all-zero pmf".into()));
    }

    let mut pinned = [false; ALPHABET_SIZE];
    let mut ideal = [0f64; ALPHABET_SIZE];
    loop {
        let budget = FREQ_TOTAL - pinned.iter().filter(|&&x| x).count() as u32;
        let mass: f64 = (0..ALPHABET_SIZE).filter(|&s| !pinned[s]).map(|s| p[s]).sum();
        let mut changed = false;
        for s in 0..ALPHABET_SIZE {
            if pinned[s] {
                ideal[s] = 1.0;
                continue;
            }
            ideal[s] = if mass > 0.0 {
                p[s] / mass * f64::from(budget)
            } else {
                0.0
            };
            if ideal[s] < 1.0 {
                pinned[s] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }

    let mut freqs = [0u32; ALPHABET_SIZE];
    for s in 0..ALPHABET_SIZE {
        freqs[s] = if pinned[s] { 1 } else { ideal[s].floor() as u32 };
    }
    let assigned: u32 = freqs.iter().sum();
    let mut order: Vec<usize> = (0..ALPHABET_SIZE).filter(|&s| !pinned[s]).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let deficit = FREQ_TOTAL
        .checked_sub(assigned)
        .ok_or_else(|| Error::InvalidPmf("apportionment overshoot".into()))?;
    for &s in order.iter().cycle().take(deficit as usize) {
        freqs[s] += 1;
    }
    QuantizedPmf::from_frequencies(freqs)
}

/// Convenience for model outputs in single precision.
pub fn quantize_pmf_f32(p: &[f32; ALPHABET_SIZE]) -> Result<QuantizedPmf> {
    quantize_pmf(&p.map(f64::from))
}

#[derive(Debug)]
pub struct RangeEncoder {
    low: u64,
    range: u32,
    cache: u8,
    pending: u64,
    // The byte ahead of the first window byte is always zero and never written.
    skip_first: bool,
    out: Vec<u8>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        Self {
            low: 0,
            range: u32::MAX,
            cache: 0,
            pending: 1,
            skip_first: true,
            out: Vec::new(),
        }
    }

    pub fn encode(&mut self, symbol: u8, pmf: &QuantizedPmf) -> Result<()> {
        let s = symbol as usize;
        if s >= ALPHABET_SIZE {
            return Err(Error::InvalidSymbol(symbol));
        }
        let r = self.range >> FREQ_BITS;
        self.low += u64::from(r) * u64::from(pmf.cum[s]);
        self.range = r * pmf.freqs[s];
        while self.range < TOP {
            self.range <<= 8;
            self.shift_low();
        }
        Ok(())
    }

    fn shift_low(&mut self) {
        if self.low < 0xFF00_0000 || self.low >> 32 != 0 {
            let carry = (self.low >> 32) as u8;
            let mut byte = self.cache;
            while self.pending > 0 {
                if self.skip_first {
                    debug_assert_eq!(byte.wrapping_add(carry), 0);
                    self.skip_first = false;
                } else {
                    self.out.push(byte.wrapping_add(carry));
                }
                byte = 0xFF;
                self.pending -= 1;
            }
            self.cache = (self.low >> 24) as u8;
        }
        self.pending += 1;
        self.low = (self.low & 0x00FF_FFFF) << 8;
    }

    /// Bytes emitted so far (excluding buffered ones).
    pub fn bytes_written(&self) -> usize {
        self.out.len()
    }

    /// Picks the value in `[low, low + range)` with the most trailing zero
    /// bytes and emits only its significant bytes.
    pub fn finish(mut self) -> Vec<u8> {
        let high = self.low + u64::from(self.range);
        for keep in 0..=4u32 {
            let mask = (1u64 << (32 - 8 * keep)) - 1;
            let v = (self.low + mask) & !mask;
            if v < high {
                self.low = v;
                for _ in 0..=keep {
                    self.shift_low();
                }
                return self.out;
            }
        }
        unreachable!("keeping all four bytes always reproduces low")
    }
}

#[derive(Debug)]
pub struct RangeDecoder<'a> {
    data: &'a [u8],
    pos: usize,
    code: u32,
    range: u32,
}

/// The flush keeps at most one significant byte of the final code value,
/// so a complete stream leaves the decoder 3 or 4 bytes past its end.
const MIN_PADDING: usize = 3;
const MAX_PADDING: usize = 4;

impl<'a> RangeDecoder<'a> {
    pub fn new(data: &'a [u8]) -> Result<Self> {
        let mut dec = Self {
            data,
            pos: 0,
            code: 0,
            range: u32::MAX,
        };
        for _ in 0..4 {
            dec.code = dec.code << 8 | u32::from(dec.next_byte()?);
        }
        Ok(dec)
    }

    fn next_byte(&mut self) -> Result<u8> {
        let b = self.data.get(self.pos).copied();
        self.pos += 1;
        match b {
            Some(b) => Ok(b),
            None if self.pos - self.data.len() <= MAX_PADDING => Ok(0),
            None => Err(Error::TruncatedStream),
        }
    }

    pub fn decode(&mut self, pmf: &QuantizedPmf) -> Result<u8> {
        let r = self.range >> FREQ_BITS;
        let target = (self.code / r).min(FREQ_TOTAL - 1);
        let s = pmf.symbol_for(target);
        self.code -= r * pmf.cum[s];
        self.range = r * pmf.freqs[s];
        while self.range < TOP {
            self.range <<= 8;
            self.code = self.code << 8 | u32::from(self.next_byte()?);
        }
        Ok(s as u8)
    }

    /// Fails if the stream is longer than any encoder output that ends
    /// with the symbols decoded so far.
    pub fn finish(self) -> Result<()> {
        if self.pos < self.data.len() + MIN_PADDING {
            return Err(Error::TrailingData(self.data.len() + MIN_PADDING - self.pos));
        }
        Ok(())
    }
}

pub fn encode_symbols(symbols: &[u8], pmfs: &[QuantizedPmf]) -> Result<Vec<u8>> {
    if symbols.len() != pmfs.len() {
        return Err(Error::LengthMismatch {
            symbols: symbols.len(),
            pmfs: pmfs.len(),
        });
    }
    let mut enc = RangeEncoder::new();
    for (&s, pmf) in symbols.iter().zip(pmfs) {
        enc.encode(s, pmf)?;
    }
    Ok(enc.finish())
}

pub fn decode_symbols(bytes: &[u8], pmfs: &[QuantizedPmf]) -> Result<Vec<u8>> {
    let mut dec = RangeDecoder::new(bytes)?;
    let symbols = pmfs.iter().map(|pmf| dec.decode(pmf)).collect::<Result<Vec<_>>>()?;
    dec.finish()?;
    Ok(symbols)
}
