//! Valid-convolution stack shared by inference, training and the gradient
//! check. Tensors are position-major (`[x][y][channel]`) so the innermost
//! loops run over output channels against transposed kernels laid out
//! `[in][dx][dy][out]`.

use num_traits::Float;
use rayon::prelude::*;

use super::{CnnArchitecture, LEAKY_SLOPE};
use crate::coder::ALPHABET_SIZE;
use crate::context::{Context, Histogram, CONTEXT_SIDE, STACK_CHANNELS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct StageLayout {
    pub k: usize,
    pub s: usize,
    pub cin: usize,
    pub cout: usize,
    /// Offset of the kernels in the flat weight vector.
    pub w_off: usize,
    /// Offset of the biases.
    pub b_off: usize,
}

impl StageLayout {
    fn kernel_len(&self) -> usize {
        self.cout * self.cin * self.k * self.k
    }

    fn out_dims(&self, w: usize, h: usize) -> Option<(usize, usize)> {
        (w >= self.k && h >= self.k).then(|| ((w - self.k) / self.s + 1, (h - self.k) / self.s + 1))
    }
}

pub(crate) fn layouts(arch: &CnnArchitecture) -> Vec<StageLayout> {
    let mut cin = STACK_CHANNELS;
    let mut off = 0;
    arch.stages()
        .iter()
        .map(|st| {
            let (k, s, cout) = (usize::from(st.kernel), usize::from(st.stride), usize::from(st.channels));
            let w_off = off;
            let b_off = w_off + cout * cin * k * k;
            off = b_off + cout;
            let l = StageLayout {
                k,
                s,
                cin,
                cout,
                w_off,
                b_off,
            };
            cin = cout;
            l
        })
        .collect()
}

/// Canonical `[out][in][dx][dy]` kernels to `[in][dx][dy][out]`; biases copied.
pub(crate) fn transpose<T: Copy>(layouts: &[StageLayout], canonical: &[T]) -> Vec<T> {
    let mut t = canonical.to_vec();
    for l in layouts {
        let kk = l.k * l.k;
        for o in 0..l.cout {
            for i in 0..l.cin {
                for uv in 0..kk {
                    t[l.w_off + (i * kk + uv) * l.cout + o] = canonical[l.w_off + (o * l.cin + i) * kk + uv];
                }
            }
        }
    }
    t
}

pub(crate) fn untranspose<T: Copy>(layouts: &[StageLayout], transposed: &[T]) -> Vec<T> {
    let mut c = transposed.to_vec();
    for l in layouts {
        let kk = l.k * l.k;
        for o in 0..l.cout {
            for i in 0..l.cin {
                for uv in 0..kk {
                    c[l.w_off + (o * l.cin + i) * kk + uv] = transposed[l.w_off + (i * kk + uv) * l.cout + o];
                }
            }
        }
    }
    c
}

#[inline]
pub fn leaky_relu<T: Float>(x: T) -> T {
    let slope = T::from(LEAKY_SLOPE).unwrap();
    x.max(T::zero()) + slope * x.min(T::zero())
}

/// Network with transposed weights, ready for evaluation.
#[derive(Clone, Debug)]
pub(crate) struct Net<T> {
    pub layouts: Vec<StageLayout>,
    pub wt: Vec<T>,
}

fn stage_forward<T: Float>(
    l: &StageLayout,
    wt: &[T],
    input: &[T],
    w: usize,
    h: usize,
    last: bool,
    out: &mut Vec<T>,
) -> (usize, usize) {
    let (ow, oh) = l.out_dims(w, h).expect("input smaller than kernel");
    let kern = &wt[l.w_off..l.w_off + l.kernel_len()];
    let bias = &wt[l.b_off..l.b_off + l.cout];
    out.clear();
    out.reserve(ow * oh * l.cout);
    for ox in 0..ow {
        for oy in 0..oh {
            let start = out.len();
            out.extend_from_slice(bias);
            let acc = &mut out[start..];
            for u in 0..l.k {
                for v in 0..l.k {
                    let p = ((ox * l.s + u) * h + oy * l.s + v) * l.cin;
                    for (i, &x) in input[p..p + l.cin].iter().enumerate() {
                        if x == T::zero() {
                            continue;
                        }
                        let row = &kern[((i * l.k + u) * l.k + v) * l.cout..][..l.cout];
                        for (a, &wv) in acc.iter_mut().zip(row) {
                            *a = *a + x * wv;
                        }
                    }
                }
            }
            if !last {
                for a in acc {
                    *a = leaky_relu(*a);
                }
            }
        }
    }
    (ow, oh)
}

/// Context values rearranged position-major.
pub(crate) fn context_input<T: Float>(ctx: &Context) -> Vec<T> {
    let mut input = vec![T::zero(); ctx.values().len()];
    for c in 0..STACK_CHANNELS {
        for x in 0..CONTEXT_SIDE {
            for y in 0..CONTEXT_SIDE {
                input[(x * CONTEXT_SIDE + y) * STACK_CHANNELS + c] = T::from(ctx.get(c, x, y)).unwrap();
            }
        }
    }
    input
}

pub(crate) fn softmax<T: Float>(logits: &[T], out: &mut [T]) {
    let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - m).exp();
        sum = sum + *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

impl<T: Float + Send + Sync> Net<T> {
    pub fn new(arch: &CnnArchitecture, canonical: &[T]) -> Self {
        let layouts = layouts(arch);
        let wt = transpose(&layouts, canonical);
        Self { layouts, wt }
    }

    /// Runs every stage on a position-major `w x h` input, alternating
    /// between the two buffers. Returns the output size and the index of
    /// the buffer holding the logits.
    pub fn run(&self, input: &[T], w: usize, h: usize, bufs: &mut [Vec<T>; 2]) -> (usize, usize, usize) {
        let (mut cw, mut ch) = (w, h);
        let n = self.layouts.len();
        for (s, l) in self.layouts.iter().enumerate() {
            let last = s + 1 == n;
            let [a, b] = &mut *bufs;
            let (ow, oh) = match s {
                0 => stage_forward(l, &self.wt, input, cw, ch, last, a),
                _ if s % 2 == 1 => stage_forward(l, &self.wt, a, cw, ch, last, b),
                _ => stage_forward(l, &self.wt, b, cw, ch, last, a),
            };
            cw = ow;
            ch = oh;
        }
        (cw, ch, (n - 1) % 2)
    }

    pub fn context_logits(&self, ctx: &Context, bufs: &mut [Vec<T>; 2]) -> [T; ALPHABET_SIZE] {
        let input = context_input::<T>(ctx);
        let (_, _, cur) = self.run(&input, CONTEXT_SIDE, CONTEXT_SIDE, bufs);
        let mut out = [T::zero(); ALPHABET_SIZE];
        out.copy_from_slice(&bufs[cur][..ALPHABET_SIZE]);
        out
    }

    /// Adds the gradient of `sum_q h_q * -log2 g_q`, times `scale`, to
    /// `grad` (transposed layout). Returns the unscaled term.
    fn accumulate(&self, ctx: &Context, hist: &Histogram, scale: T, grad: &mut [T]) -> f64 {
        let n = self.layouts.len();
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(n + 1);
        let mut dims = Vec::with_capacity(n + 1);
        acts.push(context_input::<T>(ctx));
        dims.push((CONTEXT_SIDE, CONTEXT_SIDE));
        for (s, l) in self.layouts.iter().enumerate() {
            let (w, h) = dims[s];
            let mut out = Vec::new();
            let d = stage_forward(l, &self.wt, &acts[s], w, h, s + 1 == n, &mut out);
            acts.push(out);
            dims.push(d);
        }
        let logits = &acts[n];
        let mut g = [T::zero(); ALPHABET_SIZE];
        softmax(logits, &mut g);
        let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + logits.iter().fold(T::zero(), |a, &l| a + (l - m).exp()).ln();
        let total = hist.iter().map(|&c| T::from(c).unwrap()).fold(T::zero(), |a, b| a + b);
        let ln2 = T::from(std::f64::consts::LN_2).unwrap();
        let mut term = 0.0f64;
        let mut delta: Vec<T> = Vec::with_capacity(ALPHABET_SIZE);
        for q in 0..ALPHABET_SIZE {
            let hq = T::from(hist[q]).unwrap();
            if hist[q] > 0 {
                term += ((lse - logits[q]) / ln2 * hq).to_f64().unwrap();
            }
            delta.push(scale * (total * g[q] - hq) / ln2);
        }

        for s in (0..n).rev() {
            let l = &self.layouts[s];
            let (_, h) = dims[s];
            let (ow, oh) = dims[s + 1];
            if s + 1 < n {
                let slope = T::from(LEAKY_SLOPE).unwrap();
                for (d, &a) in delta.iter_mut().zip(&acts[s + 1]) {
                    if a <= T::zero() {
                        *d = *d * slope;
                    }
                }
            }
            let input = &acts[s];
            let mut dinput = if s > 0 {
                vec![T::zero(); input.len()]
            } else {
                Vec::new()
            };
            for ox in 0..ow {
                for oy in 0..oh {
                    let dpre = &delta[(ox * oh + oy) * l.cout..][..l.cout];
                    for (gb, &d) in grad[l.b_off..l.b_off + l.cout].iter_mut().zip(dpre) {
                        *gb = *gb + d;
                    }
                    for u in 0..l.k {
                        for v in 0..l.k {
                            let p = ((ox * l.s + u) * h + oy * l.s + v) * l.cin;
                            for i in 0..l.cin {
                                let r = l.w_off + ((i * l.k + u) * l.k + v) * l.cout;
                                let x = input[p + i];
                                if x != T::zero() {
                                    for (gw, &d) in grad[r..r + l.cout].iter_mut().zip(dpre) {
                                        *gw = *gw + x * d;
                                    }
                                }
                                if s > 0 {
                                    let back = self.wt[r..r + l.cout]
                                        .iter()
                                        .zip(dpre)
                                        .fold(T::zero(), |a, (&wv, &d)| a + wv * d);
                                    dinput[p + i] = dinput[p + i] + back;
                                }
                            }
                        }
                    }
                }
            }
            delta = dinput;
        }
        term
    }
}

/// Contexts per work item in batch evaluation. Fixed so that the reduction
/// order, and hence every bit of the result, is independent of threads.
pub(crate) const CHUNK: usize = 64;

/// Histogram-weighted cross-entropy in bits, averaged over batch entries,
/// and its gradient in the transposed weight layout.
pub(crate) fn loss_and_gradient<T: Float + Send + Sync>(net: &Net<T>, batch: &[(Context, Histogram)]) -> (f64, Vec<T>) {
    let len = net.wt.len();
    if batch.is_empty() {
        return (0.0, vec![T::zero(); len]);
    }
    let scale = T::one() / T::from(batch.len()).unwrap();
    let parts: Vec<(f64, Vec<T>)> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut grad = vec![T::zero(); len];
            let mut loss = 0.0;
            for (ctx, hist) in chunk {
                loss += net.accumulate(ctx, hist, scale, &mut grad);
            }
            (loss, grad)
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![T::zero(); len];
    for (l, g) in parts {
        total += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a = *a + b;
        }
    }
    (total / batch.len() as f64, grad)
}

/// The same loss without gradients.
pub(crate) fn loss<T: Float + Send + Sync>(net: &Net<T>, batch: &[(Context, Histogram)]) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let parts: Vec<f64> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut bufs = [Vec::new(), Vec::new()];
            let mut sum = 0.0;
            for (ctx, hist) in chunk {
                let logits = net.context_logits(ctx, &mut bufs);
                let m = logits.iter().copied().fold(T::neg_infinity(), T::max);
                let lse = m + logits.iter().fold(T::zero(), |a, &l| a + (l - m).exp()).ln();
                for (q, &c) in hist.iter().enumerate() {
                    if c > 0 {
                        sum += f64::from(c) * (lse - logits[q]).to_f64().unwrap() / std::f64::consts::LN_2;
                    }
                }
            }
            sum
        })
        .collect();
    parts.iter().sum::<f64>() / batch.len() as f64
}
