use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::net::{self, untranspose, Net};
use super::{CnnArchitecture, CnnModel};
use crate::context::{Context, ContextHistogramStore, Histogram};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    /// Distinct contexts per ADAM step.
    pub batch_size: usize,
    pub learning_rate: f32,
    /// Epochs without improvement before the learning rate is halved, and
    /// again before training stops.
    pub patience: usize,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub seed: u64,
    /// Hard cap on epochs; `None` leaves stopping to the plateau rule.
    pub max_epochs: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 10_000,
            learning_rate: 1e-3,
            patience: 20,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            max_epochs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingReport {
    pub distinct_contexts: usize,
    pub epochs: usize,
    /// Loss over the whole store after each epoch; entry 0 is the initial model.
    pub losses: Vec<f64>,
    pub best_epoch: usize,
    pub lr_halvings: u32,
}

impl TrainingReport {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn best_loss(&self) -> f64 {
        self.losses[self.best_epoch]
    }
}

/// Mean over batch entries of `sum_q h(q|C) * -log2 g_q(C)`.
pub fn loss(model: &CnnModel, batch: &[(Context, Histogram)]) -> f64 {
    net::loss(&model.net, batch)
}

/// Gradient of [`loss`] with respect to every weight, canonical order.
pub fn gradients(model: &CnnModel, batch: &[(Context, Histogram)]) -> Vec<f32> {
    let (_, g) = net::loss_and_gradient(&model.net, batch);
    untranspose(&model.net.layouts, &g)
}

/// [`loss`] evaluated in double precision on arbitrary weights.
pub fn loss_f64(arch: &CnnArchitecture, weights: &[f64], batch: &[(Context, Histogram)]) -> f64 {
    net::loss(&Net::new(arch, weights), batch)
}

/// [`gradients`] evaluated in double precision on arbitrary weights.
pub fn gradients_f64(arch: &CnnArchitecture, weights: &[f64], batch: &[(Context, Histogram)]) -> Vec<f64> {
    let net = Net::new(arch, weights);
    let (_, g) = net::loss_and_gradient(&net, batch);
    untranspose(&net.layouts, &g)
}

struct Adam {
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, w: &mut [f32], g: &[f32], lr: f32, cfg: &TrainingConfig) {
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t);
        let c2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..w.len() {
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g[i];
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            w[i] -= lr * mh / (vh.sqrt() + cfg.epsilon);
        }
    }
}

/// Fits a model to the store with ADAM over shuffled batches of distinct
/// contexts. The learning rate is halved at the first plateau of
/// `patience` epochs and training stops at the second; the weights with
/// the lowest store loss are returned. Identical inputs give bit-identical
/// weights for any thread count.
pub fn train(
    store: &ContextHistogramStore,
    arch: &CnnArchitecture,
    cfg: &TrainingConfig,
) -> Result<(CnnModel, TrainingReport)> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidArchitecture("batch size must be positive".into()));
    }
    let entries: Vec<(Context, Histogram)> = store
        .sorted_entries()
        .into_iter()
        .map(|(k, h)| (Context::from_key(k), h))
        .collect();
    let init = CnnModel::init_random(arch.clone(), cfg.seed);
    let mut net = init.net.clone();
    let mut adam = Adam::new(net.wt.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..entries.len()).collect();
    let mut batch = Vec::with_capacity(cfg.batch_size.min(entries.len()));

    let mut losses = vec![net::loss(&net, &entries)];
    let mut best = net.wt.clone();
    let mut best_epoch = 0;
    let (mut stale, mut halvings) = (0, 0u32);
    let mut lr = cfg.learning_rate;

    for epoch in 1.. {
        if cfg.max_epochs.is_some_and(|m| epoch > m) {
            break;
        }
        order.shuffle(&mut rng);
        for idx in order.chunks(cfg.batch_size) {
            batch.clear();
            batch.extend(idx.iter().map(|&i| entries[i]));
            let (_, g) = net::loss_and_gradient(&net, &batch);
            adam.step(&mut net.wt, &g, lr, cfg);
        }
        let l = net::loss(&net, &entries);
        losses.push(l);
        if l < losses[best_epoch] {
            best_epoch = epoch;
            best.copy_from_slice(&net.wt);
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                if halvings > 0 {
                    break;
                }
                halvings += 1;
                lr *= 0.5;
                stale = 0;
            }
        }
    }

    let model = CnnModel::from_weights(arch.clone(), untranspose(&net.layouts, &best))?;
    let report = TrainingReport {
        distinct_contexts: entries.len(),
        epochs: losses.len() - 1,
        losses,
        best_epoch,
        lr_halvings: halvings,
    };
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{CONTEXT_LEN, MIXING_CHANNEL};
    use rand::Rng;

    fn random_context(rng: &mut impl Rng) -> Context {
        let mut v = [0u8; CONTEXT_LEN];
        for (k, x) in v.iter_mut().enumerate() {
            let max = if k / 36 == MIXING_CHANNEL { 3 } else { 1 };
            *x = if rng.gen_bool(0.6) { 0 } else { rng.gen_range(0..=max) };
        }
        Context(v)
    }

    fn random_batch(rng: &mut impl Rng, n: usize) -> Vec<(Context, Histogram)> {
        (0..n)
            .map(|_| {
                let mut h = [0u32; 16];
                for _ in 0..rng.gen_range(1..6) {
                    h[rng.gen_range(0..16)] += rng.gen_range(1..4);
                }
                (random_context(rng), h)
            })
            .collect()
    }

    fn one_hot(q: usize, count: u32) -> Histogram {
        let mut h = [0; 16];
        h[q] = count;
        h
    }

    #[test]
    fn uniform_model_costs_four_bits() {
        let m = CnnModel::zeros(CnnArchitecture::baseline());
        assert!((loss(&m, &[(Context::zeros(), one_hot(7, 1))]) - 4.0).abs() < 1e-6);
        // doubling a count doubles the entry's contribution
        assert!((loss(&m, &[(Context::zeros(), one_hot(7, 2))]) - 8.0).abs() < 2e-6);
    }

    #[test]
    fn loss_matches_unrolled_occurrences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = CnnModel::init_random(CnnArchitecture::light(), 9);
        let batch = random_batch(&mut rng, 40);
        let mut oracle = 0.0f64;
        for (ctx, h) in &batch {
            let p = m.forward_context(ctx);
            for (q, &c) in h.iter().enumerate() {
                for _ in 0..c {
                    oracle -= f64::from(p[q]).log2();
                }
            }
        }
        oracle /= batch.len() as f64;
        let l = loss(&m, &batch);
        assert!((l - oracle).abs() < 1e-4 * oracle, "{l} vs {oracle}");
    }

    fn random_weights(arch: &CnnArchitecture, rng: &mut impl Rng) -> Vec<f64> {
        (0..arch.param_count()).map(|_| rng.gen_range(-0.5..0.5)).collect()
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let arch = CnnArchitecture::light();
        let w = random_weights(&arch, &mut rng);
        let batch = random_batch(&mut rng, 12);
        let g = gradients_f64(&arch, &w, &batch);
        let h = 1e-3;
        for _ in 0..60 {
            let i = rng.gen_range(0..w.len());
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let fd = (loss_f64(&arch, &wp, &batch) - loss_f64(&arch, &wm, &batch)) / (2.0 * h);
            let scale = g[i].abs().max(fd.abs());
            let rel = if scale == 0.0 { 0.0 } else { (g[i] - fd).abs() / scale };
            assert!(rel < 1e-3 || (g[i] - fd).abs() < 1e-9, "weight {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn zero_histogram_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = CnnModel::init_random(CnnArchitecture::light(), 1);
        let g = gradients(&m, &[(random_context(&mut rng), [0; 16])]);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn output_bias_gradient_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let m = CnnModel::init_random(CnnArchitecture::baseline(), 3);
        let batch = random_batch(&mut rng, 5);
        let g = gradients(&m, &batch);
        let n = m.param_count();
        for q in 0..16 {
            let mut expected = 0.0f64;
            for (ctx, h) in &batch {
                let p = m.forward_context(ctx);
                let total: u32 = h.iter().sum();
                expected += f64::from(total) * (f64::from(p[q]) - f64::from(h[q]) / f64::from(total));
            }
            let got = f64::from(g[n - 16 + q]);
            if expected.abs() > 1e-4 {
                assert_eq!(got.signum(), expected.signum(), "bias {q}");
            }
        }
    }

    #[test]
    fn batch_results_do_not_depend_on_threads() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let m = CnnModel::init_random(CnnArchitecture::light(), 2);
        let batch = random_batch(&mut rng, 300);
        let run = |t| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .unwrap()
                .install(|| (loss(&m, &batch).to_bits(), gradients(&m, &batch)))
        };
        let (l1, g1) = run(1);
        let (l3, g3) = run(3);
        assert_eq!(l1, l3);
        assert!(g1.iter().zip(&g3).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn overfits_single_context() {
        let mut store = ContextHistogramStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ctx = random_context(&mut rng);
        for _ in 0..7 {
            store.insert(&ctx, 5);
        }
        let cfg = TrainingConfig {
            max_epochs: Some(1500),
            learning_rate: 1e-2,
            ..TrainingConfig::default()
        };
        let (model, report) = train(&store, &CnnArchitecture::baseline(), &cfg).unwrap();
        let p = model.forward_context(&ctx);
        assert!(p[5] > 0.99, "{p:?}");
        assert!(report.best_loss() < 0.1);
        assert!(report.best_loss() <= report.initial_loss());
    }

    #[test]
    fn training_is_reproducible() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut store = ContextHistogramStore::new();
        for (ctx, h) in random_batch(&mut rng, 200) {
            for (q, &c) in h.iter().enumerate() {
                for _ in 0..c {
                    store.insert(&ctx, q as u8);
                }
            }
        }
        let cfg = TrainingConfig {
            batch_size: 64,
            max_epochs: Some(15),
            patience: 3,
            seed: 77,
            ..TrainingConfig::default()
        };
        let arch = CnnArchitecture::light();
        let (a, ra) = train(&store, &arch, &cfg).unwrap();
        let (b, _) = rayon::ThreadPoolBuilder::new()
            .num_threads(3)
            .build()
            .unwrap()
            .install(|| train(&store, &arch, &cfg).unwrap());
        assert_eq!(a, b);
        assert!(ra.best_loss() <= ra.initial_loss());
        assert!(ra.losses.len() >= 2);
        let (c, _) = train(&store, &arch, &TrainingConfig { seed: 78, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn plateau_schedule_stops_training() {
        let mut store = ContextHistogramStore::new();
        store.insert(&Context::zeros(), 0);
        store.insert(&Context::zeros(), 1);
        // the optimum (1/2, 1/2) is reached fast, after which the loss stalls
        let cfg = TrainingConfig {
            patience: 2,
            learning_rate: 0.05,
            max_epochs: Some(10_000),
            ..TrainingConfig::default()
        };
        let (_, r) = train(&store, &CnnArchitecture::light(), &cfg).unwrap();
        assert_eq!(r.lr_halvings, 1);
        assert!(r.epochs < 10_000);
    }

    #[test]
    fn empty_store_is_rejected() {
        let cfg = TrainingConfig::default();
        assert!(matches!(
            train(&ContextHistogramStore::new(), &CnnArchitecture::light(), &cfg),
            Err(Error::EmptyStore)
        ));
    }
}
