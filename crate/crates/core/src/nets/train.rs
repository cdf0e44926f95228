use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forward::PreparedNet;
use super::{add_gradients, AdamState, Gradients, UnfoldedNetwork};
use crate::complex::ComplexArray;
use crate::error::{Error, Result};
use crate::harmonic::Dataset;
use crate::rng::{derive_seed, seeded};

/// Samples per parallel work unit. Fixed so that the summation order, and
/// therefore every bit of the result, is independent of the thread count.
const SHARD: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Validation checks without improvement before the learning rate is
    /// divided by ten.
    pub lr_decay_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 128,
            epochs: 30,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            lr_decay_patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(self.adam_beta1) || !in_unit(self.adam_beta2) {
            return Err(Error::arg("Adam betas must lie in (0, 1)"));
        }
        if !(self.learning_rate > 0.0) || !(self.adam_eps > 0.0) {
            return Err(Error::arg("learning rate and epsilon must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::arg("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
    /// Validation loss after each epoch.
    pub val_history: Vec<f64>,
    /// Epoch whose parameters were kept; 0 means the initial network.
    pub best_epoch: usize,
    pub initial_val_nmse: f64,
    pub best_val_nmse: f64,
    pub final_learning_rate: f64,
}

type Pair = (ComplexArray, ComplexArray);

fn columns(ds: &Dataset) -> Vec<Pair> {
    (0..ds.len()).map(|i| ds.sample(i)).collect()
}

fn check_dims(net: &UnfoldedNetwork, ds: &Dataset) -> Result<()> {
    if ds.m() != net.dims().m() || ds.n() != net.dims().n {
        return Err(Error::dim(format!(
            "dataset is {}x{} but the network expects N={}, M={}",
            ds.n(),
            ds.m(),
            net.dims().n,
            net.dims().m()
        )));
    }
    Ok(())
}

/// Summed truth norms; the loss is undefined when they vanish.
fn truth_mass(pairs: &[&Pair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::UndefinedLoss("empty batch".into()));
    }
    let s: f64 = pairs.iter().map(|(_, x)| x.norm()).sum();
    if s == 0.0 {
        return Err(Error::UndefinedLoss("all ground-truth spectra are zero".into()));
    }
    Ok(s)
}

fn loss_of(net: &UnfoldedNetwork, pairs: &[&Pair]) -> Result<f64> {
    let mass = truth_mass(pairs)?;
    let parts = pairs
        .par_chunks(SHARD)
        .map(|shard| {
            let prepared = PreparedNet::new(net);
            shard.iter().try_fold(0.0, |acc, (y, x)| {
                let out = prepared.forward(y)?;
                Ok::<_, Error>(acc + out.sub(x)?.norm())
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(parts.iter().sum::<f64>() / mass)
}

fn gradient_of(net: &UnfoldedNetwork, pairs: &[&Pair]) -> Result<(f64, Gradients)> {
    let mass = truth_mass(pairs)?;
    let parts = pairs
        .par_chunks(SHARD)
        .map(|shard| {
            let prepared = PreparedNet::new(net);
            let mut grads = net.zero_gradients();
            let mut err = 0.0;
            for (y, x) in shard.iter() {
                let acts = prepared.forward_trace(y)?;
                let e = acts.output.sub(x)?;
                let en = e.norm();
                err += en;
                if en > 0.0 {
                    prepared.backward(y, &acts, &e.scaled(1.0 / (en * mass)), &mut grads)?;
                }
            }
            Ok::<_, Error>((err, grads))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = net.zero_gradients();
    let mut err = 0.0;
    for (e, g) in &parts {
        err += e;
        add_gradients(&mut total, g);
    }
    Ok((err / mass, total))
}

/// `sum ||x_hat_i - x_i|| / sum ||x_i||` over the whole dataset.
pub fn loss_nmse(net: &UnfoldedNetwork, ds: &Dataset) -> Result<f64> {
    check_dims(net, ds)?;
    let cols = columns(ds);
    loss_of(net, &cols.iter().collect::<Vec<_>>())
}

/// Loss and parameter gradients over the columns `indices`.
pub fn batch_gradient(net: &UnfoldedNetwork, ds: &Dataset, indices: &[usize]) -> Result<(f64, Gradients)> {
    check_dims(net, ds)?;
    let cols: Vec<Pair> = indices.iter().map(|&i| ds.sample(i)).collect();
    gradient_of(net, &cols.iter().collect::<Vec<_>>())
}

/// Gradients of [`loss_nmse`] over the whole batch.
pub fn backward(net: &UnfoldedNetwork, batch: &Dataset) -> Result<Gradients> {
    let all: Vec<usize> = (0..batch.len()).collect();
    Ok(batch_gradient(net, batch, &all)?.1)
}

fn flatten(g: &Gradients) -> Vec<f64> {
    let mut out = Vec::new();
    for l in g {
        l.push_flat(&mut out);
    }
    out
}

fn with_position(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::NonFinite(s) => Error::NonFinite(format!("{s} (epoch {epoch}, batch {batch})")),
        other => other,
    }
}

/// Mini-batch Adam on the whole network. Returns the parameters with the
/// lowest validation loss seen, including the starting point.
pub fn train(
    net: &UnfoldedNetwork,
    train_ds: &Dataset,
    val_ds: &Dataset,
    cfg: &TrainConfig,
) -> Result<(UnfoldedNetwork, TrainReport)> {
    cfg.validate()?;
    check_dims(net, train_ds)?;
    check_dims(net, val_ds)?;
    let train_cols = columns(train_ds);
    let val_cols = columns(val_ds);
    let val_refs: Vec<&Pair> = val_cols.iter().collect();

    let initial = loss_of(net, &val_refs)?;
    let mut report = TrainReport {
        loss_history: Vec::with_capacity(cfg.epochs),
        val_history: Vec::with_capacity(cfg.epochs),
        best_epoch: 0,
        initial_val_nmse: initial,
        best_val_nmse: initial,
        final_learning_rate: cfg.learning_rate,
    };
    let mut current = net.clone();
    let mut best = net.clone();
    if cfg.epochs == 0 {
        return Ok((best, report));
    }
    if train_cols.is_empty() {
        return Err(Error::arg("training set is empty"));
    }

    let mut params = current.to_flat();
    let mut adam = AdamState::new(params.len());
    let mut lr = cfg.learning_rate;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train_cols.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.sort_unstable();
        order.shuffle(&mut seeded(derive_seed(cfg.seed, epoch as u64)));
        let mut loss_sum = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Pair> = chunk.iter().map(|&i| &train_cols[i]).collect();
            let (loss, grads) = gradient_of(&current, &batch).map_err(|e| with_position(e, epoch, b))?;
            let g = flatten(&grads);
            if g.iter().any(|v| !v.is_finite()) {
                return Err(with_position(Error::NonFinite("in gradient".into()), epoch, b));
            }
            adam.update(&mut params, &g, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
            current.set_flat(&params);
            // Pick up the threshold clamp.
            params = current.to_flat();
            loss_sum += loss * chunk.len() as f64;
        }
        report.loss_history.push(loss_sum / train_cols.len() as f64);
        let val = loss_of(&current, &val_refs).map_err(|e| with_position(e, epoch, usize::MAX))?;
        report.val_history.push(val);
        if val < report.best_val_nmse {
            report.best_val_nmse = val;
            report.best_epoch = epoch;
            best = current.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.lr_decay_patience {
                lr *= 0.1;
                stale = 0;
            }
        }
    }
    report.final_learning_rate = lr;
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::Shape;
    use crate::harmonic::{gen_dataset, Dictionary, GridKind};
    use crate::nets::{init_network, Arch, Dims, Filter, Inhibition, LayerParams};
    use crate::rng::seeded;

    fn setup() -> (Dictionary, Dataset) {
        let d = Dictionary::random(GridKind::OneD { m: 16 }, 8, 1).unwrap();
        let ds = gen_dataset(&d, 40, 2, 0.05, 2).unwrap();
        (d, ds)
    }

    #[test]
    fn loss_edge_cases() {
        let (d, ds) = setup();
        let zero = UnfoldedNetwork::zeros(Arch::Toeplitz1D, Dims { grid: d.kind(), n: 8 }, 2).unwrap();
        assert!((loss_nmse(&zero, &ds).unwrap() - 1.0).abs() < 1e-15);
        let empty = ds.select(&[]);
        assert!(matches!(loss_nmse(&zero, &empty), Err(Error::UndefinedLoss(_))));
        let mut silent = ds.select(&[0, 1]);
        silent.x = ComplexArray::zeros(16, 2);
        assert!(matches!(loss_nmse(&zero, &silent), Err(Error::UndefinedLoss(_))));
    }

    #[test]
    fn loss_is_zero_for_perfect_predictor() {
        // One identity layer with N = M recovers x from y = x exactly.
        let grid = GridKind::OneD { m: 4 };
        let layer = LayerParams {
            filter: Filter::Dense(ComplexArray::identity(4)),
            inhibition: Inhibition::Dense(ComplexArray::zeros(4, 4)),
            theta: 0.0,
        };
        let net = UnfoldedNetwork::new(Arch::Lista, Dims { grid, n: 4 }, vec![layer]).unwrap();
        let mut ds = setup().1.select(&[0, 1, 2]);
        ds.x = ComplexArray::random(Shape::Matrix(4, 3), &mut seeded(3));
        ds.y = ds.x.clone();
        ds.meta.grid = grid;
        ds.meta.n = 4;
        assert_eq!(loss_nmse(&net, &ds).unwrap(), 0.0);
    }

    #[test]
    fn loss_matches_loop() {
        let (d, ds) = setup();
        let net = init_network(Arch::Toeplitz1D, &d, 3, 0.1, None).unwrap();
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..ds.len() {
            let (y, x) = ds.sample(i);
            let out = net.forward(&y).unwrap();
            num += (0..16).map(|k| (out.get(k) - x.get(k)).norm_sqr()).sum::<f64>().sqrt();
            den += (0..16).map(|k| x.get(k).norm_sqr()).sum::<f64>().sqrt();
        }
        assert!((loss_nmse(&net, &ds).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn zero_network_threshold_gradient_vanishes() {
        let (d, ds) = setup();
        let net = UnfoldedNetwork::zeros(Arch::Lista, Dims { grid: d.kind(), n: 8 }, 2).unwrap();
        let g = backward(&net, &ds).unwrap();
        assert!(g.iter().all(|l| l.theta == 0.0));
    }

    #[test]
    fn linear_layer_gradient_closed_form() {
        // One layer, theta = 0, zero inhibition: x_hat = W y and the gradient
        // is sum_i (e_i / ||e_i||) y_i^H / sum_i ||x_i||.
        let (d, ds) = setup();
        let mut net = init_network(Arch::Lista, &d, 1, 0.0, None).unwrap();
        net.layers_mut()[0].filter = Filter::Dense(ComplexArray::random(Shape::Matrix(16, 8), &mut seeded(4)));
        let w = net.layers()[0].filter.array().clone();
        let mut want = ComplexArray::zeros(16, 8);
        let mass: f64 = (0..ds.len()).map(|i| ds.sample(i).1.norm()).sum();
        for i in 0..ds.len() {
            let (y, x) = ds.sample(i);
            let e = w.matmul(&y.clone().reshaped(Shape::Matrix(8, 1)).unwrap()).unwrap().flattened().sub(&x).unwrap();
            let scale = 1.0 / (e.norm() * mass);
            for r in 0..16 {
                for c in 0..8 {
                    let v = want.at(r, c) + e.get(r) * y.get(c).conj() * scale;
                    want.set_at(r, c, v);
                }
            }
        }
        let g = backward(&net, &ds).unwrap();
        assert!(g[0].filter.array().max_abs_diff(&want) < 1e-8 * want.max_abs());
    }

    #[test]
    fn zero_epochs_is_identity() {
        let (d, ds) = setup();
        let net = init_network(Arch::Toeplitz1D, &d, 2, 0.1, None).unwrap();
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let (out, report) = train(&net, &ds, &ds, &cfg).unwrap();
        assert_eq!(out, net);
        assert!(report.loss_history.is_empty() && report.val_history.is_empty());
        assert_eq!(report.best_epoch, 0);
    }

    #[test]
    fn training_is_deterministic_and_improves() {
        let (d, ds) = setup();
        let val = gen_dataset(&d, 20, 2, 0.05, 9).unwrap();
        let net = init_network(Arch::Toeplitz1D, &d, 3, 0.1, None).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch_size: 8,
            learning_rate: 1e-2,
            seed: 3,
            ..TrainConfig::default()
        };
        let (a, ra) = train(&net, &ds, &val, &cfg).unwrap();
        let (b, rb) = train(&net, &ds, &val, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
        assert_eq!(ra.loss_history.len(), 5);
        assert!(ra.best_val_nmse < ra.initial_val_nmse);
        assert!(a.layers().iter().all(|l| l.theta >= 0.0));
    }

    #[test]
    fn rejects_bad_config_and_dims() {
        let (d, ds) = setup();
        let net = init_network(Arch::Lista, &d, 1, 0.1, None).unwrap();
        let bad = TrainConfig {
            adam_beta1: 1.0,
            ..TrainConfig::default()
        };
        assert!(train(&net, &ds, &ds, &bad).is_err());
        let other = Dictionary::random(GridKind::OneD { m: 12 }, 8, 1).unwrap();
        let ds2 = gen_dataset(&other, 5, 2, 0.0, 1).unwrap();
        assert!(matches!(loss_nmse(&net, &ds2), Err(Error::Dimension(_))));
    }
}
