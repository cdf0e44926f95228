//! Parameter and per-layer time scaling of dense LISTA against the 1D
//! Toeplitz network.

use std::io::Write;
use std::time::{Duration, Instant};

use serde::Serialize;

use super::experiment::{csv_err, fmt_num};
use crate::complex::{ComplexArray, Shape};
use crate::error::{Error, Result};
use crate::harmonic::GridKind;
use crate::nets::{count_for_depth, Arch, Dims, PreparedNet, UnfoldedNetwork};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityRow {
    pub m: usize,
    pub n: usize,
    pub depth: usize,
    pub lista_inhibition: usize,
    pub toeplitz_inhibition: usize,
    /// Toeplitz inhibition storage as a percentage of the dense one.
    pub storage_pct: f64,
    pub lista_total: usize,
    pub toeplitz_total: usize,
    pub lista_layer_ms: Option<f64>,
    pub toeplitz_layer_ms: Option<f64>,
    /// Layer times relative to the first row.
    pub lista_time_ratio: Option<f64>,
    pub toeplitz_time_ratio: Option<f64>,
}

fn random_net(arch: Arch, dims: Dims, seed: u64) -> Result<UnfoldedNetwork> {
    let mut rng = seeded(seed);
    let mut net = UnfoldedNetwork::zeros(arch, dims, 1)?;
    for l in net.layers_mut() {
        *l.filter.array_mut() = ComplexArray::random(l.filter.array().shape(), &mut rng);
        *l.inhibition.array_mut() = ComplexArray::random(l.inhibition.array().shape(), &mut rng);
        l.theta = 0.1;
    }
    Ok(net)
}

/// Median over five samples of one layer's wall time in milliseconds.
pub fn time_layer(net: &UnfoldedNetwork, seed: u64) -> Result<f64> {
    Ok(time_layers(&[net], seed)?[0])
}

/// Median over five rounds of the first layer's wall time for each network,
/// in milliseconds. A round times every network back to back, so drifts in
/// machine load reach all of them alike. Each timing averages enough calls to
/// last about 20 ms.
pub fn time_layers(nets: &[&UnfoldedNetwork], seed: u64) -> Result<Vec<f64>> {
    struct Bench<'a> {
        net: PreparedNet<'a>,
        y: ComplexArray,
        x: ComplexArray,
        reps: usize,
    }
    let mut benches = Vec::with_capacity(nets.len());
    for (i, net) in nets.iter().enumerate() {
        let dims = net.dims();
        let mut rng = seeded(derive_seed(seed, i as u64));
        let mut b = Bench {
            net: PreparedNet::new(net),
            y: ComplexArray::random(Shape::Vector(dims.n), &mut rng),
            x: ComplexArray::random(Shape::Vector(dims.m()), &mut rng),
            reps: 1,
        };
        b.net.layer(0, &b.y, &b.x)?;
        let start = Instant::now();
        b.net.layer(0, &b.y, &b.x)?;
        let once = start.elapsed().max(Duration::from_nanos(100));
        b.reps = (Duration::from_millis(20).as_secs_f64() / once.as_secs_f64()).ceil().max(1.0) as usize;
        benches.push(b);
    }
    let mut samples = vec![Vec::with_capacity(5); nets.len()];
    for _ in 0..5 {
        for (b, out) in benches.iter().zip(&mut samples) {
            let start = Instant::now();
            for _ in 0..b.reps {
                std::hint::black_box(b.net.layer(0, &b.y, &b.x)?);
            }
            out.push(start.elapsed().as_secs_f64() * 1e3 / b.reps as f64);
        }
    }
    Ok(samples
        .into_iter()
        .map(|mut s| {
            s.sort_by(f64::total_cmp);
            s[2]
        })
        .collect())
}

/// One row per grid size. Times are measured only when `timing` is set.
pub fn complexity_report(ms: &[usize], n: usize, depth: usize, timing: bool, seed: u64) -> Result<Vec<ComplexityRow>> {
    if n == 0 {
        return Err(Error::arg("N must be positive"));
    }
    let times = if timing {
        let mut nets = Vec::with_capacity(2 * ms.len());
        for (i, &m) in ms.iter().enumerate() {
            let dims = Dims {
                grid: GridKind::OneD { m },
                n,
            };
            let s = derive_seed(seed, i as u64);
            nets.push(random_net(Arch::Lista, dims, s)?);
            nets.push(random_net(Arch::Toeplitz1D, dims, s)?);
        }
        Some(time_layers(&nets.iter().collect::<Vec<_>>(), seed)?)
    } else {
        None
    };
    let mut rows: Vec<ComplexityRow> = Vec::with_capacity(ms.len());
    for (i, &m) in ms.iter().enumerate() {
        let dims = Dims {
            grid: GridKind::OneD { m },
            n,
        };
        let dense = count_for_depth(Arch::Lista, dims, depth)?;
        let toep = count_for_depth(Arch::Toeplitz1D, dims, depth)?;
        let (lista_inhibition, toeplitz_inhibition) = (m * m, 2 * m - 1);
        let lista_ms = times.as_ref().map(|t| t[2 * i]);
        let toep_ms = times.as_ref().map(|t| t[2 * i + 1]);
        let ratio = |now: Option<f64>, base: Option<f64>| now.zip(base).map(|(a, b)| a / b);
        let (lista_base, toep_base) = rows
            .first()
            .map_or((lista_ms, toep_ms), |r| (r.lista_layer_ms, r.toeplitz_layer_ms));
        rows.push(ComplexityRow {
            m,
            n,
            depth,
            lista_inhibition,
            toeplitz_inhibition,
            storage_pct: 100.0 * toeplitz_inhibition as f64 / lista_inhibition as f64,
            lista_total: dense.total,
            toeplitz_total: toep.total,
            lista_layer_ms: lista_ms,
            toeplitz_layer_ms: toep_ms,
            lista_time_ratio: ratio(lista_ms, lista_base),
            toeplitz_time_ratio: ratio(toep_ms, toep_base),
        });
    }
    Ok(rows)
}

pub fn write_complexity_csv(rows: &[ComplexityRow], out: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record([
        "m",
        "n",
        "depth",
        "lista_inhibition",
        "toeplitz_inhibition",
        "storage_pct",
        "lista_total",
        "toeplitz_total",
        "lista_layer_ms",
        "toeplitz_layer_ms",
        "lista_time_ratio",
        "toeplitz_time_ratio",
    ])
    .map_err(csv_err)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), fmt_num);
    for r in rows {
        w.write_record([
            r.m.to_string(),
            r.n.to_string(),
            r.depth.to_string(),
            r.lista_inhibition.to_string(),
            r.toeplitz_inhibition.to_string(),
            fmt_num(r.storage_pct),
            r.lista_total.to_string(),
            r.toeplitz_total.to_string(),
            opt(r.lista_layer_ms),
            opt(r.toeplitz_layer_ms),
            opt(r.lista_time_ratio),
            opt(r.toeplitz_time_ratio),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
