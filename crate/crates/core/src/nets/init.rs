use num_complex::Complex64;

use super::{Arch, Dims, Filter, Inhibition, LayerParams, UnfoldedNetwork};
use crate::complex::{lipschitz_constant, ComplexArray, LIPSCHITZ_MAX_ITER, LIPSCHITZ_TOL};
use crate::error::{Error, Result};
use crate::harmonic::{gram, gram_generator_1d, gram_generator_2d, Dataset, Dictionary, GridKind};
use crate::spectral::{ToeplitzMat2D, ToeplitzVec};

/// Starting point for training: every layer gets `W_e = Phi^H / L`, a zero
/// inhibition operator and `theta = lambda / L`. `Phi` is estimated from
/// `estimate_from` when given and taken from `d` otherwise. For ConvLISTA the
/// filter kernel holds the diagonal means of `Phi^H / L`.
pub fn init_network(
    arch: Arch,
    d: &Dictionary,
    depth: usize,
    lambda: f64,
    estimate_from: Option<&Dataset>,
) -> Result<UnfoldedNetwork> {
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::arg(format!("lambda must be >= 0, got {lambda}")));
    }
    let dims = Dims {
        grid: d.kind(),
        n: d.n(),
    };
    let phi = match estimate_from {
        Some(ds) => {
            if ds.m() != d.m() || ds.n() != d.n() {
                return Err(Error::dim("estimation dataset does not match the dictionary"));
            }
            super::estimate_dictionary(ds)?
        }
        None => d.phi().clone(),
    };
    let l = lipschitz_constant(&phi, LIPSCHITZ_TOL, LIPSCHITZ_MAX_ITER)?.value;
    let we = phi.adjoint().scaled(1.0 / l);
    let filter = match arch {
        Arch::ConvLista => Filter::Conv(diagonal_means(&we)),
        _ => Filter::Dense(we),
    };
    let mut net = UnfoldedNetwork::zeros(arch, dims, depth)?;
    for layer in net.layers_mut() {
        layer.filter = filter.clone();
        layer.theta = lambda / l;
    }
    Ok(net)
}

/// Mean of each diagonal `i - k = p - (N - 1)` of an `M x N` matrix.
fn diagonal_means(w: &ComplexArray) -> ComplexArray {
    let (m, n) = (w.rows(), w.cols());
    let mut out = ComplexArray::zeros_vec(m + n - 1);
    for p in 0..m + n - 1 {
        let d = p as isize - (n as isize - 1);
        let mut sum = Complex64::new(0.0, 0.0);
        let mut count = 0usize;
        for k in 0..n {
            let i = k as isize + d;
            if (0..m as isize).contains(&i) {
                sum += w.at(i as usize, k);
                count += 1;
            }
        }
        out.set(p, sum / count as f64);
    }
    out
}

/// Network whose `T` layers are exactly `T` ISTA iterations for `lambda`:
/// `W_e = Phi^H / L`, inhibition `I - Phi^H Phi / L`, `theta = lambda / L`.
pub fn ista_network(arch: Arch, d: &Dictionary, depth: usize, lambda: f64, lipschitz: f64) -> Result<UnfoldedNetwork> {
    if !(lipschitz > 0.0) {
        return Err(Error::arg("Lipschitz constant must be positive"));
    }
    let dims = Dims {
        grid: d.kind(),
        n: d.n(),
    };
    let inv = 1.0 / lipschitz;
    let inhibition = match (arch, d.kind()) {
        (Arch::Lista, _) => {
            let g = gram(d);
            let m = d.m();
            Inhibition::Dense(ComplexArray::identity(m).sub(&g.scaled(inv))?)
        }
        (Arch::Toeplitz1D, GridKind::OneD { m }) => {
            let g = gram_generator_1d(d)?;
            Inhibition::Toeplitz1D(ToeplitzVec::from_fn(m, |k| delta(k == 0) - g.coef(k) * inv))
        }
        (Arch::Toeplitz2D, GridKind::TwoD { m1, m2 }) => {
            let g = gram_generator_2d(d)?;
            Inhibition::Toeplitz2D(ToeplitzMat2D::from_fn(m1, m2, |a, b| delta(a == 0 && b == 0) - g.coef(a, b) * inv))
        }
        _ => return Err(Error::arg(format!("{arch} cannot represent ISTA on {:?}", d.kind()))),
    };
    let layer = LayerParams {
        filter: Filter::Dense(d.phi().adjoint().scaled(inv)),
        inhibition,
        theta: lambda * inv,
    };
    UnfoldedNetwork::new(arch, dims, vec![layer; depth])
}

fn delta(on: bool) -> Complex64 {
    Complex64::new(if on { 1.0 } else { 0.0 }, 0.0)
}
