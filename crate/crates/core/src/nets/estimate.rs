use num_complex::Complex64;

use crate::complex::ComplexArray;
use crate::error::{Error, Result};
use crate::harmonic::Dataset;

/// Relative pivot below which the normal equations count as singular.
const PIVOT_TOL: f64 = 1e-10;
/// Ridge added to the normal matrix, relative to its mean diagonal.
const RIDGE: f64 = 1e-12;

/// Least-squares dictionary `Phi = Y X^H (X X^H + eps I)^{-1}` from labeled
/// pairs, solved through a Cholesky factorisation of the `M x M` normal matrix.
pub fn estimate_dictionary(ds: &Dataset) -> Result<ComplexArray> {
    let (m, n) = (ds.m(), ds.n());
    if ds.len() < m {
        return Err(Error::Conditioning(format!(
            "{} samples cannot determine a dictionary with {m} columns",
            ds.len()
        )));
    }
    let xh = ds.x.adjoint();
    let mut a = ds.x.matmul(&xh)?;
    let mean_diag = (0..m).map(|i| a.at(i, i).re).sum::<f64>() / m as f64;
    if !(mean_diag > 0.0) {
        return Err(Error::Conditioning("spectra are all zero".into()));
    }
    for i in 0..m {
        let v = a.at(i, i) + RIDGE * mean_diag;
        a.set_at(i, i, v);
    }
    // (X X^H) Phi^H = X Y^H
    let rhs = ds.x.matmul(&ds.y.adjoint())?;
    let l = cholesky(&a, PIVOT_TOL * mean_diag)?;
    let z = cholesky_solve(&l, &rhs);
    debug_assert_eq!(z.cols(), n);
    Ok(z.adjoint())
}

/// Lower factor `L` with `A = L L^H`.
fn cholesky(a: &ComplexArray, min_pivot: f64) -> Result<ComplexArray> {
    let m = a.rows();
    let mut l = ComplexArray::zeros(m, m);
    for j in 0..m {
        let mut d = a.at(j, j).re;
        for k in 0..j {
            d -= l.at(j, k).norm_sqr();
        }
        if !(d > min_pivot) {
            return Err(Error::Conditioning(format!(
                "normal matrix is singular to working precision (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l.set_at(j, j, Complex64::new(d, 0.0));
        for i in j + 1..m {
            let mut s = a.at(i, j);
            for k in 0..j {
                s -= l.at(i, k) * l.at(j, k).conj();
            }
            l.set_at(i, j, s / d);
        }
    }
    Ok(l)
}

/// Solves `L L^H Z = B` column by column.
fn cholesky_solve(l: &ComplexArray, b: &ComplexArray) -> ComplexArray {
    let m = l.rows();
    let mut z = b.clone();
    for c in 0..b.cols() {
        for i in 0..m {
            let mut s = z.at(i, c);
            for k in 0..i {
                s -= l.at(i, k) * z.at(k, c);
            }
            z.set_at(i, c, s / l.at(i, i));
        }
        for i in (0..m).rev() {
            let mut s = z.at(i, c);
            for k in i + 1..m {
                s -= l.at(k, i).conj() * z.at(k, c);
            }
            z.set_at(i, c, s / l.at(i, i));
        }
    }
    z
}
