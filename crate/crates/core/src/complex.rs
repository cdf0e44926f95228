//! Split-storage complex arithmetic.
//!
//! Every complex quantity in the crate (observations, spectra, dictionaries,
//! learned weights) lives in a [`ComplexArray`]: one real plane and one
//! imaginary plane of identical shape, row-major. Complex products are
//! expanded into the four real products of two cross-coupled real channels,
//! which is also the parameterisation used for gradients.

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of a [`ComplexArray`]; rank is at most two.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Shape {
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> Vec<usize> {
        match *self {
            Shape::Vector(n) => vec![n],
            Shape::Matrix(r, c) => vec![r, c],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexArray {
    re: Vec<f64>,
    im: Vec<f64>,
    shape: Shape,
}

impl ComplexArray {
    pub fn zeros_vec(n: usize) -> Self {
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
            shape: Shape::Vector(n),
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            re: vec![0.0; rows * cols],
            im: vec![0.0; rows * cols],
            shape: Shape::Matrix(rows, cols),
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        let n = other.len();
        Self {
            re: vec![0.0; n],
            im: vec![0.0; n],
            shape: other.shape,
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            out.re[i * n + i] = 1.0;
        }
        out
    }

    pub fn from_planes(re: Vec<f64>, im: Vec<f64>, shape: Shape) -> Result<Self> {
        if re.len() != im.len() || re.len() != shape.len() {
            return Err(Error::dim(format!(
                "planes of length {} / {} do not fit shape {:?}",
                re.len(),
                im.len(),
                shape
            )));
        }
        Ok(Self { re, im, shape })
    }

    pub fn vector(re: Vec<f64>, im: Vec<f64>) -> Result<Self> {
        let n = re.len();
        Self::from_planes(re, im, Shape::Vector(n))
    }

    pub fn real_vector(re: Vec<f64>) -> Self {
        let n = re.len();
        Self {
            re,
            im: vec![0.0; n],
            shape: Shape::Vector(n),
        }
    }

    pub fn from_complex(values: &[Complex64]) -> Self {
        Self {
            re: values.iter().map(|c| c.re).collect(),
            im: values.iter().map(|c| c.im).collect(),
            shape: Shape::Vector(values.len()),
        }
    }

    pub fn from_complex_matrix(rows: usize, cols: usize, values: &[Complex64]) -> Result<Self> {
        let v = Self::from_complex(values);
        Self::from_planes(v.re, v.im, Shape::Matrix(rows, cols))
    }

    /// Matrix whose entry `(i, k)` is `f(i, k)`.
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex64) -> Self {
        let mut out = Self::zeros(rows, cols);
        for i in 0..rows {
            for k in 0..cols {
                let c = f(i, k);
                out.re[i * cols + k] = c.re;
                out.im[i * cols + k] = c.im;
            }
        }
        out
    }

    /// Entries with independent standard normal real and imaginary parts.
    pub fn random(shape: Shape, rng: &mut crate::rng::Rng) -> Self {
        let n = shape.len();
        let normal = rand_distr::StandardNormal;
        let re = (0..n).map(|_| rng.sample::<f64, _>(normal)).collect();
        let im = (0..n).map(|_| rng.sample::<f64, _>(normal)).collect();
        Self { re, im, shape }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    /// Rows of a matrix; a vector counts as a single column.
    pub fn rows(&self) -> usize {
        match self.shape {
            Shape::Vector(n) => n,
            Shape::Matrix(r, _) => r,
        }
    }

    pub fn cols(&self) -> usize {
        match self.shape {
            Shape::Vector(_) => 1,
            Shape::Matrix(_, c) => c,
        }
    }

    pub fn re(&self) -> &[f64] {
        &self.re
    }

    pub fn im(&self) -> &[f64] {
        &self.im
    }

    pub fn re_mut(&mut self) -> &mut [f64] {
        &mut self.re
    }

    pub fn im_mut(&mut self) -> &mut [f64] {
        &mut self.im
    }

    pub fn planes_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.re, &mut self.im)
    }

    pub fn into_planes(self) -> (Vec<f64>, Vec<f64>) {
        (self.re, self.im)
    }

    #[inline]
    pub fn get(&self, i: usize) -> Complex64 {
        Complex64::new(self.re[i], self.im[i])
    }

    #[inline]
    pub fn set(&mut self, i: usize, value: Complex64) {
        self.re[i] = value.re;
        self.im[i] = value.im;
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> Complex64 {
        self.get(row * self.cols() + col)
    }

    #[inline]
    pub fn set_at(&mut self, row: usize, col: usize, value: Complex64) {
        let c = self.cols();
        self.set(row * c + col, value);
    }

    pub fn to_complex(&self) -> Vec<Complex64> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    /// Same data, different shape of equal size.
    pub fn reshaped(mut self, shape: Shape) -> Result<Self> {
        if shape.len() != self.len() {
            return Err(Error::dim(format!(
                "cannot reshape {:?} into {:?}",
                self.shape, shape
            )));
        }
        self.shape = shape;
        Ok(self)
    }

    /// Row-major flattening into a vector.
    pub fn flattened(self) -> Self {
        let n = self.len();
        Self {
            shape: Shape::Vector(n),
            ..self
        }
    }

    pub fn row(&self, r: usize) -> Self {
        let c = self.cols();
        Self {
            re: self.re[r * c..(r + 1) * c].to_vec(),
            im: self.im[r * c..(r + 1) * c].to_vec(),
            shape: Shape::Vector(c),
        }
    }

    pub fn column(&self, col: usize) -> Self {
        let (r, c) = (self.rows(), self.cols());
        Self {
            re: (0..r).map(|i| self.re[i * c + col]).collect(),
            im: (0..r).map(|i| self.im[i * c + col]).collect(),
            shape: Shape::Vector(r),
        }
    }

    pub fn set_column(&mut self, col: usize, values: &ComplexArray) {
        let c = self.cols();
        for i in 0..values.len() {
            self.re[i * c + col] = values.re[i];
            self.im[i * c + col] = values.im[i];
        }
    }

    pub fn conj(&self) -> Self {
        Self {
            re: self.re.clone(),
            im: self.im.iter().map(|v| -v).collect(),
            shape: self.shape,
        }
    }

    /// Conjugate transpose of a matrix.
    pub fn adjoint(&self) -> Self {
        let (r, c) = (self.rows(), self.cols());
        let mut out = Self::zeros(c, r);
        for i in 0..r {
            for k in 0..c {
                out.re[k * r + i] = self.re[i * c + k];
                out.im[k * r + i] = -self.im[i * c + k];
            }
        }
        out
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            re: self.re.iter().map(|v| v * s).collect(),
            im: self.im.iter().map(|v| v * s).collect(),
            shape: self.shape,
        }
    }

    pub fn scale_in_place(&mut self, s: f64) {
        self.re.iter_mut().for_each(|v| *v *= s);
        self.im.iter_mut().for_each(|v| *v *= s);
    }

    /// Multiplication by a complex scalar.
    pub fn scaled_complex(&self, s: Complex64) -> Self {
        let mut out = Self::zeros_like(self);
        for i in 0..self.len() {
            out.set(i, self.get(i) * s);
        }
        out
    }

    fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dim(format!(
                "shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.add_assign(other);
        Ok(out)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_shape(other)?;
        let mut out = self.clone();
        out.axpy(-1.0, other);
        Ok(out)
    }

    /// `self += other`; panics on length mismatch.
    pub fn add_assign(&mut self, other: &Self) {
        self.axpy(1.0, other);
    }

    /// `self += a * other`; panics on length mismatch.
    pub fn axpy(&mut self, a: f64, other: &Self) {
        assert_eq!(self.len(), other.len(), "axpy length mismatch");
        for (s, o) in self.re.iter_mut().zip(&other.re) {
            *s += a * o;
        }
        for (s, o) in self.im.iter_mut().zip(&other.im) {
            *s += a * o;
        }
    }

    /// Hermitian inner product `<self, other> = sum conj(self_i) other_i`.
    pub fn dot(&self, other: &Self) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.len() {
            acc += self.get(i).conj() * other.get(i);
        }
        acc
    }

    pub fn norm_sqr(&self) -> f64 {
        self.re.iter().map(|v| v * v).sum::<f64>() + self.im.iter().map(|v| v * v).sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Sum of complex moduli.
    pub fn l1_norm(&self) -> f64 {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.re
            .iter()
            .zip(&self.im)
            .map(|(r, i)| r.hypot(*i))
            .fold(0.0, f64::max)
    }

    pub fn abs(&self) -> Vec<f64> {
        self.re.iter().zip(&self.im).map(|(r, i)| r.hypot(*i)).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(&self.im).all(|v| v.is_finite())
    }

    /// Largest entrywise modulus of `self - other`.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.len(), other.len());
        (0..self.len())
            .map(|i| (self.get(i) - other.get(i)).norm())
            .fold(0.0, f64::max)
    }

    /// `||self - other|| / max(||other||, tiny)`.
    pub fn rel_diff(&self, other: &Self) -> f64 {
        let mut d = self.clone();
        d.axpy(-1.0, other);
        d.norm() / other.norm().max(f64::MIN_POSITIVE)
    }

    /// Dense matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (other.rows(), other.cols());
        if k != k2 {
            return Err(Error::dim(format!("matmul {m}x{k} by {k2}x{n}")));
        }
        let mut out = Self::zeros(m, n);
        for i in 0..m {
            for p in 0..k {
                let ar = self.re[i * k + p];
                let ai = self.im[i * k + p];
                if ar == 0.0 && ai == 0.0 {
                    continue;
                }
                let orow = i * n;
                let brow = p * n;
                for j in 0..n {
                    let br = other.re[brow + j];
                    let bi = other.im[brow + j];
                    out.re[orow + j] += ar * br - ai * bi;
                    out.im[orow + j] += ar * bi + ai * br;
                }
            }
        }
        Ok(out)
    }
}

/// Nonnegative soft-threshold level.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Threshold(f64);

impl Threshold {
    pub fn new(value: f64) -> Result<Self> {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::arg(format!("threshold must be finite and >= 0, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn zero() -> Self {
        Self(0.0)
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// `W x` for a rank-2 `W` and rank-1 `x`.
pub fn matvec(w: &ComplexArray, x: &ComplexArray) -> Result<ComplexArray> {
    let (m, n) = match w.shape() {
        Shape::Matrix(m, n) => (m, n),
        s => return Err(Error::dim(format!("matvec expects a matrix, got {s:?}"))),
    };
    if x.shape() != Shape::Vector(n) {
        return Err(Error::dim(format!(
            "matvec of {m}x{n} matrix with {:?}",
            x.shape()
        )));
    }
    let mut out = ComplexArray::zeros_vec(m);
    matvec_into(w, x, &mut out);
    Ok(out)
}

/// Unchecked `out = W x`, used on hot paths after shapes were validated.
pub(crate) fn matvec_into(w: &ComplexArray, x: &ComplexArray, out: &mut ComplexArray) {
    let n = w.cols();
    let (xr, xi) = (x.re(), x.im());
    for i in 0..w.rows() {
        let wr = &w.re[i * n..(i + 1) * n];
        let wi = &w.im[i * n..(i + 1) * n];
        let mut sr = 0.0;
        let mut si = 0.0;
        for k in 0..n {
            sr += wr[k] * xr[k] - wi[k] * xi[k];
            si += wr[k] * xi[k] + wi[k] * xr[k];
        }
        out.re[i] = sr;
        out.im[i] = si;
    }
}

/// `W^H x` without materialising the adjoint.
pub fn matvec_adjoint(w: &ComplexArray, x: &ComplexArray) -> Result<ComplexArray> {
    let (m, n) = match w.shape() {
        Shape::Matrix(m, n) => (m, n),
        s => return Err(Error::dim(format!("matvec_adjoint expects a matrix, got {s:?}"))),
    };
    if x.shape() != Shape::Vector(m) {
        return Err(Error::dim(format!(
            "adjoint matvec of {m}x{n} matrix with {:?}",
            x.shape()
        )));
    }
    let mut out = ComplexArray::zeros_vec(n);
    matvec_adjoint_into(w, x, &mut out);
    Ok(out)
}

pub(crate) fn matvec_adjoint_into(w: &ComplexArray, x: &ComplexArray, out: &mut ComplexArray) {
    let n = w.cols();
    out.re.iter_mut().for_each(|v| *v = 0.0);
    out.im.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..w.rows() {
        let (xr, xi) = (x.re[i], x.im[i]);
        let wr = &w.re[i * n..(i + 1) * n];
        let wi = &w.im[i * n..(i + 1) * n];
        for k in 0..n {
            // conj(w) * x
            out.re[k] += wr[k] * xr + wi[k] * xi;
            out.im[k] += wr[k] * xi - wi[k] * xr;
        }
    }
}

/// Complex soft threshold `x (1 - theta / max(|x|, theta))`.
///
/// Entries with `|x| <= theta` become exactly zero, the rest keep their phase
/// and lose `theta` of magnitude. With `theta = 0` the input is returned
/// unchanged.
pub fn soft_threshold(x: &ComplexArray, theta: Threshold) -> ComplexArray {
    let mut out = x.clone();
    soft_threshold_in_place(&mut out, theta);
    out
}

pub fn soft_threshold_in_place(x: &mut ComplexArray, theta: Threshold) {
    let t = theta.value();
    if t == 0.0 {
        return;
    }
    for i in 0..x.len() {
        let mag = x.re[i].hypot(x.im[i]);
        if mag <= t {
            x.re[i] = 0.0;
            x.im[i] = 0.0;
        } else {
            let s = 1.0 - t / mag;
            x.re[i] *= s;
            x.im[i] *= s;
        }
    }
}

/// Result of a power-iteration estimate of `lambda_max(A^H A)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LipschitzEstimate {
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

pub const LIPSCHITZ_TOL: f64 = 1e-8;
pub const LIPSCHITZ_MAX_ITER: usize = 500;

/// Power iteration for the top eigenvalue of `A^H A`, given `A` and `A^H` as
/// closures over vectors of length `n` (domain) and the range respectively.
///
/// Starts from the all-ones vector. If that vector lies in the null space of
/// `A` (it does for partial Fourier operators that skip the zero sample), the
/// iteration restarts from a fixed pseudo-random vector. The returned value
/// is a Rayleigh quotient, hence never above the true eigenvalue.
pub fn power_iteration(
    n: usize,
    apply: impl Fn(&ComplexArray) -> ComplexArray,
    apply_adjoint: impl Fn(&ComplexArray) -> ComplexArray,
    tol: f64,
    max_iter: usize,
) -> Result<LipschitzEstimate> {
    if n == 0 {
        return Err(Error::arg("power iteration on an empty operator"));
    }
    if !(tol > 0.0) {
        return Err(Error::arg(format!("tolerance must be positive, got {tol}")));
    }
    let ones = ComplexArray::real_vector(vec![1.0 / (n as f64).sqrt(); n]);
    let mut fallback = ComplexArray::random(Shape::Vector(n), &mut crate::rng::seeded(0x5eed));
    fallback.scale_in_place(1.0 / fallback.norm());

    let ones_image = apply(&ones);
    let fallback_image = apply(&fallback);
    let (e_ones, e_fallback) = (ones_image.norm_sqr(), fallback_image.norm_sqr());
    if !(e_ones > 0.0 || e_fallback > 0.0) {
        return Err(Error::arg("operator is zero; Lipschitz constant undefined"));
    }
    let mut av = if e_ones > 1e-10 * e_fallback {
        ones_image
    } else {
        fallback_image
    };
    let mut estimate = av.norm_sqr();

    for it in 1..=max_iter {
        let mut v = apply_adjoint(&av);
        let vn = v.norm();
        if !vn.is_finite() {
            return Err(Error::NonFinite("in power iteration".into()));
        }
        v.scale_in_place(1.0 / vn);
        av = apply(&v);
        let next = av.norm_sqr();
        if !next.is_finite() {
            return Err(Error::NonFinite("in power iteration".into()));
        }
        let delta = (next - estimate).abs();
        estimate = next;
        if delta <= tol * estimate {
            return Ok(LipschitzEstimate {
                value: estimate,
                iterations: it,
                converged: true,
            });
        }
    }
    Ok(LipschitzEstimate {
        value: estimate,
        iterations: max_iter,
        converged: false,
    })
}

/// Top eigenvalue of `Phi^H Phi`, i.e. the Lipschitz constant of the gradient
/// of `0.5 ||y - Phi x||^2`.
pub fn lipschitz_constant(phi: &ComplexArray, tol: f64, max_iter: usize) -> Result<LipschitzEstimate> {
    if !matches!(phi.shape(), Shape::Matrix(..)) {
        return Err(Error::dim("lipschitz_constant expects a matrix"));
    }
    power_iteration(
        phi.cols(),
        |v| {
            let mut out = ComplexArray::zeros_vec(phi.rows());
            matvec_into(phi, v, &mut out);
            out
        },
        |r| {
            let mut out = ComplexArray::zeros_vec(phi.cols());
            matvec_adjoint_into(phi, r, &mut out);
            out
        },
        tol,
        max_iter,
    )
}
