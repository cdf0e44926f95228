//! FFT kernels, linear convolution and Toeplitz structure.
//!
//! Layout conventions used throughout the crate:
//!
//! - A [`ToeplitzVec`] for grid size `M` stores `h_d`, `d = -(M-1)..=M-1`, at
//!   array position `d + M - 1`. Its dense expansion has `[W]_{i,k} = h_{i-k}`.
//! - A [`ToeplitzMat2D`] stores `h_{a,b}` at `(a + M1 - 1, b + M2 - 1)`.
//! - Two-dimensional grids are flattened row-major, `l = s * M2 + t`, which is
//!   the column order of `F_{M1} (x) F_{M2}`. The doubly-block-Toeplitz
//!   expansion is then `[T(H)]_{s*M2+t, i*M2+j} = h_{s-i, t-j}`, and
//!   `vec(H * X) = T(H) vec(X)`.

use std::cell::RefCell;
use std::collections::HashMap;
use std::rc::Rc;

use num_complex::Complex64;

use crate::complex::{ComplexArray, Shape};
use crate::error::{Error, Result};

/// Points per cache block (16 KiB of split planes).
const FFT_BLOCK: usize = 1024;

/// Precomputed radix-2 transform of one length.
#[derive(Debug)]
pub struct FftPlan {
    n: usize,
    /// Twiddles of the stage with half-size `h` start at offset `h - 1`.
    cos: Vec<f64>,
    sin: Vec<f64>,
    bitrev: Vec<usize>,
}

impl FftPlan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::arg(format!("FFT length {n} is not a power of two")));
        }
        let bits = n.trailing_zeros();
        let bitrev = (0..n)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (usize::BITS - bits) })
            .collect();
        let mut cos = Vec::with_capacity(n.saturating_sub(1));
        let mut sin = Vec::with_capacity(n.saturating_sub(1));
        let mut half = 1;
        while half < n {
            let step = -std::f64::consts::PI / half as f64;
            cos.extend((0..half).map(|k| (step * k as f64).cos()));
            sin.extend((0..half).map(|k| (step * k as f64).sin()));
            half *= 2;
        }
        Ok(Self { n, cos, sin, bitrev })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// In-place forward DFT, `X_k = sum_n x_n e^{-j 2 pi k n / N}`.
    pub fn forward(&self, re: &mut [f64], im: &mut [f64]) {
        self.transform(re, im);
    }

    /// In-place inverse DFT including the `1/N` factor, computed as
    /// `conj(DFT(conj(x))) / N`.
    pub fn inverse(&self, re: &mut [f64], im: &mut [f64]) {
        im.iter_mut().for_each(|v| *v = -*v);
        self.transform(re, im);
        let s = 1.0 / self.n as f64;
        re.iter_mut().for_each(|v| *v *= s);
        im.iter_mut().for_each(|v| *v *= -s);
    }

    fn transform(&self, re: &mut [f64], im: &mut [f64]) {
        let n = self.n;
        assert!(re.len() == n && im.len() == n, "FFT buffer length mismatch");
        for i in 0..n {
            let j = self.bitrev[i];
            if j > i {
                re.swap(i, j);
                im.swap(i, j);
            }
        }
        // Stages that fit in one block run block by block while it is hot in
        // cache; the rest sweep the whole buffer.
        let block = n.min(FFT_BLOCK);
        for (r, i) in re.chunks_exact_mut(block).zip(im.chunks_exact_mut(block)) {
            if block >= 2 {
                for (r, i) in r.chunks_exact_mut(2).zip(i.chunks_exact_mut(2)) {
                    let (ar, ai) = (r[0], i[0]);
                    r[0] = ar + r[1];
                    i[0] = ai + i[1];
                    r[1] = ar - r[1];
                    i[1] = ai - i[1];
                }
            }
            self.stages(r, i, 2, block);
        }
        self.stages(re, im, block, n);
    }

    /// Runs the stages with half-sizes `from, 2 from, ...` below `to`, two
    /// at a time where possible.
    fn stages(&self, re: &mut [f64], im: &mut [f64], from: usize, to: usize) {
        let mut half = from;
        while half * 4 <= to {
            self.stage_pair(re, im, half);
            half *= 4;
        }
        if half < to {
            self.stage(re, im, half);
        }
    }

    /// Stages `half` and `2 half` fused into one radix-4 pass.
    fn stage_pair(&self, re: &mut [f64], im: &mut [f64], half: usize) {
        let h = half;
        let (w1r, w1i) = (&self.cos[h - 1..2 * h - 1], &self.sin[h - 1..2 * h - 1]);
        let (w2r, w2i) = (&self.cos[2 * h - 1..4 * h - 1], &self.sin[2 * h - 1..4 * h - 1]);
        for (r, i) in re.chunks_exact_mut(4 * h).zip(im.chunks_exact_mut(4 * h)) {
            let (r01, r23) = r.split_at_mut(2 * h);
            let (r0, r1) = r01.split_at_mut(h);
            let (r2, r3) = r23.split_at_mut(h);
            let (i01, i23) = i.split_at_mut(2 * h);
            let (i0, i1) = i01.split_at_mut(h);
            let (i2, i3) = i23.split_at_mut(h);
            for k in 0..h {
                let (wr, wi) = (w1r[k], w1i[k]);
                let t1r = r1[k] * wr - i1[k] * wi;
                let t1i = r1[k] * wi + i1[k] * wr;
                let t3r = r3[k] * wr - i3[k] * wi;
                let t3i = r3[k] * wi + i3[k] * wr;
                let (a0r, a0i) = (r0[k] + t1r, i0[k] + t1i);
                let (a1r, a1i) = (r0[k] - t1r, i0[k] - t1i);
                let (a2r, a2i) = (r2[k] + t3r, i2[k] + t3i);
                let (a3r, a3i) = (r2[k] - t3r, i2[k] - t3i);

                let (vr, vi) = (w2r[k], w2i[k]);
                let t2r = a2r * vr - a2i * vi;
                let t2i = a2r * vi + a2i * vr;
                let (ur, ui) = (w2r[k + h], w2i[k + h]);
                let t4r = a3r * ur - a3i * ui;
                let t4i = a3r * ui + a3i * ur;
                r0[k] = a0r + t2r;
                i0[k] = a0i + t2i;
                r2[k] = a0r - t2r;
                i2[k] = a0i - t2i;
                r1[k] = a1r + t4r;
                i1[k] = a1i + t4i;
                r3[k] = a1r - t4r;
                i3[k] = a1i - t4i;
            }
        }
    }

    fn stage(&self, re: &mut [f64], im: &mut [f64], half: usize) {
        let wr = &self.cos[half - 1..2 * half - 1];
        let wi = &self.sin[half - 1..2 * half - 1];
        for (r, i) in re.chunks_exact_mut(2 * half).zip(im.chunks_exact_mut(2 * half)) {
            let (ar, br) = r.split_at_mut(half);
            let (ai, bi) = i.split_at_mut(half);
            for k in 0..half {
                let tr = br[k] * wr[k] - bi[k] * wi[k];
                let ti = br[k] * wi[k] + bi[k] * wr[k];
                br[k] = ar[k] - tr;
                bi[k] = ai[k] - ti;
                ar[k] += tr;
                ai[k] += ti;
            }
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<FftPlan>>> = RefCell::new(HashMap::new());
}

/// Cached plan for length `n` (per thread).
pub fn plan(n: usize) -> Result<Rc<FftPlan>> {
    if let Some(p) = PLANS.with(|c| c.borrow().get(&n).cloned()) {
        return Ok(p);
    }
    let p = Rc::new(FftPlan::new(n)?);
    PLANS.with(|c| c.borrow_mut().insert(n, p.clone()));
    Ok(p)
}

fn padded_planes(x: &ComplexArray, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if !matches!(x.shape(), Shape::Vector(_)) {
        return Err(Error::dim("FFT input must be a vector"));
    }
    if n < x.len() {
        return Err(Error::arg(format!(
            "FFT length {n} shorter than input length {}",
            x.len()
        )));
    }
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    re[..x.len()].copy_from_slice(x.re());
    im[..x.len()].copy_from_slice(x.im());
    Ok((re, im))
}

/// `n`-point DFT of `x`, zero-padded to `n` (a power of two).
pub fn fft(x: &ComplexArray, n: usize) -> Result<ComplexArray> {
    let p = plan(n)?;
    let (mut re, mut im) = padded_planes(x, n)?;
    p.forward(&mut re, &mut im);
    ComplexArray::vector(re, im)
}

/// `n`-point inverse DFT (with `1/n` scaling).
pub fn ifft(x: &ComplexArray, n: usize) -> Result<ComplexArray> {
    let p = plan(n)?;
    let (mut re, mut im) = padded_planes(x, n)?;
    p.inverse(&mut re, &mut im);
    ComplexArray::vector(re, im)
}

/// Generator of an `M x M` Toeplitz matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzVec {
    h: ComplexArray,
    m: usize,
}

impl ToeplitzVec {
    pub fn new(h: ComplexArray, m: usize) -> Result<Self> {
        if m == 0 || h.shape() != Shape::Vector(2 * m - 1) {
            return Err(Error::dim(format!(
                "Toeplitz generator for M={m} needs length {}, got {:?}",
                (2 * m).saturating_sub(1),
                h.shape()
            )));
        }
        Ok(Self { h, m })
    }

    pub fn zeros(m: usize) -> Self {
        Self {
            h: ComplexArray::zeros_vec(2 * m - 1),
            m,
        }
    }

    /// Generator with `h_d = f(d)`.
    pub fn from_fn(m: usize, mut f: impl FnMut(isize) -> Complex64) -> Self {
        let mut t = Self::zeros(m);
        for p in 0..2 * m - 1 {
            t.h.set(p, f(p as isize - (m as isize - 1)));
        }
        t
    }

    /// Kernel with a single unit tap at offset 0.
    pub fn identity(m: usize) -> Self {
        Self::from_fn(m, |d| {
            if d == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn coef(&self, d: isize) -> Complex64 {
        self.h.get((d + self.m as isize - 1) as usize)
    }

    pub fn as_array(&self) -> &ComplexArray {
        &self.h
    }

    pub fn as_array_mut(&mut self) -> &mut ComplexArray {
        &mut self.h
    }

    pub fn into_array(self) -> ComplexArray {
        self.h
    }

    /// Generator of the adjoint matrix, `h'_d = conj(h_{-d})`.
    pub fn adjoint(&self) -> Self {
        let n = self.h.len();
        let mut out = Self::zeros(self.m);
        for p in 0..n {
            out.h.set(p, self.h.get(n - 1 - p).conj());
        }
        out
    }

    /// Reads the generator off the first column and first row of a dense
    /// matrix.
    pub fn from_dense(w: &ComplexArray) -> Result<Self> {
        let m = w.rows();
        if m == 0 || w.shape() != Shape::Matrix(m, m) {
            return Err(Error::dim("expected a nonempty square matrix"));
        }
        Ok(Self::from_fn(m, |d| {
            if d >= 0 {
                w.at(d as usize, 0)
            } else {
                w.at(0, (-d) as usize)
            }
        }))
    }
}

/// Generator of an `(M1 M2) x (M1 M2)` doubly-block-Toeplitz matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ToeplitzMat2D {
    h: ComplexArray,
    m1: usize,
    m2: usize,
}

impl ToeplitzMat2D {
    pub fn new(h: ComplexArray, m1: usize, m2: usize) -> Result<Self> {
        if m1 == 0 || m2 == 0 || h.shape() != Shape::Matrix(2 * m1 - 1, 2 * m2 - 1) {
            return Err(Error::dim(format!(
                "2D Toeplitz generator for ({m1}, {m2}) has shape {:?}",
                h.shape()
            )));
        }
        Ok(Self { h, m1, m2 })
    }

    pub fn zeros(m1: usize, m2: usize) -> Self {
        Self {
            h: ComplexArray::zeros(2 * m1 - 1, 2 * m2 - 1),
            m1,
            m2,
        }
    }

    pub fn from_fn(m1: usize, m2: usize, mut f: impl FnMut(isize, isize) -> Complex64) -> Self {
        let mut t = Self::zeros(m1, m2);
        for p in 0..2 * m1 - 1 {
            for q in 0..2 * m2 - 1 {
                let v = f(p as isize - (m1 as isize - 1), q as isize - (m2 as isize - 1));
                t.h.set_at(p, q, v);
            }
        }
        t
    }

    pub fn identity(m1: usize, m2: usize) -> Self {
        Self::from_fn(m1, m2, |a, b| {
            if a == 0 && b == 0 {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub fn m1(&self) -> usize {
        self.m1
    }

    pub fn m2(&self) -> usize {
        self.m2
    }

    pub fn coef(&self, a: isize, b: isize) -> Complex64 {
        self.h.at(
            (a + self.m1 as isize - 1) as usize,
            (b + self.m2 as isize - 1) as usize,
        )
    }

    pub fn as_array(&self) -> &ComplexArray {
        &self.h
    }

    pub fn as_array_mut(&mut self) -> &mut ComplexArray {
        &mut self.h
    }

    pub fn into_array(self) -> ComplexArray {
        self.h
    }

    /// Generator of the adjoint, `h'_{a,b} = conj(h_{-a,-b})`.
    pub fn adjoint(&self) -> Self {
        let (r, c) = (2 * self.m1 - 1, 2 * self.m2 - 1);
        let mut out = Self::zeros(self.m1, self.m2);
        for p in 0..r {
            for q in 0..c {
                out.h.set_at(p, q, self.h.at(r - 1 - p, c - 1 - q).conj());
            }
        }
        out
    }

    /// Reads the generator off a dense doubly-block-Toeplitz matrix.
    pub fn from_dense(w: &ComplexArray, m1: usize, m2: usize) -> Result<Self> {
        let m = m1 * m2;
        if m == 0 || w.shape() != Shape::Matrix(m, m) {
            return Err(Error::dim(format!(
                "expected a {m}x{m} matrix, got {:?}",
                w.shape()
            )));
        }
        Ok(Self::from_fn(m1, m2, |a, b| {
            let (s, i) = if a >= 0 { (a as usize, 0) } else { (0, (-a) as usize) };
            let (t, j) = if b >= 0 { (b as usize, 0) } else { (0, (-b) as usize) };
            w.at(s * m2 + t, i * m2 + j)
        }))
    }
}

/// Dense `M x M` matrix with `[W]_{i,k} = h_{i-k}`.
pub fn toeplitz_expand(t: &ToeplitzVec) -> ComplexArray {
    let m = t.m();
    ComplexArray::from_fn(m, m, |i, k| t.coef(i as isize - k as isize))
}

/// Dense doubly-block-Toeplitz matrix `T(H)`: an `M1 x M1` block-Toeplitz
/// arrangement of `M2 x M2` Toeplitz blocks, `[T]_{s*M2+t, i*M2+j} = h_{s-i,t-j}`.
pub fn dbt_expand(t: &ToeplitzMat2D) -> ComplexArray {
    let (m1, m2) = (t.m1(), t.m2());
    let m = m1 * m2;
    ComplexArray::from_fn(m, m, |row, col| {
        let (s, tt) = (row / m2, row % m2);
        let (i, j) = (col / m2, col % m2);
        t.coef(s as isize - i as isize, tt as isize - j as isize)
    })
}

fn check_vec_len(x: &ComplexArray, n: usize, what: &str) -> Result<()> {
    if x.shape() != Shape::Vector(n) {
        return Err(Error::dim(format!(
            "{what}: expected vector of length {n}, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// `[h * x]_i = sum_k h_{i-k} x_k` for `i = 0..M`, by direct summation.
pub fn conv1d(t: &ToeplitzVec, x: &ComplexArray) -> Result<ComplexArray> {
    let m = t.m();
    check_vec_len(x, m, "conv1d")?;
    let full = full_convolve_direct(t.as_array(), x);
    Ok(crop(&full, m - 1, m))
}

/// Same contract as [`conv1d`], evaluated with FFTs of length
/// `next_pow2(3M - 2)` so the circular product equals the linear one.
pub fn conv1d_fft(t: &ToeplitzVec, x: &ComplexArray) -> Result<ComplexArray> {
    let m = t.m();
    check_vec_len(x, m, "conv1d_fft")?;
    let full = full_convolve_fft(t.as_array(), x);
    Ok(crop(&full, m - 1, m))
}

/// Cached transform of a Toeplitz generator for repeated products.
///
/// Only outputs `M-1..2M-1` of the full convolution are kept, and those are
/// free of wrap-around once the circular length reaches `2M - 1`, so the
/// transforms are half the size [`conv1d_fft`] uses.
#[derive(Clone, Debug)]
pub struct ToeplitzPlan {
    m: usize,
    plan: Rc<FftPlan>,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl ToeplitzPlan {
    pub fn new(t: &ToeplitzVec) -> Self {
        let m = t.m();
        let n = (2 * m - 1).next_power_of_two();
        let plan = plan(n).expect("power of two");
        let (mut re, mut im) = padded_planes(t.as_array(), n).expect("vector generator");
        plan.forward(&mut re, &mut im);
        Self { m, plan, re, im }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Same result as [`conv1d`]; panics if `x` has the wrong length.
    pub fn apply(&self, x: &ComplexArray) -> ComplexArray {
        assert_eq!(x.len(), self.m, "ToeplitzPlan::apply length");
        let n = self.re.len();
        let (mut xr, mut xi) = padded_planes(x, n).expect("vector input");
        self.plan.forward(&mut xr, &mut xi);
        for k in 0..n {
            let (hr, hi) = (self.re[k], self.im[k]);
            let r = hr * xr[k] - hi * xi[k];
            xi[k] = hr * xi[k] + hi * xr[k];
            xr[k] = r;
        }
        self.plan.inverse(&mut xr, &mut xi);
        let range = self.m - 1..2 * self.m - 1;
        ComplexArray::vector(xr[range.clone()].to_vec(), xi[range].to_vec()).expect("equal plane lengths")
    }
}

/// Crops `len` entries starting at `offset` out of a vector.
fn crop(full: &ComplexArray, offset: usize, len: usize) -> ComplexArray {
    ComplexArray::vector(
        full.re()[offset..offset + len].to_vec(),
        full.im()[offset..offset + len].to_vec(),
    )
    .expect("equal plane lengths")
}

/// Full linear convolution of two vectors, length `a + b - 1`.
pub fn full_convolve_direct(a: &ComplexArray, b: &ComplexArray) -> ComplexArray {
    if a.is_empty() || b.is_empty() {
        return ComplexArray::zeros_vec(0);
    }
    let n = a.len() + b.len() - 1;
    let (ar, ai, br, bi) = (a.re(), a.im(), b.re(), b.im());
    let mut re = vec![0.0; n];
    let mut im = vec![0.0; n];
    for k in 0..b.len() {
        let (xr, xi) = (br[k], bi[k]);
        if xr == 0.0 && xi == 0.0 {
            continue;
        }
        for p in 0..a.len() {
            re[p + k] += ar[p] * xr - ai[p] * xi;
            im[p + k] += ar[p] * xi + ai[p] * xr;
        }
    }
    ComplexArray::vector(re, im).expect("equal plane lengths")
}

/// Full linear convolution through zero-padded FFTs.
pub fn full_convolve_fft(a: &ComplexArray, b: &ComplexArray) -> ComplexArray {
    if a.is_empty() || b.is_empty() {
        return ComplexArray::zeros_vec(0);
    }
    let len = a.len() + b.len() - 1;
    let n = len.next_power_of_two();
    let p = plan(n).expect("power of two");
    let (mut ar, mut ai) = padded_planes(a, n).expect("vector input");
    let (mut br, mut bi) = padded_planes(b, n).expect("vector input");
    p.forward(&mut ar, &mut ai);
    p.forward(&mut br, &mut bi);
    for k in 0..n {
        let (r, i) = (ar[k] * br[k] - ai[k] * bi[k], ar[k] * bi[k] + ai[k] * br[k]);
        ar[k] = r;
        ai[k] = i;
    }
    p.inverse(&mut ar, &mut ai);
    ar.truncate(len);
    ai.truncate(len);
    ComplexArray::vector(ar, ai).expect("equal plane lengths")
}

/// Direct summation for small problems, FFT otherwise.
pub fn full_convolve(a: &ComplexArray, b: &ComplexArray) -> ComplexArray {
    if a.len().min(b.len()) <= 32 {
        full_convolve_direct(a, b)
    } else {
        full_convolve_fft(a, b)
    }
}

/// Convolution with a rectangular Toeplitz kernel.
///
/// `kernel` has length `out_len + x.len() - 1` and position `p` holds offset
/// `d = p - (x.len() - 1)`; the result is `out_i = sum_k e_{i-k} x_k` for
/// `i = 0..out_len`. With `out_len = x.len()` this is [`conv1d`].
pub fn rect_conv(kernel: &ComplexArray, x: &ComplexArray, out_len: usize) -> Result<ComplexArray> {
    let n = x.len();
    if n == 0 || out_len == 0 {
        return Err(Error::dim("rect_conv on empty operands"));
    }
    check_vec_len(kernel, out_len + n - 1, "rect_conv kernel")?;
    let full = full_convolve(kernel, x);
    Ok(crop(&full, n - 1, out_len))
}

/// Adjoint of [`rect_conv`] with respect to `x`: `sum_i conj(e_{i-k}) g_i`.
pub fn rect_conv_adjoint(kernel: &ComplexArray, g: &ComplexArray, in_len: usize) -> Result<ComplexArray> {
    let out_len = g.len();
    if in_len == 0 || out_len == 0 {
        return Err(Error::dim("rect_conv_adjoint on empty operands"));
    }
    check_vec_len(kernel, out_len + in_len - 1, "rect_conv_adjoint kernel")?;
    let flipped = reversed_conj(kernel);
    let full = full_convolve(&flipped, g);
    Ok(crop(&full, out_len - 1, in_len))
}

/// Gradient of `Re<g, rect_conv(e, x)>` with respect to the kernel planes,
/// packed as `dRe + j dIm`: the full cross-correlation `sum_k g_{p+k-(n-1)} conj(x_k)`.
pub fn rect_kernel_gradient(g: &ComplexArray, x: &ComplexArray) -> ComplexArray {
    full_convolve(g, &reversed_conj(x))
}

fn reversed_conj(x: &ComplexArray) -> ComplexArray {
    let n = x.len();
    let mut out = ComplexArray::zeros_vec(n);
    for p in 0..n {
        out.set(p, x.get(n - 1 - p).conj());
    }
    out
}

fn check_grid(x: &ComplexArray, m1: usize, m2: usize, what: &str) -> Result<()> {
    if x.shape() != Shape::Matrix(m1, m2) {
        return Err(Error::dim(format!(
            "{what}: expected {m1}x{m2} grid, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}

/// `[H * X]_{s,t} = sum_{i,j} h_{s-i,t-j} x_{i,j}` by direct summation.
pub fn conv2d(t: &ToeplitzMat2D, x: &ComplexArray) -> Result<ComplexArray> {
    let (m1, m2) = (t.m1(), t.m2());
    check_grid(x, m1, m2, "conv2d")?;
    let mut out = ComplexArray::zeros(m1, m2);
    for i in 0..m1 {
        for j in 0..m2 {
            let xv = x.at(i, j);
            if xv.re == 0.0 && xv.im == 0.0 {
                continue;
            }
            for s in 0..m1 {
                for tt in 0..m2 {
                    let h = t.coef(s as isize - i as isize, tt as isize - j as isize);
                    let cur = out.at(s, tt);
                    out.set_at(s, tt, cur + h * xv);
                }
            }
        }
    }
    Ok(out)
}

/// Same contract as [`conv2d`], evaluated with a 2D FFT of the zero-padded
/// planes.
pub fn conv2d_fft(t: &ToeplitzMat2D, x: &ComplexArray) -> Result<ComplexArray> {
    let (m1, m2) = (t.m1(), t.m2());
    check_grid(x, m1, m2, "conv2d_fft")?;
    let full = full_convolve_2d_fft(t.as_array(), x);
    Ok(crop_2d(&full, m1 - 1, m2 - 1, m1, m2))
}

fn crop_2d(full: &ComplexArray, r0: usize, c0: usize, rows: usize, cols: usize) -> ComplexArray {
    ComplexArray::from_fn(rows, cols, |s, t| full.at(r0 + s, c0 + t))
}

/// Full 2D linear convolution of two matrices.
pub fn full_convolve_2d_direct(a: &ComplexArray, b: &ComplexArray) -> ComplexArray {
    let (ar, ac, br, bc) = (a.rows(), a.cols(), b.rows(), b.cols());
    let mut out = ComplexArray::zeros(ar + br - 1, ac + bc - 1);
    let oc = ac + bc - 1;
    for i in 0..br {
        for j in 0..bc {
            let bv = b.at(i, j);
            if bv.re == 0.0 && bv.im == 0.0 {
                continue;
            }
            for p in 0..ar {
                for q in 0..ac {
                    let idx = (p + i) * oc + q + j;
                    let v = out.get(idx) + a.at(p, q) * bv;
                    out.set(idx, v);
                }
            }
        }
    }
    out
}

/// Full 2D linear convolution through row/column radix-2 FFTs.
pub fn full_convolve_2d_fft(a: &ComplexArray, b: &ComplexArray) -> ComplexArray {
    let rows = a.rows() + b.rows() - 1;
    let cols = a.cols() + b.cols() - 1;
    let (n1, n2) = (rows.next_power_of_two(), cols.next_power_of_two());
    let mut fa = pad_2d(a, n1, n2);
    let mut fb = pad_2d(b, n1, n2);
    fft_2d(&mut fa, n1, n2, false);
    fft_2d(&mut fb, n1, n2, false);
    let (ar, ai) = fa.planes_mut();
    for k in 0..n1 * n2 {
        let (br, bi) = (fb.re()[k], fb.im()[k]);
        let r = ar[k] * br - ai[k] * bi;
        let i = ar[k] * bi + ai[k] * br;
        ar[k] = r;
        ai[k] = i;
    }
    fft_2d(&mut fa, n1, n2, true);
    crop_2d(&fa, 0, 0, rows, cols)
}

/// Direct summation for small problems, FFT otherwise.
pub fn full_convolve_2d(a: &ComplexArray, b: &ComplexArray) -> ComplexArray {
    if a.len().min(b.len()) <= 16 {
        full_convolve_2d_direct(a, b)
    } else {
        full_convolve_2d_fft(a, b)
    }
}

fn pad_2d(x: &ComplexArray, n1: usize, n2: usize) -> ComplexArray {
    let mut out = ComplexArray::zeros(n1, n2);
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            out.set_at(i, j, x.at(i, j));
        }
    }
    out
}

fn fft_2d(x: &mut ComplexArray, n1: usize, n2: usize, inverse: bool) {
    let prow = plan(n2).expect("power of two");
    let pcol = plan(n1).expect("power of two");
    {
        let (re, im) = x.planes_mut();
        for r in 0..n1 {
            let (rr, ri) = (&mut re[r * n2..(r + 1) * n2], &mut im[r * n2..(r + 1) * n2]);
            if inverse {
                prow.inverse(rr, ri);
            } else {
                prow.forward(rr, ri);
            }
        }
    }
    let mut cr = vec![0.0; n1];
    let mut ci = vec![0.0; n1];
    let (re, im) = x.planes_mut();
    for c in 0..n2 {
        for r in 0..n1 {
            cr[r] = re[r * n2 + c];
            ci[r] = im[r * n2 + c];
        }
        if inverse {
            pcol.inverse(&mut cr, &mut ci);
        } else {
            pcol.forward(&mut cr, &mut ci);
        }
        for r in 0..n1 {
            re[r * n2 + c] = cr[r];
            im[r * n2 + c] = ci[r];
        }
    }
}

/// Convolution used on the network hot path: picks direct or FFT evaluation.
pub(crate) fn conv2d_auto(t: &ToeplitzMat2D, x: &ComplexArray) -> ComplexArray {
    let (m1, m2) = (t.m1(), t.m2());
    let full = full_convolve_2d(t.as_array(), x);
    crop_2d(&full, m1 - 1, m2 - 1, m1, m2)
}

/// Gradient of `Re<G, conv2d(H, X)>` with respect to the generator planes of
/// `H`, packed as `dRe + j dIm`.
pub fn kernel_gradient_2d(g: &ComplexArray, x: &ComplexArray) -> ComplexArray {
    let (r, c) = (x.rows(), x.cols());
    let flipped = ComplexArray::from_fn(r, c, |i, j| x.at(r - 1 - i, c - 1 - j).conj());
    full_convolve_2d(g, &flipped)
}
