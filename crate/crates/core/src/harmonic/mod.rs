//! Sensing model for on-grid sparse harmonic retrieval.
//!
//! A 1D problem observes `N` of the `M` Nyquist samples of a sum of complex
//! sinusoids, `y = R F_M x`. A 2D problem observes `N` samples of an
//! `M1 x M2` grid, `y = R (F_{M1} (x) F_{M2}) x`, with grid index
//! `m1 * M2 + m2` for both samples and frequencies.

mod dataset;

pub use dataset::{gen_dataset, Dataset, DatasetMeta};

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::complex::{matvec_adjoint_into, matvec_into, ComplexArray, Shape};
use crate::error::{Error, Result};
use crate::rng::{seeded, Rng};
use crate::spectral::{ToeplitzMat2D, ToeplitzVec};

/// Grid geometry of a problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GridKind {
    #[serde(rename = "1d")]
    OneD { m: usize },
    #[serde(rename = "2d")]
    TwoD { m1: usize, m2: usize },
}

impl GridKind {
    /// Number of grid points (`M` or `M1 * M2`).
    pub fn size(&self) -> usize {
        match *self {
            GridKind::OneD { m } => m,
            GridKind::TwoD { m1, m2 } => m1 * m2,
        }
    }

    pub fn tag(&self) -> u32 {
        match self {
            GridKind::OneD { .. } => 1,
            GridKind::TwoD { .. } => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.size() == 0 {
            return Err(Error::arg(format!("empty grid {self:?}")));
        }
        Ok(())
    }

    /// Splits a flat grid index into per-axis coordinates.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        match *self {
            GridKind::OneD { .. } => (index, 0),
            GridKind::TwoD { m2, .. } => (index / m2, index % m2),
        }
    }

    /// Distance in grid cells, taken per axis on the periodic frequency grid
    /// and combined with max().
    pub fn cell_distance(&self, a: usize, b: usize) -> usize {
        fn circ(a: usize, b: usize, n: usize) -> usize {
            let d = a.abs_diff(b);
            d.min(n - d)
        }
        match *self {
            GridKind::OneD { m } => circ(a, b, m),
            GridKind::TwoD { m1, m2 } => {
                let (a1, a2) = self.coords(a);
                let (b1, b2) = self.coords(b);
                circ(a1, b1, m1).max(circ(a2, b2, m2))
            }
        }
    }
}

/// `e^{j 2 pi num / den}` with the numerator reduced first.
fn unit_phase(num: usize, den: usize) -> Complex64 {
    let r = (num % den) as f64 / den as f64;
    Complex64::from_polar(1.0, 2.0 * PI * r)
}

/// Unnormalised DFT matrix, `[F_M]_{i,m} = e^{j 2 pi i m / M}`.
pub fn fourier_matrix(m: usize) -> Result<ComplexArray> {
    if m == 0 {
        return Err(Error::arg("Fourier matrix of size 0"));
    }
    Ok(ComplexArray::from_fn(m, m, |i, k| unit_phase(i * k, m)))
}

/// Observed sample indices, sorted ascending.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingSet {
    omega: Vec<usize>,
    total: usize,
    seed: Option<u64>,
}

impl SamplingSet {
    /// Explicit index set (e.g. read from an IQ file).
    pub fn from_indices(mut omega: Vec<usize>, total: usize) -> Result<Self> {
        omega.sort_unstable();
        if omega.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::arg("sampling indices must be distinct"));
        }
        if let Some(&last) = omega.last() {
            if last >= total {
                return Err(Error::arg(format!(
                    "sampling index {last} outside grid of size {total}"
                )));
            }
        }
        Ok(Self {
            omega,
            total,
            seed: None,
        })
    }

    /// Records the seed the indices were drawn with.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn indices(&self) -> &[usize] {
        &self.omega
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    pub fn total(&self) -> usize {
        self.total
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }
}

/// `N` distinct indices drawn uniformly without replacement from `0..M`.
pub fn draw_sampling(m: usize, n: usize, seed: u64) -> Result<SamplingSet> {
    if n > m {
        return Err(Error::arg(format!("cannot draw {n} samples out of {m}")));
    }
    let mut rng = seeded(seed);
    let mut omega = rand::seq::index::sample(&mut rng, m, n).into_vec();
    omega.sort_unstable();
    Ok(SamplingSet {
        omega,
        total: m,
        seed: Some(seed),
    })
}

/// Forward and adjoint application of a sensing matrix.
pub trait SensingOperator: Sync {
    /// Number of observations `N`.
    fn rows(&self) -> usize;
    /// Number of grid points `M`.
    fn cols(&self) -> usize;
    fn apply(&self, x: &ComplexArray) -> ComplexArray;
    fn apply_adjoint(&self, r: &ComplexArray) -> ComplexArray;
}

/// Partial Fourier dictionary with its rows materialised.
#[derive(Clone, Debug, PartialEq)]
pub struct Dictionary {
    kind: GridKind,
    sampling: SamplingSet,
    phi: ComplexArray,
}

/// Row `omega` of the full (Kronecker-)Fourier matrix, evaluated at `col`.
fn fourier_entry(kind: GridKind, omega: usize, col: usize) -> Complex64 {
    match kind {
        GridKind::OneD { m } => unit_phase(omega * col, m),
        GridKind::TwoD { m1, m2 } => {
            let (i1, i2) = (omega / m2, omega % m2);
            let (k1, k2) = (col / m2, col % m2);
            unit_phase(i1 * k1, m1) * unit_phase(i2 * k2, m2)
        }
    }
}

pub fn build_dictionary(kind: GridKind, sampling: SamplingSet) -> Result<Dictionary> {
    kind.validate()?;
    if sampling.total() != kind.size() {
        return Err(Error::dim(format!(
            "sampling over {} points does not match grid {kind:?}",
            sampling.total()
        )));
    }
    let m = kind.size();
    let omega = sampling.indices().to_vec();
    let phi = ComplexArray::from_fn(omega.len(), m, |n, col| fourier_entry(kind, omega[n], col));
    Ok(Dictionary {
        kind,
        sampling,
        phi,
    })
}

impl Dictionary {
    /// Convenience: random sampling plus construction.
    pub fn random(kind: GridKind, n: usize, seed: u64) -> Result<Self> {
        kind.validate()?;
        build_dictionary(kind, draw_sampling(kind.size(), n, seed)?)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn sampling(&self) -> &SamplingSet {
        &self.sampling
    }

    pub fn phi(&self) -> &ComplexArray {
        &self.phi
    }

    /// Number of observations.
    pub fn n(&self) -> usize {
        self.phi.rows()
    }

    /// Number of grid points.
    pub fn m(&self) -> usize {
        self.phi.cols()
    }
}

impl SensingOperator for Dictionary {
    fn rows(&self) -> usize {
        self.n()
    }

    fn cols(&self) -> usize {
        self.m()
    }

    fn apply(&self, x: &ComplexArray) -> ComplexArray {
        let mut out = ComplexArray::zeros_vec(self.n());
        matvec_into(&self.phi, x, &mut out);
        out
    }

    fn apply_adjoint(&self, r: &ComplexArray) -> ComplexArray {
        let mut out = ComplexArray::zeros_vec(self.m());
        matvec_adjoint_into(&self.phi, r, &mut out);
        out
    }
}

/// Matrix-free partial Fourier operator: rows are generated on the fly from
/// per-axis twiddle tables, so memory is `O(M1 + M2 + N)`.
#[derive(Clone, Debug)]
pub struct MatrixFreeFourier {
    kind: GridKind,
    omega: Vec<usize>,
    tw1: Vec<Complex64>,
    tw2: Vec<Complex64>,
}

impl MatrixFreeFourier {
    pub fn new(kind: GridKind, sampling: &SamplingSet) -> Result<Self> {
        kind.validate()?;
        if sampling.total() != kind.size() {
            return Err(Error::dim("sampling does not match grid"));
        }
        let table = |n: usize| (0..n).map(|k| unit_phase(k, n)).collect::<Vec<_>>();
        let (tw1, tw2) = match kind {
            GridKind::OneD { m } => (table(m), vec![Complex64::new(1.0, 0.0)]),
            GridKind::TwoD { m1, m2 } => (table(m1), table(m2)),
        };
        Ok(Self {
            kind,
            omega: sampling.indices().to_vec(),
            tw1,
            tw2,
        })
    }

    #[inline]
    fn entry(&self, omega: usize, col: usize) -> Complex64 {
        match self.kind {
            GridKind::OneD { m } => self.tw1[(omega * col) % m],
            GridKind::TwoD { m1, m2 } => {
                let (i1, i2) = (omega / m2, omega % m2);
                let (k1, k2) = (col / m2, col % m2);
                self.tw1[(i1 * k1) % m1] * self.tw2[(i2 * k2) % m2]
            }
        }
    }
}

impl SensingOperator for MatrixFreeFourier {
    fn rows(&self) -> usize {
        self.omega.len()
    }

    fn cols(&self) -> usize {
        self.kind.size()
    }

    fn apply(&self, x: &ComplexArray) -> ComplexArray {
        let mut out = ComplexArray::zeros_vec(self.rows());
        for (n, &w) in self.omega.iter().enumerate() {
            let mut acc = Complex64::new(0.0, 0.0);
            for col in 0..self.cols() {
                acc += self.entry(w, col) * x.get(col);
            }
            out.set(n, acc);
        }
        out
    }

    fn apply_adjoint(&self, r: &ComplexArray) -> ComplexArray {
        let mut out = ComplexArray::zeros_vec(self.cols());
        for col in 0..self.cols() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (n, &w) in self.omega.iter().enumerate() {
                acc += self.entry(w, col).conj() * r.get(n);
            }
            out.set(col, acc);
        }
        out
    }
}

/// Dense Gram matrix `Phi^H Phi`.
pub fn gram(d: &Dictionary) -> ComplexArray {
    d.phi.adjoint().matmul(&d.phi).expect("conformable")
}

/// Generator of the 1D Gram matrix, `g_d = sum_{w in Omega} e^{-j 2 pi w d / M}`,
/// computed without forming the matrix.
pub fn gram_generator_1d(d: &Dictionary) -> Result<ToeplitzVec> {
    let GridKind::OneD { m } = d.kind else {
        return Err(Error::dim("1D Gram generator requested for a 2D dictionary"));
    };
    let omega = d.sampling.indices();
    Ok(ToeplitzVec::from_fn(m, |k| {
        let k = k.rem_euclid(m as isize) as usize;
        omega.iter().map(|&w| unit_phase(w * k, m).conj()).sum()
    }))
}

/// Generator of the 2D Gram matrix, `g_{a,b} = sum e^{-j 2 pi (w1 a / M1 + w2 b / M2)}`.
pub fn gram_generator_2d(d: &Dictionary) -> Result<ToeplitzMat2D> {
    let GridKind::TwoD { m1, m2 } = d.kind else {
        return Err(Error::dim("2D Gram generator requested for a 1D dictionary"));
    };
    let omega = d.sampling.indices();
    Ok(ToeplitzMat2D::from_fn(m1, m2, |a, b| {
        let a = a.rem_euclid(m1 as isize) as usize;
        let b = b.rem_euclid(m2 as isize) as usize;
        omega
            .iter()
            .map(|&w| (unit_phase((w / m2) * a, m1) * unit_phase((w % m2) * b, m2)).conj())
            .sum()
    }))
}

/// Circularly symmetric complex Gaussian with `E|a|^2 = 1`.
fn unit_gaussian(rng: &mut Rng) -> Complex64 {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    Complex64::new(rng.sample::<f64, _>(StandardNormal) * s, rng.sample::<f64, _>(StandardNormal) * s)
}

/// Exactly `K` nonzeros at uniform distinct positions with unit-power complex
/// Gaussian amplitudes. Returns the vector and its sorted support.
pub fn sparse_signal_with(m: usize, k: usize, rng: &mut Rng) -> Result<(ComplexArray, Vec<usize>)> {
    if k > m {
        return Err(Error::arg(format!("sparsity {k} exceeds length {m}")));
    }
    let mut support = rand::seq::index::sample(rng, m, k).into_vec();
    support.sort_unstable();
    let mut x = ComplexArray::zeros_vec(m);
    for &p in &support {
        let mut a = unit_gaussian(rng);
        // A draw of exactly zero would break the K-sparse invariant.
        while a.norm_sqr() == 0.0 {
            a = unit_gaussian(rng);
        }
        x.set(p, a);
    }
    Ok((x, support))
}

pub fn gen_sparse_signal(m: usize, k: usize, seed: u64) -> Result<ComplexArray> {
    Ok(sparse_signal_with(m, k, &mut seeded(seed))?.0)
}

/// Samples of `sum_k a_k e^{j 2 pi f_k i}` at the observed indices, with
/// `f_k = (m_k + frac) / M`. In 2D the offset is applied along the second axis
/// only. `frac = 0` reproduces `Phi x`.
pub fn synth_offgrid(
    d: &Dictionary,
    grid_indices: &[usize],
    frac: f64,
    amps: &ComplexArray,
) -> Result<ComplexArray> {
    if !(0.0..1.0).contains(&frac) {
        return Err(Error::arg(format!("off-grid fraction {frac} outside [0, 1)")));
    }
    if amps.len() != grid_indices.len() {
        return Err(Error::dim("one amplitude per grid index required"));
    }
    let m = d.m();
    if let Some(&bad) = grid_indices.iter().find(|&&g| g >= m) {
        return Err(Error::arg(format!("grid index {bad} outside 0..{m}")));
    }
    let omega = d.sampling.indices();
    let mut y = ComplexArray::zeros_vec(omega.len());
    for (n, &w) in omega.iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, &g) in grid_indices.iter().enumerate() {
            let phase = match d.kind {
                GridKind::OneD { m } => {
                    unit_phase(w * g, m) * Complex64::from_polar(1.0, 2.0 * PI * frac * w as f64 / m as f64)
                }
                GridKind::TwoD { m1, m2 } => {
                    let (i1, i2) = (w / m2, w % m2);
                    let (g1, g2) = (g / m2, g % m2);
                    unit_phase(i1 * g1, m1)
                        * unit_phase(i2 * g2, m2)
                        * Complex64::from_polar(1.0, 2.0 * PI * frac * i2 as f64 / m2 as f64)
                }
            };
            acc += amps.get(k) * phase;
        }
        y.set(n, acc);
    }
    Ok(y)
}

pub fn noise_with(y: &ComplexArray, sigma2: f64, rng: &mut Rng) -> Result<ComplexArray> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::arg(format!("noise power must be >= 0, got {sigma2}")));
    }
    let mut out = y.clone();
    if sigma2 == 0.0 {
        return Ok(out);
    }
    let s = (sigma2 / 2.0).sqrt();
    let (re, im) = out.planes_mut();
    for i in 0..re.len() {
        re[i] += s * rng.sample::<f64, _>(StandardNormal);
        im[i] += s * rng.sample::<f64, _>(StandardNormal);
    }
    Ok(out)
}

/// Adds circularly symmetric complex Gaussian noise of total power `sigma2`
/// per entry.
pub fn add_noise(y: &ComplexArray, sigma2: f64, seed: u64) -> Result<ComplexArray> {
    noise_with(y, sigma2, &mut seeded(seed))
}

/// One synthetic recovery problem.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseInstance {
    /// On-grid spectrum; for off-grid instances the amplitudes sit at the
    /// grid index each sinusoid was offset from.
    pub x_true: ComplexArray,
    pub y: ComplexArray,
    pub support: Vec<usize>,
    pub k: usize,
    pub sigma2: f64,
    pub offgrid: Option<f64>,
    pub seed: u64,
}

impl SparseInstance {
    pub fn generate(d: &Dictionary, k: usize, sigma2: f64, offgrid: Option<f64>, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let (x_true, support) = sparse_signal_with(d.m(), k, &mut rng)?;
        let clean = match offgrid {
            Some(frac) if frac != 0.0 => {
                let amps = ComplexArray::from_complex(&support.iter().map(|&p| x_true.get(p)).collect::<Vec<_>>());
                synth_offgrid(d, &support, frac, &amps)?
            }
            _ => d.apply(&x_true),
        };
        let y = noise_with(&clean, sigma2, &mut rng)?;
        Ok(Self {
            x_true,
            y,
            support,
            k,
            sigma2,
            offgrid,
            seed,
        })
    }
}

/// Checks that `x` is a vector of length `m`.
pub(crate) fn expect_len(x: &ComplexArray, m: usize, what: &str) -> Result<()> {
    if x.shape() != Shape::Vector(m) {
        return Err(Error::dim(format!(
            "{what}: expected length {m}, got {:?}",
            x.shape()
        )));
    }
    Ok(())
}
