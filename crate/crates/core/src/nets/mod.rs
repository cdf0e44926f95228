//! Unfolded ISTA networks.
//!
//! Every layer computes `x <- S_theta(B y + G x)` starting from `x = 0`, where
//! the filter `B` and the mutual-inhibition operator `G` take one of these
//! forms:
//!
//! | architecture        | filter `B`                  | inhibition `G`                 |
//! |---------------------|-----------------------------|--------------------------------|
//! | LISTA               | dense `M x N`               | dense `M x M`                  |
//! | LISTA-Toeplitz 1D   | dense `M x N`               | 1D convolution, `2M-1` taps    |
//! | LISTA-Toeplitz 2D   | dense `M x N`               | 2D convolution, `(2M1-1)x(2M2-1)` |
//! | ConvLISTA           | convolution, `M+N-1` taps   | 1D or 2D convolution           |

mod adam;
mod estimate;
mod forward;
mod init;
mod io;
mod train;

pub use adam::AdamState;
pub use estimate::estimate_dictionary;
pub use forward::{soft_threshold_backward, Activations, PreparedNet};
pub use init::{init_network, ista_network};
pub use io::ModelSidecar;
pub use train::{backward, batch_gradient, loss_nmse, train, TrainConfig, TrainReport};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::complex::{ComplexArray, Shape, Threshold};
use crate::error::{Error, Result};
use crate::harmonic::GridKind;
use crate::spectral::{ToeplitzMat2D, ToeplitzVec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    Lista,
    #[serde(rename = "lista-toeplitz-1d")]
    Toeplitz1D,
    #[serde(rename = "lista-toeplitz-2d")]
    Toeplitz2D,
    #[serde(rename = "convlista")]
    ConvLista,
}

impl Arch {
    pub const ALL: [Arch; 4] = [Arch::Lista, Arch::Toeplitz1D, Arch::Toeplitz2D, Arch::ConvLista];

    pub fn tag(self) -> u32 {
        match self {
            Arch::Lista => 1,
            Arch::Toeplitz1D => 2,
            Arch::Toeplitz2D => 3,
            Arch::ConvLista => 4,
        }
    }

    pub fn from_tag(tag: u32) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag() == tag)
            .ok_or_else(|| Error::Format(format!("unknown architecture tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Lista => "lista",
            Arch::Toeplitz1D => "lista-toeplitz-1d",
            Arch::Toeplitz2D => "lista-toeplitz-2d",
            Arch::ConvLista => "convlista",
        }
    }

    /// Whether the architecture can be built on `grid`.
    pub fn supports(self, grid: GridKind) -> bool {
        !matches!(
            (self, grid),
            (Arch::Toeplitz1D, GridKind::TwoD { .. }) | (Arch::Toeplitz2D, GridKind::OneD { .. })
        )
    }

    /// The Toeplitz architecture matching a grid.
    pub fn toeplitz_for(grid: GridKind) -> Self {
        match grid {
            GridKind::OneD { .. } => Arch::Toeplitz1D,
            GridKind::TwoD { .. } => Arch::Toeplitz2D,
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::arg(format!("unknown architecture {s:?}")))
    }
}

/// Problem size shared by every layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub grid: GridKind,
    pub n: usize,
}

impl Dims {
    pub fn m(&self) -> usize {
        self.grid.size()
    }
}

/// Map from the observation to the layer bias.
#[derive(Clone, Debug, PartialEq)]
pub enum Filter {
    /// `M x N` matrix `W_e`.
    Dense(ComplexArray),
    /// Rectangular Toeplitz kernel of length `M + N - 1`; position `p` holds
    /// offset `p - (N - 1)` and the output is cropped to `0..M`.
    Conv(ComplexArray),
}

impl Filter {
    pub fn array(&self) -> &ComplexArray {
        match self {
            Filter::Dense(a) | Filter::Conv(a) => a,
        }
    }

    pub fn array_mut(&mut self) -> &mut ComplexArray {
        match self {
            Filter::Dense(a) | Filter::Conv(a) => a,
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Filter::Dense(a) => Filter::Dense(ComplexArray::zeros_like(a)),
            Filter::Conv(a) => Filter::Conv(ComplexArray::zeros_like(a)),
        }
    }
}

/// Map from the previous estimate to its contribution to the next one.
#[derive(Clone, Debug, PartialEq)]
pub enum Inhibition {
    Dense(ComplexArray),
    Toeplitz1D(ToeplitzVec),
    Toeplitz2D(ToeplitzMat2D),
}

impl Inhibition {
    pub fn array(&self) -> &ComplexArray {
        match self {
            Inhibition::Dense(a) => a,
            Inhibition::Toeplitz1D(t) => t.as_array(),
            Inhibition::Toeplitz2D(t) => t.as_array(),
        }
    }

    pub fn array_mut(&mut self) -> &mut ComplexArray {
        match self {
            Inhibition::Dense(a) => a,
            Inhibition::Toeplitz1D(t) => t.as_array_mut(),
            Inhibition::Toeplitz2D(t) => t.as_array_mut(),
        }
    }

    fn zeros_like(&self) -> Self {
        match self {
            Inhibition::Dense(a) => Inhibition::Dense(ComplexArray::zeros_like(a)),
            Inhibition::Toeplitz1D(t) => Inhibition::Toeplitz1D(ToeplitzVec::zeros(t.m())),
            Inhibition::Toeplitz2D(t) => Inhibition::Toeplitz2D(ToeplitzMat2D::zeros(t.m1(), t.m2())),
        }
    }

    /// Dense matrix of the operator.
    pub fn to_dense(&self) -> ComplexArray {
        match self {
            Inhibition::Dense(a) => a.clone(),
            Inhibition::Toeplitz1D(t) => crate::spectral::toeplitz_expand(t),
            Inhibition::Toeplitz2D(t) => crate::spectral::dbt_expand(t),
        }
    }
}

/// Learnable parameters of one layer. The same type carries gradients, in
/// which case `theta` may be negative.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub filter: Filter,
    pub inhibition: Inhibition,
    pub theta: f64,
}

impl LayerParams {
    pub fn threshold(&self) -> Result<Threshold> {
        Threshold::new(self.theta)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            filter: self.filter.zeros_like(),
            inhibition: self.inhibition.zeros_like(),
            theta: 0.0,
        }
    }

    /// Number of real scalars.
    pub fn real_len(&self) -> usize {
        2 * (self.filter.array().len() + self.inhibition.array().len()) + 1
    }

    /// Appends filter re/im, inhibition re/im, then theta.
    pub fn push_flat(&self, out: &mut Vec<f64>) {
        for a in [self.filter.array(), self.inhibition.array()] {
            out.extend_from_slice(a.re());
            out.extend_from_slice(a.im());
        }
        out.push(self.theta);
    }

    /// Inverse of [`push_flat`](Self::push_flat); returns the unread tail.
    pub fn read_flat<'a>(&mut self, src: &'a [f64]) -> &'a [f64] {
        let mut src = src;
        for a in [self.filter.array_mut(), self.inhibition.array_mut()] {
            let n = a.len();
            let (re, im) = a.planes_mut();
            re.copy_from_slice(&src[..n]);
            im.copy_from_slice(&src[n..2 * n]);
            src = &src[2 * n..];
        }
        self.theta = src[0];
        &src[1..]
    }

    fn add_assign(&mut self, other: &Self) {
        self.filter.array_mut().add_assign(other.filter.array());
        self.inhibition.array_mut().add_assign(other.inhibition.array());
        self.theta += other.theta;
    }
}

/// Per-layer gradients, aligned with [`UnfoldedNetwork::layers`].
pub type Gradients = Vec<LayerParams>;

pub(crate) fn add_gradients(acc: &mut Gradients, other: &Gradients) {
    for (a, b) in acc.iter_mut().zip(other) {
        a.add_assign(b);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UnfoldedNetwork {
    arch: Arch,
    dims: Dims,
    layers: Vec<LayerParams>,
}

impl UnfoldedNetwork {
    /// Checks that every layer has the shapes `arch` and `dims` call for.
    pub fn new(arch: Arch, dims: Dims, layers: Vec<LayerParams>) -> Result<Self> {
        if !arch.supports(dims.grid) {
            return Err(Error::arg(format!("{arch} cannot be built on {:?}", dims.grid)));
        }
        let (m, n) = (dims.m(), dims.n);
        if m == 0 || n == 0 {
            return Err(Error::dim("empty problem dimensions"));
        }
        for (t, l) in layers.iter().enumerate() {
            let filter_ok = match (&l.filter, arch) {
                (Filter::Conv(h), Arch::ConvLista) => h.shape() == Shape::Vector(m + n - 1),
                (Filter::Dense(w), a) if a != Arch::ConvLista => w.shape() == Shape::Matrix(m, n),
                _ => false,
            };
            let inhibition_ok = match (&l.inhibition, arch, dims.grid) {
                (Inhibition::Dense(w), Arch::Lista, _) => w.shape() == Shape::Matrix(m, m),
                (Inhibition::Toeplitz1D(h), Arch::Toeplitz1D | Arch::ConvLista, GridKind::OneD { m }) => h.m() == m,
                (Inhibition::Toeplitz2D(h), Arch::Toeplitz2D | Arch::ConvLista, GridKind::TwoD { m1, m2 }) => {
                    (h.m1(), h.m2()) == (m1, m2)
                }
                _ => false,
            };
            if !filter_ok || !inhibition_ok {
                return Err(Error::dim(format!("layer {t} does not match {arch} with {dims:?}")));
            }
            if !(l.theta >= 0.0 && l.theta.is_finite()) {
                return Err(Error::arg(format!("layer {t} has invalid threshold {}", l.theta)));
            }
        }
        Ok(Self { arch, dims, layers })
    }

    /// Network whose parameters are all zero.
    pub fn zeros(arch: Arch, dims: Dims, depth: usize) -> Result<Self> {
        let (m, n) = (dims.m(), dims.n);
        let filter = match arch {
            Arch::ConvLista => Filter::Conv(ComplexArray::zeros_vec(m + n - 1)),
            _ => Filter::Dense(ComplexArray::zeros(m, n)),
        };
        let inhibition = match (arch, dims.grid) {
            (Arch::Lista, _) => Inhibition::Dense(ComplexArray::zeros(m, m)),
            (_, GridKind::OneD { m }) => Inhibition::Toeplitz1D(ToeplitzVec::zeros(m)),
            (_, GridKind::TwoD { m1, m2 }) => Inhibition::Toeplitz2D(ToeplitzMat2D::zeros(m1, m2)),
        };
        let layer = LayerParams {
            filter,
            inhibition,
            theta: 0.0,
        };
        Self::new(arch, dims, vec![layer; depth])
    }

    pub fn arch(&self) -> Arch {
        self.arch
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[LayerParams] {
        &self.layers
    }

    /// Mutable access for tests and tooling; thresholds must stay >= 0.
    pub fn layers_mut(&mut self) -> &mut [LayerParams] {
        &mut self.layers
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.layers.iter().map(LayerParams::real_len).sum());
        for l in &self.layers {
            l.push_flat(&mut out);
        }
        out
    }

    /// Loads parameters from [`to_flat`](Self::to_flat) order and clamps
    /// thresholds at zero.
    pub fn set_flat(&mut self, flat: &[f64]) {
        let mut rest = flat;
        for l in &mut self.layers {
            rest = l.read_flat(rest);
            l.theta = l.theta.max(0.0);
        }
        debug_assert!(rest.is_empty());
    }

    pub fn zero_gradients(&self) -> Gradients {
        self.layers.iter().map(LayerParams::zeros_like).collect()
    }
}

/// Complex parameter counts of one layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub filter: usize,
    pub inhibition: usize,
    pub threshold: usize,
}

impl LayerCount {
    pub fn total(&self) -> usize {
        self.filter + self.inhibition + self.threshold
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ParamCount {
    pub per_layer: Vec<LayerCount>,
    pub inhibition: usize,
    pub total: usize,
}

/// Counts by formula, without building the network.
pub fn layer_param_count(arch: Arch, dims: Dims) -> Result<LayerCount> {
    if !arch.supports(dims.grid) {
        return Err(Error::arg(format!("{arch} cannot be built on {:?}", dims.grid)));
    }
    let (m, n) = (dims.m(), dims.n);
    let toeplitz = match dims.grid {
        GridKind::OneD { m } => 2 * m - 1,
        GridKind::TwoD { m1, m2 } => (2 * m1 - 1) * (2 * m2 - 1),
    };
    let (filter, inhibition) = match arch {
        Arch::Lista => (m * n, m * m),
        Arch::Toeplitz1D | Arch::Toeplitz2D => (m * n, toeplitz),
        Arch::ConvLista => (m + n - 1, toeplitz),
    };
    Ok(LayerCount {
        filter,
        inhibition,
        threshold: 1,
    })
}

pub fn count_for_depth(arch: Arch, dims: Dims, depth: usize) -> Result<ParamCount> {
    let layer = layer_param_count(arch, dims)?;
    Ok(ParamCount {
        per_layer: vec![layer; depth],
        inhibition: layer.inhibition * depth,
        total: layer.total() * depth,
    })
}

/// Counts read off the stored parameters.
pub fn param_count(net: &UnfoldedNetwork) -> ParamCount {
    let per_layer: Vec<_> = net
        .layers
        .iter()
        .map(|l| LayerCount {
            filter: l.filter.array().len(),
            inhibition: l.inhibition.array().len(),
            threshold: 1,
        })
        .collect();
    ParamCount {
        inhibition: per_layer.iter().map(|c| c.inhibition).sum(),
        total: per_layer.iter().map(LayerCount::total).sum(),
        per_layer,
    }
}
