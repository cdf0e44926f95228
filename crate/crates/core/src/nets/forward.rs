//! Forward recursion and reverse-mode gradients for a single observation.
//!
//! Gradients are packed as `dL/dRe + j dL/dIm`. With that convention a linear
//! map `z = A u` pulls back as `du = A^H dz` and contributes `dz u^H` to `A`;
//! for convolutions the second term becomes a cross-correlation.

use super::{Filter, Gradients, Inhibition, LayerParams, UnfoldedNetwork};
use crate::complex::{matvec_adjoint_into, matvec_into, soft_threshold_in_place, ComplexArray, Shape, Threshold};
use crate::error::{Error, Result};
use crate::harmonic::{expect_len, GridKind};
use crate::spectral::{
    conv1d, conv2d_auto, kernel_gradient_2d, rect_conv, rect_kernel_gradient, ToeplitzMat2D,
    ToeplitzPlan, ToeplitzVec,
};

/// Below this size direct summation beats the transforms.
const FFT_MIN_M: usize = 32;

enum InhibitionOp<'a> {
    Dense(&'a ComplexArray),
    Direct1D { fwd: &'a ToeplitzVec, adj: ToeplitzVec },
    Fft1D { fwd: ToeplitzPlan, adj: ToeplitzPlan },
    Conv2D { fwd: &'a ToeplitzMat2D, adj: ToeplitzMat2D },
}

impl InhibitionOp<'_> {
    fn apply(&self, x: &ComplexArray, grid: GridKind, adjoint: bool) -> ComplexArray {
        match self {
            InhibitionOp::Dense(w) => {
                let mut out = ComplexArray::zeros_vec(w.rows());
                if adjoint {
                    matvec_adjoint_into(w, x, &mut out);
                } else {
                    matvec_into(w, x, &mut out);
                }
                out
            }
            InhibitionOp::Direct1D { fwd, adj } => conv1d(if adjoint { adj } else { fwd }, x).expect("checked length"),
            InhibitionOp::Fft1D { fwd, adj } => if adjoint { adj } else { fwd }.apply(x),
            InhibitionOp::Conv2D { fwd, adj } => {
                let GridKind::TwoD { m1, m2 } = grid else {
                    unreachable!("2D kernel on a 1D grid")
                };
                let grid_x = x.clone().reshaped(Shape::Matrix(m1, m2)).expect("checked length");
                conv2d_auto(if adjoint { adj } else { fwd }, &grid_x).flattened()
            }
        }
    }
}

/// A network with per-layer operators set up for repeated evaluation.
pub struct PreparedNet<'a> {
    net: &'a UnfoldedNetwork,
    ops: Vec<InhibitionOp<'a>>,
}

/// Values cached by the forward pass: the estimate entering layer `t` and the
/// pre-threshold value `z_t = B_t y + G_t x_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Activations {
    pub inputs: Vec<ComplexArray>,
    pub pre: Vec<ComplexArray>,
    pub output: ComplexArray,
}

impl<'a> PreparedNet<'a> {
    pub fn new(net: &'a UnfoldedNetwork) -> Self {
        let ops = net
            .layers
            .iter()
            .map(|l| match &l.inhibition {
                Inhibition::Dense(w) => InhibitionOp::Dense(w),
                Inhibition::Toeplitz1D(h) if h.m() > FFT_MIN_M => InhibitionOp::Fft1D {
                    fwd: ToeplitzPlan::new(h),
                    adj: ToeplitzPlan::new(&h.adjoint()),
                },
                Inhibition::Toeplitz1D(h) => InhibitionOp::Direct1D {
                    fwd: h,
                    adj: h.adjoint(),
                },
                Inhibition::Toeplitz2D(h) => InhibitionOp::Conv2D {
                    fwd: h,
                    adj: h.adjoint(),
                },
            })
            .collect();
        Self { net, ops }
    }

    pub fn net(&self) -> &UnfoldedNetwork {
        self.net
    }

    fn filter(&self, l: &LayerParams, y: &ComplexArray) -> ComplexArray {
        let m = self.net.dims.m();
        match &l.filter {
            Filter::Dense(w) => {
                let mut out = ComplexArray::zeros_vec(m);
                matvec_into(w, y, &mut out);
                out
            }
            Filter::Conv(h) => rect_conv(h, y, m).expect("checked length"),
        }
    }

    pub fn forward(&self, y: &ComplexArray) -> Result<ComplexArray> {
        Ok(self.run(y, false)?.output)
    }

    pub fn forward_trace(&self, y: &ComplexArray) -> Result<Activations> {
        self.run(y, true)
    }

    /// Layer `t` applied to the estimate `x`, inhibition included whatever `t`.
    pub fn layer(&self, t: usize, y: &ComplexArray, x: &ComplexArray) -> Result<ComplexArray> {
        let dims = self.net.dims;
        let (l, op) = self
            .net
            .layers
            .get(t)
            .zip(self.ops.get(t))
            .ok_or_else(|| Error::arg(format!("layer {t} of {}", self.ops.len())))?;
        expect_len(y, dims.n, "network input")?;
        expect_len(x, dims.m(), "layer input")?;
        let mut z = self.filter(l, y);
        z.add_assign(&op.apply(x, dims.grid, false));
        soft_threshold_in_place(&mut z, Threshold::new(l.theta)?);
        Ok(z)
    }

    fn run(&self, y: &ComplexArray, keep: bool) -> Result<Activations> {
        let dims = self.net.dims;
        expect_len(y, dims.n, "network input")?;
        let mut x = ComplexArray::zeros_vec(dims.m());
        let mut acts = Activations {
            inputs: Vec::new(),
            pre: Vec::new(),
            output: ComplexArray::zeros_vec(0),
        };
        for (t, (l, op)) in self.net.layers.iter().zip(&self.ops).enumerate() {
            let mut z = self.filter(l, y);
            // The first layer sees x = 0.
            if t > 0 {
                z.add_assign(&op.apply(&x, dims.grid, false));
            }
            if !z.is_finite() {
                return Err(Error::NonFinite(format!("in layer {t}")));
            }
            let mut next = z.clone();
            soft_threshold_in_place(&mut next, Threshold::new(l.theta)?);
            if keep {
                acts.inputs.push(std::mem::replace(&mut x, next));
                acts.pre.push(z);
            } else {
                x = next;
            }
        }
        acts.output = x;
        Ok(acts)
    }

    /// Accumulates parameter gradients of one sample into `grads`, given the
    /// loss gradient `grad_out` at the network output.
    pub fn backward(
        &self,
        y: &ComplexArray,
        acts: &Activations,
        grad_out: &ComplexArray,
        grads: &mut Gradients,
    ) -> Result<()> {
        let depth = self.net.depth();
        if acts.inputs.len() != depth || acts.pre.len() != depth {
            return Err(Error::arg(format!(
                "missing activations: have {} of {depth} layers",
                acts.pre.len()
            )));
        }
        if grads.len() != depth {
            return Err(Error::dim("gradient buffer depth differs from the network"));
        }
        let dims = self.net.dims;
        let mut g = grad_out.clone();
        for t in (0..depth).rev() {
            let l = &self.net.layers[t];
            let (gz, dtheta) = soft_threshold_backward(&acts.pre[t], l.theta, &g);
            let slot = &mut grads[t];
            slot.theta += dtheta;
            match (&l.filter, &mut slot.filter) {
                (Filter::Dense(_), Filter::Dense(dw)) => add_outer(dw, &gz, y),
                (Filter::Conv(_), Filter::Conv(dh)) => dh.add_assign(&rect_kernel_gradient(&gz, y)),
                _ => unreachable!("gradient layout mirrors the network"),
            }
            if t == 0 {
                // x_0 = 0: no inhibition contribution and nothing further back.
                break;
            }
            let x = &acts.inputs[t];
            match &mut slot.inhibition {
                Inhibition::Dense(dw) => add_outer(dw, &gz, x),
                Inhibition::Toeplitz1D(dh) => dh.as_array_mut().add_assign(&rect_kernel_gradient(&gz, x)),
                Inhibition::Toeplitz2D(dh) => {
                    let GridKind::TwoD { m1, m2 } = dims.grid else {
                        unreachable!("2D kernel on a 1D grid")
                    };
                    let gm = gz.clone().reshaped(Shape::Matrix(m1, m2)).expect("grid size");
                    let xm = x.clone().reshaped(Shape::Matrix(m1, m2)).expect("grid size");
                    dh.as_array_mut().add_assign(&kernel_gradient_2d(&gm, &xm));
                }
            }
            g = self.ops[t].apply(&gz, dims.grid, true);
        }
        Ok(())
    }
}

/// `acc += g u^H`.
fn add_outer(acc: &mut ComplexArray, g: &ComplexArray, u: &ComplexArray) {
    let cols = u.len();
    let (ur, ui) = (u.re(), u.im());
    let (gr, gi) = (g.re().to_vec(), g.im().to_vec());
    let (ar, ai) = acc.planes_mut();
    for i in 0..gr.len() {
        let (a, b) = (gr[i], gi[i]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let (rr, ri) = (&mut ar[i * cols..(i + 1) * cols], &mut ai[i * cols..(i + 1) * cols]);
        for k in 0..cols {
            // (a + jb)(c - jd)
            rr[k] += a * ur[k] + b * ui[k];
            ri[k] += b * ur[k] - a * ui[k];
        }
    }
}

/// Pulls a gradient back through `S_theta`. Returns the gradient at the input
/// and the derivative with respect to `theta`. The map is treated as
/// identically zero on `|z| <= theta`.
pub fn soft_threshold_backward(z: &ComplexArray, theta: f64, g: &ComplexArray) -> (ComplexArray, f64) {
    let mut out = ComplexArray::zeros_like(z);
    let mut dtheta = 0.0;
    for i in 0..z.len() {
        let zi = z.get(i);
        let r = zi.norm();
        if r <= theta || r == 0.0 {
            continue;
        }
        let u = zi / r;
        let gi = g.get(i);
        let radial = (u.conj() * gi).re;
        let g_par = u * radial;
        out.set(i, g_par + (gi - g_par) * (1.0 - theta / r));
        dtheta -= radial;
    }
    (out, dtheta)
}

impl UnfoldedNetwork {
    pub fn forward(&self, y: &ComplexArray) -> Result<ComplexArray> {
        PreparedNet::new(self).forward(y)
    }

    pub fn forward_trace(&self, y: &ComplexArray) -> Result<Activations> {
        PreparedNet::new(self).forward_trace(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{matvec, soft_threshold, Threshold};
    use crate::harmonic::GridKind;
    use crate::nets::{Arch, Dims};
    use crate::rng::{seeded, Rng};
    use crate::spectral::toeplitz_expand;
    use num_complex::Complex64;

    fn random_net(arch: Arch, dims: Dims, depth: usize, rng: &mut Rng) -> UnfoldedNetwork {
        let mut net = UnfoldedNetwork::zeros(arch, dims, depth).unwrap();
        for l in net.layers_mut() {
            for a in [l.filter.array_mut(), l.inhibition.array_mut()] {
                let r = ComplexArray::random(a.shape(), rng).scaled(0.3);
                *a = r;
            }
            l.theta = 0.05;
        }
        net
    }

    fn dense_equivalent(net: &UnfoldedNetwork) -> UnfoldedNetwork {
        let layers = net
            .layers()
            .iter()
            .map(|l| LayerParams {
                filter: l.filter.clone(),
                inhibition: Inhibition::Dense(l.inhibition.to_dense()),
                theta: l.theta,
            })
            .collect();
        UnfoldedNetwork::new(Arch::Lista, net.dims(), layers).unwrap()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let dims = Dims {
            grid: GridKind::OneD { m: 10 },
            n: 4,
        };
        for arch in [Arch::Lista, Arch::Toeplitz1D, Arch::ConvLista] {
            let net = UnfoldedNetwork::zeros(arch, dims, 3).unwrap();
            let y = ComplexArray::random(Shape::Vector(4), &mut seeded(1));
            assert_eq!(net.forward(&y).unwrap().max_abs(), 0.0);
        }
    }

    #[test]
    fn toeplitz_nets_match_dense_expansion() {
        let mut rng = seeded(2);
        for (grid, arch) in [
            (GridKind::OneD { m: 20 }, Arch::Toeplitz1D),
            (GridKind::OneD { m: 80 }, Arch::Toeplitz1D),
            (GridKind::TwoD { m1: 4, m2: 6 }, Arch::Toeplitz2D),
            (GridKind::TwoD { m1: 8, m2: 9 }, Arch::Toeplitz2D),
        ] {
            let dims = Dims { grid, n: 7 };
            let net = random_net(arch, dims, 4, &mut rng);
            let dense = dense_equivalent(&net);
            let y = ComplexArray::random(Shape::Vector(7), &mut rng);
            let a = net.forward(&y).unwrap();
            let b = dense.forward(&y).unwrap();
            assert!(a.max_abs_diff(&b) <= 1e-10 * b.max_abs().max(1.0), "{arch} {grid:?}");
        }
    }

    #[test]
    fn single_layer_hand_computation() {
        let mut rng = seeded(3);
        let dims = Dims {
            grid: GridKind::OneD { m: 6 },
            n: 3,
        };
        let net = random_net(Arch::Toeplitz1D, dims, 2, &mut rng);
        let y = ComplexArray::random(Shape::Vector(3), &mut rng);
        let [l0, l1] = [&net.layers()[0], &net.layers()[1]];
        let th = Threshold::new(0.05).unwrap();
        let x1 = soft_threshold(&matvec(l0.filter.array(), &y).unwrap(), th);
        let Inhibition::Toeplitz1D(h) = &l1.inhibition else { unreachable!() };
        let z = matvec(l1.filter.array(), &y).unwrap().add(&matvec(&toeplitz_expand(h), &x1).unwrap()).unwrap();
        let want = soft_threshold(&z, th);
        assert!(net.forward(&y).unwrap().max_abs_diff(&want) < 1e-12);
    }

    #[test]
    fn trace_records_every_layer() {
        let mut rng = seeded(4);
        let dims = Dims {
            grid: GridKind::TwoD { m1: 3, m2: 3 },
            n: 4,
        };
        let net = random_net(Arch::ConvLista, dims, 3, &mut rng);
        let y = ComplexArray::random(Shape::Vector(4), &mut rng);
        let acts = net.forward_trace(&y).unwrap();
        assert_eq!(acts.inputs.len(), 3);
        assert_eq!(acts.inputs[0].max_abs(), 0.0);
        assert_eq!(acts.output, net.forward(&y).unwrap());
    }

    #[test]
    fn soft_threshold_backward_zero_inside_ball() {
        let z = ComplexArray::from_complex(&[Complex64::new(0.5, 0.0), Complex64::new(1.0, 0.0)]);
        let g = ComplexArray::from_complex(&[Complex64::new(1.0, 1.0), Complex64::new(1.0, 1.0)]);
        let (gz, dt) = soft_threshold_backward(&z, 1.0, &g);
        assert_eq!(gz.max_abs(), 0.0);
        assert_eq!(dt, 0.0);
    }

    #[test]
    fn soft_threshold_backward_matches_differences() {
        let mut rng = seeded(5);
        let z = ComplexArray::random(Shape::Vector(8), &mut rng).scaled(2.0);
        let g = ComplexArray::random(Shape::Vector(8), &mut rng);
        let theta = 0.3;
        let f = |z: &ComplexArray, th: f64| {
            let s = soft_threshold(z, Threshold::new(th).unwrap());
            (0..8).map(|i| (g.get(i).conj() * s.get(i)).re).sum::<f64>()
        };
        let (gz, dt) = soft_threshold_backward(&z, theta, &g);
        let h = 1e-6;
        for i in 0..8 {
            if (z.get(i).norm() - theta).abs() < 1e-2 {
                continue;
            }
            for (plane, unit) in [(0, Complex64::new(h, 0.0)), (1, Complex64::new(0.0, h))] {
                let mut zp = z.clone();
                zp.set(i, z.get(i) + unit);
                let mut zm = z.clone();
                zm.set(i, z.get(i) - unit);
                let fd = (f(&zp, theta) - f(&zm, theta)) / (2.0 * h);
                let an = if plane == 0 { gz.get(i).re } else { gz.get(i).im };
                assert!((fd - an).abs() < 1e-6, "entry {i} plane {plane}: {fd} vs {an}");
            }
        }
        let fd = (f(&z, theta + h) - f(&z, theta - h)) / (2.0 * h);
        assert!((fd - dt).abs() < 1e-6);
    }

    #[test]
    fn backward_requires_activations() {
        let dims = Dims {
            grid: GridKind::OneD { m: 5 },
            n: 2,
        };
        let net = UnfoldedNetwork::zeros(Arch::Lista, dims, 2).unwrap();
        let prepared = PreparedNet::new(&net);
        let y = ComplexArray::zeros_vec(2);
        let mut acts = prepared.forward_trace(&y).unwrap();
        acts.pre.pop();
        let mut grads = net.zero_gradients();
        let g = ComplexArray::zeros_vec(5);
        assert!(prepared.backward(&y, &acts, &g, &mut grads).is_err());
    }
}
