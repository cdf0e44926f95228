//! ISTA and FISTA for `min_x 1/2 ||y - Phi x||^2 + lambda ||x||_1` over complex `x`.

use serde::{Deserialize, Serialize};

use crate::complex::{power_iteration, soft_threshold_in_place, ComplexArray, Threshold, LIPSCHITZ_MAX_ITER, LIPSCHITZ_TOL};
use crate::error::{Error, Result};
use crate::harmonic::{expect_len, SensingOperator};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub max_iter: usize,
    /// Stop once the relative objective change drops below this.
    pub tol: f64,
    pub record_trace: bool,
}

impl SolverConfig {
    pub fn new(lambda: f64, max_iter: usize) -> Self {
        Self {
            lambda,
            max_iter,
            tol: 1e-10,
            record_trace: false,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_trace(mut self) -> Self {
        self.record_trace = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::arg(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.max_iter == 0 {
            return Err(Error::arg("max_iter must be at least 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::arg(format!("tol must be >= 0, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub x_hat: ComplexArray,
    pub iterations_run: usize,
    /// Objective at `x^(0) = 0` followed by one entry per iteration; empty
    /// unless requested.
    pub objective_trace: Vec<f64>,
    pub converged: bool,
}

/// `1/2 ||y - Phi x||^2 + lambda sum |x_i|`.
pub fn objective(op: &impl SensingOperator, x: &ComplexArray, y: &ComplexArray, lambda: f64) -> Result<f64> {
    expect_len(x, op.cols(), "objective x")?;
    expect_len(y, op.rows(), "objective y")?;
    Ok(objective_unchecked(op, x, y, lambda))
}

fn objective_unchecked(op: &impl SensingOperator, x: &ComplexArray, y: &ComplexArray, lambda: f64) -> f64 {
    let r = y.sub(&op.apply(x)).expect("checked shapes");
    0.5 * r.norm_sqr() + lambda * x.l1_norm()
}

/// Scale-free default `0.1 ||Phi^H y||_inf`.
pub fn default_lambda(op: &impl SensingOperator, y: &ComplexArray) -> f64 {
    0.1 * op.apply_adjoint(y).max_abs()
}

/// Largest eigenvalue of `Phi^H Phi` by power iteration.
pub fn operator_lipschitz(op: &impl SensingOperator) -> Result<f64> {
    let est = power_iteration(
        op.cols(),
        |v| op.apply(v),
        |r| op.apply_adjoint(r),
        LIPSCHITZ_TOL,
        LIPSCHITZ_MAX_ITER,
    )?;
    Ok(est.value)
}

/// Proximal-gradient solver bound to one operator, with `L` computed once.
pub struct Proximal<'a, O: SensingOperator> {
    op: &'a O,
    lipschitz: f64,
}

impl<'a, O: SensingOperator> Proximal<'a, O> {
    pub fn new(op: &'a O) -> Result<Self> {
        Ok(Self {
            op,
            lipschitz: operator_lipschitz(op)?,
        })
    }

    /// Uses a known Lipschitz constant.
    pub fn with_lipschitz(op: &'a O, lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::arg(format!("Lipschitz constant must be positive, got {lipschitz}")));
        }
        Ok(Self { op, lipschitz })
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `S_{lambda/L}(v + Phi^H (y - Phi v) / L)`.
    fn prox_step(&self, v: &ComplexArray, y: &ComplexArray, theta: Threshold) -> ComplexArray {
        let r = y.sub(&self.op.apply(v)).expect("checked shapes");
        let mut next = v.clone();
        next.axpy(1.0 / self.lipschitz, &self.op.apply_adjoint(&r));
        soft_threshold_in_place(&mut next, theta);
        next
    }

    fn prepare(&self, y: &ComplexArray, cfg: &SolverConfig) -> Result<Threshold> {
        cfg.validate()?;
        expect_len(y, self.op.rows(), "observation")?;
        Threshold::new(cfg.lambda / self.lipschitz)
    }

    pub fn ista(&self, y: &ComplexArray, cfg: &SolverConfig) -> Result<SolverResult> {
        let theta = self.prepare(y, cfg)?;
        let mut x = ComplexArray::zeros_vec(self.op.cols());
        let mut tracker = Tracker::new(objective_unchecked(self.op, &x, y, cfg.lambda), cfg);
        for t in 1..=cfg.max_iter {
            x = self.prox_step(&x, y, theta);
            check_finite(&x, t)?;
            if tracker.update(objective_unchecked(self.op, &x, y, cfg.lambda), cfg) {
                break;
            }
        }
        Ok(tracker.finish(x))
    }

    /// Accelerated variant with the classical `t_{k+1} = (1 + sqrt(1 + 4 t_k^2)) / 2`
    /// momentum sequence and no restart.
    pub fn fista(&self, y: &ComplexArray, cfg: &SolverConfig) -> Result<SolverResult> {
        let theta = self.prepare(y, cfg)?;
        let mut x = ComplexArray::zeros_vec(self.op.cols());
        let mut z = x.clone();
        let mut t_k = 1.0f64;
        let mut tracker = Tracker::new(objective_unchecked(self.op, &x, y, cfg.lambda), cfg);
        for t in 1..=cfg.max_iter {
            let next = self.prox_step(&z, y, theta);
            check_finite(&next, t)?;
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
            let beta = (t_k - 1.0) / t_next;
            z = next.clone();
            z.axpy(beta, &next.sub(&x).expect("same length"));
            x = next;
            t_k = t_next;
            if tracker.update(objective_unchecked(self.op, &x, y, cfg.lambda), cfg) {
                break;
            }
        }
        Ok(tracker.finish(x))
    }
}

fn check_finite(x: &ComplexArray, iteration: usize) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("at iteration {iteration}")))
    }
}

struct Tracker {
    prev: f64,
    trace: Vec<f64>,
    iterations: usize,
    converged: bool,
}

impl Tracker {
    fn new(f0: f64, cfg: &SolverConfig) -> Self {
        Self {
            prev: f0,
            trace: if cfg.record_trace { vec![f0] } else { Vec::new() },
            iterations: 0,
            converged: false,
        }
    }

    /// Records one iteration; returns true when the stopping rule fires.
    fn update(&mut self, f: f64, cfg: &SolverConfig) -> bool {
        self.iterations += 1;
        if cfg.record_trace {
            self.trace.push(f);
        }
        let change = (self.prev - f).abs();
        let scale = self.prev.abs().max(f.abs());
        self.prev = f;
        self.converged = change <= cfg.tol * scale;
        self.converged
    }

    fn finish(self, x_hat: ComplexArray) -> SolverResult {
        SolverResult {
            x_hat,
            iterations_run: self.iterations,
            objective_trace: self.trace,
            converged: self.converged,
        }
    }
}

pub fn ista(op: &impl SensingOperator, y: &ComplexArray, cfg: &SolverConfig) -> Result<SolverResult> {
    Proximal::new(op)?.ista(y, cfg)
}

pub fn fista(op: &impl SensingOperator, y: &ComplexArray, cfg: &SolverConfig) -> Result<SolverResult> {
    Proximal::new(op)?.fista(y, cfg)
}

/// Runs ISTA for each `lambda` in turn.
pub fn sweep_lambda(
    op: &impl SensingOperator,
    y: &ComplexArray,
    lambdas: &[f64],
    cfg: &SolverConfig,
) -> Result<Vec<SolverResult>> {
    let solver = Proximal::new(op)?;
    lambdas
        .iter()
        .map(|&lambda| solver.ista(y, &SolverConfig { lambda, ..*cfg }))
        .collect()
}
