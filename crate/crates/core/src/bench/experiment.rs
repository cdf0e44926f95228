use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{hit_rate_metric, nmse_metric, tolerant_hit_rate};
use crate::complex::ComplexArray;
use crate::error::{Error, Result};
use crate::harmonic::{draw_sampling, build_dictionary, Dictionary, GridKind, SparseInstance};
use crate::nets::{Arch, ModelSidecar, UnfoldedNetwork};
use crate::rng::derive_seed;
use crate::solvers::{default_lambda, Proximal, SolverConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ISTA")]
    Ista,
    #[serde(rename = "FISTA")]
    Fista,
    #[serde(rename = "LISTA")]
    Lista,
    #[serde(rename = "ConvLISTA")]
    ConvLista,
    #[serde(rename = "LISTA-Toeplitz")]
    ListaToeplitz,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::Ista,
        Method::Fista,
        Method::Lista,
        Method::ConvLista,
        Method::ListaToeplitz,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Ista => "ISTA",
            Method::Fista => "FISTA",
            Method::Lista => "LISTA",
            Method::ConvLista => "ConvLISTA",
            Method::ListaToeplitz => "LISTA-Toeplitz",
        }
    }

    pub fn is_learned(self) -> bool {
        !matches!(self, Method::Ista | Method::Fista)
    }

    /// Network architecture implementing the method on `grid`.
    pub fn arch(self, grid: GridKind) -> Option<Arch> {
        match self {
            Method::Ista | Method::Fista => None,
            Method::Lista => Some(Arch::Lista),
            Method::ConvLista => Some(Arch::ConvLista),
            Method::ListaToeplitz => Some(Arch::toeplitz_for(grid)),
        }
    }

    pub fn for_arch(arch: Arch) -> Self {
        match arch {
            Arch::Lista => Method::Lista,
            Arch::ConvLista => Method::ConvLista,
            Arch::Toeplitz1D | Arch::Toeplitz2D => Method::ListaToeplitz,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::arg(format!("unknown method {s:?}")))
    }
}

pub fn default_budgets() -> BTreeMap<Method, usize> {
    BTreeMap::from([(Method::Ista, 1000), (Method::Fista, 100)])
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub grid: GridKind,
    pub n: usize,
    pub k: usize,
    /// Noise points as `10 log10(sigma^2)`, amplitudes having unit power.
    #[serde(default)]
    pub noise_powers_db: Vec<f64>,
    /// Adds a noise-free point ahead of `noise_powers_db`.
    #[serde(default)]
    pub include_noiseless: bool,
    pub methods: Vec<Method>,
    /// Iterations for ISTA and FISTA; learned methods use their depth.
    #[serde(default = "default_budgets")]
    pub iteration_budgets: BTreeMap<Method, usize>,
    /// Solver regularisation; `0.1 ||Phi^H y||_inf` per instance when absent.
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default = "one")]
    pub trials_per_point: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub dict_seed: u64,
    #[serde(default)]
    pub models: BTreeMap<Method, PathBuf>,
    /// Fractional grid offset of every sinusoid.
    #[serde(default)]
    pub offgrid: Option<f64>,
    /// Count a hit within this many cells instead of exact index matches.
    #[serde(default)]
    pub tolerant_cells: Option<usize>,
    /// Measure recovery time. Off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::arg("no methods selected"));
        }
        if self.trials_per_point == 0 {
            return Err(Error::arg("trials_per_point must be at least 1"));
        }
        if self.noise_powers_db.is_empty() && !self.include_noiseless {
            return Err(Error::arg("no noise points selected"));
        }
        if self.noise_powers_db.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("noise powers must be finite; use include_noiseless"));
        }
        for m in &self.methods {
            if !m.is_learned() && self.budget(*m)? == 0 {
                return Err(Error::arg(format!("{m} budget must be positive")));
            }
        }
        Ok(())
    }

    fn budget(&self, m: Method) -> Result<usize> {
        self.iteration_budgets
            .get(&m)
            .copied()
            .ok_or_else(|| Error::arg(format!("no iteration budget for {m}")))
    }

    pub fn dictionary(&self) -> Result<Dictionary> {
        build_dictionary(self.grid, draw_sampling(self.grid.size(), self.n, self.dict_seed)?)
    }

    /// `(label, sigma2)` for every noise point, in row order.
    pub fn noise_points(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        if self.include_noiseless {
            out.push((f64::NEG_INFINITY, 0.0));
        }
        out.extend(self.noise_powers_db.iter().map(|&db| (db, 10f64.powf(db / 10.0))));
        out
    }
}

pub type Models = BTreeMap<Method, UnfoldedNetwork>;

/// Loads every learned method's model and checks it against the experiment.
pub fn load_models(cfg: &ExperimentConfig, d: &Dictionary) -> Result<Models> {
    let mut out = Models::new();
    for &m in cfg.methods.iter().filter(|m| m.is_learned()) {
        let path = cfg.models.get(&m).ok_or_else(|| Error::MissingModel(m.name().into()))?;
        out.insert(m, load_model(m, path, d)?);
    }
    Ok(out)
}

/// Loads one network, rejecting it when its sidecar records a sampling set
/// other than the dictionary's.
pub fn load_model(m: Method, path: &Path, d: &Dictionary) -> Result<UnfoldedNetwork> {
    let net = UnfoldedNetwork::load(path)?;
    if let Ok(side) = ModelSidecar::read(path) {
        if !side.omega.is_empty() && side.omega != d.sampling().indices() {
            return Err(Error::dim(format!(
                "{m} model at {} was trained on a different sampling set",
                path.display()
            )));
        }
    }
    Ok(net)
}

/// Runs any method on observations of one dictionary.
pub struct Recoverer<'a> {
    dict: &'a Dictionary,
    solver: Proximal<'a, Dictionary>,
    models: &'a Models,
    budgets: &'a BTreeMap<Method, usize>,
    lambda: Option<f64>,
}

impl<'a> Recoverer<'a> {
    pub fn new(
        dict: &'a Dictionary,
        models: &'a Models,
        budgets: &'a BTreeMap<Method, usize>,
        lambda: Option<f64>,
    ) -> Result<Self> {
        for (m, net) in models {
            if Some(net.arch()) != m.arch(dict.kind()) {
                return Err(Error::arg(format!("model for {m} has architecture {}", net.arch())));
            }
            if net.dims().grid != dict.kind() || net.dims().n != dict.n() {
                return Err(Error::dim(format!(
                    "model for {m} is {:?}, experiment is {:?} with N={}",
                    net.dims(),
                    dict.kind(),
                    dict.n()
                )));
            }
        }
        Ok(Self {
            dict,
            solver: Proximal::new(dict)?,
            models,
            budgets,
            lambda,
        })
    }

    pub fn check_methods(&self, methods: &[Method]) -> Result<()> {
        for &m in methods {
            if m.is_learned() && !self.models.contains_key(&m) {
                return Err(Error::MissingModel(m.name().into()));
            }
        }
        Ok(())
    }

    pub fn recover(&self, method: Method, y: &ComplexArray) -> Result<ComplexArray> {
        match method {
            Method::Ista | Method::Fista => {
                let iters = *self
                    .budgets
                    .get(&method)
                    .ok_or_else(|| Error::arg(format!("no iteration budget for {method}")))?;
                let lambda = self.lambda.unwrap_or_else(|| default_lambda(self.dict, y));
                let cfg = SolverConfig::new(lambda, iters);
                let r = if method == Method::Ista {
                    self.solver.ista(y, &cfg)?
                } else {
                    self.solver.fista(y, &cfg)?
                };
                Ok(r.x_hat)
            }
            _ => self
                .models
                .get(&method)
                .ok_or_else(|| Error::MissingModel(method.name().into()))?
                .forward(y),
        }
    }

    /// Median wall time of five runs after one warm-up, in milliseconds.
    pub fn time_ms(&self, method: Method, y: &ComplexArray) -> Result<f64> {
        self.recover(method, y)?;
        let mut samples = Vec::with_capacity(5);
        for _ in 0..5 {
            let start = Instant::now();
            std::hint::black_box(self.recover(method, y)?);
            samples.push(start.elapsed().as_secs_f64() * 1e3);
        }
        samples.sort_by(f64::total_cmp);
        Ok(samples[2])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricRow {
    pub method: Method,
    pub noise_power_db: f64,
    pub nmse_db: f64,
    pub hit_rate: f64,
    pub mean_runtime_ms: Option<f64>,
    pub trials: usize,
}

struct TrialOutcome {
    nmse: f64,
    hit: f64,
    ms: Option<f64>,
}

fn trial_seed(seed: u64, point: usize, trial: usize) -> u64 {
    derive_seed(derive_seed(seed, point as u64), trial as u64)
}

fn score(cfg: &ExperimentConfig, x_hat: &ComplexArray, inst: &SparseInstance) -> Result<(f64, f64)> {
    let nmse = nmse_metric(x_hat, &inst.x_true)?;
    let hit = match cfg.tolerant_cells {
        Some(cells) => tolerant_hit_rate(x_hat, &inst.support, cfg.k, cfg.grid, cells)?,
        None => hit_rate_metric(x_hat, &inst.x_true, cfg.k)?,
    };
    Ok((nmse, hit))
}

/// Noise sweep: every method sees the same instances at each noise point.
/// Rows are ordered by method, then noise point, as listed in `cfg`.
pub fn run_sweep(cfg: &ExperimentConfig, models: &Models) -> Result<Vec<MetricRow>> {
    cfg.validate()?;
    if cfg.k == 0 {
        return Err(Error::arg("a sweep needs K >= 1"));
    }
    let d = cfg.dictionary()?;
    let rec = Recoverer::new(&d, models, &cfg.iteration_budgets, cfg.lambda)?;
    rec.check_methods(&cfg.methods)?;

    let points = cfg.noise_points();
    // outcomes[point][trial][method]
    let mut outcomes = Vec::with_capacity(points.len());
    for (p, &(_, sigma2)) in points.iter().enumerate() {
        let run_trial = |trial: usize| -> Result<Vec<TrialOutcome>> {
            let inst = SparseInstance::generate(&d, cfg.k, sigma2, cfg.offgrid, trial_seed(cfg.seed, p, trial))?;
            cfg.methods
                .iter()
                .map(|&m| {
                    let x_hat = rec.recover(m, &inst.y)?;
                    let (nmse, hit) = score(cfg, &x_hat, &inst)?;
                    let ms = if cfg.timing { Some(rec.time_ms(m, &inst.y)?) } else { None };
                    Ok(TrialOutcome { nmse, hit, ms })
                })
                .collect()
        };
        let trials: Vec<Vec<TrialOutcome>> = if cfg.timing {
            (0..cfg.trials_per_point).map(run_trial).collect::<Result<_>>()?
        } else {
            (0..cfg.trials_per_point).into_par_iter().map(run_trial).collect::<Result<_>>()?
        };
        outcomes.push(trials);
    }

    let n = cfg.trials_per_point as f64;
    let mut rows = Vec::new();
    for (mi, &method) in cfg.methods.iter().enumerate() {
        for (p, &(db, _)) in points.iter().enumerate() {
            let trials = &outcomes[p];
            let mean = |f: &dyn Fn(&TrialOutcome) -> f64| trials.iter().map(|t| f(&t[mi])).sum::<f64>() / n;
            rows.push(MetricRow {
                method,
                noise_power_db: db,
                nmse_db: 20.0 * mean(&|t| t.nmse).log10(),
                hit_rate: mean(&|t| t.hit),
                mean_runtime_ms: cfg.timing.then(|| mean(&|t| t.ms.unwrap_or(0.0))),
                trials: cfg.trials_per_point,
            });
        }
    }
    Ok(rows)
}

pub(crate) fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

/// Header comment carried by every metric table.
pub const NOISE_CONVENTION: &str = "# noise_power_db = 10*log10(sigma^2) with unit-power amplitudes";

pub fn write_metrics_csv(rows: &[MetricRow], out: impl Write) -> Result<()> {
    let mut out = out;
    writeln!(out, "{NOISE_CONVENTION}")?;
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["method", "noise_power_db", "nmse_db", "hit_rate", "mean_runtime_ms", "trials"])
        .map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            fmt_num(r.noise_power_db),
            fmt_num(r.nmse_db),
            fmt_num(r.hit_rate),
            r.mean_runtime_ms.map_or_else(|| "NA".to_string(), fmt_num),
            r.trials.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Format(format!("{other:?}")),
    }
}

/// Options for a single recovery trial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingleOptions {
    pub sigma2: f64,
    pub seed: u64,
}

/// Per-index magnitudes of the truth (when known) and of every estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct RecoveryDump {
    pub grid: GridKind,
    pub methods: Vec<Method>,
    pub x_true: Option<ComplexArray>,
    pub support: Vec<usize>,
    pub estimates: Vec<ComplexArray>,
}

impl RecoveryDump {
    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
        let two_d = matches!(self.grid, GridKind::TwoD { .. });
        let mut header = vec!["index".to_string()];
        if two_d {
            header.extend(["i1".to_string(), "i2".to_string()]);
        }
        if self.x_true.is_some() {
            header.push("true".into());
        }
        header.extend(self.methods.iter().map(|m| m.name().to_string()));
        w.write_record(&header).map_err(csv_err)?;
        for i in 0..self.grid.size() {
            let mut rec = vec![i.to_string()];
            if two_d {
                let (a, b) = self.grid.coords(i);
                rec.extend([a.to_string(), b.to_string()]);
            }
            if let Some(x) = &self.x_true {
                rec.push(format!("{:.9}", x.get(i).norm()));
            }
            rec.extend(self.estimates.iter().map(|e| format!("{:.9}", e.get(i).norm())));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Strict or tolerant hit rate of each method against the known truth.
    pub fn hit_rates(&self, k: usize, tolerant_cells: Option<usize>) -> Result<Vec<(Method, f64)>> {
        let x_true = self.x_true.as_ref().ok_or_else(|| Error::arg("dump has no ground truth"))?;
        self.methods
            .iter()
            .zip(&self.estimates)
            .map(|(&m, e)| {
                let h = match tolerant_cells {
                    Some(c) => tolerant_hit_rate(e, &self.support, k, self.grid, c)?,
                    None => hit_rate_metric(e, x_true, k)?,
                };
                Ok((m, h))
            })
            .collect()
    }
}

/// One instance recovered by every configured method, for stem plots.
pub fn run_single(cfg: &ExperimentConfig, models: &Models, opts: SingleOptions) -> Result<RecoveryDump> {
    if cfg.methods.is_empty() {
        return Err(Error::arg("no methods selected"));
    }
    let d = cfg.dictionary()?;
    let rec = Recoverer::new(&d, models, &cfg.iteration_budgets, cfg.lambda)?;
    rec.check_methods(&cfg.methods)?;
    let inst = SparseInstance::generate(&d, cfg.k, opts.sigma2, cfg.offgrid, opts.seed)?;
    let estimates = cfg
        .methods
        .par_iter()
        .map(|&m| rec.recover(m, &inst.y))
        .collect::<Result<Vec<_>>>()?;
    Ok(RecoveryDump {
        grid: cfg.grid,
        methods: cfg.methods.clone(),
        x_true: Some(inst.x_true),
        support: inst.support,
        estimates,
    })
}
