use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use mhr_core::bench::{
    complexity_report, default_budgets, ingest_iq_grid, load_model, load_models, run_single, run_sweep, top_k,
    write_complexity_csv, write_metrics_csv, ExperimentConfig, IqGrid, Method, Recoverer, RecoveryDump,
    SingleOptions,
};
use mhr_core::harmonic::{build_dictionary, draw_sampling, Dataset, GridKind};
use mhr_core::nets::{init_network, train, Arch, ModelSidecar, TrainConfig};

#[derive(Parser)]
#[command(name = "mhr-bench", version, about = "Sparse harmonic retrieval experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a labelled dataset of sparse spectra and their observations.
    GenData(GenDataArgs),
    /// Train an unfolded network on a dataset.
    Train(TrainArgs),
    /// Noise sweep writing one metric row per method and noise point.
    Sweep(SweepArgs),
    /// Recover one instance with every method and dump the magnitudes.
    Single(SingleArgs),
    /// Parameter counts and per-layer times of dense and Toeplitz layers.
    Complexity(ComplexityArgs),
    /// Recover an externally supplied 2D IQ grid.
    Ingest(IngestArgs),
}

/// `--m` for a 1D grid, `--m1` and `--m2` for a 2D one.
#[derive(Args, Clone, Debug, Default)]
struct GridArgs {
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    /// Number of samples per observation.
    #[arg(long)]
    n: Option<usize>,
}

impl GridArgs {
    fn grid(&self) -> Result<Option<GridKind>> {
        match (self.m, self.m1, self.m2) {
            (None, None, None) => Ok(None),
            (Some(m), None, None) => Ok(Some(GridKind::OneD { m })),
            (None, Some(m1), Some(m2)) => Ok(Some(GridKind::TwoD { m1, m2 })),
            _ => bail!("give either --m or both --m1 and --m2"),
        }
    }
}

/// Experiment fields; flags override the `--config` document.
#[derive(Args, Debug)]
struct ExperimentArgs {
    /// JSON document with the experiment keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    /// Nonzeros per spectrum.
    #[arg(long)]
    k: Option<usize>,
    /// Noise points in dB, `10 log10(sigma^2)`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    noise_db: Option<Vec<f64>>,
    /// Add a noise-free point.
    #[arg(long)]
    noiseless: bool,
    /// Comma-separated: ISTA, FISTA, LISTA, ConvLISTA, LISTA-Toeplitz.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    ista_iters: Option<usize>,
    #[arg(long)]
    fista_iters: Option<usize>,
    /// Fixed regularisation for ISTA and FISTA.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Seed of the sampling set.
    #[arg(long)]
    dict_seed: Option<u64>,
    /// Trained model as METHOD=PATH; repeatable.
    #[arg(long = "model")]
    models: Vec<String>,
    /// Fractional grid offset of every component.
    #[arg(long)]
    offgrid: Option<f64>,
    /// Count hits within this many cells.
    #[arg(long)]
    tolerant_cells: Option<usize>,
    /// Record recovery times (rows are then no longer reproducible).
    #[arg(long)]
    timing: bool,
}

fn parse_models(specs: &[String]) -> Result<BTreeMap<Method, PathBuf>> {
    specs
        .iter()
        .map(|s| {
            let (m, p) = s.split_once('=').ok_or_else(|| anyhow!("--model expects METHOD=PATH, got {s:?}"))?;
            Ok((m.parse::<Method>()?, PathBuf::from(p)))
        })
        .collect()
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => read_json::<ExperimentConfig>(path)?,
            None => ExperimentConfig {
                grid: self.grid.grid()?.ok_or_else(|| anyhow!("--m or --m1/--m2 is required"))?,
                n: self.grid.n.ok_or_else(|| anyhow!("--n is required"))?,
                k: self.k.ok_or_else(|| anyhow!("--k is required"))?,
                noise_powers_db: Vec::new(),
                include_noiseless: false,
                methods: self.methods.clone().ok_or_else(|| anyhow!("--methods is required"))?,
                iteration_budgets: default_budgets(),
                lambda: None,
                trials_per_point: 1,
                seed: 0,
                dict_seed: 0,
                models: BTreeMap::new(),
                offgrid: None,
                tolerant_cells: None,
                timing: false,
            },
        };
        if let Some(g) = self.grid.grid()? {
            cfg.grid = g;
        }
        if let Some(n) = self.grid.n {
            cfg.n = n;
        }
        if let Some(k) = self.k {
            cfg.k = k;
        }
        if let Some(v) = &self.noise_db {
            cfg.noise_powers_db = v.clone();
        }
        cfg.include_noiseless |= self.noiseless;
        if let Some(v) = &self.methods {
            cfg.methods = v.clone();
        }
        if let Some(v) = self.ista_iters {
            cfg.iteration_budgets.insert(Method::Ista, v);
        }
        if let Some(v) = self.fista_iters {
            cfg.iteration_budgets.insert(Method::Fista, v);
        }
        cfg.lambda = self.lambda.or(cfg.lambda);
        if let Some(v) = self.trials {
            cfg.trials_per_point = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.dict_seed {
            cfg.dict_seed = v;
        }
        cfg.models.extend(parse_models(&self.models)?);
        cfg.offgrid = self.offgrid.or(cfg.offgrid);
        cfg.tolerant_cells = self.tolerant_cells.or(cfg.tolerant_cells);
        cfg.timing |= self.timing;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct GenDataArgs {
    /// JSON document supplying grid, n, k, offgrid and dict_seed.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    samples: usize,
    /// Noise power per complex sample.
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long)]
    offgrid: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    dict_seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Also write the first observation as an IQ grid (2D only).
    #[arg(long)]
    iq_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// JSON document with the training keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    /// Validation set; otherwise the tail of `--data` is held out.
    #[arg(long)]
    val: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    val_fraction: f64,
    /// lista, lista-toeplitz-1d, lista-toeplitz-2d or convlista.
    #[arg(long)]
    arch: Arch,
    #[arg(long, default_value_t = 10)]
    depth: usize,
    /// Sets the initial thresholds to lambda / L.
    #[arg(long, default_value_t = 0.1)]
    lambda: f64,
    /// Initialise from the true dictionary instead of estimating it.
    #[arg(long)]
    true_dictionary: bool,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss table.
    #[arg(long)]
    history: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SingleArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    /// Noise power of the instance.
    #[arg(long, default_value_t = 0.0)]
    sigma2: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ComplexityArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [512usize, 1024, 2048, 4096])]
    m: Vec<usize>,
    #[arg(long, default_value_t = 64)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    depth: usize,
    /// Measure per-layer times.
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "ISTA,FISTA")]
    methods: Vec<Method>,
    #[arg(long = "model")]
    models: Vec<String>,
    /// Strongest cells to list per method.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    ista_iters: Option<usize>,
    #[arg(long)]
    fista_iters: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a, T: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a T,
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    s.into()
}

fn write_manifest<T: Serialize>(out: &Path, command: &str, config: &T) -> Result<()> {
    let m = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config,
    };
    std::fs::write(manifest_path(out), serde_json::to_string_pretty(&m)? + "\n")?;
    Ok(())
}

/// Runs `write` against `out` or stdout, then records the manifest.
fn emit<T: Serialize>(
    out: Option<&Path>,
    command: &str,
    config: &T,
    write: impl FnOnce(&mut dyn Write) -> mhr_core::Result<()>,
) -> Result<()> {
    match out {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
            write(&mut w)?;
            w.flush()?;
            write_manifest(path, command, config)?;
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn gen_data(a: GenDataArgs) -> Result<()> {
    let base: Option<ExperimentConfig> = a.config.as_deref().map(read_json).transpose()?;
    let grid = a
        .grid
        .grid()?
        .or(base.as_ref().map(|c| c.grid))
        .ok_or_else(|| anyhow!("--m or --m1/--m2 is required"))?;
    let n = a.grid.n.or(base.as_ref().map(|c| c.n)).ok_or_else(|| anyhow!("--n is required"))?;
    let k = a.k.or(base.as_ref().map(|c| c.k)).ok_or_else(|| anyhow!("--k is required"))?;
    let offgrid = a.offgrid.or(base.as_ref().and_then(|c| c.offgrid));
    let dict_seed = a.dict_seed.or(base.as_ref().map(|c| c.dict_seed)).unwrap_or(0);

    let d = build_dictionary(grid, draw_sampling(grid.size(), n, dict_seed)?)?;
    let ds = Dataset::generate(&d, a.samples, k, a.sigma2, offgrid, a.seed)?;
    ds.write(&a.out)?;
    if let Some(iq) = &a.iq_out {
        if ds.is_empty() {
            bail!("no samples to write as an IQ grid");
        }
        IqGrid::from_observation(&d, &ds.sample(0).0)?.write(iq)?;
    }
    write_manifest(&a.out, "gen-data", &ds.meta)?;
    eprintln!("wrote {} samples to {}", ds.len(), a.out.display());
    Ok(())
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let mut cfg: TrainConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => TrainConfig::default(),
    };
    if let Some(v) = a.lr {
        cfg.learning_rate = v;
    }
    if let Some(v) = a.batch {
        cfg.batch_size = v;
    }
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.patience {
        cfg.lr_decay_patience = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }

    let data = Dataset::read(&a.data)?;
    let (train_ds, val_ds) = match &a.val {
        Some(p) => (data, Dataset::read(p)?),
        None => {
            if !(a.val_fraction > 0.0 && a.val_fraction < 1.0) {
                bail!("--val-fraction must lie in (0, 1)");
            }
            let n_val = ((data.len() as f64 * a.val_fraction).round() as usize).max(1);
            if n_val >= data.len() {
                bail!("dataset too small to hold out a validation split");
            }
            let cut = data.len() - n_val;
            let train: Vec<usize> = (0..cut).collect();
            let val: Vec<usize> = (cut..data.len()).collect();
            (data.select(&train), data.select(&val))
        }
    };
    let d = train_ds.dictionary()?;
    let estimate = (!a.true_dictionary).then_some(&train_ds);
    let init = init_network(a.arch, &d, a.depth, a.lambda, estimate)?;
    let (net, report) = train(&init, &train_ds, &val_ds, &cfg)?;

    let sidecar = ModelSidecar {
        lambda: Some(a.lambda),
        omega: d.sampling().indices().to_vec(),
        sampling_seed: d.sampling().seed(),
        train: Some(cfg.clone()),
        report: Some(report.clone()),
        ..ModelSidecar::describe(&net)
    };
    net.save(&a.out, &sidecar)?;
    write_manifest(&a.out, "train", &sidecar)?;
    if let Some(h) = &a.history {
        let mut w = BufWriter::new(File::create(h)?);
        writeln!(w, "epoch,train_loss,val_nmse")?;
        writeln!(w, "0,NA,{:.9}", report.initial_val_nmse)?;
        for (e, (l, v)) in report.loss_history.iter().zip(&report.val_history).enumerate() {
            writeln!(w, "{},{l:.9},{v:.9}", e + 1)?;
        }
        w.flush()?;
    }
    eprintln!(
        "validation NMSE {:.2} dB -> {:.2} dB (best epoch {})",
        20.0 * report.initial_val_nmse.log10(),
        20.0 * report.best_val_nmse.log10(),
        report.best_epoch
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = a.exp.resolve()?;
    let d = cfg.dictionary()?;
    let models = load_models(&cfg, &d)?;
    let rows = run_sweep(&cfg, &models)?;
    emit(a.out.as_deref(), "sweep", &cfg, |w| write_metrics_csv(&rows, w))
}

fn single(a: SingleArgs) -> Result<()> {
    let cfg = a.exp.resolve()?;
    let d = cfg.dictionary()?;
    let models = load_models(&cfg, &d)?;
    let opts = SingleOptions {
        sigma2: a.sigma2,
        seed: cfg.seed,
    };
    let dump = run_single(&cfg, &models, opts)?;
    if cfg.k > 0 {
        for (m, h) in dump.hit_rates(cfg.k, cfg.tolerant_cells)? {
            eprintln!("{m}: hit rate {h:.3}");
        }
    }
    #[derive(Serialize)]
    struct SingleManifest<'a> {
        experiment: &'a ExperimentConfig,
        options: SingleOptions,
    }
    let man = SingleManifest {
        experiment: &cfg,
        options: opts,
    };
    emit(a.out.as_deref(), "single", &man, |w| dump.write_csv(w))
}

fn complexity(a: ComplexityArgs) -> Result<()> {
    let rows = complexity_report(&a.m, a.n, a.depth, a.timing, a.seed)?;
    #[derive(Serialize)]
    struct ComplexityManifest<'a> {
        m: &'a [usize],
        n: usize,
        depth: usize,
        timing: bool,
        seed: u64,
    }
    let man = ComplexityManifest {
        m: &a.m,
        n: a.n,
        depth: a.depth,
        timing: a.timing,
        seed: a.seed,
    };
    emit(a.out.as_deref(), "complexity", &man, |w| write_complexity_csv(&rows, w))
}

fn ingest(a: IngestArgs) -> Result<()> {
    let (y, d) = ingest_iq_grid(&a.input)?;
    let GridKind::TwoD { m2, .. } = d.kind() else {
        unreachable!("IQ grids are two-dimensional")
    };
    let mut models = BTreeMap::new();
    for (m, path) in parse_models(&a.models)? {
        if a.methods.contains(&m) {
            models.insert(m, load_model(m, &path, &d)?);
        }
    }
    let mut budgets = default_budgets();
    if let Some(v) = a.ista_iters {
        budgets.insert(Method::Ista, v);
    }
    if let Some(v) = a.fista_iters {
        budgets.insert(Method::Fista, v);
    }
    let rec = Recoverer::new(&d, &models, &budgets, a.lambda)?;
    rec.check_methods(&a.methods)?;
    let estimates = a
        .methods
        .iter()
        .map(|&m| rec.recover(m, &y))
        .collect::<mhr_core::Result<Vec<_>>>()?;
    for (m, e) in a.methods.iter().zip(&estimates) {
        let cells: Vec<String> = top_k(e, a.k)
            .into_iter()
            .map(|i| format!("({}, {})", i / m2, i % m2))
            .collect();
        eprintln!("{m}: {}", cells.join(" "));
    }
    let dump = RecoveryDump {
        grid: d.kind(),
        methods: a.methods.clone(),
        x_true: None,
        support: Vec::new(),
        estimates,
    };
    #[derive(Serialize)]
    struct IngestManifest<'a> {
        input: &'a Path,
        methods: &'a [Method],
        models: &'a [String],
        lambda: Option<f64>,
        iteration_budgets: &'a BTreeMap<Method, usize>,
    }
    let man = IngestManifest {
        input: &a.input,
        methods: &a.methods,
        models: &a.models,
        lambda: a.lambda,
        iteration_budgets: &budgets,
    };
    emit(a.out.as_deref(), "ingest", &man, |w| dump.write_csv(w))
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::GenData(a) => gen_data(a),
        Cmd::Train(a) => train_cmd(a),
        Cmd::Sweep(a) => sweep(a),
        Cmd::Single(a) => single(a),
        Cmd::Complexity(a) => complexity(a),
        Cmd::Ingest(a) => ingest(a),
    }
}
