//! Replicated study orchestration: simulate, fit every method, score, aggregate, export.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{fit_gp_mcmc, GpConfig};
use crate::hmc::HmcConfig;
use crate::methods::{fit_bnn_mcmc, fit_bnn_vi, fit_ensemble, fit_mc_dropout, EnsembleConfig, ViConfig};
use crate::metrics::{credible_intervals, evaluate, EceVariant, MetricSettings, MetricsReport};
use crate::network::{Activation, Architecture, OptimizerConfig, PriorFamily, PriorSpec};
use crate::numeric::{mean, sample_std};
use crate::rng::{derive_seed, stream};
use crate::samples::{MethodTag, ProbabilitySampleSet};
use crate::simulator::{eval_grid, fmt17, simulate, Bounds, Dataset, Point, Tcc, TccConfig};

/// Failure fraction above which a method is flagged incomplete.
pub const MAX_FAILURE_FRACTION: f64 = 0.2;

/// Replicate count selected by `--paper-scale`.
pub const PAPER_SCALE_REPLICATES: usize = 100;

const DATA_STREAM: u64 = 0;
const FIT_STREAM: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub replicates: usize,
    pub seed: u64,
    pub alpha: f64,
    pub delta: f64,
    pub ece_bins: usize,
    pub ece_variant: EceVariant,
    pub methods: Vec<MethodTag>,
    pub n_train: usize,
    pub n_test: usize,
    pub grid_bounds: Bounds,
    pub grid_resolution: usize,
    /// Replicate whose fits are exported as grids; `None` disables grid export.
    pub grid_replicate: Option<usize>,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    pub jobs: usize,
    pub export_datasets: bool,
    pub export_samples: bool,
}

impl Default for StudySection {
    fn default() -> Self {
        StudySection {
            replicates: 20,
            seed: 20_240_101,
            alpha: 0.1,
            delta: 0.2,
            ece_bins: 10,
            ece_variant: EceVariant::PositiveFrequency,
            methods: MethodTag::ALL.to_vec(),
            n_train: 500,
            n_test: 2000,
            grid_bounds: [[-5.0, 5.0], [-5.0, 5.0]],
            grid_resolution: 100,
            grid_replicate: Some(0),
            output_dir: PathBuf::from("results"),
            jobs: 0,
            export_datasets: false,
            export_samples: false,
        }
    }
}

/// Architecture, prior and optimizer knobs shared by every network-based method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSection {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub prior_std: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: Option<usize>,
}

impl Default for NetworkSection {
    fn default() -> Self {
        let arch = Architecture::default();
        let opt = OptimizerConfig::default();
        NetworkSection {
            hidden_layers: arch.hidden_layers,
            activation: arch.activation,
            prior_std: PriorSpec::default().std,
            learning_rate: opt.learning_rate,
            beta1: opt.beta1,
            beta2: opt.beta2,
            eps: opt.eps,
            epochs: opt.epochs,
            batch_size: opt.batch_size,
        }
    }
}

impl NetworkSection {
    pub fn architecture(&self) -> Architecture {
        Architecture { input_dim: 2, hidden_layers: self.hidden_layers.clone(), activation: self.activation }
    }

    pub fn prior(&self) -> PriorSpec {
        PriorSpec { family: PriorFamily::Gaussian, std: self.prior_std }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }
}

/// Member count shared by the bootstrap and deep ensembles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnsembleSection {
    pub members: usize,
}

impl Default for EnsembleSection {
    fn default() -> Self {
        EnsembleSection { members: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropoutSection {
    pub rate: f64,
    pub passes: usize,
}

impl Default for DropoutSection {
    fn default() -> Self {
        DropoutSection { rate: 0.2, passes: 100 }
    }
}

/// Full study configuration; mirrors the sections of the config file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudyConfig {
    pub study: StudySection,
    pub simulator: TccConfig,
    pub network: NetworkSection,
    pub hmc: HmcConfig,
    pub vi: ViConfig,
    pub ensemble: EnsembleSection,
    pub dropout: DropoutSection,
    pub gp: GpConfig,
}

impl StudyConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: StudyConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: StudyConfig = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("study config is always representable as TOML")
    }

    pub fn metric_settings(&self) -> MetricSettings {
        MetricSettings {
            alpha: self.study.alpha,
            delta: self.study.delta,
            ece_bins: self.study.ece_bins,
            ece_variant: self.study.ece_variant,
        }
    }

    /// Checks every section; all failures are reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        let s = &self.study;
        let cfg_err = |msg: &str| Err(Error::Config(msg.into()));
        if s.replicates == 0 {
            return cfg_err("study.replicates must be >= 1");
        }
        if !(s.alpha > 0.0 && s.alpha < 1.0) {
            return cfg_err("study.alpha must lie in (0, 1)");
        }
        if !(s.delta > 0.0 && s.delta < 1.0) {
            return cfg_err("study.delta must lie in (0, 1)");
        }
        if s.ece_bins == 0 {
            return cfg_err("study.ece_bins must be >= 1");
        }
        if s.methods.is_empty() {
            return cfg_err("study.methods must name at least one method");
        }
        let mut seen = s.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != s.methods.len() {
            return cfg_err("study.methods lists a method twice");
        }
        if s.n_train < 2 || s.n_test < 1 {
            return cfg_err("study.n_train must be >= 2 and study.n_test >= 1");
        }
        if let Some(r) = s.grid_replicate {
            if r >= s.replicates {
                return cfg_err("study.grid_replicate must be below study.replicates");
            }
            crate::simulator::grid_points(&s.grid_bounds, s.grid_resolution).map_err(as_config)?;
        }
        Tcc::new(&self.simulator).map_err(as_config)?;
        let n = &self.network;
        n.architecture().validate().map_err(as_config)?;
        n.prior().validate().map_err(as_config)?;
        if n.epochs == 0 || !(n.learning_rate > 0.0) || n.batch_size == Some(0) {
            return cfg_err("network needs epochs >= 1, learning_rate > 0 and batch_size >= 1");
        }
        self.hmc.validate().map_err(as_config)?;
        self.vi.validate().map_err(as_config)?;
        self.ensemble_config(false).validate().map_err(as_config)?;
        let d = &self.dropout;
        if !(d.rate > 0.0 && d.rate < 1.0) || d.passes < 2 {
            return cfg_err("dropout.rate must lie in (0, 1) and dropout.passes be >= 2");
        }
        self.gp.validate().map_err(as_config)?;
        Ok(())
    }

    pub fn ensemble_config(&self, resample: bool) -> EnsembleConfig {
        EnsembleConfig { members: self.ensemble.members, resample, dropout_rate: 0.0 }
    }

    pub fn dropout_config(&self) -> EnsembleConfig {
        EnsembleConfig { members: self.dropout.passes, resample: false, dropout_rate: self.dropout.rate }
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

/// Seeds of one replicate's training and test sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicateSeeds {
    pub replicate: usize,
    pub train: u64,
    pub test: u64,
}

pub fn replicate_seeds(master: u64, replicate: usize) -> ReplicateSeeds {
    ReplicateSeeds {
        replicate,
        train: derive_seed(master, &[DATA_STREAM, replicate as u64, 0]),
        test: derive_seed(master, &[DATA_STREAM, replicate as u64, 1]),
    }
}

/// Training and test sets of replicate `r`.
pub fn replicate_data(cfg: &StudyConfig, replicate: usize) -> Result<(Dataset, Dataset)> {
    let seeds = replicate_seeds(cfg.study.seed, replicate);
    let train = simulate(&TccConfig { seed: seeds.train, ..cfg.simulator.clone() }, cfg.study.n_train)?;
    let test = simulate(&TccConfig { seed: seeds.test, ..cfg.simulator.clone() }, cfg.study.n_test)?;
    Ok((train, test))
}

/// Fits `method` to `train` and evaluates its sample set at `eval_points`.
/// The stream depends only on the master seed, the replicate and the method.
pub fn fit_method(
    cfg: &StudyConfig,
    method: MethodTag,
    replicate: usize,
    train: &Dataset,
    eval_points: &[Point],
) -> Result<ProbabilitySampleSet> {
    let mut rng = stream(cfg.study.seed, &[FIT_STREAM, replicate as u64, method.stream_id()]);
    let arch = cfg.network.architecture();
    let prior = cfg.network.prior();
    let opt = cfg.network.optimizer();
    match method {
        MethodTag::BnnMcmc => fit_bnn_mcmc(&arch, train, &prior, &cfg.hmc, eval_points, &mut rng),
        MethodTag::BnnVi => fit_bnn_vi(&arch, train, &prior, &cfg.vi, eval_points, &mut rng),
        MethodTag::Bootstrap => {
            fit_ensemble(&arch, train, &prior, &cfg.ensemble_config(true), &opt, eval_points, &mut rng)
        }
        MethodTag::DeepEnsemble => {
            fit_ensemble(&arch, train, &prior, &cfg.ensemble_config(false), &opt, eval_points, &mut rng)
        }
        MethodTag::McDropout => fit_mc_dropout(&arch, train, &prior, &cfg.dropout_config(), &opt, eval_points, &mut rng),
        MethodTag::GpMcmc => fit_gp_mcmc(train, &cfg.gp, eval_points, &mut rng),
    }
}

/// Mean and dispersion of one metric across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dispersion {
    #[serde(deserialize_with = "null_as_nan")]
    pub mean: f64,
    /// Sample standard deviation (n - 1); 0 for a single replicate.
    #[serde(deserialize_with = "null_as_nan")]
    pub std: f64,
    /// `std / sqrt(replicates)`.
    #[serde(deserialize_with = "null_as_nan")]
    pub std_error: f64,
}

/// JSON has no NaN; a method without completed replicates stores null.
fn null_as_nan<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

impl Dispersion {
    pub fn of(values: &[f64]) -> Dispersion {
        if values.is_empty() {
            return Dispersion { mean: f64::NAN, std: f64::NAN, std_error: f64::NAN };
        }
        let std = if values.len() > 1 { sample_std(values) } else { 0.0 };
        Dispersion { mean: mean(values), std, std_error: std / (values.len() as f64).sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: MethodTag,
    pub display_name: String,
    pub replicates_completed: usize,
    pub replicates_failed: usize,
    pub incomplete: bool,
    pub coverage: Dispersion,
    pub mean_width: Dispersion,
    pub ece: Dispersion,
    pub accuracy: Dispersion,
    pub hcs_proportion: Dispersion,
    pub per_replicate: Vec<MetricsReport>,
    pub failures: Vec<ReplicateFailure>,
    /// Method diagnostics (acceptance rates, ELBO traces, retries), one map per completed replicate.
    pub diagnostics: Vec<BTreeMap<String, serde_json::Value>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeStats {
    pub total_seconds: f64,
    pub mean_seconds_per_replicate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub software: String,
    pub version: String,
    pub master_seed: u64,
    pub jobs: usize,
    pub seed_scheme: String,
    pub replicate_seeds: Vec<ReplicateSeeds>,
    pub point_prediction: String,
    pub quantile_rule: String,
    pub config: StudyConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub methods: Vec<MethodSummary>,
    /// Wall-clock timings; not part of the reproducible metric values.
    pub runtime: BTreeMap<String, RuntimeStats>,
    pub provenance: Provenance,
}

impl StudySummary {
    pub fn is_complete(&self) -> bool {
        self.methods.iter().all(|m| !m.incomplete)
    }

    pub fn method(&self, tag: MethodTag) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == tag)
    }

    pub fn read_json(path: &Path) -> Result<StudySummary> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), msg: e.to_string() })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Per-method surfaces over the evaluation grid of one replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct GridExport {
    pub replicate: usize,
    pub points: Vec<Point>,
    pub true_prob: Vec<f64>,
    /// Centroid of the replicate's training features.
    pub centroid: Point,
    pub surfaces: Vec<GridSurface>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSurface {
    pub method: MethodTag,
    pub mean_prediction: Vec<f64>,
    pub interval_width: Vec<f64>,
}

impl GridSurface {
    fn from_samples(samples: &ProbabilitySampleSet, alpha: f64) -> Result<GridSurface> {
        let cis = credible_intervals(samples, alpha)?;
        Ok(GridSurface {
            method: samples.method,
            mean_prediction: samples.column_means(),
            interval_width: cis.iter().map(|c| c.width()).collect(),
        })
    }

    /// Mean interval width over grid nodes farther than `radius` from `center`.
    pub fn mean_width_beyond(&self, points: &[Point], center: Point, radius: f64) -> Option<f64> {
        let far: Vec<f64> = points
            .iter()
            .zip(&self.interval_width)
            .filter(|(p, _)| ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2)).sqrt() > radius)
            .map(|(_, &w)| w)
            .collect();
        (!far.is_empty()).then(|| mean(&far))
    }
}

/// Everything a study run produces before it is written to disk.
#[derive(Debug, Clone)]
pub struct StudyRun {
    pub summary: StudySummary,
    pub grids: Option<GridExport>,
    pub datasets: Vec<(usize, Dataset, Dataset)>,
    pub samples: Vec<(usize, ProbabilitySampleSet)>,
}

struct CellOutcome {
    replicate: usize,
    method: MethodTag,
    seconds: f64,
    result: Result<(MetricsReport, BTreeMap<String, serde_json::Value>)>,
    surface: Option<GridSurface>,
    samples: Option<ProbabilitySampleSet>,
}

fn thread_pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {jobs} worker threads: {e}")))
}

/// Runs every (replicate, method) cell and aggregates the scores.
/// Metric values depend only on the configuration, never on `jobs`.
pub fn run_study(cfg: &StudyConfig) -> Result<StudyRun> {
    cfg.validate()?;
    let s = &cfg.study;
    let settings = cfg.metric_settings();
    let pool = thread_pool(s.jobs)?;

    let data: Vec<(Dataset, Dataset)> =
        pool.install(|| (0..s.replicates).into_par_iter().map(|r| replicate_data(cfg, r)).collect::<Result<_>>())?;
    let grid = match s.grid_replicate {
        Some(_) => Some(eval_grid(&cfg.simulator, &s.grid_bounds, s.grid_resolution)?),
        None => None,
    };

    let cells: Vec<(usize, MethodTag)> =
        (0..s.replicates).flat_map(|r| s.methods.iter().map(move |&m| (r, m))).collect();
    let outcomes: Vec<CellOutcome> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(r, method)| {
                let (train, test) = &data[r];
                let with_grid = grid.as_ref().filter(|_| s.grid_replicate == Some(r));
                let mut eval = test.features.clone();
                if let Some((pts, _)) = with_grid {
                    eval.extend_from_slice(pts);
                }
                let start = Instant::now();
                let fitted = fit_method(cfg, method, r, train, &eval);
                let seconds = start.elapsed().as_secs_f64();
                let mut surface = None;
                let mut kept = None;
                let result = fitted.and_then(|all| {
                    let m = test.len();
                    let on_test = if with_grid.is_some() { all.slice_points(0..m) } else { all.clone() };
                    if with_grid.is_some() {
                        surface = Some(GridSurface::from_samples(&all.slice_points(m..all.num_points()), s.alpha)?);
                    }
                    let report = evaluate(&on_test, &test.labels, test.true_probs.as_deref(), &settings, r)?;
                    let meta = on_test.meta.clone();
                    if s.export_samples {
                        kept = Some(on_test);
                    }
                    Ok((report, meta))
                });
                CellOutcome { replicate: r, method, seconds, result, surface, samples: kept }
            })
            .collect()
    });

    let mut methods = Vec::with_capacity(s.methods.len());
    let mut runtime = BTreeMap::new();
    let mut surfaces = Vec::new();
    let mut samples = Vec::new();
    for &method in &s.methods {
        let mine: Vec<&CellOutcome> = outcomes.iter().filter(|o| o.method == method).collect();
        let mut reports = Vec::new();
        let mut diagnostics = Vec::new();
        let mut failures = Vec::new();
        for o in &mine {
            match &o.result {
                Ok((rep, meta)) => {
                    reports.push(rep.clone());
                    diagnostics.push(meta.clone());
                }
                Err(e) => failures.push(ReplicateFailure { replicate: o.replicate, error: e.to_string() }),
            }
        }
        let total: f64 = mine.iter().map(|o| o.seconds).sum();
        runtime.insert(
            method.as_str().to_string(),
            RuntimeStats { total_seconds: total, mean_seconds_per_replicate: total / mine.len() as f64 },
        );
        let col = |f: fn(&MetricsReport) -> f64| Dispersion::of(&reports.iter().map(f).collect::<Vec<_>>());
        let failed = failures.len();
        methods.push(MethodSummary {
            method,
            display_name: method.display_name().to_string(),
            replicates_completed: reports.len(),
            replicates_failed: failed,
            incomplete: reports.is_empty() || failed as f64 > MAX_FAILURE_FRACTION * s.replicates as f64,
            coverage: col(|r| r.coverage),
            mean_width: col(|r| r.mean_width),
            ece: col(|r| r.ece),
            accuracy: col(|r| r.accuracy),
            hcs_proportion: col(|r| r.hcs_proportion),
            per_replicate: reports,
            failures,
            diagnostics,
        });
    }
    for o in outcomes {
        if let Some(sf) = o.surface {
            surfaces.push(sf);
        }
        if let Some(set) = o.samples {
            samples.push((o.replicate, set));
        }
    }

    let grids = match (s.grid_replicate, grid) {
        (Some(r), Some((points, true_prob))) => Some(GridExport {
            replicate: r,
            points,
            true_prob,
            centroid: data[r].0.centroid(),
            surfaces,
        }),
        _ => None,
    };
    let datasets = if s.export_datasets {
        data.into_iter().enumerate().map(|(r, (a, b))| (r, a, b)).collect()
    } else {
        Vec::new()
    };
    Ok(StudyRun { summary: StudySummary { methods, runtime, provenance: provenance(cfg) }, grids, datasets, samples })
}

fn provenance(cfg: &StudyConfig) -> Provenance {
    Provenance {
        software: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        master_seed: cfg.study.seed,
        jobs: cfg.study.jobs,
        seed_scheme: "data: derive_seed(master, [0, r, 0|1]); fits: stream(master, [1, r, method_id])"
            .to_string(),
        replicate_seeds: (0..cfg.study.replicates).map(|r| replicate_seeds(cfg.study.seed, r)).collect(),
        point_prediction: "posterior predictive mean (column mean of the sample set)".to_string(),
        quantile_rule: "equal-tailed, linear interpolation between order statistics at (S - 1) * q".to_string(),
        config: cfg.clone(),
    }
}

/// Fits every configured method on replicate `r` and evaluates it on the grid only.
pub fn export_grids(cfg: &StudyConfig, replicate: usize) -> Result<GridExport> {
    cfg.validate()?;
    let s = &cfg.study;
    if replicate >= s.replicates {
        return Err(Error::Config(format!("replicate {replicate} is outside 0..{}", s.replicates)));
    }
    let (train, _) = replicate_data(cfg, replicate)?;
    let (points, true_prob) = eval_grid(&cfg.simulator, &s.grid_bounds, s.grid_resolution)?;
    let pool = thread_pool(s.jobs)?;
    let surfaces = pool.install(|| {
        s.methods
            .par_iter()
            .map(|&m| {
                let set = fit_method(cfg, m, replicate, &train, &points)?;
                GridSurface::from_samples(&set, s.alpha)
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(GridExport { replicate, points, true_prob, centroid: train.centroid(), surfaces })
}

/// Creates `dir` and proves it writable, so I/O problems surface before any fitting.
pub fn prepare_output_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-probe");
    fs::File::create(&probe)
        .and_then(|mut f| f.write_all(b"ok"))
        .map_err(|e| Error::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes `grids/<method>.csv` under `dir`.
pub fn write_grids(dir: &Path, grids: &GridExport) -> Result<()> {
    let gdir = dir.join("grids");
    fs::create_dir_all(&gdir).map_err(|e| Error::io(&gdir, e))?;
    for sf in &grids.surfaces {
        let path = gdir.join(format!("{}.csv", sf.method.as_str()));
        let mut out = String::from("x1,x2,mean_prediction,interval_width,true_prob\n");
        for (i, p) in grids.points.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                fmt17(p[0]),
                fmt17(p[1]),
                fmt17(sf.mean_prediction[i]),
                fmt17(sf.interval_width[i]),
                fmt17(grids.true_prob[i])
            ));
        }
        write_text(&path, &out)?;
    }
    let meta = serde_json::json!({ "replicate": grids.replicate, "training_centroid": grids.centroid });
    write_text(&gdir.join("grid_meta.json"), &serde_json::to_string_pretty(&meta).expect("json"))
}

/// Reads one `grids/<method>.csv` file back as (points, mean, width, truth).
pub fn read_grid_csv(path: &Path) -> Result<(Vec<Point>, GridSurfaceColumns)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse { path: path.into(), msg: e.to_string() })?;
    let mut pts = Vec::new();
    let mut cols = GridSurfaceColumns::default();
    for rec in rdr.deserialize::<(f64, f64, f64, f64, f64)>() {
        let (x1, x2, m, w, t) = rec.map_err(|e| Error::Parse { path: path.into(), msg: e.to_string() })?;
        pts.push([x1, x2]);
        cols.mean_prediction.push(m);
        cols.interval_width.push(w);
        cols.true_prob.push(t);
    }
    Ok((pts, cols))
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GridSurfaceColumns {
    pub mean_prediction: Vec<f64>,
    pub interval_width: Vec<f64>,
    pub true_prob: Vec<f64>,
}

/// Table II shaped markdown: `value (std)` per metric.
pub fn render_table(summary: &StudySummary) -> String {
    let mut out = String::from(
        "| Method | Coverage (sd) | Width (sd) | ECE (sd) | Accuracy (sd) | HCS prop. (sd) | Replicates | Status |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    let cell = |d: &Dispersion| {
        if d.mean.is_nan() {
            "n/a".to_string()
        } else {
            format!("{:.3} ({:.3})", d.mean, d.std)
        }
    };
    for m in &summary.methods {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {} | {} |\n",
            m.display_name,
            cell(&m.coverage),
            cell(&m.mean_width),
            cell(&m.ece),
            cell(&m.accuracy),
            cell(&m.hcs_proportion),
            m.replicates_completed,
            if m.incomplete { "INCOMPLETE" } else { "ok" }
        ));
    }
    out
}

/// Machine-readable table with both dispersion measures.
pub fn render_csv(summary: &StudySummary) -> String {
    let mut out = String::from("method");
    for name in ["coverage", "mean_width", "ece", "accuracy", "hcs_proportion"] {
        out.push_str(&format!(",{name}_mean,{name}_std,{name}_std_error"));
    }
    out.push_str(",replicates_completed,replicates_failed,incomplete\n");
    for m in &summary.methods {
        out.push_str(m.method.as_str());
        for d in [&m.coverage, &m.mean_width, &m.ece, &m.accuracy, &m.hcs_proportion] {
            out.push_str(&format!(",{},{},{}", fmt17(d.mean), fmt17(d.std), fmt17(d.std_error)));
        }
        out.push_str(&format!(",{},{},{}\n", m.replicates_completed, m.replicates_failed, m.incomplete));
    }
    out
}

/// Writes summary.json, table.md, table.csv and every optional export.
pub fn write_study(dir: &Path, run: &StudyRun) -> Result<()> {
    prepare_output_dir(dir)?;
    write_text(&dir.join("summary.json"), &run.summary.to_json())?;
    write_text(&dir.join("table.md"), &render_table(&run.summary))?;
    write_text(&dir.join("table.csv"), &render_csv(&run.summary))?;
    if let Some(g) = &run.grids {
        write_grids(dir, g)?;
    }
    if !run.datasets.is_empty() {
        let ddir = dir.join("datasets");
        fs::create_dir_all(&ddir).map_err(|e| Error::io(&ddir, e))?;
        for (r, train, test) in &run.datasets {
            train.write_csv(&ddir.join(format!("replicate_{r}.csv")))?;
            test.write_csv(&ddir.join(format!("replicate_{r}_test.csv")))?;
        }
    }
    if !run.samples.is_empty() {
        let sdir = dir.join("samples");
        fs::create_dir_all(&sdir).map_err(|e| Error::io(&sdir, e))?;
        for (r, set) in &run.samples {
            set.write_binary(&sdir.join(format!("{}_replicate_{r}.bin", set.method.as_str())))?;
        }
    }
    Ok(())
}

/// Checks the output directory, runs the study and writes every artifact.
pub fn execute(cfg: &StudyConfig) -> Result<StudyRun> {
    cfg.validate()?;
    prepare_output_dir(&cfg.study.output_dir)?;
    let run = run_study(cfg)?;
    write_study(&cfg.study.output_dir, &run)?;
    Ok(run)
}
