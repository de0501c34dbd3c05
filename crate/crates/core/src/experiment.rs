//! The baseline and Gaussianized pipelines, end to end.
//!
//! Each subcommand reads its inputs from and writes its outputs to an output
//! directory, so the stages can run separately or all at once:
//!
//! ```text
//! out/
//!   config.json                 effective configuration
//!   spec.json                   mixture spec
//!   train.csv heldout.csv       headerless data
//!   stack.json                  fitted Gaussianizer
//!   train_gaussianized.csv
//!   diagnostics.json            per-layer KS, correlation, round-trip error
//!   runs/{pipeline}_w{width}/
//!     params.json schedule.json loss.csv snapshots.csv ll_curve.csv
//!   plots/*.svg
//!   summary.json
//! ```
//!
//! All randomness is derived from the single top-level `seed`: data, ICA
//! initialization, network initialization, minibatches and sampling each get
//! their own stream. Baseline and Gaussianized runs of the same width share
//! their initialization, training and sampling seeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::ddpm::{self, DiffusionSchedule, EpsNet, ScheduleConfig, Snapshot, TrainConfig};
use crate::error::{Error, Result};
use crate::evalkit::{
    final_window_mean, ks_statistic, ll_vs_step, max_abs_offdiag_corr, round_trip_error, LlCurve,
    Pipeline, RoundTrip,
};
use crate::gaussianizer::{
    fit_gaussianizer, gaussianizer_inverse, GaussianizerConfig, GaussianizerStack,
    LayerDiagnostics,
};
use crate::gmm::{reference_log_likelihood, sample_gmm, GmmSpec};
use crate::plot::{self, Chart, Series};
use crate::rng::derive_seed;

/// Mixture given inline or as a path to a spec file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GmmSource {
    Path(PathBuf),
    Inline(GmmSpec),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// `None` uses [`GmmSpec::default_2d`].
    pub gmm: Option<GmmSource>,
    pub seed: u64,
    pub n_train: usize,
    pub n_heldout: usize,
    /// First hidden width `w`; the network uses `[w, 2w, 4w]`.
    pub widths: Vec<usize>,
    pub pipelines: Vec<Pipeline>,
    /// The nested ICA seed is replaced by one derived from `seed`.
    pub gaussianizer: GaussianizerConfig,
    pub schedule: ScheduleConfig,
    /// The nested seed is replaced by one derived from `seed` and the width.
    pub train: TrainConfig,
    pub snapshot_steps: Vec<usize>,
    pub n_generated: usize,
    pub reference_samples: usize,
    /// Concurrent jobs for `run-all`; 0 means one per available core.
    pub jobs: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            gmm: None,
            seed: 0,
            n_train: 20_000,
            n_heldout: 2_000,
            widths: vec![16, 32, 64, 128],
            pipelines: Pipeline::ALL.to_vec(),
            gaussianizer: GaussianizerConfig::default(),
            schedule: ScheduleConfig::default(),
            train: TrainConfig::default(),
            snapshot_steps: (0..=100).step_by(10).collect(),
            n_generated: 2_000,
            reference_samples: 100_000,
            jobs: 0,
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    /// Reads a JSON config. A relative mixture path is resolved against the
    /// config file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        if let Some(GmmSource::Path(p)) = &mut cfg.gmm {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.widths.is_empty() {
            return bad("at least one width is required".into());
        }
        if let Some(w) = self.widths.iter().find(|&&w| w == 0) {
            return bad(format!("width {w} is not positive"));
        }
        if self.pipelines.is_empty() {
            return bad("at least one pipeline is required".into());
        }
        if self.n_train < 10 {
            return bad(format!("n_train must be at least 10, got {}", self.n_train));
        }
        if self.n_heldout == 0 || self.n_generated == 0 {
            return bad("n_heldout and n_generated must be positive".into());
        }
        if self.reference_samples < 1000 {
            return bad(format!(
                "reference_samples must be at least 1000, got {}",
                self.reference_samples
            ));
        }
        if self.gaussianizer.iterations == 0 {
            return bad("gaussianizer.iterations must be at least 1".into());
        }
        self.gaussianizer.ica.validate()?;
        self.train.validate()?;
        if self.train.iterations == 0 {
            return bad("train.iterations must be at least 1".into());
        }
        self.schedule.build()?;
        if let Some(s) = self.snapshot_steps.iter().find(|&&s| s > self.schedule.steps) {
            return bad(format!(
                "snapshot step {s} exceeds the schedule's {} steps",
                self.schedule.steps
            ));
        }
        if self.snapshot_steps.is_empty() {
            return bad("at least one snapshot step is required".into());
        }
        Ok(())
    }

    pub fn spec(&self) -> Result<GmmSpec> {
        match &self.gmm {
            None => Ok(GmmSpec::default_2d()),
            Some(GmmSource::Inline(spec)) => Ok(spec.clone()),
            Some(GmmSource::Path(p)) => GmmSpec::load(p),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.out_dir)
    }

    fn seed_for(&self, label: &str) -> u64 {
        derive_seed(self.seed, label)
    }

    /// Gaussianizer settings with the ICA seed derived from `seed`.
    pub fn gaussianizer_config(&self) -> GaussianizerConfig {
        let mut g = self.gaussianizer;
        g.ica.seed = self.seed_for("ica");
        g
    }

    /// Training settings for one width; shared by both pipelines.
    pub fn train_config(&self, width: usize) -> TrainConfig {
        let mut t = self.train;
        t.seed = self.seed_for(&format!("train-w{width}"));
        t
    }

    pub fn init_seed(&self, width: usize) -> u64 {
        self.seed_for(&format!("init-w{width}"))
    }

    pub fn sample_seed(&self, width: usize) -> u64 {
        self.seed_for(&format!("sample-w{width}"))
    }

    pub fn data_seeds(&self) -> (u64, u64) {
        (self.seed_for("data-train"), self.seed_for("data-heldout"))
    }

    pub fn reference_seed(&self) -> u64 {
        self.seed_for("reference")
    }
}

/// Hidden widths `[w, 2w, 4w]`, which covers every named configuration.
pub fn hidden_widths(width: usize) -> [usize; 3] {
    ddpm::table_widths(width).unwrap_or([width, 2 * width, 4 * width])
}

/// File locations inside an output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.json")
    }
    pub fn spec(&self) -> PathBuf {
        self.root.join("spec.json")
    }
    pub fn train(&self) -> PathBuf {
        self.root.join("train.csv")
    }
    pub fn heldout(&self) -> PathBuf {
        self.root.join("heldout.csv")
    }
    pub fn stack(&self) -> PathBuf {
        self.root.join("stack.json")
    }
    pub fn train_gaussianized(&self) -> PathBuf {
        self.root.join("train_gaussianized.csv")
    }
    pub fn diagnostics(&self) -> PathBuf {
        self.root.join("diagnostics.json")
    }
    pub fn run_dir(&self, pipeline: Pipeline, width: usize) -> PathBuf {
        self.root.join("runs").join(format!("{pipeline}_w{width}"))
    }
    pub fn params(&self, pipeline: Pipeline, width: usize) -> PathBuf {
        self.run_dir(pipeline, width).join("params.json")
    }
    pub fn schedule(&self, pipeline: Pipeline, width: usize) -> PathBuf {
        self.run_dir(pipeline, width).join("schedule.json")
    }
    pub fn loss(&self, pipeline: Pipeline, width: usize) -> PathBuf {
        self.run_dir(pipeline, width).join("loss.csv")
    }
    pub fn snapshots(&self, pipeline: Pipeline, width: usize) -> PathBuf {
        self.run_dir(pipeline, width).join("snapshots.csv")
    }
    pub fn ll_curve(&self, pipeline: Pipeline, width: usize) -> PathBuf {
        self.run_dir(pipeline, width).join("ll_curve.csv")
    }
    pub fn plots(&self) -> PathBuf {
        self.root.join("plots")
    }
    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }
}

/// What `fit-transform` records about the stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub layers: Vec<LayerDiagnostics>,
    /// Largest per-dimension KS after each layer.
    pub ks_per_layer: Vec<f64>,
    /// Per-dimension KS of the transformed training set.
    pub final_ks: Vec<f64>,
    pub final_max_offdiag_corr: f64,
    /// Held-out reconstruction error within the central 99% quantile box.
    pub round_trip: RoundTrip,
}

// ---------------------------------------------------------------------------
// In-memory stages

pub fn generate_data(cfg: &ExperimentConfig, spec: &GmmSpec) -> (Dataset, Dataset) {
    let (train_seed, heldout_seed) = cfg.data_seeds();
    (
        sample_gmm(spec, cfg.n_train, train_seed),
        sample_gmm(spec, cfg.n_heldout, heldout_seed),
    )
}

pub fn fit_transform_data(
    cfg: &ExperimentConfig,
    train: &Dataset,
    heldout: &Dataset,
) -> Result<(GaussianizerStack, Dataset, FitDiagnostics)> {
    let (stack, transformed) = fit_gaussianizer(train, &cfg.gaussianizer_config())?;
    let final_ks = (0..transformed.dim())
        .map(|j| ks_statistic(&transformed.column(j)))
        .collect::<Result<Vec<_>>>()?;
    let final_max_offdiag_corr = if transformed.dim() >= 2 {
        max_abs_offdiag_corr(&transformed)?
    } else {
        0.0
    };
    let diag = FitDiagnostics {
        iterations: stack.iterations,
        layers: stack.diagnostics.layers.clone(),
        ks_per_layer: stack.diagnostics.ks_curve(),
        final_ks,
        final_max_offdiag_corr,
        round_trip: round_trip_error(&stack, heldout, 0.99)?,
    };
    Ok((stack, transformed, diag))
}

/// Trains one network on `data` with the width's derived seeds.
pub fn train_network(
    cfg: &ExperimentConfig,
    data: &Dataset,
    sched: &DiffusionSchedule,
    width: usize,
) -> Result<(EpsNet, Vec<f64>)> {
    let net = EpsNet::init(data.dim(), hidden_widths(width), cfg.init_seed(width))?;
    ddpm::train(net, data, sched, &cfg.train_config(width))
}

/// Runs the reverse chain and scores every snapshot. The returned snapshots
/// are in data space (mapped through the inverse stack when one is given).
#[allow(clippy::too_many_arguments)]
pub fn sample_and_score(
    cfg: &ExperimentConfig,
    spec: &GmmSpec,
    net: &EpsNet,
    sched: &DiffusionSchedule,
    stack: Option<&GaussianizerStack>,
    pipeline: Pipeline,
    width: usize,
    reference: f64,
) -> Result<(Vec<Snapshot>, LlCurve)> {
    let stack = match pipeline {
        Pipeline::Baseline => None,
        Pipeline::Gaussianized => stack,
    };
    let latent = ddpm::sample(
        net,
        sched,
        cfg.n_generated,
        cfg.sample_seed(width),
        &cfg.snapshot_steps,
    )?;
    let curve = ll_vs_step(spec, &latent, stack, pipeline, width, reference)?;
    let snapshots = match stack {
        None => latent,
        Some(stack) => latent
            .into_iter()
            .map(|s| {
                Ok(Snapshot {
                    step: s.step,
                    points: gaussianizer_inverse(stack, &s.points)?,
                })
            })
            .collect::<Result<_>>()?,
    };
    Ok((snapshots, curve))
}

pub fn reference_ll(cfg: &ExperimentConfig, spec: &GmmSpec) -> Result<f64> {
    reference_log_likelihood(spec, cfg.reference_samples, cfg.reference_seed())
}

// ---------------------------------------------------------------------------
// File-based subcommands

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::json(path, e))?;
    text.push('\n');
    write_text(path, &text)
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::json(path, e))
}

/// Writes `spec.json`, `train.csv`, `heldout.csv` and the effective config.
pub fn cmd_gen_data(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    let layout = cfg.layout();
    ensure_dir(&layout.root)?;
    let spec = cfg.spec()?;
    let (train, heldout) = generate_data(cfg, &spec);
    write_json(&layout.config(), cfg)?;
    spec.save(layout.spec())?;
    train.save_csv(layout.train())?;
    heldout.save_csv(layout.heldout())
}

/// Fits the stack on `train.csv`; writes the stack, the transformed data and
/// the diagnostics.
pub fn cmd_fit_transform(cfg: &ExperimentConfig) -> Result<FitDiagnostics> {
    cfg.validate()?;
    let layout = cfg.layout();
    let train = Dataset::load_csv(layout.train())?;
    let heldout = Dataset::load_csv(layout.heldout())?;
    let (stack, transformed, diag) = fit_transform_data(cfg, &train, &heldout)?;
    stack.save(layout.stack())?;
    transformed.save_csv(layout.train_gaussianized())?;
    write_json(&layout.diagnostics(), &diag)?;
    Ok(diag)
}

/// Trains one network and writes its parameters, schedule and loss curve.
pub fn cmd_train(cfg: &ExperimentConfig, pipeline: Pipeline, width: usize) -> Result<Vec<f64>> {
    cfg.validate()?;
    let layout = cfg.layout();
    let data = match pipeline {
        Pipeline::Baseline => Dataset::load_csv(layout.train())?,
        Pipeline::Gaussianized => Dataset::load_csv(layout.train_gaussianized())?,
    };
    let sched = cfg.schedule.build()?;
    let (net, losses) = train_network(cfg, &data, &sched, width)?;
    ensure_dir(&layout.run_dir(pipeline, width))?;
    net.save(layout.params(pipeline, width))?;
    write_json(&layout.schedule(pipeline, width), &sched)?;
    write_text(&layout.loss(pipeline, width), &loss_csv(&losses))?;
    Ok(losses)
}

/// Samples from a trained network, writes the data-space snapshots and the
/// log-likelihood curve.
pub fn cmd_sample_eval(cfg: &ExperimentConfig, pipeline: Pipeline, width: usize) -> Result<LlCurve> {
    cfg.validate()?;
    let layout = cfg.layout();
    let spec = GmmSpec::load(layout.spec())?;
    let net = EpsNet::load(layout.params(pipeline, width))?;
    let sched: DiffusionSchedule = read_json(&layout.schedule(pipeline, width))?;
    let stack = match pipeline {
        Pipeline::Baseline => None,
        Pipeline::Gaussianized => Some(GaussianizerStack::load(layout.stack())?),
    };
    let reference = reference_ll(cfg, &spec)?;
    let (snapshots, curve) =
        sample_and_score(cfg, &spec, &net, &sched, stack.as_ref(), pipeline, width, reference)?;
    write_text(&layout.snapshots(pipeline, width), &snapshots_csv(&snapshots))?;
    write_text(&layout.ll_curve(pipeline, width), &curve.to_csv())?;
    Ok(curve)
}

/// `iteration,loss` with 0-based iterations.
pub fn loss_csv(losses: &[f64]) -> String {
    let mut out = String::from("iteration,loss\n");
    for (i, l) in losses.iter().enumerate() {
        out.push_str(&format!("{i},{l:?}\n"));
    }
    out
}

pub fn parse_loss_csv(text: &str) -> Result<Vec<f64>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(|e| Error::InvalidArgument(format!("loss csv: {e}")))?;
            rec.get(1)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("loss csv: bad row {}", i + 2)))
        })
        .collect()
}

/// `step,x1,...,xd`, one row per point, snapshots in step order.
pub fn snapshots_csv(snapshots: &[Snapshot]) -> String {
    let d = snapshots.first().map_or(0, |s| s.points.dim());
    let mut out = String::from("step");
    for j in 1..=d {
        out.push_str(&format!(",x{j}"));
    }
    out.push('\n');
    for snap in snapshots {
        for row in snap.points.iter_rows() {
            out.push_str(&snap.step.to_string());
            for v in row {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
    }
    out
}

pub fn parse_snapshots_csv(text: &str) -> Result<Vec<Snapshot>> {
    let bad = |msg: String| Error::InvalidArgument(format!("snapshots csv: {msg}"));
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut grouped: BTreeMap<usize, Vec<Vec<f64>>> = BTreeMap::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let step: usize = rec
            .get(0)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad step on row {}", i + 2)))?;
        let row = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value on row {}", i + 2))))
            .collect::<Result<Vec<_>>>()?;
        grouped.entry(step).or_default().push(row);
    }
    grouped
        .into_iter()
        .map(|(step, rows)| {
            Ok(Snapshot {
                step,
                points: Dataset::from_rows(&rows)?,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Report

/// One trained run in the summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub pipeline: Pipeline,
    pub width: usize,
    pub iterations: usize,
    /// Mean loss over the final 10% of iterations.
    pub final_loss: f64,
    pub ll_steps: Vec<usize>,
    pub ll_values: Vec<f64>,
}

/// Outcome of one qualitative check at a given width; `None` when the needed
/// runs or steps are missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthChecks {
    pub width: usize,
    /// Gaussianized LL at step 20 within 0.5 nat of reference and at least
    /// 1 nat above baseline.
    pub early_convergence: Option<bool>,
    /// Baseline LL at step 50 at least 1 nat below reference and lower than
    /// at step 80.
    pub late_onset: Option<bool>,
    /// Gaussianized LL at the last step at least the baseline's.
    pub final_quality_order: Option<bool>,
    /// Both pipelines within 0.5 nat of reference at the last step.
    pub final_quality_reach: Option<bool>,
    /// Gaussianized final-window loss below baseline.
    pub lower_final_loss: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub reference_ll: f64,
    pub schedule_steps: usize,
    pub gaussianizer: Option<FitDiagnostics>,
    pub runs: Vec<RunSummary>,
    pub checks: Vec<WidthChecks>,
}

fn run_summary(pipeline: Pipeline, width: usize, losses: &[f64], curve: &LlCurve) -> RunSummary {
    RunSummary {
        pipeline,
        width,
        iterations: losses.len(),
        final_loss: final_window_mean(losses, 0.1),
        ll_steps: curve.steps.clone(),
        ll_values: curve.values.clone(),
    }
}

fn width_checks(width: usize, runs: &[RunSummary], reference: f64, last: usize) -> WidthChecks {
    let find = |p: Pipeline| runs.iter().find(|r| r.pipeline == p && r.width == width);
    let ll = |r: Option<&RunSummary>, step: usize| {
        r.and_then(|r| r.ll_steps.iter().position(|&s| s == step).map(|i| r.ll_values[i]))
    };
    let (base, gauss) = (find(Pipeline::Baseline), find(Pipeline::Gaussianized));
    let both = |a: Option<f64>, b: Option<f64>| a.zip(b);
    WidthChecks {
        width,
        early_convergence: both(ll(gauss, 20), ll(base, 20))
            .map(|(g, b)| (reference - g).abs() <= 0.5 && g - b >= 1.0),
        late_onset: both(ll(base, 50), ll(base, 80)).map(|(b50, b80)| reference - b50 >= 1.0 && b80 > b50),
        final_quality_order: both(ll(gauss, last), ll(base, last)).map(|(g, b)| g >= b),
        final_quality_reach: both(ll(gauss, last), ll(base, last))
            .map(|(g, b)| (reference - g).abs() <= 0.5 && (reference - b).abs() <= 0.5),
        lower_final_loss: base.zip(gauss).map(|(b, g)| g.final_loss < b.final_loss),
    }
}

/// Reads every artifact present, writes the SVG plots and `summary.json`.
pub fn cmd_report(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    let layout = cfg.layout();
    let train = Dataset::load_csv(layout.train())?;
    let diagnostics: Option<FitDiagnostics> = if layout.diagnostics().exists() {
        Some(read_json(&layout.diagnostics())?)
    } else {
        None
    };
    let plots = layout.plots();
    ensure_dir(&plots)?;

    let mut runs = Vec::new();
    let mut losses_by_run = BTreeMap::new();
    let mut reference = None;
    for &width in &cfg.widths {
        for &pipeline in &cfg.pipelines {
            let losses = parse_loss_csv(&read_text(&layout.loss(pipeline, width))?)?;
            let curve = LlCurve::from_csv(&read_text(&layout.ll_curve(pipeline, width))?)?;
            let snapshots = parse_snapshots_csv(&read_text(&layout.snapshots(pipeline, width))?)?;
            reference = Some(curve.reference);
            let svg = snapshot_grid(&train, &snapshots, pipeline, width, cfg.n_generated);
            write_text(&plots.join(format!("snapshots_{pipeline}_w{width}.svg")), &svg)?;
            runs.push(run_summary(pipeline, width, &losses, &curve));
            losses_by_run.insert((pipeline, width), losses);
        }
    }
    let reference = reference.ok_or_else(|| Error::InvalidConfig("no runs to report".into()))?;

    let mut ll_charts = Vec::new();
    let mut loss_charts = Vec::new();
    for &width in &cfg.widths {
        let ll_chart = ll_chart(&runs, width, reference, cfg.schedule.steps);
        write_text(&plots.join(format!("ll_w{width}.svg")), &ll_chart.to_svg(520.0, 360.0))?;
        ll_charts.push(ll_chart);
        let loss_chart = loss_chart(&losses_by_run, &cfg.pipelines, width);
        write_text(&plots.join(format!("loss_w{width}.svg")), &loss_chart.to_svg(520.0, 360.0))?;
        loss_charts.push(loss_chart);
    }
    let cols = cfg.widths.len().min(2);
    write_text(
        &plots.join("ll_curves.svg"),
        &plot::grid_svg("Average log-likelihood by reverse step", &ll_charts, cols, 480.0, 340.0),
    )?;
    write_text(
        &plots.join("loss_curves.svg"),
        &plot::grid_svg("Training loss", &loss_charts, cols, 480.0, 340.0),
    )?;
    if let Some(diag) = &diagnostics {
        let pts = diag.ks_per_layer.iter().enumerate().map(|(i, k)| ((i + 1) as f64, *k)).collect();
        let chart = Chart::new("Gaussianization: max KS after each layer")
            .labels("layer", "KS statistic")
            .with(Series::line("max KS", plot::BLUE, pts))
            .without_legend();
        write_text(&plots.join("gaussianizer_ks.svg"), &chart.to_svg(480.0, 320.0))?;
    }

    let checks = cfg
        .widths
        .iter()
        .map(|&w| width_checks(w, &runs, reference, cfg.schedule.steps))
        .collect();
    let summary = Summary {
        seed: cfg.seed,
        reference_ll: reference,
        schedule_steps: cfg.schedule.steps,
        gaussianizer: diagnostics,
        runs,
        checks,
    };
    write_json(&layout.summary(), &summary)?;
    Ok(summary)
}

fn points(data: &Dataset, limit: usize) -> Vec<(f64, f64)> {
    data.iter_rows()
        .take(limit)
        .map(|r| (r[0], r.get(1).copied().unwrap_or(0.0)))
        .collect()
}

fn snapshot_grid(
    train: &Dataset,
    snapshots: &[Snapshot],
    pipeline: Pipeline,
    width: usize,
    limit: usize,
) -> String {
    let bounds = |j: usize| {
        if j >= train.dim() {
            return (-1.0, 1.0);
        }
        let col = train.column(j);
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let pad = 0.1 * (hi - lo).max(1e-9);
        (lo - pad, hi + pad)
    };
    let ((x0, x1), (y0, y1)) = (bounds(0), bounds(1));
    let reference = points(train, limit);
    let charts: Vec<Chart> = snapshots
        .iter()
        .map(|s| {
            Chart::new(format!("step {}", s.step))
                .with(Series::scatter("training", plot::ORANGE, reference.clone()))
                .with(Series::scatter("generated", plot::BLUE, points(&s.points, limit)))
                .x_range(x0, x1)
                .y_range(y0, y1)
                .without_legend()
        })
        .collect();
    plot::grid_svg(
        &format!("{pipeline}, width {width}: reverse-step snapshots (orange training, blue generated)"),
        &charts,
        6,
        240.0,
        230.0,
    )
}

fn ll_chart(runs: &[RunSummary], width: usize, reference: f64, steps: usize) -> Chart {
    let mut chart = Chart::new(format!("width {width}")).labels("reverse step", "average log-likelihood");
    for (i, run) in runs.iter().filter(|r| r.width == width).enumerate() {
        let pts = run.ll_steps.iter().map(|&s| s as f64).zip(run.ll_values.iter().copied()).collect();
        chart = chart.with(Series::line(run.pipeline.as_str(), plot::PALETTE[i % 6], pts));
    }
    chart.with(Series::reference("reference", plot::RED, reference, 0.0, steps as f64))
}

fn loss_chart(
    losses: &BTreeMap<(Pipeline, usize), Vec<f64>>,
    pipelines: &[Pipeline],
    width: usize,
) -> Chart {
    let mut chart = Chart::new(format!("width {width}")).labels("iteration", "loss (moving average)");
    for (i, &p) in pipelines.iter().enumerate() {
        if let Some(l) = losses.get(&(p, width)) {
            chart = chart.with(Series::line(p.as_str(), plot::PALETTE[i % 6], smoothed(l, 400)));
        }
    }
    chart
}

/// Moving average over windows of 1% of the curve, thinned to about
/// `max_points` points.
fn smoothed(losses: &[f64], max_points: usize) -> Vec<(f64, f64)> {
    let n = losses.len();
    if n == 0 {
        return Vec::new();
    }
    let window = (n / 100).max(1);
    let stride = n.div_ceil(max_points).max(1);
    let mut prefix = vec![0.0; n + 1];
    for (i, l) in losses.iter().enumerate() {
        prefix[i + 1] = prefix[i] + l;
    }
    (0..n)
        .step_by(stride)
        .chain(std::iter::once(n - 1))
        .map(|i| {
            let lo = (i + 1).saturating_sub(window);
            (i as f64, (prefix[i + 1] - prefix[lo]) / (i + 1 - lo) as f64)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// run-all

/// Generates data, fits the stack, runs every (pipeline, width) job
/// concurrently and writes the report.
pub fn cmd_run_all(cfg: &ExperimentConfig) -> Result<Summary> {
    cfg.validate()?;
    cmd_gen_data(cfg)?;
    if cfg.pipelines.contains(&Pipeline::Gaussianized) {
        cmd_fit_transform(cfg)?;
    }
    let mut jobs: Vec<(usize, Pipeline)> = Vec::new();
    // widest first so the long jobs start early
    let mut widths = cfg.widths.clone();
    widths.sort_unstable_by(|a, b| b.cmp(a));
    widths.dedup();
    for &w in &widths {
        for &p in &cfg.pipelines {
            jobs.push((w, p));
        }
    }
    let workers = match cfg.jobs {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(jobs.len())
    .max(1);
    let next = AtomicUsize::new(0);
    let failures = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(&(width, pipeline)) = jobs.get(i) else { break };
                let result = cmd_train(cfg, pipeline, width)
                    .and_then(|_| cmd_sample_eval(cfg, pipeline, width));
                if let Err(e) = result {
                    failures.lock().expect("no poisoned lock").push((i, e));
                }
            });
        }
    });
    let mut failures = failures.into_inner().expect("no poisoned lock");
    failures.sort_by_key(|(i, _)| *i);
    if let Some((_, e)) = failures.into_iter().next() {
        return Err(e);
    }
    cmd_report(cfg)
}
