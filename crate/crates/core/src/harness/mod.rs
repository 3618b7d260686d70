//! Experiment harness: single runs, grid sweeps and the ablation studies,
//! each producing CSV tables.
//!
//! Every (config, seed) cell owns its seed-derived random streams, so cells
//! run in parallel without changing any result; tables are assembled in a
//! fixed order afterwards.

mod config;
mod features;
mod report;

use std::path::Path;

use rayon::prelude::*;

use crate::data::{subset_features, FeatureSet};
use crate::error::{Error, Result};
use crate::privacy;
use crate::sgd::{self, DpSgdConfig, Normalization, SamplerKind, TrainingRecord};

pub use config::{apply_override, ExperimentConfig, ExperimentKind, Grid, RunSpec, SyntheticSpec};
pub use features::{cache_path, load_pair, split_features, synthetic_pair, DataPair, DataSources};
pub use report::{fmt_num, loglog_slope, mad, mean, median, sibling_path, std_dev, Table};

/// Slack allowed on the spent budget when picking the best epoch.
pub const BUDGET_SLACK: f64 = 1e-3;

/// Largest training set the dataset-size study accepts.
pub const MAX_DATASIZE: usize = 50_000;

/// Default batch sizes of the batch-scaling study.
pub const BATCH_SCALING_SIZES: [usize; 4] = [512, 1024, 2048, 4096];

/// Sampling rates `2^-10 .. 2^-4` used for the noise-scale table.
pub fn noise_law_rates() -> Vec<f64> {
    (4..=10).rev().map(|k| 2f64.powi(-k)).collect()
}

/// Named CSV tables; the unnamed one is the main report.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub tables: Vec<(String, Table)>,
}

impl ExperimentOutput {
    pub fn main(&self) -> &Table {
        self.get("").expect("main table")
    }

    pub fn get(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Writes the main table to `path` and the others next to it as
    /// `<stem>_<name>.<ext>`.
    pub fn write(&self, path: &Path) -> Result<Vec<std::path::PathBuf>> {
        let mut written = Vec::new();
        for (name, table) in &self.tables {
            let p = sibling_path(path, name);
            table.write(&p)?;
            written.push(p);
        }
        Ok(written)
    }
}

fn norm_label(n: &Normalization) -> String {
    match n {
        Normalization::None => "none".into(),
        Normalization::Group { groups } => format!("group({groups})"),
        Normalization::Data { c1, c2, sigma_norm, .. } => {
            format!("data({};{};{})", fmt_num(*c1), fmt_num(*c2), fmt_num(*sigma_norm))
        }
    }
}

fn sampler_label(s: SamplerKind) -> &'static str {
    match s {
        SamplerKind::Poisson => "poisson",
        SamplerKind::Shuffle => "shuffle",
    }
}

/// One hyper-parameter setting, trained once per seed.
struct Cell<'a> {
    id: String,
    /// Extra leading columns specific to the experiment.
    tags: Vec<String>,
    cfg: DpSgdConfig,
    delta: f64,
    /// Solve sigma for this epsilon; `None` keeps `cfg.sigma`.
    epsilon: Option<f64>,
    train: &'a FeatureSet,
}

struct CellResult {
    cfg: DpSgdConfig,
    runs: Vec<(u64, Result<TrainingRecord>)>,
}

impl CellResult {
    /// Best-epoch accuracies within the budget, one per successful seed.
    fn best(&self, limit: f64) -> Vec<f64> {
        self.runs
            .iter()
            .filter_map(|(_, r)| r.as_ref().ok())
            .map(|r| r.best_within(limit).unwrap_or(f64::NAN))
            .collect()
    }

    fn finals(&self) -> Vec<f64> {
        self.runs.iter().filter_map(|(_, r)| r.as_ref().ok()).map(|r| r.final_accuracy()).collect()
    }
}

fn budget_limit(epsilon: Option<f64>) -> f64 {
    epsilon.map_or(f64::INFINITY, |e| e + BUDGET_SLACK)
}

/// Resolves sigma per cell, then trains every (cell, seed) pair in parallel.
fn run_cells(cells: &[Cell<'_>], seeds: &[u64], test: &FeatureSet) -> Vec<CellResult> {
    let resolved: Vec<Result<DpSgdConfig>> = cells
        .par_iter()
        .map(|c| {
            let mut cfg = c.cfg.clone();
            if let Some(eps) = c.epsilon {
                cfg.validate()?;
                cfg.sigma = cfg.calibrate_sigma(eps, c.delta)?;
            }
            Ok(cfg)
        })
        .collect();
    let jobs: Vec<(usize, u64)> = (0..cells.len()).flat_map(|i| seeds.iter().map(move |&s| (i, s))).collect();
    let mut outcomes: Vec<Result<TrainingRecord>> = jobs
        .par_iter()
        .map(|&(i, seed)| match &resolved[i] {
            Ok(cfg) => {
                let cfg = DpSgdConfig { seed, ..cfg.clone() };
                sgd::train(&cfg, cells[i].train, test, cells[i].delta)
            }
            Err(e) => Err(Error::Config(format!("noise calibration failed: {e}"))),
        })
        .collect();
    let mut results = Vec::with_capacity(cells.len());
    let mut drain = outcomes.drain(..);
    for (cell, cfg) in cells.iter().zip(resolved) {
        let cfg = cfg.unwrap_or_else(|_| cell.cfg.clone());
        let runs = seeds.iter().map(|&s| (s, drain.next().expect("one outcome per job"))).collect();
        results.push(CellResult { cfg, runs });
    }
    results
}

const RUN_COLUMNS: [&str; 14] = [
    "config_id",
    "seed",
    "delta",
    "dataset_size",
    "batch_size",
    "base_lr",
    "lr",
    "epochs",
    "sampler",
    "normalization",
    "sigma",
    "epoch",
    "accuracy",
    "epsilon",
];

fn run_table(cfg: &ExperimentConfig, tag_columns: &[&str]) -> Table {
    let mut cols: Vec<&str> = tag_columns.to_vec();
    cols.extend(RUN_COLUMNS);
    cols.push("status");
    let mut t = Table::new(&cols);
    t.meta("kind", cfg.kind.name())
        .meta("dataset", cfg.dataset)
        .meta("config_hash", cfg.hash())
        .meta("delta", fmt_num(cfg.delta))
        .meta("epsilon_target", cfg.epsilon.map_or("none".into(), fmt_num))
        .meta("seeds", cfg.seeds.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";"));
    t
}

fn push_runs(table: &mut Table, cell: &Cell<'_>, result: &CellResult) {
    let c = &result.cfg;
    for (seed, run) in &result.runs {
        let mut prefix = cell.tags.clone();
        prefix.extend([
            cell.id.clone(),
            seed.to_string(),
            fmt_num(cell.delta),
            c.dataset_size.to_string(),
            c.batch_size.to_string(),
            fmt_num(c.base_lr),
            fmt_num(c.learning_rate()),
            c.epochs.to_string(),
            sampler_label(c.sampler).into(),
            norm_label(&c.normalization),
            fmt_num(c.sigma),
        ]);
        match run {
            Ok(record) => {
                for e in &record.epochs {
                    let mut row = prefix.clone();
                    row.extend([e.epoch.to_string(), fmt_num(e.accuracy), fmt_num(e.epsilon), "ok".into()]);
                    table.push(row);
                }
            }
            Err(err) => {
                let status = match err {
                    Error::Divergence { .. } => format!("diverged: {err}"),
                    _ => format!("failed: {err}"),
                };
                let mut row = prefix;
                row.extend([String::new(), "nan".into(), "nan".into(), status]);
                table.push(row);
            }
        }
    }
}

/// Cartesian product of the grid axes, in a fixed order.
fn grid_configs(cfg: &ExperimentConfig, dataset_size: usize) -> Vec<DpSgdConfig> {
    let g = &cfg.grid;
    let r = &cfg.run;
    let batch = g.batch_size.clone().unwrap_or_else(|| vec![r.batch_size]);
    let lrs = g.base_lr.clone().unwrap_or_else(|| vec![r.base_lr]);
    let epochs = g.epochs.clone().unwrap_or_else(|| vec![r.epochs]);
    let norms = g.normalization.clone().unwrap_or_else(|| vec![r.normalization]);
    let samplers = g.sampler.clone().unwrap_or_else(|| vec![r.sampler]);
    let base = r.to_config(dataset_size, 0);
    let mut out = Vec::new();
    for &b in &batch {
        for &lr in &lrs {
            for &t in &epochs {
                for &n in &norms {
                    for &s in &samplers {
                        out.push(DpSgdConfig {
                            batch_size: b,
                            base_lr: lr,
                            epochs: t,
                            normalization: n,
                            sampler: s,
                            ..base.clone()
                        });
                    }
                }
            }
        }
    }
    out
}

fn check_dataset_size(cfg: &ExperimentConfig, data: &DataPair) -> Result<()> {
    if data.train.is_empty() || data.test.is_empty() {
        return Err(Error::MissingData(format!("{} has an empty split", cfg.dataset)));
    }
    Ok(())
}

/// Runs the experiment named by `cfg.kind`.
pub fn run_experiment(cfg: &ExperimentConfig, data: &DataPair) -> Result<ExperimentOutput> {
    match cfg.kind {
        ExperimentKind::Train => run_train(cfg, data),
        ExperimentKind::Sweep => run_sweep(cfg, data),
        ExperimentKind::Convergence => run_convergence(cfg, data),
        ExperimentKind::BatchScaling => run_batch_scaling(cfg, data),
        ExperimentKind::Sampling => run_sampling_compare(cfg, data),
        ExperimentKind::Datasize => run_datasize(cfg, data),
    }
}

/// The `[run]` config trained once per seed. Unlike the other experiments,
/// a failed run is an error (so divergence surfaces as such).
pub fn run_train(cfg: &ExperimentConfig, data: &DataPair) -> Result<ExperimentOutput> {
    check_dataset_size(cfg, data)?;
    let cell = Cell {
        id: "run".into(),
        tags: Vec::new(),
        cfg: cfg.run.to_config(data.train.len(), 0),
        delta: cfg.delta,
        epsilon: if cfg.run.sigma.is_some() { None } else { cfg.epsilon },
        train: &data.train,
    };
    let mut results = run_cells(std::slice::from_ref(&cell), &cfg.seeds, &data.test);
    let CellResult { cfg: resolved, runs } = results.pop().expect("one cell");
    let mut ok = Vec::with_capacity(runs.len());
    for (seed, run) in runs {
        ok.push((seed, Ok(run?)));
    }
    let result = CellResult { cfg: resolved, runs: ok };
    let mut table = run_table(cfg, &[]);
    push_runs(&mut table, &cell, &result);
    Ok(ExperimentOutput { tables: vec![(String::new(), table)] })
}

/// Full grid sweep: per-(config, seed, epoch) rows plus a summary over
/// best-epoch-at-budget accuracies.
pub fn run_sweep(cfg: &ExperimentConfig, data: &DataPair) -> Result<ExperimentOutput> {
    check_dataset_size(cfg, data)?;
    let epsilon = if cfg.run.sigma.is_some() { None } else { cfg.epsilon };
    let cells: Vec<Cell<'_>> = grid_configs(cfg, data.train.len())
        .into_iter()
        .enumerate()
        .map(|(i, c)| Cell { id: format!("c{i:03}"), tags: Vec::new(), cfg: c, delta: cfg.delta, epsilon, train: &data.train })
        .collect();
    let results = run_cells(&cells, &cfg.seeds, &data.test);
    let mut table = run_table(cfg, &[]);
    for (cell, r) in cells.iter().zip(&results) {
        push_runs(&mut table, cell, r);
    }

    let limit = budget_limit(cfg.epsilon);
    let mut summary = Table::new(&[
        "config_id",
        "batch_size",
        "base_lr",
        "epochs",
        "sampler",
        "normalization",
        "sigma",
        "seeds_ok",
        "best_mean",
        "best_std",
    ]);
    summary.meta("kind", "sweep-summary").meta("config_hash", cfg.hash()).meta("delta", fmt_num(cfg.delta));
    let mut means = Vec::new();
    for (cell, r) in cells.iter().zip(&results) {
        let best: Vec<f64> = r.best(limit).into_iter().filter(|v| v.is_finite()).collect();
        let (m, s) = if best.is_empty() { (f64::NAN, f64::NAN) } else { (mean(&best), std_dev(&best)) };
        if m.is_finite() {
            means.push(m);
        }
        let c = &r.cfg;
        summary.push(vec![
            cell.id.clone(),
            c.batch_size.to_string(),
            fmt_num(c.base_lr),
            c.epochs.to_string(),
            sampler_label(c.sampler).into(),
            norm_label(&c.normalization),
            fmt_num(c.sigma),
            best.len().to_string(),
            fmt_num(m),
            fmt_num(s),
        ]);
    }
    if !means.is_empty() {
        let max = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = means.iter().cloned().fold(f64::INFINITY, f64::min);
        for (name, v) in [("min", min), ("max", max), ("median", median(&means)), ("mad", mad(&means))] {
            let mut row = vec![String::new(); 10];
            row[0] = format!("across-configs-{name}");
            row[8] = fmt_num(v);
            summary.push(row);
        }
    }
    Ok(ExperimentOutput { tables: vec![(String::new(), table), ("summary".into(), summary)] })
}

fn noiseless(c: &DpSgdConfig) -> DpSgdConfig {
    let normalization = match c.normalization {
        Normalization::Data { c1, c2, tau, .. } => Normalization::Data { c1, c2, sigma_norm: 0.0, tau },
        other => other,
    };
    DpSgdConfig { sigma: 0.0, normalization, ..c.clone() }
}

/// Noisy and noiseless training at each learning rate of `grid.base_lr`
/// (typically a low and a high one). The noiseless arm also drops the
/// normalization noise.
pub fn run_convergence(cfg: &ExperimentConfig, data: &DataPair) -> Result<ExperimentOutput> {
    check_dataset_size(cfg, data)?;
    let epsilon = if cfg.run.sigma.is_some() { None } else { cfg.epsilon };
    let lrs = cfg.grid.base_lr.clone().unwrap_or_else(|| vec![cfg.run.base_lr]);
    let base = cfg.run.to_config(data.train.len(), 0);
    let mut cells = Vec::new();
    for (i, &lr) in lrs.iter().enumerate() {
        let c = DpSgdConfig { base_lr: lr, ..base.clone() };
        cells.push(Cell {
            id: format!("lr{i}-noisy"),
            tags: vec![fmt_num(lr), "on".into()],
            cfg: c.clone(),
            delta: cfg.delta,
            epsilon,
            train: &data.train,
        });
        cells.push(Cell {
            id: format!("lr{i}-noiseless"),
            tags: vec![fmt_num(lr), "off".into()],
            cfg: noiseless(&c),
            delta: cfg.delta,
            epsilon: None,
            train: &data.train,
        });
    }
    let results = run_cells(&cells, &cfg.seeds, &data.test);
    let mut table = run_table(cfg, &["arm_lr", "noise"]);
    for (cell, r) in cells.iter().zip(&results) {
        push_runs(&mut table, cell, r);
    }

    let mut summary = Table::new(&["base_lr", "final_noisy", "final_noiseless", "max_gap_after_epoch5"]);
    summary.meta("kind", "convergence-summary").meta("config_hash", cfg.hash());
    for (i, &lr) in lrs.iter().enumerate() {
        let (noisy, clean) = (&results[2 * i], &results[2 * i + 1]);
        let curve = |r: &CellResult| -> Vec<f64> {
            let ok: Vec<&TrainingRecord> = r.runs.iter().filter_map(|(_, x)| x.as_ref().ok()).collect();
            if ok.is_empty() {
                return Vec::new();
            }
            (0..ok[0].epochs.len())
                .map(|e| mean(&ok.iter().map(|rec| rec.epochs[e].accuracy).collect::<Vec<_>>()))
                .collect()
        };
        let (a, b) = (curve(noisy), curve(clean));
        let gap = a.iter().zip(&b).skip(5).map(|(x, y)| (x - y).abs()).fold(f64::NAN, f64::max);
        summary.push(vec![
            fmt_num(lr),
            fmt_num(a.last().copied().unwrap_or(f64::NAN)),
            fmt_num(b.last().copied().unwrap_or(f64::NAN)),
            fmt_num(gap),
        ]);
    }
    Ok(ExperimentOutput { tables: vec![(String::new(), table), ("summary".into(), summary)] })
}

/// Noise multipliers reaching `(epsilon, delta)` after `epochs` epochs at
/// each sampling rate, i.e. `epochs / q` steps.
pub fn noise_scale_table(rates: &[f64], epochs: usize, epsilon: f64, delta: f64) -> Result<Vec<(f64, f64)>> {
    rates
        .par_iter()
        .map(|&q| {
            let steps = (epochs as f64 / q).round() as u64;
            Ok((q, privacy::solve_sigma(q, steps, epsilon, delta)?))
        })
        .collect()
}

/// Learning curves for each batch size with linearly scaled learning rate
/// and a per-size solved sigma, plus the sigma-vs-rate table.
pub fn run_batch_scaling(cfg: &ExperimentConfig, data: &DataPair) -> Result<ExperimentOutput> {
    check_dataset_size(cfg, data)?;
    let epsilon = cfg
        .epsilon
        .ok_or_else(|| Error::Config("batch scaling solves sigma per batch size; set epsilon".into()))?;
    let sizes = cfg.grid.batch_size.clone().unwrap_or_else(|| BATCH_SCALING_SIZES.to_vec());
    let base = cfg.run.to_config(data.train.len(), 0);
    let cells: Vec<Cell<'_>> = sizes
        .iter()
        .map(|&b| Cell {
            id: format!("b{b}"),
            tags: Vec::new(),
            cfg: DpSgdConfig { batch_size: b, ..base.clone() },
            delta: cfg.delta,
            epsilon: Some(epsilon),
            train: &data.train,
        })
        .collect();
    let results = run_cells(&cells, &cfg.seeds, &data.test);
    let mut table = run_table(cfg, &[]);
    for (cell, r) in cells.iter().zip(&results) {
        push_runs(&mut table, cell, r);
    }

    let mut summary = Table::new(&["batch_size", "q", "sigma", "final_mean", "final_std"]);
    let mut finals = Vec::new();
    for r in &results {
        let f = r.finals();
        let m = if f.is_empty() { f64::NAN } else { mean(&f) };
        finals.push(m);
        summary.push(vec![
            r.cfg.batch_size.to_string(),
            fmt_num(r.cfg.sampling_rate()),
            fmt_num(r.cfg.sigma),
            fmt_num(m),
            fmt_num(if f.is_empty() { f64::NAN } else { std_dev(&f) }),
        ]);
    }
    let finite: Vec<f64> = finals.iter().cloned().filter(|v| v.is_finite()).collect();
    let band = if finite.is_empty() {
        f64::NAN
    } else {
        finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - finite.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    summary.meta("kind", "batch-scaling-summary").meta("config_hash", cfg.hash()).meta("final_accuracy_band", fmt_num(band));

    let points = noise_scale_table(&noise_law_rates(), cfg.run.epochs, epsilon, cfg.delta)?;
    let mut sigma = Table::new(&["q", "sigma", "log2_q", "log2_sigma"]);
    sigma
        .meta("kind", "noise-scale")
        .meta("config_hash", cfg.hash())
        .meta("epsilon", fmt_num(epsilon))
        .meta("delta", fmt_num(cfg.delta))
        .meta("epochs", cfg.run.epochs)
        .meta("loglog_slope", fmt_num(loglog_slope(&points)));
    for (q, s) in &points {
        sigma.push(vec![fmt_num(*q), fmt_num(*s), fmt_num(q.log2()), fmt_num(s.log2())]);
    }
    Ok(ExperimentOutput {
        tables: vec![(String::new(), table), ("summary".into(), summary), ("sigma".into(), sigma)],
    })
}

/// The `[run]` config under Poisson and shuffle sampling, each calibrated
/// to the same budget.
pub fn run_sampling_compare(cfg: &ExperimentConfig, data: &DataPair) -> Result<ExperimentOutput> {
    check_dataset_size(cfg, data)?;
    let epsilon = if cfg.run.sigma.is_some() { None } else { cfg.epsilon };
    let base = cfg.run.to_config(data.train.len(), 0);
    let cells: Vec<Cell<'_>> = [SamplerKind::Poisson, SamplerKind::Shuffle]
        .into_iter()
        .map(|s| Cell {
            id: sampler_label(s).into(),
            tags: Vec::new(),
            cfg: DpSgdConfig { sampler: s, ..base.clone() },
            delta: cfg.delta,
            epsilon,
            train: &data.train,
        })
        .collect();
    let results = run_cells(&cells, &cfg.seeds, &data.test);
    let mut table = run_table(cfg, &[]);
    for (cell, r) in cells.iter().zip(&results) {
        push_runs(&mut table, cell, r);
    }
    let limit = budget_limit(cfg.epsilon);
    let mut summary = Table::new(&["sampler", "sigma", "seeds_ok", "best_mean", "best_std"]);
    let mut means = Vec::new();
    for r in &results {
        let best: Vec<f64> = r.best(limit).into_iter().filter(|v| v.is_finite()).collect();
        let m = if best.is_empty() { f64::NAN } else { mean(&best) };
        means.push(m);
        summary.push(vec![
            sampler_label(r.cfg.sampler).into(),
            fmt_num(r.cfg.sigma),
            best.len().to_string(),
            fmt_num(m),
            fmt_num(if best.is_empty() { f64::NAN } else { std_dev(&best) }),
        ]);
    }
    summary
        .meta("kind", "sampling-summary")
        .meta("config_hash", cfg.hash())
        .meta("poisson_minus_shuffle", fmt_num(means[0] - means[1]));
    Ok(ExperimentOutput { tables: vec![(String::new(), table), ("summary".into(), summary)] })
}

/// Training-set size study: for each N, the grid of base learning rates
/// and normalized epochs (`T` means `T * N_full / N` passes) at
/// `delta = 1 / (2N)`. Subsets are drawn with the first seed.
pub fn run_datasize(cfg: &ExperimentConfig, data: &DataPair) -> Result<ExperimentOutput> {
    check_dataset_size(cfg, data)?;
    let epsilon = if cfg.run.sigma.is_some() { None } else { cfg.epsilon };
    let full = data.train.len();
    let sizes = cfg.grid.dataset_size.clone().unwrap_or_else(|| vec![full]);
    for &n in &sizes {
        if n > MAX_DATASIZE {
            return Err(Error::Config(format!("dataset size {n} exceeds the supported maximum {MAX_DATASIZE}")));
        }
        if n > full {
            return Err(Error::Config(format!("dataset size {n} exceeds the {full} available samples")));
        }
    }
    let subsets: Vec<FeatureSet> = sizes
        .iter()
        .map(|&n| if n == full { Ok(data.train.clone()) } else { subset_features(&data.train, n, cfg.seeds[0]) })
        .collect::<Result<_>>()?;
    let lrs = cfg.grid.base_lr.clone().unwrap_or_else(|| vec![cfg.run.base_lr]);
    let epochs = cfg.grid.epochs.clone().unwrap_or_else(|| vec![cfg.run.epochs]);
    let mut cells = Vec::new();
    for (n, set) in sizes.iter().zip(&subsets) {
        let delta = 1.0 / (2.0 * *n as f64);
        for &lr in &lrs {
            for &t in &epochs {
                let passes = ((t * full) as f64 / *n as f64).round().max(1.0) as usize;
                let c = DpSgdConfig { base_lr: lr, epochs: passes, ..cfg.run.to_config(*n, 0) };
                cells.push(Cell {
                    id: format!("n{n}-lr{}-t{t}", fmt_num(lr)),
                    tags: vec![t.to_string()],
                    cfg: c,
                    delta,
                    epsilon,
                    train: set,
                });
            }
        }
    }
    let results = run_cells(&cells, &cfg.seeds, &data.test);
    let mut table = run_table(cfg, &["normalized_epochs"]);
    for (cell, r) in cells.iter().zip(&results) {
        push_runs(&mut table, cell, r);
    }

    let limit = budget_limit(cfg.epsilon);
    let mut summary = Table::new(&["dataset_size", "delta", "best_config", "best_mean", "best_std"]);
    let mut bests = Vec::new();
    for &n in &sizes {
        let mut best: Option<(&str, f64, f64)> = None;
        for (cell, r) in cells.iter().zip(&results).filter(|(c, _)| c.cfg.dataset_size == n) {
            let acc: Vec<f64> = r.best(limit).into_iter().filter(|v| v.is_finite()).collect();
            if acc.is_empty() {
                continue;
            }
            let m = mean(&acc);
            if best.is_none_or(|(_, bm, _)| m > bm) {
                best = Some((&cell.id, m, std_dev(&acc)));
            }
        }
        let (id, m, s) = best.unwrap_or(("", f64::NAN, f64::NAN));
        bests.push(m);
        summary.push(vec![n.to_string(), fmt_num(1.0 / (2.0 * n as f64)), id.into(), fmt_num(m), fmt_num(s)]);
    }
    let monotone = bests.windows(2).all(|w| w[1] >= w[0]);
    summary.meta("kind", "datasize-summary").meta("config_hash", cfg.hash()).meta("nondecreasing", monotone);
    Ok(ExperimentOutput { tables: vec![(String::new(), table), ("summary".into(), summary)] })
}
