//! Seeded experiment sweeps producing plot-ready tables.
//!
//! A run expands the configured grids into cells, runs every
//! `(cell, repetition)` job in the rayon pool with seed
//! `derive_seed(master, [cell, rep])`, and concatenates the per-job rows in
//! job order, so the output does not depend on scheduling.

mod config;
mod table;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

pub use config::{ExperimentConfig, ExperimentId, Mode, OutputFormat};
pub use table::{Row, Table, Value, KEY_COLUMNS, SCHEMA_VERSION};

use crate::activation::Activation;
use crate::attractor::{basin_probe, IterateConfig};
use crate::data::Dataset;
use crate::error::{NtkError, Result};
use crate::kernels::{Kernel, KernelSystem};
use crate::net::{NetworkParams, TrainConfig};
use crate::regression::{f_infinity, jacobian_infinity, InitSurrogate};
use crate::rng::{derive_seed, stream};
use crate::spectrum::spectrum_with_window;
use crate::theory::{chi1_diagnostic, verify_all, CheckRecord};

const TRAIN_LOG_EVERY: usize = 1000;

/// One point of the configuration grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub act: Activation,
    pub depth: usize,
    pub width: usize,
    pub n: usize,
    pub r: f64,
}

impl Cell {
    fn values(&self, n0: usize) -> Vec<Value> {
        vec![self.act.to_string().into(), self.depth.into(), self.width.into(), n0.into(), self.n.into(), self.r.into()]
    }
}

const CELL_COLUMNS: [&str; 6] = ["activation", "depth", "width", "n0", "n", "r"];

/// Cartesian product of the grids, activation outermost and radius innermost.
pub fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let mut out = Vec::new();
    for &act in &cfg.activations {
        for &depth in &cfg.depths {
            for &width in &cfg.widths {
                for &n in &cfg.n {
                    for &r in &cfg.radii {
                        out.push(Cell { act, depth, width, n, r });
                    }
                }
            }
        }
    }
    out
}

fn columns(extra: &[&'static str]) -> Vec<&'static str> {
    CELL_COLUMNS.iter().chain(extra).copied().collect()
}

fn run_jobs<F>(cells: &[Cell], repetitions: usize, job: F) -> Result<Vec<Row>>
where
    F: Fn(usize, &Cell, usize) -> Result<Vec<Row>> + Sync,
{
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..repetitions).map(move |r| (c, r))).collect();
    let parts: Vec<Vec<Row>> = jobs.par_iter().map(|&(c, r)| job(c, &cells[c], r)).collect::<Result<_>>()?;
    Ok(parts.into_iter().flatten().collect())
}

/// Jacobians of one realization at the first training point.
struct Realization {
    /// `J₀(x₁)`; zero in zero mode.
    j_init: DMatrix<f64>,
    /// `J∞(x₁)` or the trained network's Jacobian.
    j_final: DMatrix<f64>,
    /// Trained network (train mode only).
    trained: Option<NetworkParams>,
    iterations: usize,
    final_loss: f64,
    converged: bool,
}

fn realize(cfg: &ExperimentConfig, cell: &Cell, data: &Dataset, seed: u64) -> Result<Realization> {
    let x1 = data.column(0);
    let net_seed = derive_seed(seed, &[1]);
    match cfg.mode {
        Mode::Zero | Mode::Surrogate => {
            let init = if cfg.mode == Mode::Zero {
                InitSurrogate::Zero
            } else {
                InitSurrogate::finite_width(data.n0(), cell.width, cell.depth, cell.act, net_seed)?
            };
            let ks = KernelSystem::new(data, Kernel::new(cell.depth, cell.act))?;
            Ok(Realization {
                j_init: init.j0(&x1)?,
                j_final: jacobian_infinity(data, &ks, &init, &x1, false)?,
                trained: None,
                iterations: 0,
                final_loss: 0.0,
                converged: true,
            })
        }
        Mode::Train => {
            let net =
                NetworkParams::autoencoder(data.n0(), cell.width, cell.depth, cell.act, &mut stream(net_seed, &[]))?;
            let tc = TrainConfig {
                learning_rate: cfg.learning_rate,
                threshold: cfg.threshold,
                max_iter: cfg.max_iter,
                log_every: TRAIN_LOG_EVERY,
                seed: net_seed,
            };
            let rep = net.train(data, &tc)?;
            Ok(Realization {
                j_init: net.jacobian(&x1)?,
                j_final: rep.params.jacobian(&x1)?,
                iterations: rep.iterations,
                final_loss: rep.final_loss,
                converged: rep.converged,
                trained: Some(rep.params),
            })
        }
    }
}

fn sphere_data(cfg: &ExperimentConfig, cell: &Cell, seed: u64) -> Result<Dataset> {
    Dataset::random_sphere(cfg.n0, cell.n, cell.r, &mut stream(seed, &[0]))
}

fn depth_single(cfg: &ExperimentConfig) -> Result<Table> {
    let mut t = Table::new(
        "depth_single",
        &columns(&["mode", "lambda_init", "lambda_final", "abs_diff", "iterations", "final_loss"]),
    );
    let cs = cells(cfg);
    let rows = run_jobs(&cs, cfg.repetitions, |c, cell, rep| {
        let seed = derive_seed(cfg.seed, &[c as u64, rep as u64]);
        let data = sphere_data(cfg, cell, seed)?;
        let real = realize(cfg, cell, &data, seed)?;
        let a = spectrum_with_window(&real.j_init, cfg.window)?.largest_norm;
        let b = spectrum_with_window(&real.j_final, cfg.window)?.largest_norm;
        let mut v = cell.values(cfg.n0);
        v.extend([
            cfg.mode.to_string().into(),
            a.into(),
            b.into(),
            (a - b).abs().into(),
            real.iterations.into(),
            real.final_loss.into(),
        ]);
        Ok(vec![Row::new(c, rep, v).filtered(!real.converged)])
    })?;
    for r in rows {
        t.push(r)?;
    }
    Ok(t)
}

fn linear_hist(cfg: &ExperimentConfig) -> Result<Table> {
    let mut t = Table::new(
        "linear_hist",
        &columns(&["mode", "near_one", "fraction_near_one", "largest_norm", "eigen_norms", "iterations", "final_loss"]),
    );
    let cs = cells(cfg);
    let rows = run_jobs(&cs, cfg.repetitions, |c, cell, rep| {
        let seed = derive_seed(cfg.seed, &[c as u64, rep as u64]);
        let data = sphere_data(cfg, cell, seed)?;
        let real = realize(cfg, cell, &data, seed)?;
        let s = spectrum_with_window(&real.j_final, cfg.window)?;
        let norms: Vec<String> = s.eigenvalues.iter().map(|&(re, im)| format!("{:?}", re.hypot(im))).collect();
        let mut v = cell.values(cfg.n0);
        v.extend([
            cfg.mode.to_string().into(),
            s.count_near_one.into(),
            (s.count_near_one as f64 / cfg.n0 as f64).into(),
            s.largest_norm.into(),
            norms.join(";").into(),
            real.iterations.into(),
            real.final_loss.into(),
        ]);
        Ok(vec![Row::new(c, rep, v).filtered(!real.converged)])
    })?;
    for r in rows {
        t.push(r)?;
    }
    Ok(t)
}

fn radius_curve(cfg: &ExperimentConfig, schema: &str, with_chi1: bool) -> Result<Table> {
    let mut extra = vec!["mode", "largest_norm", "operator_norm", "iterations", "final_loss"];
    if with_chi1 {
        extra.push("chi1");
    }
    let mut t = Table::new(schema, &columns(&extra));
    let cs = cells(cfg);
    let chi1: Vec<f64> = if with_chi1 {
        cs.iter().map(|c| chi1_diagnostic(c.act, 1.0).map(|r| r.chi1)).collect::<Result<_>>()?
    } else {
        vec![]
    };
    let rows = run_jobs(&cs, cfg.repetitions, |c, cell, rep| {
        let seed = derive_seed(cfg.seed, &[c as u64, rep as u64]);
        let data = sphere_data(cfg, cell, seed)?;
        let real = realize(cfg, cell, &data, seed)?;
        let s = spectrum_with_window(&real.j_final, cfg.window)?;
        let mut v = cell.values(cfg.n0);
        v.extend([
            cfg.mode.to_string().into(),
            s.largest_norm.into(),
            s.operator_norm.into(),
            real.iterations.into(),
            real.final_loss.into(),
        ]);
        if with_chi1 {
            v.push(chi1[c].into());
        }
        Ok(vec![Row::new(c, rep, v).filtered(!real.converged)])
    })?;
    for r in rows {
        t.push(r)?;
    }
    Ok(t)
}

const BASIN_COLUMNS: [&str; 11] = [
    "mode",
    "noise",
    "sigma",
    "success_rate",
    "successes",
    "trials",
    "diverged",
    "fixed_point_mse",
    "largest_norm",
    "iterations",
    "final_loss",
];

/// Probes the basins of the training points under every configured noise level.
fn basin_rows(
    cfg: &ExperimentConfig,
    c: usize,
    cell: &Cell,
    rep: usize,
    data: &Dataset,
    seed: u64,
    n0: usize,
) -> Result<Vec<Row>> {
    let real = realize(cfg, cell, data, seed)?;
    let largest = spectrum_with_window(&real.j_final, cfg.window)?.largest_norm;
    let ks = match cfg.mode {
        Mode::Train => None,
        _ => Some(KernelSystem::new(data, Kernel::new(cell.depth, cell.act))?),
    };
    let init = match cfg.mode {
        Mode::Surrogate => InitSurrogate::finite_width(n0, cell.width, cell.depth, cell.act, derive_seed(seed, &[1]))?,
        _ => InitSurrogate::Zero,
    };
    let map = |x: &DVector<f64>| -> Result<DVector<f64>> {
        match (&real.trained, &ks) {
            (Some(net), _) => net.apply(x),
            (None, Some(ks)) => f_infinity(data, ks, &init, x),
            (None, None) => unreachable!("kernel system exists outside train mode"),
        }
    };
    let fixed_mse = (0..data.n())
        .map(|i| {
            let x = data.column(i);
            Ok(crate::attractor::mse(&map(&x)?, &x))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let it = IterateConfig { max_iter: cfg.basin_iters, tol: cfg.basin_tol };
    let mut rows = Vec::with_capacity(cfg.noise.len());
    for (k, &noise) in cfg.noise.iter().enumerate() {
        let sigma = if cfg.noise_absolute { noise } else { noise * cell.r };
        let b = basin_probe(map, data.x(), sigma, cfg.basin_samples, derive_seed(seed, &[2, k as u64]), it)?;
        let mut v = cell.values(n0);
        v.extend([
            cfg.mode.to_string().into(),
            noise.into(),
            sigma.into(),
            b.success_rate.into(),
            b.successes.into(),
            (b.samples * data.n()).into(),
            b.diverged.into(),
            fixed_mse.into(),
            largest.into(),
            real.iterations.into(),
            real.final_loss.into(),
        ]);
        rows.push(Row::new(c, rep, v).filtered(!real.converged));
    }
    Ok(rows)
}

fn basin_curve(cfg: &ExperimentConfig) -> Result<Table> {
    let mut t = Table::new("basin_curve", &columns(&BASIN_COLUMNS));
    let cs = cells(cfg);
    let rows = run_jobs(&cs, cfg.repetitions, |c, cell, rep| {
        let seed = derive_seed(cfg.seed, &[c as u64, rep as u64]);
        let data = sphere_data(cfg, cell, seed)?;
        basin_rows(cfg, c, cell, rep, &data, seed, cfg.n0)
    })?;
    for r in rows {
        t.push(r)?;
    }
    Ok(t)
}

fn mnist_basin(cfg: &ExperimentConfig) -> Result<Table> {
    let path = cfg
        .mnist_path
        .as_ref()
        .ok_or_else(|| NtkError::Config("field `mnist_path`: required for mnist_basin".into()))?;
    let bytes = std::fs::read(path)?;
    let tensor = crate::idx::parse_idx(&bytes, crate::idx::IMAGE_MAGIC)?;
    let mut extra: Vec<&str> = BASIN_COLUMNS.to_vec();
    extra.push("image_offset");
    let mut t = Table::new("mnist_basin", &columns(&extra));
    // n is the image count here; the n grid is ignored
    let cs: Vec<Cell> =
        cells(cfg).into_iter().filter(|c| c.n == cfg.n[0]).map(|c| Cell { n: cfg.mnist_count, ..c }).collect();
    let rows = run_jobs(&cs, cfg.repetitions, |c, cell, rep| {
        let seed = derive_seed(cfg.seed, &[c as u64, rep as u64]);
        let batch = crate::idx::preprocess(&tensor, cell.r, cfg.mnist_offset, cfg.mnist_count)?;
        let data = batch.dataset()?;
        let mut rows = basin_rows(cfg, c, cell, rep, &data, seed, data.n0())?;
        for r in &mut rows {
            r.values.push(cfg.mnist_offset.into());
        }
        Ok(rows)
    })?;
    for r in rows {
        t.push(r)?;
    }
    Ok(t)
}

/// One row per check record.
pub fn records_table(records: &[CheckRecord]) -> Result<Table> {
    let mut t = Table::new("verify_all", &["name", "relation", "observed", "predicted", "tolerance", "passed", "hard"]);
    for (k, rec) in records.iter().enumerate() {
        let relation =
            serde_json::to_value(rec.relation).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        t.push(Row::new(
            k,
            0,
            vec![
                rec.name.clone().into(),
                relation.into(),
                rec.observed.into(),
                rec.predicted.into(),
                rec.tolerance.into(),
                rec.passed.into(),
                rec.hard.into(),
            ],
        ))?;
    }
    Ok(t)
}

/// Runs the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    log::info!("running {} ({} cells x {} repetitions)", cfg.id, cells(cfg).len(), cfg.repetitions);
    match cfg.id {
        ExperimentId::DepthSingle => depth_single(cfg),
        ExperimentId::LinearHist => linear_hist(cfg),
        ExperimentId::RadiusCurve => radius_curve(cfg, "radius_curve", false),
        ExperimentId::ActivationCompare => radius_curve(cfg, "activation_compare", true),
        ExperimentId::BasinCurve => basin_curve(cfg),
        ExperimentId::MnistBasin => mnist_basin(cfg),
        ExperimentId::VerifyAll => records_table(&verify_all(cfg.seed)?),
    }
}

pub fn write_table<W: Write>(table: &Table, format: OutputFormat, w: W) -> Result<()> {
    match format {
        OutputFormat::Csv => table.write_csv(w),
        OutputFormat::Json => table.write_json(w),
    }
}

/// Writes to `path`, or to stdout when `path` is `None`.
pub fn emit(table: &Table, format: OutputFormat, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            write_table(table, format, &mut w)?;
            w.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_table(table, format, &mut lock)?;
            if format == OutputFormat::Json {
                writeln!(lock)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(id: ExperimentId) -> ExperimentConfig {
        let mut c = ExperimentConfig::new(id);
        c.repetitions = 2;
        c.n0 = 6;
        c
    }

    #[test]
    fn cells_enumerate_grid() {
        let mut c = small(ExperimentId::RadiusCurve);
        c.radii = vec![1.0, 2.0];
        c.depths = vec![2, 3];
        let cs = cells(&c);
        assert_eq!(cs.len(), 4);
        assert_eq!((cs[1].depth, cs[1].r), (2, 2.0));
    }

    #[test]
    fn radius_curve_is_reproducible() {
        let mut c = small(ExperimentId::RadiusCurve);
        c.activations = vec![Activation::ErfScaledSigmoid];
        c.n = vec![3];
        c.radii = vec![1.0, 50.0];
        let a = run_experiment(&c).unwrap();
        let b = run_experiment(&c).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
        c.seed = 1;
        assert_ne!(a.to_csv_string().unwrap(), run_experiment(&c).unwrap().to_csv_string().unwrap());
    }

    #[test]
    fn zero_noise_basin_always_succeeds() {
        let mut c = small(ExperimentId::BasinCurve);
        c.mode = Mode::Zero;
        c.activations = vec![Activation::ErfScaledSigmoid];
        c.n = vec![3];
        c.radii = vec![4.0];
        c.noise = vec![0.0];
        c.basin_samples = 5;
        let t = run_experiment(&c).unwrap();
        assert!(t.floats("success_rate").unwrap().iter().all(|&s| s == 1.0));
        assert!(t.rows.iter().all(|r| !r.filtered));
    }

    #[test]
    fn unconverged_training_is_flagged_not_dropped() {
        let mut c = small(ExperimentId::BasinCurve);
        c.widths = vec![50];
        c.n = vec![2];
        c.radii = vec![2.0];
        c.max_iter = 3;
        c.noise = vec![0.0, 0.1];
        c.basin_samples = 2;
        let t = run_experiment(&c).unwrap();
        assert_eq!(t.rows.len(), 4);
        assert!(t.rows.iter().all(|r| r.filtered));
    }

    #[test]
    fn linear_hist_counts_near_one() {
        let mut c = small(ExperimentId::LinearHist);
        c.activations = vec![Activation::sigmoid_linearized()];
        c.n0 = 10;
        c.n = vec![5];
        c.widths = vec![2048];
        c.repetitions = 1;
        let t = run_experiment(&c).unwrap();
        assert_eq!(t.floats("near_one").unwrap(), vec![4.0]);
    }
}
