//! Command-line front end. Every subcommand reads its parameters from the same
//! flat `key = value` configuration (see `ExperimentConfig::set`), with `--set`
//! overrides applied after `--config`.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use ntkae::attractor::{basin_probe, IterateConfig};
use ntkae::data::Dataset;
use ntkae::experiments::{
    cells, emit, records_table, run_experiment, Cell, ExperimentConfig, ExperimentId, Mode, OutputFormat, Row, Table,
};
use ntkae::kernels::{Kernel, KernelSystem};
use ntkae::net::{NetworkParams, TrainConfig};
use ntkae::regression::{f_infinity, jacobian_infinity, InitSurrogate};
use ntkae::rng::{derive_seed, stream};
use ntkae::spectrum::spectrum_with_window;
use ntkae::theory::verify_all;

#[derive(Parser)]
#[command(name = "ntkae", version, about = "NTK-limit toolkit for iterated autoencoders")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// csv or json.
    #[arg(long, global = true)]
    format: Option<OutputFormat>,
    /// Flat key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Extra `key=value` assignment, applied after the file.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// NTK value and gradient norm on the first two points of a random dataset.
    Kernel,
    /// Train an autoencoder by full-batch gradient descent and save a checkpoint.
    Train {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Eigenvalues of J at the first training point (checkpoint or NTK limit).
    Spectrum {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Basin probe around the training points (checkpoint or NTK limit).
    Basin {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Run every theory check; exits nonzero iff a hard check fails.
    Verify,
    /// Run a named experiment sweep.
    Experiment { id: ExperimentId },
}

fn load_config(common: &Common, id: ExperimentId) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let mut cfg = ExperimentConfig::from_text(&text, id)?;
            if cfg.id != id && id != ExperimentId::VerifyAll {
                // the subcommand names the experiment; keep the file's other fields
                cfg.id = id;
            }
            cfg
        }
        None => ExperimentConfig::new(id),
    };
    for kv in &common.set {
        let Some((k, v)) = kv.split_once('=') else { bail!("--set expects key=value, got `{kv}`") };
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    if let Some(f) = common.format {
        cfg.format = f;
    }
    Ok(cfg)
}

/// First grid cell and its dataset, seeded like repetition 0 of cell 0.
fn first_cell(cfg: &ExperimentConfig) -> anyhow::Result<(Cell, Dataset, u64)> {
    cfg.validate()?;
    let cell = cells(cfg)[0];
    let seed = derive_seed(cfg.seed, &[0, 0]);
    let data = Dataset::random_sphere(cfg.n0, cell.n, cell.r, &mut stream(seed, &[0]))?;
    Ok((cell, data, seed))
}

fn kernel(cfg: &ExperimentConfig) -> anyhow::Result<Table> {
    let mut cfg = cfg.clone();
    cfg.n = vec![cfg.n[0].max(2)];
    let (cell, data, _) = first_cell(&cfg)?;
    let k = Kernel::new(cell.depth, cell.act);
    let (a, b) = (data.column(0), data.column(1));
    let (v, g) = k.value_and_gradient(&a, &b)?;
    let mut t =
        Table::new("kernel", &["activation", "depth", "n0", "r", "rho", "theta", "theta_diag", "gradient_norm"]);
    t.push(Row::new(
        0,
        0,
        vec![
            cell.act.to_string().into(),
            cell.depth.into(),
            cfg.n0.into(),
            cell.r.into(),
            data.rho()[(0, 1)].into(),
            v.into(),
            k.value(&a, &a)?.into(),
            g.norm().into(),
        ],
    ))?;
    Ok(t)
}

fn train(cfg: &ExperimentConfig, checkpoint: &PathBuf) -> anyhow::Result<Table> {
    let (cell, data, seed) = first_cell(cfg)?;
    let net_seed = derive_seed(seed, &[1]);
    let net = NetworkParams::autoencoder(cfg.n0, cell.width, cell.depth, cell.act, &mut stream(net_seed, &[]))?;
    let tc = TrainConfig {
        learning_rate: cfg.learning_rate,
        threshold: cfg.threshold,
        max_iter: cfg.max_iter,
        log_every: 100,
        seed: net_seed,
    };
    let rep = net.train(&data, &tc)?;
    rep.params.save(checkpoint).with_context(|| format!("writing {}", checkpoint.display()))?;
    log::info!("converged={} after {} steps, loss {:e}", rep.converged, rep.iterations, rep.final_loss);
    let mut t = Table::new("train", &["iteration", "loss"]);
    for &(it, loss) in &rep.loss_trace {
        t.push(Row::new(0, 0, vec![it.into(), loss.into()]).filtered(!rep.converged))?;
    }
    Ok(t)
}

enum Map {
    Net(NetworkParams),
    Ntk { ks: KernelSystem, init: InitSurrogate },
}

fn map_for(
    cfg: &ExperimentConfig,
    cell: &Cell,
    data: &Dataset,
    seed: u64,
    checkpoint: Option<&PathBuf>,
) -> anyhow::Result<Map> {
    if let Some(p) = checkpoint {
        let net = NetworkParams::load(p).with_context(|| format!("reading {}", p.display()))?;
        if net.input_dim() != data.n0() {
            bail!("checkpoint expects inputs of dimension {}, config has n0 = {}", net.input_dim(), data.n0());
        }
        return Ok(Map::Net(net));
    }
    let init = match cfg.mode {
        Mode::Surrogate => {
            InitSurrogate::finite_width(data.n0(), cell.width, cell.depth, cell.act, derive_seed(seed, &[1]))?
        }
        Mode::Zero => InitSurrogate::Zero,
        Mode::Train => bail!("mode = train needs --checkpoint (produce one with `ntkae train`)"),
    };
    Ok(Map::Ntk { ks: KernelSystem::new(data, Kernel::new(cell.depth, cell.act))?, init })
}

fn spectrum(cfg: &ExperimentConfig, checkpoint: Option<&PathBuf>) -> anyhow::Result<Table> {
    let (cell, data, seed) = first_cell(cfg)?;
    let x1 = data.column(0);
    let j = match map_for(cfg, &cell, &data, seed, checkpoint)? {
        Map::Net(net) => net.jacobian(&x1)?,
        Map::Ntk { ks, init } => jacobian_infinity(&data, &ks, &init, &x1, false)?,
    };
    let s = spectrum_with_window(&j, cfg.window)?;
    let mut t = Table::new("spectrum", &["index", "re", "im", "norm", "operator_norm", "near_one"]);
    for (k, &(re, im)) in s.eigenvalues.iter().enumerate() {
        t.push(Row::new(
            0,
            0,
            vec![k.into(), re.into(), im.into(), re.hypot(im).into(), s.operator_norm.into(), s.count_near_one.into()],
        ))?;
    }
    Ok(t)
}

fn basin(cfg: &ExperimentConfig, checkpoint: Option<&PathBuf>) -> anyhow::Result<Table> {
    let (cell, data, seed) = first_cell(cfg)?;
    let m = map_for(cfg, &cell, &data, seed, checkpoint)?;
    let map = |x: &DVector<f64>| match &m {
        Map::Net(net) => net.apply(x),
        Map::Ntk { ks, init } => f_infinity(&data, ks, init, x),
    };
    let it = IterateConfig { max_iter: cfg.basin_iters, tol: cfg.basin_tol };
    let mut t = Table::new("basin", &["noise", "sigma", "success_rate", "successes", "trials", "diverged"]);
    for (k, &noise) in cfg.noise.iter().enumerate() {
        let sigma = if cfg.noise_absolute { noise } else { noise * cell.r };
        let b = basin_probe(map, data.x(), sigma, cfg.basin_samples, derive_seed(seed, &[2, k as u64]), it)?;
        t.push(Row::new(
            0,
            k,
            vec![
                noise.into(),
                sigma.into(),
                b.success_rate.into(),
                b.successes.into(),
                (b.samples * data.n()).into(),
                b.diverged.into(),
            ],
        ))?;
    }
    Ok(t)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> anyhow::Result<ExitCode> {
    let cli = Cli::parse();
    let id = match &cli.cmd {
        Cmd::Experiment { id } => *id,
        Cmd::Verify => ExperimentId::VerifyAll,
        _ => ExperimentId::RadiusCurve,
    };
    let cfg = load_config(&cli.common, id)?;
    let table = match &cli.cmd {
        Cmd::Kernel => kernel(&cfg)?,
        Cmd::Train { checkpoint } => train(&cfg, checkpoint)?,
        Cmd::Spectrum { checkpoint } => spectrum(&cfg, checkpoint.as_ref())?,
        Cmd::Basin { checkpoint } => basin(&cfg, checkpoint.as_ref())?,
        Cmd::Experiment { .. } => run_experiment(&cfg)?,
        Cmd::Verify => {
            let records = verify_all(cfg.seed)?;
            for r in &records {
                eprintln!("{r}");
            }
            let failed = records.iter().filter(|r| r.is_hard_failure()).count();
            if cfg.out.is_some() {
                emit(&records_table(&records)?, cfg.format, cfg.out.as_deref())?;
            }
            eprintln!("{} checks, {failed} hard failures", records.len());
            return Ok(if failed == 0 { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    };
    emit(&table, cfg.format, cfg.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}
