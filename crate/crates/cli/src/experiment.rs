//! Seed sweeps: build the stream once, run one learner per seed, aggregate at checkpoints.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{Context, Result};
use nonconvex_da::{
    fit_slope, geometric_checkpoints, regret_curve, run_bda, run_da, run_exp3, run_uniform, window_decomposition,
    BdaConfig, BoxDomain, Convention, Density, FeedbackChannel, Grid, GridFunction, LossStream, NoiseModel,
    RegretPoint, RegretTrace, RunOptions, Schedule, WindowReport,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{Algorithm, ChannelKind, ExperimentConfig, NoiseKind, StreamKind};
use crate::format::number;

/// Energy-diagnostic totals for one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticSummary {
    pub steps: usize,
    pub recursion_violations: usize,
    pub telescoped_violations: usize,
    pub worst_recursion_margin: f64,
    pub worst_telescoped_margin: f64,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub curve: Vec<RegretPoint<f64>>,
    /// BDA rounds in which the kernel radius sat at its floor.
    pub floor_rounds: usize,
    pub diagnostics: Option<DiagnosticSummary>,
    pub windows: Vec<WindowReport<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: String,
    pub dim: usize,
    pub t: usize,
    pub mean_regret: f64,
    /// Sample standard deviation over seeds (`n - 1` denominator; 0 for one seed).
    pub std_regret: f64,
    /// Slope of the final mean curve; `None` when the fit is not possible.
    pub slope: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub checkpoints: Vec<usize>,
    pub seeds: Vec<SeedResult>,
    pub summary: Vec<SummaryRow>,
}

impl Experiment {
    pub fn floor_rounds(&self) -> usize {
        self.seeds.iter().map(|s| s.floor_rounds).sum()
    }

    /// Final-checkpoint expected regret of every seed, in seed order.
    pub fn final_regrets(&self) -> Vec<f64> {
        self.seeds.iter().map(|s| s.curve.last().expect("at least one checkpoint").expected).collect()
    }
}

pub fn build_grid(config: &ExperimentConfig) -> Result<Arc<Grid<f64>>> {
    let domain = BoxDomain::new(config.lower.clone(), config.upper.clone())?;
    Ok(Grid::shared(domain, config.grid_n)?)
}

pub fn build_stream(config: &ExperimentConfig, grid: Arc<Grid<f64>>) -> Result<LossStream<f64>> {
    let s = &config.stream;
    let terms = || s.terms.clone().unwrap_or_else(|| LossStream::default_terms(config.dim, s.seed));
    let stream = match s.kind {
        StreamKind::Trig => LossStream::trig_mixture(grid, s.offset, terms(), Convention::Loss)?,
        StreamKind::Drifting => {
            LossStream::drifting(grid, s.offset, terms(), s.rate, s.drift_exponent, Convention::Loss)?
        }
        StreamKind::FiniteSum => {
            let components = (0..s.components as u64)
                .map(|i| {
                    let seed = s.seed.wrapping_add(i);
                    let c = LossStream::default_trig(grid.clone(), seed, Convention::Loss)?.loss_function(1);
                    Ok(c.map(|v| v + s.offset)?)
                })
                .collect::<Result<Vec<GridFunction<f64>>>>()?;
            LossStream::finite_sum(grid, components, Convention::Loss)?
        }
    };
    Ok(match s.convention {
        Convention::Loss => stream,
        Convention::Payoff => stream.to_payoff(),
    })
}

pub fn build_channel(config: &ExperimentConfig, stream: &LossStream<f64>) -> Result<FeedbackChannel<f64>> {
    let c = &config.channel;
    let noise = match c.noise {
        NoiseKind::Trig => NoiseModel::Trig { sigma: c.sigma, harmonics: c.harmonics },
        NoiseKind::Components => NoiseModel::ComponentSampling,
    };
    Ok(match c.kind {
        ChannelKind::Exact => FeedbackChannel::exact(),
        ChannelKind::Unbiased => FeedbackChannel::unbiased(stream, noise)?,
        ChannelKind::Biased => FeedbackChannel::biased(stream, noise, c.bias_scale, c.bias_decay)?,
    })
}

/// Learning-rate schedule for full-information dual averaging; defaults `c = 1`, `p = 1/2`.
pub fn da_schedule(config: &ExperimentConfig) -> Result<Schedule<f64>> {
    let s = &config.schedule;
    Ok(Schedule::new(s.eta_coefficient.unwrap_or(1.0), s.p.unwrap_or(0.5))?)
}

pub fn bda_config(config: &ExperimentConfig, grid: &Grid<f64>, stream: &LossStream<f64>) -> Result<BdaConfig<f64>> {
    let d = BdaConfig::defaults(grid, stream.bound())?;
    let s = &config.schedule;
    Ok(BdaConfig::new(
        grid,
        Schedule::new(s.eta_coefficient.unwrap_or(d.eta.coefficient), s.p.unwrap_or(d.eta.exponent))?,
        s.delta_coefficient.unwrap_or(d.delta.coefficient),
        s.w.unwrap_or(d.delta.exponent),
        Schedule::new(s.epsilon_coefficient.unwrap_or(d.epsilon.coefficient), s.b.unwrap_or(d.epsilon.exponent))?,
    )?)
}

/// Uniform density on the ball around the configured center (default: box midpoint) with the
/// configured radius (default: an eighth of the diameter).
fn comparator(config: &ExperimentConfig, grid: &Arc<Grid<f64>>) -> Result<Density<f64>> {
    let center = config
        .diagnostics_center
        .clone()
        .unwrap_or_else(|| config.lower.iter().zip(&config.upper).map(|(a, b)| 0.5 * (a + b)).collect());
    let radius = config.diagnostics_radius.unwrap_or(grid.domain().diameter() / 8.0);
    let patch = grid.ball_patch(&center, radius)?;
    Ok(Density::uniform_on(grid.clone(), &patch.cells)?)
}

/// Runs one seed. The generator for seed `s` is `ChaCha8Rng::seed_from_u64(s)`.
pub fn run_seed(
    config: &ExperimentConfig,
    stream: &LossStream<f64>,
    checkpoints: &[usize],
    seed: u64,
) -> Result<SeedResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = stream.grid().clone();
    let t = config.horizon;
    let mut floor_rounds = 0;
    let mut diagnostics = None;
    let trace: RegretTrace<f64> = match config.algorithm {
        Algorithm::Da => {
            let channel = build_channel(config, stream)?;
            let options = RunOptions {
                comparator: if config.energy_diagnostics { Some(comparator(config, &grid)?) } else { None },
                snapshots: Vec::new(),
            };
            let run = run_da(stream, &channel, config.regularizer, da_schedule(config)?, t, &mut rng, &options)?;
            diagnostics = run.diagnostics.map(|d| DiagnosticSummary {
                steps: d.steps_checked,
                recursion_violations: d.recursion_violations.len(),
                telescoped_violations: d.telescoped_violations.len(),
                worst_recursion_margin: d.worst_recursion_margin,
                worst_telescoped_margin: d.worst_telescoped_margin,
            });
            run.trace
        }
        Algorithm::Bda => {
            let run = run_bda(stream, &bda_config(config, &grid, stream)?, t, &mut rng, &[])?;
            floor_rounds = run.floor_rounds;
            run.trace
        }
        Algorithm::Exp3Grid => run_exp3(stream, config.exp3_arms, t, &mut rng)?,
        Algorithm::Uniform => run_uniform(stream, t, &mut rng)?,
    };
    let curve = regret_curve(&trace, stream, checkpoints)?;
    let windows = config
        .windows
        .iter()
        .map(|&w| window_decomposition(&trace, stream, t, w))
        .collect::<nonconvex_da::Result<Vec<_>>>()?;
    Ok(SeedResult { seed, curve, floor_rounds, diagnostics, windows })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn summarize(config: &ExperimentConfig, checkpoints: &[usize], seeds: &[SeedResult]) -> Vec<SummaryRow> {
    let stats: Vec<(f64, f64)> = (0..checkpoints.len())
        .map(|i| mean_std(&seeds.iter().map(|s| s.curve[i].expected).collect::<Vec<_>>()))
        .collect();
    let means: Vec<f64> = stats.iter().map(|s| s.0).collect();
    let slope = fit_slope(checkpoints, &means).ok().map(|f| f.slope);
    checkpoints
        .iter()
        .zip(stats)
        .map(|(&t, (mean_regret, std_regret))| SummaryRow {
            algorithm: config.algorithm.name().to_string(),
            dim: config.dim,
            t,
            mean_regret,
            std_regret,
            slope,
        })
        .collect()
}

/// Runs every seed on a pool of `threads` workers (rayon's default when `None`). Results are
/// merged in seed order, so output does not depend on the thread count.
pub fn run(config: &ExperimentConfig, threads: Option<usize>) -> Result<Experiment> {
    let grid = build_grid(config)?;
    let stream = build_stream(config, grid)?;
    let checkpoints = geometric_checkpoints(config.checkpoint_start, config.checkpoint_ratio, config.horizon)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = threads {
        builder = builder.num_threads(k);
    }
    let pool = builder.build().context("building the worker pool")?;
    let seeds = pool.install(|| {
        config
            .seeds
            .par_iter()
            .map(|&s| run_seed(config, &stream, &checkpoints, s).with_context(|| format!("seed {s}")))
            .collect::<Result<Vec<_>>>()
    })?;
    let summary = summarize(config, &checkpoints, &seeds);
    Ok(Experiment { config: config.clone(), checkpoints, seeds, summary })
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .with_context(|| format!("creating {}", path.display()))?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_csv(
        path,
        &["algorithm", "dim", "t", "mean_regret", "std_regret", "slope"],
        rows.iter().map(|r| {
            vec![
                r.algorithm.clone(),
                r.dim.to_string(),
                r.t.to_string(),
                number(r.mean_regret),
                number(r.std_regret),
                r.slope.map(number).unwrap_or_default(),
            ]
        }),
    )
}

/// Writes `seed_<s>.csv` per seed, `summary.csv`, and `diagnostics.csv` / `windows.csv` when
/// requested. Returns the written paths.
pub fn write_outputs(experiment: &Experiment, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for s in &experiment.seeds {
        let path = dir.join(format!("seed_{}.csv", s.seed));
        write_csv(
            &path,
            &["t", "expected_regret", "realized_regret", "dynamic_regret"],
            s.curve.iter().map(|p| vec![p.t.to_string(), number(p.expected), number(p.realized), number(p.dynamic)]),
        )?;
        written.push(path);
    }
    let path = dir.join("summary.csv");
    write_summary(&path, &experiment.summary)?;
    written.push(path);
    if experiment.config.energy_diagnostics {
        let path = dir.join("diagnostics.csv");
        write_csv(
            &path,
            &["seed", "steps", "recursion_violations", "telescoped_violations", "worst_recursion_margin", "worst_telescoped_margin"],
            experiment.seeds.iter().filter_map(|s| {
                s.diagnostics.as_ref().map(|d| {
                    vec![
                        s.seed.to_string(),
                        d.steps.to_string(),
                        d.recursion_violations.to_string(),
                        d.telescoped_violations.to_string(),
                        number(d.worst_recursion_margin),
                        number(d.worst_telescoped_margin),
                    ]
                })
            }),
        )?;
        written.push(path);
    }
    if !experiment.config.windows.is_empty() {
        let path = dir.join("windows.csv");
        let rows = experiment.seeds.iter().flat_map(|s| {
            s.windows.iter().map(move |w| {
                vec![
                    s.seed.to_string(),
                    w.window.to_string(),
                    number(w.dynamic),
                    number(w.window_regrets.iter().sum()),
                    number(w.variation),
                    number(w.bound),
                    w.holds.to_string(),
                ]
            })
        });
        write_csv(&path, &["seed", "window", "dynamic_regret", "window_regret_sum", "variation", "bound", "holds"], rows)?;
        written.push(path);
    }
    Ok(written)
}
