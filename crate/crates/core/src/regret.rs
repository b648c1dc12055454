//! Post-hoc regret accounting.
//!
//! Every quantity is computed in signed-loss form (payoffs negated), so "best" always means
//! smallest cumulative loss. The best fixed point is searched over cell centers with ties
//! resolved to the lowest index, and the stream is re-evaluated lazily from its round index.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, Density, Grid};
use crate::loss::LossStream;
use crate::scalar::{compensated_sum, Scalar};

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord<T> {
    pub t: usize,
    /// Expected signed loss `<l_t, x_t>`.
    pub expected: T,
    /// Signed loss at the realized action.
    pub realized: T,
    pub action: Vec<T>,
}

/// Per-round records of one run, plus strategy snapshots at chosen rounds.
#[derive(Debug, Clone)]
pub struct RegretTrace<T> {
    grid: Arc<Grid<T>>,
    records: Vec<RoundRecord<T>>,
    snapshots: Vec<(usize, Density<T>)>,
}

impl<T: Scalar> RegretTrace<T> {
    pub fn new(grid: Arc<Grid<T>>) -> Self {
        RegretTrace { grid, records: Vec::new(), snapshots: Vec::new() }
    }

    pub fn push(&mut self, record: RoundRecord<T>) {
        debug_assert_eq!(record.t, self.records.len() + 1);
        self.records.push(record);
    }

    pub fn push_snapshot(&mut self, t: usize, strategy: Density<T>) {
        self.snapshots.push((t, strategy));
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[RoundRecord<T>] {
        &self.records
    }

    pub fn snapshots(&self) -> &[(usize, Density<T>)] {
        &self.snapshots
    }

    /// Cumulative expected signed loss over rounds `1..=horizon`.
    pub fn cumulative_expected(&self, horizon: usize) -> T {
        compensated_sum(self.records[..horizon].iter().map(|r| r.expected))
    }

    fn check(&self, stream: &LossStream<T>, horizon: usize) -> Result<()> {
        check_same_grid(&self.grid, stream.grid())?;
        if horizon == 0 || horizon > self.records.len() {
            return Err(Error::Config(format!(
                "horizon {horizon} outside the recorded range 1..={}",
                self.records.len()
            )));
        }
        Ok(())
    }
}

/// Regret quantities at one horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegretPoint<T> {
    pub t: usize,
    /// Static regret in expected loss.
    pub expected: T,
    /// Static regret in realized loss.
    pub realized: T,
    pub dynamic: T,
    /// Best-cell index in hindsight.
    pub best_cell: usize,
    /// Upper bound `L * cell_diameter * t` on the gap to the continuous best point.
    pub discretization: T,
}

fn argmin<T: Scalar>(values: &[T]) -> (usize, T) {
    let mut best = (0, values[0]);
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < best.1 {
            best = (i, *v);
        }
    }
    best
}

/// Static regret, realized regret and dynamic regret at each of the given horizons, in one
/// pass over the stream. Horizons must be strictly increasing.
pub fn regret_curve<T: Scalar>(
    trace: &RegretTrace<T>,
    stream: &LossStream<T>,
    horizons: &[usize],
) -> Result<Vec<RegretPoint<T>>> {
    let Some(&last) = horizons.last() else {
        return Ok(Vec::new());
    };
    trace.check(stream, last)?;
    if horizons.windows(2).any(|w| w[0] >= w[1]) || horizons[0] == 0 {
        return Err(Error::Config("horizons must be positive and strictly increasing".into()));
    }
    let grid = stream.grid();
    let slack_rate = stream.lipschitz() * grid.cell_diameter();
    let mut cumulative = vec![T::zero(); grid.len()];
    let mut comp = vec![T::zero(); grid.len()];
    let (mut expected, mut realized, mut best_sum) = (Kahan::default(), Kahan::default(), Kahan::default());
    let mut out = Vec::with_capacity(horizons.len());
    let mut next = 0;
    for t in 1..=last {
        let f = stream.signed_loss(t);
        for ((c, k), v) in cumulative.iter_mut().zip(comp.iter_mut()).zip(f.values()) {
            kahan_add(c, k, *v);
        }
        best_sum.add(f.min_value());
        let rec = &trace.records[t - 1];
        expected.add(rec.expected);
        realized.add(rec.realized);
        if t == horizons[next] {
            let (cell, best) = argmin(&cumulative);
            out.push(RegretPoint {
                t,
                expected: expected.sum - best,
                realized: realized.sum - best,
                dynamic: expected.sum - best_sum.sum,
                best_cell: cell,
                discretization: slack_rate * T::lit(t as f64),
            });
            next += 1;
        }
    }
    Ok(out)
}

#[derive(Default, Clone, Copy)]
struct Kahan<T> {
    sum: T,
    comp: T,
}

impl<T: Scalar> Kahan<T> {
    fn add(&mut self, v: T) {
        kahan_add(&mut self.sum, &mut self.comp, v);
    }
}

fn kahan_add<T: Scalar>(sum: &mut T, comp: &mut T, v: T) {
    let y = v - *comp;
    let t = *sum + y;
    *comp = (t - *sum) - y;
    *sum = t;
}

/// `Reg(T) = sum <l_t, x_t> - min_cell sum l_t(cell)`.
pub fn static_regret<T: Scalar>(trace: &RegretTrace<T>, stream: &LossStream<T>, horizon: usize) -> Result<T> {
    Ok(regret_curve(trace, stream, &[horizon])?[0].expected)
}

/// `DynReg(T) = sum [<l_t, x_t> - min_cell l_t(cell)]`.
pub fn dynamic_regret<T: Scalar>(trace: &RegretTrace<T>, stream: &LossStream<T>, horizon: usize) -> Result<T> {
    Ok(regret_curve(trace, stream, &[horizon])?[0].dynamic)
}

/// `Reg_mu(T) = sum <l_t, x_t - mu>`.
pub fn regret_vs_comparator<T: Scalar>(
    trace: &RegretTrace<T>,
    stream: &LossStream<T>,
    mu: &Density<T>,
    horizon: usize,
) -> Result<T> {
    trace.check(stream, horizon)?;
    check_same_grid(stream.grid(), mu.grid())?;
    let mut acc = Kahan::default();
    for t in 1..=horizon {
        acc.add(trace.records[t - 1].expected - stream.signed_loss(t).pair(mu)?);
    }
    Ok(acc.sum)
}

/// Window decomposition of dynamic regret.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowReport<T> {
    pub window: usize,
    /// Best-fixed-point regret inside each window.
    pub window_regrets: Vec<T>,
    pub dynamic: T,
    /// `V_T` of the stream over the horizon.
    pub variation: T,
    /// `sum_k Reg(window_k) + 2 window V_T`.
    pub bound: T,
    /// Whether `dynamic <= bound + 1e-4`.
    pub holds: bool,
}

/// Splits `1..=horizon` into windows of length `window` (the last possibly shorter) and
/// checks `DynReg(T) <= sum_k Reg(window_k) + 2 window V_T`.
pub fn window_decomposition<T: Scalar>(
    trace: &RegretTrace<T>,
    stream: &LossStream<T>,
    horizon: usize,
    window: usize,
) -> Result<WindowReport<T>> {
    trace.check(stream, horizon)?;
    if window == 0 || window > horizon {
        return Err(Error::Config(format!("window length {window} outside 1..={horizon}")));
    }
    let n = stream.grid().len();
    let mut window_regrets = Vec::new();
    let mut dynamic = Kahan::default();
    let mut variation = Kahan::default();
    let mut prev: Option<Vec<T>> = None;
    let mut start = 1;
    while start <= horizon {
        let end = (start + window - 1).min(horizon);
        let mut cumulative = vec![T::zero(); n];
        let mut comp = vec![T::zero(); n];
        let mut expected = Kahan::default();
        for t in start..=end {
            let f = stream.signed_loss(t);
            let vals = f.values();
            for ((c, k), v) in cumulative.iter_mut().zip(comp.iter_mut()).zip(vals) {
                kahan_add(c, k, *v);
            }
            let e = trace.records[t - 1].expected;
            expected.add(e);
            dynamic.add(e - f.min_value());
            if let Some(p) = &prev {
                variation.add(p.iter().zip(vals).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs())));
            }
            prev = Some(vals.to_vec());
        }
        window_regrets.push(expected.sum - argmin(&cumulative).1);
        start = end + 1;
    }
    let bound = compensated_sum(window_regrets.iter().copied())
        + T::lit(2.0) * T::lit(window as f64) * variation.sum;
    Ok(WindowReport {
        window,
        holds: dynamic.sum <= bound + T::lit(1e-4),
        window_regrets,
        dynamic: dynamic.sum,
        variation: variation.sum,
        bound,
    })
}

/// Least-squares fit of `log(value)` against `log(horizon)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SlopeFit {
    /// Horizons that entered the fit (positive values only).
    pub horizons: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in log space.
    pub residual: f64,
    /// Normal-approximation 95% half-width of the slope.
    pub half_width: f64,
}

pub const MIN_CHECKPOINTS: usize = 4;
pub const MIN_DECADES: f64 = 1.5;

/// Fits `value ~ c * horizon^slope`. Non-positive values are dropped; at least
/// [`MIN_CHECKPOINTS`] must remain and span [`MIN_DECADES`] decades.
pub fn fit_slope(horizons: &[usize], values: &[f64]) -> Result<SlopeFit> {
    if horizons.len() != values.len() {
        return Err(Error::InvalidValue(format!(
            "{} horizons but {} values",
            horizons.len(),
            values.len()
        )));
    }
    let kept: Vec<(usize, f64, f64)> = horizons
        .iter()
        .zip(values)
        .filter(|(h, v)| **h > 0 && **v > 0.0 && v.is_finite())
        .map(|(h, v)| (*h, (*h as f64).ln(), v.ln()))
        .collect();
    let decades = match (kept.first(), kept.last()) {
        (Some(a), Some(b)) => (b.0 as f64 / a.0 as f64).log10(),
        _ => 0.0,
    };
    if kept.len() < MIN_CHECKPOINTS || decades < MIN_DECADES {
        return Err(Error::InsufficientCheckpoints { usable: kept.len(), decades });
    }
    let n = kept.len() as f64;
    let mx = kept.iter().map(|k| k.1).sum::<f64>() / n;
    let my = kept.iter().map(|k| k.2).sum::<f64>() / n;
    let sxx: f64 = kept.iter().map(|k| (k.1 - mx).powi(2)).sum();
    let sxy: f64 = kept.iter().map(|k| (k.1 - mx) * (k.2 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = kept.iter().map(|k| (k.2 - intercept - slope * k.1).powi(2)).sum();
    let se = (sse / (n - 2.0) / sxx).sqrt();
    Ok(SlopeFit {
        horizons: kept.iter().map(|k| k.0).collect(),
        slope,
        intercept,
        residual: (sse / n).sqrt(),
        half_width: 1.96 * se,
    })
}

/// Geometric checkpoints `start, ceil(start r), ...` below `horizon`, always ending at
/// `horizon`. Horizons below `start` yield only `horizon`.
pub fn geometric_checkpoints(start: usize, ratio: f64, horizon: usize) -> Result<Vec<usize>> {
    if start == 0 || !(ratio > 1.0) || !ratio.is_finite() {
        return Err(Error::Config(format!(
            "checkpoints need start >= 1 and ratio > 1, got {start} and {ratio}"
        )));
    }
    let mut out = Vec::new();
    let mut x = start as f64;
    while (x.round() as usize) < horizon {
        let c = x.round() as usize;
        if out.last() != Some(&c) {
            out.push(c);
        }
        x *= ratio;
    }
    out.push(horizon);
    Ok(out)
}
