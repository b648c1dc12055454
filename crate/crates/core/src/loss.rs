//! Adversaries and observation processes.
//!
//! A [`LossStream`] is a deterministic function of the round index. Trigonometric terms are
//! written in normalized coordinates `u = (x - lower) / length`, so a frequency vector `k`
//! gives `a sin(2 pi <k,u> + phase)`. A [`FeedbackChannel`] turns the round-`t` function into
//! an [`Observation`]: a full inexact model `l_t + U_t + b_t`, or a single realized value.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{Density, Grid, GridFunction};
use crate::scalar::Scalar;

/// Sign convention of a stream's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Convention {
    /// Values are losses; the learner minimizes.
    Loss,
    /// Values are payoffs; the learner maximizes.
    Payoff,
}

impl Convention {
    /// Factor turning a native value into a signed loss.
    pub fn loss_sign<T: Scalar>(self) -> T {
        match self {
            Convention::Loss => T::one(),
            Convention::Payoff => -T::one(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrigTerm<T> {
    pub amplitude: T,
    pub frequency: Vec<i32>,
    pub phase: T,
}

/// Sines and cosines of `2 pi <k,u>` at every cell center.
#[derive(Debug, Clone)]
struct Wave<T> {
    sin: Vec<T>,
    cos: Vec<T>,
}

impl<T: Scalar> Wave<T> {
    fn new(grid: &Grid<T>, frequency: &[T]) -> Self {
        let mut sin = Vec::with_capacity(grid.len());
        let mut cos = Vec::with_capacity(grid.len());
        for c in 0..grid.len() {
            let arg = T::two_pi() * dot_normalized(grid, &grid.center(c), frequency);
            sin.push(arg.sin());
            cos.push(arg.cos());
        }
        Wave { sin, cos }
    }

    /// Accumulates `a sin(theta + phase)` into `out`.
    fn accumulate(&self, a: T, phase: T, out: &mut [T]) {
        let (ca, sa) = (a * phase.cos(), a * phase.sin());
        for ((o, s), c) in out.iter_mut().zip(&self.sin).zip(&self.cos) {
            *o += *s * ca + *c * sa;
        }
    }
}

fn dot_normalized<T: Scalar>(grid: &Grid<T>, x: &[T], frequency: &[T]) -> T {
    let dom = grid.domain();
    let mut acc = T::zero();
    for (i, k) in frequency.iter().enumerate() {
        acc += *k * (x[i] - dom.lower()[i]) / dom.length(i);
    }
    acc
}

#[derive(Debug, Clone)]
enum Kind<T> {
    Trig {
        offset: T,
        terms: Vec<TrigTerm<T>>,
        waves: Vec<Wave<T>>,
        /// Translation `s(t) = rate * t^exponent` along axis 0, in normalized units.
        drift: Option<(T, T)>,
    },
    FiniteSum {
        components: Vec<GridFunction<T>>,
        mean: GridFunction<T>,
    },
}

/// Time-indexed loss (or payoff) functions with declared range and Lipschitz constant.
///
/// Reported values are `shift + scale * raw`, which lets [`LossStream::to_payoff`] reuse a
/// loss stream as a payoff stream in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct LossStream<T> {
    grid: Arc<Grid<T>>,
    kind: Kind<T>,
    convention: Convention,
    shift: T,
    scale: T,
    raw_range: (T, T),
    raw_lipschitz: T,
}

impl<T: Scalar> LossStream<T> {
    pub fn trig_mixture(
        grid: Arc<Grid<T>>,
        offset: T,
        terms: Vec<TrigTerm<T>>,
        convention: Convention,
    ) -> Result<Self> {
        Self::trig(grid, offset, terms, None, convention)
    }

    /// Trigonometric profile translated along axis 0 by `rate * t^exponent` (normalized
    /// units) at round `t`.
    pub fn drifting(
        grid: Arc<Grid<T>>,
        offset: T,
        terms: Vec<TrigTerm<T>>,
        rate: T,
        exponent: T,
        convention: Convention,
    ) -> Result<Self> {
        if !rate.is_finite() || !(exponent >= T::zero()) || !exponent.is_finite() {
            return Err(Error::Config(format!(
                "drift needs a finite rate and a non-negative exponent, got {rate} and {exponent}"
            )));
        }
        Self::trig(grid, offset, terms, Some((rate, exponent)), convention)
    }

    fn trig(
        grid: Arc<Grid<T>>,
        offset: T,
        terms: Vec<TrigTerm<T>>,
        drift: Option<(T, T)>,
        convention: Convention,
    ) -> Result<Self> {
        let d = grid.dim();
        if !offset.is_finite() {
            return Err(Error::Config("stream offset must be finite".into()));
        }
        let mut waves = Vec::with_capacity(terms.len());
        let mut amp = T::zero();
        let mut lip = T::zero();
        for term in &terms {
            if term.frequency.len() != d {
                return Err(Error::Config(format!(
                    "frequency vector {:?} has length {} but the domain has dimension {d}",
                    term.frequency,
                    term.frequency.len()
                )));
            }
            if !term.amplitude.is_finite() || !term.phase.is_finite() {
                return Err(Error::Config("trig term amplitude and phase must be finite".into()));
            }
            let k: Vec<T> = term.frequency.iter().map(|&f| T::lit(f as f64)).collect();
            let mut grad = T::zero();
            for (i, ki) in k.iter().enumerate() {
                let g = *ki / grid.domain().length(i);
                grad += g * g;
            }
            amp += term.amplitude.abs();
            lip += term.amplitude.abs() * T::two_pi() * grad.sqrt();
            waves.push(Wave::new(&grid, &k));
        }
        Ok(LossStream {
            grid,
            kind: Kind::Trig { offset, terms, waves, drift },
            convention,
            shift: T::zero(),
            scale: T::one(),
            raw_range: (offset - amp, offset + amp),
            raw_lipschitz: lip,
        })
    }

    /// Static mean of component functions. The Lipschitz constant is measured between cell
    /// centers: `sqrt(d)` times the largest slope between axis neighbors.
    pub fn finite_sum(
        grid: Arc<Grid<T>>,
        components: Vec<GridFunction<T>>,
        convention: Convention,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config("finite_sum needs at least one component".into()));
        }
        let mut acc = vec![T::zero(); grid.len()];
        let (mut lo, mut hi, mut slope) = (T::infinity(), T::neg_infinity(), T::zero());
        let n = grid.cells_per_axis();
        for comp in &components {
            crate::grid::check_same_grid(&grid, comp.grid())?;
            for (a, v) in acc.iter_mut().zip(comp.values()) {
                *a += *v;
            }
            lo = lo.min(comp.min_value());
            hi = hi.max(comp.max_value());
            for c in 0..grid.len() {
                let idx = grid.multi_index(c);
                for axis in 0..grid.dim() {
                    if idx[axis] + 1 < n {
                        let mut nb = idx.clone();
                        nb[axis] += 1;
                        let diff = (comp.values()[grid.linear_index(&nb)] - comp.values()[c]).abs();
                        slope = slope.max(diff / grid.cell_width(axis));
                    }
                }
            }
        }
        let m = T::lit(components.len() as f64);
        let mean = GridFunction::new(grid.clone(), acc.into_iter().map(|v| v / m).collect())?;
        let lip = slope * T::lit(grid.dim() as f64).sqrt();
        Ok(LossStream {
            grid,
            kind: Kind::FiniteSum { components, mean },
            convention,
            shift: T::zero(),
            scale: T::one(),
            raw_range: (lo, hi),
            raw_lipschitz: lip,
        })
    }

    /// Reference trigonometric stream: five terms, term `k` of amplitude `1/k` and frequency
    /// `k` along axis `(k-1) mod d`, phases uniform on `[0, 2 pi)` from a seeded generator.
    pub fn default_terms(dim: usize, seed: u64) -> Vec<TrigTerm<T>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (1..=5)
            .map(|k| {
                let mut frequency = vec![0; dim];
                frequency[(k - 1) % dim] = k as i32;
                let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                TrigTerm { amplitude: T::lit(1.0 / k as f64), frequency, phase: T::lit(phase) }
            })
            .collect()
    }

    pub fn default_trig(grid: Arc<Grid<T>>, seed: u64, convention: Convention) -> Result<Self> {
        let terms = Self::default_terms(grid.dim(), seed);
        Self::trig_mixture(grid, T::zero(), terms, convention)
    }

    /// Reinterprets a loss stream as payoffs `(V - l) / (2V)` in `[0, 1]`, where `V` is the
    /// declared sup bound. Payoff streams are returned unchanged.
    pub fn to_payoff(self) -> Self {
        if self.convention == Convention::Payoff {
            return self;
        }
        let v = self.bound();
        if v == T::zero() {
            return LossStream { convention: Convention::Payoff, shift: T::lit(0.5), scale: T::zero(), ..self };
        }
        let two_v = T::lit(2.0) * v;
        LossStream {
            convention: Convention::Payoff,
            shift: (v - self.shift) / two_v,
            scale: -self.scale / two_v,
            ..self
        }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn convention(&self) -> Convention {
        self.convention
    }

    pub fn is_static(&self) -> bool {
        match &self.kind {
            Kind::Trig { drift, .. } => drift.map_or(true, |(rate, _)| rate == T::zero()),
            Kind::FiniteSum { .. } => true,
        }
    }

    pub fn is_finite_sum(&self) -> bool {
        matches!(self.kind, Kind::FiniteSum { .. })
    }

    /// Declared range `[lo, hi]` containing every value.
    pub fn range(&self) -> (T, T) {
        let (a, b) = (self.shift + self.scale * self.raw_range.0, self.shift + self.scale * self.raw_range.1);
        (a.min(b), a.max(b))
    }

    /// Declared sup bound `V`.
    pub fn bound(&self) -> T {
        let (lo, hi) = self.range();
        lo.abs().max(hi.abs())
    }

    /// Declared Lipschitz constant `L` (Euclidean norm).
    pub fn lipschitz(&self) -> T {
        self.scale.abs() * self.raw_lipschitz
    }

    fn shift_at(&self, t: usize) -> T {
        match &self.kind {
            Kind::Trig { drift: Some((rate, exponent)), .. } => *rate * T::lit(t as f64).powf(*exponent),
            _ => T::zero(),
        }
    }

    fn phase_at(term: &TrigTerm<T>, s: T) -> T {
        term.phase - T::two_pi() * T::lit(term.frequency[0] as f64) * s
    }

    /// The round-`t` function at cell centers.
    pub fn loss_function(&self, t: usize) -> GridFunction<T> {
        let mut out = vec![T::zero(); self.grid.len()];
        self.fill(t, &mut out);
        GridFunction::from_parts(self.grid.clone(), out)
    }

    fn fill(&self, t: usize, out: &mut [T]) {
        match &self.kind {
            Kind::Trig { offset, terms, waves, .. } => {
                out.iter_mut().for_each(|o| *o = *offset);
                let s = self.shift_at(t);
                for (term, wave) in terms.iter().zip(waves) {
                    wave.accumulate(term.amplitude, Self::phase_at(term, s), out);
                }
            }
            Kind::FiniteSum { mean, .. } => out.copy_from_slice(mean.values()),
        }
        if self.scale != T::one() || self.shift != T::zero() {
            out.iter_mut().for_each(|o| *o = self.shift + self.scale * *o);
        }
    }

    /// Round-`t` function in signed-loss form (payoffs negated).
    pub fn signed_loss(&self, t: usize) -> GridFunction<T> {
        let f = self.loss_function(t);
        match self.convention {
            Convention::Loss => f,
            Convention::Payoff => f.scale(-T::one()),
        }
    }

    /// Value at an arbitrary point: analytic for trigonometric streams, cell lookup for
    /// finite sums.
    pub fn value_at(&self, t: usize, x: &[T]) -> Result<T> {
        if !self.grid.domain().contains(x) {
            return Err(Error::OutOfDomain { point: x.iter().map(|v| v.to_f64_lossy()).collect() });
        }
        let raw = match &self.kind {
            Kind::Trig { offset, terms, .. } => {
                let s = self.shift_at(t);
                let mut acc = *offset;
                for term in terms {
                    let k: Vec<T> = term.frequency.iter().map(|&f| T::lit(f as f64)).collect();
                    let arg = T::two_pi() * dot_normalized(&self.grid, x, &k) + Self::phase_at(term, s);
                    acc += term.amplitude * arg.sin();
                }
                acc
            }
            Kind::FiniteSum { mean, .. } => mean.eval_at(x)?,
        };
        Ok(self.shift + self.scale * raw)
    }

    /// Component functions of a finite sum, in the stream's reported units.
    pub fn component(&self, i: usize) -> Option<GridFunction<T>> {
        match &self.kind {
            Kind::FiniteSum { components, .. } => components.get(i).map(|c| c.map(|v| self.shift + self.scale * v).expect("finite")),
            Kind::Trig { .. } => None,
        }
    }

    pub fn num_components(&self) -> usize {
        match &self.kind {
            Kind::FiniteSum { components, .. } => components.len(),
            Kind::Trig { .. } => 0,
        }
    }

    /// `V_T = sum_{t<T} sup |l_{t+1} - l_t|`, with `l_{T+1} = l_T`.
    pub fn variation(&self, horizon: usize) -> T {
        if self.is_static() || horizon <= 1 {
            return T::zero();
        }
        let mut prev = vec![T::zero(); self.grid.len()];
        let mut cur = vec![T::zero(); self.grid.len()];
        self.fill(1, &mut prev);
        let mut total = T::zero();
        for t in 2..=horizon {
            self.fill(t, &mut cur);
            let step = prev.iter().zip(&cur).fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
            total += step;
            std::mem::swap(&mut prev, &mut cur);
        }
        total
    }
}

/// Distribution of the zero-mean term `U_t`.
#[derive(Debug, Clone)]
pub enum NoiseModel<T> {
    /// `U = (sigma/J) sum_j c_j sin(2 pi j sum_i u_i + psi_j)` with `c_j ~ U[-1,1]` and
    /// `psi_j ~ U[0, 2 pi)`, so `E[U] = 0` and `sup |U| <= sigma`.
    Trig { sigma: T, harmonics: usize },
    /// The model is one uniformly drawn component of a finite-sum stream.
    ComponentSampling,
}

#[derive(Debug, Clone)]
enum NoiseState<T> {
    Trig { sigma: T, waves: Vec<Wave<T>> },
    Components { sigma: T },
}

/// Observation process attached to a stream.
#[derive(Debug, Clone)]
pub struct FeedbackChannel<T> {
    kind: ChannelKind,
    noise: Option<NoiseState<T>>,
    bias: Option<(T, T, Wave<T>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Exact,
    Unbiased,
    Biased,
    Bandit,
}

/// Per-round model statistics: bias bound `B_t`, noise bound `sigma_t`, magnitude `M_t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Descriptors<T> {
    pub bias: Option<T>,
    pub sigma: Option<T>,
    pub magnitude: Option<T>,
}

#[derive(Debug, Clone)]
pub enum Observation<T> {
    Model { model: GridFunction<T>, descriptors: Descriptors<T> },
    Payoff { value: T, descriptors: Descriptors<T> },
}

impl<T: Scalar> Observation<T> {
    pub fn model(&self) -> Option<&GridFunction<T>> {
        match self {
            Observation::Model { model, .. } => Some(model),
            Observation::Payoff { .. } => None,
        }
    }

    pub fn descriptors(&self) -> &Descriptors<T> {
        match self {
            Observation::Model { descriptors, .. } | Observation::Payoff { descriptors, .. } => descriptors,
        }
    }
}

impl<T: Scalar> FeedbackChannel<T> {
    pub fn exact() -> Self {
        FeedbackChannel { kind: ChannelKind::Exact, noise: None, bias: None }
    }

    pub fn bandit() -> Self {
        FeedbackChannel { kind: ChannelKind::Bandit, noise: None, bias: None }
    }

    pub fn unbiased(stream: &LossStream<T>, noise: NoiseModel<T>) -> Result<Self> {
        Ok(FeedbackChannel { kind: ChannelKind::Unbiased, noise: Some(Self::noise_state(stream, noise)?), bias: None })
    }

    /// Unbiased noise plus the deterministic bias `B0 t^{-b} cos(2 pi u_0)`.
    pub fn biased(stream: &LossStream<T>, noise: NoiseModel<T>, scale: T, decay: T) -> Result<Self> {
        if !(scale >= T::zero()) || !(decay >= T::zero()) || !scale.is_finite() || !decay.is_finite() {
            return Err(Error::Config(format!(
                "bias scale and decay must be finite and non-negative, got {scale} and {decay}"
            )));
        }
        let grid = stream.grid();
        let mut k = vec![T::zero(); grid.dim()];
        k[0] = T::one();
        let wave = Wave::new(grid, &k);
        Ok(FeedbackChannel {
            kind: ChannelKind::Biased,
            noise: Some(Self::noise_state(stream, noise)?),
            bias: Some((scale, decay, wave)),
        })
    }

    fn noise_state(stream: &LossStream<T>, noise: NoiseModel<T>) -> Result<NoiseState<T>> {
        match noise {
            NoiseModel::Trig { sigma, harmonics } => {
                if !(sigma >= T::zero()) || !sigma.is_finite() || harmonics == 0 {
                    return Err(Error::Config(format!(
                        "trig noise needs sigma >= 0 and at least one harmonic, got {sigma} and {harmonics}"
                    )));
                }
                let grid = stream.grid();
                let waves = (1..=harmonics)
                    .map(|j| Wave::new(grid, &vec![T::lit(j as f64); grid.dim()]))
                    .collect();
                Ok(NoiseState::Trig { sigma, waves })
            }
            NoiseModel::ComponentSampling => {
                if !stream.is_finite_sum() {
                    return Err(Error::Config("component sampling needs a finite_sum stream".into()));
                }
                let mean = stream.loss_function(1);
                let sigma = (0..stream.num_components())
                    .map(|i| stream.component(i).expect("index in range").sub(&mean).expect("same grid").sup_norm())
                    .fold(T::zero(), T::max);
                Ok(NoiseState::Components { sigma })
            }
        }
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    /// Bias bound `B_t`.
    pub fn bias_bound(&self, t: usize) -> T {
        match &self.bias {
            Some((scale, decay, _)) => *scale * T::lit(t as f64).powf(-*decay),
            None => T::zero(),
        }
    }

    /// Noise bound `sigma_t`.
    pub fn noise_bound(&self) -> T {
        match &self.noise {
            Some(NoiseState::Trig { sigma, .. }) | Some(NoiseState::Components { sigma }) => *sigma,
            None => T::zero(),
        }
    }

    /// Observes round `t` after the learner played `action` drawn from `strategy`.
    pub fn observe<R: Rng + ?Sized>(
        &self,
        stream: &LossStream<T>,
        t: usize,
        strategy: &Density<T>,
        action: &[T],
        rng: &mut R,
    ) -> Result<Observation<T>> {
        crate::grid::check_same_grid(stream.grid(), strategy.grid())?;
        if t == 0 {
            return Err(Error::Config("rounds are numbered from 1".into()));
        }
        if self.kind == ChannelKind::Bandit {
            let (lo, hi) = stream.range();
            if lo < T::zero() || hi > T::one() {
                return Err(Error::Config(format!(
                    "bandit feedback needs values in [0,1], stream range is [{lo}, {hi}]"
                )));
            }
            let value = stream.value_at(t, action)?;
            return Ok(Observation::Payoff {
                value,
                descriptors: Descriptors { bias: None, sigma: None, magnitude: Some(stream.bound()) },
            });
        }
        if !stream.grid().domain().contains(action) {
            return Err(Error::OutOfDomain { point: action.iter().map(|v| v.to_f64_lossy()).collect() });
        }
        let mut values = stream.loss_function(t).into_values();
        match &self.noise {
            None => {}
            Some(NoiseState::Trig { sigma, waves }) => {
                let c = *sigma / T::lit(waves.len() as f64);
                for wave in waves {
                    let coef: f64 = rng.gen_range(-1.0..=1.0);
                    let psi: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                    wave.accumulate(c * T::lit(coef), T::lit(psi), &mut values);
                }
            }
            Some(NoiseState::Components { .. }) => {
                let i = rng.gen_range(0..stream.num_components());
                values = stream.component(i).expect("index in range").into_values();
            }
        }
        let bias = self.bias_bound(t);
        if let Some((_, _, wave)) = &self.bias {
            for (v, c) in values.iter_mut().zip(&wave.cos) {
                *v += bias * *c;
            }
        }
        let sigma = self.noise_bound();
        let descriptors = Descriptors {
            bias: Some(bias),
            sigma: Some(sigma),
            magnitude: Some(stream.bound() + sigma + bias),
        };
        let model = GridFunction::new(stream.grid().clone(), values)?;
        Ok(Observation::Model { model, descriptors })
    }
}
