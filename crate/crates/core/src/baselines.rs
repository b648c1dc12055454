//! Reference players: EXP3 over a lattice of arms and uniform random play.

use std::sync::Arc;

use rand::distributions::{Distribution, Open01};
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, Density, Grid};
use crate::loss::{FeedbackChannel, LossStream, Observation};
use crate::regret::{RegretTrace, RoundRecord};
use crate::scalar::{compensated_sum, Scalar};

/// EXP3 with `gamma_t = min(1, sqrt(m ln m / t))` and `eta_t = gamma_t / m`.
#[derive(Debug, Clone)]
pub struct Exp3State<T> {
    arms: Vec<Vec<T>>,
    scores: Vec<T>,
    t: usize,
}

impl<T: Scalar> Exp3State<T> {
    pub fn new(arms: Vec<Vec<T>>) -> Result<Self> {
        if arms.is_empty() {
            return Err(Error::Config("EXP3 needs at least one arm".into()));
        }
        let m = arms.len();
        Ok(Exp3State { arms, scores: vec![T::zero(); m], t: 1 })
    }

    /// Arms at the cell centers of a grid with `per_axis` cells per axis.
    pub fn lattice(domain: &BoxDomain<T>, per_axis: usize) -> Result<Self> {
        let g = Grid::new(domain.clone(), per_axis)?;
        Self::new((0..g.len()).map(|c| g.center(c)).collect())
    }

    pub fn arms(&self) -> &[Vec<T>] {
        &self.arms
    }

    pub fn scores(&self) -> &[T] {
        &self.scores
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn gamma(&self) -> T {
        let m = T::lit(self.arms.len() as f64);
        (m * m.ln() / T::lit(self.t as f64)).sqrt().min(T::one())
    }

    /// `(1 - gamma) softmax(eta scores) + gamma / m`.
    pub fn probabilities(&self) -> Vec<T> {
        let m = T::lit(self.arms.len() as f64);
        let gamma = self.gamma();
        let eta = gamma / m;
        let top = self.scores.iter().copied().fold(T::neg_infinity(), T::max);
        let w: Vec<T> = self.scores.iter().map(|s| (eta * (*s - top)).exp()).collect();
        let z = compensated_sum(w.iter().copied());
        w.into_iter().map(|v| (T::one() - gamma) * v / z + gamma / m).collect()
    }

    /// Draws an arm index from [`Self::probabilities`].
    pub fn choose<R: Rng + ?Sized>(&self, probs: &[T], rng: &mut R) -> usize {
        let u = T::lit(Open01.sample(rng)) * compensated_sum(probs.iter().copied());
        let mut acc = T::zero();
        for (i, p) in probs.iter().enumerate() {
            acc += *p;
            if u < acc {
                return i;
            }
        }
        probs.iter().rposition(|p| *p > T::zero()).unwrap_or(0)
    }

    /// Adds the importance-weighted gain `gain / p(arm)` to the chosen arm.
    pub fn update(&mut self, arm: usize, gain: T, prob: T) {
        self.scores[arm] += gain / prob;
        self.t += 1;
    }

    /// One round: choose, receive `payoff(arm) in [0,1]`, update. Returns the chosen arm.
    pub fn step<R: Rng + ?Sized>(&mut self, payoff: impl FnOnce(&[T]) -> T, rng: &mut R) -> Result<usize> {
        let probs = self.probabilities();
        let arm = self.choose(&probs, rng);
        let r = payoff(&self.arms[arm]);
        if !(r >= T::zero() && r <= T::one()) {
            return Err(Error::InvalidValue(format!("payoff must lie in [0,1], got {r}")));
        }
        self.update(arm, r, probs[arm]);
        Ok(arm)
    }
}

/// EXP3 on a stream with values in `[0,1]`. Loss streams are played as gains `-loss`, so
/// scores accumulate `-loss / p`.
pub fn run_exp3<T: Scalar, R: Rng + ?Sized>(
    stream: &LossStream<T>,
    arms_per_axis: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<RegretTrace<T>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let grid = stream.grid().clone();
    let sign = stream.convention().loss_sign::<T>();
    let mut state = Exp3State::lattice(grid.domain(), arms_per_axis)?;
    let channel = FeedbackChannel::bandit();
    let uniform = Density::uniform(grid.clone());
    let mut trace = RegretTrace::new(grid);
    for t in 1..=horizon {
        let probs = state.probabilities();
        let arm = state.choose(&probs, rng);
        let action = state.arms[arm].clone();
        let value = match channel.observe(stream, t, &uniform, &action, rng)? {
            Observation::Payoff { value, .. } => value,
            Observation::Model { .. } => unreachable!("bandit channel returns scalars"),
        };
        let mut expected = T::zero();
        for (p, a) in probs.iter().zip(&state.arms) {
            expected += *p * stream.value_at(t, a)?;
        }
        state.update(arm, -sign * value, probs[arm]);
        trace.push(RoundRecord { t, expected: sign * expected, realized: sign * value, action });
    }
    Ok(trace)
}

/// Uniform random play.
pub fn run_uniform<T: Scalar, R: Rng + ?Sized>(
    stream: &LossStream<T>,
    horizon: usize,
    rng: &mut R,
) -> Result<RegretTrace<T>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let grid: Arc<Grid<T>> = stream.grid().clone();
    let sign = stream.convention().loss_sign::<T>();
    let uniform = Density::uniform(grid.clone());
    let sampler = uniform.sampler();
    let mut trace = RegretTrace::new(grid);
    for t in 1..=horizon {
        let (_, action) = sampler.draw(rng);
        let expected = stream.signed_loss(t).pair(&uniform)?;
        let realized = sign * stream.value_at(t, &action)?;
        trace.push(RoundRecord { t, expected, realized, action });
    }
    Ok(trace)
}
