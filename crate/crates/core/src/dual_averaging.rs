//! Dual averaging with full-function models: `x_t = Q(eta_t y_t)`, `y_{t+1} = y_t - v_t`.
//!
//! Scores are kept in loss sign. Models from payoff streams are negated before they are
//! subtracted, which is the same as adding the payoff model.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{check_same_grid, Density, Grid, GridFunction};
use crate::loss::{FeedbackChannel, LossStream, Observation};
use crate::regret::{RegretTrace, RoundRecord};
use crate::regularizer::Regularizer;
use crate::scalar::Scalar;

/// `value_t = max(c t^{-e}, floor)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Schedule<T> {
    pub coefficient: T,
    pub exponent: T,
    pub floor: T,
}

impl<T: Scalar> Schedule<T> {
    pub fn new(coefficient: T, exponent: T) -> Result<Self> {
        Self::with_floor(coefficient, exponent, T::zero())
    }

    pub fn with_floor(coefficient: T, exponent: T, floor: T) -> Result<Self> {
        let ok = coefficient > T::zero()
            && coefficient.is_finite()
            && exponent >= T::zero()
            && exponent.is_finite()
            && floor >= T::zero()
            && floor.is_finite();
        if !ok {
            return Err(Error::Config(format!(
                "schedule needs c > 0, e >= 0, floor >= 0; got c={coefficient}, e={exponent}, floor={floor}"
            )));
        }
        Ok(Schedule { coefficient, exponent, floor })
    }

    pub fn value(&self, t: usize) -> T {
        self.raw(t).max(self.floor)
    }

    /// Whether the floor binds at round `t`.
    pub fn floor_active(&self, t: usize) -> bool {
        self.raw(t) < self.floor
    }

    fn raw(&self, t: usize) -> T {
        self.coefficient * T::lit(t.max(1) as f64).powf(-self.exponent)
    }
}

/// Round counter, score and learning-rate schedule of a dual-averaging learner.
#[derive(Debug, Clone)]
pub struct DAState<T> {
    t: usize,
    score: GridFunction<T>,
    reg: Regularizer<T>,
    schedule: Schedule<T>,
}

impl<T: Scalar> DAState<T> {
    /// Round 1 with `y_1 = 0`.
    pub fn new(grid: Arc<Grid<T>>, reg: Regularizer<T>, schedule: Schedule<T>) -> Self {
        DAState { t: 1, score: GridFunction::zeros(grid), reg, schedule }
    }

    pub fn round(&self) -> usize {
        self.t
    }

    pub fn score(&self) -> &GridFunction<T> {
        &self.score
    }

    pub fn regularizer(&self) -> &Regularizer<T> {
        &self.reg
    }

    pub fn eta(&self) -> T {
        self.schedule.value(self.t)
    }

    /// `x_t = Q(eta_t y_t)`.
    pub fn strategy(&self) -> Result<Density<T>> {
        self.reg.mirror(&self.score.scale(self.eta()))
    }

    /// `y_{t+1} = y_t - model` for a model in signed-loss form.
    pub fn step(&mut self, signed_model: &GridFunction<T>) -> Result<()> {
        self.score.add_scaled(-T::one(), signed_model)?;
        self.t += 1;
        Ok(())
    }
}

/// One energy measurement `E_t = F(mu, eta_t y_t) / eta_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord<T> {
    pub t: usize,
    pub energy: T,
    pub eta: T,
}

/// A failed inequality: `lhs <= rhs` did not hold at round `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation<T> {
    pub t: usize,
    pub lhs: T,
    pub rhs: T,
}

pub const RECURSION_SLACK: f64 = 1e-6;
pub const TELESCOPED_SLACK: f64 = 1e-4;

/// Energy bookkeeping against a fixed comparator.
#[derive(Debug, Clone)]
pub struct EnergyDiagnostics<T> {
    pub energies: Vec<EnergyRecord<T>>,
    /// Per-step recursion checks that failed.
    pub recursion_violations: Vec<Violation<T>>,
    /// Horizons where the telescoped regret bound failed.
    pub telescoped_violations: Vec<Violation<T>>,
    /// Largest `lhs - rhs` seen by each check (negative means slack).
    pub worst_recursion_margin: T,
    pub worst_telescoped_margin: T,
    pub steps_checked: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions<T> {
    /// Comparator for energy diagnostics; `None` disables them.
    pub comparator: Option<Density<T>>,
    /// Rounds at which the played strategy is stored in the trace.
    pub snapshots: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DaRun<T> {
    pub trace: RegretTrace<T>,
    pub diagnostics: Option<EnergyDiagnostics<T>>,
}

struct Energy<T> {
    mu: Density<T>,
    h_gap: T,
    kappa_sq_over_2k: T,
    diag: EnergyDiagnostics<T>,
    regret: T,
    noise_term: T,
    variance_term: T,
}

/// Runs `horizon` rounds of dual averaging: play `X_t ~ x_t`, observe, update.
pub fn run_da<T: Scalar, R: Rng + ?Sized>(
    stream: &LossStream<T>,
    channel: &FeedbackChannel<T>,
    reg: Regularizer<T>,
    schedule: Schedule<T>,
    horizon: usize,
    rng: &mut R,
    options: &RunOptions<T>,
) -> Result<DaRun<T>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let grid = stream.grid().clone();
    let sign = stream.convention().loss_sign::<T>();
    let mut state = DAState::new(grid.clone(), reg, schedule);
    let mut trace = RegretTrace::new(grid.clone());

    let mut energy = match &options.comparator {
        None => None,
        Some(mu) => {
            check_same_grid(&grid, mu.grid())?;
            let (Some(k), Some(kappa)) = (reg.modulus(), reg.kappa(grid.domain())) else {
                return Err(Error::Config(format!(
                    "energy diagnostics need a known strong convexity modulus, {reg} has none"
                )));
            };
            let h_gap = reg.hval(mu) - reg.min_value(grid.domain());
            let e1 = reg.energy(mu, state.score(), state.eta())?;
            Some(Energy {
                mu: mu.clone(),
                h_gap,
                kappa_sq_over_2k: kappa * kappa / (T::lit(2.0) * k),
                diag: EnergyDiagnostics {
                    energies: vec![EnergyRecord { t: 1, energy: e1, eta: state.eta() }],
                    recursion_violations: Vec::new(),
                    telescoped_violations: Vec::new(),
                    worst_recursion_margin: T::neg_infinity(),
                    worst_telescoped_margin: T::neg_infinity(),
                    steps_checked: 0,
                },
                regret: T::zero(),
                noise_term: T::zero(),
                variance_term: T::zero(),
            })
        }
    };

    let mut snapshot_iter = options.snapshots.iter().copied().peekable();
    for t in 1..=horizon {
        let x = state.strategy()?;
        let sampler = x.sampler();
        let (_, action) = sampler.draw(rng);
        let obs = channel.observe(stream, t, &x, &action, rng)?;
        let model = match &obs {
            Observation::Model { model, .. } => model.scale(sign),
            Observation::Payoff { .. } => {
                return Err(Error::Config("dual averaging needs a full-function channel".into()))
            }
        };
        let loss = stream.signed_loss(t);
        let expected = loss.pair(&x)?;
        let realized = sign * stream.value_at(t, &action)?;

        while snapshot_iter.peek().is_some_and(|&s| s <= t) {
            if snapshot_iter.next() == Some(t) {
                trace.push_snapshot(t, x.clone());
            }
        }

        let eta_t = state.eta();
        state.step(&model)?;

        if let Some(en) = energy.as_mut() {
            let eta_next = state.eta();
            let e_prev = en.diag.energies.last().expect("seeded with E_1").energy;
            let e_next = reg.energy(&en.mu, state.score(), eta_next)?;
            let sup = model.sup_norm();
            let quad = eta_t * en.kappa_sq_over_2k * sup * sup;
            let mu_minus_x = model.pair(&en.mu)? - model.pair(&x)?;
            let rate_gap = (T::one() / eta_next - T::one() / eta_t) * en.h_gap;
            let rhs = e_prev + mu_minus_x + rate_gap + quad + T::lit(RECURSION_SLACK);
            en.diag.worst_recursion_margin =
                en.diag.worst_recursion_margin.max(e_next - rhs + T::lit(RECURSION_SLACK));
            if e_next > rhs {
                en.diag.recursion_violations.push(Violation { t, lhs: e_next, rhs });
            }
            en.diag.energies.push(EnergyRecord { t: t + 1, energy: e_next, eta: eta_next });
            en.diag.steps_checked += 1;

            en.regret += expected - loss.pair(&en.mu)?;
            let err = model.sub(&loss)?;
            en.noise_term += err.pair(&en.mu)? - err.pair(&x)?;
            en.variance_term += quad;
            let bound = en.h_gap / eta_next + en.noise_term + en.variance_term + T::lit(TELESCOPED_SLACK);
            en.diag.worst_telescoped_margin =
                en.diag.worst_telescoped_margin.max(en.regret - bound + T::lit(TELESCOPED_SLACK));
            if en.regret > bound {
                en.diag.telescoped_violations.push(Violation { t, lhs: en.regret, rhs: bound });
            }
        }

        trace.push(RoundRecord { t, expected, realized, action });
    }
    Ok(DaRun { trace, diagnostics: energy.map(|e| e.diag) })
}
