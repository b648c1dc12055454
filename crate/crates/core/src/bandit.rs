//! Bandit dual averaging: a single realized payoff is spread over a ball patch around the
//! action, importance-weighted by the played density, and fed to the logit learner mixed
//! with uniform exploration.

use std::sync::Arc;

use rand::Rng;

use crate::dual_averaging::Schedule;
use crate::error::{Error, Result};
use crate::grid::{check_same_grid, Density, Grid, GridFunction};
use crate::loss::{FeedbackChannel, LossStream, Observation};
use crate::regret::{RegretTrace, RoundRecord};
use crate::regularizer::Regularizer;
use crate::scalar::Scalar;

/// Learning-rate, kernel-radius and exploration schedules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BdaConfig<T> {
    pub eta: Schedule<T>,
    /// Radius schedule; its floor is twice the cell diameter.
    pub delta: Schedule<T>,
    pub epsilon: Schedule<T>,
}

impl<T: Scalar> BdaConfig<T> {
    /// Builds a config with the radius floor set from the grid. Requires `eps_0 <= 1`.
    pub fn new(
        grid: &Grid<T>,
        eta: Schedule<T>,
        delta_coefficient: T,
        delta_exponent: T,
        epsilon: Schedule<T>,
    ) -> Result<Self> {
        if epsilon.coefficient > T::one() {
            return Err(Error::Config(format!(
                "exploration coefficient must be at most 1, got {}",
                epsilon.coefficient
            )));
        }
        let delta = Schedule::with_floor(delta_coefficient, delta_exponent, Self::delta_floor(grid))?;
        Ok(BdaConfig { eta, delta, epsilon })
    }

    pub fn delta_floor(grid: &Grid<T>) -> T {
        T::lit(2.0) * grid.cell_diameter()
    }

    /// Exponents `p = (d+2)/(d+3)`, `w = b = 1/(d+3)`; coefficients `1/V`, `diam/4`, `1/2`.
    pub fn defaults(grid: &Grid<T>, payoff_bound: T) -> Result<Self> {
        let d = T::lit(grid.dim() as f64);
        let three = d + T::lit(3.0);
        let v = if payoff_bound > T::zero() { payoff_bound } else { T::one() };
        Self::new(
            grid,
            Schedule::new(T::one() / v, (d + T::lit(2.0)) / three)?,
            grid.domain().diameter() / T::lit(4.0),
            T::one() / three,
            Schedule::new(T::lit(0.5), T::one() / three)?,
        )
    }
}

/// `x = (1 - eps) Q(eta y) + eps / lambda(X)` with the logit map `Q`.
pub fn mixed_strategy<T: Scalar>(y: &GridFunction<T>, eta: T, eps: T) -> Result<Density<T>> {
    if !(eps >= T::zero() && eps <= T::one()) {
        return Err(Error::Config(format!("exploration weight must lie in [0,1], got {eps}")));
    }
    Ok(Regularizer::Negentropy.mirror(&y.scale(eta))?.mix_uniform(eps))
}

/// Importance-weighted ball-kernel model: constant on the patch, zero elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel<T> {
    grid: Arc<Grid<T>>,
    cells: Vec<usize>,
    value: T,
    patch_volume: T,
    pub action: Vec<T>,
    pub radius: T,
    pub payoff: T,
    pub density_at_action: T,
}

impl<T: Scalar> KernelModel<T> {
    /// Support cells, sorted.
    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    /// Value on the support: `payoff / (patch volume * density at action)`.
    pub fn value(&self) -> T {
        self.value
    }

    pub fn patch_volume(&self) -> T {
        self.patch_volume
    }

    /// Integral of the underlying kernel `1_patch / patch volume`.
    pub fn kernel_mass(&self) -> T {
        T::lit(self.cells.len() as f64) * self.grid.cell_volume() / self.patch_volume
    }

    pub fn to_function(&self) -> GridFunction<T> {
        let mut values = vec![T::zero(); self.grid.len()];
        for &c in &self.cells {
            values[c] = self.value;
        }
        GridFunction::from_parts(self.grid.clone(), values)
    }
}

/// Builds the kernel model of one realized payoff in `[0,1]`.
pub fn kernel_estimate<T: Scalar>(
    action: &[T],
    payoff: T,
    strategy: &Density<T>,
    delta: T,
) -> Result<KernelModel<T>> {
    if !(payoff >= T::zero() && payoff <= T::one()) {
        return Err(Error::InvalidValue(format!("payoff must lie in [0,1], got {payoff}")));
    }
    let grid = strategy.grid().clone();
    let density = strategy.as_function().eval_at(action)?;
    if !(density > T::zero()) {
        return Err(Error::ZeroDensity { density: density.to_f64_lossy() });
    }
    let patch = grid.ball_patch(action, delta)?;
    let value = payoff / (patch.volume * density);
    Ok(KernelModel {
        grid,
        cells: patch.cells,
        value,
        patch_volume: patch.volume,
        action: action.to_vec(),
        radius: delta,
        payoff,
        density_at_action: density,
    })
}

#[derive(Debug, Clone)]
pub struct BdaRun<T> {
    pub trace: RegretTrace<T>,
    /// Expected signed loss of the unmixed logit strategy, per round.
    pub unmixed_expected: Vec<T>,
    /// `sup |x_t - Q(eta_t y_t)|`, per round.
    pub mixing_gap: Vec<T>,
    /// `min x_t`, per round.
    pub strategy_min: Vec<T>,
    /// Rounds in which the radius floor was binding.
    pub floor_rounds: usize,
}

/// Runs `horizon` rounds of bandit dual averaging on a stream with values in `[0,1]`.
pub fn run_bda<T: Scalar, R: Rng + ?Sized>(
    stream: &LossStream<T>,
    config: &BdaConfig<T>,
    horizon: usize,
    rng: &mut R,
    snapshots: &[usize],
) -> Result<BdaRun<T>> {
    if horizon == 0 {
        return Err(Error::Config("horizon must be at least 1".into()));
    }
    let grid = stream.grid().clone();
    let sign = stream.convention().loss_sign::<T>();
    let channel = FeedbackChannel::bandit();
    let mut score = GridFunction::zeros(grid.clone());
    let mut trace = RegretTrace::new(grid.clone());
    let mut run = BdaRun {
        trace: RegretTrace::new(grid.clone()),
        unmixed_expected: Vec::with_capacity(horizon),
        mixing_gap: Vec::with_capacity(horizon),
        strategy_min: Vec::with_capacity(horizon),
        floor_rounds: 0,
    };
    let mut snaps = snapshots.iter().copied().peekable();
    for t in 1..=horizon {
        let (eta, eps, delta) = (config.eta.value(t), config.epsilon.value(t), config.delta.value(t));
        if config.delta.floor_active(t) {
            run.floor_rounds += 1;
        }
        let logit = Regularizer::Negentropy.mirror(&score.scale(eta))?;
        let x = logit.mix_uniform(eps);
        let (_, action) = x.sampler().draw(rng);
        let value = match channel.observe(stream, t, &x, &action, rng)? {
            Observation::Payoff { value, .. } => value,
            Observation::Model { .. } => unreachable!("bandit channel returns scalars"),
        };
        let model = kernel_estimate(&action, value, &x, delta)?;
        let loss = stream.signed_loss(t);
        run.unmixed_expected.push(loss.pair(&logit)?);
        run.mixing_gap.push(x.sup_distance(&logit)?);
        run.strategy_min.push(x.min_value());
        while snaps.peek().is_some_and(|&s| s <= t) {
            if snaps.next() == Some(t) {
                trace.push_snapshot(t, x.clone());
            }
        }
        trace.push(RoundRecord { t, expected: loss.pair(&x)?, realized: sign * value, action });
        add_sparse(&mut score, &model, -sign)?;
    }
    run.trace = trace;
    Ok(run)
}

/// `y += c * model`, touching only the support.
fn add_sparse<T: Scalar>(y: &mut GridFunction<T>, model: &KernelModel<T>, c: T) -> Result<()> {
    check_same_grid(y.grid(), &model.grid)?;
    let v = c * model.value;
    let values = y.values_mut();
    for &cell in &model.cells {
        values[cell] += v;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::BoxDomain;
    use crate::loss::Convention;
    use crate::regret::static_regret;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(n: usize) -> Arc<Grid<f64>> {
        Grid::shared(BoxDomain::unit(1).unwrap(), n).unwrap()
    }

    #[test]
    fn defaults_follow_the_dimension() {
        let g = unit(1024);
        let c = BdaConfig::defaults(&g, 1.0).unwrap();
        assert_eq!(c.eta.exponent, 0.75);
        assert_eq!(c.delta.exponent, 0.25);
        assert_eq!(c.epsilon.exponent, 0.25);
        assert_eq!(c.delta.coefficient, 0.25);
        assert_eq!(c.epsilon.coefficient, 0.5);
        assert!((c.delta.floor - 2.0 / 1024.0).abs() < 1e-15);
        let g3 = Grid::shared(BoxDomain::<f64>::unit(3).unwrap(), 8).unwrap();
        assert!((BdaConfig::defaults(&g3, 1.0).unwrap().eta.exponent - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn exploration_extremes() {
        let g = unit(64);
        let y = GridFunction::from_fn(g.clone(), |x| 30.0 * x[0]).unwrap();
        let x = mixed_strategy(&y, 1.0, 1.0).unwrap();
        assert!(x.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        let z = mixed_strategy(&GridFunction::zeros(g), 1.0, 0.0).unwrap();
        assert!(z.values().iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(mixed_strategy(&y, 1.0, 1.5).is_err());
    }

    #[test]
    fn kernel_example_value() {
        let g = unit(1000);
        let u = Density::uniform(g.clone());
        let m = kernel_estimate(&[0.5], 1.0, &u, 0.1).unwrap();
        assert!((m.value() - 5.0).abs() < 0.05);
        assert!((m.kernel_mass() - 1.0).abs() < 1e-9);
        let f = m.to_function();
        assert!((f.integrate() - 1.0).abs() < 1e-9);
        let zero = kernel_estimate(&[0.5], 0.0, &u, 0.1).unwrap();
        assert!(zero.to_function().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kernel_guards() {
        let g = unit(100);
        let p = Density::uniform_on(g.clone(), &[0, 1, 2]).unwrap();
        assert!(matches!(kernel_estimate(&[0.9], 0.5, &p, 0.1), Err(Error::ZeroDensity { .. })));
        let u = Density::uniform(g);
        assert!(kernel_estimate(&[0.5], 1.5, &u, 0.1).is_err());
        assert!(matches!(kernel_estimate(&[0.5], 0.5, &u, 0.001), Err(Error::Resolution { .. })));
    }

    #[test]
    fn constant_payoff_has_zero_regret_and_keeps_uniform() {
        let g = unit(128);
        let s = LossStream::finite_sum(g.clone(), vec![GridFunction::constant(g.clone(), 0.6)], Convention::Payoff).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = BdaConfig::defaults(&g, 1.0).unwrap();
        let run = run_bda(&s, &cfg, 300, &mut rng, &[]).unwrap();
        for t in [1, 50, 300] {
            assert!(static_regret(&run.trace, &s, t).unwrap().abs() < 1e-9);
        }
        // A radius covering the domain makes every model constant.
        let wide = BdaConfig::new(&g, Schedule::new(1.0, 0.75).unwrap(), 2.0, 0.0, Schedule::new(0.5, 0.25).unwrap()).unwrap();
        let run = run_bda(&s, &wide, 50, &mut rng, &[50]).unwrap();
        let (_, x) = &run.trace.snapshots()[0];
        assert!(x.values().iter().all(|v| (v - 1.0).abs() < 1e-9));
    }

    #[test]
    fn strategy_floor_holds() {
        let g = unit(256);
        let s = LossStream::default_trig(g.clone(), 5, Convention::Loss).unwrap().to_payoff();
        let cfg = BdaConfig::defaults(&g, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let run = run_bda(&s, &cfg, 500, &mut rng, &[]).unwrap();
        for (t, m) in run.strategy_min.iter().enumerate() {
            assert!(*m >= cfg.epsilon.value(t + 1) - 1e-12);
        }
        assert_eq!(run.floor_rounds, 0);
    }

    #[test]
    fn bandit_run_rejects_out_of_range_streams() {
        let g = unit(64);
        let s = LossStream::default_trig(g.clone(), 5, Convention::Loss).unwrap();
        let cfg = BdaConfig::defaults(&g, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        assert!(matches!(run_bda(&s, &cfg, 5, &mut rng, &[]), Err(Error::Config(_))));
    }
}
