use std::sync::Arc;

use nonconvex_da::{
    fit_slope, geometric_checkpoints, kernel_estimate, mixed_strategy, regret_curve, regret_vs_comparator, run_bda, run_da,
    run_exp3, static_regret, window_decomposition, BdaConfig, BoxDomain, Convention, Density, FeedbackChannel, Grid,
    GridFunction, LossStream, NoiseModel, Regularizer, RunOptions, Schedule,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn unit(n: usize) -> Arc<Grid<f64>> {
    Grid::shared(BoxDomain::unit(1).unwrap(), n).unwrap()
}

fn cells_within(g: &Grid<f64>, x: f64, r: f64) -> Vec<usize> {
    (0..g.len()).filter(|&c| (g.center(c)[0] - x).abs() <= r).collect()
}

#[test]
fn full_information_hedge_rate() {
    let g = unit(1024);
    let s = LossStream::default_trig(g, 2021, Convention::Loss).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let run = run_da(&s, &FeedbackChannel::exact(), Regularizer::Negentropy, Schedule::new(1.0, 0.5).unwrap(), 10_000, &mut rng, &RunOptions::default()).unwrap();
    let h = geometric_checkpoints(100, 1.3, 10_000).unwrap();
    let curve = regret_curve(&run.trace, &s, &h).unwrap();
    let fit = fit_slope(&h, &curve.iter().map(|p| p.expected).collect::<Vec<_>>()).unwrap();
    assert!((0.35..=0.65).contains(&fit.slope), "slope {}", fit.slope);
}

#[test]
fn neighborhood_comparators_bound_point_regret() {
    let g = unit(512);
    let s = LossStream::default_trig(g.clone(), 9, Convention::Loss).unwrap();
    let ch = FeedbackChannel::unbiased(&s, NoiseModel::Trig { sigma: 0.5, harmonics: 3 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let horizon = 400;
    let run = run_da(&s, &ch, Regularizer::Negentropy, Schedule::new(1.0, 0.5).unwrap(), horizon, &mut rng, &RunOptions::default()).unwrap();
    let l = s.lipschitz();
    let cum = run.trace.cumulative_expected(horizon);
    let mut sums = vec![0.0; g.len()];
    for t in 1..=horizon {
        for (a, v) in sums.iter_mut().zip(s.signed_loss(t).values()) {
            *a += v;
        }
    }
    let stat = static_regret(&run.trace, &s, horizon).unwrap();
    let dynamic = regret_curve(&run.trace, &s, &[horizon]).unwrap()[0].dynamic;
    assert!(dynamic >= stat - 1e-9);
    let mut pick = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..10 {
        let cell = pick.gen_range(0..g.len());
        let r = pick.gen_range(0.002..0.2);
        let x = g.center(cell)[0];
        let mu = Density::uniform_on(g.clone(), &cells_within(&g, x, r)).unwrap();
        let reg_mu = regret_vs_comparator(&run.trace, &s, &mu, horizon).unwrap();
        let reg_x = cum - sums[cell];
        assert!(reg_x <= reg_mu + l * 2.0 * r * horizon as f64 + 1e-6);
        assert!(stat >= reg_mu - l * 2.0 * r * horizon as f64 - 1e-6);
    }
}

#[test]
fn window_decomposition_holds_on_random_drifting_configs() {
    let mut pick = ChaCha8Rng::seed_from_u64(20);
    for i in 0..20 {
        let g = unit(128);
        let rho = pick.gen_range(0.001..0.2);
        let nu = pick.gen_range(0.2..0.9);
        let s = LossStream::drifting(g.clone(), 0.0, LossStream::default_terms(1, i), rho, nu, Convention::Loss).unwrap();
        let horizon = pick.gen_range(50..400);
        let mut rng = ChaCha8Rng::seed_from_u64(i);
        let run = run_da(&s, &FeedbackChannel::exact(), Regularizer::Negentropy, Schedule::new(1.0, 1.0 / 6.0).unwrap(), horizon, &mut rng, &RunOptions::default()).unwrap();
        let q: f64 = pick.gen_range(0.3..0.9);
        let window = ((horizon as f64).powf(q).ceil() as usize).clamp(1, horizon);
        let rep = window_decomposition(&run.trace, &s, horizon, window).unwrap();
        assert!(rep.holds, "config {i}: {} > {}", rep.dynamic, rep.bound);
        let dyn_direct = regret_curve(&run.trace, &s, &[horizon]).unwrap()[0].dynamic;
        assert!((rep.dynamic - dyn_direct).abs() < 1e-9);
    }
}

#[test]
fn regret_ignores_constant_offsets() {
    let g = unit(128);
    let terms = LossStream::default_terms(1, 3);
    let a = LossStream::trig_mixture(g.clone(), 0.0, terms.clone(), Convention::Loss).unwrap();
    let b = LossStream::trig_mixture(g.clone(), 7.5, terms, Convention::Loss).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let run = run_da(&a, &FeedbackChannel::exact(), Regularizer::Negentropy, Schedule::new(1.0, 0.5).unwrap(), 300, &mut rng, &RunOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let shifted = run_da(&b, &FeedbackChannel::exact(), Regularizer::Negentropy, Schedule::new(1.0, 0.5).unwrap(), 300, &mut rng, &RunOptions::default()).unwrap();
    let ra = regret_curve(&run.trace, &a, &[100, 300]).unwrap();
    let rb = regret_curve(&shifted.trace, &b, &[100, 300]).unwrap();
    for (x, y) in ra.iter().zip(&rb) {
        assert!((x.expected - y.expected).abs() < 1e-8);
        assert!((x.dynamic - y.dynamic).abs() < 1e-8);
    }
}

#[test]
fn runs_are_deterministic() {
    let g = unit(256);
    let s = LossStream::default_trig(g.clone(), 1, Convention::Loss).unwrap();
    let ch = FeedbackChannel::unbiased(&s, NoiseModel::Trig { sigma: 0.5, harmonics: 3 }).unwrap();
    let p = s.clone().to_payoff();
    let cfg = BdaConfig::defaults(&g, 1.0).unwrap();
    let go = || {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let da = run_da(&s, &ch, Regularizer::Negentropy, Schedule::new(1.0, 0.5).unwrap(), 200, &mut rng, &RunOptions::default()).unwrap();
        let bda = run_bda(&p, &cfg, 200, &mut rng, &[]).unwrap();
        let exp3 = run_exp3(&p, 32, 200, &mut rng).unwrap();
        (da.trace.records().to_vec(), bda.trace.records().to_vec(), exp3.records().to_vec())
    };
    assert_eq!(go(), go());
}

#[test]
fn synthetic_power_law_slope() {
    let h = geometric_checkpoints(100, 1.3, 100_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let v: Vec<f64> = h.iter().map(|&t| 3.0 * (t as f64).powf(0.75) * (1.0 + 0.01 * rng.gen_range(-1.0..1.0))).collect();
    let fit = fit_slope(&h, &v).unwrap();
    assert!((fit.slope - 0.75).abs() <= 0.02);
    assert!(fit.half_width < 0.02);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn kernel_mass_is_one(x in 0.0f64..1.0, delta in 0.002f64..1.2, payoff in 0.0f64..1.0) {
        let g = unit(512);
        let p = Density::uniform(g);
        let m = kernel_estimate(&[x], payoff, &p, delta).unwrap();
        prop_assert!((m.kernel_mass() - 1.0).abs() <= 1e-9);
        let f = m.to_function();
        prop_assert!((f.integrate() - payoff * m.kernel_mass()).abs() <= 1e-9);
    }

    #[test]
    fn exploration_floor_and_distance(amp in 0.1f64..30.0, k in 1u32..12, phase in 0.0f64..6.28, eps in 0.0f64..1.0, len in 0.5f64..3.0) {
        let g = Grid::shared(BoxDomain::new(vec![0.0], vec![len]).unwrap(), 256).unwrap();
        let y = GridFunction::from_fn(g.clone(), |x| amp * (k as f64 * x[0] + phase).sin()).unwrap();
        let x = mixed_strategy(&y, 1.0, eps).unwrap();
        let q = Regularizer::Negentropy.mirror(&y).unwrap();
        prop_assert!(x.min_value() >= eps / len - 1e-12);
        let dist = x.sup_distance(&q).unwrap();
        let qmax = q.as_function().max_value();
        let exact = eps * q.values().iter().map(|v| (v - 1.0 / len).abs()).fold(0.0, f64::max);
        prop_assert!((dist - exact).abs() <= 1e-12 * (1.0 + dist));
        prop_assert!(dist <= eps * (qmax - 1.0 / len).max(1.0 / len) + 1e-12);
        // The bound eps (1 + 1/lambda) needs q <= 1 + 2/lambda.
        if qmax <= 1.0 + 2.0 / len {
            prop_assert!(dist <= eps * (1.0 + 1.0 / len) + 1e-12);
        }
    }
}

#[test]
fn policy_swap_against_true_payoffs() {
    let g = unit(512);
    let s = LossStream::default_trig(g.clone(), 2021, Convention::Loss).unwrap().to_payoff();
    let cfg = BdaConfig::defaults(&g, 1.0).unwrap();
    for seed in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let run = run_bda(&s, &cfg, 2000, &mut rng, &[]).unwrap();
        // Same best point for both, so the difference of regrets is the difference of
        // cumulative expected payoffs.
        let mixed: f64 = run.trace.records().iter().map(|r| r.expected).sum();
        let unmixed: f64 = run.unmixed_expected.iter().sum();
        let gap: f64 = run.mixing_gap.iter().sum();
        assert!((mixed - unmixed).abs() <= g.domain().volume() * gap + 1e-6);
    }
}

/// Importance-weighted estimate at a probe under a non-uniform played density.
fn kernel_mean_at(probe: usize, delta: f64, reps: usize, seed: u64) -> (f64, f64, f64) {
    let g = unit(1024);
    let s = LossStream::default_trig(g.clone(), 2021, Convention::Loss).unwrap().to_payoff();
    let y = GridFunction::from_fn(g.clone(), |x| 3.0 * (7.0 * x[0]).sin()).unwrap();
    let x = mixed_strategy(&y, 1.0, 0.3).unwrap();
    let sampler = x.sampler();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..reps {
        let (_, a) = sampler.draw(&mut rng);
        let m = kernel_estimate(&a, s.value_at(1, &a).unwrap(), &x, delta).unwrap();
        let v = if m.cells().binary_search(&probe).is_ok() { m.value() } else { 0.0 };
        sum += v;
        sq += v * v;
    }
    let n = reps as f64;
    let mean = sum / n;
    let std = (sq / n - mean * mean).max(0.0).sqrt();
    (mean, std, s.loss_function(1).values()[probe])
}

#[test]
fn kernel_bias_is_within_lipschitz_envelope() {
    let g = unit(1024);
    let l = LossStream::default_trig(g, 2021, Convention::Loss).unwrap().to_payoff().lipschitz();
    for (i, probe) in [5usize, 300, 700, 1020].into_iter().enumerate() {
        let delta = 0.05;
        let reps = 100_000;
        let (mean, std, truth) = kernel_mean_at(probe, delta, reps, i as u64);
        assert!((mean - truth).abs() <= l * delta + 4.0 * std / (reps as f64).sqrt(), "probe {probe}: {mean} vs {truth}");
    }
}

#[test]
fn second_moment_scales_inversely_with_radius() {
    let g = unit(1024);
    let s = LossStream::default_trig(g.clone(), 2021, Convention::Loss).unwrap().to_payoff();
    let y = GridFunction::from_fn(g.clone(), |x| 2.0 * (5.0 * x[0]).cos()).unwrap();
    let x = mixed_strategy(&y, 1.0, 0.2).unwrap();
    let sampler = x.sampler();
    let moment = |delta: f64| {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 10_000;
        let mut acc = 0.0;
        for _ in 0..reps {
            let (_, a) = sampler.draw(&mut rng);
            let m = kernel_estimate(&a, s.value_at(1, &a).unwrap(), &x, delta).unwrap();
            let sq = m.to_function().map(|v| v * v).unwrap();
            acc += sq.pair(&x).unwrap();
        }
        acc / reps as f64
    };
    let ratio = moment(0.05) / moment(0.1);
    assert!((ratio - 2.0).abs() <= 0.6, "ratio {ratio}");
}

#[test]
fn energy_diagnostics_for_quadratic() {
    let g = unit(256);
    let s = LossStream::default_trig(g.clone(), 4, Convention::Loss).unwrap();
    let mu = Density::uniform_on(g.clone(), &cells_within(&g, 0.6, 0.05)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let opts = RunOptions { comparator: Some(mu), snapshots: vec![] };
    let ch = FeedbackChannel::unbiased(&s, NoiseModel::Trig { sigma: 0.5, harmonics: 3 }).unwrap();
    let run = run_da(&s, &ch, Regularizer::Quadratic, Schedule::new(0.2, 0.5).unwrap(), 500, &mut rng, &opts).unwrap();
    let d = run.diagnostics.unwrap();
    assert!(d.recursion_violations.is_empty(), "{:?}", d.recursion_violations.first());
    assert!(d.telescoped_violations.is_empty());
}
