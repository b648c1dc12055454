use std::sync::Arc;

use nonconvex_da::{BoxDomain, Convention, Density, FeedbackChannel, Grid, GridFunction, LossStream, NoiseModel, TrigTerm};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unit(n: usize) -> Arc<Grid<f64>> {
    Grid::shared(BoxDomain::unit(1).unwrap(), n).unwrap()
}

fn terms(dim: usize) -> impl Strategy<Value = Vec<TrigTerm<f64>>> {
    let term = (-2.0f64..2.0, prop::collection::vec(-6i32..7, dim), 0.0..std::f64::consts::TAU)
        .prop_map(|(amplitude, frequency, phase)| TrigTerm { amplitude, frequency, phase });
    prop::collection::vec(term, 0..6)
}

fn check_bounds(s: &LossStream<f64>, rounds: &[usize], pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<(), TestCaseError> {
    let v = s.bound();
    let l = s.lipschitz();
    for &t in rounds {
        prop_assert!(s.loss_function(t).sup_norm() <= v * (1.0 + 1e-12) + 1e-12);
        for (x, y) in pairs {
            let d: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d > 0.0 {
                let diff = (s.value_at(t, x).unwrap() - s.value_at(t, y).unwrap()).abs();
                prop_assert!(diff <= l * d * (1.0 + 1e-6) + 1e-12, "ratio {} > L {}", diff / d, l);
            }
        }
    }
    Ok(())
}

fn box_points(dim: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<(Vec<f64>, Vec<f64>)>> {
    let p = prop::collection::vec(lo..hi, dim);
    prop::collection::vec((p.clone(), p), 16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn trig_streams_respect_declared_bounds(ts in terms(2), offset in -1.0f64..1.0, pairs in box_points(2, -1.0, 2.0),
                                            rounds in prop::collection::vec(1usize..10_000, 4)) {
        let g = Grid::shared(BoxDomain::new(vec![-1.0, -1.0], vec![2.0, 2.0]).unwrap(), 24).unwrap();
        let s = LossStream::trig_mixture(g.clone(), offset, ts.clone(), Convention::Loss).unwrap();
        check_bounds(&s, &rounds, &pairs)?;
        check_bounds(&s.to_payoff(), &rounds, &pairs)?;
        let d = LossStream::drifting(g, offset, ts, 0.137, 0.5, Convention::Loss).unwrap();
        check_bounds(&d, &rounds, &pairs)?;
    }

    #[test]
    fn finite_sums_respect_bounds_at_cell_centers(vals in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 64), 1..5),
                                                 idx in prop::collection::vec((0usize..64, 0usize..64), 32)) {
        let g = unit(64);
        let comps: Vec<_> = vals.into_iter().map(|v| GridFunction::new(g.clone(), v).unwrap()).collect();
        let s = LossStream::finite_sum(g.clone(), comps, Convention::Loss).unwrap();
        let pairs: Vec<_> = idx.iter().map(|(a, b)| (g.center(*a), g.center(*b))).collect();
        check_bounds(&s, &[1, 500], &pairs)?;
    }
}

#[test]
fn unbiased_noise_has_zero_mean() {
    let g = unit(256);
    let s = LossStream::default_trig(g.clone(), 2021, Convention::Loss).unwrap();
    let sigma = 0.5;
    let ch = FeedbackChannel::unbiased(&s, NoiseModel::Trig { sigma, harmonics: 3 }).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let u = Density::uniform(g.clone());
    let n = 100_000;
    let t = 13;
    let probes: Vec<usize> = (0..16).map(|i| i * 16 + 3).collect();
    let mut sums = vec![0.0; probes.len()];
    for _ in 0..n {
        let obs = ch.observe(&s, t, &u, &[0.5], &mut rng).unwrap();
        let m = obs.model().unwrap();
        for (acc, &c) in sums.iter_mut().zip(&probes) {
            *acc += m.values()[c];
        }
    }
    let truth = s.loss_function(t);
    let worst = probes
        .iter()
        .zip(&sums)
        .map(|(&c, acc)| (acc / n as f64 - truth.values()[c]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 3.0 * sigma / (n as f64).sqrt(), "worst deviation {worst}");
}

#[test]
fn bias_is_bounded_by_its_envelope() {
    let g = unit(256);
    let s = LossStream::default_trig(g.clone(), 5, Convention::Loss).unwrap();
    let (b0, decay, t) = (1.0, 0.5, 10);
    let noise = NoiseModel::Trig { sigma: 0.25, harmonics: 3 };
    let ch = FeedbackChannel::biased(&s, noise, b0, decay).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let u = Density::uniform(g.clone());
    let reps = 10_000;
    let mut mean = vec![0.0; g.len()];
    for _ in 0..reps {
        let obs = ch.observe(&s, t, &u, &[0.1], &mut rng).unwrap();
        for (m, v) in mean.iter_mut().zip(obs.model().unwrap().values()) {
            *m += v / reps as f64;
        }
    }
    let truth = s.loss_function(t);
    let bias = mean.iter().zip(truth.values()).map(|(m, l)| (m - l).abs()).fold(0.0, f64::max);
    let envelope = b0 * (t as f64).powf(-decay);
    assert!(bias <= envelope * 1.05, "bias {bias} vs {envelope}");
    assert!(bias >= envelope * 0.9);
    assert_eq!(ch.bias_bound(t), envelope);
}

#[test]
fn zero_bias_matches_the_unbiased_channel() {
    let g = unit(128);
    let s = LossStream::default_trig(g.clone(), 5, Convention::Loss).unwrap();
    let noise = NoiseModel::Trig { sigma: 0.3, harmonics: 2 };
    let a = FeedbackChannel::unbiased(&s, noise.clone()).unwrap();
    let b = FeedbackChannel::biased(&s, noise, 0.0, 0.7).unwrap();
    let (mut ra, mut rb) = (ChaCha8Rng::seed_from_u64(4), ChaCha8Rng::seed_from_u64(4));
    let u = Density::uniform(g);
    for t in 1..50 {
        let oa = a.observe(&s, t, &u, &[0.4], &mut ra).unwrap();
        let ob = b.observe(&s, t, &u, &[0.4], &mut rb).unwrap();
        assert_eq!(oa.model().unwrap().values(), ob.model().unwrap().values());
    }
}

#[test]
fn component_sampling_is_unbiased_for_the_mean_risk() {
    let g = unit(64);
    let comps: Vec<_> = (0..5)
        .map(|i| GridFunction::from_fn(g.clone(), |x| ((i + 1) as f64 * 3.0 * x[0]).cos() + i as f64 * 0.1).unwrap())
        .collect();
    let s = LossStream::finite_sum(g.clone(), comps, Convention::Loss).unwrap();
    let ch = FeedbackChannel::unbiased(&s, NoiseModel::ComponentSampling).unwrap();
    let sigma = ch.noise_bound();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let u = Density::uniform(g.clone());
    let n = 100_000;
    let mut mean = vec![0.0; g.len()];
    for _ in 0..n {
        let obs = ch.observe(&s, 1, &u, &[0.5], &mut rng).unwrap();
        for (m, v) in mean.iter_mut().zip(obs.model().unwrap().values()) {
            *m += v / n as f64;
        }
    }
    let truth = s.loss_function(1);
    let worst = mean.iter().zip(truth.values()).map(|(m, l)| (m - l).abs()).fold(0.0, f64::max);
    assert!(worst < 4.0 * sigma / (n as f64).sqrt(), "worst {worst}, sigma {sigma}");
}

#[test]
fn variation_is_linear_in_small_drift() {
    let g = unit(1024);
    let terms = LossStream::default_terms(1, 2021);
    let at = |rho: f64| LossStream::drifting(g.clone(), 0.0, terms.clone(), rho, 0.5, Convention::Loss).unwrap().variation(100);
    let (v1, v2) = (at(1e-9), at(2e-9));
    assert!(v1 > 0.0);
    assert!((v2 / v1 - 2.0).abs() <= 2e-6, "ratio {}", v2 / v1);
}
