//! Decomposable regularizers `h(p) = integral of theta(p)` over densities, their mirror maps
//! `Q(y) = argmax_p { <y,p> - h(p) }`, convex conjugates and the Fenchel coupling.
//!
//! The implicit mirror maps (quadratic, Burg, Tsallis) reduce to a single scalar
//! normalization constant. All of them are parametrized by an offset `s` measured from
//! `max y`, so that the cell values are functions of `s` and the gaps `max y - y`, and `s`
//! is located by bracketed bisection.

use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{BoxDomain, Density, GridFunction};
use crate::scalar::{compensated_sum, Scalar};

const MAX_BISECTION_STEPS: usize = 200;
const MAX_BRACKET_DOUBLINGS: usize = 200;

/// Norm on the primal (density) side used for strong convexity statements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AmbientNorm {
    TotalVariation,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularizer<T> {
    /// `theta(z) = z log z`; mirror map is the logit (Gibbs) map.
    Negentropy,
    /// `theta(z) = z^2 / 2`; mirror map is water-filling `(y - lambda)_+`.
    Quadratic,
    /// `theta(z) = -log z` (log-barrier).
    Burg,
    /// `theta(z) = (z - z^gamma) / (gamma (1 - gamma))` for `gamma` in `(0,1)`.
    Tsallis { gamma: T },
}

impl<T: Scalar> fmt::Display for Regularizer<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regularizer::Negentropy => write!(f, "negentropy"),
            Regularizer::Quadratic => write!(f, "quadratic"),
            Regularizer::Burg => write!(f, "burg"),
            Regularizer::Tsallis { gamma } => write!(f, "tsallis(gamma={gamma})"),
        }
    }
}

impl<T: Scalar> Regularizer<T> {
    pub fn tsallis(gamma: T) -> Result<Self> {
        if gamma > T::zero() && gamma < T::one() {
            Ok(Regularizer::Tsallis { gamma })
        } else {
            Err(Error::Config(format!("tsallis exponent must lie in (0,1), got {gamma}")))
        }
    }

    /// Pointwise kernel `theta`, with `theta(0) = 0` except for Burg where it is `+inf`.
    pub fn theta(&self, z: T) -> T {
        match *self {
            Regularizer::Negentropy => {
                if z == T::zero() {
                    T::zero()
                } else {
                    z * z.ln()
                }
            }
            Regularizer::Quadratic => z * z / T::lit(2.0),
            Regularizer::Burg => {
                if z <= T::zero() {
                    T::infinity()
                } else {
                    -z.ln()
                }
            }
            Regularizer::Tsallis { gamma } => {
                (z - z.powf(gamma)) / (gamma * (T::one() - gamma))
            }
        }
    }

    /// Strong convexity modulus `K` with respect to [`Self::ambient_norm`], when known.
    pub fn modulus(&self) -> Option<T> {
        match self {
            Regularizer::Negentropy | Regularizer::Quadratic => Some(T::one()),
            Regularizer::Burg | Regularizer::Tsallis { .. } => None,
        }
    }

    pub fn ambient_norm(&self) -> Option<AmbientNorm> {
        match self {
            Regularizer::Negentropy => Some(AmbientNorm::TotalVariation),
            Regularizer::Quadratic => Some(AmbientNorm::L2),
            Regularizer::Burg | Regularizer::Tsallis { .. } => None,
        }
    }

    /// Norm comparison constant `kappa` with `||.||_TV <= kappa ||.||`; the dual norm of a
    /// bounded function is then at most `kappa * sup_norm`.
    pub fn kappa(&self, domain: &BoxDomain<T>) -> Option<T> {
        self.ambient_norm().map(|n| match n {
            AmbientNorm::TotalVariation => T::one(),
            AmbientNorm::L2 => domain.volume().sqrt(),
        })
    }

    /// Distance between two densities in the ambient norm.
    pub fn ambient_distance(&self, p: &Density<T>, q: &Density<T>) -> Option<Result<T>> {
        self.ambient_norm().map(|n| match n {
            AmbientNorm::TotalVariation => p.tv_distance(q),
            AmbientNorm::L2 => p.l2_distance(q),
        })
    }

    /// `h(p)`; `+inf` when `p` leaves the effective domain (zero cells under Burg).
    pub fn hval(&self, p: &Density<T>) -> T {
        let w = p.grid().cell_volume();
        let mut terms = Vec::with_capacity(p.values().len());
        for &v in p.values() {
            let t = self.theta(v);
            if t.is_infinite() {
                return T::infinity();
            }
            terms.push(t);
        }
        compensated_sum(terms) * w
    }

    /// `z * theta(1/z)`: the value of `h` at the uniform density on a set of volume `z`.
    pub fn hvol(&self, z: T) -> Result<T> {
        if !(z > T::zero()) || !z.is_finite() {
            return Err(Error::InvalidValue(format!("hvol needs a positive volume, got {z}")));
        }
        Ok(z * self.theta(T::one() / z))
    }

    /// `min h`, attained at the uniform density on the whole domain.
    pub fn min_value(&self, domain: &BoxDomain<T>) -> T {
        self.hvol(domain.volume()).expect("domain volume is positive")
    }

    /// The mirror map `Q(y)`.
    pub fn mirror(&self, y: &GridFunction<T>) -> Result<Density<T>> {
        let grid = y.grid().clone();
        let w = grid.cell_volume();
        let vol = grid.domain().volume();
        let ymax = y.max_value();
        let gaps: Vec<T> = y.values().iter().map(|v| ymax - *v).collect();

        let weights = match *self {
            Regularizer::Negentropy => gaps.iter().map(|g| (-*g).exp()).collect(),
            Regularizer::Quadratic => {
                let mass = |s: T| compensated_sum(gaps.iter().map(|g| (s - *g).max(T::zero()))) * w;
                let hi = T::one() / vol + gaps.iter().copied().fold(T::zero(), T::max);
                let s = solve_offset(mass, T::zero(), hi, "quadratic mirror map")?;
                let s = polish_water_level(&gaps, s, w);
                gaps.iter().map(|g| (s - *g).max(T::zero())).collect()
            }
            Regularizer::Burg => {
                let mass = |s: T| compensated_sum(gaps.iter().map(|g| T::one() / (s + *g))) * w;
                let s = solve_offset(mass, w, vol, "burg mirror map")?;
                gaps.iter().map(|g| T::one() / (s + *g)).collect()
            }
            Regularizer::Tsallis { gamma } => {
                let one_m = T::one() - gamma;
                let expo = -T::one() / one_m;
                let cell = |s: T, g: T| (one_m * (s + g)).powf(expo);
                let mass = |s: T| compensated_sum(gaps.iter().map(|g| cell(s, *g))) * w;
                let lo = w.powf(one_m) / one_m;
                let hi = vol.powf(one_m) / one_m;
                let s = solve_offset(mass, lo, hi, "tsallis mirror map")?;
                gaps.iter().map(|g| cell(s, *g)).collect()
            }
        };
        Density::from_weights(grid, weights).map_err(|e| Error::Numerical {
            context: "mirror map",
            detail: e.to_string(),
        })
    }

    /// `h*(y) - max y`, computed without forming large exponentials.
    fn conjugate_shifted(&self, y: &GridFunction<T>) -> Result<(T, T)> {
        let ymax = y.max_value();
        let shifted = match self {
            Regularizer::Negentropy => {
                let w = y.grid().cell_volume();
                let s = compensated_sum(y.values().iter().map(|v| (*v - ymax).exp()));
                (s * w).ln()
            }
            _ => {
                let q = self.mirror(y)?;
                let below = y.map(|v| v - ymax)?;
                below.pair(&q)? - self.hval(&q)
            }
        };
        Ok((shifted, ymax))
    }

    /// Convex conjugate `h*(y) = max_p { <y,p> - h(p) }`.
    pub fn conjugate(&self, y: &GridFunction<T>) -> Result<T> {
        let (shifted, ymax) = self.conjugate_shifted(y)?;
        Ok(shifted + ymax)
    }

    /// Fenchel coupling `F(p,y) = h(p) + h*(y) - <y,p>`, non-negative with equality iff
    /// `p = Q(y)`.
    pub fn fenchel_coupling(&self, p: &Density<T>, y: &GridFunction<T>) -> Result<T> {
        let h = self.hval(p);
        if !h.is_finite() {
            return Err(Error::InvalidValue(format!(
                "{self} is infinite at the given density; Fenchel coupling undefined"
            )));
        }
        let (shifted, ymax) = self.conjugate_shifted(y)?;
        let below = y.map(|v| v - ymax)?;
        let mass = p.as_function().integrate();
        Ok(h + shifted - below.pair(p)? + ymax * (T::one() - mass))
    }

    /// Energy `eta^{-1} F(mu, eta y)` of a comparator against an aggregate score.
    pub fn energy(&self, mu: &Density<T>, y: &GridFunction<T>, eta: T) -> Result<T> {
        if !(eta > T::zero()) {
            return Err(Error::Config(format!("learning rate must be positive, got {eta}")));
        }
        Ok(self.fenchel_coupling(mu, &y.scale(eta))? / eta)
    }
}

/// Finds `s` with `mass(s) = 1` for a monotone `mass`, expanding the bracket by doubling
/// when needed, then bisecting to the resolution of `T`.
fn solve_offset<T: Scalar>(
    mass: impl Fn(T) -> T,
    mut lo: T,
    mut hi: T,
    context: &'static str,
) -> Result<T> {
    let f = |s: T| mass(s) - T::one();
    let (mut flo, mut fhi) = (f(lo), f(hi));
    let increasing = fhi >= flo;
    let sign = |v: T| if increasing { v } else { -v };
    let mut doublings = 0;
    // Need sign(f(lo)) <= 0 <= sign(f(hi)).
    while sign(flo) > T::zero() || sign(fhi) < T::zero() {
        if doublings == MAX_BRACKET_DOUBLINGS || !flo.is_finite() && !fhi.is_finite() {
            return Err(Error::Numerical {
                context,
                detail: format!(
                    "no sign change on [{lo:e}, {hi:e}] (f = {flo:e}, {fhi:e}) after {doublings} doublings"
                ),
            });
        }
        if sign(flo) > T::zero() {
            lo = lo / T::lit(2.0);
            flo = f(lo);
        }
        if sign(fhi) < T::zero() {
            hi = hi * T::lit(2.0);
            fhi = f(hi);
        }
        doublings += 1;
    }
    let tol = T::epsilon() * T::lit(16.0);
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = lo + (hi - lo) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm.abs() <= tol {
            return Ok(mid);
        }
        if sign(fm) < T::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (flo, fhi) = (f(lo), f(hi));
    if !flo.is_finite() || !fhi.is_finite() || flo.abs().min(fhi.abs()) > T::tol(1e-12) {
        return Err(Error::Numerical {
            context,
            detail: format!(
                "bisection stalled on [{lo:e}, {hi:e}] with residuals {flo:e}, {fhi:e}"
            ),
        });
    }
    Ok(if flo.abs() <= fhi.abs() { lo } else { hi })
}

/// Exact water level for the active set selected by bisection:
/// `s = (1/w + sum_active g) / |active|`.
fn polish_water_level<T: Scalar>(gaps: &[T], mut s: T, w: T) -> T {
    for _ in 0..8 {
        let active: Vec<T> = gaps.iter().copied().filter(|g| *g < s).collect();
        if active.is_empty() {
            return s;
        }
        let next = (T::one() / w + compensated_sum(active.iter().copied()))
            / T::lit(active.len() as f64);
        if next == s {
            break;
        }
        s = next;
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::sync::Arc;

    const E: f64 = std::f64::consts::E;

    fn unit(n: usize) -> Arc<Grid<f64>> {
        Grid::shared(BoxDomain::unit(1).unwrap(), n).unwrap()
    }

    fn all_families() -> Vec<Regularizer<f64>> {
        vec![
            Regularizer::Negentropy,
            Regularizer::Quadratic,
            Regularizer::Burg,
            Regularizer::tsallis(0.5).unwrap(),
        ]
    }

    #[test]
    fn hval_examples() {
        let g = unit(256);
        let u = Density::uniform(g);
        assert!(Regularizer::Negentropy.hval(&u).abs() < 1e-9);
        let d = BoxDomain::new(vec![0.0, 0.0], vec![2.0, 1.5]).unwrap();
        let gv = Grid::shared(d, 8).unwrap();
        let uv = Density::uniform(gv);
        let v: f64 = 3.0;
        assert!((Regularizer::Quadratic.hval(&uv) - 1.0 / (2.0 * v)).abs() < 1e-12);
        let neg = Regularizer::Negentropy;
        assert!((neg.hval(&uv) - neg.hvol(v).unwrap()).abs() < 1e-9);
        assert!((neg.hval(&uv) + v.ln()).abs() < 1e-9);
    }

    #[test]
    fn burg_is_infinite_off_support_but_negentropy_is_not() {
        let g = unit(8);
        let half = Density::uniform_on(g, &[0, 1, 2, 3]).unwrap();
        assert!(Regularizer::Burg.hval(&half).is_infinite());
        assert!((Regularizer::Negentropy.hval(&half) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hvol_examples() {
        let neg = Regularizer::<f64>::Negentropy;
        assert_eq!(neg.hvol(1.0).unwrap(), 0.0);
        assert!((neg.hvol(1.0 / E).unwrap() - 1.0).abs() < 1e-12);
        assert!((Regularizer::<f64>::Quadratic.hvol(0.5).unwrap() - 1.0).abs() < 1e-12);
        assert!(neg.hvol(0.0).is_err());
        assert!(neg.hvol(-1.0).is_err());
    }

    #[test]
    fn tsallis_exponent_is_validated() {
        assert!(Regularizer::tsallis(0.0f64).is_err());
        assert!(Regularizer::tsallis(1.0f64).is_err());
        assert!(Regularizer::tsallis(0.3f64).is_ok());
    }

    #[test]
    fn zero_score_maps_to_uniform_for_every_family() {
        let d = BoxDomain::new(vec![0.0], vec![2.0]).unwrap();
        let g = Grid::shared(d, 128).unwrap();
        let y = GridFunction::zeros(g);
        for reg in all_families() {
            let p = reg.mirror(&y).unwrap();
            for v in p.values() {
                assert!((v - 0.5).abs() < 1e-12, "{reg}: {v}");
            }
        }
    }

    #[test]
    fn logit_is_shift_invariant_and_matches_closed_form() {
        let g = unit(1024);
        let y = GridFunction::from_fn(g.clone(), |x| x[0]).unwrap();
        let p = Regularizer::Negentropy.mirror(&y).unwrap();
        let q = Regularizer::Negentropy.mirror(&y.map(|v| v + 37.5).unwrap()).unwrap();
        assert!(p.sup_distance(&q).unwrap() < 1e-12);
        for c in 0..g.len() {
            let x = g.center(c)[0];
            assert!((p.values()[c] - x.exp() / (E - 1.0)).abs() < 1e-4);
        }
    }

    #[test]
    fn quadratic_water_filling_kkt() {
        let g = unit(200);
        let y = GridFunction::from_fn(g.clone(), |x| 8.0 * (3.0 * x[0]).sin()).unwrap();
        let p = Regularizer::Quadratic.mirror(&y).unwrap();
        // p = (y - lambda)_+ : on the support y - p is constant, off support y <= lambda.
        let support: Vec<usize> = (0..g.len()).filter(|&c| p.values()[c] > 0.0).collect();
        let lambda = y.values()[support[0]] - p.values()[support[0]];
        for &c in &support {
            assert!((y.values()[c] - p.values()[c] - lambda).abs() < 1e-9);
        }
        for c in 0..g.len() {
            if p.values()[c] == 0.0 {
                assert!(y.values()[c] <= lambda + 1e-9);
            }
        }
        assert!((p.as_function().integrate() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn burg_and_tsallis_satisfy_their_stationarity_conditions() {
        let g = unit(300);
        let y = GridFunction::from_fn(g.clone(), |x| 2.0 * (7.0 * x[0]).cos() + x[0]).unwrap();
        let p = Regularizer::Burg.mirror(&y).unwrap();
        // y + 1/p is constant.
        let c0 = y.values()[0] + 1.0 / p.values()[0];
        for c in 0..g.len() {
            assert!((y.values()[c] + 1.0 / p.values()[c] - c0).abs() < 1e-8 * c0.abs().max(1.0));
        }
        let gamma = 0.4;
        let ts = Regularizer::tsallis(gamma).unwrap();
        let q = ts.mirror(&y).unwrap();
        // y - theta'(q) is constant, theta'(z) = (1 - gamma z^{gamma-1}) / (gamma (1-gamma)).
        let dtheta = |z: f64| (1.0 - gamma * z.powf(gamma - 1.0)) / (gamma * (1.0 - gamma));
        let c1 = y.values()[0] - dtheta(q.values()[0]);
        for c in 0..g.len() {
            assert!((y.values()[c] - dtheta(q.values()[c]) - c1).abs() < 1e-8 * c1.abs().max(1.0));
        }
    }

    #[test]
    fn conjugate_examples() {
        let g = unit(256);
        let z = GridFunction::zeros(g.clone());
        assert!(Regularizer::Negentropy.conjugate(&z).unwrap().abs() < 1e-12);
        let c = GridFunction::constant(g.clone(), 3.25);
        assert!((Regularizer::Negentropy.conjugate(&c).unwrap() - 3.25).abs() < 1e-12);
        assert!((Regularizer::Quadratic.conjugate(&z).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn fenchel_coupling_examples() {
        let g = unit(256);
        let z = GridFunction::zeros(g.clone());
        let u = Density::uniform(g.clone());
        let neg = Regularizer::Negentropy;
        assert!(neg.fenchel_coupling(&u, &z).unwrap().abs() < 1e-12);
        let half = Density::uniform_on(g.clone(), &(0..128).collect::<Vec<_>>()).unwrap();
        assert!((neg.fenchel_coupling(&half, &z).unwrap() - 2f64.ln()).abs() < 1e-6);
        let y = GridFunction::from_fn(g, |x| 3.0 * (5.0 * x[0]).sin()).unwrap();
        for reg in all_families() {
            let q = reg.mirror(&y).unwrap();
            assert!(reg.fenchel_coupling(&q, &y).unwrap().abs() < 1e-8, "{reg}");
        }
        assert!(Regularizer::Burg.fenchel_coupling(&half, &z).is_err());
    }

    #[test]
    fn energy_examples() {
        let g = unit(256);
        let neg = Regularizer::Negentropy;
        let z = GridFunction::zeros(g.clone());
        assert!(neg.energy(&Density::uniform(g.clone()), &z, 1.0).unwrap().abs() < 1e-12);
        let half = Density::uniform_on(g.clone(), &(0..128).collect::<Vec<_>>()).unwrap();
        assert!((neg.energy(&half, &z, 2.0).unwrap() - 2f64.ln() / 2.0).abs() < 1e-6);
        let y = GridFunction::from_fn(g, |x| (9.0 * x[0]).cos()).unwrap();
        let eta = 0.7;
        let mu = neg.mirror(&y.scale(eta)).unwrap();
        assert!(neg.energy(&mu, &y, eta).unwrap().abs() < 1e-8);
        assert!(neg.energy(&mu, &y, 0.0).is_err());
    }

    #[test]
    fn mirror_handles_adversarial_scores() {
        let g = unit(512);
        let spiky = GridFunction::from_fn(g.clone(), |x| if (x[0] - 0.3).abs() < 0.002 { 1e4 } else { 0.0 }).unwrap();
        let wide = GridFunction::from_fn(g.clone(), |x| 1e3 * (20.0 * x[0]).sin()).unwrap();
        let flat = GridFunction::from_fn(g.clone(), |x| 1e-13 * x[0]).unwrap();
        for y in [spiky, wide, flat] {
            for reg in all_families() {
                let p = reg.mirror(&y).unwrap();
                assert!(p.min_value() >= 0.0);
                assert!((p.as_function().integrate() - 1.0).abs() < 1e-9, "{reg}");
            }
        }
    }

    #[test]
    fn f32_mirror_maps_normalize() {
        let g = Grid::<f32>::shared(BoxDomain::unit(1).unwrap(), 128).unwrap();
        let y = GridFunction::from_fn(g, |x| 4.0 * (6.0 * x[0]).sin()).unwrap();
        for reg in [Regularizer::Negentropy, Regularizer::Quadratic, Regularizer::Burg] {
            let p = reg.mirror(&y).unwrap();
            assert!((p.as_function().integrate() - 1.0).abs() < 1e-4);
            assert!(reg.fenchel_coupling(&p, &y).unwrap().abs() < 1e-3);
        }
    }
}
