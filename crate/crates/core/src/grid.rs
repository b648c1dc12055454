//! Box domains, uniform tensor grids and piecewise-constant functions on them.
//!
//! Every function the learner manipulates (losses, models, scores, noise, densities) is
//! represented by one value per grid cell. Integrals are midpoint Riemann sums, so
//! `integrate(f) = sum_cells f(cell) * w` with `w` the common cell volume.

use std::fmt;
use std::sync::Arc;

use rand::distributions::Open01;
use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Scalar};

/// Largest number of cells a grid may have.
const MAX_CELLS: usize = 1 << 26;

/// Axis-aligned box `[lower_1, upper_1] x ... x [lower_d, upper_d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxDomain<T> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Scalar> BoxDomain<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::Config("domain dimension must be at least 1".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::Config(format!(
                "lower bounds have {} axes, upper bounds have {}",
                lower.len(),
                upper.len()
            )));
        }
        for (axis, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || *hi <= *lo {
                return Err(Error::Config(format!(
                    "axis {axis} has bounds [{lo}, {hi}]; need finite lower < upper"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    /// The unit cube `[0,1]^d`.
    pub fn unit(dim: usize) -> Result<Self> {
        Self::new(vec![T::zero(); dim], vec![T::one(); dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    pub fn length(&self, axis: usize) -> T {
        self.upper[axis] - self.lower[axis]
    }

    /// Lebesgue volume of the box.
    pub fn volume(&self) -> T {
        (0..self.dim()).map(|a| self.length(a)).fold(T::one(), |acc, l| acc * l)
    }

    /// Euclidean diameter (length of the main diagonal).
    pub fn diameter(&self) -> T {
        (0..self.dim())
            .map(|a| self.length(a).powi(2))
            .fold(T::zero(), |acc, l| acc + l)
            .sqrt()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }
}

/// Uniform grid with `n` cells per axis over a [`BoxDomain`].
///
/// Cells are indexed linearly with axis 0 varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid<T> {
    domain: BoxDomain<T>,
    n: usize,
    len: usize,
    cell_width: Vec<T>,
    cell_volume: T,
}

/// Cells selected by a ball query together with their total measured volume.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<T> {
    pub cells: Vec<usize>,
    pub volume: T,
}

impl<T: Scalar> Grid<T> {
    pub fn new(domain: BoxDomain<T>, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Config("cells per axis must be positive".into()));
        }
        let len = u32::try_from(domain.dim())
            .ok()
            .and_then(|d| n.checked_pow(d))
            .filter(|&len| len <= MAX_CELLS)
            .ok_or_else(|| {
                Error::Config(format!(
                    "{n}^{} cells exceeds the limit of {MAX_CELLS}",
                    domain.dim()
                ))
            })?;
        let nn = T::lit(n as f64);
        let cell_width: Vec<T> = (0..domain.dim()).map(|a| domain.length(a) / nn).collect();
        let cell_volume = domain.volume() / T::lit(len as f64);
        Ok(Self {
            domain,
            n,
            len,
            cell_width,
            cell_volume,
        })
    }

    /// Convenience: build and wrap in an [`Arc`] for sharing between grid functions.
    pub fn shared(domain: BoxDomain<T>, n: usize) -> Result<Arc<Self>> {
        Self::new(domain, n).map(Arc::new)
    }

    pub fn domain(&self) -> &BoxDomain<T> {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    /// Cells per axis.
    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    /// Total number of cells, `n^d`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell_volume(&self) -> T {
        self.cell_volume
    }

    pub fn cell_width(&self, axis: usize) -> T {
        self.cell_width[axis]
    }

    pub fn cell_diameter(&self) -> T {
        self.cell_width
            .iter()
            .fold(T::zero(), |acc, w| acc + *w * *w)
            .sqrt()
    }

    pub fn multi_index(&self, mut cell: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for _ in 0..self.dim() {
            idx.push(cell % self.n);
            cell /= self.n;
        }
        idx
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().rev().fold(0, |acc, &i| acc * self.n + i)
    }

    /// Coordinate of the cell center along one axis, for the per-axis index `i`.
    pub fn center_coord(&self, axis: usize, i: usize) -> T {
        self.domain.lower[axis] + (T::lit(i as f64) + T::lit(0.5)) * self.cell_width[axis]
    }

    pub fn center(&self, cell: usize) -> Vec<T> {
        self.multi_index(cell)
            .into_iter()
            .enumerate()
            .map(|(axis, i)| self.center_coord(axis, i))
            .collect()
    }

    /// Index of the cell containing `x`; points on a shared face go to the lower-index cell.
    pub fn locate(&self, x: &[T]) -> Result<usize> {
        if !self.domain.contains(x) {
            return Err(Error::OutOfDomain {
                point: x.iter().map(|v| v.to_f64_lossy()).collect(),
            });
        }
        let nn = T::lit(self.n as f64);
        let mut idx = Vec::with_capacity(self.dim());
        for (axis, v) in x.iter().enumerate() {
            let pos = (*v - self.domain.lower[axis]) * nn / self.domain.length(axis);
            let j = pos.ceil().to_f64_lossy() as i64 - 1;
            idx.push(j.clamp(0, self.n as i64 - 1) as usize);
        }
        Ok(self.linear_index(&idx))
    }

    /// All cells whose centers lie within Euclidean distance `radius` of `x`
    /// (ties included), with measured volume `count * w`.
    pub fn ball_patch(&self, x: &[T], radius: T) -> Result<Patch<T>> {
        if !(radius > T::zero()) || !radius.is_finite() {
            return Err(Error::Config(format!("ball radius must be positive, got {radius}")));
        }
        if x.len() != self.dim() {
            return Err(Error::OutOfDomain {
                point: x.iter().map(|v| v.to_f64_lossy()).collect(),
            });
        }
        // Per-axis candidate index ranges, padded by one cell against rounding.
        let mut ranges = Vec::with_capacity(self.dim());
        for (axis, v) in x.iter().enumerate() {
            let rel = (*v - self.domain.lower[axis]) / self.cell_width[axis] - T::lit(0.5);
            let span = radius / self.cell_width[axis];
            let lo = ((rel - span).floor().to_f64_lossy() as i64 - 1).max(0);
            let hi = ((rel + span).ceil().to_f64_lossy() as i64 + 1).min(self.n as i64 - 1);
            if lo > hi {
                return Err(self.resolution_error(x, radius));
            }
            ranges.push((lo as usize, hi as usize));
        }
        let r2 = radius * radius;
        let mut cells = Vec::new();
        let mut idx: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let mut d2 = T::zero();
            for (axis, &i) in idx.iter().enumerate() {
                let diff = self.center_coord(axis, i) - x[axis];
                d2 += diff * diff;
            }
            if d2 <= r2 {
                cells.push(self.linear_index(&idx));
            }
            // Odometer increment over the candidate box.
            let mut axis = 0;
            loop {
                if axis == idx.len() {
                    cells.sort_unstable();
                    if cells.is_empty() {
                        return Err(self.resolution_error(x, radius));
                    }
                    let volume = T::lit(cells.len() as f64) * self.cell_volume;
                    return Ok(Patch { cells, volume });
                }
                if idx[axis] < ranges[axis].1 {
                    idx[axis] += 1;
                    break;
                }
                idx[axis] = ranges[axis].0;
                axis += 1;
            }
        }
    }

    fn resolution_error(&self, x: &[T], radius: T) -> Error {
        Error::Resolution {
            center: x.iter().map(|v| v.to_f64_lossy()).collect(),
            radius: radius.to_f64_lossy(),
            cell_diameter: self.cell_diameter().to_f64_lossy(),
        }
    }
}

/// One finite value per grid cell.
#[derive(Clone, PartialEq)]
pub struct GridFunction<T> {
    grid: Arc<Grid<T>>,
    values: Vec<T>,
}

impl<T: fmt::Debug> fmt::Debug for GridFunction<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GridFunction")
            .field("cells", &self.values.len())
            .field("head", &&self.values[..self.values.len().min(4)])
            .finish()
    }
}

pub(crate) fn check_same_grid<T: Scalar>(a: &Grid<T>, b: &Grid<T>) -> Result<()> {
    if std::ptr::eq(a, b) || a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch(format!(
            "{}^{} cells vs {}^{} cells",
            a.n,
            a.dim(),
            b.n,
            b.dim()
        )))
    }
}

impl<T: Scalar> GridFunction<T> {
    pub fn new(grid: Arc<Grid<T>>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidValue(format!("non-finite value at cell {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Construction without the finiteness scan, for values produced by finite arithmetic.
    pub(crate) fn from_parts(grid: Arc<Grid<T>>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: Arc<Grid<T>>, c: T) -> Self {
        let values = vec![c; grid.len()];
        Self { grid, values }
    }

    pub fn zeros(grid: Arc<Grid<T>>) -> Self {
        Self::constant(grid, T::zero())
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: Arc<Grid<T>>, f: impl Fn(&[T]) -> T) -> Result<Self> {
        let values = (0..grid.len()).map(|c| f(&grid.center(c))).collect();
        Self::new(grid, values)
    }

    /// Indicator of a set of cells.
    pub fn indicator(grid: Arc<Grid<T>>, cells: &[usize]) -> Self {
        let mut values = vec![T::zero(); grid.len()];
        for &c in cells {
            values[c] = T::one();
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    /// Midpoint Riemann integral.
    pub fn integrate(&self) -> T {
        compensated_sum(self.values.iter().copied()) * self.grid.cell_volume
    }

    /// Integral of the pointwise product, i.e. `E_p[f]` when `p` is a density.
    pub fn pair(&self, p: &Density<T>) -> Result<T> {
        self.inner(p.as_function())
    }

    /// `integrate(self * other)` for two arbitrary grid functions.
    pub fn inner(&self, other: &GridFunction<T>) -> Result<T> {
        check_same_grid(&self.grid, &other.grid)?;
        let s = compensated_sum(self.values.iter().zip(&other.values).map(|(a, b)| *a * *b));
        Ok(s * self.grid.cell_volume)
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// `(sum f^2 w)^{1/2}`.
    pub fn l2_norm(&self) -> T {
        (compensated_sum(self.values.iter().map(|v| *v * *v)) * self.grid.cell_volume).sqrt()
    }

    /// Value of the cell containing `x` (shared faces resolve to the lower-index cell).
    pub fn eval_at(&self, x: &[T]) -> Result<T> {
        Ok(self.values[self.grid.locate(x)?])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Result<Self> {
        Self::new(self.grid.clone(), self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f(*a, *b))
            .collect();
        Self::new(self.grid.clone(), values)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, c: T) -> Self {
        let values = self.values.iter().map(|v| *v * c).collect();
        Self::from_parts(self.grid.clone(), values)
    }

    /// `self += c * other` in place.
    pub fn add_scaled(&mut self, c: T, other: &Self) -> Result<()> {
        check_same_grid(&self.grid, &other.grid)?;
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * *b;
        }
        Ok(())
    }
}

/// A non-negative grid function integrating to one: a simple (piecewise-constant) strategy.
#[derive(Clone, PartialEq)]
pub struct Density<T>(GridFunction<T>);

impl<T: fmt::Debug> fmt::Debug for Density<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Density").field(&self.0).finish()
    }
}

impl<T: Scalar> Density<T> {
    /// Validates non-negativity and `|integral - 1| <= 1e-9`.
    pub fn new(f: GridFunction<T>) -> Result<Self> {
        if let Some(i) = f.values.iter().position(|v| *v < T::zero()) {
            return Err(Error::InvalidValue(format!(
                "density is negative ({}) at cell {i}",
                f.values[i]
            )));
        }
        let mass = f.integrate();
        if (mass - T::one()).abs() > T::tol(1e-9) {
            return Err(Error::InvalidValue(format!("density integrates to {mass}, not 1")));
        }
        Ok(Self(f))
    }

    /// Normalizes non-negative finite weights into a density.
    pub fn from_weights(grid: Arc<Grid<T>>, mut weights: Vec<T>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} weights for a grid of {} cells",
                weights.len(),
                grid.len()
            )));
        }
        if weights.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::InvalidValue("weights must be finite and non-negative".into()));
        }
        let mass = compensated_sum(weights.iter().copied()) * grid.cell_volume;
        if !(mass > T::zero()) || !mass.is_finite() {
            return Err(Error::InvalidValue(format!("weights have total mass {mass}")));
        }
        for v in &mut weights {
            *v /= mass;
        }
        Ok(Self(GridFunction::from_parts(grid, weights)))
    }

    pub fn uniform(grid: Arc<Grid<T>>) -> Self {
        let c = T::one() / grid.domain.volume();
        Self(GridFunction::constant(grid, c))
    }

    /// Uniform density on a non-empty set of cells.
    pub fn uniform_on(grid: Arc<Grid<T>>, cells: &[usize]) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::InvalidValue("uniform density on an empty set".into()));
        }
        if let Some(&c) = cells.iter().find(|&&c| c >= grid.len()) {
            return Err(Error::InvalidValue(format!("cell {c} out of range")));
        }
        Self::from_weights(grid.clone(), GridFunction::indicator(grid, cells).values)
    }

    pub fn as_function(&self) -> &GridFunction<T> {
        &self.0
    }

    pub fn into_function(self) -> GridFunction<T> {
        self.0
    }

    pub fn grid(&self) -> &Arc<Grid<T>> {
        &self.0.grid
    }

    pub fn values(&self) -> &[T] {
        &self.0.values
    }

    pub fn min_value(&self) -> T {
        self.0.min_value()
    }

    /// `integrate(|p - q|)`.
    pub fn l1_distance(&self, other: &Self) -> Result<T> {
        check_same_grid(self.grid(), other.grid())?;
        let s = compensated_sum(
            self.values()
                .iter()
                .zip(other.values())
                .map(|(a, b)| (*a - *b).abs()),
        );
        Ok(s * self.grid().cell_volume)
    }

    /// Total-variation norm of `p - q`; for densities this is the L1 distance.
    pub fn tv_distance(&self, other: &Self) -> Result<T> {
        self.l1_distance(other)
    }

    /// L2 norm of `p - q`.
    pub fn l2_distance(&self, other: &Self) -> Result<T> {
        Ok(self.0.sub(&other.0)?.l2_norm())
    }

    /// Sup-norm of `p - q`.
    pub fn sup_distance(&self, other: &Self) -> Result<T> {
        Ok(self.0.sub(&other.0)?.sup_norm())
    }

    /// `(1 - eps) * self + eps * uniform`.
    pub fn mix_uniform(&self, eps: T) -> Self {
        let u = eps / self.grid().domain.volume();
        let values = self.values().iter().map(|v| (T::one() - eps) * *v + u).collect();
        Self(GridFunction::from_parts(self.grid().clone(), values))
    }

    pub fn sampler(&self) -> Sampler<T> {
        Sampler::new(self)
    }

    /// One draw: a cell with probability `p(cell) * w`, then uniformly within that cell.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        self.sampler().draw(rng).1
    }
}

/// Inverse-CDF sampler over the cells of a density, reusable across draws.
#[derive(Debug, Clone)]
pub struct Sampler<T> {
    grid: Arc<Grid<T>>,
    cumulative: Vec<T>,
}

impl<T: Scalar> Sampler<T> {
    pub fn new(p: &Density<T>) -> Self {
        let mut acc = T::zero();
        let cumulative = p
            .values()
            .iter()
            .map(|v| {
                acc += *v;
                acc
            })
            .collect();
        Self {
            grid: p.grid().clone(),
            cumulative,
        }
    }

    /// Draws a cell index.
    pub fn draw_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().expect("non-empty grid");
        let u: f64 = rng.sample(Open01);
        let target = T::lit(u) * total;
        let idx = self.cumulative.partition_point(|c| *c <= target);
        // Skip zero-mass cells that rounding could land on.
        let mut idx = idx.min(self.cumulative.len() - 1);
        while idx > 0 && self.cumulative[idx] == self.cumulative[idx - 1] {
            idx -= 1;
        }
        idx
    }

    /// Draws `(cell, point)`; the point is uniform in the open interior of the cell.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<T>) {
        let cell = self.draw_cell(rng);
        let idx = self.grid.multi_index(cell);
        let point = idx
            .iter()
            .enumerate()
            .map(|(axis, &i)| {
                let u: f64 = rng.sample(Open01);
                let lo = self.grid.domain.lower[axis] + T::lit(i as f64) * self.grid.cell_width[axis];
                lo + T::lit(u) * self.grid.cell_width[axis]
            })
            .collect();
        (cell, point)
    }
}
