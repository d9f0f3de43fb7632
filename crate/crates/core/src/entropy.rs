//! Grid-based relative entropy against a Gaussian reference, displacement
//! interpolation, convexity-deficit verification, and the projection and
//! large-`p` limit experiments.
//!
//! Entropy experiments live on regular grids in `R^d` (`d <= 3`): relative
//! entropy of a finitely supported measure against a genuinely infinite-
//! dimensional reference is infinite, so convexity along path-space
//! geodesics is exercised through its finite-dimensional reductions (the
//! grid deficits here) together with the projection / contraction
//! experiments on path ensembles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{sobolev_norm, sobolev_norm_refinement, QuadratureSpec, SobolevParams};
use crate::paths::{sample_brownian, DyadicPath};
use crate::scalar::Scalar;
use crate::transport::{
    build_cost_matrix, check_cyclical_monotonicity, monotone_coupling_1d, solve_exact, CostSpec,
    DiscreteMeasure, ExactSolution, GroundPoint, MonotonicityReport, TransportPlan,
};

/// How the standard normal CDF is evaluated, recorded in metadata.
pub const GAUSSIAN_CDF: &str = "Phi(x) = erfc(-x/sqrt(2))/2 with double-precision erfc (libm)";

/// Standard normal CDF, evaluated in double precision.
fn std_normal_cdf<T: Scalar>(x: T) -> T {
    T::cast(0.5 * libm::erfc(-x.widen() / std::f64::consts::SQRT_2))
}

// ---------------------------------------------------------------------------
// grids and histograms
// ---------------------------------------------------------------------------

/// A regular grid of `cells_per_axis^dim` half-open cells covering
/// `[-half_range, half_range]^dim` (the last cell per axis is closed).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGridSpec<T>")]
pub struct GridSpec<T: Scalar> {
    dim: usize,
    half_range: T,
    cells_per_axis: usize,
}

#[derive(Deserialize)]
struct RawGridSpec<T> {
    dim: usize,
    half_range: T,
    cells_per_axis: usize,
}

impl<T: Scalar> TryFrom<RawGridSpec<T>> for GridSpec<T> {
    type Error = Error;
    fn try_from(raw: RawGridSpec<T>) -> Result<Self> {
        GridSpec::new(raw.dim, raw.half_range, raw.cells_per_axis)
    }
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(dim: usize, half_range: T, cells_per_axis: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dim must be 1, 2 or 3, got {dim}")));
        }
        if !(half_range > T::zero()) || !half_range.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "half_range must be positive and finite, got {half_range}"
            )));
        }
        if cells_per_axis < 2 {
            return Err(Error::InvalidGrid(format!(
                "cells_per_axis must be at least 2, got {cells_per_axis}"
            )));
        }
        if cells_per_axis.checked_pow(dim as u32).is_none()
            || cells_per_axis.pow(dim as u32) > 100_000_000
        {
            return Err(Error::InvalidGrid("grid has too many cells".into()));
        }
        Ok(Self {
            dim,
            half_range,
            cells_per_axis,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_range(&self) -> T {
        self.half_range
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn num_cells(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    pub fn cell_width(&self) -> T {
        T::cast(2.0) * self.half_range / T::cast(self.cells_per_axis as f64)
    }

    pub fn cell_volume(&self) -> T {
        self.cell_width().powi(self.dim as i32)
    }

    /// Lower edge of axis cell `i`.
    fn edge(&self, i: usize) -> T {
        -self.half_range + T::cast(i as f64) * self.cell_width()
    }

    /// Center of the flat-indexed cell (axis 0 varies slowest).
    pub fn cell_center(&self, flat: usize) -> Vec<T> {
        let m = self.cells_per_axis;
        let half = self.cell_width() / T::cast(2.0);
        let mut idx = flat;
        let mut out = vec![T::zero(); self.dim];
        for axis in (0..self.dim).rev() {
            out[axis] = self.edge(idx % m) + half;
            idx /= m;
        }
        out
    }

    /// Flat index of the cell containing `point`. Cells are half-open
    /// `[a, b)` with the last cell per axis closed; points outside the box
    /// are an error, never clipped.
    pub fn cell_index(&self, point: &[T]) -> Result<usize> {
        if point.len() != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "point of dimension {} on a grid of dimension {}",
                point.len(),
                self.dim
            )));
        }
        let m = self.cells_per_axis;
        let mut flat = 0usize;
        for &x in point {
            if !(x >= -self.half_range && x <= self.half_range) {
                return Err(Error::PointOutsideGrid {
                    point: point.iter().map(|v| v.widen()).collect(),
                    half_range: self.half_range.widen(),
                    dim: self.dim,
                });
            }
            let u = ((x + self.half_range) / self.cell_width()).widen().floor() as usize;
            flat = flat * m + u.min(m - 1);
        }
        Ok(flat)
    }
}

/// A probability histogram over a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHistogram<T>")]
pub struct Histogram<T: Scalar> {
    grid: GridSpec<T>,
    masses: Vec<T>,
}

#[derive(Deserialize)]
struct RawHistogram<T: Scalar> {
    grid: GridSpec<T>,
    masses: Vec<T>,
}

impl<T: Scalar> TryFrom<RawHistogram<T>> for Histogram<T> {
    type Error = Error;
    fn try_from(raw: RawHistogram<T>) -> Result<Self> {
        Histogram::new(raw.grid, raw.masses)
    }
}

impl<T: Scalar> Histogram<T> {
    /// Validates nonnegative masses summing to 1 within `1e-12`.
    pub fn new(grid: GridSpec<T>, masses: Vec<T>) -> Result<Self> {
        if masses.len() != grid.num_cells() {
            return Err(Error::InvalidHistogram(format!(
                "grid has {} cells, got {} masses",
                grid.num_cells(),
                masses.len()
            )));
        }
        if masses.iter().any(|m| !m.is_finite() || *m < T::zero()) {
            return Err(Error::InvalidHistogram(
                "masses must be finite and nonnegative".into(),
            ));
        }
        let total: T = masses.iter().copied().sum();
        if (total - T::one()).abs() > T::cast(1e-12).max(T::epsilon() * T::cast(64.0)) {
            return Err(Error::InvalidHistogram(format!(
                "masses sum to {total}, not 1"
            )));
        }
        Ok(Self { grid, masses })
    }

    /// Rescales arbitrary nonnegative masses to total 1.
    pub fn normalized(grid: GridSpec<T>, masses: Vec<T>) -> Result<Self> {
        let total: T = masses.iter().copied().sum();
        if !(total > T::zero()) {
            return Err(Error::InvalidHistogram("total mass must be positive".into()));
        }
        let scaled = masses.into_iter().map(|m| m / total).collect();
        Self::new(grid, scaled)
    }

    /// Discretization of an axis-aligned unit-variance Gaussian centered at
    /// `mean`: per-axis CDF differences, multiplied across axes and
    /// renormalized over the grid.
    pub fn gaussian(grid: GridSpec<T>, mean: &[T]) -> Result<Self> {
        if mean.len() != grid.dim() {
            return Err(Error::DimensionMismatch(format!(
                "mean of dimension {} on a grid of dimension {}",
                mean.len(),
                grid.dim()
            )));
        }
        let m = grid.cells_per_axis();
        let axes: Vec<Vec<T>> = mean
            .iter()
            .map(|&mu| {
                (0..m)
                    .map(|i| {
                        std_normal_cdf(grid.edge(i + 1) - mu) - std_normal_cdf(grid.edge(i) - mu)
                    })
                    .collect()
            })
            .collect();
        Self::normalized(grid, product_masses(&axes))
    }

    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    /// Mass carried by a set of flat cell indices.
    pub fn mass_of(&self, cells: impl Iterator<Item = usize>) -> T {
        cells.map(|i| self.masses[i]).sum()
    }

    /// The measure on cell centers carrying the histogram masses (cells with
    /// zero mass dropped).
    pub fn to_measure(&self) -> Result<DiscreteMeasure<T>> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (i, &m) in self.masses.iter().enumerate() {
            if m > T::zero() {
                points.push(self.grid.cell_center(i));
                weights.push(m);
            }
        }
        DiscreteMeasure::from_vectors(points, weights)
    }
}

fn product_masses<T: Scalar>(axes: &[Vec<T>]) -> Vec<T> {
    let mut out = vec![T::one()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for &base in &out {
            for &w in axis {
                next.push(base * w);
            }
        }
        out = next;
    }
    out
}

/// The standard Gaussian discretized on a grid, with the mass truncated by
/// the box recorded (never silently dropped).
#[derive(Clone, Debug, Serialize)]
pub struct GaussianReference<T: Scalar> {
    grid: GridSpec<T>,
    masses: Vec<T>,
    truncation_mass: T,
}

/// Builds the Gaussian reference: per-axis masses as CDF differences of the
/// standard normal, mirrored about the origin so symmetric cells carry
/// bit-identical masses, multiplied across axes, then renormalized.
pub fn gaussian_reference<T: Scalar>(grid: GridSpec<T>) -> GaussianReference<T> {
    let m = grid.cells_per_axis();
    let mut axis = vec![T::zero(); m];
    for i in 0..(m + 1) / 2 {
        let w = std_normal_cdf(grid.edge(i + 1)) - std_normal_cdf(grid.edge(i));
        axis[i] = w;
        axis[m - 1 - i] = w;
    }
    // both tails of one axis: 2 Phi(-R) = erfc(R / sqrt(2)), evaluated
    // directly so deep tails keep full precision; expand 1 - (1 - tail)^d
    // binomially to avoid cancellation near 1.
    let tail = T::cast(libm::erfc(
        grid.half_range().widen() / std::f64::consts::SQRT_2,
    ));
    let truncation_mass = match grid.dim() {
        1 => tail,
        2 => T::cast(2.0) * tail - tail * tail,
        _ => T::cast(3.0) * tail - T::cast(3.0) * tail * tail + tail * tail * tail,
    };
    let mut masses = product_masses(&vec![axis; grid.dim()]);
    let total: T = masses.iter().copied().sum();
    for w in masses.iter_mut() {
        *w /= total;
    }
    GaussianReference {
        grid,
        masses,
        truncation_mass,
    }
}

impl<T: Scalar> GaussianReference<T> {
    pub fn grid(&self) -> &GridSpec<T> {
        &self.grid
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn truncation_mass(&self) -> T {
        self.truncation_mass
    }

    pub fn histogram(&self) -> Histogram<T> {
        Histogram {
            grid: self.grid,
            masses: self.masses.clone(),
        }
    }
}

// ---------------------------------------------------------------------------
// relative entropy
// ---------------------------------------------------------------------------

/// `sum_i p_i ln(p_i / q_i)` with `0 ln(0/q) = 0`; `+inf` when `p` charges a
/// cell where `q` vanishes. Nonnegative whenever `q` is a probability
/// histogram (Gibbs).
pub fn relative_entropy<T: Scalar>(p: &Histogram<T>, q: &Histogram<T>) -> Result<T> {
    if p.grid() != q.grid() {
        return Err(Error::GridMismatch(
            "relative entropy needs both histograms on one grid".into(),
        ));
    }
    let mut sum = T::zero();
    for (&pi, &qi) in p.masses().iter().zip(q.masses()) {
        if pi == T::zero() {
            continue;
        }
        if qi == T::zero() {
            return Ok(T::infinity());
        }
        sum += pi * (pi / qi).ln();
    }
    Ok(sum)
}

/// Relative entropy against the Gaussian reference on the same grid.
pub fn relative_entropy_to_reference<T: Scalar>(
    p: &Histogram<T>,
    gref: &GaussianReference<T>,
) -> Result<T> {
    relative_entropy(p, &gref.histogram())
}

/// The pieces of the Gaussian-reference entropy decomposition
/// `Ent_gamma = Ent_lebesgue + (1/2) E|x|^2 + (d/2) ln 2pi`, evaluated on
/// the grid with cell volumes standing in for the Lebesgue density and cell
/// centers for `x`. The residual shrinks like the squared cell width as the
/// grid refines.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecompositionCheck<T> {
    pub ent_gaussian: T,
    pub ent_lebesgue: T,
    pub quadratic_moment: T,
    pub log_normalizer: T,
    pub residual: T,
}

pub fn entropy_decomposition_check<T: Scalar>(
    p: &Histogram<T>,
    gref: &GaussianReference<T>,
) -> Result<DecompositionCheck<T>> {
    if p.grid() != gref.grid() {
        return Err(Error::GridMismatch(
            "decomposition needs the reference on the histogram's grid".into(),
        ));
    }
    let ent_gaussian = relative_entropy_to_reference(p, gref)?;
    let vol = p.grid().cell_volume();
    let mut ent_lebesgue = T::zero();
    let mut quad = T::zero();
    for (i, &pi) in p.masses().iter().enumerate() {
        if pi == T::zero() {
            continue;
        }
        ent_lebesgue += pi * (pi / vol).ln();
        let center = p.grid().cell_center(i);
        let sq: T = center.iter().map(|&x| x * x).sum();
        quad += pi * sq / T::cast(2.0);
    }
    let log_normalizer =
        T::cast(p.grid().dim() as f64 / 2.0) * T::cast(2.0 * std::f64::consts::PI).ln();
    let residual = ent_gaussian - (ent_lebesgue + quad + log_normalizer);
    Ok(DecompositionCheck {
        ent_gaussian,
        ent_lebesgue,
        quadratic_moment: quad,
        log_normalizer,
        residual,
    })
}

// ---------------------------------------------------------------------------
// displacement interpolation
// ---------------------------------------------------------------------------

/// Pushes the plan forward along `(1-t) x + t y` and bins the masses to the
/// grid. Mass is conserved term by term; a point falling outside the box is
/// an error (the grid is too small), never clipped.
pub fn displacement_interpolate<T: Scalar>(
    plan: &TransportPlan<T>,
    t: T,
    grid: GridSpec<T>,
) -> Result<Histogram<T>> {
    if !(t >= T::zero() && t <= T::one()) {
        return Err(Error::OutOfRange(format!(
            "interpolation time must lie in [0, 1], got {t}"
        )));
    }
    let src = plan.source();
    let dst = plan.target();
    let mut masses = vec![T::zero(); grid.num_cells()];
    let one_minus = T::one() - t;
    for i in 0..src.len() {
        let x = match src.point(i) {
            GroundPoint::Vector(v) => v,
            GroundPoint::Path(_) => {
                return Err(Error::GroundSpaceMismatch {
                    kind: "displacement interpolation on a grid".into(),
                    found: "path",
                })
            }
        };
        for j in 0..dst.len() {
            let mass = plan.mass(i, j);
            if mass <= T::zero() {
                continue;
            }
            let y = match dst.point(j) {
                GroundPoint::Vector(v) => v,
                GroundPoint::Path(_) => {
                    return Err(Error::GroundSpaceMismatch {
                        kind: "displacement interpolation on a grid".into(),
                        found: "path",
                    })
                }
            };
            let point: Vec<T> = x
                .iter()
                .zip(y)
                .map(|(&a, &b)| one_minus * a + t * b)
                .collect();
            let cell = grid.cell_index(&point)?;
            masses[cell] += mass;
        }
    }
    Histogram::new(grid, masses)
}

// ---------------------------------------------------------------------------
// convexity deficits
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize)]
pub struct DeficitPoint<T> {
    pub t: T,
    pub entropy: T,
    /// `(1-t) Ent(rho_0) + t Ent(rho_1) - K t(1-t)/2 W^2`.
    pub chord: T,
    /// `chord - entropy`; the convexity claim holds when this stays above
    /// `-tolerance`.
    pub deficit: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct KConvexityReport<T> {
    pub per_t: Vec<DeficitPoint<T>>,
    pub w2_squared: T,
    pub ent0: T,
    pub ent1: T,
    pub k: T,
    pub cell_width: T,
    pub min_deficit: T,
    /// Set when any entropy evaluated to `+inf`; deficits then carry
    /// infinities instead of aborting the experiment.
    pub any_infinite: bool,
    /// Gaussian mass outside the grid box, carried through from the
    /// reference.
    pub reference_truncation: T,
    pub cost_label: String,
}

/// Solves transport between the histograms on their cell-center supports and
/// reports the entropy deficit along the displacement interpolation at each
/// requested time.
pub fn kconvexity_deficit<T: Scalar>(
    rho0: &Histogram<T>,
    rho1: &Histogram<T>,
    cost: &CostSpec<T>,
    k: T,
    t_list: &[T],
) -> Result<KConvexityReport<T>> {
    if rho0.grid() != rho1.grid() {
        return Err(Error::GridMismatch(
            "deficit needs both histograms on one grid".into(),
        ));
    }
    if !(k >= T::zero()) {
        return Err(Error::OutOfRange(format!("K must be nonnegative, got {k}")));
    }
    if matches!(cost, CostSpec::SobolevP { .. }) {
        return Err(Error::InvalidCost(
            "convexity deficits need a metric-squared cost kind".into(),
        ));
    }
    let grid = *rho0.grid();
    let gref = gaussian_reference(grid);
    let mu0 = rho0.to_measure()?;
    let mu1 = rho1.to_measure()?;
    let costs = build_cost_matrix(&mu0, &mu1, cost)?;
    let sol = solve_exact(&mu0, &mu1, &costs)?;
    let w2 = sol.value;
    let ent0 = relative_entropy_to_reference(rho0, &gref)?;
    let ent1 = relative_entropy_to_reference(rho1, &gref)?;
    let mut per_t = Vec::with_capacity(t_list.len());
    let mut min_deficit = T::infinity();
    let mut any_infinite = !(ent0.is_finite() && ent1.is_finite());
    let half = T::cast(0.5);
    for &t in t_list {
        let rho_t = displacement_interpolate(&sol.plan, t, grid)?;
        let ent_t = relative_entropy_to_reference(&rho_t, &gref)?;
        if !ent_t.is_finite() {
            any_infinite = true;
        }
        let chord = (T::one() - t) * ent0 + t * ent1 - k * t * (T::one() - t) * half * w2;
        let deficit = chord - ent_t;
        min_deficit = min_deficit.min(deficit);
        per_t.push(DeficitPoint {
            t,
            entropy: ent_t,
            chord,
            deficit,
        });
    }
    Ok(KConvexityReport {
        per_t,
        w2_squared: w2,
        ent0,
        ent1,
        k,
        cell_width: grid.cell_width(),
        min_deficit,
        any_infinite,
        reference_truncation: gref.truncation_mass(),
        cost_label: cost.label(),
    })
}

// ---------------------------------------------------------------------------
// p -> infinity study
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct PLimitRow<T> {
    pub p: T,
    pub w2_squared: T,
    /// `l1` distance of this plan to the previous one in the sweep.
    pub plan_delta_prev: Option<T>,
    /// Whether some off-support dual slack vanished: the optimum is then not
    /// unique and the convergence claim is suppressed.
    pub tie_degenerate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct PLimitReport<T> {
    pub rows: Vec<PLimitRow<T>>,
    pub w2_squared_inf: T,
    /// `p -> W^2_{2,p}` nonincreasing along the sweep.
    pub monotone: bool,
    /// Every `W^2_{2,p}` at least `W^2_{2,inf}`.
    pub dominates_inf: bool,
    /// Cyclical monotonicity of the final plan under the sup-norm-squared
    /// cost, at the finite-`p` certificate tolerance: an `l^p`-optimal plan
    /// obeys every sup-cost cycle inequality up to
    /// `(d^{2/p} - 1) * len * max c_inf` because `c_inf <= c_p <= d^{1/p}
    /// c_inf`, and the gap vanishes as `p` grows. The tolerance used is
    /// recorded inside the report.
    pub final_plan_inf_monotone: MonotonicityReport<T>,
    /// Final plan `l1` delta when no ties were flagged and the sweep
    /// settled; `None` when ties suppress the convergence claim.
    pub converged: Option<T>,
}

/// For each `p` in the ascending list (all at least 2), solves with the
/// `l^p`-squared cost and reports the Wasserstein values, plan convergence in
/// `l1`, and sup-norm-cost optimality diagnostics of the final plan.
pub fn p_limit_experiment<T: Scalar>(
    mu0: &DiscreteMeasure<T>,
    mu1: &DiscreteMeasure<T>,
    p_list: &[T],
) -> Result<PLimitReport<T>> {
    if p_list.is_empty() {
        return Err(Error::InvalidArgument("empty p list".into()));
    }
    if p_list.iter().any(|&p| !(p >= T::cast(2.0)) || !p.is_finite()) {
        return Err(Error::OutOfRange(
            "p values must be finite and at least 2".into(),
        ));
    }
    if p_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("p list must be ascending".into()));
    }
    let tie_tol = T::cast(1e-9);
    let mut rows: Vec<PLimitRow<T>> = Vec::with_capacity(p_list.len());
    let mut prev_plan: Option<TransportPlan<T>> = None;
    let mut any_tie = false;
    let mut final_sol: Option<ExactSolution<T>> = None;
    for &p in p_list {
        let spec = CostSpec::LpSquared { p };
        let costs = build_cost_matrix(mu0, mu1, &spec)?;
        let sol = solve_exact(mu0, mu1, &costs)?;
        let tie = has_degenerate_tie(&sol, &costs, tie_tol);
        any_tie = any_tie || tie;
        let delta = match &prev_plan {
            Some(prev) => Some(prev.l1_distance(&sol.plan)?),
            None => None,
        };
        rows.push(PLimitRow {
            p,
            w2_squared: sol.value,
            plan_delta_prev: delta,
            tie_degenerate: tie,
        });
        prev_plan = Some(sol.plan.clone());
        final_sol = Some(sol);
    }

    let inf_costs = build_cost_matrix(mu0, mu1, &CostSpec::LinfSquared)?;
    let inf_sol = solve_exact(mu0, mu1, &inf_costs)?;
    let tol = T::cast(1e-9);
    let monotone = rows.windows(2).all(|w| w[1].w2_squared <= w[0].w2_squared + tol);
    let dominates_inf = rows.iter().all(|r| r.w2_squared >= inf_sol.value - tol);
    let final_sol = final_sol.expect("nonempty sweep");
    let cycle_len = 4usize;
    let dim = match mu0.point(0) {
        GroundPoint::Vector(v) => v.len(),
        GroundPoint::Path(_) => unreachable!("lp costs rejected path points above"),
    };
    let p_last = *p_list.last().unwrap();
    let gap = (T::cast(dim as f64).powf(T::cast(2.0) / p_last) - T::one())
        * T::cast(cycle_len as f64)
        * inf_costs.max_abs();
    let final_plan_inf_monotone =
        check_cyclical_monotonicity(&final_sol.plan, &inf_costs, cycle_len, gap + tol)?;
    let converged = match (any_tie, rows.last().and_then(|r| r.plan_delta_prev)) {
        (false, Some(delta)) if delta <= tol => Some(delta),
        _ => None,
    };
    Ok(PLimitReport {
        rows,
        w2_squared_inf: inf_sol.value,
        monotone,
        dominates_inf,
        final_plan_inf_monotone,
        converged,
    })
}

/// An off-support cell with vanishing dual slack witnesses an alternate
/// optimal vertex.
fn has_degenerate_tie<T: Scalar>(
    sol: &ExactSolution<T>,
    costs: &crate::transport::Matrix<T>,
    tol: T,
) -> bool {
    let support: std::collections::BTreeSet<(usize, usize)> =
        sol.plan.support().into_iter().collect();
    for i in 0..costs.rows() {
        for j in 0..costs.cols() {
            if support.contains(&(i, j)) {
                continue;
            }
            let slack = costs.at(i, j) - (sol.potentials.psi[j] - sol.potentials.phi[i]);
            if slack <= tol {
                return true;
            }
        }
    }
    false
}

// ---------------------------------------------------------------------------
// projection experiment on path ensembles
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionRow<T> {
    pub level: u32,
    /// `W_{2,inf}` between the level-projected ensembles.
    pub w2: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionReport<T> {
    pub rows: Vec<ProjectionRow<T>>,
    pub top_level: u32,
    pub w2_top: T,
    /// Every projected distance at most the top-level distance.
    pub contraction_ok: bool,
    /// Distances nondecreasing along increasing level.
    pub nondecreasing_ok: bool,
    /// `w2_top - w2(last level)`.
    pub final_gap: T,
}

/// Projects both path ensembles to each level and solves transport with the
/// sup-norm-squared cost. Projection contracts the sup norm, so the
/// distances grow with the level and are capped by the top-level value.
pub fn projection_experiment<T: Scalar>(
    ens0: &DiscreteMeasure<T>,
    ens1: &DiscreteMeasure<T>,
    levels: &[u32],
) -> Result<ProjectionReport<T>> {
    let top = common_path_level(ens0)?;
    if common_path_level(ens1)? != top {
        return Err(Error::InvalidArgument(
            "both ensembles must sit at one common top level".into(),
        ));
    }
    if levels.is_empty() || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "levels must be nonempty and strictly ascending".into(),
        ));
    }
    if *levels.last().unwrap() > top {
        return Err(Error::OutOfRange(format!(
            "levels reach {} above the ensembles' top level {top}",
            levels.last().unwrap()
        )));
    }

    let spec = CostSpec::LinfSquared;
    let solve_at = |level: u32| -> Result<T> {
        let p0 = ens0.project_paths(level)?;
        let p1 = ens1.project_paths(level)?;
        let costs = build_cost_matrix(&p0, &p1, &spec)?;
        Ok(solve_exact(&p0, &p1, &costs)?.value.sqrt())
    };

    let w2_top = solve_at(top)?;
    let mut rows = Vec::with_capacity(levels.len());
    for &level in levels {
        rows.push(ProjectionRow {
            level,
            w2: solve_at(level)?,
        });
    }
    let tol = T::cast(1e-9);
    let contraction_ok = rows.iter().all(|r| r.w2 <= w2_top + tol);
    let nondecreasing_ok = rows.windows(2).all(|w| w[1].w2 >= w[0].w2 - tol);
    let final_gap = w2_top - rows.last().unwrap().w2;
    Ok(ProjectionReport {
        rows,
        top_level: top,
        w2_top,
        contraction_ok,
        nondecreasing_ok,
        final_gap,
    })
}

fn common_path_level<T: Scalar>(ens: &DiscreteMeasure<T>) -> Result<u32> {
    let mut level = None;
    for pt in ens.points() {
        match pt {
            GroundPoint::Path(p) => match level {
                None => level = Some(p.level()),
                Some(l) if l == p.level() => {}
                Some(l) => {
                    return Err(Error::InvalidArgument(format!(
                        "ensemble mixes path levels {l} and {}",
                        p.level()
                    )))
                }
            },
            GroundPoint::Vector(_) => {
                return Err(Error::GroundSpaceMismatch {
                    kind: "projection experiment".into(),
                    found: "vector",
                })
            }
        }
    }
    level.ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))
}

// ---------------------------------------------------------------------------
// projection-norm ratio search
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct ConjectureLevelRow<T> {
    pub level: u32,
    pub max_ratio: T,
    pub mean_ratio: T,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConjectureReport<T: Scalar> {
    pub per_level: Vec<ConjectureLevelRow<T>>,
    /// Largest `||pi_n(w)|| / ||w||` seen, its level, and the witness path.
    pub max_ratio: T,
    pub witness_level: u32,
    pub witness: DyadicPath<T>,
    /// Histogram of all ratios: counts over `[lo, lo + width)` bins.
    pub ratio_bins: Vec<(T, u64)>,
    /// Estimated relative quadrature tolerance (from panel-refinement deltas
    /// on sample paths).
    pub quad_tolerance: T,
    /// A ratio above `1 + 10 * quad_tolerance` is a counterexample
    /// candidate.
    pub threshold: T,
    pub candidates: u64,
    /// Sanity channel: max of `|pi_n(w)|_inf / |w|_inf`, which can never
    /// exceed 1.
    pub max_sup_ratio: T,
    pub samples: usize,
    pub seed: u64,
}

/// Samples Brownian paths at `top_level` (seeds `seed, seed+1, ...`) and
/// measures how the Sobolev norm responds to dyadic projection onto each
/// coarser level `2..top_level`. The corresponding sup-norm ratios are
/// reported alongside as an exact-contraction sanity channel. No direction
/// of the answer is asserted; the report records the evidence.
pub fn projection_norm_conjecture_search<T: Scalar>(
    params: &SobolevParams<T>,
    quad: &QuadratureSpec,
    top_level: u32,
    n_samples: usize,
    seed: u64,
) -> Result<ConjectureReport<T>> {
    if top_level < 3 {
        return Err(Error::OutOfRange(
            "conjecture search needs top_level >= 3".into(),
        ));
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let levels: Vec<u32> = (2..top_level).collect();
    let bin_width = T::cast(0.02);
    let n_bins = 75usize; // covers [0, 1.5)
    let mut bins = vec![0u64; n_bins + 1]; // last bin catches overflow
    let mut per_level: Vec<(T, T)> = vec![(T::zero(), T::zero()); levels.len()];
    let mut max_ratio = T::neg_infinity();
    let mut witness = None;
    let mut witness_level = 0u32;
    let mut max_sup_ratio = T::zero();
    let mut quad_tol = T::cast(1e-12);

    for s in 0..n_samples {
        let w = sample_brownian::<T>(top_level, seed + s as u64);
        if s < 5 {
            let check = sobolev_norm_refinement(&w, params, quad);
            quad_tol = quad_tol.max(check.rel_delta);
        }
        let norm_top = sobolev_norm(&w, params, quad);
        let sup_top = w.sup_norm();
        for (li, &n) in levels.iter().enumerate() {
            let proj = w.project(n);
            let ratio = sobolev_norm(&proj, params, quad) / norm_top;
            let sup_ratio = proj.sup_norm() / sup_top;
            max_sup_ratio = max_sup_ratio.max(sup_ratio);
            per_level[li].0 = per_level[li].0.max(ratio);
            per_level[li].1 += ratio;
            if ratio > max_ratio {
                max_ratio = ratio;
                witness = Some(w.clone());
                witness_level = n;
            }
            let bin = (ratio / bin_width).widen().floor() as usize;
            bins[bin.min(n_bins)] += 1;
        }
    }

    let threshold = T::one() + T::cast(10.0) * quad_tol;
    let per_level = levels
        .iter()
        .zip(per_level)
        .map(|(&level, (mx, sum))| ConjectureLevelRow {
            level,
            max_ratio: mx,
            mean_ratio: sum / T::cast(n_samples as f64),
        })
        .collect();
    let candidates = bins
        .iter()
        .enumerate()
        .filter(|(li, _)| T::cast(*li as f64) * bin_width > threshold)
        .map(|(_, &c)| c)
        .sum();
    let ratio_bins = bins
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(i, &c)| (T::cast(i as f64) * bin_width, c))
        .collect();
    Ok(ConjectureReport {
        per_level,
        max_ratio,
        witness_level,
        witness: witness.expect("at least one sample"),
        ratio_bins,
        quad_tolerance: quad_tol,
        threshold,
        candidates,
        max_sup_ratio,
        samples: n_samples,
        seed,
    })
}

// ---------------------------------------------------------------------------
// one-dimensional displacement density estimate
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct DensityEstimateReport<T> {
    /// Smallest `gamma(image cells) - rho_0(A)/M + tol` over all tested
    /// `(t, A)`; nonnegative means the estimate held everywhere.
    pub min_margin: T,
    /// The `(t, block start, block length)` achieving the minimum.
    pub worst_case: (T, usize, usize),
    pub pass: bool,
    pub blocks_tested: usize,
    pub binning_tolerance: T,
    pub density_bound: T,
}

/// Desk-scale form of the density displacement estimate in one dimension:
/// with both densities against the Gaussian reference bounded by `M`
/// (verified, else rejected), the monotone optimal map `T` for `|.|^p` must
/// satisfy `gamma(T_t(A)) >= rho_0(A)/M` up to binning error, for every
/// dyadic union of cells `A` and `T_t = (1-t) Id + t T`.
pub fn displacement_density_estimate<T: Scalar>(
    rho0: &Histogram<T>,
    rho1: &Histogram<T>,
    bound: T,
    p: T,
    t_list: &[T],
) -> Result<DensityEstimateReport<T>> {
    let grid = *rho0.grid();
    if grid.dim() != 1 {
        return Err(Error::InvalidArgument(
            "density estimate is one-dimensional".into(),
        ));
    }
    if rho1.grid() != &grid {
        return Err(Error::GridMismatch("histograms on different grids".into()));
    }
    if !(p > T::one()) {
        return Err(Error::OutOfRange(format!(
            "density estimate needs p > 1, got {p}"
        )));
    }
    let gref = gaussian_reference(grid);
    for h in [rho0, rho1] {
        for (cell, (&m, &g)) in h.masses().iter().zip(gref.masses()).enumerate() {
            if m > bound * g {
                return Err(Error::DensityBound {
                    cell,
                    density: (m / g).widen(),
                    bound: bound.widen(),
                });
            }
        }
    }

    // monotone coupling over the positive cells
    let support = |h: &Histogram<T>| -> Vec<(T, T)> {
        h.masses()
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > T::zero())
            .map(|(i, &m)| (grid.cell_center(i)[0], m))
            .collect()
    };
    let src = support(rho0);
    let dst = support(rho1);
    let coupling = monotone_coupling_1d(&src, &dst)?;
    // per source atom, the list of coupled target positions
    let mut images: Vec<Vec<T>> = vec![Vec::new(); src.len()];
    for &(i, j, _) in &coupling {
        images[i].push(dst[j].0);
    }
    let src_cells: Vec<usize> = rho0
        .masses()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > T::zero())
        .map(|(i, _)| i)
        .collect();

    let g_max = gref
        .masses()
        .iter()
        .fold(T::zero(), |acc, &g| acc.max(g));
    let binning_tolerance = T::cast(2.0) * g_max;

    let m_cells = grid.cells_per_axis();
    let mut min_margin = T::infinity();
    let mut worst = (T::zero(), 0usize, 0usize);
    let mut blocks = 0usize;
    let mut hit = vec![false; grid.num_cells()];
    for &t in t_list {
        if !(t >= T::zero() && t <= T::one()) {
            return Err(Error::OutOfRange(format!("t = {t} outside [0, 1]")));
        }
        let mut scale = 1usize;
        while scale <= m_cells {
            let mut start = 0usize;
            while start < m_cells {
                let end = (start + scale).min(m_cells);
                blocks += 1;
                // rho0 mass of the block and image cells of its atoms
                let mut block_mass = T::zero();
                for h in hit.iter_mut() {
                    *h = false;
                }
                for (atom, &cell) in src_cells.iter().enumerate() {
                    if cell < start || cell >= end {
                        continue;
                    }
                    block_mass += rho0.masses()[cell];
                    let x = src[atom].0;
                    for &y in &images[atom] {
                        let u = (T::one() - t) * x + t * y;
                        let idx = grid.cell_index(&[u])?;
                        hit[idx] = true;
                    }
                }
                let gamma_mass: T = hit
                    .iter()
                    .zip(gref.masses())
                    .filter(|(&h, _)| h)
                    .map(|(_, &g)| g)
                    .sum();
                let margin = gamma_mass - block_mass / bound + binning_tolerance;
                if margin < min_margin {
                    min_margin = margin;
                    worst = (t, start, end - start);
                }
                start += scale;
            }
            scale *= 2;
        }
    }
    Ok(DensityEstimateReport {
        min_margin,
        worst_case: worst,
        pass: min_margin >= T::zero(),
        blocks_tested: blocks,
        binning_tolerance,
        density_bound: bound,
    })
}

#[cfg(test)]
mod tests;
