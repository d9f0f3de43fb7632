//! Discrete Monge-Kantorovich machinery: measures, costs, exact and entropic
//! solvers, Kantorovich potentials, and the optimality diagnostics built on
//! them (duality gaps, c-transforms, cyclical monotonicity, Monge-map
//! extraction and gradient inversion).

mod simplex;

pub use simplex::TIE_BREAK_RULE;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::{lp_norm, sobolev_norm, QuadratureSpec, SobolevParams};
use crate::paths::DyadicPath;
use crate::scalar::Scalar;

/// Default cap on exact-solver instance sides.
pub const DEFAULT_SIZE_CAP: usize = 512;

/// Default relative support threshold separating exact solver zeros from
/// rounding noise.
pub const DEFAULT_SUPPORT_THRESHOLD: f64 = 1e-10;

/// Default cap on enumerated cycle tuples in monotonicity checks.
pub const DEFAULT_CYCLE_CAP: u128 = 20_000_000;

// ---------------------------------------------------------------------------
// dense matrices
// ---------------------------------------------------------------------------

/// Dense row-major matrix used for costs and plans.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix<T>")]
pub struct Matrix<T: Scalar> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

#[derive(Deserialize)]
struct RawMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> TryFrom<RawMatrix<T>> for Matrix<T> {
    type Error = Error;
    fn try_from(raw: RawMatrix<T>) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl<T: Scalar> Matrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "matrix {}x{} needs {} entries, got {}",
                rows,
                cols,
                rows * cols,
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: T) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
    }

    /// Entrywise `l1` distance; shapes must match.
    pub fn l1_distance(&self, other: &Matrix<T>) -> Result<T> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| (x - y).abs())
            .sum())
    }
}

// ---------------------------------------------------------------------------
// ground points and measures
// ---------------------------------------------------------------------------

/// A point of the ground space: either a vector in `R^d` or a dyadic path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GroundPoint<T: Scalar> {
    Vector(Vec<T>),
    Path(DyadicPath<T>),
}

impl<T: Scalar> GroundPoint<T> {
    pub fn as_vector(&self) -> Option<&[T]> {
        match self {
            GroundPoint::Vector(v) => Some(v),
            GroundPoint::Path(_) => None,
        }
    }

    pub fn as_path(&self) -> Option<&DyadicPath<T>> {
        match self {
            GroundPoint::Path(p) => Some(p),
            GroundPoint::Vector(_) => None,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            GroundPoint::Vector(_) => "vector",
            GroundPoint::Path(_) => "path",
        }
    }
}

/// A finitely supported probability measure on the ground space.
///
/// Construction merges duplicate points, rejects negative weights, and
/// normalizes the total mass to 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasure<T>")]
pub struct DiscreteMeasure<T: Scalar> {
    points: Vec<GroundPoint<T>>,
    weights: Vec<T>,
}

#[derive(Deserialize)]
struct RawMeasure<T: Scalar> {
    points: Vec<GroundPoint<T>>,
    weights: Vec<T>,
}

impl<T: Scalar> TryFrom<RawMeasure<T>> for DiscreteMeasure<T> {
    type Error = Error;
    fn try_from(raw: RawMeasure<T>) -> Result<Self> {
        DiscreteMeasure::new(raw.points, raw.weights)
    }
}

impl<T: Scalar> DiscreteMeasure<T> {
    pub fn new(points: Vec<GroundPoint<T>>, weights: Vec<T>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::InvalidMeasure(format!(
                "{} points with {} weights",
                points.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::InvalidMeasure(
                "weights must be finite and nonnegative".into(),
            ));
        }
        // merge duplicate points, keeping first-occurrence order
        let mut merged_points: Vec<GroundPoint<T>> = Vec::with_capacity(points.len());
        let mut merged_weights: Vec<T> = Vec::with_capacity(points.len());
        for (pt, w) in points.into_iter().zip(weights) {
            match merged_points.iter().position(|q| *q == pt) {
                Some(idx) => merged_weights[idx] += w,
                None => {
                    merged_points.push(pt);
                    merged_weights.push(w);
                }
            }
        }
        let total: T = merged_weights.iter().copied().sum();
        if total <= T::zero() {
            return Err(Error::InvalidMeasure("total mass must be positive".into()));
        }
        for w in merged_weights.iter_mut() {
            *w /= total;
        }
        Ok(Self {
            points: merged_points,
            weights: merged_weights,
        })
    }

    /// Measure on vector points.
    pub fn from_vectors(points: Vec<Vec<T>>, weights: Vec<T>) -> Result<Self> {
        Self::new(points.into_iter().map(GroundPoint::Vector).collect(), weights)
    }

    /// Uniform measure on vector points.
    pub fn uniform_vectors(points: Vec<Vec<T>>) -> Result<Self> {
        let w = vec![T::one(); points.len()];
        Self::from_vectors(points, w)
    }

    /// Measure on path points.
    pub fn from_paths(paths: Vec<DyadicPath<T>>, weights: Vec<T>) -> Result<Self> {
        Self::new(paths.into_iter().map(GroundPoint::Path).collect(), weights)
    }

    /// Uniform measure on path points.
    pub fn uniform_paths(paths: Vec<DyadicPath<T>>) -> Result<Self> {
        let w = vec![T::one(); paths.len()];
        Self::from_paths(paths, w)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[GroundPoint<T>] {
        &self.points
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &GroundPoint<T> {
        &self.points[i]
    }

    /// Applies the dyadic projection to every path point (weights unchanged,
    /// colliding projections merged). Errors on vector points.
    pub fn project_paths(&self, level: u32) -> Result<Self> {
        let mut paths = Vec::with_capacity(self.len());
        for pt in &self.points {
            match pt {
                GroundPoint::Path(p) => paths.push(GroundPoint::Path(p.project(level))),
                GroundPoint::Vector(_) => {
                    return Err(Error::GroundSpaceMismatch {
                        kind: "projection".into(),
                        found: "vector",
                    })
                }
            }
        }
        Self::new(paths, self.weights.clone())
    }
}

// ---------------------------------------------------------------------------
// costs
// ---------------------------------------------------------------------------

/// Ground cost used by the solvers. Each kind carries a base distance
/// (`ground_metric`); the solver objective is `cost`, which is the distance
/// raised to the kind's exponent (squared for the Wasserstein-2 kinds, the
/// configured power `p` for the Sobolev kind).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CostSpec<T: Scalar> {
    /// `||x - y||_{k,gamma}^p` on paths.
    SobolevP {
        p: T,
        params: SobolevParams<T>,
        quad: QuadratureSpec,
    },
    /// `|x - y|_p^2` on vectors.
    LpSquared { p: T },
    /// `|x - y|_inf^2`; on paths this is the squared sup norm of the
    /// difference path.
    LinfSquared,
    /// `|A (x - y)|_inf^2` on vectors, for an invertible warp matrix `A`.
    WarpedSup { matrix: Vec<Vec<T>> },
}

impl<T: Scalar> CostSpec<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            CostSpec::SobolevP { p, .. } => {
                if !(*p >= T::one()) {
                    return Err(Error::InvalidCost(format!(
                        "sobolev cost exponent must satisfy p >= 1, got {p}"
                    )));
                }
            }
            CostSpec::LpSquared { p } => {
                if !(*p >= T::one()) {
                    return Err(Error::InvalidCost(format!(
                        "lp cost exponent must satisfy p >= 1, got {p}"
                    )));
                }
            }
            CostSpec::LinfSquared => {}
            CostSpec::WarpedSup { matrix } => {
                if !matrix_is_invertible(matrix) {
                    return Err(Error::InvalidCost(
                        "warp matrix must be square and invertible".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Short label for metadata and reports.
    pub fn label(&self) -> String {
        match self {
            CostSpec::SobolevP { p, params, .. } => format!(
                "sobolev_p(p={p}, k={}, gamma={})",
                params.k(),
                params.gamma()
            ),
            CostSpec::LpSquared { p } => format!("lp_squared(p={p})"),
            CostSpec::LinfSquared => "linf_squared".into(),
            CostSpec::WarpedSup { .. } => "warped_sup".into(),
        }
    }

    /// The base distance between two ground points.
    pub fn ground_metric(&self, x: &GroundPoint<T>, y: &GroundPoint<T>) -> Result<T> {
        match self {
            CostSpec::SobolevP { params, quad, .. } => match (x, y) {
                (GroundPoint::Path(px), GroundPoint::Path(py)) => {
                    Ok(sobolev_norm(&px.sub(py), params, quad))
                }
                _ => Err(self.mismatch(x, y)),
            },
            CostSpec::LpSquared { p } => match (x, y) {
                (GroundPoint::Vector(vx), GroundPoint::Vector(vy)) => {
                    lp_norm(&diff(vx, vy)?, *p)
                }
                _ => Err(self.mismatch(x, y)),
            },
            CostSpec::LinfSquared => match (x, y) {
                (GroundPoint::Vector(vx), GroundPoint::Vector(vy)) => {
                    lp_norm(&diff(vx, vy)?, T::infinity())
                }
                (GroundPoint::Path(px), GroundPoint::Path(py)) => Ok(px.sub(py).sup_norm()),
                _ => Err(self.mismatch(x, y)),
            },
            CostSpec::WarpedSup { matrix } => match (x, y) {
                (GroundPoint::Vector(vx), GroundPoint::Vector(vy)) => {
                    let d = diff(vx, vy)?;
                    let warped = apply_matrix(matrix, &d)?;
                    lp_norm(&warped, T::infinity())
                }
                _ => Err(self.mismatch(x, y)),
            },
        }
    }

    /// The solver objective `c(x, y)`.
    pub fn cost(&self, x: &GroundPoint<T>, y: &GroundPoint<T>) -> Result<T> {
        let d = self.ground_metric(x, y)?;
        Ok(match self {
            CostSpec::SobolevP { p, .. } => d.powf(*p),
            CostSpec::LpSquared { .. } | CostSpec::LinfSquared | CostSpec::WarpedSup { .. } => {
                d * d
            }
        })
    }

    /// Whether `cost` itself is the base metric (a norm cost with `p = 1`).
    pub fn is_metric_cost(&self) -> bool {
        matches!(self, CostSpec::SobolevP { p, .. } if *p == T::one())
    }

    fn mismatch(&self, x: &GroundPoint<T>, y: &GroundPoint<T>) -> Error {
        let found = if x.kind() == y.kind() { x.kind() } else { "mixed" };
        Error::GroundSpaceMismatch {
            kind: self.label(),
            found,
        }
    }
}

fn diff<T: Scalar>(x: &[T], y: &[T]) -> Result<Vec<T>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "vectors of dimension {} and {}",
            x.len(),
            y.len()
        )));
    }
    Ok(x.iter().zip(y).map(|(&a, &b)| a - b).collect())
}

fn apply_matrix<T: Scalar>(m: &[Vec<T>], v: &[T]) -> Result<Vec<T>> {
    if m.len() != v.len() || m.iter().any(|row| row.len() != v.len()) {
        return Err(Error::DimensionMismatch(format!(
            "warp matrix must be {}x{}",
            v.len(),
            v.len()
        )));
    }
    Ok(m.iter()
        .map(|row| row.iter().zip(v).map(|(&a, &b)| a * b).sum())
        .collect())
}

/// Gaussian elimination with partial pivoting; singular below a relative
/// pivot threshold.
fn matrix_is_invertible<T: Scalar>(m: &[Vec<T>]) -> bool {
    let n = m.len();
    if n == 0 || m.iter().any(|row| row.len() != n) {
        return false;
    }
    let mut a: Vec<Vec<T>> = m.to_vec();
    let scale = a
        .iter()
        .flatten()
        .fold(T::zero(), |acc, x| acc.max(x.abs()))
        .max(T::one());
    let tol = scale * T::epsilon() * T::cast(64.0);
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .fold((col, T::zero()), |best, cur| {
                if cur.1 > best.1 {
                    cur
                } else {
                    best
                }
            });
        if pivot <= tol {
            return false;
        }
        a.swap(col, pivot_row);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for c in col..n {
                let sub = f * a[col][c];
                a[r][c] -= sub;
            }
        }
    }
    true
}

/// `c_ij = c(x_i, y_j)` for the given cost.
pub fn build_cost_matrix<T: Scalar>(
    mu0: &DiscreteMeasure<T>,
    mu1: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
) -> Result<Matrix<T>> {
    cost.validate()?;
    let mut data = Vec::with_capacity(mu0.len() * mu1.len());
    for x in mu0.points() {
        for y in mu1.points() {
            data.push(cost.cost(x, y)?);
        }
    }
    Matrix::new(mu0.len(), mu1.len(), data)
}

/// `d_ij = ground_metric(x_i, y_j)`: the unsquared base distance, used by
/// the ray construction and metric-side diagnostics.
pub fn build_metric_matrix<T: Scalar>(
    mu0: &DiscreteMeasure<T>,
    mu1: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
) -> Result<Matrix<T>> {
    cost.validate()?;
    let mut data = Vec::with_capacity(mu0.len() * mu1.len());
    for x in mu0.points() {
        for y in mu1.points() {
            data.push(cost.ground_metric(x, y)?);
        }
    }
    Matrix::new(mu0.len(), mu1.len(), data)
}

// ---------------------------------------------------------------------------
// plans and potentials
// ---------------------------------------------------------------------------

/// A coupling between two discrete measures: nonnegative masses `pi_ij` with
/// the measures' weights as marginals.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TransportPlan<T: Scalar> {
    source: DiscreteMeasure<T>,
    target: DiscreteMeasure<T>,
    matrix: Matrix<T>,
    support_threshold_rel: T,
}

impl<T: Scalar> TransportPlan<T> {
    pub fn new(
        source: DiscreteMeasure<T>,
        target: DiscreteMeasure<T>,
        matrix: Matrix<T>,
    ) -> Result<Self> {
        if matrix.rows() != source.len() || matrix.cols() != target.len() {
            return Err(Error::DimensionMismatch(format!(
                "plan {}x{} between measures of sizes {} and {}",
                matrix.rows(),
                matrix.cols(),
                source.len(),
                target.len()
            )));
        }
        Ok(Self {
            source,
            target,
            matrix,
            support_threshold_rel: T::cast(DEFAULT_SUPPORT_THRESHOLD),
        })
    }

    pub fn with_support_threshold(mut self, rel: T) -> Self {
        self.support_threshold_rel = rel;
        self
    }

    pub fn source(&self) -> &DiscreteMeasure<T> {
        &self.source
    }

    pub fn target(&self) -> &DiscreteMeasure<T> {
        &self.target
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.matrix
    }

    pub fn mass(&self, i: usize, j: usize) -> T {
        self.matrix.at(i, j)
    }

    /// Entries above the relative support threshold, in row-major order.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let cut = self.support_threshold_rel * self.matrix.max_abs();
        let mut out = Vec::new();
        for i in 0..self.matrix.rows() {
            for j in 0..self.matrix.cols() {
                if self.matrix.at(i, j) > cut {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.matrix.rows())
            .map(|i| self.matrix.row(i).iter().copied().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut sums = vec![T::zero(); self.matrix.cols()];
        for i in 0..self.matrix.rows() {
            for (j, s) in sums.iter_mut().enumerate() {
                *s += self.matrix.at(i, j);
            }
        }
        sums
    }

    /// Total `l1` violation of both marginal constraints.
    pub fn marginal_violation(&self) -> T {
        let rows = self.row_sums();
        let cols = self.col_sums();
        let r: T = rows
            .iter()
            .zip(self.source.weights())
            .map(|(&s, &w)| (s - w).abs())
            .sum();
        let c: T = cols
            .iter()
            .zip(self.target.weights())
            .map(|(&s, &w)| (s - w).abs())
            .sum();
        r + c
    }

    /// Checks the marginal invariant at the given tolerance.
    pub fn validate(&self, tol: T) -> Result<()> {
        if self.matrix.data().iter().any(|&x| x < -tol) {
            return Err(Error::InvalidArgument("plan has negative masses".into()));
        }
        let v = self.marginal_violation();
        if v > tol {
            return Err(Error::InvalidArgument(format!(
                "plan marginals violated by {v} (tolerance {tol})"
            )));
        }
        Ok(())
    }

    /// `sum_ij pi_ij c_ij`.
    pub fn transport_value(&self, costs: &Matrix<T>) -> Result<T> {
        if costs.rows() != self.matrix.rows() || costs.cols() != self.matrix.cols() {
            return Err(Error::DimensionMismatch("plan vs cost matrix".into()));
        }
        Ok(self
            .matrix
            .data()
            .iter()
            .zip(costs.data())
            .map(|(&f, &c)| f * c)
            .sum())
    }

    /// Entrywise `l1` distance to another plan of the same shape.
    pub fn l1_distance(&self, other: &TransportPlan<T>) -> Result<T> {
        self.matrix.l1_distance(&other.matrix)
    }
}

/// Kantorovich dual pair attached to a cost matrix: `phi` on sources, `psi`
/// on targets, feasible when `psi_j - phi_i <= c_ij` everywhere.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DualPotentials<T> {
    pub phi: Vec<T>,
    pub psi: Vec<T>,
}

impl<T: Scalar> DualPotentials<T> {
    /// Largest violation of `psi_j - phi_i <= c_ij` (positive means
    /// infeasible).
    pub fn feasibility_violation(&self, costs: &Matrix<T>) -> T {
        let mut worst = T::neg_infinity();
        for (i, &phi) in self.phi.iter().enumerate() {
            for (j, &psi) in self.psi.iter().enumerate() {
                worst = worst.max(psi - phi - costs.at(i, j));
            }
        }
        worst
    }

    /// Dual objective `sum_j psi_j b_j - sum_i phi_i a_i`.
    pub fn objective(&self, mu0: &DiscreteMeasure<T>, mu1: &DiscreteMeasure<T>) -> T {
        let s: T = self
            .psi
            .iter()
            .zip(mu1.weights())
            .map(|(&p, &w)| p * w)
            .sum();
        let t: T = self
            .phi
            .iter()
            .zip(mu0.weights())
            .map(|(&p, &w)| p * w)
            .sum();
        s - t
    }
}

/// Output of the exact solver.
#[derive(Clone, Debug, Serialize)]
pub struct ExactSolution<T: Scalar> {
    pub plan: TransportPlan<T>,
    pub potentials: DualPotentials<T>,
    /// Optimal transport value `sum pi_ij c_ij`.
    pub value: T,
    /// Simplex pivots performed (determinism diagnostic).
    pub pivots: usize,
}

impl<T: Scalar> ExactSolution<T> {
    /// `value - dual objective`; zero at an exact optimum.
    pub fn duality_gap(&self, mu0: &DiscreteMeasure<T>, mu1: &DiscreteMeasure<T>) -> T {
        self.value - self.potentials.objective(mu0, mu1)
    }
}

/// Exact optimal coupling by the transportation simplex, with dual
/// potentials recovered from the final basis. Deterministic: see
/// [`TIE_BREAK_RULE`].
pub fn solve_exact<T: Scalar>(
    mu0: &DiscreteMeasure<T>,
    mu1: &DiscreteMeasure<T>,
    costs: &Matrix<T>,
) -> Result<ExactSolution<T>> {
    solve_exact_capped(mu0, mu1, costs, DEFAULT_SIZE_CAP)
}

pub fn solve_exact_capped<T: Scalar>(
    mu0: &DiscreteMeasure<T>,
    mu1: &DiscreteMeasure<T>,
    costs: &Matrix<T>,
    cap: usize,
) -> Result<ExactSolution<T>> {
    let m = mu0.len();
    let n = mu1.len();
    if costs.rows() != m || costs.cols() != n {
        return Err(Error::DimensionMismatch(format!(
            "cost matrix {}x{} for measures of sizes {} and {}",
            costs.rows(),
            costs.cols(),
            m,
            n
        )));
    }
    if m > cap || n > cap {
        return Err(Error::SolverCap {
            rows: m,
            cols: n,
            cap,
        });
    }
    let sol = simplex::transportation_simplex(mu0.weights(), mu1.weights(), costs.data())?;
    let matrix = Matrix::new(m, n, sol.flow)?;
    let value = matrix
        .data()
        .iter()
        .zip(costs.data())
        .map(|(&f, &c)| f * c)
        .sum();
    // simplex duals satisfy u_i + v_j <= c_ij with equality on the basis;
    // the Kantorovich pair is phi = -u, psi = v.
    let potentials = DualPotentials {
        phi: sol.row_duals.iter().map(|&u| -u).collect(),
        psi: sol.col_duals,
    };
    let plan = TransportPlan::new(mu0.clone(), mu1.clone(), matrix)?;
    Ok(ExactSolution {
        plan,
        potentials,
        value,
        pivots: sol.pivots,
    })
}

/// Entropically regularized approximate solver (log-domain Sinkhorn).
///
/// Returns a plan whose `l1` marginal violation is at most `tol`; if the
/// iteration budget runs out first, the error reports the residual reached.
/// Exists for scale and for the regularization study; never a substitute for
/// [`solve_exact`] where exactness matters.
pub fn solve_sinkhorn<T: Scalar>(
    mu0: &DiscreteMeasure<T>,
    mu1: &DiscreteMeasure<T>,
    costs: &Matrix<T>,
    epsilon: T,
    max_iter: usize,
    tol: T,
) -> Result<TransportPlan<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::OutOfRange(format!(
            "sinkhorn needs epsilon > 0, got {epsilon}"
        )));
    }
    let m = mu0.len();
    let n = mu1.len();
    if costs.rows() != m || costs.cols() != n {
        return Err(Error::DimensionMismatch("cost matrix vs measures".into()));
    }
    let ln_a: Vec<T> = mu0.weights().iter().map(|&w| w.ln()).collect();
    let ln_b: Vec<T> = mu1.weights().iter().map(|&w| w.ln()).collect();
    let mut alpha = vec![T::zero(); m];
    let mut beta = vec![T::zero(); n];
    let mut residual = T::infinity();
    let check_every = 10usize;

    for it in 0..max_iter {
        // alpha update: rows become exact
        for i in 0..m {
            let row = costs.row(i);
            let lse = log_sum_exp((0..n).map(|j| (beta[j] - row[j]) / epsilon));
            alpha[i] = epsilon * (ln_a[i] - lse);
        }
        // beta update: columns become exact
        for j in 0..n {
            let lse = log_sum_exp((0..m).map(|i| (alpha[i] - costs.at(i, j)) / epsilon));
            beta[j] = epsilon * (ln_b[j] - lse);
        }
        if it % check_every != check_every - 1 && it + 1 != max_iter {
            continue;
        }
        // after the beta half-step columns are exact; measure row violation
        let mut viol = T::zero();
        for i in 0..m {
            let row = costs.row(i);
            let mut sum = T::zero();
            for j in 0..n {
                sum += ((alpha[i] + beta[j] - row[j]) / epsilon).exp();
            }
            viol += (sum - mu0.weights()[i]).abs();
        }
        residual = viol;
        if viol <= tol {
            let matrix = Matrix::from_fn(m, n, |i, j| {
                ((alpha[i] + beta[j] - costs.at(i, j)) / epsilon).exp()
            });
            return TransportPlan::new(mu0.clone(), mu1.clone(), matrix);
        }
    }
    Err(Error::SinkhornNonConvergence {
        max_iter,
        tol: tol.widen(),
        residual: residual.widen(),
    })
}

fn log_sum_exp<T: Scalar>(values: impl Iterator<Item = T> + Clone) -> T {
    let max = values.clone().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let sum: T = values.map(|v| (v - max).exp()).sum();
    max + sum.ln()
}

// ---------------------------------------------------------------------------
// c-transforms
// ---------------------------------------------------------------------------

/// The c-transform of a source potential: `psi_j = min_i (phi_i + c_ij)`.
pub fn c_transform<T: Scalar>(phi: &[T], costs: &Matrix<T>) -> Vec<T> {
    (0..costs.cols())
        .map(|j| {
            (0..costs.rows())
                .map(|i| phi[i] + costs.at(i, j))
                .fold(T::infinity(), T::min)
        })
        .collect()
}

/// The reverse transform: `phi_i = max_j (psi_j - c_ij)`. Composing the two
/// never increases `phi` and is idempotent after one round trip.
pub fn c_transform_back<T: Scalar>(psi: &[T], costs: &Matrix<T>) -> Vec<T> {
    (0..costs.rows())
        .map(|i| {
            (0..costs.cols())
                .map(|j| psi[j] - costs.at(i, j))
                .fold(T::neg_infinity(), T::max)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// cyclical monotonicity
// ---------------------------------------------------------------------------

/// Outcome of an exhaustive cycle check over the plan support.
#[derive(Clone, Debug, Serialize)]
pub struct MonotonicityReport<T> {
    pub pass: bool,
    /// Largest cycle gain found: `sum c(x_i, y_i) - sum c(x_i, y_{i+1})`;
    /// positive means a violation of that magnitude.
    pub worst_gain: T,
    /// Support pairs of the worst cycle, in order.
    pub worst_cycle: Vec<(usize, usize)>,
    pub cycles_checked: u64,
    pub max_len: usize,
    pub tolerance: T,
}

/// Exhaustively checks c-cyclical monotonicity of the plan support for all
/// cycle lengths `2..=max_len`: no reordering of targets along a cycle of
/// support pairs may lower the total cost.
pub fn check_cyclical_monotonicity<T: Scalar>(
    plan: &TransportPlan<T>,
    costs: &Matrix<T>,
    max_len: usize,
    tol: T,
) -> Result<MonotonicityReport<T>> {
    check_cyclical_monotonicity_capped(plan, costs, max_len, tol, DEFAULT_CYCLE_CAP)
}

pub fn check_cyclical_monotonicity_capped<T: Scalar>(
    plan: &TransportPlan<T>,
    costs: &Matrix<T>,
    max_len: usize,
    tol: T,
    cap: u128,
) -> Result<MonotonicityReport<T>> {
    if max_len < 2 {
        return Err(Error::OutOfRange(format!(
            "cycle length cap must be at least 2, got {max_len}"
        )));
    }
    let support = plan.support();
    let s = support.len();
    let needed = tuple_count(s as u128, max_len);
    if needed > cap {
        return Err(Error::CycleEnumerationCap {
            support: s,
            max_len,
            needed,
            cap,
        });
    }

    let mut report = MonotonicityReport {
        pass: true,
        worst_gain: T::neg_infinity(),
        worst_cycle: Vec::new(),
        cycles_checked: 0,
        max_len,
        tolerance: tol,
    };
    let mut tuple: Vec<usize> = Vec::with_capacity(max_len);
    let mut used = vec![false; s];
    for len in 2..=max_len.min(s) {
        for first in 0..s {
            tuple.push(first);
            used[first] = true;
            enumerate_cycles(
                &support, costs, len, first, &mut tuple, &mut used, &mut report,
            );
            used[first] = false;
            tuple.pop();
        }
    }
    if report.worst_cycle.is_empty() {
        report.worst_gain = T::zero(); // vacuous pass (support too small)
    }
    report.pass = report.worst_gain <= tol;
    Ok(report)
}

/// Number of canonical tuples (cycles counted once per rotation class).
fn tuple_count(s: u128, max_len: usize) -> u128 {
    let mut total = 0u128;
    for len in 2..=(max_len as u128).min(s) {
        // s!/(s-len)! / len, computed as product with the rotation factor
        let mut perms = 1u128;
        for q in 0..len {
            perms = perms.saturating_mul(s - q);
        }
        total = total.saturating_add(perms / len);
    }
    total
}

fn enumerate_cycles<T: Scalar>(
    support: &[(usize, usize)],
    costs: &Matrix<T>,
    len: usize,
    first: usize,
    tuple: &mut Vec<usize>,
    used: &mut [bool],
    report: &mut MonotonicityReport<T>,
) {
    if tuple.len() == len {
        let mut diag = T::zero();
        let mut shifted = T::zero();
        for pos in 0..len {
            let (xi, yi) = support[tuple[pos]];
            let (_, ynext) = support[tuple[(pos + 1) % len]];
            diag += costs.at(xi, yi);
            shifted += costs.at(xi, ynext);
        }
        let gain = diag - shifted;
        report.cycles_checked += 1;
        if gain > report.worst_gain {
            report.worst_gain = gain;
            report.worst_cycle = tuple.iter().map(|&t| support[t]).collect();
        }
        return;
    }
    // canonical rotation: indices after the first are all larger than it
    for cand in (first + 1)..support.len() {
        if !used[cand] {
            used[cand] = true;
            tuple.push(cand);
            enumerate_cycles(support, costs, len, first, tuple, used, report);
            tuple.pop();
            used[cand] = false;
        }
    }
}

// ---------------------------------------------------------------------------
// Monge maps
// ---------------------------------------------------------------------------

/// A source row whose mass does not concentrate on a single target.
#[derive(Clone, Debug, Serialize)]
pub struct SplitRow<T> {
    pub source: usize,
    pub top_target: usize,
    pub top_fraction: T,
    /// Support entries of the row: `(target, mass)`.
    pub masses: Vec<(usize, T)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SplitReport<T> {
    pub rows: Vec<SplitRow<T>>,
}

/// Result of trying to read the plan as the graph of a map.
#[derive(Clone, Debug, Serialize)]
pub enum MongeExtraction<T> {
    /// `map[i]` = target index receiving (almost) all of source `i`'s mass.
    Map(Vec<usize>),
    /// The plan genuinely splits mass; never silently coerced into a map.
    Split(SplitReport<T>),
}

/// Succeeds iff every source row puts at least `1 - tol` of its mass on one
/// target; otherwise reports the splitting rows and their distributions.
pub fn extract_monge_map<T: Scalar>(plan: &TransportPlan<T>, tol: T) -> MongeExtraction<T> {
    let matrix = plan.matrix();
    let cut = T::cast(DEFAULT_SUPPORT_THRESHOLD) * matrix.max_abs();
    let mut map = Vec::with_capacity(matrix.rows());
    let mut splits = Vec::new();
    for i in 0..matrix.rows() {
        let row = matrix.row(i);
        let total: T = row.iter().copied().sum();
        let (top_target, top_mass) = row
            .iter()
            .enumerate()
            .fold((0usize, T::neg_infinity()), |best, (j, &x)| {
                if x > best.1 {
                    (j, x)
                } else {
                    best
                }
            });
        map.push(top_target);
        if total > T::zero() && top_mass < (T::one() - tol) * total {
            splits.push(SplitRow {
                source: i,
                top_target,
                top_fraction: top_mass / total,
                masses: row
                    .iter()
                    .enumerate()
                    .filter(|(_, &x)| x > cut)
                    .map(|(j, &x)| (j, x))
                    .collect(),
            });
        }
    }
    if splits.is_empty() {
        MongeExtraction::Map(map)
    } else {
        MongeExtraction::Split(SplitReport { rows: splits })
    }
}

// ---------------------------------------------------------------------------
// support system verification
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct SupportSystemReport<T> {
    pub pass: bool,
    /// Worst `|psi_j - phi_i - c_ij|` over the plan support.
    pub worst_support_residual: T,
    /// Worst `psi_j - phi_i - c_ij` over all cells (feasibility; positive
    /// beyond tolerance fails).
    pub worst_feasibility: T,
    pub support_size: usize,
    pub tolerance: T,
}

/// Checks the potential system against a plan: equality `psi_j - phi_i =
/// c_ij` on the support, inequality `<=` everywhere.
pub fn verify_support_system<T: Scalar>(
    plan: &TransportPlan<T>,
    potentials: &DualPotentials<T>,
    costs: &Matrix<T>,
    tol: T,
) -> SupportSystemReport<T> {
    let support = plan.support();
    let mut worst_support = T::zero();
    for &(i, j) in &support {
        let r = (potentials.psi[j] - potentials.phi[i] - costs.at(i, j)).abs();
        worst_support = worst_support.max(r);
    }
    let worst_feasibility = potentials.feasibility_violation(costs);
    SupportSystemReport {
        pass: worst_support <= tol && worst_feasibility <= tol,
        worst_support_residual: worst_support,
        worst_feasibility,
        support_size: support.len(),
        tolerance: tol,
    }
}

// ---------------------------------------------------------------------------
// gradient map inversion for euclidean power costs
// ---------------------------------------------------------------------------

/// `grad_x |x - y|_2^p = p |x - y|^{p-2} (x - y)` for `p > 1` (zero at
/// `x = y`).
pub fn euclidean_power_gradient<T: Scalar>(x: &[T], y: &[T], p: T) -> Result<Vec<T>> {
    if !(p > T::one()) {
        return Err(Error::OutOfRange(format!(
            "power cost gradient needs p > 1, got {p}"
        )));
    }
    let d = diff(x, y)?;
    let r = lp_norm(&d, T::cast(2.0))?;
    if r == T::zero() {
        return Ok(vec![T::zero(); x.len()]);
    }
    let factor = p * r.powf(p - T::cast(2.0));
    Ok(d.into_iter().map(|v| v * factor).collect())
}

/// Inverts the cost gradient for `c(x, y) = |x - y|_2^p`, `p > 1`: returns
/// the unique `y` with `grad_x c(x, y) = v`. With `v = -grad phi(x)` this is
/// the optimal-map formula `y = (grad_x c(x, .))^{-1}(-grad phi(x))`.
///
/// Closed form: `|x - y| = (|v|/p)^{1/(p-1)}` and
/// `x - y = v |x - y|^{2-p} / p`; `v = 0` gives `y = x`.
pub fn invert_cost_gradient<T: Scalar>(x: &[T], v: &[T], p: T) -> Result<Vec<T>> {
    if !(p > T::one()) {
        return Err(Error::OutOfRange(format!(
            "cost gradient inversion needs p > 1, got {p}"
        )));
    }
    if x.len() != v.len() {
        return Err(Error::DimensionMismatch(format!(
            "point of dimension {} with gradient of dimension {}",
            x.len(),
            v.len()
        )));
    }
    let vn = lp_norm(v, T::cast(2.0))?;
    if vn == T::zero() {
        return Ok(x.to_vec());
    }
    let r = (vn / p).powf(T::one() / (p - T::one()));
    let factor = r.powf(T::cast(2.0) - p) / p;
    Ok(x.iter().zip(v).map(|(&xi, &vi)| xi - vi * factor).collect())
}

// ---------------------------------------------------------------------------
// one-dimensional monotone coupling
// ---------------------------------------------------------------------------

/// Monotone (quantile) coupling between two atomic measures on the line,
/// given as `(position, mass)` lists sorted by position. Optimal for every
/// convex translation-invariant cost `|x - y|^p`, `p >= 1`; the unique
/// optimum when `p > 1`.
pub fn monotone_coupling_1d<T: Scalar>(
    source: &[(T, T)],
    target: &[(T, T)],
) -> Result<Vec<(usize, usize, T)>> {
    for pair in [source, target] {
        if pair.is_empty() {
            return Err(Error::InvalidMeasure("empty support".into()));
        }
        if pair.windows(2).any(|w| w[0].0 > w[1].0) {
            return Err(Error::InvalidArgument(
                "monotone coupling needs positions sorted ascending".into(),
            ));
        }
    }
    let mut plan = Vec::new();
    let (mut i, mut j) = (0usize, 0usize);
    let mut ra = source[0].1;
    let mut cb = target[0].1;
    loop {
        let f = ra.min(cb).max(T::zero());
        if f > T::zero() {
            plan.push((i, j, f));
        }
        ra -= f;
        cb -= f;
        if i == source.len() - 1 && j == target.len() - 1 {
            break;
        }
        if (ra <= T::zero() && i < source.len() - 1) || j == target.len() - 1 {
            i += 1;
            ra = source[i].1;
        } else {
            j += 1;
            cb = target[j].1;
        }
    }
    Ok(plan)
}
