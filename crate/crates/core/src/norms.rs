//! The Sobolev-type path norm, its calculus, and elementary vector norms.
//!
//! For admissible parameters `(k, gamma)` the norm is
//!
//! ```text
//! ||w||_{k,g} = ( int_0^1 int_0^1 (w(t) - w(s))^{2k} / |t-s|^{1+2kg} dt ds )^{1/2k}
//! ```
//!
//! and is dominated by the Cameron-Martin norm, `||w|| <= C |w|_H`, with the
//! embedding constant `C = (int int |t-s|^{k-1-2kg})^{1/2k}` available in
//! closed form.
//!
//! The double integral is evaluated by tensor Gauss-Legendre quadrature on
//! panels aligned with the path's dyadic grid. Under the parameter
//! constraints the exponent `2k - 1 - 2kg` is positive, so the integrand is
//! continuous and vanishes on the diagonal; panel alignment keeps the
//! piecewise-linear kinks on panel boundaries. Same-panel contributions are
//! reduced analytically (the path is linear there, so the integrand is a
//! plain power of `|t - s|`), which removes the 0/0 ambiguity at coincident
//! quadrature nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::DyadicPath;
use crate::quadrature::gauss_legendre_01;
use crate::scalar::Scalar;

/// Admissible norm parameters: integer `k >= 1` and `gamma` with
/// `0 < gamma < 1/2` and `2 < 1 + 2k*gamma < k`. Carries the derived
/// embedding constant, recomputed on construction and on deserialization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSobolevParams<T>")]
pub struct SobolevParams<T: Scalar> {
    k: u32,
    gamma: T,
    c_embed: T,
}

#[derive(Deserialize)]
struct RawSobolevParams<T> {
    k: u32,
    gamma: T,
    #[serde(default)]
    #[allow(dead_code)]
    c_embed: Option<T>,
}

impl<T: Scalar> TryFrom<RawSobolevParams<T>> for SobolevParams<T> {
    type Error = Error;
    fn try_from(raw: RawSobolevParams<T>) -> Result<Self> {
        SobolevParams::new(raw.k, raw.gamma)
    }
}

impl<T: Scalar> SobolevParams<T> {
    pub fn new(k: u32, gamma: T) -> Result<Self> {
        let g = gamma.widen();
        let kf = k as f64;
        let ok = g > 0.0 && g < 0.5 && 2.0 < 1.0 + 2.0 * kf * g && 1.0 + 2.0 * kf * g < kf;
        if !ok {
            return Err(Error::SobolevParams { k, gamma: g });
        }
        let c_embed = embedding_constant_unchecked(k, gamma);
        Ok(Self { k, gamma, c_embed })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    /// The embedding constant `C_{k,gamma}`.
    pub fn embedding_constant(&self) -> T {
        self.c_embed
    }

    /// Norm power `2k`.
    pub fn power(&self) -> u32 {
        2 * self.k
    }

    /// Kernel exponent `1 + 2k*gamma`.
    pub fn kernel_exponent(&self) -> T {
        T::one() + T::cast(2.0 * self.k as f64) * self.gamma
    }
}

impl<T: Scalar> Default for SobolevParams<T> {
    /// The default parameter choice `(k, gamma) = (4, 0.3)`, comfortably
    /// inside the admissible region.
    fn default() -> Self {
        SobolevParams::new(4, T::cast(0.3)).expect("(4, 0.3) is admissible")
    }
}

/// Closed-form embedding constant `(2 / ((a+1)(a+2)))^{1/2k}` with
/// `a = k - 1 - 2k*gamma`, from `int int |t-s|^a dt ds = 2/((a+1)(a+2))`.
pub fn embedding_constant<T: Scalar>(k: u32, gamma: T) -> Result<T> {
    SobolevParams::new(k, gamma).map(|p| p.c_embed)
}

fn embedding_constant_unchecked<T: Scalar>(k: u32, gamma: T) -> T {
    let kf = T::cast(k as f64);
    let two = T::cast(2.0);
    let a = kf - T::one() - two * kf * gamma;
    let inner = two / ((a + T::one()) * (a + two));
    inner.powf(T::one() / (two * kf))
}

/// Panel layout for the double-integral quadrature: each dyadic grid cell is
/// split into `panels_per_cell` panels per axis and each panel carries a
/// `gauss_points`-point tensor Gauss-Legendre rule.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawQuadratureSpec")]
pub struct QuadratureSpec {
    panels_per_cell: u32,
    gauss_points: u32,
}

#[derive(Deserialize)]
struct RawQuadratureSpec {
    panels_per_cell: u32,
    gauss_points: u32,
}

impl TryFrom<RawQuadratureSpec> for QuadratureSpec {
    type Error = Error;
    fn try_from(raw: RawQuadratureSpec) -> Result<Self> {
        QuadratureSpec::new(raw.panels_per_cell, raw.gauss_points)
    }
}

impl QuadratureSpec {
    pub fn new(panels_per_cell: u32, gauss_points: u32) -> Result<Self> {
        if panels_per_cell < 1 || gauss_points < 1 {
            return Err(Error::QuadratureSpec);
        }
        Ok(Self {
            panels_per_cell,
            gauss_points,
        })
    }

    pub fn panels_per_cell(&self) -> u32 {
        self.panels_per_cell
    }

    pub fn gauss_points(&self) -> u32 {
        self.gauss_points
    }

    /// Same rule with the panel count scaled by `factor` (for refinement
    /// checks).
    pub fn refine(&self, factor: u32) -> QuadratureSpec {
        QuadratureSpec {
            panels_per_cell: self.panels_per_cell * factor,
            gauss_points: self.gauss_points,
        }
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            panels_per_cell: 2,
            gauss_points: 8,
        }
    }
}

/// Path values and slopes sampled on the global panel grid.
struct PanelGrid<T> {
    panels: usize,
    gauss: usize,
    h: T,
    /// GL nodes/weights on [0, 1].
    nodes: Vec<T>,
    weights: Vec<T>,
    /// `values[i * gauss + a]` = path value at `(i + nodes[a]) * h`.
    values: Vec<T>,
    /// Slope of the dyadic cell containing each panel.
    slopes: Vec<T>,
}

fn panel_grid<T: Scalar>(path: &DyadicPath<T>, quad: &QuadratureSpec) -> PanelGrid<T> {
    let ppc = quad.panels_per_cell as usize;
    let gauss = quad.gauss_points as usize;
    let cells = path.cells();
    let panels = cells * ppc;
    let h = T::one() / T::cast(panels as f64);
    let (n64, w64) = gauss_legendre_01(gauss);
    let nodes: Vec<T> = n64.iter().map(|&x| T::cast(x)).collect();
    let weights: Vec<T> = w64.iter().map(|&x| T::cast(x)).collect();

    let cell_slopes = path.slopes();
    let knots = path.knots();
    let cw = T::one() / T::cast(cells as f64);
    let mut values = Vec::with_capacity(panels * gauss);
    let mut slopes = Vec::with_capacity(panels);
    for i in 0..panels {
        let cell = i / ppc;
        let base = knots[cell];
        let slope = cell_slopes[cell];
        let t0 = T::cast(cell as f64) * cw;
        for a in 0..gauss {
            let t = (T::cast(i as f64) + nodes[a]) * h;
            values.push(base + slope * (t - t0));
        }
        slopes.push(slope);
    }
    PanelGrid {
        panels,
        gauss,
        h,
        nodes,
        weights,
        values,
        slopes,
    }
}

/// Off-diagonal kernel table: for each panel offset `d >= 1` the weighted
/// kernel `w_a w_b |d + x_a - x_b|^{-theta}`, flattened `[d-1][a][b]`.
fn offdiag_kernel<T: Scalar>(grid: &PanelGrid<T>, theta: T) -> Vec<T> {
    let g = grid.gauss;
    let p = grid.panels;
    let mut table = Vec::with_capacity((p - 1).max(0) * g * g);
    for d in 1..p {
        let df = T::cast(d as f64);
        for a in 0..g {
            let wa = grid.weights[a];
            let xa = grid.nodes[a];
            for b in 0..g {
                let arg = (df + xa - grid.nodes[b]).abs();
                table.push(wa * grid.weights[b] * arg.powf(-theta));
            }
        }
    }
    table
}

/// Same-panel constant `sum_ab w_a w_b |x_a - x_b|^{2k - theta}`; the path is
/// linear inside a panel so the integrand reduces to this power times the
/// slope factor.
fn diag_constant<T: Scalar>(grid: &PanelGrid<T>, exponent: T) -> T {
    let g = grid.gauss;
    let mut c = T::zero();
    for a in 0..g {
        for b in 0..g {
            if a == b {
                continue; // |x_a - x_b|^e = 0 for positive e
            }
            let arg = (grid.nodes[a] - grid.nodes[b]).abs();
            c += grid.weights[a] * grid.weights[b] * arg.powf(exponent);
        }
    }
    c
}

/// Off-diagonal quadrature sum with a monomorphized even-power kernel; a
/// compile-time power chain keeps the inner loop vectorizable.
fn offdiag_sum<T: Scalar>(grid: &PanelGrid<T>, koff: &[T], pow2k: impl Fn(T) -> T + Copy) -> T {
    let g = grid.gauss;
    let p = grid.panels;
    let mut off = T::zero();
    for d in 1..p {
        let kd = &koff[(d - 1) * g * g..d * g * g];
        let mut sd = T::zero();
        for i in d..p {
            let va = &grid.values[i * g..(i + 1) * g];
            let vb = &grid.values[(i - d) * g..(i - d + 1) * g];
            for a in 0..g {
                let wa = va[a];
                let krow = &kd[a * g..(a + 1) * g];
                let mut s = T::zero();
                for b in 0..g {
                    let diff = wa - vb[b];
                    s += pow2k(diff) * krow[b];
                }
                sd += s;
            }
        }
        off += sd;
    }
    off + off // (t, s) <-> (s, t) symmetry
}

/// `F(w) = ||w||^{2k}` by panel quadrature.
pub fn sobolev_norm_power<T: Scalar>(
    path: &DyadicPath<T>,
    params: &SobolevParams<T>,
    quad: &QuadratureSpec,
) -> T {
    let grid = panel_grid(path, quad);
    let theta = params.kernel_exponent();
    let two_k = params.power() as i32;
    let koff = offdiag_kernel(&grid, theta);

    let off = match two_k {
        6 => offdiag_sum(&grid, &koff, |x: T| {
            let x2 = x * x;
            x2 * x2 * x2
        }),
        8 => offdiag_sum(&grid, &koff, |x: T| {
            let x2 = x * x;
            let x4 = x2 * x2;
            x4 * x4
        }),
        10 => offdiag_sum(&grid, &koff, |x: T| {
            let x2 = x * x;
            let x4 = x2 * x2;
            x4 * x4 * x2
        }),
        _ => offdiag_sum(&grid, &koff, |x: T| x.powi(two_k)),
    };

    let diag_exp = T::cast(two_k as f64) - theta;
    let cdiag = diag_constant(&grid, diag_exp);
    let diag: T = grid.slopes.iter().map(|&b| b.powi(two_k)).sum::<T>() * cdiag
        * grid.h.powf(diag_exp);

    (off * grid.h.powf(-theta) + diag) * grid.h * grid.h
}

/// The Sobolev-type norm `||w||_{k,gamma}`.
pub fn sobolev_norm<T: Scalar>(
    path: &DyadicPath<T>,
    params: &SobolevParams<T>,
    quad: &QuadratureSpec,
) -> T {
    sobolev_norm_power(path, params, quad).powf(T::one() / T::cast(params.power() as f64))
}

/// Richardson-style refinement check: the norm at the given panel count and
/// at twice the panel count, with the relative delta.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct RefinementCheck<T> {
    pub coarse: T,
    pub fine: T,
    pub rel_delta: T,
}

pub fn sobolev_norm_refinement<T: Scalar>(
    path: &DyadicPath<T>,
    params: &SobolevParams<T>,
    quad: &QuadratureSpec,
) -> RefinementCheck<T> {
    let coarse = sobolev_norm(path, params, quad);
    let fine = sobolev_norm(path, params, &quad.refine(2));
    let scale = T::one().max(fine.abs());
    RefinementCheck {
        coarse,
        fine,
        rel_delta: (coarse - fine).abs() / scale,
    }
}

/// Off-diagonal sum for the derivative integrand `pow(dw) * dh * kernel`.
fn bilinear_offdiag_sum<T: Scalar>(
    gw: &PanelGrid<T>,
    gh: &PanelGrid<T>,
    koff: &[T],
    pow_odd: impl Fn(T) -> T + Copy,
) -> T {
    let g = gw.gauss;
    let p = gw.panels;
    let mut off = T::zero();
    for d in 1..p {
        let kd = &koff[(d - 1) * g * g..d * g * g];
        let mut sd = T::zero();
        for i in d..p {
            let wa_row = &gw.values[i * g..(i + 1) * g];
            let wb_row = &gw.values[(i - d) * g..(i - d + 1) * g];
            let ha_row = &gh.values[i * g..(i + 1) * g];
            let hb_row = &gh.values[(i - d) * g..(i - d + 1) * g];
            for a in 0..g {
                let wa = wa_row[a];
                let ha = ha_row[a];
                let krow = &kd[a * g..(a + 1) * g];
                let mut s = T::zero();
                for b in 0..g {
                    let dw = wa - wb_row[b];
                    let dh = ha - hb_row[b];
                    s += pow_odd(dw) * dh * krow[b];
                }
                sd += s;
            }
        }
        off += sd;
    }
    off + off
}

/// Directional derivative `D_h F(w)` of `F = ||.||^{2k}`:
/// `2k int int (w(t)-w(s))^{2k-1} (h(t)-h(s)) / |t-s|^{1+2kg} dt ds`,
/// on the same panel quadrature as the norm. `w` and `h` are lifted to a
/// common level first.
pub fn sobolev_directional_derivative<T: Scalar>(
    w: &DyadicPath<T>,
    h: &DyadicPath<T>,
    params: &SobolevParams<T>,
    quad: &QuadratureSpec,
) -> T {
    let level = w.level().max(h.level());
    let wl = w.project(level);
    let hl = h.project(level);
    let gw = panel_grid(&wl, quad);
    let gh = panel_grid(&hl, quad);
    let theta = params.kernel_exponent();
    let two_k = params.power() as i32;
    let koff = offdiag_kernel(&gw, theta);

    // swapping (t, s) negates both factors, so the integrand is symmetric
    let off = match two_k - 1 {
        5 => bilinear_offdiag_sum(&gw, &gh, &koff, |x: T| {
            let x2 = x * x;
            x2 * x2 * x
        }),
        7 => bilinear_offdiag_sum(&gw, &gh, &koff, |x: T| {
            let x2 = x * x;
            let x4 = x2 * x2;
            x4 * x2 * x
        }),
        9 => bilinear_offdiag_sum(&gw, &gh, &koff, |x: T| {
            let x2 = x * x;
            let x4 = x2 * x2;
            x4 * x4 * x
        }),
        _ => bilinear_offdiag_sum(&gw, &gh, &koff, |x: T| x.powi(two_k - 1)),
    };

    let diag_exp = T::cast(two_k as f64) - theta;
    let cdiag = diag_constant(&gw, diag_exp);
    let diag: T = gw
        .slopes
        .iter()
        .zip(&gh.slopes)
        .map(|(&bw, &bh)| bw.powi(two_k - 1) * bh)
        .sum::<T>()
        * cdiag
        * gw.h.powf(diag_exp);

    let integral = (off * gw.h.powf(-theta) + diag) * gw.h * gw.h;
    T::cast(two_k as f64) * integral
}

/// Directional derivative of `||.||^p` at `w` in direction `h` for `p > 1`,
/// via the chain rule `(p/2k) F(w)^{p/2k - 1} D_h F(w)`; returns 0 at the
/// origin, where the map is differentiable with vanishing gradient.
pub fn sobolev_power_gradient_action<T: Scalar>(
    w: &DyadicPath<T>,
    h: &DyadicPath<T>,
    p: T,
    params: &SobolevParams<T>,
    quad: &QuadratureSpec,
) -> Result<T> {
    if !(p > T::one()) {
        return Err(Error::OutOfRange(format!(
            "gradient of ||.||^p needs p > 1, got {p}"
        )));
    }
    if w.is_zero() {
        return Ok(T::zero());
    }
    let two_k = T::cast(params.power() as f64);
    let f = sobolev_norm_power(w, params, quad);
    let df = sobolev_directional_derivative(w, h, params, quad);
    Ok(p / two_k * f.powf(p / two_k - T::one()) * df)
}

/// Midpoint convexity margin `(||w1|| + ||w2||)/2 - ||(w1+w2)/2||`.
///
/// Nonnegative by the triangle inequality; strictly positive unless the two
/// paths are nonnegatively colinear, since the unit ball is strictly convex.
pub fn strict_convexity_probe<T: Scalar>(
    w1: &DyadicPath<T>,
    w2: &DyadicPath<T>,
    params: &SobolevParams<T>,
    quad: &QuadratureSpec,
) -> T {
    let half = T::cast(0.5);
    let mid = w1.add(w2).scale(half);
    let n1 = sobolev_norm(w1, params, quad);
    let n2 = sobolev_norm(w2, params, quad);
    (n1 + n2) * half - sobolev_norm(&mid, params, quad)
}

/// The `l^p` norm of a finite vector; `p` must be at least 1 and may be
/// infinite, in which case the max of absolute values is returned. Scaled to
/// avoid overflow for large `p`.
pub fn lp_norm<T: Scalar>(v: &[T], p: T) -> Result<T> {
    if p.is_nan() || p < T::one() {
        return Err(Error::LpExponent { p: p.widen() });
    }
    let max = v.iter().map(|x| x.abs()).fold(T::zero(), T::max);
    if max == T::zero() || p.is_infinite() {
        return Ok(max);
    }
    let sum: T = v.iter().map(|x| (x.abs() / max).powf(p)).sum();
    Ok(max * sum.powf(T::one() / p))
}
