//! Transport rays for metric costs, at finite resolution.
//!
//! Given the support pairs of an optimal plan for a norm cost, an ordered
//! pair `(x, y)` of ground points lies on an oriented transport ray when the
//! metric is additive through some support pair `(w, z)`:
//!
//! ```text
//! d(w, x) + d(x, y) + d(y, z) = d(w, z)
//! ```
//!
//! The point set `S` over which candidate pairs range is an explicit input
//! (typically the support points plus interpolated points of interest);
//! there is no canonical finite augmentation, so the caller chooses one.
//! Classification is three-way: pairs with additivity residual within `tol`
//! are accepted, pairs within `2 tol` are reported as uncertain rather than
//! silently classified, and the rest are rejected.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::transport::{CostSpec, GroundPoint, Matrix};

/// Oriented transport rays over a finite point set, together with the
/// residual diagnostics of the additivity test.
#[derive(Clone, Debug, Serialize)]
pub struct RayGraph<T: Scalar> {
    points: Vec<GroundPoint<T>>,
    /// The plan-support pairs the construction started from.
    plan_pairs: Vec<(usize, usize)>,
    /// Accepted oriented pairs, lexicographically ordered.
    oriented_pairs: Vec<(usize, usize)>,
    /// Additivity residual of each accepted pair.
    residuals: Vec<T>,
    /// Pairs whose residual fell in `(tol, 2 tol]`: too close to call.
    uncertain_pairs: Vec<(usize, usize)>,
    tol: T,
    #[serde(skip)]
    dist: Matrix<T>,
}

/// Builds the oriented-ray relation over `points` from the plan support
/// `plan_pairs` (index pairs into `points`), using the base metric of
/// `metric`. For the Sobolev cost the exponent must be 1 so that the cost
/// itself is the metric; the squared kinds contribute their underlying
/// (unsquared) distance.
pub fn build_transport_rays<T: Scalar>(
    points: Vec<GroundPoint<T>>,
    plan_pairs: Vec<(usize, usize)>,
    metric: &CostSpec<T>,
    tol: T,
) -> Result<RayGraph<T>> {
    metric.validate()?;
    if let CostSpec::SobolevP { p, .. } = metric {
        if *p != T::one() {
            return Err(Error::InvalidCost(format!(
                "ray construction needs the metric cost (p = 1), got p = {p}"
            )));
        }
    }
    let s = points.len();
    for &(w, z) in &plan_pairs {
        if w >= s || z >= s {
            return Err(Error::OutOfRange(format!(
                "plan pair ({w}, {z}) outside point set of size {s}"
            )));
        }
    }
    if !(tol > T::zero()) {
        return Err(Error::OutOfRange(format!(
            "ray tolerance must be positive, got {tol}"
        )));
    }

    let mut dist = Matrix::zeros(s, s);
    for i in 0..s {
        for j in (i + 1)..s {
            let d = metric.ground_metric(&points[i], &points[j])?;
            dist.set(i, j, d);
            dist.set(j, i, d);
        }
    }

    let mut oriented_pairs = Vec::new();
    let mut residuals = Vec::new();
    let mut uncertain_pairs = Vec::new();
    let two = T::cast(2.0);
    for x in 0..s {
        for y in 0..s {
            // best (smallest) additivity residual over the plan pairs
            let mut best = T::infinity();
            for &(w, z) in &plan_pairs {
                let through = dist.at(w, x) + dist.at(x, y) + dist.at(y, z);
                let r = (through - dist.at(w, z)).abs();
                best = best.min(r);
            }
            if best <= tol {
                oriented_pairs.push((x, y));
                residuals.push(best);
            } else if best <= two * tol {
                uncertain_pairs.push((x, y));
            }
        }
    }

    Ok(RayGraph {
        points,
        plan_pairs,
        oriented_pairs,
        residuals,
        uncertain_pairs,
        tol,
        dist,
    })
}

/// Report of the non-branching diagnostic.
#[derive(Clone, Debug, Serialize)]
pub struct NonBranchingReport<T> {
    pub pass: bool,
    /// Triples `(x, u, v)` where the ray partners `u, v` of `x` fail to be
    /// colinear through `x`, with the best betweenness residual.
    pub violations: Vec<(usize, usize, usize, T)>,
    pub points_tested: usize,
}

/// Equivalence diagnostic for the ray relation restricted to the interior
/// transport set.
#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub pass: bool,
    /// Failed transitivity witnesses `(x, y, z)`: `x ~ y` and `y ~ z` but
    /// not `x ~ z`.
    pub transitivity_failures: Vec<(usize, usize, usize)>,
}

impl<T: Scalar> RayGraph<T> {
    pub fn points(&self) -> &[GroundPoint<T>] {
        &self.points
    }

    pub fn plan_pairs(&self) -> &[(usize, usize)] {
        &self.plan_pairs
    }

    pub fn oriented_pairs(&self) -> &[(usize, usize)] {
        &self.oriented_pairs
    }

    pub fn residuals(&self) -> &[T] {
        &self.residuals
    }

    pub fn uncertain_pairs(&self) -> &[(usize, usize)] {
        &self.uncertain_pairs
    }

    pub fn tol(&self) -> T {
        self.tol
    }

    fn has_pair(&self, x: usize, y: usize) -> bool {
        self.oriented_pairs.binary_search(&(x, y)).is_ok()
    }

    /// Strictly outgoing partners of `x` (excluding `x` itself).
    fn outgoing(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.oriented_pairs
            .iter()
            .filter(move |&&(a, b)| a == x && b != x)
            .map(|&(_, b)| b)
    }

    /// Strictly incoming partners of `x`.
    fn incoming(&self, x: usize) -> impl Iterator<Item = usize> + '_ {
        self.oriented_pairs
            .iter()
            .filter(move |&&(a, b)| b == x && a != x)
            .map(|&(a, _)| a)
    }

    /// The transport sets: `T_e` collects points with any nontrivial ray
    /// relation, `T` those with both a nontrivial outgoing and a nontrivial
    /// incoming ray. Always `T` is a subset of `T_e`.
    pub fn transport_sets(&self) -> (Vec<usize>, Vec<usize>) {
        let s = self.points.len();
        let mut te = Vec::new();
        let mut t = Vec::new();
        for x in 0..s {
            let has_out = self.outgoing(x).next().is_some();
            let has_in = self.incoming(x).next().is_some();
            if has_out || has_in {
                te.push(x);
            }
            if has_out && has_in {
                t.push(x);
            }
        }
        (te, t)
    }

    /// Initial points (no strictly incoming ray) and final points (no
    /// strictly outgoing ray), over the whole point set; for a degenerate
    /// (diagonal) plan every point is both.
    pub fn endpoints(&self) -> (Vec<usize>, Vec<usize>) {
        let s = self.points.len();
        let mut initial = Vec::new();
        let mut final_pts = Vec::new();
        for x in 0..s {
            if self.incoming(x).next().is_none() {
                initial.push(x);
            }
            if self.outgoing(x).next().is_none() {
                final_pts.push(x);
            }
        }
        (initial, final_pts)
    }

    /// Non-branching check: at every point of the interior transport set,
    /// all ray partners must be mutually colinear through that point. A
    /// triple is colinear when some ordering of it makes the metric
    /// additive within the graph tolerance.
    pub fn check_non_branching(&self) -> NonBranchingReport<T> {
        let (_, t_set) = self.transport_sets();
        let mut violations = Vec::new();
        for &x in &t_set {
            let mut partners: Vec<usize> = self.outgoing(x).chain(self.incoming(x)).collect();
            partners.sort_unstable();
            partners.dedup();
            for (idx, &u) in partners.iter().enumerate() {
                for &v in &partners[idx + 1..] {
                    if u == v {
                        continue;
                    }
                    let r = self.collinearity_residual(u, x, v);
                    if r > self.tol {
                        violations.push((x, u, v, r));
                    }
                }
            }
        }
        NonBranchingReport {
            pass: violations.is_empty(),
            violations,
            points_tested: t_set.len(),
        }
    }

    /// Best additivity residual over the three orderings of `{a, b, c}`
    /// (each candidate middle point).
    fn collinearity_residual(&self, a: usize, b: usize, c: usize) -> T {
        let d = &self.dist;
        let r1 = (d.at(a, b) + d.at(b, c) - d.at(a, c)).abs();
        let r2 = (d.at(b, a) + d.at(a, c) - d.at(b, c)).abs();
        let r3 = (d.at(b, c) + d.at(c, a) - d.at(b, a)).abs();
        r1.min(r2).min(r3)
    }

    /// Checks that the symmetrized relation `R = G union G^{-1}` restricted
    /// to the interior transport set is an equivalence relation, by explicit
    /// closure. Symmetry holds by construction; transitivity failures are
    /// reported.
    pub fn check_ray_equivalence(&self) -> EquivalenceReport {
        let (_, t_set) = self.transport_sets();
        let related = |x: usize, y: usize| x == y || self.has_pair(x, y) || self.has_pair(y, x);
        let mut failures = Vec::new();
        for &x in &t_set {
            for &y in &t_set {
                if !related(x, y) {
                    continue;
                }
                for &z in &t_set {
                    if related(y, z) && !related(x, z) {
                        failures.push((x, y, z));
                    }
                }
            }
        }
        EquivalenceReport {
            pass: failures.is_empty(),
            transitivity_failures: failures,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::DyadicPath;
    use crate::transport::{build_metric_matrix, solve_exact, DiscreteMeasure};

    fn vecs(points: &[&[f64]]) -> Vec<GroundPoint<f64>> {
        points
            .iter()
            .map(|p| GroundPoint::Vector(p.to_vec()))
            .collect()
    }

    fn l2_metric() -> CostSpec<f64> {
        CostSpec::LpSquared { p: 2.0 }
    }

    #[test]
    fn degenerate_pair_is_accepted() {
        // the pair (w, w) sits on the ray of any (w, z)
        let pts = vecs(&[&[0.0], &[1.0]]);
        let g = build_transport_rays(pts, vec![(0, 1)], &l2_metric(), 1e-9).unwrap();
        assert!(g.has_pair(0, 0));
        assert!(g.has_pair(1, 1));
        assert!(g.has_pair(0, 1));
    }

    #[test]
    fn one_dimensional_shift_accepts_aligned_pairs() {
        let pts = vecs(&[&[0.0], &[0.25], &[0.5], &[1.0]]);
        let g = build_transport_rays(pts, vec![(0, 3)], &l2_metric(), 1e-9).unwrap();
        // every order-respecting pair along [0, 1] is accepted
        for x in 0..4 {
            for y in x..4 {
                assert!(g.has_pair(x, y), "pair ({x}, {y}) missing");
            }
        }
        // reversed pairs are not oriented rays
        assert!(!g.has_pair(3, 0));

        let (te, t) = g.transport_sets();
        assert_eq!(te, vec![0, 1, 2, 3]);
        assert_eq!(t, vec![1, 2]); // interior points only
        let (initial, final_pts) = g.endpoints();
        assert_eq!(initial, vec![0]);
        assert_eq!(final_pts, vec![3]);
    }

    #[test]
    fn off_segment_point_is_rejected_for_strictly_convex_norm() {
        let pts = vecs(&[&[0.0, 0.0], &[2.0, 0.0], &[1.0, 0.5]]);
        let g = build_transport_rays(pts, vec![(0, 1)], &l2_metric(), 1e-9).unwrap();
        assert!(!g.has_pair(0, 2));
        assert!(!g.has_pair(2, 1));
        assert!(g.has_pair(0, 1));
    }

    #[test]
    fn identity_coupling_has_empty_transport_set() {
        let pts = vecs(&[&[0.0], &[1.0], &[2.0]]);
        let g = build_transport_rays(pts, vec![(0, 0), (1, 1), (2, 2)], &l2_metric(), 1e-9)
            .unwrap();
        let (te, t) = g.transport_sets();
        assert!(te.is_empty());
        assert!(t.is_empty());
        // degenerate: every point is both initial and final
        let (initial, final_pts) = g.endpoints();
        assert_eq!(initial, vec![0, 1, 2]);
        assert_eq!(final_pts, vec![0, 1, 2]);
    }

    #[test]
    fn two_parallel_rays_have_two_endpoints_each() {
        let pts = vecs(&[
            &[0.0, 0.0],
            &[1.0, 0.0],
            &[2.0, 0.0],
            &[0.0, 5.0],
            &[1.0, 5.0],
            &[2.0, 5.0],
        ]);
        let g = build_transport_rays(pts, vec![(0, 2), (3, 5)], &l2_metric(), 1e-9).unwrap();
        let (initial, final_pts) = g.endpoints();
        assert_eq!(initial, vec![0, 3]);
        assert_eq!(final_pts, vec![2, 5]);
        let report = g.check_non_branching();
        assert!(report.pass);
        assert!(g.check_ray_equivalence().pass);
    }

    #[test]
    fn rays_from_an_exact_plan_do_not_branch() {
        // strictly convex (euclidean) metric cost in R^2, midpoints adjoined
        let src = vec![vec![0.0, 0.0], vec![0.0, 2.0]];
        let dst = vec![vec![3.0, 0.5], vec![3.0, 2.5]];
        let mu0 = DiscreteMeasure::uniform_vectors(src.clone()).unwrap();
        let mu1 = DiscreteMeasure::uniform_vectors(dst.clone()).unwrap();
        let metric = build_metric_matrix(&mu0, &mu1, &l2_metric()).unwrap();
        let sol = solve_exact(&mu0, &mu1, &metric).unwrap();

        let mut points: Vec<GroundPoint<f64>> = Vec::new();
        let mut pairs = Vec::new();
        for (i, j) in sol.plan.support() {
            let a = &src[i];
            let b = &dst[j];
            let mid = vec![(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
            let base = points.len();
            points.push(GroundPoint::Vector(a.clone()));
            points.push(GroundPoint::Vector(b.clone()));
            points.push(GroundPoint::Vector(mid));
            pairs.push((base, base + 1));
        }
        let diam = 5.0;
        let g = build_transport_rays(points, pairs, &l2_metric(), 1e-8 * diam).unwrap();
        let report = g.check_non_branching();
        assert!(report.pass, "violations: {:?}", report.violations);
        assert!(g.check_ray_equivalence().pass);
    }

    #[test]
    fn linf_branching_geodesics_are_flagged() {
        // sup-norm geodesics from (0,0) to (2,0) pass through the whole
        // segment {1} x [-1, 1]; a bent route and the straight route share
        // the initial segment, which branching detection must flag.
        let pts = vecs(&[
            &[0.0, 0.0],
            &[0.5, 0.0],
            &[1.0, 0.0],
            &[1.0, 0.5],
            &[2.0, 0.0],
        ]);
        let g = build_transport_rays(pts, vec![(0, 4)], &CostSpec::LinfSquared, 1e-9).unwrap();
        // both routes are additive for the sup metric
        assert!(g.has_pair(1, 2));
        assert!(g.has_pair(1, 3));
        let report = g.check_non_branching();
        assert!(!report.pass, "branching must be flagged");
        assert!(report
            .violations
            .iter()
            .any(|&(x, u, v, _)| x == 1 && ((u, v) == (2, 3) || (u, v) == (3, 2))));
    }

    #[test]
    fn single_ray_graph_passes() {
        let pts = vecs(&[&[0.0], &[1.0]]);
        let g = build_transport_rays(pts, vec![(0, 1)], &l2_metric(), 1e-9).unwrap();
        assert!(g.check_non_branching().pass);
    }

    #[test]
    fn sobolev_metric_rays_with_elevated_tolerance() {
        use crate::norms::{QuadratureSpec, SobolevParams};
        // paths 0, r/2, r on the segment spanned by the ramp r: colinear
        let ramp = DyadicPath::<f64>::ramp(3);
        let pts = vec![
            GroundPoint::Path(DyadicPath::zero(3)),
            GroundPoint::Path(ramp.scale(0.5)),
            GroundPoint::Path(ramp.clone()),
            GroundPoint::Path(tri()),
        ];
        let metric = CostSpec::SobolevP {
            p: 1.0,
            params: SobolevParams::new(4, 0.3).unwrap(),
            quad: QuadratureSpec::default(),
        };
        let g = build_transport_rays(pts, vec![(0, 2)], &metric, 1e-6).unwrap();
        assert!(g.has_pair(0, 1));
        assert!(g.has_pair(1, 2));
        // the triangle path is off the segment
        assert!(!g.has_pair(0, 3));
        // p != 1 is rejected
        let squared = CostSpec::SobolevP {
            p: 2.0,
            params: SobolevParams::new(4, 0.3).unwrap(),
            quad: QuadratureSpec::default(),
        };
        assert!(build_transport_rays(
            vec![GroundPoint::Vector(vec![0.0])],
            vec![],
            &squared,
            1e-6
        )
        .is_err());
    }

    fn tri() -> DyadicPath<f64> {
        DyadicPath::new(3, vec![0.0, 0.5, 1.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn gamma_is_always_contained() {
        let pts = vecs(&[&[0.0, 1.0], &[2.0, 0.5], &[1.0, 1.0]]);
        let g = build_transport_rays(pts, vec![(0, 1), (2, 2)], &l2_metric(), 1e-9).unwrap();
        assert!(g.has_pair(0, 1));
        assert!(g.has_pair(2, 2));
    }
}
