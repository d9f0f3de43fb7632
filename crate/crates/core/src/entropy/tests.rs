use super::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type G64 = GridSpec<f64>;

fn grid1d(m: usize, r: f64) -> G64 {
    GridSpec::new(1, r, m).unwrap()
}

#[test]
fn grid_validation_and_indexing() {
    assert!(GridSpec::<f64>::new(4, 1.0, 10).is_err());
    assert!(GridSpec::<f64>::new(1, 0.0, 10).is_err());
    assert!(GridSpec::<f64>::new(1, 1.0, 1).is_err());
    let g = grid1d(4, 2.0); // cells of width 1 over [-2, 2]
    assert_eq!(g.cell_index(&[-2.0]).unwrap(), 0);
    assert_eq!(g.cell_index(&[-1.0]).unwrap(), 1); // half-open left edges
    assert_eq!(g.cell_index(&[1.999]).unwrap(), 3);
    assert_eq!(g.cell_index(&[2.0]).unwrap(), 3); // last cell closed
    assert!(matches!(
        g.cell_index(&[2.1]),
        Err(Error::PointOutsideGrid { .. })
    ));
    assert_eq!(g.cell_center(1), vec![-0.5]);
}

#[test]
fn reference_is_exactly_symmetric() {
    let gref = gaussian_reference(grid1d(11, 3.0));
    let m = gref.masses();
    for i in 0..11 {
        assert_eq!(m[i], m[10 - i], "cell {i} vs mirror");
    }
    let g2 = gaussian_reference(GridSpec::new(2, 3.0, 6).unwrap());
    for i in 0..6 {
        for j in 0..6 {
            assert_eq!(g2.masses()[i * 6 + j], g2.masses()[(5 - i) * 6 + (5 - j)]);
        }
    }
}

#[test]
fn reference_truncation_is_negligible_at_eight_sigmas() {
    let gref = gaussian_reference(grid1d(100, 8.0));
    // both tails together: 2 Phi(-8) ~ 1.24e-15
    assert!(gref.truncation_mass() > 0.0);
    assert!(gref.truncation_mass() < 1.3e-15, "{}", gref.truncation_mass());
}

#[test]
fn reference_product_structure() {
    let g1 = gaussian_reference(grid1d(8, 3.0));
    let g2 = gaussian_reference(GridSpec::new(2, 3.0, 8).unwrap());
    // d=2 cell mass equals the product of d=1 masses (up to the global
    // renormalizations, which differ by the truncation factor)
    let scale = g2.masses()[0] / (g1.masses()[0] * g1.masses()[0]);
    for i in 0..8 {
        for j in 0..8 {
            let prod = g1.masses()[i] * g1.masses()[j] * scale;
            let got = g2.masses()[i * 8 + j];
            assert!((got - prod).abs() <= 1e-15 * (1.0 + got.abs()));
        }
    }
}

#[test]
fn relative_entropy_basics() {
    let grid = grid1d(50, 4.0);
    let gref = gaussian_reference(grid);
    let q = gref.histogram();
    assert_eq!(relative_entropy(&q, &q).unwrap(), 0.0);

    // unit mass on one cell: ln(1/q_i)
    let mut masses = vec![0.0; 50];
    masses[10] = 1.0;
    let p = Histogram::new(grid, masses).unwrap();
    let expect = (1.0f64 / q.masses()[10]).ln();
    assert!((relative_entropy(&p, &q).unwrap() - expect).abs() < 1e-12);

    // +inf when p charges a q-null cell
    let mut qm = vec![0.0; 50];
    qm[0] = 1.0;
    let q0 = Histogram::new(grid, qm).unwrap();
    assert!(relative_entropy(&p, &q0).unwrap().is_infinite());

    // grid mismatch rejected
    let other = Histogram::gaussian(grid1d(40, 4.0), &[0.0]).unwrap();
    assert!(relative_entropy(&p, &other).is_err());
}

#[test]
fn kl_of_shifted_gaussian_matches_closed_form() {
    // KL(N(1,1) || N(0,1)) = 1/2
    let grid = grid1d(400, 8.0);
    let gref = gaussian_reference(grid);
    let p = Histogram::gaussian(grid, &[1.0]).unwrap();
    let kl = relative_entropy_to_reference(&p, &gref).unwrap();
    assert!((kl - 0.5).abs() < 0.01, "kl = {kl}");
}

#[test]
fn gibbs_nonnegativity_on_random_histograms() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let grid = grid1d(30, 3.0);
    for _ in 0..50 {
        let masses: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
        let p = Histogram::normalized(grid, masses.clone()).unwrap();
        let q = Histogram::normalized(
            grid,
            (0..30).map(|_| rng.random::<f64>() + 1e-3).collect(),
        )
        .unwrap();
        assert!(relative_entropy(&p, &q).unwrap() >= 0.0);
        assert_eq!(relative_entropy(&p, &p).unwrap(), 0.0);
    }
}

#[test]
fn decomposition_residual_shrinks_with_refinement() {
    let mut last = f64::INFINITY;
    for m in [100usize, 200, 400] {
        let grid = grid1d(m, 8.0);
        let gref = gaussian_reference(grid);
        let p = Histogram::gaussian(grid, &[0.5]).unwrap();
        let check = entropy_decomposition_check(&p, &gref).unwrap();
        assert!(
            check.residual.abs() < last,
            "residual must shrink: {} vs {}",
            check.residual,
            last
        );
        last = check.residual.abs();
    }
    assert!(last <= 1e-3, "residual at m=400: {last}");
}

#[test]
fn decomposition_of_the_reference_itself_vanishes() {
    let grid = grid1d(400, 8.0);
    let gref = gaussian_reference(grid);
    let check = entropy_decomposition_check(&gref.histogram(), &gref).unwrap();
    assert_eq!(check.ent_gaussian, 0.0);
    assert!(check.residual.abs() < 1e-3, "residual {}", check.residual);
}

#[test]
fn decomposition_residual_is_translation_insensitive() {
    let grid = grid1d(400, 8.0);
    let gref = gaussian_reference(grid);
    let residuals: Vec<f64> = [0.0, 0.5, 1.0]
        .iter()
        .map(|&mu| {
            let p = Histogram::gaussian(grid, &[mu]).unwrap();
            entropy_decomposition_check(&p, &gref).unwrap().residual
        })
        .collect();
    for r in &residuals {
        assert!((r - residuals[0]).abs() <= 1e-3, "residuals {residuals:?}");
    }
}

#[test]
fn entropy_never_decreases_under_refinement() {
    // coarsening is a deterministic pushforward, so KL can only shrink;
    // equivalently refinement never decreases it
    let coarse_grid = grid1d(50, 6.0);
    let fine_grid = grid1d(100, 6.0);
    let coarse = Histogram::gaussian(coarse_grid, &[0.7]).unwrap();
    let fine = Histogram::gaussian(fine_grid, &[0.7]).unwrap();
    let e_coarse = relative_entropy_to_reference(&coarse, &gaussian_reference(coarse_grid)).unwrap();
    let e_fine = relative_entropy_to_reference(&fine, &gaussian_reference(fine_grid)).unwrap();
    assert!(e_fine >= e_coarse - 1e-12);
}

fn solve_between(rho0: &Histogram<f64>, rho1: &Histogram<f64>) -> ExactSolution<f64> {
    let mu0 = rho0.to_measure().unwrap();
    let mu1 = rho1.to_measure().unwrap();
    let costs = build_cost_matrix(&mu0, &mu1, &CostSpec::LpSquared { p: 2.0 }).unwrap();
    solve_exact(&mu0, &mu1, &costs).unwrap()
}

#[test]
fn interpolation_reproduces_binned_marginals() {
    let grid = grid1d(60, 6.0);
    let rho0 = Histogram::gaussian(grid, &[-1.0]).unwrap();
    let rho1 = Histogram::gaussian(grid, &[1.0]).unwrap();
    let sol = solve_between(&rho0, &rho1);
    let at0 = displacement_interpolate(&sol.plan, 0.0, grid).unwrap();
    let at1 = displacement_interpolate(&sol.plan, 1.0, grid).unwrap();
    for i in 0..grid.num_cells() {
        assert!((at0.masses()[i] - rho0.masses()[i]).abs() < 1e-12);
        assert!((at1.masses()[i] - rho1.masses()[i]).abs() < 1e-12);
    }
}

#[test]
fn interpolation_conserves_mass_at_every_time() {
    let grid = grid1d(60, 6.0);
    let rho0 = Histogram::gaussian(grid, &[-1.0]).unwrap();
    let rho1 = Histogram::gaussian(grid, &[1.0]).unwrap();
    let sol = solve_between(&rho0, &rho1);
    for t in [0.15, 0.5, 0.85] {
        let rt = displacement_interpolate(&sol.plan, t, grid).unwrap();
        let total: f64 = rt.masses().iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}

#[test]
fn interpolation_outside_box_is_an_error() {
    // supports sit inside the box but the target mean pulls points outside
    let grid = grid1d(60, 6.0);
    let small = grid1d(10, 1.0);
    let rho0 = Histogram::gaussian(grid, &[-1.0]).unwrap();
    let rho1 = Histogram::gaussian(grid, &[1.0]).unwrap();
    let sol = solve_between(&rho0, &rho1);
    assert!(matches!(
        displacement_interpolate(&sol.plan, 0.5, small),
        Err(Error::PointOutsideGrid { .. })
    ));
}

#[test]
fn interpolation_has_constant_speed() {
    let grid = grid1d(50, 6.0);
    let rho0 = Histogram::gaussian(grid, &[-1.0]).unwrap();
    let rho1 = Histogram::gaussian(grid, &[1.0]).unwrap();
    let sol = solve_between(&rho0, &rho1);
    let w01 = sol.value.sqrt();
    let times = [0.0, 0.25, 0.5, 0.75, 1.0];
    let snaps: Vec<Histogram<f64>> = times
        .iter()
        .map(|&t| displacement_interpolate(&sol.plan, t, grid).unwrap())
        .collect();
    // moving a support point within its cell changes W2 by at most the
    // half-diagonal, twice (both snapshots binned)
    let tol = grid.cell_width() * 2.0;
    for (i, &s) in times.iter().enumerate() {
        for (j, &t) in times.iter().enumerate().skip(i + 1) {
            let w = solve_between(&snaps[i], &snaps[j]).value.sqrt();
            let expect = (t - s) * w01;
            assert!(
                (w - expect).abs() <= tol,
                "W(rho_{s}, rho_{t}) = {w}, expected {expect} within {tol}"
            );
        }
    }
}

#[test]
fn gaussian_equality_case_has_vanishing_deficit() {
    let grid = grid1d(400, 8.0);
    let rho0 = Histogram::gaussian(grid, &[-1.0]).unwrap();
    let rho1 = Histogram::gaussian(grid, &[1.0]).unwrap();
    let ts: Vec<f64> = (1..10).map(|i| i as f64 / 10.0).collect();
    let report =
        kconvexity_deficit(&rho0, &rho1, &CostSpec::LpSquared { p: 2.0 }, 1.0, &ts).unwrap();
    assert!((report.w2_squared - 4.0).abs() < 0.05, "W2^2 = {}", report.w2_squared);
    let tol = 5.0 * grid.cell_width();
    for point in &report.per_t {
        assert!(
            point.deficit.abs() <= tol,
            "t = {}: deficit {} beyond {tol}",
            point.t,
            point.deficit
        );
    }
    assert!(!report.any_infinite);
}

#[test]
fn deficits_are_monotone_in_k() {
    let grid = grid1d(80, 6.0);
    let rho0 = Histogram::gaussian(grid, &[-0.8]).unwrap();
    let rho1 = Histogram::gaussian(grid, &[0.9]).unwrap();
    let ts = [0.25, 0.5, 0.75];
    let at_k0 =
        kconvexity_deficit(&rho0, &rho1, &CostSpec::LpSquared { p: 2.0 }, 0.0, &ts).unwrap();
    let at_k1 =
        kconvexity_deficit(&rho0, &rho1, &CostSpec::LpSquared { p: 2.0 }, 1.0, &ts).unwrap();
    for (a, b) in at_k0.per_t.iter().zip(&at_k1.per_t) {
        assert!(a.deficit >= b.deficit - 1e-12);
    }
}

#[test]
fn deficit_rejects_wrong_inputs() {
    let grid = grid1d(20, 3.0);
    let rho = Histogram::gaussian(grid, &[0.0]).unwrap();
    let other = Histogram::gaussian(grid1d(21, 3.0), &[0.0]).unwrap();
    assert!(kconvexity_deficit(&rho, &other, &CostSpec::LpSquared { p: 2.0 }, 1.0, &[0.5]).is_err());
    assert!(kconvexity_deficit(&rho, &rho, &CostSpec::LpSquared { p: 2.0 }, -1.0, &[0.5]).is_err());
    let params = crate::norms::SobolevParams::new(4, 0.3).unwrap();
    let sob = CostSpec::SobolevP {
        p: 2.0,
        params,
        quad: crate::norms::QuadratureSpec::default(),
    };
    assert!(kconvexity_deficit(&rho, &rho, &sob, 1.0, &[0.5]).is_err());
}

fn random_measure_2d(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure<f64> {
    let pts: Vec<Vec<f64>> = (0..n)
        .map(|_| vec![rng.random::<f64>() * 3.0 - 1.5, rng.random::<f64>() * 3.0 - 1.5])
        .collect();
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.1).collect();
    DiscreteMeasure::from_vectors(pts, w).unwrap()
}

#[test]
fn p_limit_in_one_dimension_is_constant() {
    // every l^p norm coincides with |.| in d=1, so the sweep is flat
    let mu0 = DiscreteMeasure::uniform_vectors(vec![vec![-1.0f64], vec![0.2], vec![1.4]]).unwrap();
    let mu1 = DiscreteMeasure::uniform_vectors(vec![vec![-0.5], vec![0.6], vec![2.0]]).unwrap();
    let report = p_limit_experiment(&mu0, &mu1, &[2.0, 4.0, 8.0]).unwrap();
    for row in &report.rows {
        assert!((row.w2_squared - report.rows[0].w2_squared).abs() < 1e-12);
        if let Some(delta) = row.plan_delta_prev {
            assert!(delta < 1e-12);
        }
    }
    assert!(report.monotone && report.dominates_inf);
    assert!(report.final_plan_inf_monotone.pass);
}

#[test]
fn p_limit_on_random_planar_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..5 {
        let mu0 = random_measure_2d(&mut rng, 6);
        let mu1 = random_measure_2d(&mut rng, 6);
        let report = p_limit_experiment(&mu0, &mu1, &[2.0, 4.0, 8.0, 16.0, 32.0]).unwrap();
        assert!(report.monotone, "W^2 not monotone: {:?}", report.rows);
        assert!(report.dominates_inf);
        assert!(report.final_plan_inf_monotone.pass);
    }
}

#[test]
fn p_limit_validates_inputs() {
    let mu = DiscreteMeasure::uniform_vectors(vec![vec![0.0], vec![1.0]]).unwrap();
    assert!(p_limit_experiment(&mu, &mu, &[]).is_err());
    assert!(p_limit_experiment(&mu, &mu, &[1.5, 2.0]).is_err());
    assert!(p_limit_experiment(&mu, &mu, &[4.0, 2.0]).is_err());
}

#[test]
fn projection_experiment_on_brownian_ensembles() {
    let paths0: Vec<DyadicPath<f64>> = (0..8).map(|s| sample_brownian(6, s)).collect();
    let paths1: Vec<DyadicPath<f64>> = (0..8).map(|s| sample_brownian(6, 100 + s)).collect();
    let ens0 = DiscreteMeasure::uniform_paths(paths0).unwrap();
    let ens1 = DiscreteMeasure::uniform_paths(paths1).unwrap();
    let report = projection_experiment(&ens0, &ens1, &[2, 4, 6]).unwrap();
    assert!(report.contraction_ok);
    assert!(report.nondecreasing_ok);
    // the last level is the top level, so the gap closes exactly
    assert!(report.final_gap.abs() < 1e-12);
}

#[test]
fn projection_experiment_identity_at_top_level() {
    let paths: Vec<DyadicPath<f64>> = (0..4).map(|s| sample_brownian(4, 40 + s)).collect();
    let ens0 = DiscreteMeasure::uniform_paths(paths.clone()).unwrap();
    let ens1 = DiscreteMeasure::uniform_paths(
        (0..4).map(|s| sample_brownian(4, 80 + s)).collect(),
    )
    .unwrap();
    let report = projection_experiment(&ens0, &ens1, &[4]).unwrap();
    assert_eq!(report.rows[0].w2, report.w2_top);
}

#[test]
fn projection_experiment_single_pair() {
    let w0 = sample_brownian::<f64>(5, 7);
    let w1 = sample_brownian::<f64>(5, 8);
    let ens0 = DiscreteMeasure::uniform_paths(vec![w0.clone()]).unwrap();
    let ens1 = DiscreteMeasure::uniform_paths(vec![w1.clone()]).unwrap();
    let report = projection_experiment(&ens0, &ens1, &[3, 5]).unwrap();
    let direct = w0.project(3).sub(&w1.project(3)).sup_norm();
    assert!((report.rows[0].w2 - direct).abs() < 1e-12);
}

#[test]
fn conjecture_search_smoke() {
    let params = SobolevParams::new(4, 0.3).unwrap();
    let quad = QuadratureSpec::new(1, 4).unwrap();
    let report = projection_norm_conjecture_search(&params, &quad, 5, 20, 9).unwrap();
    assert_eq!(report.per_level.len(), 3); // levels 2, 3, 4
    assert!(report.max_ratio > 0.0);
    assert!(report.max_sup_ratio <= 1.0 + 1e-15);
    assert!(report.witness.level() == 5);
    let counted: u64 = report.ratio_bins.iter().map(|&(_, c)| c).sum();
    assert_eq!(counted, 60);
}

#[test]
fn conjecture_ratio_is_one_for_linear_paths() {
    // pi_n of the ramp is the ramp
    let ramp = DyadicPath::<f64>::ramp(6);
    let params = SobolevParams::new(4, 0.3).unwrap();
    let quad = QuadratureSpec::default();
    let top = sobolev_norm(&ramp, &params, &quad);
    let proj = sobolev_norm(&ramp.project(3), &params, &quad);
    assert!(((proj - top) / top).abs() < 1e-9);
}

/// N(mean, 1) truncated to [-window, window] and renormalized; its density
/// against the gaussian reference stays bounded on the whole grid.
fn truncated_gaussian(grid: GridSpec<f64>, mean: f64, window: f64) -> Histogram<f64> {
    let full = Histogram::gaussian(grid, &[mean]).unwrap();
    let masses: Vec<f64> = full
        .masses()
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let x = grid.cell_center(i)[0];
            if x.abs() <= window {
                m
            } else {
                0.0
            }
        })
        .collect();
    Histogram::normalized(grid, masses).unwrap()
}

#[test]
fn density_estimate_identity_and_shift() {
    let grid = grid1d(64, 6.0);
    // shifted truncated-Gaussian pair: density vs the reference peaks at
    // exp(0.1 * 2) / Z ~ 1.28, inside the declared bound 1.5
    let rho0 = truncated_gaussian(grid, -0.1, 2.0);
    let rho1 = truncated_gaussian(grid, 0.1, 2.0);
    let ts = [0.0, 0.3, 0.6, 1.0];
    // identity case: T = Id, the bound is just density <= M
    let id = displacement_density_estimate(&rho0, &rho0, 1.5, 2.0, &ts).unwrap();
    assert!(id.pass, "identity case margin {}", id.min_margin);
    let shifted = displacement_density_estimate(&rho0, &rho1, 1.5, 2.0, &ts).unwrap();
    assert!(shifted.pass, "shifted case margin {}", shifted.min_margin);
    assert!(shifted.blocks_tested > 0);
}

#[test]
fn density_estimate_rejects_understated_bound() {
    let grid = grid1d(64, 6.0);
    let rho0 = Histogram::gaussian(grid, &[-1.2]).unwrap();
    let rho1 = Histogram::gaussian(grid, &[1.2]).unwrap();
    // an untruncated shifted gaussian has unbounded density in the tail
    match displacement_density_estimate(&rho0, &rho1, 1.05, 2.0, &[0.5]) {
        Err(Error::DensityBound { density, bound, .. }) => {
            assert!(density > bound);
        }
        other => panic!("expected density-bound rejection, got {other:?}"),
    }
}

#[test]
fn histogram_serde_round_trip() {
    let grid = grid1d(10, 2.0);
    let h = Histogram::gaussian(grid, &[0.3]).unwrap();
    let js = serde_json::to_string(&h).unwrap();
    let back: Histogram<f64> = serde_json::from_str(&js).unwrap();
    assert_eq!(h, back);
    // tampered masses fail validation
    let bad = js.replace("\"masses\":[", "\"masses\":[0.9,");
    assert!(serde_json::from_str::<Histogram<f64>>(&bad).is_err());
}
