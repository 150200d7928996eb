//! Hit-and-run moments on bodies with known uniform moments.

use lclab::distributions::{hit_and_run_chain, sample, DistributionSpec, HitAndRunConfig, Polytope};
use lclab::isotropy::estimate_moments;

const TOL: f64 = 0.01;

#[test]
fn cube_moments() {
    let cube = Polytope::cube(3, -1.0, 1.0).unwrap();
    let batch = sample(&DistributionSpec::polytope(cube), 100_000, 5).unwrap();
    let s = estimate_moments(&batch).unwrap();
    for i in 0..3 {
        assert!(s.mean[i].abs() < TOL, "{:?}", s.mean);
        for j in 0..3 {
            let want = if i == j { 1.0 / 3.0 } else { 0.0 };
            assert!((s.covariance[i][j] - want).abs() < TOL, "{:?}", s.covariance);
        }
    }
}

#[test]
fn simplex_moments() {
    // uniform on {x ≥ 0, Σx ≤ 1} in R³: Dirichlet(1,1,1,1) marginals
    let n: f64 = 3.0;
    let simplex = Polytope::standard_simplex(3).unwrap();
    let batch = sample(&DistributionSpec::polytope(simplex), 100_000, 6).unwrap();
    let s = estimate_moments(&batch).unwrap();
    let var = n / ((n + 1.0).powi(2) * (n + 2.0));
    let cov = -1.0 / ((n + 1.0).powi(2) * (n + 2.0));
    for i in 0..3 {
        assert!((s.mean[i] - 0.25).abs() < TOL / 2.0);
        for j in 0..3 {
            let want = if i == j { var } else { cov };
            assert!((s.covariance[i][j] - want).abs() < TOL / 4.0, "{:?}", s.covariance);
        }
    }
}

#[test]
fn single_chain_reports_diagnostics() {
    let cube = Polytope::cube(2, 0.0, 1.0).unwrap();
    let cfg = HitAndRunConfig::with_defaults(2, 1000);
    let out = hit_and_run_chain(&cube, &[0.5, 0.5], cfg, 9).unwrap();
    assert_eq!(out.batch.count(), 1000);
    assert_eq!(out.diagnostics.iterations as usize, cfg.burn_in + 1000 * cfg.thinning);
    assert!(out.batch.rows().all(|r| r.iter().all(|&x| x > 0.0 && x < 1.0)));
    assert!(hit_and_run_chain(&cube, &[2.0, 0.5], cfg, 9).is_err());
}
