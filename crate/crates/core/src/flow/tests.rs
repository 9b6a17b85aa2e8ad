use super::*;
use crate::models::{DavisSkodjeParams, LinearParams, ModelSpec};
use std::f64::consts::PI;

fn c(re: f64, im: f64) -> C<f64> {
    C::new(re, im)
}

fn real_state(v: &[f64]) -> Vec<C<f64>> {
    v.iter().map(|&x| c(x, 0.0)).collect()
}

fn ds(gamma: f64) -> ModelSpec<f64> {
    ModelSpec::davis_skodje(gamma).unwrap()
}

fn linear(eigs: &[f64]) -> ModelSpec<f64> {
    ModelSpec::linear(LinearParams::diagonal(eigs).unwrap())
}

fn tol() -> Tolerances<f64> {
    Tolerances::default()
}

#[test]
fn degenerate_path_returns_initial_state() {
    let z0 = real_state(&[1.0, 0.9]);
    let path = TimePath::new(vec![ComplexTimePoint::origin()], 8).unwrap();
    let traj = integrate_path(&ds(3.0), &z0, &path, &tol()).unwrap();
    assert_eq!(traj.len(), 1);
    assert_eq!(traj.states[0], z0);
}

#[test]
fn path_validation() {
    let p = ComplexTimePoint::new(1.0, 1.0);
    assert!(TimePath::new(vec![p], 4).is_err());
    assert!(TimePath::new(vec![ComplexTimePoint::origin(), p, p], 4).is_err());
    assert!(TimePath::new(vec![ComplexTimePoint::origin(), p], 0).is_err());
    assert!(TimePath::new(vec![ComplexTimePoint::origin(), ComplexTimePoint::new(f64::NAN, 0.0)], 2).is_err());
}

#[test]
fn ds_segment_matches_closed_form() {
    // c1 = 1 would put a pole at i*pi on this path; c1 = 0.5 keeps it clear
    let model = ds(3.0);
    let z0 = real_state(&[0.5, 0.9]);
    let coeffs = model.fit_coefficients(&z0).unwrap();
    let path = TimePath::line(ComplexTimePoint::imaginary(4.0), 40).unwrap();
    let traj = integrate_path(&model, &z0, &path, &tol()).unwrap();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let exact = model.closed_form_solution(&coeffs, t.to_complex()).unwrap();
        assert!(max_abs_diff(s, &exact) <= 1e-7, "at {t:?}");
    }
}

#[test]
fn ds_pole_on_ray_is_reported() {
    let model = ds(3.0);
    let z0 = real_state(&[1.0, 0.5]);
    let path = TimePath::line(ComplexTimePoint::imaginary(PI), 16).unwrap();
    match integrate_path(&model, &z0, &path, &tol()) {
        Err(Error::SingularityEncountered { re, im }) => {
            assert!(re.abs() < 1e-12);
            assert!((im - PI).abs() < 0.05, "stopped at {im}");
        }
        other => panic!("expected a singularity, got {other:?}"),
    }
}

#[test]
fn linear_ray_is_periodic() {
    let model = linear(&[-1.0]);
    let z0 = real_state(&[1.0]);
    let traj = integrate_imaginary_ray(&model, &z0, 2.0 * PI, 65, &tol()).unwrap();
    assert_eq!(traj.len(), 65);
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let exact = C::new(0.0, -t.im).exp();
        assert!((s[0] - exact).norm() <= 1e-9);
    }
    assert!((traj.last_state()[0] - c(1.0, 0.0)).norm() <= 1e-9);
}

#[test]
fn ray_spacing_is_exact() {
    let traj = integrate_imaginary_ray(&linear(&[-1.0]), &real_state(&[1.0]), 3.0, 7, &tol()).unwrap();
    for (j, t) in traj.times.iter().enumerate() {
        assert_eq!(t.re, 0.0);
        assert!((t.im - 0.5 * j as f64).abs() <= 1e-15);
    }
}

#[test]
fn ds_on_sim_ray_is_periodic() {
    let model = ds(3.0);
    let z0 = real_state(&[0.5, 0.5 / 1.5]);
    let traj = integrate_imaginary_ray(&model, &z0, 2.0 * PI, 129, &tol()).unwrap();
    assert!(max_abs_diff(traj.last_state(), &z0) <= 1e-7);
}

#[test]
fn tiny_ray_is_a_taylor_step() {
    let model = ds(3.0);
    let z0 = real_state(&[1.0, 0.9]);
    let traj = integrate_imaginary_ray(&model, &z0, 1e-6, 2, &tol()).unwrap();
    assert_eq!(traj.len(), 2);
    let f = model.eval_field(&z0).unwrap();
    let predicted: Vec<_> = z0.iter().zip(&f).map(|(&z, &v)| z + c(0.0, 1e-6) * v).collect();
    assert!(max_abs_diff(traj.last_state(), &predicted) <= 1e-11);
}

#[test]
fn ray_rejects_bad_arguments() {
    let model = linear(&[-1.0]);
    let z0 = real_state(&[1.0]);
    assert!(integrate_imaginary_ray(&model, &z0, 0.0, 4, &tol()).is_err());
    assert!(integrate_imaginary_ray(&model, &z0, 1.0, 1, &tol()).is_err());
    assert!(matches!(
        integrate_imaginary_ray(&ds(3.0), &real_state(&[-1.0, 0.0]), 1.0, 4, &tol()),
        Err(Error::SingularState { .. })
    ));
    assert!(integrate_imaginary_ray(&model, &real_state(&[1.0, 2.0]), 1.0, 4, &tol()).is_err());
}

#[test]
fn single_row_surface_matches_ray() {
    let model = ds(3.0);
    let z0 = real_state(&[0.5, 0.2]);
    let tau = 2.0 * PI;
    let grid = sample_surface(&model, &z0, (0.0, 0.0), (0.0, tau), (1, 64), &tol()).unwrap();
    let traj = integrate_imaginary_ray(&model, &z0, tau, 64, &tol()).unwrap();
    assert_eq!(grid.valid_count(), 64);
    for j in 0..64 {
        assert!(max_abs_diff(grid.value(0, j), &traj.states[j]) <= 1e-9);
    }
}

#[test]
fn one_by_one_surface_is_the_anchor() {
    let z0 = real_state(&[1.0, 0.5]);
    let grid = sample_surface(&ds(3.0), &z0, (0.0, 0.0), (0.0, 0.0), (1, 1), &tol()).unwrap();
    assert!(grid.is_valid(0, 0));
    assert_eq!(grid.value(0, 0), &z0[..]);
}

fn surface_error(gamma: f64, z0: &[f64], tol: &Tolerances<f64>) -> (f64, SurfaceGrid<f64>) {
    let model = ds(gamma);
    let z0 = real_state(z0);
    let coeffs = model.fit_coefficients(&z0).unwrap();
    let grid = sample_surface(&model, &z0, (-1.0, 1.0), (0.0, 4.0 * PI), (17, 129), tol).unwrap();
    let mut err = 0.0f64;
    for i in 0..17 {
        for j in 0..129 {
            if grid.is_valid(i, j) {
                let exact = model.closed_form_solution(&coeffs, grid.time(i, j).to_complex()).unwrap();
                err = err.max(max_abs_diff(grid.value(i, j), &exact));
            }
        }
    }
    (err, grid)
}

#[test]
fn surface_matches_closed_form() {
    for gamma in [3.0, 10.0] {
        let (err, grid) = surface_error(gamma, &[1.0, 0.5], &tol());
        assert!(err <= 1e-6, "gamma {gamma}: {err}");
        // the re = 0 row meets the pole at i*pi; the other rows pass it
        assert!(grid.valid_count() < 17 * 129);
        assert!(grid.valid_count() > 16 * 129);
    }
}

#[test]
fn off_sim_surfaces_match_to_relative_precision() {
    // at re t = -1 the fast mode is amplified by e^gamma, so compare relative to the state size
    for (gamma, z0) in [(3.0, [1.0, 0.9]), (10.0, [1.0, 0.9]), (10.0, [0.2, 0.2 / 1.2 + 0.4])] {
        let model = ds(gamma);
        let z0 = real_state(&z0);
        let coeffs = model.fit_coefficients(&z0).unwrap();
        let grid = sample_surface(&model, &z0, (-1.0, 1.0), (0.0, 4.0 * PI), (17, 129), &tol()).unwrap();
        for i in 0..17 {
            for j in 0..129 {
                if grid.is_valid(i, j) {
                    let exact = model.closed_form_solution(&coeffs, grid.time(i, j).to_complex()).unwrap();
                    let scale = 1.0 + exact.iter().map(|v| v.norm()).fold(0.0, f64::max);
                    assert!(max_abs_diff(grid.value(i, j), &exact) <= 1e-6 * scale);
                }
            }
        }
    }
}

#[test]
fn surface_mask_is_a_tail_beyond_the_pole() {
    let (_, grid) = surface_error(3.0, &[1.0, 0.5], &tol());
    let row = 8;
    assert_eq!(grid.re_coord(row), 0.0);
    let first_bad = (0..129).find(|&j| !grid.is_valid(row, j)).unwrap();
    assert!(grid.im_coord(first_bad) >= PI - 0.1 && grid.im_coord(first_bad) <= PI + 0.1);
    assert!((first_bad..129).all(|j| !grid.is_valid(row, j)));
    assert!(grid.value(row, first_bad)[0].re.is_nan());
}

#[test]
fn surface_needs_the_anchor() {
    let z0 = real_state(&[1.0, 0.5]);
    let r = sample_surface(&ds(3.0), &z0, (0.5, 1.0), (0.0, 1.0), (4, 4), &tol());
    assert_eq!(r.unwrap_err(), Error::AnchorOutsideGrid);
    let r = sample_surface(&ds(3.0), &z0, (0.0, 1.0), (-2.0, -1.0), (4, 4), &tol());
    assert_eq!(r.unwrap_err(), Error::AnchorOutsideGrid);
}

#[test]
fn surface_with_negative_imaginary_range() {
    let model = ds(3.0);
    let z0 = real_state(&[0.3, 0.1]);
    let coeffs = model.fit_coefficients(&z0).unwrap();
    let grid = sample_surface(&model, &z0, (-0.5, 0.5), (-3.0, 3.0), (5, 13), &tol()).unwrap();
    assert_eq!(grid.valid_count(), 65);
    for i in 0..5 {
        for j in 0..13 {
            let exact = model.closed_form_solution(&coeffs, grid.time(i, j).to_complex()).unwrap();
            assert!(max_abs_diff(grid.value(i, j), &exact) <= 1e-7);
        }
    }
}

#[test]
fn real_axis_stays_real() {
    let model = ds(10.0);
    let z0 = real_state(&[0.8, -0.2]);
    let t = tol();
    for end in [3.0, -0.4] {
        let path = TimePath::line(ComplexTimePoint::real(end), 32).unwrap();
        let traj = integrate_path(&model, &z0, &path, &t).unwrap();
        for s in &traj.states {
            assert!(s.iter().all(|v| v.im.abs() <= 10.0 * t.atol));
        }
    }
}

#[test]
fn path_concatenation() {
    let model = ds(3.0);
    let z0 = real_state(&[0.5, 0.9]);
    let t = tol();
    let t1 = ComplexTimePoint::new(0.3, 1.2);
    let t2 = ComplexTimePoint::new(0.6, 2.4);
    let direct = integrate_path(&model, &z0, &TimePath::line(t2, 1).unwrap(), &t).unwrap();
    let first = integrate_path(&model, &z0, &TimePath::line(t1, 1).unwrap(), &t).unwrap();
    // continue from t1: shift the origin of the path
    let rest = TimePath::line(ComplexTimePoint::new(t2.re - t1.re, t2.im - t1.im), 1).unwrap();
    let second = integrate_path(&model, first.last_state(), &rest, &t).unwrap();
    let err = max_abs_diff(direct.last_state(), second.last_state());
    assert!(err <= 10.0 * t.rtol, "{err}");
}

#[test]
fn rectangular_paths_commute_away_from_poles() {
    let model = ds(3.0);
    let z0 = real_state(&[0.4, 0.7]);
    let t = tol();
    let corner = |a: ComplexTimePoint<f64>| {
        let path = TimePath::new(vec![ComplexTimePoint::origin(), a, ComplexTimePoint::new(0.8, 2.0)], 4).unwrap();
        integrate_path(&model, &z0, &path, &t).unwrap()
    };
    let a = corner(ComplexTimePoint::real(0.8));
    let b = corner(ComplexTimePoint::imaginary(2.0));
    assert!(max_abs_diff(a.last_state(), b.last_state()) <= 1e-8);
}

#[test]
fn halving_rtol_does_not_hurt() {
    let mut prev = None;
    for rtol in [1e-6, 5e-7, 2.5e-7, 1.25e-7] {
        let t = Tolerances::default().with_rtol(rtol);
        let (err, _) = surface_error(3.0, &[0.5, 0.9], &t);
        if let Some(p) = prev {
            assert!(err <= 2.0 * p, "rtol {rtol}: {err} after {p}");
        }
        prev = Some(err);
    }
}

#[test]
fn surface_is_deterministic_across_thread_counts() {
    let model = ds(10.0);
    let z0 = real_state(&[1.0, 0.9]);
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sample_surface(&model, &z0, (-1.0, 1.0), (0.0, 6.0), (9, 33), &tol()).unwrap())
    };
    let a = run(1);
    let b = run(4);
    let c = run(4);
    let bits = |g: &SurfaceGrid<f64>| -> Vec<(u64, u64)> {
        g.values.iter().map(|v| (v.re.to_bits(), v.im.to_bits())).collect()
    };
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(bits(&b), bits(&c));
    assert_eq!(a.mask, b.mask);
}

#[test]
fn variational_identity_at_zero() {
    let model = ds(3.0);
    let z0 = real_state(&[1.0, 0.5]);
    let w0 = VariationalState { w: real_state(&[0.3, -0.7]) };
    for m in [VariationalMethod::Linearized, VariationalMethod::Integrated] {
        assert_eq!(propagate_variational(&model, &z0, 0.0, &w0, m, &tol()).unwrap(), w0);
    }
}

#[test]
fn variational_exact_for_linear_fields() {
    let model = ModelSpec::linear(
        LinearParams::from_eigenpairs(&[-1.0, -3.0], vec![vec![1.0, 1.0], vec![1.0, -1.0]]).unwrap(),
    );
    let z0 = real_state(&[0.2, 0.4]);
    let w0 = VariationalState { w: real_state(&[1.0, 0.5]) };
    let t = Tolerances::default().with_rtol(1e-13).with_atol(1e-15);
    for tau in [0.3, 2.0, 7.5] {
        let a = propagate_variational(&model, &z0, tau, &w0, VariationalMethod::Linearized, &t).unwrap();
        let b = propagate_variational(&model, &z0, tau, &w0, VariationalMethod::Integrated, &t).unwrap();
        assert!(max_abs_diff(&a.w, &b.w) <= 1e-10);
    }
}

fn frozen_error(w0: &[f64], tau: f64) -> f64 {
    let model = ds(3.0);
    let z0 = real_state(&[1.0, 0.5]);
    let w0 = VariationalState { w: real_state(w0) };
    let t = Tolerances::default().with_rtol(1e-12).with_atol(1e-14);
    let a = propagate_variational(&model, &z0, tau, &w0, VariationalMethod::Linearized, &t).unwrap();
    let b = propagate_variational(&model, &z0, tau, &w0, VariationalMethod::Integrated, &t).unwrap();
    max_abs_diff(&a.w, &b.w)
}

#[test]
fn frozen_jacobian_error_is_second_order() {
    let taus = [0.1, 0.05, 0.025];
    let errs: Vec<f64> = taus.iter().map(|&t| frozen_error(&[1.0, 0.0], t)).collect();
    for k in 0..2 {
        let slope = (errs[k] / errs[k + 1]).ln() / (taus[k] / taus[k + 1]).ln();
        assert!((slope - 2.0).abs() <= 0.2, "slope {slope}");
    }
}

#[test]
fn second_axis_is_an_exact_eigendirection() {
    // the field's second column is (0, -gamma) everywhere, so e2 never feels the frozen Jacobian
    assert!(frozen_error(&[0.0, 1.0], 0.1) <= 1e-12);
}

#[test]
fn variational_reports_poles() {
    let model = ds(3.0);
    let z0 = real_state(&[1.0, 0.5]);
    let w0 = VariationalState { w: real_state(&[1.0, 0.0]) };
    let r = propagate_variational(&model, &z0, 4.0, &w0, VariationalMethod::Integrated, &tol());
    assert!(matches!(r, Err(Error::SingularityEncountered { .. })));
}

#[test]
fn f32_ray() {
    let model = ModelSpec::<f32>::linear(LinearParams::diagonal(&[-1.0f32, -2.0]).unwrap());
    let z0 = vec![C::new(1.0f32, 0.0), C::new(1.0, 0.0)];
    let traj = integrate_imaginary_ray(&model, &z0, 3.0, 31, &Tolerances::default()).unwrap();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let e1 = C::new(0.0f32, -t.im).exp();
        let e2 = C::new(0.0f32, -2.0 * t.im).exp();
        assert!((s[0] - e1).norm() < 1e-4 && (s[1] - e2).norm() < 1e-4);
    }
}

#[test]
fn step_stats_are_recorded() {
    let traj = integrate_imaginary_ray(&ds(10.0), &real_state(&[0.5, 0.9]), 6.0, 16, &tol()).unwrap();
    assert!(traj.step_stats.accepted > 10);
    assert!(traj.step_stats.min_step > 0.0 && traj.step_stats.min_step.is_finite());
}

#[test]
fn davis_skodje_params_are_validated() {
    assert!(DavisSkodjeParams::new(1.0).is_err());
}

