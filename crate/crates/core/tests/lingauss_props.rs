mod common;

use mlspline::lingauss::{assemble_junction_system, cubic_coefficients, segment_gramian, solve_spline};
use mlspline::model::{preset_double_integrator, preset_harmonic};
use mlspline::optimality::verify_spline;
use mlspline::sim::solve_discretized_mle;
use mlspline::spline::eval_spline;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use common::{max_knot_gap, preview_data, random_instance, scalar_data, uniform_scalar, Draws};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(25))]

    #[test]
    fn estimator_is_linear_in_data(seed in 0u64..10_000) {
        let (lgs, ms) = random_instance(seed);
        let mut d = Draws::new(seed + 1);
        let other: Vec<DVector<f64>> = ms.values().iter().map(|y| y.map(|_| d.normal())).collect();
        let sum: Vec<DVector<f64>> = ms.values().iter().zip(&other).map(|(a, b)| a + b).collect();
        let s1 = solve_spline(&lgs, &ms).unwrap();
        let s2 = solve_spline(&lgs, &ms.with_values(other).unwrap()).unwrap();
        let s3 = solve_spline(&lgs, &ms.with_values(sum).unwrap()).unwrap();
        let added: Vec<DVector<f64>> = s1.knots.x.iter().zip(&s2.knots.x).map(|(a, b)| a + b).collect();
        prop_assert!(max_knot_gap(&added, &s3.knots.x) <= 1e-9);
    }

    #[test]
    fn gramian_is_symmetric_psd(seed in 0u64..10_000, delta in 0.0..2.0f64) {
        let (lgs, _) = random_instance(seed);
        let g = segment_gramian(&lgs.a, &lgs.b, &lgs.q, delta).unwrap();
        prop_assert_eq!(&g, &g.transpose());
        let eig = g.clone().symmetric_eigen();
        prop_assert!(eig.eigenvalues.min() >= -1e-12 * (1.0 + g.amax()));
        let g0 = segment_gramian(&lgs.a, &lgs.b, &lgs.q, 0.0).unwrap();
        prop_assert_eq!(g0.amax(), 0.0);
    }

    #[test]
    fn random_outputs_verify(seed in 0u64..10_000) {
        let (lgs, ms) = random_instance(seed);
        let spline = solve_spline(&lgs, &ms).unwrap();
        let sys = lgs.to_stochastic("random");
        let bundle = verify_spline(&sys, &ms, &spline, 10).unwrap();
        prop_assert!(bundle.passes(1e-8), "{:?}", bundle.violations(1e-8));
        prop_assert_eq!(spline.free_constants(), 2 * lgs.n_x() * ms.intervals());
    }
}

#[test]
fn system_is_square_in_two_nx_k() {
    let (_, lgs) = preset_double_integrator(1.0, 1.0).unwrap();
    let (m, b) = assemble_junction_system(&lgs, &uniform_scalar(&[0.0, 1.0, 0.5], 5.0)).unwrap();
    assert_eq!(m.shape(), (8, 8));
    assert_eq!(b.len(), 8);
}

#[test]
fn line_data_is_reproduced_everywhere() {
    let (_, lgs) = preset_double_integrator(2.0, 0.5).unwrap();
    let times = [0.0, 0.3, 0.7, 1.0, 1.6];
    let ys: Vec<f64> = times.iter().map(|t| 2.0 * t + 1.0).collect();
    let ms = scalar_data(&times, &ys);
    let spline = solve_spline(&lgs, &ms).unwrap();
    let mut d = Draws::new(8);
    for _ in 0..20 {
        let t = 1.6 * d.uniform();
        let p = eval_spline(&spline, t).unwrap();
        assert!((p.x[0] - (2.0 * t + 1.0)).abs() < 1e-12, "{t}");
    }
    for k in 0..ms.intervals() {
        let (a, b, c, dd) = cubic_coefficients(&spline, k).unwrap();
        assert!(a.abs() < 1e-12 && b.abs() < 1e-12);
        assert!((c - spline.knots.x[k][1]).abs() < 1e-12);
        assert!((dd - spline.knots.x[k][0]).abs() < 1e-12);
    }
}

#[test]
fn cubic_coefficients_round_trip() {
    let (_, lgs, ms) = preview_data(4);
    let spline = solve_spline(&lgs, &ms).unwrap();
    let sp2 = 16.0;
    let t = ms.times();
    for k in [0, 7, 30, 49] {
        let (a, b, c, d) = cubic_coefficients(&spline, k).unwrap();
        for j in 0..10 {
            let s = (t[k + 1] - t[k]) * (j as f64 + 0.5) / 10.0;
            let x1 = a * sp2 / 6.0 * s.powi(3) + b * sp2 / 2.0 * s * s + c * s + d;
            let got = eval_spline(&spline, t[k] + s).unwrap();
            assert!((x1 - got.x[0]).abs() < 1e-10);
            assert!((got.lambda[0] + a).abs() < 1e-10 && (got.lambda[1] - (a * s + b)).abs() < 1e-10);
        }
    }
    // costate limits rebuilt from (a, b) satisfy the jump condition
    for k in 1..ms.intervals() {
        let (a0, b0, _, _) = cubic_coefficients(&spline, k - 1).unwrap();
        let (a1, b1, _, _) = cubic_coefficients(&spline, k).unwrap();
        let h = t[k] - t[k - 1];
        let minus = [-a0, a0 * h + b0];
        let plus = [-a1, b1];
        let eta = spline.knots.eta[k][0];
        let r = [5.0 * (plus[0] - minus[0]) + eta, 5.0 * (plus[1] - minus[1])];
        assert!(r[0].abs() < 1e-8 && r[1].abs() < 1e-8, "{k}: {r:?}");
    }
}

#[test]
fn position_segments_are_cubic() {
    let (_, lgs, ms) = preview_data(9);
    let spline = solve_spline(&lgs, &ms).unwrap();
    let t = ms.times();
    for k in 0..ms.intervals() {
        let h = (t[k + 1] - t[k]) / 4.0;
        let f: Vec<f64> = (0..5).map(|j| spline.segment_state(k, t[k] + j as f64 * h).unwrap().x[0]).collect();
        let d4 = (f[4] - 4.0 * f[3] + 6.0 * f[2] - 4.0 * f[1] + f[0]) / (24.0 * h.powi(4));
        assert!(d4.abs() <= 1e-6, "{k}: {d4}");
    }
}

#[test]
fn harmonic_segments_are_modified_harmonic() {
    let omega = 2.0;
    let (_, lgs) = preset_harmonic(omega, 1.0, 0.3).unwrap();
    let ms = scalar_data(&[0.0, 1.0, 2.0, 3.0, 4.0], &[1.0, -0.6, -0.2, 0.9, -0.4]);
    let spline = solve_spline(&lgs, &ms).unwrap();
    for k in 0..ms.intervals() {
        let t0 = ms.times()[k];
        let samples: Vec<f64> = (0..8).map(|j| t0 + (j as f64 + 0.5) / 8.0).collect();
        let basis = DMatrix::from_fn(8, 4, |i, j| {
            let t = samples[i];
            match j {
                0 => (omega * t).sin(),
                1 => t * (omega * t).sin(),
                2 => (omega * t).cos(),
                _ => t * (omega * t).cos(),
            }
        });
        let y = DVector::from_fn(8, |i, _| spline.segment_state(k, samples[i]).unwrap().x[0]);
        let coef = basis.clone().svd(true, true).solve(&y, 1e-14).unwrap();
        let resid = (&basis * coef - &y).amax();
        assert!(resid <= 1e-8, "{k}: {resid}");
    }
}

#[test]
fn quiet_process_gives_least_squares_line() {
    let (_, lgs) = preset_double_integrator(1e-6, 1.0).unwrap();
    let times = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let ys = [0.3, 0.9, 0.7, 1.4, 1.2, 2.0];
    let spline = solve_spline(&lgs, &scalar_data(&times, &ys)).unwrap();
    let n = times.len() as f64;
    let (mt, my) = (times.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let slope = times.iter().zip(&ys).map(|(t, y)| (t - mt) * (y - my)).sum::<f64>()
        / times.iter().map(|t| (t - mt).powi(2)).sum::<f64>();
    for (k, &t) in times.iter().enumerate() {
        let line = my + slope * (t - mt);
        assert!((spline.knots.x[k][0] - line).abs() < 1e-4, "{k}");
        assert!((spline.knots.x[k][1] - slope).abs() < 1e-4);
    }
}

#[test]
fn knots_are_continuous() {
    let (_, lgs, ms) = preview_data(2);
    let spline = solve_spline(&lgs, &ms).unwrap();
    for k in 1..ms.intervals() {
        let tk = ms.times()[k];
        let left = spline.segment_state(k - 1, tk).unwrap().x;
        let right = spline.segment_state(k, tk).unwrap().x;
        assert!((&left - &spline.knots.x[k]).amax() < 1e-9);
        assert!((&right - &spline.knots.x[k]).amax() < 1e-9);
        assert_eq!(eval_spline(&spline, tk).unwrap().x, spline.knots.x[k]);
    }
    assert!(eval_spline(&spline, 10.5).is_err());
}

#[test]
fn midpoints_match_oracle() {
    for seed in [1, 2] {
        let (lgs, ms) = random_instance(seed);
        let spline = solve_spline(&lgs, &ms).unwrap();
        let orc = solve_discretized_mle(&lgs, &ms, 1e-3).unwrap();
        for k in 0..ms.intervals() {
            let i = orc.grid.knot_index[k] + orc.grid.steps[k] / 2;
            let x = eval_spline(&spline, orc.grid.times[i]).unwrap().x;
            assert!((x - &orc.states[i]).amax() <= 1e-3);
        }
    }
}

#[test]
fn spline_json_shape() {
    let (_, lgs) = preset_double_integrator(1.0, 1.0).unwrap();
    let spline = solve_spline(&lgs, &uniform_scalar(&[0.0, 1.0, 0.5], 5.0)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&spline.to_json().unwrap()).unwrap();
    let seg = &v["segments"][0];
    assert_eq!(seg["type"], "linear-gaussian");
    for key in ["t_start", "t_end", "c_lambda", "c_x"] {
        assert!(seg.get(key).is_some(), "{key}");
    }
    for key in ["x", "eta", "w", "lambda_minus", "lambda_plus"] {
        assert!(v["knots"].get(key).is_some(), "{key}");
    }
}
