use nalgebra::DVector;

use crate::model::{MeasurementSet, StochasticSystem};
use crate::spline::{KnotValues, PolySegment, Segment, Spline};

// singular values below this fraction of the largest are dropped
const PINV_RTOL: f64 = 1e-12;

/// Piecewise-linear starting trajectory with `λ ≡ 0` and `v ≡ 0`.
///
/// Observed components come from the pseudo-inverse of `∂h/∂x` at the
/// origin. A component that no measurement sees is filled with the
/// finite-difference slope of the component before it, which is the right
/// guess for chains of integrators (position, velocity, ...).
pub fn initial_guess(sys: &StochasticSystem, ms: &MeasurementSet) -> Spline {
    let (t, y) = (ms.times(), ms.values());
    let nx = sys.n_x;
    let zero = DVector::zeros(nx);
    let mut xs: Vec<DVector<f64>> = t
        .iter()
        .zip(y)
        .map(|(&tk, yk)| {
            let hx = (sys.dh_dx)(tk, &zero);
            let h0 = (sys.h)(tk, &zero);
            let rhs = yk - h0;
            let svd = hx.svd(true, true);
            let cut = svd.singular_values.max() * PINV_RTOL;
            svd.solve(&rhs, cut).unwrap_or_else(|_| zero.clone())
        })
        .collect();
    let hx0 = (sys.dh_dx)(t[0], &zero);
    let mut seen: Vec<bool> = (0..nx).map(|i| hx0.column(i).iter().any(|v| *v != 0.0)).collect();
    for i in 1..nx {
        if seen[i] || !seen[i - 1] {
            continue;
        }
        let slopes = slopes(t, &xs.iter().map(|x| x[i - 1]).collect::<Vec<_>>());
        for (x, s) in xs.iter_mut().zip(slopes) {
            x[i] = s;
        }
        seen[i] = true;
    }

    let kk = ms.intervals();
    let segments = (0..kk)
        .map(|k| {
            Segment::Polynomial(PolySegment {
                t_start: t[k],
                t_end: t[k + 1],
                nodes: vec![t[k], t[k + 1]],
                x: vec![xs[k].clone(), xs[k + 1].clone()],
                lambda: vec![zero.clone(); 2],
                v: vec![DVector::zeros(sys.n_v); 2],
            })
        })
        .collect();
    let xdot = (0..=kk)
        .map(|k| {
            let kk_ = k.min(kk - 1);
            (&xs[kk_ + 1] - &xs[kk_]) / (t[kk_ + 1] - t[kk_])
        })
        .collect();
    let n = kk + 1;
    let knots = KnotValues {
        x: xs,
        xdot,
        v: vec![DVector::zeros(sys.n_v); n],
        w: vec![DVector::zeros(sys.n_w); n],
        eta: vec![DVector::zeros(sys.n_y); n],
        lambda: vec![zero.clone(); n],
        lambda_minus: vec![zero.clone(); n],
        lambda_plus: vec![zero; n],
    };
    Spline {
        times: t.to_vec(),
        model: None,
        segments,
        knots,
    }
}

// central differences inside, one-sided at the ends
fn slopes(t: &[f64], u: &[f64]) -> Vec<f64> {
    let n = t.len();
    (0..n)
        .map(|k| {
            let (a, b) = (k.saturating_sub(1), (k + 1).min(n - 1));
            (u[b] - u[a]) / (t[b] - t[a])
        })
        .collect()
}
