//! Repeated integrals of real odd-root powers of a linear function,
//!
//! `E_n(k/p; u0, q, s) = ∫₀^s (s-u)^n / n! · (u0 + q u)^{k/p} du`,
//!
//! with `p` odd so that `U^{k/p}` has a real branch on both signs of `U`.

/// `sign(u)^k |u|^{k/den}`, the real branch of `u^{k/den}` for odd `den`.
pub fn odd_pow(u: f64, k: i64, den: i64) -> f64 {
    if u == 0.0 {
        return if k > 0 {
            0.0
        } else if k == 0 {
            1.0
        } else {
            f64::INFINITY
        };
    }
    let mag = if den == 1 {
        u.abs().powi(k as i32)
    } else {
        u.abs().powf(k as f64 / den as f64)
    };
    if k.rem_euclid(2) == 1 && u < 0.0 {
        -mag
    } else {
        mag
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

// above this |q s / u0| the closed form is well conditioned
const SERIES_SWITCH: f64 = 0.5;

/// `E_n(k/den; u0, q, s)` for `s >= 0`.
pub fn e_n(n: u32, k: i64, den: i64, u0: f64, q: f64, s: f64) -> f64 {
    if s == 0.0 {
        return 0.0;
    }
    let beta = k as f64 / den as f64;
    if u0 == 0.0 && q == 0.0 {
        return if k > 0 { 0.0 } else { f64::INFINITY };
    }
    if (q * s).abs() > SERIES_SWITCH * u0.abs() {
        closed_form(n, k, den, u0, q, s)
    } else {
        series(n, beta, odd_pow(u0, k, den), q * s / u0, s)
    }
}

fn rising(beta: f64, m: u32) -> f64 {
    (1..=m).map(|i| beta + i as f64).product()
}

fn closed_form(n: u32, k: i64, den: i64, u0: f64, q: f64, s: f64) -> f64 {
    let beta = k as f64 / den as f64;
    let us = u0 + q * s;
    let m = n + 1;
    let mut total = odd_pow(us, k + m as i64 * den, den) / (q.powi(m as i32) * rising(beta, m));
    for j in 0..=n {
        let e = m - j;
        total -= odd_pow(u0, k + e as i64 * den, den) * s.powi(j as i32)
            / (q.powi(e as i32) * rising(beta, e) * factorial(j));
    }
    total
}

// binomial expansion of (u0 + q u)^β around u0, |q s / u0| <= SERIES_SWITCH
fn series(n: u32, beta: f64, u0_pow: f64, ratio: f64, s: f64) -> f64 {
    let mut term = s.powi(n as i32 + 1) / factorial(n + 1);
    let mut sum = term;
    for i in 0..400u32 {
        let fi = i as f64;
        term *= (beta - fi) * ratio / (fi + n as f64 + 2.0);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() || term == 0.0 {
            break;
        }
    }
    u0_pow * sum
}
