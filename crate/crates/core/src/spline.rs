//! Finite representation of an optimal spline: one closed-form or
//! polynomial segment per measurement interval plus the point values at
//! the knots, which the optimality conditions treat separately from the
//! segment limits.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::VanLoan;
use crate::model::{odd_root, MeasurementSet};
use crate::nonlinear::fractional::e_n;
use crate::serde_util;

/// `A`, `B`, `Q` needed to evaluate linear-Gaussian segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    #[serde(with = "serde_util::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "serde_util::matrix")]
    pub b: DMatrix<f64>,
    #[serde(with = "serde_util::matrix")]
    pub q: DMatrix<f64>,
}

impl LinearModel {
    /// `B Q Bᵀ`.
    pub fn spread(&self) -> DMatrix<f64> {
        &self.b * &self.q * self.b.transpose()
    }
}

/// Everything a segment knows at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentState {
    pub x: DVector<f64>,
    pub xdot: DVector<f64>,
    pub lambda: DVector<f64>,
    pub lambda_dot: DVector<f64>,
    pub v: DVector<f64>,
}

/// `λ(t) = e^{-Aᵀs} c_λ`, `x(t) = e^{As}[G(s) c_λ + c_x]`, `v = Q Bᵀ λ`,
/// with `s = t - t_start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSegment {
    pub t_start: f64,
    pub t_end: f64,
    #[serde(with = "serde_util::vector")]
    pub c_lambda: DVector<f64>,
    #[serde(with = "serde_util::vector")]
    pub c_x: DVector<f64>,
}

impl LinearSegment {
    pub fn eval(&self, model: &LinearModel, t: f64) -> Result<SegmentState> {
        let w = model.spread();
        let vl = VanLoan::new(&model.a, &w, t - self.t_start)?;
        let x = &vl.phi * &self.c_x + &vl.coupling * &self.c_lambda;
        let lambda = &vl.psi * &self.c_lambda;
        let v = &model.q * model.b.transpose() * &lambda;
        Ok(SegmentState {
            xdot: &model.a * &x + &w * &lambda,
            lambda_dot: -model.a.transpose() * &lambda,
            x,
            lambda,
            v,
        })
    }
}

/// Point-mass segment under `ρ_v ∝ exp(-½(v/σ_p)^{2α})`, with `s = t - t_start`:
///
/// `λ = (-a, a s + b)`, `v = κ (a s + b)^{1/(2α-1)}`,
/// `x₂ = V + κ ∫₀^s (a u + b)^{1/(2α-1)} du`, `x₁ = X + V s + κ ∫₀^s (s-u)(a u + b)^{1/(2α-1)} du`,
/// where `κ = (σ_p^{2α}/α)^{1/(2α-1)}` and `(X, V)` is the state at `t_start`.
/// When `a ≠ 0` the position is `κ(a s + b)^{(4α-1)/(2α-1)} / (a² r₁ r₂) + c s + d`
/// with `r_i = i + 1/(2α-1)`, and `c`, `d` are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSegment {
    pub t_start: f64,
    pub t_end: f64,
    pub alpha: u32,
    pub sigma_p: f64,
    pub a: f64,
    pub b: f64,
    pub x_start: [f64; 2],
    pub c: Option<f64>,
    pub d: Option<f64>,
}

impl AlphaSegment {
    pub fn new(t_start: f64, t_end: f64, alpha: u32, sigma_p: f64, a: f64, b: f64, x_start: [f64; 2]) -> Self {
        let mut seg = Self {
            t_start,
            t_end,
            alpha,
            sigma_p,
            a,
            b,
            x_start,
            c: None,
            d: None,
        };
        if a != 0.0 {
            let p = seg.odd_power();
            let r = 1.0 / p as f64;
            let kappa = seg.kappa();
            let pow = |k: i64| crate::nonlinear::fractional::odd_pow(b, k, p);
            seg.c = Some(x_start[1] - kappa * pow(1 + p) / (a * (1.0 + r)));
            seg.d = Some(x_start[0] - kappa * pow(1 + 2 * p) / (a * a * (1.0 + r) * (2.0 + r)));
        }
        seg
    }

    /// `2α - 1`.
    pub fn odd_power(&self) -> i64 {
        2 * self.alpha as i64 - 1
    }

    pub fn kappa(&self) -> f64 {
        crate::model::presets::alpha_kappa(self.alpha, self.sigma_p)
    }

    /// Exponent of `(a s + b)` in the position closed form, `(4α-1)/(2α-1)`.
    pub fn position_exponent(&self) -> f64 {
        (4 * self.alpha - 1) as f64 / (2 * self.alpha - 1) as f64
    }

    /// Position from the stored closed-form constants (`a ≠ 0` only).
    pub fn closed_form_position(&self, t: f64) -> Option<f64> {
        let (c, d) = (self.c?, self.d?);
        let s = t - self.t_start;
        let r = 1.0 / self.odd_power() as f64;
        let lam = self.a * s + self.b;
        let p = self.odd_power();
        let pow = crate::nonlinear::fractional::odd_pow(lam, 1 + 2 * p, p);
        Some(self.kappa() * pow / (self.a * self.a * (1.0 + r) * (2.0 + r)) + c * s + d)
    }

    pub fn eval(&self, t: f64) -> SegmentState {
        let s = t - self.t_start;
        let p = self.odd_power();
        let kappa = self.kappa();
        let lam2 = self.a * s + self.b;
        let v = kappa * odd_root(lam2, p as i32);
        let x2 = self.x_start[1] + kappa * e_n(0, 1, p, self.b, self.a, s);
        let x1 = self.x_start[0] + self.x_start[1] * s + kappa * e_n(1, 1, p, self.b, self.a, s);
        SegmentState {
            x: DVector::from_vec(vec![x1, x2]),
            xdot: DVector::from_vec(vec![x2, v]),
            lambda: DVector::from_vec(vec![-self.a, lam2]),
            lambda_dot: DVector::from_vec(vec![0.0, self.a]),
            v: DVector::from_element(1, v),
        }
    }
}

/// Lagrange interpolants of `x`, `λ` and `v` through node values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolySegment {
    pub t_start: f64,
    pub t_end: f64,
    /// Node times, including both endpoints.
    pub nodes: Vec<f64>,
    #[serde(with = "serde_util::vectors")]
    pub x: Vec<DVector<f64>>,
    #[serde(with = "serde_util::vectors")]
    pub lambda: Vec<DVector<f64>>,
    #[serde(with = "serde_util::vectors")]
    pub v: Vec<DVector<f64>>,
}

/// Values `l_j(t)` and derivatives `l_j'(t)` of the Lagrange basis on `nodes`.
///
/// Products are formed directly (no barycentric division) so evaluation
/// is uniformly accurate near and at the nodes.
pub fn lagrange_basis(nodes: &[f64], t: f64) -> (Vec<f64>, Vec<f64>) {
    let m = nodes.len();
    let mut vals = vec![0.0; m];
    let mut ders = vec![0.0; m];
    for j in 0..m {
        let mut denom = 1.0;
        let mut prod = 1.0;
        let mut dsum = 0.0;
        for i in 0..m {
            if i == j {
                continue;
            }
            denom *= nodes[j] - nodes[i];
            // derivative of Π(t - t_i) by the product rule
            dsum = dsum * (t - nodes[i]) + prod;
            prod *= t - nodes[i];
        }
        vals[j] = prod / denom;
        ders[j] = dsum / denom;
    }
    (vals, ders)
}

impl PolySegment {
    pub fn eval(&self, t: f64) -> SegmentState {
        let (l, dl) = lagrange_basis(&self.nodes, t);
        let comb = |vals: &[DVector<f64>], w: &[f64]| {
            let mut out = DVector::zeros(vals[0].len());
            for (v, c) in vals.iter().zip(w) {
                out.axpy(*c, v, 1.0);
            }
            out
        };
        SegmentState {
            x: comb(&self.x, &l),
            xdot: comb(&self.x, &dl),
            lambda: comb(&self.lambda, &l),
            lambda_dot: comb(&self.lambda, &dl),
            v: comb(&self.v, &l),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Segment {
    LinearGaussian(LinearSegment),
    Alpha(AlphaSegment),
    Polynomial(PolySegment),
}

impl Segment {
    pub fn t_start(&self) -> f64 {
        match self {
            Segment::LinearGaussian(s) => s.t_start,
            Segment::Alpha(s) => s.t_start,
            Segment::Polynomial(s) => s.t_start,
        }
    }

    pub fn t_end(&self) -> f64 {
        match self {
            Segment::LinearGaussian(s) => s.t_end,
            Segment::Alpha(s) => s.t_end,
            Segment::Polynomial(s) => s.t_end,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Segment::LinearGaussian(_) => "linear-gaussian",
            Segment::Alpha(_) => "alpha",
            Segment::Polynomial(_) => "polynomial",
        }
    }
}

/// Point values at every knot `t_0..=t_K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotValues {
    #[serde(with = "serde_util::vectors")]
    pub x: Vec<DVector<f64>>,
    #[serde(with = "serde_util::vectors")]
    pub xdot: Vec<DVector<f64>>,
    #[serde(with = "serde_util::vectors")]
    pub v: Vec<DVector<f64>>,
    #[serde(with = "serde_util::vectors")]
    pub w: Vec<DVector<f64>>,
    #[serde(with = "serde_util::vectors")]
    pub eta: Vec<DVector<f64>>,
    #[serde(with = "serde_util::vectors")]
    pub lambda: Vec<DVector<f64>>,
    /// `λ(t_k⁻)`, zero at `t_0`.
    #[serde(with = "serde_util::vectors")]
    pub lambda_minus: Vec<DVector<f64>>,
    /// `λ(t_k⁺)`, zero at `t_K`.
    #[serde(with = "serde_util::vectors")]
    pub lambda_plus: Vec<DVector<f64>>,
}

/// State estimate, noise estimate and costate at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct SplinePoint {
    pub x: DVector<f64>,
    pub v: DVector<f64>,
    pub lambda: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spline {
    pub times: Vec<f64>,
    /// Present when any segment is linear-Gaussian.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<LinearModel>,
    pub segments: Vec<Segment>,
    pub knots: KnotValues,
}

impl Spline {
    pub fn intervals(&self) -> usize {
        self.segments.len()
    }

    pub fn n_x(&self) -> usize {
        self.knots.x[0].len()
    }

    /// Checks that the layout is self-consistent.
    pub fn validate(&self) -> Result<()> {
        let k = self.segments.len();
        if k == 0 || self.times.len() != k + 1 {
            return Err(Error::InvalidParameter(format!(
                "spline has {} segments for {} knots",
                k,
                self.times.len()
            )));
        }
        let kn = &self.knots;
        for (name, len) in [
            ("x", kn.x.len()),
            ("xdot", kn.xdot.len()),
            ("v", kn.v.len()),
            ("w", kn.w.len()),
            ("eta", kn.eta.len()),
            ("lambda", kn.lambda.len()),
            ("lambda_minus", kn.lambda_minus.len()),
            ("lambda_plus", kn.lambda_plus.len()),
        ] {
            if len != k + 1 {
                return Err(Error::DimensionMismatch {
                    context: format!("knot array {name}"),
                    expected: (k + 1).to_string(),
                    got: len.to_string(),
                });
            }
        }
        for (i, s) in self.segments.iter().enumerate() {
            if s.t_start() != self.times[i] || s.t_end() != self.times[i + 1] {
                return Err(Error::InvalidParameter(format!(
                    "segment {i} spans [{}, {}], knots are [{}, {}]",
                    s.t_start(),
                    s.t_end(),
                    self.times[i],
                    self.times[i + 1]
                )));
            }
            if matches!(s, Segment::LinearGaussian(_)) && self.model.is_none() {
                return Err(Error::InvalidParameter(
                    "linear-gaussian segments need the model matrices".into(),
                ));
            }
        }
        Ok(())
    }

    /// Evaluates segment `k` at `t`, including its closed endpoints.
    pub fn segment_state(&self, k: usize, t: f64) -> Result<SegmentState> {
        let seg = self
            .segments
            .get(k)
            .ok_or_else(|| Error::InvalidParameter(format!("segment index {k} out of range")))?;
        match seg {
            Segment::LinearGaussian(s) => {
                let model = self.model.as_ref().ok_or_else(|| {
                    Error::InvalidParameter("linear-gaussian segments need the model matrices".into())
                })?;
                s.eval(model, t)
            }
            Segment::Alpha(s) => Ok(s.eval(t)),
            Segment::Polynomial(s) => Ok(s.eval(t)),
        }
    }

    /// Index of the segment owning `t` (interior knots go right).
    pub fn interval_of(&self, t: f64) -> Result<usize> {
        let (t0, tk) = (self.times[0], *self.times.last().unwrap());
        if !(t >= t0 && t <= tk) {
            return Err(Error::OutsideHorizon { t, t0, tk });
        }
        let k = self.times.partition_point(|&s| s <= t);
        Ok(k.saturating_sub(1).min(self.intervals() - 1))
    }

    /// `2 n_x K` for linear-Gaussian segments.
    pub fn free_constants(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::LinearGaussian(l) => l.c_lambda.len() + l.c_x.len(),
                Segment::Alpha(_) => 4,
                Segment::Polynomial(p) => p.nodes.len() * (p.x[0].len() + p.lambda[0].len()),
            })
            .sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Spline = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn write_json<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(self.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        Ok(())
    }

    pub fn read_json<R: Read>(mut r: R) -> Result<Self> {
        let mut text = String::new();
        r.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    /// Samples `(t, x, v)` at `per_interval` evenly spaced points per
    /// interval plus the final knot.
    pub fn dense_samples(&self, per_interval: usize) -> Result<Vec<(f64, SplinePoint)>> {
        let per = per_interval.max(1);
        let mut out = Vec::with_capacity(self.intervals() * per + 1);
        for k in 0..self.intervals() {
            let (a, b) = (self.times[k], self.times[k + 1]);
            for j in 0..per {
                let t = a + (b - a) * j as f64 / per as f64;
                out.push((t, eval_spline(self, t)?));
            }
        }
        let tk = *self.times.last().unwrap();
        out.push((tk, eval_spline(self, tk)?));
        Ok(out)
    }

    /// Knot values must sit at the measurement times.
    pub fn check_times(&self, ms: &MeasurementSet) -> Result<()> {
        if self.times.as_slice() != ms.times() {
            return Err(Error::InvalidParameter(
                "spline knots do not match measurement times".into(),
            ));
        }
        Ok(())
    }
}

/// Estimate at `t ∈ [t_0, t_K]`. Knots return the stored point values.
pub fn eval_spline(spline: &Spline, t: f64) -> Result<SplinePoint> {
    let k = spline.interval_of(t)?;
    if let Ok(i) = spline.times.binary_search_by(|s| s.total_cmp(&t)) {
        let kn = &spline.knots;
        return Ok(SplinePoint {
            x: kn.x[i].clone(),
            v: kn.v[i].clone(),
            lambda: kn.lambda[i].clone(),
        });
    }
    let st = spline.segment_state(k, t)?;
    Ok(SplinePoint {
        x: st.x,
        v: st.v,
        lambda: st.lambda,
    })
}
