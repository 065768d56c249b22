use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::system::{gaussian_log_density, zero_mat_fn, zero_vec_fn, StochasticSystem};
use crate::error::{Error, Result};
use crate::linalg::spd_inverse;

/// Linear dynamics `ẋ = Ax + Bv`, measurements `y = Cx + Dw`, with
/// `v ~ N(0, Q)` and `w ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianSystem {
    #[serde(with = "crate::serde_util::matrix")]
    pub a: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub b: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub c: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub d: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub q: DMatrix<f64>,
    #[serde(with = "crate::serde_util::matrix")]
    pub r: DMatrix<f64>,
}

impl LinearGaussianSystem {
    /// Checks dimensions, SPD covariances and invertibility of `D R Dᵀ`.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        d: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
    ) -> Result<Self> {
        let s = Self { a, b, c, d, q, r };
        s.validate()?;
        Ok(s)
    }

    pub fn n_x(&self) -> usize {
        self.a.nrows()
    }
    pub fn n_v(&self) -> usize {
        self.b.ncols()
    }
    pub fn n_y(&self) -> usize {
        self.c.nrows()
    }
    pub fn n_w(&self) -> usize {
        self.d.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let n_x = self.a.nrows();
        let check = |ctx: &str, m: &DMatrix<f64>, rows: usize, cols: usize| {
            if m.nrows() != rows || m.ncols() != cols {
                Err(Error::DimensionMismatch {
                    context: ctx.to_string(),
                    expected: format!("{rows}x{cols}"),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                })
            } else {
                Ok(())
            }
        };
        if n_x == 0 {
            return Err(Error::InvalidParameter("n_x must be positive".into()));
        }
        check("A", &self.a, n_x, n_x)?;
        check("B", &self.b, n_x, self.n_v())?;
        check("C", &self.c, self.n_y(), n_x)?;
        check("D", &self.d, self.n_y(), self.n_w())?;
        check("Q", &self.q, self.n_v(), self.n_v())?;
        check("R", &self.r, self.n_w(), self.n_w())?;
        for (name, m) in [("Q", &self.q), ("R", &self.r)] {
            if (m - m.transpose()).amax() > 1e-12 * m.amax().max(1.0) {
                return Err(Error::InvalidParameter(format!("{name} is not symmetric")));
            }
            spd_inverse(m, name)?;
        }
        self.measurement_precision()?;
        Ok(())
    }

    /// `(D R Dᵀ)⁻¹`, the precision of the measurement residual `y - Cx`.
    pub fn measurement_precision(&self) -> Result<DMatrix<f64>> {
        let s = &self.d * &self.r * self.d.transpose();
        spd_inverse(&s, "D R Dᵀ")
    }

    /// `B Q Bᵀ`.
    pub fn process_spread(&self) -> DMatrix<f64> {
        &self.b * &self.q * self.b.transpose()
    }

    /// The same model in callback form, with Gaussian log-densities and the
    /// closed-form `v = Q Bᵀ λ`.
    pub fn to_stochastic(&self, name: &str) -> StochasticSystem {
        let (n_x, n_v, n_w, n_y) = (self.n_x(), self.n_v(), self.n_w(), self.n_y());
        let a = self.a.clone();
        let a2 = self.a.clone();
        let b = self.b.clone();
        let b2 = self.b.clone();
        let c = self.c.clone();
        let c2 = self.c.clone();
        let d = self.d.clone();
        let d2 = self.d.clone();
        let qbt = &self.q * self.b.transpose();
        let (log_rho_v, dlog_rho_v_dv) =
            gaussian_log_density(&self.q).expect("Q validated as SPD");
        let (log_rho_w, dlog_rho_w_dw) =
            gaussian_log_density(&self.r).expect("R validated as SPD");
        StochasticSystem {
            name: name.to_string(),
            n_x,
            n_v,
            n_w,
            n_y,
            f: Arc::new(move |_t, x: &DVector<f64>| &a * x),
            df_dx: Arc::new(move |_t, _x| a2.clone()),
            nu: Arc::new(move |_t, v: &DVector<f64>| &b * v),
            dnu_dv: Arc::new(move |_t, _v| b2.clone()),
            g: zero_vec_fn(n_y),
            dg_dxdot: zero_mat_fn(n_y, n_x),
            h: Arc::new(move |_t, x: &DVector<f64>| &c * x),
            dh_dx: Arc::new(move |_t, _x| c2.clone()),
            xi: Arc::new(move |_t, w: &DVector<f64>| &d * w),
            dxi_dw: Arc::new(move |_t, _w| d2.clone()),
            log_rho_v,
            dlog_rho_v_dv,
            log_rho_w,
            dlog_rho_w_dw,
            v_from_costate: Some(Arc::new(move |_t, lambda: &DVector<f64>| &qbt * lambda)),
        }
    }
}
