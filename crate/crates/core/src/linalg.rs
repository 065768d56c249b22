//! Linear-algebra helpers: matrix exponential wrappers, dense solves with
//! conditioning diagnostics, and a banded LU with partial pivoting for the
//! large time-ordered systems (discretized oracle, collocation).

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// `e^{M}` by scaling and squaring with Padé approximation.
pub fn expm(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let e = m.clone().exp();
    if e.iter().all(|v| v.is_finite()) {
        Ok(e)
    } else {
        Err(Error::NonFinite("matrix exponential overflowed".into()))
    }
}

/// Propagators of a linear-Gaussian segment over a duration `s`.
#[derive(Debug, Clone)]
pub struct VanLoan {
    /// `e^{As}`.
    pub phi: DMatrix<f64>,
    /// `e^{-Aᵀs}`.
    pub psi: DMatrix<f64>,
    /// `∫₀^s e^{A(s-u)} W e^{-Aᵀu} du = e^{As} G(s)`.
    pub coupling: DMatrix<f64>,
}

impl VanLoan {
    /// Block exponential of `[[A, W], [0, -Aᵀ]] s`.
    pub fn new(a: &DMatrix<f64>, w: &DMatrix<f64>, s: f64) -> Result<Self> {
        let n = a.nrows();
        let mut m = DMatrix::zeros(2 * n, 2 * n);
        m.view_mut((0, 0), (n, n)).copy_from(&(a * s));
        m.view_mut((0, n), (n, n)).copy_from(&(w * s));
        m.view_mut((n, n), (n, n)).copy_from(&(-a.transpose() * s));
        let e = expm(&m)?;
        Ok(Self {
            phi: e.view((0, 0), (n, n)).into_owned(),
            psi: e.view((n, n), (n, n)).into_owned(),
            coupling: e.view((0, n), (n, n)).into_owned(),
        })
    }

    /// `G(s) = ∫₀^s e^{-Au} W e^{-Aᵀu} du`, symmetrized.
    pub fn gramian(&self) -> DMatrix<f64> {
        symmetrize(&(self.psi.transpose() * &self.coupling))
    }
}

/// Solves `m x = b` by dense LU with partial pivoting.
///
/// On failure, reports a condition estimate computed from singular values.
pub fn lu_solve(m: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = m.clone().lu();
    match lu.solve(b) {
        Some(x) if x.iter().all(|v| v.is_finite()) => Ok(x),
        _ => Err(Error::DegenerateJunctionSystem {
            condition: condition_number(m),
        }),
    }
}

/// 2-norm condition number from singular values (infinite if singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.clone().singular_values();
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 || !min.is_finite() {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
pub fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Singular(format!("{what} is not symmetric positive definite")))
}

/// `(m + mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Banded square matrix with `kl` sub- and `ku` super-diagonals.
///
/// Storage is row-major over the band with `kl` extra super-diagonals
/// reserved for fill-in from partial pivoting.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    // row i holds columns i-kl ..= i+ku+kl
    width: usize,
    data: Vec<f64>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![0.0; n * width],
        }
    }

    /// Builds from `(row, col, value)` triplets, summing duplicates.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut kl = 0;
        let mut ku = 0;
        for &(i, j, _) in triplets {
            if i > j {
                kl = kl.max(i - j);
            } else {
                ku = ku.max(j - i);
            }
        }
        let mut m = Self::zeros(n, kl, ku);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        // offset of column j within row i's window
        let off = j as isize - i as isize + self.kl as isize;
        if off < 0 || off as usize >= self.width {
            None
        } else {
            Some(i * self.width + off as usize)
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Adds `v` at `(i, j)`; panics if outside the declared band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let lo = i.saturating_sub(self.kl);
        assert!(
            j >= lo && j <= i + self.ku,
            "entry ({i}, {j}) outside band (kl={}, ku={})",
            self.kl,
            self.ku
        );
        let s = self.slot(i, j).expect("band slot");
        self.data[s] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = v;
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |i, j| self.get(i, j))
    }

    /// Solves `A x = b` in place by LU with partial pivoting.
    pub fn solve(mut self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut x = b.clone();
        let kl = self.kl;
        let upper = self.ku + self.kl; // upper bandwidth after pivoting
        let scale = self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return Err(Error::Singular("banded matrix is zero".into()));
        }
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut piv = k;
            let mut best = self.get(k, k).abs();
            for i in k + 1..=last_row {
                let v = self.get(i, k).abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best <= scale * 1e-300 || !best.is_finite() {
                return Err(Error::Singular(format!("zero pivot at column {k}")));
            }
            let last_col = (k + upper).min(n - 1);
            if piv != k {
                for j in k..=last_col {
                    let a = self.get(k, j);
                    let c = self.get(piv, j);
                    self.set(k, j, c);
                    self.set(piv, j, a);
                }
                x.swap_rows(k, piv);
            }
            let pivot = self.get(k, k);
            for i in k + 1..=last_row {
                let f = self.get(i, k) / pivot;
                if f == 0.0 {
                    continue;
                }
                self.set(i, k, 0.0);
                for j in k + 1..=last_col {
                    let v = self.get(k, j);
                    if v != 0.0 {
                        let s = self.slot(i, j).expect("fill within band");
                        self.data[s] -= f * v;
                    }
                }
                x[i] -= f * x[k];
            }
        }
        for k in (0..n).rev() {
            let last_col = (k + upper).min(n - 1);
            let mut s = x[k];
            for j in k + 1..=last_col {
                s -= self.get(k, j) * x[j];
            }
            x[k] = s / self.get(k, k);
        }
        if x.iter().all(|v| v.is_finite()) {
            Ok(x)
        } else {
            Err(Error::Singular("non-finite banded solution".into()))
        }
    }
}

/// Central-difference Jacobian of a residual with known band structure,
/// using column grouping so only `kl + ku + 1` perturbation pairs are
/// needed regardless of dimension.
pub fn banded_fd_jacobian<F>(
    residual: &mut F,
    z: &DVector<f64>,
    kl: usize,
    ku: usize,
) -> Result<BandedMatrix>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let n = z.len();
    let groups = kl + ku + 1;
    let mut jac = BandedMatrix::zeros(n, kl, ku);
    let mut zp = z.clone();
    let mut zm = z.clone();
    let mut steps = vec![0.0; n];
    for g in 0..groups.min(n) {
        let cols: Vec<usize> = (g..n).step_by(groups).collect();
        for &j in &cols {
            let h = 6e-6 * z[j].abs().max(1.0);
            steps[j] = h;
            zp[j] = z[j] + h;
            zm[j] = z[j] - h;
        }
        let rp = residual(&zp)?;
        let rm = residual(&zm)?;
        for &j in &cols {
            zp[j] = z[j];
            zm[j] = z[j];
            let lo = j.saturating_sub(ku);
            let hi = (j + kl).min(n - 1);
            for i in lo..=hi {
                let d = (rp[i] - rm[i]) / (2.0 * steps[j]);
                if d != 0.0 {
                    jac.set(i, j, d);
                }
            }
        }
    }
    Ok(jac)
}
