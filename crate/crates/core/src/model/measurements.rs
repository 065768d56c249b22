use std::io::{Read, Write};

use nalgebra::DVector;

use crate::error::{Error, Result};

/// Relative tolerance for declaring a measurement grid uniform.
pub const UNIFORM_RTOL: f64 = 1e-9;

/// Ordered measurement pairs `(t_k, y_k)`, `k = 0..=K`, with `K >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    times: Vec<f64>,
    values: Vec<DVector<f64>>,
    f0: f64,
}

/// Closed horizon `[t0, tK]` with `tK > t0`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TimeHorizon {
    pub t0: f64,
    pub tk: f64,
}

impl TimeHorizon {
    pub fn new(t0: f64, tk: f64) -> Result<Self> {
        if !(tk > t0) || !t0.is_finite() || !tk.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "horizon needs tK > t0, got [{t0}, {tk}]"
            )));
        }
        Ok(Self { t0, tk })
    }

    pub fn length(&self) -> f64 {
        self.tk - self.t0
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.tk
    }
}

impl MeasurementSet {
    /// Builds a measurement set; `f0` defaults to `K / (t_K - t_0)`.
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>, f0: Option<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch {
                context: "measurement times vs values".into(),
                expected: times.len().to_string(),
                got: values.len().to_string(),
            });
        }
        if times.len() < 2 {
            return Err(Error::TooFewMeasurements(times.len()));
        }
        for (k, w) in times.windows(2).enumerate() {
            if !(w[1] > w[0]) {
                return Err(Error::NonIncreasingTimes {
                    index: k + 1,
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        let n_y = values[0].len();
        if n_y == 0 || values.iter().any(|v| v.len() != n_y) {
            return Err(Error::DimensionMismatch {
                context: "measurement vectors".into(),
                expected: format!("{n_y} components each"),
                got: "ragged rows".into(),
            });
        }
        if values.iter().flat_map(|v| v.iter()).any(|v| !v.is_finite())
            || times.iter().any(|t| !t.is_finite())
        {
            return Err(Error::NonFinite("measurement data".into()));
        }
        let k = times.len() - 1;
        let f0 = f0.unwrap_or(k as f64 / (times[k] - times[0]));
        if !(f0 > 0.0) || !f0.is_finite() {
            return Err(Error::InvalidParameter(format!("sampling frequency {f0}")));
        }
        Ok(Self { times, values, f0 })
    }

    /// Builds a set that must be uniformly spaced at `1/f0`.
    pub fn uniform(times: Vec<f64>, values: Vec<DVector<f64>>, f0: f64) -> Result<Self> {
        let ms = Self::new(times, values, Some(f0))?;
        if !ms.is_uniform_at(f0) {
            return Err(Error::InvalidParameter(format!(
                "measurement spacing is not 1/f0 = {}",
                1.0 / f0
            )));
        }
        Ok(ms)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }
    pub fn values(&self) -> &[DVector<f64>] {
        &self.values
    }
    pub fn f0(&self) -> f64 {
        self.f0
    }
    /// Number of intervals `K`.
    pub fn intervals(&self) -> usize {
        self.times.len() - 1
    }
    pub fn len(&self) -> usize {
        self.times.len()
    }
    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
    pub fn n_y(&self) -> usize {
        self.values[0].len()
    }
    pub fn horizon(&self) -> TimeHorizon {
        TimeHorizon {
            t0: self.times[0],
            tk: self.times[self.intervals()],
        }
    }

    /// Length of interval `k`.
    pub fn gap(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    /// Likelihood weight of interval `k`: `1 / (t_{k+1} - t_k)`, which is
    /// `f0` on a uniform grid. Non-uniform spacing is an extension beyond
    /// the uniform-sampling objective.
    pub fn interval_weight(&self, k: usize) -> f64 {
        1.0 / self.gap(k)
    }

    pub fn is_uniform_at(&self, f0: f64) -> bool {
        let h = 1.0 / f0;
        self.times
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= UNIFORM_RTOL * h)
    }

    /// Index of the interval containing `t` (interior knots belong to the
    /// interval on their right, `t_K` to the last interval).
    pub fn interval_of(&self, t: f64) -> Result<usize> {
        let hz = self.horizon();
        if !hz.contains(t) {
            return Err(Error::OutsideHorizon {
                t,
                t0: hz.t0,
                tk: hz.tk,
            });
        }
        let k = self.times.partition_point(|&tk| tk <= t);
        Ok(k.saturating_sub(1).min(self.intervals() - 1))
    }

    pub fn with_values(&self, values: Vec<DVector<f64>>) -> Result<Self> {
        Self::new(self.times.clone(), values, Some(self.f0))
    }

    /// Reads `t,y1,...,yn` CSV.
    pub fn read_csv<R: Read>(reader: R, f0: Option<f64>) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "t" {
            return Err(Error::Csv(format!(
                "expected header t,y1,...,yn, got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let nums: std::result::Result<Vec<f64>, _> =
                rec.iter().map(|s| s.parse::<f64>()).collect();
            let nums = nums.map_err(|e| Error::Csv(format!("row {}: {e}", line + 2)))?;
            if nums.len() != headers.len() {
                return Err(Error::Csv(format!("row {} has {} fields", line + 2, nums.len())));
            }
            times.push(nums[0]);
            values.push(DVector::from_column_slice(&nums[1..]));
        }
        Self::new(times, values, f0)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.n_y()).map(|i| format!("y{i}")));
        wtr.write_record(&header)?;
        for (t, y) in self.times.iter().zip(&self.values) {
            let mut row = vec![fmt_f64(*t)];
            row.extend(y.iter().map(|v| fmt_f64(*v)));
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Shortest round-trip decimal representation.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
