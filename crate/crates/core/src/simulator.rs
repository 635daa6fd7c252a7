//! Two-class classification (TCC) simulator.
//!
//! Latent points come from a two-component Gaussian mixture and are pushed
//! through an invertible warp `T(x) = g(A x + b)`, where `g` is a fixed
//! bijection of the plane. Because the same bijection is applied to both
//! classes its Jacobian cancels in the Bayes ratio, so the class posterior in
//! feature space is the latent-space posterior evaluated at `T⁻¹(z)`.

use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{clamp_prob, logistic};
use crate::rng::{rng_from_seed, Rng};

pub type Point = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];

const MIN_ABS_DET: f64 = 1e-12;

/// Invertible nonlinearity applied after the affine part of the warp.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Nonlinearity {
    Identity,
    /// `u ↦ s·asinh(u / s)` on each coordinate.
    Asinh { scale: f64 },
    /// `(u1, u2) ↦ (u1, u2 + amplitude·tanh(u1 / scale))`.
    TanhShear { amplitude: f64, scale: f64 },
}

impl Nonlinearity {
    fn apply(&self, u: Point) -> Point {
        match *self {
            Nonlinearity::Identity => u,
            Nonlinearity::Asinh { scale } => {
                [scale * (u[0] / scale).asinh(), scale * (u[1] / scale).asinh()]
            }
            Nonlinearity::TanhShear { amplitude, scale } => {
                [u[0], u[1] + amplitude * (u[0] / scale).tanh()]
            }
        }
    }

    fn invert(&self, v: Point) -> Point {
        match *self {
            Nonlinearity::Identity => v,
            Nonlinearity::Asinh { scale } => {
                [scale * (v[0] / scale).sinh(), scale * (v[1] / scale).sinh()]
            }
            Nonlinearity::TanhShear { amplitude, scale } => {
                [v[0], v[1] - amplitude * (v[0] / scale).tanh()]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Nonlinearity::Identity => true,
            Nonlinearity::Asinh { scale } => scale.is_finite() && scale > 0.0,
            Nonlinearity::TanhShear { amplitude, scale } => {
                amplitude.is_finite() && scale.is_finite() && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid nonlinearity parameters: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WarpSpec {
    pub affine: Mat2,
    pub offset: Point,
    pub nonlinearity: Nonlinearity,
}

impl WarpSpec {
    pub fn identity() -> Self {
        WarpSpec {
            affine: [[1.0, 0.0], [0.0, 1.0]],
            offset: [0.0, 0.0],
            nonlinearity: Nonlinearity::Identity,
        }
    }

    fn det(&self) -> f64 {
        let a = self.affine;
        a[0][0] * a[1][1] - a[0][1] * a[1][0]
    }

    pub fn validate(&self) -> Result<()> {
        let det = self.det();
        if !det.is_finite() || det.abs() < MIN_ABS_DET {
            return Err(Error::Config(format!(
                "warp affine part is not invertible (det = {det:e})"
            )));
        }
        if !self.offset.iter().all(|v| v.is_finite()) {
            return Err(Error::Config("warp offset must be finite".into()));
        }
        self.nonlinearity.validate()
    }

    /// Latent to feature space.
    pub fn forward(&self, x: Point) -> Point {
        let a = self.affine;
        let u = [
            a[0][0] * x[0] + a[0][1] * x[1] + self.offset[0],
            a[1][0] * x[0] + a[1][1] * x[1] + self.offset[1],
        ];
        self.nonlinearity.apply(u)
    }

    /// Feature to latent space.
    pub fn inverse(&self, z: Point) -> Point {
        let u = self.nonlinearity.invert(z);
        let a = self.affine;
        let det = self.det();
        let (d0, d1) = (u[0] - self.offset[0], u[1] - self.offset[1]);
        [
            (a[1][1] * d0 - a[0][1] * d1) / det,
            (-a[1][0] * d0 + a[0][0] * d1) / det,
        ]
    }
}

impl Default for WarpSpec {
    fn default() -> Self {
        WarpSpec {
            affine: [[1.0, 0.5], [0.0, 1.0]],
            offset: [0.0, 0.0],
            nonlinearity: Nonlinearity::Asinh { scale: 1.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TccConfig {
    pub mean0: Point,
    pub mean1: Point,
    pub cov0: Mat2,
    pub cov1: Mat2,
    pub class1_proportion: f64,
    pub warp: WarpSpec,
    pub seed: u64,
}

impl Default for TccConfig {
    fn default() -> Self {
        TccConfig {
            mean0: [-1.0, 0.0],
            mean1: [1.0, 0.0],
            cov0: [[1.0, 0.0], [0.0, 1.0]],
            cov1: [[1.0, 0.0], [0.0, 1.0]],
            class1_proportion: 0.5,
            warp: WarpSpec::default(),
            seed: 0,
        }
    }
}

/// Lower Cholesky factor `[l00, l10, l11]` of a 2×2 SPD matrix.
fn cholesky2(m: &Mat2) -> Option<[f64; 3]> {
    if !m.iter().flatten().all(|v| v.is_finite()) {
        return None;
    }
    if (m[0][1] - m[1][0]).abs() > 1e-12 * (1.0 + m[0][1].abs()) {
        return None;
    }
    if m[0][0] <= 0.0 {
        return None;
    }
    let l00 = m[0][0].sqrt();
    let l10 = m[1][0] / l00;
    let d = m[1][1] - l10 * l10;
    if d <= 0.0 {
        return None;
    }
    Some([l00, l10, d.sqrt()])
}

#[derive(Debug, Clone, Copy)]
struct Gaussian2 {
    mean: Point,
    chol: [f64; 3],
    log_norm: f64,
}

impl Gaussian2 {
    fn new(mean: Point, cov: &Mat2, name: &str) -> Result<Self> {
        let chol = cholesky2(cov)
            .ok_or_else(|| Error::Config(format!("{name} is not symmetric positive definite")))?;
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::Config(format!("mean for {name} must be finite")));
        }
        let log_det = 2.0 * (chol[0].ln() + chol[2].ln());
        let log_norm = -(2.0 * std::f64::consts::PI).ln() - 0.5 * log_det;
        Ok(Gaussian2 { mean, chol, log_norm })
    }

    fn log_density(&self, x: Point) -> f64 {
        let d0 = x[0] - self.mean[0];
        let d1 = x[1] - self.mean[1];
        let w0 = d0 / self.chol[0];
        let w1 = (d1 - self.chol[1] * w0) / self.chol[2];
        self.log_norm - 0.5 * (w0 * w0 + w1 * w1)
    }

    fn sample(&self, rng: &mut Rng) -> Point {
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        [
            self.mean[0] + self.chol[0] * e0,
            self.mean[1] + self.chol[1] * e0 + self.chol[2] * e1,
        ]
    }
}

/// Validated form of a [`TccConfig`] with factored covariances.
#[derive(Debug, Clone)]
pub struct Tcc {
    config: TccConfig,
    class0: Gaussian2,
    class1: Gaussian2,
    prior_logit: f64,
}

impl Tcc {
    pub fn new(config: &TccConfig) -> Result<Self> {
        let p = config.class1_proportion;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Config(format!(
                "class1_proportion must lie in (0, 1), got {p}"
            )));
        }
        config.warp.validate()?;
        Ok(Tcc {
            class0: Gaussian2::new(config.mean0, &config.cov0, "cov0")?,
            class1: Gaussian2::new(config.mean1, &config.cov1, "cov1")?,
            prior_logit: (p / (1.0 - p)).ln(),
            config: config.clone(),
        })
    }

    pub fn config(&self) -> &TccConfig {
        &self.config
    }

    /// `P(Y = 1 | z)` for a feature-space point, clamped into `[1e-12, 1 - 1e-12]`.
    pub fn true_prob(&self, z: Point) -> f64 {
        let x = self.config.warp.inverse(z);
        let logit =
            self.prior_logit + self.class1.log_density(x) - self.class0.log_density(x);
        clamp_prob(logistic(logit))
    }

    pub fn sample_with(&self, n: usize, rng: &mut Rng) -> Result<Dataset> {
        if n == 0 {
            return Err(Error::Precondition("simulate requires n >= 1".into()));
        }
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut true_probs = Vec::with_capacity(n);
        for _ in 0..n {
            let y = rng.gen_bool(self.config.class1_proportion);
            let latent = if y {
                self.class1.sample(rng)
            } else {
                self.class0.sample(rng)
            };
            let z = self.config.warp.forward(latent);
            features.push(z);
            labels.push(u8::from(y));
            true_probs.push(self.true_prob(z));
        }
        Ok(Dataset {
            features,
            labels,
            true_probs: Some(true_probs),
        })
    }
}

/// Draws `n` labelled points using the stream keyed by `config.seed`.
pub fn simulate(config: &TccConfig, n: usize) -> Result<Dataset> {
    let tcc = Tcc::new(config)?;
    tcc.sample_with(n, &mut rng_from_seed(config.seed))
}

pub fn true_prob(config: &TccConfig, z: Point) -> Result<f64> {
    Ok(Tcc::new(config)?.true_prob(z))
}

/// Axis-aligned rectangle `[[x1_min, x1_max], [x2_min, x2_max]]`.
pub type Bounds = [[f64; 2]; 2];

/// Regular grid over `bounds`, row-major with `x1` varying fastest.
pub fn grid_points(bounds: &Bounds, resolution: usize) -> Result<Vec<Point>> {
    if resolution < 2 {
        return Err(Error::Precondition("grid resolution must be >= 2".into()));
    }
    for (axis, b) in bounds.iter().enumerate() {
        if !(b[0].is_finite() && b[1].is_finite()) || b[0] >= b[1] {
            return Err(Error::Config(format!(
                "grid bounds for x{} must satisfy min < max, got {:?}",
                axis + 1,
                b
            )));
        }
    }
    let axis = |b: [f64; 2], k: usize| {
        if k == resolution - 1 {
            b[1]
        } else {
            b[0] + (b[1] - b[0]) * k as f64 / (resolution - 1) as f64
        }
    };
    let mut pts = Vec::with_capacity(resolution * resolution);
    for j in 0..resolution {
        for i in 0..resolution {
            pts.push([axis(bounds[0], i), axis(bounds[1], j)]);
        }
    }
    Ok(pts)
}

pub fn eval_grid(
    config: &TccConfig,
    bounds: &Bounds,
    resolution: usize,
) -> Result<(Vec<Point>, Vec<f64>)> {
    let tcc = Tcc::new(config)?;
    let pts = grid_points(bounds, resolution)?;
    let probs = pts.iter().map(|&z| tcc.true_prob(z)).collect();
    Ok((pts, probs))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Vec<Point>,
    pub labels: Vec<u8>,
    pub true_probs: Option<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    x1: f64,
    x2: f64,
    y: u8,
    true_prob: Option<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.features.len() {
            return Err(Error::Data(format!(
                "{} feature rows but {} labels",
                self.features.len(),
                self.labels.len()
            )));
        }
        if let Some(i) = self.labels.iter().position(|&y| y > 1) {
            return Err(Error::Data(format!(
                "label {} at row {i} is not binary",
                self.labels[i]
            )));
        }
        if let Some(tp) = &self.true_probs {
            if tp.len() != self.features.len() {
                return Err(Error::Data("true_probs length mismatch".into()));
            }
            if let Some(i) = tp.iter().position(|&p| !(p > 0.0 && p < 1.0)) {
                return Err(Error::Data(format!(
                    "true_prob {} at row {i} outside (0, 1)",
                    tp[i]
                )));
            }
        }
        Ok(())
    }

    /// Rows selected by `indices`, in that order (duplicates allowed).
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: indices.iter().map(|&i| self.features[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            true_probs: self
                .true_probs
                .as_ref()
                .map(|tp| indices.iter().map(|&i| tp[i]).collect()),
        }
    }

    pub fn centroid(&self) -> Point {
        let n = self.len() as f64;
        let xs: Vec<f64> = self.features.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = self.features.iter().map(|p| p[1]).collect();
        [
            crate::numeric::pairwise_sum(&xs) / n,
            crate::numeric::pairwise_sum(&ys) / n,
        ]
    }

    /// Writes `x1,x2,y,true_prob` with 17 significant digits.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv_to(file)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }

    fn write_csv_to<W: std::io::Write>(&self, w: W) -> std::result::Result<(), csv::Error> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["x1", "x2", "y", "true_prob"])?;
        for i in 0..self.len() {
            let tp = match &self.true_probs {
                Some(tp) => fmt17(tp[i]),
                None => String::new(),
            };
            wtr.write_record([
                fmt17(self.features[i][0]),
                fmt17(self.features[i][1]),
                self.labels[i].to_string(),
                tp,
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
            path: path.into(),
            msg: e.to_string(),
        })?;
        let headers = rdr
            .headers()
            .map_err(|e| Error::Parse { path: path.into(), msg: e.to_string() })?
            .clone();
        if headers.iter().collect::<Vec<_>>() != ["x1", "x2", "y", "true_prob"] {
            return Err(Error::Parse {
                path: path.into(),
                msg: format!("unexpected header {headers:?}"),
            });
        }
        let mut ds = Dataset { features: vec![], labels: vec![], true_probs: Some(vec![]) };
        let mut any_missing = false;
        for row in rdr.deserialize::<CsvRow>() {
            let row = row.map_err(|e| Error::Parse { path: path.into(), msg: e.to_string() })?;
            ds.features.push([row.x1, row.x2]);
            ds.labels.push(row.y);
            match row.true_prob {
                Some(p) => ds.true_probs.as_mut().unwrap().push(p),
                None => any_missing = true,
            }
        }
        if any_missing {
            ds.true_probs = None;
        }
        ds.validate()?;
        Ok(ds)
    }
}

/// Scientific notation with 17 significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}
