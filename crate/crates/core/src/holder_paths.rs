//! Grid-sampled Hölder drivers: storage, generators (fractional Brownian
//! motion, Weierstrass, smooth), a Hölder-exponent estimator, and the
//! columnar CSV + JSON sidecar file format.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gap between the Hurst index and the declared exponent of an fBm path.
pub const FBM_ALPHA_MARGIN: f64 = 0.01;

/// Block length used by the max-increment estimator.
pub const ESTIMATOR_BLOCK: usize = 16;

/// Provenance stored in the JSON sidecar.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PathMeta {
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    pub method: Option<String>,
}

/// A driver or trajectory sampled on a strictly increasing grid, with a
/// declared Hölder exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPath {
    times: Vec<f64>,
    values: Vec<f64>,
    dim: usize,
    alpha: f64,
    meta: PathMeta,
}

pub fn uniform_times(n: usize, horizon: f64) -> Vec<f64> {
    let denom = (n - 1) as f64;
    // (horizon * i) / (n - 1) keeps dyadic refinements bit-identical at shared nodes.
    (0..n).map(|i| (horizon * i as f64) / denom).collect()
}

impl SampledPath {
    /// `values` is row-major: node `i` occupies `values[i*dim..(i+1)*dim]`.
    pub fn new(times: Vec<f64>, values: Vec<f64>, dim: usize, alpha: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("path dimension must be positive".into()));
        }
        if times.is_empty() {
            return Err(Error::InvalidParameter("path needs at least one node".into()));
        }
        if values.len() != times.len() * dim {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} nodes of dimension {dim}",
                values.len(),
                times.len()
            )));
        }
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "declared Hölder exponent {alpha} outside (1/2, 1]"
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || times[0] != 0.0 {
            return Err(Error::InvalidParameter("grid must start at 0 and be finite".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("path values must be finite".into()));
        }
        Ok(Self {
            times,
            values,
            dim,
            alpha,
            meta: PathMeta::default(),
        })
    }

    /// Sample `f` on the grid.
    pub fn from_fn<F>(times: Vec<f64>, dim: usize, alpha: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity(times.len() * dim);
        for &t in &times {
            let v = f(t);
            if v.len() != dim {
                return Err(Error::DimensionMismatch(format!(
                    "sampler returned {} components, expected {dim}",
                    v.len()
                )));
            }
            values.extend(v);
        }
        Self::new(times, values, dim, alpha)
    }

    pub fn from_points(times: Vec<f64>, points: &[DVector<f64>], alpha: f64) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        let mut values = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch("ragged points".into()));
            }
            values.extend(p.iter());
        }
        Self::new(times, values, dim, alpha)
    }

    pub fn with_meta(mut self, meta: PathMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.5 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "declared Hölder exponent {alpha} outside (1/2, 1]"
            )));
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn meta(&self) -> &PathMeta {
        &self.meta
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn raw_values(&self) -> &[f64] {
        &self.values
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vector(&self, i: usize) -> DVector<f64> {
        DVector::from_column_slice(self.point(i))
    }

    /// First component at node `i`; the scalar driver of linear systems.
    pub fn scalar(&self, i: usize) -> f64 {
        self.values[i * self.dim]
    }

    /// `Z(t_{i+1}) − Z(t_i)`.
    pub fn increment(&self, i: usize) -> DVector<f64> {
        DVector::from_fn(self.dim, |k, _| {
            self.values[(i + 1) * self.dim + k] - self.values[i * self.dim + k]
        })
    }

    pub fn points(&self) -> Vec<DVector<f64>> {
        (0..self.len()).map(|i| self.vector(i)).collect()
    }

    /// Every `step`-th node (the last node must be on the sub-grid).
    pub fn subsample(&self, step: usize) -> Result<Self> {
        if step == 0 || !(self.len() - 1).is_multiple_of(step) {
            return Err(Error::InvalidParameter(format!(
                "step {step} does not divide {} intervals",
                self.len() - 1
            )));
        }
        let idx: Vec<usize> = (0..self.len()).step_by(step).collect();
        let times = idx.iter().map(|&i| self.times[i]).collect();
        let values = idx.iter().flat_map(|&i| self.point(i).to_vec()).collect();
        Ok(Self::new(times, values, self.dim, self.alpha)?.with_meta(self.meta.clone()))
    }

    /// Nodes `start..=end`, re-based so the sub-path starts at time 0.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end >= self.len() {
            return Err(Error::InvalidParameter(format!("bad slice {start}..={end}")));
        }
        let t0 = self.times[start];
        let times = self.times[start..=end].iter().map(|t| t - t0).collect();
        let values = self.values[start * self.dim..(end + 1) * self.dim].to_vec();
        Self::new(times, values, self.dim, self.alpha)
    }

    /// Apply a map to every node; the declared exponent is kept (smooth maps
    /// preserve Hölder regularity).
    pub fn map<F>(&self, out_dim: usize, f: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity(self.len() * out_dim);
        for i in 0..self.len() {
            let v = f(self.point(i));
            if v.len() != out_dim {
                return Err(Error::DimensionMismatch("map output dimension".into()));
            }
            values.extend(v);
        }
        Self::new(self.times.clone(), values, out_dim, self.alpha)
    }

    /// Max over dyadic index scales of ‖ΔZ‖ / Δt^α.
    pub fn holder_ratio(&self, alpha: f64) -> f64 {
        let n = self.len();
        let mut best: f64 = 0.0;
        let mut h = 1;
        while h < n {
            for i in 0..n - h {
                let dt = self.times[i + h] - self.times[i];
                let dz = self.distance(i, i + h);
                best = best.max(dz / dt.powf(alpha));
            }
            h *= 2;
        }
        best
    }

    fn distance(&self, i: usize, j: usize) -> f64 {
        self.point(i)
            .iter()
            .zip(self.point(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// Piecewise-linear value at an arbitrary time inside the grid.
    pub fn interpolate(&self, t: f64) -> DVector<f64> {
        let idx = match self
            .times
            .binary_search_by(|s| s.partial_cmp(&t).unwrap())
        {
            Ok(i) => return self.vector(i),
            Err(i) => i,
        };
        if idx == 0 {
            return self.vector(0);
        }
        if idx >= self.len() {
            return self.vector(self.len() - 1);
        }
        let (t0, t1) = (self.times[idx - 1], self.times[idx]);
        let w = (t - t0) / (t1 - t0);
        self.vector(idx - 1) * (1.0 - w) + self.vector(idx) * w
    }
}

/// Which factorization produced an fBm sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FbmMethod {
    CirculantEmbedding,
    Cholesky,
}

impl FbmMethod {
    pub fn name(self) -> &'static str {
        match self {
            FbmMethod::CirculantEmbedding => "circulant_embedding",
            FbmMethod::Cholesky => "cholesky",
        }
    }
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
fn fgn_autocov(hurst: f64, k: usize) -> f64 {
    let k = k as f64;
    let h2 = 2.0 * hurst;
    0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Davies–Harte: `None` when the circulant embedding is not nonnegative.
fn fgn_circulant(hurst: f64, count: usize, rng: &mut ChaCha8Rng) -> Option<Vec<f64>> {
    let m = 2 * count;
    let mut c: Vec<Complex64> = (0..m)
        .map(|j| {
            let lag = if j <= count { j } else { m - j };
            Complex64::new(fgn_autocov(hurst, lag), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    fft.process(&mut c);
    let scale = c.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if c.iter().any(|z| z.re < -1e-10 * scale) {
        return None;
    }
    let mut w: Vec<Complex64> = c
        .iter()
        .map(|z| {
            let a: f64 = StandardNormal.sample(rng);
            let b: f64 = StandardNormal.sample(rng);
            Complex64::new(a, b) * (z.re.max(0.0) / m as f64).sqrt()
        })
        .collect();
    fft.process(&mut w);
    Some(w[..count].iter().map(|z| z.re).collect())
}

fn fgn_cholesky(hurst: f64, count: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let cov = nalgebra::DMatrix::from_fn(count, count, |i, j| {
        fgn_autocov(hurst, i.abs_diff(j))
    });
    let chol = cov
        .cholesky()
        .ok_or_else(|| Error::Numerical("fGn covariance is not positive definite".into()))?;
    let xi = DVector::from_fn(count, |_, _| {
        let v: f64 = StandardNormal.sample(rng);
        v
    });
    Ok((chol.l() * xi).iter().cloned().collect())
}

/// One fBm sample path with Hurst index `hurst` on `n` uniform nodes of
/// `[0, horizon]`, `dim` independent components. Circulant embedding runs
/// first; the exact Cholesky factorization is the fallback.
pub fn gen_fbm(hurst: f64, n: usize, horizon: f64, seed: u64, dim: usize) -> Result<SampledPath> {
    gen_fbm_using(hurst, n, horizon, seed, dim, FbmMethod::CirculantEmbedding)
}

/// As [`gen_fbm`] with an explicit preferred method.
pub fn gen_fbm_using(
    hurst: f64,
    n: usize,
    horizon: f64,
    seed: u64,
    dim: usize,
    preferred: FbmMethod,
) -> Result<SampledPath> {
    if !(hurst > 0.5 && hurst < 1.0) {
        return Err(Error::InvalidParameter(format!("Hurst index {hurst} outside (1/2, 1)")));
    }
    if n < 2 || !(n - 1).is_power_of_two() {
        return Err(Error::InvalidParameter(format!(
            "node count {n} must be a power of two plus one"
        )));
    }
    if !(horizon > 0.0 && horizon.is_finite()) || dim == 0 {
        return Err(Error::InvalidParameter("horizon must be positive, dim ≥ 1".into()));
    }
    let count = n - 1;
    let dt = horizon / count as f64;
    let step_scale = dt.powf(hurst);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut method = preferred;
    let mut columns = Vec::with_capacity(dim);
    for _ in 0..dim {
        let noise = match method {
            FbmMethod::CirculantEmbedding => match fgn_circulant(hurst, count, &mut rng) {
                Some(v) => v,
                None => {
                    method = FbmMethod::Cholesky;
                    fgn_cholesky(hurst, count, &mut rng)?
                }
            },
            FbmMethod::Cholesky => fgn_cholesky(hurst, count, &mut rng)?,
        };
        columns.push(noise);
    }
    let mut values = vec![0.0; n * dim];
    for (k, noise) in columns.iter().enumerate() {
        let mut acc = 0.0;
        for (i, g) in noise.iter().enumerate() {
            acc += g * step_scale;
            values[(i + 1) * dim + k] = acc;
        }
    }
    let meta = PathMeta {
        generator: "fbm".into(),
        params: serde_json::json!({"hurst": hurst, "n": n, "T": horizon, "dim": dim}),
        seed: Some(seed),
        method: Some(method.name().into()),
    };
    Ok(
        SampledPath::new(uniform_times(n, horizon), values, dim, hurst - FBM_ALPHA_MARGIN)?
            .with_meta(meta),
    )
}

/// Declared exponent `log(1/a)/log(b)` of the Weierstrass function, unclamped.
pub fn weierstrass_exponent(a: f64, b: f64) -> f64 {
    (1.0 / a).ln() / b.ln()
}

/// Samples of `W(t) = Σ_k a^k cos(b^k π t)`, truncated once `a^k < 1e-16`.
pub fn gen_weierstrass(a: f64, b: f64, n: usize, horizon: f64) -> Result<SampledPath> {
    if !(a > 0.0 && a < 1.0) || !(b > 1.0) || !b.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "Weierstrass parameters need 0 < a < 1 < b (got a={a}, b={b})"
        )));
    }
    if n < 2 || !(horizon > 0.0) {
        return Err(Error::InvalidParameter("need n ≥ 2 and positive horizon".into()));
    }
    let exponent = weierstrass_exponent(a, b);
    if exponent <= 0.5 {
        return Err(Error::InvalidParameter(format!(
            "Weierstrass exponent {exponent:.4} ≤ 1/2 is outside the Young regime"
        )));
    }
    let terms = ((1e-16f64).ln() / a.ln()).ceil().min(2000.0) as usize;
    let times = uniform_times(n, horizon);
    let pi = std::f64::consts::PI;
    let path = SampledPath::from_fn(times, 1, exponent.min(1.0), |t| {
        let mut sum = 0.0;
        let mut amp = 1.0;
        let mut freq = 1.0;
        for _ in 0..=terms {
            sum += amp * (freq * pi * t).cos();
            amp *= a;
            freq *= b;
        }
        vec![sum]
    })?;
    Ok(path.with_meta(PathMeta {
        generator: "weierstrass".into(),
        params: serde_json::json!({"a": a, "b": b, "n": n, "T": horizon, "terms": terms}),
        seed: None,
        method: None,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SmoothKind {
    Linear { slope: f64 },
    /// `amp · sin(freq · t)`
    Sine { amp: f64, freq: f64 },
    /// `Σ coeffs[j] t^j`
    Polynomial { coeffs: Vec<f64> },
}

impl SmoothKind {
    pub fn eval(&self, t: f64) -> f64 {
        match self {
            SmoothKind::Linear { slope } => slope * t,
            SmoothKind::Sine { amp, freq } => amp * (freq * t).sin(),
            SmoothKind::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c),
        }
    }
}

/// Exact samples of a smooth scalar driver; declared exponent 1.
pub fn gen_smooth(kind: &SmoothKind, n: usize, horizon: f64) -> Result<SampledPath> {
    if n < 2 || !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter("need n ≥ 2 and positive horizon".into()));
    }
    let finite = match kind {
        SmoothKind::Linear { slope } => slope.is_finite(),
        SmoothKind::Sine { amp, freq } => amp.is_finite() && freq.is_finite(),
        SmoothKind::Polynomial { coeffs } => coeffs.iter().all(|c| c.is_finite()),
    };
    if !finite {
        return Err(Error::InvalidParameter("smooth path parameters must be finite".into()));
    }
    let path = SampledPath::from_fn(uniform_times(n, horizon), 1, 1.0, |t| vec![kind.eval(t)])?;
    Ok(path.with_meta(PathMeta {
        generator: "smooth".into(),
        params: serde_json::json!({"shape": kind, "n": n, "T": horizon}),
        seed: None,
        method: None,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HolderEstimate {
    pub exponent: f64,
    /// The path is constant; `exponent` is reported as 1.
    pub degenerate: bool,
    /// (log time-scale, log block-max increment) per dyadic scale.
    pub points: Vec<(f64, f64)>,
}

/// Least-squares slope.
pub fn regression_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Slope of log(max increment) against log(time scale) over dyadic index
/// scales `h = min_scale · 2^j`.
///
/// At each scale the non-overlapping increments are grouped in blocks of
/// [`ESTIMATOR_BLOCK`]; the statistic is the mean of the block maxima. A fixed
/// block length keeps the extreme-value factor identical across scales, so a
/// self-similar path yields its exponent without a logarithmic bias.
pub fn estimate_holder(path: &SampledPath, min_scale: usize) -> Result<HolderEstimate> {
    if path.len() < 64 {
        return Err(Error::InvalidParameter(format!(
            "Hölder estimation needs at least 64 nodes, got {}",
            path.len()
        )));
    }
    let min_scale = min_scale.max(1);
    let intervals = path.len() - 1;
    let mean_dt = path.horizon() / intervals as f64;
    let mut points = Vec::new();
    let mut all_zero = true;
    let mut h = min_scale;
    while intervals / h >= ESTIMATOR_BLOCK {
        let incs: Vec<f64> = (0..intervals / h)
            .map(|j| path.distance(j * h, (j + 1) * h))
            .collect();
        let maxima: Vec<f64> = incs
            .chunks_exact(ESTIMATOR_BLOCK)
            .map(|c| c.iter().cloned().fold(0.0, f64::max))
            .collect();
        let mean = maxima.iter().sum::<f64>() / maxima.len() as f64;
        if mean > 0.0 {
            all_zero = false;
            points.push(((h as f64 * mean_dt).ln(), mean.ln()));
        }
        h *= 2;
    }
    if all_zero {
        return Ok(HolderEstimate {
            exponent: 1.0,
            degenerate: true,
            points,
        });
    }
    if points.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "min_scale {min_scale} leaves fewer than two dyadic scales"
        )));
    }
    let slope = regression_slope(&points);
    Ok(HolderEstimate {
        exponent: slope.clamp(f64::EPSILON, 1.0),
        degenerate: false,
        points,
    })
}

// ---------------------------------------------------------------------------
// Files

/// JSON sidecar written next to every CSV path file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub alpha: f64,
    pub generator: String,
    pub params: serde_json::Value,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,
}

pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Render as CSV: header `t,z_1,…,z_d`, 17 significant digits.
pub fn to_csv_string(path: &SampledPath) -> String {
    let mut out = String::with_capacity(path.len() * (path.dim() + 1) * 24);
    out.push('t');
    for k in 1..=path.dim() {
        out.push_str(&format!(",z_{k}"));
    }
    out.push('\n');
    for i in 0..path.len() {
        out.push_str(&format!("{:.16e}", path.times[i]));
        for v in path.point(i) {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    out
}

pub fn sidecar_of(path: &SampledPath) -> Sidecar {
    Sidecar {
        alpha: path.alpha,
        generator: path.meta.generator.clone(),
        params: path.meta.params.clone(),
        seed: path.meta.seed,
        method: path.meta.method.clone(),
    }
}

pub fn write_path(path: &SampledPath, csv_path: &Path) -> Result<()> {
    let mut f = fs::File::create(csv_path)?;
    f.write_all(to_csv_string(path).as_bytes())?;
    let side = serde_json::to_string_pretty(&sidecar_of(path))?;
    fs::write(sidecar_path(csv_path), side + "\n")?;
    Ok(())
}

/// Raw CSV contents: times and row-major values.
pub struct CsvColumns {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub dim: usize,
}

pub fn parse_csv(text: &str) -> Result<CsvColumns> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() < 2 {
        return Err(Error::Parse("CSV needs a time column and at least one value column".into()));
    }
    let dim = headers.len() - 1;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::Parse(format!("row {} has {} fields", line + 1, rec.len())));
        }
        for (k, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::Parse(format!("row {}: bad number {field:?}", line + 1)))?;
            if k == 0 {
                times.push(v);
            } else {
                values.push(v);
            }
        }
    }
    if times.is_empty() {
        return Err(Error::Parse("CSV has no data rows".into()));
    }
    Ok(CsvColumns { times, values, dim })
}

/// Read a path file. The declared exponent comes from `alpha` when given,
/// else from the sidecar; `Ok(None)` alpha in the result means neither exists.
pub fn read_path(csv_path: &Path, alpha: Option<f64>) -> Result<(CsvColumns, Option<Sidecar>, Option<f64>)> {
    let text = fs::read_to_string(csv_path)?;
    let cols = parse_csv(&text)?;
    let side_file = sidecar_path(csv_path);
    let sidecar: Option<Sidecar> = if side_file.exists() {
        Some(serde_json::from_str(&fs::read_to_string(side_file)?)?)
    } else {
        None
    };
    let alpha = alpha.or(sidecar.as_ref().map(|s| s.alpha));
    Ok((cols, sidecar, alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constructor_rejects_bad_grids() {
        assert!(SampledPath::new(vec![0.0, 0.0], vec![0.0, 1.0], 1, 1.0).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![0.0], 1, 1.0).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![0.0, f64::NAN], 1, 1.0).is_err());
        assert!(SampledPath::new(vec![0.0, 1.0], vec![0.0, 1.0], 1, 0.5).is_err());
        assert!(SampledPath::new(vec![0.5, 1.0], vec![0.0, 1.0], 1, 1.0).is_err());
    }

    #[test]
    fn smooth_examples() {
        let lin = gen_smooth(&SmoothKind::Linear { slope: 1.0 }, 11, 1.0).unwrap();
        for i in 0..11 {
            assert_relative_eq!(lin.scalar(i), i as f64 / 10.0, epsilon = 1e-15);
        }
        let tau = 2.0 * std::f64::consts::PI;
        let sine = gen_smooth(&SmoothKind::Sine { amp: 1.0, freq: 1.0 }, 101, tau).unwrap();
        assert!(sine.scalar(100).abs() < 1e-12);
        let quad = gen_smooth(&SmoothKind::Polynomial { coeffs: vec![0.0, 0.0, 1.0] }, 3, 1.0).unwrap();
        assert_eq!(
            (0..3).map(|i| quad.scalar(i)).collect::<Vec<_>>(),
            vec![0.0, 0.25, 1.0]
        );
        assert_eq!(quad.alpha(), 1.0);
    }

    #[test]
    fn smooth_refinement_matches_shared_nodes() {
        let kind = SmoothKind::Sine { amp: 0.7, freq: 3.3 };
        let coarse = gen_smooth(&kind, 33, 2.5).unwrap();
        let fine = gen_smooth(&kind, 257, 2.5).unwrap();
        for i in 0..33 {
            assert_eq!(coarse.times()[i], fine.times()[8 * i]);
            assert_eq!(coarse.scalar(i), fine.scalar(8 * i));
        }
    }

    #[test]
    fn fbm_starts_at_origin_and_is_deterministic() {
        let a = gen_fbm(0.75, 1025, 1.0, 42, 2).unwrap();
        let b = gen_fbm(0.75, 1025, 1.0, 42, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.point(0), &[0.0, 0.0]);
        assert_eq!(a.meta().method.as_deref(), Some("circulant_embedding"));
        assert_relative_eq!(a.alpha(), 0.74, epsilon = 1e-15);
        let c = gen_fbm(0.75, 1025, 1.0, 43, 2).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn fbm_rejects_bad_inputs() {
        assert!(gen_fbm(0.5, 1025, 1.0, 1, 1).is_err());
        assert!(gen_fbm(1.0, 1025, 1.0, 1, 1).is_err());
        assert!(gen_fbm(0.7, 1000, 1.0, 1, 1).is_err());
        assert!(gen_fbm(0.7, 1025, 0.0, 1, 1).is_err());
    }

    /// Sample variance of fBm at T matches T^{2H} for both factorizations.
    #[test]
    fn fbm_terminal_variance() {
        for method in [FbmMethod::CirculantEmbedding, FbmMethod::Cholesky] {
            let horizon = 2.0;
            let samples: Vec<f64> = (0..400)
                .map(|s| {
                    let p = gen_fbm_using(0.8, 65, horizon, s, 1, method).unwrap();
                    p.scalar(64)
                })
                .collect();
            let var = samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64;
            let expected = horizon.powf(1.6);
            assert!(
                (var / expected - 1.0).abs() < 0.2,
                "{method:?}: variance {var} vs {expected}"
            );
        }
    }

    #[test]
    fn fbm_circulant_embedding_is_nonnegative_for_persistent_noise() {
        for &h in &[0.51, 0.6, 0.75, 0.9, 0.99] {
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            assert!(fgn_circulant(h, 256, &mut rng).is_some(), "H = {h}");
        }
    }

    #[test]
    fn weierstrass_exponent_gate() {
        assert!(gen_weierstrass(0.5, 7.0, 4096, 1.0).is_err());
        assert_relative_eq!(weierstrass_exponent(0.5, 7.0), 2f64.ln() / 7f64.ln());
        assert!(gen_weierstrass(0.6, 3.0, 4096, 1.0).is_err());
        assert_relative_eq!(weierstrass_exponent(0.6, 3.0), 0.46497, epsilon = 1e-5);
        assert!(gen_weierstrass(0.8, 3.0, 4096, 1.0).is_err());
        assert!(gen_weierstrass(0.7, 3.0, 4096, 1.0).is_err());
        let w = gen_weierstrass(0.9, 1.1, 4096, 1.0).unwrap();
        assert_eq!(w.alpha(), 1.0);
        let w = gen_weierstrass(0.8, 1.5, 4096, 1.0).unwrap();
        assert_relative_eq!(w.alpha(), 1.25f64.ln() / 1.5f64.ln(), epsilon = 1e-15);
        // W(0) = Σ a^k = 1/(1 − a) up to truncation.
        assert_relative_eq!(w.scalar(0), 5.0, epsilon = 1e-12);
    }

    #[test]
    fn estimator_linear_and_constant() {
        let lin = gen_smooth(&SmoothKind::Linear { slope: 3.0 }, 1025, 1.0).unwrap();
        let est = estimate_holder(&lin, 1).unwrap();
        assert!((est.exponent - 1.0).abs() < 0.01);
        assert!(!est.degenerate);
        let flat = gen_smooth(&SmoothKind::Linear { slope: 0.0 }, 1025, 1.0).unwrap();
        let est = estimate_holder(&flat, 1).unwrap();
        assert!(est.degenerate);
        assert_eq!(est.exponent, 1.0);
        let short = gen_smooth(&SmoothKind::Linear { slope: 1.0 }, 63, 1.0).unwrap();
        assert!(estimate_holder(&short, 1).is_err());
    }

    #[test]
    fn fbm_estimate_single_path_in_range() {
        let p = gen_fbm(0.75, 1025, 1.0, 42, 1).unwrap();
        let est = estimate_holder(&p, 1).unwrap().exponent;
        assert!((0.65..=0.85).contains(&est), "estimate {est}");
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let p = gen_fbm(0.7, 33, 1.5, 9, 2).unwrap();
        let cols = parse_csv(&to_csv_string(&p)).unwrap();
        assert_eq!(cols.dim, 2);
        assert_eq!(cols.times, p.times());
        assert_eq!(cols.values, p.raw_values());
    }

    #[test]
    fn csv_rejects_malformed() {
        assert!(parse_csv("t,z_1\n0,1\n0.5,abc\n").is_err());
        assert!(parse_csv("t,z_1\n0,1\n0.5\n").is_err());
        assert!(parse_csv("t,z_1\n").is_err());
    }

    #[test]
    fn slicing_and_subsampling() {
        let p = gen_fbm(0.7, 65, 1.0, 3, 1).unwrap();
        let s = p.subsample(4).unwrap();
        assert_eq!(s.len(), 17);
        assert_eq!(s.scalar(5), p.scalar(20));
        assert!(p.subsample(3).is_err());
        let sl = p.slice(10, 20).unwrap();
        assert_eq!(sl.times()[0], 0.0);
        assert_eq!(sl.scalar(0), p.scalar(10));
        assert_relative_eq!(p.interpolate(p.times()[3])[0], p.scalar(3));
    }
}
