//! Young (Riemann–Stieltjes) integrals of sampled integrands against Hölder
//! drivers, integration of 1-forms along paths, and the change-of-variables
//! residual `F(x_t) − F(x_0) − ∫ DF(x_s) dx_s`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::holder_paths::{regression_slope, SampledPath};

/// Integrand: one linear map ℝ^d → ℝ^m per grid node.
#[derive(Debug, Clone, PartialEq)]
pub struct IntegrandPath {
    times: Vec<f64>,
    values: Vec<DMatrix<f64>>,
    alpha: f64,
}

impl IntegrandPath {
    pub fn new(times: Vec<f64>, values: Vec<DMatrix<f64>>, alpha: f64) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} integrand values for {} nodes",
                values.len(),
                times.len()
            )));
        }
        if times[0] != 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "integrand grid must start at 0 and be strictly increasing".into(),
            ));
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(Error::DimensionMismatch("integrand shapes differ across nodes".into()));
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(Error::InvalidParameter("integrand entries must be finite".into()));
        }
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("integrand exponent {alpha} outside (0, 1]")));
        }
        Ok(Self { times, values, alpha })
    }

    /// The same map at every node of `times`.
    pub fn constant(times: Vec<f64>, map: DMatrix<f64>) -> Result<Self> {
        let values = vec![map; times.len()];
        Self::new(times, values, 1.0)
    }

    /// Evaluate `f` at every node of a path; exponent inherited from the path.
    pub fn along<F>(path: &SampledPath, f: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DMatrix<f64>,
    {
        let values = (0..path.len()).map(|i| f(&path.vector(i))).collect();
        Self::new(path.times().to_vec(), values, path.alpha())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[DMatrix<f64>] {
        &self.values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn out_dim(&self) -> usize {
        self.values[0].nrows()
    }

    pub fn driver_dim(&self) -> usize {
        self.values[0].ncols()
    }

    /// Left piecewise-constant value at `t`.
    fn left_value(&self, t: f64) -> &DMatrix<f64> {
        let idx = match self.times.binary_search_by(|s| s.partial_cmp(&t).unwrap()) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        };
        &self.values[idx]
    }

    /// `a·self + b·other` on a shared grid.
    pub fn combine(&self, a: f64, other: &Self, b: f64) -> Result<Self> {
        if self.times != other.times {
            return Err(Error::DimensionMismatch("combine needs a shared grid".into()));
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| x * a + y * b)
            .collect();
        Self::new(self.times.clone(), values, self.alpha.min(other.alpha))
    }
}

fn check_young(integrand: f64, driver: f64) -> Result<()> {
    if integrand + driver > 1.0 {
        Ok(())
    } else {
        Err(Error::YoungCondition { integrand, driver })
    }
}

fn merge_grids(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (Some(_), Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, Some(&y)) => {
                j += 1;
                y
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    out
}

/// Running left-point Riemann–Stieltjes sum `I_t = Σ Y(s_i)(Z(s_{i+1}) − Z(s_i))`,
/// `I_0 = 0`, reported at every node.
///
/// Distinct grids are merged; the integrand is extended piecewise-constantly
/// from the left and the driver piecewise-linearly.
pub fn young_integrate(y: &IntegrandPath, z: &SampledPath) -> Result<SampledPath> {
    check_young(y.alpha(), z.alpha())?;
    if y.driver_dim() != z.dim() {
        return Err(Error::DimensionMismatch(format!(
            "integrand acts on ℝ^{} but the driver lives in ℝ^{}",
            y.driver_dim(),
            z.dim()
        )));
    }
    let (tz_end, ty_end) = (z.horizon(), *y.times().last().unwrap());
    if (tz_end - ty_end).abs() > 1e-12 * tz_end.abs().max(1.0) {
        return Err(Error::DimensionMismatch(format!(
            "integrand horizon {ty_end} differs from driver horizon {tz_end}"
        )));
    }
    let m = y.out_dim();
    if y.times() == z.times() {
        let mut values = Vec::with_capacity(z.len() * m);
        let mut acc = DVector::<f64>::zeros(m);
        values.extend(acc.iter());
        for i in 0..z.len() - 1 {
            acc += &y.values()[i] * z.increment(i);
            values.extend(acc.iter());
        }
        return SampledPath::new(z.times().to_vec(), values, m, z.alpha());
    }
    let grid = merge_grids(y.times(), z.times());
    let zs: Vec<DVector<f64>> = grid.iter().map(|&t| z.interpolate(t)).collect();
    let mut values = Vec::with_capacity(grid.len() * m);
    let mut acc = DVector::<f64>::zeros(m);
    values.extend(acc.iter());
    for i in 0..grid.len() - 1 {
        acc += y.left_value(grid[i]) * (&zs[i + 1] - &zs[i]);
        values.extend(acc.iter());
    }
    SampledPath::new(grid, values, m, z.alpha())
}

/// Terminal values of one integral on three nested dyadic grids
/// (every 4th node, every 2nd node, all nodes).
#[derive(Debug, Clone)]
pub struct RefinementReport {
    pub meshes: [f64; 3],
    pub terminal: [DVector<f64>; 3],
    /// log-log slope of the successive differences against the mesh;
    /// `None` when both differences vanish.
    pub cauchy_slope: Option<f64>,
}

/// Integral of `f(x)` against `dx` at three dyadic resolutions of `x`, for
/// checking the Cauchy rate `O(mesh^{2α−1})`.
pub fn integrate_with_refinements<F>(x: &SampledPath, f: F) -> Result<RefinementReport>
where
    F: Fn(&DVector<f64>) -> DMatrix<f64>,
{
    let mut terminal = Vec::with_capacity(3);
    let mut meshes = [0.0; 3];
    for (slot, step) in [4usize, 2, 1].into_iter().enumerate() {
        let xs = x.subsample(step)?;
        let y = IntegrandPath::along(&xs, &f)?;
        let i = young_integrate(&y, &xs)?;
        terminal.push(i.vector(i.len() - 1));
        meshes[slot] = xs.horizon() / (xs.len() - 1) as f64;
    }
    let d1 = (&terminal[1] - &terminal[0]).norm();
    let d2 = (&terminal[2] - &terminal[1]).norm();
    let cauchy_slope = if d1 > 0.0 && d2 > 0.0 {
        Some(regression_slope(&[(meshes[0].ln(), d1.ln()), (meshes[1].ln(), d2.ln())]))
    } else {
        None
    };
    Ok(RefinementReport {
        meshes,
        terminal: [terminal[0].clone(), terminal[1].clone(), terminal[2].clone()],
        cauchy_slope,
    })
}

/// Integral of a 1-form `beta` (point ↦ covector) along `x`, scalar running path.
pub fn integrate_one_form<B>(beta: B, x: &SampledPath) -> Result<SampledPath>
where
    B: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n = x.dim();
    let y = IntegrandPath::along(x, |p| {
        let c = beta(p);
        assert_eq!(c.len(), n, "1-form must return a covector of the path dimension");
        DMatrix::from_row_slice(1, n, c.as_slice())
    })?;
    young_integrate(&y, x)
}

/// A smooth map ℝ^n → ℝ^m with its Jacobian.
pub trait SmoothMap: Sync {
    fn value(&self, x: &DVector<f64>) -> DVector<f64>;
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64>;
}

#[derive(Debug, Clone, Copy)]
pub struct Identity;

impl SmoothMap for Identity {
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        x.clone()
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(x.len(), x.len())
    }
}

/// Componentwise `x ↦ x²`.
#[derive(Debug, Clone, Copy)]
pub struct Square;

impl SmoothMap for Square {
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(|v| v * v)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|v| 2.0 * v))
    }
}

/// Componentwise `tanh`.
#[derive(Debug, Clone, Copy)]
pub struct Tanh;

impl SmoothMap for Tanh {
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        x.map(f64::tanh)
    }
    fn jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&x.map(|v| 1.0 - v.tanh().powi(2)))
    }
}

/// `x ↦ M x + b`.
#[derive(Debug, Clone)]
pub struct Affine {
    pub matrix: DMatrix<f64>,
    pub offset: DVector<f64>,
}

impl SmoothMap for Affine {
    fn value(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.matrix * x + &self.offset
    }
    fn jacobian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        self.matrix.clone()
    }
}

/// `max_t ‖F(x_t) − F(x_0) − ∫_0^t DF(x_s) dx_s‖` on the path's own grid.
pub fn ito_residual(map: &dyn SmoothMap, x: &SampledPath) -> Result<f64> {
    let y = IntegrandPath::along(x, |p| map.jacobian(p))?;
    let integral = young_integrate(&y, x)?;
    let f0 = map.value(&x.vector(0));
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let lhs = map.value(&x.vector(i)) - &f0;
        worst = worst.max((lhs - integral.vector(i)).norm());
    }
    Ok(worst)
}
