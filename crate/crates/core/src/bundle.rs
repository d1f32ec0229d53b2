//! Orthonormal frame bundle of the unit sphere: horizontal lifts, parallel
//! transport, covariant derivatives, development and anti-development along
//! Hölder paths.
//!
//! An oriented frame `(u1, u2)` at `x ∈ S²` is the rotation `L = [u1 u2 x]`,
//! so the frame bundle is `SO(3) → S²`, `L ↦ L e3`, with structure group
//! `SO(2)` acting on the right. The Levi-Civita connection is the
//! `𝔰𝔬(2)`-block of the left logarithmic derivative `Lᵀ dL`, which is also the
//! canonical invariant connection of `SO(3)/SO(2)`.

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix3x2, Vector2, Vector3};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::holder_paths::SampledPath;
use crate::linalg::polar_orthonormalize;

/// Tolerance on `uᵀu = I`, `xᵀu = 0` and `‖x‖ = 1`.
pub const FRAME_TOL: f64 = 1e-10;

pub trait ConnectionForm: Sync {
    fn name(&self) -> &'static str;

    /// Basis of the structure algebra, in the shape returned by [`eval`](Self::eval).
    fn algebra_basis(&self) -> Vec<DMatrix<f64>>;

    /// `ω_p(v)` for a tangent vector `v` at the bundle point `p`.
    fn eval(&self, p: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64>;

    /// Right action `R_h p`; linear in `p`, so it also pushes tangents forward.
    fn act(&self, p: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64>;

    /// Fundamental vertical field `A*_p = d/ds R_{exp(sA)} p |_{s=0}`.
    fn fundamental(&self, p: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64>;
}

/// `max ‖ω(A*_p) − A‖` over basis generators and probe points.
pub fn vertical_calibration_residual<C: ConnectionForm + ?Sized>(conn: &C, points: &[DMatrix<f64>]) -> f64 {
    let basis = conn.algebra_basis();
    points
        .iter()
        .flat_map(|p| basis.iter().map(move |a| (conn.eval(p, &conn.fundamental(p, a)) - a).abs().max()))
        .fold(0.0, f64::max)
}

/// `max ‖ω_{ph}(v h) − h⁻¹ ω_p(v) h‖` over probe `(p, v)` pairs and group elements.
pub fn equivariance_residual<C: ConnectionForm + ?Sized>(
    conn: &C,
    probes: &[(DMatrix<f64>, DMatrix<f64>)],
    group: &[DMatrix<f64>],
) -> f64 {
    let mut worst = 0.0f64;
    for (p, v) in probes {
        let w = conn.eval(p, v);
        for h in group {
            let Some(h_inv) = h.clone().try_inverse() else {
                return f64::INFINITY;
            };
            let lhs = conn.eval(&conn.act(p, h), &conn.act(v, h));
            worst = worst.max((lhs - &h_inv * &w * h).abs().max());
        }
    }
    worst
}

/// Levi-Civita connection on the oriented frame bundle of `S²` (equivalently
/// the canonical connection of `SO(3) → SO(3)/SO(2)`).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SphereFrameBundle;

fn embed_h(h: &DMatrix<f64>, corner: f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(3, 3);
    m.view_mut((0, 0), (2, 2)).copy_from(h);
    m[(2, 2)] = corner;
    m
}

pub fn so2_generator() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0])
}

impl ConnectionForm for SphereFrameBundle {
    fn name(&self) -> &'static str {
        "frame-bundle-s2"
    }

    fn algebra_basis(&self) -> Vec<DMatrix<f64>> {
        vec![so2_generator()]
    }

    fn eval(&self, p: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let m = p.transpose() * v;
        let b = m.view((0, 0), (2, 2));
        (b - b.transpose()) * 0.5
    }

    fn act(&self, p: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
        p * embed_h(h, 1.0)
    }

    fn fundamental(&self, p: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
        p * embed_h(a, 0.0)
    }
}

/// Base points on `S²` with an orthonormal tangent frame at each node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FramePath {
    pub times: Vec<f64>,
    pub points: Vec<Vector3<f64>>,
    pub frames: Vec<Matrix3x2<f64>>,
}

impl FramePath {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `L_i = [u1 u2 x]`.
    pub fn bundle_point(&self, i: usize) -> Matrix3<f64> {
        let u = &self.frames[i];
        Matrix3::from_columns(&[u.column(0).into(), u.column(1).into(), self.points[i]])
    }

    pub fn orthonormality_defect(&self) -> f64 {
        self.frames
            .iter()
            .map(|u| (u.transpose() * u - Matrix2::identity()).abs().max())
            .fold(0.0, f64::max)
    }

    pub fn tangency_defect(&self) -> f64 {
        self.frames
            .iter()
            .zip(&self.points)
            .map(|(u, x)| (x.transpose() * u).abs().max())
            .fold(0.0, f64::max)
    }

    /// `Σ_i ‖[L_iᵀ (L_{i+1} − L_i)]_{2×2}‖_F`: total size of the discrete
    /// connection increments. Vanishes under refinement for a horizontal lift.
    pub fn horizontality_residual(&self) -> f64 {
        (0..self.len().saturating_sub(1))
            .map(|i| {
                let l = self.bundle_point(i);
                let d = self.bundle_point(i + 1) - l;
                (l.transpose() * d).fixed_view::<2, 2>(0, 0).norm()
            })
            .sum()
    }

    /// Discrete `∫ ω` along the path (the `𝔰𝔬(2)` coefficient).
    pub fn connection_integral(&self) -> f64 {
        let conn = SphereFrameBundle;
        (0..self.len().saturating_sub(1))
            .map(|i| {
                let l = to_d(&self.bundle_point(i));
                let d = to_d(&(self.bundle_point(i + 1) - self.bundle_point(i)));
                conn.eval(&l, &d)[(1, 0)]
            })
            .sum()
    }

    /// Frames `u_i g` for an in-fibre rotation `g`.
    pub fn rotate_frames(&self, g: &Matrix2<f64>) -> Self {
        Self {
            times: self.times.clone(),
            points: self.points.clone(),
            frames: self.frames.iter().map(|u| u * g).collect(),
        }
    }
}

fn to_d(m: &Matrix3<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(3, 3, m.as_slice())
}

/// Frame `(u1, u2)` at `x` with `u1 × u2 = x`.
pub fn default_frame(x: &Vector3<f64>) -> Matrix3x2<f64> {
    let mut axis = 0;
    for i in 1..3 {
        if x[i].abs() < x[axis].abs() {
            axis = i;
        }
    }
    let e = Vector3::ith(axis, 1.0);
    let u1 = (e - x * x.dot(&e)).normalize();
    let u2 = x.cross(&u1);
    Matrix3x2::from_columns(&[u1, u2])
}

pub fn check_frame(x: &Vector3<f64>, u: &Matrix3x2<f64>, node: usize) -> Result<()> {
    let tangency = (x.transpose() * u).abs().max();
    if !(tangency <= FRAME_TOL) {
        return Err(Error::NotTangent(tangency));
    }
    if !((u.transpose() * u - Matrix2::identity()).abs().max() <= FRAME_TOL) {
        return Err(Error::DegenerateFrame { node });
    }
    Ok(())
}

fn check_tangent(x: &Vector3<f64>, v: &Vector3<f64>) -> Result<()> {
    let normal = x.dot(v).abs();
    if !(normal <= FRAME_TOL * v.norm().max(1.0)) {
        return Err(Error::NotTangent(normal));
    }
    Ok(())
}

fn sphere_point(v: &[f64]) -> Result<Vector3<f64>> {
    let x = Vector3::new(v[0], v[1], v[2]);
    let distance = (x.norm() - 1.0).abs();
    if !(distance <= FRAME_TOL) {
        return Err(Error::OffManifold { distance, limit: FRAME_TOL });
    }
    Ok(x)
}

/// Points of a path on the unit sphere.
pub fn sphere_points(x: &SampledPath) -> Result<Vec<Vector3<f64>>> {
    if x.dim() != 3 {
        return Err(Error::DimensionMismatch(format!("S² paths live in ℝ³, got ℝ^{}", x.dim())));
    }
    (0..x.len()).map(|i| sphere_point(x.point(i))).collect()
}

/// Project the frame to `T_{x'}S²` and restore orthonormality by the polar
/// factor. Exact Levi-Civita transport along the great-circle arc `x → x'`.
pub fn transport_step(u: &Matrix3x2<f64>, x_next: &Vector3<f64>) -> Option<Matrix3x2<f64>> {
    let projected = u - x_next * (x_next.transpose() * u);
    polar_orthonormalize(&projected)
}

fn lift_points(
    times: &[f64],
    points: Vec<Vector3<f64>>,
    u0: &Matrix3x2<f64>,
) -> Result<FramePath> {
    check_frame(&points[0], u0, 0)?;
    let mut frames = Vec::with_capacity(points.len());
    frames.push(*u0);
    for (i, x) in points.iter().enumerate().skip(1) {
        let u = transport_step(&frames[i - 1], x).ok_or(Error::DegenerateFrame { node: i })?;
        frames.push(u);
    }
    Ok(FramePath {
        times: times.to_vec(),
        points,
        frames,
    })
}

/// Horizontal lift of `x` starting at the frame `u0`.
pub fn horizontal_lift(_conn: &SphereFrameBundle, x: &SampledPath, u0: &Matrix3x2<f64>) -> Result<FramePath> {
    lift_points(x.times(), sphere_points(x)?, u0)
}

/// `u_T u_0ᵀ v` with the lift started at `u0`.
pub fn parallel_transport_with(
    conn: &SphereFrameBundle,
    x: &SampledPath,
    v: &Vector3<f64>,
    u0: &Matrix3x2<f64>,
) -> Result<Vector3<f64>> {
    let lift = horizontal_lift(conn, x, u0)?;
    check_tangent(&lift.points[0], v)?;
    Ok(lift.frames[lift.len() - 1] * (u0.transpose() * v))
}

/// Transport of `v ∈ T_{x_0}S²` to `T_{x_T}S²`.
pub fn parallel_transport(conn: &SphereFrameBundle, x: &SampledPath, v: &Vector3<f64>) -> Result<Vector3<f64>> {
    let x0 = sphere_point(x.point(0))?;
    parallel_transport_with(conn, x, v, &default_frame(&x0))
}

/// Rotation angle of `u_0ᵀ u_T` for a closed loop (`x_T = x_0`).
pub fn holonomy_angle(lift: &FramePath) -> Result<f64> {
    let last = lift.len() - 1;
    let gap = (lift.points[last] - lift.points[0]).norm();
    if gap > 1e-8 {
        return Err(Error::InvalidParameter(format!("holonomy needs a closed loop; endpoints differ by {gap:.3e}")));
    }
    let c = lift.frames[0].transpose() * lift.frames[last];
    Ok(c[(1, 0)].atan2(c[(0, 0)]))
}

/// Increments `u_i (u_{i+1}ᵀ Y_{i+1} − u_iᵀ Y_i)` of the covariant derivative
/// along the grid, attached to the left nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CovariantDerivative {
    pub times: Vec<f64>,
    pub increments: Vec<Vector3<f64>>,
}

impl CovariantDerivative {
    /// Increments divided by the time step.
    pub fn rates(&self, grid: &[f64]) -> Vec<Vector3<f64>> {
        self.increments
            .iter()
            .enumerate()
            .map(|(i, d)| d / (grid[i + 1] - grid[i]))
            .collect()
    }

    pub fn max_norm(&self) -> f64 {
        self.increments.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }
}

/// Covariant derivative of the tangent field `y` (sampled along `x`, same grid).
pub fn covariant_derivative(conn: &SphereFrameBundle, x: &SampledPath, y: &SampledPath) -> Result<CovariantDerivative> {
    if y.dim() != 3 || y.len() != x.len() {
        return Err(Error::DimensionMismatch("tangent field must be sampled in ℝ³ on the path grid".into()));
    }
    let x0 = sphere_point(x.point(0))?;
    let lift = horizontal_lift(conn, x, &default_frame(&x0))?;
    let ys: Vec<Vector3<f64>> = (0..y.len()).map(|i| Vector3::from_column_slice(y.point(i))).collect();
    for (p, v) in lift.points.iter().zip(&ys) {
        check_tangent(p, v)?;
    }
    let coords: Vec<Vector2<f64>> = lift.frames.iter().zip(&ys).map(|(u, v)| u.transpose() * v).collect();
    let increments = (0..lift.len() - 1)
        .map(|i| lift.frames[i] * (coords[i + 1] - coords[i]))
        .collect();
    Ok(CovariantDerivative {
        times: x.times()[..x.len() - 1].to_vec(),
        increments,
    })
}

/// [`covariant_derivative`] of a field given as a function of the base point.
pub fn covariant_derivative_of_field<F>(conn: &SphereFrameBundle, x: &SampledPath, field: F) -> Result<CovariantDerivative>
where
    F: Fn(&Vector3<f64>) -> Vector3<f64>,
{
    let y = x.map(3, |p| {
        let v = field(&Vector3::from_column_slice(p));
        vec![v.x, v.y, v.z]
    })?;
    covariant_derivative(conn, x, &y)
}

/// Development output: the base path and its frames.
#[derive(Debug, Clone, PartialEq)]
pub struct Development {
    pub path: SampledPath,
    pub frames: FramePath,
}

/// Rolling without slipping: the base moves along the geodesic with initial
/// velocity `u_i Δw_i` and the frame follows by horizontal transport.
pub fn develop(
    _conn: &SphereFrameBundle,
    w: &SampledPath,
    p0: &Vector3<f64>,
    u0: &Matrix3x2<f64>,
) -> Result<Development> {
    if w.dim() != 2 {
        return Err(Error::DimensionMismatch(format!("development takes a path in ℝ², got ℝ^{}", w.dim())));
    }
    let p0 = sphere_point(p0.as_slice())?;
    check_frame(&p0, u0, 0)?;
    let mut points = Vec::with_capacity(w.len());
    let mut frames = Vec::with_capacity(w.len());
    points.push(p0);
    frames.push(*u0);
    for i in 0..w.len() - 1 {
        let (x, u) = (points[i], frames[i]);
        let dw = w.increment(i);
        let v = u * Vector2::new(dw[0], dw[1]);
        let theta = v.norm();
        let next = if theta > 0.0 {
            (x * theta.cos() + v * (theta.sin() / theta)).normalize()
        } else {
            x
        };
        let u_next = transport_step(&u, &next).ok_or(Error::DegenerateFrame { node: i + 1 })?;
        points.push(next);
        frames.push(u_next);
    }
    let path = SampledPath::from_points(
        w.times().to_vec(),
        &points.iter().map(|p| nalgebra::DVector::from_column_slice(p.as_slice())).collect::<Vec<_>>(),
        w.alpha(),
    )?;
    Ok(Development {
        path,
        frames: FramePath {
            times: w.times().to_vec(),
            points,
            frames,
        },
    })
}

/// `y_t = Σ u_iᵀ (x_{i+1} − x_i)` with `u` the horizontal lift from `u0`.
pub fn antidevelop(conn: &SphereFrameBundle, x: &SampledPath, u0: &Matrix3x2<f64>) -> Result<SampledPath> {
    let lift = horizontal_lift(conn, x, u0)?;
    let mut values = Vec::with_capacity(2 * x.len());
    let mut y = Vector2::zeros();
    values.extend_from_slice(y.as_slice());
    for i in 0..lift.len() - 1 {
        y += lift.frames[i].transpose() * (lift.points[i + 1] - lift.points[i]);
        values.extend_from_slice(y.as_slice());
    }
    SampledPath::new(x.times().to_vec(), values, 2, x.alpha())
}

/// Sum of geodesic distances between consecutive points.
pub fn arc_length(points: &[Vector3<f64>]) -> f64 {
    points
        .windows(2)
        .map(|p| p[0].cross(&p[1]).norm().atan2(p[0].dot(&p[1])))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holder_paths::{gen_fbm, uniform_times};
    use crate::linalg::{so2, so3_exp};
    use std::f64::consts::PI;

    fn latitude(theta: f64, n: usize) -> SampledPath {
        SampledPath::from_fn(uniform_times(n, 1.0), 3, 1.0, |t| {
            let phi = 2.0 * PI * t;
            vec![theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]
        })
        .unwrap()
    }

    fn east_north(x: &Vector3<f64>) -> Matrix3x2<f64> {
        let east = Vector3::z().cross(x).normalize();
        Matrix3x2::from_columns(&[east, x.cross(&east)])
    }

    /// fBm-driven rotation of the north pole: an α-Hölder path on S².
    fn rough_sphere_path(n: usize, seed: u64) -> SampledPath {
        let z = gen_fbm(0.75, n, 1.0, seed, 3).unwrap();
        z.map(3, |w| {
            let p = so3_exp(&Vector3::new(w[0], w[1], w[2])) * Vector3::z();
            vec![p.x, p.y, p.z]
        })
        .unwrap()
    }

    #[test]
    fn connection_probes() {
        let conn = SphereFrameBundle;
        let r1 = to_d(&so3_exp(&Vector3::new(0.3, -1.0, 0.5)));
        let r2 = to_d(&so3_exp(&Vector3::new(2.0, 0.1, -0.4)));
        assert!(vertical_calibration_residual(&conn, &[r1.clone(), r2.clone()]) < 1e-12);
        let xi = to_d(&crate::linalg::hat(&Vector3::new(0.7, -0.2, 1.3)));
        let probes = vec![(r1.clone(), &r1 * &xi), (r2.clone(), &r2 * &xi)];
        let group: Vec<DMatrix<f64>> = [0.4, -2.0, 3.0]
            .iter()
            .map(|a| DMatrix::from_column_slice(2, 2, so2(*a).as_slice()))
            .collect();
        assert!(equivariance_residual(&conn, &probes, &group) < 1e-12);
    }

    #[test]
    fn default_frame_is_oriented() {
        for x in [Vector3::z(), Vector3::new(0.6, 0.0, 0.8), Vector3::new(-1.0, 0.0, 0.0)] {
            let u = default_frame(&x);
            check_frame(&x, &u, 0).unwrap();
            assert!((u.column(0).cross(&u.column(1)) - x).norm() < 1e-15);
        }
    }

    #[test]
    fn constant_path_keeps_frame() {
        let x = SampledPath::from_fn(uniform_times(17, 1.0), 3, 1.0, |_| vec![0.0, 0.6, 0.8]).unwrap();
        let u0 = default_frame(&Vector3::new(0.0, 0.6, 0.8));
        let lift = horizontal_lift(&SphereFrameBundle, &x, &u0).unwrap();
        assert!(lift.frames.iter().all(|u| (u - u0).abs().max() < 1e-15));
        assert_eq!(lift.horizontality_residual(), 0.0);
    }

    #[test]
    fn equator_has_no_holonomy() {
        let x = latitude(PI / 2.0, 4097);
        let p0 = Vector3::new(1.0, 0.0, 0.0);
        let lift = horizontal_lift(&SphereFrameBundle, &x, &east_north(&p0)).unwrap();
        assert!(holonomy_angle(&lift).unwrap().abs() < 1e-10);
        assert!(lift.orthonormality_defect() < 1e-12);
        assert!(lift.tangency_defect() < 1e-12);
    }

    #[test]
    fn latitude_holonomy_is_enclosed_area() {
        let theta = PI / 3.0;
        let x = latitude(theta, (1 << 12) + 1);
        let p0 = Vector3::new(theta.sin(), 0.0, theta.cos());
        let lift = horizontal_lift(&SphereFrameBundle, &x, &east_north(&p0)).unwrap();
        let angle = holonomy_angle(&lift).unwrap();
        // Rotation by 2π(1 − cos θ) = π, up to the sign convention.
        assert!((angle.abs() - PI).abs() < 1e-3, "{angle}");
        let theta = PI / 4.0;
        let x = latitude(theta, (1 << 12) + 1);
        let p0 = Vector3::new(theta.sin(), 0.0, theta.cos());
        let lift = horizontal_lift(&SphereFrameBundle, &x, &east_north(&p0)).unwrap();
        let expected = 2.0 * PI * (1.0 - theta.cos());
        let angle = holonomy_angle(&lift).unwrap();
        let wrapped = (angle.abs() - expected).abs().min((2.0 * PI - angle.abs() - expected).abs());
        assert!(wrapped < 1e-3, "{angle} vs {expected}");
    }

    #[test]
    fn transport_is_frame_independent_and_isometric() {
        let x = rough_sphere_path(1025, 5);
        let x0 = Vector3::from_column_slice(x.point(0));
        let v = default_frame(&x0) * Vector2::new(0.3, -1.2);
        let a = parallel_transport(&SphereFrameBundle, &x, &v).unwrap();
        let u0 = default_frame(&x0) * so2(1.1);
        let b = parallel_transport_with(&SphereFrameBundle, &x, &v, &u0).unwrap();
        assert!((a - b).norm() < 1e-8);
        assert!((a.norm() - v.norm()).abs() < 1e-10);
        assert_eq!(parallel_transport(&SphereFrameBundle, &x, &Vector3::zeros()).unwrap(), Vector3::zeros());
        assert!(matches!(
            parallel_transport(&SphereFrameBundle, &x, &x0),
            Err(Error::NotTangent(_))
        ));
    }

    #[test]
    fn lift_is_equivariant() {
        let x = rough_sphere_path(513, 9);
        let x0 = Vector3::from_column_slice(x.point(0));
        let u0 = default_frame(&x0);
        let g = so2(0.8);
        let a = horizontal_lift(&SphereFrameBundle, &x, &(u0 * g)).unwrap();
        let b = horizontal_lift(&SphereFrameBundle, &x, &u0).unwrap().rotate_frames(&g);
        for (ua, ub) in a.frames.iter().zip(&b.frames) {
            assert!((ua - ub).abs().max() < 1e-8);
        }
    }

    #[test]
    fn horizontality_residual_vanishes_under_refinement() {
        let fine = rough_sphere_path((1 << 14) + 1, 21);
        let mut points = Vec::new();
        for step in [16, 8, 4, 2, 1] {
            let x = fine.subsample(step).unwrap();
            let x0 = Vector3::from_column_slice(x.point(0));
            let lift = horizontal_lift(&SphereFrameBundle, &x, &default_frame(&x0)).unwrap();
            let mesh = 1.0 / (x.len() - 1) as f64;
            points.push((mesh.ln(), lift.horizontality_residual().ln()));
        }
        let slope = crate::holder_paths::regression_slope(&points);
        assert!(slope >= 2.0 * 0.75 - 1.0 - 0.2, "slope {slope}");
    }

    #[test]
    fn covariant_derivative_examples() {
        // Geodesic with its velocity field.
        let n = 2049;
        let x = latitude(PI / 2.0, n);
        let vel = x.map(3, |p| vec![-p[1], p[0], 0.0]).unwrap();
        let d = covariant_derivative(&SphereFrameBundle, &x, &vel).unwrap();
        assert!(d.max_norm() < 1e-10);
        // Transported field along a latitude.
        let x = latitude(PI / 3.0, n);
        let x0 = Vector3::from_column_slice(x.point(0));
        let lift = horizontal_lift(&SphereFrameBundle, &x, &default_frame(&x0)).unwrap();
        let c = Vector2::new(0.4, 0.9);
        let par = SampledPath::from_points(
            x.times().to_vec(),
            &lift.frames.iter().map(|u| nalgebra::DVector::from_column_slice((u * c).as_slice())).collect::<Vec<_>>(),
            1.0,
        )
        .unwrap();
        assert!(covariant_derivative(&SphereFrameBundle, &x, &par).unwrap().max_norm() < 1e-12);
        // Projected constant ambient vector against P_x(d/dt Y(x_t)).
        let a = Vector3::new(0.3, -0.5, 0.8);
        let field = |p: &Vector3<f64>| a - p * p.dot(&a);
        let d = covariant_derivative_of_field(&SphereFrameBundle, &x, field).unwrap();
        let rates = d.rates(x.times());
        for i in (0..n - 1).step_by(64) {
            let p = Vector3::from_column_slice(x.point(i));
            let q = Vector3::from_column_slice(x.point(i + 1));
            let dt = x.times()[i + 1] - x.times()[i];
            let fd = (field(&q) - field(&p)) / dt;
            let oracle = fd - p * p.dot(&fd);
            assert!((rates[i] - oracle).norm() < 1e-2, "{}", (rates[i] - oracle).norm());
        }
    }

    #[test]
    fn straight_line_develops_to_great_circle() {
        let n = 4097;
        let w = SampledPath::from_fn(uniform_times(n, 2.0), 2, 1.0, |t| vec![t, 0.0]).unwrap();
        let p0 = Vector3::z();
        let u0 = Matrix3x2::from_columns(&[Vector3::x(), Vector3::y()]);
        let dev = develop(&SphereFrameBundle, &w, &p0, &u0).unwrap();
        let pts = &dev.frames.points;
        assert!((arc_length(pts) - 2.0).abs() < 1e-10);
        for (i, p) in pts.iter().enumerate() {
            let s = w.times()[i];
            assert!((p - Vector3::new(s.sin(), 0.0, s.cos())).norm() < 1e-10);
        }
        let zero = SampledPath::from_fn(uniform_times(9, 1.0), 2, 1.0, |_| vec![0.5, -1.0]).unwrap();
        let dev = develop(&SphereFrameBundle, &zero, &p0, &u0).unwrap();
        assert!(dev.frames.points.iter().all(|p| *p == p0));
    }

    #[test]
    fn planar_circle_does_not_close() {
        let r = 0.5;
        let w = SampledPath::from_fn(uniform_times(4097, 1.0), 2, 1.0, |t| {
            let a = 2.0 * PI * t;
            vec![r * a.sin(), r * (1.0 - a.cos())]
        })
        .unwrap();
        let p0 = Vector3::z();
        let u0 = Matrix3x2::from_columns(&[Vector3::x(), Vector3::y()]);
        let dev = develop(&SphereFrameBundle, &w, &p0, &u0).unwrap();
        let defect = (dev.frames.points.last().unwrap() - p0).norm();
        assert!(defect > 1e-3, "{defect}");
        // Only increments enter.
        let shifted = w.map(2, |p| vec![p[0] + 3.0, p[1] + 3.0]).unwrap();
        let dev2 = develop(&SphereFrameBundle, &shifted, &p0, &u0).unwrap();
        for (a, b) in dev.frames.points.iter().zip(&dev2.frames.points) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn antidevelop_round_trip_and_rotation() {
        let w = SampledPath::from_fn(uniform_times(4097, 1.0), 2, 1.0, |t| {
            vec![(3.0 * t).sin(), t * t - 0.5 * t]
        })
        .unwrap();
        let p0 = Vector3::new(0.0, 0.6, 0.8);
        let u0 = default_frame(&p0);
        let dev = develop(&SphereFrameBundle, &w, &p0, &u0).unwrap();
        let back = antidevelop(&SphereFrameBundle, &dev.path, &u0).unwrap();
        let err = (0..w.len()).map(|i| (back.vector(i) - w.vector(i)).norm()).fold(0.0, f64::max);
        assert!(err < 1e-6, "{err}");
        let g = so2(0.7);
        let rotated = antidevelop(&SphereFrameBundle, &dev.path, &(u0 * g)).unwrap();
        for i in (0..w.len()).step_by(256) {
            let y = Vector2::new(back.point(i)[0], back.point(i)[1]);
            let yg = Vector2::new(rotated.point(i)[0], rotated.point(i)[1]);
            assert!((g.transpose() * y - yg).norm() < 1e-12);
        }
        let constant = SampledPath::from_fn(uniform_times(9, 1.0), 3, 1.0, |_| vec![0.0, 0.6, 0.8]).unwrap();
        let y = antidevelop(&SphereFrameBundle, &constant, &u0).unwrap();
        assert!(y.raw_values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn great_circle_antidevelops_to_line() {
        let x = latitude(PI / 2.0, (1 << 14) + 1);
        let p0 = Vector3::x();
        let y = antidevelop(&SphereFrameBundle, &x, &east_north(&p0)).unwrap();
        let end = y.vector(y.len() - 1);
        assert!((end.norm() - 2.0 * PI).abs() < 1e-6, "{}", end.norm());
        assert!(end[1].abs() < 1e-10);
    }
}
