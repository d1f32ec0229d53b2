//! Embedded manifolds `M ⊂ ℝ^N`: projections, tangent projectors, projected
//! Euler for YDEs on `M`, and the reconstruction of an on-manifold path as
//! the solution of `dx = Dπ(x) dz`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holder_paths::SampledPath;
use crate::linalg::polar_so3;
use crate::yde_solver::{Trajectory, VectorFieldFamily};

/// Tolerance on `‖x0 − π(x0)‖` for initial conditions.
pub const ON_MANIFOLD_TOL: f64 = 1e-10;
/// Tolerance on `‖(I − P_x) X(x)‖` for tangent vector fields.
pub const TANGENCY_TOL: f64 = 1e-8;

pub trait EmbeddedManifold: Send + Sync {
    fn name(&self) -> &str;
    fn ambient_dim(&self) -> usize;
    fn dim(&self) -> usize;

    /// Nearest point of `M`, or `None` outside the projection's validity region.
    fn project(&self, x: &DVector<f64>) -> Option<DVector<f64>>;

    /// Orthogonal projector onto `T_x M` (an `N × N` matrix).
    fn tangent_projector(&self, x: &DVector<f64>) -> DMatrix<f64>;

    fn distance(&self, x: &DVector<f64>) -> f64 {
        self.project(x).map_or(f64::INFINITY, |p| (x - p).norm())
    }

    /// `Dπ(x)` by central differences with step `1e-6 (1 + ‖x‖)`.
    fn dproject(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = x.len();
        let h = 1e-6 * (1.0 + x.norm());
        let mut out = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            match (self.project(&xp), self.project(&xm)) {
                (Some(p), Some(m)) => out.set_column(j, &((p - m) / (2.0 * h))),
                _ => return DMatrix::from_element(n, n, f64::NAN),
            }
        }
        out
    }
}

/// Round sphere `{‖x‖ = r} ⊂ ℝ³`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sphere {
    pub radius: f64,
}

impl Sphere {
    pub fn new(radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidParameter(format!("sphere radius {radius} must be positive")));
        }
        Ok(Self { radius })
    }

    pub fn unit() -> Self {
        Self { radius: 1.0 }
    }
}

impl EmbeddedManifold for Sphere {
    fn name(&self) -> &str {
        "sphere"
    }

    fn ambient_dim(&self) -> usize {
        3
    }

    fn dim(&self) -> usize {
        2
    }

    fn project(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let n = x.norm();
        (n > 1e-300 && n.is_finite()).then(|| x * (self.radius / n))
    }

    fn tangent_projector(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let u = x.normalize();
        DMatrix::identity(3, 3) - &u * u.transpose()
    }

    fn distance(&self, x: &DVector<f64>) -> f64 {
        (x.norm() - self.radius).abs()
    }

    fn dproject(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.tangent_projector(x) * (self.radius / x.norm())
    }
}

/// `SO(3)` in `ℝ⁹`, matrices flattened row-major.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct So3;

pub fn flatten3(m: &Matrix3<f64>) -> DVector<f64> {
    DVector::from_iterator(9, m.transpose().iter().copied())
}

pub fn unflatten3(x: &DVector<f64>) -> Matrix3<f64> {
    Matrix3::from_row_slice(x.as_slice())
}

impl EmbeddedManifold for So3 {
    fn name(&self) -> &str {
        "so3"
    }

    fn ambient_dim(&self) -> usize {
        9
    }

    fn dim(&self) -> usize {
        3
    }

    fn project(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        polar_so3(&unflatten3(x)).map(|r| flatten3(&r))
    }

    /// `V ↦ R skew(Rᵀ V)`, i.e. `(V − R Vᵀ R)/2`, at `R = π(x)`.
    fn tangent_projector(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let r = polar_so3(&unflatten3(x)).unwrap_or_else(|| unflatten3(x));
        let mut out = DMatrix::zeros(9, 9);
        for j in 0..9 {
            let mut e = Matrix3::zeros();
            e[(j / 3, j % 3)] = 1.0;
            let pv = (e - r * e.transpose() * r) * 0.5;
            out.set_column(j, &flatten3(&pv));
        }
        out
    }
}

type LevelFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type LevelJac = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Regular level set `{g = 0}` of `g: ℝ^N → ℝ^p`.
#[derive(Clone)]
pub struct LevelSet {
    name: String,
    ambient: usize,
    codim: usize,
    g: LevelFn,
    jac: LevelJac,
}

impl fmt::Debug for LevelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LevelSet")
            .field("name", &self.name)
            .field("ambient", &self.ambient)
            .field("codim", &self.codim)
            .finish()
    }
}

impl LevelSet {
    pub fn new<G, J>(name: impl Into<String>, ambient: usize, codim: usize, g: G, jac: J) -> Result<Self>
    where
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        if codim == 0 || codim >= ambient {
            return Err(Error::InvalidParameter(format!(
                "codimension {codim} must lie in [1, {ambient})"
            )));
        }
        Ok(Self {
            name: name.into(),
            ambient,
            codim,
            g: Arc::new(g),
            jac: Arc::new(jac),
        })
    }

    /// Ellipsoid `Σ (x_i / a_i)² = 1` in `ℝ³`.
    pub fn ellipsoid(axes: [f64; 3]) -> Result<Self> {
        if axes.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::InvalidParameter("ellipsoid axes must be positive".into()));
        }
        let w = axes.map(|a| 1.0 / (a * a));
        Self::new(
            "ellipsoid",
            3,
            1,
            move |x| DVector::from_element(1, w[0] * x[0] * x[0] + w[1] * x[1] * x[1] + w[2] * x[2] * x[2] - 1.0),
            move |x| DMatrix::from_row_slice(1, 3, &[2.0 * w[0] * x[0], 2.0 * w[1] * x[1], 2.0 * w[2] * x[2]]),
        )
    }

    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.g)(x)
    }

    /// Minimal-norm Newton onto `{g = 0}`.
    fn newton_onto(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let scale = 1.0 + x.norm();
        let mut y = x.clone();
        for _ in 0..60 {
            let r = (self.g)(&y);
            if !r.iter().all(|v| v.is_finite()) {
                return None;
            }
            let j = (self.jac)(&y);
            let step = j.transpose() * (&j * j.transpose()).lu().solve(&r)?;
            y -= &step;
            if step.norm() <= 1e-15 * scale {
                return Some(y);
            }
        }
        ((self.g)(&y).norm() <= 1e-12 * scale).then_some(y)
    }

    fn normal_projector(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        let j = (self.jac)(x);
        let inv = (&j * j.transpose()).try_inverse()?;
        Some(j.transpose() * inv * j)
    }
}

impl EmbeddedManifold for LevelSet {
    fn name(&self) -> &str {
        &self.name
    }

    fn ambient_dim(&self) -> usize {
        self.ambient
    }

    fn dim(&self) -> usize {
        self.ambient - self.codim
    }

    /// Alternates Newton onto the level set with tangential corrections until
    /// `x − π(x)` is normal at `π(x)`.
    fn project(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
        let scale = 1.0 + x.norm();
        let mut y = self.newton_onto(x)?;
        for _ in 0..200 {
            let t = self.tangent_projector(&y) * (x - &y);
            if t.norm() <= 1e-14 * scale {
                return Some(y);
            }
            y = self.newton_onto(&(y + t))?;
        }
        None
    }

    fn tangent_projector(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.ambient;
        match self.normal_projector(x) {
            Some(p) => DMatrix::identity(n, n) - p,
            None => DMatrix::from_element(n, n, f64::NAN),
        }
    }
}

/// Manifold selection by name, e.g. `{"manifold":"sphere","radius":1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "manifold", rename_all = "lowercase", deny_unknown_fields)]
pub enum ManifoldSpec {
    Sphere {
        #[serde(default = "unit_radius")]
        radius: f64,
    },
    So3,
    Ellipsoid {
        axes: [f64; 3],
    },
}

fn unit_radius() -> f64 {
    1.0
}

impl ManifoldSpec {
    pub fn build(&self) -> Result<Box<dyn EmbeddedManifold>> {
        Ok(match self {
            Self::Sphere { radius } => Box::new(Sphere::new(*radius)?),
            Self::So3 => Box::new(So3),
            Self::Ellipsoid { axes } => Box::new(LevelSet::ellipsoid(*axes)?),
        })
    }
}

fn check_on<M: EmbeddedManifold + ?Sized>(m: &M, x: &DVector<f64>, limit: f64) -> Result<()> {
    if x.len() != m.ambient_dim() {
        return Err(Error::DimensionMismatch(format!(
            "{} lives in ℝ^{} but the point has {} components",
            m.name(),
            m.ambient_dim(),
            x.len()
        )));
    }
    let distance = m.distance(x);
    if !(distance <= limit) {
        return Err(Error::OffManifold { distance, limit });
    }
    Ok(())
}

/// Largest normal component of the columns of `X(x)`.
pub fn tangency_defect<M, V>(m: &M, field: &V, x: &DVector<f64>) -> f64
where
    M: EmbeddedManifold + ?Sized,
    V: VectorFieldFamily + ?Sized,
{
    let n = m.ambient_dim();
    let normal = DMatrix::identity(n, n) - m.tangent_projector(x);
    let v = field.eval(x);
    (normal * &v).abs().max() / v.abs().max().max(1.0)
}

/// Projected Euler `x_{i+1} = π(x_i + X(x_i) ΔZ_i)`.
pub fn solve_yde_on_manifold<M, V>(m: &M, field: &V, z: &SampledPath, x0: &DVector<f64>) -> Result<Trajectory>
where
    M: EmbeddedManifold + ?Sized,
    V: VectorFieldFamily + ?Sized,
{
    if field.state_dim() != m.ambient_dim() || field.driver_dim() != z.dim() {
        return Err(Error::DimensionMismatch(format!(
            "field maps ℝ^{} × ℝ^{}, manifold ambient ℝ^{}, driver ℝ^{}",
            field.state_dim(),
            field.driver_dim(),
            m.ambient_dim(),
            z.dim()
        )));
    }
    check_on(m, x0, ON_MANIFOLD_TOL)?;
    let mut x = x0.clone();
    let mut states = Vec::with_capacity(z.len());
    states.push(x.clone());
    for i in 0..z.len() - 1 {
        let defect = tangency_defect(m, field, &x);
        if !(defect <= TANGENCY_TOL) {
            return Err(Error::NotTangent(defect));
        }
        let step = &x + field.eval(&x) * z.increment(i);
        x = m.project(&step).ok_or(Error::ProjectionFailed { node: i + 1 })?;
        states.push(x.clone());
    }
    Ok(Trajectory {
        times: z.times().to_vec(),
        states,
        jacobians: None,
        explosion: None,
    })
}

struct ProjectionField<'a, M: ?Sized> {
    m: &'a M,
}

impl<M: EmbeddedManifold + ?Sized> VectorFieldFamily for ProjectionField<'_, M> {
    fn state_dim(&self) -> usize {
        self.m.ambient_dim()
    }

    fn driver_dim(&self) -> usize {
        self.m.ambient_dim()
    }

    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        self.m.dproject(x)
    }
}

/// Solves `dx = Dπ(x) dz` with `z = y` in ambient coordinates and `x_0 = y_0`;
/// returns `max_t ‖x_t − y_t‖`.
pub fn path_as_yde_residual<M: EmbeddedManifold + ?Sized>(m: &M, y: &SampledPath) -> Result<f64> {
    for i in 0..y.len() {
        check_on(m, &y.vector(i), 1e-8)?;
    }
    let traj = solve_yde_on_manifold(m, &ProjectionField { m }, y, &y.vector(0))?;
    Ok(traj
        .states
        .iter()
        .enumerate()
        .map(|(i, x)| (x - y.vector(i)).norm())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::holder_paths::{gen_fbm, gen_smooth, uniform_times, SmoothKind};
    use crate::linalg::{hat, so3_exp};
    use crate::yde_solver::{LinearField, ZeroField};
    use nalgebra::{Vector3, DVector};
    use std::f64::consts::PI;

    fn probe_points() -> Vec<DVector<f64>> {
        vec![
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.6, 0.0, 0.8]),
            DVector::from_vec(vec![-0.36, 0.48, 0.8]),
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
        ]
    }

    fn great_circle(n: usize) -> SampledPath {
        SampledPath::from_fn(uniform_times(n, 1.0), 3, 1.0, |t| {
            let a = 2.0 * PI * t;
            vec![a.cos(), a.sin(), 0.0]
        })
        .unwrap()
    }

    fn check_projector<M: EmbeddedManifold>(m: &M, x: &DVector<f64>) {
        let p = m.tangent_projector(x);
        assert!((&p - p.transpose()).abs().max() < 1e-12);
        assert!((&p * &p - &p).abs().max() < 1e-12);
        let rank = p.clone().svd(false, false).singular_values.iter().filter(|s| **s > 0.5).count();
        assert_eq!(rank, m.dim());
    }

    #[test]
    fn sphere_projection_and_projector() {
        let s = Sphere::unit();
        for x in probe_points() {
            assert!((s.project(&x).unwrap() - &x).norm() < 1e-12);
            check_projector(&s, &x);
            assert!((s.tangent_projector(&x) * &x).norm() < 1e-14);
            let pushed = &x * (1.0 + 1e-3);
            assert!((s.project(&pushed).unwrap() - &x).norm() < 1e-14);
        }
        assert!(s.project(&DVector::zeros(3)).is_none());
    }

    #[test]
    fn sphere_dproject_matches_finite_differences() {
        struct Fd(Sphere);
        impl EmbeddedManifold for Fd {
            fn name(&self) -> &str {
                "fd"
            }
            fn ambient_dim(&self) -> usize {
                3
            }
            fn dim(&self) -> usize {
                2
            }
            fn project(&self, x: &DVector<f64>) -> Option<DVector<f64>> {
                self.0.project(x)
            }
            fn tangent_projector(&self, x: &DVector<f64>) -> DMatrix<f64> {
                self.0.tangent_projector(x)
            }
        }
        let s = Sphere::new(2.0).unwrap();
        let x = DVector::from_vec(vec![0.3, -1.1, 0.7]);
        assert!((s.dproject(&x) - Fd(s).dproject(&x)).abs().max() < 1e-8);
    }

    #[test]
    fn so3_projection_and_projector() {
        let m = So3;
        let r = so3_exp(&Vector3::new(0.3, -0.8, 1.1));
        let x = flatten3(&r);
        assert!((m.project(&x).unwrap() - &x).norm() < 1e-12);
        check_projector(&m, &x);
        // Normal directions at R are R·S with S symmetric.
        let s = Matrix3::new(1.0, 0.2, 0.0, 0.2, -0.5, 0.3, 0.0, 0.3, 0.4);
        let normal = flatten3(&(r * s));
        assert!((m.tangent_projector(&x) * &normal).norm() < 1e-12);
        assert!((m.project(&(&x + &normal * 1e-4)).unwrap() - &x).norm() < 1e-12);
    }

    #[test]
    fn ellipsoid_level_set() {
        let e = LevelSet::ellipsoid([1.0, 2.0, 0.5]).unwrap();
        let x = DVector::from_vec(vec![0.6, 0.0, 0.4]);
        assert!(e.residual(&x)[0].abs() < 1e-12);
        assert!((e.project(&x).unwrap() - &x).norm() < 1e-12);
        check_projector(&e, &x);
        let grad = DVector::from_vec(vec![1.2, 0.0, 3.2]).normalize();
        assert!((e.tangent_projector(&x) * &grad).norm() < 1e-12);
        let off = &x + &grad * 1e-3;
        assert!((e.project(&off).unwrap() - &x).norm() < 1e-10);
        // Far off-normal displacement still lands on the surface, at a normal foot point.
        let y = e.project(&DVector::from_vec(vec![0.9, 0.5, 0.7])).unwrap();
        assert!(e.residual(&y)[0].abs() < 1e-12);
    }

    #[test]
    fn spec_parsing() {
        let s: ManifoldSpec = serde_json::from_str(r#"{"manifold":"sphere","radius":1}"#).unwrap();
        assert_eq!(s, ManifoldSpec::Sphere { radius: 1.0 });
        let s: ManifoldSpec = serde_json::from_str(r#"{"manifold":"sphere"}"#).unwrap();
        assert_eq!(s.build().unwrap().dim(), 2);
        let s: ManifoldSpec = serde_json::from_str(r#"{"manifold":"so3"}"#).unwrap();
        assert_eq!(s.build().unwrap().ambient_dim(), 9);
        assert!(serde_json::from_str::<ManifoldSpec>(r#"{"manifold":"torus"}"#).is_err());
        assert!(ManifoldSpec::Sphere { radius: -1.0 }.build().is_err());
    }

    #[test]
    fn zero_field_and_preconditions() {
        let s = Sphere::unit();
        let z = gen_fbm(0.75, 65, 1.0, 3, 2).unwrap();
        let x0 = DVector::from_vec(vec![0.0, 0.6, 0.8]);
        let traj = solve_yde_on_manifold(&s, &ZeroField { state_dim: 3, driver_dim: 2 }, &z, &x0).unwrap();
        assert!(traj.states.iter().all(|x| x == &x0));
        let off = DVector::from_vec(vec![0.0, 0.6, 0.8 + 1e-9]);
        assert!(matches!(
            solve_yde_on_manifold(&s, &ZeroField { state_dim: 3, driver_dim: 2 }, &z, &off),
            Err(Error::OffManifold { .. })
        ));
        let radial = crate::yde_solver::FnField::new(3, 1, |x| DMatrix::from_column_slice(3, 1, x.as_slice()));
        let z1 = gen_fbm(0.75, 65, 1.0, 3, 1).unwrap();
        assert!(matches!(solve_yde_on_manifold(&s, &radial, &z1, &x0), Err(Error::NotTangent(_))));
    }

    #[test]
    fn rotation_field_follows_exact_orbit() {
        let s = Sphere::unit();
        let w = Vector3::new(0.2, -0.5, 1.0);
        let field = LinearField::single(DMatrix::from_column_slice(3, 3, hat(&w).as_slice())).unwrap();
        let x0 = DVector::from_vec(vec![0.6, 0.0, 0.8]);
        let mut errs = Vec::new();
        for n in [1025, 4097] {
            let z = gen_smooth(&SmoothKind::Sine { amp: 1.0, freq: 1.0 }, n, 1.0).unwrap();
            let traj = solve_yde_on_manifold(&s, &field, &z, &x0).unwrap();
            let mut err = 0.0f64;
            for (i, x) in traj.states.iter().enumerate() {
                assert!((x.norm() - 1.0).abs() <= 1e-12);
                let r = so3_exp(&(w * z.scalar(i)));
                let exact = r * Vector3::new(x0[0], x0[1], x0[2]);
                err = err.max((Vector3::new(x[0], x[1], x[2]) - exact).norm());
            }
            errs.push(err);
        }
        assert!(errs[0] < 1e-2, "{errs:?}");
        assert!(errs[1] < errs[0] / 3.0, "{errs:?}");
    }

    #[test]
    fn solver_commutes_with_rotations() {
        let s = Sphere::unit();
        let a = hat(&Vector3::new(0.0, 0.0, 1.0));
        let b = hat(&Vector3::new(1.0, 0.0, 0.0));
        let q = so3_exp(&Vector3::new(0.4, 1.3, -0.2));
        let to_d = |m: Matrix3<f64>| DMatrix::from_column_slice(3, 3, m.as_slice());
        let field = LinearField::new(vec![to_d(a), to_d(b)]).unwrap();
        let rotated = LinearField::new(vec![to_d(q * a * q.transpose()), to_d(q * b * q.transpose())]).unwrap();
        let z = gen_fbm(0.75, 513, 1.0, 8, 2).unwrap();
        let x0 = DVector::from_vec(vec![0.0, 0.6, 0.8]);
        let qd = to_d(q);
        let t1 = solve_yde_on_manifold(&s, &field, &z, &x0).unwrap();
        let t2 = solve_yde_on_manifold(&s, &rotated, &z, &(&qd * &x0)).unwrap();
        for (x, y) in t1.states.iter().zip(&t2.states) {
            assert!((&qd * x - y).norm() < 1e-10);
        }
    }

    #[test]
    fn so3_right_invariant_stays_on_group() {
        let a = hat(&Vector3::new(0.3, 1.0, -0.7));
        let field = crate::yde_solver::FnField::new(9, 1, move |x| {
            DMatrix::from_column_slice(9, 1, flatten3(&(a * unflatten3(x))).as_slice())
        });
        let z = gen_fbm(0.75, 257, 1.0, 4, 1).unwrap();
        let x0 = flatten3(&Matrix3::identity());
        let traj = solve_yde_on_manifold(&So3, &field, &z, &x0).unwrap();
        for x in &traj.states {
            let r = unflatten3(x);
            assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
        }
    }

    #[test]
    fn path_residual_examples() {
        let s = Sphere::unit();
        let constant = SampledPath::from_fn(uniform_times(33, 1.0), 3, 1.0, |_| vec![0.0, 0.0, 1.0]).unwrap();
        assert_eq!(path_as_yde_residual(&s, &constant).unwrap(), 0.0);
        let r1 = path_as_yde_residual(&s, &great_circle(1 << 10)).unwrap();
        let r2 = path_as_yde_residual(&s, &great_circle(1 << 12)).unwrap();
        assert!(r2 < 1e-4, "{r2}");
        assert!(r2 < r1 / 4.0, "{r1} {r2}");
    }

    #[test]
    fn path_residual_of_solver_output() {
        let s = Sphere::unit();
        let field = LinearField::single(DMatrix::from_column_slice(3, 3, hat(&Vector3::new(1.0, 0.5, 0.0)).as_slice()))
            .unwrap();
        let z = gen_smooth(&SmoothKind::Sine { amp: 1.5, freq: 1.0 }, 4097, 1.0).unwrap();
        let x0 = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let y = solve_yde_on_manifold(&s, &field, &z, &x0).unwrap().to_path(1.0).unwrap();
        let residual = path_as_yde_residual(&s, &y).unwrap();
        assert!(residual < 1e-4, "{residual}");
    }
}
