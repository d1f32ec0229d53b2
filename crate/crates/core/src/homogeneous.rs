//! Right-invariant linear equations `dg = A g dZ` on `SO(3)`, their two-factor
//! decomposition over `S² = SO(3)/SO(2)` and the closed form on the trivial
//! bundle `SO(3) × SO(2)`.
//!
//! `H = SO(2)` is the stabilizer of the north pole `e3`, embedded as
//! `diag(R(θ), 1)`; the projection is `π(g) = g e3`.

use nalgebra::{DMatrix, Matrix2, Matrix3, Vector3};
use serde::Serialize;

use crate::bundle::{horizontal_lift, so2_generator, ConnectionForm, SphereFrameBundle};
use crate::error::{Error, Result};
use crate::holder_paths::SampledPath;
use crate::linalg::{hat, so2, so3_exp, so3_log, vee};

/// Hard limit on the distance of `h_t` to `H` before projection.
pub const H_DISTANCE_LIMIT: f64 = 1e-6;

/// Group-membership tolerance for inputs.
pub const GROUP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatrixLieGroup {
    So3,
    /// `SO(2)` as the stabilizer of `e3` inside `SO(3)`.
    PoleStabilizer,
    /// `SO(3) × SO(2)` as block-diagonal 5×5 matrices.
    So3xSo2,
}

fn to_d<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

fn block3(m: &DMatrix<f64>) -> Matrix3<f64> {
    m.fixed_view::<3, 3>(0, 0).into_owned()
}

fn block2(m: &DMatrix<f64>) -> Matrix2<f64> {
    m.fixed_view::<2, 2>(3, 3).into_owned()
}

fn block_diag(g: &Matrix3<f64>, y: &Matrix2<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(5, 5);
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(g);
    m.fixed_view_mut::<2, 2>(3, 3).copy_from(y);
    m
}

/// `diag(R(θ), 1)`.
pub fn pole_rotation(theta: f64) -> Matrix3<f64> {
    let mut m = Matrix3::identity();
    m.fixed_view_mut::<2, 2>(0, 0).copy_from(&so2(theta));
    m
}

/// `‖g e3 − e3‖` plus the orthogonality defect of the upper-left 2×2 block.
pub fn distance_to_h(g: &Matrix3<f64>) -> f64 {
    let b = g.fixed_view::<2, 2>(0, 0);
    (g * Vector3::z() - Vector3::z()).norm() + (b.transpose() * b - Matrix2::identity()).abs().max()
}

/// Nearest element of `H` by rotation-angle extraction.
pub fn project_to_h(g: &Matrix3<f64>) -> (Matrix3<f64>, f64) {
    let theta = (g[(1, 0)] - g[(0, 1)]).atan2(g[(0, 0)] + g[(1, 1)]);
    (pole_rotation(theta), theta)
}

/// `‖gᵀg − I‖_max + |det g − 1|`.
pub fn orthogonality_defect(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    (g.transpose() * g - DMatrix::identity(n, n)).abs().max() + (g.determinant() - 1.0).abs()
}

impl MatrixLieGroup {
    pub fn name(self) -> &'static str {
        match self {
            Self::So3 => "SO(3)",
            Self::PoleStabilizer => "SO(2)",
            Self::So3xSo2 => "SO(3)xSO(2)",
        }
    }

    pub fn matrix_size(self) -> usize {
        match self {
            Self::So3 | Self::PoleStabilizer => 3,
            Self::So3xSo2 => 5,
        }
    }

    pub fn algebra_basis(self) -> Vec<DMatrix<f64>> {
        let so3: Vec<Matrix3<f64>> = (0..3).map(|i| hat(&Vector3::ith(i, 1.0))).collect();
        match self {
            Self::So3 => so3.iter().map(to_d).collect(),
            Self::PoleStabilizer => vec![to_d(&so3[2])],
            Self::So3xSo2 => {
                let mut out: Vec<DMatrix<f64>> = so3.iter().map(|a| block_diag(a, &Matrix2::zeros())).collect();
                out.push(block_diag(&Matrix3::zeros(), &Matrix2::new(0.0, -1.0, 1.0, 0.0)));
                out
            }
        }
    }

    pub fn exp(self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::So3 | Self::PoleStabilizer => to_d(&so3_exp(&vee(&block3(a)))),
            Self::So3xSo2 => block_diag(&so3_exp(&vee(&block3(a))), &so2(block2(a)[(1, 0)])),
        }
    }

    /// Principal logarithm, valid away from rotation angle π.
    pub fn log(self, g: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Self::So3 | Self::PoleStabilizer => to_d(&hat(&so3_log(&block3(g)))),
            Self::So3xSo2 => {
                let y = block2(g);
                let angle = y[(1, 0)].atan2(y[(0, 0)]);
                block_diag(&hat(&so3_log(&block3(g))), &Matrix2::new(0.0, -angle, angle, 0.0))
            }
        }
    }

    /// Distance of a matrix to the group (orthogonality, determinant and,
    /// for the subgroups, the block structure).
    pub fn membership_defect(self, g: &DMatrix<f64>) -> f64 {
        if g.nrows() != self.matrix_size() || g.ncols() != self.matrix_size() {
            return f64::INFINITY;
        }
        match self {
            Self::So3 => orthogonality_defect(g),
            Self::PoleStabilizer => orthogonality_defect(g) + distance_to_h(&block3(g)),
            Self::So3xSo2 => {
                let off = g.view((0, 3), (3, 2)).abs().max() + g.view((3, 0), (2, 3)).abs().max();
                orthogonality_defect(&to_d(&block3(g))) + orthogonality_defect(&to_d(&block2(g))) + off
            }
        }
    }
}

/// Path in a matrix Lie group.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupPath {
    pub group: MatrixLieGroup,
    pub times: Vec<f64>,
    pub elements: Vec<DMatrix<f64>>,
}

impl GroupPath {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn max_membership_defect(&self) -> f64 {
        self.elements.iter().map(|g| self.group.membership_defect(g)).fold(0.0, f64::max)
    }

    pub fn so3(&self, i: usize) -> Matrix3<f64> {
        block3(&self.elements[i])
    }
}

fn check_skew3(a: &Matrix3<f64>) -> Result<()> {
    if !((a + a.transpose()).abs().max() <= 1e-12 * a.abs().max().max(1.0)) {
        return Err(Error::InvalidParameter("A must be skew-symmetric (an element of so(3))".into()));
    }
    Ok(())
}

fn check_rotation(x: &Matrix3<f64>, what: &str) -> Result<()> {
    let defect = orthogonality_defect(&to_d(x));
    if !(defect <= GROUP_TOL) {
        return Err(Error::InvalidParameter(format!("{what} is not in SO(3) (defect {defect:.3e})")));
    }
    Ok(())
}

fn scalar_driver(z: &SampledPath) -> Result<()> {
    if z.dim() != 1 {
        return Err(Error::DimensionMismatch(format!("expected a scalar driver, got ℝ^{}", z.dim())));
    }
    Ok(())
}

/// `g_t = exp(A (Z_t − Z_0))` by the Rodrigues formula.
pub fn solve_right_invariant(a: &Matrix3<f64>, z: &SampledPath) -> Result<GroupPath> {
    check_skew3(a)?;
    scalar_driver(z)?;
    let w = vee(a);
    let z0 = z.scalar(0);
    Ok(GroupPath {
        group: MatrixLieGroup::So3,
        times: z.times().to_vec(),
        elements: (0..z.len()).map(|i| to_d(&so3_exp(&(w * (z.scalar(i) - z0))))).collect(),
    })
}

struct Lifted {
    g: GroupPath,
    frames: crate::bundle::FramePath,
}

fn lift_group_path(a: &Matrix3<f64>, z: &SampledPath, x: &Matrix3<f64>) -> Result<Lifted> {
    check_rotation(x, "x")?;
    let g = solve_right_invariant(a, z)?;
    let mut values = Vec::with_capacity(3 * z.len());
    for i in 0..g.len() {
        let b = g.so3(i) * x * Vector3::z();
        values.extend_from_slice(b.normalize().as_slice());
    }
    let base = SampledPath::new(z.times().to_vec(), values, 3, z.alpha())?;
    let u0 = x.fixed_view::<3, 2>(0, 0).into_owned();
    let frames = horizontal_lift(&SphereFrameBundle, &base, &u0)?;
    Ok(Lifted { g, frames })
}

/// Horizontal factor `g^{H,x}_t = L_t xᵀ`, where `L_t = [u1 u2 π(g_t x)]` is the
/// horizontal lift of the base path `g_t x e3` started at `x`; `g^{H,x}_0 = I`.
pub fn horizontal_factor(a: &Matrix3<f64>, z: &SampledPath, x: &Matrix3<f64>) -> Result<GroupPath> {
    let lifted = lift_group_path(a, z, x)?;
    Ok(GroupPath {
        group: MatrixLieGroup::So3,
        times: z.times().to_vec(),
        elements: (0..lifted.frames.len())
            .map(|i| to_d(&(lifted.frames.bundle_point(i) * x.transpose())))
            .collect(),
    })
}

/// `g_t x = g^{H,x}_t x h_t` with `h_t ∈ H`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomogeneousDecomposition {
    pub times: Vec<f64>,
    pub base_point: Matrix3<f64>,
    pub g: Vec<Matrix3<f64>>,
    pub gh: Vec<Matrix3<f64>>,
    /// `h_t` after projection to `H`.
    pub h: Vec<Matrix3<f64>>,
    pub h_angle: Vec<f64>,
    /// Distance of `x⁻¹ (g^{H,x}_t)⁻¹ g_t x` to `H` before projection.
    pub h_distance: Vec<f64>,
    /// `‖g^{H,x}_t x h_t − g_t x‖_max` with the projected `h_t`.
    pub reconstruction: Vec<f64>,
    /// Discrete connection increments of `g^{H,x}_t x` (see
    /// [`FramePath::horizontality_residual`](crate::bundle::FramePath::horizontality_residual)).
    pub horizontality_residual: f64,
}

impl HomogeneousDecomposition {
    pub fn max_h_distance(&self) -> f64 {
        self.h_distance.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_reconstruction(&self) -> f64 {
        self.reconstruction.iter().copied().fold(0.0, f64::max)
    }
}

pub fn decompose_homogeneous(a: &Matrix3<f64>, z: &SampledPath, x: &Matrix3<f64>) -> Result<HomogeneousDecomposition> {
    let Lifted { g, frames } = lift_group_path(a, z, x)?;
    let n = g.len();
    let mut out = HomogeneousDecomposition {
        times: z.times().to_vec(),
        base_point: *x,
        g: Vec::with_capacity(n),
        gh: Vec::with_capacity(n),
        h: Vec::with_capacity(n),
        h_angle: Vec::with_capacity(n),
        h_distance: Vec::with_capacity(n),
        reconstruction: Vec::with_capacity(n),
        horizontality_residual: frames.horizontality_residual(),
    };
    for i in 0..n {
        let gi = g.so3(i);
        let l = frames.bundle_point(i);
        let gh = l * x.transpose();
        let raw = x.transpose() * gh.transpose() * gi * x;
        let distance = distance_to_h(&raw);
        let (h, angle) = project_to_h(&raw);
        out.reconstruction.push((gh * x * h - gi * x).abs().max());
        out.g.push(gi);
        out.gh.push(gh);
        out.h.push(h);
        out.h_angle.push(angle);
        out.h_distance.push(distance);
    }
    let worst = out.max_h_distance();
    if !(worst <= H_DISTANCE_LIMIT) {
        return Err(Error::InvariantViolation(format!(
            "vertical factor left H: distance {worst:.3e} > {H_DISTANCE_LIMIT:.0e}"
        )));
    }
    Ok(out)
}

/// Product connection on `SO(3) × SO(2)`: `ω(g', h') = y⁻¹ h'` at `(g, y)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct TrivialBundle;

impl ConnectionForm for TrivialBundle {
    fn name(&self) -> &'static str {
        "trivial-so3-so2"
    }

    fn algebra_basis(&self) -> Vec<DMatrix<f64>> {
        vec![so2_generator()]
    }

    fn eval(&self, p: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
        let y = p.view((3, 3), (2, 2)).into_owned();
        let y_inv = y.try_inverse().unwrap_or_else(|| DMatrix::from_element(2, 2, f64::NAN));
        y_inv * v.view((3, 3), (2, 2))
    }

    fn act(&self, p: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = DMatrix::identity(5, 5);
        r.view_mut((3, 3), (2, 2)).copy_from(h);
        p * r
    }

    fn fundamental(&self, p: &DMatrix<f64>, a: &DMatrix<f64>) -> DMatrix<f64> {
        let mut r = DMatrix::zeros(5, 5);
        r.view_mut((3, 3), (2, 2)).copy_from(a);
        p * r
    }
}

/// `η_t = (exp(A ΔZ_t), I)`, `h_t = y⁻¹ exp(B ΔZ_t) y` with `ΔZ_t = Z_t − Z_0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrivialDecomposition {
    pub times: Vec<f64>,
    pub eta: GroupPath,
    pub h: Vec<Matrix2<f64>>,
    /// `max_t ‖η_t · (x, y h_t) − (exp(A ΔZ) x, exp(B ΔZ) y)‖_max`.
    pub reconstruction: f64,
}

pub fn trivial_bundle_decompose(
    a: &Matrix3<f64>,
    b: &Matrix2<f64>,
    z: &SampledPath,
    x: &Matrix3<f64>,
    y: &Matrix2<f64>,
) -> Result<TrivialDecomposition> {
    check_skew3(a)?;
    if !((b + b.transpose()).abs().max() <= 1e-12 * b.abs().max().max(1.0)) {
        return Err(Error::InvalidParameter("B must be skew-symmetric (an element of so(2))".into()));
    }
    check_rotation(x, "x")?;
    let y_defect = orthogonality_defect(&to_d(y));
    if !(y_defect <= GROUP_TOL) {
        return Err(Error::InvalidParameter(format!("y is not in SO(2) (defect {y_defect:.3e})")));
    }
    scalar_driver(z)?;
    let w = vee(a);
    let beta = b[(1, 0)];
    let z0 = z.scalar(0);
    let mut eta = Vec::with_capacity(z.len());
    let mut hs = Vec::with_capacity(z.len());
    let mut reconstruction = 0.0f64;
    for i in 0..z.len() {
        let dz = z.scalar(i) - z0;
        let ga = so3_exp(&(w * dz));
        let gb = so2(beta * dz);
        let h = y.transpose() * gb * y;
        let e = block_diag(&ga, &Matrix2::identity());
        let acted = &e * block_diag(x, &(y * h));
        let full = block_diag(&(ga * x), &(gb * y));
        reconstruction = reconstruction.max((acted - full).abs().max());
        eta.push(e);
        hs.push(h);
    }
    Ok(TrivialDecomposition {
        times: z.times().to_vec(),
        eta: GroupPath {
            group: MatrixLieGroup::So3xSo2,
            times: z.times().to_vec(),
            elements: eta,
        },
        h: hs,
        reconstruction,
    })
}
