//! Dense linear-algebra helpers: Padé scaling-and-squaring matrix exponential,
//! block views and a few rotation-group utilities shared by the geometric modules.

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix3x2, Vector3};

use crate::error::{Error, Result};

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// Backward-error bounds for the [m/m] Padé approximants (double precision).
const THETA3: f64 = 1.495585217958292e-2;
const THETA5: f64 = 2.539_398_330_063_23e-1;
const THETA7: f64 = 9.504178996162932e-1;
const THETA9: f64 = 2.097847961257068;
const THETA13: f64 = 5.371920351148152;

fn one_norm(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn pade_low(a: &DMatrix<f64>, b: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u = DMatrix::<f64>::identity(n, n) * b[1];
    let mut v = DMatrix::<f64>::identity(n, n) * b[0];
    let mut power = DMatrix::<f64>::identity(n, n);
    let m = b.len() - 1;
    for j in 1..=m / 2 {
        power = &power * &a2;
        u += &power * b[2 * j + 1];
        v += &power * b[2 * j];
    }
    (a * u, v)
}

fn pade13(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let b = &PADE13;
    let id = DMatrix::<f64>::identity(n, n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &id * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &id * b[0];
    (u, v)
}

/// Matrix exponential by scaling and squaring with a Padé approximant of
/// degree up to 13, the degree picked from the 1-norm.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm requires a square matrix");
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if n == 1 {
        return DMatrix::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = one_norm(a);
    let (u, v, squarings) = if norm <= THETA3 {
        let (u, v) = pade_low(a, &PADE3);
        (u, v, 0)
    } else if norm <= THETA5 {
        let (u, v) = pade_low(a, &PADE5);
        (u, v, 0)
    } else if norm <= THETA7 {
        let (u, v) = pade_low(a, &PADE7);
        (u, v, 0)
    } else if norm <= THETA9 {
        let (u, v) = pade_low(a, &PADE9);
        (u, v, 0)
    } else {
        let s = ((norm / THETA13).log2().ceil()).max(0.0) as i32;
        let scaled = a * 2f64.powi(-s);
        let (u, v) = pade13(&scaled);
        (u, v, s)
    };
    let numer = &v + &u;
    let denom = &v - &u;
    let mut r = denom
        .lu()
        .solve(&numer)
        .expect("Padé denominator is nonsingular within the theta bounds");
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

/// Extreme singular values (min, max).
pub fn singular_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    let sv = a.clone().singular_values();
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    (min, max)
}

/// Largest absolute entry difference.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn parse_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Parse("empty matrix".into()));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Parse("ragged matrix rows".into()));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Parse("non-finite matrix entry".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().cloned().collect()).collect()
}

/// Hat map ℝ³ → 𝔰𝔬(3).
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Inverse of [`hat`], reading the skew part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(
        0.5 * (m[(2, 1)] - m[(1, 2)]),
        0.5 * (m[(0, 2)] - m[(2, 0)]),
        0.5 * (m[(1, 0)] - m[(0, 1)]),
    )
}

/// Rodrigues formula for exp: 𝔰𝔬(3) → SO(3).
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = w.norm_squared();
    let k = hat(w);
    let (a, b) = if theta2 < 1e-12 {
        // Taylor coefficients of sin(θ)/θ and (1 − cos θ)/θ².
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Principal logarithm SO(3) → ℝ³ (rotation vector), valid away from angle π.
pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let cos = ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let axis_sin = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ) * 0.5;
    let sin = axis_sin.norm();
    let theta = sin.atan2(cos);
    if theta < 1e-8 {
        return axis_sin;
    }
    if std::f64::consts::PI - theta < 1e-6 {
        // Near the cut locus: axis from the symmetric part.
        let b = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos;
        let mut best = 0;
        for i in 1..3 {
            if b[(i, i)] > b[(best, best)] {
                best = i;
            }
        }
        let mut axis: Vector3<f64> = b.column(best).into();
        axis /= axis.norm();
        if axis.dot(&axis_sin) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    axis_sin * (theta / sin)
}

pub fn so2(angle: f64) -> Matrix2<f64> {
    let (s, c) = angle.sin_cos();
    Matrix2::new(c, -s, s, c)
}

/// Polar factor of a full-column-rank 3×2 matrix: the closest matrix with
/// orthonormal columns, `u (uᵀu)^{-1/2}`. Returns `None` when degenerate.
pub fn polar_orthonormalize(u: &Matrix3x2<f64>) -> Option<Matrix3x2<f64>> {
    let gram = u.transpose() * u;
    let eig = gram.symmetric_eigen();
    let min = eig.eigenvalues.min();
    if !(min > 1e-24) || !min.is_finite() {
        return None;
    }
    let inv_sqrt = eig.eigenvectors
        * Matrix2::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()))
        * eig.eigenvectors.transpose();
    Some(u * inv_sqrt)
}

/// Polar projection of a 3×3 matrix onto SO(3).
pub fn polar_so3(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        let mut col = u.column_mut(2);
        col *= -1.0;
        r = u * v_t;
    }
    Some(r)
}
