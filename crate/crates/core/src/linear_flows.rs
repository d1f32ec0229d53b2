//! Linear Young systems `dx = A x dZ`: fundamental solutions, the splitting
//! `F_t = η_t ψ_t` with `η ∈ G_H = [[g1, g2], [0, I]]` and
//! `ψ ∈ G_V = [[I, 0], [g3, g4]]`, explosion of that splitting, and a real
//! Schur change of basis under which the splitting never explodes.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::holder_paths::SampledPath;
use crate::linalg::{expm, singular_extremes};
use crate::yde_solver::DIVERGENCE_GUARD;

/// Default relative singularity threshold: `σ_min(F4) < 1e-8 · σ_max(F4)`.
pub const DEFAULT_SINGULARITY: f64 = 1e-8;

/// `A` with its horizontal dimension `k`; blocks `A1 (k×k)`, `A2 (k×ℓ)`,
/// `A3 (ℓ×k)`, `A4 (ℓ×ℓ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSystem {
    a: DMatrix<f64>,
    k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub a1: DMatrix<f64>,
    pub a2: DMatrix<f64>,
    pub a3: DMatrix<f64>,
    pub a4: DMatrix<f64>,
}

fn split(m: &DMatrix<f64>, k: usize) -> Blocks {
    let n = m.nrows();
    let l = n - k;
    Blocks {
        a1: m.view((0, 0), (k, k)).into_owned(),
        a2: m.view((0, k), (k, l)).into_owned(),
        a3: m.view((k, 0), (l, k)).into_owned(),
        a4: m.view((k, k), (l, l)).into_owned(),
    }
}

fn assemble(b: &Blocks) -> DMatrix<f64> {
    let k = b.a1.nrows();
    let l = b.a4.nrows();
    let mut m = DMatrix::zeros(k + l, k + l);
    m.view_mut((0, 0), (k, k)).copy_from(&b.a1);
    m.view_mut((0, k), (k, l)).copy_from(&b.a2);
    m.view_mut((k, 0), (l, k)).copy_from(&b.a3);
    m.view_mut((k, k), (l, l)).copy_from(&b.a4);
    m
}

fn check_split(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "horizontal dimension k = {k} must satisfy 1 ≤ k < n = {n}"
        )));
    }
    Ok(())
}

impl LinearSystem {
    pub fn new(a: DMatrix<f64>, k: usize) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch("A must be square".into()));
        }
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("A must be finite".into()));
        }
        check_split(a.nrows(), k)?;
        Ok(Self { a, k })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn blocks(&self) -> Blocks {
        split(&self.a, self.k)
    }

    pub fn reassemble(&self) -> DMatrix<f64> {
        assemble(&self.blocks())
    }
}

/// Matrix-valued path on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPath {
    pub times: Vec<f64>,
    pub mats: Vec<DMatrix<f64>>,
}

fn scalar_driver(z: &SampledPath) -> Result<()> {
    if z.dim() != 1 {
        return Err(Error::DimensionMismatch(format!(
            "linear systems take a scalar driver, got dimension {}",
            z.dim()
        )));
    }
    Ok(())
}

/// `F_t = exp(A (Z_t − Z_0))` at every node.
pub fn fundamental_solution(a: &DMatrix<f64>, z: &SampledPath, exec: Exec) -> Result<MatrixPath> {
    scalar_driver(z)?;
    if !a.is_square() {
        return Err(Error::DimensionMismatch("A must be square".into()));
    }
    let z0 = z.scalar(0);
    let mats = exec.map_range(z.len(), |i| expm(&(a * (z.scalar(i) - z0))));
    Ok(MatrixPath {
        times: z.times().to_vec(),
        mats,
    })
}

/// Per-node blocks of the splitting, truncated at the explosion node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlockDecomposition {
    pub times: Vec<f64>,
    pub k: usize,
    pub g1: Vec<DMatrix<f64>>,
    pub g2: Vec<DMatrix<f64>>,
    pub g3: Vec<DMatrix<f64>>,
    pub g4: Vec<DMatrix<f64>>,
    pub explosion_index: Option<usize>,
}

impl BlockDecomposition {
    /// Number of nodes with a decomposition.
    pub fn len(&self) -> usize {
        self.g1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g1.is_empty()
    }

    pub fn n(&self) -> usize {
        self.k + self.g4.first().map_or(0, |m| m.nrows())
    }

    /// `η = [[g1, g2], [0, I]]`; the lower blocks are exact.
    pub fn eta(&self, i: usize) -> DMatrix<f64> {
        let l = self.g4[i].nrows();
        assemble(&Blocks {
            a1: self.g1[i].clone(),
            a2: self.g2[i].clone(),
            a3: DMatrix::zeros(l, self.k),
            a4: DMatrix::identity(l, l),
        })
    }

    /// `ψ = [[I, 0], [g3, g4]]`; the upper blocks are exact.
    pub fn psi(&self, i: usize) -> DMatrix<f64> {
        let l = self.g4[i].nrows();
        assemble(&Blocks {
            a1: DMatrix::identity(self.k, self.k),
            a2: DMatrix::zeros(self.k, l),
            a3: self.g3[i].clone(),
            a4: self.g4[i].clone(),
        })
    }

    /// `max_i ‖η_i ψ_i − F_i‖_max` over the non-exploded nodes.
    pub fn compose_residual(&self, f: &MatrixPath) -> f64 {
        (0..self.len())
            .map(|i| crate::linalg::max_abs_diff(&(self.eta(i) * self.psi(i)), &f.mats[i]))
            .fold(0.0, f64::max)
    }
}

/// `sign(det F4) · σ_min(F4)/σ_max(F4)`: positive while the splitting exists
/// (F4 starts at the identity), and it crosses zero where F4 is singular.
pub fn f4_condition(f4: &DMatrix<f64>) -> f64 {
    let (min, max) = singular_extremes(f4);
    if !(max > 0.0) || !min.is_finite() {
        return f64::NEG_INFINITY;
    }
    let det = f4.determinant();
    let sign = if det > 0.0 { 1.0 } else { -1.0 };
    sign * min / max
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!("threshold {threshold} outside (0, 1)")));
    }
    Ok(())
}

fn blocks_at(f: &DMatrix<f64>, k: usize, threshold: f64) -> Option<[DMatrix<f64>; 4]> {
    let b = split(f, k);
    if f4_condition(&b.a4) < threshold {
        return None;
    }
    let f4_inv = b.a4.clone().try_inverse()?;
    let g2 = &b.a2 * &f4_inv;
    let g1 = &b.a1 - &g2 * &b.a3;
    Some([g1, g2, b.a3, b.a4])
}

/// `ψ := [[I, 0], [F3, F4]]`, `η := F ψ^{-1} = [[F1 − F2 F4⁻¹ F3, F2 F4⁻¹], [0, I]]`.
///
/// Explosion: first node where `F4` is numerically singular
/// (`σ_min < threshold · σ_max`) or has lost the orientation it has at
/// `t = 0` (`det F4 ≤ 0`, i.e. a singular point was crossed between nodes).
pub fn decompose_blocks(
    f: &MatrixPath,
    k: usize,
    threshold: f64,
    exec: Exec,
) -> Result<BlockDecomposition> {
    check_threshold(threshold)?;
    let n = f.mats.first().map_or(0, |m| m.nrows());
    check_split(n, k)?;
    let per_node = exec.map(&f.mats, |m| blocks_at(m, k, threshold));
    let mut out = BlockDecomposition {
        times: f.times.clone(),
        k,
        g1: Vec::new(),
        g2: Vec::new(),
        g3: Vec::new(),
        g4: Vec::new(),
        explosion_index: None,
    };
    for (i, node) in per_node.into_iter().enumerate() {
        match node {
            Some([g1, g2, g3, g4]) => {
                out.g1.push(g1);
                out.g2.push(g2);
                out.g3.push(g3);
                out.g4.push(g4);
            }
            None => {
                out.explosion_index = Some(i);
                break;
            }
        }
    }
    Ok(out)
}

fn blocks_diverged(blocks: &[&DMatrix<f64>]) -> bool {
    blocks
        .iter()
        .any(|m| m.iter().any(|v| !v.is_finite()) || m.norm() > DIVERGENCE_GUARD)
}

/// Left-point Euler on the coupled block equations
/// ```text
/// dg1 = [A1 g1 − g2 A3 g1] dZ          dg2 = [A1 g2 + A2 − g2 A4 − g2 A3 g2] dZ
/// dg3 = [A3 g1 + A3 g2 g3 + A4 g3] dZ   dg4 = [A3 g2 g4 + A4 g4] dZ
/// ```
/// from `g1 = I, g2 = 0, g3 = 0, g4 = I`. Explosion: divergence guard on any
/// block, or the `g4` singularity test of [`decompose_blocks`].
pub fn decompose_via_yde(
    system: &LinearSystem,
    z: &SampledPath,
    threshold: f64,
) -> Result<BlockDecomposition> {
    scalar_driver(z)?;
    check_threshold(threshold)?;
    let Blocks { a1, a2, a3, a4 } = system.blocks();
    let k = system.k();
    let l = system.n() - k;
    let mut g1 = DMatrix::identity(k, k);
    let mut g2 = DMatrix::zeros(k, l);
    let mut g3 = DMatrix::zeros(l, k);
    let mut g4 = DMatrix::identity(l, l);
    let mut out = BlockDecomposition {
        times: z.times().to_vec(),
        k,
        g1: vec![g1.clone()],
        g2: vec![g2.clone()],
        g3: vec![g3.clone()],
        g4: vec![g4.clone()],
        explosion_index: None,
    };
    for i in 0..z.len() - 1 {
        let dz = z.scalar(i + 1) - z.scalar(i);
        let a3g1 = &a3 * &g1;
        let a3g2 = &a3 * &g2;
        let d1 = &a1 * &g1 - &g2 * &a3g1;
        let d2 = &a1 * &g2 + &a2 - &g2 * &a4 - &g2 * &a3g2;
        let d3 = &a3g1 + &a3g2 * &g3 + &a4 * &g3;
        let d4 = &a3g2 * &g4 + &a4 * &g4;
        g1 += d1 * dz;
        g2 += d2 * dz;
        g3 += d3 * dz;
        g4 += d4 * dz;
        if blocks_diverged(&[&g1, &g2, &g3, &g4]) || f4_condition(&g4) < threshold {
            out.explosion_index = Some(i + 1);
            break;
        }
        out.g1.push(g1.clone());
        out.g2.push(g2.clone());
        out.g3.push(g3.clone());
        out.g4.push(g4.clone());
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExplosionEvent {
    /// First grid node flagged by the singularity test.
    pub node: usize,
    /// Bisection-refined explosion time.
    pub time: f64,
    /// Driver value `Z` at the refined time.
    pub driver_value: f64,
}

/// First time the splitting of `exp(A(Z_t − Z_0))` breaks down, refined
/// between the bracketing nodes by bisection in `Z` (the driver is taken
/// linear between nodes). `None` when the splitting survives on the grid.
pub fn detect_explosion(
    system: &LinearSystem,
    z: &SampledPath,
    threshold: f64,
) -> Result<Option<ExplosionEvent>> {
    scalar_driver(z)?;
    check_threshold(threshold)?;
    let a = system.matrix();
    let k = system.k();
    let z0 = z.scalar(0);
    let measure = |zv: f64| f4_condition(&split(&expm(&(a * (zv - z0))), k).a4) - threshold;
    let Some(node) = (0..z.len()).find(|&i| measure(z.scalar(i)) < 0.0) else {
        return Ok(None);
    };
    if node == 0 {
        return Ok(Some(ExplosionEvent {
            node,
            time: z.times()[0],
            driver_value: z0,
        }));
    }
    let (za, zb) = (z.scalar(node - 1), z.scalar(node));
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if measure(za + mid * (zb - za)) < 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (ta, tb) = (z.times()[node - 1], z.times()[node]);
    Ok(Some(ExplosionEvent {
        node,
        time: ta + hi * (tb - ta),
        driver_value: za + hi * (zb - za),
    }))
}

/// Orthogonal change of basis `A = P T Pᵀ` with `T` quasi-upper-triangular and
/// `T[k.., ..k]` identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SchurFoliation {
    pub p: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub k: usize,
    /// Sizes (1 or 2) of the diagonal blocks of `T`, top to bottom.
    pub block_sizes: Vec<usize>,
    /// `‖P T Pᵀ − A‖_max`.
    pub residual: f64,
}

impl SchurFoliation {
    /// All admissible horizontal dimensions (block boundaries of `T`).
    pub fn admissible_ks(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut acc = 0;
        for &s in &self.block_sizes[..self.block_sizes.len() - 1] {
            acc += s;
            out.push(acc);
        }
        out
    }

    /// Splitting in `P`-coordinates, i.e. of `exp(T(Z_t − Z_0))`.
    pub fn decompose(&self, z: &SampledPath, threshold: f64, exec: Exec) -> Result<BlockDecomposition> {
        let f = fundamental_solution(&self.t, z, exec)?;
        decompose_blocks(&f, self.k, threshold, exec)
    }

    /// Map a factor from `P`-coordinates back: `P M Pᵀ`.
    pub fn to_original(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        &self.p * m * self.p.transpose()
    }
}

fn is_upper_triangular(a: &DMatrix<f64>) -> bool {
    (0..a.nrows()).all(|i| (0..i).all(|j| a[(i, j)] == 0.0))
}

/// Rotate rows/columns `i, i+1` so the 2×2 diagonal block there (with real
/// eigenvalues) becomes upper triangular.
fn split_real_pair(t: &mut DMatrix<f64>, p: &mut DMatrix<f64>, i: usize) {
    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
    let half_tr = 0.5 * (a + d);
    let disc = (0.5 * (a - d)).powi(2) + b * c;
    let lambda = half_tr + disc.max(0.0).sqrt();
    let (mut vx, mut vy) = if (lambda - d).abs() + c.abs() >= b.abs() + (lambda - a).abs() {
        (lambda - d, c)
    } else {
        (b, lambda - a)
    };
    let norm = vx.hypot(vy);
    vx /= norm;
    vy /= norm;
    let n = t.nrows();
    let mut g = DMatrix::identity(n, n);
    g[(i, i)] = vx;
    g[(i + 1, i)] = vy;
    g[(i, i + 1)] = -vy;
    g[(i + 1, i + 1)] = vx;
    *t = g.transpose() * &*t * &g;
    *p = &*p * g;
    t[(i + 1, i)] = 0.0;
}

/// Real Schur basis realizing a non-exploding splitting. `k` is the smallest
/// block boundary (1 when `T` starts with a real eigenvalue, 2 for a complex
/// pair), so `k = a + 2b` with `a` real eigenvalues and `b` complex pairs in
/// the leading block.
pub fn schur_foliation(a: &DMatrix<f64>) -> Result<SchurFoliation> {
    let n = a.nrows();
    if !a.is_square() || n < 2 {
        return Err(Error::InvalidParameter("need a square matrix of size ≥ 2".into()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("A must be finite".into()));
    }
    let (mut p, mut t) = if is_upper_triangular(a) {
        (DMatrix::identity(n, n), a.clone())
    } else {
        let schur = nalgebra::linalg::Schur::try_new(a.clone(), f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numerical("real Schur iteration did not converge".into()))?;
        schur.unpack()
    };
    let scale = t.abs().max().max(f64::MIN_POSITIVE);
    for j in 0..n {
        for i in j + 2..n {
            t[(i, j)] = 0.0;
        }
    }
    for i in 0..n - 1 {
        let local = t[(i, i)].abs() + t[(i + 1, i + 1)].abs();
        if t[(i + 1, i)].abs() <= 1e-14 * local.max(scale * 1e-3) {
            t[(i + 1, i)] = 0.0;
        }
    }
    let mut sizes = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)] != 0.0 {
            if i + 2 < n && t[(i + 2, i + 1)] != 0.0 {
                return Err(Error::Numerical("Schur form did not deflate to 1×1/2×2 blocks".into()));
            }
            let (a11, a12, a21, a22) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
            let disc = (0.5 * (a11 - a22)).powi(2) + a12 * a21;
            if disc >= 0.0 {
                split_real_pair(&mut t, &mut p, i);
                sizes.push(1);
                i += 1;
            } else {
                sizes.push(2);
                i += 2;
            }
        } else {
            sizes.push(1);
            i += 1;
        }
    }
    if sizes.len() < 2 {
        return Err(Error::NoAdmissibleFoliation(format!(
            "A ({n}×{n}) has a single complex-conjugate block; an invariant splitting \
             with 1 ≤ k < n needs n > 2 or real eigenvalues"
        )));
    }
    let k = sizes[0];
    for r in k..n {
        for c in 0..k {
            t[(r, c)] = 0.0;
        }
    }
    let residual = crate::linalg::max_abs_diff(&(&p * &t * p.transpose()), a);
    Ok(SchurFoliation {
        p,
        t,
        k,
        block_sizes: sizes,
        residual,
    })
}
