//! First-order Euler solver for `dx_t = X(x_t) dZ_t` in the Young regime,
//! with flow Jacobians, the inverse flow and a pointwise check of the
//! composition formula `dφ = X(φ)dZ + Ad(η_t)Y(φ)dZ` for `φ = η ∘ ψ`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::holder_paths::SampledPath;

/// `‖x‖` above this (or any non-finite entry) marks an explosion.
pub const DIVERGENCE_GUARD: f64 = 1e8;

/// A family of vector fields `x ↦ (X_1(x), …, X_d(x))` on ℝ^n.
pub trait VectorFieldFamily: Sync {
    fn state_dim(&self) -> usize;
    fn driver_dim(&self) -> usize;

    /// n×d matrix whose columns are `X_1(x) … X_d(x)`.
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64>;

    /// `DX_j(x)` (n×n) for each driver component `j`.
    fn jac(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        finite_difference_jac(self, x)
    }
}

/// Central differences with step `1e-6·(1 + |x_k|)`.
pub fn finite_difference_jac<V: VectorFieldFamily + ?Sized>(
    field: &V,
    x: &DVector<f64>,
) -> Vec<DMatrix<f64>> {
    let n = field.state_dim();
    let d = field.driver_dim();
    let mut out = vec![DMatrix::zeros(n, n); d];
    for k in 0..n {
        let h = 1e-6 * (1.0 + x[k].abs());
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let diff = (field.eval(&xp) - field.eval(&xm)) / (2.0 * h);
        for (j, m) in out.iter_mut().enumerate() {
            m.set_column(k, &diff.column(j));
        }
    }
    out
}

/// `X_j(x) = A_j x`.
#[derive(Debug, Clone)]
pub struct LinearField {
    mats: Vec<DMatrix<f64>>,
}

impl LinearField {
    pub fn new(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let n = mats.first().map(|m| m.nrows()).unwrap_or(0);
        if n == 0 || mats.iter().any(|m| m.nrows() != n || m.ncols() != n) {
            return Err(Error::DimensionMismatch(
                "linear field needs square matrices of one size".into(),
            ));
        }
        Ok(Self { mats })
    }

    pub fn single(a: DMatrix<f64>) -> Result<Self> {
        Self::new(vec![a])
    }

    pub fn matrices(&self) -> &[DMatrix<f64>] {
        &self.mats
    }
}

impl VectorFieldFamily for LinearField {
    fn state_dim(&self) -> usize {
        self.mats[0].nrows()
    }
    fn driver_dim(&self) -> usize {
        self.mats.len()
    }
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.len(), self.mats.len());
        for (j, a) in self.mats.iter().enumerate() {
            out.set_column(j, &(a * x));
        }
        out
    }
    fn jac(&self, _x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        self.mats.clone()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ZeroField {
    pub state_dim: usize,
    pub driver_dim: usize,
}

impl VectorFieldFamily for ZeroField {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn driver_dim(&self) -> usize {
        self.driver_dim
    }
    fn eval(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::zeros(self.state_dim, self.driver_dim)
    }
    fn jac(&self, _x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        vec![DMatrix::zeros(self.state_dim, self.state_dim); self.driver_dim]
    }
}

type EvalFn = dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync;
type JacFn = dyn Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync;

/// Field given by closures; the Jacobian falls back to finite differences.
pub struct FnField {
    state_dim: usize,
    driver_dim: usize,
    eval: Box<EvalFn>,
    jac: Option<Box<JacFn>>,
}

impl FnField {
    pub fn new<E>(state_dim: usize, driver_dim: usize, eval: E) -> Self
    where
        E: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            state_dim,
            driver_dim,
            eval: Box::new(eval),
            jac: None,
        }
    }

    pub fn with_jac<J>(mut self, jac: J) -> Self
    where
        J: Fn(&DVector<f64>) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    {
        self.jac = Some(Box::new(jac));
        self
    }
}

impl VectorFieldFamily for FnField {
    fn state_dim(&self) -> usize {
        self.state_dim
    }
    fn driver_dim(&self) -> usize {
        self.driver_dim
    }
    fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.eval)(x)
    }
    fn jac(&self, x: &DVector<f64>) -> Vec<DMatrix<f64>> {
        match &self.jac {
            Some(j) => j(x),
            None => finite_difference_jac(self, x),
        }
    }
}

/// Largest relative deviation between the analytic Jacobian and central
/// differences over `probes`.
pub fn jacobian_consistency<V: VectorFieldFamily + ?Sized>(field: &V, probes: &[DVector<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for p in probes {
        let analytic = field.jac(p);
        let numeric = finite_difference_jac(field, p);
        for (a, b) in analytic.iter().zip(&numeric) {
            let scale = a.abs().max().max(b.abs().max()).max(1.0);
            worst = worst.max((a - b).abs().max() / scale);
        }
    }
    worst
}

/// Solution on the driver grid up to a possible explosion.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// States for nodes `0..explosion.unwrap_or(times.len())`.
    pub states: Vec<DVector<f64>>,
    /// Flow Jacobians `Dφ_t(x_0)`, aligned with `states`.
    pub jacobians: Option<Vec<DMatrix<f64>>>,
    /// First node at which the divergence guard tripped.
    pub explosion: Option<usize>,
}

impl Trajectory {
    pub fn exploded(&self) -> bool {
        self.explosion.is_some()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().expect("trajectory has at least its initial state")
    }

    pub fn to_path(&self, alpha: f64) -> Result<SampledPath> {
        SampledPath::from_points(self.times[..self.states.len()].to_vec(), &self.states, alpha)
    }
}

fn diverged(x: &DVector<f64>) -> bool {
    !x.iter().all(|v| v.is_finite()) || x.norm() > DIVERGENCE_GUARD
}

fn check_dims<V: VectorFieldFamily + ?Sized>(field: &V, z: &SampledPath, x0: &DVector<f64>) -> Result<()> {
    if field.driver_dim() != z.dim() {
        return Err(Error::DimensionMismatch(format!(
            "field expects a driver in ℝ^{} but got ℝ^{}",
            field.driver_dim(),
            z.dim()
        )));
    }
    if field.state_dim() != x0.len() {
        return Err(Error::DimensionMismatch(format!(
            "field acts on ℝ^{} but x0 has {} components",
            field.state_dim(),
            x0.len()
        )));
    }
    Ok(())
}

/// One Euler step of the state and (optionally) its Jacobian.
fn euler_step<V: VectorFieldFamily + ?Sized>(
    field: &V,
    x: &DVector<f64>,
    jac: Option<&DMatrix<f64>>,
    dz: &DVector<f64>,
) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let next = x + field.eval(x) * dz;
    let next_jac = jac.map(|j| {
        let mut dx = DMatrix::zeros(j.nrows(), j.nrows());
        for (k, dxk) in field.jac(x).iter().enumerate() {
            dx += dxk * dz[k];
        }
        j + dx * j
    });
    (next, next_jac)
}

fn integrate<V: VectorFieldFamily + ?Sized>(
    field: &V,
    z: &SampledPath,
    x0: &DVector<f64>,
    with_jac: bool,
) -> Result<Trajectory> {
    check_dims(field, z, x0)?;
    let n = x0.len();
    let mut states = Vec::with_capacity(z.len());
    let mut jacs = with_jac.then(|| Vec::with_capacity(z.len()));
    if diverged(x0) {
        return Ok(Trajectory {
            times: z.times().to_vec(),
            states,
            jacobians: jacs,
            explosion: Some(0),
        });
    }
    let mut x = x0.clone();
    let mut j = with_jac.then(|| DMatrix::identity(n, n));
    states.push(x.clone());
    if let (Some(js), Some(j)) = (jacs.as_mut(), j.as_ref()) {
        js.push(j.clone());
    }
    let mut explosion = None;
    for i in 0..z.len() - 1 {
        let (nx, nj) = euler_step(field, &x, j.as_ref(), &z.increment(i));
        let jac_bad = nj.as_ref().is_some_and(|m| m.iter().any(|v| !v.is_finite()));
        if diverged(&nx) || jac_bad {
            explosion = Some(i + 1);
            break;
        }
        x = nx;
        j = nj;
        states.push(x.clone());
        if let (Some(js), Some(j)) = (jacs.as_mut(), j.as_ref()) {
            js.push(j.clone());
        }
    }
    Ok(Trajectory {
        times: z.times().to_vec(),
        states,
        jacobians: jacs,
        explosion,
    })
}

/// Euler scheme `x_{i+1} = x_i + X(x_i)(Z_{i+1} − Z_i)`.
pub fn solve_euler<V: VectorFieldFamily + ?Sized>(
    field: &V,
    z: &SampledPath,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    integrate(field, z, x0, false)
}

/// Batch of [`solve_euler`] over initial conditions on a shared grid.
pub fn solve_flow<V: VectorFieldFamily + ?Sized>(
    field: &V,
    z: &SampledPath,
    x0s: &[DVector<f64>],
    exec: Exec,
) -> Result<Vec<Trajectory>> {
    exec.map(x0s, |x0| solve_euler(field, z, x0))
        .into_iter()
        .collect()
}

/// Euler trajectory together with `J_{i+1} = J_i + Σ_j DX_j(x_i) J_i ΔZ^j_i`, `J_0 = I`.
pub fn variational_jacobian<V: VectorFieldFamily + ?Sized>(
    field: &V,
    z: &SampledPath,
    x0: &DVector<f64>,
) -> Result<Trajectory> {
    integrate(field, z, x0, true)
}

/// Endpoint and Jacobian of the Euler flow from node 0 to node `end`.
fn propagate<V: VectorFieldFamily + ?Sized>(
    field: &V,
    z: &SampledPath,
    x0: &DVector<f64>,
    end: usize,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = x0.len();
    let mut x = x0.clone();
    let mut j = DMatrix::identity(n, n);
    for i in 0..end {
        let (nx, nj) = euler_step(field, &x, Some(&j), &z.increment(i));
        x = nx;
        j = nj.unwrap();
        if diverged(&x) {
            return None;
        }
    }
    Some((x, j))
}

#[derive(Debug, Clone)]
pub struct InverseFlow {
    /// `z_t = η_t^{-1}(z_0)`.
    pub trajectory: Trajectory,
    /// `max_t ‖η_t(z_t) − z_0‖` measured with the forward scheme.
    pub round_trip: f64,
}

/// Inverse flow `z_t = η_t^{-1}(z_0)` from
/// `dz_t = −Dη_t(z_t)^{-1} X(η_t(z_t)) dZ_t`.
///
/// `Dη_t(z_t)` and `η_t(z_t)` come from the forward variational scheme run
/// from the current state (the characteristic ending near `z_0`), so forward
/// and inverse share one discretization; the Jacobian factor of each step is
/// taken at the right end of the interval. The cost is quadratic in the node
/// count.
pub fn inverse_flow<V: VectorFieldFamily + ?Sized>(
    field: &V,
    z: &SampledPath,
    z0: &DVector<f64>,
) -> Result<InverseFlow> {
    check_dims(field, z, z0)?;
    let mut states = vec![z0.clone()];
    let mut current = z0.clone();
    let mut round_trip: f64 = 0.0;
    let mut explosion = None;
    for i in 0..z.len() - 1 {
        let Some((image, jac)) = propagate(field, z, &current, i) else {
            explosion = Some(i);
            states.pop();
            break;
        };
        round_trip = round_trip.max((&image - z0).norm());
        let dz = z.increment(i);
        // Jacobian through t_{i+1}: with it the discrete inverse undoes the
        // forward Euler map exactly when X is linear.
        let (_, jac_next) = euler_step(field, &image, Some(&jac), &dz);
        let rhs = field.eval(&image) * dz;
        let Some(step) = jac_next.unwrap().lu().solve(&rhs) else {
            explosion = Some(i + 1);
            break;
        };
        let next = &current - step;
        if diverged(&next) {
            explosion = Some(i + 1);
            break;
        }
        current = next;
        states.push(current.clone());
    }
    if explosion.is_none() {
        match propagate(field, z, &current, z.len() - 1) {
            Some((image, _)) => round_trip = round_trip.max((&image - z0).norm()),
            None => explosion = Some(z.len() - 1),
        }
    }
    Ok(InverseFlow {
        trajectory: Trajectory {
            times: z.times().to_vec(),
            states,
            jacobians: None,
            explosion,
        },
        round_trip,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItoKunitaReport {
    /// Max over probes and nodes of `‖φ^{IK}_t − η_t(ψ_t(x))‖`.
    pub residual: f64,
    pub per_probe: Vec<f64>,
    /// Some component exploded; residuals cover the common lifetime only.
    pub partial: bool,
}

/// Preimage `q` with `η(q) = p` by Newton on the forward scheme; returns `(q, Dη(q))`.
fn invert_flow_map<V: VectorFieldFamily + ?Sized>(
    field: &V,
    z: &SampledPath,
    end: usize,
    p: &DVector<f64>,
    guess: &DVector<f64>,
) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let mut q = guess.clone();
    for _ in 0..30 {
        let (image, jac) = propagate(field, z, &q, end)?;
        let r = image - p;
        if r.norm() <= 1e-13 * (1.0 + p.norm()) {
            return Some((q, jac));
        }
        let dq = jac.lu().solve(&r)?;
        q -= dq;
    }
    let (image, jac) = propagate(field, z, &q, end)?;
    ((image - p).norm() <= 1e-9 * (1.0 + p.norm())).then_some((q, jac))
}

fn ito_kunita_probe<X, Y>(x: &X, y: &Y, z: &SampledPath, x0: &DVector<f64>) -> Result<(f64, bool)>
where
    X: VectorFieldFamily + ?Sized,
    Y: VectorFieldFamily + ?Sized,
{
    let psi = solve_euler(y, z, x0)?;
    let mut phi = x0.clone();
    let mut preimage = x0.clone();
    let mut worst: f64 = 0.0;
    for i in 0..psi.states.len() {
        // Direct composition η_{t_i}(ψ_{t_i}(x0)).
        let Some((direct, _)) = propagate(x, z, &psi.states[i], i) else {
            return Ok((worst, true));
        };
        worst = worst.max((&phi - direct).norm());
        if i + 1 == z.len() {
            break;
        }
        // Ad(η_t)Y(φ) = Dη_t(q) Y(q), q = η_t^{-1}(φ).
        let Some((q, jac)) = invert_flow_map(x, z, i, &phi, &preimage) else {
            return Ok((worst, true));
        };
        let adjoint = jac * y.eval(&q);
        let dz = z.increment(i);
        phi = &phi + (x.eval(&phi) + adjoint) * dz;
        preimage = q;
        if diverged(&phi) {
            return Ok((worst, true));
        }
    }
    Ok((worst, psi.exploded()))
}

/// Compare the composition `η_t ∘ ψ_t` (flows of X and Y) with an independent
/// Euler integration of `dφ = X(φ)dZ + Ad(η_t)Y(φ)dZ` at each probe point.
pub fn ito_kunita_check<X, Y>(
    x: &X,
    y: &Y,
    z: &SampledPath,
    probes: &[DVector<f64>],
    exec: Exec,
) -> Result<ItoKunitaReport>
where
    X: VectorFieldFamily + ?Sized,
    Y: VectorFieldFamily + ?Sized,
{
    if x.state_dim() != y.state_dim() || x.driver_dim() != y.driver_dim() {
        return Err(Error::DimensionMismatch("X and Y must share state and driver dimensions".into()));
    }
    for p in probes {
        check_dims(x, z, p)?;
    }
    let results: Vec<Result<(f64, bool)>> = exec.map(probes, |p| ito_kunita_probe(x, y, z, p));
    let mut per_probe = Vec::with_capacity(probes.len());
    let mut partial = false;
    for r in results {
        let (res, part) = r?;
        per_probe.push(res);
        partial |= part;
    }
    Ok(ItoKunitaReport {
        residual: per_probe.iter().cloned().fold(0.0, f64::max),
        per_probe,
        partial,
    })
}
