//! One function per subcommand; each returns its artifacts without writing.

use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Deserialize;
use serde_json::{json, Value};

use youngflow::bundle::{
    antidevelop as antidevelop_path, arc_length, default_frame, develop as develop_path, holonomy_angle,
    horizontal_lift, parallel_transport_with, sphere_points, SphereFrameBundle,
};
use youngflow::holder_paths::{
    estimate_holder, gen_fbm_using, gen_smooth, gen_weierstrass, FbmMethod, PathMeta, SampledPath, SmoothKind,
};
use youngflow::homogeneous::{decompose_homogeneous as decompose_hom, trivial_bundle_decompose};
use youngflow::linear_flows::{
    decompose_blocks, decompose_via_yde, detect_explosion as detect, fundamental_solution,
    schur_foliation as schur, LinearSystem,
};
use youngflow::manifold::{solve_yde_on_manifold, ManifoldSpec};
use youngflow::yde_solver::{solve_euler, LinearField, Trajectory, VectorFieldFamily, ZeroField};
use youngflow::young_integral::{
    integrate_with_refinements, ito_residual, young_integrate, Affine, Identity, IntegrandPath, SmoothMap, Square,
    Tanh,
};
use youngflow::Exec;

use crate::error::{CliError, CliResult};
use crate::inputs::{
    parse_frame, parse_matrices, parse_matrix, parse_matrix3, parse_rotation, parse_so2, parse_square,
    parse_vector, parse_vector3, read_sampled, AlphaSource,
};
use crate::output::{rows, Artifacts, LongTable, SCHEMA_VERSION};
use crate::{
    AntidevelopArgs, DecomposeLinearArgs, DecomposeMethod, DevelopArgs, ExplosionArgs, FbmMethodArg, Global,
    HomogeneousArgs, IntegrateArgs, PathGenArgs, PathKind, SchurArgs, SolveArgs, TransportArgs, TrivialArgs,
};

/// Default limit for residuals that are exact up to rounding.
const EXACT_LIMIT: f64 = 1e-10;
/// Default limit for the linear block decomposition, whose blocks carry
/// `F4⁻¹` and so lose digits near a breakdown.
const BLOCK_LIMIT: f64 = 1e-6;

fn need<T: Copy>(v: Option<T>, flag: &str, kind: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("{flag} is required for --kind {kind}")))
}

fn forbid(flags: &[(&str, bool)], kind: &str) -> CliResult<()> {
    for (flag, given) in flags {
        if *given {
            return Err(CliError::Usage(format!("{flag} does not apply to --kind {kind}")));
        }
    }
    Ok(())
}

fn source_info(art: &mut Artifacts, key: &str, path: &SampledPath, source: AlphaSource) {
    art.result(
        key,
        json!({"nodes": path.len(), "dim": path.dim(), "alpha": path.alpha(), "alpha_source": source.name()}),
    );
}

fn meta(generator: &str, params: Value) -> PathMeta {
    PathMeta {
        generator: generator.into(),
        params,
        seed: None,
        method: None,
    }
}

fn vec_of(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

pub fn path_gen(a: &PathGenArgs, g: &Global, out: &Path) -> CliResult<Artifacts> {
    let seed = g.seed.unwrap_or(0);
    let fbm_flags = [("--hurst", a.hurst.is_some())];
    let weier_flags = [("--a", a.a.is_some()), ("--b", a.b.is_some())];
    let smooth_flags = [
        ("--slope", a.slope.is_some()),
        ("--amp", a.amp.is_some()),
        ("--freq", a.freq.is_some()),
        ("--coeffs", a.coeffs.is_some()),
    ];
    let non_fbm = a.dim != 1 || !matches!(a.method, FbmMethodArg::Circulant);
    let path = match a.kind {
        PathKind::Fbm => {
            forbid(&weier_flags, "fbm")?;
            forbid(&smooth_flags, "fbm")?;
            let method = match a.method {
                FbmMethodArg::Circulant => FbmMethod::CirculantEmbedding,
                FbmMethodArg::Cholesky => FbmMethod::Cholesky,
            };
            gen_fbm_using(need(a.hurst, "--hurst", "fbm")?, a.n, a.horizon, seed, a.dim, method)?
        }
        PathKind::Weierstrass => {
            forbid(&fbm_flags, "weierstrass")?;
            forbid(&smooth_flags, "weierstrass")?;
            forbid(&[("--dim/--method", non_fbm)], "weierstrass")?;
            gen_weierstrass(
                need(a.a, "--a", "weierstrass")?,
                need(a.b, "--b", "weierstrass")?,
                a.n,
                a.horizon,
            )?
        }
        kind => {
            let name = format!("{kind:?}").to_lowercase();
            forbid(&fbm_flags, &name)?;
            forbid(&weier_flags, &name)?;
            forbid(&[("--dim/--method", non_fbm)], &name)?;
            let shape = match kind {
                PathKind::Linear => {
                    forbid(&smooth_flags[1..], &name)?;
                    SmoothKind::Linear {
                        slope: a.slope.unwrap_or(1.0),
                    }
                }
                PathKind::Sine => {
                    forbid(&[smooth_flags[0], smooth_flags[3]], &name)?;
                    SmoothKind::Sine {
                        amp: a.amp.unwrap_or(1.0),
                        freq: a.freq.unwrap_or(1.0),
                    }
                }
                _ => {
                    forbid(&smooth_flags[..3], &name)?;
                    let coeffs = a
                        .coeffs
                        .as_deref()
                        .ok_or_else(|| CliError::Usage("--coeffs is required for --kind polynomial".into()))?;
                    SmoothKind::Polynomial {
                        coeffs: parse_vector(coeffs, "--coeffs")?,
                    }
                }
            };
            gen_smooth(&shape, a.n, a.horizon)?
        }
    };
    let mut art = Artifacts::new("path-gen");
    art.result("generator", &path.meta().generator);
    art.result("method", &path.meta().method);
    art.result("nodes", path.len());
    art.result("dim", path.dim());
    art.result("alpha", path.alpha());
    if path.len() >= 64 {
        art.result("estimated_exponent", estimate_holder(&path, 1)?.exponent);
    }
    art.path_file(out, &path, path.meta().clone())?;
    Ok(art)
}

#[derive(Debug, Clone, Copy, Deserialize, serde::Serialize)]
#[serde(rename_all = "snake_case")]
enum MapName {
    Identity,
    Square,
    Tanh,
    Affine,
}

/// Integrand spec, e.g. `{"integrand":"jacobian","map":"square"}`.
#[derive(Debug, Clone, Deserialize, serde::Serialize)]
#[serde(tag = "integrand", rename_all = "snake_case", deny_unknown_fields)]
enum IntegrandSpec {
    /// `Y ≡ I`.
    Identity,
    /// `Y ≡ M`.
    Constant { matrix: Vec<Vec<f64>> },
    /// `Y_t = Z_t` for a scalar driver.
    Driver,
    /// `Y_t = DF(Z_t)`; the Itô residual of `F` is reported.
    Jacobian {
        map: MapName,
        #[serde(default)]
        matrix: Option<Vec<Vec<f64>>>,
        #[serde(default)]
        offset: Option<Vec<f64>>,
    },
}

fn smooth_map(name: MapName, matrix: &Option<Vec<Vec<f64>>>, offset: &Option<Vec<f64>>) -> CliResult<Box<dyn SmoothMap>> {
    if !matches!(name, MapName::Affine) && (matrix.is_some() || offset.is_some()) {
        return Err(CliError::Range("matrix/offset only apply to the affine map".into()));
    }
    Ok(match name {
        MapName::Identity => Box::new(Identity),
        MapName::Square => Box::new(Square),
        MapName::Tanh => Box::new(Tanh),
        MapName::Affine => {
            let m = matrix
                .as_ref()
                .ok_or_else(|| CliError::Range("affine map needs \"matrix\"".into()))?;
            let m = parse_matrix(&serde_json::to_string(m).unwrap_or_default(), "integrand matrix")?;
            let b = match offset {
                Some(b) => DVector::from_vec(b.clone()),
                None => DVector::zeros(m.nrows()),
            };
            if b.len() != m.nrows() {
                return Err(CliError::Range("affine offset length must match the matrix rows".into()));
            }
            Box::new(Affine { matrix: m, offset: b })
        }
    })
}

fn read_json_arg<T: for<'de> Deserialize<'de>>(arg: &str, what: &str) -> CliResult<T> {
    let p = Path::new(arg);
    let text = if p.is_file() {
        std::fs::read_to_string(p)?
    } else {
        arg.to_string()
    };
    serde_json::from_str(&text).map_err(|e| CliError::Parse(format!("{what}: {e}")))
}

/// Integrand as a function of the driver value.
type Pointwise = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64>>;

pub fn integrate(a: &IntegrateArgs, out: &Path) -> CliResult<Artifacts> {
    let (z, source) = read_sampled(&a.driver, a.alpha, "driver")?;
    let spec: IntegrandSpec = read_json_arg(&a.integrand, "--integrand")?;
    let mut art = Artifacts::new("integrate");
    source_info(&mut art, "driver", &z, source);
    let d = z.dim();
    let times = z.times().to_vec();
    let (integral, f): (SampledPath, Option<Pointwise>) = match &spec {
        IntegrandSpec::Identity => {
            let y = IntegrandPath::constant(times, DMatrix::identity(d, d))?;
            (young_integrate(&y, &z)?, Some(Box::new(move |_: &DVector<f64>| DMatrix::identity(d, d))))
        }
        IntegrandSpec::Constant { matrix } => {
            let m = parse_matrix(&serde_json::to_string(matrix).unwrap_or_default(), "integrand matrix")?;
            let y = IntegrandPath::constant(times, m.clone())?;
            (young_integrate(&y, &z)?, Some(Box::new(move |_: &DVector<f64>| m.clone())))
        }
        IntegrandSpec::Driver => {
            if d != 1 {
                return Err(CliError::Range("the driver integrand needs a scalar driver".into()));
            }
            let y = IntegrandPath::along(&z, |p| DMatrix::from_element(1, 1, p[0]))?;
            let integral = young_integrate(&y, &z)?;
            let (z0, zt) = (z.scalar(0), z.scalar(z.len() - 1));
            art.result("chain_rule_gap", integral.scalar(integral.len() - 1) - (zt * zt - z0 * z0) / 2.0);
            (integral, Some(Box::new(|p: &DVector<f64>| DMatrix::from_element(1, 1, p[0]))))
        }
        IntegrandSpec::Jacobian { map, matrix, offset } => {
            let f = smooth_map(*map, matrix, offset)?;
            let y = IntegrandPath::along(&z, |p| f.jacobian(p))?;
            let integral = young_integrate(&y, &z)?;
            art.result("ito_residual", ito_residual(f.as_ref(), &z)?);
            (integral, Some(Box::new(move |p: &DVector<f64>| f.jacobian(p))))
        }
    };
    art.result("terminal", vec_of(&integral.vector(integral.len() - 1)));
    if a.refinements {
        let f = f.expect("every integrand has a pointwise form");
        let report = integrate_with_refinements(&z, f)?;
        art.result(
            "refinements",
            json!({
                "meshes": report.meshes,
                "terminal": report.terminal.iter().map(vec_of).collect::<Vec<_>>(),
                "cauchy_slope": report.cauchy_slope,
            }),
        );
    }
    let params = json!({"integrand": spec});
    art.path_file(out, &integral, meta("integrate", params))?;
    Ok(art)
}

pub fn solve(a: &SolveArgs, g: &Global, out: &Path) -> CliResult<Artifacts> {
    let (z, source) = read_sampled(&a.driver, a.alpha, "driver")?;
    let x0 = DVector::from_vec(parse_vector(&a.x0, "--x0")?);
    let field: Box<dyn VectorFieldFamily> = match a.field.as_str() {
        "builtin:linear" => {
            let spec = a
                .a
                .as_deref()
                .ok_or_else(|| CliError::Usage("builtin:linear needs --A".into()))?;
            Box::new(LinearField::new(parse_matrices(spec, "--A")?)?)
        }
        "builtin:zero" => {
            if a.a.is_some() {
                return Err(CliError::Usage("--A only applies to builtin:linear".into()));
            }
            Box::new(ZeroField {
                state_dim: x0.len(),
                driver_dim: z.dim(),
            })
        }
        other => return Err(CliError::Usage(format!("unknown field {other:?}; use builtin:linear or builtin:zero"))),
    };
    let mut art = Artifacts::new("solve");
    source_info(&mut art, "driver", &z, source);
    let traj: Trajectory = match &a.manifold {
        Some(spec) => {
            let spec: ManifoldSpec = read_json_arg(spec, "--manifold")?;
            let m = spec.build()?;
            let traj = solve_yde_on_manifold(m.as_ref(), field.as_ref(), &z, &x0)?;
            let worst = traj.states.iter().map(|x| m.distance(x)).fold(0.0, f64::max);
            art.result("manifold", &spec);
            art.check("max_manifold_distance", worst, EXACT_LIMIT, g.tol);
            traj
        }
        None => solve_euler(field.as_ref(), &z, &x0)?,
    };
    if traj.states.len() < 2 {
        return Err(CliError::Module("solution diverged on the first step".into()));
    }
    art.result("explosion_index", traj.explosion);
    art.result("explosion_time", traj.explosion.map(|i| z.times()[i]));
    art.result("final_state", vec_of(traj.last_state()));
    let path = traj.to_path(z.alpha())?;
    art.path_file(out, &path, meta("solve", json!({"field": a.field, "x0": vec_of(&x0)})))?;
    Ok(art)
}

pub fn decompose_linear(a: &DecomposeLinearArgs, g: &Global, out: &Path) -> CliResult<Artifacts> {
    let matrix = parse_square(&a.a, "--A")?;
    let (z, source) = read_sampled(&a.driver, a.alpha, "driver")?;
    let system = LinearSystem::new(matrix.clone(), a.k)?;
    let exec = Exec::default();
    let f = fundamental_solution(&matrix, &z, exec)?;
    let dec = match a.method {
        DecomposeMethod::Blocks => decompose_blocks(&f, a.k, a.threshold, exec)?,
        DecomposeMethod::Yde => decompose_via_yde(&system, &z, a.threshold)?,
    };
    let explosion = detect(&system, &z, a.threshold)?;
    let mut art = Artifacts::new("decompose-linear");
    source_info(&mut art, "driver", &z, source);
    art.result("method", format!("{:?}", a.method).to_lowercase());
    art.result("k", a.k);
    art.result("threshold", a.threshold);
    art.result("nodes_decomposed", dec.len());
    art.result("explosion_index", dec.explosion_index);
    art.result("explosion", explosion);
    let residual = dec.compose_residual(&f);
    art.result("compose_residual", residual);
    if matches!(a.method, DecomposeMethod::Blocks) {
        art.check("compose_residual", residual, BLOCK_LIMIT, g.tol);
    }
    let mut table = LongTable::new();
    for i in 0..dec.len() {
        let t = dec.times[i];
        table.push_matrix(i, t, "g1", &dec.g1[i]);
        table.push_matrix(i, t, "g2", &dec.g2[i]);
        table.push_matrix(i, t, "g3", &dec.g3[i]);
        table.push_matrix(i, t, "g4", &dec.g4[i]);
    }
    art.file(out, table.into_bytes());
    Ok(art)
}

pub fn detect_explosion(a: &ExplosionArgs, out: &Path) -> CliResult<Artifacts> {
    let matrix = parse_square(&a.a, "--A")?;
    let (z, source) = read_sampled(&a.driver, a.alpha, "driver")?;
    let system = LinearSystem::new(matrix, a.k)?;
    let explosion = detect(&system, &z, a.threshold)?;
    let mut art = Artifacts::new("detect-explosion");
    source_info(&mut art, "driver", &z, source);
    art.result("explosion", explosion);
    art.json_file(
        out,
        &json!({"schema_version": SCHEMA_VERSION, "k": a.k, "threshold": a.threshold, "explosion": explosion}),
    )?;
    Ok(art)
}

pub fn schur_foliation(a: &SchurArgs, g: &Global, out: &Path) -> CliResult<Artifacts> {
    let matrix = parse_square(&a.a, "--A")?;
    let sf = schur(&matrix)?;
    let scale = matrix.abs().max().max(1.0);
    let mut art = Artifacts::new("schur-foliation");
    art.result("k", sf.k);
    art.result("block_sizes", &sf.block_sizes);
    art.result("admissible_ks", sf.admissible_ks());
    art.result("residual", sf.residual);
    art.check("relative_residual", sf.residual / scale, EXACT_LIMIT, g.tol);
    let mut doc = json!({
        "schema_version": SCHEMA_VERSION,
        "p": rows(&sf.p),
        "t": rows(&sf.t),
        "k": sf.k,
        "block_sizes": sf.block_sizes,
        "admissible_ks": sf.admissible_ks(),
        "residual": sf.residual,
    });
    if let Some(driver) = &a.driver {
        let (z, source) = read_sampled(driver, a.alpha, "driver")?;
        source_info(&mut art, "driver", &z, source);
        let dec = sf.decompose(&z, a.threshold, Exec::default())?;
        if let Some(i) = dec.explosion_index {
            return Err(CliError::Invariant(format!(
                "transformed system exploded at node {i} (t = {})",
                z.times()[i]
            )));
        }
        art.result("transformed_explosion", Value::Null);
        doc["transformed_explosion"] = Value::Null;
    }
    art.json_file(out, &doc)?;
    Ok(art)
}

fn initial_frame(frame: &Option<String>, x0: &nalgebra::Vector3<f64>) -> CliResult<nalgebra::Matrix3x2<f64>> {
    match frame {
        Some(s) => parse_frame(s),
        None => Ok(default_frame(x0)),
    }
}

pub fn transport(a: &TransportArgs, g: &Global, out: &Path) -> CliResult<Artifacts> {
    let (x, source) = read_sampled(&a.path, a.alpha, "path")?;
    let points = sphere_points(&x)?;
    let v = parse_vector3(&a.v, "--v")?;
    let u0 = initial_frame(&a.frame, &points[0])?;
    let conn = SphereFrameBundle;
    let v_t = parallel_transport_with(&conn, &x, &v, &u0)?;
    let lift = horizontal_lift(&conn, &x, &u0)?;
    let holonomy = holonomy_angle(&lift).ok();
    let norm_defect = (v_t.norm() - v.norm()).abs() / v.norm().max(1.0);
    let mut art = Artifacts::new("transport");
    source_info(&mut art, "path", &x, source);
    art.result("v_T", v_t.as_slice());
    art.result("holonomy_angle", holonomy);
    art.result("horizontality_residual", lift.horizontality_residual());
    art.check("norm_defect", norm_defect, EXACT_LIMIT, g.tol);
    art.check("frame_orthonormality", lift.orthonormality_defect(), EXACT_LIMIT, g.tol);
    art.check("frame_tangency", lift.tangency_defect(), EXACT_LIMIT, g.tol);
    let last = points.len() - 1;
    art.json_file(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "x_0": points[0].as_slice(),
            "x_T": points[last].as_slice(),
            "v_0": v.as_slice(),
            "v_T": v_t.as_slice(),
            "frame_0": rows(&u0),
            "frame_T": rows(&lift.frames[last]),
            "holonomy_angle": holonomy,
        }),
    )?;
    Ok(art)
}

pub fn develop(a: &DevelopArgs, g: &Global, out: &Path) -> CliResult<Artifacts> {
    let (w, source) = read_sampled(&a.plane, a.alpha, "plane path")?;
    let p0 = parse_vector3(&a.p0, "--p0")?;
    let u0 = initial_frame(&a.frame, &p0)?;
    let dev = develop_path(&SphereFrameBundle, &w, &p0, &u0)?;
    let planar: f64 = (0..w.len() - 1)
        .map(|i| {
            let d = w.increment(i);
            Vector2::new(d[0], d[1]).norm()
        })
        .sum();
    let mut art = Artifacts::new("develop");
    source_info(&mut art, "plane", &w, source);
    art.result("planar_length", planar);
    art.result("arc_length", arc_length(&dev.frames.points));
    art.result("final_point", dev.frames.points[dev.frames.len() - 1].as_slice());
    art.check("frame_orthonormality", dev.frames.orthonormality_defect(), EXACT_LIMIT, g.tol);
    art.check("frame_tangency", dev.frames.tangency_defect(), EXACT_LIMIT, g.tol);
    art.path_file(out, &dev.path, meta("develop", json!({"p0": p0.as_slice(), "frame": rows(&u0)})))?;
    Ok(art)
}

pub fn antidevelop(a: &AntidevelopArgs, g: &Global, out: &Path) -> CliResult<Artifacts> {
    let (x, source) = read_sampled(&a.path, a.alpha, "path")?;
    let points = sphere_points(&x)?;
    let u0 = initial_frame(&a.frame, &points[0])?;
    let conn = SphereFrameBundle;
    let y = antidevelop_path(&conn, &x, &u0)?;
    let lift = horizontal_lift(&conn, &x, &u0)?;
    let mut art = Artifacts::new("antidevelop");
    source_info(&mut art, "path", &x, source);
    art.result("arc_length", arc_length(&points));
    art.result("terminal", vec_of(&y.vector(y.len() - 1)));
    art.check("frame_orthonormality", lift.orthonormality_defect(), EXACT_LIMIT, g.tol);
    art.path_file(out, &y, meta("antidevelop", json!({"frame": rows(&u0)})))?;
    Ok(art)
}

pub fn decompose_homogeneous(a: &HomogeneousArgs, g: &Global, out: &Path) -> CliResult<Artifacts> {
    let gen = parse_matrix3(&a.a, "--A")?;
    let x = parse_rotation(&a.x, "--x")?;
    let (z, source) = read_sampled(&a.driver, a.alpha, "driver")?;
    let hd = decompose_hom(&gen, &z, &x)?;
    let mut art = Artifacts::new("decompose-homogeneous");
    source_info(&mut art, "driver", &z, source);
    art.result("max_h_distance", hd.max_h_distance());
    art.result("max_reconstruction", hd.max_reconstruction());
    art.result("horizontality_residual", hd.horizontality_residual);
    art.check("reconstruction", hd.max_reconstruction(), EXACT_LIMIT, g.tol);
    let nodes: Vec<Value> = (0..hd.times.len())
        .map(|i| {
            json!({
                "t": hd.times[i],
                "g": rows(&hd.g[i]),
                "gh": rows(&hd.gh[i]),
                "h": rows(&hd.h[i]),
                "h_angle": hd.h_angle[i],
                "h_distance": hd.h_distance[i],
                "reconstruction": hd.reconstruction[i],
            })
        })
        .collect();
    art.json_file(
        out,
        &json!({
            "schema_version": SCHEMA_VERSION,
            "base_point": rows(&hd.base_point),
            "horizontality_residual": hd.horizontality_residual,
            "nodes": nodes,
        }),
    )?;
    Ok(art)
}

fn parse_b(arg: &str) -> CliResult<Matrix2<f64>> {
    if let Ok(beta) = arg.trim().parse::<f64>() {
        if !beta.is_finite() {
            return Err(CliError::Range("--B must be finite".into()));
        }
        return Ok(Matrix2::new(0.0, -beta, beta, 0.0));
    }
    let m = parse_matrix(arg, "--B")?;
    if m.shape() != (2, 2) {
        return Err(CliError::Range("--B: expected a 2×2 matrix".into()));
    }
    Ok(Matrix2::from_column_slice(m.as_slice()))
}

pub fn trivial_bundle(a: &TrivialArgs, g: &Global, out: &Path) -> CliResult<Artifacts> {
    let gen = parse_matrix3(&a.a, "--A")?;
    let b = parse_b(&a.b)?;
    let x = parse_rotation(&a.x, "--x")?;
    let y = parse_so2(&a.y, "--y")?;
    let (z, source) = read_sampled(&a.driver, a.alpha, "driver")?;
    let td = trivial_bundle_decompose(&gen, &b, &z, &x, &y)?;
    let mut art = Artifacts::new("trivial-bundle");
    source_info(&mut art, "driver", &z, source);
    art.result("reconstruction", td.reconstruction);
    art.check("reconstruction", td.reconstruction, EXACT_LIMIT, g.tol);
    let nodes: Vec<Value> = (0..td.times.len())
        .map(|i| json!({"t": td.times[i], "eta": rows(&td.eta.elements[i]), "h": rows(&td.h[i])}))
        .collect();
    art.json_file(
        out,
        &json!({"schema_version": SCHEMA_VERSION, "reconstruction": td.reconstruction, "nodes": nodes}),
    )?;
    Ok(art)
}
