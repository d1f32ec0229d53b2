//! Parsing of driver files, matrix arguments, vectors and frames.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, Matrix2, Matrix3, Matrix3x2, Vector3};
use serde::Deserialize;

use youngflow::holder_paths::{estimate_holder, read_path, SampledPath};

use crate::error::{CliError, CliResult};

/// Where the declared exponent of an input path came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphaSource {
    Flag,
    Sidecar,
    Estimated,
}

impl AlphaSource {
    pub fn name(self) -> &'static str {
        match self {
            AlphaSource::Flag => "flag",
            AlphaSource::Sidecar => "sidecar",
            AlphaSource::Estimated => "estimated",
        }
    }
}

pub fn require_file(path: &Path, what: &str) -> CliResult<()> {
    if !path.is_file() {
        return Err(CliError::Io(format!("{what} file {} does not exist", path.display())));
    }
    Ok(())
}

/// Load a path CSV. The exponent is `--alpha`, else the sidecar's, else the
/// max-increment estimate.
pub fn read_sampled(path: &Path, alpha: Option<f64>, what: &str) -> CliResult<(SampledPath, AlphaSource)> {
    require_file(path, what)?;
    let (cols, sidecar, declared) = read_path(path, alpha)?;
    let source = match (alpha, &sidecar) {
        (Some(_), _) => AlphaSource::Flag,
        (None, Some(_)) => AlphaSource::Sidecar,
        (None, None) => AlphaSource::Estimated,
    };
    let path = match declared {
        Some(a) => SampledPath::new(cols.times, cols.values, cols.dim, a)?,
        None => {
            let raw = SampledPath::new(cols.times, cols.values, cols.dim, 1.0)?;
            let est = estimate_holder(&raw, 1)?;
            raw.with_alpha(est.exponent).map_err(|_| {
                CliError::Range(format!(
                    "{what}: estimated exponent {:.3} is outside (1/2, 1]; pass --alpha",
                    est.exponent
                ))
            })?
        }
    };
    Ok((path, source))
}

/// Comma-separated reals.
pub fn parse_vector(s: &str, what: &str) -> CliResult<Vec<f64>> {
    s.split(',')
        .map(|p| {
            let p = p.trim();
            let v: f64 = p
                .parse()
                .map_err(|_| CliError::Parse(format!("{what}: bad number {p:?}")))?;
            if !v.is_finite() {
                return Err(CliError::Range(format!("{what}: non-finite entry")));
            }
            Ok(v)
        })
        .collect()
}

pub fn parse_vector3(s: &str, what: &str) -> CliResult<Vector3<f64>> {
    let v = parse_vector(s, what)?;
    if v.len() != 3 {
        return Err(CliError::Range(format!("{what}: expected 3 components, got {}", v.len())));
    }
    Ok(Vector3::new(v[0], v[1], v[2]))
}

#[derive(Deserialize)]
#[serde(untagged)]
enum MatrixDoc {
    Rows(Vec<Vec<f64>>),
    Many(Vec<Vec<Vec<f64>>>),
    Wrapped { matrix: Vec<Vec<f64>> },
    WrappedMany { matrices: Vec<Vec<Vec<f64>>> },
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> CliResult<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, |row| row.len());
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(CliError::Parse(format!("{what}: matrix rows must be non-empty and of equal length")));
    }
    let m = DMatrix::from_fn(r, c, |i, j| rows[i][j]);
    if !m.iter().all(|v| v.is_finite()) {
        return Err(CliError::Range(format!("{what}: non-finite entry")));
    }
    Ok(m)
}

/// Text of an argument that is either a file path or an inline literal.
fn file_or_inline(arg: &str) -> CliResult<String> {
    let p = Path::new(arg);
    if p.is_file() {
        Ok(fs::read_to_string(p)?)
    } else {
        Ok(arg.to_string())
    }
}

/// `axis:x|y|z` or `axis:a,b,c`: the skew matrix `ŵ` with `ŵ v = w × v`.
fn parse_axis(spec: &str, what: &str) -> CliResult<Matrix3<f64>> {
    let w = match spec.trim() {
        "x" => Vector3::x(),
        "y" => Vector3::y(),
        "z" => Vector3::z(),
        other => parse_vector3(other, what)?,
    };
    Ok(Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0))
}

/// One or more matrices from a JSON file or inline JSON: `[[..],..]`,
/// `[[[..]],..]`, `{"matrix": ..}` or `{"matrices": ..}`; also `axis:..`.
pub fn parse_matrices(arg: &str, what: &str) -> CliResult<Vec<DMatrix<f64>>> {
    if let Some(spec) = arg.strip_prefix("axis:") {
        let m = parse_axis(spec, what)?;
        return Ok(vec![DMatrix::from_column_slice(3, 3, m.as_slice())]);
    }
    let text = file_or_inline(arg)?;
    let doc: MatrixDoc = serde_json::from_str(&text)
        .map_err(|e| CliError::Parse(format!("{what}: expected a JSON matrix ({e})")))?;
    match doc {
        MatrixDoc::Rows(rows) | MatrixDoc::Wrapped { matrix: rows } => Ok(vec![rows_to_matrix(&rows, what)?]),
        MatrixDoc::Many(ms) | MatrixDoc::WrappedMany { matrices: ms } => {
            if ms.is_empty() {
                return Err(CliError::Parse(format!("{what}: empty matrix list")));
            }
            ms.iter().map(|rows| rows_to_matrix(rows, what)).collect()
        }
    }
}

pub fn parse_matrix(arg: &str, what: &str) -> CliResult<DMatrix<f64>> {
    let mut ms = parse_matrices(arg, what)?;
    if ms.len() != 1 {
        return Err(CliError::Range(format!("{what}: expected a single matrix, got {}", ms.len())));
    }
    Ok(ms.remove(0))
}

pub fn parse_square(arg: &str, what: &str) -> CliResult<DMatrix<f64>> {
    let m = parse_matrix(arg, what)?;
    if !m.is_square() {
        return Err(CliError::Range(format!("{what}: matrix is {}×{}, expected square", m.nrows(), m.ncols())));
    }
    Ok(m)
}

pub fn parse_matrix3(arg: &str, what: &str) -> CliResult<Matrix3<f64>> {
    let m = parse_matrix(arg, what)?;
    if m.shape() != (3, 3) {
        return Err(CliError::Range(format!("{what}: expected a 3×3 matrix")));
    }
    Ok(Matrix3::from_column_slice(m.as_slice()))
}

/// `identity` or a 3×3 rotation given as a JSON matrix (file or inline).
pub fn parse_rotation(arg: &str, what: &str) -> CliResult<Matrix3<f64>> {
    if arg.trim() == "identity" {
        return Ok(Matrix3::identity());
    }
    parse_matrix3(arg, what)
}

/// `R(θ)` for an angle in radians, or `identity`.
pub fn parse_so2(arg: &str, what: &str) -> CliResult<Matrix2<f64>> {
    if arg.trim() == "identity" {
        return Ok(Matrix2::identity());
    }
    let theta = parse_vector(arg, what)?;
    if theta.len() != 1 {
        return Err(CliError::Range(format!("{what}: expected one angle")));
    }
    let (s, c) = theta[0].sin_cos();
    Ok(Matrix2::new(c, -s, s, c))
}

fn named_axis(token: &str) -> Option<Vector3<f64>> {
    let (sign, name) = match token.strip_prefix('-') {
        Some(rest) => (-1.0, rest),
        None => (1.0, token),
    };
    let v = match name {
        "e1" => Vector3::x(),
        "e2" => Vector3::y(),
        "e3" => Vector3::z(),
        _ => return None,
    };
    Some(v * sign)
}

/// Frame as `e1,e2` (signed basis names) or `a,b,c;d,e,f`.
pub fn parse_frame(s: &str) -> CliResult<Matrix3x2<f64>> {
    let cols: Vec<Vector3<f64>> = if s.contains(';') {
        s.split(';')
            .map(|c| parse_vector3(c, "--frame"))
            .collect::<CliResult<_>>()?
    } else {
        s.split(',')
            .map(|t| {
                named_axis(t.trim())
                    .ok_or_else(|| CliError::Parse(format!("--frame: unknown basis vector {t:?}")))
            })
            .collect::<CliResult<_>>()?
    };
    if cols.len() != 2 {
        return Err(CliError::Range(format!("--frame: expected 2 vectors, got {}", cols.len())));
    }
    Ok(Matrix3x2::from_columns(&[cols[0], cols[1]]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matrices_in_all_shapes() {
        let a = parse_matrix("[[1,2],[3,4]]", "A").unwrap();
        assert_eq!(a[(1, 0)], 3.0);
        let w = parse_matrix(r#"{"matrix": [[0,-1],[1,0]]}"#, "A").unwrap();
        assert_eq!(w[(0, 1)], -1.0);
        let ms = parse_matrices("[[[1]],[[2]]]", "A").unwrap();
        assert_eq!(ms.len(), 2);
        let z = parse_matrix3("axis:z", "A").unwrap();
        assert_eq!(z * Vector3::x(), Vector3::y());
        assert!(matches!(parse_matrix("[[1,2],[3]]", "A"), Err(CliError::Parse(_))));
        assert!(matches!(parse_matrix("nonsense", "A"), Err(CliError::Parse(_))));
    }

    #[test]
    fn frames_and_vectors() {
        let u = parse_frame("e1,e2").unwrap();
        assert_eq!(u.column(1).into_owned(), Vector3::y());
        let u = parse_frame("-e2,e1").unwrap();
        assert_eq!(u.column(0).into_owned(), -Vector3::y());
        let u = parse_frame("1,0,0;0,0,1").unwrap();
        assert_eq!(u.column(1).into_owned(), Vector3::z());
        assert!(parse_frame("e1").is_err());
        assert!(matches!(parse_vector("1,x", "v"), Err(CliError::Parse(_))));
        assert!(matches!(parse_vector3("1,2", "v"), Err(CliError::Range(_))));
    }

    #[test]
    fn so2_angle() {
        let r = parse_so2("1.5707963267948966", "y").unwrap();
        assert!((r[(1, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(parse_so2("identity", "y").unwrap(), Matrix2::identity());
    }
}
