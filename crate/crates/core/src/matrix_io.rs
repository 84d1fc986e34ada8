//! Plain-text matrix files.
//!
//! A matrix file starts with a shape line `# rows,cols,d_y,d_u`, may carry
//! further `# key = value` comment lines, then holds `rows` lines of
//! `cols` comma-separated values. Impulse responses are stored as their
//! blocks stacked vertically (`len·d_y × d_u`), trajectories as
//! `T × (d_u + d_y)` with the inputs first. A bundle is a sequence of named
//! matrices, each introduced by `# matrix <name>`.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Result, SysIdError};
use crate::experiments::fmt_f64;
use crate::impulse::ImpulseResponse;
use crate::lds::{StateSpaceSystem, Trajectory};
use crate::realization::Realization;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFile {
    pub matrix: DMatrix<f64>,
    pub d_y: usize,
    pub d_u: usize,
    /// `key = value` comment lines, in file order.
    pub comments: Vec<(String, String)>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> SysIdError {
    SysIdError::Parse { line, msg: msg.into() }
}

fn write_body(out: &mut String, m: &DMatrix<f64>, d_y: usize, d_u: usize, comments: &[(String, String)]) {
    let _ = writeln!(out, "# {},{},{},{}", m.nrows(), m.ncols(), d_y, d_u);
    for (k, v) in comments {
        let _ = writeln!(out, "# {k} = {v}");
    }
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| fmt_f64(m[(i, j)])).collect();
        let _ = writeln!(out, "{}", row.join(","));
    }
}

pub fn format_matrix(m: &DMatrix<f64>, d_y: usize, d_u: usize, comments: &[(String, String)]) -> String {
    let mut out = String::new();
    write_body(&mut out, m, d_y, d_u, comments);
    out
}

fn parse_shape(line: &str, lineno: usize) -> Result<[usize; 4]> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| parse_err(lineno, "expected a shape line `# rows,cols,d_y,d_u`"))?;
    let parts: Vec<&str> = body.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(parse_err(lineno, format!("shape line needs 4 fields, found {}", parts.len())));
    }
    let mut out = [0usize; 4];
    for (o, p) in out.iter_mut().zip(&parts) {
        *o = p
            .parse()
            .map_err(|_| parse_err(lineno, format!("`{p}` in the shape line is not an integer")))?;
    }
    Ok(out)
}

fn parse_comment(line: &str) -> Option<(String, String)> {
    let body = line.strip_prefix('#')?.trim();
    let (k, v) = body.split_once('=')?;
    Some((k.trim().to_string(), v.trim().to_string()))
}

/// Parses one matrix starting at `lines[0]` (the shape line); returns it and
/// the number of lines consumed.
fn parse_at(lines: &[(usize, &str)]) -> Result<(MatrixFile, usize)> {
    let (first_no, first) = *lines.first().ok_or_else(|| parse_err(0, "empty matrix file"))?;
    let [rows, cols, d_y, d_u] = parse_shape(first, first_no)?;
    let mut comments = Vec::new();
    let mut data = Vec::with_capacity(rows * cols);
    let mut used = 1;
    let mut got_rows = 0;
    while got_rows < rows {
        let (no, line) = *lines
            .get(used)
            .ok_or_else(|| parse_err(first_no, format!("expected {rows} data rows, found {got_rows}")))?;
        used += 1;
        if line.starts_with('#') {
            if got_rows > 0 {
                return Err(parse_err(no, "comment inside the data rows"));
            }
            if let Some(kv) = parse_comment(line) {
                comments.push(kv);
            }
            continue;
        }
        let vals: Vec<&str> = line.split(',').map(str::trim).collect();
        if vals.len() != cols {
            return Err(parse_err(no, format!("expected {cols} values, found {}", vals.len())));
        }
        for v in vals {
            data.push(
                v.parse::<f64>()
                    .map_err(|_| parse_err(no, format!("`{v}` is not a number")))?,
            );
        }
        got_rows += 1;
    }
    // trailing comments belong to this matrix when nothing follows
    while let Some(&(_, line)) = lines.get(used) {
        if line.starts_with("# matrix ") || !line.starts_with('#') {
            break;
        }
        if let Some(kv) = parse_comment(line) {
            comments.push(kv);
        }
        used += 1;
    }
    Ok((
        MatrixFile {
            matrix: DMatrix::from_row_slice(rows, cols, &data),
            d_y,
            d_u,
            comments,
        },
        used,
    ))
}

fn content_lines(text: &str) -> Vec<(usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
        .collect()
}

pub fn parse_matrix(text: &str) -> Result<MatrixFile> {
    let lines = content_lines(text);
    let (m, used) = parse_at(&lines)?;
    if let Some(&(no, _)) = lines.get(used) {
        return Err(parse_err(no, "unexpected content after the matrix"));
    }
    Ok(m)
}

pub fn format_ir(f: &ImpulseResponse, comments: &[(String, String)]) -> String {
    let blocks: Vec<&DMatrix<f64>> = f.iter().collect();
    format_matrix(&crate::linalg::vstack(&blocks), f.d_y(), f.d_u(), comments)
}

pub fn ir_from_file(m: &MatrixFile) -> Result<ImpulseResponse> {
    let (rows, cols) = m.matrix.shape();
    if m.d_y == 0 || cols != m.d_u || rows % m.d_y != 0 || rows == 0 {
        return Err(SysIdError::DimensionMismatch(format!(
            "{rows}x{cols} matrix is not a stack of {}x{} blocks",
            m.d_y, m.d_u
        )));
    }
    let blocks = (0..rows / m.d_y)
        .map(|t| m.matrix.rows(t * m.d_y, m.d_y).into_owned())
        .collect();
    ImpulseResponse::new(blocks)
}

pub fn parse_ir(text: &str) -> Result<(ImpulseResponse, Vec<(String, String)>)> {
    let m = parse_matrix(text)?;
    Ok((ir_from_file(&m)?, m.comments))
}

pub fn format_trajectory(traj: &Trajectory, comments: &[(String, String)]) -> String {
    let m = crate::linalg::hstack(&[&traj.u, &traj.y]);
    format_matrix(&m, traj.d_y(), traj.d_u(), comments)
}

pub fn parse_trajectory(text: &str) -> Result<(Trajectory, Vec<(String, String)>)> {
    let m = parse_matrix(text)?;
    if m.matrix.ncols() != m.d_u + m.d_y || m.d_u == 0 || m.d_y == 0 {
        return Err(SysIdError::DimensionMismatch(format!(
            "trajectory needs d_u + d_y = {} columns, found {}",
            m.d_u + m.d_y,
            m.matrix.ncols()
        )));
    }
    let u = m.matrix.columns(0, m.d_u).into_owned();
    let y = m.matrix.columns(m.d_u, m.d_y).into_owned();
    Ok((Trajectory::new(u, y)?, m.comments))
}

/// Named matrices, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bundle {
    pub comments: Vec<(String, String)>,
    pub matrices: Vec<(String, DMatrix<f64>)>,
}

impl Bundle {
    pub fn get(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.matrices.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    fn require(&self, name: &str) -> Result<&DMatrix<f64>> {
        self.get(name)
            .ok_or_else(|| SysIdError::InvalidArgument(format!("bundle has no matrix `{name}`")))
    }

    pub fn push(&mut self, name: &str, m: DMatrix<f64>) {
        self.matrices.push((name.to_string(), m));
    }

    pub fn format(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.comments {
            let _ = writeln!(out, "# {k} = {v}");
        }
        for (name, m) in &self.matrices {
            let _ = writeln!(out, "# matrix {name}");
            write_body(&mut out, m, 0, 0, &[]);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let lines = content_lines(text);
        let mut bundle = Bundle::default();
        let mut i = 0;
        while i < lines.len() {
            let (no, line) = lines[i];
            if let Some(name) = line.strip_prefix("# matrix ") {
                let (m, used) = parse_at(&lines[i + 1..])?;
                bundle.push(name.trim(), m.matrix);
                bundle.comments.extend(m.comments);
                i += 1 + used;
            } else if line.starts_with('#') {
                if let Some(kv) = parse_comment(line) {
                    bundle.comments.push(kv);
                }
                i += 1;
            } else {
                return Err(parse_err(no, "data outside a `# matrix <name>` section"));
            }
        }
        Ok(bundle)
    }

    pub fn from_system(sys: &StateSpaceSystem) -> Self {
        let mut b = Bundle::default();
        b.push("A", sys.a().clone());
        b.push("B", sys.b().clone());
        b.push("C", sys.c().clone());
        b.push("D", sys.d().clone());
        b.push("sigma_x", sys.sigma_x().clone());
        b.push("sigma_y", sys.sigma_y().clone());
        b
    }

    /// `A`, `B`, `C`, `D` and optional `sigma_x`, `sigma_y` (zero when absent).
    pub fn to_system(&self) -> Result<StateSpaceSystem> {
        let sys = StateSpaceSystem::new(
            self.require("A")?.clone(),
            self.require("B")?.clone(),
            self.require("C")?.clone(),
            self.require("D")?.clone(),
        )?;
        let sx = self
            .get("sigma_x")
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(sys.order(), sys.order()));
        let sy = self
            .get("sigma_y")
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(sys.d_y(), sys.d_y()));
        sys.with_noise(sx, sy)
    }

    pub fn from_realization(r: &Realization) -> Self {
        let mut b = Bundle::default();
        b.push("A", r.a_hat.clone());
        b.push("B", r.b_hat.clone());
        b.push("C", r.c_hat.clone());
        b.push("D", r.d_hat.clone());
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lds::{random_system, simulate};

    #[test]
    fn matrix_round_trip() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -2.5, 1.0 / 3.0, 0.0, 1e-300, 7.0]);
        let c = vec![("seed".to_string(), "7".to_string())];
        let text = format_matrix(&m, 1, 3, &c);
        assert!(text.starts_with("# 2,3,1,3\n# seed = 7\n"));
        let back = parse_matrix(&text).unwrap();
        assert_eq!(back.matrix, m);
        assert_eq!((back.d_y, back.d_u), (1, 3));
        assert_eq!(back.comments, c);
    }

    #[test]
    fn malformed_files_are_rejected_with_line_numbers() {
        assert!(matches!(parse_matrix("1,2\n"), Err(SysIdError::Parse { line: 1, .. })));
        assert!(matches!(parse_matrix("# 2,2,1,1\n1,2\n3\n"), Err(SysIdError::Parse { line: 3, .. })));
        assert!(matches!(parse_matrix("# 1,2,1,1\n1,x\n"), Err(SysIdError::Parse { line: 2, .. })));
        assert!(parse_matrix("# 1,1,1,1\n1\n2\n").is_err());
        assert!(parse_matrix("# 2,1,1,1\n1\n").is_err());
    }

    #[test]
    fn ir_and_trajectory_round_trip() {
        let sys = random_system(2, 2, 3, 0.8, 1).unwrap().with_isotropic_noise(0.0, 0.5);
        let f = sys.impulse_response(6);
        let (g, _) = parse_ir(&format_ir(&f, &[])).unwrap();
        assert_eq!(g, f);
        let traj = simulate(&sys, 20, 3).unwrap();
        let (back, _) = parse_trajectory(&format_trajectory(&traj, &[])).unwrap();
        assert_eq!(back.u, traj.u);
        assert_eq!(back.y, traj.y);
        assert!(parse_ir(&format_trajectory(&traj, &[])).is_err());
    }

    #[test]
    fn system_bundle_round_trip() {
        let sys = random_system(3, 1, 2, 0.9, 4).unwrap().with_isotropic_noise(0.1, 0.2);
        let mut b = Bundle::from_system(&sys);
        b.comments.push(("seed".into(), "4".into()));
        let back = Bundle::parse(&b.format()).unwrap();
        assert_eq!(back, b);
        let s2 = back.to_system().unwrap();
        assert_eq!(s2.a(), sys.a());
        assert_eq!(s2.sigma_y(), sys.sigma_y());
        assert!(Bundle::parse("1,2\n").is_err());
        let mut partial = Bundle::default();
        partial.push("A", DMatrix::identity(1, 1) * 0.5);
        assert!(partial.to_system().is_err());
    }
}
