//! TOML problem definitions. The format is described in
//! `docs/problem-format.md`.

use std::path::Path;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::Deserialize;

use crate::bench::{EndEffector, PlanarArm};
use crate::error::{Error, Result};
use crate::model::{
    Affine, ConstraintBlock, ConstraintFn, Disk, Hierarchy, Level, McCormick, Norm, Rosenbrock, SquaredDistance,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunMode {
    Plan,
    Control,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileOptions {
    pub mode: Option<RunMode>,
    pub max_iter: Option<usize>,
    pub rho0: Option<f64>,
    pub xi: Option<f64>,
    pub eps: Option<f64>,
    pub chi: Option<f64>,
    /// Control ticks to run in control mode.
    pub steps: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    variables: usize,
    x0: Option<Vec<f64>>,
    #[serde(default)]
    options: FileOptions,
    #[serde(rename = "level", default)]
    levels: Vec<RawLevel>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLevel {
    norm: String,
    #[serde(rename = "block", default)]
    blocks: Vec<RawBlock>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBlock {
    function: String,
    relation: String,
    label: Option<String>,
    group: Option<usize>,
    lower: Option<Vec<f64>>,
    upper: Option<Vec<f64>>,
    // affine
    a: Option<Vec<Vec<f64>>>,
    c: Option<Vec<f64>>,
    // disk
    indices: Option<Vec<usize>>,
    offsets: Option<Vec<f64>>,
    // rosenbrock, mccormick
    first: Option<usize>,
    second: Option<usize>,
    // arm_distance
    links: Option<Vec<f64>>,
    targets: Option<Vec<[f64; 2]>>,
}

/// A parsed problem ready to solve.
#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub hierarchy: Hierarchy,
    pub x0: DVector<f64>,
    pub options: FileOptions,
}

fn err(path: &str, message: impl Into<String>) -> Error {
    Error::Parse { path: path.to_string(), message: message.into() }
}

fn need<T: Clone>(v: &Option<T>, path: &str, field: &str) -> Result<T> {
    v.clone().ok_or_else(|| err(&format!("{path}.{field}"), "missing"))
}

fn function_of(b: &RawBlock, n: usize, path: &str) -> Result<Arc<dyn ConstraintFn>> {
    let index = |v: usize, field: &str| {
        if v < n {
            Ok(v)
        } else {
            Err(err(&format!("{path}.{field}"), format!("index {v} out of range for {n} variables")))
        }
    };
    let f: Arc<dyn ConstraintFn> = match b.function.as_str() {
        "affine" => {
            let rows = need(&b.a, path, "a")?;
            let c = need(&b.c, path, "c")?;
            if rows.len() != c.len() {
                return Err(err(&format!("{path}.c"), format!("{} entries for {} rows of a", c.len(), rows.len())));
            }
            if let Some(k) = rows.iter().position(|r| r.len() != n) {
                return Err(err(&format!("{path}.a[{k}]"), format!("expected {n} columns")));
            }
            let a = DMatrix::from_fn(rows.len(), n, |i, j| rows[i][j]);
            Arc::new(Affine::new(a, DVector::from_vec(c)))
        }
        "disk" => {
            let indices = need(&b.indices, path, "indices")?;
            for &i in &indices {
                index(i, "indices")?;
            }
            Arc::new(Disk::new(indices, need(&b.offsets, path, "offsets")?))
        }
        "rosenbrock" => Arc::new(Rosenbrock::new(
            index(need(&b.first, path, "first")?, "first")?,
            index(need(&b.second, path, "second")?, "second")?,
            need(&b.offsets, path, "offsets")?,
        )),
        "mccormick" => Arc::new(McCormick::new(
            index(need(&b.first, path, "first")?, "first")?,
            index(need(&b.second, path, "second")?, "second")?,
            need(&b.offsets, path, "offsets")?,
        )),
        "arm_distance" => {
            let links = need(&b.links, path, "links")?;
            if links.len() != n {
                return Err(err(&format!("{path}.links"), format!("{} links for {n} variables", links.len())));
            }
            let limits = vec![(-std::f64::consts::PI, std::f64::consts::PI); n];
            let arm = PlanarArm::new(links, limits).map_err(|e| err(&format!("{path}.links"), e.to_string()))?;
            let targets: Vec<DVector<f64>> = need(&b.targets, path, "targets")?
                .iter()
                .map(|t| DVector::from_column_slice(Vector2::from(*t).as_slice()))
                .collect();
            Arc::new(SquaredDistance::new(Arc::new(EndEffector(Arc::new(arm))), targets))
        }
        other => return Err(err(&format!("{path}.function"), format!("unknown function `{other}`"))),
    };
    if f.dim() == 0 {
        return Err(err(path, "block has no rows"));
    }
    Ok(f)
}

fn block_of(b: &RawBlock, n: usize, path: &str) -> Result<ConstraintBlock> {
    use crate::model::ConstraintKind;
    let f = function_of(b, n, path)?;
    let kind = match b.relation.as_str() {
        "eq" => ConstraintKind::Equality,
        "le" => ConstraintKind::Upper,
        "ge" => ConstraintKind::Lower,
        "bounds" => {
            let lower = b.lower.clone().unwrap_or_else(|| vec![f64::NEG_INFINITY; f.dim()]);
            let upper = b.upper.clone().unwrap_or_else(|| vec![f64::INFINITY; f.dim()]);
            if lower.len() != f.dim() || upper.len() != f.dim() {
                return Err(err(&format!("{path}.lower"), format!("bounds need {} entries", f.dim())));
            }
            ConstraintKind::Bounds { lower, upper }
        }
        other => return Err(err(&format!("{path}.relation"), format!("unknown relation `{other}`"))),
    };
    let mut block = ConstraintBlock::new(kind, f);
    block.group = b.group;
    block.label = b.label.clone().unwrap_or_else(|| path.to_string());
    Ok(block)
}

/// Parses problem text. `origin` names the source in error messages.
pub fn parse_problem(text: &str, origin: &str) -> Result<ProblemFile> {
    let raw: RawFile = toml::from_str(text).map_err(|e| {
        let place = match e.span() {
            Some(span) => {
                let line = text[..span.start].matches('\n').count() + 1;
                format!("{origin}:{line}")
            }
            None => origin.to_string(),
        };
        err(&place, e.message().to_string())
    })?;
    let n = raw.variables;
    if n == 0 {
        return Err(err("variables", "must be positive"));
    }
    let mut levels = Vec::with_capacity(raw.levels.len());
    for (l, lv) in raw.levels.iter().enumerate() {
        let path = format!("level[{l}]");
        let norm = match lv.norm.as_str() {
            "l0" => Norm::L0,
            "l2" => Norm::L2,
            other => return Err(err(&format!("{path}.norm"), format!("unknown norm `{other}`"))),
        };
        let blocks = lv
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| block_of(b, n, &format!("{path}.block[{k}]")))
            .collect::<Result<Vec<_>>>()?;
        levels.push(Level::new(norm, blocks));
    }
    let x0 = match raw.x0 {
        Some(v) if v.len() != n => return Err(err("x0", format!("{} entries for {n} variables", v.len()))),
        Some(v) => DVector::from_vec(v),
        None => DVector::zeros(n),
    };
    let hierarchy = Hierarchy::new(n, levels).map_err(|e| err("level", e.to_string()))?;
    Ok(ProblemFile { hierarchy, x0, options: raw.options })
}

pub fn load_problem(path: &Path) -> Result<ProblemFile> {
    let text = std::fs::read_to_string(path).map_err(|e| err(&path.display().to_string(), e.to_string()))?;
    parse_problem(&text, &path.display().to_string())
}
