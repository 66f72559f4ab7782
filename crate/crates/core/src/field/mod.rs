//! Periodic cell-centered meshes, finite-difference operators and the
//! multigrid Poisson solver.
//!
//! Cell `i` of an `n`-cell axis is centered at `(i + 1/2) dx`. Two-dimensional
//! data is stored row-major with the first axis slowest: `index = ix * n + iy`.

mod multigrid;
mod stencil;

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelId;

pub use multigrid::{solve_poisson, Multigrid, MultigridConfig, SolveStats};
pub use stencil::{apply_laplacian, gradient_to_efield};

/// Accuracy order of a scheme. Everything order-dependent (kernels,
/// stencils, time integrator) is selected from this one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Order {
    Second,
    Fourth,
}

impl Order {
    pub fn value(self) -> u32 {
        match self {
            Order::Second => 2,
            Order::Fourth => 4,
        }
    }

    /// Kernel used for charge deposition and force interpolation.
    pub fn transfer_kernel(self) -> KernelId {
        match self {
            Order::Second => KernelId::W2,
            Order::Fourth => KernelId::W4,
        }
    }

    /// Kernel used for phase-space remapping (one order higher than the scheme).
    pub fn remap_kernel(self) -> KernelId {
        match self {
            Order::Second => KernelId::W3,
            Order::Fourth => KernelId::W6,
        }
    }
}

impl TryFrom<u32> for Order {
    type Error = Error;

    fn try_from(value: u32) -> Result<Self> {
        match value {
            2 => Ok(Order::Second),
            4 => Ok(Order::Fourth),
            other => Err(Error::InvalidOrder(other)),
        }
    }
}

impl From<Order> for u32 {
    fn from(order: Order) -> u32 {
        order.value()
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}

/// Uniform periodic mesh on `[0, length)^dim`, identical along every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    dim: usize,
    n_cells: usize,
    length: f64,
}

impl Mesh {
    pub fn new(dim: usize, n_cells: usize, length: f64) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidMesh(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n_cells < 4 || !n_cells.is_power_of_two() {
            return Err(Error::InvalidMesh(format!(
                "cell count {n_cells} must be a power of two and at least 4"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidMesh(format!("domain length {length} must be positive")));
        }
        Ok(Mesh { dim, n_cells, length })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Cells per axis.
    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn cell_count(&self) -> usize {
        self.n_cells.pow(self.dim as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32)
    }

    pub fn cell_center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dx()
    }

    /// Per-axis cell indices of a flat index.
    pub fn unflatten(&self, index: usize) -> [usize; 2] {
        match self.dim {
            1 => [index, 0],
            _ => [index / self.n_cells, index % self.n_cells],
        }
    }

    /// Cell center coordinates of a flat index (unused axes are zero).
    pub fn center_of(&self, index: usize) -> [f64; 2] {
        let ij = self.unflatten(index);
        let mut c = [0.0; 2];
        for d in 0..self.dim {
            c[d] = self.cell_center(ij[d]);
        }
        c
    }

    /// Mesh with half as many cells per axis, if it still has at least four.
    pub fn coarsen(&self) -> Option<Mesh> {
        (self.n_cells >= 8).then(|| Mesh {
            n_cells: self.n_cells / 2,
            ..*self
        })
    }

    pub fn refine(&self) -> Mesh {
        Mesh {
            n_cells: self.n_cells * 2,
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    mesh: Mesh,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(mesh: Mesh) -> Self {
        ScalarField {
            mesh,
            values: vec![0.0; mesh.cell_count()],
        }
    }

    pub fn from_values(mesh: Mesh, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.cell_count() {
            return Err(Error::DimensionMismatch {
                expected: mesh.cell_count(),
                got: values.len(),
            });
        }
        Ok(ScalarField { mesh, values })
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(mesh: Mesh, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..mesh.cell_count())
            .map(|i| f(&mesh.center_of(i)[..mesh.dim()]))
            .collect();
        ScalarField { mesh, values }
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, &self.mesh, 1)?;
        for v in &self.values {
            writeln!(w, "{v:e}")?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let (mesh, mut cols) = read_columns(r, Some(1))?;
        ScalarField::from_values(mesh, cols.remove(0))
    }
}

/// Electric field: one scalar component per spatial dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField {
    mesh: Mesh,
    components: Vec<ScalarField>,
}

impl VectorField {
    pub fn zeros(mesh: Mesh) -> Self {
        VectorField {
            mesh,
            components: (0..mesh.dim()).map(|_| ScalarField::zeros(mesh)).collect(),
        }
    }

    pub fn from_components(components: Vec<ScalarField>) -> Result<Self> {
        let mesh = *components
            .first()
            .ok_or(Error::DimensionMismatch { expected: 1, got: 0 })?
            .mesh();
        if components.len() != mesh.dim() {
            return Err(Error::DimensionMismatch {
                expected: mesh.dim(),
                got: components.len(),
            });
        }
        if components.iter().any(|c| *c.mesh() != mesh) {
            return Err(Error::InvalidMesh("components live on different meshes".into()));
        }
        Ok(VectorField { mesh, components })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn component(&self, d: usize) -> &ScalarField {
        &self.components[d]
    }

    pub fn component_mut(&mut self, d: usize) -> &mut ScalarField {
        &mut self.components[d]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    /// Largest |E_d| over all cells and components.
    pub fn max_abs(&self) -> f64 {
        self.components.iter().fold(0.0, |m, c| m.max(c.max_abs()))
    }

    pub fn write_dump<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, &self.mesh, self.components.len())?;
        for i in 0..self.mesh.cell_count() {
            let row: Vec<String> = self
                .components
                .iter()
                .map(|c| format!("{:e}", c.values[i]))
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn read_dump<R: BufRead>(r: R) -> Result<Self> {
        let (mesh, cols) = read_columns(r, None)?;
        let components = cols
            .into_iter()
            .map(|c| ScalarField::from_values(mesh, c))
            .collect::<Result<Vec<_>>>()?;
        VectorField::from_components(components)
    }
}

fn write_header<W: Write>(w: &mut W, mesh: &Mesh, columns: usize) -> Result<()> {
    writeln!(
        w,
        "# dim={} n_cells={} dx={:e} length={:e} columns={}",
        mesh.dim(),
        mesh.n_cells(),
        mesh.dx(),
        mesh.length(),
        columns
    )?;
    Ok(())
}

/// Parses `key=value` pairs from a `# ...` header line.
pub(crate) fn parse_header(line: &str) -> Result<Vec<(String, String)>> {
    let body = line
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse(format!("expected `#` header, got {line:?}")))?;
    body.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| Error::Parse(format!("malformed header entry {kv:?}")))
        })
        .collect()
}

pub(crate) fn header_value<T: std::str::FromStr>(pairs: &[(String, String)], key: &str) -> Result<T> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .ok_or_else(|| Error::Parse(format!("header is missing `{key}`")))?
        .1
        .parse()
        .map_err(|_| Error::Parse(format!("bad value for `{key}`")))
}

fn read_columns<R: BufRead>(r: R, expect: Option<usize>) -> Result<(Mesh, Vec<Vec<f64>>)> {
    let mut lines = r.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty field dump".into()))??;
    let pairs = parse_header(&header)?;
    let dim: usize = header_value(&pairs, "dim")?;
    let n: usize = header_value(&pairs, "n_cells")?;
    let length: f64 = header_value(&pairs, "length")?;
    let ncol: usize = header_value(&pairs, "columns")?;
    if let Some(e) = expect {
        if e != ncol {
            return Err(Error::DimensionMismatch { expected: e, got: ncol });
        }
    }
    let mesh = Mesh::new(dim, n, length)?;
    let mut cols = vec![Vec::with_capacity(mesh.cell_count()); ncol];
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for (c, tok) in line.split(',').enumerate() {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number {tok:?}")))?;
            cols.get_mut(c)
                .ok_or_else(|| Error::Parse("too many columns".into()))?
                .push(v);
            count += 1;
        }
        if count != ncol {
            return Err(Error::Parse(format!("expected {ncol} columns, got {count}")));
        }
    }
    Ok((mesh, cols))
}
