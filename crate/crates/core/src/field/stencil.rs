//! Centered finite-difference Laplacian and gradient on periodic meshes.

use super::{Mesh, Order, ScalarField, VectorField};

/// Flat-index stride and wrap helper for one axis of a periodic mesh.
#[derive(Clone, Copy)]
pub(crate) struct Axis {
    n: usize,
    stride: usize,
}

impl Axis {
    pub(crate) fn of(mesh_dim: usize, n: usize, d: usize) -> Axis {
        let stride = if mesh_dim == 2 && d == 0 { n } else { 1 };
        Axis { n, stride }
    }

    /// Flat index of the cell `delta` steps from `index` along this axis.
    #[inline]
    pub(crate) fn shift(&self, index: usize, delta: isize) -> usize {
        let i = (index / self.stride) % self.n;
        let j = (i as isize + delta).rem_euclid(self.n as isize) as usize;
        index - i * self.stride + j * self.stride
    }
}

/// Laplacian of raw cell data; `out` is overwritten.
pub(crate) fn laplacian_into(dim: usize, n: usize, dx: f64, order: Order, phi: &[f64], out: &mut [f64]) {
    let inv = 1.0 / (dx * dx);
    out.iter_mut().for_each(|o| *o = 0.0);
    for d in 0..dim {
        let ax = Axis::of(dim, n, d);
        for (i, o) in out.iter_mut().enumerate() {
            let c = phi[i];
            let p1 = phi[ax.shift(i, 1)];
            let m1 = phi[ax.shift(i, -1)];
            *o += match order {
                Order::Second => (p1 - 2.0 * c + m1) * inv,
                Order::Fourth => {
                    let p2 = phi[ax.shift(i, 2)];
                    let m2 = phi[ax.shift(i, -2)];
                    (-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) * inv / 12.0
                }
            };
        }
    }
}

/// Discrete Laplacian of a periodic field.
pub fn apply_laplacian(phi: &ScalarField, order: Order) -> ScalarField {
    let mesh = *phi.mesh();
    let mut out = ScalarField::zeros(mesh);
    laplacian_into(mesh.dim(), mesh.n_cells(), mesh.dx(), order, phi.values(), out.values_mut());
    out
}

/// Electric field `E = -grad(phi)` by centered differences.
pub fn gradient_to_efield(phi: &ScalarField, order: Order) -> VectorField {
    let mesh: Mesh = *phi.mesh();
    let dx = mesh.dx();
    let v = phi.values();
    let mut e = VectorField::zeros(mesh);
    for d in 0..mesh.dim() {
        let ax = Axis::of(mesh.dim(), mesh.n_cells(), d);
        for (i, out) in e.component_mut(d).values_mut().iter_mut().enumerate() {
            let p1 = v[ax.shift(i, 1)];
            let m1 = v[ax.shift(i, -1)];
            *out = match order {
                Order::Second => -(p1 - m1) / (2.0 * dx),
                Order::Fourth => {
                    let p2 = v[ax.shift(i, 2)];
                    let m2 = v[ax.shift(i, -2)];
                    -(-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * dx)
                }
            };
        }
    }
    e
}
