//! Compact interpolating kernels for particle-mesh transfer.
//!
//! Four one-dimensional kernels are provided, all evaluated in normalized
//! cell units (the caller divides distances by the grid spacing):
//!
//! | kernel | formal order | support radius | used for                    |
//! |--------|--------------|----------------|-----------------------------|
//! | `W2`   | 2            | 1              | cloud-in-cell transfer      |
//! | `W3`   | 3            | 2              | remap for the 2nd-order PIC |
//! | `W4`   | 4            | 2              | transfer for the 4th-order  |
//! | `W6`   | 6            | 3              | remap for the 4th-order PIC |
//!
//! `W4` and `W6` are the piecewise Lagrange interpolation kernels on 4 and 6
//! nodes, so they are written here in factored form. The factored form gives
//! exact zeros at the integer nodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest stencil width (number of nodes) of any kernel.
pub const MAX_WIDTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelId {
    W2,
    W3,
    W4,
    W6,
}

impl KernelId {
    pub const ALL: [KernelId; 4] = [KernelId::W2, KernelId::W3, KernelId::W4, KernelId::W6];

    /// Formal accuracy order of the kernel.
    pub fn order(self) -> u32 {
        match self {
            KernelId::W2 => 2,
            KernelId::W3 => 3,
            KernelId::W4 => 4,
            KernelId::W6 => 6,
        }
    }

    /// Half-width of the support in cell units.
    #[inline(always)]
    pub fn radius(self) -> usize {
        match self {
            KernelId::W2 => 1,
            KernelId::W3 | KernelId::W4 => 2,
            KernelId::W6 => 3,
        }
    }

    pub fn support_radius(self) -> f64 {
        self.radius() as f64
    }

    /// Number of lattice nodes a point touches.
    #[inline(always)]
    pub fn width(self) -> usize {
        2 * self.radius()
    }

    /// Evaluates the kernel at `x` (cell units).
    ///
    /// At the interior breakpoints the lower-|x| branch is used.
    #[inline(always)]
    pub fn eval(self, x: f64) -> f64 {
        let a = x.abs();
        match self {
            KernelId::W2 => {
                if a < 1.0 {
                    1.0 - a
                } else {
                    0.0
                }
            }
            KernelId::W3 => {
                if a <= 1.0 {
                    (1.0 - a) * (1.0 + a - 1.5 * a * a)
                } else if a < 2.0 {
                    let b = 2.0 - a;
                    0.5 * b * b * (1.0 - a)
                } else {
                    0.0
                }
            }
            KernelId::W4 => {
                if a <= 1.0 {
                    0.5 * (1.0 - a * a) * (2.0 - a)
                } else if a < 2.0 {
                    -(a - 1.0) * (a - 2.0) * (a - 3.0) / 6.0
                } else {
                    0.0
                }
            }
            KernelId::W6 => {
                if a <= 1.0 {
                    (1.0 - a * a) * (4.0 - a * a) * (3.0 - a) / 12.0
                } else if a <= 2.0 {
                    (a + 1.0) * (a - 1.0) * (a - 2.0) * (a - 3.0) * (a - 4.0) / 24.0
                } else if a < 3.0 {
                    -(a - 1.0) * (a - 2.0) * (a - 3.0) * (a - 4.0) * (a - 5.0) / 120.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Weights of the `width()` nodes touched by a point at fractional
    /// offset `s` in `[0, 1)` past its home node.
    ///
    /// Entry `m` belongs to lattice offset `m + 1 - radius` relative to the
    /// home node. Entries past `width()` are zero.
    #[inline(always)]
    pub fn weights(self, s: f64) -> [f64; MAX_WIDTH] {
        let mut w = [0.0; MAX_WIDTH];
        let r = self.radius() as i64;
        for (m, wm) in w.iter_mut().take(self.width()).enumerate() {
            let offset = m as i64 + 1 - r;
            *wm = self.eval(s - offset as f64);
        }
        w
    }

    /// Lattice offset of the first entry returned by [`KernelId::weights`].
    #[inline(always)]
    pub fn first_offset(self) -> i64 {
        1 - self.radius() as i64
    }
}

/// A kernel known at compile time, for monomorphized inner loops.
pub(crate) trait StaticKernel {
    const ID: KernelId;
}

pub(crate) struct StaticW2;
pub(crate) struct StaticW3;
pub(crate) struct StaticW4;
pub(crate) struct StaticW6;

impl StaticKernel for StaticW2 {
    const ID: KernelId = KernelId::W2;
}
impl StaticKernel for StaticW3 {
    const ID: KernelId = KernelId::W3;
}
impl StaticKernel for StaticW4 {
    const ID: KernelId = KernelId::W4;
}
impl StaticKernel for StaticW6 {
    const ID: KernelId = KernelId::W6;
}

/// Calls the generic function `$f::<K>(args..)` with `K` matching the
/// runtime kernel `$k`.
macro_rules! dispatch_kernel {
    ($k:expr, $f:ident($($arg:expr),* $(,)?)) => {
        match $k {
            $crate::kernels::KernelId::W2 => $f::<$crate::kernels::StaticW2>($($arg),*),
            $crate::kernels::KernelId::W3 => $f::<$crate::kernels::StaticW3>($($arg),*),
            $crate::kernels::KernelId::W4 => $f::<$crate::kernels::StaticW4>($($arg),*),
            $crate::kernels::KernelId::W6 => $f::<$crate::kernels::StaticW6>($($arg),*),
        }
    };
}
pub(crate) use dispatch_kernel;

/// One-dimensional kernel value.
pub fn eval_1d(kernel: KernelId, x: f64) -> f64 {
    kernel.eval(x)
}

/// Tensor-product kernel value for a `dim`-dimensional offset.
pub fn eval_nd(kernel: KernelId, offset: &[f64], dim: usize) -> Result<f64> {
    if offset.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: offset.len(),
        });
    }
    Ok(offset.iter().map(|&x| kernel.eval(x)).product())
}

#[derive(Debug, Clone, PartialEq)]
pub struct StencilEntry {
    pub offset: Vec<i64>,
    pub weight: f64,
}

/// Lattice offsets and weights touched by a point at fractional position `s`
/// (one component per dimension, each in `[0, 1)`) relative to its home node.
///
/// Offsets with zero weight are omitted.
pub fn stencil(kernel: KernelId, s: &[f64]) -> Vec<StencilEntry> {
    let per_dim: Vec<[f64; MAX_WIDTH]> = s.iter().map(|&sd| kernel.weights(sd)).collect();
    let width = kernel.width();
    let first = kernel.first_offset();
    let total = width.pow(s.len() as u32);

    let mut out = Vec::new();
    let mut idx = vec![0usize; s.len()];
    for _ in 0..total {
        let weight: f64 = idx.iter().zip(&per_dim).map(|(&m, w)| w[m]).product();
        if weight != 0.0 {
            out.push(StencilEntry {
                offset: idx.iter().map(|&m| m as i64 + first).collect(),
                weight,
            });
        }
        // odometer, last dimension fastest
        for d in (0..idx.len()).rev() {
            idx[d] += 1;
            if idx[d] < width {
                break;
            }
            idx[d] = 0;
        }
    }
    out
}

/// Splits a coordinate in lattice units into its home node and the
/// fractional offset `s` in `[0, 1)`.
///
/// For a cell-centered lattice pass `x / h - 0.5`.
#[inline]
pub fn split_coordinate(u: f64) -> (i64, f64) {
    // truncating cast plus a correction; `floor` is a libm call on baseline x86-64
    let mut home = u as i64;
    if home as f64 > u {
        home -= 1;
    }
    let mut s = u - home as f64;
    // u - floor(u) can round up to 1.0 for tiny negative u
    if s >= 1.0 {
        s = 0.0;
        home += 1;
    }
    (home, s)
}
