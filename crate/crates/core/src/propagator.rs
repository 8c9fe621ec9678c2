//! Disorder-averaged single-particle propagation in slab geometry.
//!
//! In three dimensions a particle scattered at `r1` next scatters at `r2`
//! with density `exp(-r)/(4π r²)` (unit mean free path). Integrating over
//! the transverse plane of an infinite slab leaves the Milne kernel
//! `E1(|Δz|)/2`, which couples the depth cells.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::expint::{e1, e2};
use crate::scenario::DepthGrid;

/// The plane-integrated propagation kernel `E1(dz)/2` for `dz > 0`.
///
/// Integrably singular at `dz = 0`; the matrix assembly integrates it
/// over cells instead of sampling it there.
pub fn milne_kernel(dz: f64) -> Result<f64> {
    if dz < 0.0 {
        return Err(Error::Domain(format!("negative separation {dz}")));
    }
    Ok(0.5 * e1(dz)?)
}

/// `∫_{lo}^{hi} E1(x)/2 dx` for `0 <= lo <= hi`, via `∫E1 = -E2`.
pub fn kernel_integral(lo: f64, hi: f64) -> f64 {
    0.5 * (e2(lo) - e2(hi))
}

/// Dense depth-coupling matrix: `k[(j, jp)]` is the probability that a
/// particle scattered in cell `jp` next scatters in cell `j`.
#[derive(Debug, Clone)]
pub struct PropagatorMatrix {
    pub k: DMatrix<f64>,
    pub row_sums: Vec<f64>,
    /// Probability that a particle scattered at each node escapes through
    /// `z = 0` before scattering again.
    pub escape_front: Vec<f64>,
    /// Same, through `z = b`.
    pub escape_back: Vec<f64>,
    pub width: f64,
    pub b: f64,
}

impl PropagatorMatrix {
    pub fn new(grid: &DepthGrid) -> Self {
        let n = grid.len();
        let h = grid.width;
        // Uniform cells make the matrix Toeplitz: one value per offset.
        let offsets: Vec<f64> = (0..n)
            .map(|d| {
                if d == 0 {
                    2.0 * kernel_integral(0.0, 0.5 * h)
                } else {
                    let d = d as f64;
                    kernel_integral((d - 0.5) * h, (d + 0.5) * h)
                }
            })
            .collect();
        let k = DMatrix::from_fn(n, n, |j, jp| offsets[j.abs_diff(jp)]);
        let row_sums = (0..n).map(|j| k.row(j).iter().sum()).collect();
        let escape_front = grid.nodes.iter().map(|&z| 0.5 * e2(z)).collect();
        let escape_back = grid.nodes.iter().map(|&z| 0.5 * e2(grid.b - z)).collect();
        PropagatorMatrix {
            k,
            row_sums,
            escape_front,
            escape_back,
            width: h,
            b: grid.b,
        }
    }

    pub fn len(&self) -> usize {
        self.k.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.k.nrows() == 0
    }

    /// Analytic escape probability through either face, `1 - row_sum` in exact arithmetic.
    pub fn leakage(&self, j: usize) -> f64 {
        self.escape_front[j] + self.escape_back[j]
    }

    /// `(1 - K)^{-1}`, the resummed multiple-scattering operator.
    pub fn transport_inverse(&self) -> DMatrix<f64> {
        let n = self.len();
        let a = DMatrix::identity(n, n) - &self.k;
        a.cholesky()
            .expect("1 - K is positive definite when every row sum is below one")
            .inverse()
    }

    /// Fraction of incident particles leaving through `z = b`: the
    /// uncollided beam plus escapes after the last scattering.
    pub fn transmission(&self, collision_density: &DVector<f64>) -> f64 {
        (-self.b).exp()
            + self.width
                * collision_density
                    .iter()
                    .zip(&self.escape_back)
                    .map(|(c, p)| c * p)
                    .sum::<f64>()
    }

    /// Fraction of incident particles leaving back through `z = 0`.
    pub fn reflection(&self, collision_density: &DVector<f64>) -> f64 {
        self.width
            * collision_density
                .iter()
                .zip(&self.escape_front)
                .map(|(c, p)| c * p)
                .sum::<f64>()
    }
}

/// Density of first scatterings of the incident beam, `exp(-z_j)`.
///
/// Feeds only the elastic line; the interaction plays no role here.
pub fn ballistic_source(grid: &DepthGrid) -> DVector<f64> {
    DVector::from_iterator(grid.len(), grid.nodes.iter().map(|z| (-z).exp()))
}
