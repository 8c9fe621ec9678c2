//! Two-body collision kernels on the energy grid.
//!
//! The inelastic kernel `f(E1, E2; E)` gives the rate at which a pair with
//! energies `E1`, `E2` produces a particle at `E` (the partner ends at
//! `E1 + E2 - E`). In the contact limit it reduces to
//!
//! ```text
//! f(E1, E2; E) = alpha * sqrt(min(E, E1, E2, E1 + E2 - E)) / sqrt(E1 E2 E)
//! ```
//!
//! on `0 < E < E1 + E2`, which is the usual three-branch form written
//! symmetrically in the pair. The elastic kernel `g(E1; E2)` is the
//! matching loss rate; it is built from the discrete number sum rule so
//! that the assembled collision operator conserves particle flux exactly
//! on the grid, including at the `e_max` truncation.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scenario::EnergyGrid;

/// Inelastic kernel at arbitrary energies. The pair is symmetrized.
pub fn kernel_f(e1: f64, e2: f64, e: f64, alpha: f64) -> Result<f64> {
    if !(e1 > 0.0 && e2 > 0.0) {
        return Err(Error::Domain(format!(
            "pair energies must be positive, got ({e1}, {e2})"
        )));
    }
    let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
    if e.is_nan() || e <= 0.0 || e >= lo + hi {
        return Ok(0.0);
    }
    let branch = if e < lo {
        e.sqrt()
    } else if e <= hi {
        lo.sqrt()
    } else {
        (lo + hi - e).sqrt()
    };
    Ok(alpha * branch / (e1 * e2 * e).sqrt())
}

/// Continuum elastic kernel from the number sum rule,
/// `sqrt(E2) g(E1; E2) = -∫ sqrt(E) f(E1, E2; E) dE`, in closed form.
pub fn continuum_g(e1: f64, e2: f64, alpha: f64) -> f64 {
    let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
    -alpha * lo.sqrt() * (hi + lo / 3.0) / (e1.sqrt() * e2)
}

/// Kernel tables over an energy grid.
///
/// Node energies are integer multiples `k * delta`, so the kernel at node
/// triple `(a, b, m)` only depends on the integer `min(m, a, b, a + b - m)`.
/// The inelastic table is stored in that factored form; `dense_f`
/// materializes the full 3-index array when a caller needs it.
#[derive(Debug, Clone)]
pub struct CollisionTables {
    pub alpha: f64,
    n: usize,
    ei_index: usize,
    weights: Vec<f64>,
    inv_sqrt_e: Vec<f64>,
    /// `phi[k] = sqrt(k delta)`, `phi[0] = 0`.
    phi: Vec<f64>,
    /// `g[(a, b)] = g(E_a; E_b)`: loss rate of a particle at `E_b` due to a partner at `E_a`.
    g: DMatrix<f64>,
    /// Transpose of `g`, the layout the collision operator multiplies with.
    g_t: DMatrix<f64>,
}

impl CollisionTables {
    /// Tabulates `f` and derives `g` from the discrete number sum rule.
    pub fn new(grid: &EnergyGrid, alpha: f64) -> Self {
        let n = grid.len();
        let phi = (0..=n).map(|k| (k as f64 * grid.delta).sqrt()).collect();
        let inv_sqrt_e = grid.nodes.iter().map(|e| 1.0 / e.sqrt()).collect();
        let mut tables = CollisionTables {
            alpha,
            n,
            ei_index: grid.ei_index(),
            weights: grid.weights.clone(),
            inv_sqrt_e,
            phi,
            g: DMatrix::zeros(n, n),
            g_t: DMatrix::zeros(n, n),
        };
        tables.build_g_from_sum_rule(grid);
        tables
    }

    fn build_g_from_sum_rule(&mut self, grid: &EnergyGrid) {
        let n = self.n;
        let sqrt_e: Vec<f64> = grid.nodes.iter().map(|e| e.sqrt()).collect();
        for a in 0..n {
            for b in a..n {
                let flux: f64 = (0..n)
                    .map(|m| self.weights[m] * sqrt_e[m] * self.f(a, b, m))
                    .sum();
                self.g[(a, b)] = -flux / sqrt_e[b];
                self.g[(b, a)] = -flux / sqrt_e[a];
            }
        }
        self.g_t = self.g.transpose();
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn ei_index(&self) -> usize {
        self.ei_index
    }

    /// `f(E_a, E_b; E_m)` at 0-based node indices.
    #[inline]
    pub fn f(&self, a: usize, b: usize, m: usize) -> f64 {
        let (a1, b1, m1) = (a as i64 + 1, b as i64 + 1, m as i64 + 1);
        let k = m1.min(a1).min(b1).min(a1 + b1 - m1);
        if k <= 0 {
            0.0
        } else {
            let (lo, hi) = (a.min(b), a.max(b));
            self.alpha * self.phi[k as usize] * self.inv_sqrt_e[lo] * self.inv_sqrt_e[hi] * self.inv_sqrt_e[m]
        }
    }

    /// `g(E_a; E_b)` at 0-based node indices.
    #[inline]
    pub fn g(&self, a: usize, b: usize) -> f64 {
        self.g[(a, b)]
    }

    /// Transposed elastic table, `g_t[(b, a)] = g(E_a; E_b)`.
    pub fn g_transposed(&self) -> &DMatrix<f64> {
        &self.g_t
    }

    /// First-collision spectrum of two incident particles, `f(E_i, E_i; E_m)`.
    pub fn f_ei_ei(&self, m: usize) -> f64 {
        self.f(self.ei_index, self.ei_index, m)
    }

    /// `f(E_n, E_i; E_m)`: one partner from the elastic line.
    pub fn f_n_ei(&self, n: usize, m: usize) -> f64 {
        self.f(n, self.ei_index, m)
    }

    /// `g(E_n; E_i)`: loss of the elastic line due to a partner at `E_n`.
    pub fn g_n_ei(&self, n: usize) -> f64 {
        self.g[(n, self.ei_index)]
    }

    /// `g(E_i; E_m)`: loss at `E_m` due to an elastic partner.
    pub fn g_ei_m(&self, m: usize) -> f64 {
        self.g[(self.ei_index, m)]
    }

    pub fn g_ei_ei(&self) -> f64 {
        self.g[(self.ei_index, self.ei_index)]
    }

    /// Elastic kernel derived instead from the energy sum rule,
    /// `(E_a + E_b) sqrt(E_b) g = -Σ_m w_m 2 E_m sqrt(E_m) f`.
    pub fn g_from_energy_rule(&self, grid: &EnergyGrid, a: usize, b: usize) -> f64 {
        let energy: f64 = (0..self.n)
            .map(|m| {
                let e = grid.nodes[m];
                self.weights[m] * 2.0 * e * e.sqrt() * self.f(a, b, m)
            })
            .sum();
        -energy / ((grid.nodes[a] + grid.nodes[b]) * grid.nodes[b].sqrt())
    }

    /// Full `f` table, indexed `[(a * n + b) * n + m]`.
    pub fn dense_f(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = Vec::with_capacity(n * n * n);
        for a in 0..n {
            for b in 0..n {
                for m in 0..n {
                    out.push(self.f(a, b, m));
                }
            }
        }
        out
    }

    /// Inelastic gain `Q_m = Σ_{a,b} f(E_a, E_b; E_m) y_a z_b` for all `m`,
    /// where `y`, `z` are quadrature-weighted densities.
    ///
    /// Runs in `O(n²)` instead of the `O(n³)` dense contraction.
    pub fn gain(&self, y: &[f64], z: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.n;
        if y.len() != n || z.len() != n || out.len() != n {
            return Err(Error::Shape(format!(
                "gain expects vectors of length {n}, got {}, {}, {}",
                y.len(),
                z.len(),
                out.len()
            )));
        }
        let u: Vec<f64> = y.iter().zip(&self.inv_sqrt_e).map(|(a, b)| a * b).collect();
        let v: Vec<f64> = z.iter().zip(&self.inv_sqrt_e).map(|(a, b)| a * b).collect();
        pair_sum(&self.phi, &u, &v, out);
        for (o, s) in out.iter_mut().zip(&self.inv_sqrt_e) {
            *o *= self.alpha * s;
        }
        Ok(())
    }
}

/// `out[m] = Σ_{a,b} u_a v_b phi[min(m, a, b, a + b - m)]` with 1-based
/// node numbers inside `min` and `phi[k] = 0` for `k <= 0`.
///
/// Splits the ordered pairs by where `m` falls relative to `lo = min(a, b)`
/// and `hi = max(a, b)`:
/// * `m <= lo`: weight `phi[m]`, a product of suffix sums;
/// * `lo < m < hi`: weight `phi[lo]`, a prefix sum times a suffix sum;
/// * `hi <= m` (minus the pair `(m, m)` counted above): weight
///   `phi[a + b - m]`, read off a running autoconvolution of the vectors
///   truncated at `m`.
fn pair_sum(phi: &[f64], u: &[f64], v: &[f64], out: &mut [f64]) {
    let n = u.len();
    let mut suffix_u = vec![0.0; n + 1];
    let mut suffix_v = vec![0.0; n + 1];
    for i in (0..n).rev() {
        suffix_u[i] = suffix_u[i + 1] + u[i];
        suffix_v[i] = suffix_v[i + 1] + v[i];
    }
    // conv[s] = Σ_{a, b <= m, a + b = s} u_a v_b, 1-based sums s.
    let mut conv = vec![0.0; 2 * n + 1];
    let (mut prefix_u, mut prefix_v) = (0.0, 0.0);
    for i in 0..n {
        let m = i + 1;
        let (um, vm) = (u[i], v[i]);
        let both_above = phi[m] * suffix_u[i] * suffix_v[i];
        let straddle = prefix_u * suffix_v[i + 1] + prefix_v * suffix_u[i + 1];

        for a in 1..m {
            conv[m + a] += um * v[a - 1] + u[a - 1] * vm;
        }
        conv[2 * m] += um * vm;
        let mut both_below = -um * vm * phi[m];
        for t in 1..=m {
            both_below += phi[t] * conv[m + t];
        }

        out[i] = both_above + straddle + both_below;
        prefix_u += um * phi[m];
        prefix_v += vm * phi[m];
    }
}
