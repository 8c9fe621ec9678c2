//! Monte Carlo oracles for the propagator and the pair-collision kernel.
//!
//! Both samplers draw from counter-based streams: stream `k` of a ChaCha8
//! generator seeded with the run seed belongs to walker (or chunk) `k`, so
//! tallies do not depend on how work is split across threads.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::collision::kernel_f;
use crate::error::{Error, Result};

/// Binned counts with per-bin variance estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct McHistogram {
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub n_samples: u64,
    pub seed: u64,
    /// Estimated variance of each bin count.
    pub count_variance: Vec<f64>,
}

impl McHistogram {
    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    fn width(&self, k: usize) -> f64 {
        self.bin_edges[k + 1] - self.bin_edges[k]
    }

    pub fn centers(&self) -> Vec<f64> {
        self.bin_edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Counts per unit bin width per sample.
    pub fn density(&self) -> Vec<f64> {
        let n = self.n_samples as f64;
        (0..self.n_bins()).map(|k| self.counts[k] as f64 / (n * self.width(k))).collect()
    }

    pub fn density_std_errors(&self) -> Vec<f64> {
        let n = self.n_samples as f64;
        (0..self.n_bins())
            .map(|k| self.count_variance[k].sqrt() / (n * self.width(k)))
            .collect()
    }
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn isotropic(rng: &mut impl Rng) -> [f64; 3] {
    let mu: f64 = 2.0 * rng.gen::<f64>() - 1.0;
    let phi = 2.0 * PI * rng.gen::<f64>();
    let s = (1.0 - mu * mu).max(0.0).sqrt();
    [s * phi.cos(), s * phi.sin(), mu]
}

/// Splits `0..n` into `parts` contiguous ranges of near-equal size.
fn partition(n: u64, parts: u64) -> Vec<(u64, u64)> {
    (0..parts).map(|k| (k * n / parts, (k + 1) * n / parts)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlabWalk {
    pub b: f64,
    pub n_walkers: u64,
    pub transmitted: u64,
    pub reflected: u64,
    /// Scattering events per depth cell; `density()` is per unit length per walker.
    pub collisions: McHistogram,
}

impl SlabWalk {
    pub fn transmitted_fraction(&self) -> f64 {
        self.transmitted as f64 / self.n_walkers as f64
    }

    pub fn reflected_fraction(&self) -> f64 {
        self.reflected as f64 / self.n_walkers as f64
    }

    pub fn transmitted_std_error(&self) -> f64 {
        let p = self.transmitted_fraction();
        (p * (1.0 - p) / self.n_walkers as f64).sqrt()
    }

    pub fn reflected_std_error(&self) -> f64 {
        let p = self.reflected_fraction();
        (p * (1.0 - p) / self.n_walkers as f64).sqrt()
    }
}

/// Batches used for the variance of the collision-density tally.
const WALK_BATCHES: u64 = 100;

struct WalkTally {
    transmitted: u64,
    reflected: u64,
    cells: Vec<u64>,
}

fn walk_batch(b: f64, n_cells: usize, seed: u64, walkers: (u64, u64)) -> WalkTally {
    let width = b / n_cells as f64;
    let mut t = WalkTally {
        transmitted: 0,
        reflected: 0,
        cells: vec![0; n_cells],
    };
    for walker in walkers.0..walkers.1 {
        let mut rng = stream(seed, walker);
        let (mut z, mut mu) = (0.0_f64, 1.0_f64);
        loop {
            let u: f64 = rng.gen();
            z += mu * -(1.0 - u).ln();
            if z < 0.0 {
                t.reflected += 1;
                break;
            }
            if z > b {
                t.transmitted += 1;
                break;
            }
            t.cells[((z / width) as usize).min(n_cells - 1)] += 1;
            mu = 2.0 * rng.gen::<f64>() - 1.0;
        }
    }
    t
}

/// Random walk through a slab of thickness `b` with unit mean free path and
/// isotropic scattering. Walkers enter at `z = 0` along `+z`.
pub fn mc_slab_walk(b: f64, n_cells: usize, n_walkers: u64, seed: u64) -> Result<SlabWalk> {
    if !(b.is_finite() && b > 0.0) {
        return Err(Error::Invalid(format!("slab thickness must be positive, got {b}")));
    }
    if n_walkers == 0 || n_cells == 0 {
        return Err(Error::Invalid("need at least one walker and one cell".into()));
    }
    let batches = partition(n_walkers, WALK_BATCHES.min(n_walkers));
    let tallies: Vec<WalkTally> = batches
        .par_iter()
        .map(|range| walk_batch(b, n_cells, seed, *range))
        .collect();

    let mut counts = vec![0u64; n_cells];
    let (mut transmitted, mut reflected) = (0, 0);
    for t in &tallies {
        transmitted += t.transmitted;
        reflected += t.reflected;
        for (c, v) in counts.iter_mut().zip(&t.cells) {
            *c += v;
        }
    }
    // Batch means: each batch estimates the per-walker count; the spread
    // of those estimates gives the variance of the total.
    let nb = tallies.len() as f64;
    let count_variance = (0..n_cells)
        .map(|k| {
            if tallies.len() < 2 {
                return counts[k] as f64;
            }
            let per_walker: Vec<f64> = tallies
                .iter()
                .zip(&batches)
                .map(|(t, (lo, hi))| t.cells[k] as f64 / (hi - lo) as f64)
                .collect();
            let mean = per_walker.iter().sum::<f64>() / nb;
            let var = per_walker.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nb - 1.0);
            // variance of the batch mean, scaled back to the total count
            var / nb * (n_walkers as f64).powi(2)
        })
        .collect();
    let edges = (0..=n_cells).map(|k| b * k as f64 / n_cells as f64).collect();
    Ok(SlabWalk {
        b,
        n_walkers,
        transmitted,
        reflected,
        collisions: McHistogram {
            bin_edges: edges,
            counts,
            n_samples: n_walkers,
            seed,
            count_variance,
        },
    })
}

const PAIR_CHUNK: u64 = 1 << 16;

fn momentum(rng: &mut impl Rng, e: f64) -> [f64; 3] {
    let d = isotropic(rng);
    let k = e.sqrt();
    [k * d[0], k * d[1], k * d[2]]
}

/// Outgoing energy of one particle after an s-wave collision of two
/// particles with energies `e1`, `e2` and isotropic incoming directions.
///
/// Pairs are accepted with probability proportional to their relative
/// speed, which is how often a given pair collides.
fn sample_pair(rng: &mut impl Rng, e1: f64, e2: f64) -> f64 {
    let vmax = e1.sqrt() + e2.sqrt();
    loop {
        let k1 = momentum(rng, e1);
        let k2 = momentum(rng, e2);
        let rel = [k1[0] - k2[0], k1[1] - k2[1], k1[2] - k2[2]];
        let rel_len = (rel[0] * rel[0] + rel[1] * rel[1] + rel[2] * rel[2]).sqrt();
        if rng.gen::<f64>() * vmax >= rel_len {
            continue;
        }
        let q = 0.5 * rel_len;
        let n = isotropic(rng);
        let k3 = [
            0.5 * (k1[0] + k2[0]) + q * n[0],
            0.5 * (k1[1] + k2[1]) + q * n[1],
            0.5 * (k1[2] + k2[2]) + q * n[2],
        ];
        return k3[0] * k3[0] + k3[1] * k3[1] + k3[2] * k3[2];
    }
}

/// Histogram of outgoing energies over `n_bins` equal bins on `(0, e1 + e2)`.
pub fn mc_pair_collision(e1: f64, e2: f64, n_bins: usize, n_samples: u64, seed: u64) -> Result<McHistogram> {
    if !(e1 > 0.0 && e2 > 0.0 && e1.is_finite() && e2.is_finite()) {
        return Err(Error::Domain(format!("pair energies must be positive, got ({e1}, {e2})")));
    }
    if n_bins == 0 {
        return Err(Error::Invalid("need at least one bin".into()));
    }
    let top = e1 + e2;
    let n_chunks = n_samples.div_ceil(PAIR_CHUNK);
    let chunks: Vec<Vec<u64>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c);
            let mut counts = vec![0u64; n_bins];
            let size = PAIR_CHUNK.min(n_samples - c * PAIR_CHUNK);
            for _ in 0..size {
                let e = sample_pair(&mut rng, e1, e2);
                let k = ((e / top * n_bins as f64) as usize).min(n_bins - 1);
                counts[k] += 1;
            }
            counts
        })
        .collect();
    let mut counts = vec![0u64; n_bins];
    for c in &chunks {
        for (t, v) in counts.iter_mut().zip(c) {
            *t += v;
        }
    }
    let n = n_samples as f64;
    let count_variance = counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n.max(1.0);
            n * p * (1.0 - p)
        })
        .collect();
    Ok(McHistogram {
        bin_edges: (0..=n_bins).map(|k| top * k as f64 / n_bins as f64).collect(),
        counts,
        n_samples,
        seed,
        count_variance,
    })
}

/// Integral of the flux-weighted kernel `√E f(e1, e2; E)` over each bin,
/// by composite Simpson on `sub` panels per bin.
pub fn kernel_bin_masses(e1: f64, e2: f64, bin_edges: &[f64], sub: usize) -> Result<Vec<f64>> {
    let sub = sub.max(2) & !1;
    let flux = |e: f64| -> Result<f64> {
        if e <= 0.0 {
            Ok(0.0)
        } else {
            Ok(e.sqrt() * kernel_f(e1, e2, e, 1.0)?)
        }
    };
    bin_edges
        .windows(2)
        .map(|w| {
            let h = (w[1] - w[0]) / sub as f64;
            let mut s = flux(w[0])? + flux(w[1])?;
            for i in 1..sub {
                s += if i % 2 == 1 { 4.0 } else { 2.0 } * flux(w[0] + i as f64 * h)?;
            }
            Ok(s * h / 3.0)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelComparison {
    pub z_scores: Vec<f64>,
    pub max_abs_z: f64,
    pub fraction_beyond_3sigma: f64,
}

/// Per-bin z-scores of a histogram against reference bin masses, after
/// normalizing the reference to the histogram's sample count.
pub fn compare_histogram_to_kernel(hist: &McHistogram, reference: &[f64]) -> Result<KernelComparison> {
    let total: u64 = hist.counts.iter().sum();
    if hist.n_samples == 0 || total == 0 {
        return Err(Error::Invalid("histogram is empty".into()));
    }
    if reference.len() != hist.n_bins() {
        return Err(Error::Shape(format!(
            "reference has {} bins, histogram {}",
            reference.len(),
            hist.n_bins()
        )));
    }
    let norm: f64 = reference.iter().sum();
    if norm.is_nan() || norm <= 0.0 || reference.iter().any(|r| *r < 0.0 || !r.is_finite()) {
        return Err(Error::Invalid("reference must be nonnegative with positive mass".into()));
    }
    let n = total as f64;
    let z_scores: Vec<f64> = hist
        .counts
        .iter()
        .zip(reference)
        .map(|(&c, r)| {
            let p = r / norm;
            let expected = n * p;
            let sigma = (n * p * (1.0 - p)).sqrt();
            if sigma > 0.0 {
                (c as f64 - expected) / sigma
            } else if c == 0 {
                0.0
            } else {
                f64::INFINITY
            }
        })
        .collect();
    let max_abs_z = z_scores.iter().map(|z| z.abs()).fold(0.0, f64::max);
    let beyond = z_scores.iter().filter(|z| z.abs() > 3.0).count();
    Ok(KernelComparison {
        fraction_beyond_3sigma: beyond as f64 / z_scores.len() as f64,
        max_abs_z,
        z_scores,
    })
}
