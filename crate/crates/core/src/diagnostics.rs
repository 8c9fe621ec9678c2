//! Observables computed from a solved field.
//!
//! Fluxes are speed-weighted densities, `J_E(z) = √E I_E(z)`, in units of
//! the incident flux.

use nalgebra::DMatrix;

use crate::collision::CollisionTables;
use crate::error::{Error, Result};
use crate::scenario::EnergyGrid;
use crate::solver::{collision_operator, SpectralField};

/// Below this thickness the slab has no diffusive interior worth fitting.
pub const BOUNDARY_DOMINATED_B: f64 = 10.0;

/// Fraction of the energy grid, counted from the top, used for the tail mass.
const TAIL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFlux {
    pub elastic: Vec<f64>,
    /// Same layout as the field's continuum: column `j` is depth node `j`.
    pub continuum: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluxProfile {
    pub z: Vec<f64>,
    pub j_total: Vec<f64>,
    pub j_el: Vec<f64>,
    pub j_inel: Vec<f64>,
    /// `None` where the inelastic flux vanishes.
    pub mb_dev: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConservationReport {
    /// `√E_i Γ_el + Σ w √E Γ_cc` per depth node.
    pub number_residual: Vec<f64>,
    /// `E_i √E_i Γ_el + Σ w E √E Γ_cc` per depth node.
    pub energy_residual: Vec<f64>,
    /// Gross collision number flux `√E_i |Γ_el| + Σ w √E |Γ_cc|` per depth node.
    pub number_scale: Vec<f64>,
    /// Gross collision energy flux per depth node.
    pub energy_scale: Vec<f64>,
    /// Largest negative value removed by clamping during the solve.
    pub max_clamp: f64,
    /// Inelastic flux carried by the top tenth of the energy grid, relative
    /// to the total inelastic flux, at each depth node.
    pub tail_mass: Vec<f64>,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num.abs() / den
    } else {
        num.abs()
    }
}

impl ConservationReport {
    pub fn max_number_relative(&self) -> f64 {
        self.number_residual
            .iter()
            .zip(&self.number_scale)
            .map(|(r, s)| ratio(*r, *s))
            .fold(0.0, f64::max)
    }

    pub fn max_energy_relative(&self) -> f64 {
        self.energy_residual
            .iter()
            .zip(&self.energy_scale)
            .map(|(r, s)| ratio(*r, *s))
            .fold(0.0, f64::max)
    }

    pub fn max_energy_absolute(&self) -> f64 {
        self.energy_residual.iter().map(|r| r.abs()).fold(0.0, f64::max)
    }

    pub fn max_tail_mass(&self) -> f64 {
        self.tail_mass.iter().copied().fold(0.0, f64::max)
    }
}

pub fn spectral_flux(field: &SpectralField, egrid: &EnergyGrid) -> SpectralFlux {
    let sqrt_ei = egrid.e_i.sqrt();
    let mut continuum = field.continuum.clone();
    for mut col in continuum.column_iter_mut() {
        for (v, e) in col.iter_mut().zip(&egrid.nodes) {
            *v *= e.sqrt();
        }
    }
    SpectralFlux {
        elastic: field.elastic.iter().map(|v| sqrt_ei * v).collect(),
        continuum,
    }
}

fn inelastic_flux(flux: &SpectralFlux, egrid: &EnergyGrid, j: usize) -> f64 {
    egrid.integrate(flux.continuum.column(j).iter().copied())
}

pub fn flux_split(field: &SpectralField, egrid: &EnergyGrid, z: &[f64]) -> Result<FluxProfile> {
    if z.len() != field.n_z() {
        return Err(Error::Shape(format!("{} depths for {} field nodes", z.len(), field.n_z())));
    }
    let flux = spectral_flux(field, egrid);
    let j_el = flux.elastic.clone();
    let j_inel: Vec<f64> = (0..field.n_z()).map(|j| inelastic_flux(&flux, egrid, j)).collect();
    let j_total = j_el.iter().zip(&j_inel).map(|(a, b)| a + b).collect();
    let mb_dev = (0..field.n_z()).map(|j| deviation_from_flux(&flux, egrid, j)).collect();
    Ok(FluxProfile {
        z: z.to_vec(),
        j_total,
        j_el,
        j_inel,
        mb_dev,
    })
}

/// Maxwell-Boltzmann flux distribution with mean energy `e_i`, normalized to one.
pub fn mb_flux_distribution(e: f64, e_i: f64) -> f64 {
    4.0 * e * (-2.0 * e / e_i).exp() / (e_i * e_i)
}

/// Unit-normalized inelastic flux spectrum at depth node `j`, or `None` if
/// the inelastic flux vanishes there.
pub fn normalized_inelastic_spectrum(field: &SpectralField, egrid: &EnergyGrid, j: usize) -> Option<Vec<f64>> {
    let flux = spectral_flux(field, egrid);
    normalized_column(&flux, egrid, j)
}

fn normalized_column(flux: &SpectralFlux, egrid: &EnergyGrid, j: usize) -> Option<Vec<f64>> {
    let total = inelastic_flux(flux, egrid, j);
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    Some(flux.continuum.column(j).iter().map(|v| v / total).collect())
}

fn deviation_from_flux(flux: &SpectralFlux, egrid: &EnergyGrid, j: usize) -> Option<f64> {
    let spectrum = normalized_column(flux, egrid, j)?;
    let sq = egrid.integrate(
        spectrum
            .iter()
            .zip(&egrid.nodes)
            .map(|(s, e)| (s - mb_flux_distribution(*e, egrid.e_i)).powi(2)),
    );
    Some((egrid.e_i * sq).sqrt())
}

/// `√(E_i ∫ (Ĵ_inel − J_MB)² dE)` on the unit-normalized inelastic spectrum.
pub fn mb_deviation(field: &SpectralField, egrid: &EnergyGrid, j: usize) -> Option<f64> {
    deviation_from_flux(&spectral_flux(field, egrid), egrid, j)
}

/// Flux spectrum left by a single collision of two incident particles,
/// `√E f(E_i, E_i; E)`, normalized to unit integral.
pub fn first_collision_spectrum(tables: &CollisionTables, egrid: &EnergyGrid) -> Vec<f64> {
    let raw: Vec<f64> = (0..egrid.len()).map(|m| egrid.nodes[m].sqrt() * tables.f_ei_ei(m)).collect();
    let total = egrid.integrate(raw.iter().copied());
    raw.iter().map(|v| v / total).collect()
}

/// Relative L² distance `‖a − b‖ / ‖b‖` under the grid quadrature.
pub fn relative_l2(a: &[f64], b: &[f64], egrid: &EnergyGrid) -> f64 {
    let diff = egrid.integrate(a.iter().zip(b).map(|(x, y)| (x - y).powi(2)));
    let norm = egrid.integrate(b.iter().map(|y| y * y));
    (diff / norm).sqrt()
}

pub fn conservation_audit(
    field: &SpectralField,
    tables: &CollisionTables,
    egrid: &EnergyGrid,
) -> Result<ConservationReport> {
    let gamma = collision_operator(field, tables, egrid)?;
    let ei = egrid.e_i;
    let sqrt_e: Vec<f64> = egrid.nodes.iter().map(|e| e.sqrt()).collect();
    let tail_start = egrid.len() - ((egrid.len() as f64 * TAIL_FRACTION).ceil() as usize).max(1);
    let mut report = ConservationReport::default();
    for j in 0..field.n_z() {
        let g = gamma.spectrum(j);
        let el = gamma.elastic[j];
        let w = &egrid.weights;
        let num = ei.sqrt() * el + (0..g.len()).map(|m| w[m] * sqrt_e[m] * g[m]).sum::<f64>();
        let num_scale = ei.sqrt() * el.abs() + (0..g.len()).map(|m| w[m] * sqrt_e[m] * g[m].abs()).sum::<f64>();
        let en = ei * ei.sqrt() * el
            + (0..g.len()).map(|m| w[m] * egrid.nodes[m] * sqrt_e[m] * g[m]).sum::<f64>();
        let en_scale = ei * ei.sqrt() * el.abs()
            + (0..g.len())
                .map(|m| w[m] * egrid.nodes[m] * sqrt_e[m] * g[m].abs())
                .sum::<f64>();
        report.number_residual.push(num);
        report.number_scale.push(num_scale);
        report.energy_residual.push(en);
        report.energy_scale.push(en_scale);

        let c = field.spectrum(j);
        let inel: f64 = (0..c.len()).map(|m| w[m] * sqrt_e[m] * c[m]).sum();
        let tail: f64 = (tail_start..c.len()).map(|m| w[m] * sqrt_e[m] * c[m]).sum();
        report.tail_mass.push(if inel > 0.0 { tail / inel } else { 0.0 });
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    /// Set for slabs too thin to have a diffusive interior.
    pub boundary_dominated: bool,
}

/// Least-squares line through `j_total` over the interior `z ∈ [0.1b, 0.9b]`.
pub fn linear_fit_interior(profile: &FluxProfile, b: f64) -> Result<LinearFit> {
    let (lo, hi) = (0.1 * b, 0.9 * b);
    let pts: Vec<(f64, f64)> = profile
        .z
        .iter()
        .zip(&profile.j_total)
        .filter(|(z, _)| **z >= lo && **z <= hi)
        .map(|(z, j)| (*z, *j))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Invalid(format!(
            "linear fit needs at least 3 interior nodes, found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mz = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let mj = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let szz: f64 = pts.iter().map(|p| (p.0 - mz).powi(2)).sum();
    let szj: f64 = pts.iter().map(|p| (p.0 - mz) * (p.1 - mj)).sum();
    let sjj: f64 = pts.iter().map(|p| (p.1 - mj).powi(2)).sum();
    let slope = szj / szz;
    let intercept = mj - slope * mz;
    let r_squared = if sjj > 0.0 { szj * szj / (szz * sjj) } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
        n_points: pts.len(),
        boundary_dominated: b < BOUNDARY_DOMINATED_B,
    })
}

/// Smallest depth beyond which the inelastic flux exceeds the elastic flux
/// everywhere, linearly interpolated between nodes.
pub fn crossover_depth(profile: &FluxProfile) -> Option<f64> {
    let d: Vec<f64> = profile.j_inel.iter().zip(&profile.j_el).map(|(i, e)| i - e).collect();
    let last = d.len().checked_sub(1)?;
    if d[last] <= 0.0 {
        return None;
    }
    let mut k = last;
    while k > 0 && d[k - 1] > 0.0 {
        k -= 1;
    }
    if k == 0 {
        return Some(profile.z[0]);
    }
    let (z0, z1) = (profile.z[k - 1], profile.z[k]);
    let t = -d[k - 1] / (d[k] - d[k - 1]);
    Some(z0 + t * (z1 - z0))
}
