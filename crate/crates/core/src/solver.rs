//! Stationary solution of the energy-resolved nonlinear transport equation
//!
//! ```text
//! I_E(z) = s(z) δ(E - E_i) + ∫ K(z, z') I_E(z') dz'
//!        + ∫ dE1 [ g(E1; E) I_E(z) + ∫ dE2 f(E1, E2; E) I_E2(z) ] I_E1(z)
//! ```
//!
//! The delta-line at the incident energy is carried as a separate elastic
//! amplitude, the rest of the spectrum as a continuum on the energy grid.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::collision::CollisionTables;
use crate::diagnostics::{conservation_audit, ConservationReport};
use crate::error::{Error, Result};
use crate::krylov::{gmres, KrylovVector};
use crate::propagator::{ballistic_source, PropagatorMatrix};
use crate::scenario::{DepthGrid, EnergyGrid, Scenario, Scheme};

/// Disorder-averaged density split into the elastic line and the inelastic continuum.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    /// Coefficient of `δ(E - E_i)` per depth node (units of the incident density).
    pub elastic: DVector<f64>,
    /// Inelastic density per unit energy; column `j` is the spectrum at depth node `j`.
    pub continuum: DMatrix<f64>,
}

impl SpectralField {
    pub fn zeros(n_z: usize, n_e: usize) -> Self {
        SpectralField {
            elastic: DVector::zeros(n_z),
            continuum: DMatrix::zeros(n_e, n_z),
        }
    }

    pub fn n_z(&self) -> usize {
        self.elastic.len()
    }

    pub fn n_e(&self) -> usize {
        self.continuum.nrows()
    }

    /// Inelastic density at depth node `j`, energy node `m`.
    pub fn continuum_at(&self, j: usize, m: usize) -> f64 {
        self.continuum[(m, j)]
    }

    pub fn spectrum(&self, j: usize) -> &[f64] {
        let n = self.n_e();
        &self.continuum.as_slice()[j * n..(j + 1) * n]
    }

    pub fn sup_norm(&self) -> f64 {
        self.elastic.amax().max(self.continuum.amax())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.elastic.iter().chain(self.continuum.iter()).all(|v| v.is_finite() && *v >= 0.0)
    }

    fn check_shape(&self, n_z: usize, n_e: usize) -> Result<()> {
        if self.n_z() != n_z || self.n_e() != n_e || self.continuum.ncols() != n_z {
            return Err(Error::Shape(format!(
                "field is {}x{} (depth x energy), expected {n_z}x{n_e}",
                self.n_z(),
                self.n_e()
            )));
        }
        Ok(())
    }

    /// Sets negative entries to zero and reports what was removed.
    fn clamp_negative(&mut self) -> ClampStats {
        let mut stats = ClampStats::default();
        for v in self.elastic.iter_mut().chain(self.continuum.iter_mut()) {
            if *v < 0.0 {
                stats.count += 1;
                stats.max_magnitude = stats.max_magnitude.max(-*v);
                *v = 0.0;
            }
        }
        stats
    }

    /// Largest absolute entrywise difference between two fields.
    pub fn max_abs_difference(&self, other: &Self) -> f64 {
        let el = self
            .elastic
            .iter()
            .zip(other.elastic.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        self.continuum
            .iter()
            .zip(other.continuum.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(el, f64::max)
    }
}

impl KrylovVector for SpectralField {
    fn dot(&self, other: &Self) -> f64 {
        self.elastic.dot(&other.elastic) + self.continuum.dot(&other.continuum)
    }

    fn axpy(&mut self, a: f64, x: &Self) {
        self.elastic.axpy(a, &x.elastic, 1.0);
        for (v, w) in self.continuum.iter_mut().zip(x.continuum.iter()) {
            *v += a * w;
        }
    }

    fn scale(&mut self, a: f64) {
        self.elastic *= a;
        self.continuum *= a;
    }

    fn zeros_like(&self) -> Self {
        SpectralField::zeros(self.n_z(), self.n_e())
    }
}

/// Negative entries removed from an iterate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClampStats {
    pub count: usize,
    pub max_magnitude: f64,
}

impl ClampStats {
    fn merge(&mut self, other: ClampStats) {
        self.count += other.count;
        self.max_magnitude = self.max_magnitude.max(other.max_magnitude);
    }
}

/// Quadrature-weighted partner density per depth: the continuum times the
/// energy weights, plus the elastic line as a point mass on the `E_i` node.
fn partner_density(field: &SpectralField, tables: &CollisionTables, weights: &[f64]) -> DMatrix<f64> {
    let mut y = field.continuum.clone();
    for (mut col, el) in y.column_iter_mut().zip(field.elastic.iter()) {
        for (v, w) in col.iter_mut().zip(weights) {
            *v *= w;
        }
        col[tables.ei_index()] += el;
    }
    y
}

/// Collision increment `Γ[I]`: loss through `g` on every component, gain
/// through `f` on the continuum.
///
/// Writing `y` for the weighted partner density, per depth node
/// `Γ_el = I_el Σ_n g(E_n; E_i) y_n` and
/// `Γ_cc(m) = Ĩ_m Σ_n g(E_n; E_m) y_n + Σ_{n,p} f(E_n, E_p; E_m) y_n y_p`.
/// Expanding `y` recovers the elastic-elastic, the mixed (with its factor 2)
/// and the continuum-continuum gain terms separately.
pub fn collision_operator(
    field: &SpectralField,
    tables: &CollisionTables,
    egrid: &EnergyGrid,
) -> Result<SpectralField> {
    let n_e = tables.len();
    field.check_shape(field.n_z(), n_e)?;
    if egrid.len() != n_e {
        return Err(Error::Shape(format!(
            "tables hold {n_e} energy nodes, grid has {}",
            egrid.len()
        )));
    }
    let y = partner_density(field, tables, &egrid.weights);
    let loss = tables.g_transposed() * &y;
    let mut out = SpectralField::zeros(field.n_z(), n_e);
    let ei = tables.ei_index();
    for (j, o) in out.elastic.iter_mut().enumerate() {
        *o = field.elastic[j] * loss[(ei, j)];
    }
    let y_data = y.as_slice();
    let loss_data = loss.as_slice();
    let cont = field.continuum.as_slice();
    out.continuum
        .as_mut_slice()
        .par_chunks_mut(n_e)
        .enumerate()
        .for_each(|(j, col)| {
            let range = j * n_e..(j + 1) * n_e;
            let yj = &y_data[range.clone()];
            tables.gain(yj, yj, col).expect("column length matches tables");
            for ((o, c), l) in col.iter_mut().zip(&cont[range.clone()]).zip(&loss_data[range]) {
                *o += c * l;
            }
        });
    Ok(out)
}

/// Linearization of the collision operator around a fixed field.
struct CollisionJacobian<'a> {
    field: &'a SpectralField,
    y: DMatrix<f64>,
    loss: DMatrix<f64>,
    tables: &'a CollisionTables,
    weights: &'a [f64],
}

impl<'a> CollisionJacobian<'a> {
    fn new(field: &'a SpectralField, tables: &'a CollisionTables, weights: &'a [f64]) -> Self {
        let y = partner_density(field, tables, weights);
        let loss = tables.g_transposed() * &y;
        CollisionJacobian {
            field,
            y,
            loss,
            tables,
            weights,
        }
    }

    fn apply(&self, v: &SpectralField) -> SpectralField {
        let n_e = self.tables.len();
        let yv = partner_density(v, self.tables, self.weights);
        let loss_v = self.tables.g_transposed() * &yv;
        let ei = self.tables.ei_index();
        let mut out = SpectralField::zeros(v.n_z(), n_e);
        for j in 0..v.n_z() {
            out.elastic[j] = v.elastic[j] * self.loss[(ei, j)] + self.field.elastic[j] * loss_v[(ei, j)];
        }
        let (y, yv, l, lv) = (self.y.as_slice(), yv.as_slice(), self.loss.as_slice(), loss_v.as_slice());
        let (c, cv) = (self.field.continuum.as_slice(), v.continuum.as_slice());
        out.continuum
            .as_mut_slice()
            .par_chunks_mut(n_e)
            .enumerate()
            .for_each(|(j, col)| {
                let r = j * n_e..(j + 1) * n_e;
                self.tables
                    .gain(&y[r.clone()], &yv[r.clone()], col)
                    .expect("column length matches tables");
                for (i, o) in r.clone().zip(col.iter_mut()) {
                    *o = 2.0 * *o + cv[i] * l[i] + c[i] * lv[i];
                }
            });
        out
    }
}

/// One sweep of the fixed-point map without clamping:
/// `F[I] = source + K I + Γ[I]`.
fn apply_rhs(
    field: &SpectralField,
    propagator: &PropagatorMatrix,
    source: &DVector<f64>,
    tables: &CollisionTables,
    egrid: &EnergyGrid,
) -> Result<SpectralField> {
    let n_z = propagator.len();
    field.check_shape(n_z, tables.len())?;
    if source.len() != n_z {
        return Err(Error::Shape(format!("source has {} nodes, grid {n_z}", source.len())));
    }
    let mut out = if tables.alpha == 0.0 {
        SpectralField::zeros(n_z, tables.len())
    } else {
        collision_operator(field, tables, egrid)?
    };
    out.elastic += source;
    out.elastic.gemv(1.0, &propagator.k, &field.elastic, 1.0);
    // K is symmetric: propagating every energy row is C K.
    out.continuum.gemm(1.0, &field.continuum, &propagator.k, 1.0);
    Ok(out)
}

/// Right-hand side of the fixed-point form, `F[I] = source + K I + Γ[I]`,
/// with negative entries clamped to zero.
pub fn transport_rhs(
    field: &SpectralField,
    propagator: &PropagatorMatrix,
    source: &DVector<f64>,
    tables: &CollisionTables,
    egrid: &EnergyGrid,
) -> Result<(SpectralField, ClampStats)> {
    let mut out = apply_rhs(field, propagator, source, tables, egrid)?;
    let clamp = out.clamp_negative();
    Ok((out, clamp))
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub field: SpectralField,
    /// Number of updates applied after the linear initial guess.
    pub iterations: usize,
    /// Relative sup-norm change of each update.
    pub residual_history: Vec<f64>,
    /// Relative fixed-point residual `|I - F[I]|_sup / |I|_sup` after each update.
    pub fixed_point_history: Vec<f64>,
    /// Relative fixed-point residual of the returned field.
    pub fixed_point_residual: f64,
    pub converged: bool,
    pub clamping: ClampStats,
    pub krylov_iterations: usize,
    pub conservation: ConservationReport,
}

impl SolveResult {
    /// True once collisions have fed any inelastic density.
    pub fn continuum_is_populated(&self) -> bool {
        self.field.continuum.iter().any(|v| *v > 0.0)
    }
}

/// Everything the solver needs, built once per scenario.
#[derive(Debug, Clone)]
pub struct TransportProblem {
    pub scenario: Scenario,
    pub egrid: EnergyGrid,
    pub dgrid: DepthGrid,
    pub propagator: PropagatorMatrix,
    pub tables: CollisionTables,
    pub source: DVector<f64>,
}

impl TransportProblem {
    pub fn new(scenario: &Scenario) -> Result<Self> {
        scenario.validate()?;
        let egrid = scenario.energy_grid()?;
        let dgrid = scenario.depth_grid()?;
        let propagator = PropagatorMatrix::new(&dgrid);
        let tables = CollisionTables::new(&egrid, scenario.alpha);
        let source = ballistic_source(&dgrid);
        Ok(TransportProblem {
            scenario: scenario.clone(),
            egrid,
            dgrid,
            propagator,
            tables,
            source,
        })
    }

    pub fn solve_linear(&self) -> SpectralField {
        solve_linear(&self.propagator, &self.source, &self.egrid)
    }

    pub fn solve(&self) -> Result<SolveResult> {
        solve_stationary(&self.scenario, &self.propagator, &self.source, &self.tables, &self.egrid)
    }

    pub fn rhs(&self, field: &SpectralField) -> Result<(SpectralField, ClampStats)> {
        transport_rhs(field, &self.propagator, &self.source, &self.tables, &self.egrid)
    }
}

/// Non-interacting solution: the elastic line solves `(1 - K) I = source`
/// exactly and the continuum stays empty.
pub fn solve_linear(propagator: &PropagatorMatrix, source: &DVector<f64>, egrid: &EnergyGrid) -> SpectralField {
    let n_z = propagator.len();
    let a = DMatrix::identity(n_z, n_z) - &propagator.k;
    let chol = a
        .cholesky()
        .expect("1 - K is positive definite when every row sum is below one");
    let mut field = SpectralField::zeros(n_z, egrid.len());
    field.elastic = chol.solve(source);
    field
}

fn relative_fixed_point_residual(field: &SpectralField, image: &SpectralField) -> f64 {
    let scale = field.sup_norm();
    if scale == 0.0 {
        image.sup_norm()
    } else {
        field.max_abs_difference(image) / scale
    }
}

/// Solves for the stationary field starting from the linear solution.
///
/// Non-convergence is reported through `SolveResult::converged`, not as an error.
pub fn solve_stationary(
    scenario: &Scenario,
    propagator: &PropagatorMatrix,
    source: &DVector<f64>,
    tables: &CollisionTables,
    egrid: &EnergyGrid,
) -> Result<SolveResult> {
    let mut field = solve_linear(propagator, source, egrid);
    let mut image = apply_rhs(&field, propagator, source, tables, egrid)?;
    let mut result = SolveResult {
        fixed_point_residual: relative_fixed_point_residual(&field, &image),
        field: SpectralField::zeros(0, 0),
        iterations: 0,
        residual_history: Vec::new(),
        fixed_point_history: Vec::new(),
        converged: false,
        clamping: ClampStats::default(),
        krylov_iterations: 0,
        conservation: ConservationReport::default(),
    };
    result.converged = result.fixed_point_residual <= scenario.tol;

    if !result.converged {
        match scenario.scheme {
            Scheme::Source => source_iteration(scenario, propagator, source, tables, egrid, &mut field, &mut result)?,
            Scheme::Newton => newton_krylov(
                scenario, propagator, source, tables, egrid, &mut field, &mut image, &mut result,
            )?,
        }
    }
    result.conservation = conservation_audit(&field, tables, egrid)?;
    result.conservation.max_clamp = result.clamping.max_magnitude;
    result.field = field;
    Ok(result)
}

fn source_iteration(
    scenario: &Scenario,
    propagator: &PropagatorMatrix,
    source: &DVector<f64>,
    tables: &CollisionTables,
    egrid: &EnergyGrid,
    field: &mut SpectralField,
    result: &mut SolveResult,
) -> Result<()> {
    let theta = scenario.damping;
    for _ in 0..scenario.max_iter {
        let (image, clamp) = transport_rhs(field, propagator, source, tables, egrid)?;
        result.clamping.merge(clamp);
        result.fixed_point_residual = relative_fixed_point_residual(field, &image);
        let mut next = field.clone();
        next.scale(1.0 - theta);
        next.axpy(theta, &image);
        let change = next.max_abs_difference(field) / next.sup_norm().max(f64::MIN_POSITIVE);
        *field = next;
        result.iterations += 1;
        result.residual_history.push(change);
        result.fixed_point_history.push(result.fixed_point_residual);
        if change <= scenario.tol {
            result.converged = true;
            let image = apply_rhs(field, propagator, source, tables, egrid)?;
            result.fixed_point_residual = relative_fixed_point_residual(field, &image);
            break;
        }
    }
    Ok(())
}

const KRYLOV_RESTART: usize = 80;
const KRYLOV_MAX_ITER: usize = 400;
const MAX_BACKTRACKS: usize = 12;

#[allow(clippy::too_many_arguments)]
fn newton_krylov(
    scenario: &Scenario,
    propagator: &PropagatorMatrix,
    source: &DVector<f64>,
    tables: &CollisionTables,
    egrid: &EnergyGrid,
    field: &mut SpectralField,
    image: &mut SpectralField,
    result: &mut SolveResult,
) -> Result<()> {
    // (1 - K)^{-1}: the exact inverse of the linear transport operator is
    // the preconditioner, so the Krylov solver only sees the collision part.
    let inverse = propagator.transport_inverse();
    let precondition = |z: &SpectralField| {
        let mut out = z.zeros_like();
        out.elastic.gemv(1.0, &inverse, &z.elastic, 0.0);
        out.continuum.gemm(1.0, &z.continuum, &inverse, 0.0);
        out
    };

    let mut residual = field.clone();
    residual.axpy(-1.0, image);
    let initial_norm = residual.norm();

    for _ in 0..scenario.max_iter {
        let norm = residual.norm();
        let forcing = (norm / initial_norm).sqrt().min(1e-3);
        let jacobian = CollisionJacobian::new(field, tables, &egrid.weights);
        let mut rhs = residual.clone();
        rhs.scale(-1.0);
        // J (1-K)^{-1} z = z - Γ'[(1-K)^{-1} z]
        let outcome = gmres(
            |z: &SpectralField| {
                let mut out = z.clone();
                out.axpy(-1.0, &jacobian.apply(&precondition(z)));
                out
            },
            &rhs,
            forcing,
            KRYLOV_RESTART,
            KRYLOV_MAX_ITER,
        );
        result.krylov_iterations += outcome.iterations;
        let step = precondition(&outcome.x);

        let mut theta = scenario.damping;
        let mut accepted = None;
        for attempt in 0..=MAX_BACKTRACKS {
            let mut trial = field.clone();
            trial.axpy(theta, &step);
            let clamp = trial.clamp_negative();
            let trial_image = apply_rhs(&trial, propagator, source, tables, egrid)?;
            let mut trial_residual = trial.clone();
            trial_residual.axpy(-1.0, &trial_image);
            let sufficient = trial_residual.norm() <= (1.0 - 1e-4 * theta) * norm;
            if sufficient || attempt == MAX_BACKTRACKS {
                accepted = Some((trial, trial_image, trial_residual, clamp));
                break;
            }
            theta *= 0.5;
        }
        let (next, next_image, next_residual, clamp) = accepted.expect("loop always accepts");
        result.clamping.merge(clamp);

        let change = next.max_abs_difference(field) / next.sup_norm().max(f64::MIN_POSITIVE);
        *field = next;
        *image = next_image;
        residual = next_residual;
        result.iterations += 1;
        result.fixed_point_residual = relative_fixed_point_residual(field, image);
        result.residual_history.push(change);
        result.fixed_point_history.push(result.fixed_point_residual);
        if change <= scenario.tol && result.fixed_point_residual <= scenario.tol {
            result.converged = true;
            break;
        }
    }
    Ok(())
}
