//! Drivers behind the command-line subcommands.
//!
//! Each driver writes its tables into an output directory and returns a
//! summary; the binary maps summaries and errors onto exit codes.

use std::path::Path;

use crate::collision::{continuum_g, CollisionTables};
use crate::config::Config;
use crate::diagnostics::{
    crossover_depth, first_collision_spectrum, flux_split, linear_fit_interior, mb_flux_distribution,
    normalized_inelastic_spectrum, FluxProfile, LinearFit,
};
use crate::error::{Error, Result};
use crate::mc::{compare_histogram_to_kernel, kernel_bin_masses, mc_pair_collision, mc_slab_walk};
use crate::output::{ensure_dir, fmt_f64, fmt_opt, write_text, Table, VERSION};
use crate::scenario::{EnergyGrid, RegimeWarning, Scenario};
use crate::solver::{SolveResult, SpectralField, TransportProblem};

/// Exit codes shared by all subcommands.
pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_FAILED: i32 = 2;

/// Bins for the collision oracle histograms.
const PAIR_BINS: usize = 100;
/// Simpson panels per bin for the reference kernel masses.
const PAIR_PANELS: usize = 256;
/// Largest admissible fraction of bins beyond 3σ.
const PAIR_MAX_OUTLIERS: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct SolveSummary {
    pub converged: bool,
    pub iterations: usize,
    pub crossover: Option<f64>,
    pub final_mb_dev: Option<f64>,
    pub fit: Option<LinearFit>,
    pub warnings: Vec<RegimeWarning>,
    pub profile: FluxProfile,
}

impl SolveSummary {
    pub fn exit_code(&self) -> i32 {
        if self.converged {
            EXIT_OK
        } else {
            EXIT_FAILED
        }
    }
}

fn profile_table(profile: &FluxProfile) -> Table {
    let mut t = Table::new(&["z", "j_total", "j_el", "j_inel", "mb_dev"])
        .note("fluxes in units of the incident flux, depth in disorder mean free paths")
        .note("mb_dev uses the unit-normalized inelastic spectrum; nan where the inelastic flux vanishes");
    for j in 0..profile.z.len() {
        t.push(vec![
            fmt_f64(profile.z[j]),
            fmt_f64(profile.j_total[j]),
            fmt_f64(profile.j_el[j]),
            fmt_f64(profile.j_inel[j]),
            fmt_opt(profile.mb_dev[j]),
        ]);
    }
    t
}

fn spectrum_table(field: &SpectralField, problem: &TransportProblem, j: usize, requested: f64) -> Table {
    let egrid = &problem.egrid;
    let normalized = normalized_inelastic_spectrum(field, egrid, j);
    let first = first_collision_spectrum(&problem.tables, egrid);
    let mut t = Table::new(&["energy", "j_inel", "j_inel_normalized", "j_mb", "j_first_collision"])
        .note(format!("requested depth {}", fmt_f64(requested)))
        .note(format!("node depth {}", fmt_f64(problem.dgrid.nodes[j])));
    for (m, e) in egrid.nodes.iter().enumerate() {
        let alpha_free = problem.tables.alpha == 0.0;
        t.push(vec![
            fmt_f64(*e),
            fmt_f64(e.sqrt() * field.continuum_at(j, m)),
            fmt_opt(normalized.as_ref().map(|s| s[m])),
            fmt_f64(mb_flux_distribution(*e, egrid.e_i)),
            if alpha_free { "nan".into() } else { fmt_f64(first[m]) },
        ]);
    }
    t
}

fn conservation_table(result: &SolveResult, z: &[f64]) -> Table {
    let c = &result.conservation;
    let mut t = Table::new(&[
        "z",
        "number_residual",
        "number_scale",
        "energy_residual",
        "energy_scale",
        "tail_mass",
    ])
    .note("collision-operator flux balance of the returned field")
    .note(format!("max clamped magnitude {}", fmt_f64(c.max_clamp)));
    for (j, zj) in z.iter().enumerate() {
        t.push_floats(&[
            *zj,
            c.number_residual[j],
            c.number_scale[j],
            c.energy_residual[j],
            c.energy_scale[j],
            c.tail_mass[j],
        ]);
    }
    t
}

fn residual_table(result: &SolveResult) -> Table {
    let mut t = Table::new(&["iteration", "relative_change", "fixed_point_residual"]);
    for (k, (c, f)) in result
        .residual_history
        .iter()
        .zip(&result.fixed_point_history)
        .enumerate()
    {
        t.push(vec![(k + 1).to_string(), fmt_f64(*c), fmt_f64(*f)]);
    }
    t
}

fn manifest(command: &str, config: &Config, lines: &[String]) -> String {
    let mut s = format!("# slabtherm {VERSION}\n# command {command}\n");
    s.push_str(&config.render());
    for l in lines {
        s.push_str("# ");
        s.push_str(l);
        s.push('\n');
    }
    s
}

/// Depth node for a requested spectrum depth; `0` maps to the first cell.
fn spectrum_node(problem: &TransportProblem, z: f64) -> Result<usize> {
    if !(0.0..=problem.dgrid.b).contains(&z) {
        return Err(Error::config(
            "spectrum_depths",
            format!("depth {z} outside the slab [0, {}]", problem.dgrid.b),
        ));
    }
    Ok(problem.dgrid.cell_of(z))
}

fn write_outputs(
    command: &str,
    config: &Config,
    problem: &TransportProblem,
    result: &SolveResult,
    out: &Path,
) -> Result<SolveSummary> {
    ensure_dir(out)?;
    let z = &problem.dgrid.nodes;
    let profile = flux_split(&result.field, &problem.egrid, z)?;
    profile_table(&profile).write(&out.join("profile.csv"))?;
    for (k, depth) in config.resolved_spectrum_depths().into_iter().enumerate() {
        let j = spectrum_node(problem, depth)?;
        spectrum_table(&result.field, problem, j, depth).write(&out.join(format!("spectrum_{k}.csv")))?;
    }
    conservation_table(result, z).write(&out.join("conservation.csv"))?;
    residual_table(result).write(&out.join("residuals.csv"))?;

    let crossover = crossover_depth(&profile);
    let fit = linear_fit_interior(&profile, problem.dgrid.b).ok();
    let final_mb_dev = profile.mb_dev.last().copied().flatten();
    let warnings = problem.scenario.validate()?;
    let mut lines = vec![
        format!("converged {}", result.converged),
        format!("iterations {}", result.iterations),
        format!("krylov_iterations {}", result.krylov_iterations),
        format!("fixed_point_residual {}", fmt_f64(result.fixed_point_residual)),
        format!("clamped_entries {}", result.clamping.count),
        format!("clamped_max {}", fmt_f64(result.clamping.max_magnitude)),
        format!("number_residual_max_relative {}", fmt_f64(result.conservation.max_number_relative())),
        format!("energy_residual_max_relative {}", fmt_f64(result.conservation.max_energy_relative())),
        format!("tail_mass_max {}", fmt_f64(result.conservation.max_tail_mass())),
        format!("crossover_depth {}", fmt_opt(crossover)),
        format!("final_mb_dev {}", fmt_opt(final_mb_dev)),
        "mb_dev_convention unit-normalized inelastic spectrum".to_string(),
    ];
    if let Some(f) = &fit {
        lines.push(format!("fit_slope {}", fmt_f64(f.slope)));
        lines.push(format!("fit_intercept {}", fmt_f64(f.intercept)));
        lines.push(format!("fit_r_squared {}", fmt_f64(f.r_squared)));
        lines.push(format!("fit_boundary_dominated {}", f.boundary_dominated));
    }
    for w in &warnings {
        lines.push(format!("warning {w}"));
    }
    write_text(&out.join("manifest.txt"), &manifest(command, config, &lines))?;
    Ok(SolveSummary {
        converged: result.converged,
        iterations: result.iterations,
        crossover,
        final_mb_dev,
        fit,
        warnings,
        profile,
    })
}

/// Solves the interacting problem and writes profile, spectra,
/// conservation, residual history and manifest into `out`.
pub fn cmd_solve(config: &Config, out: &Path) -> Result<SolveSummary> {
    let (scenario, _) = Scenario::from_config(config)?;
    let problem = TransportProblem::new(&scenario)?;
    let result = problem.solve()?;
    write_outputs("solve", config, &problem, &result, out)
}

/// Same outputs as [`cmd_solve`] for the non-interacting problem.
pub fn cmd_linear(config: &Config, out: &Path) -> Result<SolveSummary> {
    let mut linear = config.clone();
    linear.alpha = 0.0;
    let (scenario, _) = Scenario::from_config(&linear)?;
    let problem = TransportProblem::new(&scenario)?;
    let field = problem.solve_linear();
    let (image, _) = problem.rhs(&field)?;
    let result = SolveResult {
        conservation: crate::diagnostics::conservation_audit(&field, &problem.tables, &problem.egrid)?,
        fixed_point_residual: field.max_abs_difference(&image) / field.sup_norm(),
        field,
        iterations: 0,
        residual_history: Vec::new(),
        fixed_point_history: Vec::new(),
        converged: true,
        clamping: Default::default(),
        krylov_iterations: 0,
    };
    write_outputs("linear", &linear, &problem, &result, out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Validator {
    Kernels,
    Walk,
    Collision,
}

impl std::str::FromStr for Validator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kernels" => Ok(Validator::Kernels),
            "walk" => Ok(Validator::Walk),
            "collision" => Ok(Validator::Collision),
            other => Err(Error::Invalid(format!(
                "unknown validator `{other}` (expected kernels, walk or collision)"
            ))),
        }
    }
}

impl Validator {
    pub fn as_str(&self) -> &'static str {
        match self {
            Validator::Kernels => "kernels",
            Validator::Walk => "walk",
            Validator::Collision => "collision",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub limit: f64,
}

impl Check {
    fn at_most(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            passed: value <= limit,
            value,
            limit,
        }
    }

    fn at_least(name: impl Into<String>, value: f64, limit: f64) -> Self {
        Check {
            name: name.into(),
            passed: value >= limit,
            value,
            limit,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub validator: Validator,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            EXIT_OK
        } else {
            EXIT_FAILED
        }
    }

    fn table(&self) -> Table {
        let mut t = Table::new(&["check", "passed", "value", "limit"]).note(format!("validator {}", self.validator.as_str()));
        for c in &self.checks {
            t.push(vec![c.name.clone(), c.passed.to_string(), fmt_f64(c.value), fmt_f64(c.limit)]);
        }
        t
    }
}

fn node(grid: &EnergyGrid, e: f64) -> Option<usize> {
    let k = (e / grid.delta).round();
    (k >= 1.0 && (k * grid.delta - e).abs() < 1e-12 && (k as usize) <= grid.len()).then(|| k as usize - 1)
}

fn kernel_checks(config: &Config) -> Result<Vec<Check>> {
    let (scenario, _) = Scenario::from_config(config)?;
    // Kernel shapes are alpha-independent; use unit strength when the run is linear.
    let alpha = if scenario.alpha > 0.0 { scenario.alpha } else { 1.0 };
    let grid = scenario.energy_grid()?;
    let fine = EnergyGrid::new(scenario.e_max, 2 * scenario.n_e, scenario.e_i)?;
    let t = CollisionTables::new(&grid, alpha);
    let tf = CollisionTables::new(&fine, alpha);
    let n = grid.len();
    let mut checks = Vec::new();

    let mut sum_rule: f64 = 0.0;
    let mut symmetry: f64 = 0.0;
    let mut reflection: f64 = 0.0;
    let mut energy_rule: f64 = 0.0;
    for a in 0..n {
        for b in 0..n {
            let gross: f64 = (0..n).map(|m| grid.weights[m] * grid.nodes[m].sqrt() * t.f(a, b, m)).sum();
            let bal = gross + grid.nodes[b].sqrt() * t.g(a, b);
            sum_rule = sum_rule.max(bal.abs() / gross.max(f64::MIN_POSITIVE));
            if a + b + 2 <= n {
                let ge = t.g_from_energy_rule(&grid, a, b);
                energy_rule = energy_rule.max((ge - t.g(a, b)).abs() / t.g(a, b).abs());
            }
            for m in (0..n).step_by(7) {
                symmetry = symmetry.max((t.f(a, b, m) - t.f(b, a, m)).abs());
                // √E f is reflection symmetric about the pair's mean energy.
                let mirror = a + b + 1;
                if mirror > m && mirror - m - 1 < n {
                    let r = mirror - m - 1;
                    let lhs = grid.nodes[m].sqrt() * t.f(a, b, m);
                    let rhs = grid.nodes[r].sqrt() * t.f(a, b, r);
                    reflection = reflection.max((lhs - rhs).abs() / alpha);
                }
            }
        }
    }
    checks.push(Check::at_most("number_sum_rule_relative", sum_rule, 1e-12));
    checks.push(Check::at_most("energy_sum_rule_relative", energy_rule, 1e-12));
    checks.push(Check::at_most("pair_symmetry", symmetry, 0.0));
    checks.push(Check::at_most("flux_reflection_symmetry", reflection, 1e-14));

    for (partner, target) in [(1.0, 1.0), (2.0, 1.0)] {
        let (Some(a), Some(b), Some(af), Some(bf)) =
            (node(&grid, partner), node(&grid, target), node(&fine, partner), node(&fine, target))
        else {
            continue;
        };
        let want = continuum_g(partner, target, alpha);
        let coarse = (t.g(a, b) - want).abs() / want.abs();
        let refined = (tf.g(af, bf) - want).abs() / want.abs();
        checks.push(Check::at_most(format!("g({partner};{target})_relative_error"), coarse, 1e-2));
        checks.push(Check::at_least(
            format!("g({partner};{target})_observed_order"),
            (coarse / refined).log2(),
            1.4,
        ));
    }
    Ok(checks)
}

fn walk_checks(config: &Config, out: &Path) -> Result<Vec<Check>> {
    let mut linear = config.clone();
    linear.alpha = 0.0;
    let (scenario, _) = Scenario::from_config(&linear)?;
    let problem = TransportProblem::new(&scenario)?;
    let field = problem.solve_linear();
    let transmission = problem.propagator.transmission(&field.elastic);
    let reflection = problem.propagator.reflection(&field.elastic);
    let walk = mc_slab_walk(scenario.b, scenario.n_z, config.n_walkers, config.seed)?;

    let density = walk.collisions.density();
    let errors = walk.collisions.density_std_errors();
    let mut t = Table::new(&["z", "mc_density", "mc_std_error", "solver_density"])
        .note(format!("walkers {} seed {}", walk.n_walkers, walk.collisions.seed))
        .note(format!(
            "transmitted {} +- {} solver {}",
            fmt_f64(walk.transmitted_fraction()),
            fmt_f64(walk.transmitted_std_error()),
            fmt_f64(transmission)
        ))
        .note(format!(
            "reflected {} +- {} solver {}",
            fmt_f64(walk.reflected_fraction()),
            fmt_f64(walk.reflected_std_error()),
            fmt_f64(reflection)
        ));
    for j in 0..density.len() {
        t.push_floats(&[problem.dgrid.nodes[j], density[j], errors[j], field.elastic[j]]);
    }
    t.write(&out.join("walk.csv"))?;

    let z_t = (transmission - walk.transmitted_fraction()).abs() / walk.transmitted_std_error();
    Ok(vec![Check::at_most("transmission_z_score", z_t, 3.0)])
}

fn collision_checks(config: &Config, out: &Path) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for (k, &(e1, e2)) in config.pairs.iter().enumerate() {
        let hist = mc_pair_collision(e1, e2, PAIR_BINS, config.n_samples, config.seed)?;
        let masses = kernel_bin_masses(e1, e2, &hist.bin_edges, PAIR_PANELS)?;
        let cmp = compare_histogram_to_kernel(&hist, &masses)?;
        let total: f64 = masses.iter().sum();
        let mut t = Table::new(&["energy", "count", "expected", "z_score"])
            .note(format!("pair {e1}:{e2} samples {} seed {}", hist.n_samples, hist.seed));
        for (b, c) in hist.centers().iter().enumerate() {
            t.push(vec![
                fmt_f64(*c),
                hist.counts[b].to_string(),
                fmt_f64(masses[b] / total * hist.n_samples as f64),
                fmt_f64(cmp.z_scores[b]),
            ]);
        }
        t.write(&out.join(format!("collision_{k}.csv")))?;
        checks.push(Check::at_most(
            format!("pair({e1},{e2})_fraction_beyond_3sigma"),
            cmp.fraction_beyond_3sigma,
            PAIR_MAX_OUTLIERS,
        ));
    }
    Ok(checks)
}

/// Runs one family of cross-checks and writes its report into `out`.
pub fn cmd_validate(which: Validator, config: &Config, out: &Path) -> Result<ValidationReport> {
    ensure_dir(out)?;
    let checks = match which {
        Validator::Kernels => kernel_checks(config)?,
        Validator::Walk => walk_checks(config, out)?,
        Validator::Collision => collision_checks(config, out)?,
    };
    let report = ValidationReport { validator: which, checks };
    report.table().write(&out.join(format!("validate_{}.csv", which.as_str())))?;
    write_text(
        &out.join("manifest.txt"),
        &manifest(&format!("validate {}", which.as_str()), config, &[format!("passed {}", report.passed())]),
    )?;
    Ok(report)
}

/// Keys that `cmd_scan` can vary.
pub const SCAN_KEYS: [&str; 7] = ["b", "alpha", "e_max", "n_e", "n_z", "damping", "tol"];

#[derive(Debug, Clone)]
pub struct ScanRow {
    pub value: f64,
    pub b: f64,
    pub alpha: f64,
    pub summary: SolveSummary,
}

/// Solves once per value of `param`, each run in its own subdirectory, and
/// writes `scan.csv`. With `fixed_collisions`, scanning `b` rescales alpha
/// so that `alpha b²` keeps the value of the base configuration.
pub fn cmd_scan(param: &str, values: &[f64], config: &Config, out: &Path, fixed_collisions: bool) -> Result<Vec<ScanRow>> {
    if !SCAN_KEYS.contains(&param) {
        return Err(Error::Invalid(format!(
            "cannot scan `{param}` (expected one of {})",
            SCAN_KEYS.join(", ")
        )));
    }
    if values.is_empty() {
        return Err(Error::Invalid("scan needs at least one value".into()));
    }
    if fixed_collisions && param != "b" {
        return Err(Error::Invalid("fixed collision number only applies to a scan over b".into()));
    }
    ensure_dir(out)?;
    let collisions = config.alpha * config.b * config.b;
    let mut rows = Vec::new();
    for (k, &value) in values.iter().enumerate() {
        let mut run = config.clone();
        run.set(param, &value.to_string())?;
        if fixed_collisions {
            run.alpha = collisions / (run.b * run.b);
        }
        let summary = cmd_solve(&run, &out.join(format!("{param}_{k}")))?;
        rows.push(ScanRow {
            value,
            b: run.b,
            alpha: run.alpha,
            summary,
        });
    }
    let mut t = Table::new(&["value", "b", "alpha", "crossover_depth", "final_mb_dev", "slope", "converged"])
        .note(format!("scan over {param}{}", if fixed_collisions { " at fixed alpha b^2" } else { "" }));
    for r in &rows {
        t.push(vec![
            fmt_f64(r.value),
            fmt_f64(r.b),
            fmt_f64(r.alpha),
            fmt_opt(r.summary.crossover),
            fmt_opt(r.summary.final_mb_dev),
            fmt_opt(r.summary.fit.map(|f| f.slope)),
            r.summary.converged.to_string(),
        ]);
    }
    t.write(&out.join("scan.csv"))?;
    Ok(rows)
}
