//! End-to-end properties of the stationary solution.

use slabtherm::diagnostics::{
    crossover_depth, first_collision_spectrum, flux_split, linear_fit_interior, mb_deviation, mb_flux_distribution,
    FluxProfile,
};
use slabtherm::solver::collision_operator;
use slabtherm::{Scenario, Scheme, SolveResult, TransportProblem};

fn run(b: f64, alpha: f64) -> (TransportProblem, SolveResult, FluxProfile) {
    let p = TransportProblem::new(&Scenario::new(b, alpha)).unwrap();
    let r = p.solve().unwrap();
    let prof = flux_split(&r.field, &p.egrid, &p.dgrid.nodes).unwrap();
    (p, r, prof)
}

#[test]
fn interacting_slab_keeps_linear_flux_and_thermalizes() {
    let (p, r, prof) = run(50.0, 0.004);
    assert!(r.converged);
    assert!(r.field.is_nonnegative());
    assert!(r.fixed_point_residual <= p.scenario.tol);
    assert!(r.continuum_is_populated());

    let lin = p.solve_linear();
    let lin_prof = flux_split(&lin, &p.egrid, &p.dgrid.nodes).unwrap();
    for j in 0..prof.z.len() {
        // collisions only deplete the elastic line
        assert!(r.field.elastic[j] <= lin.elastic[j]);
        assert!((prof.j_total[j] - lin_prof.j_total[j]).abs() <= 1e-9 * lin_prof.j_total[0]);
    }

    let fit = linear_fit_interior(&prof, 50.0).unwrap();
    let lin_fit = linear_fit_interior(&lin_prof, 50.0).unwrap();
    assert!(lin_fit.r_squared >= 0.999);
    assert!((fit.slope - lin_fit.slope).abs() <= 0.01 * lin_fit.slope.abs());

    let z_star = crossover_depth(&prof).unwrap();
    assert!(z_star > 0.0 && z_star < 50.0 / 3.0);

    // Beyond the first quarter the deviation from equilibrium only shrinks.
    let dev: Vec<f64> = prof.mb_dev.iter().map(|d| d.unwrap()).collect();
    for j in 0..dev.len() - 1 {
        if prof.z[j] >= 12.5 {
            assert!(dev[j + 1] <= dev[j] * (1.0 + 1e-3), "z = {}", prof.z[j]);
        }
    }

    // The single-collision spectrum is further from equilibrium than any
    // spectrum inside the slab.
    let first = first_collision_spectrum(&p.tables, &p.egrid);
    let first_dev = (p.egrid.e_i
        * p.egrid.integrate(
            first
                .iter()
                .zip(&p.egrid.nodes)
                .map(|(s, e)| (s - mb_flux_distribution(*e, 1.0)).powi(2)),
        ))
    .sqrt();
    assert!(first_dev > 0.0);
    assert!(dev.iter().all(|d| *d < first_dev));

    let c = &r.conservation;
    assert!(c.max_number_relative() <= 1e-12);
    // Equilibrium share of the top tenth of the grid, [5.4, 6].
    let mb_share = {
        let cdf = |e: f64| 1.0 - (1.0 + 2.0 * e) * (-2.0 * e).exp();
        (cdf(6.0) - cdf(5.4)) / cdf(6.0)
    };
    assert!(c.max_tail_mass() <= 1.1 * mb_share, "{} vs {mb_share}", c.max_tail_mass());
}

#[test]
fn linear_slab_is_ohmic_and_bitwise_equal_to_stationary() {
    let (p, r, prof) = run(50.0, 0.0);
    assert_eq!(r.iterations, 0);
    assert_eq!(r.field, p.solve_linear());
    assert!(prof.j_inel.iter().all(|v| *v == 0.0));
    let fit = linear_fit_interior(&prof, 50.0).unwrap();
    assert!(fit.r_squared >= 0.999);
    assert!(fit.slope < 0.0);
}

#[test]
fn collision_operator_conserves_number_flux_at_solution() {
    let (p, r, _) = run(20.0, 0.025);
    let g = collision_operator(&r.field, &p.tables, &p.egrid).unwrap();
    for j in 0..p.dgrid.len() {
        let net = g.elastic[j]
            + p.egrid
                .integrate(g.spectrum(j).iter().zip(&p.egrid.nodes).map(|(v, e)| v * e.sqrt()));
        assert!(net.abs() <= 1e-12 * r.conservation.number_scale[j].max(1e-300));
    }
}

#[test]
fn fixed_point_is_independent_of_damping_and_scheme() {
    let mut s = Scenario::new(12.0, 0.03);
    s.n_z = 60;
    s.n_e = 96;
    let full = TransportProblem::new(&s).unwrap().solve().unwrap();
    s.damping = 0.5;
    let half = TransportProblem::new(&s).unwrap().solve().unwrap();
    s.damping = 1.0;
    s.scheme = Scheme::Source;
    let source = TransportProblem::new(&s).unwrap().solve().unwrap();
    assert!(full.converged && half.converged && source.converged);
    let scale = full.field.sup_norm();
    assert!(full.field.max_abs_difference(&half.field) <= 10.0 * s.tol * scale);
    assert!(full.field.max_abs_difference(&source.field) <= 1e-8 * scale);
    // damping moves the iterates, not the conservation numbers
    assert!(half.conservation.max_number_relative() <= 1e-12);
}

#[test]
fn stronger_interaction_thermalizes_further() {
    let mut last = f64::INFINITY;
    for alpha in [0.001, 0.004, 0.01] {
        let (p, r, _) = run(50.0, alpha);
        let d = mb_deviation(&r.field, &p.egrid, p.dgrid.len() - 1).unwrap();
        assert!(d < last, "alpha {alpha}: {d} !< {last}");
        last = d;
    }
}
