//! Dimensionless problem definition and discretization grids.
//!
//! Units are fixed once for the whole crate: lengths in disorder mean free
//! paths, energies in the incident energy, densities in the incident
//! density. With these units the collision kernels carry a single
//! prefactor, the interaction ratio `alpha = l_dis / l_int`.

use std::fmt;

use crate::config::Config;
use crate::error::{Error, Result};

/// Iteration scheme used by the stationary solver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    /// Jacobian-free Newton-Krylov on the fixed-point residual, preconditioned
    /// by the exact linear transport inverse.
    #[default]
    Newton,
    /// Plain damped source iteration, one scattering order per sweep.
    Source,
}

impl Scheme {
    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::Newton => "newton",
            Scheme::Source => "source",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "newton" => Ok(Scheme::Newton),
            "source" => Ok(Scheme::Source),
            other => Err(format!("unknown scheme `{other}` (expected newton or source)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Optical thickness L / l_dis.
    pub b: f64,
    /// Interaction ratio l_dis / l_int.
    pub alpha: f64,
    /// Incident energy; 1 by convention.
    pub e_i: f64,
    pub e_max: f64,
    pub n_e: usize,
    pub n_z: usize,
    /// Relaxation factor in (0, 1].
    pub damping: f64,
    /// Convergence tolerance on the relative sup-norm change.
    pub tol: f64,
    pub max_iter: usize,
    pub scheme: Scheme,
}

pub const DEFAULT_E_MAX: f64 = 6.0;
pub const DEFAULT_N_E: usize = 240;
pub const DEFAULT_N_Z: usize = 250;
pub const DEFAULT_DAMPING: f64 = 1.0;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 10_000;

/// Non-fatal notes about the physical regime of a scenario.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeWarning {
    /// `alpha >= 0.1`: collisions are no longer rare compared to disorder scattering.
    StrongInteraction,
    /// `b^2 alpha < 1`: fewer than one collision expected across the slab.
    FewCollisions,
}

impl fmt::Display for RegimeWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegimeWarning::StrongInteraction => write!(
                f,
                "alpha >= 0.1: the contact approximation assumes l_int >> l_dis"
            ),
            RegimeWarning::FewCollisions => write!(
                f,
                "b^2 * alpha < 1: too few collisions to observe thermalization"
            ),
        }
    }
}

impl Scenario {
    /// A scenario with the default numerical controls.
    pub fn new(b: f64, alpha: f64) -> Self {
        Scenario {
            b,
            alpha,
            e_i: 1.0,
            e_max: DEFAULT_E_MAX,
            n_e: DEFAULT_N_E,
            n_z: DEFAULT_N_Z,
            damping: DEFAULT_DAMPING,
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
            scheme: Scheme::Newton,
        }
    }

    /// Builds and validates a scenario from a parsed configuration.
    pub fn from_config(config: &Config) -> Result<(Scenario, Vec<RegimeWarning>)> {
        let scenario = Scenario {
            b: config.b,
            alpha: config.alpha,
            e_i: config.e_i,
            e_max: config.e_max,
            n_e: config.n_e,
            n_z: config.n_z,
            damping: config.damping,
            tol: config.tol,
            max_iter: config.max_iter,
            scheme: config.scheme,
        };
        let warnings = scenario.validate()?;
        Ok((scenario, warnings))
    }

    pub fn validate(&self) -> Result<Vec<RegimeWarning>> {
        if !(self.b.is_finite() && self.b > 0.0) {
            return Err(Error::config("b", format!("must be positive, got {}", self.b)));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config(
                "alpha",
                format!("must be non-negative, got {}", self.alpha),
            ));
        }
        if self.e_i != 1.0 {
            return Err(Error::config(
                "e_i",
                "energies are measured in units of the incident energy; e_i must be 1",
            ));
        }
        if !(self.e_max.is_finite() && self.e_max >= 2.0 * self.e_i) {
            return Err(Error::config(
                "e_max",
                format!("must be at least 2 e_i to hold the first-collision spectrum, got {}", self.e_max),
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::config(
                "damping",
                format!("must lie in (0, 1], got {}", self.damping),
            ));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::config("tol", format!("must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be at least 1"));
        }
        if self.n_z < 2 {
            return Err(Error::config("n_z", format!("must be at least 2, got {}", self.n_z)));
        }
        // Surfaces divisibility problems with the offending key.
        EnergyGrid::new(self.e_max, self.n_e, self.e_i)?;

        let mut warnings = Vec::new();
        if self.alpha >= 0.1 {
            warnings.push(RegimeWarning::StrongInteraction);
        }
        if self.collision_number() < 1.0 {
            warnings.push(RegimeWarning::FewCollisions);
        }
        Ok(warnings)
    }

    /// Expected number of two-body collisions across the slab, `b^2 alpha`.
    pub fn collision_number(&self) -> f64 {
        self.b * self.b * self.alpha
    }

    pub fn energy_grid(&self) -> Result<EnergyGrid> {
        EnergyGrid::new(self.e_max, self.n_e, self.e_i)
    }

    pub fn depth_grid(&self) -> Result<DepthGrid> {
        DepthGrid::new(self.b, self.n_z)
    }
}

/// Uniform energy grid `E_k = k * delta`, `k = 1..=n_e`, with the incident
/// energy sitting exactly on node `ei_node`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub delta: f64,
    /// 1-based node number of the incident energy (`e_i = ei_node * delta`).
    pub ei_node: usize,
    pub e_i: f64,
}

impl EnergyGrid {
    pub fn new(e_max: f64, n_e: usize, e_i: f64) -> Result<Self> {
        if n_e == 0 {
            return Err(Error::config("n_e", "must be at least 1"));
        }
        if !(e_i > 0.0 && e_max > 0.0 && e_max.is_finite()) {
            return Err(Error::config("e_max", "energies must be positive"));
        }
        let steps = e_i * n_e as f64 / e_max;
        let ei_node = steps.round();
        if ei_node < 1.0 || (steps - ei_node).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::config(
                "n_e",
                format!(
                    "e_i = {e_i} is not a node of the uniform grid with e_max = {e_max}, n_e = {n_e} \
                     (e_i / delta = {steps})"
                ),
            ));
        }
        let ei_node = ei_node as usize;
        if ei_node > n_e {
            return Err(Error::config("e_max", "must not be below e_i"));
        }
        let m = ei_node as f64;
        // k / m is exact for k = m, so the incident node carries e_i bit for bit.
        let nodes: Vec<f64> = (1..=n_e).map(|k| (k as f64 / m) * e_i).collect();
        let delta = e_i / m;
        let mut weights = vec![delta; n_e];
        weights[n_e - 1] = 0.5 * delta;
        Ok(EnergyGrid {
            nodes,
            weights,
            delta,
            ei_node,
            e_i,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// 0-based array index of the incident-energy node.
    pub fn ei_index(&self) -> usize {
        self.ei_node - 1
    }

    pub fn e_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    /// Trapezoidal integral of nodal values over `(0, e_max]`, assuming the
    /// integrand vanishes at zero energy.
    pub fn integrate(&self, values: impl IntoIterator<Item = f64>) -> f64 {
        self.weights.iter().zip(values).map(|(w, v)| w * v).sum()
    }
}

/// Uniform cell-centred depth grid over `[0, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid {
    pub nodes: Vec<f64>,
    pub edges: Vec<f64>,
    pub width: f64,
    pub b: f64,
}

impl DepthGrid {
    pub fn new(b: f64, n_z: usize) -> Result<Self> {
        if n_z < 2 {
            return Err(Error::config("n_z", format!("must be at least 2, got {n_z}")));
        }
        if !(b.is_finite() && b > 0.0) {
            return Err(Error::config("b", format!("must be positive, got {b}")));
        }
        let width = b / n_z as f64;
        let nodes = (0..n_z).map(|j| (j as f64 + 0.5) * width).collect();
        let mut edges: Vec<f64> = (0..=n_z).map(|j| j as f64 * width).collect();
        edges[n_z] = b;
        Ok(DepthGrid {
            nodes,
            edges,
            width,
            b,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the cell containing depth `z` (clamped to the slab).
    pub fn cell_of(&self, z: f64) -> usize {
        let j = (z / self.width).floor();
        if j < 0.0 {
            0
        } else {
            (j as usize).min(self.nodes.len() - 1)
        }
    }
}
