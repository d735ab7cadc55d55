//! Domain types and scenario configuration shared by all other modules:
//! species and reaction parameters, the axisymmetric (rho, z) grid with
//! quadrature weights, concentration lattices, release events, and
//! whole-scenario validation.
//!
//! Axisymmetry is a hard contract here: every source (transmitter, probe
//! release point, receiver center) sits on the z-axis, so fields depend
//! only on (rho, z) and the PDE domain is two-dimensional. Units are SI
//! throughout; concentrations are molecules/m^3.

use crate::error::{Error, Result};
use ndarray::Array2;
use std::sync::Arc;

/// The three chemical species: signaling molecule A, molecular probe B,
/// and the detectable product C.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Species {
    A,
    B,
    C,
}

impl Species {
    pub const ALL: [Species; 3] = [Species::A, Species::B, Species::C];

    pub fn index(self) -> usize {
        match self {
            Species::A => 0,
            Species::B => 1,
            Species::C => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Species::A => "A",
            Species::B => "B",
            Species::C => "C",
        }
    }
}

/// One value per species.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerSpecies<T> {
    pub a: T,
    pub b: T,
    pub c: T,
}

impl<T> PerSpecies<T> {
    pub fn new(a: T, b: T, c: T) -> Self {
        Self { a, b, c }
    }

    pub fn get(&self, species: Species) -> &T {
        match species {
            Species::A => &self.a,
            Species::B => &self.b,
            Species::C => &self.c,
        }
    }

    pub fn get_mut(&mut self, species: Species) -> &mut T {
        match species {
            Species::A => &mut self.a,
            Species::B => &mut self.b,
            Species::C => &mut self.c,
        }
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> PerSpecies<U> {
        PerSpecies {
            a: f(&self.a),
            b: f(&self.b),
            c: f(&self.c),
        }
    }
}

/// Physical constants of one species.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpeciesParams {
    pub species: Species,
    /// Diffusion coefficient in m^2/s.
    pub diffusion: f64,
}

/// Rate constants of the reversible reaction A + B <-> C.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionParams {
    /// Forward rate of the second-order reaction, m^3 / (molecule s).
    pub kappa_f: f64,
    /// Backward rate of the first-order reaction, 1/s.
    pub kappa_b: f64,
}

/// A point in the (rho, z) half-plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CylPoint {
    pub rho: f64,
    pub z: f64,
}

impl CylPoint {
    pub fn new(rho: f64, z: f64) -> Self {
        Self { rho, z }
    }

    pub fn on_axis(z: f64) -> Self {
        Self { rho: 0.0, z }
    }

    /// 3D Euclidean distance, valid because at least one of the two
    /// points lies on the axis in every use here.
    pub fn distance(&self, other: &CylPoint) -> f64 {
        let dr = self.rho - other.rho;
        let dz = self.z - other.z;
        (dr * dr + dz * dz).sqrt()
    }
}

/// Discretized axisymmetric domain: radii 0 = rho_0 < ... = z_max and a
/// symmetric z axis over [-z_max, z_max], each with trapezoidal
/// quadrature weights.
#[derive(Clone, Debug, PartialEq)]
pub struct CylGrid {
    rho: Vec<f64>,
    z: Vec<f64>,
    w_rho: Vec<f64>,
    w_z: Vec<f64>,
    /// Radial measure mu_k = rho_k * w_rho(k) entering every cylindrical
    /// integral. The axis node would otherwise carry zero measure, making
    /// on-axis releases invisible; it gets rho_1^2 / 12, which also
    /// cancels the leading trapezoid endpoint error of integrands f(rho)
    /// rho with f smooth and even (the error is -h^2 f(0) / 12 at the
    /// axis end).
    radial_measure: Vec<f64>,
}

impl CylGrid {
    pub fn n_rho(&self) -> usize {
        self.rho.len()
    }

    pub fn n_z(&self) -> usize {
        self.z.len()
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn w_rho(&self) -> &[f64] {
        &self.w_rho
    }

    pub fn w_z(&self) -> &[f64] {
        &self.w_z
    }

    pub fn radial_measure(&self) -> &[f64] {
        &self.radial_measure
    }

    pub fn z_max(&self) -> f64 {
        *self.z.last().unwrap()
    }

    pub fn point(&self, rho_idx: usize, z_idx: usize) -> CylPoint {
        CylPoint::new(self.rho[rho_idx], self.z[z_idx])
    }

    /// Index of the z node closest to `z`.
    pub fn nearest_z_index(&self, z: f64) -> usize {
        nearest_index(&self.z, z)
    }

    /// Index of the radial node closest to `rho`.
    pub fn nearest_rho_index(&self, rho: f64) -> usize {
        nearest_index(&self.rho, rho)
    }

    /// Largest grid spacing adjacent to the origin node (0, 0); the
    /// diffusion kernel must be wider than this to be resolved.
    pub fn axis_spacing(&self) -> f64 {
        let center = self.nearest_z_index(0.0);
        let dz_lo = self.z[center] - self.z[center - 1];
        let dz_hi = self.z[center + 1] - self.z[center];
        let drho = self.rho[1] - self.rho[0];
        drho.max(dz_lo).max(dz_hi)
    }

    /// Volume represented by node (rho_idx, z_idx) under the grid's
    /// cylindrical quadrature measure, in m^3.
    pub fn cell_volume(&self, rho_idx: usize, z_idx: usize) -> f64 {
        2.0 * std::f64::consts::PI * self.radial_measure[rho_idx] * self.w_z[z_idx]
    }
}

fn nearest_index(nodes: &[f64], x: f64) -> usize {
    let hi = nodes.partition_point(|&n| n < x);
    if hi == 0 {
        return 0;
    }
    if hi >= nodes.len() {
        return nodes.len() - 1;
    }
    if (x - nodes[hi - 1]) <= (nodes[hi] - x) {
        hi - 1
    } else {
        hi
    }
}

/// Build an axisymmetric grid with geometric stretching: radial nodes run
/// from 0 to `z_max` with the finest spacing at the axis, z nodes are
/// symmetric about 0 with the finest spacing at the center. `stretch` is
/// the ratio of consecutive spacings; 1 gives uniform nodes.
pub fn build_grid(z_max: f64, rho_count: usize, z_count: usize, stretch: f64) -> Result<CylGrid> {
    if !z_max.is_finite() || z_max <= 0.0 {
        return Err(Error::Grid(format!("z_max must be positive, got {z_max}")));
    }
    if !stretch.is_finite() || stretch < 1.0 {
        return Err(Error::Grid(format!("stretch ratio must be >= 1, got {stretch}")));
    }
    if rho_count < 4 {
        return Err(Error::Grid(format!(
            "rho node count {rho_count} too small to resolve the axis (need >= 4)"
        )));
    }
    if z_count < 5 || z_count.is_multiple_of(2) {
        return Err(Error::Grid(format!(
            "z node count {z_count} must be odd and >= 5 so the plane z = 0 contains a node"
        )));
    }

    let rho = stretched_nodes(z_max, rho_count - 1, stretch);
    let half = stretched_nodes(z_max, (z_count - 1) / 2, stretch);
    let mut z = Vec::with_capacity(z_count);
    for &v in half.iter().skip(1).rev() {
        z.push(-v);
    }
    z.extend_from_slice(&half);

    let w_rho = trapezoid_weights(&rho);
    let w_z = trapezoid_weights(&z);

    let mut radial_measure: Vec<f64> = rho.iter().zip(&w_rho).map(|(&r, &w)| r * w).collect();
    radial_measure[0] = rho[1] * rho[1] / 12.0;

    Ok(CylGrid {
        rho,
        z,
        w_rho,
        w_z,
        radial_measure,
    })
}

/// Nodes 0 = x_0 < ... < x_n = extent with spacings growing by `ratio`.
fn stretched_nodes(extent: f64, intervals: usize, ratio: f64) -> Vec<f64> {
    let n = intervals;
    let first = if (ratio - 1.0).abs() < 1e-12 {
        extent / n as f64
    } else {
        extent * (ratio - 1.0) / (ratio.powi(n as i32) - 1.0)
    };
    let mut nodes = Vec::with_capacity(n + 1);
    nodes.push(0.0);
    let mut x = 0.0;
    let mut h = first;
    for _ in 0..n {
        x += h;
        nodes.push(x);
        h *= ratio;
    }
    *nodes.last_mut().unwrap() = extent;
    nodes
}

fn trapezoid_weights(nodes: &[f64]) -> Vec<f64> {
    let n = nodes.len();
    let mut w = vec![0.0; n];
    w[0] = 0.5 * (nodes[1] - nodes[0]);
    for i in 1..n - 1 {
        w[i] = 0.5 * (nodes[i + 1] - nodes[i - 1]);
    }
    w[n - 1] = 0.5 * (nodes[n - 1] - nodes[n - 2]);
    w
}

/// Per-species concentration lattices on a shared grid, tagged with the
/// simulation time they represent.
#[derive(Clone, Debug)]
pub struct ConcentrationField {
    grid: Arc<CylGrid>,
    time: f64,
    data: PerSpecies<Array2<f64>>,
}

impl ConcentrationField {
    pub fn zeros(grid: Arc<CylGrid>) -> Self {
        let shape = (grid.n_rho(), grid.n_z());
        Self {
            grid,
            time: 0.0,
            data: PerSpecies::new(
                Array2::zeros(shape),
                Array2::zeros(shape),
                Array2::zeros(shape),
            ),
        }
    }

    /// Spatially uniform field with the given per-species levels.
    pub fn uniform(grid: Arc<CylGrid>, levels: PerSpecies<f64>) -> Self {
        let shape = (grid.n_rho(), grid.n_z());
        Self {
            grid,
            time: 0.0,
            data: levels.map(|&v| Array2::from_elem(shape, v)),
        }
    }

    pub fn grid(&self) -> &Arc<CylGrid> {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    pub fn species(&self, s: Species) -> &Array2<f64> {
        self.data.get(s)
    }

    pub fn species_mut(&mut self, s: Species) -> &mut Array2<f64> {
        self.data.get_mut(s)
    }

    pub fn value_at(&self, s: Species, rho_idx: usize, z_idx: usize) -> f64 {
        self.data.get(s)[(rho_idx, z_idx)]
    }

    pub fn shares_grid(&self, other: &Arc<CylGrid>) -> bool {
        Arc::ptr_eq(&self.grid, other)
    }

    pub fn all_finite(&self) -> bool {
        Species::ALL
            .iter()
            .all(|&s| self.data.get(s).iter().all(|v| v.is_finite()))
    }
}

/// A timed point release of molecules on the symmetry axis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReleaseEvent {
    pub species: Species,
    pub time: f64,
    pub position: CylPoint,
    pub molecules: f64,
}

impl ReleaseEvent {
    pub fn new(species: Species, time: f64, position: CylPoint, molecules: f64) -> Result<Self> {
        if species == Species::C {
            return Err(Error::Release("C molecules are not released".into()));
        }
        if position.rho != 0.0 {
            return Err(Error::Release(format!(
                "release position must lie on the symmetry axis (rho = 0), got rho = {}",
                position.rho
            )));
        }
        if !molecules.is_finite() || molecules < 0.0 {
            return Err(Error::Release(format!(
                "release count must be finite and >= 0, got {molecules}"
            )));
        }
        if !time.is_finite() {
            return Err(Error::Release(format!("release time must be finite, got {time}")));
        }
        Ok(Self {
            species,
            time,
            position,
            molecules,
        })
    }
}

/// How the probe (species B) enters the environment before and during a
/// transmission.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ProbeDeployment {
    /// No probe at all; used for the direct-detection baseline.
    None,
    /// A single point release of `molecules` B molecules at axis position
    /// `z` at time `time`.
    PointRelease { z: f64, molecules: f64, time: f64 },
    /// Uniform initial concentration, molecules/m^3.
    Uniform { concentration: f64 },
    /// The t -> infinity profile of a continuously released probe,
    /// N_B / (4 pi D_B r), centered at axis position `z`.
    SteadyState { z: f64, molecules: f64 },
}

/// Grid construction parameters carried by a scenario.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub z_max: f64,
    pub rho_count: usize,
    pub z_count: usize,
    pub stretch: f64,
}

impl GridSpec {
    pub fn build(&self) -> Result<CylGrid> {
        build_grid(self.z_max, self.rho_count, self.z_count, self.stretch)
    }
}

/// Everything needed to run one transmission scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioConfig {
    pub species: PerSpecies<SpeciesParams>,
    pub reaction: ReactionParams,
    pub grid: GridSpec,
    /// Time step, s.
    pub delta_t: f64,
    /// Maximum simulation time, s.
    pub t_max: f64,
    /// Symbol interval T, s.
    pub symbol_interval: f64,
    /// Molecules of A released per bit 1.
    pub molecules_per_bit: f64,
    /// Transmitter axis position, m.
    pub tx_z: f64,
    /// Receiver center axis position, m.
    pub rx_z: f64,
    /// Receiver radius, m.
    pub rx_radius: f64,
    pub probe: ProbeDeployment,
}

impl ScenarioConfig {
    pub fn diffusion(&self, species: Species) -> f64 {
        self.species.get(species).diffusion
    }

    pub fn tx_position(&self) -> CylPoint {
        CylPoint::on_axis(self.tx_z)
    }

    pub fn rx_position(&self) -> CylPoint {
        CylPoint::on_axis(self.rx_z)
    }

    /// Number of solver steps per symbol interval.
    pub fn steps_per_symbol(&self) -> usize {
        (self.symbol_interval / self.delta_t).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        validate(self)
    }
}

/// Check every scenario invariant, reporting all violations at once.
/// Side-effect free and idempotent.
pub fn validate(config: &ScenarioConfig) -> Result<()> {
    let mut problems = Vec::new();

    for s in Species::ALL {
        let d = config.diffusion(s);
        if !d.is_finite() || d <= 0.0 {
            problems.push(format!(
                "diffusion coefficient D_{} must be positive and finite, got {d}",
                s.name()
            ));
        }
        if config.species.get(s).species != s {
            problems.push(format!("species slot {} holds mismatched parameters", s.name()));
        }
    }

    if !config.reaction.kappa_f.is_finite() || config.reaction.kappa_f < 0.0 {
        problems.push(format!(
            "forward rate kappa_f must be finite and >= 0, got {}",
            config.reaction.kappa_f
        ));
    }
    if !config.reaction.kappa_b.is_finite() || config.reaction.kappa_b < 0.0 {
        problems.push(format!(
            "backward rate kappa_b must be finite and >= 0, got {}",
            config.reaction.kappa_b
        ));
    }

    if !config.delta_t.is_finite() || config.delta_t <= 0.0 {
        problems.push(format!("time step delta_t must be positive, got {}", config.delta_t));
    }
    if !config.symbol_interval.is_finite() || config.symbol_interval <= 0.0 {
        problems.push(format!(
            "symbol interval must be positive, got {}",
            config.symbol_interval
        ));
    }
    if config.delta_t > 0.0 && config.symbol_interval > 0.0 {
        if config.delta_t > config.symbol_interval {
            problems.push(format!(
                "time step delta_t = {} exceeds the symbol interval {}",
                config.delta_t, config.symbol_interval
            ));
        }
        let steps = config.symbol_interval / config.delta_t;
        if (steps - steps.round()).abs() > 1e-9 * steps {
            problems.push(format!(
                "symbol interval {} must contain an integer number of steps of delta_t = {}",
                config.symbol_interval, config.delta_t
            ));
        }
    }
    if !config.t_max.is_finite() || config.t_max < config.symbol_interval {
        problems.push(format!(
            "t_max = {} must be finite and at least the symbol interval {}",
            config.t_max, config.symbol_interval
        ));
    }

    if !config.rx_radius.is_finite() || config.rx_radius <= 0.0 {
        problems.push(format!(
            "receiver radius must be positive, got {}",
            config.rx_radius
        ));
    }
    if !config.molecules_per_bit.is_finite() || config.molecules_per_bit < 0.0 {
        problems.push(format!(
            "molecules per bit must be finite and >= 0, got {}",
            config.molecules_per_bit
        ));
    }

    if let Err(e) = config.grid.build() {
        problems.push(e.to_string());
    }

    let z_max = config.grid.z_max;
    for (name, z) in [("transmitter", config.tx_z), ("receiver", config.rx_z)] {
        if !z.is_finite() || z.abs() > z_max {
            problems.push(format!("{name} position z = {z} lies outside [-{z_max}, {z_max}]"));
        }
    }

    match config.probe {
        ProbeDeployment::None => {}
        ProbeDeployment::PointRelease { z, molecules, time } => {
            if !z.is_finite() || z.abs() > z_max {
                problems.push(format!("probe release z = {z} lies outside the domain"));
            }
            if !molecules.is_finite() || molecules < 0.0 {
                problems.push(format!("probe release count must be >= 0, got {molecules}"));
            }
            if !time.is_finite() || time < 0.0 {
                problems.push(format!("probe release time must be >= 0, got {time}"));
            }
        }
        ProbeDeployment::Uniform { concentration } => {
            if !concentration.is_finite() || concentration < 0.0 {
                problems.push(format!(
                    "uniform probe concentration must be >= 0, got {concentration}"
                ));
            }
        }
        ProbeDeployment::SteadyState { z, molecules } => {
            if !z.is_finite() || z.abs() > z_max {
                problems.push(format!("probe source z = {z} lies outside the domain"));
            }
            if !molecules.is_finite() || molecules < 0.0 {
                problems.push(format!("probe source count must be >= 0, got {molecules}"));
            }
        }
    }

    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Validation(problems))
    }
}

/// The parameter set used throughout for desk-scale experiments
/// (transmitter at z = R = 5e-5 m, receiver at the origin).
pub fn table1_config() -> ScenarioConfig {
    ScenarioConfig {
        species: PerSpecies::new(
            SpeciesParams {
                species: Species::A,
                diffusion: 1e-9,
            },
            SpeciesParams {
                species: Species::B,
                diffusion: 1.1e-10,
            },
            SpeciesParams {
                species: Species::C,
                diffusion: 1e-10,
            },
        ),
        reaction: ReactionParams {
            kappa_f: 1e-22,
            kappa_b: 1e-26,
        },
        grid: GridSpec {
            z_max: 3e-4,
            rho_count: 160,
            z_count: 321,
            stretch: 1.01,
        },
        delta_t: 1e-2,
        t_max: 30.0,
        symbol_interval: 10.0,
        molecules_per_bit: 5e8,
        tx_z: 5e-5,
        rx_z: 0.0,
        rx_radius: 2.5e-7,
        probe: ProbeDeployment::PointRelease {
            z: 0.0,
            molecules: 2.4e9,
            time: 0.0,
        },
    }
}
