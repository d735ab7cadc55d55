//! Receiver statistics, the threshold decision rule, analytical BER with
//! ISI enumeration, and Monte-Carlo BER.
//!
//! The decision statistic q is the number of product molecules inside the
//! receiver at the sampling instant; it is Poisson with mean q_bar. ISI
//! couples q_bar to the previous L bits, and because the underlying PDEs
//! are nonlinear the table of means is built by running the full solver
//! for every one of the 2^(L+1) bit patterns; superposition shortcuts are
//! not valid here.

use crate::error::{Error, Result};
use crate::numerics::{gauss_legendre, poisson_cdf, poisson_sample, RngStream};
use crate::scenario::{ConcentrationField, ScenarioConfig, Species};
use crate::solver::{initial_field, run_field, ReleaseSchedule};
use std::io::Write;
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// How the expected count inside the receiver sphere is evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReceiverIntegration {
    /// q_bar = C_C(receiver center) * receiver volume. Valid while the
    /// receiver is much smaller than the concentration gradient scale.
    PointApproximation,
    /// Gauss-Legendre integration of 2 pi C_C rho drho dz over the
    /// sphere, with bilinear interpolation on the grid.
    Quadrature,
}

/// Receiver geometry and detector parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionSetup {
    /// Receiver center on the axis, m.
    pub rx_z: f64,
    /// Receiver radius, m.
    pub rx_radius: f64,
    /// Sampling offset t_s within the symbol interval, s.
    pub sampling_offset: f64,
    /// ISI memory L in symbols.
    pub isi_length: usize,
    /// Detection threshold.
    pub threshold: u64,
    pub integration: ReceiverIntegration,
}

impl DetectionSetup {
    pub fn from_config(config: &ScenarioConfig) -> Self {
        Self {
            rx_z: config.rx_z,
            rx_radius: config.rx_radius,
            sampling_offset: config.symbol_interval,
            isi_length: 2,
            threshold: 0,
            integration: ReceiverIntegration::PointApproximation,
        }
    }

    pub fn rx_volume(&self) -> f64 {
        4.0 / 3.0 * std::f64::consts::PI * self.rx_radius.powi(3)
    }
}

/// Expected product count inside the receiver for the given field.
pub fn receiver_mean(field: &ConcentrationField, setup: &DetectionSetup) -> Result<f64> {
    let grid = field.grid();
    if setup.rx_radius > grid.z_max() - setup.rx_z.abs() || setup.rx_radius > grid.z_max() {
        return Err(Error::Detection(format!(
            "receiver of radius {:.3e} at z = {:.3e} extends past the domain",
            setup.rx_radius, setup.rx_z
        )));
    }
    match setup.integration {
        ReceiverIntegration::PointApproximation => {
            let j = grid.nearest_z_index(setup.rx_z);
            Ok(field.value_at(Species::C, 0, j) * setup.rx_volume())
        }
        ReceiverIntegration::Quadrature => quadrature_mean(field, setup),
    }
}

/// 2 pi int_0^r rho int_{-h}^{h} C dz drho over the sphere rho^2 + (z -
/// z0)^2 <= r^2, with rho = r sin(theta) so the integrand stays smooth at
/// the rim.
fn quadrature_mean(field: &ConcentrationField, setup: &DetectionSetup) -> Result<f64> {
    const ORDER: usize = 32;
    let (nodes, weights) = gauss_legendre(ORDER);
    let r = setup.rx_radius;
    let z0 = setup.rx_z;

    let mut total = 0.0;
    for (ti, tw) in nodes.iter().zip(&weights) {
        // theta in [0, pi/2]
        let theta = 0.5 * std::f64::consts::FRAC_PI_2 * (ti + 1.0);
        let jac_theta = 0.5 * std::f64::consts::FRAC_PI_2;
        let rho = r * theta.sin();
        let half_extent = r * theta.cos();
        let mut inner = 0.0;
        for (zi, zw) in nodes.iter().zip(&weights) {
            let z = z0 + half_extent * zi;
            inner += zw * interpolate(field, rho, z);
        }
        inner *= half_extent;
        total += tw * jac_theta * rho * (r * theta.cos()) * inner;
    }
    Ok(2.0 * std::f64::consts::PI * total)
}

/// Bilinear interpolation of C_C on the (rho, z) lattice.
fn interpolate(field: &ConcentrationField, rho: f64, z: f64) -> f64 {
    let grid = field.grid();
    let data = field.species(Species::C);
    let (k0, k1, fr) = bracket(grid.rho(), rho);
    let (j0, j1, fz) = bracket(grid.z(), z);
    let c00 = data[(k0, j0)];
    let c01 = data[(k0, j1)];
    let c10 = data[(k1, j0)];
    let c11 = data[(k1, j1)];
    let lo = c00 * (1.0 - fz) + c01 * fz;
    let hi = c10 * (1.0 - fz) + c11 * fz;
    lo * (1.0 - fr) + hi * fr
}

fn bracket(nodes: &[f64], x: f64) -> (usize, usize, f64) {
    let n = nodes.len();
    if x <= nodes[0] {
        return (0, 0, 0.0);
    }
    if x >= nodes[n - 1] {
        return (n - 1, n - 1, 0.0);
    }
    let hi = nodes.partition_point(|&v| v <= x);
    let lo = hi - 1;
    let frac = (x - nodes[lo]) / (nodes[hi] - nodes[lo]);
    (lo, hi, frac)
}


/// Find the sampling time: the argmax of C_C at the receiver over the
/// first symbol interval of an isolated bit 1, tie broken to the
/// earliest step.
pub fn sampling_time(config: &ScenarioConfig, _setup: &DetectionSetup) -> Result<f64> {
    config.validate()?;
    let mut run_config = config.clone();
    run_config.t_max = config.symbol_interval;
    let schedule = ReleaseSchedule::from_bits(&run_config, &[1])?;
    let grid = Arc::new(run_config.grid.build()?);
    let field = initial_field(&run_config, grid)?;
    let trace = run_field(&run_config, field, &schedule, |_, _| {})?;

    let mut best_step = 0usize;
    let mut best = 0.0f64;
    for (i, &c) in trace.c_rx.iter().enumerate().skip(1) {
        if c > best {
            best = c;
            best_step = i;
        }
    }
    if best <= 0.0 {
        return Err(Error::Detection(
            "no product formed at the receiver; cannot place the sampling time".into(),
        ));
    }
    Ok(best_step as f64 * run_config.delta_t)
}

/// Expected counts q_bar for every bit pattern (s_{n-L}, ..., s_n). Bit i
/// of a pattern index is symbol s_{n-L+i}, so bit L is the current bit.
#[derive(Clone, Debug, PartialEq)]
pub struct IsiTable {
    isi_length: usize,
    q_bar: Vec<f64>,
}

impl IsiTable {
    pub fn new(isi_length: usize, q_bar: Vec<f64>) -> Result<Self> {
        if q_bar.len() != 1 << (isi_length + 1) {
            return Err(Error::Detection(format!(
                "ISI table needs {} entries for L = {isi_length}, got {}",
                1usize << (isi_length + 1),
                q_bar.len()
            )));
        }
        if q_bar.iter().any(|&v| !v.is_finite() || v < 0.0) {
            return Err(Error::Detection("ISI table entries must be finite and >= 0".into()));
        }
        Ok(Self { isi_length, q_bar })
    }

    pub fn isi_length(&self) -> usize {
        self.isi_length
    }

    pub fn len(&self) -> usize {
        self.q_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q_bar.is_empty()
    }

    pub fn q_bar(&self, pattern: usize) -> f64 {
        self.q_bar[pattern]
    }

    /// The current bit s_n encoded in a pattern index.
    pub fn current_bit(&self, pattern: usize) -> u8 {
        ((pattern >> self.isi_length) & 1) as u8
    }

    pub fn max_q_bar(&self) -> f64 {
        self.q_bar.iter().cloned().fold(0.0, f64::max)
    }

    /// Chronological bits (oldest first) of a pattern index.
    pub fn pattern_bits(&self, pattern: usize) -> Vec<u8> {
        (0..=self.isi_length)
            .map(|i| ((pattern >> i) & 1) as u8)
            .collect()
    }
}

/// Build the ISI table by exact enumeration: one full solver run per bit
/// pattern, evaluated at the decision instant L*T + t_s of the last
/// symbol. Patterns run in parallel; the result does not depend on the
/// partitioning.
pub fn build_isi_table(config: &ScenarioConfig, setup: &DetectionSetup) -> Result<IsiTable> {
    config.validate()?;
    if setup.sampling_offset <= 0.0 || setup.sampling_offset > config.symbol_interval {
        return Err(Error::Detection(format!(
            "sampling offset {} must lie in (0, T]",
            setup.sampling_offset
        )));
    }
    let l = setup.isi_length;
    let n_patterns = 1usize << (l + 1);
    let patterns: Vec<usize> = (0..n_patterns).collect();

    let compute = |&pattern: &usize| -> Result<f64> { pattern_q_bar(config, setup, pattern) };

    let q_bar: Vec<f64> = {
        #[cfg(feature = "parallel")]
        {
            patterns.par_iter().map(compute).collect::<Result<Vec<_>>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            patterns.iter().map(compute).collect::<Result<Vec<_>>>()?
        }
    };
    IsiTable::new(l, q_bar)
}

fn pattern_q_bar(config: &ScenarioConfig, setup: &DetectionSetup, pattern: usize) -> Result<f64> {
    let l = setup.isi_length;
    let bits: Vec<u8> = (0..=l).map(|i| ((pattern >> i) & 1) as u8).collect();
    let steps_per_symbol = config.steps_per_symbol();
    let offset_steps = (setup.sampling_offset / config.delta_t).round().max(1.0) as usize;
    let decision_step = l * steps_per_symbol + offset_steps;

    let mut run_config = config.clone();
    run_config.t_max = decision_step as f64 * config.delta_t;

    // A point-released probe accompanies the decision symbol: the decided
    // bit sees the probe at the same age as in the isolated single-bit
    // run that fixed the sampling time.
    let probe_anchor = l as f64 * config.symbol_interval;
    let schedule = ReleaseSchedule::from_bits_anchored(&run_config, &bits, probe_anchor)?;
    let grid = Arc::new(run_config.grid.build()?);
    let field = initial_field(&run_config, grid)?;

    let mut q = 0.0;
    let mut capture_err = None;
    run_field(&run_config, field, &schedule, |step, f| {
        if step == decision_step {
            match receiver_mean(f, setup) {
                Ok(v) => q = v,
                Err(e) => capture_err = Some(e),
            }
        }
    })?;
    if let Some(e) = capture_err {
        return Err(e);
    }
    Ok(q)
}

/// Threshold rule: decide 0 if q <= gamma, 1 otherwise.
pub fn detect(q: u64, gamma: u64) -> u8 {
    if q <= gamma {
        0
    } else {
        1
    }
}

/// Analytical BER for a threshold: average of the miss and false-alarm
/// probabilities over equiprobable bits and ISI patterns.
pub fn ber_analytical(table: &IsiTable, gamma: u64) -> Result<f64> {
    let mut p_le = [0.0f64; 2];
    let mut count = [0usize; 2];
    for pattern in 0..table.len() {
        let bit = table.current_bit(pattern) as usize;
        p_le[bit] += poisson_cdf(gamma, table.q_bar(pattern))?;
        count[bit] += 1;
    }
    let p_le_1 = p_le[1] / count[1] as f64;
    let p_le_0 = p_le[0] / count[0] as f64;
    Ok(0.5 * (p_le_1 + 1.0 - p_le_0))
}

/// Analytical plus Monte-Carlo error rates at one threshold.
#[derive(Clone, Copy, Debug)]
pub struct BerResult {
    pub gamma: u64,
    pub analytical: f64,
    pub monte_carlo: f64,
    /// Binomial standard error sqrt(p (1 - p) / trials).
    pub std_error: f64,
    pub trials: u64,
}

/// Trials per deterministic Monte-Carlo batch; each batch owns one child
/// RNG stream, so the estimate is independent of worker count.
const MC_BATCH: u64 = 1 << 14;

/// Monte-Carlo BER: draw equiprobable bit windows, sample q from the
/// table's Poisson mean, apply the threshold rule, count errors.
pub fn ber_monte_carlo(
    table: &IsiTable,
    gamma: u64,
    trials: u64,
    stream: RngStream,
) -> Result<BerResult> {
    if trials == 0 {
        return Err(Error::Detection("Monte-Carlo needs at least one trial".into()));
    }
    let n_batches = trials.div_ceil(MC_BATCH);
    let batch_errors: Vec<u64> = {
        #[cfg(feature = "parallel")]
        {
            (0..n_batches)
                .into_par_iter()
                .map(|b| mc_batch(table, gamma, trials, b, stream))
                .collect::<Result<Vec<_>>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..n_batches)
                .map(|b| mc_batch(table, gamma, trials, b, stream))
                .collect::<Result<Vec<_>>>()?
        }
    };
    finish_mc(table, gamma, trials, batch_errors)
}

/// Single-threaded variant of [`ber_monte_carlo`]; identical output.
pub fn ber_monte_carlo_serial(
    table: &IsiTable,
    gamma: u64,
    trials: u64,
    stream: RngStream,
) -> Result<BerResult> {
    if trials == 0 {
        return Err(Error::Detection("Monte-Carlo needs at least one trial".into()));
    }
    let n_batches = trials.div_ceil(MC_BATCH);
    let batch_errors: Vec<u64> = (0..n_batches)
        .map(|b| mc_batch(table, gamma, trials, b, stream))
        .collect::<Result<Vec<_>>>()?;
    finish_mc(table, gamma, trials, batch_errors)
}

fn mc_batch(table: &IsiTable, gamma: u64, trials: u64, batch: u64, stream: RngStream) -> Result<u64> {
    use rand::Rng;
    let start = batch * MC_BATCH;
    let count = MC_BATCH.min(trials - start);
    let mask = (table.len() - 1) as u64;
    let mut rng = stream.child(batch).rng();
    let mut errors = 0u64;
    for _ in 0..count {
        let pattern = (rng.random::<u64>() & mask) as usize;
        let q = poisson_sample(table.q_bar(pattern), &mut rng)?;
        if detect(q, gamma) != table.current_bit(pattern) {
            errors += 1;
        }
    }
    Ok(errors)
}

fn finish_mc(table: &IsiTable, gamma: u64, trials: u64, batch_errors: Vec<u64>) -> Result<BerResult> {
    let errors: u64 = batch_errors.iter().sum();
    let p = errors as f64 / trials as f64;
    Ok(BerResult {
        gamma,
        analytical: ber_analytical(table, gamma)?,
        monte_carlo: p,
        std_error: (p * (1.0 - p) / trials as f64).sqrt(),
        trials,
    })
}

/// One point of an analytical threshold sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub gamma: u64,
    pub ber: f64,
}

/// Analytical BER over a threshold range plus the argmin, ties broken to
/// the smallest threshold.
#[derive(Clone, Debug)]
pub struct ThresholdSweep {
    pub points: Vec<SweepPoint>,
    pub optimal: SweepPoint,
}

pub fn threshold_sweep(table: &IsiTable, gammas: &[u64]) -> Result<ThresholdSweep> {
    if gammas.is_empty() {
        return Err(Error::Detection("threshold sweep needs a nonempty range".into()));
    }
    let mut points = Vec::with_capacity(gammas.len());
    let mut optimal: Option<SweepPoint> = None;
    for &gamma in gammas {
        let ber = ber_analytical(table, gamma)?;
        let point = SweepPoint { gamma, ber };
        points.push(point);
        let better = match optimal {
            None => true,
            Some(best) => ber < best.ber || (ber == best.ber && gamma < best.gamma),
        };
        if better {
            optimal = Some(point);
        }
    }
    Ok(ThresholdSweep {
        points,
        optimal: optimal.unwrap(),
    })
}

/// Default sweep range [0, ceil(3 max q_bar)]: the BER is asymptotically
/// 0.5 beyond the largest mean, so this brackets every interior optimum.
pub fn default_gamma_range(table: &IsiTable) -> Vec<u64> {
    let hi = (3.0 * table.max_q_bar()).ceil() as u64;
    (0..=hi.max(1)).collect()
}

/// CSV export of a sweep with Monte-Carlo columns and the optimum in a
/// footer comment.
pub fn write_sweep_csv<W: Write>(results: &[BerResult], mut w: W) -> std::io::Result<()> {
    writeln!(w, "gamma,ber_analytical,ber_mc,mc_stderr")?;
    let mut best: Option<&BerResult> = None;
    for r in results {
        writeln!(
            w,
            "{},{:.8e},{:.8e},{:.8e}",
            r.gamma, r.analytical, r.monte_carlo, r.std_error
        )?;
        let better = match best {
            None => true,
            Some(b) => r.analytical < b.analytical,
        };
        if better {
            best = Some(r);
        }
    }
    if let Some(b) = best {
        writeln!(w, "# gamma_opt = {}, ber_analytical = {:.8e}", b.gamma, b.analytical)?;
    }
    Ok(())
}
