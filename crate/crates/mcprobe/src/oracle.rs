//! Independent verifiers for the reaction solution: adaptive high-order
//! ODE integration and exact stochastic simulation of the well-mixed
//! system. Neither shares any code with the closed-form reaction step,
//! so agreement between the three routes is meaningful evidence.

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::reaction::ReactionTriple;
use crate::scenario::{PerSpecies, ReactionParams, ScenarioConfig, Species};
use crate::solver::{run_field, ReleaseSchedule};
use rand::Rng;
use std::io::Write;
use std::sync::Arc;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// A deterministic trajectory sampled on a uniform output grid.
#[derive(Clone, Debug)]
pub struct OdeTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<ReactionTriple>,
}

/// Integrate the well-mixed reaction ODE system
///
///   a' = -kf a b + kb c,  b' = a',  c' = -a'
///
/// with an adaptive Dormand-Prince 5(4) scheme at relative tolerance
/// 1e-10, sampling `samples` points after t = 0.
pub fn ode_trajectory(
    c0: ReactionTriple,
    params: &ReactionParams,
    t_end: f64,
    samples: usize,
) -> Result<OdeTrajectory> {
    if !t_end.is_finite() || t_end <= 0.0 || samples == 0 {
        return Err(Error::Oracle(format!(
            "ode_trajectory needs t_end > 0 and samples > 0, got {t_end}, {samples}"
        )));
    }
    for v in [c0.a, c0.b, c0.c] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::Oracle(format!("invalid initial concentration {v}")));
        }
    }

    let kf = params.kappa_f;
    let kb = params.kappa_b;
    let rhs = |y: [f64; 3]| -> [f64; 3] {
        let rate = -kf * y[0] * y[1] + kb * y[2];
        [rate, rate, -rate]
    };

    let scale = (c0.a + c0.c).max(c0.b + c0.c).max(f64::MIN_POSITIVE);
    let rtol = 1e-10;
    let atol = rtol * scale;

    let mut times = Vec::with_capacity(samples + 1);
    let mut states = Vec::with_capacity(samples + 1);
    times.push(0.0);
    states.push(c0);

    let mut y = [c0.a, c0.b, c0.c];
    let mut t = 0.0;
    let mut h = t_end / 100.0;
    for i in 1..=samples {
        let target = t_end * i as f64 / samples as f64;
        // Treat the target as reached once the remaining gap is rounding
        // noise from the repeated time additions.
        while target - t > t_end * 1e-12 {
            if h < t_end * 1e-14 {
                return Err(Error::Oracle("step-size underflow".into()));
            }
            let step = h.min(target - t);
            let (y_next, err) = dopri5_step(&rhs, &y, step);
            let mut norm = 0.0f64;
            for k in 0..3 {
                let tol = atol + rtol * y[k].abs().max(y_next[k].abs());
                norm = norm.max((err[k] / tol).abs());
            }
            let factor = if norm > 0.0 {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 5.0)
            } else {
                5.0
            };
            if norm <= 1.0 {
                t += step;
                y = y_next;
                // Grow from the step actually taken so a clip to the
                // sample boundary cannot leave h stuck small.
                h = step * factor;
            } else {
                h = step * factor;
            }
        }
        t = target;
        times.push(target);
        states.push(ReactionTriple::new(y[0].max(0.0), y[1].max(0.0), y[2].max(0.0)));
    }

    Ok(OdeTrajectory { times, states })
}

/// One Dormand-Prince 5(4) step: returns the 5th-order solution and the
/// embedded error estimate.
fn dopri5_step(rhs: &impl Fn([f64; 3]) -> [f64; 3], y: &[f64; 3], h: f64) -> ([f64; 3], [f64; 3]) {
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;

    let comb = |y: &[f64; 3], coeffs: &[(f64, [f64; 3])]| {
        let mut out = *y;
        for (c, k) in coeffs {
            for i in 0..3 {
                out[i] += h * c * k[i];
            }
        }
        out
    };

    let k1 = rhs(*y);
    let k2 = rhs(comb(y, &[(A21, k1)]));
    let k3 = rhs(comb(y, &[(A31, k1), (A32, k2)]));
    let k4 = rhs(comb(y, &[(A41, k1), (A42, k2), (A43, k3)]));
    let k5 = rhs(comb(y, &[(A51, k1), (A52, k2), (A53, k3), (A54, k4)]));
    let k6 = rhs(comb(
        y,
        &[(A61, k1), (A62, k2), (A63, k3), (A64, k4), (A65, k5)],
    ));
    let y5 = comb(y, &[(B1, k1), (B3, k3), (B4, k4), (B5, k5), (B6, k6)]);
    let k7 = rhs(y5);

    let mut err = [0.0; 3];
    for i in 0..3 {
        err[i] = h
            * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
    }
    (y5, err)
}

/// Integer-count state of the well-mixed stochastic system.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WellMixedState {
    /// Volume in m^3.
    pub volume: f64,
    pub n_a: u64,
    pub n_b: u64,
    pub n_c: u64,
    pub time: f64,
}

impl WellMixedState {
    pub fn new(volume: f64, n_a: u64, n_b: u64, n_c: u64) -> Self {
        Self {
            volume,
            n_a,
            n_b,
            n_c,
            time: 0.0,
        }
    }

    pub fn concentrations(&self) -> ReactionTriple {
        ReactionTriple::new(
            self.n_a as f64 / self.volume,
            self.n_b as f64 / self.volume,
            self.n_c as f64 / self.volume,
        )
    }
}

/// One exact event-driven trajectory sampled on a uniform output grid.
#[derive(Clone, Debug)]
pub struct SsaTrajectory {
    pub times: Vec<f64>,
    /// Counts [n_a, n_b, n_c] at each sample time.
    pub counts: Vec<[u64; 3]>,
}

/// Exact stochastic simulation (direct method) of A + B <-> C with
/// propensities kf n_a n_b / V and kb n_c.
pub fn ssa_trajectory(
    state: WellMixedState,
    params: &ReactionParams,
    t_end: f64,
    samples: usize,
    stream: RngStream,
) -> Result<SsaTrajectory> {
    if !state.volume.is_finite() || state.volume <= 0.0 {
        return Err(Error::Oracle(format!(
            "SSA volume must be positive, got {}",
            state.volume
        )));
    }
    if !t_end.is_finite() || t_end <= 0.0 || samples == 0 {
        return Err(Error::Oracle("SSA needs t_end > 0 and samples > 0".into()));
    }
    let forward_rate = params.kappa_f / state.volume;
    if !forward_rate.is_finite() {
        return Err(Error::Oracle("non-finite forward propensity scale".into()));
    }

    let mut rng = stream.rng();
    let mut n = [state.n_a, state.n_b, state.n_c];
    let mut t = state.time;

    let sample_times: Vec<f64> = (1..=samples).map(|i| t_end * i as f64 / samples as f64).collect();
    let mut times = Vec::with_capacity(samples + 1);
    let mut counts = Vec::with_capacity(samples + 1);
    times.push(t);
    counts.push(n);
    let mut next_sample = 0usize;

    loop {
        let a_forward = forward_rate * n[0] as f64 * n[1] as f64;
        let a_backward = params.kappa_b * n[2] as f64;
        let total = a_forward + a_backward;
        let t_event = if total > 0.0 {
            let u: f64 = rng.random();
            t - (1.0 - u).ln() / total
        } else {
            f64::INFINITY
        };

        while next_sample < samples && sample_times[next_sample] <= t_event {
            times.push(sample_times[next_sample]);
            counts.push(n);
            next_sample += 1;
        }
        if next_sample >= samples || t_event > t_end {
            break;
        }

        t = t_event;
        let pick: f64 = rng.random();
        if pick * total < a_forward {
            n[0] -= 1;
            n[1] -= 1;
            n[2] += 1;
        } else {
            n[0] += 1;
            n[1] += 1;
            n[2] -= 1;
        }
    }
    while next_sample < samples {
        times.push(sample_times[next_sample]);
        counts.push(n);
        next_sample += 1;
    }

    Ok(SsaTrajectory { times, counts })
}

/// Ensemble mean and standard error of SSA concentrations on a shared
/// sample grid. Trajectory i uses `stream.child(i)`, so the result is
/// independent of how trajectories are distributed over workers.
#[derive(Clone, Debug)]
pub struct SsaEnsemble {
    pub times: Vec<f64>,
    pub mean: Vec<[f64; 3]>,
    pub se: Vec<[f64; 3]>,
    pub trajectories: usize,
}

pub fn ssa_ensemble(
    state: WellMixedState,
    params: &ReactionParams,
    t_end: f64,
    samples: usize,
    trajectories: usize,
    stream: RngStream,
) -> Result<SsaEnsemble> {
    let runs: Vec<SsaTrajectory> = {
        #[cfg(feature = "parallel")]
        {
            (0..trajectories)
                .into_par_iter()
                .map(|i| ssa_trajectory(state, params, t_end, samples, stream.child(i as u64)))
                .collect::<Result<Vec<_>>>()?
        }
        #[cfg(not(feature = "parallel"))]
        {
            (0..trajectories)
                .map(|i| ssa_trajectory(state, params, t_end, samples, stream.child(i as u64)))
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(reduce_ensemble(state.volume, runs, trajectories))
}

/// Single-threaded variant of [`ssa_ensemble`]; identical output.
pub fn ssa_ensemble_serial(
    state: WellMixedState,
    params: &ReactionParams,
    t_end: f64,
    samples: usize,
    trajectories: usize,
    stream: RngStream,
) -> Result<SsaEnsemble> {
    let runs: Vec<SsaTrajectory> = (0..trajectories)
        .map(|i| ssa_trajectory(state, params, t_end, samples, stream.child(i as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(reduce_ensemble(state.volume, runs, trajectories))
}

fn reduce_ensemble(volume: f64, runs: Vec<SsaTrajectory>, trajectories: usize) -> SsaEnsemble {
    let times = runs[0].times.clone();
    let n_t = times.len();
    let mut mean = vec![[0.0; 3]; n_t];
    let mut m2 = vec![[0.0; 3]; n_t];
    // Welford in trajectory order: deterministic reduction.
    for (i, run) in runs.iter().enumerate() {
        let count = (i + 1) as f64;
        for (ti, c) in run.counts.iter().enumerate() {
            for s in 0..3 {
                let x = c[s] as f64 / volume;
                let delta = x - mean[ti][s];
                mean[ti][s] += delta / count;
                m2[ti][s] += delta * (x - mean[ti][s]);
            }
        }
    }
    let n = trajectories as f64;
    let se = m2
        .iter()
        .map(|row| {
            let mut out = [0.0; 3];
            for s in 0..3 {
                let var = if trajectories > 1 { row[s] / (n - 1.0) } else { 0.0 };
                out[s] = (var / n).sqrt();
            }
            out
        })
        .collect();
    SsaEnsemble {
        times,
        mean,
        se,
        trajectories,
    }
}

/// Options for the uniform-field validation experiment.
#[derive(Clone, Debug)]
pub struct UniformValidationOptions {
    /// Uniform initial concentrations (molecules/m^3).
    pub initial: PerSpecies<f64>,
    pub t_end: f64,
    /// Number of comparison samples after t = 0.
    pub samples: usize,
    pub ssa_trajectories: usize,
    /// Well-mixed volume for the SSA; chosen so initial counts land in
    /// the hundreds-to-thousands range.
    pub ssa_volume: f64,
    pub stream: RngStream,
}

impl Default for UniformValidationOptions {
    fn default() -> Self {
        Self {
            initial: PerSpecies::new(6e13, 6e13, 0.0),
            t_end: 3.0,
            samples: 60,
            ssa_trajectories: 1000,
            ssa_volume: 1e-11,
            stream: RngStream::new(0, 0x5353_4131),
        }
    }
}

/// Three-route comparison on the spatially uniform scenario.
#[derive(Clone, Debug)]
pub struct UniformValidationReport {
    pub times: Vec<f64>,
    /// Concentrations at the receiver node from the full PDE solver.
    pub solver: Vec<[f64; 3]>,
    pub ode: Vec<[f64; 3]>,
    pub ssa_mean: Vec<[f64; 3]>,
    pub ssa_se: Vec<[f64; 3]>,
    /// Per-species max of |solver - ode| / ode over samples where the
    /// reference is meaningfully nonzero.
    pub max_rel_dev_solver_vs_ode: [f64; 3],
    /// Per-species max |z| of the SSA ensemble mean against the ODE.
    pub max_abs_z_ssa_vs_ode: [f64; 3],
}

impl UniformValidationReport {
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(
            w,
            "t,c_A_solver,c_A_ode,c_A_ssa_mean,c_A_ssa_se,c_B_solver,c_B_ode,c_B_ssa_mean,c_B_ssa_se,c_C_solver,c_C_ode,c_C_ssa_mean,c_C_ssa_se"
        )?;
        for (i, &t) in self.times.iter().enumerate() {
            write!(w, "{t:.8e}")?;
            for s in 0..3 {
                write!(
                    w,
                    ",{:.8e},{:.8e},{:.8e},{:.8e}",
                    self.solver[i][s], self.ode[i][s], self.ssa_mean[i][s], self.ssa_se[i][s]
                )?;
            }
            writeln!(w)?;
        }
        for (s, name) in ["A", "B", "C"].iter().enumerate() {
            writeln!(
                w,
                "# max_rel_dev_solver_vs_ode_{name} = {:.6e}",
                self.max_rel_dev_solver_vs_ode[s]
            )?;
            writeln!(
                w,
                "# max_abs_z_ssa_vs_ode_{name} = {:.4}",
                self.max_abs_z_ssa_vs_ode[s]
            )?;
        }
        Ok(())
    }
}

/// Run the uniform-initialization validation: the full solver, the ODE
/// oracle, and an SSA ensemble on the same scenario. Requires equal
/// diffusion coefficients so that diffusion has no effect on the
/// (spatially uniform) concentrations.
pub fn fig1_experiment(
    config: &ScenarioConfig,
    opts: &UniformValidationOptions,
) -> Result<UniformValidationReport> {
    let d_a = config.diffusion(Species::A);
    for s in [Species::B, Species::C] {
        if config.diffusion(s) != d_a {
            return Err(Error::Oracle(
                "uniform validation requires equal diffusion coefficients for all species".into(),
            ));
        }
    }
    if opts.samples == 0 || opts.t_end <= 0.0 {
        return Err(Error::Oracle("need samples > 0 and t_end > 0".into()));
    }

    // Route 1: full PDE solver from a uniform field.
    let grid = Arc::new(config.grid.build()?);
    let field = crate::scenario::ConcentrationField::uniform(grid, opts.initial.clone());
    let mut run_config = config.clone();
    run_config.t_max = opts.t_end;
    run_config.symbol_interval = opts.t_end;
    run_config.probe = crate::scenario::ProbeDeployment::None;
    run_config.validate()?;
    let schedule = ReleaseSchedule::new(Vec::new(), vec![0], opts.t_end)?;
    let trace = run_field(&run_config, field, &schedule, |_, _| {})?;

    // Route 2: ODE oracle.
    let c0 = ReactionTriple::new(opts.initial.a, opts.initial.b, opts.initial.c);
    let ode = ode_trajectory(c0, &config.reaction, opts.t_end, opts.samples)?;

    // Route 3: SSA ensemble.
    let ssa_state = WellMixedState::new(
        opts.ssa_volume,
        (opts.initial.a * opts.ssa_volume).round() as u64,
        (opts.initial.b * opts.ssa_volume).round() as u64,
        (opts.initial.c * opts.ssa_volume).round() as u64,
    );
    let ensemble = ssa_ensemble(
        ssa_state,
        &config.reaction,
        opts.t_end,
        opts.samples,
        opts.ssa_trajectories,
        opts.stream,
    )?;

    // Downsample the solver trace onto the comparison grid.
    let mut solver = Vec::with_capacity(opts.samples + 1);
    for &t in &ode.times {
        let step = (t / run_config.delta_t).round() as usize;
        let idx = step.min(trace.len() - 1);
        solver.push([trace.a_rx[idx], trace.b_rx[idx], trace.c_rx[idx]]);
    }

    let scale = (opts.initial.a + opts.initial.c).max(opts.initial.b + opts.initial.c);
    let mut max_rel = [0.0f64; 3];
    let mut max_z = [0.0f64; 3];
    let ssa_initial = ssa_state.concentrations();
    let discretization = [
        (opts.initial.a - ssa_initial.a).abs(),
        (opts.initial.b - ssa_initial.b).abs(),
        (opts.initial.c - ssa_initial.c).abs(),
    ];
    for (i, st) in ode.states.iter().enumerate() {
        let reference = [st.a, st.b, st.c];
        for s in 0..3 {
            if reference[s] > 1e-6 * scale {
                let rel = (solver[i][s] - reference[s]).abs() / reference[s];
                max_rel[s] = max_rel[s].max(rel);
            }
            let se = ensemble.se[i][s];
            if se > 0.0 {
                // Allow for the integer rounding of the initial counts.
                let dev = (ensemble.mean[i][s] - reference[s]).abs() - discretization[s];
                max_z[s] = max_z[s].max(dev.max(0.0) / se);
            }
        }
    }

    Ok(UniformValidationReport {
        times: ode.times,
        solver,
        ode: ode.states.iter().map(|s| [s.a, s.b, s.c]).collect(),
        ssa_mean: ensemble.mean,
        ssa_se: ensemble.se,
        max_rel_dev_solver_vs_ode: max_rel,
        max_abs_z_ssa_vs_ode: max_z,
    })
}
