//! Exact pointwise solution of the reaction-only ODE system over one time
//! step, applied independently at every grid node.
//!
//! For A + B <-> C with forward rate kappa_f and backward rate kappa_b,
//! the differences c_A - c_B and sums c_A + c_C are conserved, which
//! reduces the system to one Riccati equation with a closed-form flow.
//! The constants are recomputed from the incoming state at every step, so
//! iterating the step reproduces the exact trajectory of the autonomous
//! ODE.

use crate::error::{Error, Result};
use crate::scenario::{ConcentrationField, ReactionParams, Species};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Relative tolerance on |c_A - c_B| below which the kappa_b = 0 flow
/// switches to the equal-concentration limit form: the general formula's
/// denominator cancels about eight digits there.
const DEGENERACY_TOL: f64 = 1e-8;

/// Tiny negative outputs up to this fraction of the local concentration
/// scale are attributed to rounding and clamped to zero.
const CLAMP_TOL: f64 = 1e-9;

/// Concentrations of the three species at one spatial point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReactionTriple {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl ReactionTriple {
    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    pub fn get(&self, species: Species) -> f64 {
        match species {
            Species::A => self.a,
            Species::B => self.b,
            Species::C => self.c,
        }
    }
}

/// Advance the reaction-only system by `dt`, exactly.
pub fn reaction_step(state: ReactionTriple, dt: f64, params: &ReactionParams) -> Result<ReactionTriple> {
    let ReactionTriple { a, b, c } = state;
    let kf = params.kappa_f;
    let kb = params.kappa_b;

    if dt == 0.0 || (kf == 0.0 && kb == 0.0) {
        return Ok(state);
    }

    if kf == 0.0 {
        // Pure first-order decay of C; the closed form divides by kappa_f
        // and cannot be used here.
        let decay = (-kb * dt).exp();
        let gained = c * (1.0 - decay);
        return Ok(ReactionTriple::new(a + gained, b + gained, c * decay));
    }

    let c12 = a + c;
    let c3 = a + b;

    // Far-field tails underflow toward the denormal range where the flow
    // arithmetic loses all relative precision. Such states are empty (far
    // below one molecule per cubic meter) and the reaction moves nothing.
    if c12.max(c3) < 1e-150 {
        return Ok(state);
    }

    // a = c = 0 is an exact fixed point (the forward reaction needs A,
    // the backward reaction needs C); bypassing the flow keeps the
    // product field exactly zero wherever no signal molecules have been.
    if c12 == 0.0 {
        return Ok(state);
    }

    if kb == 0.0 && (a - b).abs() <= DEGENERACY_TOL * a.max(b).max(1.0) {
        // The limit form advances the midpoint of a and b; the flow
        // preserves their difference exactly.
        let a_next = equal_concentration_step(a, b, kf, dt) + 0.5 * (a - b);
        return finish(a_next, a - b, c12, c3);
    }

    let c11 = a - b;
    let c2 = f64::hypot(kb - kf * c11, 2.0 * (kf * kb * c12).sqrt());
    // The textbook grouping of the flow,
    //   a' = (c2 + kf c11 - kb - (c2 - kf c11 + kb) c4 E) / (2 kf (1 + c4 E))
    // with c4 = (c2 - kf c3 - kb) / (c2 + kf c3 + kb) and E = exp(-c2 dt),
    // cancels catastrophically when c2 dt is small and c4 is near -1
    // (tiny kb with nearly equal a and b). Multiplying through by the c4
    // denominator and using (c2 + kf c11 - kb)(c2 + kf c3 + kb) -
    // (c2 - kf c11 + kb)(c2 - kf c3 - kb) = 4 kf c2 a gives an
    // algebraically identical form whose small-exponent limit is exact
    // through expm1. Underflow of the exponential is the equilibrium
    // limit, not an error.
    let p = c2 - kf * c3 - kb;
    let v = c2 - kf * c11 + kb;
    let em = (-c2 * dt).exp_m1();
    let a_next = (4.0 * kf * c2 * a - v * p * em) / (2.0 * kf * (2.0 * c2 + p * em));

    if !a_next.is_finite() {
        return Err(Error::Reaction(format!(
            "non-finite intermediate (a={a:.3e}, b={b:.3e}, c={c:.3e}, kf={kf:.3e}, kb={kb:.3e}, dt={dt:.3e})"
        )));
    }
    finish(a_next, c11, c12, c3)
}

/// Equal-concentration limit of the kappa_b = 0 flow:
/// a(dt) = b(dt) = a / (1 + kappa_f dt a). Exposed for branch-consistency
/// checks against the general formula.
pub fn equal_concentration_step(a: f64, b: f64, kf: f64, dt: f64) -> f64 {
    let mid = 0.5 * (a + b);
    mid / (1.0 + kf * dt * mid)
}

/// Derive b and c from the conserved combinations so stoichiometric
/// conservation holds bit-exactly, then clamp rounding-level negatives.
fn finish(a_next: f64, c11: f64, c12: f64, c3: f64) -> Result<ReactionTriple> {
    let scale = c12.max(c3);
    let tol = CLAMP_TOL * scale;

    let mut a_out = a_next;
    let mut b_out = a_next - c11;
    let mut c_out = c12 - a_next;

    for v in [&mut a_out, &mut b_out, &mut c_out] {
        if !v.is_finite() {
            return Err(Error::Reaction("non-finite concentration after step".into()));
        }
        if *v < 0.0 {
            if -*v <= tol {
                *v = 0.0;
            } else {
                return Err(Error::Reaction(format!(
                    "conservation violation: concentration {:.6e} below -{tol:.3e}",
                    *v
                )));
            }
        }
    }
    Ok(ReactionTriple::new(a_out, b_out, c_out))
}

/// Apply [`reaction_step`] at every grid node independently. The field
/// timestamp is unchanged; the solver handles composition.
pub fn reaction_field_step(
    field: &ConcentrationField,
    dt: f64,
    params: &ReactionParams,
) -> Result<ConcentrationField> {
    #[cfg(feature = "parallel")]
    {
        reaction_field_step_parallel(field, dt, params)
    }
    #[cfg(not(feature = "parallel"))]
    {
        reaction_field_step_serial(field, dt, params)
    }
}

/// Single-threaded variant of [`reaction_field_step`]; both produce
/// identical output.
pub fn reaction_field_step_serial(
    field: &ConcentrationField,
    dt: f64,
    params: &ReactionParams,
) -> Result<ConcentrationField> {
    let mut out = field.clone();
    let n_z = field.grid().n_z();
    let a_in = field.species(Species::A).as_slice().unwrap().to_vec();
    let b_in = field.species(Species::B).as_slice().unwrap().to_vec();
    let c_in = field.species(Species::C).as_slice().unwrap().to_vec();
    let grid = field.grid().clone();

    {
        let [a_out, b_out, c_out] = split_species_mut(&mut out);
        for idx in 0..a_in.len() {
            let next = reaction_step(ReactionTriple::new(a_in[idx], b_in[idx], c_in[idx]), dt, params)
                .map_err(|e| node_error(e, &grid, idx, n_z))?;
            a_out[idx] = next.a;
            b_out[idx] = next.b;
            c_out[idx] = next.c;
        }
    }
    Ok(out)
}

#[cfg(feature = "parallel")]
fn reaction_field_step_parallel(
    field: &ConcentrationField,
    dt: f64,
    params: &ReactionParams,
) -> Result<ConcentrationField> {
    let mut out = field.clone();
    let n_z = field.grid().n_z();
    let a_in = field.species(Species::A).as_slice().unwrap();
    let b_in = field.species(Species::B).as_slice().unwrap();
    let c_in = field.species(Species::C).as_slice().unwrap();
    let grid = field.grid().clone();

    {
        let [a_out, b_out, c_out] = split_species_mut(&mut out);
        a_out
            .par_chunks_mut(n_z)
            .zip(b_out.par_chunks_mut(n_z))
            .zip(c_out.par_chunks_mut(n_z))
            .enumerate()
            .try_for_each(|(k, ((row_a, row_b), row_c))| -> Result<()> {
                let base = k * n_z;
                for j in 0..n_z {
                    let idx = base + j;
                    let next = reaction_step(
                        ReactionTriple::new(a_in[idx], b_in[idx], c_in[idx]),
                        dt,
                        params,
                    )
                    .map_err(|e| node_error(e, &grid, idx, n_z))?;
                    row_a[j] = next.a;
                    row_b[j] = next.b;
                    row_c[j] = next.c;
                }
                Ok(())
            })?;
    }
    Ok(out)
}

fn split_species_mut(field: &mut ConcentrationField) -> [&mut [f64]; 3] {
    // The three arrays are distinct allocations; borrow them one at a
    // time through raw pointers to hand out disjoint mutable slices.
    unsafe {
        let a = field.species_mut(Species::A) as *mut ndarray::Array2<f64>;
        let b = field.species_mut(Species::B) as *mut ndarray::Array2<f64>;
        let c = field.species_mut(Species::C) as *mut ndarray::Array2<f64>;
        [
            (*a).as_slice_mut().unwrap(),
            (*b).as_slice_mut().unwrap(),
            (*c).as_slice_mut().unwrap(),
        ]
    }
}

fn node_error(err: Error, grid: &crate::scenario::CylGrid, idx: usize, n_z: usize) -> Error {
    let k = idx / n_z;
    let j = idx % n_z;
    Error::ReactionNode {
        rho: grid.rho()[k],
        z: grid.z()[j],
        message: err.to_string(),
    }
}
