//! Exact reference solutions: parabolic-profile states whose evolution
//! reduces to a three-dimensional ODE system, integrated to tight tolerance
//! with step-doubling error control. These provide ground truth for the PDE
//! stepper's convergence tests.

use serde::{Deserialize, Serialize};

use crate::state::{parabolic_state, FluidState, Params};
use crate::{Result, SimError};

/// Orbit parameters of the exact family
/// `q = b (r^2 - x^2)`, `v = a x`, `sigma = sigma_bar` on `(-r, r)`.
///
/// The fields evolve by `a' = 2 sigma_bar b - a^2`, `b' = -(beta+2) a b`,
/// `r' = a r`, with `b r^{beta+2}` invariant; `sigma_bar` never moves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffineOrbit {
    pub a: f64,
    pub b: f64,
    pub r: f64,
    pub sigma_bar: f64,
}

impl Default for AffineOrbit {
    fn default() -> Self {
        AffineOrbit { a: 0.0, b: 0.5, r: 1.0, sigma_bar: 1.0 }
    }
}

impl AffineOrbit {
    pub fn validate(&self) -> Result<()> {
        let ok = self.a.is_finite()
            && self.b.is_finite()
            && self.b > 0.0
            && self.r.is_finite()
            && self.r > 0.0
            && self.sigma_bar.is_finite()
            && self.sigma_bar > 0.0;
        if ok {
            Ok(())
        } else {
            Err(SimError::InvalidParams(format!("degenerate orbit parameters {self:?}")))
        }
    }

    /// Samples the orbit as a grid state with `n` nodes.
    pub fn state(&self, params: Params, n: usize) -> Result<FluidState> {
        self.validate()?;
        parabolic_state(self.a, self.b, self.r, self.sigma_bar, params, n)
    }

    /// The conserved combination `b r^{beta+2}`.
    pub fn invariant(&self, params: &Params) -> f64 {
        self.b * self.r.powf(params.beta + 2.0)
    }
}

/// Time derivatives `(a', b', r')`.
pub fn affine_rhs(o: &AffineOrbit, params: &Params) -> [f64; 3] {
    [
        2.0 * o.sigma_bar * o.b - o.a * o.a,
        -(params.beta + 2.0) * o.a * o.b,
        o.a * o.r,
    ]
}

fn rk4_step(o: &AffineOrbit, h: f64, params: &Params) -> AffineOrbit {
    let add = |base: &AffineOrbit, k: &[f64; 3], c: f64| AffineOrbit {
        a: base.a + c * k[0],
        b: base.b + c * k[1],
        r: base.r + c * k[2],
        sigma_bar: base.sigma_bar,
    };
    let k1 = affine_rhs(o, params);
    let k2 = affine_rhs(&add(o, &k1, 0.5 * h), params);
    let k3 = affine_rhs(&add(o, &k2, 0.5 * h), params);
    let k4 = affine_rhs(&add(o, &k3, h), params);
    AffineOrbit {
        a: o.a + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        b: o.b + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        r: o.r + h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
        sigma_bar: o.sigma_bar,
    }
}

/// Fixed-step fourth-order integration (no error control); exposed for
/// convergence-rate measurements.
pub fn integrate_affine_steps(
    o: &AffineOrbit,
    t: f64,
    params: &Params,
    n_steps: usize,
) -> AffineOrbit {
    let mut cur = *o;
    let h = t / n_steps as f64;
    for _ in 0..n_steps {
        cur = rk4_step(&cur, h, params);
    }
    cur
}

const ORACLE_TOL: f64 = 1e-10;
const MAX_STEPS_LOG2: u32 = 20;

/// Integrates the orbit to time `t` with step-doubling until the
/// extrapolated error estimate `max |y_n - y_{2n}| / 15` (relative) drops
/// below `tol`; the finer solution is returned.
pub fn integrate_affine_with_tol(
    o: &AffineOrbit,
    t: f64,
    params: &Params,
    tol: f64,
) -> Result<AffineOrbit> {
    o.validate()?;
    if !t.is_finite() {
        return Err(SimError::InvalidParams(format!("non-finite target time {t}")));
    }
    if t == 0.0 {
        return Ok(*o);
    }
    let mut n: usize = 256;
    let mut coarse = integrate_affine_steps(o, t, params, n);
    while n < (1usize << MAX_STEPS_LOG2) {
        n *= 2;
        let fine = integrate_affine_steps(o, t, params, n);
        let rel = |c: f64, f: f64| (c - f).abs() / (1.0 + f.abs()) / 15.0;
        let err = rel(coarse.a, fine.a)
            .max(rel(coarse.b, fine.b))
            .max(rel(coarse.r, fine.r));
        if !err.is_finite()
            || !(fine.a.is_finite() && fine.b.is_finite() && fine.r.is_finite())
        {
            return Err(SimError::OracleToleranceFailure(format!(
                "orbit integration diverged near t = {t} ({fine:?})"
            )));
        }
        if err <= tol {
            fine.validate().map_err(|_| {
                SimError::OracleToleranceFailure(format!(
                    "orbit left the admissible region at t = {t} ({fine:?})"
                ))
            })?;
            return Ok(fine);
        }
        coarse = fine;
    }
    Err(SimError::OracleToleranceFailure(format!(
        "step-doubling could not reach tolerance {tol} by 2^{MAX_STEPS_LOG2} steps"
    )))
}

/// Integration at the standard reference tolerance `1e-10`.
pub fn integrate_affine(o: &AffineOrbit, t: f64, params: &Params) -> Result<AffineOrbit> {
    integrate_affine_with_tol(o, t, params, ORACLE_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::conserved_quantities;

    fn p() -> Params {
        Params::default()
    }

    #[test]
    fn rhs_hand_values() {
        let o = AffineOrbit { a: 0.2, b: 0.5, r: 1.2, sigma_bar: 1.5 };
        let [da, db, dr] = affine_rhs(&o, &p());
        assert!((da - 1.46).abs() < 1e-15, "{da}");
        assert!((db + 0.3).abs() < 1e-15, "{db}");
        assert!((dr - 0.24).abs() < 1e-15, "{dr}");
    }

    #[test]
    fn invariant_is_conserved() {
        let o = AffineOrbit { a: 0.4, b: 0.5, r: 1.0, sigma_bar: 1.0 };
        let i0 = o.invariant(&p());
        let o1 = integrate_affine(&o, 1.0, &p()).unwrap();
        let i1 = o1.invariant(&p());
        assert!((i1 - i0).abs() < 1e-11 * i0, "{i0} vs {i1}");
        // and the orbit actually moved
        assert!((o1.r - o.r).abs() > 1e-2);
    }

    #[test]
    fn fixed_step_integration_is_fourth_order() {
        let o = AffineOrbit { a: 0.3, b: 0.5, r: 1.0, sigma_bar: 1.0 };
        let t = 0.5;
        let reference = integrate_affine_steps(&o, t, &p(), 4096);
        let err = |n: usize| {
            let y = integrate_affine_steps(&o, t, &p(), n);
            (y.a - reference.a)
                .abs()
                .max((y.b - reference.b).abs())
                .max((y.r - reference.r).abs())
        };
        let ratio = err(32) / err(64);
        assert!((8.0..32.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn finite_difference_residual_of_the_field_equations() {
        // The orbit encodes the continuum system: check
        //   d_t q + v q_x + beta q v_x = 0 and d_t v + v v_x + sigma q_x = 0
        // at fixed interior x by differencing the integrated orbit in time.
        let o = AffineOrbit { a: 0.3, b: 0.6, r: 1.1, sigma_bar: 1.2 };
        let params = p();
        let (t, dt) = (0.37, 1e-5);
        let at = |tt: f64| integrate_affine(&o, tt, &params).unwrap();
        let (om, oc, op) = (at(t - dt), at(t), at(t + dt));
        let x = 0.3 * oc.r;
        let q = |s: &AffineOrbit| s.b * (s.r * s.r - x * x);
        let v = |s: &AffineOrbit| s.a * x;
        let dq_dt = (q(&op) - q(&om)) / (2.0 * dt);
        let dv_dt = (v(&op) - v(&om)) / (2.0 * dt);
        let (qx, vx) = (-2.0 * oc.b * x, oc.a);
        let res_q = dq_dt + v(&oc) * qx + params.beta * q(&oc) * vx;
        let res_v = dv_dt + v(&oc) * vx + oc.sigma_bar * qx;
        assert!(res_q.abs() < 1e-8, "{res_q}");
        assert!(res_v.abs() < 1e-8, "{res_v}");
    }

    #[test]
    fn orbit_state_energy_matches_closed_form() {
        // a = 0, b = 1/2, r = 1, sigma = 1: E = ∫ (q)^2 = 1/4 · 16/15 = 4/15
        let s = AffineOrbit::default().state(p(), 801).unwrap();
        let (e, _) = conserved_quantities(&s);
        assert!((e - 4.0 / 15.0).abs() < 1e-5, "{e}");
    }

    #[test]
    fn zero_time_and_failure_paths() {
        let o = AffineOrbit::default();
        assert_eq!(integrate_affine(&o, 0.0, &p()).unwrap(), o);
        // unattainable tolerance exhausts step-doubling
        assert!(matches!(
            integrate_affine_with_tol(&o, 0.2, &p(), -1.0),
            Err(SimError::OracleToleranceFailure(_))
        ));
        let bad = AffineOrbit { b: -1.0, ..o };
        assert!(bad.validate().is_err());
    }
}
