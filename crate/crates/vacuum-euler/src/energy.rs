//! Conserved integrals, the quadratic energy of the linearized system, the
//! higher-order modified energies built on the good unknowns, the control
//! functionals that drive growth bounds, and exponential envelopes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calculus::{derivative, integrate, seminorm, weighted_inner, SeminormKind};
use crate::operators::{apply_operator, good_unknowns, OperatorId};
use crate::state::{FluidState, NonDegeneracy};
use crate::{Result, SimError};

/// `(E_phys, entropy_mass)`:
/// `∫ q^{1+alpha} + (1+beta)/2 q^alpha sigma^{-1} v^2 dx` and
/// `∫ q^alpha sigma^2 dx`, both conserved by the continuum flow.
pub fn conserved_quantities(state: &FluidState) -> (f64, f64) {
    let alpha = state.params.alpha();
    let beta = state.params.beta;
    let n = state.len();
    let mut internal = vec![0.0; n];
    let mut kinetic = vec![0.0; n];
    let mut mass = vec![0.0; n];
    for i in 0..n {
        let (q, v, sg) = (state.q[i], state.v[i], state.sigma[i]);
        let qa = q.powf(alpha);
        internal[i] = q.powf(1.0 + alpha);
        kinetic[i] = 0.5 * (1.0 + beta) * qa * v * v / sg;
        mass[i] = qa * sg * sg;
    }
    let e_phys = integrate(&state.grid, &internal) + integrate(&state.grid, &kinetic);
    (e_phys, integrate(&state.grid, &mass))
}

/// Quadratic energy of the linearized system:
/// `½ ∫ q^{alpha-1} s^2 + q^alpha sigma^{-1} (beta w^2 + zeta^2) dx`.
pub fn linear_energy(s: &[f64], w: &[f64], zeta: &[f64], state: &FluidState) -> Result<f64> {
    let n = state.len();
    if s.len() != n || w.len() != n || zeta.len() != n {
        return Err(SimError::GridMismatch("perturbation fields must match the grid".into()));
    }
    let alpha = state.params.alpha();
    let beta = state.params.beta;
    let inv_sigma_w: Vec<f64> = (0..n)
        .map(|i| (beta * w[i] * w[i] + zeta[i] * zeta[i]) / state.sigma[i])
        .collect();
    let ones = vec![1.0; n];
    let part_s = weighted_inner(state, s, s, alpha - 1.0);
    let part_wz = weighted_inner(state, &inv_sigma_w, &ones, alpha);
    Ok(0.5 * (part_s + part_wz))
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergySplit {
    pub high: f64,
    pub low: f64,
    pub total: f64,
}

/// Modified order-`2k` energy: the top-order block
/// `∫ q^{alpha-1} [ s_{2k}^2 + beta q sigma^{-1} w_{2k}^2 + q sigma_{2k}^2 ]`
/// (the curl block vanishes identically in one dimension) on the modified
/// good unknowns, plus the zeroth-order block
/// `∫ q^{1+alpha} + (1+beta)/2 q^alpha sigma^{-1} v^2 + q^alpha sigma^2`.
pub fn energy_2k(state: &FluidState, k: usize) -> Result<EnergySplit> {
    let gu = good_unknowns(state, k)?;
    let alpha = state.params.alpha();
    let beta = state.params.beta;
    let n = state.len();
    let mut sigma_2k = state.sigma.clone();
    for _ in 0..k {
        sigma_2k = apply_operator(OperatorId::L5, &sigma_2k, state)?;
    }
    let mut rest = vec![0.0; n];
    for i in 0..n {
        let (q, sg) = (state.q[i], state.sigma[i]);
        rest[i] = beta * q * gu.w2k_leading[i] * gu.w2k_leading[i] / sg
            + q * sigma_2k[i] * sigma_2k[i];
    }
    let ones = vec![1.0; n];
    let high = weighted_inner(state, &gu.s2k_leading, &gu.s2k_leading, alpha - 1.0)
        + weighted_inner(state, &rest, &ones, alpha - 1.0);
    let (e_phys, _) = conserved_quantities(state);
    let sigma_sq: Vec<f64> = state.sigma.iter().map(|&s| s * s).collect();
    let low = e_phys + weighted_inner(state, &sigma_sq, &ones, alpha);
    Ok(EnergySplit { high, low, total: high + low })
}

/// Control functionals with a named breakdown of every summand.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ControlReport {
    /// `‖q‖_{C^{1+eps*}} + ‖v‖_{C^{1/2+eps*}} + ‖sigma‖_{C^{1/2+eps*}} + ‖sigma^{-1}‖_∞`
    pub a_star: f64,
    /// `‖q_x‖_{C~^{0,1/2}} + ‖v_x‖_∞ + ‖sigma_x‖_∞`
    pub b: f64,
    /// `‖q_x‖_∞ + ‖v‖_{C^{1/2}} + ‖sigma‖_{C^{1/2}} + ‖sigma^{-1}‖_∞`
    pub a_prime: f64,
    /// `‖q_x‖_∞ + ‖v_x‖_∞ + ‖sigma_x‖_∞`
    pub b_lin: f64,
    pub components: BTreeMap<String, f64>,
}

fn sup(f: &[f64]) -> f64 {
    f.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()))
}

/// Computes `A*`, `B`, `A'`, and `B_lin` on one state.
pub fn compute_controls(state: &FluidState) -> Result<ControlReport> {
    let eps = state.params.eps_star;
    let g = &state.grid;
    let qx = derivative(g, &state.q, 1)?;
    let vx = derivative(g, &state.v, 1)?;
    let sx = derivative(g, &state.sigma, 1)?;

    let q_c1 = sup(&state.q) + sup(&qx);
    let q_c1e = q_c1 + seminorm(state, &qx, SeminormKind::Holder(eps))?;
    let v_che = sup(&state.v) + seminorm(state, &state.v, SeminormKind::Holder(0.5 + eps))?;
    let s_che = sup(&state.sigma) + seminorm(state, &state.sigma, SeminormKind::Holder(0.5 + eps))?;
    let inv_sigma = state.sigma.iter().fold(0.0f64, |acc, &s| acc.max(1.0 / s));
    let a_star = q_c1e + v_che + s_che + inv_sigma;

    let qx_ctilde = sup(&qx) + seminorm(state, &qx, SeminormKind::CtildeHalf)?;
    let b = qx_ctilde + sup(&vx) + sup(&sx);

    let v_ch = sup(&state.v) + seminorm(state, &state.v, SeminormKind::Holder(0.5))?;
    let s_ch = sup(&state.sigma) + seminorm(state, &state.sigma, SeminormKind::Holder(0.5))?;
    let a_prime = sup(&qx) + v_ch + s_ch + inv_sigma;

    let b_lin = sup(&qx) + sup(&vx) + sup(&sx);

    let mut components = BTreeMap::new();
    components.insert("q_c1_eps".into(), q_c1e);
    components.insert("v_chalf_eps".into(), v_che);
    components.insert("sigma_chalf_eps".into(), s_che);
    components.insert("inv_sigma_sup".into(), inv_sigma);
    components.insert("dq_ctilde_half".into(), qx_ctilde);
    components.insert("dq_sup".into(), sup(&qx));
    components.insert("dv_sup".into(), sup(&vx));
    components.insert("dsigma_sup".into(), sup(&sx));
    components.insert("v_chalf".into(), v_ch);
    components.insert("sigma_chalf".into(), s_ch);
    Ok(ControlReport { a_star, b, a_prime, b_lin, components })
}

/// Per-step diagnostic row recorded along trajectories.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub e_phys: f64,
    pub entropy_mass: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_lin: Option<f64>,
    pub e2k: BTreeMap<usize, EnergySplit>,
    pub controls: ControlReport,
    pub nondeg: NonDegeneracy,
}

/// Assembles the full report at time `t`, with modified energies for each
/// requested order.
pub fn make_report(state: &FluidState, t: f64, ks: &[usize]) -> Result<EnergyReport> {
    let (e_phys, entropy_mass) = conserved_quantities(state);
    let mut e2k = BTreeMap::new();
    for &k in ks {
        e2k.insert(k, energy_2k(state, k)?);
    }
    Ok(EnergyReport {
        t,
        e_phys,
        entropy_mass,
        e_lin: None,
        e2k,
        controls: compute_controls(state)?,
        nondeg: state.nondegeneracy(),
    })
}

/// Cumulative trapezoid integral of a sampled scalar history; times must be
/// strictly increasing.
fn cumulative_integral(history: &[(f64, f64)]) -> Result<Vec<f64>> {
    for pair in history.windows(2) {
        if !(pair[1].0 > pair[0].0) {
            return Err(SimError::InvalidHistory(format!(
                "times must increase strictly, got {} then {}",
                pair[0].0, pair[1].0
            )));
        }
    }
    let mut acc = Vec::with_capacity(history.len());
    let mut run = 0.0;
    acc.push(0.0);
    for pair in history.windows(2) {
        run += 0.5 * (pair[0].1 + pair[1].1) * (pair[1].0 - pair[0].0);
        acc.push(run);
    }
    Ok(acc)
}

/// Envelope `e0 · exp(c_fit · ∫_0^t B ds)` at each history time.
pub fn gronwall_envelope(history: &[(f64, f64)], e0: f64, c_fit: f64) -> Result<Vec<f64>> {
    Ok(cumulative_integral(history)?
        .into_iter()
        .map(|ib| e0 * (c_fit * ib).exp())
        .collect())
}

/// Smallest constant making the envelope dominate a recorded energy series:
/// `max_t log(E(t)/E(0)) / ∫_0^t B` over times where the integral is
/// meaningfully positive (growth against a vanishing integral yields
/// infinity). Returns 0 when the energy never exceeds its initial value.
pub fn envelope_constant(history: &[(f64, f64)], energies: &[f64]) -> Result<f64> {
    if energies.len() != history.len() {
        return Err(SimError::InvalidHistory(format!(
            "{} energies for {} history rows",
            energies.len(),
            history.len()
        )));
    }
    if energies.is_empty() || energies[0] <= 0.0 {
        return Err(SimError::InvalidHistory("need a positive initial energy".into()));
    }
    let ib = cumulative_integral(history)?;
    let mut c: f64 = 0.0;
    for i in 1..energies.len() {
        let growth = (energies[i] / energies[0]).ln();
        if growth <= 0.0 {
            continue;
        }
        if ib[i] <= 1e-14 {
            return Ok(f64::INFINITY);
        }
        c = c.max(growth / ib[i]);
    }
    Ok(c)
}

/// Least-squares fit of `log E(t)/E(0) ~ c · ∫_0^t B` (slope through the
/// origin), reported alongside the hard envelope constant.
pub fn fit_gronwall(history: &[(f64, f64)], energies: &[f64]) -> Result<f64> {
    if energies.len() != history.len() || energies.is_empty() || energies[0] <= 0.0 {
        return Err(SimError::InvalidHistory("mismatched or empty fit inputs".into()));
    }
    let ib = cumulative_integral(history)?;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 1..energies.len() {
        let y = (energies[i] / energies[0]).ln();
        num += y * ib[i];
        den += ib[i] * ib[i];
    }
    Ok(if den == 0.0 { 0.0 } else { num / den })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{parabolic_state, scale_state, Params};

    fn base(n: usize) -> FluidState {
        parabolic_state(0.0, 1.0, 1.0, 1.0, Params::default(), n).unwrap()
    }

    #[test]
    fn conserved_quantity_closed_forms() {
        let s = base(801);
        let (e, m) = conserved_quantities(&s);
        // ∫(1-x^2)^2 = 16/15, ∫(1-x^2) = 4/3
        assert!((e - 16.0 / 15.0).abs() < 1e-5, "{e}");
        assert!((m - 4.0 / 3.0).abs() < 1e-5, "{m}");
        // with velocity: kinetic adds (1+1)/2 ∫ q (ax)^2 = ∫ (1-x^2)x^2 = 4/15
        let sv = parabolic_state(1.0, 1.0, 1.0, 1.0, Params::default(), 801).unwrap();
        let (ev, _) = conserved_quantities(&sv);
        assert!((ev - (16.0 / 15.0 + 4.0 / 15.0)).abs() < 1e-5, "{ev}");
    }

    #[test]
    fn entropy_mass_scaling_law() {
        // tau-scaling multiplies ∫ q^alpha sigma^2 by tau^{-2 alpha - 2}
        let s = base(401);
        let tau = 2.0;
        let scaled = scale_state(&s, tau).unwrap();
        let (_, m0) = conserved_quantities(&s);
        let (_, m1) = conserved_quantities(&scaled);
        let alpha = s.params.alpha();
        let factor = tau.powf(-2.0 * alpha - 2.0);
        assert!((m1 - m0 * factor).abs() < 1e-12 * m0, "{m1} vs {}", m0 * factor);
    }

    #[test]
    fn linear_energy_examples() {
        let s = base(801);
        let n = s.len();
        let zero = vec![0.0; n];
        assert_eq!(linear_energy(&zero, &zero, &zero, &s).unwrap(), 0.0);
        // s = q, w = zeta = 0, alpha = 1: ½∫ q^{alpha-1} s² = ½∫q² = 8/15
        let e = linear_energy(&s.q, &zero, &zero, &s).unwrap();
        assert!((e - 8.0 / 15.0).abs() < 1e-5, "{e}");
        // quadratic form: doubling fields quadruples
        let w: Vec<f64> = s.grid.nodes().to_vec();
        let e1 = linear_energy(&s.q, &w, &w, &s).unwrap();
        let q2: Vec<f64> = s.q.iter().map(|&v| 2.0 * v).collect();
        let w2: Vec<f64> = w.iter().map(|&v| 2.0 * v).collect();
        let e2 = linear_energy(&q2, &w2, &w2, &s).unwrap();
        assert!((e2 - 4.0 * e1).abs() < 1e-12 * e1.abs());
    }

    #[test]
    fn energy_2k_closed_form_at_k1() {
        // q = 1-x^2, v = 0, sigma = 1: s2 = 4x^2-2 and the high block is
        // ∫(4x^2-2)^2 dx = 56/15; sigma_2 = L5(1) = 0 contributes nothing;
        // low = 16/15 + 4/3 (e_phys plus entropy mass at sigma = 1)
        let s = base(801);
        let split = energy_2k(&s, 1).unwrap();
        assert!((split.high - 56.0 / 15.0).abs() < 1e-3, "{}", split.high);
        assert!((split.low - (16.0 / 15.0 + 4.0 / 3.0)).abs() < 1e-4, "{}", split.low);
        assert_eq!(split.total, split.high + split.low);
        assert!(energy_2k(&s, 4).is_err());
    }

    #[test]
    fn energy_2k_invariant_under_regridding() {
        use crate::state::{resample, Grid};
        let s = base(901);
        let a = energy_2k(&s, 1).unwrap();
        let r = resample(&s, &Grid::uniform(-1.0, 1.0, 701).unwrap()).unwrap();
        let b = energy_2k(&r, 1).unwrap();
        let rel = (a.total - b.total).abs() / a.total;
        assert!(rel < 1e-4, "{} vs {} (rel {rel})", a.total, b.total);
    }

    #[test]
    fn control_report_examples() {
        let s = base(801);
        let c = compute_controls(&s).unwrap();
        // |q_x| sup = 2
        assert!((c.components["dq_sup"] - 2.0).abs() < 1e-6);
        // sigma = 1 and v = 0: b reduces to the adapted norm of q_x
        assert!((c.b - c.components["dq_ctilde_half"]).abs() < 1e-14);
        assert!(c.a_star >= c.components["inv_sigma_sup"]);
        assert!(c.b_lin <= c.b + 1e-14);
        // sigma = 2 doubles entropy but halves the inverse sup
        let s2 = parabolic_state(0.0, 1.0, 1.0, 2.0, Params::default(), 401).unwrap();
        let c2 = compute_controls(&s2).unwrap();
        assert!((c2.components["inv_sigma_sup"] - 0.5).abs() < 1e-14);
        // scale invariance of |q_x| sup under tau-scaling
        let scaled = scale_state(&s, 2.0).unwrap();
        let cs = compute_controls(&scaled).unwrap();
        assert!(
            (cs.components["dq_sup"] - c.components["dq_sup"]).abs() < 1e-6,
            "{} vs {}",
            cs.components["dq_sup"],
            c.components["dq_sup"]
        );
    }

    #[test]
    fn gronwall_helpers() {
        // constant B = 1 for unit time: envelope multiplies by e
        let hist: Vec<(f64, f64)> = (0..=100).map(|i| (i as f64 / 100.0, 1.0)).collect();
        let env = gronwall_envelope(&hist, 2.0, 1.0).unwrap();
        assert!((env[100] - 2.0 * std::f64::consts::E).abs() < 1e-10);
        assert_eq!(env[0], 2.0);
        // B = 0: constant envelope
        let flat: Vec<(f64, f64)> = (0..=10).map(|i| (i as f64, 0.0)).collect();
        let env0 = gronwall_envelope(&flat, 3.0, 5.0).unwrap();
        assert!(env0.iter().all(|&v| v == 3.0));
        // unsorted history refused
        assert!(gronwall_envelope(&[(0.0, 1.0), (0.0, 1.0)], 1.0, 1.0).is_err());

        // envelope constant: energies growing exactly like exp(2∫B)
        let energies: Vec<f64> = hist.iter().map(|&(t, _)| (2.0 * t).exp()).collect();
        let c = envelope_constant(&hist, &energies).unwrap();
        assert!((c - 2.0).abs() < 1e-9, "{c}");
        let cf = fit_gronwall(&hist, &energies).unwrap();
        assert!((cf - 2.0).abs() < 1e-9, "{cf}");
        // non-growing energy: constant 0
        let flat_e = vec![1.0; hist.len()];
        assert_eq!(envelope_constant(&hist, &flat_e).unwrap(), 0.0);
    }

    #[test]
    fn report_assembly() {
        let s = base(401);
        let rep = make_report(&s, 0.25, &[1]).unwrap();
        assert_eq!(rep.t, 0.25);
        assert!(rep.e2k.contains_key(&1));
        assert!(rep.e_phys > 0.0 && rep.entropy_mass > 0.0);
        assert!(rep.nondeg.c > 0.0);
        let js = serde_json::to_string(&rep).unwrap();
        assert!(js.contains("\"e_phys\""));
        assert!(!js.contains("e_lin"), "skipped when absent: {js}");
    }
}
