//! Degenerate second-order operators built from the enthalpy-like field `q`,
//! their Dirichlet-form identities, self-adjointness defects, and the
//! second-order "good unknowns" feeding the higher energy functionals.

use crate::calculus::{derivative, weighted_inner};
use crate::state::FluidState;
use crate::{Result, SimError};

/// The operator family. `L1` and `L2` admit a nonnegative first-order shift.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OperatorId {
    /// multiplication by `q_xx`
    L0,
    /// `βq u_xx + (1 + λβ) q_x u_x`
    L1 { lambda: f64 },
    /// `β(q w_x)_x + (1 + λβ) q_x w_x`
    L2 { lambda: f64 },
    /// curl-type operator, identically zero in one dimension
    L3,
    /// `L2 + L0`
    L4,
    /// `q u_xx + (1 + α) q_x u_x`
    L5,
}

impl OperatorId {
    pub const L1_BASE: OperatorId = OperatorId::L1 { lambda: 0.0 };
    pub const L2_BASE: OperatorId = OperatorId::L2 { lambda: 0.0 };

    fn validate(&self) -> Result<()> {
        let lam = match self {
            OperatorId::L1 { lambda } | OperatorId::L2 { lambda } => *lambda,
            _ => 0.0,
        };
        if lam < 0.0 || !lam.is_finite() {
            return Err(SimError::InvalidParams(format!(
                "operator shift {lam} must be a finite nonnegative real"
            )));
        }
        Ok(())
    }

    /// Weight exponent of the space in which the operator is (formally)
    /// self-adjoint: `alpha - 1` for `L1`, `alpha` for the rest.
    fn adjoint_weight(&self, alpha: f64) -> f64 {
        match self {
            OperatorId::L1 { .. } => alpha - 1.0,
            _ => alpha,
        }
    }
}

/// Pointwise application on the state's grid.
pub fn apply_operator(op: OperatorId, u: &[f64], state: &FluidState) -> Result<Vec<f64>> {
    op.validate()?;
    if u.len() != state.len() {
        return Err(SimError::GridMismatch(format!(
            "field has {} samples for a {}-node grid",
            u.len(),
            state.len()
        )));
    }
    let g = &state.grid;
    let n = state.len();
    let beta = state.params.beta;
    let alpha = state.params.alpha();
    match op {
        OperatorId::L3 => Ok(vec![0.0; n]),
        OperatorId::L0 => {
            let qxx = derivative(g, &state.q, 2)?;
            Ok((0..n).map(|i| qxx[i] * u[i]).collect())
        }
        OperatorId::L1 { lambda } => {
            let (ux, uxx) = (derivative(g, u, 1)?, derivative(g, u, 2)?);
            let qx = derivative(g, &state.q, 1)?;
            Ok((0..n)
                .map(|i| beta * state.q[i] * uxx[i] + (1.0 + lambda * beta) * qx[i] * ux[i])
                .collect())
        }
        OperatorId::L2 { lambda } => {
            let (ux, uxx) = (derivative(g, u, 1)?, derivative(g, u, 2)?);
            let qx = derivative(g, &state.q, 1)?;
            // β(q w_x)_x + w_x q_x + λβ q_x w_x, expanded by the product rule
            Ok((0..n)
                .map(|i| {
                    beta * state.q[i] * uxx[i] + (1.0 + beta + lambda * beta) * qx[i] * ux[i]
                })
                .collect())
        }
        OperatorId::L4 => {
            let l2 = apply_operator(OperatorId::L2_BASE, u, state)?;
            let l0 = apply_operator(OperatorId::L0, u, state)?;
            Ok((0..n).map(|i| l2[i] + l0[i]).collect())
        }
        OperatorId::L5 => {
            let (ux, uxx) = (derivative(g, u, 1)?, derivative(g, u, 2)?);
            let qx = derivative(g, &state.q, 1)?;
            Ok((0..n)
                .map(|i| state.q[i] * uxx[i] + (1.0 + alpha) * qx[i] * ux[i])
                .collect())
        }
    }
}

/// Closed-form Dirichlet quadratures. `L1` pairs in the weight `q^{alpha-1}`
/// and reduces to `-β ∫ q^alpha u_x w_x`; `L4` (the divergence-form second
/// order part in the weight `q^alpha`) reduces to `-β ∫ q^{1+alpha} u_x w_x`.
pub fn dirichlet_form(op: OperatorId, u: &[f64], w: &[f64], state: &FluidState) -> Result<f64> {
    op.validate()?;
    if u.len() != state.len() || w.len() != state.len() {
        return Err(SimError::GridMismatch("field/grid size mismatch".into()));
    }
    let alpha = state.params.alpha();
    let beta = state.params.beta;
    let ux = derivative(&state.grid, u, 1)?;
    let wx = derivative(&state.grid, w, 1)?;
    match op {
        OperatorId::L1 { lambda: 0.0 } => Ok(-beta * weighted_inner(state, &ux, &wx, alpha)),
        OperatorId::L4 => Ok(-beta * weighted_inner(state, &ux, &wx, 1.0 + alpha)),
        _ => Err(SimError::Unsupported(format!(
            "Dirichlet form only defined for the unshifted L1 and for L4, got {op:?}"
        ))),
    }
}

const DEFECT_FLOOR: f64 = 1e-30;

/// Relative self-adjointness defect
/// `|<op u, w> - <u, op w>| / (||u|| ||w|| + floor)` in the operator's own
/// weighted inner product.
pub fn adjointness_defect(
    op: OperatorId,
    u: &[f64],
    w: &[f64],
    state: &FluidState,
) -> Result<f64> {
    op.validate()?;
    let e = op.adjoint_weight(state.params.alpha());
    let op_u = apply_operator(op, u, state)?;
    let op_w = apply_operator(op, w, state)?;
    let lhs = weighted_inner(state, &op_u, w, e);
    let rhs = weighted_inner(state, u, &op_w, e);
    let nu = weighted_inner(state, u, u, e).max(0.0).sqrt();
    let nw = weighted_inner(state, w, w, e).max(0.0).sqrt();
    Ok((lhs - rhs).abs() / (nu * nw + DEFECT_FLOOR))
}

/// Second-order good unknowns: the exact `s2`, `w2` and the leading-order
/// modified iterates for `2 <= k <= 3`.
#[derive(Clone, Debug)]
pub struct GoodUnknowns {
    /// `β q σ q_xx + β q q_x σ_x + β(β+1) q v_x² + ½ σ q_x²`
    pub s2: Vec<f64>,
    /// `β q σ v_xx + (β+1) σ v_x q_x`
    pub w2: Vec<f64>,
    /// `(L1)^{k-1} (σ^{-1} s2)`
    pub s2k_leading: Vec<f64>,
    /// `(L2)^{k-1} (σ^{-1} w2)`
    pub w2k_leading: Vec<f64>,
    pub k: usize,
}

/// Builds the good unknowns for order `k` (admissible lower-order remainders
/// of the recurrence are dropped for `k >= 2`; `k > 3` exceeds the stencil
/// accuracy and is refused).
pub fn good_unknowns(state: &FluidState, k: usize) -> Result<GoodUnknowns> {
    if k == 0 || k > 3 {
        return Err(SimError::Unsupported(format!(
            "good unknowns need 1 <= k <= 3, got {k}"
        )));
    }
    let g = &state.grid;
    let n = state.len();
    let beta = state.params.beta;
    let qx = derivative(g, &state.q, 1)?;
    let qxx = derivative(g, &state.q, 2)?;
    let vx = derivative(g, &state.v, 1)?;
    let vxx = derivative(g, &state.v, 2)?;
    let sx = derivative(g, &state.sigma, 1)?;
    let mut s2 = vec![0.0; n];
    let mut w2 = vec![0.0; n];
    for i in 0..n {
        let (q, sg) = (state.q[i], state.sigma[i]);
        s2[i] = beta * q * sg * qxx[i]
            + beta * q * qx[i] * sx[i]
            + beta * (beta + 1.0) * q * vx[i] * vx[i]
            + 0.5 * sg * qx[i] * qx[i];
        w2[i] = beta * q * sg * vxx[i] + (beta + 1.0) * sg * vx[i] * qx[i];
    }
    let mut s2k: Vec<f64> = (0..n).map(|i| s2[i] / state.sigma[i]).collect();
    let mut w2k: Vec<f64> = (0..n).map(|i| w2[i] / state.sigma[i]).collect();
    for _ in 1..k {
        s2k = apply_operator(OperatorId::L1_BASE, &s2k, state)?;
        w2k = apply_operator(OperatorId::L2_BASE, &w2k, state)?;
    }
    Ok(GoodUnknowns { s2, w2, s2k_leading: s2k, w2k_leading: w2k, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{parabolic_state, FluidState, Grid, Params};

    fn base(n: usize) -> FluidState {
        parabolic_state(0.0, 1.0, 1.0, 1.0, Params::default(), n).unwrap()
    }

    fn sup_err(got: &[f64], want: impl Fn(f64) -> f64, x: &[f64]) -> f64 {
        got.iter()
            .zip(x)
            .map(|(&g, &t)| (g - want(t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn pointwise_examples() {
        let s = base(201);
        let x = s.grid.nodes().to_vec();
        let lin: Vec<f64> = x.clone();
        let quad: Vec<f64> = x.iter().map(|&t| t * t).collect();
        // L1 x = -2x, L1 x^2 = 2 - 6x^2 for q = 1 - x^2, beta = 1
        let l1 = apply_operator(OperatorId::L1_BASE, &lin, &s).unwrap();
        assert!(sup_err(&l1, |t| -2.0 * t, &x) < 1e-10);
        let l1q = apply_operator(OperatorId::L1_BASE, &quad, &s).unwrap();
        assert!(sup_err(&l1q, |t| 2.0 - 6.0 * t * t, &x) < 1e-9);
        // L5 x = -4x at alpha = 1
        let l5 = apply_operator(OperatorId::L5, &lin, &s).unwrap();
        assert!(sup_err(&l5, |t| -4.0 * t, &x) < 1e-10);
        // L3 annihilates everything in 1-D
        let l3 = apply_operator(OperatorId::L3, &quad, &s).unwrap();
        assert!(l3.iter().all(|&v| v == 0.0));
        // shifted L1 with lambda = 1 doubles the first-order coefficient
        let l1s = apply_operator(OperatorId::L1 { lambda: 1.0 }, &quad, &s).unwrap();
        assert!(sup_err(&l1s, |t| 2.0 - 10.0 * t * t, &x) < 1e-9);
        assert!(apply_operator(OperatorId::L1 { lambda: -0.5 }, &lin, &s).is_err());
    }

    #[test]
    fn dirichlet_form_closed_value_and_consistency() {
        // u = w = x, q = 1 - x^2, alpha = beta = 1: -∫(1-x^2) dx = -4/3
        let s = base(400);
        let lin: Vec<f64> = s.grid.nodes().to_vec();
        let val = dirichlet_form(OperatorId::L1_BASE, &lin, &lin, &s).unwrap();
        assert!((val + 4.0 / 3.0).abs() < 1e-4, "{val}");
        assert!(val <= 0.0);
        // constant field gives exactly zero (derivative stencils sum to zero)
        let c = vec![2.0; s.len()];
        assert_eq!(dirichlet_form(OperatorId::L1_BASE, &c, &lin, &s).unwrap(), 0.0);

        // direct quadrature <L1 u, w>_{q^{alpha-1}} converges to the form at
        // second order: error ratio >= 3 when halving the spacing
        let quad_of = |n: usize| {
            let s = base(n);
            let x = s.grid.nodes().to_vec();
            let u: Vec<f64> = x.iter().map(|&t| (t + 0.3).powi(2)).collect();
            let w: Vec<f64> = x.clone();
            let form = dirichlet_form(OperatorId::L1_BASE, &u, &w, &s).unwrap();
            let l1u = apply_operator(OperatorId::L1_BASE, &u, &s).unwrap();
            let alpha = s.params.alpha();
            let direct = crate::calculus::weighted_inner(&s, &l1u, &w, alpha - 1.0);
            (direct - form).abs()
        };
        let (e1, e2) = (quad_of(400), quad_of(800));
        assert!(e1 / e2 >= 3.0, "errors {e1} {e2}");
    }

    #[test]
    fn adjointness_defects() {
        let s = base(400);
        let x = s.grid.nodes().to_vec();
        let u: Vec<f64> = x.clone();
        let w: Vec<f64> = x.iter().map(|&t| t * t).collect();
        // u = w: identical inner products, defect exactly zero
        assert_eq!(
            adjointness_defect(OperatorId::L1_BASE, &u, &u, &s).unwrap(),
            0.0
        );
        // multiplication operator is symmetric to rounding
        let d0 = adjointness_defect(OperatorId::L0, &u, &w, &s).unwrap();
        assert!(d0 < 1e-14, "{d0}");
        // L1 and L5 defects small and shrinking under refinement
        for op in [OperatorId::L1_BASE, OperatorId::L5] {
            let d400 = adjointness_defect(op, &u, &w, &s).unwrap();
            assert!(d400 < 1e-3, "{op:?}: {d400}");
        }
    }

    #[test]
    fn good_unknown_closed_forms() {
        // q = 1-x^2, v = 0, sigma = 1, beta = 1: s2 = -2 + 4x^2, w2 = 0
        let s = base(400);
        let x = s.grid.nodes().to_vec();
        let gu = good_unknowns(&s, 1).unwrap();
        assert!(sup_err(&gu.s2, |t| 4.0 * t * t - 2.0, &x) < 1e-10);
        assert!(gu.w2.iter().all(|&v| v == 0.0), "w2 must vanish bitwise");
        assert_eq!(gu.k, 1);
        // k = 1 modified unknowns coincide with sigma^{-1} s2 (sigma = 1 here)
        assert_eq!(gu.s2k_leading, gu.s2);

        // v = x: w2 = (beta+1) sigma v_x q_x = -4x
        let s2 = parabolic_state(1.0, 1.0, 1.0, 1.0, Params::default(), 400).unwrap();
        let gu2 = good_unknowns(&s2, 1).unwrap();
        assert!(sup_err(&gu2.w2, |t| -4.0 * t, s2.grid.nodes()) < 1e-10);

        assert!(good_unknowns(&s, 4).is_err());
        assert!(good_unknowns(&s, 0).is_err());
        // higher iterates exist and are finite
        let gu3 = good_unknowns(&s, 3).unwrap();
        assert!(gu3.s2k_leading.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn good_unknowns_scale_quadratically_in_q() {
        // q -> cq, v -> sqrt(c) v, sigma fixed: s2 -> c^2 s2
        let n = 300;
        let g = Grid::uniform(-1.0, 1.0, n).unwrap();
        let x = g.nodes().to_vec();
        let q: Vec<f64> = x.iter().map(|&t| (1.0 - t * t).max(0.0)).collect();
        let v: Vec<f64> = x.iter().map(|&t| 0.3 * t + 0.1 * t * t).collect();
        let sg: Vec<f64> = x.iter().map(|&t| 1.0 + 0.1 * (2.0 * t).sin()).collect();
        let p = Params::default();
        let s = FluidState::new(g.clone(), q.clone(), v.clone(), sg.clone(), p).unwrap();
        let c: f64 = 2.25;
        let qc: Vec<f64> = q.iter().map(|&t| c * t).collect();
        let vc: Vec<f64> = v.iter().map(|&t| c.sqrt() * t).collect();
        let sc = FluidState::new(g, qc, vc, sg, p).unwrap();
        let a = good_unknowns(&s, 1).unwrap();
        let b = good_unknowns(&sc, 1).unwrap();
        let scale = a.s2.iter().map(|t| t.abs()).fold(0.0, f64::max);
        // second-derivative stencils carry an absolute rounding floor of
        // roughly eps * |q| / h^2, which homogeneity cannot cancel
        let h = 2.0 / (n - 1) as f64;
        let fd_floor = 8.0 * f64::EPSILON / (h * h);
        let tol = c * c * (1e-12 * scale + fd_floor);
        for i in 0..n {
            assert!(
                (b.s2[i] - c * c * a.s2[i]).abs() <= tol,
                "node {i}: {} vs {}",
                b.s2[i],
                c * c * a.s2[i]
            );
        }
    }
}
