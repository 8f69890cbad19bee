//! Finite differences on nonuniform nodes, quadrature, degenerate-weight
//! Sobolev norms, interface-adapted seminorms, and report-only checks of the
//! weighted interpolation inequalities.

use serde::{Deserialize, Serialize};

use crate::state::FluidState;
use crate::{Grid, Result, SimError};

/// Finite-difference weights for the `m`-th derivative at `x0` from the
/// nodes `xs` (Fornberg's recurrence, exact on polynomials of degree
/// `< xs.len()`).
pub fn fd_weights(xs: &[f64], x0: f64, m: usize) -> Vec<f64> {
    let n = xs.len();
    assert!(n > m, "need more nodes than the derivative order");
    let mut c = vec![vec![0.0; m + 1]; n];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=m.min(i)).rev() {
                    c[i][k] = c1 * (k as f64 * c[i - 1][k - 1] - c5 * c[i - 1][k]) / c2;
                }
                c[i][0] = -c1 * c5 * c[i - 1][0] / c2;
            }
            for k in (1..=m.min(i)).rev() {
                c[j][k] = (c4 * c[j][k] - k as f64 * c[j][k - 1]) / c3;
            }
            c[j][0] = c4 * c[j][0] / c3;
        }
        c1 = c2;
    }
    (0..n).map(|i| c[i][m]).collect()
}

/// First or second derivative samples of `f` on the grid. Order 1 uses
/// 3-point stencils (centered in the interior, one-sided at the ends;
/// second-order accurate); order 2 uses 5-point windows, which stay at least
/// second-order on arbitrary node spacing. Stencils are applied to
/// `f - f(x_i)`, so constant fields differentiate to exactly zero.
pub fn derivative(grid: &Grid, f: &[f64], order: usize) -> Result<Vec<f64>> {
    let x = grid.nodes();
    let n = x.len();
    if f.len() != n {
        return Err(SimError::GridMismatch(format!(
            "field has {} samples for a {n}-node grid",
            f.len()
        )));
    }
    let width = match order {
        1 => 3,
        2 => 5,
        _ => {
            return Err(SimError::Unsupported(format!(
                "derivative order {order} (only 1 and 2)"
            )))
        }
    };
    let mut out = vec![0.0; n];
    for i in 0..n {
        let lo = i.saturating_sub(width / 2).min(n - width);
        let w = fd_weights(&x[lo..lo + width], x[i], order);
        out[i] = (0..width).map(|k| w[k] * (f[lo + k] - f[i])).sum();
    }
    Ok(out)
}

/// `m`-th derivative for `m <= 4`, composed from the first- and second-order
/// stencils (`3 = 1∘2`, `4 = 2∘2`).
pub fn derivative_m(grid: &Grid, f: &[f64], m: usize) -> Result<Vec<f64>> {
    match m {
        0 => Ok(f.to_vec()),
        1 | 2 => derivative(grid, f, m),
        3 => derivative(grid, &derivative(grid, f, 2)?, 1),
        4 => derivative(grid, &derivative(grid, f, 2)?, 2),
        _ => Err(SimError::Unsupported(format!(
            "derivative order {m} (weighted norms stop at 4)"
        ))),
    }
}

/// Trapezoid quadrature over the grid.
pub fn integrate(grid: &Grid, f: &[f64]) -> f64 {
    let x = grid.nodes();
    let mut acc = 0.0;
    for i in 0..x.len() - 1 {
        acc += 0.5 * (f[i] + f[i + 1]) * (x[i + 1] - x[i]);
    }
    acc
}

/// Pointwise weight samples `q^e` with the interface convention: where
/// `q = 0` and the exponent is negative, the adjacent interior value of the
/// *whole integrand* is used instead (callers apply this via
/// [`apply_endpoint_limit`]); nonnegative exponents evaluate to the literal
/// power (`0^0 = 1`).
pub(crate) fn weight_pow(q: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        q.powf(e)
    }
}

/// Replaces the endpoint entries of an integrand by their interior-limit
/// neighbors when the weight exponent is negative (the continuum integrand is
/// finite a.e.; the literal endpoint value would be `inf * 0`).
fn apply_endpoint_limit(vals: &mut [f64], exponent: f64) {
    let n = vals.len();
    if exponent < 0.0 && n >= 3 {
        vals[0] = vals[1];
        vals[n - 1] = vals[n - 2];
    }
}

/// `∫ q^e f g dx` by trapezoid quadrature, with the interior-limit endpoint
/// convention when `e < 0`.
pub fn weighted_inner(state: &FluidState, f: &[f64], g: &[f64], e: f64) -> f64 {
    let mut vals: Vec<f64> = state
        .q
        .iter()
        .zip(f.iter().zip(g))
        .map(|(&q, (&a, &b))| weight_pow(q, e) * a * b)
        .collect();
    apply_endpoint_limit(&mut vals, e);
    integrate(&state.grid, &vals)
}

/// Degenerate-weight Sobolev norm specification: all derivatives up to `j`
/// measured against the weight `q^lambda`, `lambda > -1/2`, `j <= 4`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormSpec {
    pub j: usize,
    pub lambda: f64,
}

/// `( Σ_{m<=j} ∫ |q^lambda ∂^m f|^2 dx )^{1/2}`.
pub fn weighted_norm(state: &FluidState, f: &[f64], spec: NormSpec) -> Result<f64> {
    if !(spec.lambda > -0.5) {
        return Err(SimError::InvalidIndices(format!(
            "weight exponent {} must exceed -1/2",
            spec.lambda
        )));
    }
    if spec.j > 4 {
        return Err(SimError::Unsupported(format!(
            "weighted norm order {} (max 4)",
            spec.j
        )));
    }
    let mut total = 0.0;
    for m in 0..=spec.j {
        let dm = derivative_m(&state.grid, f, m)?;
        let mut vals: Vec<f64> = state
            .q
            .iter()
            .zip(&dm)
            .map(|(&q, &g)| weight_pow(q, 2.0 * spec.lambda) * g * g)
            .collect();
        apply_endpoint_limit(&mut vals, 2.0 * spec.lambda);
        total += integrate(&state.grid, &vals);
    }
    Ok(total.sqrt())
}

/// `|| q^lambda ∂^j f ||_{L^p}` for `p` in `[1, ∞]` (`p = f64::INFINITY`
/// takes the sup over nodes), with the same interface convention.
pub fn weighted_lp_norm(
    state: &FluidState,
    f: &[f64],
    j: usize,
    lambda: f64,
    p: f64,
) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(SimError::InvalidIndices(format!("p = {p} must be >= 1")));
    }
    let dj = derivative_m(&state.grid, f, j)?;
    let mut vals: Vec<f64> = state
        .q
        .iter()
        .zip(&dj)
        .map(|(&q, &g)| weight_pow(q, lambda) * g.abs())
        .collect();
    apply_endpoint_limit(&mut vals, lambda);
    if p.is_infinite() {
        Ok(vals.iter().cloned().fold(0.0, f64::max))
    } else {
        let powed: Vec<f64> = vals.iter().map(|&v| v.powf(p)).collect();
        Ok(integrate(&state.grid, &powed).powf(1.0 / p))
    }
}

/// Boundary-adapted seminorm families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SeminormKind {
    /// `sup |f(x)-f(y)| / |x-y|^gamma`, `0 < gamma <= 1`.
    Holder(f64),
    /// `sup |f(x)-f(y)| / (sqrt(q(x)) + sqrt(q(y)) + sqrt(|x-y|))`.
    CtildeHalf,
    /// Hölder with exponent 1.
    Lipschitz,
}

/// Max over node pairs. Above 2000 nodes a stratified subsample of 2000
/// evenly spaced nodes keeps the scan quadratic in a fixed budget.
pub fn seminorm(state: &FluidState, f: &[f64], kind: SeminormKind) -> Result<f64> {
    if f.len() != state.len() {
        return Err(SimError::GridMismatch(format!(
            "field has {} samples for a {}-node grid",
            f.len(),
            state.len()
        )));
    }
    let gamma = match kind {
        SeminormKind::Holder(g) => {
            if !(g > 0.0 && g <= 1.0) {
                return Err(SimError::InvalidIndices(format!(
                    "Hölder exponent {g} outside (0, 1]"
                )));
            }
            Some(g)
        }
        SeminormKind::Lipschitz => Some(1.0),
        SeminormKind::CtildeHalf => None,
    };
    let n = state.len();
    const CAP: usize = 2000;
    let idx: Vec<usize> = if n <= CAP {
        (0..n).collect()
    } else {
        (0..CAP)
            .map(|k| (k as f64 * (n - 1) as f64 / (CAP - 1) as f64).round() as usize)
            .collect()
    };
    let x = state.grid.nodes();
    // on a uniform grid the pair separation takes only n-1 distinct values,
    // so the denominator powers can be tabulated once instead of per pair
    let dx0 = x[1] - x[0];
    let uniform = x
        .windows(2)
        .all(|p| ((p[1] - p[0]) - dx0).abs() <= 1e-9 * dx0);
    let table: Option<Vec<f64>> = if uniform {
        Some(
            (0..n)
                .map(|k| {
                    let d = k as f64 * dx0;
                    match gamma {
                        Some(g) => d.powf(g),
                        None => d.sqrt(),
                    }
                })
                .collect(),
        )
    } else {
        None
    };
    let sqrt_q: Vec<f64> = state.q.iter().map(|&q| q.max(0.0).sqrt()).collect();
    let mut sup: f64 = 0.0;
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            let num = (f[i] - f[j]).abs();
            let den = match (&table, gamma) {
                (Some(tab), Some(_)) => tab[j - i],
                (Some(tab), None) => sqrt_q[i] + sqrt_q[j] + tab[j - i],
                (None, Some(g)) => (x[i] - x[j]).abs().powf(g),
                (None, None) => sqrt_q[i] + sqrt_q[j] + (x[i] - x[j]).abs().sqrt(),
            };
            if num > sup * den {
                sup = num / den;
            }
        }
    }
    Ok(sup)
}

/// Which interpolation inequality to probe.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PropId {
    /// weighted-to-weighted interpolation
    P1,
    /// sup-norm left factor
    P2,
    /// homogeneous `C^{1/2}` left factor
    P3,
    /// interface-adapted `C~^{1/2}` left factor
    P4,
    /// trilinear Hardy bound with weight `(x - a)^{alpha-1}`
    Hardy3,
}

impl PropId {
    pub fn as_str(&self) -> &'static str {
        match self {
            PropId::P1 => "P1",
            PropId::P2 => "P2",
            PropId::P3 => "P3",
            PropId::P4 => "P4",
            PropId::Hardy3 => "Hardy3",
        }
    }
}

/// Index tuple for the interpolation checks. Unused entries are ignored by
/// propositions that do not involve them (`p0`, `lambda0` only enter P1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterpIndices {
    pub m: usize,
    pub j: usize,
    pub p0: f64,
    pub pm: f64,
    pub lambda0: f64,
    pub lambda_m: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct InterpCheck {
    pub prop: PropId,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

fn inv(p: f64) -> f64 {
    if p.is_infinite() {
        0.0
    } else {
        1.0 / p
    }
}

/// Evaluates one inequality: returns both sides and their ratio (0 when both
/// vanish). `fields` carries one field, except `Hardy3` which takes three.
/// Index constraints of the underlying proposition are enforced.
pub fn check_interpolation(
    state: &FluidState,
    prop: PropId,
    fields: &[&[f64]],
    idx: &InterpIndices,
) -> Result<InterpCheck> {
    let bad = |msg: String| Err(SimError::InvalidIndices(msg));
    let finish = |lhs: f64, rhs: f64| {
        let ratio = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { lhs / rhs };
        Ok(InterpCheck { prop, lhs, rhs, ratio })
    };
    if prop != PropId::Hardy3 {
        if fields.len() != 1 {
            return bad(format!("{} takes one field, got {}", prop.as_str(), fields.len()));
        }
        let (m, j) = (idx.m, idx.j);
        if !(j > 0 && j < m) {
            return bad(format!("need 0 < j < m, got j = {j}, m = {m}"));
        }
        if m > 4 {
            return Err(SimError::Unsupported(format!("m = {m} exceeds derivative cap 4")));
        }
    }
    let f = fields[0];
    match prop {
        PropId::P1 => {
            let (m, j) = (idx.m as f64, idx.j as f64);
            if !(idx.p0 >= 1.0 && idx.pm >= 1.0) {
                return bad(format!("p0 = {}, pm = {} must be >= 1", idx.p0, idx.pm));
            }
            if !(idx.lambda0 > -inv(idx.p0)) || !(idx.lambda_m > -inv(idx.pm)) {
                return bad(format!(
                    "need lambda0 > -1/p0 and lambda_m > -1/pm, got ({}, {})",
                    idx.lambda0, idx.lambda_m
                ));
            }
            if !(m - idx.lambda_m - inv(idx.pm) > -idx.lambda0 - inv(idx.p0)) {
                return bad("order/weight balance m - lambda_m - d/pm > -lambda0 - d/p0 fails".into());
            }
            let th = j / m;
            let pj = 1.0 / (th * inv(idx.pm) + (1.0 - th) * inv(idx.p0));
            let lj = th * idx.lambda_m + (1.0 - th) * idx.lambda0;
            let lhs = weighted_lp_norm(state, f, idx.j, lj, pj)?;
            let n0 = weighted_lp_norm(state, f, 0, idx.lambda0, idx.p0)?;
            let nm = weighted_lp_norm(state, f, idx.m, idx.lambda_m, idx.pm)?;
            finish(lhs, n0.powf(1.0 - th) * nm.powf(th))
        }
        PropId::P2 | PropId::P3 | PropId::P4 => {
            let (m, j) = (idx.m as f64, idx.j as f64);
            if !(idx.pm > 1.0 && idx.pm.is_finite()) {
                return bad(format!("pm = {} must lie in (1, inf)", idx.pm));
            }
            let upper = match prop {
                PropId::P2 => m - inv(idx.pm),
                _ => m - 0.5 - inv(idx.pm),
            };
            let lower = match prop {
                PropId::P4 => m / 2.0 - 1.0,
                _ => -inv(idx.pm),
            };
            if !(idx.lambda_m > lower && idx.lambda_m < upper) {
                return bad(format!(
                    "lambda_m = {} outside ({lower}, {upper}) for {}",
                    idx.lambda_m,
                    prop.as_str()
                ));
            }
            let th = match prop {
                PropId::P3 => (j - 0.5) / (m - 0.5),
                _ => j / m,
            };
            let lj = match prop {
                PropId::P4 => th * idx.lambda_m - (1.0 - th) * 0.5,
                _ => th * idx.lambda_m,
            };
            let pj = idx.pm / th;
            let lhs = weighted_lp_norm(state, f, idx.j, lj, pj)?;
            let low = match prop {
                PropId::P2 => f.iter().fold(0.0f64, |acc, &v| acc.max(v.abs())),
                PropId::P3 => seminorm(state, f, SeminormKind::Holder(0.5))?,
                _ => seminorm(state, f, SeminormKind::CtildeHalf)?,
            };
            let nm = weighted_lp_norm(state, f, idx.m, idx.lambda_m, idx.pm)?;
            finish(lhs, low.powf(1.0 - th) * nm.powf(th))
        }
        PropId::Hardy3 => {
            if fields.len() != 3 {
                return bad(format!("Hardy3 takes three fields, got {}", fields.len()));
            }
            let alpha = state.params.alpha();
            let x = state.grid.nodes();
            let delta: Vec<f64> = x.iter().map(|&t| t - x[0]).collect();
            let mut prod: Vec<f64> = (0..x.len())
                .map(|i| {
                    weight_pow(delta[i], alpha - 1.0)
                        * (fields[0][i] * fields[1][i] * fields[2][i]).abs()
                })
                .collect();
            if alpha - 1.0 < 0.0 {
                prod[0] = prod[1];
            }
            let lhs = integrate(&state.grid, &prod);
            let mut rhs = 0.0;
            for i in 0..3 {
                let (ja, jb) = ((i + 1) % 3, (i + 2) % 3);
                let di = derivative(&state.grid, fields[i], 1)?;
                let sup = di.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
                let l2 = |g: &[f64]| {
                    let vals: Vec<f64> = (0..x.len())
                        .map(|k| weight_pow(delta[k], alpha) * g[k] * g[k])
                        .collect();
                    integrate(&state.grid, &vals).sqrt()
                };
                rhs += sup * l2(fields[ja]) * l2(fields[jb]);
            }
            finish(lhs, rhs)
        }
    }
}

/// One row of the standard inequality corpus.
#[derive(Clone, Debug, Serialize)]
pub struct CorpusRow {
    pub f_id: String,
    pub idx: InterpIndices,
    pub check: InterpCheck,
}

/// Runs a fixed corpus of analytic fields through every proposition on the
/// given state. Ratios are recorded for regression comparison across grid
/// refinements.
pub fn interpolation_corpus(state: &FluidState) -> Result<Vec<CorpusRow>> {
    let x = state.grid.nodes();
    let (a, b) = (state.grid.a(), state.grid.b());
    let mk = |g: &dyn Fn(f64) -> f64| -> Vec<f64> { x.iter().map(|&t| g(t)).collect() };
    let sin3: Vec<f64> = mk(&|t| (3.0 * t).sin());
    let mix: Vec<f64> = mk(&|t| (2.0 * t).cos() + 0.5 * t);
    let quad: Vec<f64> = mk(&|t| t * t);
    let qsin5: Vec<f64> = x.iter().zip(&state.q).map(|(&t, &qv)| qv * (5.0 * t).sin()).collect();
    let qfield = state.q.clone();
    let bump: Vec<f64> = mk(&|t| (t - a) * (b - t));
    let bump_sin: Vec<f64> = mk(&|t| (t - a).sin() * (b - t));
    let bump_sq: Vec<f64> = mk(&|t| (t - a) * (b - t) * (b - t));

    let ix = |m, j, p0, pm, l0, lm| InterpIndices {
        m,
        j,
        p0,
        pm,
        lambda0: l0,
        lambda_m: lm,
    };
    let inf = f64::INFINITY;
    let single: Vec<(&str, &Vec<f64>, PropId, InterpIndices)> = vec![
        ("sin3x", &sin3, PropId::P1, ix(2, 1, 2.0, 2.0, 0.0, 1.0)),
        ("sin3x", &sin3, PropId::P1, ix(2, 1, 4.0, 2.0, 0.25, 0.75)),
        ("x^2", &quad, PropId::P1, ix(2, 1, 2.0, 2.0, 0.5, 0.5)),
        ("q*sin5x", &qsin5, PropId::P1, ix(3, 2, 2.0, 2.0, 0.0, 1.25)),
        ("sin3x", &sin3, PropId::P1, ix(2, 1, inf, 2.0, 0.25, 1.0)),
        ("sin3x", &sin3, PropId::P2, ix(2, 1, 2.0, 2.0, 0.0, 0.5)),
        ("cos2x+x/2", &mix, PropId::P2, ix(3, 1, 2.0, 4.0, 0.0, 1.0)),
        ("sin3x", &sin3, PropId::P3, ix(2, 1, 2.0, 2.0, 0.0, 0.5)),
        ("q", &qfield, PropId::P3, ix(2, 1, 2.0, 2.0, 0.0, 0.4)),
        ("sin3x", &sin3, PropId::P4, ix(2, 1, 2.0, 2.0, 0.0, 0.5)),
        ("q*sin5x", &qsin5, PropId::P4, ix(2, 1, 2.0, 4.0, 0.0, 0.6)),
    ];
    let mut rows = Vec::new();
    for (f_id, f, prop, idx) in single {
        let check = check_interpolation(state, prop, &[f], &idx)?;
        rows.push(CorpusRow { f_id: f_id.to_string(), idx, check });
    }
    let hardy_idx = ix(0, 0, 0.0, 0.0, 0.0, 0.0);
    for (f_id, triple) in [
        ("bump^3", [&bump, &bump, &bump]),
        ("bump*bumpsin*bumpsq", [&bump, &bump_sin, &bump_sq]),
    ] {
        let check = check_interpolation(
            state,
            PropId::Hardy3,
            &[triple[0], triple[1], triple[2]],
            &hardy_idx,
        )?;
        rows.push(CorpusRow { f_id: f_id.to_string(), idx: hardy_idx, check });
    }
    Ok(rows)
}
