//! Grids, validated fluid states, boundary location, resampling, parabolic
//! scaling, and snapshot (de)serialization.

use serde::{Deserialize, Serialize};

use crate::calculus::fd_weights;
use crate::interp::CubicInterpolant;
use crate::{fmt_f64, Result, SimError};

/// Relative clamp for tiny negative interior `q` produced by resampling.
pub const DEFAULT_CLAMP_TOL: f64 = 1e-10;

/// Relative tolerance on matching domain endpoints (resampling contract).
const SAME_DOMAIN_TOL: f64 = 1e-9;

/// Model parameters. `beta` is the adiabatic weight of the pressure-head
/// equation; `eps_star` is the extra Hölder exponent used by the top control
/// norm in [`crate::energy::compute_controls`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub beta: f64,
    pub eps_star: f64,
}

impl Params {
    pub const DIM: usize = 1;

    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(SimError::InvalidParams(format!(
                "beta must be positive and finite, got {beta}"
            )));
        }
        Ok(Params { beta, eps_star: 0.01 })
    }

    /// `alpha = 1/beta`, the exponent of the degenerate weight `q^alpha`.
    pub fn alpha(&self) -> f64 {
        1.0 / self.beta
    }

    /// Critical scaling index `1/2 + d/2 + 1/(2 beta)` of the model.
    pub fn kappa0(&self) -> f64 {
        0.5 + 0.5 * Self::DIM as f64 + 0.5 / self.beta
    }
}

impl Default for Params {
    fn default() -> Self {
        Params { beta: 1.0, eps_star: 0.01 }
    }
}

/// Strictly increasing node set with at least 8 nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    nodes: Vec<f64>,
}

impl Grid {
    pub fn new(nodes: Vec<f64>) -> Result<Self> {
        if nodes.len() < 8 {
            return Err(SimError::InvalidState(format!(
                "grid needs at least 8 nodes, got {}",
                nodes.len()
            )));
        }
        if nodes.iter().any(|x| !x.is_finite()) {
            return Err(SimError::InvalidState("grid nodes must be finite".into()));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(SimError::InvalidState(
                "grid nodes must be strictly increasing".into(),
            ));
        }
        Ok(Grid { nodes })
    }

    /// Uniform grid on `[a, b]`. Endpoints are exact; the node set is built
    /// mirror-symmetrically so that symmetric domains stay symmetric in
    /// floating point.
    pub fn uniform(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a < b) {
            return Err(SimError::InvalidState(format!(
                "uniform grid needs a < b, got [{a}, {b}]"
            )));
        }
        let mut nodes = vec![0.0; n.max(2)];
        let n = nodes.len();
        let len = b - a;
        for i in 0..=(n - 1) / 2 {
            let t = i as f64 / (n - 1) as f64;
            nodes[i] = a + len * t;
            nodes[n - 1 - i] = b - len * t;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.5 * (a + b);
        }
        nodes[0] = a;
        nodes[n - 1] = b;
        Grid::new(nodes)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn a(&self) -> f64 {
        self.nodes[0]
    }

    pub fn b(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn domain_len(&self) -> f64 {
        self.b() - self.a()
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}

/// One-sided interface slopes of `q` and their minimum; the minimum is the
/// nondegeneracy margin that continuation criteria monitor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonDegeneracy {
    pub c_left: f64,
    pub c_right: f64,
    pub c: f64,
}

/// Validated fluid state on a moving interval: `q > 0` strictly inside,
/// `q = 0` exactly at both endpoint nodes, `sigma > 0` throughout.
/// Immutable by construction; all evolution produces new states.
#[derive(Clone, Debug, PartialEq)]
pub struct FluidState {
    pub grid: Grid,
    pub q: Vec<f64>,
    pub v: Vec<f64>,
    pub sigma: Vec<f64>,
    pub params: Params,
}

impl FluidState {
    pub fn new(
        grid: Grid,
        q: Vec<f64>,
        v: Vec<f64>,
        sigma: Vec<f64>,
        params: Params,
    ) -> Result<Self> {
        let n = grid.len();
        if q.len() != n || v.len() != n || sigma.len() != n {
            return Err(SimError::GridMismatch(format!(
                "field lengths (q {}, v {}, sigma {}) do not match grid ({n})",
                q.len(),
                v.len(),
                sigma.len()
            )));
        }
        for (name, field) in [("q", &q), ("v", &v), ("sigma", &sigma)] {
            if field.iter().any(|x| !x.is_finite()) {
                return Err(SimError::InvalidState(format!("{name} has non-finite values")));
            }
        }
        if q[0] != 0.0 || q[n - 1] != 0.0 {
            return Err(SimError::InvalidState(format!(
                "q must vanish exactly at the endpoints, got {} and {}",
                q[0],
                q[n - 1]
            )));
        }
        if q[1..n - 1].iter().any(|&x| x <= 0.0) {
            return Err(SimError::InvalidState(
                "q must be strictly positive at interior nodes".into(),
            ));
        }
        if sigma.iter().any(|&s| s <= 0.0) {
            return Err(SimError::InvalidState("sigma must be strictly positive".into()));
        }
        let state = FluidState { grid, q, v, sigma, params };
        let nd = state.nondegeneracy();
        if nd.c_left == 0.0 || nd.c_right == 0.0 {
            return Err(SimError::InvalidState(
                "one-sided slope of q vanishes at an endpoint".into(),
            ));
        }
        Ok(state)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_q(&self) -> f64 {
        self.q.iter().cloned().fold(0.0, f64::max)
    }

    /// One-sided second-order interface slopes of `q`.
    pub fn nondegeneracy(&self) -> NonDegeneracy {
        let x = self.grid.nodes();
        let n = x.len();
        let wl = fd_weights(&x[..3], x[0], 1);
        let c_left = (0..3).map(|i| wl[i] * self.q[i]).sum::<f64>().abs();
        let wr = fd_weights(&x[n - 3..], x[n - 1], 1);
        let c_right = (0..3)
            .map(|i| wr[i] * self.q[n - 3 + i])
            .sum::<f64>()
            .abs();
        NonDegeneracy { c_left, c_right, c: c_left.min(c_right) }
    }

    /// Limited-cubic interpolant of one of this state's fields.
    pub fn interpolant<'a>(&'a self, values: &'a [f64]) -> CubicInterpolant<'a> {
        CubicInterpolant::new(self.grid.nodes(), values)
    }
}

/// Locates the vacuum interface positions bracketing the single strictly
/// positive block of `q_samples`. Samples outside the gas may be negative or
/// zero. Roots are taken from the cubic through the 4 nodes nearest each sign
/// change, solved to 1e-12 of the domain length; a sample that is exactly
/// zero adjacent to the block is itself the interface. A block touching the
/// first/last sample yields that grid endpoint.
pub fn locate_boundary(grid: &Grid, q_samples: &[f64]) -> Result<(f64, f64)> {
    let x = grid.nodes();
    let n = x.len();
    if q_samples.len() != n {
        return Err(SimError::GridMismatch(format!(
            "q has {} samples for a {n}-node grid",
            q_samples.len()
        )));
    }
    let mut blocks: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if q_samples[i] > 0.0 {
            let start = i;
            while i < n && q_samples[i] > 0.0 {
                i += 1;
            }
            blocks.push((start, i - 1));
        } else {
            i += 1;
        }
    }
    match blocks.len() {
        0 => return Err(SimError::NoVacuumBoundary),
        1 => {}
        k => return Err(SimError::DisconnectedSupport(k)),
    }
    let (lo, hi) = blocks[0];
    let x_left = if lo == 0 {
        x[0]
    } else if q_samples[lo - 1] == 0.0 {
        x[lo - 1]
    } else {
        cubic_root_in(x, q_samples, lo - 1)?
    };
    let x_right = if hi == n - 1 {
        x[n - 1]
    } else if q_samples[hi + 1] == 0.0 {
        x[hi + 1]
    } else {
        cubic_root_in(x, q_samples, hi)?
    };
    Ok((x_left, x_right))
}

/// Root of the cubic through the 4 nodes nearest the sign change on
/// `[x[i], x[i+1]]`, found by bisection to 1e-12 of the domain length.
fn cubic_root_in(x: &[f64], q: &[f64], i: usize) -> Result<f64> {
    let n = x.len();
    let start = i.saturating_sub(1).min(n - 4);
    let xs = &x[start..start + 4];
    let qs = &q[start..start + 4];
    // Newton divided differences for the interpolating cubic.
    let mut coef = [qs[0], qs[1], qs[2], qs[3]];
    for level in 1..4 {
        for k in (level..4).rev() {
            coef[k] = (coef[k] - coef[k - 1]) / (xs[k] - xs[k - level]);
        }
    }
    let eval = |t: f64| {
        let mut acc = coef[3];
        for k in (0..3).rev() {
            acc = acc * (t - xs[k]) + coef[k];
        }
        acc
    };
    let (mut a, mut b) = (x[i], x[i + 1]);
    let (fa, fb) = (eval(a), eval(b));
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 {
        // The cubic does not change sign even though the data does; fall back
        // to the secant root of the data pair.
        return Ok(a + (b - a) * q[i] / (q[i] - q[i + 1]));
    }
    let tol = 1e-12 * (x[n - 1] - x[0]).abs();
    let mut fa = fa;
    while b - a > tol {
        let m = 0.5 * (a + b);
        let fm = eval(m);
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Resamples a state onto a new grid spanning the same domain. Interface
/// values of `q` are pinned to exactly zero; interior negatives within
/// `clamp_tol * max(q)` are lifted, larger ones are errors.
pub fn resample(state: &FluidState, new_grid: &Grid) -> Result<FluidState> {
    resample_with_tol(state, new_grid, DEFAULT_CLAMP_TOL)
}

pub fn resample_with_tol(
    state: &FluidState,
    new_grid: &Grid,
    clamp_tol: f64,
) -> Result<FluidState> {
    let tol = SAME_DOMAIN_TOL * state.grid.domain_len();
    for (new, old) in [(new_grid.a(), state.grid.a()), (new_grid.b(), state.grid.b())] {
        if (new - old).abs() > tol {
            return Err(SimError::OutOfDomain {
                x: new,
                lo: state.grid.a(),
                hi: state.grid.b(),
            });
        }
    }
    let targets: Vec<f64> = new_grid
        .nodes()
        .iter()
        .map(|&x| x.clamp(state.grid.a(), state.grid.b()))
        .collect();
    let mut q = state.interpolant(&state.q).eval_sorted(&targets);
    let v = state.interpolant(&state.v).eval_sorted(&targets);
    let sigma = state.interpolant(&state.sigma).eval_sorted(&targets);
    let n = q.len();
    q[0] = 0.0;
    q[n - 1] = 0.0;
    clamp_interior_q(&mut q, clamp_tol)?;
    FluidState::new(new_grid.clone(), q, v, sigma, state.params)
}

/// Lifts interior values of `q` in `(-tol_abs, tol_abs]` to `tol_abs` where
/// `tol_abs = clamp_tol * max(q)`; values at or below `-tol_abs` are errors.
pub(crate) fn clamp_interior_q(q: &mut [f64], clamp_tol: f64) -> Result<()> {
    let max_q = q.iter().cloned().fold(0.0, f64::max);
    let tol_abs = clamp_tol * max_q;
    let n = q.len();
    for (i, qi) in q.iter_mut().enumerate().take(n - 1).skip(1) {
        if *qi <= 0.0 || *qi < tol_abs {
            if *qi <= -tol_abs {
                return Err(SimError::InvalidState(format!(
                    "interior q = {qi} at node {i} below clamp tolerance -{tol_abs}"
                )));
            }
            *qi = tol_abs;
        }
    }
    Ok(())
}

/// Parabolic scaling map: nodes shrink by `tau^2`, `q` by `tau^2`, `v` by
/// `tau`, `sigma` unchanged. Pure sample relabeling, no interpolation.
pub fn scale_state(state: &FluidState, tau: f64) -> Result<FluidState> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(SimError::InvalidParams(format!(
            "scaling factor must be positive and finite, got {tau}"
        )));
    }
    let t2 = tau * tau;
    let nodes = state.grid.nodes().iter().map(|&x| x / t2).collect();
    let q = state.q.iter().map(|&y| y / t2).collect();
    let v = state.v.iter().map(|&y| y / tau).collect();
    FluidState::new(Grid::new(nodes)?, q, v, state.sigma.clone(), state.params)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc {
    t: f64,
    beta: f64,
    nodes: Vec<f64>,
    q: Vec<f64>,
    v: Vec<f64>,
    sigma: Vec<f64>,
}

/// Serializes `(t, state)` as a single-line JSON object with 17-significant-
/// digit floats (bit-exact round-trip).
pub fn write_snapshot(state: &FluidState, t: f64) -> String {
    let arr = |xs: &[f64]| {
        let parts: Vec<String> = xs.iter().map(|&x| fmt_f64(x)).collect();
        format!("[{}]", parts.join(","))
    };
    format!(
        "{{\"t\":{},\"beta\":{},\"nodes\":{},\"q\":{},\"v\":{},\"sigma\":{}}}",
        fmt_f64(t),
        fmt_f64(state.params.beta),
        arr(state.grid.nodes()),
        arr(&state.q),
        arr(&state.v),
        arr(&state.sigma)
    )
}

/// Parses one snapshot line back into `(t, state)`.
pub fn read_snapshot(line: &str) -> Result<(f64, FluidState)> {
    let doc: SnapshotDoc = serde_json::from_str(line)?;
    let params = Params::new(doc.beta)?;
    let state = FluidState::new(Grid::new(doc.nodes)?, doc.q, doc.v, doc.sigma, params)?;
    Ok((doc.t, state))
}

/// Builds the canonical parabolic test profile `q = coef * (r^2 - x^2)` with
/// linear velocity `v = a x` and constant entropy on a fresh uniform grid.
/// Shared by the oracle and by unit tests.
pub fn parabolic_state(
    a: f64,
    coef: f64,
    r: f64,
    sigma_bar: f64,
    params: Params,
    n: usize,
) -> Result<FluidState> {
    if !(coef > 0.0) || !(r > 0.0) || !(sigma_bar > 0.0) {
        return Err(SimError::InvalidParams(format!(
            "parabolic state needs positive coefficient, radius, entropy; got ({coef}, {r}, {sigma_bar})"
        )));
    }
    let grid = Grid::uniform(-r, r, n)?;
    let q = grid
        .nodes()
        .iter()
        .map(|&x| (coef * ((r - x) * (r + x))).max(0.0))
        .collect();
    let v = grid.nodes().iter().map(|&x| a * x).collect();
    let sigma = vec![sigma_bar; grid.len()];
    FluidState::new(grid, q, v, sigma, params)
}
