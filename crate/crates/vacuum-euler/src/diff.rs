//! Two-solution distance functionals on the common support, the ancillary
//! near-interface cutoff, and stability-ratio monitoring along trajectory
//! pairs.

use serde::Serialize;

use crate::calculus::{integrate, weight_pow};
use crate::state::{FluidState, Grid};
use crate::stepper::Trajectory;
use crate::{Result, SimError};

/// Degree-0 homogeneous cutoff `a(mu, nu) = psi(|nu| / mu)`: identically 1
/// where `|nu| <= 0.8 mu`, identically 0 where `|nu| >= 0.9 mu`, a quintic
/// smoothstep transition between, and 0 at the degenerate corner mu = 0.
pub fn ancillary_a(mu: f64, nu: f64) -> f64 {
    if !(mu > 0.0) {
        return 0.0;
    }
    let r = nu.abs() / mu;
    if r <= 0.8 {
        1.0
    } else if r >= 0.9 {
        0.0
    } else {
        let t = (r - 0.8) / 0.1;
        1.0 - t * t * t * (10.0 + t * (-15.0 + 6.0 * t))
    }
}

/// Full and reduced distances between two states over their common support.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiffReport {
    pub d_full: f64,
    pub d_reduced: f64,
    pub common_domain: (f64, f64),
    pub mu_min: f64,
}

/// Evaluates the weighted quadratic distance
/// `∫ mu^{alpha-1} nu^2 + mu^alpha kappa^{-1} (beta w^2 + zeta^2)` and its
/// reduced counterpart carrying the `ancillary_a(mu, nu)` factor, where
/// `mu, nu, kappa` are the sums/differences of `q` and `sigma` and `w` the
/// velocity difference. Both quadratures share one uniform grid over the
/// intersection of the supports, with as many nodes as the finer input.
pub fn distance_functionals(s1: &FluidState, s2: &FluidState) -> Result<DiffReport> {
    if s1.params.beta != s2.params.beta {
        return Err(SimError::InvalidParams(format!(
            "states carry different exponents beta: {} vs {}",
            s1.params.beta, s2.params.beta
        )));
    }
    let lo = s1.grid.a().max(s2.grid.a());
    let hi = s1.grid.b().min(s2.grid.b());
    if !(lo < hi) {
        return Err(SimError::DisjointDomains);
    }
    let n = s1.len().max(s2.len());
    let grid = Grid::uniform(lo, hi, n)?;
    let alpha = s1.params.alpha();
    let beta = s1.params.beta;

    let q1 = s1.interpolant(&s1.q);
    let v1 = s1.interpolant(&s1.v);
    let g1 = s1.interpolant(&s1.sigma);
    let q2 = s2.interpolant(&s2.q);
    let v2 = s2.interpolant(&s2.v);
    let g2 = s2.interpolant(&s2.sigma);

    let m = grid.len();
    let mut full = vec![0.0; m];
    let mut reduced = vec![0.0; m];
    let mut mu_min = f64::INFINITY;
    for (i, &x) in grid.nodes().iter().enumerate() {
        let a1 = q1.eval(x).max(0.0);
        let a2 = q2.eval(x).max(0.0);
        let mu = a1 + a2;
        let nu = a1 - a2;
        if i > 0 && i < m - 1 {
            mu_min = mu_min.min(mu);
        }
        if mu <= 0.0 {
            continue;
        }
        let w = v1.eval(x) - v2.eval(x);
        let kappa = g1.eval(x) + g2.eval(x);
        let zeta = g1.eval(x) - g2.eval(x);
        let core = nu * nu + mu / kappa * (beta * w * w + zeta * zeta);
        full[i] = weight_pow(mu, alpha - 1.0) * core;
        reduced[i] = ancillary_a(mu, nu) * full[i];
    }
    Ok(DiffReport {
        d_full: integrate(&grid, &full),
        d_reduced: integrate(&grid, &reduced),
        common_domain: (lo, hi),
        mu_min,
    })
}

/// One time sample of the distance pair along matched trajectories.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DiffSample {
    pub t: f64,
    pub d_full: f64,
    pub d_reduced: f64,
}

/// Distance history over two matched trajectories. `ratio` is
/// `d_sup / d0`, or `None` (absolute mode) when `d0` sits at rounding
/// level so the quotient would be meaningless.
#[derive(Clone, Debug, Serialize)]
pub struct StabilityReport {
    pub d0: f64,
    pub d_sup: f64,
    pub ratio: Option<f64>,
    pub samples: Vec<DiffSample>,
}

const RATIO_FLOOR: f64 = 1e-14;

/// Compares two runs snapshot-by-snapshot. The stored snapshot times must
/// agree exactly pairwise (same stride, same step size).
pub fn stability_ratio(traj1: &Trajectory, traj2: &Trajectory) -> Result<StabilityReport> {
    if traj1.snapshots.len() != traj2.snapshots.len() {
        return Err(SimError::TimeGridMismatch(format!(
            "snapshot counts differ: {} vs {}",
            traj1.snapshots.len(),
            traj2.snapshots.len()
        )));
    }
    let mut samples = Vec::with_capacity(traj1.snapshots.len());
    for ((t1, a), (t2, b)) in traj1.snapshots.iter().zip(&traj2.snapshots) {
        if t1 != t2 {
            return Err(SimError::TimeGridMismatch(format!(
                "snapshot times differ: {t1} vs {t2}"
            )));
        }
        let d = distance_functionals(a, b)?;
        samples.push(DiffSample { t: *t1, d_full: d.d_full, d_reduced: d.d_reduced });
    }
    let d0 = samples[0].d_full;
    let d_sup = samples.iter().fold(0.0f64, |acc, s| acc.max(s.d_full));
    let ratio = if d0 < RATIO_FLOOR * d_sup.max(1.0) {
        None
    } else {
        Some(d_sup / d0)
    };
    Ok(StabilityReport { d0, d_sup, ratio, samples })
}
