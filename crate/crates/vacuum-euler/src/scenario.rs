//! Run configuration, scenario drivers, and report emission for the
//! command-line harness. Every driver writes deterministic artifacts
//! (hand-formatted CSV, JSON summary) into its output directory and returns
//! a process exit code: 0 success, 2 config error, 3 continuation
//! violation, 4 check failure.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::calculus::interpolation_corpus;
use crate::diff::stability_ratio;
use crate::energy::{envelope_constant, gronwall_envelope, EnergyReport};
use crate::fmt_f64;
use crate::oracle::{integrate_affine, AffineOrbit};
use crate::regularize::regularization_study;
use crate::state::{read_snapshot, write_snapshot, FluidState, Params};
use crate::stepper::{cfl_timestep, evolve_linearized, run, StepConfig, Trajectory};
use crate::{Result, SimError};

/// Which initial data a run starts from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Affine,
    PerturbedAffine,
    CustomSnapshot,
}

/// Entropy perturbation layered on the affine profile:
/// `sigma = sigma_bar + amplitude * sin(frequency * x + phase)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    pub frequency: f64,
    pub random_phase: bool,
}

impl Default for PerturbationSpec {
    fn default() -> Self {
        PerturbationSpec { amplitude: 0.1, frequency: 2.0, random_phase: false }
    }
}

/// Step-size ladder for the convergence driver.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceSpec {
    pub eps_list: Vec<f64>,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        ConvergenceSpec { eps_list: vec![1e-3, 5e-4, 2.5e-4] }
    }
}

/// Initial-data offset for the two-run comparison driver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSpec {
    pub b_offset: f64,
}

impl Default for CompareSpec {
    fn default() -> Self {
        CompareSpec { b_offset: 1e-3 }
    }
}

/// Initial perturbation size for the linearized driver.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinearizeSpec {
    pub delta: f64,
}

impl Default for LinearizeSpec {
    fn default() -> Self {
        LinearizeSpec { delta: 1e-3 }
    }
}

/// Scale sweep for the smoothing-rate study.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegStudySpec {
    pub h_min: u32,
    pub h_max: u32,
    pub wavenumber: f64,
}

impl Default for RegStudySpec {
    fn default() -> Self {
        RegStudySpec { h_min: 2, h_max: 6, wavenumber: 5.0 }
    }
}

/// Pass/fail budgets the drivers enforce on their measured quantities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Ceilings {
    pub e_phys_drift: f64,
    pub entropy_drift: f64,
    pub ratio_low: f64,
    pub ratio_high: f64,
    pub gronwall_c: f64,
    pub gronwall_c_lin: f64,
    pub stability_ratio: f64,
    pub reg_slope: f64,
    pub corpus_change: f64,
}

impl Default for Ceilings {
    fn default() -> Self {
        Ceilings {
            e_phys_drift: 1e-2,
            entropy_drift: 1e-2,
            ratio_low: 1.7,
            ratio_high: 2.3,
            gronwall_c: 20.0,
            gronwall_c_lin: 10.0,
            stability_ratio: 10.0,
            reg_slope: -1.6,
            corpus_change: 0.1,
        }
    }
}

/// Full harness configuration. Unknown keys are rejected; omitted keys take
/// the documented defaults. `step.eps = 0` means "derive the step from the
/// stability bound of the initial state".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub params: Params,
    pub affine: AffineOrbit,
    pub perturbation: PerturbationSpec,
    pub snapshot_path: Option<String>,
    pub step: StepConfig,
    pub t_final: f64,
    pub node_count: usize,
    pub outputs: Option<String>,
    pub seed: u64,
    pub convergence: ConvergenceSpec,
    pub compare: CompareSpec,
    pub linearize: LinearizeSpec,
    pub regstudy: RegStudySpec,
    pub ceilings: Ceilings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: Scenario::Affine,
            params: Params::default(),
            affine: AffineOrbit::default(),
            perturbation: PerturbationSpec::default(),
            snapshot_path: None,
            step: StepConfig { eps: 0.0, ..StepConfig::default() },
            t_final: 0.2,
            node_count: 401,
            outputs: None,
            seed: 0,
            convergence: ConvergenceSpec::default(),
            compare: CompareSpec::default(),
            linearize: LinearizeSpec::default(),
            regstudy: RegStudySpec::default(),
            ceilings: Ceilings::default(),
        }
    }
}

fn cfg_err(path: &str, message: impl Into<String>) -> SimError {
    SimError::Config { path: path.into(), message: message.into() }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.params.beta > 0.0) || !self.params.beta.is_finite() {
            return Err(cfg_err(
                "params.beta",
                format!("must be positive and finite, got {}", self.params.beta),
            ));
        }
        if !(self.params.eps_star > 0.0 && self.params.eps_star < 0.5) {
            return Err(cfg_err(
                "params.eps_star",
                format!("must lie in (0, 0.5), got {}", self.params.eps_star),
            ));
        }
        self.affine
            .validate()
            .map_err(|e| cfg_err("affine", e.to_string()))?;
        self.step
            .validate()
            .map_err(|e| cfg_err("step", e.to_string()))?;
        if !(self.t_final >= 0.0) || !self.t_final.is_finite() {
            return Err(cfg_err("t_final", format!("must be >= 0, got {}", self.t_final)));
        }
        match self.scenario {
            Scenario::Affine | Scenario::PerturbedAffine => {
                if self.node_count < 64 {
                    return Err(cfg_err(
                        "node_count",
                        format!("simulation scenarios need >= 64 nodes, got {}", self.node_count),
                    ));
                }
            }
            Scenario::CustomSnapshot => {
                if self.snapshot_path.is_none() {
                    return Err(cfg_err("snapshot_path", "required for scenario custom_snapshot"));
                }
            }
        }
        if self.scenario == Scenario::PerturbedAffine
            && !(self.perturbation.amplitude.abs() < self.affine.sigma_bar)
        {
            return Err(cfg_err(
                "perturbation.amplitude",
                format!(
                    "|amplitude| = {} must stay below sigma_bar = {}",
                    self.perturbation.amplitude.abs(),
                    self.affine.sigma_bar
                ),
            ));
        }
        if !(self.perturbation.frequency.is_finite()) {
            return Err(cfg_err("perturbation.frequency", "must be finite"));
        }
        if self.convergence.eps_list.len() < 2 {
            return Err(cfg_err("convergence.eps_list", "need at least two step sizes"));
        }
        if self.convergence.eps_list.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return Err(cfg_err("convergence.eps_list", "step sizes must be positive and finite"));
        }
        if !(self.compare.b_offset.is_finite()) || self.compare.b_offset == 0.0 {
            return Err(cfg_err("compare.b_offset", "must be a nonzero finite offset"));
        }
        if !(self.linearize.delta > 0.0) || !self.linearize.delta.is_finite() {
            return Err(cfg_err("linearize.delta", "must be positive and finite"));
        }
        if self.regstudy.h_min >= self.regstudy.h_max || self.regstudy.h_max > 12 {
            return Err(cfg_err(
                "regstudy",
                format!("need h_min < h_max <= 12, got {}..{}", self.regstudy.h_min, self.regstudy.h_max),
            ));
        }
        if !(self.regstudy.wavenumber.is_finite()) || self.regstudy.wavenumber == 0.0 {
            return Err(cfg_err("regstudy.wavenumber", "must be a nonzero finite wavenumber"));
        }
        if !(self.ceilings.ratio_low > 0.0 && self.ceilings.ratio_low < self.ceilings.ratio_high) {
            return Err(cfg_err("ceilings", "need 0 < ratio_low < ratio_high"));
        }
        if !(self.ceilings.reg_slope < 0.0) {
            return Err(cfg_err("ceilings.reg_slope", "decay gate must be negative"));
        }
        Ok(())
    }

    /// Replaces the `eps = 0` sentinel with the stability-bound step for the
    /// given initial state.
    pub fn resolve_step(&self, state0: &FluidState) -> StepConfig {
        let mut step = self.step;
        if step.eps == 0.0 {
            step.eps = cfl_timestep(state0, step.cfl_safety, step.floor_speed);
        }
        step
    }
}

/// Parses and validates a JSON config document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = serde_json::from_str(text)
        .map_err(|e| cfg_err("<document>", e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses, and validates a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .map_err(|e| cfg_err(&path.display().to_string(), e.to_string()))?;
    parse_config(&text)
}

/// Builds the initial state a config asks for.
pub fn build_initial_state(cfg: &RunConfig) -> Result<FluidState> {
    match cfg.scenario {
        Scenario::Affine => cfg.affine.state(cfg.params, cfg.node_count),
        Scenario::PerturbedAffine => {
            let base = cfg.affine.state(cfg.params, cfg.node_count)?;
            let phase = if cfg.perturbation.random_phase {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.gen_range(0.0..std::f64::consts::TAU)
            } else {
                0.0
            };
            let sigma: Vec<f64> = base
                .grid
                .nodes()
                .iter()
                .map(|&x| {
                    cfg.affine.sigma_bar
                        + cfg.perturbation.amplitude
                            * (cfg.perturbation.frequency * x + phase).sin()
                })
                .collect();
            FluidState::new(base.grid.clone(), base.q.clone(), base.v.clone(), sigma, cfg.params)
        }
        Scenario::CustomSnapshot => {
            let path = cfg.snapshot_path.as_ref().expect("validated");
            let text = fs::read_to_string(path)
                .map_err(|e| cfg_err("snapshot_path", format!("{path}: {e}")))?;
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .ok_or_else(|| cfg_err("snapshot_path", format!("{path}: empty file")))?;
            Ok(read_snapshot(line)?.1)
        }
    }
}

/// Result of one driver invocation: what to put in `summary.json` and the
/// process exit code.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: Value,
}

/// The seven harness drivers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Convergence,
    Compare,
    Linearize,
    RegStudy,
    Oracle,
    InterpCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Convergence => "convergence",
            Command::Compare => "compare",
            Command::Linearize => "linearize",
            Command::RegStudy => "regstudy",
            Command::Oracle => "oracle",
            Command::InterpCheck => "interp-check",
        }
    }
}

/// Runs one driver, writing its artifacts into `out_dir` (created if
/// absent). `summary.json` is always written, also on check failure.
pub fn execute(cmd: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Outcome> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)
        .map_err(|e| cfg_err(&out_dir.display().to_string(), e.to_string()))?;
    let outcome = match cmd {
        Command::Simulate => drive_simulate(cfg, out_dir)?,
        Command::Convergence => drive_convergence(cfg, out_dir)?,
        Command::Compare => drive_compare(cfg, out_dir)?,
        Command::Linearize => drive_linearize(cfg, out_dir)?,
        Command::RegStudy => drive_regstudy(cfg, out_dir)?,
        Command::Oracle => drive_oracle(cfg, out_dir)?,
        Command::InterpCheck => drive_interp_check(cfg, out_dir)?,
    };
    let mut doc = outcome.summary.clone();
    if let Value::Object(map) = &mut doc {
        map.insert("command".into(), json!(cmd.name()));
        map.insert("exit_code".into(), json!(outcome.exit_code));
    }
    write_text(&out_dir.join("summary.json"), &format!("{:#}\n", doc))?;
    Ok(Outcome { summary: doc, ..outcome })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)
        .map_err(|e| cfg_err(&path.display().to_string(), e.to_string()))
}

fn num_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

fn energy_csv(reports: &[EnergyReport]) -> String {
    let mut out = String::from("t,e_phys,entropy_mass,e2_high,e2_low,a_star,b,c_min\n");
    for r in reports {
        let (hi, lo) = r
            .e2k
            .get(&1)
            .map(|s| (s.high, s.low))
            .unwrap_or((f64::NAN, f64::NAN));
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            fmt_f64(r.t),
            fmt_f64(r.e_phys),
            fmt_f64(r.entropy_mass),
            fmt_f64(hi),
            fmt_f64(lo),
            fmt_f64(r.controls.a_star),
            fmt_f64(r.controls.b),
            fmt_f64(r.nondeg.c),
        ));
    }
    out
}

fn snapshots_jsonl(traj: &Trajectory) -> String {
    let mut out = String::new();
    for (t, s) in &traj.snapshots {
        out.push_str(&write_snapshot(s, *t));
        out.push('\n');
    }
    out
}

fn violation_json(traj: &Trajectory) -> Value {
    match &traj.violation {
        Some(v) => json!({
            "criterion": "nondegeneracy",
            "t": v.t,
            "value": v.c,
            "threshold": v.threshold,
        }),
        None => Value::Null,
    }
}

fn rel_drift(series: impl Iterator<Item = f64>, base: f64) -> f64 {
    let scale = base.abs().max(f64::MIN_POSITIVE);
    series.fold(0.0f64, |acc, x| acc.max((x - base).abs() / scale))
}

fn drive_simulate(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let state0 = build_initial_state(cfg)?;
    let step = cfg.resolve_step(&state0);
    let traj = run(&state0, cfg.t_final, &step)?;
    write_text(&out.join("energy.csv"), &energy_csv(&traj.reports))?;
    write_text(&out.join("snapshots.jsonl"), &snapshots_jsonl(&traj))?;

    let r0 = &traj.reports[0];
    let e_phys_drift = rel_drift(traj.reports.iter().map(|r| r.e_phys), r0.e_phys);
    let entropy_drift =
        rel_drift(traj.reports.iter().map(|r| r.entropy_mass), r0.entropy_mass);
    let history: Vec<(f64, f64)> =
        traj.reports.iter().map(|r| (r.t, r.controls.b)).collect();
    let e2: Vec<f64> = traj
        .reports
        .iter()
        .map(|r| r.e2k.get(&1).map(|s| s.total).unwrap_or(f64::NAN))
        .collect();
    let gronwall_c = envelope_constant(&history, &e2).unwrap_or(f64::INFINITY);

    let violated = traj.violation.is_some();
    let drift_ok =
        e_phys_drift <= cfg.ceilings.e_phys_drift && entropy_drift <= cfg.ceilings.entropy_drift;
    let exit_code = if violated {
        3
    } else if !drift_ok {
        4
    } else {
        0
    };
    let summary = json!({
        "scenario": cfg.scenario,
        "eps": step.eps,
        "node_count": cfg.node_count,
        "t_reached": traj.final_time(),
        "steps": traj.times.len() - 1,
        "e_phys_drift": e_phys_drift,
        "entropy_drift": entropy_drift,
        "gronwall_c_e2": num_or_null(gronwall_c),
        "violation": violation_json(&traj),
        "pass": exit_code == 0,
    });
    Ok(Outcome { exit_code, summary })
}

fn sup_error_vs_orbit(traj: &Trajectory, orbit0: &AffineOrbit, params: &Params) -> Result<f64> {
    let orbit = integrate_affine(orbit0, traj.final_time(), params)?;
    let state = traj.final_state();
    let mut sup: f64 = 0.0;
    for (&x, &qn) in state.grid.nodes().iter().zip(&state.q) {
        let want = (orbit.b * (orbit.r * orbit.r - x * x)).max(0.0);
        sup = sup.max((qn - want).abs());
    }
    Ok(sup)
}

fn drive_convergence(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    if cfg.scenario != Scenario::Affine {
        return Err(cfg_err("scenario", "convergence study needs the affine scenario"));
    }
    let state0 = build_initial_state(cfg)?;
    let mut errors = Vec::new();
    for &eps in &cfg.convergence.eps_list {
        let step = StepConfig { eps, ..cfg.step };
        let traj = run(&state0, cfg.t_final, &step)?;
        if traj.violation.is_some() {
            let summary = json!({
                "eps_list": cfg.convergence.eps_list,
                "violation": violation_json(&traj),
                "pass": false,
            });
            return Ok(Outcome { exit_code: 3, summary });
        }
        errors.push(sup_error_vs_orbit(&traj, &cfg.affine, &cfg.params)?);
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let pass = ratios
        .iter()
        .all(|&r| r >= cfg.ceilings.ratio_low && r <= cfg.ceilings.ratio_high);

    let mut csv = String::from("eps,sup_error,ratio_to_next\n");
    for (i, (&eps, &err)) in cfg.convergence.eps_list.iter().zip(&errors).enumerate() {
        let ratio = ratios.get(i).map(|&r| fmt_f64(r)).unwrap_or_default();
        csv.push_str(&format!("{},{},{}\n", fmt_f64(eps), fmt_f64(err), ratio));
    }
    write_text(&out.join("convergence.csv"), &csv)?;

    let summary = json!({
        "eps_list": cfg.convergence.eps_list,
        "sup_errors": errors,
        "ratios": ratios,
        "ratio_band": [cfg.ceilings.ratio_low, cfg.ceilings.ratio_high],
        "pass": pass,
    });
    Ok(Outcome { exit_code: if pass { 0 } else { 4 }, summary })
}

fn drive_compare(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    if cfg.scenario != Scenario::Affine {
        return Err(cfg_err("scenario", "comparison needs the affine scenario"));
    }
    let orbit2 = AffineOrbit { b: cfg.affine.b + cfg.compare.b_offset, ..cfg.affine };
    orbit2
        .validate()
        .map_err(|e| cfg_err("compare.b_offset", e.to_string()))?;
    let s1 = build_initial_state(cfg)?;
    let s2 = orbit2.state(cfg.params, cfg.node_count)?;
    let step = cfg.resolve_step(&s1);
    let t1 = run(&s1, cfg.t_final, &step)?;
    let t2 = run(&s2, cfg.t_final, &step)?;
    if t1.violation.is_some() || t2.violation.is_some() {
        let summary = json!({
            "violation": if t1.violation.is_some() { violation_json(&t1) } else { violation_json(&t2) },
            "pass": false,
        });
        return Ok(Outcome { exit_code: 3, summary });
    }
    let rep = stability_ratio(&t1, &t2)?;
    let reduced_dominated = rep.samples.iter().all(|s| s.d_reduced <= s.d_full);
    let pass = reduced_dominated
        && match rep.ratio {
            Some(r) => r <= cfg.ceilings.stability_ratio,
            None => true,
        };

    let mut csv = String::from("t,d_full,d_reduced\n");
    for s in &rep.samples {
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(s.t),
            fmt_f64(s.d_full),
            fmt_f64(s.d_reduced)
        ));
    }
    write_text(&out.join("compare.csv"), &csv)?;

    let summary = json!({
        "b_offset": cfg.compare.b_offset,
        "d0": rep.d0,
        "d_sup": rep.d_sup,
        "ratio": rep.ratio,
        "absolute_mode": rep.ratio.is_none(),
        "reduced_dominated": reduced_dominated,
        "ceiling": cfg.ceilings.stability_ratio,
        "pass": pass,
    });
    Ok(Outcome { exit_code: if pass { 0 } else { 4 }, summary })
}

fn drive_linearize(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    if cfg.scenario != Scenario::Affine {
        return Err(cfg_err("scenario", "linearized propagation needs the affine scenario"));
    }
    let state0 = build_initial_state(cfg)?;
    let step = StepConfig { snapshot_stride: 1, ..cfg.resolve_step(&state0) };
    let traj = run(&state0, cfg.t_final, &step)?;
    if traj.violation.is_some() {
        let summary = json!({ "violation": violation_json(&traj), "pass": false });
        return Ok(Outcome { exit_code: 3, summary });
    }
    let n = state0.len();
    let s0: Vec<f64> = state0.q.iter().map(|&q| cfg.linearize.delta * q).collect();
    let zero = vec![0.0; n];
    let lin = evolve_linearized(&traj, &s0, &zero, &zero)?;
    let history: Vec<(f64, f64)> =
        lin.times.iter().zip(&lin.b_lin).map(|(&t, &b)| (t, b)).collect();
    let c_fit = envelope_constant(&history, &lin.e_lin)?;
    let envelope = gronwall_envelope(&history, lin.e_lin[0], if c_fit.is_finite() { c_fit } else { 0.0 })?;
    let pass = c_fit.is_finite() && c_fit <= cfg.ceilings.gronwall_c_lin;

    let mut csv = String::from("t,e_lin,b_lin,envelope\n");
    for (i, &t) in lin.times.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(t),
            fmt_f64(lin.e_lin[i]),
            fmt_f64(lin.b_lin[i]),
            fmt_f64(envelope[i])
        ));
    }
    write_text(&out.join("linearize.csv"), &csv)?;

    let summary = json!({
        "delta": cfg.linearize.delta,
        "e_lin_initial": lin.e_lin[0],
        "e_lin_final": lin.e_lin.last(),
        "c_fit": num_or_null(c_fit),
        "ceiling": cfg.ceilings.gronwall_c_lin,
        "pass": pass,
    });
    Ok(Outcome { exit_code: if pass { 0 } else { 4 }, summary })
}

fn drive_regstudy(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let state = build_initial_state(cfg)?;
    let f: Vec<f64> = state
        .grid
        .nodes()
        .iter()
        .zip(&state.q)
        .map(|(&x, &q)| q * (cfg.regstudy.wavenumber * x).sin())
        .collect();
    let h_range: Vec<f64> =
        (cfg.regstudy.h_min..=cfg.regstudy.h_max).map(|h| h as f64).collect();
    let report = regularization_study(&f, &state, 1, &h_range)?;
    let slopes_ok = match (report.err_slope, report.diff_slope) {
        (Some(e), Some(d)) => e <= cfg.ceilings.reg_slope && d <= cfg.ceilings.reg_slope,
        _ => report.exactly_reproduced,
    };

    let mut csv = String::from("h,err_norm,diff_norm\n");
    for r in &report.rows {
        csv.push_str(&format!(
            "{},{},{}\n",
            fmt_f64(r.h),
            fmt_f64(r.err_norm),
            fmt_f64(r.diff_norm)
        ));
    }
    csv.push_str(&format!("# {}\n", serde_json::to_string(&report).expect("serializable")));
    write_text(&out.join("regstudy.csv"), &csv)?;

    let summary = json!({
        "wavenumber": cfg.regstudy.wavenumber,
        "h_range": h_range,
        "err_slope": report.err_slope,
        "diff_slope": report.diff_slope,
        "theory_slope": report.theory_slope,
        "exactly_reproduced": report.exactly_reproduced,
        "slope_ceiling": cfg.ceilings.reg_slope,
        "pass": slopes_ok,
    });
    Ok(Outcome { exit_code: if slopes_ok { 0 } else { 4 }, summary })
}

fn drive_oracle(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let steps = 100usize;
    let inv0 = cfg.affine.invariant(&cfg.params);
    let mut csv = String::from("t,a,b,r,br_power_invariant\n");
    let mut worst = 0.0f64;
    for i in 0..=steps {
        let t = cfg.t_final * i as f64 / steps as f64;
        let orbit = integrate_affine(&cfg.affine, t, &cfg.params)?;
        let inv = orbit.invariant(&cfg.params);
        worst = worst.max((inv - inv0).abs() / inv0.abs().max(f64::MIN_POSITIVE));
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            fmt_f64(t),
            fmt_f64(orbit.a),
            fmt_f64(orbit.b),
            fmt_f64(orbit.r),
            fmt_f64(inv)
        ));
    }
    write_text(&out.join("oracle.csv"), &csv)?;
    let pass = worst <= 1e-10;
    let summary = json!({
        "t_final": cfg.t_final,
        "samples": steps + 1,
        "invariant_drift": worst,
        "pass": pass,
    });
    Ok(Outcome { exit_code: if pass { 0 } else { 4 }, summary })
}

fn corpus_csv(rows: &[crate::calculus::CorpusRow]) -> String {
    let mut csv = String::from("prop,field,m,j,p0,pm,lambda0,lambda_m,lhs,rhs,ratio\n");
    for row in rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            row.check.prop.as_str(),
            row.f_id,
            row.idx.m,
            row.idx.j,
            fmt_f64(row.idx.p0),
            fmt_f64(row.idx.pm),
            fmt_f64(row.idx.lambda0),
            fmt_f64(row.idx.lambda_m),
            fmt_f64(row.check.lhs),
            fmt_f64(row.check.rhs),
            fmt_f64(row.check.ratio)
        ));
    }
    csv
}

fn drive_interp_check(cfg: &RunConfig, out: &Path) -> Result<Outcome> {
    let state = build_initial_state(cfg)?;
    let rows = interpolation_corpus(&state)?;
    let refined_cfg = RunConfig { node_count: 2 * cfg.node_count - 1, ..cfg.clone() };
    let refined_rows = interpolation_corpus(&build_initial_state(&refined_cfg)?)?;

    let max_ratio = |rs: &[crate::calculus::CorpusRow]| -> f64 {
        rs.iter().fold(0.0f64, |acc, r| acc.max(r.check.ratio))
    };
    let all_finite = rows
        .iter()
        .chain(&refined_rows)
        .all(|r| r.check.ratio.is_finite());
    let m0 = max_ratio(&rows);
    let m1 = max_ratio(&refined_rows);
    let change = if m0 > 0.0 { (m1 - m0).abs() / m0 } else { 0.0 };
    let pass = all_finite && change <= cfg.ceilings.corpus_change;

    write_text(&out.join("interp.csv"), &corpus_csv(&rows))?;
    write_text(&out.join("interp_refined.csv"), &corpus_csv(&refined_rows))?;

    let summary = json!({
        "node_count": cfg.node_count,
        "rows": rows.len(),
        "max_ratio": m0,
        "max_ratio_refined": m1,
        "relative_change": change,
        "all_finite": all_finite,
        "change_ceiling": cfg.ceilings.corpus_change,
        "pass": pass,
    });
    Ok(Outcome { exit_code: if pass { 0 } else { 4 }, summary })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_gets_defaults() {
        let cfg = parse_config(r#"{"scenario": "affine"}"#).unwrap();
        assert_eq!(cfg.params.beta, 1.0);
        assert_eq!(cfg.affine.sigma_bar, 1.0);
        assert_eq!(cfg.step.eps, 0.0);
        assert_eq!(cfg.node_count, 401);
        let state = build_initial_state(&cfg).unwrap();
        let step = cfg.resolve_step(&state);
        assert!(step.eps > 0.0, "sentinel resolves to a stability-bound step");
    }

    #[test]
    fn negative_beta_is_rejected_with_field_path() {
        let err = parse_config(r#"{"scenario": "affine", "params": {"beta": -1.0, "eps_star": 0.01}}"#)
            .unwrap_err();
        match err {
            SimError::Config { path, .. } => assert_eq!(path, "params.beta"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_config(r#"{"scenario": "affine", "bogus": 1}"#),
            Err(SimError::Config { .. })
        ));
    }

    #[test]
    fn config_round_trips_through_serialization() {
        let cfg = parse_config(
            r#"{"scenario": "perturbed_affine", "t_final": 0.1, "seed": 42,
                "perturbation": {"amplitude": 0.05, "frequency": 3.0, "random_phase": true}}"#,
        )
        .unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        let again = parse_config(&text).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn snapshot_scenario_requires_path() {
        let err = parse_config(r#"{"scenario": "custom_snapshot"}"#).unwrap_err();
        match err {
            SimError::Config { path, .. } => assert_eq!(path, "snapshot_path"),
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn simulate_writes_deterministic_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            t_final: 0.01,
            node_count: 101,
            step: StepConfig {
                eps: 1e-3,
                regrid: crate::stepper::RegridSpec { uniform_count: 101 },
                ..StepConfig::default()
            },
            ..RunConfig::default()
        };
        let out1 = dir.path().join("a");
        let out2 = dir.path().join("b");
        let o1 = execute(Command::Simulate, &cfg, &out1).unwrap();
        let o2 = execute(Command::Simulate, &cfg, &out2).unwrap();
        assert_eq!(o1.exit_code, 0);
        assert_eq!(o2.exit_code, 0);
        for name in ["energy.csv", "snapshots.jsonl", "summary.json"] {
            let a = fs::read(out1.join(name)).unwrap();
            let b = fs::read(out2.join(name)).unwrap();
            assert!(!a.is_empty());
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        assert_eq!(o1.summary["pass"], json!(true));
    }

    #[test]
    fn zero_final_time_yields_single_snapshot() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig {
            t_final: 0.0,
            node_count: 101,
            step: StepConfig { eps: 1e-3, ..StepConfig::default() },
            ..RunConfig::default()
        };
        let o = execute(Command::Simulate, &cfg, dir.path()).unwrap();
        assert_eq!(o.exit_code, 0);
        assert_eq!(o.summary["steps"], json!(0));
        assert_eq!(o.summary["e_phys_drift"], json!(0.0));
        let lines = fs::read_to_string(dir.path().join("snapshots.jsonl")).unwrap();
        assert_eq!(lines.lines().count(), 1);
    }

    #[test]
    fn custom_snapshot_round_trips_through_simulate() {
        let dir = tempfile::tempdir().unwrap();
        let state = AffineOrbit::default().state(Params::default(), 101).unwrap();
        let snap_path = dir.path().join("start.jsonl");
        fs::write(&snap_path, format!("{}\n", write_snapshot(&state, 0.0))).unwrap();
        let cfg = RunConfig {
            scenario: Scenario::CustomSnapshot,
            snapshot_path: Some(snap_path.display().to_string()),
            t_final: 0.002,
            step: StepConfig {
                eps: 1e-3,
                regrid: crate::stepper::RegridSpec { uniform_count: 101 },
                ..StepConfig::default()
            },
            ..RunConfig::default()
        };
        let o = execute(Command::Simulate, &cfg, &dir.path().join("out")).unwrap();
        assert_eq!(o.exit_code, 0);
        assert_eq!(o.summary["steps"], json!(2));
    }

    #[test]
    fn oracle_driver_reports_conserved_invariant() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig { t_final: 0.5, ..RunConfig::default() };
        let o = execute(Command::Oracle, &cfg, dir.path()).unwrap();
        assert_eq!(o.exit_code, 0);
        let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
        assert_eq!(csv.lines().count(), 102);
    }
}
