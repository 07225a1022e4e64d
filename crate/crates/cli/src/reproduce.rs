//! Built-in reproductions of the worked examples and theorem-level claims.
//! Each returns a [`Report`] whose pass/fail entries are the acceptance
//! thresholds for that scenario.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::PathBuf;

use rayon::prelude::*;
use serde_json::{json, Value};
use sphereflow_core::analysis::{
    count_failures, criticality, entropy_production_check, escape_direction_search, pl_inequality_check,
    pl_w2_bound_log, rate_fit, EPSILON_REGIME,
};
use sphereflow_core::dynamics::evolve;
use sphereflow_core::ensemble::{make_example_2_1, make_example_2_6, sample_cap, sample_von_mises_fisher};
use sphereflow_core::fields::velocity_circle_density;
use sphereflow_core::observables::{
    cap_masses, cap_masses_density, dissipation, energy_simple, mean_and_order, mean_and_order_density,
    w2_circle, w2_to_dirac,
};
use sphereflow_core::sphere::{geodesic_distance, random_point, seeded_rng};
use sphereflow_core::{
    CircleSolverConfig, FlowState, IntegratorConfig, KernelSpec, Limiter, ParticleEnsemble, ScenarioInit,
};

use crate::config::{KernelConfig, ObserveConfig, OutputConfig, ReferenceConfig, ScenarioConfig, SCHEMA_VERSION};
use crate::error::CliError;
use crate::output::{hash_json, metadata, write_file, Report};
use crate::simulate::{self, SimulationOutcome};

pub const SCENARIOS: [&str; 6] = [
    "example-2-1",
    "example-2-4",
    "example-2-6",
    "thm-2-2",
    "thm-3-6",
    "main-thm-sweep",
];

/// Runs a named reproduction. Unknown names are config errors.
pub fn run(name: &str) -> Result<Report, CliError> {
    run_with_artifacts(name).map(|(r, _)| r)
}

type Artifacts = Vec<(ScenarioConfig, SimulationOutcome)>;

fn run_with_artifacts(name: &str) -> Result<(Report, Artifacts), CliError> {
    let res = match name {
        "example-2-1" => example_2_1().map(|r| (r, Vec::new())),
        "example-2-4" => example_2_4(),
        "example-2-6" => example_2_6(),
        "thm-2-2" => thm_2_2().map(|r| (r, Vec::new())),
        "thm-3-6" => thm_3_6().map(|r| (r, Vec::new())),
        "main-thm-sweep" => rate_behavior("main-thm-sweep", &[0.01, 0.02, 0.05], &[1, 2, 3]).map(|r| (r, Vec::new())),
        other => {
            return Err(CliError::Config(format!(
                "unknown scenario `{other}` (expected one of {})",
                SCENARIOS.join(", ")
            )))
        }
    };
    res.map_err(|e| e.in_scenario(name))
}

/// `sphereflow reproduce <name> [--out dir]`: writes `<name>.report.json`
/// plus trajectory artifacts of config-driven runs when `out` is given.
pub fn cmd_reproduce(name: &str, out: Option<PathBuf>) -> Result<Report, CliError> {
    let (report, artifacts) = run_with_artifacts(name)?;
    if let Some(dir) = out {
        write_file(&dir, &format!("{name}.report.json"), &(report.to_json() + "\n"))?;
        for (cfg, outcome) in &artifacts {
            simulate::write_outputs(cfg, outcome, &dir)?;
        }
    }
    Ok(report)
}

fn meta(name: &str, params: &Value, seed: Option<u64>) -> Value {
    let mut m = metadata(name, &hash_json(params), seed);
    m["params"] = params.clone();
    m
}

fn sci(x: f64) -> String {
    format!("{x:.3e}")
}

fn angle_of(p: &[f64]) -> f64 {
    p[1].atan2(p[0])
}

/// `(1−ε)δ_{π/2} + εδ_{−π/2}`: a continuum of critical points whose
/// energies accumulate at the global maximum without equalling it.
pub fn example_2_1() -> Result<Report, CliError> {
    let beta = 1.0;
    let eps_list = [0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01, 0.001];
    let params = json!({ "beta": beta, "eps": eps_list });
    let mut report = Report::new("example-2-1", meta("example-2-1", &params, None));
    let spec = KernelSpec::simple_attention(2, beta);
    let e_max = beta.exp() / (2.0 * beta);
    let mut rows = Vec::new();
    let mut prev_gap = f64::INFINITY;
    let mut monotone = true;
    for &eps in &eps_list {
        let mu = make_example_2_1(eps)?;
        let crit = criticality(&mu, &spec);
        let e = energy_simple(&mu, beta)?;
        let closed = (((1.0 - eps).powi(2) + eps * eps) * beta.exp() + 2.0 * eps * (1.0 - eps) * (-beta).exp())
            / (2.0 * beta);
        let w2 = w2_to_dirac(&mu, &[0.0, 1.0]);
        let escape = escape_direction_search(&mu, &spec, false)?;
        let gap = e_max - e;
        monotone &= gap < prev_gap;
        prev_gap = gap;
        report.check(&format!("eps={eps} critical"), crit <= 1e-8, format!("max |X~| = {}", sci(crit)));
        report.check(
            &format!("eps={eps} energy closed form"),
            (e - closed).abs() <= 1e-12 * closed,
            format!("E = {e:.15}, closed form {closed:.15}"),
        );
        report.check(
            &format!("eps={eps} below maximum"),
            gap > 0.0,
            format!("E(delta) - E = {}", sci(gap)),
        );
        report.check(
            &format!("eps={eps} W2 to north pole"),
            (w2 - PI * eps.sqrt()).abs() <= 1e-12,
            format!("W2 = {w2:.12}, pi*sqrt(eps) = {:.12}", PI * eps.sqrt()),
        );
        report.check(
            &format!("eps={eps} unstable"),
            escape.is_some(),
            match &escape {
                Some(e) => format!("escape along eigenvector {} with value {}", e.eigen_index, sci(e.value)),
                None => "no escape direction".into(),
            },
        );
        rows.push(json!({ "eps": eps, "criticality": crit, "energy": e, "gap": gap, "w2": w2 }));
    }
    report.check(
        "energies accumulate at the maximum",
        monotone && prev_gap < 1e-2,
        format!("smallest gap {}", sci(prev_gap)),
    );
    report.metric("rows", rows);
    report.metric("energy_max", e_max);
    Ok(report)
}

pub fn example_2_4_config() -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "example-2-4".into(),
        seed: None,
        kernel: KernelConfig::SimpleAttention { beta: 1.0 },
        init: ScenarioInit::Example24 { xi: 0.005 },
        integrator: IntegratorConfig {
            dt: 0.01,
            t_end: 200.0,
            ..IntegratorConfig::default()
        },
        circle: CircleSolverConfig::default(),
        observe: ObserveConfig {
            interval: 0.01,
            reference: Some(ReferenceConfig::CircleAtoms {
                angles: vec![FRAC_PI_2, -FRAC_PI_2],
                weights: vec![1.0 / 50.0, 49.0 / 50.0],
            }),
            ..ObserveConfig::default()
        },
        output: OutputConfig::default(),
    }
}

/// Three atoms that never synchronize: the light top atom is a fixed
/// point and the bottom pair merges.
pub fn example_2_4() -> Result<(Report, Artifacts), CliError> {
    let cfg = example_2_4_config();
    let out = simulate::run(&cfg)?;
    let mut report = Report::new("example-2-4", metadata(&cfg.name, &cfg.hash(), cfg.seed));
    let north = [0.0, 1.0];
    let top_dev = out
        .states
        .iter()
        .map(|s| geodesic_distance(s.ensemble.point(0), &north))
        .fold(0.0, f64::max);
    let last = &out.states.last().expect("ticks recorded").ensemble;
    let angles = last.angles()?;
    let w2 = w2_circle(&angles, last.weights(), &[FRAC_PI_2, -FRAC_PI_2], &[1.0 / 50.0, 49.0 / 50.0]);
    let bottom_gap = geodesic_distance(last.point(1), last.point(2));
    report.check("final W2 to two-cluster limit", w2 < 1e-3, format!("W2 = {}", sci(w2)));
    report.check(
        "top atom pinned at pi/2",
        top_dev <= 1e-6,
        format!("max deviation {} over {} ticks", sci(top_dev), out.states.len()),
    );
    report.check(
        "no synchronization",
        mean_and_order(last).r < 0.99,
        format!("final R = {:.6}", mean_and_order(last).r),
    );
    report.metric("final_w2", w2);
    report.metric("top_deviation", top_dev);
    report.metric("bottom_gap", bottom_gap);
    report.metric("final_angles", angles);
    Ok((report, vec![(cfg, out)]))
}

const EX26_BETA: f64 = 100.0;
const EX26_ETA: f64 = 0.008;
const EX26_XI: f64 = 0.008;
const EX26_T_END: f64 = 3.5e-43;

pub fn example_2_6_density_config() -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "example-2-6-density".into(),
        seed: None,
        kernel: KernelConfig::SimpleAttention { beta: EX26_BETA },
        init: ScenarioInit::Example26 {
            eta: EX26_ETA,
            xi: EX26_XI,
            grid: 4096,
        },
        integrator: IntegratorConfig {
            t_end: EX26_T_END,
            dt: EX26_T_END / 40.0,
            ..IntegratorConfig::default()
        },
        circle: CircleSolverConfig {
            n: 4096,
            cfl: 0.9,
            limiter: Limiter::Minmod,
        },
        observe: ObserveConfig {
            interval: EX26_T_END / 40.0,
            reference: Some(ReferenceConfig::CircleAtoms {
                angles: vec![0.0, PI],
                weights: vec![1.0 / 3.0, 2.0 / 3.0],
            }),
            ..ObserveConfig::default()
        },
        output: OutputConfig::default(),
    }
}

pub fn example_2_6_particle_config() -> ScenarioConfig {
    ScenarioConfig {
        schema_version: SCHEMA_VERSION,
        name: "example-2-6-particles".into(),
        seed: Some(26),
        kernel: KernelConfig::SimpleAttention { beta: EX26_BETA },
        init: ScenarioInit::Example26Particles {
            eta: EX26_ETA,
            xi: EX26_XI,
            grid: 4096,
            n: 2048,
        },
        integrator: IntegratorConfig {
            t_end: EX26_T_END,
            dt: 1e-45,
            adaptive: true,
            tolerance: 1e-6,
            min_dt: 1e-60,
            ..IntegratorConfig::default()
        },
        circle: CircleSolverConfig::default(),
        observe: ObserveConfig {
            interval: EX26_T_END / 20.0,
            reference: Some(ReferenceConfig::CircleAtoms {
                angles: vec![0.0, PI],
                weights: vec![1.0 / 3.0, 2.0 / 3.0],
            }),
            ..ObserveConfig::default()
        },
        output: OutputConfig::default(),
    }
}

/// Angular range of the atoms on each side of the vertical axis.
fn cluster_widths(mu: &ParticleEnsemble) -> (f64, f64) {
    let (mut near0, mut near_pi) = ((f64::INFINITY, f64::NEG_INFINITY), (f64::INFINITY, f64::NEG_INFINITY));
    for p in mu.points() {
        let th = angle_of(p);
        if p[0] > 0.0 {
            near0 = (near0.0.min(th), near0.1.max(th));
        } else {
            let rel = (th - PI).rem_euclid(2.0 * PI);
            let rel = if rel > PI { rel - 2.0 * PI } else { rel };
            near_pi = (near_pi.0.min(rel), near_pi.1.max(rel));
        }
    }
    let width = |(lo, hi): (f64, f64)| if hi >= lo { hi - lo } else { 0.0 };
    (width(near0), width(near_pi))
}

/// Large-β clusters that stay apart: density run plus particle fallback.
pub fn example_2_6() -> Result<(Report, Artifacts), CliError> {
    let dcfg = example_2_6_density_config();
    let pcfg = example_2_6_particle_config();
    let params = json!({ "density": dcfg.hash(), "particles": pcfg.hash() });
    let mut report = Report::new("example-2-6", meta("example-2-6", &params, pcfg.seed));
    let beta = EX26_BETA;
    let (plus, minus) = ([1.0, 0.0], [-1.0, 0.0]);

    let f0 = make_example_2_6(EX26_ETA, EX26_XI, 4096)?;
    let v_eta = velocity_circle_density(&f0, beta, EX26_ETA);
    report.check(
        "initial velocity at eta points inward",
        v_eta < 0.0 && v_eta.abs() > EX26_ETA * 1e35,
        format!("v(eta) = {}, threshold -{}", sci(v_eta), sci(EX26_ETA * 1e35)),
    );

    let dens = simulate::run(&dcfg)?;
    let mut min_plus = f64::INFINITY;
    let mut min_minus = f64::INFINITY;
    for s in &dens.density_states {
        min_plus = min_plus.min(cap_masses_density(&s.density, &plus, 2.0 * EX26_ETA).plus);
        min_minus = min_minus.min(cap_masses_density(&s.density, &minus, 2.0 * EX26_XI).plus);
    }
    let last_f = &dens.density_states.last().expect("ticks recorded").density;
    let r_final = mean_and_order_density(last_f).r;
    report.check("density: cap(0, 2eta) mass >= 0.30", min_plus >= 0.30, format!("min {min_plus:.6}"));
    report.check("density: cap(pi, 2xi) mass >= 0.60", min_minus >= 0.60, format!("min {min_minus:.6}"));
    report.check(
        "density: final R in [0.2, 0.5]",
        (0.2..=0.5).contains(&r_final),
        format!("R = {r_final:.6}"),
    );
    report.metric("density_final_time", last_f_time(&dens));
    report.metric("density_final_R", r_final);

    let part = simulate::run(&pcfg)?;
    let first = &part.states.first().expect("ticks recorded").ensemble;
    let last = &part.states.last().expect("ticks recorded").ensemble;
    let (w0a, w0b) = cluster_widths(first);
    let (w1a, w1b) = cluster_widths(last);
    let (w0, w1) = (w0a.max(w0b), w1a.max(w1b));
    let halvings = (w0 / w1).log2();
    let mut pmin_plus = f64::INFINITY;
    let mut pmin_minus = f64::INFINITY;
    for s in &part.states {
        pmin_plus = pmin_plus.min(cap_masses(&s.ensemble, &plus, 2.0 * EX26_ETA).plus);
        pmin_minus = pmin_minus.min(cap_masses(&s.ensemble, &minus, 2.0 * EX26_XI).plus);
    }
    let pr_final = mean_and_order(last).r;
    report.check(
        "particles: max cluster width halves 3 times",
        halvings >= 3.0,
        format!("width {} -> {} ({halvings:.2} halvings)", sci(w0), sci(w1)),
    );
    report.check("particles: cap(0, 2eta) mass >= 0.30", pmin_plus >= 0.30, format!("min {pmin_plus:.6}"));
    report.check("particles: cap(pi, 2xi) mass >= 0.60", pmin_minus >= 0.60, format!("min {pmin_minus:.6}"));
    report.check(
        "particles: final R in [0.2, 0.5]",
        (0.2..=0.5).contains(&pr_final),
        format!("R = {pr_final:.6}"),
    );
    report.metric("particle_widths", json!({ "initial": [w0a, w0b], "final": [w1a, w1b] }));
    report.metric("particle_final_R", pr_final);
    Ok((report, vec![(dcfg, dens), (pcfg, part)]))
}

fn last_f_time(out: &SimulationOutcome) -> f64 {
    out.density_states.last().map_or(0.0, |s| s.time)
}

const PL_BETAS: [f64; 3] = [0.5, 1.0, 2.0];
const PL_DIMS: [usize; 3] = [2, 3, 5];

/// Cap angle with `tan α = 1/(20(1+√β))`.
pub fn pl_cap_angle(beta: f64) -> f64 {
    (1.0 / (20.0 * (1.0 + beta.sqrt()))).atan()
}

/// Outcome of one PL trajectory.
#[derive(Debug, Clone, serde::Serialize)]
struct PlTrajectory {
    beta: f64,
    d: usize,
    ticks: usize,
    bound_violations: usize,
    pl_violations: usize,
    min_bound_ratio_slack: f64,
    support_monotone: bool,
}

fn pl_trajectory(k: usize, seed: u64) -> Result<PlTrajectory, CliError> {
    let beta = PL_BETAS[k % 3];
    let d = PL_DIMS[(k / 3) % 3];
    let alpha = pl_cap_angle(beta);
    let mut rng = seeded_rng(seed);
    let u = random_point(d, &mut rng);
    let mu = sample_cap(&u, 64, alpha, true, seed.wrapping_add(1))?;
    let spec = KernelSpec::simple_attention(d, beta);
    let i0 = dissipation(&mu, &spec);
    let eb = beta.exp();
    let t_end = 60.0 / eb;
    let cfg = IntegratorConfig {
        dt: 0.05 / eb,
        t_end,
        ..IntegratorConfig::default()
    };
    let mut states = Vec::new();
    let last = evolve(FlowState::new(mu), &spec, &cfg, t_end / 100.0, &mut |s: &FlowState| {
        states.push(s.clone());
        Ok(())
    })?;
    let x_inf = mean_and_order(&last.ensemble)
        .u
        .ok_or_else(|| CliError::Runtime("final state has no mean direction".into()))?;
    let mut out = PlTrajectory {
        beta,
        d,
        ticks: states.len(),
        bound_violations: 0,
        pl_violations: 0,
        min_bound_ratio_slack: f64::INFINITY,
        support_monotone: true,
    };
    let mut prev_min = f64::NEG_INFINITY;
    for s in &states {
        let w2 = w2_to_dirac(&s.ensemble, &x_inf);
        let bound = pl_w2_bound_log(beta, s.time, i0).exp() * 1.05;
        if w2 > bound {
            out.bound_violations += 1;
        }
        out.min_bound_ratio_slack = out.min_bound_ratio_slack.min(1.0 - w2 / bound);
        let min_dot = s
            .ensemble
            .points()
            .map(|p| p.iter().zip(&u).map(|(a, b)| a * b).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        out.support_monotone &= min_dot >= prev_min - 1e-9;
        prev_min = min_dot;
        match pl_inequality_check(&s.ensemble, beta, &u, alpha) {
            Ok(v) if v.holds => {}
            _ => out.pl_violations += 1,
        }
    }
    Ok(out)
}

/// PL inequality on random cap ensembles and the induced W2 rate along
/// trajectories.
pub fn thm_2_2() -> Result<Report, CliError> {
    let params = json!({
        "betas": PL_BETAS, "dims": PL_DIMS, "ensembles": 1000, "max_n": 128,
        "trajectories": 20, "trajectory_n": 64, "tan_alpha": "1/(20(1+sqrt(beta)))",
    });
    let base_seed = 22;
    let mut report = Report::new("thm-2-2", meta("thm-2-2", &params, Some(base_seed)));
    let statics: Vec<Result<(bool, bool, f64), CliError>> = (0..1000u64)
        .into_par_iter()
        .map(|k| {
            let seed = base_seed * 1_000_003 + k;
            let mut rng = seeded_rng(seed);
            let beta = PL_BETAS[(k % 3) as usize];
            let d = PL_DIMS[((k / 3) % 3) as usize];
            let n = rand::Rng::gen_range(&mut rng, 2..=128usize);
            let u = random_point(d, &mut rng);
            let alpha = pl_cap_angle(beta);
            let mu = sample_cap(&u, n, alpha, true, seed ^ 0x9e37_79b9)?;
            let v = pl_inequality_check(&mu, beta, &u, alpha)?;
            let ratio = if v.rhs > 0.0 { v.lhs / v.rhs } else { 0.0 };
            Ok((v.holds, v.regime_ok, ratio))
        })
        .collect();
    let statics = statics.into_iter().collect::<Result<Vec<_>, _>>()?;
    let violations = statics.iter().filter(|s| !s.0).count();
    let out_of_regime = statics.iter().filter(|s| !s.1).count();
    let worst = statics.iter().map(|s| s.2).fold(0.0, f64::max);
    report.check(
        "PL inequality on 1000 cap ensembles",
        violations == 0,
        format!("{violations} violations, worst lhs/rhs = {worst:.4}"),
    );
    report.check("all ensembles in regime", out_of_regime == 0, format!("{out_of_regime} outside"));

    let trajs: Vec<Result<PlTrajectory, CliError>> = (0..20usize)
        .into_par_iter()
        .map(|k| pl_trajectory(k, base_seed * 7919 + k as u64))
        .collect();
    let trajs = trajs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let bound_v: usize = trajs.iter().map(|t| t.bound_violations).sum();
    let pl_v: usize = trajs.iter().map(|t| t.pl_violations).sum();
    let ticks: usize = trajs.iter().map(|t| t.ticks).sum();
    let monotone = trajs.iter().all(|t| t.support_monotone);
    report.check(
        "W2 rate bound along 20 trajectories",
        bound_v == 0,
        format!("{bound_v} violations over {ticks} ticks"),
    );
    report.check("PL along trajectories", pl_v == 0, format!("{pl_v} violations"));
    report.check("cap support shrinks monotonically", monotone, String::new());
    report.metric("trajectories", trajs);
    Ok(report)
}

pub const THM36_BETA: f64 = 0.004;

/// Entropy-production monitor on near-Kuramoto attention.
pub fn thm_3_6() -> Result<Report, CliError> {
    let beta = THM36_BETA;
    let alpha = PI / 25.0;
    let (n, d) = (256, 3);
    let params = json!({ "beta": beta, "alpha": alpha, "n": n, "d": d, "runs": 10, "t_end": 20.0, "dt": 0.1 });
    let base_seed = 36;
    let mut report = Report::new("thm-3-6", meta("thm-3-6", &params, Some(base_seed)));
    let spec = KernelSpec::simple_attention(d, beta);
    let closed = 3.0 * (beta.exp() - 1.0 + beta * beta.exp());
    report.check(
        "epsilon_phi <= 1/100",
        closed <= EPSILON_REGIME,
        format!(
            "closed form 3(e^b - 1 + b e^b) = {closed:.6} at b = {beta}; the regime holds only for b <= {:.6}",
            beta_for_epsilon(EPSILON_REGIME)
        ),
    );
    report.check(
        "closed form matches kernel",
        (closed - spec.epsilon_phi()).abs() <= 1e-12,
        format!("kernel reports {:.6}", spec.epsilon_phi()),
    );
    let literal = KernelSpec::scaled_identity_exp(d, beta)?.epsilon_phi();
    report.metric("epsilon_phi", closed);
    report.metric("epsilon_phi_scaled_identity_exp", literal);

    let runs: Vec<Result<(usize, usize, f64), CliError>> = (0..10u64)
        .into_par_iter()
        .map(|k| {
            let seed = base_seed * 1000 + k;
            let pole = [0.0, 0.0, 1.0];
            let mu = if k % 2 == 0 {
                sample_cap(&pole, n, FRAC_PI_2, false, seed)?
            } else {
                sample_von_mises_fisher(&pole, n, 3.0, seed)?
            };
            let cfg = IntegratorConfig {
                dt: 0.1,
                t_end: 20.0,
                ..IntegratorConfig::default()
            };
            let mut states = Vec::new();
            evolve(FlowState::new(mu), &spec, &cfg, 0.5, &mut |s: &FlowState| {
                states.push(s.clone());
                Ok(())
            })?;
            let v = entropy_production_check(&states, &spec, alpha);
            let min_slack = v.iter().map(|x| x.slack).fold(f64::INFINITY, f64::min);
            Ok((v.len(), count_failures(&v), min_slack))
        })
        .collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    let ticks: usize = runs.iter().map(|r| r.0).sum();
    let fails: usize = runs.iter().map(|r| r.1).sum();
    let min_slack = runs.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    report.check(
        "dI/dt <= -I + 100 (outside mass) + 1e-6",
        fails == 0,
        format!("{fails} violations over {ticks} ticks, min slack {}", sci(min_slack)),
    );
    Ok(report)
}

/// Solves `3(e^β − 1 + βe^β) = ε` for β ≥ 0 by bisection.
pub fn beta_for_epsilon(eps: f64) -> f64 {
    if eps <= 0.0 {
        return 0.0;
    }
    let f = |b: f64| 3.0 * (b.exp_m1() + b * b.exp()) - eps;
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// One rate-fit run of the convergence sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateRun {
    pub beta: f64,
    pub seed: u64,
    pub r0: f64,
    pub final_w2: f64,
    pub burn_in: Option<f64>,
    pub rate: Option<f64>,
    pub r_squared: Option<f64>,
    pub points: usize,
}

pub const RATE_BURN_IN_W2: f64 = 0.05;
pub const RATE_FLOOR: f64 = 1e-11;
const RATE_DT: f64 = 0.2;
const RATE_T_END: f64 = 32.0;
const RATE_INTERVAL: f64 = 0.4;

/// `d = 3`, `n = 512` atoms from a von Mises-Fisher density (κ = 1), W2 to
/// the final mean direction fitted on a log scale past the burn-in.
pub fn rate_run(beta: f64, seed: u64) -> Result<RateRun, CliError> {
    let mu = sample_von_mises_fisher(&[0.0, 0.0, 1.0], 512, 1.0, seed)?;
    let r0 = mean_and_order(&mu).r;
    let spec = KernelSpec::simple_attention(3, beta);
    let cfg = IntegratorConfig {
        dt: RATE_DT,
        t_end: RATE_T_END,
        ..IntegratorConfig::default()
    };
    let mut states = Vec::new();
    let last = evolve(FlowState::new(mu), &spec, &cfg, RATE_INTERVAL, &mut |s: &FlowState| {
        states.push(s.clone());
        Ok(())
    })?;
    let x_inf = mean_and_order(&last.ensemble)
        .u
        .ok_or_else(|| CliError::Runtime("final state has no mean direction".into()))?;
    let series: Vec<(f64, f64)> = states.iter().map(|s| (s.time, w2_to_dirac(&s.ensemble, &x_inf))).collect();
    let burn_in = series.iter().find(|(_, w)| *w <= RATE_BURN_IN_W2).map(|(t, _)| *t);
    let fit_pts: Vec<(f64, f64)> = match burn_in {
        Some(t0) => series.iter().copied().filter(|(t, w)| *t >= t0 && *w > RATE_FLOOR).collect(),
        None => Vec::new(),
    };
    let fit = rate_fit(&fit_pts, f64::NEG_INFINITY).ok();
    Ok(RateRun {
        beta,
        seed,
        r0,
        final_w2: series.last().map_or(f64::NAN, |s| s.1),
        burn_in,
        rate: fit.map(|f| f.rate),
        r_squared: fit.map(|f| f.r_squared),
        points: fit_pts.len(),
    })
}

/// Exponential W2 decay across temperatures and seeds.
pub fn rate_behavior(name: &str, betas: &[f64], seeds: &[u64]) -> Result<Report, CliError> {
    let params = json!({
        "betas": betas, "seeds": seeds, "d": 3, "n": 512, "kappa": 1.0, "dt": RATE_DT, "t_end": RATE_T_END,
        "interval": RATE_INTERVAL, "burn_in_w2": RATE_BURN_IN_W2, "floor": RATE_FLOOR,
    });
    let mut report = Report::new(name, meta(name, &params, None));
    let jobs: Vec<(f64, u64)> = betas.iter().flat_map(|&b| seeds.iter().map(move |&s| (b, s))).collect();
    let runs: Vec<Result<RateRun, CliError>> = jobs.par_iter().map(|&(b, s)| rate_run(b, s)).collect();
    let runs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;
    for r in &runs {
        let label = format!("beta={} seed={}", r.beta, r.seed);
        report.check(&format!("{label} R0 >= 0.2"), r.r0 >= 0.2, format!("R0 = {:.4}", r.r0));
        let ok = matches!((r.rate, r.r_squared), (Some(k), Some(q)) if k > 0.01 && q > 0.99);
        let detail = match (r.rate, r.r_squared) {
            (Some(k), Some(q)) => format!("rate {k:.4}, r2 {q:.6}, {} points", r.points),
            _ => format!("no fit ({} points past burn-in)", r.points),
        };
        report.check(&format!("{label} exponential decay"), ok, detail);
    }
    report.metric("runs", runs);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beta_for_epsilon_inverts_the_closed_form() {
        for eps in [1e-4, 0.01, 0.05] {
            let b = beta_for_epsilon(eps);
            let spec = KernelSpec::simple_attention(3, b);
            assert!((spec.epsilon_phi() - eps).abs() < 1e-12);
        }
        assert_eq!(beta_for_epsilon(0.0), 0.0);
    }

    #[test]
    fn pl_angle_is_inside_regime() {
        for b in PL_BETAS {
            assert!(sphereflow_core::analysis::pl_regime(b, pl_cap_angle(b)));
        }
    }

    #[test]
    fn example_2_1_passes() {
        let r = example_2_1().unwrap();
        assert!(r.passed, "{}", r.failure_summary());
    }

    #[test]
    fn unknown_scenario_is_a_config_error() {
        assert_eq!(run("nope").unwrap_err().exit_code(), 2);
    }

    #[test]
    fn widths_of_two_clusters() {
        let mu = ParticleEnsemble::from_angles(&[-0.01, 0.02, PI - 0.005, -PI + 0.004], &[0.25; 4]).unwrap();
        let (a, b) = cluster_widths(&mu);
        assert!((a - 0.03).abs() < 1e-12 && (b - 0.009).abs() < 1e-12);
    }
}
