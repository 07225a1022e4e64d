//! Config-driven runs: evolve, observe, monitor, fit, emit.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{json, Value};
use sphereflow_core::analysis::{
    count_failures, dissipation_floor_check, entropy_production_check, gronwall_check, mean_direction_check,
    order_growth_check, perturbation_bound_check, perturbation_pairing_check, pl_inequality_check, pl_regime,
    rate_fit, InequalityVerdict, EPSILON_REGIME,
};
use sphereflow_core::dynamics::{evolve, evolve_circle};
use sphereflow_core::observables::{mean_and_order, snapshot, snapshot_density, Reference, SnapshotParams};
use sphereflow_core::{CircleFlowState, FlowState, InitialMeasure, KernelSpec, TrajectoryRecord};

use crate::config::{Monitor, ReferenceConfig, ScenarioConfig};
use crate::error::CliError;
use crate::output::{metadata, write_file};

/// Final state of either kind of run.
#[derive(Debug, Clone)]
pub enum FinalState {
    Particles(FlowState),
    Density(CircleFlowState),
}

#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub record: TrajectoryRecord,
    pub verdicts: Vec<InequalityVerdict>,
    pub summary: Value,
    pub final_state: FinalState,
    /// Particle states at every tick (empty in density mode).
    pub states: Vec<FlowState>,
    /// Density states at every tick (empty in particle mode).
    pub density_states: Vec<CircleFlowState>,
}

fn fit_json(series: &[(f64, f64)], t_start: f64, floor: f64) -> Value {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(_, v)| *v > floor).collect();
    match rate_fit(&pts, t_start) {
        Ok(f) => serde_json::to_value(f).expect("fit serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn verdict_summary(verdicts: &[InequalityVerdict]) -> Value {
    let mut by_name = serde_json::Map::new();
    for v in verdicts {
        let e = by_name
            .entry(v.name.clone())
            .or_insert_with(|| json!({"total": 0, "failed": 0, "min_slack": f64::INFINITY, "regime_ok": true}));
        e["total"] = json!(e["total"].as_u64().unwrap() + 1);
        if !v.holds {
            e["failed"] = json!(e["failed"].as_u64().unwrap() + 1);
        }
        let m = e["min_slack"].as_f64().unwrap_or(f64::INFINITY).min(v.slack);
        e["min_slack"] = json!(m);
        e["regime_ok"] = json!(e["regime_ok"].as_bool().unwrap() && v.regime_ok);
    }
    json!({ "total": verdicts.len(), "failed": count_failures(verdicts), "by_monitor": by_name })
}

fn particle_monitors(cfg: &ScenarioConfig, spec: &KernelSpec, states: &[FlowState]) -> Vec<InequalityVerdict> {
    let alpha = cfg.observe.monitor_cap_angle;
    let mut out = Vec::new();
    for m in &cfg.observe.monitors {
        match m {
            Monitor::EntropyProduction => out.extend(entropy_production_check(states, spec, alpha)),
            Monitor::OrderGrowth => out.extend(order_growth_check(states, spec)),
            Monitor::DissipationFloor => out.extend(dissipation_floor_check(states, spec)),
            Monitor::PerturbationBound => out.extend(states.iter().map(|s| perturbation_bound_check(s, spec))),
            Monitor::MeanDirection => out.extend(mean_direction_check(states, spec)),
            Monitor::PerturbationPairing => {
                out.extend(states.windows(3).map(|w| perturbation_pairing_check(&w[0], &w[1], &w[2], spec)))
            }
            Monitor::Pl => {
                if let Some(beta) = cfg.kernel.attention_beta() {
                    for s in states {
                        if let Some(u) = mean_and_order(&s.ensemble).u {
                            if let Ok(mut v) = pl_inequality_check(&s.ensemble, beta, &u, alpha) {
                                v.t = Some(s.time);
                                out.push(v);
                            }
                        }
                    }
                }
            }
            Monitor::L2Gronwall => {}
        }
    }
    out
}

/// Runs a parsed configuration without touching the filesystem.
pub fn run(cfg: &ScenarioConfig) -> Result<SimulationOutcome, CliError> {
    run_inner(cfg).map_err(|e| e.in_scenario(&cfg.name))
}

fn run_inner(cfg: &ScenarioConfig) -> Result<SimulationOutcome, CliError> {
    let meta = metadata(&cfg.name, &cfg.hash(), cfg.seed);
    let obs = &cfg.observe;
    match cfg.init.build(cfg.seed)? {
        InitialMeasure::Particles(mu) => {
            let spec = cfg.kernel.build(mu.dim())?;
            let mut states = Vec::new();
            let last = evolve(
                FlowState::new(mu),
                &spec,
                &cfg.integrator,
                obs.interval,
                &mut |s: &FlowState| {
                    states.push(s.clone());
                    Ok(())
                },
            )?;
            let reference = match &obs.reference {
                Some(ReferenceConfig::Limit) => {
                    let mo = mean_and_order(&last.ensemble);
                    mo.u.map(|point| Reference::Dirac { point })
                }
                Some(r) => r.explicit(),
                None => None,
            };
            let params = SnapshotParams {
                cap_angle: obs.cap_angle,
                xi_angles: obs.xi_angles,
                reference: reference.clone(),
            };
            let law = cfg.integrator.law;
            let snaps: Vec<_> = states.par_iter().map(|s| snapshot(s, &spec, law, &params)).collect();
            let mut record = TrajectoryRecord::new(meta.clone());
            for s in snaps {
                record.push(s)?;
            }
            let verdicts = particle_monitors(cfg, &spec, &states);
            let w2: Vec<(f64, f64)> = record.snapshots.iter().filter_map(|s| s.w2.map(|w| (s.t, w))).collect();
            let diss: Vec<(f64, f64)> = record.snapshots.iter().map(|s| (s.t, s.dissipation)).collect();
            let fin = record.snapshots.last().expect("at least one tick");
            let summary = json!({
                "meta": meta,
                "mode": "particles",
                "n": last.ensemble.len(),
                "d": last.ensemble.dim(),
                "kernel": spec.describe(),
                "final_time": last.time,
                "final_R": fin.r,
                "final_W2": fin.w2,
                "reference": reference,
                "w2_fit": if w2.is_empty() { Value::Null } else { fit_json(&w2, obs.fit_t_start, obs.fit_floor) },
                "dissipation_fit": fit_json(&diss, obs.fit_t_start, obs.fit_floor),
                "regime": {
                    "epsilon_phi": spec.epsilon_phi(),
                    "entropy_production": spec.epsilon_phi() <= EPSILON_REGIME
                        && obs.monitor_cap_angle < std::f64::consts::PI / 20.0,
                    "pl": cfg.kernel.attention_beta().map(|b| pl_regime(b, obs.monitor_cap_angle)),
                },
                "verdicts": verdict_summary(&verdicts),
            });
            Ok(SimulationOutcome {
                record,
                verdicts,
                summary,
                final_state: FinalState::Particles(last),
                states,
                density_states: Vec::new(),
            })
        }
        InitialMeasure::Density(f) => {
            let crate::config::KernelConfig::SimpleAttention { beta } = cfg.kernel else {
                return Err(CliError::Config(
                    "density initializations need the simple_attention kernel".into(),
                ));
            };
            let spec = KernelSpec::simple_attention(2, beta);
            let mut solver = cfg.circle.clone();
            solver.n = f.n();
            let mut states = Vec::new();
            let last = evolve_circle(
                CircleFlowState {
                    time: 0.0,
                    density: f,
                    markers: Vec::new(),
                },
                beta,
                &solver,
                cfg.integrator.t_end,
                obs.interval,
                &mut |s: &CircleFlowState| {
                    states.push(s.clone());
                    Ok(())
                },
            )?;
            let reference = match &obs.reference {
                Some(ReferenceConfig::Limit) => mean_and_order_density_u(&last).map(|point| Reference::Dirac { point }),
                Some(r) => r.explicit(),
                None => None,
            };
            let params = SnapshotParams {
                cap_angle: obs.cap_angle,
                xi_angles: obs.xi_angles,
                reference: reference.clone(),
            };
            let snaps: Vec<_> = states.par_iter().map(|s| snapshot_density(s, beta, &params)).collect();
            let mut record = TrajectoryRecord::new(meta.clone());
            for s in snaps {
                record.push(s)?;
            }
            let mut verdicts = Vec::new();
            if obs.monitors.contains(&Monitor::L2Gronwall) {
                let eps = spec.epsilon_phi();
                let series: Vec<(f64, f64, f64)> = record
                    .snapshots
                    .iter()
                    .map(|s| (s.t, s.l2_norm_sq.unwrap_or(0.0), s.r + eps))
                    .collect();
                verdicts.extend(gronwall_check("l2_gronwall", &series, 1e-9));
            }
            let fin = record.snapshots.last().expect("at least one tick");
            let summary = json!({
                "meta": meta,
                "mode": "density",
                "N": last.density.n(),
                "beta": beta,
                "final_time": last.time,
                "final_R": fin.r,
                "final_W2": fin.w2,
                "final_cap_plus": fin.cap_plus,
                "final_cap_minus": fin.cap_minus,
                "reference": reference,
                "regime": { "epsilon_phi": spec.epsilon_phi() },
                "verdicts": verdict_summary(&verdicts),
            });
            Ok(SimulationOutcome {
                record,
                verdicts,
                summary,
                final_state: FinalState::Density(last),
                states: Vec::new(),
                density_states: states,
            })
        }
    }
}

fn mean_and_order_density_u(s: &CircleFlowState) -> Option<Vec<f64>> {
    sphereflow_core::observables::mean_and_order_density(&s.density).u
}

/// Writes `<prefix>.csv`, `<prefix>.jsonl`, `<prefix>.verdicts.jsonl` and
/// `<prefix>.summary.json` into `dir`.
pub fn write_outputs(cfg: &ScenarioConfig, out: &SimulationOutcome, dir: &Path) -> Result<(), CliError> {
    let prefix = cfg.prefix();
    write_file(dir, &format!("{prefix}.csv"), &out.record.to_csv())?;
    write_file(dir, &format!("{prefix}.jsonl"), &out.record.to_jsonl())?;
    let mut verdicts = json!({ "meta": out.record.meta }).to_string();
    verdicts.push('\n');
    for v in &out.verdicts {
        verdicts.push_str(&v.to_json_line());
        verdicts.push('\n');
    }
    write_file(dir, &format!("{prefix}.verdicts.jsonl"), &verdicts)?;
    let mut summary = serde_json::to_string_pretty(&out.summary).expect("summary serializes");
    summary.push('\n');
    write_file(dir, &format!("{prefix}.summary.json"), &summary)?;
    Ok(())
}

/// `sphereflow simulate <cfg>`: returns the summary written to disk.
pub fn cmd_simulate(path: &Path, out_dir: Option<PathBuf>) -> Result<Value, CliError> {
    let cfg = ScenarioConfig::load(path)?;
    let outcome = run(&cfg)?;
    let dir = out_dir.unwrap_or_else(|| cfg.output.dir.clone());
    write_outputs(&cfg, &outcome, &dir)?;
    Ok(outcome.summary)
}
