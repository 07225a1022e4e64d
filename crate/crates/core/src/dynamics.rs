//! Time integration: projected Runge–Kutta for particle ensembles (with
//! passive markers sampling the characteristic flow) and a conservative
//! finite-volume solver for densities on the circle.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::ensemble::{CircleDensity, ParticleEnsemble};
use crate::error::{FlowError, Result};
use crate::fields::{velocity_field_batch, VelocityLaw};
use crate::kernel::KernelSpec;
use crate::vecops::normalize_in_place;

pub const DEFAULT_MIN_DT: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Rk4,
    Euler,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub t_end: f64,
    pub adaptive: bool,
    pub tolerance: f64,
    pub min_dt: f64,
    pub renormalize_each_stage: bool,
    pub law: VelocityLaw,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            dt: 0.01,
            t_end: 1.0,
            adaptive: false,
            tolerance: 1e-10,
            min_dt: DEFAULT_MIN_DT,
            renormalize_each_stage: true,
            law: VelocityLaw::General,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(FlowError::Range(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(FlowError::Range(format!("t_end = {} must be >= 0", self.t_end)));
        }
        if self.adaptive && !(self.tolerance > 0.0) {
            return Err(FlowError::Range("adaptive stepping needs tolerance > 0".into()));
        }
        if !(self.min_dt > 0.0) {
            return Err(FlowError::Range("min_dt must be positive".into()));
        }
        Ok(())
    }
}

/// Ensemble at a time, plus markers advected by the same field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowState {
    pub time: f64,
    pub ensemble: ParticleEnsemble,
    /// Flat `m × d` marker coordinates.
    #[serde(default)]
    pub markers: Vec<f64>,
}

impl FlowState {
    pub fn new(ensemble: ParticleEnsemble) -> Self {
        Self {
            time: 0.0,
            ensemble,
            markers: Vec::new(),
        }
    }

    pub fn with_markers(mut self, markers: &[Vec<f64>]) -> Self {
        self.markers = markers.iter().flatten().copied().collect();
        self
    }

    pub fn marker(&self, i: usize) -> &[f64] {
        let d = self.ensemble.dim();
        &self.markers[i * d..(i + 1) * d]
    }

    pub fn marker_count(&self) -> usize {
        self.markers.len() / self.ensemble.dim()
    }
}

/// Velocities of atoms and markers; sources are the atoms in `y[..n*d]`.
fn rhs(template: &ParticleEnsemble, spec: &KernelSpec, law: VelocityLaw, y: &[f64]) -> Vec<f64> {
    let na = template.coords().len();
    let mu = template.with_raw_coords(y[..na].to_vec());
    velocity_field_batch(&mu, spec, law, y)
}

fn renormalize(y: &mut [f64], d: usize) {
    for p in y.chunks_mut(d) {
        normalize_in_place(p);
    }
}

fn combine(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

/// One projected step of size `h` on the stacked atom/marker vector.
fn raw_step(
    template: &ParticleEnsemble,
    spec: &KernelSpec,
    cfg: &IntegratorConfig,
    y: &[f64],
    h: f64,
    k1: Option<&[f64]>,
) -> Vec<f64> {
    let d = template.dim();
    let f = |v: &[f64]| rhs(template, spec, cfg.law, v);
    let stage = |mut v: Vec<f64>| {
        if cfg.renormalize_each_stage {
            renormalize(&mut v, d);
        }
        v
    };
    let k1 = k1.map(|k| k.to_vec()).unwrap_or_else(|| f(y));
    let mut out = match cfg.method {
        Method::Euler => combine(y, h, &k1),
        Method::Rk4 => {
            let k2 = f(&stage(combine(y, h / 2.0, &k1)));
            let k3 = f(&stage(combine(y, h / 2.0, &k2)));
            let k4 = f(&stage(combine(y, h, &k3)));
            y.iter()
                .enumerate()
                .map(|(i, v)| v + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
                .collect()
        }
    };
    renormalize(&mut out, d);
    out
}

fn stacked(state: &FlowState) -> Vec<f64> {
    let mut y = state.ensemble.coords().to_vec();
    y.extend_from_slice(&state.markers);
    y
}

fn unstack(state: &FlowState, y: Vec<f64>, time: f64) -> FlowState {
    let na = state.ensemble.coords().len();
    FlowState {
        time,
        ensemble: state.ensemble.with_raw_coords(y[..na].to_vec()),
        markers: y[na..].to_vec(),
    }
}

/// Advances the state by exactly `h` with the configured scheme.
pub fn step_particles_by(state: &FlowState, spec: &KernelSpec, cfg: &IntegratorConfig, h: f64) -> FlowState {
    let y = stacked(state);
    let out = raw_step(&state.ensemble, spec, cfg, &y, h, None);
    unstack(state, out, state.time + h)
}

/// One fixed step of size `cfg.dt`.
pub fn step_particles(state: &FlowState, spec: &KernelSpec, cfg: &IntegratorConfig) -> Result<FlowState> {
    cfg.validate()?;
    Ok(step_particles_by(state, spec, cfg, cfg.dt))
}

fn max_point_gap(a: &[f64], b: &[f64], d: usize) -> f64 {
    a.chunks(d)
        .zip(b.chunks(d))
        .map(|(p, q)| crate::vecops::norm(&crate::vecops::sub(p, q)))
        .fold(0.0, f64::max)
}

/// Step-doubling controller. Tries `h`, shrinking until the one-step and
/// two-half-step results agree to `cfg.tolerance`; returns the new state
/// and a proposal for the next step.
pub fn adaptive_step(
    state: &FlowState,
    spec: &KernelSpec,
    cfg: &IntegratorConfig,
    mut h: f64,
) -> Result<(FlowState, f64)> {
    let d = state.ensemble.dim();
    let order = match cfg.method {
        Method::Rk4 => 4.0,
        Method::Euler => 1.0,
    };
    let y = stacked(state);
    let k1 = rhs(&state.ensemble, spec, cfg.law, &y);
    loop {
        if h < cfg.min_dt {
            return Err(FlowError::StepSize {
                dt: h,
                min_dt: cfg.min_dt,
                t: state.time,
            });
        }
        let full = raw_step(&state.ensemble, spec, cfg, &y, h, Some(&k1));
        let half = raw_step(&state.ensemble, spec, cfg, &y, h / 2.0, Some(&k1));
        let two = raw_step(&state.ensemble, spec, cfg, &half, h / 2.0, None);
        let err = max_point_gap(&full, &two, d);
        let ratio = if err > 0.0 {
            (cfg.tolerance / err).powf(1.0 / (order + 1.0))
        } else {
            4.0
        };
        if err <= cfg.tolerance {
            let next = h * (0.9 * ratio).clamp(0.2, 4.0);
            return Ok((unstack(state, two, state.time + h), next));
        }
        h *= (0.9 * ratio).clamp(0.1, 0.5);
    }
}

/// Receives the state at every observation tick (including `t = 0`).
pub trait Observer {
    fn observe(&mut self, state: &FlowState) -> Result<()>;
}

impl<F: FnMut(&FlowState) -> Result<()>> Observer for F {
    fn observe(&mut self, state: &FlowState) -> Result<()> {
        self(state)
    }
}

/// Number of observation intervals in `[0, t_end]`.
pub fn tick_count(t_end: f64, interval: f64) -> usize {
    ((t_end / interval) - 1e-9).ceil().max(0.0) as usize
}

/// Integrates to `cfg.t_end`, calling `observer` at `t = k·interval`.
pub fn evolve(
    state: FlowState,
    spec: &KernelSpec,
    cfg: &IntegratorConfig,
    interval: f64,
    observer: &mut dyn Observer,
) -> Result<FlowState> {
    cfg.validate()?;
    if !(interval > 0.0) {
        return Err(FlowError::Range(format!("observer interval {interval} must be positive")));
    }
    let t0 = state.time;
    let ticks = tick_count(cfg.t_end - t0, interval);
    let mut state = state;
    observer.observe(&state)?;
    let mut h_next = cfg.dt;
    for k in 1..=ticks {
        let target = (t0 + k as f64 * interval).min(cfg.t_end);
        if cfg.adaptive {
            while state.time < target {
                let remaining = target - state.time;
                let h = h_next.min(remaining);
                let (next, proposal) = adaptive_step(&state, spec, cfg, h)?;
                state = next;
                if h < remaining {
                    h_next = proposal;
                }
                if target - state.time < 1e-12 * remaining.max(f64::MIN_POSITIVE) {
                    break;
                }
            }
        } else {
            let span = target - state.time;
            let n_sub = ((span / cfg.dt) - 1e-9).ceil().max(1.0) as usize;
            let h = span / n_sub as f64;
            for _ in 0..n_sub {
                state = step_particles_by(&state, spec, cfg, h);
            }
        }
        state.time = target;
        observer.observe(&state)?;
    }
    Ok(state)
}

/// Marker positions sampled at every observation tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkerTrajectories {
    pub times: Vec<f64>,
    /// `positions[k]` is the flat marker array at `times[k]`.
    pub positions: Vec<Vec<f64>>,
}

/// Follows `seeds` under the field generated by the evolving ensemble.
pub fn track_characteristics(
    state: &FlowState,
    spec: &KernelSpec,
    cfg: &IntegratorConfig,
    seeds: &[Vec<f64>],
    interval: f64,
) -> Result<MarkerTrajectories> {
    let start = state.clone().with_markers(seeds);
    let mut out = MarkerTrajectories {
        times: Vec::new(),
        positions: Vec::new(),
    };
    let mut rec = |s: &FlowState| -> Result<()> {
        out.times.push(s.time);
        out.positions.push(s.markers.clone());
        Ok(())
    };
    evolve(start, spec, cfg, interval, &mut rec)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Limiter {
    #[default]
    None,
    Minmod,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircleSolverConfig {
    pub n: usize,
    pub cfl: f64,
    pub limiter: Limiter,
}

impl Default for CircleSolverConfig {
    fn default() -> Self {
        Self {
            n: 1024,
            cfl: 0.9,
            limiter: Limiter::None,
        }
    }
}

impl CircleSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 64 || self.n % 2 != 0 {
            return Err(FlowError::Range(format!("grid size {} must be even and >= 64", self.n)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 0.9) {
            return Err(FlowError::Range(format!("cfl = {} not in (0, 0.9]", self.cfl)));
        }
        Ok(())
    }
}

/// Interaction kernel `K(h) = −sin h · e^{β cos h}` at the half-integer
/// offsets `(m + ½)Δθ`, `m < N/2`. Offsets beyond π follow from `K(−h) = −K(h)`.
#[derive(Debug, Clone)]
pub struct CircleKernelTable {
    n: usize,
    half: Vec<f64>,
}

impl CircleKernelTable {
    pub fn new(n: usize, beta: f64) -> Self {
        let dt = TAU / n as f64;
        let half = (0..n / 2)
            .map(|m| {
                let h = (m as f64 + 0.5) * dt;
                -h.sin() * (beta * h.cos()).exp()
            })
            .collect();
        Self { n, half }
    }

    /// Velocity at interface `k + ½` (between cells `k` and `k+1`) from the
    /// cell masses.
    pub fn interface_velocities(&self, masses: &[f64]) -> Vec<f64> {
        let n = self.n;
        assert_eq!(masses.len(), n);
        let occupied: Vec<usize> = (0..n).filter(|&j| masses[j] != 0.0).collect();
        let mut v = vec![0.0; n];
        if occupied.len() * 8 < n {
            // sparse sources: accumulate each occupied cell in index order
            for &j in &occupied {
                let mj = masses[j];
                for (k, vk) in v.iter_mut().enumerate() {
                    // offset index r with θ_{k+½} − θ_j = (r + ½)Δθ (mod 2π)
                    let r = (k + n - j) % n;
                    let kern = if r < n / 2 {
                        self.half[r]
                    } else {
                        -self.half[n - 1 - r]
                    };
                    *vk += mj * kern;
                }
            }
        } else {
            // antisymmetric pairing, exact zero for uniform data
            for (k, vk) in v.iter_mut().enumerate() {
                let mut acc = crate::vecops::Kahan::default();
                for (m, km) in self.half.iter().enumerate() {
                    let a = masses[(k + n - m) % n];
                    let b = masses[(k + 1 + m) % n];
                    acc.add(km * (a - b));
                }
                *vk = acc.value();
            }
        }
        v
    }
}

fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a.abs() < b.abs() {
        a
    } else {
        b
    }
}

fn fluxes(f: &[f64], v: &[f64], limiter: Limiter) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|k| {
            let kp = (k + 1) % n;
            let (left, right) = match limiter {
                Limiter::None => (f[k], f[kp]),
                Limiter::Minmod => {
                    let km = (k + n - 1) % n;
                    let kpp = (k + 2) % n;
                    (
                        f[k] + 0.5 * minmod(f[k] - f[km], f[kp] - f[k]),
                        f[kp] - 0.5 * minmod(f[kp] - f[k], f[kpp] - f[kp]),
                    )
                }
            };
            v[k].max(0.0) * left + v[k].min(0.0) * right
        })
        .collect()
}

fn apply_fluxes(f: &[f64], flux: &[f64], lambda: f64) -> Vec<f64> {
    let n = f.len();
    (0..n)
        .map(|k| f[k] - lambda * (flux[k] - flux[(k + n - 1) % n]))
        .collect()
}

/// Largest stable step for the given interface velocities: the total
/// outflow of any cell over one step stays below `cfl` of its content.
pub fn cfl_step(v: &[f64], dtheta: f64, cfl: f64) -> f64 {
    let n = v.len();
    let out = (0..n)
        .map(|k| v[k].max(0.0) + (-v[(k + n - 1) % n]).max(0.0))
        .fold(0.0, f64::max);
    if out == 0.0 {
        f64::INFINITY
    } else {
        cfl * dtheta / out
    }
}

/// One conservative step of `∂_t f + ∂_θ(f v) = 0`, capped at `dt_cap`.
/// Returns the new density and the step taken.
pub fn step_circle_density(
    f: &CircleDensity,
    table: &CircleKernelTable,
    cfg: &CircleSolverConfig,
    dt_cap: f64,
) -> Result<(CircleDensity, f64)> {
    let dtheta = f.dtheta();
    let v = table.interface_velocities(&f.masses());
    let dt = cfl_step(&v, dtheta, cfg.cfl).min(dt_cap);
    let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let courant = vmax * dt / dtheta;
    if courant > 1.0 {
        return Err(FlowError::Cfl(courant));
    }
    if vmax == 0.0 {
        return Ok((f.clone(), dt));
    }
    let lambda = dt / dtheta;
    let values = match cfg.limiter {
        Limiter::None => apply_fluxes(f.values(), &fluxes(f.values(), &v, Limiter::None), lambda),
        Limiter::Minmod => {
            // Heun / SSP-RK2 with the velocity refreshed at the stage
            let stage = apply_fluxes(f.values(), &fluxes(f.values(), &v, Limiter::Minmod), lambda);
            let sd = CircleDensity::from_values_unchecked(stage.clone());
            let v2 = table.interface_velocities(&sd.masses());
            let second = apply_fluxes(&stage, &fluxes(&stage, &v2, Limiter::Minmod), lambda);
            f.values()
                .iter()
                .zip(&second)
                .map(|(a, b)| 0.5 * (a + b))
                .collect()
        }
    };
    Ok((CircleDensity::from_values_unchecked(values), dt))
}

/// Density at a time plus marker angles advected by the same velocity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircleFlowState {
    pub time: f64,
    pub density: CircleDensity,
    #[serde(default)]
    pub markers: Vec<f64>,
}

/// Integrates a circle density to `t_end`, observing at `t = k·interval`.
/// Markers are advanced with Heun's method in the frozen field of each step.
pub fn evolve_circle(
    state: CircleFlowState,
    beta: f64,
    cfg: &CircleSolverConfig,
    t_end: f64,
    interval: f64,
    observer: &mut dyn FnMut(&CircleFlowState) -> Result<()>,
) -> Result<CircleFlowState> {
    cfg.validate()?;
    if state.density.n() != cfg.n {
        return Err(FlowError::Dimension(format!(
            "density has {} cells but the solver is configured for {}",
            state.density.n(),
            cfg.n
        )));
    }
    let table = CircleKernelTable::new(cfg.n, beta);
    let t0 = state.time;
    let ticks = tick_count(t_end - t0, interval);
    let mut state = state;
    observer(&state)?;
    for k in 1..=ticks {
        let target = (t0 + k as f64 * interval).min(t_end);
        while state.time < target {
            let remaining = target - state.time;
            let (next, dt) = step_circle_density(&state.density, &table, cfg, remaining)?;
            let markers = state
                .markers
                .iter()
                .map(|&th| {
                    let v1 = crate::fields::velocity_circle_density(&state.density, beta, th);
                    let mid = th + dt * v1;
                    let v2 = crate::fields::velocity_circle_density(&state.density, beta, mid);
                    (th + 0.5 * dt * (v1 + v2)).rem_euclid(TAU)
                })
                .collect();
            state = CircleFlowState {
                time: if dt >= remaining { target } else { state.time + dt },
                density: next,
                markers,
            };
        }
        state.time = target;
        observer(&state)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::{random_point, seeded_rng};
    use crate::vecops::{dot, norm};

    fn cfg(dt: f64, t_end: f64) -> IntegratorConfig {
        IntegratorConfig {
            dt,
            t_end,
            ..Default::default()
        }
    }

    #[test]
    fn single_atom_is_stationary() {
        let x = vec![0.6, 0.0, 0.8];
        let s = FlowState::new(ParticleEnsemble::dirac(&x).unwrap());
        let spec = KernelSpec::simple_attention(3, 1.0);
        let out = evolve(s, &spec, &cfg(0.1, 5.0), 1.0, &mut |_: &FlowState| Ok(())).unwrap();
        assert_eq!(out.ensemble.point(0), x.as_slice());
    }

    #[test]
    fn antipodal_pair_is_stationary() {
        let mu = ParticleEnsemble::new(vec![vec![1.0, 0.0], vec![-1.0, 0.0]], vec![0.5, 0.5]).unwrap();
        let spec = KernelSpec::simple_attention(2, 2.0);
        let out = step_particles(&FlowState::new(mu.clone()), &spec, &cfg(0.1, 1.0)).unwrap();
        assert_eq!(out.ensemble, mu);
    }

    #[test]
    fn kuramoto_pair_contracts_every_step() {
        let mu = ParticleEnsemble::uniform(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]).unwrap();
        let spec = KernelSpec::kuramoto(3);
        let mut s = FlowState::new(mu);
        let mut last = dot(s.ensemble.point(0), s.ensemble.point(1));
        for _ in 0..50 {
            s = step_particles(&s, &spec, &cfg(0.05, 1.0)).unwrap();
            let now = dot(s.ensemble.point(0), s.ensemble.point(1));
            assert!(now > last);
            last = now;
        }
    }

    #[test]
    fn rk4_self_convergence_is_fourth_order() {
        let mu = ParticleEnsemble::new(vec![vec![1.0, 0.0, 0.0], vec![0.0, 0.6, 0.8]], vec![0.3, 0.7]).unwrap();
        let spec = KernelSpec::kuramoto(3);
        let run = |dt: f64| {
            evolve(FlowState::new(mu.clone()), &spec, &cfg(dt, 2.0), 2.0, &mut |_: &FlowState| Ok(()))
                .unwrap()
                .ensemble
        };
        let a = run(0.2);
        let b = run(0.1);
        let c = run(0.05);
        let e1 = norm(&crate::vecops::sub(a.coords(), b.coords()));
        let e2 = norm(&crate::vecops::sub(b.coords(), c.coords()));
        assert!(e1 / e2 >= 14.0, "ratio {}", e1 / e2);
    }

    #[test]
    fn marker_on_atom_follows_atom() {
        let mut rng = seeded_rng(7);
        let pts: Vec<Vec<f64>> = (0..6).map(|_| random_point(3, &mut rng)).collect();
        let mu = ParticleEnsemble::uniform(pts.clone()).unwrap();
        let spec = KernelSpec::simple_attention(3, 1.0);
        let s = FlowState::new(mu).with_markers(&[pts[2].clone()]);
        let out = evolve(s, &spec, &cfg(0.05, 3.0), 1.0, &mut |_: &FlowState| Ok(())).unwrap();
        let gap = norm(&crate::vecops::sub(out.marker(0), out.ensemble.point(2)));
        assert!(gap < 1e-10);
    }

    #[test]
    fn adaptive_underflow_is_reported() {
        let mu = ParticleEnsemble::uniform(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let spec = KernelSpec::simple_attention(2, 1.0);
        let c = IntegratorConfig {
            adaptive: true,
            tolerance: 1e-300,
            min_dt: 1e-3,
            ..cfg(0.1, 1.0)
        };
        let r = evolve(FlowState::new(mu), &spec, &c, 1.0, &mut |_: &FlowState| Ok(()));
        assert!(matches!(r, Err(FlowError::StepSize { .. })));
    }

    #[test]
    fn uniform_density_is_a_fixed_point() {
        let f = CircleDensity::uniform(256);
        let table = CircleKernelTable::new(256, 5.0);
        let c = CircleSolverConfig { n: 256, ..Default::default() };
        let (g, _) = step_circle_density(&f, &table, &c, 0.1).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn density_step_conserves_mass_and_positivity() {
        let n = 512;
        let vals: Vec<f64> = (0..n)
            .map(|k| 1.0 + 0.8 * (3.0 * TAU * k as f64 / n as f64).sin())
            .collect();
        let total: f64 = vals.iter().sum::<f64>() * TAU / n as f64;
        let f = CircleDensity::new(vals.iter().map(|v| v / total).collect()).unwrap();
        let table = CircleKernelTable::new(n, 2.0);
        let c = CircleSolverConfig { n, ..Default::default() };
        let mut g = f;
        for _ in 0..50 {
            let before = g.total_mass();
            g = step_circle_density(&g, &table, &c, 1.0).unwrap().0;
            assert!((g.total_mass() - before).abs() < 1e-14);
            assert!(g.values().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn interface_velocity_paths_agree() {
        let n = 256;
        let table = CircleKernelTable::new(n, 3.0);
        let mut sparse = vec![0.0; n];
        sparse[5] = 0.4;
        sparse[130] = 0.6;
        let dense: Vec<f64> = sparse.iter().map(|m| m + 1e-300).collect();
        let a = table.interface_velocities(&sparse);
        let b = table.interface_velocities(&dense);
        for k in 0..n {
            assert!((a[k] - b[k]).abs() < 1e-12);
        }
        // direct evaluation at the interface angle
        let th = (7.0 + 0.5) * TAU / n as f64;
        let angles = [5.0 * TAU / n as f64, 130.0 * TAU / n as f64];
        let direct = crate::fields::velocity_circle_atoms(&angles, &[0.4, 0.6], 3.0, th);
        assert!((a[7] - direct).abs() < 1e-12);
    }

    #[test]
    fn upwind_update_is_l1_contracting_for_a_frozen_field() {
        use rand::Rng;
        let mut rng = seeded_rng(11);
        let n = 128;
        let dtheta = TAU / n as f64;
        for _ in 0..200 {
            let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let f: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let g: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..2.0)).collect();
            let lambda = cfl_step(&v, dtheta, 0.9) / dtheta;
            let step = |h: &[f64]| apply_fluxes(h, &fluxes(h, &v, Limiter::None), lambda);
            let (f1, g1) = (step(&f), step(&g));
            let l1 = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum() };
            assert!(l1(&f1, &g1) <= l1(&f, &g) * (1.0 + 1e-13));
            assert!(f1.iter().all(|x| *x >= 0.0));
        }
    }
}
