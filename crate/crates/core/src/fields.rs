//! Velocity fields generated by a measure: the attention field, the
//! Wasserstein gradient `X̃`, the general field `Y`, and its split into the
//! Kuramoto part `V` and the perturbation `W`.
//!
//! Every sum runs over sources in ascending index order with compensated
//! accumulation, so a target's value never depends on how targets are
//! distributed across threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ensemble::{CircleDensity, ParticleEnsemble};
use crate::kernel::KernelSpec;
use crate::vecops::{dot, Kahan};

/// Which field drives the particles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VelocityLaw {
    /// `Y(x) = Σ w P_x[y] φ'(⟨Ax,y⟩)`.
    #[default]
    General,
    /// `X̃(x) = Σ w P_x[Ay] φ'(⟨Ax,y⟩)`.
    Gradient,
}

struct Sums {
    y: Vec<Kahan>,
    xy: Kahan,
    s: Kahan,
}

/// Accumulates `Σ c_j y_j`, `Σ c_j⟨x,y_j⟩` and `Σ c_j s_j` with
/// `s_j = ⟨ax, y_j⟩` and `c_j = w_j φ'(s_j)`.
#[inline]
fn accumulate<F: Fn(f64) -> f64>(mu: &ParticleEnsemble, x: &[f64], ax: &[f64], phi_prime: F) -> Sums {
    let d = mu.dim();
    let mut sums = Sums {
        y: vec![Kahan::default(); d],
        xy: Kahan::default(),
        s: Kahan::default(),
    };
    for (y, w) in mu.points().zip(mu.weights()) {
        let s = dot(ax, y);
        let c = w * phi_prime(s);
        for (acc, yi) in sums.y.iter_mut().zip(y) {
            acc.add(c * yi);
        }
        sums.xy.add(c * dot(x, y));
        sums.s.add(c * s);
    }
    sums
}

fn tangent_part(x: &[f64], mut v: Vec<f64>) -> Vec<f64> {
    let r = dot(&v, x);
    v.iter_mut().zip(x).for_each(|(vi, xi)| *vi -= r * xi);
    v
}

/// `Σ_j w_j P_x[y_j] e^{β⟨x,y_j⟩}`.
pub fn velocity_simple(mu: &ParticleEnsemble, beta: f64, x: &[f64]) -> Vec<f64> {
    let sums = accumulate(mu, x, x, |s| (beta * s).exp());
    let xy = sums.xy.value();
    let v = sums.y.iter().zip(x).map(|(a, xi)| a.value() - xy * xi).collect();
    tangent_part(x, v)
}

/// `Σ_j w_j P_x[y_j] φ'(⟨Ax,y_j⟩)`; `nu` may be any positive measure.
pub fn velocity_general(nu: &ParticleEnsemble, spec: &KernelSpec, x: &[f64]) -> Vec<f64> {
    let ax = spec.apply(x);
    let sums = accumulate(nu, x, &ax, |s| spec.phi_prime(s));
    let xy = sums.xy.value();
    let v = sums.y.iter().zip(x).map(|(a, xi)| a.value() - xy * xi).collect();
    tangent_part(x, v)
}

/// `Σ_j w_j P_x[A y_j] φ'(⟨Ax,y_j⟩)`, evaluated as `A(Σ c_j y_j) − (Σ c_j s_j) x`.
pub fn velocity_gradient(mu: &ParticleEnsemble, spec: &KernelSpec, x: &[f64]) -> Vec<f64> {
    let ax = spec.apply(x);
    let sums = accumulate(mu, x, &ax, |s| spec.phi_prime(s));
    let cy: Vec<f64> = sums.y.iter().map(|a| a.value()).collect();
    let acy = spec.apply(&cy);
    let cs = sums.s.value();
    let v = acy.iter().zip(x).map(|(a, xi)| a - cs * xi).collect();
    tangent_part(x, v)
}

pub fn velocity(law: VelocityLaw, mu: &ParticleEnsemble, spec: &KernelSpec, x: &[f64]) -> Vec<f64> {
    match law {
        VelocityLaw::General => velocity_general(mu, spec, x),
        VelocityLaw::Gradient => velocity_gradient(mu, spec, x),
    }
}

/// `(V, W)` with `V = P_x[M]` and `W = Y − V`.
pub fn kuramoto_part_and_perturbation(
    mu: &ParticleEnsemble,
    spec: &KernelSpec,
    x: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let m = mean_vector(mu);
    let v = crate::sphere::project_tangent(x, &m);
    let y = velocity_general(mu, spec, x);
    let w = y.iter().zip(&v).map(|(a, b)| a - b).collect();
    (v, w)
}

/// `Σ w_j y_j` in fixed order.
pub fn mean_vector(mu: &ParticleEnsemble) -> Vec<f64> {
    let mut acc = vec![Kahan::default(); mu.dim()];
    for (y, w) in mu.points().zip(mu.weights()) {
        for (a, yi) in acc.iter_mut().zip(y) {
            a.add(w * yi);
        }
    }
    acc.iter().map(|a| a.value()).collect()
}

/// The field at every target (flat `m × d` array), parallel over targets.
pub fn velocity_field_batch(
    mu: &ParticleEnsemble,
    spec: &KernelSpec,
    law: VelocityLaw,
    targets: &[f64],
) -> Vec<f64> {
    let d = mu.dim();
    let mut out = vec![0.0; targets.len()];
    out.par_chunks_mut(d)
        .zip(targets.par_chunks(d))
        .for_each(|(o, x)| o.copy_from_slice(&velocity(law, mu, spec, x)));
    out
}

/// The field at the atoms of `mu` itself.
pub fn velocity_at_atoms(mu: &ParticleEnsemble, spec: &KernelSpec, law: VelocityLaw) -> Vec<f64> {
    velocity_field_batch(mu, spec, law, mu.coords())
}

/// Largest atom speed under `law`.
pub fn max_atom_speed(mu: &ParticleEnsemble, spec: &KernelSpec, law: VelocityLaw) -> f64 {
    velocity_at_atoms(mu, spec, law)
        .chunks(mu.dim())
        .map(crate::vecops::norm)
        .fold(0.0, f64::max)
}

/// Angular velocity `−Σ w sin(θ−ω) e^{β cos(θ−ω)}` generated by atoms.
pub fn velocity_circle_atoms(angles: &[f64], weights: &[f64], beta: f64, theta: f64) -> f64 {
    let mut acc = Kahan::default();
    for (om, w) in angles.iter().zip(weights) {
        let (s, c) = (theta - om).sin_cos();
        acc.add(-w * s * (beta * c).exp());
    }
    acc.value()
}

/// Angular velocity generated by a grid density (midpoint quadrature).
pub fn velocity_circle_density(f: &CircleDensity, beta: f64, theta: f64) -> f64 {
    let dt = f.dtheta();
    let mut acc = Kahan::default();
    for (k, v) in f.values().iter().enumerate() {
        if *v == 0.0 {
            continue;
        }
        let (s, c) = (theta - f.center(k)).sin_cos();
        acc.add(-v * dt * s * (beta * c).exp());
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::{make_example_2_1, make_example_2_4};
    use crate::sphere::{random_point, seeded_rng};
    use crate::vecops::norm;
    use std::f64::consts::PI;

    #[test]
    fn dirac_generates_no_velocity_at_itself() {
        let mut rng = seeded_rng(1);
        let x = random_point(4, &mut rng);
        let mu = ParticleEnsemble::dirac(&x).unwrap();
        let spec = KernelSpec::simple_attention(4, 2.0);
        assert!(norm(&velocity_simple(&mu, 2.0, &x)) < 1e-15);
        assert!(norm(&velocity_gradient(&mu, &spec, &x)) < 1e-15);
    }

    #[test]
    fn example_2_4_top_atom_is_at_rest() {
        let mu = make_example_2_4(0.005).unwrap();
        for beta in [0.5, 1.0, 5.0] {
            assert!(norm(&velocity_simple(&mu, beta, &[0.0, 1.0])) < 1e-14);
        }
    }

    #[test]
    fn example_2_4_lower_atoms_move_toward_south() {
        let xi = 0.005f64;
        let mu = make_example_2_4(xi).unwrap();
        let left = mu.point(1).to_vec();
        let right = mu.point(2).to_vec();
        let vl = velocity_simple(&mu, 1.0, &left);
        let vr = velocity_simple(&mu, 1.0, &right);
        // counterclockwise tangent at angle θ is (−sin θ, cos θ)
        let tangent = |p: &[f64]| [-p[1], p[0]];
        let al = dot(&vl, &tangent(&left));
        let ar = dot(&vr, &tangent(&right));
        assert!(al > 0.0, "left atom should rotate counterclockwise toward -pi/2");
        assert!((al + ar).abs() < 1e-15);
    }

    #[test]
    fn example_2_1_is_critical() {
        for eps in [0.01, 0.1, 0.3, 0.7, 0.99] {
            let mu = make_example_2_1(eps).unwrap();
            for beta in [0.1, 1.0, 10.0] {
                for p in mu.points() {
                    assert!(norm(&velocity_simple(&mu, beta, p)) < 1e-15);
                }
            }
        }
    }

    #[test]
    fn kuramoto_reduces_to_projected_mean() {
        let mut rng = seeded_rng(2);
        let pts: Vec<Vec<f64>> = (0..7).map(|_| random_point(3, &mut rng)).collect();
        let mu = ParticleEnsemble::uniform(pts).unwrap();
        let spec = KernelSpec::kuramoto(3);
        let m = mean_vector(&mu);
        for _ in 0..10 {
            let x = random_point(3, &mut rng);
            let expect = crate::sphere::project_tangent(&x, &m);
            let g = velocity_gradient(&mu, &spec, &x);
            let y = velocity_general(&mu, &spec, &x);
            for k in 0..3 {
                assert!((g[k] - expect[k]).abs() < 1e-14);
                assert!((y[k] - expect[k]).abs() < 1e-14);
            }
            let (_, w) = kuramoto_part_and_perturbation(&mu, &spec, &x);
            assert!(norm(&w) < 1e-15);
        }
    }

    #[test]
    fn literal_attention_gradient_is_beta_times_simple() {
        let mut rng = seeded_rng(3);
        let beta = 1.7;
        let pts: Vec<Vec<f64>> = (0..9).map(|_| random_point(3, &mut rng)).collect();
        let mu = ParticleEnsemble::uniform(pts).unwrap();
        let spec = KernelSpec::scaled_identity_exp(3, beta).unwrap();
        for _ in 0..10 {
            let x = random_point(3, &mut rng);
            let g = velocity_gradient(&mu, &spec, &x);
            let s = velocity_simple(&mu, beta, &x);
            for k in 0..3 {
                assert!((g[k] - beta * s[k]).abs() < 1e-12 * (1.0 + g[k].abs()));
            }
        }
    }

    #[test]
    fn simple_attention_general_matches_simple() {
        let mut rng = seeded_rng(4);
        let pts: Vec<Vec<f64>> = (0..5).map(|_| random_point(2, &mut rng)).collect();
        let mu = ParticleEnsemble::uniform(pts).unwrap();
        let spec = KernelSpec::simple_attention(2, 3.0);
        let x = random_point(2, &mut rng);
        assert_eq!(velocity_general(&mu, &spec, &x), velocity_simple(&mu, 3.0, &x));
    }

    #[test]
    fn batch_matches_pointwise_bitwise() {
        let mut rng = seeded_rng(5);
        let pts: Vec<Vec<f64>> = (0..40).map(|_| random_point(3, &mut rng)).collect();
        let mu = ParticleEnsemble::uniform(pts).unwrap();
        let spec = KernelSpec::simple_attention(3, 1.3);
        let targets: Vec<f64> = (0..25).flat_map(|_| random_point(3, &mut rng)).collect();
        let batch = velocity_field_batch(&mu, &spec, VelocityLaw::General, &targets);
        for (o, x) in batch.chunks(3).zip(targets.chunks(3)) {
            assert_eq!(o, velocity_general(&mu, &spec, x).as_slice());
        }
    }

    #[test]
    fn circle_atoms_agree_with_ambient_field() {
        let angles = [0.3, 2.0, 4.1];
        let weights = [0.2, 0.5, 0.3];
        let mu = ParticleEnsemble::from_angles(&angles, &weights).unwrap();
        let beta = 2.5;
        for &th in &[0.0, 1.0, PI, 5.5] {
            let x = [f64::cos(th), f64::sin(th)];
            let v = velocity_simple(&mu, beta, &x);
            let ang = dot(&v, &[-x[1], x[0]]);
            assert!((ang - velocity_circle_atoms(&angles, &weights, beta, th)).abs() < 1e-13);
        }
    }

    #[test]
    fn uniform_density_has_zero_velocity() {
        let f = CircleDensity::uniform(512);
        for &th in &[0.0, 0.7, 2.0, 4.0] {
            assert!(velocity_circle_density(&f, 3.0, th).abs() < 1e-10);
        }
    }
}
