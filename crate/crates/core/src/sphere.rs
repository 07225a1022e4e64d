//! Geometry on the unit sphere: tangent projection, geodesic distance,
//! spherical caps, the gnomonic chart and uniform sampling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::vecops::{dot, norm, normalize_in_place};

/// Tolerance on `|‖x‖ − 1|` accepted by [`SpherePoint::new`].
pub const UNIT_TOL: f64 = 1e-12;

/// A unit vector in R^d, d ≥ 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(FlowError::Dimension(format!(
                "sphere points need d >= 2, got {}",
                coords.len()
            )));
        }
        let n = norm(&coords);
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
            return Err(FlowError::Range(format!("point norm {n} is not 1")));
        }
        Ok(Self { coords })
    }

    /// Normalizes an arbitrary nonzero vector onto the sphere.
    pub fn from_vector(mut coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(FlowError::Dimension(format!(
                "sphere points need d >= 2, got {}",
                coords.len()
            )));
        }
        let n = norm(&coords);
        if !(n.is_finite() && n > 0.0) {
            return Err(FlowError::Range("cannot normalize a zero vector".into()));
        }
        normalize_in_place(&mut coords);
        Ok(Self { coords })
    }

    /// Point on the circle at angle `theta`.
    pub fn from_angle(theta: f64) -> Self {
        Self {
            coords: vec![theta.cos(), theta.sin()],
        }
    }

    pub fn basis(d: usize, i: usize) -> Self {
        Self {
            coords: crate::vecops::basis(d, i),
        }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.coords
    }

    pub fn neg(&self) -> Self {
        Self {
            coords: self.coords.iter().map(|v| -v).collect(),
        }
    }
}

impl AsRef<[f64]> for SpherePoint {
    fn as_ref(&self) -> &[f64] {
        &self.coords
    }
}

/// `y − ⟨x,y⟩x`, the projection of `y` onto the tangent plane at `x`.
pub fn project_tangent(x: &[f64], y: &[f64]) -> Vec<f64> {
    let s = dot(x, y);
    x.iter().zip(y).map(|(xi, yi)| yi - s * xi).collect()
}

/// Great-circle distance in [0, π].
///
/// Evaluated as `2·atan2(‖x−y‖, ‖x+y‖)`, which equals `arccos⟨x,y⟩` for unit
/// vectors but keeps full relative precision near 0 and π.
pub fn geodesic_distance(x: &[f64], y: &[f64]) -> f64 {
    let mut dm = 0.0;
    let mut dp = 0.0;
    for (a, b) in x.iter().zip(y) {
        dm += (a - b) * (a - b);
        dp += (a + b) * (a + b);
    }
    2.0 * dm.sqrt().atan2(dp.sqrt())
}

/// Circular distance between two angles, in [0, π].
pub fn circle_distance(a: f64, b: f64) -> f64 {
    let t = (a - b).rem_euclid(std::f64::consts::TAU);
    t.min(std::f64::consts::TAU - t)
}

/// Closed cap `{x : ⟨x, center⟩ ≥ cos(angle)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalCap {
    pub center: SpherePoint,
    pub angle: f64,
}

impl SphericalCap {
    pub fn new(center: SpherePoint, angle: f64) -> Result<Self> {
        if !(angle > 0.0 && angle < std::f64::consts::PI) {
            return Err(FlowError::Range(format!("cap angle {angle} not in (0, pi)")));
        }
        Ok(Self { center, angle })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        dot(x, self.center.as_slice()) >= self.angle.cos()
    }

    /// The antipodal cap `S_α^-(center)`.
    pub fn antipodal(&self) -> Self {
        Self {
            center: self.center.neg(),
            angle: self.angle,
        }
    }
}

/// Gnomonic chart around a pole: `G(x) = (x₁/x_d, …, x_{d−1}/x_d)` in a frame
/// whose last vector is the pole.
#[derive(Debug, Clone)]
pub struct GnomonicChart {
    north: SpherePoint,
    /// Orthonormal frame; `frame[d-1]` is the pole.
    frame: Vec<Vec<f64>>,
}

impl GnomonicChart {
    pub fn new(north: SpherePoint) -> Self {
        let d = north.dim();
        let u = north.as_slice();
        let mut frame = Vec::with_capacity(d);
        if 1.0 + u[d - 1] > 1e-8 {
            // Q = H_v·H_{e_d} with v = e_d + u: sends e_d to u, Q = I at u = e_d.
            let mut v = u.to_vec();
            v[d - 1] += 1.0;
            let vv = dot(&v, &v);
            for i in 0..d {
                let sign = if i == d - 1 { -1.0 } else { 1.0 };
                let col: Vec<f64> = (0..d)
                    .map(|r| {
                        let id = if r == i { 1.0 } else { 0.0 };
                        sign * (id - 2.0 * v[r] * v[i] / vv)
                    })
                    .collect();
                frame.push(col);
            }
        } else {
            // Near −e_d: plain reflection with w = e_d − u.
            let mut w: Vec<f64> = u.iter().map(|x| -x).collect();
            w[d - 1] += 1.0;
            let ww = dot(&w, &w);
            for i in 0..d {
                let col: Vec<f64> = (0..d)
                    .map(|r| {
                        let id = if r == i { 1.0 } else { 0.0 };
                        id - 2.0 * w[r] * w[i] / ww
                    })
                    .collect();
                frame.push(col);
            }
        }
        Self { north, frame }
    }

    pub fn north(&self) -> &SpherePoint {
        &self.north
    }

    pub fn dim(&self) -> usize {
        self.north.dim()
    }

    pub fn frame(&self) -> &[Vec<f64>] {
        &self.frame
    }

    fn to_local(&self, x: &[f64]) -> Vec<f64> {
        self.frame.iter().map(|b| dot(b, x)).collect()
    }

    fn to_ambient(&self, z: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (zi, b) in z.iter().zip(&self.frame) {
            crate::vecops::axpy(&mut out, *zi, b);
        }
        out
    }

    /// `G(x)`; fails unless `⟨x, north⟩ > 0`.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let z = self.to_local(x);
        let d = self.dim();
        let zd = z[d - 1];
        if zd <= 0.0 {
            return Err(FlowError::PoleHemisphere(zd));
        }
        Ok(z[..d - 1].iter().map(|v| v / zd).collect())
    }

    /// `F(u) = (u + e_d)/√(1+‖u‖²)`.
    pub fn inverse(&self, u: &[f64]) -> SpherePoint {
        let s = (1.0 + dot(u, u)).sqrt();
        let mut z: Vec<f64> = u.iter().map(|v| v / s).collect();
        z.push(1.0 / s);
        let mut x = self.to_ambient(&z);
        normalize_in_place(&mut x);
        SpherePoint { coords: x }
    }

    /// `dF_u(X) = ((1+‖u‖²)X − ⟨X,u⟩u − ⟨X,u⟩e_d)/(1+‖u‖²)^{3/2}` in ambient
    /// coordinates.
    pub fn tangent_map(&self, u: &[f64], x: &[f64]) -> Vec<f64> {
        let q = 1.0 + dot(u, u);
        let xu = dot(x, u);
        let denom = q.powf(1.5);
        let mut z: Vec<f64> = x
            .iter()
            .zip(u)
            .map(|(xi, ui)| (q * xi - xu * ui) / denom)
            .collect();
        z.push(-xu / denom);
        self.to_ambient(&z)
    }
}

/// Deterministic generator used for every randomized construction.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A uniform random point drawn from normalized Gaussians.
pub fn random_point<R: rand::Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = norm(&v);
        if n > 1e-12 {
            v.iter_mut().for_each(|x| *x /= n);
            return v;
        }
    }
}

/// `n` i.i.d. uniform points on S^{d-1}.
pub fn sample_uniform(d: usize, n: usize, seed: u64) -> Result<Vec<SpherePoint>> {
    if d < 2 {
        return Err(FlowError::Dimension(format!("d = {d} < 2")));
    }
    if n == 0 {
        return Err(FlowError::Range("n must be at least 1".into()));
    }
    let mut rng = seeded_rng(seed);
    Ok((0..n)
        .map(|_| SpherePoint {
            coords: random_point(d, &mut rng),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn projection_of_self_and_orthogonal() {
        let e1 = [1.0, 0.0, 0.0];
        let e2 = [0.0, 1.0, 0.0];
        assert_eq!(project_tangent(&e1, &e1), vec![0.0; 3]);
        assert_eq!(project_tangent(&e1, &e2), e2.to_vec());
    }

    #[test]
    fn distances_on_axes() {
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        assert_eq!(geodesic_distance(&e1, &e1), 0.0);
        assert!((geodesic_distance(&e1, &[-1.0, 0.0]) - PI).abs() < 1e-15);
        assert!((geodesic_distance(&e1, &e2) - PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn distance_agrees_with_arccos_away_from_poles() {
        let mut rng = seeded_rng(3);
        for _ in 0..1000 {
            let x = random_point(4, &mut rng);
            let y = random_point(4, &mut rng);
            let a = dot(&x, &y).clamp(-1.0, 1.0).acos();
            assert!((geodesic_distance(&x, &y) - a).abs() < 1e-7);
        }
    }

    #[test]
    fn sphere_point_validation() {
        assert!(SpherePoint::new(vec![1.0]).is_err());
        assert!(SpherePoint::new(vec![1.0, 1.0]).is_err());
        assert!(SpherePoint::new(vec![0.6, 0.8]).is_ok());
    }

    #[test]
    fn cap_boundary_is_inside() {
        let cap = SphericalCap::new(SpherePoint::basis(2, 0), PI / 3.0).unwrap();
        let b = SpherePoint::from_angle(PI / 3.0 - 1e-15);
        assert!(cap.contains(b.as_slice()));
        assert!(!cap.contains(&[0.0, 1.0]));
    }

    #[test]
    fn chart_pole_maps_to_origin() {
        let mut rng = seeded_rng(11);
        for d in 2..6 {
            let u = SpherePoint::new(random_point(d, &mut rng)).unwrap();
            let chart = GnomonicChart::new(u.clone());
            let g = chart.forward(u.as_slice()).unwrap();
            assert!(norm(&g) < 1e-14);
            let back = chart.inverse(&vec![0.0; d - 1]);
            assert!(geodesic_distance(back.as_slice(), u.as_slice()) < 1e-14);
        }
    }

    #[test]
    fn chart_at_south_pole_uses_fallback_frame() {
        let south = SpherePoint::new(vec![0.0, 0.0, -1.0]).unwrap();
        let chart = GnomonicChart::new(south.clone());
        for (i, a) in chart.frame().iter().enumerate() {
            for (j, b) in chart.frame().iter().enumerate() {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((dot(a, b) - expect).abs() < 1e-15);
            }
        }
        assert_eq!(chart.frame()[2], south.as_slice().to_vec());
    }

    #[test]
    fn forward_rejects_lower_hemisphere() {
        let chart = GnomonicChart::new(SpherePoint::basis(3, 2));
        assert!(matches!(
            chart.forward(&[1.0, 0.0, 0.0]),
            Err(FlowError::PoleHemisphere(_))
        ));
    }

    #[test]
    fn cap_boundary_maps_to_radius_tan_alpha() {
        let chart = GnomonicChart::new(SpherePoint::basis(3, 2));
        for &alpha in &[0.1f64, 0.5, 1.0, 1.4] {
            let x = [alpha.sin() * 0.6, alpha.sin() * 0.8, alpha.cos()];
            let g = chart.forward(&x).unwrap();
            assert!((norm(&g) - f64::tan(alpha)).abs() < 1e-12);
        }
    }

    #[test]
    fn tangent_map_at_origin_is_embedding() {
        let chart = GnomonicChart::new(SpherePoint::basis(3, 2));
        let v = chart.tangent_map(&[0.0, 0.0], &[1.0, 0.0]);
        assert!((v[0] - 1.0).abs() < 1e-15 && v[1].abs() < 1e-15 && v[2].abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic_and_unit() {
        let a = sample_uniform(3, 100, 9).unwrap();
        let b = sample_uniform(3, 100, 9).unwrap();
        assert_eq!(a, b);
        for p in &a {
            assert!((norm(p.as_slice()) - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn sample_mean_is_small() {
        let pts = sample_uniform(3, 10_000, 5).unwrap();
        let mut m = [0.0; 3];
        for p in &pts {
            crate::vecops::axpy(&mut m, 1.0 / 10_000.0, p.as_slice());
        }
        assert!(norm(&m) <= 0.05);
    }
}
