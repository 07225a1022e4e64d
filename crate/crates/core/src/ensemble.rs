//! Probability measures on the sphere: weighted atoms in any dimension and
//! piecewise-constant densities on the circle.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::sphere::{random_point, seeded_rng, SpherePoint, UNIT_TOL};
use crate::vecops::{dot, norm, normalize_in_place};

/// Tolerance on `|Σw − 1|` for probability ensembles.
pub const MASS_TOL: f64 = 1e-12;
/// Tolerance on the normalization of circle densities.
pub const DENSITY_MASS_TOL: f64 = 1e-10;

/// Weighted atoms `Σ wᵢ δ_{xᵢ}` stored as a flat `n × d` coordinate array.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    d: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EnsembleJson {
    d: usize,
    points: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl Serialize for ParticleEnsemble {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EnsembleJson {
            d: self.d,
            points: self.points().map(|p| p.to_vec()).collect(),
            weights: self.weights.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ParticleEnsemble {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = EnsembleJson::deserialize(de)?;
        if raw.points.iter().any(|p| p.len() != raw.d) {
            return Err(serde::de::Error::custom("point length differs from d"));
        }
        ParticleEnsemble::positive_measure(raw.points, raw.weights)
            .map_err(serde::de::Error::custom)
    }
}

impl ParticleEnsemble {
    fn build(points: Vec<Vec<f64>>, weights: Vec<f64>, probability: bool) -> Result<Self> {
        if points.is_empty() {
            return Err(FlowError::InvalidMeasure("no atoms".into()));
        }
        if points.len() != weights.len() {
            return Err(FlowError::InvalidMeasure(format!(
                "{} points but {} weights",
                points.len(),
                weights.len()
            )));
        }
        let d = points[0].len();
        if d < 2 {
            return Err(FlowError::Dimension(format!("d = {d} < 2")));
        }
        let mut coords = Vec::with_capacity(points.len() * d);
        for (i, p) in points.iter().enumerate() {
            if p.len() != d {
                return Err(FlowError::Dimension(format!(
                    "atom {i} has length {}, expected {d}",
                    p.len()
                )));
            }
            let n = norm(p);
            if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
                return Err(FlowError::InvalidMeasure(format!("atom {i} has norm {n}")));
            }
            coords.extend_from_slice(p);
        }
        if let Some(i) = weights.iter().position(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(FlowError::InvalidMeasure(format!(
                "weight {i} = {} is not positive",
                weights[i]
            )));
        }
        if probability {
            let total: f64 = weights.iter().sum();
            if (total - 1.0).abs() > MASS_TOL {
                return Err(FlowError::InvalidMeasure(format!("weights sum to {total}")));
            }
        }
        Ok(Self { d, coords, weights })
    }

    /// A probability measure: unit atoms, positive weights summing to 1.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        Self::build(points, weights, true)
    }

    /// A positive measure with arbitrary total mass.
    pub fn positive_measure(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        Self::build(points, weights, false)
    }

    /// Equal weights `1/n`.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let n = points.len();
        Self::new(points, vec![1.0 / n as f64; n])
    }

    pub fn from_sphere_points(points: &[SpherePoint], weights: Vec<f64>) -> Result<Self> {
        Self::new(points.iter().map(|p| p.as_slice().to_vec()).collect(), weights)
    }

    /// Atoms on the circle at the given angles.
    pub fn from_angles(angles: &[f64], weights: &[f64]) -> Result<Self> {
        Self::new(
            angles.iter().map(|t| vec![t.cos(), t.sin()]).collect(),
            weights.to_vec(),
        )
    }

    /// The Dirac mass at `x`.
    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::new(vec![x.to_vec()], vec![1.0])
    }

    /// Same weights, new atom positions (renormalized onto the sphere).
    pub fn with_coords(&self, mut coords: Vec<f64>) -> Self {
        assert_eq!(coords.len(), self.coords.len());
        for p in coords.chunks_mut(self.d) {
            normalize_in_place(p);
        }
        Self {
            d: self.d,
            coords,
            weights: self.weights.clone(),
        }
    }

    /// Same weights, positions taken as given (not renormalized).
    pub(crate) fn with_raw_coords(&self, coords: Vec<f64>) -> Self {
        assert_eq!(coords.len(), self.coords.len());
        Self {
            d: self.d,
            coords,
            weights: self.weights.clone(),
        }
    }

    /// Same atoms, weights multiplied by `c` (a positive measure).
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            d: self.d,
            coords: self.coords.clone(),
            weights: self.weights.iter().map(|w| w * c).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks(self.d)
    }

    pub fn total_mass(&self) -> f64 {
        crate::vecops::kahan_sum(self.weights.iter().copied())
    }

    /// Angles in [0, 2π) of a circle ensemble.
    pub fn angles(&self) -> Result<Vec<f64>> {
        if self.d != 2 {
            return Err(FlowError::Dimension(format!("angles need d = 2, got {}", self.d)));
        }
        Ok(self
            .points()
            .map(|p| p[1].atan2(p[0]).rem_euclid(TAU))
            .collect())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ensemble serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| FlowError::Io(e.to_string()))
    }

    /// Reads atoms from CSV with a header row: coordinate columns followed by
    /// an optional `weight` column. Points are normalized; missing weights
    /// become uniform; weights are rescaled to total mass 1.
    pub fn from_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers().map_err(|e| FlowError::Io(e.to_string()))?.clone();
        let weight_col = headers.iter().position(|h| h == "weight");
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| FlowError::Io(e.to_string()))?;
            let mut p = Vec::new();
            let mut w = None;
            for (col, field) in rec.iter().enumerate() {
                let v: f64 = field.parse().map_err(|_| {
                    FlowError::Io(format!("row {}: column {col} is not a number", row + 2))
                })?;
                if Some(col) == weight_col {
                    w = Some(v);
                } else {
                    p.push(v);
                }
            }
            let n = norm(&p);
            if !(n > 0.0) {
                return Err(FlowError::InvalidMeasure(format!("row {}: zero point", row + 2)));
            }
            normalize_in_place(&mut p);
            points.push(p);
            weights.push(w.unwrap_or(1.0));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.iter().map(|w| w / total).collect();
        Self::new(points, weights)
    }
}

/// Piecewise-constant density on the circle; cell `k` is centered at
/// `θ_k = 2πk/N` and has width `2π/N`.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleDensity {
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DensityJson {
    #[serde(rename = "N")]
    n: usize,
    values: Vec<f64>,
}

impl Serialize for CircleDensity {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DensityJson {
            n: self.values.len(),
            values: self.values.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CircleDensity {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = DensityJson::deserialize(de)?;
        if raw.n != raw.values.len() {
            return Err(serde::de::Error::custom("N differs from the number of values"));
        }
        CircleDensity::new(raw.values).map_err(serde::de::Error::custom)
    }
}

impl CircleDensity {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(FlowError::InvalidMeasure("empty grid".into()));
        }
        if let Some(k) = values.iter().position(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(FlowError::InvalidMeasure(format!(
                "cell {k} has value {}",
                values[k]
            )));
        }
        let d = TAU / values.len() as f64;
        let mass = d * crate::vecops::kahan_sum(values.iter().copied());
        if (mass - 1.0).abs() > DENSITY_MASS_TOL {
            return Err(FlowError::InvalidMeasure(format!("density has mass {mass}")));
        }
        Ok(Self { values })
    }

    /// Skips validation; used by the solver, which conserves mass itself.
    pub fn from_values_unchecked(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            values: vec![1.0 / TAU; n],
        }
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn dtheta(&self) -> f64 {
        TAU / self.values.len() as f64
    }

    pub fn center(&self, k: usize) -> f64 {
        TAU * k as f64 / self.values.len() as f64
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Cell masses `f_k·Δθ`.
    pub fn masses(&self) -> Vec<f64> {
        let d = self.dtheta();
        self.values.iter().map(|v| v * d).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.dtheta() * crate::vecops::kahan_sum(self.values.iter().copied())
    }

    /// Atoms at the cell centers carrying the cell masses (empty cells dropped).
    pub fn to_atoms(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dtheta();
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0)
            .map(|(k, v)| (self.center(k), v * d))
            .unzip()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("density serializes")
    }
}

/// Three atoms at `π/2`, `−π/2−ξ`, `−π/2+ξ` with weights `1/50, 49/100, 49/100`.
///
/// Coordinates are written as exact mirror images, so the configuration is
/// symmetric about the vertical axis to the last bit.
pub fn make_example_2_4(xi: f64) -> Result<ParticleEnsemble> {
    if !(xi > 0.0 && xi < 0.01) {
        return Err(FlowError::Range(format!("xi = {xi} not in (0, 1/100)")));
    }
    let (s, c) = xi.sin_cos();
    ParticleEnsemble::new(
        vec![vec![0.0, 1.0], vec![-s, -c], vec![s, -c]],
        vec![1.0 / 50.0, 49.0 / 100.0, 49.0 / 100.0],
    )
}

/// `(1−ε)δ_{π/2} + εδ_{−π/2}`.
pub fn make_example_2_1(eps: f64) -> Result<ParticleEnsemble> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(FlowError::Range(format!("eps = {eps} not in (0, 1)")));
    }
    ParticleEnsemble::new(vec![vec![0.0, 1.0], vec![0.0, -1.0]], vec![1.0 - eps, eps])
}

/// Unnormalized mollifier `exp(−1/(1−(x/h)²))` on `(−h, h)`.
pub fn mollifier(x: f64, h: f64) -> f64 {
    let r = x / h;
    if r.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - r * r)).exp()
    }
}

/// Cell averages of a mollifier bump of half-width `h` centered on cell
/// `kc`, scaled so the bump carries `mass`. Sub-samples are taken in mirrored
/// pairs so the bump is exactly even on the grid.
fn add_bump(values: &mut [f64], kc: usize, h: f64, mass: f64) {
    let n = values.len();
    let dt = TAU / n as f64;
    const SUB: usize = 64;
    let mut cells = Vec::new();
    let reach = (h / dt).ceil() as i64 + 1;
    for k in -reach..=reach {
        let idx = (kc as i64 + k).rem_euclid(n as i64) as usize;
        let o = k as f64 * dt;
        let avg = (0..SUB / 2)
            .map(|j| {
                let s = (j as f64 + 0.5) * dt / SUB as f64;
                mollifier(o + s, h) + mollifier(o - s, h)
            })
            .sum::<f64>()
            / SUB as f64;
        if avg > 0.0 {
            cells.push((idx, avg));
        }
    }
    let total: f64 = cells.iter().map(|(_, v)| v * dt).sum();
    for (idx, v) in cells {
        values[idx] += v * mass / total;
    }
}

/// `f₀(x) = h₁(x) + h₂(π+x)`: a bump of mass 1/3 and half-width `η` at 0 and
/// a bump of mass 2/3 and half-width `ξ` at π.
pub fn make_example_2_6(eta: f64, xi: f64, n: usize) -> Result<CircleDensity> {
    if n % 2 != 0 {
        return Err(FlowError::Range(format!("grid size {n} must be even")));
    }
    for (name, v) in [("eta", eta), ("xi", xi)] {
        if !(v > 0.0 && v < 0.01) {
            return Err(FlowError::Range(format!("{name} = {v} not in (0, 1/100)")));
        }
    }
    if (n as f64) * eta < 8.0 || (n as f64) * xi < 8.0 {
        return Err(FlowError::SupportOverlap(format!(
            "N = {n} with eta = {eta}, xi = {xi} (need N*eta >= 8 and N*xi >= 8)"
        )));
    }
    let mut values = vec![0.0; n];
    add_bump(&mut values, 0, eta, 1.0 / 3.0);
    add_bump(&mut values, n / 2, xi, 2.0 / 3.0);
    CircleDensity::new(values)
}

/// `n` equal-weight atoms drawn by inverse-CDF sampling of the density.
pub fn sample_from_circle_density(f: &CircleDensity, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(FlowError::Range("n must be at least 1".into()));
    }
    let masses = f.masses();
    let mut cdf = Vec::with_capacity(masses.len());
    let mut acc = 0.0;
    for m in &masses {
        acc += m;
        cdf.push(acc);
    }
    let total = acc;
    let dt = f.dtheta();
    let mut rng = seeded_rng(seed);
    let angles: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * total;
            let k = cdf.partition_point(|c| *c <= u).min(masses.len() - 1);
            let k = (k..masses.len()).chain(0..k).find(|&j| masses[j] > 0.0).unwrap_or(k);
            let offset: f64 = rng.gen::<f64>() - 0.5;
            f.center(k) + offset * dt
        })
        .collect();
    ParticleEnsemble::from_angles(&angles, &vec![1.0 / n as f64; n])
}

/// Random positive weights summing to 1 (normalized exponentials).
pub fn random_weights<R: Rng>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).map(|v: f64| v + 1e-3).collect();
    let total: f64 = raw.iter().sum();
    raw.iter().map(|v| v / total).collect()
}

/// A point at geodesic distance `theta` from `center` in a random direction.
pub fn point_at_angle<R: Rng>(center: &[f64], theta: f64, rng: &mut R) -> Vec<f64> {
    let d = center.len();
    let v = loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let t = crate::sphere::project_tangent(center, &g);
        if norm(&t) > 1e-9 {
            break t;
        }
    };
    let nv = norm(&v);
    let mut x: Vec<f64> = center
        .iter()
        .zip(&v)
        .map(|(c, vi)| theta.cos() * c + theta.sin() * vi / nv)
        .collect();
    normalize_in_place(&mut x);
    x
}

/// `n` atoms inside the closed cap of angle `alpha` around `center`, with
/// either equal or random weights.
pub fn sample_cap(
    center: &[f64],
    n: usize,
    alpha: f64,
    random_weighting: bool,
    seed: u64,
) -> Result<ParticleEnsemble> {
    if !(alpha > 0.0 && alpha < PI) {
        return Err(FlowError::Range(format!("cap angle {alpha} not in (0, pi)")));
    }
    let d = center.len();
    let mut rng = seeded_rng(seed);
    let points: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let u: f64 = rng.gen();
            let theta = alpha * u.powf(1.0 / (d as f64 - 1.0)) * (1.0 - 1e-12);
            point_at_angle(center, theta, &mut rng)
        })
        .collect();
    let weights = if random_weighting {
        random_weights(n, &mut rng)
    } else {
        vec![1.0 / n as f64; n]
    };
    ParticleEnsemble::new(points, weights)
}

/// `n` equal-weight atoms with density proportional to `exp(κ⟨x, mean⟩)`.
pub fn sample_von_mises_fisher(mean: &[f64], n: usize, kappa: f64, seed: u64) -> Result<ParticleEnsemble> {
    if !(kappa >= 0.0) {
        return Err(FlowError::Range(format!("kappa = {kappa} must be >= 0")));
    }
    let d = mean.len();
    let mut rng = seeded_rng(seed);
    let mut points = Vec::with_capacity(n);
    while points.len() < n {
        let x = random_point(d, &mut rng);
        let accept = (kappa * (dot(&x, mean) - 1.0)).exp();
        if rng.gen::<f64>() < accept {
            points.push(x);
        }
    }
    ParticleEnsemble::uniform(points)
}

/// Named initial conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScenarioInit {
    Example21 { eps: f64 },
    Example24 { xi: f64 },
    Example26 { eta: f64, xi: f64, grid: usize },
    Uniform { d: usize, n: usize },
    Cap { d: usize, n: usize, angle: f64, #[serde(default)] random_weights: bool },
    VonMisesFisher { d: usize, n: usize, kappa: f64 },
    Example26Particles { eta: f64, xi: f64, grid: usize, n: usize },
    Atoms { points: Vec<Vec<f64>>, weights: Vec<f64> },
}

/// The measure an initialization produces.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialMeasure {
    Particles(ParticleEnsemble),
    Density(CircleDensity),
}

impl ScenarioInit {
    pub fn is_randomized(&self) -> bool {
        matches!(
            self,
            ScenarioInit::Uniform { .. }
                | ScenarioInit::Cap { .. }
                | ScenarioInit::VonMisesFisher { .. }
                | ScenarioInit::Example26Particles { .. }
        )
    }

    /// Builds the measure; `seed` must be present for randomized kinds.
    pub fn build(&self, seed: Option<u64>) -> Result<InitialMeasure> {
        let need_seed = || seed.ok_or_else(|| FlowError::Range("missing field `seed`".into()));
        let pole = |d: usize| crate::vecops::basis(d, d - 1);
        Ok(match self {
            ScenarioInit::Example21 { eps } => InitialMeasure::Particles(make_example_2_1(*eps)?),
            ScenarioInit::Example24 { xi } => InitialMeasure::Particles(make_example_2_4(*xi)?),
            ScenarioInit::Example26 { eta, xi, grid } => {
                InitialMeasure::Density(make_example_2_6(*eta, *xi, *grid)?)
            }
            ScenarioInit::Example26Particles { eta, xi, grid, n } => {
                let f = make_example_2_6(*eta, *xi, *grid)?;
                InitialMeasure::Particles(sample_from_circle_density(&f, *n, need_seed()?)?)
            }
            ScenarioInit::Uniform { d, n } => {
                let pts = crate::sphere::sample_uniform(*d, *n, need_seed()?)?;
                InitialMeasure::Particles(ParticleEnsemble::from_sphere_points(
                    &pts,
                    vec![1.0 / *n as f64; *n],
                )?)
            }
            ScenarioInit::Cap { d, n, angle, random_weights } => InitialMeasure::Particles(
                sample_cap(&pole(*d), *n, *angle, *random_weights, need_seed()?)?,
            ),
            ScenarioInit::VonMisesFisher { d, n, kappa } => InitialMeasure::Particles(
                sample_von_mises_fisher(&pole(*d), *n, *kappa, need_seed()?)?,
            ),
            ScenarioInit::Atoms { points, weights } => {
                let pts = points
                    .iter()
                    .map(|p| SpherePoint::from_vector(p.clone()).map(|s| s.into_vec()))
                    .collect::<Result<Vec<_>>>()?;
                InitialMeasure::Particles(ParticleEnsemble::new(pts, weights.clone())?)
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn example_2_4_layout() {
        let mu = make_example_2_4(0.005).unwrap();
        assert_eq!(mu.len(), 3);
        assert!((mu.total_mass() - 1.0).abs() < 1e-15);
        let m0: f64 = mu.points().zip(mu.weights()).map(|(p, w)| w * p[0]).sum();
        assert!(m0.abs() < 1e-14);
        let m1: f64 = mu.points().zip(mu.weights()).map(|(p, w)| w * p[1]).sum();
        let expect = 1.0 / 50.0 - 0.98 * 0.005f64.cos();
        assert!((m1 - expect).abs() < 1e-15);
        assert!(m1.abs() > 0.7);
        assert!(make_example_2_4(0.02).is_err());
        assert_eq!(make_example_2_4(0.005).unwrap(), mu);
    }

    #[test]
    fn example_2_6_masses_and_order() {
        let (eta, xi) = (0.008, 0.006);
        let f = make_example_2_6(eta, xi, 4096).unwrap();
        assert!((f.total_mass() - 1.0).abs() < 1e-10);
        let mut near0 = 0.0;
        let mut near_pi = 0.0;
        let mut c = 0.0;
        let mut s = 0.0;
        for (k, m) in f.masses().iter().enumerate() {
            let th = f.center(k);
            let off0 = crate::sphere::circle_distance(th, 0.0);
            let offp = crate::sphere::circle_distance(th, PI);
            if off0 <= eta + f.dtheta() {
                near0 += m;
            }
            if offp <= xi + f.dtheta() {
                near_pi += m;
            }
            c += m * th.cos();
            s += m * th.sin();
        }
        assert!((near0 - 1.0 / 3.0).abs() < 1e-6);
        assert!((near_pi - 2.0 / 3.0).abs() < 1e-6);
        assert!(((c * c + s * s).sqrt() - 1.0 / 3.0).abs() < 2e-3);
        assert!(matches!(
            make_example_2_6(0.008, 0.008, 512),
            Err(FlowError::SupportOverlap(_))
        ));
    }

    #[test]
    fn example_2_6_bumps_increase_on_left_half() {
        let f = make_example_2_6(0.008, 0.008, 4096).unwrap();
        let v = f.values();
        let n = v.len();
        // cells left of 0 wrap to the end of the grid
        let left: Vec<f64> = (1..=6).rev().map(|k| v[n - k]).collect();
        for w in left.windows(2) {
            assert!(w[0] <= w[1]);
        }
        assert!(v[0] > 0.0);
        for k in 1..6 {
            assert_eq!(v[k], v[n - k]);
        }
    }

    #[test]
    fn density_sampling_uniform_and_hot_bin() {
        let n = 4000;
        let mu = sample_from_circle_density(&CircleDensity::uniform(256), n, 4).unwrap();
        let (mut c, mut s) = (0.0, 0.0);
        for p in mu.points() {
            c += p[0] / n as f64;
            s += p[1] / n as f64;
        }
        assert!((c * c + s * s).sqrt() <= 3.0 / (n as f64).sqrt());

        let mut vals = vec![0.0; 128];
        let d = TAU / 128.0;
        vals[17] = 1.0 / d;
        let f = CircleDensity::new(vals).unwrap();
        let mu = sample_from_circle_density(&f, 500, 8).unwrap();
        for a in mu.angles().unwrap() {
            assert!((a - f.center(17)).abs() <= d / 2.0 + 1e-12);
        }
        assert_eq!(mu, sample_from_circle_density(&f, 500, 8).unwrap());
    }

    #[test]
    fn json_round_trips() {
        let mu = make_example_2_4(0.003).unwrap();
        let back = ParticleEnsemble::from_json(&mu.to_json()).unwrap();
        assert_eq!(mu, back);
        let f = CircleDensity::uniform(64);
        let g: CircleDensity = serde_json::from_str(&f.to_json()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn csv_import() {
        let data = "x0,x1,x2,weight\n1,0,0,1\n0,2,0,3\n";
        let mu = ParticleEnsemble::from_csv(data.as_bytes()).unwrap();
        assert_eq!(mu.len(), 2);
        assert_eq!(mu.point(1), &[0.0, 1.0, 0.0]);
        assert!((mu.weight(1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn cap_samples_stay_in_cap() {
        let c = [0.0, 0.0, 1.0];
        let mu = sample_cap(&c, 200, 0.05, true, 3).unwrap();
        for p in mu.points() {
            assert!(dot(p, &c) >= 0.05f64.cos());
        }
        assert!((mu.total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_seed_is_reported() {
        let init = ScenarioInit::Uniform { d: 3, n: 4 };
        let err = init.build(None).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }
}
