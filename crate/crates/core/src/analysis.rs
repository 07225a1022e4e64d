//! Variation formulas, escape directions, inequality checkers, constant
//! calculators, attractor diagnostics, rate fits and runtime monitors.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::FlowState;
use crate::ensemble::ParticleEnsemble;
use crate::error::{FlowError, Result};
use crate::fields::{kuramoto_part_and_perturbation, max_atom_speed, velocity_at_atoms, VelocityLaw};
use crate::kernel::{check_top_three_hypotheses, EigenDecomposition, KernelSpec};
use crate::observables::{
    cap_masses, dissipation, dissipation_rate, energy_gap_to_dirac, mean_and_order, w2_to_dirac,
};
use crate::sphere::{project_tangent, GnomonicChart};
use crate::vecops::{dot, kahan_sum, norm, norm_sq, normalized, Kahan};

/// Maximum atom speed below which a measure counts as critical.
pub const CRITICAL_TOL: f64 = 1e-8;
/// Tangency tolerance for vector fields sampled at atoms.
pub const TANGENT_TOL: f64 = 1e-10;
/// Second-variation value above which a direction escapes.
pub const ESCAPE_TOL: f64 = 1e-10;
/// PL constant: `gap ≤ PL_FACTOR·e^{−β}·I`.
pub const PL_FACTOR: f64 = 10.0;
/// Coefficient of the mass outside the cap in the entropy production bound.
pub const OUTSIDE_CAP_FACTOR: f64 = 100.0;
/// Largest `ε_φ` covered by the entropy production bound.
pub const EPSILON_REGIME: f64 = 0.01;

/// Outcome of one inequality evaluation. `holds ⇔ lhs ≤ rhs + tolerance`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InequalityVerdict {
    pub name: String,
    pub t: Option<f64>,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub tolerance: f64,
    pub holds: bool,
    pub regime_ok: bool,
}

impl InequalityVerdict {
    pub fn new(name: &str, t: Option<f64>, lhs: f64, rhs: f64, tolerance: f64, regime_ok: bool) -> Self {
        Self {
            name: name.to_string(),
            t,
            lhs,
            rhs,
            slack: rhs - lhs,
            tolerance,
            holds: lhs <= rhs + tolerance,
            regime_ok,
        }
    }

    /// `{name, t, lhs, rhs, slack, regime_ok, holds}` on one line.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({
            "name": self.name,
            "t": self.t,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "regime_ok": self.regime_ok,
            "holds": self.holds,
        })
        .to_string()
    }
}

/// Counts of a batch of verdicts.
pub fn count_failures(verdicts: &[InequalityVerdict]) -> usize {
    verdicts.iter().filter(|v| !v.holds).count()
}

fn check_tangent(mu: &ParticleEnsemble, v: &[f64]) -> Result<()> {
    let d = mu.dim();
    if v.len() != mu.len() * d {
        return Err(FlowError::Dimension(format!(
            "field has {} entries, expected {}",
            v.len(),
            mu.len() * d
        )));
    }
    for (i, (x, vi)) in mu.points().zip(v.chunks(d)).enumerate() {
        let r = dot(x, vi);
        if r.abs() > TANGENT_TOL * norm(vi).max(1.0) {
            return Err(FlowError::NonTangent { index: i, dot: r });
        }
    }
    Ok(())
}

/// `ΣΣ wᵢwⱼ φ'(⟨Axᵢ,xⱼ⟩)⟨Axⱼ, V(xᵢ)⟩` for a tangent field sampled at atoms
/// (flat `n × d`).
pub fn first_variation(mu: &ParticleEnsemble, spec: &KernelSpec, v: &[f64]) -> Result<f64> {
    check_tangent(mu, v)?;
    let d = mu.dim();
    let ax: Vec<Vec<f64>> = mu.points().map(|p| spec.apply(p)).collect();
    let n = mu.len();
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let vi = &v[i * d..(i + 1) * d];
            kahan_sum((0..n).map(|j| mu.weight(j) * spec.phi_prime(dot(&ax[i], mu.point(j))) * dot(&ax[j], vi)))
        })
        .collect();
    Ok(kahan_sum(rows.iter().enumerate().map(|(i, r)| mu.weight(i) * r)))
}

/// The four integrals of the second variation along the curves
/// `xᵢ(t) = normalize(xᵢ + tVᵢ + t²Bᵢ/2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondVariationTerms {
    /// `½ΣΣ φ''·(⟨Axⱼ,Vᵢ⟩ + ⟨Axᵢ,Vⱼ⟩)²`.
    pub hessian: f64,
    /// `ΣΣ φ'·⟨AVᵢ,Vⱼ⟩`.
    pub cross: f64,
    /// `−½ΣΣ φ'·⟨Axᵢ,xⱼ⟩(‖Vᵢ‖² + ‖Vⱼ‖²)`.
    pub curvature: f64,
    /// `ΣΣ φ'·⟨Axⱼ, P_{xᵢ}Bᵢ⟩`.
    pub acceleration: f64,
}

impl SecondVariationTerms {
    pub fn total(&self) -> f64 {
        self.hessian + self.cross + self.curvature + self.acceleration
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariationReport {
    pub first_variation: f64,
    pub second_variation: f64,
    pub direction: String,
    pub decomposition: SecondVariationTerms,
}

/// Second derivative of the energy along `normalize(xᵢ + tVᵢ + t²Bᵢ/2)`.
/// `b = None` means `B ≡ 0`.
pub fn second_variation(
    mu: &ParticleEnsemble,
    spec: &KernelSpec,
    v: &[f64],
    b: Option<&[f64]>,
) -> Result<SecondVariationTerms> {
    check_tangent(mu, v)?;
    let d = mu.dim();
    let n = mu.len();
    let ax: Vec<Vec<f64>> = mu.points().map(|p| spec.apply(p)).collect();
    let vi = |i: usize| &v[i * d..(i + 1) * d];
    let av: Vec<Vec<f64>> = (0..n).map(|i| spec.apply(vi(i))).collect();
    let vsq: Vec<f64> = (0..n).map(|i| norm_sq(vi(i))).collect();
    let bt: Option<Vec<Vec<f64>>> = b.map(|b| {
        (0..n)
            .map(|i| project_tangent(mu.point(i), &b[i * d..(i + 1) * d]))
            .collect()
    });
    let rows: Vec<[f64; 4]> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = [Kahan::default(); 4];
            for j in 0..n {
                let w = mu.weight(j);
                let s = dot(&ax[i], mu.point(j));
                let p1 = spec.phi_prime(s);
                let ds = dot(&ax[j], vi(i)) + dot(&ax[i], vi(j));
                acc[0].add(w * 0.5 * spec.phi_double_prime(s) * ds * ds);
                acc[1].add(w * p1 * dot(&av[i], vi(j)));
                acc[2].add(w * -0.5 * p1 * s * (vsq[i] + vsq[j]));
                if let Some(bt) = &bt {
                    acc[3].add(w * p1 * dot(&ax[j], &bt[i]));
                }
            }
            [acc[0].value(), acc[1].value(), acc[2].value(), acc[3].value()]
        })
        .collect();
    let total = |k: usize| kahan_sum(rows.iter().enumerate().map(|(i, r)| mu.weight(i) * r[k]));
    Ok(SecondVariationTerms {
        hessian: total(0),
        cross: total(1),
        curvature: total(2),
        acceleration: total(3),
    })
}

/// Largest atom speed of the gradient field `X̃`; the criticality measure.
pub fn criticality(mu: &ParticleEnsemble, spec: &KernelSpec) -> f64 {
    max_atom_speed(mu, spec, VelocityLaw::Gradient)
}

fn ensure_critical(mu: &ParticleEnsemble, spec: &KernelSpec) -> Result<()> {
    let speed = criticality(mu, spec);
    if speed > CRITICAL_TOL {
        return Err(FlowError::NotCritical(speed));
    }
    Ok(())
}

/// The constant-direction field `X₀(x) = P_x[w]` sampled at atoms.
pub fn projected_direction(mu: &ParticleEnsemble, w: &[f64]) -> Vec<f64> {
    mu.points().flat_map(|x| project_tangent(x, w)).collect()
}

/// Second variation at a critical point along `X₀ = P_x[w]`.
pub fn second_variation_at_critical(mu: &ParticleEnsemble, spec: &KernelSpec, w: &[f64]) -> Result<VariationReport> {
    ensure_critical(mu, spec)?;
    let v = projected_direction(mu, w);
    let terms = second_variation(mu, spec, &v, None)?;
    Ok(VariationReport {
        first_variation: first_variation(mu, spec, &v)?,
        second_variation: terms.total(),
        direction: format!("P_x[w], w = {w:?}"),
        decomposition: terms,
    })
}

/// `Σ_{i≤3} [2λᵢ(1−xᵢ²−yᵢ²) − ⟨Ax,y⟩(2−xᵢ²−yᵢ²−2xᵢyᵢ)]` in the eigenbasis.
pub fn pointwise_eigen_inequality(x: &[f64], y: &[f64], eig: &EigenDecomposition) -> Result<f64> {
    let rep = check_top_three_hypotheses(eig)?;
    if !rep.holds {
        return Err(FlowError::Hypothesis(rep.failures.join("; ")));
    }
    let xc = eig.coordinates(x);
    let yc = eig.coordinates(y);
    let axy = kahan_sum(eig.values.iter().zip(&xc).zip(&yc).map(|((l, a), b)| l * a * b));
    Ok(kahan_sum((0..3).map(|i| {
        let (a, b) = (xc[i], yc[i]);
        2.0 * eig.values[i] * (1.0 - a * a - b * b) - axy * (2.0 - a * a - b * b - 2.0 * a * b)
    })))
}

/// Whether `(x, y)` meets the equality conditions of the pointwise
/// inequality: `xⱼ = yⱼ = 0` where `|λⱼ| < λ`, `xⱼ = yⱼ` where `λⱼ = λ`,
/// `xⱼ = −yⱼ` where `λⱼ = −λ`.
pub fn eigen_equality_conditions(x: &[f64], y: &[f64], eig: &EigenDecomposition, tol: f64) -> bool {
    let lambda = eig.values[0];
    let spectral_tol = 1e-10;
    let xc = eig.coordinates(x);
    let yc = eig.coordinates(y);
    eig.values.iter().zip(xc.iter().zip(&yc)).all(|(l, (a, b))| {
        if (l - lambda).abs() <= spectral_tol {
            (a - b).abs() <= tol
        } else if (l + lambda).abs() <= spectral_tol {
            (a + b).abs() <= tol
        } else {
            a.abs() <= tol && b.abs() <= tol
        }
    })
}

/// The pointwise inequality regrouped into nonnegative pieces, for unit `x`,
/// `y`: with `D = Σ_{i≤3}(xᵢ−yᵢ)²`, `S = Σ_{j>3}(xⱼ²+yⱼ²)` and
/// `G = Σ_{j>3}[λ(xⱼ²+yⱼ²) − 2λⱼxⱼyⱼ]`,
/// `value = λD²/2 + λDS + G(1 + S + D/2)`.
///
/// No cancellation occurs, so the value keeps full relative accuracy near
/// equality, where the literal form is swamped by roundoff (it vanishes to
/// fourth order along the top eigenspace).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenInequalityTerms {
    pub top_gap: f64,
    pub tail_mass: f64,
    pub tail_gap: f64,
    pub value: f64,
}

pub fn eigen_inequality_terms(x: &[f64], y: &[f64], eig: &EigenDecomposition) -> Result<EigenInequalityTerms> {
    let rep = check_top_three_hypotheses(eig)?;
    if !rep.holds {
        return Err(FlowError::Hypothesis(rep.failures.join("; ")));
    }
    let lambda = rep.lambda;
    let xc = eig.coordinates(x);
    let yc = eig.coordinates(y);
    let d = kahan_sum((0..3).map(|i| (xc[i] - yc[i]).powi(2)));
    let s = kahan_sum((3..xc.len()).map(|j| xc[j] * xc[j] + yc[j] * yc[j]));
    let g = kahan_sum((3..xc.len()).map(|j| {
        let (a, b, l) = (xc[j], yc[j], eig.values[j]);
        let spare = (lambda - l.abs()).max(0.0) * (a * a + b * b);
        if l >= 0.0 {
            spare + l * (a - b).powi(2)
        } else {
            spare - l * (a + b).powi(2)
        }
    }));
    Ok(EigenInequalityTerms {
        top_gap: d,
        tail_mass: s,
        tail_gap: g,
        value: lambda * d * d / 2.0 + lambda * d * s + g * (1.0 + s + d / 2.0),
    })
}

/// Direction found by [`escape_direction_search`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscapeDirection {
    pub direction: Vec<f64>,
    pub value: f64,
    pub eigen_index: usize,
}

/// Scans eigenvectors (the top three, or all with `full_sweep`) and returns
/// the one with the largest second variation if that exceeds 1e-10.
pub fn escape_direction_search(
    mu: &ParticleEnsemble,
    spec: &KernelSpec,
    full_sweep: bool,
) -> Result<Option<EscapeDirection>> {
    ensure_critical(mu, spec)?;
    let eig = spec.eigen()?;
    let count = if full_sweep { eig.dim() } else { eig.dim().min(3) };
    let mut best: Option<EscapeDirection> = None;
    for k in 0..count {
        let w = eig.vectors[k].clone();
        let v = projected_direction(mu, &w);
        let value = second_variation(mu, spec, &v, None)?.total();
        if value > ESCAPE_TOL && best.as_ref().map_or(true, |b| value > b.value) {
            best = Some(EscapeDirection {
                direction: w,
                value,
                eigen_index: k,
            });
        }
    }
    Ok(best)
}

fn check_cap_support(mu: &ParticleEnsemble, u: &[f64], alpha: f64) -> Result<()> {
    let c = alpha.cos();
    for (i, p) in mu.points().enumerate() {
        if dot(p, u) < c - 1e-12 {
            return Err(FlowError::Support(i));
        }
    }
    Ok(())
}

/// Whether `10(1+√β)·tan α ≤ 1`.
pub fn pl_regime(beta: f64, alpha: f64) -> bool {
    PL_FACTOR * (1.0 + beta.sqrt()) * alpha.tan() <= 1.0
}

/// `E_β[δ_u] − E_β[μ] ≤ 10e^{−β}·I(μ)` for `μ` supported in `S_α^+(u)`.
pub fn pl_inequality_check(mu: &ParticleEnsemble, beta: f64, u: &[f64], alpha: f64) -> Result<InequalityVerdict> {
    check_cap_support(mu, u, alpha)?;
    let spec = KernelSpec::simple_attention(mu.dim(), beta);
    let lhs = energy_gap_to_dirac(mu, beta)?;
    let rhs = PL_FACTOR * (-beta).exp() * dissipation(mu, &spec);
    let tol = 1e-12 * lhs.abs().max(rhs.abs()) + 1e-300;
    Ok(InequalityVerdict::new("pl", None, lhs, rhs, tol, pl_regime(beta, alpha) && beta > 0.0))
}

/// Log of the W2 rate bound `20e^{−β}·e^{−e^β t/20}·I₀^{1/2}`.
pub fn pl_w2_bound_log(beta: f64, t: f64, i0: f64) -> f64 {
    20f64.ln() - beta - beta.exp() * t / 20.0 + 0.5 * i0.ln()
}

/// `∂_t I ≤ −I + 100·μ(S ∖ S_α^+(U))` at each state, with `∂_t I` from the
/// analytic pairwise form.
pub fn entropy_production_check(states: &[FlowState], spec: &KernelSpec, alpha: f64) -> Vec<InequalityVerdict> {
    let regime = spec.epsilon_phi() <= EPSILON_REGIME && alpha > 0.0 && alpha < std::f64::consts::PI / 20.0;
    states
        .iter()
        .map(|st| {
            let mu = &st.ensemble;
            let i = dissipation(mu, spec);
            let rate = dissipation_rate(mu, spec);
            let outside = match mean_and_order(mu).u {
                Some(u) => mu.total_mass() - cap_masses(mu, &u, alpha).plus,
                None => mu.total_mass(),
            };
            InequalityVerdict::new(
                "entropy_production",
                Some(st.time),
                rate,
                -i + OUTSIDE_CAP_FACTOR * outside,
                1e-6,
                regime,
            )
        })
        .collect()
}

/// `ΣΣ Q_ν ≤ −ν(S)·∫‖Y[ν]‖² dν` for a positive measure in `S_α^+(u)`.
pub fn cone_inequality_check(nu: &ParticleEnsemble, spec: &KernelSpec, u: &[f64], alpha: f64) -> Result<InequalityVerdict> {
    check_cap_support(nu, u, alpha)?;
    let lhs = dissipation_rate(nu, spec);
    let rhs = -nu.total_mass() * dissipation(nu, spec);
    let regime = spec.epsilon_phi() <= EPSILON_REGIME && alpha > 0.0 && alpha < std::f64::consts::PI / 20.0;
    let tol = 1e-12 * lhs.abs().max(rhs.abs());
    Ok(InequalityVerdict::new("cone", None, lhs, rhs, tol, regime))
}

/// Large-β form: `∂_t I ≤ −(e^β/10)·I` for attention with
/// `tan α ≤ 1/(10(1+√β))`.
pub fn large_beta_entropy_check(mu: &ParticleEnsemble, beta: f64, u: &[f64], alpha: f64) -> Result<InequalityVerdict> {
    check_cap_support(mu, u, alpha)?;
    let spec = KernelSpec::simple_attention(mu.dim(), beta);
    let lhs = dissipation_rate(mu, &spec);
    let rhs = -beta.exp() / PL_FACTOR * dissipation(mu, &spec);
    let tol = 1e-12 * lhs.abs().max(rhs.abs());
    Ok(InequalityVerdict::new("large_beta_entropy", None, lhs, rhs, tol, pl_regime(beta, alpha)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HemisphereVerdict {
    pub dissipation: f64,
    pub w2_to_dirac: f64,
    pub is_dirac: bool,
    /// False only for a non-Dirac cap-supported measure with `I ≤ 1e-16`.
    pub consistent: bool,
}

/// Contrapositive check: a cap-supported measure with vanishing dissipation
/// must be a Dirac mass.
pub fn hemisphere_critical_test(
    mu: &ParticleEnsemble,
    spec: &KernelSpec,
    u: &[f64],
    alpha: f64,
) -> Result<HemisphereVerdict> {
    if !(alpha > 0.0 && alpha < std::f64::consts::FRAC_PI_2) {
        return Err(FlowError::Range(format!("cap angle {alpha} not in (0, pi/2)")));
    }
    check_cap_support(mu, u, alpha)?;
    let i = dissipation(mu, spec);
    let center = normalized(&crate::fields::mean_vector(mu));
    let w2 = w2_to_dirac(mu, &center);
    let is_dirac = w2 <= 1e-6;
    Ok(HemisphereVerdict {
        dissipation: i,
        w2_to_dirac: w2,
        is_dirac,
        consistent: i > 1e-16 || is_dirac,
    })
}

/// Explicit time after which the improved decay holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConstants {
    pub log10_t0: f64,
    /// `10^{log10_t0}`, infinite when it overflows.
    pub t0: f64,
    pub d: usize,
}

impl ConvergenceConstants {
    /// `‖f₀‖·e^{−(d−1)(t−T₀)/16}`.
    pub fn decay_bound(&self, f0_norm: f64, t: f64) -> f64 {
        f0_norm * (-((self.d - 1) as f64) * (t - self.t0) / 16.0).exp()
    }
}

/// `T₀ = max(8/R₀, d−1)·[10⁴¹(d−1)R₀^{−14} + 10²⁶R₀^{−6}·ln‖f₀‖²]`, with
/// `‖f₀‖²` taken against the uniform probability measure, in log form.
pub fn theorem39_constants(r0: f64, d: usize, l2_norm_sq: f64) -> Result<ConvergenceConstants> {
    if !(r0 > 0.0 && r0 <= 1.0) {
        return Err(FlowError::Range(format!("R0 = {r0} not in (0, 1]")));
    }
    if d < 2 {
        return Err(FlowError::Range(format!("d = {d} < 2")));
    }
    if !(l2_norm_sq > 0.0) || !l2_norm_sq.is_finite() {
        return Err(FlowError::Range(format!("squared L2 norm {l2_norm_sq} not positive")));
    }
    let dm1 = (d - 1) as f64;
    let lead = (8.0 / r0).max(dm1).log10();
    // bracket = 10⁴¹(d−1)R₀^{−14}·(1 + ρ), ρ = 10^{−15}R₀⁸ ln‖f₀‖²/(d−1)
    let log_a = 41.0 + dm1.log10() - 14.0 * r0.log10();
    let rho = 1e-15 * r0.powi(8) * l2_norm_sq.ln() / dm1;
    if rho <= -1.0 {
        return Err(FlowError::Range("constant bracket is not positive".into()));
    }
    let log10_t0 = lead + log_a + rho.ln_1p() / std::f64::consts::LN_10;
    Ok(ConvergenceConstants {
        log10_t0,
        t0: 10f64.powf(log10_t0),
        d,
    })
}

/// Length of the entry window `δ = 4/(λR₀ sin²α)`.
pub fn entry_time_bound(lambda: f64, r0: f64, alpha: f64) -> f64 {
    4.0 / (lambda * r0 * alpha.sin().powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttractorDiagnostics {
    /// Minimum pairwise inner product over markers.
    pub d_min: f64,
    /// `mass·(1 + D) − 1`.
    pub gamma: f64,
    /// `D > √2/2`.
    pub valid: bool,
}

/// Diagnostics of a tracked set from its markers (flat `m × d`).
pub fn attractor_diagnostics(markers: &[f64], d: usize, mass: f64) -> AttractorDiagnostics {
    let m = markers.len() / d;
    let pt = |i: usize| &markers[i * d..(i + 1) * d];
    let mut d_min: f64 = 1.0;
    for i in 0..m {
        for j in i + 1..m {
            d_min = d_min.min(dot(pt(i), pt(j)));
        }
    }
    let d_min = d_min.clamp(-1.0, 1.0);
    AttractorDiagnostics {
        d_min,
        gamma: mass * (1.0 + d_min) - 1.0,
        valid: d_min > std::f64::consts::FRAC_1_SQRT_2,
    }
}

/// `max{(1 − D₁)e^{−Γ(t−t₁)/4}, 4ε²/Γ²}`.
pub fn attractor_bound(d_t1: f64, gamma: f64, epsilon: f64, elapsed: f64) -> f64 {
    ((1.0 - d_t1) * (-gamma * elapsed / 4.0).exp()).max(4.0 * epsilon * epsilon / (gamma * gamma))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub rate: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares line through `(t, ln value)` for `t ≥ t_start`; the rate
/// is the negated slope.
pub fn rate_fit(series: &[(f64, f64)], t_start: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = series.iter().copied().filter(|(t, _)| *t >= t_start).collect();
    if pts.len() < 10 {
        return Err(FlowError::InsufficientData(pts.len()));
    }
    if let Some((t, v)) = pts.iter().find(|(_, v)| !(*v > 0.0)) {
        return Err(FlowError::Range(format!("non-positive value {v} at t = {t}")));
    }
    let n = pts.len() as f64;
    let mt = kahan_sum(pts.iter().map(|p| p.0)) / n;
    let my = kahan_sum(pts.iter().map(|p| p.1.ln())) / n;
    let stt = kahan_sum(pts.iter().map(|p| (p.0 - mt).powi(2)));
    let sty = kahan_sum(pts.iter().map(|p| (p.0 - mt) * (p.1.ln() - my)));
    let syy = kahan_sum(pts.iter().map(|p| (p.1.ln() - my).powi(2)));
    let slope = sty / stt;
    let intercept = my - slope * mt;
    let sse = kahan_sum(pts.iter().map(|p| (p.1.ln() - intercept - slope * p.0).powi(2)));
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    Ok(RateFit {
        rate: -slope,
        intercept,
        r_squared,
        points: pts.len(),
    })
}

fn r_squared_of(mu: &ParticleEnsemble) -> f64 {
    mean_and_order(mu).r.powi(2)
}

/// `max ‖W(xᵢ)‖ ≤ ε_φ` over atoms.
pub fn perturbation_bound_check(st: &FlowState, spec: &KernelSpec) -> InequalityVerdict {
    let mu = &st.ensemble;
    let w_max = mu
        .points()
        .map(|x| norm(&kuramoto_part_and_perturbation(mu, spec, x).1))
        .fold(0.0, f64::max);
    InequalityVerdict::new("perturbation_bound", Some(st.time), w_max, spec.epsilon_phi(), 1e-12, true)
}

/// `I − ε² ≤ d(R²)/dt ≤ 3I + ε²` at interior ticks, central differences,
/// slack `1e-3·max(1, I)`.
pub fn order_growth_check(states: &[FlowState], spec: &KernelSpec) -> Vec<InequalityVerdict> {
    let eps2 = spec.epsilon_phi().powi(2);
    let r2: Vec<f64> = states.iter().map(|s| r_squared_of(&s.ensemble)).collect();
    let mut out = Vec::new();
    for k in 1..states.len().saturating_sub(1) {
        let dr2 = (r2[k + 1] - r2[k - 1]) / (states[k + 1].time - states[k - 1].time);
        let i = dissipation(&states[k].ensemble, spec);
        let tol = 1e-3 * i.max(1.0);
        let t = Some(states[k].time);
        out.push(InequalityVerdict::new("order_growth_lower", t, i - eps2, dr2, tol, true));
        out.push(InequalityVerdict::new("order_growth_upper", t, dr2, 3.0 * i + eps2, tol, true));
    }
    out
}

/// `I(t₂) ≥ I(t₁)e^{−3(t₂−t₁)}(1 − 1e-3)` for consecutive ticks and for
/// every tick against the first.
pub fn dissipation_floor_check(states: &[FlowState], spec: &KernelSpec) -> Vec<InequalityVerdict> {
    let regime = spec.epsilon_phi() < 0.1;
    let i: Vec<f64> = states.iter().map(|s| dissipation(&s.ensemble, spec)).collect();
    let mut out = Vec::new();
    for k in 1..states.len() {
        for j in [0, k - 1] {
            let bound = i[j] * (-3.0 * (states[k].time - states[j].time)).exp() * (1.0 - 1e-3);
            out.push(InequalityVerdict::new("dissipation_floor", Some(states[k].time), bound, i[k], 0.0, regime));
            if k == 1 {
                break;
            }
        }
    }
    out
}

/// `‖dU/dt‖ ≤ (1/R)·√(d(R²)/dt + ε²)` at interior ticks.
pub fn mean_direction_check(states: &[FlowState], spec: &KernelSpec) -> Vec<InequalityVerdict> {
    let eps2 = spec.epsilon_phi().powi(2);
    let mo: Vec<_> = states.iter().map(|s| mean_and_order(&s.ensemble)).collect();
    let mut out = Vec::new();
    for k in 1..states.len().saturating_sub(1) {
        let (Some(a), Some(b)) = (&mo[k - 1].u, &mo[k + 1].u) else {
            continue;
        };
        let h = states[k + 1].time - states[k - 1].time;
        let du = norm(&crate::vecops::sub(b, a)) / h;
        let dr2 = (mo[k + 1].r.powi(2) - mo[k - 1].r.powi(2)) / h;
        let rhs = (dr2 + eps2).max(0.0).sqrt() / mo[k].r;
        out.push(InequalityVerdict::new("mean_direction", Some(states[k].time), du, rhs, 1e-3 * rhs.max(1e-6), true));
    }
    out
}

/// `|Σ wᵢ⟨∂_tW(xᵢ), Y(xᵢ)⟩| ≤ ε_φ·I`, with `∂_tW` by central differences of
/// `W` along each particle.
pub fn perturbation_pairing_check(prev: &FlowState, cur: &FlowState, next: &FlowState, spec: &KernelSpec) -> InequalityVerdict {
    let d = cur.ensemble.dim();
    let h = next.time - prev.time;
    let w_at = |st: &FlowState| -> Vec<f64> {
        st.ensemble
            .points()
            .flat_map(|x| kuramoto_part_and_perturbation(&st.ensemble, spec, x).1)
            .collect()
    };
    let (wp, wn) = (w_at(prev), w_at(next));
    let y = velocity_at_atoms(&cur.ensemble, spec, VelocityLaw::General);
    let pairing = kahan_sum((0..cur.ensemble.len()).map(|i| {
        let r = i * d..(i + 1) * d;
        let dw: Vec<f64> = wn[r.clone()].iter().zip(&wp[r.clone()]).map(|(a, b)| (a - b) / h).collect();
        cur.ensemble.weight(i) * dot(&dw, &y[r])
    }));
    let i = dissipation(&cur.ensemble, spec);
    let rhs = spec.epsilon_phi() * i;
    InequalityVerdict::new("perturbation_pairing", Some(cur.time), pairing.abs(), rhs, 1e-3 * i + 1e-14, true)
}

/// `v(t_{k+1}) ≤ v(t_k)·exp(∫ rate)` for a tabulated series `(t, v, rate)`,
/// the rate integrated by the trapezoid rule.
pub fn gronwall_check(name: &str, series: &[(f64, f64, f64)], rel_slack: f64) -> Vec<InequalityVerdict> {
    series
        .windows(2)
        .map(|w| {
            let (t0, v0, r0) = w[0];
            let (t1, v1, r1) = w[1];
            let bound = v0 * (0.5 * (r0 + r1) * (t1 - t0)).exp();
            InequalityVerdict::new(name, Some(t1), v1, bound, rel_slack * bound, true)
        })
        .collect()
}

/// Pulled-back field `X(u)` of the gnomonic chart at `u`:
/// `Σ w (v−u)·√(1+‖u‖²)/√(1+‖v‖²)·φ'(⟨AF(u),F(v)⟩)` over chart images `v`.
pub fn gnomonic_pullback_field(mu: &ParticleEnsemble, spec: &KernelSpec, chart: &GnomonicChart, u: &[f64]) -> Result<Vec<f64>> {
    let x = chart.inverse(u);
    let ax = spec.apply(x.as_slice());
    let su = (1.0 + norm_sq(u)).sqrt();
    let mut acc = vec![Kahan::default(); u.len()];
    for (y, w) in mu.points().zip(mu.weights()) {
        let v = chart.forward(y)?;
        let c = w * su / (1.0 + norm_sq(&v)).sqrt() * spec.phi_prime(dot(&ax, y));
        for (a, (vi, ui)) in acc.iter_mut().zip(v.iter().zip(u)) {
            a.add(c * (vi - ui));
        }
    }
    Ok(acc.iter().map(|a| a.value()).collect())
}

/// Dissipation computed through the chart: `Σ w ‖dF_u X(u)‖²`.
pub fn dissipation_via_chart(mu: &ParticleEnsemble, spec: &KernelSpec, chart: &GnomonicChart) -> Result<f64> {
    let mut acc = Kahan::default();
    for (y, w) in mu.points().zip(mu.weights()) {
        let u = chart.forward(y)?;
        let xu = gnomonic_pullback_field(mu, spec, chart, &u)?;
        acc.add(w * norm_sq(&chart.tangent_map(&u, &xu)));
    }
    Ok(acc.value())
}
