//! Interaction kernels `(φ', A)` and the perturbation size ε_φ.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{FlowError, Result};

/// Grid size for numerical sup norms of custom kernels.
pub const SUP_GRID: usize = 10_000;
/// Grid size for the positivity check of φ'.
pub const POSITIVITY_GRID: usize = 1_000;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied φ' with its derivative and, optionally, an antiderivative φ.
#[derive(Clone)]
pub struct CustomPhi {
    pub name: String,
    pub phi_prime: ScalarFn,
    pub phi_double_prime: ScalarFn,
    pub phi: Option<ScalarFn>,
}

/// The scalar profile φ'.
#[derive(Clone)]
pub enum PhiPrime {
    /// φ' ≡ 1, φ(s) = s.
    One,
    /// φ'(s) = e^{rate·s}, φ(s) = e^{rate·s}/rate.
    Exp { rate: f64 },
    /// φ'(s) = cosh s, φ(s) = sinh s.
    Cosh,
    Custom(CustomPhi),
}

impl fmt::Debug for PhiPrime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiPrime::One => write!(f, "One"),
            PhiPrime::Exp { rate } => write!(f, "Exp {{ rate: {rate} }}"),
            PhiPrime::Cosh => write!(f, "Cosh"),
            PhiPrime::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl PhiPrime {
    pub fn custom<F, G>(name: &str, phi_prime: F, phi_double_prime: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        PhiPrime::Custom(CustomPhi {
            name: name.to_string(),
            phi_prime: Arc::new(phi_prime),
            phi_double_prime: Arc::new(phi_double_prime),
            phi: None,
        })
    }

    pub fn with_antiderivative<H>(self, phi: H) -> Self
    where
        H: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        match self {
            PhiPrime::Custom(mut c) => {
                c.phi = Some(Arc::new(phi));
                PhiPrime::Custom(c)
            }
            other => other,
        }
    }

    /// Looks up a built-in profile by its config name.
    pub fn named(name: &str, rate: f64) -> Result<Self> {
        match name {
            "one" => Ok(PhiPrime::One),
            "exp" => Ok(PhiPrime::Exp { rate }),
            "cosh" => Ok(PhiPrime::Cosh),
            other => Err(FlowError::Range(format!(
                "unknown phi_prime '{other}' (expected one, exp or cosh)"
            ))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            PhiPrime::One => "one".into(),
            PhiPrime::Exp { .. } => "exp".into(),
            PhiPrime::Cosh => "cosh".into(),
            PhiPrime::Custom(c) => c.name.clone(),
        }
    }

    #[inline]
    pub fn d1(&self, s: f64) -> f64 {
        match self {
            PhiPrime::One => 1.0,
            PhiPrime::Exp { rate } => (rate * s).exp(),
            PhiPrime::Cosh => s.cosh(),
            PhiPrime::Custom(c) => (c.phi_prime)(s),
        }
    }

    #[inline]
    pub fn d2(&self, s: f64) -> f64 {
        match self {
            PhiPrime::One => 0.0,
            PhiPrime::Exp { rate } => rate * (rate * s).exp(),
            PhiPrime::Cosh => s.sinh(),
            PhiPrime::Custom(c) => (c.phi_double_prime)(s),
        }
    }

    pub fn antiderivative(&self, s: f64) -> Option<f64> {
        match self {
            PhiPrime::One => Some(s),
            PhiPrime::Exp { rate } if *rate == 0.0 => Some(s),
            PhiPrime::Exp { rate } => Some((rate * s).exp() / rate),
            PhiPrime::Cosh => Some(s.sinh()),
            PhiPrime::Custom(c) => c.phi.as_ref().map(|f| f(s)),
        }
    }

    pub fn has_antiderivative(&self) -> bool {
        !matches!(self, PhiPrime::Custom(CustomPhi { phi: None, .. }))
    }

    /// `(sup_S |φ'−1|, sup_S |φ''|)` on `S = [−r, r]`; closed form for the
    /// built-ins, dense grid otherwise.
    pub fn c1_distance_parts(&self, r: f64) -> (f64, f64) {
        match self {
            PhiPrime::One => (0.0, 0.0),
            PhiPrime::Exp { rate } => {
                let m = (rate.abs() * r).exp();
                (m - 1.0, rate.abs() * m)
            }
            PhiPrime::Cosh => (r.cosh() - 1.0, r.sinh()),
            PhiPrime::Custom(_) => (
                sup_on_grid(|s| (self.d1(s) - 1.0).abs(), -r, r, SUP_GRID),
                sup_on_grid(|s| self.d2(s).abs(), -r, r, SUP_GRID),
            ),
        }
    }
}

/// Max of `f` over a uniform grid on `[lo, hi]`, endpoints included.
pub fn sup_on_grid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
    let mut best = f(lo).max(f(hi));
    if hi > lo {
        for k in 0..=n {
            let s = lo + (hi - lo) * k as f64 / n as f64;
            best = best.max(f(s));
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KernelKind {
    SimpleAttention { beta: f64 },
    Kuramoto,
    Custom,
}

/// Eigenvalues sorted descending with an orthonormal eigenframe.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Coordinates of `x` in the eigenframe.
    pub fn coordinates(&self, x: &[f64]) -> Vec<f64> {
        self.vectors
            .iter()
            .map(|e| crate::vecops::dot(e, x))
            .collect()
    }
}

fn asymmetry(a: &DMatrix<f64>) -> f64 {
    (a - a.transpose()).norm()
}

pub fn ensure_symmetric(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(FlowError::Dimension(format!(
            "matrix is {}x{}, expected square",
            a.nrows(),
            a.ncols()
        )));
    }
    let asym = asymmetry(a);
    if asym > 1e-12 * a.norm().max(f64::MIN_POSITIVE) {
        return Err(FlowError::NonSymmetric(asym));
    }
    Ok(())
}

/// Symmetric eigendecomposition, eigenvalues descending, each eigenvector
/// signed so that its largest-magnitude entry is positive.
pub fn eigen_decomposition(a: &DMatrix<f64>) -> Result<EigenDecomposition> {
    ensure_symmetric(a)?;
    let sym = (a + a.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let d = a.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[j]
            .partial_cmp(&eig.eigenvalues[i])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut values = Vec::with_capacity(d);
    let mut vectors = Vec::with_capacity(d);
    for &k in &order {
        values.push(eig.eigenvalues[k]);
        let mut v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
        let pivot = v
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if pivot < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        vectors.push(v);
    }
    Ok(EigenDecomposition { values, vectors })
}

/// `‖A‖₂ = max |λ_i|` for symmetric `A`.
pub fn operator_norm(a: &DMatrix<f64>) -> Result<f64> {
    let eig = eigen_decomposition(a)?;
    Ok(eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Outcome of the eigenvalue hypotheses check.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub holds: bool,
    pub lambda: f64,
    pub failures: Vec<String>,
}

/// λ₁ = λ₂ = λ₃ = λ > 0 and |λ_d| ≤ λ, equalities to within 1e-10.
pub fn check_top_three_hypotheses(eig: &EigenDecomposition) -> Result<HypothesisReport> {
    let d = eig.dim();
    if d < 3 {
        return Err(FlowError::Dimension(format!("need d >= 3, got {d}")));
    }
    let tol = 1e-10;
    let l = &eig.values;
    let lambda = l[0];
    let mut failures = Vec::new();
    if (l[0] - l[1]).abs() > tol {
        failures.push(format!("lambda_1 = {} != lambda_2 = {}", l[0], l[1]));
    }
    if (l[1] - l[2]).abs() > tol {
        failures.push(format!("lambda_2 = {} != lambda_3 = {}", l[1], l[2]));
    }
    if lambda <= 0.0 {
        failures.push(format!("lambda = {lambda} is not positive"));
    }
    if l[d - 1].abs() > lambda + tol {
        failures.push(format!("|lambda_d| = {} exceeds lambda = {lambda}", l[d - 1].abs()));
    }
    Ok(HypothesisReport {
        holds: failures.is_empty(),
        lambda,
        failures,
    })
}

/// The interaction `(φ', A)` with its cached derived quantities.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    kind: KernelKind,
    a: DMatrix<f64>,
    identity: bool,
    phi: PhiPrime,
    norm_a: f64,
    epsilon: f64,
}

impl KernelSpec {
    /// Attention weight `e^{β⟨x,y⟩}` written as `A = I`, `φ'(s) = e^{βs}`.
    pub fn simple_attention(d: usize, beta: f64) -> Self {
        let b = beta.abs();
        let epsilon = 3.0 * ((b.exp() - 1.0) + b * b.exp());
        Self {
            kind: KernelKind::SimpleAttention { beta },
            a: DMatrix::identity(d, d),
            identity: true,
            phi: PhiPrime::Exp { rate: beta },
            norm_a: 1.0,
            epsilon,
        }
    }

    pub fn kuramoto(d: usize) -> Self {
        Self {
            kind: KernelKind::Kuramoto,
            a: DMatrix::identity(d, d),
            identity: true,
            phi: PhiPrime::One,
            norm_a: 1.0,
            epsilon: 0.0,
        }
    }

    /// General kernel; `A` must be symmetric and φ' positive on `[−‖A‖, ‖A‖]`.
    pub fn custom(a: DMatrix<f64>, phi: PhiPrime) -> Result<Self> {
        let norm_a = operator_norm(&a)?;
        let bad = (0..=POSITIVITY_GRID)
            .map(|k| -norm_a + 2.0 * norm_a * k as f64 / POSITIVITY_GRID as f64)
            .find(|&s| !(phi.d1(s) > 0.0));
        if let Some(s) = bad {
            return Err(FlowError::Range(format!("phi' is not positive at s = {s}")));
        }
        let (p1, p2) = phi.c1_distance_parts(norm_a);
        let epsilon = (norm_a + 2.0) * (p1 + p2);
        let d = a.nrows();
        let identity = a == DMatrix::identity(d, d);
        Ok(Self {
            kind: KernelKind::Custom,
            a,
            identity,
            phi,
            norm_a,
            epsilon,
        })
    }

    /// The literal parametrization `A = βI`, `φ'(s) = e^s`.
    pub fn scaled_identity_exp(d: usize, beta: f64) -> Result<Self> {
        Self::custom(DMatrix::identity(d, d) * beta, PhiPrime::Exp { rate: 1.0 })
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn is_identity(&self) -> bool {
        self.identity
    }

    pub fn profile(&self) -> &PhiPrime {
        &self.phi
    }

    /// β for simple attention.
    pub fn beta(&self) -> Option<f64> {
        match self.kind {
            KernelKind::SimpleAttention { beta } => Some(beta),
            _ => None,
        }
    }

    #[inline]
    pub fn phi_prime(&self, s: f64) -> f64 {
        self.phi.d1(s)
    }

    #[inline]
    pub fn phi_double_prime(&self, s: f64) -> f64 {
        self.phi.d2(s)
    }

    pub fn phi(&self, s: f64) -> Result<f64> {
        self.phi
            .antiderivative(s)
            .ok_or(FlowError::MissingAntiderivative)
    }

    /// `Ax`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        if self.identity {
            return x.to_vec();
        }
        let d = self.dim();
        (0..d)
            .map(|r| (0..d).map(|c| self.a[(r, c)] * x[c]).sum())
            .collect()
    }

    /// `⟨Ax, y⟩`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        if self.identity {
            return crate::vecops::dot(x, y);
        }
        crate::vecops::dot(&self.apply(x), y)
    }

    pub fn operator_norm(&self) -> f64 {
        self.norm_a
    }

    /// `(‖A‖₂ + 2)·(sup_S |φ'−1| + sup_S |φ''|)`, `S = [−‖A‖₂, ‖A‖₂]`.
    pub fn epsilon_phi(&self) -> f64 {
        self.epsilon
    }

    pub fn eigen(&self) -> Result<EigenDecomposition> {
        eigen_decomposition(&self.a)
    }

    /// Compact description for run metadata.
    pub fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": self.kind,
            "phi_prime": self.phi.name(),
            "A": self.a.transpose().iter().copied().collect::<Vec<f64>>(),
            "norm_A": self.norm_a,
            "epsilon_phi": self.epsilon,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kuramoto_has_zero_epsilon() {
        assert_eq!(KernelSpec::kuramoto(3).epsilon_phi(), 0.0);
    }

    #[test]
    fn literal_attention_epsilon_matches_closed_form() {
        for &beta in &[0.01, 0.5, 2.0] {
            let k = KernelSpec::scaled_identity_exp(3, beta).unwrap();
            let expect = (beta + 2.0) * ((beta.exp() - 1.0) + beta.exp());
            assert!((k.epsilon_phi() - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn simple_attention_epsilon_closed_form() {
        let beta = 0.3f64;
        let k = KernelSpec::simple_attention(3, beta);
        let expect = 3.0 * (beta.exp() - 1.0 + beta * beta.exp());
        assert!((k.epsilon_phi() - expect).abs() < 1e-15);
    }

    #[test]
    fn grid_epsilon_agrees_with_closed_form() {
        let rate = 0.7;
        let custom = PhiPrime::custom(
            "exp-copy",
            move |s: f64| (rate * s).exp(),
            move |s: f64| rate * (rate * s).exp(),
        );
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, -0.2]);
        let grid = KernelSpec::custom(a.clone(), custom).unwrap();
        let exact = KernelSpec::custom(a, PhiPrime::Exp { rate }).unwrap();
        assert!((grid.epsilon_phi() - exact.epsilon_phi()).abs() < 1e-12);
    }

    #[test]
    fn operator_norm_examples() {
        assert!((operator_norm(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-14);
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![3.0, 1.0, -5.0]));
        assert!((operator_norm(&a).unwrap() - 5.0).abs() < 1e-14);
        let ns = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(operator_norm(&ns), Err(FlowError::NonSymmetric(_))));
    }

    #[test]
    fn hypotheses_examples() {
        let diag = |v: &[f64]| {
            eigen_decomposition(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
                v.to_vec(),
            )))
            .unwrap()
        };
        assert!(check_top_three_hypotheses(&diag(&[1.0, 1.0, 1.0])).unwrap().holds);
        assert!(check_top_three_hypotheses(&diag(&[2.0, 2.0, 2.0, -2.0])).unwrap().holds);
        let r = check_top_three_hypotheses(&diag(&[3.0, 2.0, 2.0])).unwrap();
        assert!(!r.holds && !r.failures.is_empty());
        assert!(matches!(
            check_top_three_hypotheses(&diag(&[1.0, 1.0])),
            Err(FlowError::Dimension(_))
        ));
    }

    #[test]
    fn nonpositive_profile_rejected() {
        let p = PhiPrime::custom("shifted", |s: f64| s, |_| 1.0);
        assert!(KernelSpec::custom(DMatrix::identity(2, 2), p).is_err());
    }

    #[test]
    fn missing_antiderivative_reported() {
        let p = PhiPrime::custom("noanti", |s: f64| 2.0 + s.sin(), |s: f64| s.cos());
        let k = KernelSpec::custom(DMatrix::identity(2, 2), p).unwrap();
        assert_eq!(k.phi(0.3), Err(FlowError::MissingAntiderivative));
    }
}
