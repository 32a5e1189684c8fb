//! Truncated ReLU and its Gaussian-smoothed version.
//!
//! The smoothed activation is E_ξ[act(z+ξ)] with ξ ~ N(0, σ_ξ²). Writing
//! Φ/φ for the standard normal cdf/pdf and α = −z/σ, β = (1−z)/σ, splitting
//! the expectation at the clamp points gives the closed form
//!
//!   E[act(z+ξ)] = (1 − Φ(β)) + z·(Φ(β) − Φ(α)) + σ·(φ(α) − φ(β)),
//!
//! whose z-derivative collapses to Φ(β) − Φ(α) = Pr[z+ξ ∈ (0,1)].
//! A Gauss–Legendre quadrature of the equivalent layer-cake integral
//! ∫₀¹ Pr[z+ξ ≥ u] du is kept as an independent cross-check.

use crate::{FeatError, FeatResult};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// min(1, max(z, 0)).
pub fn trunc_relu(z: f64) -> f64 {
    z.clamp(0.0, 1.0)
}

/// E_{ξ~N(0,σ_ξ²)}[trunc_relu(z+ξ)]. Exact (the clamp itself) at σ_ξ = 0.
pub fn smoothed_act(z: f64, sigma_xi: f64) -> f64 {
    if sigma_xi == 0.0 {
        return trunc_relu(z);
    }
    let alpha = -z / sigma_xi;
    let beta = (1.0 - z) / sigma_xi;
    let cdf_a = std_normal_cdf(alpha);
    let cdf_b = std_normal_cdf(beta);
    let v = (1.0 - cdf_b)
        + z * (cdf_b - cdf_a)
        + sigma_xi * (std_normal_pdf(alpha) - std_normal_pdf(beta));
    // the exact expectation lives in [0,1]; cancellation in the tails can
    // leave a residual of order 1e-17 on either side
    v.clamp(0.0, 1.0)
}

/// Pr_{ξ~N(0,σ_ξ²)}[z+ξ ∈ (0,1)] = d/dz smoothed_act(z, σ_ξ).
///
/// At σ_ξ = 0 this is the indicator of the half-open interval [0,1):
/// 1 at z = 0, 0 at z = 1 (the open-interval boundary is measure-zero; the
/// half-open convention makes the zero-noise limit deterministic).
pub fn smoothed_act_deriv(z: f64, sigma_xi: f64) -> f64 {
    if sigma_xi == 0.0 {
        return if (0.0..1.0).contains(&z) { 1.0 } else { 0.0 };
    }
    (std_normal_cdf((1.0 - z) / sigma_xi) - std_normal_cdf(-z / sigma_xi)).clamp(0.0, 1.0)
}

/// How to evaluate the smoothed activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SmoothingMethod {
    ClosedForm,
    Quadrature,
}

/// Smoothing evaluation settings. The closed form is what the trainer uses;
/// quadrature exists to validate it.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub sigma_xi: f64,
    pub method: SmoothingMethod,
    pub nodes: usize,
}

impl SmoothingConfig {
    pub fn closed_form(sigma_xi: f64) -> Self {
        Self { sigma_xi, method: SmoothingMethod::ClosedForm, nodes: 0 }
    }

    pub fn quadrature(sigma_xi: f64, nodes: usize) -> Self {
        Self { sigma_xi, method: SmoothingMethod::Quadrature, nodes }
    }

    pub fn validate(&self) -> FeatResult<()> {
        if self.sigma_xi < 0.0 {
            return Err(FeatError::Param(format!("sigma_xi must be >= 0, got {}", self.sigma_xi)));
        }
        if self.method == SmoothingMethod::Quadrature && self.nodes < 16 {
            return Err(FeatError::Param(format!(
                "quadrature needs >= 16 nodes, got {}",
                self.nodes
            )));
        }
        Ok(())
    }

    /// Smoothed activation value. Callers on batch paths run [`Self::validate`]
    /// once up front; these per-point calls assume the settings are sane.
    pub fn eval(&self, z: f64) -> f64 {
        match self.method {
            SmoothingMethod::ClosedForm => smoothed_act(z, self.sigma_xi),
            SmoothingMethod::Quadrature => quadrature_act(z, self.sigma_xi, self.nodes),
        }
    }

    pub fn deriv(&self, z: f64) -> f64 {
        match self.method {
            SmoothingMethod::ClosedForm => smoothed_act_deriv(z, self.sigma_xi),
            SmoothingMethod::Quadrature => quadrature_deriv(z, self.sigma_xi, self.nodes),
        }
    }
}

/// Layer-cake form: E[act(z+ξ)] = ∫₀¹ Pr[z+ξ ≥ u] du.
fn quadrature_act(z: f64, sigma_xi: f64, nodes: usize) -> f64 {
    if sigma_xi == 0.0 {
        return trunc_relu(z);
    }
    let (xs, ws) = gauss_legendre_unit(nodes);
    let mut acc = 0.0;
    for (u, w) in xs.iter().zip(&ws) {
        acc += w * (1.0 - std_normal_cdf((u - z) / sigma_xi));
    }
    acc
}

/// d/dz of the layer-cake form: ∫₀¹ φ((u−z)/σ)/σ du.
fn quadrature_deriv(z: f64, sigma_xi: f64, nodes: usize) -> f64 {
    if sigma_xi == 0.0 {
        return smoothed_act_deriv(z, 0.0);
    }
    let (xs, ws) = gauss_legendre_unit(nodes);
    let mut acc = 0.0;
    for (u, w) in xs.iter().zip(&ws) {
        acc += w * std_normal_pdf((u - z) / sigma_xi) / sigma_xi;
    }
    acc
}

/// Gauss–Legendre nodes and weights mapped to [0, 1].
///
/// Nodes are the roots of P_n found by Newton iteration from the Chebyshev
/// initial guesses cos(π(i−1/4)/(n+1/2)); P_n and P_n' come from the
/// three-term recurrence.
fn gauss_legendre_unit(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    let nf = n as f64;
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_pair(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        xs[i] = -x;
        xs[n - 1 - i] = x;
        ws[i] = w;
        ws[n - 1 - i] = w;
    }
    // map [-1,1] -> [0,1]
    for i in 0..n {
        xs[i] = 0.5 * (xs[i] + 1.0);
        ws[i] *= 0.5;
    }
    (xs, ws)
}

/// (P_n(x), P_n'(x)) via the Legendre three-term recurrence.
fn legendre_pair(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for j in 2..=n {
        let jf = j as f64;
        let p2 = ((2.0 * jf - 1.0) * x * p1 - (jf - 1.0) * p0) / jf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    #[test]
    fn trunc_relu_cases() {
        assert_eq!(trunc_relu(-0.5), 0.0);
        assert_eq!(trunc_relu(0.3), 0.3);
        assert_eq!(trunc_relu(2.0), 1.0);
    }

    #[test]
    fn zero_noise_limits() {
        for z in [-1.0, 0.25, 3.0] {
            assert_eq!(smoothed_act(z, 0.0), trunc_relu(z));
        }
        assert_eq!(smoothed_act_deriv(0.5, 0.0), 1.0);
        assert_eq!(smoothed_act_deriv(1.5, 0.0), 0.0);
        // half-open boundary convention
        assert_eq!(smoothed_act_deriv(0.0, 0.0), 1.0);
        assert_eq!(smoothed_act_deriv(1.0, 0.0), 0.0);
    }

    #[test]
    fn midpoint_is_half_for_any_noise() {
        for s in [1e-3, 0.1, 0.3, 2.0, 50.0] {
            assert!(
                (smoothed_act(0.5, s) - 0.5).abs() < 1e-12,
                "smoothed_act(0.5, {s}) = {}",
                smoothed_act(0.5, s)
            );
        }
    }

    #[test]
    fn matches_monte_carlo() {
        // spec-level check: (z, σ) = (−0.3, 0.2) against 10⁷ draws, 3σ band
        let (z, s) = (-0.3, 0.2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let normal = rand_distr::Normal::new(0.0, s).unwrap();
        let n = 10_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let v = trunc_relu(z + rng.sample::<f64, _>(normal));
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / n as f64;
        let var = (sumsq / n as f64 - mean * mean).max(0.0);
        let se = (var / n as f64).sqrt();
        let exact = smoothed_act(z, s);
        assert!(
            (exact - mean).abs() <= 3.0 * se,
            "closed form {exact} vs MC {mean} ± {se}"
        );
    }

    #[test]
    fn deriv_matches_finite_differences() {
        let h = 1e-5;
        for s in [0.1, 0.3, 1.0] {
            for z in [-0.4, 0.1, 0.9] {
                let fd = (smoothed_act(z + h, s) - smoothed_act(z - h, s)) / (2.0 * h);
                let an = smoothed_act_deriv(z, s);
                assert!((fd - an).abs() < 1e-6, "z={z} s={s}: fd={fd} analytic={an}");
            }
        }
    }

    #[test]
    fn monotone_and_bounded_on_grid() {
        for s in [0.0, 0.05, 0.3, 2.0] {
            let mut prev = f64::NEG_INFINITY;
            for i in 0..10_000 {
                let z = -3.0 + 6.0 * i as f64 / 9_999.0;
                let v = smoothed_act(z, s);
                assert!((0.0..=1.0).contains(&v), "out of range at z={z} s={s}: {v}");
                assert!(v >= prev - 1e-14, "not nondecreasing at z={z} s={s}");
                prev = v;
            }
        }
    }

    #[test]
    fn quadrature_agrees_with_closed_form() {
        let cfgq = SmoothingConfig::quadrature(0.25, 48);
        for i in 0..200 {
            let z = -2.0 + 4.0 * i as f64 / 199.0;
            let q = cfgq.eval(z);
            let c = smoothed_act(z, 0.25);
            assert!((q - c).abs() < 1e-8, "act mismatch at z={z}: {q} vs {c}");
            let qd = cfgq.deriv(z);
            let cd = smoothed_act_deriv(z, 0.25);
            assert!((qd - cd).abs() < 1e-8, "deriv mismatch at z={z}: {qd} vs {cd}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(SmoothingConfig::quadrature(0.1, 8).validate().is_err());
        assert!(SmoothingConfig::closed_form(-0.1).validate().is_err());
        assert!(SmoothingConfig::quadrature(0.1, 16).validate().is_ok());
        assert!(SmoothingConfig::closed_form(0.0).validate().is_ok());
    }

    proptest! {
        // point symmetry about (1/2, 1/2): act(z) + act(1-z) = 1
        #[test]
        fn symmetry_about_midpoint(z in -5.0..5.0f64, s in 0.0..3.0f64) {
            let lhs = smoothed_act(z, s) + smoothed_act(1.0 - z, s);
            prop_assert!((lhs - 1.0).abs() < 1e-12);
        }

        #[test]
        fn deriv_in_unit_interval(z in -5.0..5.0f64, s in 0.0..3.0f64) {
            let d = smoothed_act_deriv(z, s);
            prop_assert!((0.0..=1.0).contains(&d));
        }
    }
}
