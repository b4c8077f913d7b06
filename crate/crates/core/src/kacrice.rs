//! Two-point correlation K_n(ψ) of the nodal length and the variance integral.
//!
//! K_n(ψ) = E‖U‖‖V‖ / (2π√(1-P²)) with (U, V) ~ N(0, Δ_n(ψ)). The Gaussian
//! expectation is Berry's determinant integral
//! E‖U‖‖V‖ = (1/2π)∬ F(t,s)/(ts)^{3/2} dt ds, evaluated with the trapezoid rule
//! in logarithmic coordinates t = eˣ, s = eʸ where the integrand is analytic in a
//! strip of half-width π and decays exponentially in every direction.

use crate::covariance::{delta_matrix, half_degree, scaled_entries, ConditionalCovariance, ScaledEntries};
use crate::error::{Error, Result};
use crate::legendre::energy;
use crate::quad::GaussRule;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Step and truncation of the logarithmic trapezoid rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerryConfig {
    pub step: f64,
    pub half_range: f64,
    /// Largest accepted relative difference between the h and 2h rules.
    pub tolerance: f64,
}

impl Default for BerryConfig {
    fn default() -> Self {
        BerryConfig { step: 0.6, half_range: 56.0, tolerance: 1e-3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormProduct {
    pub value: f64,
    /// Estimated absolute error of the h rule. The trapezoid error decays like
    /// exp(-2π·w/h) for a strip of half-width w, so the error of T_h is about the
    /// square of the relative error of T_{2h}; a truncation floor is added.
    pub error_estimate: f64,
    /// |T_h - T_{2h}|.
    pub coarse_difference: f64,
}

/// f(t,s) = det(I + diag(t,t,s,s)Δ)^{-1/2}.
pub fn berry_f(t: f64, s: f64, delta: &ConditionalCovariance) -> Result<f64> {
    if !(t >= 0.0 && s >= 0.0) {
        return Err(Error::Domain(format!("berry_f needs t, s ≥ 0, got ({t}, {s})")));
    }
    let alpha = delta.alpha();
    let (b, c) = (delta.b(), delta.c());
    let d1 = (1.0 + t * alpha) * (1.0 + s * alpha) - 4.0 * t * s * b * b;
    let d2 = (1.0 + t) * (1.0 + s) - 4.0 * t * s * c * c;
    let det = d1 * d2;
    if !(det > 0.0) {
        return Err(Error::NotPsd(format!("det(I + TΔ) = {det} at (t, s) = ({t}, {s})")));
    }
    Ok(1.0 / det.sqrt())
}

pub fn expected_norm_product(delta: &ConditionalCovariance) -> Result<NormProduct> {
    expected_norm_product_with(delta, &BerryConfig::default())
}

pub fn expected_norm_product_with(delta: &ConditionalCovariance, cfg: &BerryConfig) -> Result<NormProduct> {
    if delta.min_eigenvalue() < -crate::covariance::PSD_TOLERANCE {
        return Err(Error::NotPsd(format!("min eigenvalue {}", delta.min_eigenvalue())));
    }
    let alpha = delta.alpha().max(0.0);
    let (b, c) = (delta.b(), delta.c());
    let beta = ((alpha - 2.0 * b.abs()) * (alpha + 2.0 * b.abs())).max(0.0);
    let gamma = ((1.0 - 2.0 * c.abs()) * (1.0 + 2.0 * c.abs())).max(0.0);

    let h = cfg.step;
    let count = (2.0 * cfg.half_range / h).round() as usize + 1;
    let xs: Vec<f64> = (0..count).map(|i| -cfg.half_range + i as f64 * h).collect();
    let ts: Vec<f64> = xs.iter().map(|x| x.exp()).collect();
    let rts: Vec<f64> = xs.iter().map(|x| (0.5 * x).exp()).collect();

    // g(0,s) - g(0,0) for each node s.
    let dg0: Vec<f64> = ts.iter().map(|&s| first_difference_pre(1.0, 1.0, 1.0, alpha, 1.0, s)).collect();

    let mut fine = 0.0;
    let mut coarse = 0.0;
    for i in 0..count {
        let t = ts[i];
        let d1t = 1.0 + alpha * t;
        let d2t = 1.0 + t;
        let a_t = alpha + beta * t;
        let g_t = 1.0 + gamma * t;
        let sdt = (d1t * d2t).sqrt();
        let mut row = 0.0;
        let mut row_coarse = 0.0;
        for j in 0..=i {
            let s = ts[j];
            let dg = first_difference_pre(d1t, d2t, sdt, a_t, g_t, s);
            let f = dg - dg0[j];
            let w = if j == i { 1.0 } else { 2.0 };
            let v = w * f / (rts[i] * rts[j]);
            row += v;
            if i % 2 == 0 && j % 2 == 0 {
                row_coarse += v;
            }
        }
        fine += row;
        coarse += row_coarse;
    }
    let scale = 1.0 / (2.0 * PI);
    let value = fine * h * h * scale;
    let value_coarse = coarse * 4.0 * h * h * scale;
    let coarse_difference = (value - value_coarse).abs();
    let scale_v = value.abs().max(1e-300);
    if !(value.is_finite()) || coarse_difference > cfg.tolerance * scale_v {
        return Err(Error::NonConvergence(format!(
            "E‖U‖‖V‖: h and 2h rules differ by {coarse_difference}"
        )));
    }
    let truncation = 8.0 * (-0.5 * cfg.half_range).exp();
    let error_estimate = coarse_difference * coarse_difference / scale_v + truncation + 1e-15 * scale_v;
    Ok(NormProduct { value, error_estimate, coarse_difference })
}

/// g(t,s) - g(t,0) where g = (D1·D2)^{-1/2}, D1 = 1+αt + s(α+βt), D2 = 1+t + s(1+γt),
/// given sdt = √(D1(t,0)·D2(t,0)). The difference of determinants is formed
/// exactly from the bilinear structure, so no cancellation occurs as s → 0.
#[inline(always)]
fn first_difference_pre(d1t: f64, d2t: f64, sdt: f64, a_t: f64, g_t: f64, s: f64) -> f64 {
    let d1 = d1t + s * a_t;
    let d2 = d2t + s * g_t;
    let sd = (d1 * d2).sqrt();
    let dd = s * (a_t * d2 + d1t * g_t);
    -dd / (sd * sdt * (sd + sdt))
}

/// ∫₀^∞ f(t) dt by the same logarithmic trapezoid rule, for integrands decaying
/// at least like t^{-1/2} at zero and t^{-3/2} at infinity.
pub fn half_line_integral<F: Fn(f64) -> f64>(f: F, cfg: &BerryConfig) -> f64 {
    let h = cfg.step;
    let count = (2.0 * cfg.half_range / h).round() as usize + 1;
    (0..count)
        .map(|i| {
            let x = -cfg.half_range + i as f64 * h;
            let t = x.exp();
            f(t) * t
        })
        .sum::<f64>()
        * h
}

// ---------------------------------------------------------------------------
// Two-point correlation

/// Coefficients of the large-ψ expansion
/// K ≈ 1/4 + sin2ψ/(2πnS) + κ₀/(π²nSψ) + κ₁cos2ψ/(πnψS) + (κ₂ sin2ψ + κ₃ cos4ψ)/(π²nψS),
/// with S = sin(ψ/m).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeyCoefficients {
    pub constant: f64,
    pub cos2: f64,
    pub sin2: f64,
    pub cos4: f64,
}

impl KeyCoefficients {
    /// The expansion as stated, with 9/32 in front of cos 2ψ.
    pub const STATED: KeyCoefficients =
        KeyCoefficients { constant: 65.0 / 256.0, cos2: 9.0 / 32.0, sin2: 27.0 / 64.0, cos4: -11.0 / 256.0 };
    /// Same expansion with the cos 2ψ coefficient 3/8 obtained when the terms are collected.
    pub const COLLECTED: KeyCoefficients =
        KeyCoefficients { constant: 65.0 / 256.0, cos2: 3.0 / 8.0, sin2: 27.0 / 64.0, cos4: -11.0 / 256.0 };
    /// Coefficients re-collected with the sign of b̃ that makes Δ PSD; the b² term
    /// (1 + cos4ψ)/(π²nSψ) enters with a minus sign, moving 65/256 to 1/256 and
    /// -11/256 to -75/256.
    pub const SIGN_CORRECTED: KeyCoefficients =
        KeyCoefficients { constant: 1.0 / 256.0, cos2: 3.0 / 8.0, sin2: 27.0 / 64.0, cos4: -75.0 / 256.0 };
}

impl Default for KeyCoefficients {
    fn default() -> Self {
        KeyCoefficients::STATED
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoPointValue {
    pub n: u32,
    pub psi: f64,
    pub k_exact: f64,
    /// None when ψ < splitC.
    pub k_asymptotic: Option<f64>,
    /// None when ψ < splitC or |P| > 0.9.
    pub k_taylor: Option<f64>,
    pub quadrature_error: f64,
}

/// K_n(ψ) and its estimated quadrature error.
pub fn k_exact(n: u32, psi: f64, cfg: &BerryConfig) -> Result<(f64, f64)> {
    let e = scaled_entries(n, psi)?;
    k_from_entries(&e, cfg)
}

fn k_from_entries(e: &ScaledEntries, cfg: &BerryConfig) -> Result<(f64, f64)> {
    let d = delta_matrix(e)?;
    let np = expected_norm_product_with(&d, cfg)?;
    let pref = 1.0 / (2.0 * PI * e.one_minus_p_sq.sqrt());
    Ok((np.value * pref, np.error_estimate * pref))
}

pub fn two_point_exact(n: u32, psi: f64) -> Result<TwoPointValue> {
    two_point_exact_with(n, psi, &KacRiceConfig::default())
}

pub fn two_point_exact_with(n: u32, psi: f64, cfg: &KacRiceConfig) -> Result<TwoPointValue> {
    let e = scaled_entries(n, psi)?;
    let (k, err) = k_from_entries(&e, &cfg.berry)?;
    let k_asymptotic = two_point_asymptotic_with(n, psi, &cfg.key, cfg.split_c).ok();
    let k_taylor = taylor_from_entries(&e, psi, cfg.split_c).ok();
    Ok(TwoPointValue { n, psi, k_exact: k, k_asymptotic, k_taylor, quadrature_error: err })
}

pub fn two_point_asymptotic(n: u32, psi: f64) -> Result<f64> {
    two_point_asymptotic_with(n, psi, &KeyCoefficients::STATED, DEFAULT_SPLIT_C)
}

pub fn two_point_asymptotic_with(n: u32, psi: f64, key: &KeyCoefficients, split_c: f64) -> Result<f64> {
    if !(psi >= split_c) {
        return Err(Error::Domain(format!("asymptotic expansion needs ψ ≥ {split_c}, got {psi}")));
    }
    Ok(expansion_value(n, psi, key, true))
}

fn expansion_value(n: u32, psi: f64, key: &KeyCoefficients, with_leading_oscillation: bool) -> f64 {
    let nf = n as f64;
    let s = (psi / half_degree(n)).sin();
    let ns = nf * s;
    let (s2, c2) = (2.0 * psi).sin_cos();
    let c4 = (4.0 * psi).cos();
    let lead = if with_leading_oscillation { 0.5 * s2 / (PI * ns) } else { 0.0 };
    0.25 + lead
        + key.constant / (PI * PI * ns * psi)
        + key.cos2 * c2 / (PI * ns * psi)
        + (key.sin2 * s2 + key.cos4 * c4) / (PI * PI * ns * psi)
}

/// Polynomial approximation of K in (a, b, P).
pub fn taylor_two_point(n: u32, psi: f64) -> Result<f64> {
    let e = scaled_entries(n, psi)?;
    taylor_from_entries(&e, psi, DEFAULT_SPLIT_C)
}

fn taylor_from_entries(e: &ScaledEntries, psi: f64, split_c: f64) -> Result<f64> {
    if psi < split_c {
        return Err(Error::Domain(format!("Taylor expansion needs ψ ≥ {split_c}")));
    }
    if e.p.abs() > 0.9 {
        return Err(Error::Domain(format!("Taylor expansion needs |P| ≤ 0.9, got {}", e.p)));
    }
    Ok(taylor_polynomial(e.a, e.b, e.p))
}

/// 1/4 + a/4 + b²/8 - a²/32 - 3ab²/16 + 3b⁴/128 + P²/8 + aP²/8 + b²P²/16 + 3P⁴/32.
pub fn taylor_polynomial(a: f64, b: f64, p: f64) -> f64 {
    let (b2, p2) = (b * b, p * p);
    0.25 + a / 4.0 + b2 / 8.0 - a * a / 32.0 - 3.0 * a * b2 / 16.0 + 3.0 * b2 * b2 / 128.0
        + p2 / 8.0
        + a * p2 / 8.0
        + b2 * p2 / 16.0
        + 3.0 * p2 * p2 / 32.0
}

/// π/2 + πa/2 + πb²/4 - πa²/16 - 3πab²/8 + 3πb⁴/64.
pub fn norm_product_taylor(a: f64, b: f64) -> f64 {
    let b2 = b * b;
    PI * (0.5 + a / 2.0 + b2 / 4.0 - a * a / 16.0 - 3.0 * a * b2 / 8.0 + 3.0 * b2 * b2 / 64.0)
}

// ---------------------------------------------------------------------------
// Large-ψ behaviour of the entries

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryItem {
    pub index: usize,
    pub label: String,
    pub exact: f64,
    pub asymptotic: f64,
    /// Scale of the remainder, e.g. 1/ψ³ + 1/(nψ).
    pub envelope: f64,
}

impl EntryItem {
    pub fn ratio(&self) -> f64 {
        (self.exact - self.asymptotic).abs() / self.envelope
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryAsymptotics {
    pub n: u32,
    pub psi: f64,
    pub items: Vec<EntryItem>,
}

/// Closed-form large-ψ values of P², a, b², c, P⁴, a², b⁴, P²a, P²b², ab²
/// next to the exact values. The b² expansion uses the PSD-consistent sign of
/// its (1 + cos4ψ) term.
pub fn entry_asymptotics(n: u32, psi: f64) -> Result<EntryAsymptotics> {
    if psi < DEFAULT_SPLIT_C {
        return Err(Error::Domain(format!("entry expansions need ψ ≥ {DEFAULT_SPLIT_C}")));
    }
    let e = scaled_entries(n, psi)?;
    let nf = n as f64;
    let s = (psi / half_degree(n)).sin();
    let ns = nf * s;
    let (s2, c2) = (2.0 * psi).sin_cos();
    let c4 = (4.0 * psi).cos();
    let pi2 = PI * PI;
    let wide = psi.powi(-3) + 1.0 / (nf * psi);
    let cube = psi.powi(-3);
    let sq = ns * ns;
    let quartic_plus = (1.5 + 2.0 * s2 - 0.5 * c4) / (pi2 * sq);
    let (p2, a, b2) = (e.p * e.p, e.a, e.b * e.b);
    let items = vec![
        EntryItem {
            index: 1,
            label: "P^2".into(),
            exact: p2,
            asymptotic: (1.0 + s2) / (PI * ns) - c2 / (4.0 * PI * ns * psi),
            envelope: wide,
        },
        EntryItem {
            index: 2,
            label: "a".into(),
            exact: a,
            asymptotic: -(1.0 - s2) / (PI * ns) + 3.0 * c2 / (4.0 * PI * sq) - (1.0 + c4) / (2.0 * pi2 * sq),
            envelope: wide,
        },
        EntryItem {
            index: 3,
            label: "b^2".into(),
            exact: b2,
            asymptotic: (1.0 + s2) / (PI * ns) + 7.0 * c2 / (4.0 * PI * ns * psi) - (1.0 + c4) / (pi2 * ns * psi),
            envelope: wide,
        },
        EntryItem { index: 4, label: "c".into(), exact: e.c, asymptotic: 0.0, envelope: psi.powf(-1.5) },
        EntryItem { index: 5, label: "P^4".into(), exact: p2 * p2, asymptotic: quartic_plus, envelope: cube },
        EntryItem {
            index: 6,
            label: "a^2".into(),
            exact: a * a,
            asymptotic: (1.5 - 2.0 * s2 - 0.5 * c4) / (pi2 * sq),
            envelope: cube,
        },
        EntryItem { index: 7, label: "b^4".into(), exact: b2 * b2, asymptotic: quartic_plus, envelope: cube },
        EntryItem {
            index: 8,
            label: "P^2 a".into(),
            exact: p2 * a,
            asymptotic: -(1.0 + c4) / (2.0 * pi2 * sq),
            envelope: cube,
        },
        EntryItem { index: 9, label: "P^2 b^2".into(), exact: p2 * b2, asymptotic: quartic_plus, envelope: cube },
        EntryItem {
            index: 10,
            label: "a b^2".into(),
            exact: a * b2,
            asymptotic: -(1.0 + c4) / (2.0 * pi2 * sq),
            envelope: cube,
        },
    ];
    Ok(EntryAsymptotics { n, psi, items })
}

// ---------------------------------------------------------------------------
// Variance

pub const DEFAULT_SPLIT_C: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KacRiceConfig {
    /// End of the near-diagonal range [0, C].
    pub split_c: f64,
    /// Number of geometrically graded panels on [0, C].
    pub near_panels: usize,
    /// Width of the tail panels; π/4 aligns them with the sin 2ψ period.
    pub tail_panel: f64,
    pub rule_order: usize,
    pub check_order: usize,
    /// Largest accepted |high - low| difference on the variance.
    pub tolerance: f64,
    pub berry: BerryConfig,
    pub key: KeyCoefficients,
}

impl Default for KacRiceConfig {
    fn default() -> Self {
        KacRiceConfig {
            split_c: DEFAULT_SPLIT_C,
            near_panels: 6,
            tail_panel: 0.25 * PI,
            rule_order: 16,
            check_order: 8,
            tolerance: 1e-6,
            berry: BerryConfig::default(),
            key: KeyCoefficients::STATED,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureMeta {
    pub near_panels: usize,
    pub tail_panel: f64,
    pub tail_panels: usize,
    pub rule_order: usize,
    pub check_order: usize,
    pub berry_step: f64,
    pub berry_half_range: f64,
    /// |high - low| on the assembled variance.
    pub error_estimate: f64,
    /// Largest E‖U‖‖V‖ error estimate over the nodes, scaled to K.
    pub max_kernel_error: f64,
    pub kernel_evaluations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariancePrediction {
    pub n: u32,
    pub i_n: f64,
    pub variance: f64,
    pub asymptotic_variance: f64,
    pub split_c: f64,
    pub quadrature: QuadratureMeta,
}

/// Quadrature nodes on [0, πm/2] with K_n evaluated at each; reusable for any weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSamples {
    pub n: u32,
    pub config: KacRiceConfig,
    /// (ψ, weight, K) for the high-order rule.
    pub high: Vec<(f64, f64, f64)>,
    /// (ψ, weight, K) for the check rule.
    pub low: Vec<(f64, f64, f64)>,
    pub tail_panels: usize,
    pub max_kernel_error: f64,
}

fn panel_edges(n: u32, cfg: &KacRiceConfig) -> (Vec<(f64, f64)>, usize) {
    let end = 0.5 * PI * half_degree(n);
    let c = cfg.split_c.min(end);
    let mut panels = Vec::new();
    // [0, C/2^{K-1}], ..., [C/4, C/2], [C/2, C]
    let k = cfg.near_panels.max(1);
    let mut hi = c;
    let mut near = Vec::new();
    for _ in 0..k - 1 {
        near.push((0.5 * hi, hi));
        hi *= 0.5;
    }
    near.push((0.0, hi));
    near.reverse();
    panels.extend(near);
    let mut tail = 0;
    let w = cfg.tail_panel;
    let mut lo = c;
    let mut next = ((c / w).floor() + 1.0) * w;
    while lo < end - 1e-12 {
        let hi = next.min(end);
        if hi - lo > 1e-12 {
            panels.push((lo, hi));
            tail += 1;
        }
        lo = hi;
        next += w;
    }
    (panels, tail)
}

/// Evaluates K_n at the nodes of both rules.
pub fn kernel_samples(n: u32, cfg: &KacRiceConfig) -> Result<KernelSamples> {
    if n < 2 {
        return Err(Error::Domain(format!("variance needs n ≥ 2, got {n}")));
    }
    let (panels, tail_panels) = panel_edges(n, cfg);
    let hi_rule = GaussRule::new(cfg.rule_order);
    let lo_rule = GaussRule::new(cfg.check_order);
    let mut high_nodes = Vec::new();
    let mut low_nodes = Vec::new();
    for &(a, b) in &panels {
        high_nodes.extend(hi_rule.mapped(a, b));
        low_nodes.extend(lo_rule.mapped(a, b));
    }
    let eval = |nodes: &[(f64, f64)]| -> Result<Vec<(f64, f64, f64, f64)>> {
        nodes
            .par_iter()
            .map(|&(psi, w)| k_exact(n, psi, &cfg.berry).map(|(k, err)| (psi, w, k, err)))
            .collect()
    };
    let hv = eval(&high_nodes)?;
    let lv = eval(&low_nodes)?;
    let max_kernel_error = hv.iter().chain(lv.iter()).map(|v| v.3).fold(0.0, f64::max);
    Ok(KernelSamples {
        n,
        config: *cfg,
        high: hv.iter().map(|v| (v.0, v.1, v.2)).collect(),
        low: lv.iter().map(|v| (v.0, v.1, v.2)).collect(),
        tail_panels,
        max_kernel_error,
    })
}

impl KernelSamples {
    pub fn m(&self) -> f64 {
        half_degree(self.n)
    }

    /// (∫₀^{πm/2} g(ψ, K) dψ by the high rule, |high - low|), summed in node order.
    pub fn integrate<G: Fn(f64, f64) -> f64>(&self, g: G) -> (f64, f64) {
        let hi: f64 = self.high.iter().map(|&(psi, w, k)| w * g(psi, k)).sum();
        let lo: f64 = self.low.iter().map(|&(psi, w, k)| w * g(psi, k)).sum();
        (hi, (hi - lo).abs())
    }

    /// 4π²E/m, the factor turning I_n into the variance.
    pub fn variance_prefactor(&self) -> f64 {
        4.0 * PI * PI * energy(self.n) / self.m()
    }

    pub fn meta(&self, error_estimate: f64) -> QuadratureMeta {
        QuadratureMeta {
            near_panels: self.config.near_panels,
            tail_panel: self.config.tail_panel,
            tail_panels: self.tail_panels,
            rule_order: self.config.rule_order,
            check_order: self.config.check_order,
            berry_step: self.config.berry.step,
            berry_half_range: self.config.berry.half_range,
            error_estimate,
            max_kernel_error: self.max_kernel_error,
            kernel_evaluations: self.high.len() + self.low.len(),
        }
    }

    /// Variance of the nodal length from these samples.
    pub fn variance(&self) -> Result<VariancePrediction> {
        let m = self.m();
        let (half, err) = self.integrate(|psi, k| (k - 0.25) * (psi / m).sin());
        let pref = self.variance_prefactor();
        let i_n = 2.0 * half;
        let err_var = 2.0 * err * pref;
        if err_var > self.config.tolerance {
            return Err(Error::NonConvergence(format!(
                "variance at n={}: rule orders disagree by {err_var}",
                self.n
            )));
        }
        Ok(VariancePrediction {
            n: self.n,
            i_n,
            variance: pref * i_n,
            asymptotic_variance: variance_asymptotic(self.n),
            split_c: self.config.split_c,
            quadrature: self.meta(err_var),
        })
    }
}

pub fn variance_exact(n: u32, cfg: &KacRiceConfig) -> Result<VariancePrediction> {
    kernel_samples(n, cfg)?.variance()
}

/// (65/32) log n.
pub fn variance_asymptotic(n: u32) -> f64 {
    log_law(n as f64)
}

/// (65/32) log x for real x > 0.
pub fn log_law(x: f64) -> f64 {
    65.0 / 32.0 * x.ln()
}

/// Contribution 4π²E/m · 2∫_C^{πm/2}(K_asym - 1/4) sin(ψ/m) dψ of the expansion,
/// optionally without its leading sin 2ψ term.
pub fn expansion_tail_variance(n: u32, key: &KeyCoefficients, with_leading_oscillation: bool, cfg: &KacRiceConfig) -> f64 {
    let (panels, _) = panel_edges(n, cfg);
    let rule = GaussRule::new(cfg.rule_order);
    let m = half_degree(n);
    let mut acc = 0.0;
    for &(a, b) in &panels {
        if a < cfg.split_c - 1e-12 {
            continue;
        }
        acc += rule.integrate(a, b, |psi| {
            (expansion_value(n, psi, key, with_leading_oscillation) - 0.25) * (psi / m).sin()
        });
    }
    4.0 * PI * PI * energy(n) / m * 2.0 * acc
}

/// Largest |K_exact - K_asym|/(1/ψ³ + 1/(nψ)) over a ψ-grid, for several coefficient sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionDiagnostic {
    pub n: u32,
    pub psi_min: f64,
    pub psi_max: f64,
    pub points: usize,
    /// (label, max ratio, rms absolute residual)
    pub variants: Vec<(String, f64, f64)>,
}

pub fn expansion_diagnostic(
    n: u32,
    psi_min: f64,
    points: usize,
    variants: &[(&str, KeyCoefficients)],
    cfg: &BerryConfig,
) -> Result<ExpansionDiagnostic> {
    let psi_max = 0.5 * PI * half_degree(n);
    let psis: Vec<f64> = (0..points)
        .map(|i| psi_min + (psi_max - psi_min) * i as f64 / (points - 1).max(1) as f64)
        .collect();
    let ks: Vec<f64> = psis
        .par_iter()
        .map(|&psi| k_exact(n, psi, cfg).map(|v| v.0))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (label, key) in variants {
        let mut worst: f64 = 0.0;
        let mut sq = 0.0;
        for (&psi, &k) in psis.iter().zip(&ks) {
            let r = k - expansion_value(n, psi, key, true);
            worst = worst.max(r.abs() / (psi.powi(-3) + 1.0 / (n as f64 * psi)));
            sq += r * r;
        }
        out.push((label.to_string(), worst, (sq / psis.len() as f64).sqrt()));
    }
    Ok(ExpansionDiagnostic { n, psi_min, psi_max, points, variants: out })
}
