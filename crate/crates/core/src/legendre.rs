//! Legendre polynomials with two derivatives, associated-Legendre rows for synthesis,
//! the Bessel function J0 and Hilb's approximation.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Largest degree accepted by [`legendre_triplet`].
pub const MAX_DEGREE: u32 = 1_000_000;

/// Below this value of 1 - t² the derivatives come from additive recurrences
/// instead of the quotient formula, which loses digits near the poles.
const POLE_BAND: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegendreTriplet {
    pub n: u32,
    pub t: f64,
    pub p: f64,
    pub dp: f64,
    pub d2p: f64,
}

impl LegendreTriplet {
    /// (1-t²)P'' - 2tP' + n(n+1)P.
    pub fn ode_residual(&self) -> f64 {
        let e = energy(self.n);
        (1.0 - self.t * self.t) * self.d2p - 2.0 * self.t * self.dp + e * self.p
    }
}

/// Laplace eigenvalue n(n+1).
pub fn energy(n: u32) -> f64 {
    let n = n as f64;
    n * (n + 1.0)
}

/// P_n, P_n', P_n'' at `t`.
pub fn legendre_triplet(n: u32, t: f64) -> Result<LegendreTriplet> {
    check_degree(n)?;
    if !(t.abs() <= 1.0) {
        return Err(Error::Domain(format!("abscissa {t} outside [-1, 1]")));
    }
    let (p, dp, d2p) = if 1.0 - t * t >= POLE_BAND {
        quotient_triplet(n, t)
    } else {
        additive_triplet(n, t)
    };
    Ok(LegendreTriplet { n, t, p, dp, d2p })
}

fn check_degree(n: u32) -> Result<()> {
    if n > MAX_DEGREE {
        return Err(Error::Domain(format!("degree {n} exceeds {MAX_DEGREE}")));
    }
    Ok(())
}

/// Upward three-term recurrence; returns (P_n, P_{n-1}, P_{n-2}).
fn upward(n: u32, t: f64) -> (f64, f64, f64) {
    if n == 0 {
        return (1.0, 0.0, 0.0);
    }
    let mut pm = 0.0;
    let mut p0 = 1.0;
    let mut p1 = t;
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
        pm = p0;
        p0 = p1;
        p1 = p2;
    }
    (p1, p0, pm)
}

/// P' from (1-t²)P'_n = n(P_{n-1} - tP_n) and P'' from its derivative, which
/// needs P'_{n-1}; the ODE is not imposed, so its residual measures rounding.
fn quotient_triplet(n: u32, t: f64) -> (f64, f64, f64) {
    let (p, pm1, pm2) = upward(n, t);
    let s2 = 1.0 - t * t;
    let nf = n as f64;
    let dp = nf * (pm1 - t * p) / s2;
    let dpm1 = (nf - 1.0) * (pm2 - t * pm1) / s2;
    let d2p = (nf * (dpm1 - p - t * dp) + 2.0 * t * dp) / s2;
    (p, dp, d2p)
}

/// P'_{k+1} = P'_{k-1} + (2k+1)P_k and its derivative; exact at t = ±1.
fn additive_triplet(n: u32, t: f64) -> (f64, f64, f64) {
    if n == 0 {
        return (1.0, 0.0, 0.0);
    }
    let (mut p0, mut p1) = (1.0, t);
    let (mut d0, mut d1) = (0.0, 1.0);
    let (mut s0, mut s1) = (0.0, 0.0);
    for k in 1..n {
        let kf = k as f64;
        let p2 = ((2.0 * kf + 1.0) * t * p1 - kf * p0) / (kf + 1.0);
        let d2 = d0 + (2.0 * kf + 1.0) * p1;
        let s2 = s0 + (2.0 * kf + 1.0) * d1;
        p0 = p1;
        p1 = p2;
        d0 = d1;
        d1 = d2;
        s0 = s1;
        s1 = s2;
    }
    (p1, d1, s1)
}

/// Legendre data at the angle φ, with sin φ and a cancellation-free 1 - P².
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleTriplet {
    pub triplet: LegendreTriplet,
    pub phi: f64,
    pub sin_phi: f64,
    pub cos_phi: f64,
    pub one_minus_p_sq: f64,
}

/// Evaluates the triplet at t = cos φ for φ ∈ [0, π].
pub fn legendre_angle(n: u32, phi: f64) -> Result<AngleTriplet> {
    if !(0.0..=PI).contains(&phi) {
        return Err(Error::Domain(format!("angle {phi} outside [0, π]")));
    }
    // Fold to [0, π/2] so that t, sin φ and 1-t are formed accurately.
    let folded = phi > 0.5 * PI;
    let g = if folded { PI - phi } else { phi };
    let (sg, cg) = g.sin_cos();
    let t = if folded { -cg } else { cg };
    let triplet = legendre_triplet(n, t)?;
    let q = one_minus_p_folded(n, g, cg);
    Ok(AngleTriplet {
        triplet,
        phi,
        sin_phi: sg,
        cos_phi: t,
        one_minus_p_sq: q * (2.0 - q),
    })
}

/// 1 - P_n(cos g) for g ∈ [0, π/2] via the recurrence for q_k = 1 - P_k, which
/// never subtracts nearly equal numbers when P_k is close to one.
fn one_minus_p_folded(n: u32, g: f64, cg: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let half = (0.5 * g).sin();
    let omt = 2.0 * half * half; // 1 - cos g
    let (mut q0, mut q1) = (0.0, omt);
    for k in 1..n {
        let kf = k as f64;
        let q2 = ((2.0 * kf + 1.0) * (omt + cg * q1) - kf * q0) / (kf + 1.0);
        q0 = q1;
        q1 = q2;
    }
    q1
}

/// Stable 1 - P_n(cos φ)².
pub fn one_minus_p_squared(n: u32, phi: f64) -> Result<f64> {
    Ok(legendre_angle(n, phi)?.one_minus_p_sq)
}

// ---------------------------------------------------------------------------
// Bessel J0

/// Seam between the power series and the recurrence branch.
pub const BESSEL_SERIES_LIMIT: f64 = 8.0;
/// Above this argument the Hankel expansion is accurate to rounding.
pub const BESSEL_HANKEL_LIMIT: f64 = 25.0;

/// J0(x) for x ≥ 0.
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x < BESSEL_SERIES_LIMIT {
        j0_series(x)
    } else if x < BESSEL_HANKEL_LIMIT {
        j0_miller(x)
    } else {
        j0_hankel(x)
    }
}

pub(crate) fn j0_series(x: f64) -> f64 {
    let y = -0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..80 {
        let kf = k as f64;
        term *= y / (kf * kf);
        sum += term;
        if term.abs() < 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    sum
}

/// Backward recurrence normalized by J0 + 2ΣJ_{2k} = 1.
pub(crate) fn j0_miller(x: f64) -> f64 {
    let start = (x + 20.0 + 8.0 * x.sqrt()) as usize;
    let start = start + start % 2;
    let mut jp1 = 0.0;
    let mut j = 1e-30;
    let mut norm = 0.0;
    let mut j0 = 0.0;
    for k in (1..=start).rev() {
        let jm1 = 2.0 * k as f64 / x * j - jp1;
        jp1 = j;
        j = jm1;
        if (k - 1) % 2 == 0 && k - 1 > 0 {
            norm += 2.0 * j;
        }
        if k - 1 == 0 {
            j0 = j;
        }
        if j.abs() > 1e250 {
            j *= 1e-250;
            jp1 *= 1e-250;
            norm *= 1e-250;
        }
    }
    j0 / (norm + j0)
}

pub(crate) fn j0_hankel(x: f64) -> f64 {
    let z = 8.0 * x;
    let mut p = 1.0;
    let mut q = 0.0;
    let mut term = 1.0;
    let mut prev = f64::INFINITY;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        term *= -odd * odd / (k as f64 * z);
        if term.abs() > prev {
            break;
        }
        prev = term.abs();
        // Terms alternate between Q (k odd) and P (k even) with sign (-1)^{floor(k/2)}.
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 1 {
            q += sign * term;
        } else {
            p += sign * term;
        }
        if term.abs() < 1e-17 {
            break;
        }
    }
    let chi = x - 0.25 * PI;
    (2.0 / (PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
}

// ---------------------------------------------------------------------------
// Hilb asymptotics

/// Constants of the two-regime Hilb error envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HilbConfig {
    /// Regime split at φ = split_c / n.
    pub split_c: f64,
    /// Constant of the φ^{1/2} n^{-3/2} branch.
    pub outer_const: f64,
    /// Constant of the φ² branch.
    pub inner_const: f64,
}

impl Default for HilbConfig {
    fn default() -> Self {
        HilbConfig { split_c: 10.0, outer_const: 5.0, inner_const: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HilbRegime {
    Inner,
    Outer,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HilbApproximation {
    pub n: u32,
    pub phi: f64,
    pub value: f64,
    pub error_envelope: f64,
    pub regime: HilbRegime,
    pub config: HilbConfig,
}

pub fn hilb_approx(n: u32, phi: f64) -> Result<HilbApproximation> {
    hilb_approx_with(n, phi, HilbConfig::default())
}

pub fn hilb_approx_with(n: u32, phi: f64, config: HilbConfig) -> Result<HilbApproximation> {
    if !(phi > 0.0 && phi <= 0.5 * PI) {
        return Err(Error::Domain(format!("Hilb angle {phi} outside (0, π/2]")));
    }
    let nf = n as f64;
    let value = (phi / phi.sin()).sqrt() * bessel_j0((nf + 0.5) * phi);
    let (regime, error_envelope) = if nf * phi < config.split_c {
        (HilbRegime::Inner, config.inner_const * phi * phi)
    } else {
        (HilbRegime::Outer, config.outer_const * phi.sqrt() * nf.powf(-1.5))
    };
    Ok(HilbApproximation { n, phi, value, error_envelope, regime, config })
}

// ---------------------------------------------------------------------------
// Large-ψ expansions at the scaled angle ψ = (n + 1/2)φ

/// Two-term expansion of P_n(cos(ψ/m)).
pub fn p_expansion(n: u32, psi: f64) -> f64 {
    let nf = n as f64;
    let sm = (psi / (nf + 0.5)).sin();
    let w = psi + 0.25 * PI;
    (2.0 / (PI * nf * sm)).sqrt() * (w.sin() - 0.125 * w.cos() / psi)
}

/// Two-term expansion of P_n'(cos(ψ/m)).
pub fn dp_expansion(n: u32, psi: f64) -> f64 {
    let nf = n as f64;
    let sm = (psi / (nf + 0.5)).sin();
    (2.0 / PI).sqrt() * nf.sqrt() / sm.powf(2.5)
        * (sm * (psi - 0.25 * PI).sin() + 3.0 / (8.0 * nf) * (psi + 0.25 * PI).sin())
}

/// Remainder scale 1/ψ^{5/2} + 1/(n√ψ) of [`p_expansion`].
pub fn p_expansion_envelope(n: u32, psi: f64) -> f64 {
    psi.powf(-2.5) + 1.0 / (n as f64 * psi.sqrt())
}

/// Remainder scale n²/ψ^{7/2} + n/ψ^{3/2} of [`dp_expansion`].
pub fn dp_expansion_envelope(n: u32, psi: f64) -> f64 {
    let nf = n as f64;
    nf * nf * psi.powf(-3.5) + nf * psi.powf(-1.5)
}

// ---------------------------------------------------------------------------
// Associated Legendre rows

/// Fully normalized associated-Legendre values of degree n, orders 0..=n.
/// For m ≥ 1 the entry already carries the √2 of the real basis, so
/// values[m]·cos(mφ) and values[m]·sin(mφ) are unit vectors in L²(S²).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociatedLegendreRow {
    pub n: u32,
    pub theta: f64,
    pub values: Vec<f64>,
}

impl AssociatedLegendreRow {
    /// 4π/(2n+1) · Σ_k η_k², which the addition theorem sets to 1.
    pub fn addition_sum(&self) -> f64 {
        let s: f64 = self.values.iter().map(|v| v * v).sum();
        4.0 * PI / (2.0 * self.n as f64 + 1.0) * s
    }
}

pub fn assoc_legendre_row(n: u32, theta: f64) -> Result<AssociatedLegendreRow> {
    if !(0.0..=PI).contains(&theta) {
        return Err(Error::Domain(format!("colatitude {theta} outside [0, π]")));
    }
    let folded = theta > 0.5 * PI;
    let g = if folded { PI - theta } else { theta };
    let (s, c) = g.sin_cos();
    let c = if folded { -c } else { c };
    Ok(AssociatedLegendreRow { n, theta, values: assoc_legendre_values(n, c, s) })
}

/// Row from precomputed cos θ and sin θ.
pub fn assoc_legendre_values(n: u32, cos_t: f64, sin_t: f64) -> Vec<f64> {
    let n = n as usize;
    let mut out = vec![0.0; n + 1];
    let base = (1.0 / (4.0 * PI)).sqrt();
    let log_sin = if sin_t > 0.0 { sin_t.ln() } else { f64::NEG_INFINITY };
    // log of the diagonal value P̄_m^m, accumulated to avoid underflow.
    let mut log_diag = base.ln();
    for m in 0..=n {
        if m == 1 {
            log_diag += 3.0f64.sqrt().ln() + log_sin;
        } else if m >= 2 {
            let mf = m as f64;
            log_diag += 0.5 * ((2.0 * mf + 1.0) / (2.0 * mf)).ln() + log_sin;
        }
        if log_diag == f64::NEG_INFINITY {
            break;
        }
        out[m] = upward_order(n, m, cos_t, log_diag);
    }
    out
}

/// Runs the degree recurrence for fixed order m from the diagonal value exp(log_diag).
fn upward_order(n: usize, m: usize, c: f64, log_diag: f64) -> f64 {
    const RESCALE: f64 = 1e200;
    let mut log_scale = log_diag;
    let mut pm2 = 0.0;
    let mut pm1 = 1.0;
    if n == m {
        return (log_scale).exp() * pm1;
    }
    let mf = m as f64;
    for l in (m + 1)..=n {
        let lf = l as f64;
        let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
        let b = if l == m + 1 {
            0.0
        } else {
            let l1 = lf - 1.0;
            ((l1 * l1 - mf * mf) / (4.0 * l1 * l1 - 1.0)).sqrt()
        };
        let p = a * (c * pm1 - b * pm2);
        pm2 = pm1;
        pm1 = p;
        if pm1.abs() > RESCALE {
            pm1 /= RESCALE;
            pm2 /= RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    if pm1 == 0.0 {
        return 0.0;
    }
    let sign = pm1.signum();
    sign * (pm1.abs().ln() + log_scale).exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn low_degree_closed_forms() {
        let t1 = legendre_triplet(1, 0.37).unwrap();
        assert_eq!((t1.p, t1.dp, t1.d2p), (0.37, 1.0, 0.0));
        let t2 = legendre_triplet(2, 0.5).unwrap();
        assert!((t2.p + 0.125).abs() < 1e-15);
        assert!((t2.dp - 1.5).abs() < 1e-15);
        assert!((t2.d2p - 3.0).abs() < 1e-14);
    }

    #[test]
    fn endpoint_limits() {
        let t = legendre_triplet(5, 1.0).unwrap();
        assert_eq!(t.p, 1.0);
        assert_eq!(t.dp, 15.0);
        // (n-1)n(n+1)(n+2)/8
        assert_eq!(t.d2p, 4.0 * 5.0 * 6.0 * 7.0 / 8.0);
        let m = legendre_triplet(6, -1.0).unwrap();
        assert_eq!(m.p, 1.0);
        assert_eq!(m.dp, -21.0);
        assert_eq!(m.d2p, 5.0 * 6.0 * 7.0 * 8.0 / 8.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(legendre_triplet(3, 1.0 + 1e-12).is_err());
        assert!(legendre_triplet(3, f64::NAN).is_err());
        assert!(legendre_triplet(MAX_DEGREE + 1, 0.0).is_err());
    }

    #[test]
    fn branches_agree_at_band_edge() {
        for n in [3u32, 40, 400] {
            let t = (1.0 - POLE_BAND).sqrt();
            let a = quotient_triplet(n, t);
            let b = additive_triplet(n, t);
            let e = energy(n);
            assert!((a.1 - b.1).abs() < 1e-10 * e, "n={n}");
            assert!((a.2 - b.2).abs() < 1e-9 * e * e, "n={n}");
        }
    }

    #[test]
    fn one_minus_p_squared_small_angle() {
        // 1 - P ≈ Eφ²/4 for nφ ≪ 1
        let n = 100;
        let phi = 1e-7;
        let q = one_minus_p_squared(n, phi).unwrap();
        let e = energy(n);
        let approx = 2.0 * e * phi * phi / 4.0;
        assert!((q / approx - 1.0).abs() < 1e-8);
        assert!(q > 0.0);
    }

    #[test]
    fn bessel_values() {
        assert_eq!(bessel_j0(0.0), 1.0);
        // Seam cross-checks.
        assert!((j0_series(8.0) - j0_miller(8.0)).abs() < 1e-11);
        assert!((j0_miller(25.0) - j0_hankel(25.0)).abs() < 1e-12);
        assert!(bessel_j0(2.404) > 0.0 && bessel_j0(2.405) < 0.0);
    }

    #[test]
    fn hilb_regimes() {
        let h = hilb_approx(200, 0.01).unwrap();
        assert_eq!(h.regime, HilbRegime::Inner);
        let h = hilb_approx(100, 0.5).unwrap();
        assert_eq!(h.regime, HilbRegime::Outer);
        assert!(hilb_approx(10, 0.0).is_err());
        assert!(hilb_approx(10, 2.0).is_err());
        let tiny = hilb_approx(10, 1e-9).unwrap();
        assert!((tiny.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn assoc_rows() {
        let r0 = assoc_legendre_row(0, 1.3).unwrap();
        assert_eq!(r0.values.len(), 1);
        assert!((r0.values[0] - 1.0 / (4.0 * PI).sqrt()).abs() < 1e-15);
        let r1 = assoc_legendre_row(1, 0.5 * PI).unwrap();
        assert!(r1.values[0].abs() < 1e-15);
        let r50 = assoc_legendre_row(50, 1.0).unwrap();
        assert!((r50.addition_sum() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn assoc_row_high_degree_is_finite() {
        for theta in [1e-3, 0.3, 1.5, PI - 1e-3] {
            let r = assoc_legendre_row(10_000, theta).unwrap();
            assert!(r.values.iter().all(|v| v.is_finite()));
            assert!((r.addition_sum() - 1.0).abs() < 1e-9, "theta={theta}");
        }
    }
}
