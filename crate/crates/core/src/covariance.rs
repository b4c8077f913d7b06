//! Covariance of values and gradients at two points on the sphere, the
//! conditional gradient covariance Ω given both values vanish, and its
//! scaled form Δ.

use crate::error::{Error, Result};
use crate::legendre::{energy, legendre_angle, AngleTriplet};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Mat2 = [[f64; 2]; 2];
pub type Mat4 = [[f64; 4]; 4];
pub type Mat6 = [[f64; 6]; 6];

/// Slack allowed when checking |a|, |b|, |c| ≤ 1/2 and PSD-ness of Δ.
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Covariance function u_n(φ) = P_n(cos φ).
pub fn covariance_u(n: u32, phi: f64) -> Result<f64> {
    Ok(legendre_angle(n, phi)?.triplet.p)
}

/// Blocks of the 6×6 covariance of (f(x), f(y), ∇f(x), ∇f(y)) for x, y on a
/// meridian at distance φ, with φ_x > φ_y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FullCovarianceBlocks {
    pub n: u32,
    pub phi: f64,
    pub a: Mat2,
    pub b: [[f64; 4]; 2],
    pub c: Mat4,
    pub h: Mat2,
    /// Orientation sign of B: +1 for φ_x > φ_y.
    pub orientation: f64,
}

impl FullCovarianceBlocks {
    pub fn sigma(&self) -> Mat6 {
        let mut s = [[0.0; 6]; 6];
        for i in 0..2 {
            for j in 0..2 {
                s[i][j] = self.a[i][j];
            }
            for j in 0..4 {
                s[i][2 + j] = self.b[i][j];
                s[2 + j][i] = self.b[i][j];
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                s[2 + i][2 + j] = self.c[i][j];
            }
        }
        s
    }

    /// Same blocks with the opposite orientation φ_x < φ_y.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        for row in out.b.iter_mut() {
            for v in row.iter_mut() {
                *v = -*v;
            }
        }
        out.orientation = -self.orientation;
        out
    }
}

fn nondegenerate(phi: f64) -> Result<()> {
    if !(phi > 0.0 && phi < PI) {
        return Err(Error::Degenerate(format!("distance {phi} must lie in (0, π)")));
    }
    Ok(())
}

pub fn sigma_blocks(n: u32, phi: f64) -> Result<FullCovarianceBlocks> {
    nondegenerate(phi)?;
    let lt = legendre_angle(n, phi)?;
    let (p, dp, d2p) = (lt.triplet.p, lt.triplet.dp, lt.triplet.d2p);
    let (s, c) = (lt.sin_phi, lt.cos_phi);
    let half_e = 0.5 * energy(n);
    let v = dp * s;
    let h = [[dp * c - d2p * s * s, 0.0], [0.0, dp]];
    let mut cm = [[0.0; 4]; 4];
    for i in 0..4 {
        cm[i][i] = half_e;
    }
    for i in 0..2 {
        for j in 0..2 {
            cm[i][2 + j] = h[i][j];
            cm[2 + j][i] = h[i][j];
        }
    }
    Ok(FullCovarianceBlocks {
        n,
        phi,
        a: [[1.0, p], [p, 1.0]],
        b: [[0.0, 0.0, v, 0.0], [-v, 0.0, 0.0, 0.0]],
        c: cm,
        h,
        orientation: 1.0,
    })
}

/// Ω = C - BᵀA⁻¹B computed directly from the blocks.
pub fn omega_from_blocks(blocks: &FullCovarianceBlocks) -> Result<Mat4> {
    nondegenerate(blocks.phi)?;
    let p = blocks.a[0][1];
    let det = 1.0 - p * p;
    if !(det > 0.0) {
        return Err(Error::Degenerate("value block A is singular".into()));
    }
    // Use the stable 1 - P² rather than the rounded determinant.
    let det = legendre_angle(blocks.n, blocks.phi)?.one_minus_p_sq;
    let ainv = [[1.0 / det, -p / det], [-p / det, 1.0 / det]];
    let mut out = blocks.c;
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = 0.0;
            for k in 0..2 {
                for l in 0..2 {
                    acc += blocks.b[k][i] * ainv[k][l] * blocks.b[l][j];
                }
            }
            out[i][j] -= acc;
        }
    }
    Ok(out)
}

/// Closed-form entries (ã, b̃, c̃) of Ω.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaEntries {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// ã = -P'² sin²φ/(1-P²), b̃ = P' cos φ - P'' sin²φ - P·P'² sin²φ/(1-P²), c̃ = P'.
///
/// The sign of the last term of b̃ is the one produced by C - BᵀA⁻¹B; with
/// the opposite sign |b| would tend to 1 as φ → 0 and Δ would not be PSD.
pub fn unscaled_omega_entries(n: u32, phi: f64) -> Result<OmegaEntries> {
    nondegenerate(phi)?;
    let lt = legendre_angle(n, phi)?;
    Ok(entries_from_angle(&lt))
}

fn entries_from_angle(lt: &AngleTriplet) -> OmegaEntries {
    let (p, dp, d2p) = (lt.triplet.p, lt.triplet.dp, lt.triplet.d2p);
    let s = lt.sin_phi;
    let v2 = dp * dp * s * s;
    let r = v2 / lt.one_minus_p_sq;
    OmegaEntries {
        a: -r,
        b: dp * lt.cos_phi - d2p * s * s - p * r,
        c: dp,
    }
}

/// The closed-form Ω assembled from [`unscaled_omega_entries`].
pub fn omega_closed_form(n: u32, phi: f64) -> Result<Mat4> {
    let e = unscaled_omega_entries(n, phi)?;
    let h = 0.5 * energy(n);
    Ok(pattern_matrix(h + e.a, h, e.b, e.c))
}

fn pattern_matrix(d1: f64, d2: f64, off13: f64, off24: f64) -> Mat4 {
    let mut m = [[0.0; 4]; 4];
    m[0][0] = d1;
    m[2][2] = d1;
    m[1][1] = d2;
    m[3][3] = d2;
    m[0][2] = off13;
    m[2][0] = off13;
    m[1][3] = off24;
    m[3][1] = off24;
    m
}

/// Dimensionless entries at scaled angle ψ = mφ, m = n + 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaledEntries {
    pub n: u32,
    pub psi: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p: f64,
    /// 1 - p², evaluated without cancellation.
    pub one_minus_p_sq: f64,
}

pub fn half_degree(n: u32) -> f64 {
    n as f64 + 0.5
}

pub fn scaled_entries(n: u32, psi: f64) -> Result<ScaledEntries> {
    let m = half_degree(n);
    if !(psi > 0.0 && psi < PI * m) {
        return Err(Error::Degenerate(format!("scaled angle {psi} must lie in (0, π m)")));
    }
    let lt = legendre_angle(n, psi / m)?;
    let e = entries_from_angle(&lt);
    let en = energy(n);
    let out = ScaledEntries {
        n,
        psi,
        a: e.a / en,
        b: e.b / en,
        c: e.c / en,
        p: lt.triplet.p,
        one_minus_p_sq: lt.one_minus_p_sq,
    };
    let worst = out.a.abs().max(out.b.abs()).max(out.c.abs());
    if worst > 0.5 + PSD_TOLERANCE {
        return Err(Error::Invariant(format!(
            "entry bound |a|,|b|,|c| ≤ 1/2 violated at n={n}, ψ={psi}: {worst}"
        )));
    }
    Ok(out)
}

/// Δ = Ω/(E/2), with the sparsity pattern diag(α, 1, α, 1), 2b at (1,3), 2c at (2,4).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalCovariance {
    pub delta: Mat4,
}

impl ConditionalCovariance {
    pub fn identity() -> Self {
        ConditionalCovariance { delta: pattern_matrix(1.0, 1.0, 0.0, 0.0) }
    }

    /// Builds Δ from (a, b, c) without validation.
    pub fn from_abc(a: f64, b: f64, c: f64) -> Self {
        ConditionalCovariance { delta: pattern_matrix(1.0 + 2.0 * a, 1.0, 2.0 * b, 2.0 * c) }
    }

    pub fn alpha(&self) -> f64 {
        self.delta[0][0]
    }

    pub fn b(&self) -> f64 {
        0.5 * self.delta[0][2]
    }

    pub fn c(&self) -> f64 {
        0.5 * self.delta[1][3]
    }

    /// Eigenvalues are α ± 2b and 1 ± 2c.
    pub fn min_eigenvalue(&self) -> f64 {
        let alpha = self.alpha();
        (alpha - 2.0 * self.b().abs()).min(1.0 - 2.0 * self.c().abs())
    }

    /// [(1+2a)² - 4b²]·[1 - 4c²].
    pub fn determinant(&self) -> f64 {
        let alpha = self.alpha();
        let (b, c) = (self.b(), self.c());
        (alpha - 2.0 * b.abs()) * (alpha + 2.0 * b.abs()) * (1.0 - 2.0 * c.abs()) * (1.0 + 2.0 * c.abs())
    }
}

pub fn delta_matrix(e: &ScaledEntries) -> Result<ConditionalCovariance> {
    let d = ConditionalCovariance::from_abc(e.a, e.b, e.c);
    let lo = d.min_eigenvalue();
    if lo < -PSD_TOLERANCE {
        return Err(Error::NotPsd(format!(
            "Δ at n={}, ψ={} has eigenvalue {lo}",
            e.n, e.psi
        )));
    }
    Ok(d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u_at_zero_and_quarter() {
        for n in [0u32, 3, 50, 1000] {
            assert_eq!(covariance_u(n, 0.0).unwrap(), 1.0);
        }
        assert!(covariance_u(1, 0.5 * PI).unwrap().abs() < 1e-16);
    }

    #[test]
    fn block_structure() {
        let b = sigma_blocks(12, 0.7).unwrap();
        let lt = legendre_angle(12, 0.7).unwrap();
        assert_eq!(b.h[1][1], lt.triplet.dp);
        assert_eq!(b.a[0][0], 1.0);
        assert_eq!(b.a[1][1], 1.0);
        let id = sigma_blocks(1, 0.5 * PI).unwrap();
        assert!(id.a[0][1].abs() < 1e-16);
        assert!(sigma_blocks(5, 0.0).is_err());
        assert!(sigma_blocks(5, PI).is_err());
    }

    #[test]
    fn omega_pattern_and_diagonal() {
        let n = 30;
        let om = omega_from_blocks(&sigma_blocks(n, 0.5).unwrap()).unwrap();
        for (i, j) in [(0, 1), (0, 3), (1, 2), (2, 3)] {
            assert!(om[i][j].abs() < 1e-12);
            assert!(om[j][i].abs() < 1e-12);
        }
        let he = 0.5 * energy(n);
        assert!((om[1][1] - he).abs() < 1e-9 * he);
        assert!((om[3][3] - he).abs() < 1e-9 * he);
    }

    #[test]
    fn omega_orientation_invariance() {
        let b = sigma_blocks(17, 1.1).unwrap();
        let o1 = omega_from_blocks(&b).unwrap();
        let o2 = omega_from_blocks(&b.flipped()).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((o1[i][j] - o2[i][j]).abs() < 1e-12 * energy(17));
            }
        }
    }

    #[test]
    fn two_paths_agree() {
        for (n, phi) in [(30u32, 0.5), (2, 1.0), (200, 0.05), (77, 2.9)] {
            let a = omega_from_blocks(&sigma_blocks(n, phi).unwrap()).unwrap();
            let b = omega_closed_form(n, phi).unwrap();
            for i in 0..4 {
                for j in 0..4 {
                    assert!((a[i][j] - b[i][j]).abs() <= 1e-9 * energy(n), "n={n} φ={phi}");
                }
            }
        }
    }

    #[test]
    fn entry_signs_and_identities() {
        let e = unscaled_omega_entries(40, 0.3).unwrap();
        assert!(e.a <= 0.0);
        assert_eq!(e.c, legendre_angle(40, 0.3).unwrap().triplet.dp);
        let s = scaled_entries(50, 10.0).unwrap();
        let u = unscaled_omega_entries(50, 10.0 / 50.5).unwrap();
        let en = energy(50);
        assert!((s.a - u.a / en).abs() < 1e-12);
        assert!((s.b - u.b / en).abs() < 1e-12);
        assert!((s.c - u.c / en).abs() < 1e-12);
    }

    #[test]
    fn entry_bounds_scan() {
        let n = 200;
        let m = half_degree(n);
        let mut worst: f64 = 0.0;
        for k in 1..4000 {
            let psi = k as f64 * PI * m / 4000.0;
            let e = scaled_entries(n, psi).unwrap();
            worst = worst.max(e.a.abs()).max(e.b.abs()).max(e.c.abs());
        }
        assert!(worst <= 0.5 + PSD_TOLERANCE, "{worst}");
    }

    #[test]
    fn opposite_sign_of_b_breaks_the_bound() {
        // With +P·P'² sin²/(1-P²) instead of the minus sign, b → 1 at small ψ.
        let n = 100;
        let psi = 0.05;
        let lt = legendre_angle(n, psi / half_degree(n)).unwrap();
        let (p, dp, d2p) = (lt.triplet.p, lt.triplet.dp, lt.triplet.d2p);
        let s = lt.sin_phi;
        let r = dp * dp * s * s / lt.one_minus_p_sq;
        let b_plus = (dp * lt.cos_phi - d2p * s * s + p * r) / energy(n);
        assert!(b_plus > 0.9);
        let e = scaled_entries(n, psi).unwrap();
        assert!(e.b.abs() < 0.5);
    }

    #[test]
    fn delta_identity_and_determinant() {
        let d = ConditionalCovariance::from_abc(0.0, 0.0, 0.0);
        assert_eq!(d.delta, ConditionalCovariance::identity().delta);
        let d = ConditionalCovariance::from_abc(-0.1, 0.2, 0.3);
        let want = ((0.8f64).powi(2) - 4.0 * 0.04) * (1.0 - 4.0 * 0.09);
        assert!((d.determinant() - want).abs() < 1e-14);
        let e = scaled_entries(100, 30.0).unwrap();
        assert!(delta_matrix(&e).unwrap().min_eigenvalue() >= -1e-10);
    }
}
