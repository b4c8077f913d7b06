//! Linear statistics Z^φ of the nodal line: test functions, the pair
//! correlation transform W^φ(d) = sin(d)·W₀^φ(d)/(8π²), and the semi-analytic
//! variance and second moment.
//!
//! W₀^φ(d) = ∫ φ(x) ∫₀^{2π} φ(y_β(x, d)) dβ dx, where y_β runs over the circle of
//! radius d around x. Z^φ only sees the even part of φ (the nodal set of f_n is
//! antipodally symmetric), so the variance and moment routines symmetrize first.

use crate::error::{Error, Result};
use crate::kacrice::{kernel_samples, KacRiceConfig, KernelSamples, VariancePrediction};
use crate::legendre::energy;
use crate::quad::{cosine_substituted, GaussRule};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

pub type Vec3 = [f64; 3];

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn normalize(a: Vec3) -> Result<Vec3> {
    let r = dot(&a, &a).sqrt();
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain("zero or non-finite direction".into()));
    }
    Ok([a[0] / r, a[1] / r, a[2] / r])
}

fn neg(a: &Vec3) -> Vec3 {
    [-a[0], -a[1], -a[2]]
}

/// Profile g of a zonal test function φ(x) = g(⟨x, axis⟩).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ZonalProfile {
    /// Σ c_k t^k.
    Polynomial(Vec<f64>),
    /// C^∞ indicator of the cap of angular radius `radius`; the step happens on
    /// [radius - width, radius + width].
    SmoothCap { radius: f64, width: f64 },
}

/// Panels across the transition band of a smooth cap.
const SMOOTH_STEP_LEVELS: usize = 4;

fn smooth_step(s: f64) -> f64 {
    // 0 for s ≤ 0, 1 for s ≥ 1.
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let e = |x: f64| (-1.0 / x).exp();
    let (a, b) = (e(s), e(1.0 - s));
    a / (a + b)
}

impl ZonalProfile {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            ZonalProfile::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ck| acc * t + ck),
            ZonalProfile::SmoothCap { radius, width } => {
                let theta = t.clamp(-1.0, 1.0).acos();
                1.0 - smooth_step((theta - (radius - width)) / (2.0 * width))
            }
        }
    }

    /// Angles (from the axis) used as quadrature breakpoints: the ends of the
    /// smooth step, where the profile stops being analytic, and levels inside it.
    fn edges(&self) -> Vec<f64> {
        match self {
            ZonalProfile::Polynomial(_) => vec![],
            ZonalProfile::SmoothCap { radius, width } => (0..=SMOOTH_STEP_LEVELS)
                .map(|k| radius - width + 2.0 * width * k as f64 / SMOOTH_STEP_LEVELS as f64)
                .filter(|e| *e > 0.0 && *e < PI)
                .collect(),
        }
    }

    fn is_even(&self) -> bool {
        match self {
            ZonalProfile::Polynomial(c) => c.iter().skip(1).step_by(2).all(|&v| v == 0.0),
            ZonalProfile::SmoothCap { .. } => false,
        }
    }
}

/// Shape of a test function. Grids use θ_i = iπ/(rows-1) (poles included) and
/// φ_j = 2πj/cols, interpolated bilinearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TestFunctionKind {
    Constant { value: f64 },
    Zonal { axis: Vec3, profile: ZonalProfile },
    Cap { center: Vec3, radius: f64 },
    Grid { rows: usize, cols: usize, values: Vec<f64> },
    /// x ↦ (ψ(x) + ψ(-x))/2.
    Symmetrized(Box<TestFunctionKind>),
    /// Σ c_i ψ_i.
    Linear(Vec<(f64, TestFunctionKind)>),
}

impl TestFunctionKind {
    pub fn value(&self, x: &Vec3) -> f64 {
        match self {
            TestFunctionKind::Constant { value } => *value,
            TestFunctionKind::Zonal { axis, profile } => profile.value(dot(axis, x)),
            TestFunctionKind::Cap { center, radius } => {
                if dot(center, x) >= radius.cos() {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunctionKind::Grid { rows, cols, values } => grid_value(*rows, *cols, values, x),
            TestFunctionKind::Symmetrized(inner) => 0.5 * (inner.value(x) + inner.value(&neg(x))),
            TestFunctionKind::Linear(terms) => terms.iter().map(|(c, k)| c * k.value(x)).sum(),
        }
    }

    /// Caps (center, radius) across whose boundary the function jumps.
    pub fn boundary_caps(&self) -> Vec<(Vec3, f64)> {
        match self {
            TestFunctionKind::Cap { center, radius } => vec![(*center, *radius)],
            TestFunctionKind::Symmetrized(inner) => {
                let mut v = inner.boundary_caps();
                let mirrored: Vec<_> = v.iter().map(|(c, r)| (neg(c), *r)).collect();
                v.extend(mirrored);
                v
            }
            TestFunctionKind::Linear(terms) => terms.iter().flat_map(|(_, k)| k.boundary_caps()).collect(),
            _ => vec![],
        }
    }
}

fn grid_value(rows: usize, cols: usize, values: &[f64], x: &Vec3) -> f64 {
    let theta = x[2].clamp(-1.0, 1.0).acos();
    let mut phi = x[1].atan2(x[0]);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    let fi = theta / PI * (rows - 1) as f64;
    let i0 = (fi.floor() as usize).min(rows - 2);
    let ti = fi - i0 as f64;
    let fj = phi / (2.0 * PI) * cols as f64;
    let j0 = (fj.floor() as usize) % cols;
    let tj = fj - fj.floor();
    let j1 = (j0 + 1) % cols;
    let v = |i: usize, j: usize| values[i * cols + j];
    let top = v(i0, j0) * (1.0 - tj) + v(i0, j1) * tj;
    let bot = v(i0 + 1, j0) * (1.0 - tj) + v(i0 + 1, j1) * tj;
    top * (1.0 - ti) + bot * ti
}

/// A test function together with the norms used by the bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub kind: TestFunctionKind,
    /// ‖φ‖_∞ (an upper bound for linear combinations).
    pub sup_norm: f64,
    pub l1_norm: f64,
    pub l2_norm_sq: f64,
    /// ∫φ.
    pub integral: f64,
    /// V(φ); exact for caps, a gradient-integral estimate otherwise.
    pub total_variation: f64,
    pub even: bool,
}

/// Gauss-in-cos θ by uniform-longitude product rule on the sphere.
struct SphereRule {
    points: Vec<(Vec3, f64)>,
}

impl SphereRule {
    fn new(n_theta: usize, n_phi: usize) -> Self {
        let g = GaussRule::new(n_theta);
        let mut points = Vec::with_capacity(n_theta * n_phi);
        for (t, w) in g.nodes.iter().zip(&g.weights) {
            let s = (1.0 - t * t).sqrt();
            for j in 0..n_phi {
                let p = 2.0 * PI * (j as f64 + 0.5) / n_phi as f64;
                points.push(([s * p.cos(), s * p.sin(), *t], w * 2.0 * PI / n_phi as f64));
            }
        }
        SphereRule { points }
    }
}

/// Resolution of the generic product rule used for grids and combinations.
const GENERIC_THETA: usize = 192;
const GENERIC_PHI: usize = 384;

fn generic_norms(kind: &TestFunctionKind) -> (f64, f64, f64) {
    let rule = SphereRule::new(GENERIC_THETA, GENERIC_PHI);
    let (mut l1, mut l2, mut int) = (0.0, 0.0, 0.0);
    for (x, w) in &rule.points {
        let v = kind.value(x);
        l1 += w * v.abs();
        l2 += w * v * v;
        int += w * v;
    }
    (l1, l2, int)
}

/// Composite Gauss over [0, π] in θ with extra breakpoints, integrand h(θ) sin θ.
fn theta_integral<F: Fn(f64) -> f64>(edges: &[f64], f: F) -> f64 {
    let rule = GaussRule::new(24);
    let mut pts = vec![0.0, PI];
    pts.extend_from_slice(edges);
    for k in 1..16 {
        pts.push(PI * k as f64 / 16.0);
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
    pts.windows(2).map(|w| rule.integrate(w[0], w[1], |th| f(th) * th.sin())).sum()
}

impl TestFunction {
    pub fn constant(value: f64) -> Self {
        TestFunction {
            kind: TestFunctionKind::Constant { value },
            sup_norm: value.abs(),
            l1_norm: 4.0 * PI * value.abs(),
            l2_norm_sq: 4.0 * PI * value * value,
            integral: 4.0 * PI * value,
            total_variation: 0.0,
            even: true,
        }
    }

    /// Indicator of the cap {⟨x, center⟩ ≥ cos radius}.
    pub fn cap(center: Vec3, radius: f64) -> Result<Self> {
        if !(0.0..=PI).contains(&radius) {
            return Err(Error::Domain(format!("cap radius {radius} outside [0, π]")));
        }
        let center = normalize(center)?;
        let area = 2.0 * PI * (1.0 - radius.cos());
        Ok(TestFunction {
            kind: TestFunctionKind::Cap { center, radius },
            sup_norm: if radius > 0.0 { 1.0 } else { 0.0 },
            l1_norm: area,
            l2_norm_sq: area,
            integral: area,
            total_variation: 2.0 * PI * radius.sin(),
            even: radius >= PI,
        })
    }

    pub fn hemisphere(center: Vec3) -> Result<Self> {
        Self::cap(center, 0.5 * PI)
    }

    pub fn zonal(axis: Vec3, profile: ZonalProfile) -> Result<Self> {
        if let ZonalProfile::SmoothCap { radius, width } = profile {
            if !(width > 0.0) || !(0.0..=PI).contains(&radius) {
                return Err(Error::Domain("smooth cap needs width > 0 and radius in [0, π]".into()));
            }
        }
        let axis = normalize(axis)?;
        let edges = profile.edges();
        let h = |th: f64| profile.value(th.cos());
        let l1 = 2.0 * PI * theta_integral(&edges, |th| h(th).abs());
        let l2 = 2.0 * PI * theta_integral(&edges, |th| h(th).powi(2));
        let int = 2.0 * PI * theta_integral(&edges, h);
        let step = 1e-6;
        let tv = 2.0 * PI
            * theta_integral(&edges, |th| {
                let (a, b) = ((th - step).max(0.0), (th + step).min(PI));
                ((h(b) - h(a)) / (b - a)).abs()
            });
        let sup = (0..=8192)
            .map(|i| h(PI * i as f64 / 8192.0).abs())
            .chain(edges.iter().map(|&e| h(e).abs()))
            .fold(0.0, f64::max);
        let even = profile.is_even();
        Ok(TestFunction {
            kind: TestFunctionKind::Zonal { axis, profile },
            sup_norm: sup,
            l1_norm: l1,
            l2_norm_sq: l2,
            integral: int,
            total_variation: tv,
            even,
        })
    }

    /// Grid-sampled function; `values` is row-major with `rows` colatitudes
    /// (poles included) and `cols` longitudes.
    pub fn grid(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows < 3 || cols < 4 || values.len() != rows * cols {
            return Err(Error::Domain(format!(
                "grid {rows}×{cols} with {} values",
                values.len()
            )));
        }
        let sup = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let even = cols % 2 == 0
            && (0..rows).all(|i| {
                (0..cols).all(|j| {
                    let a = values[i * cols + j];
                    let b = values[(rows - 1 - i) * cols + (j + cols / 2) % cols];
                    (a - b).abs() <= 1e-12 * sup.max(1e-300)
                })
            });
        let tv = grid_total_variation(rows, cols, &values);
        let kind = TestFunctionKind::Grid { rows, cols, values };
        let (l1, l2, int) = generic_norms(&kind);
        Ok(TestFunction { kind, sup_norm: sup, l1_norm: l1, l2_norm_sq: l2, integral: int, total_variation: tv, even })
    }

    /// Samples `self` on a pole-including grid.
    pub fn sampled(&self, rows: usize, cols: usize) -> Result<Self> {
        if rows < 3 || cols < 4 {
            return Err(Error::Domain("grid too small".into()));
        }
        let mut values = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            let th = PI * i as f64 / (rows - 1) as f64;
            for j in 0..cols {
                let p = 2.0 * PI * j as f64 / cols as f64;
                let x = [th.sin() * p.cos(), th.sin() * p.sin(), th.cos()];
                values.push(self.value(&x));
            }
        }
        Self::grid(rows, cols, values)
    }

    pub fn linear(terms: Vec<(f64, TestFunction)>) -> Self {
        let sup = terms.iter().map(|(c, t)| c.abs() * t.sup_norm).sum();
        let tv = terms.iter().map(|(c, t)| c.abs() * t.total_variation).sum();
        let even = terms.iter().all(|(_, t)| t.even);
        let kind = TestFunctionKind::Linear(terms.into_iter().map(|(c, t)| (c, t.kind)).collect());
        let (l1, l2, int) = generic_norms(&kind);
        TestFunction { kind, sup_norm: sup, l1_norm: l1, l2_norm_sq: l2, integral: int, total_variation: tv, even }
    }

    fn symmetrized(inner: &TestFunction) -> Self {
        let kind = TestFunctionKind::Symmetrized(Box::new(inner.kind.clone()));
        let (l1, l2, int) = match &inner.kind {
            TestFunctionKind::Cap { radius, .. } => {
                let area = inner.l1_norm;
                if *radius <= 0.5 * PI {
                    (area, 0.5 * area, area)
                } else {
                    let ac = 4.0 * PI - area;
                    (4.0 * PI - ac, 4.0 * PI - 1.5 * ac, area)
                }
            }
            _ => generic_norms(&kind),
        };
        TestFunction {
            kind,
            sup_norm: inner.sup_norm,
            l1_norm: l1,
            l2_norm_sq: l2,
            integral: int,
            total_variation: inner.total_variation,
            even: true,
        }
    }

    pub fn value(&self, x: &Vec3) -> f64 {
        self.kind.value(x)
    }

    pub fn is_zero(&self) -> bool {
        self.l1_norm == 0.0 || self.sup_norm == 0.0
    }
}

fn grid_total_variation(rows: usize, cols: usize, values: &[f64]) -> f64 {
    let dth = PI / (rows - 1) as f64;
    let dph = 2.0 * PI / cols as f64;
    let v = |i: usize, j: usize| values[i * cols + (j % cols)];
    let mut acc = 0.0;
    for i in 0..rows - 1 {
        let th = (i as f64 + 0.5) * dth;
        for j in 0..cols {
            let g_th = 0.5 * ((v(i + 1, j) - v(i, j)) + (v(i + 1, j + 1) - v(i, j + 1))) / dth;
            let g_ph = 0.5 * ((v(i, j + 1) - v(i, j)) + (v(i + 1, j + 1) - v(i + 1, j))) / (dph * th.sin());
            acc += (g_th * g_th + g_ph * g_ph).sqrt() * th.sin() * dth * dph;
        }
    }
    acc
}

/// φ^ev(x) = (φ(x) + φ(-x))/2. Z^φ = Z^{φ^ev} because the nodal set of f_n is
/// invariant under x ↦ -x, so every moment of Z^φ only depends on the even part.
pub fn even_part(phi: &TestFunction) -> TestFunction {
    if phi.even {
        return phi.clone();
    }
    let out = match &phi.kind {
        TestFunctionKind::Cap { radius, .. } if (radius - 0.5 * PI).abs() < 1e-14 => TestFunction::constant(0.5),
        TestFunctionKind::Cap { radius, .. } if *radius == 0.0 => TestFunction::constant(0.0),
        TestFunctionKind::Zonal { axis, profile: ZonalProfile::Polynomial(c) } => {
            let ev: Vec<f64> = c.iter().enumerate().map(|(k, &v)| if k % 2 == 0 { v } else { 0.0 }).collect();
            if ev.iter().all(|&v| v == 0.0) {
                TestFunction::constant(0.0)
            } else {
                TestFunction::zonal(*axis, ZonalProfile::Polynomial(ev)).expect("axis already normalized")
            }
        }
        TestFunctionKind::Grid { rows, cols, values } if cols % 2 == 0 => {
            let (rows, cols) = (*rows, *cols);
            let mut ev = vec![0.0; values.len()];
            for i in 0..rows {
                for j in 0..cols {
                    ev[i * cols + j] =
                        0.5 * (values[i * cols + j] + values[(rows - 1 - i) * cols + (j + cols / 2) % cols]);
                }
            }
            let mut g = TestFunction::grid(rows, cols, ev).expect("same shape");
            g.even = true;
            g
        }
        _ => TestFunction::symmetrized(phi),
    };
    if out.l1_norm <= 1e-14 * phi.l1_norm.max(1e-300) {
        TestFunction::constant(0.0)
    } else {
        out
    }
}

/// 65·‖φ‖²/(128π).
pub fn c_of_phi(phi: &TestFunction) -> Result<f64> {
    if phi.is_zero() || phi.l2_norm_sq == 0.0 {
        return Err(Error::ZeroFunction);
    }
    Ok(65.0 * phi.l2_norm_sq / (128.0 * PI))
}

/// E[Z^φ] = (∫φ)·√(n(n+1))/2^{3/2}.
pub fn expected_linstat(n: u32, phi: &TestFunction) -> f64 {
    phi.integral * energy(n).sqrt() / 2f64.powf(1.5)
}

// ---------------------------------------------------------------------------
// W₀ evaluation

/// Numerical settings for W₀^φ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinstatConfig {
    /// Intervals of the d-table for zonal profiles.
    pub zonal_table: usize,
    /// Intervals of the d-table for grid-sampled and combined functions.
    pub generic_table: usize,
    /// Gauss points in cos θ of the outer product rule (generic kinds).
    pub generic_theta: usize,
    /// Trapezoid points on the inner circle (generic kinds); halved for the check.
    pub generic_circle: usize,
    /// Gauss order per panel for caps and zonal profiles; halved for the check.
    pub panel_order: usize,
    /// Accepted relative disagreement of the two orders, against 2π‖φ‖_∞‖φ‖₁.
    pub tolerance: f64,
    /// Accepted disagreement of the two ψ-rules on Var(Z^φ) and E[(Z^φ)²],
    /// relative to max(1, |value|). Looser than for φ ≡ 1 because W^φ of a cap
    /// has derivative jumps that the panels do not resolve.
    pub integral_tolerance: f64,
    pub kacrice: KacRiceConfig,
}

impl Default for LinstatConfig {
    fn default() -> Self {
        LinstatConfig {
            zonal_table: 1024,
            generic_table: 128,
            generic_theta: 48,
            generic_circle: 256,
            panel_order: 24,
            tolerance: 1e-6,
            integral_tolerance: 1e-5,
            kacrice: KacRiceConfig::default(),
        }
    }
}

/// Callable W₀^φ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum W0Model {
    Constant(f64),
    /// Indicator of a cap, evaluated directly.
    Cap { radius: f64, order: usize },
    /// Equispaced values on [0, π], cubic interpolation.
    Table(Vec<f64>),
    Symmetrized(Box<W0Model>),
}

impl W0Model {
    pub fn w0(&self, d: f64) -> f64 {
        let d = d.clamp(0.0, PI);
        match self {
            W0Model::Constant(v) => *v,
            W0Model::Cap { radius, order } => cap_w0(*radius, d, &GaussRule::new(*order)),
            W0Model::Table(t) => table_lookup(t, d),
            W0Model::Symmetrized(inner) => 0.5 * (inner.w0(d) + inner.w0(PI - d)),
        }
    }

    /// W^φ(d) = sin(d)·W₀^φ(d)/(8π²).
    pub fn w(&self, d: f64) -> f64 {
        d.sin() * self.w0(d) / (8.0 * PI * PI)
    }

    /// Same as [`W0Model::w`] for many angles, sharing the Gauss rule.
    pub fn w_many(&self, ds: &[f64]) -> Vec<f64> {
        let cache = match self {
            W0Model::Cap { order, .. } => Some(GaussRule::new(*order)),
            W0Model::Symmetrized(inner) => match inner.as_ref() {
                W0Model::Cap { order, .. } => Some(GaussRule::new(*order)),
                _ => None,
            },
            _ => None,
        };
        ds.par_iter()
            .map(|&d| {
                let d = d.clamp(0.0, PI);
                let w0 = match (self, &cache) {
                    (W0Model::Cap { radius, .. }, Some(r)) => cap_w0(*radius, d, r),
                    (W0Model::Symmetrized(inner), Some(r)) => match inner.as_ref() {
                        W0Model::Cap { radius, .. } => 0.5 * (cap_w0(*radius, d, r) + cap_w0(*radius, PI - d, r)),
                        _ => unreachable!(),
                    },
                    _ => self.w0(d),
                };
                d.sin() * w0 / (8.0 * PI * PI)
            })
            .collect()
    }
}

fn table_lookup(t: &[f64], d: f64) -> f64 {
    let k = t.len() - 1;
    let x = d / PI * k as f64;
    let i = (x.floor() as isize).clamp(1, k as isize - 2) as usize;
    let s = x - i as f64;
    // four-point Lagrange on i-1, i, i+1, i+2
    let (p0, p1, p2, p3) = (t[i - 1], t[i], t[i + 1], t[i + 2]);
    let l0 = -s * (s - 1.0) * (s - 2.0) / 6.0;
    let l1 = (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0;
    let l2 = -(s + 1.0) * s * (s - 2.0) / 2.0;
    let l3 = (s + 1.0) * s * (s - 1.0) / 6.0;
    p0 * l0 + p1 * l1 + p2 * l2 + p3 * l3
}

fn push_in(pts: &mut Vec<f64>, v: f64, lo: f64, hi: f64) {
    if v > lo && v < hi {
        pts.push(v);
    }
}

/// Sorted panel ends on [lo, hi] with interior breakpoints.
fn panels(lo: f64, hi: f64, mut interior: Vec<f64>) -> Vec<f64> {
    interior.push(lo);
    interior.push(hi);
    interior.sort_by(|a, b| a.partial_cmp(b).unwrap());
    interior.dedup_by(|a, b| (*a - *b).abs() < 1e-13);
    interior
}

/// W₀ of the cap indicator: 2π∫₀^r sin θ · 2 arccos(q) dθ with
/// q = (cos r - cos θ cos d)/(sin θ sin d), split where q = ±1.
fn cap_w0(r: f64, d: f64, rule: &GaussRule) -> f64 {
    if r <= 0.0 {
        return 0.0;
    }
    let area = 2.0 * PI * (1.0 - r.cos());
    let sd = d.sin();
    if sd < 1e-13 {
        if d < 1.0 {
            return 2.0 * PI * area;
        }
        // circle collapses to -x, so W₀(π) = 2π|F ∩ -F|
        return 2.0 * PI * (2.0 * area - 4.0 * PI).max(0.0);
    }
    let (cr, cd) = (r.cos(), d.cos());
    let arc = |th: f64| -> f64 {
        let st = th.sin();
        if st <= 0.0 {
            return if (th < 1.0) == (d < r) { 2.0 * PI } else { 0.0 };
        }
        let q = (cr - th.cos() * cd) / (st * sd);
        2.0 * q.clamp(-1.0, 1.0).acos()
    };
    let mut brk = Vec::new();
    for v in [(r - d).abs(), r + d, 2.0 * PI - r - d] {
        push_in(&mut brk, v, 0.0, r);
    }
    let pts = panels(0.0, r, brk);
    let inner: f64 = pts
        .windows(2)
        .map(|w| cosine_substituted(rule, w[0], w[1], |th| th.sin() * arc(th)))
        .sum();
    2.0 * PI * inner
}

/// W₀ of a zonal profile at distance d.
fn zonal_w0(profile: &ZonalProfile, d: f64, rule: &GaussRule) -> f64 {
    let edges = profile.edges();
    let (sd, cd) = d.sin_cos();
    // circle integral: ∫₀^{2π} g(cosθ cos d + sinθ sin d cos β) dβ
    let circle = |th: f64| -> f64 {
        let (st, ct) = th.sin_cos();
        let (a, b) = (ct * cd, st * sd);
        if b.abs() < 1e-15 {
            return 2.0 * PI * profile.value(a);
        }
        let mut brk = Vec::new();
        for e in &edges {
            let q = (e.cos() - a) / b;
            if q > -1.0 && q < 1.0 {
                brk.push(q.acos());
            }
        }
        let pts = panels(0.0, PI, brk);
        2.0 * pts
            .windows(2)
            .map(|w| cosine_substituted(rule, w[0], w[1], |be| profile.value(a + b * be.cos())))
            .sum::<f64>()
    };
    let mut brk = Vec::new();
    for &e in &edges {
        push_in(&mut brk, e, 0.0, PI);
        for v in [(e - d).abs(), e + d, 2.0 * PI - e - d] {
            push_in(&mut brk, v, 0.0, PI);
        }
    }
    for k in 1..8 {
        brk.push(PI * k as f64 / 8.0);
    }
    let pts = panels(0.0, PI, brk);
    2.0 * PI
        * pts
            .windows(2)
            .map(|w| cosine_substituted(rule, w[0], w[1], |th| th.sin() * profile.value(th.cos()) * circle(th)))
            .sum::<f64>()
}

/// W₀ of an arbitrary function by an outer product rule and an inner circle trapezoid.
fn generic_w0(kind: &TestFunctionKind, d: f64, outer: &SphereRule, circle: usize) -> f64 {
    let (sd, cd) = d.sin_cos();
    let mut acc = 0.0;
    for (x, w) in &outer.points {
        let fx = kind.value(x);
        if fx == 0.0 {
            continue;
        }
        // tangent frame at x
        let rho = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let e1 = [x[2] * x[0] / rho, x[2] * x[1] / rho, -rho];
        let e2 = [-x[1] / rho, x[0] / rho, 0.0];
        let mut s = 0.0;
        for k in 0..circle {
            let be = 2.0 * PI * k as f64 / circle as f64;
            let (sb, cb) = be.sin_cos();
            let y = [
                cd * x[0] + sd * (cb * e1[0] + sb * e2[0]),
                cd * x[1] + sd * (cb * e1[1] + sb * e2[1]),
                cd * x[2] + sd * (cb * e1[2] + sb * e2[2]),
            ];
            s += kind.value(&y);
        }
        acc += w * fx * s * 2.0 * PI / circle as f64;
    }
    acc
}

fn check(a: f64, b: f64, scale: f64, tol: f64, what: &str) -> Result<()> {
    if (a - b).abs() > tol * scale.max(1e-300) {
        return Err(Error::NonConvergence(format!("W₀ of {what}: orders disagree, {a} vs {b}")));
    }
    Ok(())
}

/// Builds the W₀ evaluator of φ (not of its even part).
pub fn w0_model(phi: &TestFunction, cfg: &LinstatConfig) -> Result<W0Model> {
    let scale = 2.0 * PI * phi.sup_norm * phi.l1_norm;
    kind_model(&phi.kind, scale, cfg)
}

fn kind_model(kind: &TestFunctionKind, scale: f64, cfg: &LinstatConfig) -> Result<W0Model> {
    let probes = [0.0, 0.3, 0.9, 1.4, 1.9, 2.6, 3.1];
    match kind {
        TestFunctionKind::Constant { value } => Ok(W0Model::Constant(8.0 * PI * PI * value * value)),
        TestFunctionKind::Cap { radius, .. } => {
            let (hi, lo) = (GaussRule::new(cfg.panel_order), GaussRule::new(cfg.panel_order / 2));
            for d in probes {
                check(cap_w0(*radius, d, &hi), cap_w0(*radius, d, &lo), scale, cfg.tolerance, "cap")?;
            }
            Ok(W0Model::Cap { radius: *radius, order: cfg.panel_order })
        }
        TestFunctionKind::Zonal { profile, .. } => {
            let (hi, lo) = (GaussRule::new(cfg.panel_order), GaussRule::new(cfg.panel_order / 2));
            for d in probes {
                check(zonal_w0(profile, d, &hi), zonal_w0(profile, d, &lo), scale, cfg.tolerance, "zonal profile")?;
            }
            let k = cfg.zonal_table.max(8);
            let t: Vec<f64> = (0..=k)
                .into_par_iter()
                .map(|i| zonal_w0(profile, PI * i as f64 / k as f64, &hi))
                .collect();
            Ok(W0Model::Table(t))
        }
        TestFunctionKind::Symmetrized(inner) => {
            Ok(W0Model::Symmetrized(Box::new(kind_model(inner, scale, cfg)?)))
        }
        TestFunctionKind::Grid { .. } | TestFunctionKind::Linear(_) => {
            let outer = SphereRule::new(cfg.generic_theta, 2 * cfg.generic_theta);
            let c = cfg.generic_circle.max(8);
            for d in [0.4, 1.7] {
                check(
                    generic_w0(kind, d, &outer, c),
                    generic_w0(kind, d, &outer, c / 2),
                    scale,
                    cfg.tolerance.max(1e-3),
                    "sampled function",
                )?;
            }
            let k = cfg.generic_table.max(8);
            let t: Vec<f64> = (0..=k)
                .into_par_iter()
                .map(|i| generic_w0(kind, PI * i as f64 / k as f64, &outer, c))
                .collect();
            Ok(W0Model::Table(t))
        }
    }
}

/// W^φ and W₀^φ on an equispaced angle grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WTransform {
    pub angles: Vec<f64>,
    pub w: Vec<f64>,
    pub w0: Vec<f64>,
}

pub fn w_transform(phi: &TestFunction, grid_size: usize) -> Result<WTransform> {
    w_transform_with(phi, grid_size, &LinstatConfig::default())
}

pub fn w_transform_with(phi: &TestFunction, grid_size: usize, cfg: &LinstatConfig) -> Result<WTransform> {
    if grid_size < 64 {
        return Err(Error::Domain(format!("W grid needs at least 64 intervals, got {grid_size}")));
    }
    let model = w0_model(phi, cfg)?;
    let angles: Vec<f64> = (0..=grid_size).map(|i| PI * i as f64 / grid_size as f64).collect();
    let w0: Vec<f64> = angles.par_iter().map(|&d| model.w0(d)).collect();
    let w = angles.iter().zip(&w0).map(|(d, v)| d.sin() * v / (8.0 * PI * PI)).collect();
    Ok(WTransform { angles, w, w0 })
}

// ---------------------------------------------------------------------------
// Variance and second moment

fn weights_at(samples: &KernelSamples, model: &W0Model) -> (Vec<f64>, Vec<f64>) {
    let m = samples.m();
    let hi: Vec<f64> = samples.high.iter().map(|v| v.0 / m).collect();
    let lo: Vec<f64> = samples.low.iter().map(|v| v.0 / m).collect();
    (model.w_many(&hi), model.w_many(&lo))
}

fn weighted_integral(samples: &KernelSamples, model: &W0Model, shift: f64) -> (f64, f64) {
    let (wh, wl) = weights_at(samples, model);
    let hi: f64 = samples.high.iter().zip(&wh).map(|(&(_, w, k), &x)| w * (k - shift) * x).sum();
    let lo: f64 = samples.low.iter().zip(&wl).map(|(&(_, w, k), &x)| w * (k - shift) * x).sum();
    (hi, (hi - lo).abs())
}

/// Var(Z^φ) from precomputed kernel samples. φ is reduced to its even part.
pub fn variance_linstat_from(samples: &KernelSamples, phi: &TestFunction, cfg: &LinstatConfig) -> Result<VariancePrediction> {
    let ev = even_part(phi);
    let n = samples.n;
    // c(φ) is taken on φ as given, so a hemisphere reports 65/64
    let asym = if phi.is_zero() { 0.0 } else { c_of_phi(phi)? * (n as f64).ln() };
    let (half, err) = if ev.is_zero() {
        (0.0, 0.0)
    } else {
        let model = w0_model(&ev, cfg)?;
        weighted_integral(samples, &model, 0.25)
    };
    let pref = samples.variance_prefactor();
    // W^{φ^ev} is symmetric about π/2, so the integral over [0, πm] is twice the half range.
    let i_n = 2.0 * half;
    let err_var = 2.0 * err * pref;
    if err_var > cfg.integral_tolerance * (pref * i_n).abs().max(1.0) {
        return Err(Error::NonConvergence(format!("linear statistic variance at n={n}: rule orders disagree by {err_var}")));
    }
    Ok(VariancePrediction {
        n,
        i_n,
        variance: pref * i_n,
        asymptotic_variance: asym,
        split_c: samples.config.split_c,
        quadrature: samples.meta(err_var),
    })
}

pub fn variance_linstat_exact(n: u32, phi: &TestFunction, cfg: &LinstatConfig) -> Result<VariancePrediction> {
    variance_linstat_from(&kernel_samples(n, &cfg.kacrice)?, phi, cfg)
}

/// E[(Z^φ)²] = 8π²E/m ∫₀^{πm/2} K_n(ψ) W^{φ^ev}(ψ/m) dψ from precomputed samples.
pub fn second_moment_from(samples: &KernelSamples, phi: &TestFunction, cfg: &LinstatConfig) -> Result<f64> {
    let ev = even_part(phi);
    if ev.is_zero() {
        return Ok(0.0);
    }
    let model = w0_model(&ev, cfg)?;
    let (half, err) = weighted_integral(samples, &model, 0.0);
    let pref = 2.0 * samples.variance_prefactor();
    if err * pref > cfg.integral_tolerance * (half * pref).abs().max(1.0) {
        return Err(Error::NonConvergence(format!(
            "second moment at n={}: rule orders disagree by {}",
            samples.n,
            err * pref
        )));
    }
    Ok(pref * half)
}

pub fn second_moment_linstat(n: u32, phi: &TestFunction) -> Result<f64> {
    let cfg = LinstatConfig::default();
    second_moment_from(&kernel_samples(n, &cfg.kacrice)?, phi, &cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    const Z: Vec3 = [0.0, 0.0, 1.0];

    #[test]
    fn cap_norms() {
        let r = 0.7;
        let c = TestFunction::cap(Z, r).unwrap();
        assert!((c.l1_norm - 2.0 * PI * (1.0 - r.cos())).abs() < 1e-15);
        assert!((c.total_variation - 2.0 * PI * r.sin()).abs() < 1e-15);
        assert!(c.l2_norm_sq <= c.sup_norm * c.l1_norm);
    }

    #[test]
    fn zonal_norms_match_closed_forms() {
        // φ = t²: ∫ = 4π/3, ∫φ² = 4π/5
        let z = TestFunction::zonal(Z, ZonalProfile::Polynomial(vec![0.0, 0.0, 1.0])).unwrap();
        assert!((z.integral - 4.0 * PI / 3.0).abs() < 1e-12);
        assert!((z.l2_norm_sq - 4.0 * PI / 5.0).abs() < 1e-12);
        assert!((z.sup_norm - 1.0).abs() < 1e-15);
        assert!(z.even);
    }

    #[test]
    fn even_part_cases() {
        let h = TestFunction::hemisphere(Z).unwrap();
        assert_eq!(even_part(&h).kind, TestFunctionKind::Constant { value: 0.5 });
        let odd = TestFunction::zonal(Z, ZonalProfile::Polynomial(vec![0.0, 1.0])).unwrap();
        assert!(even_part(&odd).is_zero());
        let c = TestFunction::constant(2.0);
        assert_eq!(even_part(&c), c);
    }

    #[test]
    fn cap_w0_endpoints() {
        let rule = GaussRule::new(24);
        for r in [0.3, 1.0, 0.5 * PI, 2.5] {
            let area = 2.0 * PI * (1.0 - f64::cos(r));
            let near0 = cap_w0(r, 1e-9, &rule);
            assert!((near0 / (2.0 * PI * area) - 1.0).abs() < 1e-6, "r={r}");
            assert!((cap_w0(r, 0.0, &rule) - 2.0 * PI * area).abs() < 1e-12);
        }
    }

    #[test]
    fn hemisphere_w0_sums_to_constant() {
        // W₀(d) + W₀(π-d) = 2·W₀ of the constant 1/2 = 4π²
        let rule = GaussRule::new(24);
        for d in [0.2, 0.8, 1.3, 2.0] {
            let s = cap_w0(0.5 * PI, d, &rule) + cap_w0(0.5 * PI, PI - d, &rule);
            assert!((s - 4.0 * PI * PI).abs() < 1e-9, "d={d} s={s}");
        }
    }

    #[test]
    fn constant_profile_gives_sin() {
        let one = TestFunction::zonal(Z, ZonalProfile::Polynomial(vec![1.0])).unwrap();
        let w = w_transform(&one, 64).unwrap();
        for (d, v) in w.angles.iter().zip(&w.w) {
            assert!((v - d.sin()).abs() < 1e-10);
        }
    }

    #[test]
    fn table_interpolation_is_cubic_exact() {
        let t: Vec<f64> = (0..=16).map(|i| (PI * i as f64 / 16.0).powi(3)).collect();
        let d = 1.2345;
        assert!((table_lookup(&t, d) - d.powi(3)).abs() < 1e-12);
    }
}
