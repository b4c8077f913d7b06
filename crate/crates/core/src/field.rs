//! Random Gaussian spherical harmonics and their synthesis on equiangular grids.
//!
//! Basis: real fully normalized harmonics. Coefficient 0 multiplies the zonal
//! element, coefficients 2m-1 and 2m the cos mφ and sin mφ elements of order m.
//! f_n = √(4π/(2n+1)) Σ a_k Y_k, so E[f_n(x)²] = 1.

use crate::error::{Error, Result};
use crate::legendre::{assoc_legendre_values, legendre_angle};
use crate::linstat::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::sync::Arc;

/// Dimension of the degree-n eigenspace on the m-sphere,
/// C(n+m, m) - C(n+m-2, m) = C(n+m-1, m-1) + C(n+m-2, m-1).
pub fn eigenspace_dimension(n: u64, m: u32) -> Result<u128> {
    if m < 2 {
        return Err(Error::Domain(format!("sphere dimension must be ≥ 2, got {m}")));
    }
    if n == 0 {
        return Ok(1);
    }
    let m = m as u128;
    let n = n as u128;
    let a = binomial(n + m - 1, m - 1)?;
    let b = binomial(n + m - 2, m - 1)?;
    a.checked_add(b).ok_or_else(|| Error::Overflow("eigenspace dimension".into()))
}

fn binomial(k: u128, j: u128) -> Result<u128> {
    let j = j.min(k - j.min(k));
    let mut c: u128 = 1;
    for i in 1..=j {
        // c·(k-j+i) is divisible by i after the multiplication
        c = c
            .checked_mul(k - j + i)
            .ok_or_else(|| Error::Overflow(format!("binomial({k}, {j})")))?
            / i;
    }
    Ok(c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicSample {
    pub n: u32,
    pub coefficients: Vec<f64>,
    pub seed: u64,
    /// Index of the sample within the ensemble; selects the generator stream.
    pub stream: u64,
    /// √(4π/(2n+1)).
    pub normalization: f64,
}

fn generator(n: u32, seed: u64, stream: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..12].copy_from_slice(&n.to_le_bytes());
    key[16..24].copy_from_slice(b"nodalsph");
    let mut rng = ChaCha20Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

pub fn sample_coefficients(n: u32, seed: u64) -> Result<HarmonicSample> {
    sample_indexed(n, seed, 0)
}

/// Coefficients of sample `index` for (seed, n); independent of generation order.
pub fn sample_indexed(n: u32, seed: u64, index: u64) -> Result<HarmonicSample> {
    if n < 1 {
        return Err(Error::Domain("degree must be ≥ 1".into()));
    }
    let mut rng = generator(n, seed, index);
    let coefficients = (0..2 * n as usize + 1).map(|_| rng.sample(StandardNormal)).collect();
    Ok(HarmonicSample {
        n,
        coefficients,
        seed,
        stream: index,
        normalization: (4.0 * PI / (2.0 * n as f64 + 1.0)).sqrt(),
    })
}

impl HarmonicSample {
    /// Sample with the given coefficients (for deterministic fields).
    pub fn from_coefficients(n: u32, coefficients: Vec<f64>) -> Result<Self> {
        if coefficients.len() != 2 * n as usize + 1 {
            return Err(Error::Domain(format!("degree {n} needs {} coefficients", 2 * n + 1)));
        }
        Ok(HarmonicSample {
            n,
            coefficients,
            seed: 0,
            stream: 0,
            normalization: (4.0 * PI / (2.0 * n as f64 + 1.0)).sqrt(),
        })
    }

    /// f_n at a unit vector.
    pub fn evaluate(&self, x: &Vec3) -> f64 {
        let st = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let ct = x[2];
        let phi = x[1].atan2(x[0]);
        let p = assoc_legendre_values(self.n, ct, st);
        let a = &self.coefficients;
        let mut s = a[0] * p[0];
        for m in 1..=self.n as usize {
            let (sm, cm) = (m as f64 * phi).sin_cos();
            s += p[m] * (a[2 * m - 1] * cm + a[2 * m] * sm);
        }
        self.normalization * s
    }
}

/// Equiangular lattice θ_i = iπ/(rows-1), i = 0..rows (poles included), φ_j = 2πj/cols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    pub rows: usize,
    pub cols: usize,
}

impl GridSpec {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows < 3 || cols < 4 || cols % 2 != 0 {
            return Err(Error::Domain(format!("grid {rows}×{cols}: need rows ≥ 3 and even cols ≥ 4")));
        }
        Ok(GridSpec { rows, cols })
    }

    /// Grid with at least `ppw` points per wavelength 2π/n in both directions.
    pub fn for_degree(n: u32, ppw: f64) -> Result<Self> {
        let per_turn = (n as f64 * ppw).ceil() as usize;
        let cols = (per_turn + 1) / 2 * 2;
        let rows = (per_turn + 1) / 2 + 1;
        GridSpec::new(rows.max(3), cols.max(4))
    }

    pub fn includes_poles(&self) -> bool {
        true
    }

    pub fn theta(&self, i: usize) -> f64 {
        PI * i as f64 / (self.rows - 1) as f64
    }

    pub fn phi(&self, j: usize) -> f64 {
        2.0 * PI * j as f64 / self.cols as f64
    }

    pub fn point(&self, i: usize, j: usize) -> Vec3 {
        let (st, ct) = self.sin_cos_theta(i);
        let (sp, cp) = self.phi(j).sin_cos();
        [st * cp, st * sp, ct]
    }

    /// sin θ_i and cos θ_i, mirrored exactly about the equator.
    pub fn sin_cos_theta(&self, i: usize) -> (f64, f64) {
        let mirror = self.rows - 1 - i;
        if mirror < i {
            let (s, c) = self.sin_cos_theta(mirror);
            (s, -c)
        } else if 2 * i == self.rows - 1 {
            (1.0, 0.0)
        } else {
            self.theta(i).sin_cos()
        }
    }

    /// Points per wavelength in the coarser direction.
    pub fn points_per_wavelength(&self, n: u32) -> f64 {
        let along = self.cols as f64;
        let across = 2.0 * (self.rows - 1) as f64;
        along.min(across) / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    pub n: u32,
    pub grid: GridSpec,
    /// Row-major, rows × cols.
    pub values: Vec<f64>,
    pub seed: u64,
}

impl GridField {
    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.grid.cols + j]
    }

    /// max |f(-x) - (-1)ⁿ f(x)| over the lattice.
    pub fn parity_defect(&self) -> f64 {
        let (r, c) = (self.grid.rows, self.grid.cols);
        let sign = if self.n % 2 == 0 { 1.0 } else { -1.0 };
        let mut worst: f64 = 0.0;
        for i in 0..r {
            for j in 0..c {
                let a = self.value(i, j);
                let b = self.value(r - 1 - i, (j + c / 2) % c);
                worst = worst.max((b - sign * a).abs());
            }
        }
        worst
    }
}

/// Precomputed Legendre rows and longitude transforms for one (n, grid).
pub struct SynthesisPlan {
    pub n: u32,
    pub grid: GridSpec,
    /// Normalized associated-Legendre rows for i ≤ (rows-1)/2.
    legendre: Vec<Vec<f64>>,
    cos_table: Vec<f64>,
    sin_table: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SynthesisPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SynthesisPlan").field("n", &self.n).field("grid", &self.grid).finish()
    }
}

/// Longitude transform used by [`SynthesisPlan::synthesize_with`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LongitudeMethod {
    Naive,
    Fft,
}

impl SynthesisPlan {
    pub fn new(n: u32, grid: GridSpec) -> Result<Self> {
        if n < 1 {
            return Err(Error::Domain("degree must be ≥ 1".into()));
        }
        let ppw = grid.points_per_wavelength(n);
        if ppw < 4.0 {
            return Err(Error::Resolution(format!("{ppw:.2} points per wavelength at n={n}, need ≥ 4")));
        }
        let half = (grid.rows - 1) / 2;
        let legendre = (0..=half)
            .into_par_iter()
            .map(|i| {
                let (s, c) = grid.sin_cos_theta(i);
                assoc_legendre_values(n, c, s)
            })
            .collect();
        let cols = grid.cols;
        let (sin_table, cos_table) = (0..cols).map(|k| (2.0 * PI * k as f64 / cols as f64).sin_cos()).unzip();
        let fft = FftPlanner::new().plan_fft_inverse(cols);
        Ok(SynthesisPlan { n, grid, legendre, cos_table, sin_table, fft })
    }

    fn row_legendre(&self, i: usize) -> (&[f64], bool) {
        let r = self.grid.rows;
        if i < self.legendre.len() {
            (&self.legendre[i], false)
        } else {
            (&self.legendre[r - 1 - i], true)
        }
    }

    pub fn synthesize(&self, sample: &HarmonicSample) -> Result<GridField> {
        self.synthesize_with(sample, LongitudeMethod::Fft)
    }

    pub fn synthesize_with(&self, sample: &HarmonicSample, method: LongitudeMethod) -> Result<GridField> {
        if sample.n != self.n {
            return Err(Error::Domain(format!("plan for n={} used with sample n={}", self.n, sample.n)));
        }
        let (rows, cols) = (self.grid.rows, self.grid.cols);
        let n = self.n as usize;
        let a = &sample.coefficients;
        let mut values = vec![0.0; rows * cols];
        let mut buf = vec![Complex::new(0.0, 0.0); cols];
        let mut scratch = vec![Complex::new(0.0, 0.0); self.fft.get_inplace_scratch_len()];
        let mut cm = vec![0.0; n + 1];
        let mut sm = vec![0.0; n + 1];
        for i in 0..rows {
            let (p, mirrored) = self.row_legendre(i);
            // P̄_n^m(π-θ) = (-1)^{n+m} P̄_n^m(θ)
            for m in 0..=n {
                let sign = if mirrored && (n + m) % 2 == 1 { -1.0 } else { 1.0 };
                let pm = sign * p[m] * sample.normalization;
                if m == 0 {
                    cm[0] = a[0] * pm;
                    sm[0] = 0.0;
                } else {
                    cm[m] = a[2 * m - 1] * pm;
                    sm[m] = a[2 * m] * pm;
                }
            }
            let row = &mut values[i * cols..(i + 1) * cols];
            match method {
                LongitudeMethod::Naive => {
                    for (j, out) in row.iter_mut().enumerate() {
                        let mut s = 0.0;
                        for m in 0..=n {
                            let k = (m * j) % cols;
                            s += cm[m] * self.cos_table[k] + sm[m] * self.sin_table[k];
                        }
                        *out = s;
                    }
                }
                LongitudeMethod::Fft => {
                    buf.iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
                    for m in 0..=n {
                        buf[m % cols] += Complex::new(cm[m], -sm[m]);
                    }
                    self.fft.process_with_scratch(&mut buf, &mut scratch);
                    for (out, b) in row.iter_mut().zip(&buf) {
                        *out = b.re;
                    }
                }
            }
        }
        Ok(GridField { n: self.n, grid: self.grid, values, seed: sample.seed })
    }
}

pub fn synthesize(sample: &HarmonicSample, grid: GridSpec) -> Result<GridField> {
    SynthesisPlan::new(sample.n, grid)?.synthesize(sample)
}

// ---------------------------------------------------------------------------
// Binary dump

pub const FIELD_MAGIC: [u8; 8] = *b"NSFIELD1";

/// Magic, then n, rows, cols, seed as u64, then row-major f64, all little-endian.
pub fn write_field<W: Write>(field: &GridField, mut w: W) -> std::io::Result<()> {
    w.write_all(&FIELD_MAGIC)?;
    for v in [field.n as u64, field.grid.rows as u64, field.grid.cols as u64, field.seed] {
        w.write_all(&v.to_le_bytes())?;
    }
    for v in &field.values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_field<R: Read>(mut r: R) -> std::io::Result<GridField> {
    let bad = |m: &str| std::io::Error::new(std::io::ErrorKind::InvalidData, m.to_string());
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if magic != FIELD_MAGIC {
        return Err(bad("not a field dump"));
    }
    let mut word = || -> std::io::Result<u64> {
        let mut b = [0u8; 8];
        r.read_exact(&mut b)?;
        Ok(u64::from_le_bytes(b))
    };
    let (n, rows, cols, seed) = (word()?, word()? as usize, word()? as usize, word()?);
    let grid = GridSpec::new(rows, cols).map_err(|e| bad(&e.to_string()))?;
    let mut values = Vec::with_capacity(rows * cols);
    let mut b = [0u8; 8];
    for _ in 0..rows * cols {
        r.read_exact(&mut b)?;
        values.push(f64::from_le_bytes(b));
    }
    Ok(GridField { n: n as u32, grid, values, seed })
}

// ---------------------------------------------------------------------------
// Covariance self-check

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceRow {
    pub distance: f64,
    pub empirical: f64,
    pub predicted: f64,
    pub std_error: f64,
    pub z: f64,
}

/// Empirical E[f(x)f(y)] against P_n(cos d(x, y)) over `samples` draws.
pub fn covariance_empirical_check(n: u32, pairs: &[(Vec3, Vec3)], samples: usize, seed: u64) -> Result<Vec<CovarianceRow>> {
    if samples < 1000 {
        return Err(Error::Insufficient(format!("{samples} samples, need ≥ 1000")));
    }
    let products: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let s = sample_indexed(n, seed, k)?;
            Ok(pairs.iter().map(|(x, y)| s.evaluate(x) * s.evaluate(y)).collect())
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (p, (x, y)) in pairs.iter().enumerate() {
        let v: Vec<f64> = products.iter().map(|r| r[p]).collect();
        let mean = v.iter().sum::<f64>() / samples as f64;
        let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (samples as f64 - 1.0);
        let se = (var / samples as f64).sqrt();
        let c = (x[0] * y[0] + x[1] * y[1] + x[2] * y[2]).clamp(-1.0, 1.0);
        let d = c.acos();
        let predicted = legendre_angle(n, d)?.triplet.p;
        let z = if se > 0.0 { (mean - predicted) / se } else { 0.0 };
        out.push(CovarianceRow { distance: d, empirical: mean, predicted, std_error: se, z });
    }
    Ok(out)
}
