//! Monte Carlo ensembles of nodal lengths, moment estimates with batch-means
//! errors, log-slope fits and comparison against the semi-analytic predictions.

use crate::error::{Error, Result};
use crate::field::{sample_indexed, GridSpec, SynthesisPlan};
use crate::kacrice::{kernel_samples, variance_asymptotic, KacRiceConfig};
use crate::legendre::energy;
use crate::linstat::{expected_linstat, variance_linstat_from, LinstatConfig, TestFunction};
use crate::nodal::{extract_nodal, weighted_length};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use std::f64::consts::PI;
use std::io::Write;

/// Number of batches for the batch-means error of the variance.
pub const BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub n_list: Vec<u32>,
    pub samples: usize,
    pub points_per_wavelength: f64,
    pub seed: u64,
    pub test_function: Option<TestFunction>,
    /// Also run every sample at twice the resolution and report the
    /// Richardson-extrapolated mean (4·fine - coarse)/3.
    pub bias_correction: bool,
    /// Attach semi-analytic variances (costs one kernel scan per degree).
    pub predict_variance: bool,
    pub kacrice: KacRiceConfig,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            n_list: vec![],
            samples: 100,
            points_per_wavelength: 10.0,
            seed: 0,
            test_function: None,
            bias_correction: false,
            predict_variance: true,
            kacrice: KacRiceConfig::default(),
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 2 {
            return Err(Error::Domain("need at least 2 samples".into()));
        }
        if self.points_per_wavelength < 8.0 {
            return Err(Error::Resolution(format!("{} points per wavelength, need ≥ 8", self.points_per_wavelength)));
        }
        if let Some(&n) = self.n_list.iter().find(|&&n| n < 1) {
            return Err(Error::Domain(format!("degree {n} not allowed")));
        }
        Ok(())
    }
}

/// JSON writes non-finite numbers as null; read them back as NaN.
fn nan_or_f64<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
}

/// One row of the report; field names follow the CSV schema.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeRow {
    pub n: u32,
    pub samples: usize,
    #[serde(deserialize_with = "nan_or_f64")]
    pub mean: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub se_mean: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub var: f64,
    #[serde(deserialize_with = "nan_or_f64")]
    pub se_var: f64,
    pub pred_mean: f64,
    pub pred_var: Option<f64>,
    pub asym_var: Option<f64>,
    #[serde(deserialize_with = "nan_or_f64")]
    pub z_mean: f64,
    pub z_var: Option<f64>,
    /// Richardson-corrected mean (4·fine - coarse)/3 and its z-score, when requested.
    #[serde(default)]
    pub corrected_mean: Option<f64>,
    #[serde(default)]
    pub z_corrected_mean: Option<f64>,
    #[serde(default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// 95% confidence interval of the slope.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub seed: u64,
    pub points_per_wavelength: f64,
    /// Rows for the nodal length Z.
    pub rows: Vec<DegreeRow>,
    /// Rows for Z^φ when a test function is configured.
    #[serde(default)]
    pub linstat_rows: Vec<DegreeRow>,
    pub slope: Option<SlopeFit>,
}

/// Sample mean and its standard error, unbiased variance and its batch-means error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub se_mean: f64,
    pub var: f64,
    pub se_var: f64,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Batch means with [`BATCHES`] batches; for fewer than two samples per batch the
/// normal-theory value s²·√(2/(N-1)).
pub fn moments(x: &[f64]) -> Result<Moments> {
    if x.len() < 2 {
        return Err(Error::Insufficient(format!("{} samples", x.len())));
    }
    let (mean, var) = mean_var(x);
    let n = x.len();
    let se_mean = (var / n as f64).sqrt();
    let per = n / BATCHES;
    let se_var = if per >= 2 {
        let bv: Vec<f64> = (0..BATCHES).map(|b| mean_var(&x[b * per..(b + 1) * per]).1).collect();
        let (_, vv) = mean_var(&bv);
        // batches of size `per` estimate the variance with spread √vv; the full
        // sample uses BATCHES times as many points
        (vv / BATCHES as f64).sqrt()
    } else {
        var * (2.0 / (n as f64 - 1.0)).sqrt()
    };
    let se_var = if se_var > 0.0 { se_var } else { f64::MIN_POSITIVE };
    Ok(Moments { mean, se_mean, var, se_var })
}

/// OLS of variance against log n.
pub fn fit_log_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    let mut degrees: Vec<f64> = points.iter().map(|p| p.0).collect();
    degrees.sort_by(|a, b| a.partial_cmp(b).unwrap());
    degrees.dedup();
    if degrees.len() < 4 || degrees[0] <= 0.0 || degrees[degrees.len() - 1] < 10.0 * degrees[0] {
        return Err(Error::Insufficient("slope fit needs ≥ 4 distinct degrees spanning a decade".into()));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = k - 2.0;
    let stderr = (rss / dof / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Domain(e.to_string()))?.inverse_cdf(0.975);
    Ok(SlopeFit { slope, stderr, intercept, ci_low: slope - t * stderr, ci_high: slope + t * stderr })
}

/// √2·π·√(n(n+1)).
pub fn expected_length(n: u32) -> f64 {
    2f64.sqrt() * PI * energy(n).sqrt()
}

struct SampleStats {
    length: f64,
    weighted: Option<f64>,
    fine_length: Option<f64>,
}

/// Nodal length (and Z^φ) of every sample at degree n, in sample order.
fn degree_samples(n: u32, cfg: &EnsembleConfig) -> Result<Vec<SampleStats>> {
    let grid = GridSpec::for_degree(n, cfg.points_per_wavelength)?;
    let plan = SynthesisPlan::new(n, grid)?;
    let fine = if cfg.bias_correction {
        Some(SynthesisPlan::new(n, GridSpec::for_degree(n, 2.0 * cfg.points_per_wavelength)?)?)
    } else {
        None
    };
    (0..cfg.samples as u64)
        .into_par_iter()
        .map(|k| {
            let s = sample_indexed(n, cfg.seed, k)?;
            let lines = extract_nodal(&plan.synthesize(&s)?)?;
            let weighted = cfg.test_function.as_ref().map(|phi| weighted_length(&lines, phi));
            let fine_length = match &fine {
                Some(p) => Some(extract_nodal(&p.synthesize(&s)?)?.total_length),
                None => None,
            };
            Ok(SampleStats { length: lines.total_length, weighted, fine_length })
        })
        .collect()
}

fn row(n: u32, x: &[f64], pred_mean: f64, pred_var: Option<f64>, asym_var: Option<f64>) -> Result<DegreeRow> {
    let m = moments(x)?;
    Ok(DegreeRow {
        n,
        samples: x.len(),
        mean: m.mean,
        se_mean: m.se_mean,
        var: m.var,
        se_var: m.se_var,
        pred_mean,
        pred_var,
        asym_var,
        z_mean: (m.mean - pred_mean) / m.se_mean,
        z_var: pred_var.map(|p| (m.var - p) / m.se_var),
        corrected_mean: None,
        z_corrected_mean: None,
        failure: None,
    })
}

fn failed_row(n: u32, samples: usize, e: &Error) -> DegreeRow {
    DegreeRow {
        n,
        samples,
        mean: f64::NAN,
        se_mean: f64::NAN,
        var: f64::NAN,
        se_var: f64::NAN,
        pred_mean: expected_length(n),
        pred_var: None,
        asym_var: None,
        z_mean: f64::NAN,
        z_var: None,
        corrected_mean: None,
        z_corrected_mean: None,
        failure: Some(e.to_string()),
    }
}

fn degree_rows(n: u32, cfg: &EnsembleConfig) -> Result<(DegreeRow, Option<DegreeRow>)> {
    let stats = degree_samples(n, cfg)?;
    let lengths: Vec<f64> = stats.iter().map(|s| s.length).collect();
    let (mut pred_var, mut lin_pred) = (None, None);
    if cfg.predict_variance && n >= 2 {
        let ks = kernel_samples(n, &cfg.kacrice)?;
        pred_var = Some(ks.variance()?.variance);
        if let Some(phi) = &cfg.test_function {
            let lcfg = LinstatConfig { kacrice: cfg.kacrice, ..LinstatConfig::default() };
            lin_pred = Some(variance_linstat_from(&ks, phi, &lcfg)?);
        }
    }
    let asym = if n >= 2 { Some(variance_asymptotic(n)) } else { None };
    let mut main = row(n, &lengths, expected_length(n), pred_var, asym)?;
    if cfg.bias_correction {
        let fine: Vec<f64> = stats.iter().filter_map(|s| s.fine_length).collect();
        let diffs: Vec<f64> = lengths.iter().zip(&fine).map(|(c, f)| (4.0 * f - c) / 3.0).collect();
        let m = moments(&diffs)?;
        main.corrected_mean = Some(m.mean);
        main.z_corrected_mean = Some((m.mean - main.pred_mean) / m.se_mean);
    }
    let lin = match &cfg.test_function {
        Some(phi) => {
            let w: Vec<f64> = stats.iter().filter_map(|s| s.weighted).collect();
            Some(row(
                n,
                &w,
                expected_linstat(n, phi),
                lin_pred.map(|p| p.variance),
                lin_pred.map(|p| p.asymptotic_variance),
            )?)
        }
        None => None,
    };
    Ok((main, lin))
}

/// Runs every degree of the ladder; a failing degree yields a marked row.
pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<MomentReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut linstat_rows = Vec::new();
    for &n in &cfg.n_list {
        match degree_rows(n, cfg) {
            Ok((r, l)) => {
                rows.push(r);
                linstat_rows.extend(l);
            }
            Err(e) => rows.push(failed_row(n, cfg.samples, &e)),
        }
    }
    let pts: Vec<(f64, f64)> = rows.iter().filter(|r| r.failure.is_none()).map(|r| (r.n as f64, r.var)).collect();
    let slope = fit_log_slope(&pts).ok();
    Ok(MomentReport { seed: cfg.seed, points_per_wavelength: cfg.points_per_wavelength, rows, linstat_rows, slope })
}

pub const CSV_HEADER: &str = "n,samples,mean,se_mean,var,se_var,pred_mean,pred_var,asym_var,z_mean,z_var";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_rows_csv<W: Write>(rows: &[DegreeRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.samples,
            r.mean,
            r.se_mean,
            r.var,
            r.se_var,
            r.pred_mean,
            opt(r.pred_var),
            opt(r.asym_var),
            r.z_mean,
            opt(r.z_var)
        )?;
    }
    Ok(())
}

pub fn report_json(report: &MomentReport) -> String {
    serde_json::to_string_pretty(report).expect("report is serializable")
}

pub fn report_from_json(s: &str) -> Result<MomentReport> {
    serde_json::from_str(s).map_err(|e| Error::Domain(format!("bad report JSON: {e}")))
}

/// Rows whose |z| exceeds `threshold` or that failed.
pub fn violations(report: &MomentReport, threshold: f64) -> Vec<String> {
    let mut out = Vec::new();
    for r in report.rows.iter().chain(&report.linstat_rows) {
        if let Some(f) = &r.failure {
            out.push(format!("n={}: {f}", r.n));
            continue;
        }
        if !(r.z_mean.abs() <= threshold) {
            out.push(format!("n={}: mean z-score {:.2}", r.n, r.z_mean));
        }
        if let Some(z) = r.z_var {
            if !(z.abs() <= threshold) {
                out.push(format!("n={}: variance z-score {:.2}", r.n, z));
            }
        }
    }
    out
}
