//! Command-line front end for nodal-length predictions and simulations.

mod config;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use config::{parse_list, pick, resolve_seed, ConfigFile};
use nodalsphere::field::{sample_indexed, write_field, GridSpec, SynthesisPlan};
use nodalsphere::harness::{self, EnsembleConfig, MomentReport};
use nodalsphere::kacrice::{self, KacRiceConfig};
use nodalsphere::legendre::legendre_triplet;
use nodalsphere::linstat::{self, LinstatConfig, TestFunction, ZonalProfile};
use nodalsphere::nodal::{extract_nodal, write_polyline_csv};
use serde_json::{json, Value};
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Parser, Debug)]
#[command(name = "nodalsphere", version, about = "Nodal length statistics of random spherical harmonics")]
struct Cli {
    /// Base seed (falls back to the config file, then NODALSPHERE_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Exit non-zero when a z-score leaves the ±3 band.
    #[arg(long, global = true)]
    strict: bool,
    /// Key-value config file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Semi-analytic nodal length variance per degree.
    Predict {
        #[arg(long)]
        n_list: Option<String>,
        #[arg(long)]
        split_c: Option<f64>,
    },
    /// Two-point function K_n(ψ): exact, asymptotic expansion and Taylor form.
    ExactK {
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        psi_list: Option<String>,
    },
    /// Monte Carlo ensemble without semi-analytic variances.
    Simulate(EnsembleArgs),
    /// Monte Carlo ensemble against the predictions, or re-check a saved JSON report.
    Compare {
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// Existing JSON report to render and check instead of simulating.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Linear statistic Z^φ: mean, semi-analytic variance and c(φ).
    Linstat {
        #[command(flatten)]
        phi: TestFunctionArgs,
        #[arg(long)]
        n_list: Option<String>,
    },
    /// Residual of the Legendre ODE at (n, t).
    LegendreCheck {
        #[arg(long)]
        n_list: Option<String>,
        /// Single degree; same as a one-element --n-list.
        #[arg(long)]
        n: Option<u32>,
        #[arg(long)]
        t_list: Option<String>,
        /// Number of equidistributed abscissae in [-1, 1] instead of --t-list.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Dump one synthesized field in the binary format.
    Field {
        #[arg(long)]
        n: Option<u32>,
        /// ROWSxCOLS; default 10 points per wavelength.
        #[arg(long)]
        grid: Option<String>,
        /// Also write the nodal polyline as CSV.
        #[arg(long)]
        polyline: Option<PathBuf>,
        /// Sample index within the seed's ensemble.
        #[arg(long)]
        index: Option<u64>,
    },
}

#[derive(Args, Debug, Clone)]
struct EnsembleArgs {
    #[arg(long)]
    n_list: Option<String>,
    #[arg(long)]
    samples: Option<usize>,
    /// Points per wavelength.
    #[arg(long)]
    ppw: Option<f64>,
    /// Also run at twice the resolution and report the extrapolated mean.
    #[arg(long)]
    bias_correction: bool,
    #[command(flatten)]
    phi: TestFunctionArgs,
}

#[derive(Args, Debug, Clone)]
struct TestFunctionArgs {
    /// constant, cap, hemisphere, zonal or smooth-cap.
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    width: Option<f64>,
    /// Polynomial coefficients c0,c1,... of a zonal profile in cos θ.
    #[arg(long)]
    coeffs: Option<String>,
    /// Cap centre or zonal axis as x,y,z.
    #[arg(long)]
    center: Option<String>,
}

struct Ctx {
    cfg: ConfigFile,
    format: Format,
    out: Option<PathBuf>,
    strict: bool,
    seed: u64,
}

impl Ctx {
    fn writer(&self) -> Result<Box<dyn Write>> {
        Ok(match &self.out {
            Some(p) => Box::new(std::io::BufWriter::new(
                std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
            )),
            None => Box::new(std::io::stdout().lock()),
        })
    }

    fn list<T: std::str::FromStr>(&self, flag: &Option<String>, key: &str, fallback: &[T]) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
        T: Clone,
    {
        if let Some(s) = flag {
            return parse_list(s).with_context(|| format!("--{key}"));
        }
        Ok(self.cfg.get_list(key)?.unwrap_or_else(|| fallback.to_vec()))
    }

    /// Writes a table as CSV or as a JSON array of objects.
    fn table(&self, header: &[&str], rows: Vec<Vec<Value>>) -> Result<()> {
        let mut w = self.writer()?;
        match self.format {
            Format::Csv => {
                writeln!(w, "{}", header.join(","))?;
                for r in rows {
                    let cells: Vec<String> = r
                        .iter()
                        .map(|v| match v {
                            Value::Null => String::new(),
                            Value::String(s) => s.clone(),
                            other => other.to_string(),
                        })
                        .collect();
                    writeln!(w, "{}", cells.join(","))?;
                }
            }
            Format::Json => {
                let objs: Vec<Value> = rows
                    .into_iter()
                    .map(|r| Value::Object(header.iter().map(|h| h.to_string()).zip(r).collect()))
                    .collect();
                writeln!(w, "{}", serde_json::to_string_pretty(&objs)?)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}

fn opt(v: Option<f64>) -> Value {
    v.map(num).unwrap_or(Value::Null)
}

fn parse_vec3(s: &str) -> Result<[f64; 3]> {
    let v: Vec<f64> = parse_list(s)?;
    if v.len() != 3 {
        bail!("expected x,y,z, got `{s}`");
    }
    Ok([v[0], v[1], v[2]])
}

fn test_function(args: &TestFunctionArgs, cfg: &ConfigFile, required: bool) -> Result<Option<TestFunction>> {
    let kind = match &args.kind {
        Some(k) => Some(k.clone()),
        None => cfg.get::<String>("kind")?,
    };
    let Some(kind) = kind else {
        if required {
            bail!("--kind is required");
        }
        return Ok(None);
    };
    let center = match args.center.clone().or(cfg.get::<String>("center")?) {
        Some(s) => parse_vec3(&s)?,
        None => [0.0, 0.0, 1.0],
    };
    let radius = pick(args.radius, cfg, "radius", std::f64::consts::FRAC_PI_4)?;
    let phi = match kind.as_str() {
        "constant" => TestFunction::constant(1.0),
        "cap" => TestFunction::cap(center, radius)?,
        "hemisphere" => TestFunction::hemisphere(center)?,
        "smooth-cap" => {
            let width = pick(args.width, cfg, "width", 0.1)?;
            TestFunction::zonal(center, ZonalProfile::SmoothCap { radius, width })?
        }
        "zonal" => {
            let c = match args.coeffs.clone().or(cfg.get::<String>("coeffs")?) {
                Some(s) => parse_list(&s)?,
                None => vec![0.0, 0.0, 1.0],
            };
            TestFunction::zonal(center, ZonalProfile::Polynomial(c))?
        }
        other => bail!("unknown test function kind `{other}`"),
    };
    Ok(Some(phi))
}

fn ensemble_config(args: &EnsembleArgs, ctx: &Ctx, predict: bool) -> Result<EnsembleConfig> {
    let bias_correction = args.bias_correction || ctx.cfg.get::<bool>("bias-correction")?.unwrap_or(false);
    Ok(EnsembleConfig {
        n_list: ctx.list(&args.n_list, "n-list", &[10u32, 20, 40])?,
        samples: pick(args.samples, &ctx.cfg, "samples", 200)?,
        points_per_wavelength: pick(args.ppw, &ctx.cfg, "ppw", 10.0)?,
        seed: ctx.seed,
        test_function: test_function(&args.phi, &ctx.cfg, false)?,
        bias_correction,
        predict_variance: predict,
        kacrice: KacRiceConfig::default(),
    })
}

fn emit_report(ctx: &Ctx, report: &MomentReport) -> Result<()> {
    let mut w = ctx.writer()?;
    match ctx.format {
        Format::Csv => harness::write_rows_csv(&report.rows, &mut w)?,
        Format::Json => writeln!(w, "{}", harness::report_json(report))?,
    }
    w.flush()?;
    Ok(())
}

fn strict_check(ctx: &Ctx, report: &MomentReport) -> Result<()> {
    if !ctx.strict {
        return Ok(());
    }
    let bad = harness::violations(report, 3.0);
    if !bad.is_empty() {
        for b in &bad {
            eprintln!("acceptance band violated: {b}");
        }
        bail!("{} row(s) outside the ±3σ band", bad.len());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let threads = match cli.threads {
        Some(t) => Some(t),
        None => cfg.get::<usize>("threads")?,
    };
    if let Some(t) = threads {
        rayon::ThreadPoolBuilder::new().num_threads(t).build_global().context("configuring threads")?;
    }
    let format = match cli.format {
        Some(f) => f,
        None => match cfg.get::<String>("format")?.as_deref() {
            None | Some("csv") => Format::Csv,
            Some("json") => Format::Json,
            Some(other) => bail!("unknown format `{other}`"),
        },
    };
    let out = cli.out.clone().or(cfg.get::<PathBuf>("out")?);
    let strict = cli.strict || cfg.get::<bool>("strict")?.unwrap_or(false);
    let seed = resolve_seed(cli.seed, &cfg)?;
    let ctx = Ctx { cfg, format, out, strict, seed };

    match &cli.command {
        Command::Predict { n_list, split_c } => {
            let ns = ctx.list(n_list, "n-list", &[25u32, 50, 100, 200])?;
            let split = pick(*split_c, &ctx.cfg, "split-c", kacrice::DEFAULT_SPLIT_C)?;
            let kcfg = KacRiceConfig { split_c: split, ..KacRiceConfig::default() };
            let mut rows = Vec::new();
            for n in ns {
                let v = kacrice::variance_exact(n, &kcfg)?;
                rows.push(vec![json!(n), num(v.i_n), num(v.variance), num(v.asymptotic_variance), num(v.split_c)]);
            }
            ctx.table(&["n", "iN", "variance", "asymptoticVariance", "splitC"], rows)
        }
        Command::ExactK { n, psi_list } => {
            let n = pick(*n, &ctx.cfg, "n", 100)?;
            let psis = ctx.list(psi_list, "psi-list", &[0.5f64, 1.0, 5.0, 10.0, 20.0, 40.0])?;
            let kcfg = KacRiceConfig::default();
            let mut rows = Vec::new();
            for psi in psis {
                let v = kacrice::two_point_exact_with(n, psi, &kcfg)?;
                rows.push(vec![
                    json!(n),
                    num(psi),
                    num(v.k_exact),
                    opt(v.k_asymptotic),
                    opt(v.k_taylor),
                    num(v.quadrature_error),
                ]);
            }
            ctx.table(&["n", "psi", "kExact", "kAsymptotic", "kTaylor", "quadratureError"], rows)
        }
        Command::Simulate(args) => {
            let report = harness::run_ensemble(&ensemble_config(args, &ctx, false)?)?;
            emit_report(&ctx, &report)?;
            strict_check(&ctx, &report)
        }
        Command::Compare { ensemble, input } => {
            let report = match input {
                Some(p) => {
                    let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                    harness::report_from_json(&text)?
                }
                None => harness::run_ensemble(&ensemble_config(ensemble, &ctx, true)?)?,
            };
            emit_report(&ctx, &report)?;
            strict_check(&ctx, &report)
        }
        Command::Linstat { phi, n_list } => {
            let phi = test_function(phi, &ctx.cfg, true)?.expect("required");
            let ns = ctx.list(n_list, "n-list", &[25u32, 50, 100, 200])?;
            let lcfg = LinstatConfig::default();
            let c = if phi.is_zero() { 0.0 } else { linstat::c_of_phi(&phi)? };
            let mut rows = Vec::new();
            for n in ns {
                let v = linstat::variance_linstat_exact(n, &phi, &lcfg)?;
                rows.push(vec![
                    json!(n),
                    num(linstat::expected_linstat(n, &phi)),
                    num(v.variance),
                    num(c * (n as f64).ln()),
                    num(c),
                ]);
            }
            ctx.table(&["n", "expected", "variance", "asymptoticSlopeTimesLogN", "cOfPhi"], rows)
        }
        Command::LegendreCheck { n_list, n, t_list, samples } => {
            let ns = match n {
                Some(n) => vec![*n],
                None => ctx.list(n_list, "n-list", &[1u32, 10, 100, 1000, 10000])?,
            };
            let samples = match samples {
                Some(k) => Some(*k),
                None => ctx.cfg.get::<usize>("samples")?,
            };
            let ts = match samples {
                // golden-ratio sequence: deterministic and equidistributed
                Some(k) => (0..k)
                    .map(|i| -1.0 + 2.0 * ((i as f64 + 0.5) * 0.618_033_988_749_894_9).fract())
                    .collect(),
                None => ctx.list(t_list, "t-list", &[-1.0f64, -0.5, 0.0, 0.3, 0.9, 0.999, 1.0])?,
            };
            let mut rows = Vec::new();
            for n in ns {
                for &t in &ts {
                    let r = legendre_triplet(n, t)?;
                    rows.push(vec![json!(n), num(t), num(r.ode_residual())]);
                }
            }
            ctx.table(&["n", "t", "residual"], rows)
        }
        Command::Field { n, grid, polyline, index } => {
            let n = pick(*n, &ctx.cfg, "n", 20)?;
            let spec = match grid.clone().or(ctx.cfg.get::<String>("grid")?) {
                Some(g) => {
                    let parts: Vec<&str> = g.split(['x', 'X']).collect();
                    if parts.len() != 2 {
                        bail!("--grid expects ROWSxCOLS, got `{g}`");
                    }
                    GridSpec::new(parts[0].trim().parse()?, parts[1].trim().parse()?)?
                }
                None => GridSpec::for_degree(n, 10.0)?,
            };
            let index = pick(*index, &ctx.cfg, "index", 0)?;
            let sample = sample_indexed(n, ctx.seed, index)?;
            let field = SynthesisPlan::new(n, spec)?.synthesize(&sample)?;
            let Some(path) = &ctx.out else {
                bail!("field dump needs --out");
            };
            let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            write_field(&field, std::io::BufWriter::new(f))?;
            if let Some(p) = polyline {
                let lines = extract_nodal(&field)?;
                let f = std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?;
                write_polyline_csv(&lines, std::io::BufWriter::new(f))?;
            }
            Ok(())
        }
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
